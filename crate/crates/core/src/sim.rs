//! Seeded synthetic click statistics for a probe campaign.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{coherent_state, expect, C64};
use crate::format::{check_csv_header, csv_header, num};
use crate::povm::{DetectorModel, PovmPair};
use crate::qdt::{ClickRow, ClickTable, ProbeSet};

pub const DEFAULT_SHOTS: u64 = 200_000;
/// Probabilities may stray outside `[0, 1]` by this much before the truth is
/// rejected.
pub const PROBABILITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Campaign {
    pub probes: ProbeSet,
    pub shots_per_probe: u64,
    pub detector: DetectorModel,
    /// Displacement settings the campaign is run at.
    pub displacement_schedule: Vec<C64>,
    pub rng_seed: u64,
}

impl Campaign {
    pub fn validate(&self) -> Result<()> {
        self.probes.validate()?;
        self.detector.validate()?;
        if self.shots_per_probe == 0 {
            return Err(Error::InvalidParameter("shots_per_probe must be positive".into()));
        }
        if self.displacement_schedule.is_empty() {
            return Err(Error::InvalidParameter("displacement schedule is empty".into()));
        }
        Ok(())
    }
}

/// Exact outcome-0 probability `⟨ψ|Π₀|ψ⟩` for every probe, in table order.
pub fn expected_rates(truth: &PovmPair, probes: &ProbeSet) -> Result<Vec<(String, f64)>> {
    probes.validate()?;
    probes
        .states()
        .into_iter()
        .map(|(label, amp)| {
            let s = coherent_state(amp, truth.dim())?;
            Ok((label, expect(truth.pi0(), &s)?.re))
        })
        .collect()
}

/// Noise-free table: outcome-0 counts are the exact rates times `shots`,
/// rounded.
pub fn expected_counts(truth: &PovmPair, probes: &ProbeSet, shots: u64) -> Result<ClickTable> {
    let amps = probes.states();
    let rows = expected_rates(truth, probes)?
        .into_iter()
        .zip(amps)
        .map(|((label, p), (_, amp))| {
            if !(-PROBABILITY_TOL..=1.0 + PROBABILITY_TOL).contains(&p) {
                return Err(Error::InvalidProbability { value: p });
            }
            let c0 = (p.clamp(0.0, 1.0) * shots as f64).round() as u64;
            Ok(ClickRow {
                label,
                amplitude: amp,
                counts: [c0, shots - c0],
                shots,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    ClickTable::new(rows)
}

/// Draws `Binomial(shots, ⟨ψ|Π₀|ψ⟩)` outcome-0 counts per probe. Probe `i`
/// uses its own ChaCha20 stream `i` under the campaign seed, so the table
/// does not depend on evaluation order.
pub fn simulate_counts(truth: &PovmPair, campaign: &Campaign) -> Result<ClickTable> {
    campaign.validate()?;
    let rates = expected_rates(truth, &campaign.probes)?;
    let amps = campaign.probes.states();
    let shots = campaign.shots_per_probe;
    let rows = rates
        .into_par_iter()
        .zip(amps)
        .enumerate()
        .map(|(i, ((label, p), (_, amp)))| {
            if !(-PROBABILITY_TOL..=1.0 + PROBABILITY_TOL).contains(&p) {
                return Err(Error::InvalidProbability { value: p });
            }
            let mut rng = ChaCha20Rng::seed_from_u64(campaign.rng_seed);
            rng.set_stream(i as u64);
            let dist = Binomial::new(shots, p.clamp(0.0, 1.0))
                .map_err(|e| Error::InvalidParameter(e.to_string()))?;
            let c0 = dist.sample(&mut rng);
            Ok(ClickRow {
                label,
                amplitude: amp,
                counts: [c0, shots - c0],
                shots,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    ClickTable::new(rows)
}

pub const CLICK_COLUMNS: &str = "probe_label,re_amp,im_amp,outcome0_count,outcome1_count,shots";

/// Serializes with the schema header, optional `# key=value` metadata lines,
/// and the column header.
pub fn click_table_csv(table: &ClickTable, metadata: &[(String, String)]) -> String {
    let mut out = csv_header("clicks");
    out.push('\n');
    for (k, v) in metadata {
        out.push_str(&format!("# {k}={v}\n"));
    }
    out.push_str(CLICK_COLUMNS);
    out.push('\n');
    for r in &table.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.label,
            num(r.amplitude.re),
            num(r.amplitude.im),
            r.counts[0],
            r.counts[1],
            r.shots
        ));
    }
    out
}

pub fn parse_click_table(text: &str) -> Result<ClickTable> {
    let mut lines = text.lines();
    let first = lines
        .next()
        .ok_or_else(|| Error::Ingestion("empty click table".into()))?;
    check_csv_header(first, "clicks")?;
    let mut lines = lines.filter(|l| !l.starts_with('#') && !l.trim().is_empty());
    match lines.next() {
        Some(h) if h.trim() == CLICK_COLUMNS => {}
        other => {
            return Err(Error::Ingestion(format!(
                "expected column header {CLICK_COLUMNS:?}, found {other:?}"
            )))
        }
    }
    let mut rows = Vec::new();
    for (n, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 6 {
            return Err(Error::Ingestion(format!(
                "row {}: expected 6 fields, found {}",
                n + 1,
                fields.len()
            )));
        }
        let float = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| Error::Ingestion(format!("row {}: bad number {s:?}", n + 1)))
        };
        let count = |s: &str| {
            s.parse::<u64>()
                .map_err(|_| Error::Ingestion(format!("row {}: bad count {s:?}", n + 1)))
        };
        rows.push(ClickRow {
            label: fields[0].to_string(),
            amplitude: C64::new(float(fields[1])?, float(fields[2])?),
            counts: [count(fields[3])?, count(fields[4])?],
            shots: count(fields[5])?,
        });
    }
    ClickTable::new(rows)
}
