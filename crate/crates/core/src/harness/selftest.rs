//! Fast internal consistency checks, each reporting a residual against its
//! threshold.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::config::RunConfig;
use crate::fidelity::{dp_fidelity, fidelity};
use crate::fock::{displacement_operator, FockOperator, ScsMeasurementSpec, TruncationDim, C64};
use crate::linalg::random_povm_element;
use crate::povm::{
    apply_loss, compensate_loss, dp_povm, homodyne_povm, onoff_povm, DetectorModel, HomodyneSpec,
    PovmKind, PovmPair,
};
use crate::qdt::{phi_from_operator, povm_entry_bound_check, tomography_pipeline, ProbeSet, ScsPovm};
use crate::sim::{expected_counts, parse_click_table};

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub residual: f64,
    pub threshold: f64,
    pub detail: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SelftestReport {
    pub passed: bool,
    pub checks: Vec<Check>,
}

impl SelftestReport {
    pub fn text(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            out.push_str(&format!(
                "{} {} residual={:.3e} threshold={:.1e}{}\n",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.residual,
                c.threshold,
                c.detail.as_ref().map(|d| format!(" ({d})")).unwrap_or_default()
            ));
        }
        out.push_str(if self.passed { "selftest: ok\n" } else { "selftest: FAILED\n" });
        out
    }
}

fn check(name: &'static str, residual: crate::Result<f64>, threshold: f64) -> Check {
    match residual {
        Ok(r) => Check {
            name,
            passed: r <= threshold,
            residual: r,
            threshold,
            detail: None,
        },
        Err(e) => Check {
            name,
            passed: false,
            residual: f64::NAN,
            threshold,
            detail: Some(e.to_string()),
        },
    }
}

fn dim(n: usize) -> TruncationDim {
    TruncationDim::new(n).expect("valid truncation")
}

fn unitarity() -> crate::Result<f64> {
    // D(β)D(−β) = I on the upper-left 8×8 block
    let beta = C64::new(0.6, 0.8);
    let prod = displacement_operator(beta, dim(20))?.mul(&displacement_operator(-beta, dim(20))?)?;
    let mut worst: f64 = 0.0;
    for i in 0..8 {
        for j in 0..8 {
            let e = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((prod.entry(i, j) - e).norm());
        }
    }
    Ok(worst)
}

fn completeness() -> crate::Result<f64> {
    let d = dim(20);
    let mut worst: f64 = 0.0;
    for (c0sq, phi) in [(0.5, 0.0), (0.8, 1.0), (0.2, 2.5)] {
        let spec = ScsMeasurementSpec::from_c0_squared(0.5, c0sq, phi)?;
        for p in [
            dp_povm(&spec, C64::new(0.7, 0.3), d)?,
            onoff_povm(C64::new(0.0, 0.9), &DetectorModel::experimental(), d)?,
        ] {
            let diag = p.diagnostics();
            worst = worst.max(diag.completeness_defect).max((-diag.min_eigenvalue).max(0.0));
        }
    }
    Ok(worst)
}

fn entry_bound() -> crate::Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut excess: f64 = 0.0;
    for _ in 0..200 {
        let op = FockOperator::from_matrix(dim(8), random_povm_element(9, &mut rng))?;
        let r = povm_entry_bound_check(&op);
        excess = excess.max(r.max_abs_entry - 1.0).max(0.0);
        if !phi_from_operator(&op, 4).within_bounds(1e-12) {
            excess = excess.max(1.0);
        }
    }
    Ok(excess)
}

fn fidelity_equivalence() -> crate::Result<f64> {
    let d = dim(20);
    let mut worst: f64 = 0.0;
    for i in 0..21 {
        let c0sq = i as f64 / 20.0;
        let spec = ScsMeasurementSpec::from_c0_squared(0.5, c0sq, 0.3 * i as f64)?;
        let beta = C64::from_polar(0.05 * i as f64, 0.2 * i as f64);
        let fast = dp_fidelity(&spec, beta, d)?;
        let full = fidelity(&dp_povm(&spec, beta, d)?, &spec)?;
        worst = worst.max((fast - full).abs());
    }
    Ok(worst)
}

fn loss_round_trip() -> crate::Result<f64> {
    let d = dim(10);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let p = PovmPair::from_element(
            FockOperator::from_matrix(d, random_povm_element(d.size(), &mut rng))?,
            PovmKind::Reconstructed,
        )?;
        let back = compensate_loss(&apply_loss(&p, 0.689)?, 0.689)?;
        worst = worst.max(back.pi0().max_abs_diff(p.pi0())?);
    }
    Ok(worst)
}

fn tomography_round_trip() -> crate::Result<f64> {
    let d = dim(20);
    let spec = ScsMeasurementSpec::from_c0_squared(0.499, 0.5, std::f64::consts::FRAC_PI_2)?;
    let p = dp_povm(&spec, C64::from_polar(0.894, std::f64::consts::FRAC_PI_2), d)?;
    let probes = ProbeSet::new(0.499, vec![0.2, 0.3])?;
    let clicks = expected_counts(&p, &probes, 1 << 50)?;
    let run = tomography_pipeline(&clicks, &probes, d)?;
    Ok(1.0 - run.povm.similarity(&ScsPovm::from_pair(&p, 0.499)?))
}

fn homodyne_identity() -> crate::Result<f64> {
    let d = dim(12);
    let p = homodyne_povm(&HomodyneSpec::new(-20.0, 0.0)?, d)?;
    p.pi0().max_abs_diff(&FockOperator::identity(d))
}

fn config_check(cfg: &RunConfig) -> Check {
    let result = cfg.resolved().and_then(|r| {
        r.validate()?;
        if let Some(path) = r.tomography.as_ref().and_then(|t| t.clicks_file.as_ref()) {
            let text = std::fs::read_to_string(path)
                .map_err(|e| crate::Error::Ingestion(format!("{}: {e}", path.display())))?;
            parse_click_table(&text)?;
        }
        Ok(0.0)
    });
    check("config", result, 0.0)
}

/// Runs every check; `config`, when given, is resolved and validated too.
pub fn selftest(config: Option<&RunConfig>) -> SelftestReport {
    let mut checks = vec![
        check("displacement-unitarity", unitarity(), 1e-6),
        check("povm-completeness", completeness(), 1e-9),
        check("entry-bound", entry_bound(), 1e-9),
        check("fidelity-equivalence", fidelity_equivalence(), 1e-10),
        check("loss-round-trip", loss_round_trip(), 1e-6),
        check("tomography-round-trip", tomography_round_trip(), 1e-3),
        check("homodyne-identity", homodyne_identity(), 1e-8),
    ];
    if let Some(cfg) = config {
        checks.push(config_check(cfg));
    }
    SelftestReport {
        passed: checks.iter().all(|c| c.passed),
        checks,
    }
}
