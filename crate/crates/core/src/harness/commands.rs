//! The subcommands as pure functions from a resolved config to an output
//! payload. Payloads depend only on the config (including its seed), never on
//! thread count or wall-clock time.

use rayon::prelude::*;
use serde::Serialize;
use serde_json::Value;

use super::config::{RunConfig, TomographyConfig, TruthModel};
use crate::error::{Error, Result, StageExt};
use crate::fidelity::{
    displaced_fidelity, evaluate_point, optimize_displacement, pnrd_fidelity, quantize_amplitude,
    sweep, sweep_csv_body, FidelityReport, HomodyneOptimizer, SweepOptions,
};
use crate::fock::{ScsMeasurementSpec, TruncationDim, C64};
use crate::format::{csv_header, num, round12, schema_tag};
use crate::povm::{
    compensate_loss_with_diagnostics, dp_povm, homodyne_povm, onoff_povm, CompensationDiagnostics,
    DetectorModel, HomodyneSpec, PovmPair,
};
use crate::qdt::{
    error_bars, tomography_pipeline_with, ClickTable, Envelope, ErrorBars, ProbeSet, ScsPovm,
    TomographyRun,
};
use crate::sim::{click_table_csv, parse_click_table, simulate_counts, Campaign};

pub const CONVENTIONS: &str =
    "x=(a+a^dag)/sqrt2; outcome 0 = pi0 (on/off detector: no click); amplitudes complex (re,im)";

#[derive(Debug, Clone, Serialize)]
pub struct Metadata {
    pub schema: String,
    pub catproj_version: &'static str,
    pub config_hash: String,
    pub preset: Option<String>,
    pub seed: u64,
    pub n_max: usize,
    pub conventions: &'static str,
}

impl Metadata {
    pub fn new(kind: &str, cfg: &RunConfig) -> Result<Self> {
        Ok(Self {
            schema: schema_tag(kind),
            catproj_version: env!("CARGO_PKG_VERSION"),
            config_hash: cfg.hash(),
            preset: cfg.preset.clone(),
            seed: cfg.seed(),
            n_max: cfg.dim()?.n_max(),
            conventions: CONVENTIONS,
        })
    }

    fn csv_lines(&self) -> Vec<(String, String)> {
        vec![
            ("catproj_version".into(), self.catproj_version.into()),
            ("config_hash".into(), self.config_hash.clone()),
            ("preset".into(), self.preset.clone().unwrap_or_else(|| "none".into())),
            ("seed".into(), self.seed.to_string()),
            ("n_max".into(), self.n_max.to_string()),
            ("conventions".into(), self.conventions.into()),
        ]
    }
}

fn round_value(v: &mut Value) {
    match v {
        Value::Number(n) if !(n.is_u64() || n.is_i64()) => {
            if let Some(x) = n.as_f64() {
                if let Some(r) = serde_json::Number::from_f64(round12(x)) {
                    *n = r;
                }
            }
        }
        Value::Array(a) => a.iter_mut().for_each(round_value),
        Value::Object(o) => o.values_mut().for_each(round_value),
        _ => {}
    }
}

/// Pretty JSON with every float rounded to 12 significant digits.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut v = serde_json::to_value(value)?;
    round_value(&mut v);
    let mut s = serde_json::to_string_pretty(&v)?;
    s.push('\n');
    Ok(s)
}

/// `fidelity-sweep`: one CSV row per grid point.
pub fn fidelity_sweep(cfg: &RunConfig) -> Result<String> {
    let dim = cfg.dim()?;
    let grid = cfg.grid()?;
    let detector = cfg.detector()?;
    let opts = cfg
        .sweep
        .as_ref()
        .map(|s| SweepOptions {
            homodyne: s.homodyne,
            beta_levels: s.beta_levels.clone(),
        })
        .unwrap_or(SweepOptions {
            homodyne: true,
            beta_levels: None,
        });
    let rows = sweep(&grid, &detector, dim, &opts)?;
    let meta = Metadata::new("sweep", cfg)?;
    let mut out = csv_header("sweep");
    out.push('\n');
    let mut lines = meta.csv_lines();
    lines.push((
        "detector".into(),
        format!("eta={} nu={} visibility={}", detector.eta, detector.nu, detector.visibility),
    ));
    for (k, v) in lines {
        out.push_str(&format!("# {k}={v}\n"));
    }
    out.push_str(&sweep_csv_body(&rows));
    Ok(out)
}

#[derive(Serialize)]
struct OptimizeOutput {
    metadata: Metadata,
    report: FidelityReport,
}

/// `optimize`: the optimal displacement and baselines for `[spec]`.
pub fn optimize(cfg: &RunConfig) -> Result<String> {
    let dim = cfg.dim()?;
    let spec = cfg.spec()?;
    let detector = cfg.detector()?;
    let (homodyne, levels) = cfg
        .sweep
        .as_ref()
        .map(|s| (s.homodyne, s.beta_levels.clone()))
        .unwrap_or((true, None));
    let hd = homodyne.then(|| HomodyneOptimizer::new(dim)).transpose()?;
    let report = evaluate_point(&spec, &detector, dim, hd.as_ref(), levels.as_deref())?;
    to_json(&OptimizeOutput {
        metadata: Metadata::new("optimize", cfg)?,
        report,
    })
}

/// The POVM clicks are simulated from, plus its displacement if any.
#[derive(Debug, Clone, Serialize)]
pub struct TruthInfo {
    pub model: TruthModel,
    pub beta: Option<C64>,
    pub homodyne: Option<HomodyneSpec>,
    #[serde(skip)]
    pub povm: PovmPair,
}

pub fn build_truth(cfg: &RunConfig, dim: TruncationDim) -> Result<TruthInfo> {
    let t = cfg
        .truth
        .as_ref()
        .ok_or_else(|| Error::Config("missing [truth] section".into()))?;
    let detector = cfg.detector()?;
    let fixed = C64::from_polar(t.beta_abs, t.beta_phase);
    let (povm, beta, homodyne) = match t.model {
        TruthModel::DisplacedPnrd => (dp_povm(&cfg.spec()?, fixed, dim)?, Some(fixed), None),
        TruthModel::DisplacedOnoff => (onoff_povm(fixed, &detector, dim)?, Some(fixed), None),
        TruthModel::Optimal => {
            let spec = cfg.spec()?;
            let (beta, _) = optimize_displacement(&spec, &detector, dim)?;
            (displaced_truth(&spec, beta, &detector, dim)?, Some(beta), None)
        }
        TruthModel::Homodyne => {
            let h = HomodyneSpec::wrapped(t.x_th, t.lo_phase)?;
            (homodyne_povm(&h, dim)?, None, Some(h))
        }
    };
    Ok(TruthInfo {
        model: t.model,
        beta,
        homodyne,
        povm,
    })
}

fn displaced_truth(
    spec: &ScsMeasurementSpec,
    beta: C64,
    detector: &DetectorModel,
    dim: TruncationDim,
) -> Result<PovmPair> {
    if detector.is_ideal() {
        dp_povm(spec, beta, dim)
    } else {
        onoff_povm(beta, detector, dim)
    }
}

/// Probe amplitude: campaign override, then the target's `alpha`.
fn probe_alpha(cfg: &RunConfig) -> Result<f64> {
    if let Some(a) = cfg.campaign.as_ref().and_then(|c| c.probe_alpha) {
        return Ok(a);
    }
    cfg.spec
        .as_ref()
        .map(|s| s.alpha)
        .ok_or_else(|| Error::Config("probe amplitude needs [spec] alpha or campaign.probe_alpha".into()))
}

fn campaign(cfg: &RunConfig, probes: ProbeSet, beta: Option<C64>, seed: u64) -> Result<Campaign> {
    Ok(Campaign {
        probes,
        shots_per_probe: cfg.campaign().shots,
        detector: cfg.detector()?,
        displacement_schedule: vec![beta.unwrap_or_default()],
        rng_seed: seed,
    })
}

/// `simulate`: a click table for the configured truth and campaign.
pub fn simulate(cfg: &RunConfig) -> Result<String> {
    let dim = cfg.dim()?;
    let truth = build_truth(cfg, dim).stage("truth")?;
    let probes = cfg.probes(probe_alpha(cfg)?)?;
    let c = campaign(cfg, probes, truth.beta, cfg.seed())?;
    let table = simulate_counts(&truth.povm, &c).stage("simulation")?;
    let meta = Metadata::new("clicks", cfg)?;
    let mut lines = meta.csv_lines();
    lines.push(("truth".into(), format!("{:?}", truth.model)));
    if let Some(b) = truth.beta {
        lines.push(("beta".into(), format!("{},{}", num(b.re), num(b.im))));
    }
    Ok(click_table_csv(&table, &lines))
}

/// Probe set implied by a click table's own amplitudes.
pub fn probes_from_table(table: &ClickTable) -> Result<ProbeSet> {
    let alpha = table.row("alpha+")?.amplitude.re;
    let mut gammas = Vec::new();
    for k in 1.. {
        match table.row(&format!("igamma+{k}")) {
            Ok(r) => gammas.push(r.amplitude.im),
            Err(_) => break,
        }
    }
    ProbeSet::new(alpha, gammas)
}

#[derive(Debug, Clone, Serialize)]
pub struct Reconstruction {
    pub povm: ScsPovm,
    /// Fidelity of the reconstructed POVM against the target measurement.
    pub fidelity: Option<f64>,
    pub fidelity_envelope: Option<Envelope>,
    /// Truth POVM projected onto the cat basis (simulated runs only).
    pub truth_projection: Option<ScsPovm>,
    pub similarity_to_truth: Option<f64>,
    pub error_bars: Option<ErrorBars>,
    pub run: TomographyRun,
}

struct Fit<'a> {
    probes: &'a ProbeSet,
    dim: TruncationDim,
    spec: Option<&'a ScsMeasurementSpec>,
    t: &'a TomographyConfig,
}

fn reconstruct(fit: &Fit, clicks: &ClickTable, truth: Option<&PovmPair>) -> Result<Reconstruction> {
    let Fit { probes, dim, spec, t } = *fit;
    let run = tomography_pipeline_with(clicks, probes, dim, t.scheme).stage("reconstruction")?;
    let bars = if t.alpha_sigma > 0.0 {
        Some(error_bars(&run, t.alpha_sigma).stage("error-bars")?)
    } else {
        None
    };
    let fidelity = spec.map(|s| run.povm.fidelity(s));
    let fidelity_envelope = match (spec, &bars) {
        (Some(s), Some(b)) => Some(Envelope::from_values(
            "fidelity",
            run.povm.fidelity(s),
            &b.shifted.iter().map(|p| p.fidelity(s)).collect::<Vec<_>>(),
        )),
        _ => None,
    };
    let truth_projection = truth
        .map(|t| ScsPovm::from_pair(t, probes.alpha))
        .transpose()?;
    let similarity_to_truth = truth_projection.as_ref().map(|t| run.povm.similarity(t));
    Ok(Reconstruction {
        povm: run.povm.clone(),
        fidelity,
        fidelity_envelope,
        truth_projection,
        similarity_to_truth,
        error_bars: bars,
        run,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct Compensated {
    pub diagnostics: CompensationDiagnostics,
    pub reconstruction: Reconstruction,
}

#[derive(Serialize)]
struct TomographyOutput {
    metadata: Metadata,
    spec: Option<ScsMeasurementSpec>,
    truth: Option<TruthInfo>,
    raw: Reconstruction,
    compensated: Option<Compensated>,
}

/// `tomography`: a single reconstruction, or a figure-style scan when
/// `[tomography.scan]` is present.
pub fn tomography(cfg: &RunConfig) -> Result<String> {
    let t = cfg.tomography.clone().unwrap_or(TomographyConfig {
        clicks_file: None,
        compensate_loss: false,
        alpha_sigma: 0.0,
        scheme: Default::default(),
        scan: None,
    });
    if t.scan.is_some() {
        return tomography_scan(cfg);
    }
    let dim = cfg.dim()?;
    let spec = cfg.spec.as_ref().map(|_| cfg.spec()).transpose()?;
    let detector = cfg.detector()?;

    if let Some(path) = &t.clicks_file {
        if t.compensate_loss {
            return Err(Error::Config(
                "loss compensation needs a simulated truth; drop clicks_file or compensate_loss".into(),
            ));
        }
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Ingestion(format!("{}: {e}", path.display())))
            .stage("ingestion")?;
        let clicks = parse_click_table(&text).stage("ingestion")?;
        let probes = probes_from_table(&clicks).stage("ingestion")?;
        let fit = Fit { probes: &probes, dim, spec: spec.as_ref(), t: &t };
        let raw = reconstruct(&fit, &clicks, None)?;
        return to_json(&TomographyOutput {
            metadata: Metadata::new("tomography", cfg)?,
            spec,
            truth: None,
            raw,
            compensated: None,
        });
    }

    let truth = build_truth(cfg, dim).stage("truth")?;
    let probes = cfg.probes(probe_alpha(cfg)?)?;
    let c = campaign(cfg, probes.clone(), truth.beta, cfg.seed())?;
    let clicks = simulate_counts(&truth.povm, &c).stage("simulation")?;
    let fit = Fit { probes: &probes, dim, spec: spec.as_ref(), t: &t };
    let raw = reconstruct(&fit, &clicks, Some(&truth.povm))?;
    let compensated = if t.compensate_loss {
        let (pair, diagnostics) =
            compensate_loss_with_diagnostics(&truth.povm, detector.eta).stage("loss-compensation")?;
        let clicks = simulate_counts(&pair, &c).stage("simulation")?;
        Some(Compensated {
            diagnostics,
            reconstruction: reconstruct(&fit, &clicks, Some(&pair))?,
        })
    } else {
        None
    };
    to_json(&TomographyOutput {
        metadata: Metadata::new("tomography", cfg)?,
        spec,
        truth: Some(truth),
        raw,
        compensated,
    })
}

/// One `(φ, c₀²)` point of a tomography scan.
#[derive(Debug, Clone, Serialize)]
pub struct ScanRow {
    pub c0sq: f64,
    pub phi: f64,
    /// Displacement used, after level quantization.
    pub beta: Option<C64>,
    /// Model fidelity of the lossy detector at `beta`.
    pub f_theory: Option<f64>,
    /// Optimized ideal displaced-PNRD fidelity.
    pub f_theory_ideal: Option<f64>,
    pub f_hd: Option<f64>,
    pub f_pn: Option<f64>,
    pub raw: Option<Envelope>,
    pub compensated: Option<Envelope>,
    pub similarity_raw: Option<f64>,
    pub similarity_compensated: Option<f64>,
    pub error: Option<String>,
}

#[derive(Serialize)]
struct ScanOutput {
    metadata: Metadata,
    alpha: f64,
    detector: DetectorModel,
    beta_levels: Option<Vec<f64>>,
    rows: Vec<ScanRow>,
}

/// Simulated reconstruction across the scan grid. Point `i` draws clicks with
/// seed `seed + i`; the compensated column reuses that seed.
pub fn tomography_scan(cfg: &RunConfig) -> Result<String> {
    let dim = cfg.dim()?;
    let detector = cfg.detector()?;
    let t = cfg.tomography.clone().expect("scan requires [tomography]");
    let scan = t.scan.clone().expect("scan section present");
    let alpha = cfg
        .spec
        .as_ref()
        .map(|s| s.alpha)
        .ok_or_else(|| Error::Config("scan needs [spec] alpha".into()))?;
    let probes = cfg.probes(alpha)?;
    let c0s = scan.c0sq.values()?;
    let phis = scan.phi.values()?;
    if c0s.is_empty() || phis.is_empty() {
        return Err(Error::Config("scan grid is empty".into()));
    }
    let points: Vec<(f64, f64)> = phis
        .iter()
        .flat_map(|&p| c0s.iter().map(move |&c| (c, p)))
        .collect();
    let hd = HomodyneOptimizer::new(dim)?;
    let seed = cfg.seed();
    let rows: Vec<ScanRow> = points
        .par_iter()
        .enumerate()
        .map(|(i, &(c0sq, phi))| {
            let mut row = ScanRow {
                c0sq,
                phi,
                beta: None,
                f_theory: None,
                f_theory_ideal: None,
                f_hd: None,
                f_pn: None,
                raw: None,
                compensated: None,
                similarity_raw: None,
                similarity_compensated: None,
                error: None,
            };
            if let Err(e) = scan_point(
                cfg,
                &mut row,
                alpha,
                &detector,
                dim,
                &probes,
                &hd,
                scan.beta_levels.as_deref(),
                &t,
                seed.wrapping_add(i as u64),
            ) {
                row.error = Some(e.to_string());
            }
            row
        })
        .collect();
    to_json(&ScanOutput {
        metadata: Metadata::new("tomography-scan", cfg)?,
        alpha,
        detector,
        beta_levels: scan.beta_levels.clone(),
        rows,
    })
}

#[allow(clippy::too_many_arguments)]
fn scan_point(
    cfg: &RunConfig,
    row: &mut ScanRow,
    alpha: f64,
    detector: &DetectorModel,
    dim: TruncationDim,
    probes: &ProbeSet,
    hd: &HomodyneOptimizer,
    levels: Option<&[f64]>,
    t: &TomographyConfig,
    seed: u64,
) -> Result<()> {
    let spec = ScsMeasurementSpec::from_c0_squared(alpha, row.c0sq, row.phi)?;
    let (mut beta, _) = optimize_displacement(&spec, detector, dim)?;
    if let Some(l) = levels {
        beta = quantize_amplitude(beta, l);
    }
    row.beta = Some(beta);
    row.f_theory = Some(displaced_fidelity(&spec, beta, detector, dim)?);
    row.f_theory_ideal = Some(optimize_displacement(&spec, &DetectorModel::ideal(), dim)?.1);
    row.f_hd = Some(hd.optimize(&spec)?.2);
    row.f_pn = Some(pnrd_fidelity(&spec));

    let truth = displaced_truth(&spec, beta, detector, dim)?;
    let c = campaign(cfg, probes.clone(), Some(beta), seed)?;
    let clicks = simulate_counts(&truth, &c).stage("simulation")?;
    let fit = Fit { probes, dim, spec: Some(&spec), t };
    let rec = reconstruct(&fit, &clicks, Some(&truth))?;
    row.raw = Some(envelope_or_point(&rec));
    row.similarity_raw = rec.similarity_to_truth;
    if t.compensate_loss {
        let (pair, _) =
            compensate_loss_with_diagnostics(&truth, detector.eta).stage("loss-compensation")?;
        let clicks = simulate_counts(&pair, &c).stage("simulation")?;
        let rec = reconstruct(&fit, &clicks, Some(&pair))?;
        row.compensated = Some(envelope_or_point(&rec));
        row.similarity_compensated = rec.similarity_to_truth;
    }
    Ok(())
}

fn envelope_or_point(rec: &Reconstruction) -> Envelope {
    rec.fidelity_envelope.clone().unwrap_or_else(|| {
        let f = rec.fidelity.unwrap_or(f64::NAN);
        Envelope::from_values("fidelity", f, &[])
    })
}
