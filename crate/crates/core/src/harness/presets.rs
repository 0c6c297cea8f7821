//! Built-in run configurations for the figure reproductions.

use std::f64::consts::FRAC_PI_2;

use super::config::*;
use crate::error::{Error, Result};
use crate::povm::DetectorModel;
use crate::qdt::ProbeScheme;

pub const PRESETS: [&str; 6] = ["fig1b", "fig1c", "fig1d", "fig3", "fig4", "fig5"];

/// Target amplitude used by the experiment-style presets.
pub const EXPERIMENT_ALPHA: f64 = 0.499;
pub const EXPERIMENT_ALPHA_SIGMA: f64 = 0.011;

/// Displacement amplitudes available to the fig4 scan: the lossy on/off
/// optima at `φ = 0` for `c₀² ∈ {1, 0.9, 0.8, …, 0.5}`, rounded to 1e-3.
pub const FIG4_BETA_LEVELS: [f64; 9] = [0.0, 0.498, 0.653, 0.709, 0.756, 0.797, 0.836, 0.871, 0.906];

fn range(start: f64, stop: f64, step: f64) -> Axis {
    Axis::Range { start, stop, step }
}

fn experiment_campaign() -> CampaignConfig {
    CampaignConfig {
        gammas: vec![0.2, 0.3],
        shots: 200_000,
        probe_alpha: None,
    }
}

fn experiment_spec(c0sq: f64, phi: f64) -> SpecConfig {
    SpecConfig {
        alpha: EXPERIMENT_ALPHA,
        c0sq,
        phi,
    }
}

pub fn preset(name: &str) -> Result<RunConfig> {
    let base = RunConfig {
        preset: Some(name.to_string()),
        n_max: Some(20),
        seed: Some(20240501),
        ..Default::default()
    };
    let cfg = match name {
        // fidelity and optimal |β| against c₀² at α² = 0.25; 1c plots the
        // beta columns of the same table
        "fig1b" | "fig1c" => RunConfig {
            grid: Some(GridConfig {
                c0sq: range(0.0, 1.0, 0.05),
                alpha_sq: Axis::List(vec![0.25]),
                phi: Axis::List(vec![0.0]),
            }),
            detector: Some(DetectorModel::ideal()),
            sweep: Some(SweepConfig {
                homodyne: true,
                beta_levels: None,
            }),
            ..base
        },
        "fig1d" => RunConfig {
            grid: Some(GridConfig {
                c0sq: range(0.5, 1.0, 0.05),
                alpha_sq: range(0.1, 2.3, 0.2),
                phi: Axis::List(vec![0.0]),
            }),
            detector: Some(DetectorModel::ideal()),
            sweep: Some(SweepConfig {
                homodyne: true,
                beta_levels: None,
            }),
            ..base
        },
        "fig3" => RunConfig {
            spec: Some(experiment_spec(0.5, FRAC_PI_2)),
            detector: Some(DetectorModel::experimental()),
            campaign: Some(experiment_campaign()),
            truth: Some(TruthConfig {
                model: TruthModel::DisplacedOnoff,
                beta_abs: 0.894,
                beta_phase: FRAC_PI_2,
                x_th: 0.0,
                lo_phase: 0.0,
            }),
            tomography: Some(TomographyConfig {
                clicks_file: None,
                compensate_loss: true,
                alpha_sigma: EXPERIMENT_ALPHA_SIGMA,
                scheme: ProbeScheme::SixProbe,
                scan: None,
            }),
            ..base
        },
        "fig4" => RunConfig {
            spec: Some(experiment_spec(0.5, 0.0)),
            detector: Some(DetectorModel::experimental()),
            campaign: Some(experiment_campaign()),
            truth: Some(truth_optimal()),
            tomography: Some(TomographyConfig {
                clicks_file: None,
                compensate_loss: true,
                alpha_sigma: EXPERIMENT_ALPHA_SIGMA,
                scheme: ProbeScheme::SixProbe,
                scan: Some(ScanConfig {
                    c0sq: range(0.5, 1.0, 0.05),
                    phi: Axis::List(vec![0.0, FRAC_PI_2]),
                    beta_levels: Some(FIG4_BETA_LEVELS.to_vec()),
                }),
            }),
            ..base
        },
        "fig5" => RunConfig {
            spec: Some(experiment_spec(0.5, 0.0)),
            detector: Some(DetectorModel::experimental()),
            campaign: Some(experiment_campaign()),
            truth: Some(truth_optimal()),
            tomography: Some(TomographyConfig {
                clicks_file: None,
                compensate_loss: true,
                alpha_sigma: EXPERIMENT_ALPHA_SIGMA,
                scheme: ProbeScheme::SixProbe,
                scan: Some(ScanConfig {
                    c0sq: range(0.5, 1.0, 0.1),
                    phi: Axis::List(vec![0.0, 0.393, 0.787, 1.18, FRAC_PI_2]),
                    beta_levels: None,
                }),
            }),
            ..base
        },
        other => {
            return Err(Error::Config(format!(
                "unknown preset {other:?} (known: {})",
                PRESETS.join(", ")
            )))
        }
    };
    Ok(cfg)
}

fn truth_optimal() -> TruthConfig {
    TruthConfig {
        model: TruthModel::Optimal,
        beta_abs: 0.0,
        beta_phase: 0.0,
        x_th: 0.0,
        lo_phase: 0.0,
    }
}
