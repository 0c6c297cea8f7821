//! Measurement fidelities against a target SCS projection, the displacement
//! and homodyne optimizers, and parameter sweeps.

use argmin::core::{CostFunction, Executor, State};
use argmin::solver::neldermead::NelderMead;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::fock::{
    admissible_radius, displacement_unchecked, expect, scs_projectors, ScsMeasurementSpec,
    TruncationDim, C64,
};
use crate::format::{csv_header, num};
use crate::povm::{homodyne_tail_matrix, DetectorModel, PovmPair};

/// Coarse displacement grid: amplitude step and upper bound, phase step.
pub const AMP_STEP: f64 = 0.02;
pub const AMP_MAX: f64 = 2.5;
pub const PHASE_STEP: f64 = PI / 60.0;
/// Homodyne threshold grid on `[−X_TH_MAX, X_TH_MAX]`.
pub const X_TH_MAX: f64 = 6.0;
pub const X_TH_STEP: f64 = 0.05;
/// Simplex refinement stops when the spread of objective values falls below this.
pub const REFINE_TOL: f64 = 1e-10;
const REFINE_MAX_ITERS: u64 = 5000;

/// `F = (⟨π₀|Π₀|π₀⟩ + ⟨π₁|Π₁|π₁⟩) / 2`
pub fn fidelity(p: &PovmPair, spec: &ScsMeasurementSpec) -> Result<f64> {
    let (pi0, pi1) = scs_projectors(spec, p.dim())?;
    let a = expect(p.pi0(), &pi0)?.re;
    let b = expect(p.pi1(), &pi1)?.re;
    Ok(0.5 * (a + b))
}

/// Ideal PNRD parity measurement (no displacement): `max(c₀², c₁²)`.
pub fn pnrd_fidelity(spec: &ScsMeasurementSpec) -> f64 {
    let c0 = spec.c0 * spec.c0;
    let c1 = spec.c1 * spec.c1;
    c0.max(c1)
}

/// Target projector vectors with `‖π₁‖²` kept for truncation-exact
/// `⟨π₁|I − Π₀|π₁⟩`.
struct Target {
    pi0: DVector<C64>,
    pi1: DVector<C64>,
    norm1: f64,
}

impl Target {
    fn new(spec: &ScsMeasurementSpec, dim: TruncationDim) -> Result<Self> {
        let (p0, p1) = scs_projectors(spec, dim)?;
        Ok(Self {
            norm1: p1.norm_sqr(),
            pi0: p0.amps().clone(),
            pi1: p1.amps().clone(),
        })
    }
}

/// Displaced-PNRD POVM fidelity without forming `Π₀`: with `u = D(β)†π`,
/// `F = (Σ_{ω₀}|u₀ₙ|² + ‖π₁‖² − Σ_{ω₀}|u₁ₙ|²) / 2`.
fn dp_objective(t: &Target, beta: C64, dim: TruncationDim) -> f64 {
    let d = displacement_unchecked(beta, dim);
    let dag = d.entries().adjoint();
    let u0 = &dag * &t.pi0;
    let u1 = &dag * &t.pi1;
    let mut s = t.norm1;
    for (a, b) in u0.iter().zip(u1.iter()) {
        let (a, b) = (a.norm_sqr(), b.norm_sqr());
        if a >= b {
            s += a - b;
        }
    }
    0.5 * s
}

/// On/off fidelity with `Π₀ = Π_off = (1−ν) D(Vβ) diag((1−η)ⁿ) D(Vβ)†`.
fn onoff_objective(t: &Target, beta: C64, model: &DetectorModel, dim: TruncationDim) -> f64 {
    let d = displacement_unchecked(beta * model.visibility, dim);
    let dag = d.entries().adjoint();
    let u0 = &dag * &t.pi0;
    let u1 = &dag * &t.pi1;
    let mut s = 0.0;
    let mut w = 1.0;
    for (a, b) in u0.iter().zip(u1.iter()) {
        s += w * (a.norm_sqr() - b.norm_sqr());
        w *= 1.0 - model.eta;
    }
    0.5 * (t.norm1 + (1.0 - model.nu) * s)
}

fn check_beta(beta: C64, dim: TruncationDim) -> Result<()> {
    crate::fock::displacement_operator(beta, dim).map(|_| ())
}

/// Fidelity of the ideal displaced-PNRD POVM.
pub fn dp_fidelity(spec: &ScsMeasurementSpec, beta: C64, dim: TruncationDim) -> Result<f64> {
    check_beta(beta, dim)?;
    Ok(dp_objective(&Target::new(spec, dim)?, beta, dim))
}

/// Fidelity of displaced on/off detection under `model`.
pub fn onoff_fidelity(
    spec: &ScsMeasurementSpec,
    beta: C64,
    model: &DetectorModel,
    dim: TruncationDim,
) -> Result<f64> {
    model.validate()?;
    check_beta(beta * model.visibility, dim)?;
    Ok(onoff_objective(&Target::new(spec, dim)?, beta, model, dim))
}

/// Displaced-detection fidelity for `detector`: the ideal PNRD model when
/// the detector is ideal, the on/off model otherwise.
pub fn displaced_fidelity(
    spec: &ScsMeasurementSpec,
    beta: C64,
    detector: &DetectorModel,
    dim: TruncationDim,
) -> Result<f64> {
    if detector.is_ideal() {
        dp_fidelity(spec, beta, dim)
    } else {
        onoff_fidelity(spec, beta, detector, dim)
    }
}

/// Nelder–Mead on a 2-D cost; returns the best parameter found.
fn nelder_mead<F>(f: F, start: [f64; 2], step: [f64; 2]) -> Result<[f64; 2]>
where
    F: Fn([f64; 2]) -> f64,
{
    struct Cost<F>(F);
    impl<F: Fn([f64; 2]) -> f64> CostFunction for Cost<F> {
        type Param = Vec<f64>;
        type Output = f64;
        fn cost(&self, p: &Vec<f64>) -> std::result::Result<f64, argmin::core::Error> {
            Ok((self.0)([p[0], p[1]]))
        }
    }
    let simplex = vec![
        start.to_vec(),
        vec![start[0] + step[0], start[1]],
        vec![start[0], start[1] + step[1]],
    ];
    let solver = NelderMead::new(simplex)
        .with_sd_tolerance(REFINE_TOL)
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let res = Executor::new(Cost(f), solver)
        .configure(|s| s.max_iters(REFINE_MAX_ITERS))
        .run()
        .map_err(|_| Error::NonConvergence {
            stage: "simplex refinement",
            iterations: 0,
            residual: f64::NAN,
        })?;
    let best = res
        .state()
        .get_best_param()
        .cloned()
        .unwrap_or_else(|| start.to_vec());
    Ok([best[0], best[1]])
}

/// Optimum of the displacement search.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DisplacementOptimum {
    pub beta: C64,
    pub fidelity: f64,
    /// Best value on the coarse polar grid, before refinement.
    pub coarse_fidelity: f64,
}

/// Maximizes the displaced-detection fidelity over complex `β`: a polar grid
/// (amplitude step 0.02 up to 2.5, phase step π/60) followed by simplex
/// refinement in `(Re β, Im β)`.
///
/// Amplitudes are capped at the largest `|β|` the truncation supports.
pub fn optimize_displacement_detailed(
    spec: &ScsMeasurementSpec,
    detector: &DetectorModel,
    dim: TruncationDim,
) -> Result<DisplacementOptimum> {
    detector.validate()?;
    let target = Target::new(spec, dim)?;
    let radius = admissible_radius(dim).min(AMP_MAX);
    let eval = |beta: C64| {
        if detector.is_ideal() {
            dp_objective(&target, beta, dim)
        } else {
            onoff_objective(&target, beta, detector, dim)
        }
    };
    let clamp = |beta: C64| {
        let r = beta.norm();
        if r > radius {
            beta * (radius / r)
        } else {
            beta
        }
    };

    let mut best_beta = C64::new(0.0, 0.0);
    let mut best_f = eval(best_beta);
    let n_amp = (AMP_MAX / AMP_STEP).round() as usize;
    let n_phase = (2.0 * PI / PHASE_STEP).round() as usize;
    for i in 1..=n_amp {
        let r = i as f64 * AMP_STEP;
        if r > radius {
            break;
        }
        for j in 0..n_phase {
            let beta = C64::from_polar(r, j as f64 * PHASE_STEP);
            let f = eval(beta);
            if f > best_f {
                best_f = f;
                best_beta = beta;
            }
        }
    }

    let refined = nelder_mead(
        |p| {
            let raw = C64::new(p[0], p[1]);
            let beta = clamp(raw);
            -eval(beta) + (raw.norm() - beta.norm())
        },
        [best_beta.re, best_beta.im],
        [AMP_STEP, AMP_STEP],
    )?;
    let refined_beta = clamp(C64::new(refined[0], refined[1]));
    let refined_f = eval(refined_beta);
    let (beta, f) = if refined_f > best_f {
        (refined_beta, refined_f)
    } else {
        (best_beta, best_f)
    };
    Ok(DisplacementOptimum {
        beta,
        fidelity: f,
        coarse_fidelity: best_f,
    })
}

pub fn optimize_displacement(
    spec: &ScsMeasurementSpec,
    detector: &DetectorModel,
    dim: TruncationDim,
) -> Result<(C64, f64)> {
    optimize_displacement_detailed(spec, detector, dim).map(|o| (o.beta, o.fidelity))
}

/// Homodyne fidelity for the threshold measurement, from the real tail matrix
/// `E(x_th)`: `⟨π|Π₀(θ)|π⟩ = w†Ew` with `wₙ = e^{−inθ}πₙ`.
fn homodyne_objective(t: &Target, e: &DMatrix<f64>, lo_phase: f64) -> f64 {
    let q = |pi: &DVector<C64>| {
        let w = DVector::from_fn(pi.len(), |n, _| pi[n] * C64::from_polar(1.0, -(n as f64) * lo_phase));
        let re = w.map(|z| z.re);
        let im = w.map(|z| z.im);
        re.dot(&(e * &re)) + im.dot(&(e * &im))
    };
    0.5 * (q(&t.pi0) + t.norm1 - q(&t.pi1))
}

pub fn homodyne_fidelity(
    spec: &ScsMeasurementSpec,
    hd: &crate::povm::HomodyneSpec,
    dim: TruncationDim,
) -> Result<f64> {
    let t = Target::new(spec, dim)?;
    let e = homodyne_tail_matrix(hd.x_th, dim)?;
    Ok(homodyne_objective(&t, &e, hd.lo_phase))
}

/// Homodyne optimizer with the threshold grid's tail matrices precomputed, so
/// one instance can serve a whole sweep.
pub struct HomodyneOptimizer {
    dim: TruncationDim,
    thresholds: Vec<f64>,
    tails: Vec<DMatrix<f64>>,
}

impl HomodyneOptimizer {
    pub fn new(dim: TruncationDim) -> Result<Self> {
        let n = (2.0 * X_TH_MAX / X_TH_STEP).round() as usize;
        let thresholds: Vec<f64> = (0..=n).map(|i| -X_TH_MAX + i as f64 * X_TH_STEP).collect();
        let tails = thresholds
            .par_iter()
            .map(|&x| homodyne_tail_matrix(x, dim))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            dim,
            thresholds,
            tails,
        })
    }

    pub fn dim(&self) -> TruncationDim {
        self.dim
    }

    /// Returns `(x_th, lo_phase, f)` with `x_th ∈ [−6, 6]`, `lo_phase ∈ [0, π)`.
    pub fn optimize(&self, spec: &ScsMeasurementSpec) -> Result<(f64, f64, f64)> {
        let t = Target::new(spec, self.dim)?;
        let n_phase = (PI / PHASE_STEP).round() as usize;
        let mut best = (0.0, 0.0, f64::NEG_INFINITY);
        for (x, e) in self.thresholds.iter().zip(&self.tails) {
            for j in 0..n_phase {
                let th = j as f64 * PHASE_STEP;
                let f = homodyne_objective(&t, e, th);
                if f > best.2 {
                    best = (*x, th, f);
                }
            }
        }
        let th_max = PI * (1.0 - f64::EPSILON);
        let clamp = |p: [f64; 2]| [p[0].clamp(-X_TH_MAX, X_TH_MAX), p[1].clamp(0.0, th_max)];
        let eval = |p: [f64; 2]| -> f64 {
            match homodyne_tail_matrix(p[0], self.dim) {
                Ok(e) => homodyne_objective(&t, &e, p[1]),
                Err(_) => f64::NEG_INFINITY,
            }
        };
        let refined = nelder_mead(
            |p| {
                let q = clamp(p);
                let excess = (p[0] - q[0]).abs() + (p[1] - q[1]).abs();
                -eval(q) + excess
            },
            [best.0, best.1],
            [X_TH_STEP, PHASE_STEP],
        )?;
        let q = clamp(refined);
        let f = eval(q);
        if f > best.2 {
            Ok((q[0], q[1], f))
        } else {
            Ok(best)
        }
    }
}

pub fn optimize_homodyne(spec: &ScsMeasurementSpec, dim: TruncationDim) -> Result<(f64, f64, f64)> {
    HomodyneOptimizer::new(dim)?.optimize(spec)
}

/// Per-point outcome of a fidelity evaluation.
#[derive(Debug, Clone, Serialize)]
pub struct FidelityReport {
    pub f_dp: f64,
    /// `None` when the homodyne baseline was not requested.
    pub f_hd: Option<f64>,
    pub f_pn: f64,
    pub beta_opt: C64,
    pub x_th_opt: Option<f64>,
    pub lo_phase_opt: Option<f64>,
    pub spec: ScsMeasurementSpec,
    pub detector: DetectorModel,
}

/// Snaps `|β|` to the nearest level (first one on ties), keeping the phase.
pub fn quantize_amplitude(beta: C64, levels: &[f64]) -> C64 {
    if levels.is_empty() {
        return beta;
    }
    let r = beta.norm();
    let mut best = levels[0];
    for &l in &levels[1..] {
        if (l - r).abs() < (best - r).abs() {
            best = l;
        }
    }
    if r == 0.0 {
        C64::new(best, 0.0)
    } else {
        beta * (best / r)
    }
}

#[derive(Debug, Clone, Default)]
pub struct SweepOptions {
    /// Include the homodyne baseline.
    pub homodyne: bool,
    /// Restrict displacement amplitudes to these levels after optimizing.
    pub beta_levels: Option<Vec<f64>>,
}

pub fn evaluate_point(
    spec: &ScsMeasurementSpec,
    detector: &DetectorModel,
    dim: TruncationDim,
    homodyne: Option<&HomodyneOptimizer>,
    beta_levels: Option<&[f64]>,
) -> Result<FidelityReport> {
    let (mut beta, mut f_dp) = optimize_displacement(spec, detector, dim)?;
    if let Some(levels) = beta_levels {
        beta = quantize_amplitude(beta, levels);
        f_dp = displaced_fidelity(spec, beta, detector, dim)?;
    }
    let hd = homodyne.map(|h| h.optimize(spec)).transpose()?;
    Ok(FidelityReport {
        f_dp,
        f_hd: hd.map(|h| h.2),
        f_pn: pnrd_fidelity(spec),
        beta_opt: beta,
        x_th_opt: hd.map(|h| h.0),
        lo_phase_opt: hd.map(|h| h.1),
        spec: *spec,
        detector: *detector,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepGrid {
    pub c0sq_values: Vec<f64>,
    pub alpha_sq_values: Vec<f64>,
    pub phi_values: Vec<f64>,
}

impl SweepGrid {
    pub fn new(c0sq_values: Vec<f64>, alpha_sq_values: Vec<f64>, phi_values: Vec<f64>) -> Result<Self> {
        let g = Self {
            c0sq_values,
            alpha_sq_values,
            phi_values,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        let axes = [
            ("c0sq", &self.c0sq_values),
            ("alpha_sq", &self.alpha_sq_values),
            ("phi", &self.phi_values),
        ];
        for (name, v) in axes {
            if v.is_empty() {
                return Err(Error::InvalidParameter(format!("sweep axis {name} is empty")));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidParameter(format!("sweep axis {name} has non-finite values")));
            }
            if v.windows(2).any(|w| w[0] > w[1]) {
                return Err(Error::InvalidParameter(format!("sweep axis {name} is not sorted")));
            }
        }
        if self.c0sq_values.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::InvalidParameter("c0sq values must lie in [0, 1]".into()));
        }
        if self.alpha_sq_values.iter().any(|a| *a <= 0.0) {
            return Err(Error::InvalidParameter("alpha_sq values must be positive".into()));
        }
        Ok(())
    }

    /// Points in index order: φ outermost, then α², then c₀².
    pub fn points(&self) -> Vec<(f64, f64, f64)> {
        let mut out = Vec::new();
        for &phi in &self.phi_values {
            for &a2 in &self.alpha_sq_values {
                for &c2 in &self.c0sq_values {
                    out.push((c2, a2, phi));
                }
            }
        }
        out
    }
}

/// `start, start + step, ...` up to `stop` inclusive, computed by index so the
/// values do not accumulate rounding.
pub fn linspace_step(start: f64, stop: f64, step: f64) -> Vec<f64> {
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    (0..=n).map(|i| start + i as f64 * step).collect()
}

#[derive(Debug)]
pub struct SweepRow {
    pub index: usize,
    pub c0sq: f64,
    pub alpha_sq: f64,
    pub phi: f64,
    pub outcome: Result<FidelityReport>,
}

/// Evaluates every grid point independently (in parallel); rows come back in
/// grid order and a failing point does not stop the others.
pub fn sweep(
    grid: &SweepGrid,
    detector: &DetectorModel,
    dim: TruncationDim,
    opts: &SweepOptions,
) -> Result<Vec<SweepRow>> {
    grid.validate()?;
    detector.validate()?;
    let hd = if opts.homodyne {
        Some(HomodyneOptimizer::new(dim)?)
    } else {
        None
    };
    let points = grid.points();
    Ok(points
        .into_par_iter()
        .enumerate()
        .map(|(index, (c0sq, alpha_sq, phi))| {
            let outcome = ScsMeasurementSpec::from_c0_squared(alpha_sq.sqrt(), c0sq, phi)
                .and_then(|spec| {
                    evaluate_point(&spec, detector, dim, hd.as_ref(), opts.beta_levels.as_deref())
                });
            SweepRow {
                index,
                c0sq,
                alpha_sq,
                phi,
                outcome,
            }
        })
        .collect())
}

pub const SWEEP_COLUMNS: &str =
    "c0sq,alpha_sq,phi,f_dp,f_hd,f_pn,beta_opt_re,beta_opt_im,x_th_opt,lo_phase_opt,error";

/// CSV body (column header plus one line per row); failed points carry
/// `nan` values and the error text.
pub fn sweep_csv_body(rows: &[SweepRow]) -> String {
    let mut out = String::new();
    out.push_str(SWEEP_COLUMNS);
    out.push('\n');
    let opt = |x: Option<f64>| num(x.unwrap_or(f64::NAN));
    for r in rows {
        let (vals, err) = match &r.outcome {
            Ok(rep) => (
                [
                    num(rep.f_dp),
                    opt(rep.f_hd),
                    num(rep.f_pn),
                    num(rep.beta_opt.re),
                    num(rep.beta_opt.im),
                    opt(rep.x_th_opt),
                    opt(rep.lo_phase_opt),
                ],
                String::new(),
            ),
            Err(e) => (
                std::array::from_fn(|_| num(f64::NAN)),
                e.to_string().replace([',', '\n'], ";"),
            ),
        };
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            num(r.c0sq),
            num(r.alpha_sq),
            num(r.phi),
            vals.join(","),
            err
        ));
    }
    out
}

/// Complete sweep CSV with the schema header line.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    format!("{}\n{}", csv_header("sweep"), sweep_csv_body(rows))
}
