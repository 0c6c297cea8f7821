//! Binary measurement models: displaced photon counting, its on/off variant,
//! PNRD parity, thresholded homodyne, and the detector-loss map.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{
    displacement_operator, ln_factorials, scs_projectors, FockOperator, ScsMeasurementSpec,
    TruncationDim, C64,
};
use crate::linalg;
use crate::quadrature::{hermite_functions, integrate_vec};

pub const COMPLETENESS_TOL: f64 = 1e-9;
pub const PSD_FLOOR: f64 = 1e-9;
pub const HERMITIAN_TOL: f64 = 1e-10;
/// Entry bound `|θ_mn| ≤ 1` tolerance for POVM elements.
pub const ENTRY_BOUND_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PovmKind {
    DisplacedPnrd,
    DisplacedOnoff,
    PnrdParity,
    HomodyneBinary,
    Reconstructed,
}

/// Two-outcome POVM `{Π₀, Π₁}` on a truncated Fock space.
#[derive(Debug, Clone)]
pub struct PovmPair {
    pi0: FockOperator,
    pi1: FockOperator,
    kind: PovmKind,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct PovmDiagnostics {
    pub completeness_defect: f64,
    pub hermiticity_defect: f64,
    pub min_eigenvalue: f64,
    pub max_abs_entry: f64,
}

impl PovmPair {
    /// Validates completeness, hermiticity, positivity and the entry bound.
    pub fn new(pi0: FockOperator, pi1: FockOperator, kind: PovmKind) -> Result<Self> {
        pi0.dim().check(pi1.dim())?;
        let pair = Self { pi0, pi1, kind };
        let d = pair.diagnostics();
        if d.completeness_defect > COMPLETENESS_TOL {
            return Err(Error::InvalidParameter(format!(
                "POVM incomplete: |Π₀+Π₁−I| = {:.3e}",
                d.completeness_defect
            )));
        }
        if d.hermiticity_defect > HERMITIAN_TOL {
            return Err(Error::InvalidParameter(format!(
                "POVM element not Hermitian: defect {:.3e}",
                d.hermiticity_defect
            )));
        }
        if d.min_eigenvalue < -PSD_FLOOR {
            return Err(Error::InvalidParameter(format!(
                "POVM element not positive: eigenvalue {:.3e}",
                d.min_eigenvalue
            )));
        }
        if d.max_abs_entry > 1.0 + ENTRY_BOUND_TOL {
            return Err(Error::InvalidParameter(format!(
                "POVM entry exceeds 1: {:.12}",
                d.max_abs_entry
            )));
        }
        Ok(pair)
    }

    /// Builds the pair `{Π₀, I − Π₀}` after symmetrizing `Π₀`.
    pub fn from_element(pi0: FockOperator, kind: PovmKind) -> Result<Self> {
        let pi0 = pi0.hermitian_part();
        let pi1 = pi0.complement();
        Self::new(pi0, pi1, kind)
    }

    pub fn pi0(&self) -> &FockOperator {
        &self.pi0
    }

    pub fn pi1(&self) -> &FockOperator {
        &self.pi1
    }

    pub fn element(&self, j: usize) -> &FockOperator {
        match j {
            0 => &self.pi0,
            _ => &self.pi1,
        }
    }

    pub fn kind(&self) -> PovmKind {
        self.kind
    }

    pub fn dim(&self) -> TruncationDim {
        self.pi0.dim()
    }

    pub fn diagnostics(&self) -> PovmDiagnostics {
        let sum = self.pi0.add(&self.pi1).expect("same dim");
        let completeness_defect = sum
            .max_abs_diff(&FockOperator::identity(self.dim()))
            .expect("same dim");
        let hermiticity_defect = linalg::hermiticity_defect(self.pi0.entries())
            .max(linalg::hermiticity_defect(self.pi1.entries()));
        let min_eigenvalue = self.pi0.min_eigenvalue().min(self.pi1.min_eigenvalue());
        let max_abs_entry = self.pi0.max_abs_entry().max(self.pi1.max_abs_entry());
        PovmDiagnostics {
            completeness_defect,
            hermiticity_defect,
            min_eigenvalue,
            max_abs_entry,
        }
    }
}

/// Detector imperfections: efficiency, dark-count probability per pulse, and
/// displacement interference visibility.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorModel {
    pub eta: f64,
    pub nu: f64,
    pub visibility: f64,
}

impl DetectorModel {
    pub fn new(eta: f64, nu: f64, visibility: f64) -> Result<Self> {
        let m = Self {
            eta,
            nu,
            visibility,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn ideal() -> Self {
        Self {
            eta: 1.0,
            nu: 0.0,
            visibility: 1.0,
        }
    }

    /// Lossy SNSPD-like detector: η = 68.9 %, ν = 5.32×10⁻⁵,
    /// V = 0.998.
    pub fn experimental() -> Self {
        Self {
            eta: 0.689,
            nu: 5.32e-5,
            visibility: 0.998,
        }
    }

    pub fn is_ideal(&self) -> bool {
        self.eta == 1.0 && self.nu == 0.0 && self.visibility == 1.0
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(Error::InvalidParameter(format!(
                "detector efficiency must lie in [0, 1], got {}",
                self.eta
            )));
        }
        if !(0.0..1.0).contains(&self.nu) {
            return Err(Error::InvalidParameter(format!(
                "dark-count probability must lie in [0, 1), got {}",
                self.nu
            )));
        }
        if !(0.0..=1.0).contains(&self.visibility) {
            return Err(Error::InvalidParameter(format!(
                "visibility must lie in [0, 1], got {}",
                self.visibility
            )));
        }
        Ok(())
    }
}

impl Default for DetectorModel {
    fn default() -> Self {
        Self::ideal()
    }
}

/// Binary homodyne threshold and local-oscillator phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HomodyneSpec {
    pub x_th: f64,
    pub lo_phase: f64,
}

impl HomodyneSpec {
    pub fn new(x_th: f64, lo_phase: f64) -> Result<Self> {
        if !x_th.is_finite() {
            return Err(Error::InvalidParameter("threshold must be finite".into()));
        }
        if !(0.0..std::f64::consts::TAU).contains(&lo_phase) {
            return Err(Error::InvalidParameter(format!(
                "LO phase must lie in [0, 2π), got {lo_phase}"
            )));
        }
        Ok(Self { x_th, lo_phase })
    }

    /// Like [`HomodyneSpec::new`] but wraps the phase into `[0, 2π)`.
    pub fn wrapped(x_th: f64, lo_phase: f64) -> Result<Self> {
        Self::new(x_th, lo_phase.rem_euclid(std::f64::consts::TAU))
    }
}

/// Which displaced number states `D(β)|n⟩` fall in `ω₀`. Ties go to `ω₀`.
pub fn dp_assignment(
    spec: &ScsMeasurementSpec,
    beta: C64,
    dim: TruncationDim,
) -> Result<(FockOperator, Vec<bool>)> {
    let d = displacement_operator(beta, dim)?;
    let (p0, p1) = scs_projectors(spec, dim)?;
    let dag = d.adjoint();
    let u0 = dag.apply(&p0)?;
    let u1 = dag.apply(&p1)?;
    let omega0 = (0..dim.size())
        .map(|n| u0.amp(n).norm_sqr() >= u1.amp(n).norm_sqr())
        .collect();
    Ok((d, omega0))
}

/// Displaced photon counting with an ideal PNRD: `Π₀ = Σ_{ω₀} D(β)|n⟩⟨n|D(β)†`.
pub fn dp_povm(spec: &ScsMeasurementSpec, beta: C64, dim: TruncationDim) -> Result<PovmPair> {
    let (d, omega0) = dp_assignment(spec, beta, dim)?;
    let size = dim.size();
    let mut pi0 = DMatrix::<C64>::zeros(size, size);
    for (n, _) in omega0.iter().enumerate().filter(|(_, &in0)| in0) {
        let col = d.entries().column(n);
        pi0 += &col * col.adjoint();
    }
    let kind = if beta == C64::new(0.0, 0.0) {
        PovmKind::PnrdParity
    } else {
        PovmKind::DisplacedPnrd
    };
    PovmPair::from_element(FockOperator::from_matrix(dim, pi0)?, kind)
}

/// `{Σ_even |n⟩⟨n|, Σ_odd |n⟩⟨n|}`
pub fn parity_povm(dim: TruncationDim) -> PovmPair {
    let pi0 = FockOperator::diagonal(dim, |n| if n % 2 == 0 { 1.0 } else { 0.0 });
    PovmPair::from_element(pi0, PovmKind::PnrdParity).expect("parity is a valid POVM")
}

/// Displaced on/off detection with efficiency, dark counts and visibility:
/// `Π_off = (1−ν) D(Vβ) [Σ_n (1−η)ⁿ|n⟩⟨n|] D(Vβ)†`, `Π_on = I − Π_off`.
///
/// Outcome 0 is "off" (no click).
pub fn onoff_povm(beta: C64, model: &DetectorModel, dim: TruncationDim) -> Result<PovmPair> {
    model.validate()?;
    let d = displacement_operator(beta * model.visibility, dim)?;
    let loss = FockOperator::diagonal(dim, |n| (1.0 - model.eta).powi(n as i32));
    let off = d.mul(&loss)?.mul(&d.adjoint())?.scaled(1.0 - model.nu);
    PovmPair::from_element(off, PovmKind::DisplacedOnoff)
}

/// Half-line cutoff beyond which every Hermite function up to `n_max` is
/// below 10⁻²⁰.
pub fn quadrature_cutoff(dim: TruncationDim) -> f64 {
    (2.0 * dim.n_max() as f64 + 1.0).sqrt() + 10.0
}

/// Real symmetric `E_mn(x_th) = ∫_{x_th}^∞ ψ_m(x)ψ_n(x) dx`.
pub fn homodyne_tail_matrix(x_th: f64, dim: TruncationDim) -> Result<DMatrix<f64>> {
    let size = dim.size();
    let cut = quadrature_cutoff(dim);
    let lo = x_th.max(-cut);
    let npairs = size * (size + 1) / 2;
    let n_max = dim.n_max();
    let vals = integrate_vec(
        |x, out| {
            let h = hermite_functions(n_max, x);
            let mut idx = 0;
            for m in 0..size {
                for n in m..size {
                    out[idx] = h[m] * h[n];
                    idx += 1;
                }
            }
        },
        lo,
        cut,
        npairs,
        1e-10,
    )
    .map_err(|e| match e {
        Error::NonConvergence {
            iterations,
            residual,
            ..
        } => Error::NonConvergence {
            stage: "homodyne quadrature",
            iterations,
            residual,
        },
        other => other,
    })?;
    let mut e = DMatrix::<f64>::zeros(size, size);
    let mut idx = 0;
    for m in 0..size {
        for n in m..size {
            e[(m, n)] = vals[idx];
            e[(n, m)] = vals[idx];
            idx += 1;
        }
    }
    Ok(e)
}

/// Rotates the real tail matrix into the `x_θ` quadrature basis:
/// `⟨m|Π₀|n⟩ = e^{i(m−n)θ} E_mn`.
pub fn rotate_tail_matrix(e: &DMatrix<f64>, lo_phase: f64) -> DMatrix<C64> {
    DMatrix::from_fn(e.nrows(), e.ncols(), |m, n| {
        C64::from_polar(e[(m, n)], (m as f64 - n as f64) * lo_phase)
    })
}

pub fn homodyne_povm(spec: &HomodyneSpec, dim: TruncationDim) -> Result<PovmPair> {
    let e = homodyne_tail_matrix(spec.x_th, dim)?;
    let pi0 = FockOperator::from_matrix(dim, rotate_tail_matrix(&e, spec.lo_phase))?;
    PovmPair::from_element(pi0, PovmKind::HomodyneBinary)
}

/// Kraus weights `w(n, k) = √(C(n,k) η^{n−k} (1−η)^k)` of the pure-loss channel.
fn loss_weights(eta: f64, dim: TruncationDim) -> DMatrix<f64> {
    let size = dim.size();
    let lf = ln_factorials(dim.n_max());
    DMatrix::from_fn(size, size, |n, k| {
        if k > n {
            return 0.0;
        }
        let binom = (lf[n] - lf[k] - lf[n - k]).exp();
        (binom * eta.powi((n - k) as i32) * (1.0 - eta).powi(k as i32)).sqrt()
    })
}

/// Heisenberg-picture pure loss: `Π ↦ Σ_k A_k† Π A_k` with
/// `A_k = Σ_n w(n,k) |n−k⟩⟨n|`.
pub fn loss_adjoint(op: &FockOperator, eta: f64) -> Result<FockOperator> {
    check_eta(eta, 0.0)?;
    let dim = op.dim();
    let size = dim.size();
    let w = loss_weights(eta, dim);
    let src = op.entries();
    let out = DMatrix::from_fn(size, size, |m, n| {
        (0..=m.min(n))
            .map(|k| src[(m - k, n - k)] * (w[(m, k)] * w[(n, k)]))
            .sum::<C64>()
    });
    FockOperator::from_matrix(dim, out)
}

fn check_eta(eta: f64, floor: f64) -> Result<()> {
    if !(eta > floor && eta <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "efficiency must lie in ({floor}, 1], got {eta}"
        )));
    }
    Ok(())
}

pub fn apply_loss(p: &PovmPair, eta: f64) -> Result<PovmPair> {
    let pi0 = loss_adjoint(p.pi0(), eta)?.hermitian_part();
    let pi1 = loss_adjoint(p.pi1(), eta)?.hermitian_part();
    PovmPair::new(pi0, pi1, p.kind())
}

/// Largest condition number tolerated when inverting the loss map.
pub const MAX_LOSS_CONDITION: f64 = 1e12;

/// Inverse of [`loss_adjoint`].
///
/// The map only couples entries on the same diagonal offset `m − n`, and on
/// each offset it is lower triangular in `min(m, n)`, so the operator-space
/// matrix is inverted block by block with forward substitution. Returns the
/// inverted operator and the condition number of the full map.
pub fn invert_loss_adjoint(op: &FockOperator, eta: f64) -> Result<(FockOperator, f64)> {
    check_eta(eta, 0.0)?;
    let dim = op.dim();
    let size = dim.size();
    let w = loss_weights(eta, dim);
    let src = op.entries();
    let mut out = DMatrix::<C64>::zeros(size, size);
    let mut s_max: f64 = 0.0;
    let mut s_min = f64::INFINITY;
    for offset in 0..size {
        let len = size - offset;
        // block[j][i]: weight of input entry at index i on output entry j,
        // where entry j sits at (j + offset, j)
        let block = DMatrix::<f64>::from_fn(len, len, |j, i| {
            if i > j {
                return 0.0;
            }
            let k = j - i;
            w[(j + offset, k)] * w[(j, k)]
        });
        let sv = block.clone().svd(false, false).singular_values;
        s_max = s_max.max(sv.max());
        s_min = s_min.min(sv.min());
        let placements: &[(usize, usize)] = if offset == 0 {
            &[(0, 0)]
        } else {
            &[(offset, 0), (0, offset)]
        };
        for &(row, col) in placements {
            let mut x = vec![C64::new(0.0, 0.0); len];
            for j in 0..len {
                let mut acc = src[(j + row, j + col)];
                for i in 0..j {
                    acc -= x[i] * block[(j, i)];
                }
                x[j] = acc / block[(j, j)];
            }
            for (j, v) in x.into_iter().enumerate() {
                out[(j + row, j + col)] = v;
            }
        }
    }
    let cond = if s_min > 0.0 { s_max / s_min } else { f64::INFINITY };
    Ok((FockOperator::from_matrix(dim, out)?, cond))
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct CompensationDiagnostics {
    pub condition_number: f64,
    /// Spectrum of the inverted `Π₀` before clipping.
    pub pre_repair_min_eigenvalue: f64,
    pub pre_repair_max_eigenvalue: f64,
    /// Largest entry change made by the physicality repair.
    pub repair_change: f64,
}

/// Undoes detector loss, then repairs physicality by clipping the spectrum of
/// `Π₀` to `[0, 1]` and setting `Π₁ = I − Π₀`.
pub fn compensate_loss_with_diagnostics(
    p: &PovmPair,
    eta: f64,
) -> Result<(PovmPair, CompensationDiagnostics)> {
    check_eta(eta, 0.1)?;
    let (raw, cond) = invert_loss_adjoint(p.pi0(), eta)?;
    if cond > MAX_LOSS_CONDITION {
        return Err(Error::IllConditioned { cond });
    }
    let raw = raw.hermitian_part();
    let (vals, _) = linalg::hermitian_eigen(raw.entries());
    let pre_min = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let pre_max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let clipped = if pre_min < 0.0 || pre_max > 1.0 {
        FockOperator::from_matrix(raw.dim(), linalg::clip_spectrum(raw.entries(), 0.0, 1.0))?
    } else {
        raw.clone()
    };
    let repair_change = clipped.max_abs_diff(&raw)?;
    let pair = PovmPair::from_element(clipped, p.kind())?;
    Ok((
        pair,
        CompensationDiagnostics {
            condition_number: cond,
            pre_repair_min_eigenvalue: pre_min,
            pre_repair_max_eigenvalue: pre_max,
            repair_change,
        },
    ))
}

pub fn compensate_loss(p: &PovmPair, eta: f64) -> Result<PovmPair> {
    compensate_loss_with_diagnostics(p, eta).map(|(pair, _)| pair)
}
