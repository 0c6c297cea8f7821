//! Coherent-probe detector tomography in the two-dimensional cat basis.
//!
//! Real-axis probes `|±α⟩` are measured directly. The superposition probes
//! `|φ_Im^±⟩ = (|α⟩ ± i|−α⟩)/√2` are never prepared: their statistics are
//! synthesized from imaginary-axis probes `|±iγ_k⟩` through the odd-order
//! coefficients `Φ_l` of the POVM's anti-Hermitian Fock entries, and the four
//! resulting probe statistics feed a maximum-likelihood reconstruction.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{cat_basis, ln_factorials, FockOperator, ScsMeasurementSpec, TruncationDim, C64};
use crate::format::round12;
use crate::povm::PovmPair;

pub type Mat2 = Matrix2<C64>;

/// Floor applied to predicted probabilities in the likelihood iteration.
pub const MLE_PROB_FLOOR: f64 = 1e-12;
pub const MLE_TOL: f64 = 1e-9;
pub const MLE_MAX_ITERS: usize = 100_000;
/// Smallest dilution tried before a likelihood-lowering step is accepted.
pub const MLE_MIN_DILUTION: f64 = 1e-10;
/// Likelihood drops below this are roundoff and do not trigger dilution.
pub const MLE_LL_TOL: f64 = 1e-12;
pub const PHI_GRAD_TOL: f64 = 1e-12;
pub const PHI_MAX_ITERS: usize = 100_000;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Probe amplitudes: the cat amplitude `α` for `|±α⟩` and the imaginary-axis
/// amplitudes `γ_k` for `|±iγ_k⟩`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSet {
    pub alpha: f64,
    pub gammas: Vec<f64>,
}

impl ProbeSet {
    pub fn new(alpha: f64, gammas: Vec<f64>) -> Result<Self> {
        let p = Self { alpha, gammas };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "probe amplitude alpha must be positive, got {}",
                self.alpha
            )));
        }
        if self.gammas.is_empty() {
            return Err(Error::InvalidParameter("at least one gamma probe is required".into()));
        }
        if self.gammas.iter().any(|g| !(g.is_finite() && *g > 0.0)) {
            return Err(Error::InvalidParameter("gamma amplitudes must be positive".into()));
        }
        for (i, a) in self.gammas.iter().enumerate() {
            if self.gammas[..i].contains(a) {
                return Err(Error::InvalidParameter(format!(
                    "duplicate gamma amplitude {a} makes the probe system singular"
                )));
            }
        }
        Ok(())
    }

    pub fn k(&self) -> usize {
        self.gammas.len()
    }

    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        Self::new(alpha, self.gammas.clone())
    }

    /// Labelled probe amplitudes in table order:
    /// `alpha+`, `alpha-`, then `igamma+k`, `igamma-k` for `k = 1..=K`.
    pub fn states(&self) -> Vec<(String, C64)> {
        let mut out = vec![
            ("alpha+".to_string(), c(self.alpha, 0.0)),
            ("alpha-".to_string(), c(-self.alpha, 0.0)),
        ];
        for (k, &g) in self.gammas.iter().enumerate() {
            out.push((format!("igamma+{}", k + 1), c(0.0, g)));
            out.push((format!("igamma-{}", k + 1), c(0.0, -g)));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClickRow {
    pub label: String,
    pub amplitude: C64,
    /// Counts for outcome 0 and outcome 1.
    pub counts: [u64; 2],
    pub shots: u64,
}

impl ClickRow {
    /// Outcome frequencies normalized by the outcome sum.
    pub fn rates(&self) -> Result<[f64; 2]> {
        let total = self.counts[0] + self.counts[1];
        if total == 0 {
            return Err(Error::Ingestion(format!("probe {} has no counts", self.label)));
        }
        let t = total as f64;
        Ok([self.counts[0] as f64 / t, self.counts[1] as f64 / t])
    }
}

/// Observed outcome counts per probe state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClickTable {
    pub rows: Vec<ClickRow>,
}

impl ClickTable {
    pub fn new(rows: Vec<ClickRow>) -> Result<Self> {
        let t = Self { rows };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, r) in self.rows.iter().enumerate() {
            if r.counts[0].checked_add(r.counts[1]) != Some(r.shots) {
                return Err(Error::Ingestion(format!(
                    "probe {}: counts {} + {} do not sum to {} shots",
                    r.label, r.counts[0], r.counts[1], r.shots
                )));
            }
            if self.rows[..i].iter().any(|o| o.label == r.label) {
                return Err(Error::Ingestion(format!("duplicate probe label {}", r.label)));
            }
        }
        Ok(())
    }

    pub fn row(&self, label: &str) -> Result<&ClickRow> {
        self.rows
            .iter()
            .find(|r| r.label == label)
            .ok_or_else(|| Error::Ingestion(format!("missing probe {label}")))
    }

    /// Every count and shot total multiplied by `k`.
    pub fn scaled(&self, k: u64) -> Self {
        Self {
            rows: self
                .rows
                .iter()
                .map(|r| ClickRow {
                    counts: [r.counts[0] * k, r.counts[1] * k],
                    shots: r.shots * k,
                    ..r.clone()
                })
                .collect(),
        }
    }
}

/// `Φ_l` coefficients for odd `l = 1, 3, ..., 2K−1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhiVector {
    pub values: Vec<f64>,
}

impl PhiVector {
    pub fn order(&self, c: usize) -> usize {
        2 * c + 1
    }

    pub fn within_bounds(&self, tol: f64) -> bool {
        self.values
            .iter()
            .enumerate()
            .all(|(c, v)| v.abs() <= phi_bound(2 * c + 1) + tol)
    }
}

/// `B_l = Σ_{m=1}^{l} 1/√(m!(l−m)!)`, the a-priori bound on `|Φ_l|`.
pub fn phi_bound(l: usize) -> f64 {
    let lf = ln_factorials(l);
    (1..=l).map(|m| (-0.5 * (lf[m] + lf[l - m])).exp()).sum()
}

/// Two-outcome POVM on the orthonormal `{|C₊⟩, |C₋⟩}` basis.
#[derive(Debug, Clone, PartialEq)]
pub struct ScsPovm {
    pub pi0: Mat2,
    pub pi1: Mat2,
}

/// Re/Im split of a 2×2 complex matrix for serialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mat2Parts {
    pub re: [[f64; 2]; 2],
    pub im: [[f64; 2]; 2],
}

impl Mat2Parts {
    pub fn from_matrix(m: &Mat2) -> Self {
        let f = |i: usize, j: usize| (round12(m[(i, j)].re), round12(m[(i, j)].im));
        let (a, b, cc, d) = (f(0, 0), f(0, 1), f(1, 0), f(1, 1));
        Self {
            re: [[a.0, b.0], [cc.0, d.0]],
            im: [[a.1, b.1], [cc.1, d.1]],
        }
    }

    pub fn to_matrix(&self) -> Mat2 {
        Mat2::new(
            c(self.re[0][0], self.im[0][0]),
            c(self.re[0][1], self.im[0][1]),
            c(self.re[1][0], self.im[1][0]),
            c(self.re[1][1], self.im[1][1]),
        )
    }
}

impl Serialize for ScsPovm {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Repr {
            pi0: Mat2Parts,
            pi1: Mat2Parts,
        }
        Repr {
            pi0: Mat2Parts::from_matrix(&self.pi0),
            pi1: Mat2Parts::from_matrix(&self.pi1),
        }
        .serialize(s)
    }
}

fn herm(m: &Mat2) -> Mat2 {
    (m + m.adjoint()) * c(0.5, 0.0)
}

fn eig2(m: &Mat2) -> (Vector2<f64>, Mat2) {
    let e = herm(m).symmetric_eigen();
    (e.eigenvalues, e.eigenvectors)
}

fn map2(m: &Mat2, f: impl Fn(f64) -> f64) -> Mat2 {
    let (vals, vecs) = eig2(m);
    let d = Mat2::from_diagonal(&vals.map(|v| c(f(v), 0.0)));
    herm(&(vecs * d * vecs.adjoint()))
}

fn max_abs2(m: &Mat2) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

impl ScsPovm {
    pub const COMPLETENESS_TOL: f64 = 1e-6;
    pub const PSD_FLOOR: f64 = 1e-9;

    pub fn new(pi0: Mat2, pi1: Mat2) -> Result<Self> {
        let p = Self { pi0, pi1 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let defect = max_abs2(&(self.pi0 + self.pi1 - Mat2::identity()));
        if defect > Self::COMPLETENESS_TOL {
            return Err(Error::InvalidParameter(format!(
                "SCS-basis POVM incomplete: defect {defect:.3e}"
            )));
        }
        let min = eig2(&self.pi0).0.min().min(eig2(&self.pi1).0.min());
        if min < -Self::PSD_FLOOR {
            return Err(Error::InvalidParameter(format!(
                "SCS-basis POVM element has eigenvalue {min:.3e}"
            )));
        }
        Ok(())
    }

    /// Projects a Fock-space POVM onto the cat basis of amplitude `alpha`.
    pub fn from_pair(p: &PovmPair, alpha: f64) -> Result<Self> {
        Ok(Self {
            pi0: scs_basis_project(p.pi0(), alpha)?,
            pi1: scs_basis_project(p.pi1(), alpha)?,
        })
    }

    pub fn element(&self, j: usize) -> &Mat2 {
        if j == 0 {
            &self.pi0
        } else {
            &self.pi1
        }
    }

    /// Measurement fidelity against the target projection, with the target
    /// vectors written in the cat basis.
    pub fn fidelity(&self, spec: &ScsMeasurementSpec) -> f64 {
        let [a0, b0, a1, b1] = crate::fock::scs_coefficients(spec);
        let v0 = Vector2::new(a0, b0);
        let v1 = Vector2::new(a1, b1);
        let q = |v: &Vector2<C64>, m: &Mat2| v.dotc(&(m * v)).re;
        0.5 * (q(&v0, &self.pi0) + q(&v1, &self.pi1))
    }

    /// Outcome-averaged normalized Uhlmann fidelity between two POVMs; 1 iff
    /// every pair of elements is proportional.
    pub fn similarity(&self, other: &ScsPovm) -> f64 {
        0.5 * (operator_fidelity2(&self.pi0, &other.pi0) + operator_fidelity2(&self.pi1, &other.pi1))
    }

    pub fn max_abs_diff(&self, other: &ScsPovm) -> f64 {
        max_abs2(&(self.pi0 - other.pi0)).max(max_abs2(&(self.pi1 - other.pi1)))
    }
}

fn operator_fidelity2(a: &Mat2, b: &Mat2) -> f64 {
    let ta = a.trace().re;
    let tb = b.trace().re;
    if ta <= 0.0 || tb <= 0.0 {
        return if ta <= 0.0 && tb <= 0.0 { 1.0 } else { 0.0 };
    }
    let sa = map2(a, |v| v.max(0.0).sqrt());
    let inner = sa * b * sa;
    let tr: f64 = eig2(&inner).0.iter().map(|v| v.max(0.0).sqrt()).sum();
    (tr * tr / (ta * tb)).min(1.0)
}

/// `M_kl = ⟨C_k|Π|C_l⟩` for `k, l ∈ {+, −}`.
pub fn scs_basis_project(op: &FockOperator, alpha: f64) -> Result<Mat2> {
    let cat = cat_basis(alpha, op.dim())?;
    let basis = [&cat.plus, &cat.minus];
    let mut m = Mat2::zeros();
    for (k, bk) in basis.iter().enumerate() {
        let col = op.entries() * bk.amps();
        for (l, bl) in basis.iter().enumerate() {
            // ⟨C_l|Π|C_k⟩ lands in (l, k)
            m[(l, k)] = bl.amps().dotc(&col);
        }
    }
    Ok(m)
}

/// Normalized rate difference `f_k = (p(+iγ_k) − p(−iγ_k)) / (2e^{−γ_k²})` per
/// outcome.
pub fn f_statistic(clicks: &ClickTable, probes: &ProbeSet) -> Result<[Vec<f64>; 2]> {
    probes.validate()?;
    let mut out = [Vec::with_capacity(probes.k()), Vec::with_capacity(probes.k())];
    for (k, &g) in probes.gammas.iter().enumerate() {
        let plus = clicks.row(&format!("igamma+{}", k + 1))?;
        let minus = clicks.row(&format!("igamma-{}", k + 1))?;
        for (row, want) in [(plus, c(0.0, g)), (minus, c(0.0, -g))] {
            if (row.amplitude - want).norm() > 1e-9 {
                return Err(Error::Ingestion(format!(
                    "probe {} has amplitude {} but the probe set expects {}",
                    row.label, row.amplitude, want
                )));
            }
        }
        let rp = plus.rates()?;
        let rm = minus.rates()?;
        let norm = 2.0 * (-g * g).exp();
        for j in 0..2 {
            out[j].push((rp[j] - rm[j]) / norm);
        }
    }
    Ok(out)
}

/// `Γ_{k,c} = (−1)^c γ_k^{2c−1}` for `c = 1..=K`, so that `f = ΓΦ`.
pub fn gamma_matrix(probes: &ProbeSet) -> Result<DMatrix<f64>> {
    probes.validate()?;
    let k = probes.k();
    Ok(DMatrix::from_fn(k, k, |row, col| {
        let cidx = col + 1;
        let sign = if cidx % 2 == 0 { 1.0 } else { -1.0 };
        sign * probes.gammas[row].powi(2 * cidx as i32 - 1)
    }))
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SolveDiagnostics {
    pub iterations: usize,
    pub residual_norm: f64,
    pub projected_gradient_norm: f64,
    pub active_bounds: usize,
}

/// `min ‖f − ΓΦ‖₂` subject to `|Φ_l| ≤ B_l`.
///
/// Projected gradient with exact line search, alternated with an exact solve
/// on the currently free coordinates so that the ill-conditioned small-`γ`
/// systems converge in a handful of steps.
pub fn solve_phi(f: &[f64], probes: &ProbeSet) -> Result<PhiVector> {
    solve_phi_detailed(f, probes).map(|(p, _)| p)
}

pub fn solve_phi_detailed(f: &[f64], probes: &ProbeSet) -> Result<(PhiVector, SolveDiagnostics)> {
    let g = gamma_matrix(probes)?;
    let bound: Vec<f64> = (0..probes.k()).map(|c| phi_bound(2 * c + 1)).collect();
    let (values, diag) = bounded_least_squares(&g, f, &bound, "solve_phi")?;
    Ok((PhiVector { values }, diag))
}

/// `min ‖f − Gx‖₂` subject to `|x_i| ≤ bound_i`.
fn bounded_least_squares(
    g: &DMatrix<f64>,
    f: &[f64],
    bound: &[f64],
    stage: &'static str,
) -> Result<(Vec<f64>, SolveDiagnostics)> {
    let k = g.ncols();
    if f.len() != g.nrows() {
        return Err(Error::DimensionMismatch {
            left: f.len(),
            right: g.nrows(),
        });
    }
    let f = DVector::from_column_slice(f);
    let bound = DVector::from_column_slice(bound);
    let project = |x: &DVector<f64>| DVector::from_fn(k, |i, _| x[i].clamp(-bound[i], bound[i]));
    let objective = |x: &DVector<f64>| (g * x - &f).norm_squared();
    let gradient = |x: &DVector<f64>| g.transpose() * (g * x - &f);
    let at_lower = |x: &DVector<f64>, i: usize| x[i] <= -bound[i];
    let at_upper = |x: &DVector<f64>, i: usize| x[i] >= bound[i];
    // gradient components that could still move the point
    let projected_gradient = |x: &DVector<f64>, gr: &DVector<f64>| {
        DVector::from_fn(k, |i, _| {
            if (at_lower(x, i) && gr[i] > 0.0) || (at_upper(x, i) && gr[i] < 0.0) {
                0.0
            } else {
                gr[i]
            }
        })
    };

    let mut x = DVector::<f64>::zeros(k);
    let mut iterations = 0;
    loop {
        let gr = gradient(&x);
        let pg = projected_gradient(&x, &gr);
        if pg.norm() <= PHI_GRAD_TOL {
            break;
        }
        if iterations >= PHI_MAX_ITERS {
            return Err(Error::NonConvergence {
                stage,
                iterations,
                residual: pg.norm(),
            });
        }
        iterations += 1;

        // projected gradient step, exact line search along the feasible direction
        let gpg = g * &pg;
        let curv = gpg.norm_squared();
        let mut step = if curv > 0.0 { pg.norm_squared() / curv } else { 1.0 };
        let f0 = objective(&x);
        let mut cand = project(&(&x - &pg * step));
        while objective(&cand) > f0 && step > 1e-300 {
            step *= 0.5;
            cand = project(&(&x - &pg * step));
        }
        if objective(&cand) <= f0 {
            x = cand;
        }

        // exact least squares on the free coordinates, then a ratio test
        let free: Vec<usize> = (0..k)
            .filter(|&i| !(at_lower(&x, i) || at_upper(&x, i)))
            .collect();
        if free.is_empty() {
            continue;
        }
        let mut rhs = f.clone();
        for i in 0..k {
            if !free.contains(&i) {
                rhs -= g.column(i) * x[i];
            }
        }
        let gf = DMatrix::from_fn(g.nrows(), free.len(), |r, cidx| g[(r, free[cidx])]);
        let svd = gf.svd(true, true);
        let Ok(sol) = svd.solve(&rhs, 1e-300) else {
            continue;
        };
        let mut t_max: f64 = 1.0;
        for (ci, &i) in free.iter().enumerate() {
            let d = sol[ci] - x[i];
            if d > 0.0 {
                t_max = t_max.min((bound[i] - x[i]) / d);
            } else if d < 0.0 {
                t_max = t_max.min((-bound[i] - x[i]) / d);
            }
        }
        let mut trial = x.clone();
        for (ci, &i) in free.iter().enumerate() {
            trial[i] = if t_max >= 1.0 {
                sol[ci]
            } else {
                x[i] + t_max * (sol[ci] - x[i])
            };
        }
        let trial = project(&trial);
        if objective(&trial) <= objective(&x) {
            x = trial;
        }
    }
    let gr = gradient(&x);
    let diag = SolveDiagnostics {
        iterations,
        residual_norm: (g * &x - &f).norm(),
        projected_gradient_norm: projected_gradient(&x, &gr).norm(),
        active_bounds: (0..k).filter(|&i| at_lower(&x, i) || at_upper(&x, i)).count(),
    };
    Ok((x.iter().copied().collect(), diag))
}

/// `Φ_l = −2 Σ_{m<n, m+n=l} (−1)ⁿ Im θ_mn / √(m! n!)` for odd `l ≤ 2K−1`,
/// computed directly from the Fock entries `θ_mn = ⟨m|Π|n⟩`.
pub fn phi_from_operator(op: &FockOperator, k: usize) -> PhiVector {
    let n_max = op.dim().n_max();
    let lf = ln_factorials(2 * k + n_max);
    let values = (0..k)
        .map(|cidx| {
            let l = 2 * cidx + 1;
            let mut s = 0.0;
            for m in 0..=l / 2 {
                let n = l - m;
                if n > n_max {
                    continue;
                }
                let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
                s += sign * op.entry(m, n).im * (-0.5 * (lf[m] + lf[n])).exp();
            }
            -2.0 * s
        })
        .collect();
    PhiVector { values }
}

/// Cross term `i(⟨α|Π|−α⟩ − ⟨−α|Π|α⟩) = 2e^{−α²} Σ_l α^l Φ_l`.
pub fn cross_term(phi: &PhiVector, alpha: f64) -> f64 {
    let s: f64 = phi
        .values
        .iter()
        .enumerate()
        .map(|(cidx, v)| alpha.powi(2 * cidx as i32 + 1) * v)
        .sum();
    2.0 * (-alpha * alpha).exp() * s
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ImaginaryExpectation {
    /// `⟨φ_Im^+|Π|φ_Im^+⟩` after clamping to `[0, 1]`.
    pub plus: f64,
    pub minus: f64,
    pub plus_raw: f64,
    pub minus_raw: f64,
}

impl ImaginaryExpectation {
    pub fn clamped(&self) -> bool {
        self.plus != self.plus_raw || self.minus != self.minus_raw
    }
}

/// `⟨φ_Im^±|Π|φ_Im^±⟩ = (⟨α|Π|α⟩ + ⟨−α|Π|−α⟩ ± cross) / 2`, from measured
/// real-axis expectations `(⟨α|Π|α⟩, ⟨−α|Π|−α⟩)`.
pub fn imaginary_probe_expectation(
    phi: &PhiVector,
    alpha: f64,
    real_probe_expectations: (f64, f64),
) -> ImaginaryExpectation {
    let base = real_probe_expectations.0 + real_probe_expectations.1;
    let cross = cross_term(phi, alpha);
    let plus_raw = 0.5 * (base + cross);
    let minus_raw = 0.5 * (base - cross);
    ImaginaryExpectation {
        plus: plus_raw.clamp(0.0, 1.0),
        minus: minus_raw.clamp(0.0, 1.0),
        plus_raw,
        minus_raw,
    }
}

/// `Ψ_l = Σ_{m+n=l} (−1)ⁿ Re θ_mn / √(m! n!)` for even `l = 0, 2, ..., 2K−2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsiVector {
    pub values: Vec<f64>,
}

impl PsiVector {
    pub fn order(&self, c: usize) -> usize {
        2 * c
    }

    pub fn within_bounds(&self, tol: f64) -> bool {
        self.values
            .iter()
            .enumerate()
            .all(|(c, v)| v.abs() <= psi_bound(2 * c) + tol)
    }
}

/// `Σ_{m=0}^{l} 1/√(m!(l−m)!)`, the bound on `|Ψ_l|` implied by `|θ_mn| ≤ 1`.
pub fn psi_bound(l: usize) -> f64 {
    let lf = ln_factorials(l);
    (0..=l).map(|m| (-0.5 * (lf[m] + lf[l - m])).exp()).sum()
}

/// Normalized rate sum `s_k = (p(+iγ_k) + p(−iγ_k)) / (2e^{−γ_k²})` per
/// outcome; `s = Γ_even Ψ`.
pub fn s_statistic(clicks: &ClickTable, probes: &ProbeSet) -> Result<[Vec<f64>; 2]> {
    // reuse the amplitude checks of the difference statistic
    f_statistic(clicks, probes)?;
    let mut out = [Vec::with_capacity(probes.k()), Vec::with_capacity(probes.k())];
    for (k, &g) in probes.gammas.iter().enumerate() {
        let rp = clicks.row(&format!("igamma+{}", k + 1))?.rates()?;
        let rm = clicks.row(&format!("igamma-{}", k + 1))?.rates()?;
        let norm = 2.0 * (-g * g).exp();
        for j in 0..2 {
            out[j].push((rp[j] + rm[j]) / norm);
        }
    }
    Ok(out)
}

/// `Γ_{k,c} = (−γ_k²)^c` for `c = 0..K`.
pub fn even_gamma_matrix(probes: &ProbeSet) -> Result<DMatrix<f64>> {
    probes.validate()?;
    let k = probes.k();
    Ok(DMatrix::from_fn(k, k, |row, col| {
        (-probes.gammas[row] * probes.gammas[row]).powi(col as i32)
    }))
}

pub fn solve_psi_detailed(s: &[f64], probes: &ProbeSet) -> Result<(PsiVector, SolveDiagnostics)> {
    let g = even_gamma_matrix(probes)?;
    let bound: Vec<f64> = (0..probes.k()).map(|c| psi_bound(2 * c)).collect();
    let (values, diag) = bounded_least_squares(&g, s, &bound, "solve_psi")?;
    Ok((PsiVector { values }, diag))
}

/// `Ψ_l` for even `l ≤ 2K−2` straight from the Fock entries.
pub fn psi_from_operator(op: &FockOperator, k: usize) -> PsiVector {
    let n_max = op.dim().n_max();
    let lf = ln_factorials(2 * k + n_max);
    let values = (0..k)
        .map(|cidx| {
            let l = 2 * cidx;
            let mut s = 0.0;
            for m in 0..=l {
                let n = l - m;
                if m > n_max || n > n_max {
                    continue;
                }
                let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
                s += sign * op.entry(m, n).re * (-0.5 * (lf[m] + lf[n])).exp();
            }
            s
        })
        .collect();
    PsiVector { values }
}

/// `Re⟨α|Π|−α⟩ = e^{−α²} Σ_l α^l Ψ_l`.
pub fn real_cross_term(psi: &PsiVector, alpha: f64) -> f64 {
    let s: f64 = psi
        .values
        .iter()
        .enumerate()
        .map(|(cidx, v)| alpha.powi(2 * cidx as i32) * v)
        .sum();
    (-alpha * alpha).exp() * s
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct CatExpectation {
    /// `⟨C₊|Π|C₊⟩` after clamping to `[0, 1]`.
    pub plus: f64,
    pub minus: f64,
    pub plus_raw: f64,
    pub minus_raw: f64,
}

impl CatExpectation {
    pub fn clamped(&self) -> bool {
        self.plus != self.plus_raw || self.minus != self.minus_raw
    }
}

/// `⟨C_±|Π|C_±⟩ = (⟨α|Π|α⟩ + ⟨−α|Π|−α⟩ ± 2Re⟨α|Π|−α⟩) / N_±²`.
pub fn cat_probe_expectation(
    psi: &PsiVector,
    alpha: f64,
    real_probe_expectations: (f64, f64),
) -> CatExpectation {
    let base = real_probe_expectations.0 + real_probe_expectations.1;
    let cross = 2.0 * real_cross_term(psi, alpha);
    let overlap = (-2.0 * alpha * alpha).exp();
    let plus_raw = (base + cross) / (2.0 * (1.0 + overlap));
    let minus_raw = (base - cross) / (2.0 * (1.0 - overlap));
    CatExpectation {
        plus: plus_raw.clamp(0.0, 1.0),
        minus: minus_raw.clamp(0.0, 1.0),
        plus_raw,
        minus_raw,
    }
}

/// Density matrices in the cat basis for `|α⟩, |−α⟩, |φ_Im^+⟩, |φ_Im^−⟩`.
pub fn probe_density_matrices(alpha: f64, dim: TruncationDim) -> Result<[Mat2; 4]> {
    let cat = cat_basis(alpha, dim)?;
    let a = cat.norm_plus / 2.0;
    let b = cat.norm_minus / 2.0;
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let vecs = [
        Vector2::new(c(a, 0.0), c(b, 0.0)),
        Vector2::new(c(a, 0.0), c(-b, 0.0)),
        Vector2::new(c(s * a, s * a), c(s * b, -s * b)),
        Vector2::new(c(s * a, -s * a), c(s * b, s * b)),
    ];
    Ok(vecs.map(|v| {
        let v = v / c(v.norm(), 0.0);
        v * v.adjoint()
    }))
}

/// Numerical rank of the probe set as vectors in the 4-dimensional real space
/// of Hermitian 2×2 matrices. Full tomography needs rank 4.
pub fn probe_rank(probes: &[Mat2]) -> usize {
    let m = DMatrix::from_fn(4, probes.len(), |r, col| {
        let p = &probes[col];
        match r {
            0 => p[(0, 0)].re,
            1 => p[(1, 1)].re,
            2 => p[(0, 1)].re,
            _ => p[(0, 1)].im,
        }
    });
    let sv = m.svd(false, false).singular_values;
    let top = sv.max();
    sv.iter().filter(|s| **s > 1e-10 * top.max(1e-300)).count()
}

#[derive(Debug, Clone, Serialize)]
pub struct MleDiagnostics {
    pub iterations: usize,
    pub converged: bool,
    /// Largest entry change in the final iteration.
    pub final_change: f64,
    pub log_likelihood: f64,
    /// Largest drop of the log-likelihood between consecutive iterations.
    pub max_likelihood_decrease: f64,
    /// Largest completeness defect over all iterates.
    pub max_completeness_defect: f64,
}

fn log_likelihood(probes: &[Mat2], freqs: &[[f64; 2]], pis: &[Mat2; 2]) -> f64 {
    let mut l = 0.0;
    for (rho, f) in probes.iter().zip(freqs) {
        for j in 0..2 {
            if f[j] > 0.0 {
                let p = (rho * pis[j]).trace().re.max(MLE_PROB_FLOOR);
                l += f[j] * p.ln();
            }
        }
    }
    l
}

/// One R–λ update, optionally with `R_j` diluted to `(I + εR_j)/(1 + ε)`.
/// Directions the data never reach have no likelihood gradient; the iterate
/// is kept there instead of collapsing to zero.
fn rlambda_step(r: &[Mat2; 2], pis: &[Mat2; 2], dilution: Option<f64>) -> [Mat2; 2] {
    let r: [Mat2; 2] = match dilution {
        None => *r,
        Some(e) => std::array::from_fn(|j| (Mat2::identity() + r[j] * c(e, 0.0)) * c(1.0 / (1.0 + e), 0.0)),
    };
    let rpr: [Mat2; 2] = std::array::from_fn(|j| r[j] * pis[j] * r[j]);
    let lam = rpr[0] + rpr[1];
    let cut = 1e-12 * eig2(&lam).0.max().max(1e-300);
    let lam_inv = map2(&lam, |v| if v > cut { 1.0 / v.sqrt() } else { 0.0 });
    let null = map2(&lam, |v| if v > cut { 0.0 } else { 1.0 });
    std::array::from_fn(|j| herm(&(lam_inv * rpr[j] * lam_inv + null * pis[j] * null)))
}

/// Maximum-likelihood detector reconstruction by the `R`–`λ` fixed point,
/// started from `Π_j = I/2`.
pub fn mle_reconstruct(probes: &[Mat2], freqs: &[[f64; 2]]) -> Result<(ScsPovm, MleDiagnostics)> {
    if probes.len() != freqs.len() {
        return Err(Error::DimensionMismatch {
            left: probes.len(),
            right: freqs.len(),
        });
    }
    for rho in probes {
        let tr = rho.trace();
        if (tr.re - 1.0).abs() > 1e-9 || tr.im.abs() > 1e-9 || eig2(rho).0.min() < -1e-9 {
            return Err(Error::InvalidParameter("probe density matrix is not a state".into()));
        }
    }
    for f in freqs {
        if f.iter().any(|v| !(0.0..=1.0).contains(v)) || (f[0] + f[1] - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidProbability {
                value: if (0.0..=1.0).contains(&f[0]) { f[1] } else { f[0] },
            });
        }
    }
    let half = Mat2::identity() * c(0.5, 0.0);
    let mut pis = [half, half];
    let mut ll = log_likelihood(probes, freqs, &pis);
    let mut max_drop: f64 = 0.0;
    let mut max_defect: f64 = 0.0;
    let mut change = f64::INFINITY;
    let mut iterations = 0;
    while iterations < MLE_MAX_ITERS {
        iterations += 1;
        let r: [Mat2; 2] = std::array::from_fn(|j| {
            probes.iter().zip(freqs).fold(Mat2::zeros(), |acc, (rho, f)| {
                let p = (rho * pis[j]).trace().re.max(MLE_PROB_FLOOR);
                acc + rho * c(f[j] / p, 0.0)
            })
        });
        // Plain R–λ step first; if it lowers the likelihood, dilute R toward
        // the identity until it does not.
        let mut next = rlambda_step(&r, &pis, None);
        let mut new_ll = log_likelihood(probes, freqs, &next);
        let mut eps = 1.0;
        while new_ll < ll - MLE_LL_TOL && eps > MLE_MIN_DILUTION {
            next = rlambda_step(&r, &pis, Some(eps));
            new_ll = log_likelihood(probes, freqs, &next);
            eps *= 0.5;
        }
        change = max_abs2(&(next[0] - pis[0])).max(max_abs2(&(next[1] - pis[1])));
        pis = next;
        max_defect = max_defect.max(max_abs2(&(pis[0] + pis[1] - Mat2::identity())));
        max_drop = max_drop.max(ll - new_ll);
        ll = new_ll;
        if change < MLE_TOL {
            break;
        }
    }
    let povm = ScsPovm::new(pis[0], pis[1])?;
    Ok((
        povm,
        MleDiagnostics {
            iterations,
            converged: change < MLE_TOL,
            final_change: change,
            log_likelihood: ll,
            max_likelihood_decrease: max_drop,
            max_completeness_defect: max_defect,
        },
    ))
}

/// Which probe statistics the likelihood fit sees.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProbeScheme {
    /// `|±α⟩` and the synthetic `|φ_Im^±⟩` only. These span three of the
    /// four Hermitian directions, so the cat-basis population imbalance is
    /// left to the fit's starting point.
    #[default]
    FourProbe,
    /// Adds synthetic `|C_±⟩` statistics built from the `±iγ_k` rate sums,
    /// which makes the fit informationally complete.
    SixProbe,
}

#[derive(Debug, Clone, Serialize)]
pub struct PipelineDiagnostics {
    pub scheme: ProbeScheme,
    /// Rank of the fit's probes as Hermitian 2×2 matrices (4 means
    /// informationally complete; the four-probe set has rank 3).
    pub probe_rank: usize,
    pub expectation_clamped: bool,
    pub solve: [SolveDiagnostics; 2],
    pub solve_even: Option<[SolveDiagnostics; 2]>,
    pub mle: MleDiagnostics,
}

/// Every intermediate of one reconstruction.
#[derive(Debug, Clone, Serialize)]
pub struct TomographyRun {
    pub probes: ProbeSet,
    pub n_max: usize,
    pub clicks: ClickTable,
    pub real_probe_rates: [[f64; 2]; 2],
    pub f: [Vec<f64>; 2],
    pub phi: [PhiVector; 2],
    pub imaginary_expectations: [ImaginaryExpectation; 2],
    pub s: Option<[Vec<f64>; 2]>,
    pub psi: Option<[PsiVector; 2]>,
    pub cat_expectations: Option<[CatExpectation; 2]>,
    /// Frequencies handed to the likelihood fit, rows `α, −α, φ_Im^+, φ_Im^−`
    /// and then `C₊, C₋` for the six-probe scheme.
    pub mle_frequencies: Vec<[f64; 2]>,
    pub povm: ScsPovm,
    pub diagnostics: PipelineDiagnostics,
}

/// Clicks → `f` → `Φ` → synthetic `|φ_Im^±⟩` statistics → likelihood fit,
/// with the default [`ProbeScheme`].
pub fn tomography_pipeline(
    clicks: &ClickTable,
    probes: &ProbeSet,
    dim: TruncationDim,
) -> Result<TomographyRun> {
    tomography_pipeline_with(clicks, probes, dim, ProbeScheme::default())
}

pub fn tomography_pipeline_with(
    clicks: &ClickTable,
    probes: &ProbeSet,
    dim: TruncationDim,
    scheme: ProbeScheme,
) -> Result<TomographyRun> {
    probes.validate()?;
    clicks.validate()?;
    let ra = clicks.row("alpha+")?.rates()?;
    let rm = clicks.row("alpha-")?.rates()?;
    let f = f_statistic(clicks, probes)?;
    let (phi0, s0) = solve_phi_detailed(&f[0], probes)?;
    let (phi1, s1) = solve_phi_detailed(&f[1], probes)?;
    let e0 = imaginary_probe_expectation(&phi0, probes.alpha, (ra[0], rm[0]));
    let e1 = imaginary_probe_expectation(&phi1, probes.alpha, (ra[1], rm[1]));
    // clamping can break the per-probe sum, so renormalize the synthetic rows
    let row = |p0: f64, p1: f64| {
        let s = p0 + p1;
        if s > 0.0 {
            [p0 / s, p1 / s]
        } else {
            [0.5, 0.5]
        }
    };
    let mut freqs = vec![ra, rm, row(e0.plus, e1.plus), row(e0.minus, e1.minus)];
    let mut rhos = probe_density_matrices(probes.alpha, dim)?.to_vec();
    let (mut s_stat, mut psi, mut cats, mut solve_even) = (None, None, None, None);
    if scheme == ProbeScheme::SixProbe {
        let s = s_statistic(clicks, probes)?;
        let (psi0, d0) = solve_psi_detailed(&s[0], probes)?;
        let (psi1, d1) = solve_psi_detailed(&s[1], probes)?;
        let c0 = cat_probe_expectation(&psi0, probes.alpha, (ra[0], rm[0]));
        let c1 = cat_probe_expectation(&psi1, probes.alpha, (ra[1], rm[1]));
        freqs.push(row(c0.plus, c1.plus));
        freqs.push(row(c0.minus, c1.minus));
        let one = c(1.0, 0.0);
        let zero = c(0.0, 0.0);
        rhos.push(Mat2::new(one, zero, zero, zero));
        rhos.push(Mat2::new(zero, zero, zero, one));
        s_stat = Some(s);
        psi = Some([psi0, psi1]);
        cats = Some([c0, c1]);
        solve_even = Some([d0, d1]);
    }
    let (povm, mle) = mle_reconstruct(&rhos, &freqs)?;
    Ok(TomographyRun {
        probes: probes.clone(),
        n_max: dim.n_max(),
        clicks: clicks.clone(),
        real_probe_rates: [ra, rm],
        f,
        phi: [phi0, phi1],
        imaginary_expectations: [e0, e1],
        s: s_stat,
        psi,
        cat_expectations: cats,
        mle_frequencies: freqs,
        povm,
        diagnostics: PipelineDiagnostics {
            scheme,
            probe_rank: probe_rank(&rhos),
            expectation_clamped: e0.clamped()
                || e1.clamped()
                || cats.is_some_and(|c| c[0].clamped() || c[1].clamped()),
            solve: [s0, s1],
            solve_even,
            mle,
        },
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct Envelope {
    pub name: String,
    pub central: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Envelope {
    pub fn from_values(name: impl Into<String>, central: f64, values: &[f64]) -> Self {
        let lo = values.iter().copied().fold(central, f64::min);
        let hi = values.iter().copied().fold(central, f64::max);
        Self {
            name: name.into(),
            central,
            lo,
            hi,
        }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Systematic envelopes from re-running the pipeline with the probe
/// amplitude shifted to `α ± σ`.
#[derive(Debug, Clone, Serialize)]
pub struct ErrorBars {
    pub alpha_sigma: f64,
    /// `[α − σ, α + σ]`
    pub alphas: [f64; 2],
    #[serde(skip)]
    pub shifted: [ScsPovm; 2],
    pub entries: Vec<Envelope>,
}

pub fn error_bars(run: &TomographyRun, alpha_sigma: f64) -> Result<ErrorBars> {
    if !(alpha_sigma.is_finite() && alpha_sigma >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "alpha_sigma must be non-negative, got {alpha_sigma}"
        )));
    }
    let dim = TruncationDim::new(run.n_max)?;
    let alpha = run.probes.alpha;
    let alphas = [alpha - alpha_sigma, alpha + alpha_sigma];
    let mut shifted = Vec::with_capacity(2);
    for a in alphas {
        let probes = run.probes.with_alpha(a)?;
        shifted.push(tomography_pipeline_with(&run.clicks, &probes, dim, run.diagnostics.scheme)?.povm);
    }
    let shifted: [ScsPovm; 2] = [shifted[0].clone(), shifted[1].clone()];
    let mut entries = Vec::new();
    for j in 0..2 {
        for (r, cidx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            let pick = |p: &ScsPovm| p.element(j)[(r, cidx)];
            let central = pick(&run.povm);
            let vals: Vec<C64> = shifted.iter().map(pick).collect();
            entries.push(Envelope::from_values(
                format!("pi{j}[{r}{cidx}].re"),
                central.re,
                &vals.iter().map(|z| z.re).collect::<Vec<_>>(),
            ));
            entries.push(Envelope::from_values(
                format!("pi{j}[{r}{cidx}].im"),
                central.im,
                &vals.iter().map(|z| z.im).collect::<Vec<_>>(),
            ));
        }
    }
    Ok(ErrorBars {
        alpha_sigma,
        alphas,
        shifted,
        entries,
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct EntryBoundReport {
    pub passes: bool,
    pub max_abs_entry: f64,
    /// Eigenvalue range of the element; the bound follows from `λ ∈ [0, 1]`.
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    /// `max_ij Σ_k λ_k |u_ik||u_jk|`, the Cauchy–Schwarz majorant of `|θ_ij|`.
    pub cauchy_schwarz_bound: f64,
}

/// Checks `|θ_ij| ≤ 1` for a POVM element via its spectral decomposition
/// `θ_ij = Σ_k λ_k u_ik u_jk*`.
pub fn povm_entry_bound_check(op: &FockOperator) -> EntryBoundReport {
    let (vals, vecs) = crate::linalg::hermitian_eigen(op.entries());
    let n = vals.len();
    let mut cs: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let s: f64 = (0..n)
                .map(|k| vals[k].clamp(0.0, 1.0) * vecs[(i, k)].norm() * vecs[(j, k)].norm())
                .sum();
            cs = cs.max(s);
        }
    }
    let max_abs_entry = op.max_abs_entry();
    EntryBoundReport {
        passes: max_abs_entry <= 1.0 + crate::povm::ENTRY_BOUND_TOL,
        max_abs_entry,
        min_eigenvalue: vals.min(),
        max_eigenvalue: vals.max(),
        cauchy_schwarz_bound: cs,
    }
}
