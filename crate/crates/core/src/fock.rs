//! Truncated Fock-space linear algebra.
//!
//! States are amplitude vectors over `|0⟩..|n_max⟩` and operators are dense
//! `(n_max+1)²` complex matrices. Every operation checks that its operands
//! share a truncation.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

pub type C64 = Complex64;

/// Largest truncated tail mass tolerated by state and displacement constructors.
pub const TAIL_TOL: f64 = 1e-8;

/// Normalization tolerance for constructor-produced states.
pub const NORM_TOL: f64 = 1e-9;

/// Photon-number cutoff. The basis is `|0⟩..|n_max⟩`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct TruncationDim {
    n_max: usize,
}

impl TruncationDim {
    pub const DEFAULT_N_MAX: usize = 20;

    pub fn new(n_max: usize) -> Result<Self> {
        if n_max < 1 {
            return Err(Error::InvalidParameter(format!(
                "n_max must be at least 1, got {n_max}"
            )));
        }
        Ok(Self { n_max })
    }

    pub fn n_max(self) -> usize {
        self.n_max
    }

    /// Hilbert-space dimension `n_max + 1`.
    pub fn size(self) -> usize {
        self.n_max + 1
    }

    pub(crate) fn check(self, other: TruncationDim) -> Result<()> {
        if self != other {
            return Err(Error::DimensionMismatch {
                left: self.size(),
                right: other.size(),
            });
        }
        Ok(())
    }
}

impl Default for TruncationDim {
    fn default() -> Self {
        Self {
            n_max: Self::DEFAULT_N_MAX,
        }
    }
}

impl TryFrom<usize> for TruncationDim {
    type Error = Error;
    fn try_from(n_max: usize) -> Result<Self> {
        Self::new(n_max)
    }
}

impl From<TruncationDim> for usize {
    fn from(d: TruncationDim) -> usize {
        d.n_max
    }
}

/// `ln k!` for `k = 0..=n`, accumulated in floating point.
pub fn ln_factorials(n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for k in 1..=n {
        acc += (k as f64).ln();
        out.push(acc);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    dim: TruncationDim,
    amps: DVector<C64>,
}

impl StateVector {
    pub fn from_amplitudes(dim: TruncationDim, amps: Vec<C64>) -> Result<Self> {
        if amps.len() != dim.size() {
            return Err(Error::DimensionMismatch {
                left: dim.size(),
                right: amps.len(),
            });
        }
        Ok(Self {
            dim,
            amps: DVector::from_vec(amps),
        })
    }

    pub(crate) fn from_dvector(dim: TruncationDim, amps: DVector<C64>) -> Self {
        debug_assert_eq!(amps.len(), dim.size());
        Self { dim, amps }
    }

    pub fn dim(&self) -> TruncationDim {
        self.dim
    }

    pub fn amps(&self) -> &DVector<C64> {
        &self.amps
    }

    pub fn amp(&self, n: usize) -> C64 {
        self.amps[n]
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn is_normalized(&self, tol: f64) -> bool {
        (self.norm_sqr() - 1.0).abs() <= tol
    }

    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm_sqr().sqrt();
        if n == 0.0 {
            return Err(Error::InvalidParameter("cannot normalize zero vector".into()));
        }
        Ok(self.scaled(C64::new(1.0 / n, 0.0)))
    }

    pub fn scaled(&self, s: C64) -> Self {
        Self {
            dim: self.dim,
            amps: &self.amps * s,
        }
    }

    pub fn add(&self, other: &StateVector) -> Result<Self> {
        self.dim.check(other.dim)?;
        Ok(Self {
            dim: self.dim,
            amps: &self.amps + &other.amps,
        })
    }

    /// Rotates the global phase so the lowest-index nonzero amplitude is real positive.
    pub fn with_canonical_phase(&self) -> Self {
        match self.amps.iter().find(|c| c.norm() > 0.0) {
            Some(c) => self.scaled(c.conj() / c.norm()),
            None => self.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FockOperator {
    dim: TruncationDim,
    entries: DMatrix<C64>,
}

impl FockOperator {
    pub fn from_matrix(dim: TruncationDim, entries: DMatrix<C64>) -> Result<Self> {
        if entries.nrows() != dim.size() || entries.ncols() != dim.size() {
            return Err(Error::DimensionMismatch {
                left: dim.size(),
                right: entries.nrows().max(entries.ncols()),
            });
        }
        Ok(Self { dim, entries })
    }

    pub fn identity(dim: TruncationDim) -> Self {
        Self {
            dim,
            entries: DMatrix::identity(dim.size(), dim.size()),
        }
    }

    pub fn zeros(dim: TruncationDim) -> Self {
        Self {
            dim,
            entries: DMatrix::zeros(dim.size(), dim.size()),
        }
    }

    /// `|v⟩⟨v|`
    pub fn projector(v: &StateVector) -> Self {
        Self {
            dim: v.dim,
            entries: &v.amps * v.amps.adjoint(),
        }
    }

    /// Diagonal operator `Σ_n d_n |n⟩⟨n|`.
    pub fn diagonal(dim: TruncationDim, diag: impl Fn(usize) -> f64) -> Self {
        let mut entries = DMatrix::zeros(dim.size(), dim.size());
        for n in 0..dim.size() {
            entries[(n, n)] = C64::new(diag(n), 0.0);
        }
        Self { dim, entries }
    }

    pub fn dim(&self) -> TruncationDim {
        self.dim
    }

    pub fn entries(&self) -> &DMatrix<C64> {
        &self.entries
    }

    pub fn into_entries(self) -> DMatrix<C64> {
        self.entries
    }

    pub fn entry(&self, m: usize, n: usize) -> C64 {
        self.entries[(m, n)]
    }

    pub fn adjoint(&self) -> Self {
        Self {
            dim: self.dim,
            entries: self.entries.adjoint(),
        }
    }

    pub fn mul(&self, other: &FockOperator) -> Result<Self> {
        self.dim.check(other.dim)?;
        Ok(Self {
            dim: self.dim,
            entries: &self.entries * &other.entries,
        })
    }

    pub fn add(&self, other: &FockOperator) -> Result<Self> {
        self.dim.check(other.dim)?;
        Ok(Self {
            dim: self.dim,
            entries: &self.entries + &other.entries,
        })
    }

    pub fn sub(&self, other: &FockOperator) -> Result<Self> {
        self.dim.check(other.dim)?;
        Ok(Self {
            dim: self.dim,
            entries: &self.entries - &other.entries,
        })
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            dim: self.dim,
            entries: &self.entries * C64::new(s, 0.0),
        }
    }

    /// `I - self`
    pub fn complement(&self) -> Self {
        Self::identity(self.dim).sub(self).expect("same dim")
    }

    pub fn apply(&self, v: &StateVector) -> Result<StateVector> {
        self.dim.check(v.dim)?;
        Ok(StateVector::from_dvector(self.dim, &self.entries * &v.amps))
    }

    /// `(A + A†)/2`
    pub fn hermitian_part(&self) -> Self {
        Self {
            dim: self.dim,
            entries: linalg::hermitian_part(&self.entries),
        }
    }

    pub fn max_abs_entry(&self) -> f64 {
        self.entries.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &FockOperator) -> Result<f64> {
        self.dim.check(other.dim)?;
        Ok(linalg::max_abs_diff(&self.entries, &other.entries))
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        linalg::hermiticity_defect(&self.entries) <= tol
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> f64 {
        linalg::hermitian_eigen(&self.entries)
            .0
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_eigenvalue(&self) -> f64 {
        linalg::hermitian_eigen(&self.entries)
            .0
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_positive_semidefinite(&self, tol: f64) -> bool {
        self.is_hermitian(tol.max(1e-10)) && self.min_eigenvalue() >= -tol
    }
}

/// Target SCS projection measurement `{α, c₀, c₁, φ}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScsMeasurementSpec {
    pub alpha: f64,
    pub c0: f64,
    pub c1: f64,
    pub phi: f64,
}

impl ScsMeasurementSpec {
    pub fn new(alpha: f64, c0: f64, c1: f64, phi: f64) -> Result<Self> {
        let s = Self { alpha, c0, c1, phi };
        s.validate()?;
        Ok(s)
    }

    /// Builds the spec from `c₀²`, taking both coefficients non-negative.
    pub fn from_c0_squared(alpha: f64, c0_sq: f64, phi: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&c0_sq) {
            return Err(Error::InvalidParameter(format!(
                "c0^2 must lie in [0, 1], got {c0_sq}"
            )));
        }
        Self::new(alpha, c0_sq.sqrt(), (1.0 - c0_sq).sqrt(), phi)
    }

    pub fn c0_squared(&self) -> f64 {
        self.c0 * self.c0
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha must be positive, got {}",
                self.alpha
            )));
        }
        if self.c0 < 0.0 || self.c1 < 0.0 {
            return Err(Error::InvalidParameter(
                "c0 and c1 must be non-negative".into(),
            ));
        }
        let s = self.c0 * self.c0 + self.c1 * self.c1;
        if (s - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "c0^2 + c1^2 = {s}, expected 1"
            )));
        }
        if !self.phi.is_finite() {
            return Err(Error::InvalidParameter("phi must be finite".into()));
        }
        Ok(())
    }
}

/// Coherent-state amplitudes `e^{-|α|²/2} αⁿ/√n!`, returned together with the
/// probability mass beyond `n_max`.
fn coherent_amplitudes(alpha: C64, dim: TruncationDim) -> (Vec<C64>, f64) {
    let mut amps = Vec::with_capacity(dim.size());
    let mut c = C64::new((-alpha.norm_sqr() / 2.0).exp(), 0.0);
    amps.push(c);
    for n in 1..dim.size() {
        c = c * alpha / (n as f64).sqrt();
        amps.push(c);
    }
    // the tail is summed forward rather than taken as 1 - Σ to avoid cancellation
    let mut tail = 0.0;
    let mut n = dim.size();
    let peak = alpha.norm_sqr();
    loop {
        c = c * alpha / (n as f64).sqrt();
        let t = c.norm_sqr();
        tail += t;
        if (n as f64 > peak && t < 1e-30 * tail.max(1e-300)) || t == 0.0 || n > dim.size() + 2000 {
            break;
        }
        n += 1;
    }
    (amps, tail)
}

/// Probability mass of `|β⟩` beyond `n_max`; depends only on `|β|`.
pub fn coherent_tail(radius: f64, dim: TruncationDim) -> f64 {
    coherent_amplitudes(C64::new(radius, 0.0), dim).1
}

/// Largest `|β|` whose coherent tail stays within [`TAIL_TOL`], i.e. the
/// largest displacement [`displacement_operator`] accepts.
pub fn admissible_radius(dim: TruncationDim) -> f64 {
    let mut lo = 0.0;
    let mut hi = 1.0;
    while coherent_tail(hi, dim) <= TAIL_TOL {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if coherent_tail(mid, dim) <= TAIL_TOL {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

pub fn coherent_state(alpha: C64, dim: TruncationDim) -> Result<StateVector> {
    if !(alpha.re.is_finite() && alpha.im.is_finite()) {
        return Err(Error::InvalidParameter("non-finite amplitude".into()));
    }
    let (amps, tail) = coherent_amplitudes(alpha, dim);
    if tail > TAIL_TOL {
        return Err(Error::CutoffTooSmall {
            what: "coherent state",
            defect: tail,
            tol: TAIL_TOL,
        });
    }
    StateVector::from_amplitudes(dim, amps)?.normalized()
}

pub fn number_state(n: usize, dim: TruncationDim) -> Result<StateVector> {
    if n > dim.n_max() {
        return Err(Error::OutOfRange {
            n,
            n_max: dim.n_max(),
        });
    }
    let mut amps = vec![C64::new(0.0, 0.0); dim.size()];
    amps[n] = C64::new(1.0, 0.0);
    StateVector::from_amplitudes(dim, amps)
}

/// The even/odd cat basis `|C±⟩ = (|α⟩ ± |−α⟩)/N±`.
#[derive(Debug, Clone)]
pub struct CatBasis {
    pub plus: StateVector,
    pub minus: StateVector,
    /// `N₊`, from the truncated amplitudes.
    pub norm_plus: f64,
    /// `N₋`, from the truncated amplitudes.
    pub norm_minus: f64,
}

pub fn cat_basis(alpha: f64, dim: TruncationDim) -> Result<CatBasis> {
    if !(alpha.is_finite() && alpha != 0.0) {
        return Err(Error::InvalidParameter(format!(
            "cat basis needs a nonzero amplitude, got {alpha}"
        )));
    }
    let coh = coherent_state(C64::new(alpha, 0.0), dim)?;
    let zero = C64::new(0.0, 0.0);
    // ⟨n|−α⟩ = (−1)ⁿ⟨n|α⟩, so parity zeros are set exactly
    let even: Vec<C64> = (0..dim.size())
        .map(|n| if n % 2 == 0 { coh.amp(n) * 2.0 } else { zero })
        .collect();
    let odd: Vec<C64> = (0..dim.size())
        .map(|n| if n % 2 == 1 { coh.amp(n) * 2.0 } else { zero })
        .collect();
    let even = StateVector::from_amplitudes(dim, even)?;
    let odd = StateVector::from_amplitudes(dim, odd)?;
    let norm_plus = even.norm_sqr().sqrt();
    let norm_minus = odd.norm_sqr().sqrt();
    Ok(CatBasis {
        plus: even.normalized()?.with_canonical_phase(),
        minus: odd.normalized()?.with_canonical_phase(),
        norm_plus,
        norm_minus,
    })
}

/// `|π₀⟩ = c₀|C₊⟩ + c₁e^{iφ}|C₋⟩` and `|π₁⟩ = c₁e^{−iφ}|C₊⟩ − c₀|C₋⟩`.
pub fn scs_projectors(
    spec: &ScsMeasurementSpec,
    dim: TruncationDim,
) -> Result<(StateVector, StateVector)> {
    spec.validate()?;
    let cat = cat_basis(spec.alpha, dim)?;
    Ok(scs_projectors_in(spec, &cat))
}

pub(crate) fn scs_projectors_in(
    spec: &ScsMeasurementSpec,
    cat: &CatBasis,
) -> (StateVector, StateVector) {
    let [a0, b0, a1, b1] = scs_coefficients(spec);
    let pi0 = cat
        .plus
        .scaled(a0)
        .add(&cat.minus.scaled(b0))
        .expect("same dim");
    let pi1 = cat
        .plus
        .scaled(a1)
        .add(&cat.minus.scaled(b1))
        .expect("same dim");
    (pi0, pi1)
}

/// Coordinates of `|π₀⟩, |π₁⟩` in the `{|C₊⟩, |C₋⟩}` basis, flattened as
/// `[π₀₊, π₀₋, π₁₊, π₁₋]`.
pub fn scs_coefficients(spec: &ScsMeasurementSpec) -> [C64; 4] {
    let e = C64::from_polar(1.0, spec.phi);
    [
        C64::new(spec.c0, 0.0),
        e * spec.c1,
        e.conj() * spec.c1,
        C64::new(-spec.c0, 0.0),
    ]
}

/// Generalized Laguerre polynomials `L_k^{(a)}(x)` for `k = 0..=k_max`.
pub(crate) fn laguerre_series(k_max: usize, a: f64, x: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(k_max + 1);
    out.push(1.0);
    if k_max == 0 {
        return out;
    }
    out.push(1.0 + a - x);
    for k in 1..k_max {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0 + a - x) * out[k] - (kf + a) * out[k - 1]) / (kf + 1.0);
        out.push(next);
    }
    out
}

/// Displacement operator from its closed-form matrix elements
///
/// `⟨m|D(β)|n⟩ = √(n!/m!) e^{−|β|²/2} β^{m−n} L_n^{(m−n)}(|β|²)` for `m ≥ n`,
/// and the mirrored expression with `−β*` above the diagonal.
///
/// The cutoff guard is the vacuum column: the norm lost from `D(β)|0⟩` is the
/// tail mass of `|β⟩`, which must stay below [`TAIL_TOL`].
pub fn displacement_operator(beta: C64, dim: TruncationDim) -> Result<FockOperator> {
    if !(beta.re.is_finite() && beta.im.is_finite()) {
        return Err(Error::InvalidParameter("non-finite displacement".into()));
    }
    let (_, tail) = coherent_amplitudes(beta, dim);
    if tail > TAIL_TOL {
        return Err(Error::CutoffTooSmall {
            what: "displacement operator",
            defect: tail,
            tol: TAIL_TOL,
        });
    }
    Ok(displacement_unchecked(beta, dim))
}

pub(crate) fn displacement_unchecked(beta: C64, dim: TruncationDim) -> FockOperator {
    let size = dim.size();
    let x = beta.norm_sqr();
    let lf = ln_factorials(dim.n_max());
    let pref = (-x / 2.0).exp();
    let mut entries = DMatrix::<C64>::zeros(size, size);
    let neg_conj = -beta.conj();
    // powers of β and −β* up to n_max
    let mut pow_b = vec![C64::new(1.0, 0.0); size];
    let mut pow_nb = vec![C64::new(1.0, 0.0); size];
    for k in 1..size {
        pow_b[k] = pow_b[k - 1] * beta;
        pow_nb[k] = pow_nb[k - 1] * neg_conj;
    }
    for d in 0..size {
        // L_k^{(d)}(x) for k = 0..size-d-1
        let lag = laguerre_series(size - 1 - d, d as f64, x);
        for (k, l) in lag.iter().enumerate() {
            let lo = k;
            let hi = k + d;
            let mag = pref * (0.5 * (lf[lo] - lf[hi])).exp() * l;
            // below diagonal: m = hi, n = lo
            entries[(hi, lo)] = pow_b[d] * mag;
            if d > 0 {
                entries[(lo, hi)] = pow_nb[d] * mag;
            }
        }
    }
    FockOperator { dim, entries }
}

pub fn inner(a: &StateVector, b: &StateVector) -> Result<C64> {
    a.dim.check(b.dim)?;
    Ok(a.amps.dotc(&b.amps))
}

/// `⟨s|Π|s⟩`
pub fn expect(op: &FockOperator, s: &StateVector) -> Result<C64> {
    op.dim.check(s.dim)?;
    Ok(s.amps.dotc(&(&op.entries * &s.amps)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dim(n: usize) -> TruncationDim {
        TruncationDim::new(n).unwrap()
    }

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn truncation_rejects_zero() {
        assert!(TruncationDim::new(0).is_err());
        assert_eq!(TruncationDim::default().n_max(), 20);
    }

    #[test]
    fn vacuum_from_zero_amplitude() {
        let v = coherent_state(c(0.0, 0.0), dim(7)).unwrap();
        assert_eq!(v.amp(0), c(1.0, 0.0));
        assert!(v.amps().iter().skip(1).all(|a| *a == c(0.0, 0.0)));
    }

    #[test]
    fn coherent_vacuum_amplitude_and_norm() {
        let v = coherent_state(c(0.5, 0.0), dim(10)).unwrap();
        // independent closed form e^{-|α|²/2}
        assert!((v.amp(0).re - (-0.125f64).exp()).abs() < 1e-10);
        assert!((v.amp(0).re - 0.88250).abs() < 1e-5);
        assert!((v.norm_sqr() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn coherent_rejects_small_cutoff() {
        let err = coherent_state(c(2.0, 0.0), dim(3)).unwrap_err();
        assert!(matches!(err, Error::CutoffTooSmall { .. }));
    }

    #[test]
    fn number_states() {
        let d = dim(5);
        let v = number_state(3, d).unwrap();
        for n in 0..=5 {
            assert_eq!(v.amp(n).re, if n == 3 { 1.0 } else { 0.0 });
        }
        assert_eq!(number_state(0, d).unwrap().amp(0).re, 1.0);
        assert!(matches!(
            number_state(6, d),
            Err(Error::OutOfRange { n: 6, n_max: 5 })
        ));
        for m in 0..=5 {
            for n in 0..=5 {
                let ip = inner(&number_state(m, d).unwrap(), &number_state(n, d).unwrap()).unwrap();
                assert_eq!(ip.re, if m == n { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn cat_basis_parity_and_orthogonality() {
        let cat = cat_basis(0.5, dim(20)).unwrap();
        for n in 0..=20 {
            if n % 2 == 1 {
                assert_eq!(cat.plus.amp(n), c(0.0, 0.0));
            } else {
                assert_eq!(cat.minus.amp(n), c(0.0, 0.0));
            }
        }
        assert!(inner(&cat.plus, &cat.minus).unwrap().norm() < 1e-12);
        assert!(cat.plus.amp(0).re > 0.0 && cat.plus.amp(0).im == 0.0);
        assert!(cat.minus.amp(1).re > 0.0 && cat.minus.amp(1).im == 0.0);
    }

    #[test]
    fn cat_norm_matches_overlap_series() {
        // oracle: ⟨α|−α⟩ summed term by term from the Fock expansion
        let alpha: f64 = 0.5;
        let mut term = (-alpha * alpha).exp();
        let mut overlap = term;
        for n in 1..60 {
            term *= -alpha * alpha / n as f64;
            overlap += term;
        }
        assert!((overlap - (-2.0 * alpha * alpha).exp()).abs() < 1e-12);
        let cat = cat_basis(alpha, dim(20)).unwrap();
        assert!((cat.norm_minus.powi(2) - 2.0 * (1.0 - overlap)).abs() < 1e-9);
        assert!((cat.norm_plus.powi(2) - 2.0 * (1.0 + overlap)).abs() < 1e-9);
    }

    #[test]
    fn scs_projectors_parity_limit() {
        let d = dim(20);
        let spec = ScsMeasurementSpec::new(0.5, 1.0, 0.0, 0.0).unwrap();
        let (p0, p1) = scs_projectors(&spec, d).unwrap();
        let cat = cat_basis(0.5, d).unwrap();
        assert!(inner(&p0, &cat.plus).unwrap().norm() > 1.0 - 1e-12);
        assert!(inner(&p1, &cat.minus).unwrap().norm() > 1.0 - 1e-12);
    }

    #[test]
    fn scs_projectors_gram_reproduces_coefficients() {
        let d = dim(20);
        let spec = ScsMeasurementSpec::from_c0_squared(0.499, 0.5, std::f64::consts::FRAC_PI_2).unwrap();
        let (p0, p1) = scs_projectors(&spec, d).unwrap();
        let cat = cat_basis(0.499, d).unwrap();
        let expected = scs_coefficients(&spec);
        let got = [
            inner(&cat.plus, &p0).unwrap(),
            inner(&cat.minus, &p0).unwrap(),
            inner(&cat.plus, &p1).unwrap(),
            inner(&cat.minus, &p1).unwrap(),
        ];
        for (g, e) in got.iter().zip(expected.iter()) {
            assert!((g - e).norm() < 1e-12);
        }
        assert!(inner(&p0, &p1).unwrap().norm() < 1e-12);
        assert!(p0.is_normalized(1e-12) && p1.is_normalized(1e-12));
    }

    #[test]
    fn spec_validation() {
        assert!(ScsMeasurementSpec::new(0.5, 0.6, 0.6, 0.0).is_err());
        assert!(ScsMeasurementSpec::new(0.5, -1.0, 0.0, 0.0).is_err());
        assert!(ScsMeasurementSpec::new(0.0, 1.0, 0.0, 0.0).is_err());
        assert!(ScsMeasurementSpec::from_c0_squared(0.5, 1.2, 0.0).is_err());
    }

    #[test]
    fn displacement_identity_at_zero() {
        let d = displacement_operator(c(0.0, 0.0), dim(8)).unwrap();
        assert!(d.max_abs_diff(&FockOperator::identity(dim(8))).unwrap() < 1e-15);
    }

    #[test]
    fn displacement_on_vacuum_is_coherent() {
        let dd = dim(20);
        let beta = c(0.894, 0.0);
        let d = displacement_operator(beta, dd).unwrap();
        let v = d.apply(&number_state(0, dd).unwrap()).unwrap();
        let coh = coherent_state(beta, dd).unwrap();
        for n in 0..=20 {
            assert!((v.amp(n) - coh.amp(n)).norm() < 1e-8);
        }
        let beta = C64::from_polar(0.7, 1.1);
        let v = displacement_operator(beta, dd)
            .unwrap()
            .apply(&number_state(0, dd).unwrap())
            .unwrap();
        let coh = coherent_state(beta, dd).unwrap();
        assert!((0..=20).all(|n| (v.amp(n) - coh.amp(n)).norm() < 1e-8));
    }

    #[test]
    fn displacement_rejects_small_cutoff() {
        assert!(matches!(
            displacement_operator(c(3.0, 0.0), dim(10)),
            Err(Error::CutoffTooSmall { .. })
        ));
    }

    #[test]
    fn laguerre_low_orders() {
        let l = laguerre_series(3, 2.0, 0.7);
        assert!((l[1] - (3.0 - 0.7)).abs() < 1e-14);
        // L_2^{(a)}(x) = x²/2 − (a+2)x + (a+2)(a+1)/2
        let l2 = 0.49 / 2.0 - 4.0 * 0.7 + 6.0;
        assert!((l[2] - l2).abs() < 1e-13);
    }

    #[test]
    fn expectation_values() {
        let d = dim(20);
        let v = coherent_state(c(0.5, 0.0), d).unwrap();
        assert!((inner(&v, &v).unwrap().re - 1.0).abs() < 1e-12);
        assert!((expect(&FockOperator::identity(d), &v).unwrap().re - 1.0).abs() < 1e-12);
        let vac = FockOperator::projector(&number_state(0, d).unwrap());
        let e = expect(&vac, &v).unwrap();
        assert!((e.re - (-0.25f64).exp()).abs() < 1e-10);
        assert!((e.re - 0.77880).abs() < 1e-5);
        assert!(e.im.abs() < 1e-10);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let a = number_state(0, dim(3)).unwrap();
        let b = number_state(0, dim(4)).unwrap();
        assert!(matches!(inner(&a, &b), Err(Error::DimensionMismatch { .. })));
        assert!(expect(&FockOperator::identity(dim(4)), &a).is_err());
    }
}
