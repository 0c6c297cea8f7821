//! Dense complex Hermitian helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use rand::Rng;
use rand_distr::StandardNormal;

pub fn hermitian_part(m: &DMatrix<C64>) -> DMatrix<C64> {
    (m + m.adjoint()) * C64::new(0.5, 0.0)
}

pub fn hermiticity_defect(m: &DMatrix<C64>) -> f64 {
    max_abs_diff(m, &m.adjoint())
}

pub fn max_abs_diff(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

/// Eigen-decomposition of the Hermitian part of `m`: `(eigenvalues, eigenvectors)`.
pub fn hermitian_eigen(m: &DMatrix<C64>) -> (DVector<f64>, DMatrix<C64>) {
    let eig = hermitian_part(m).symmetric_eigen();
    (eig.eigenvalues, eig.eigenvectors)
}

/// Rebuilds `U f(Λ) U†` from the Hermitian eigen-decomposition.
pub fn hermitian_map(m: &DMatrix<C64>, f: impl Fn(f64) -> f64) -> DMatrix<C64> {
    let (vals, vecs) = hermitian_eigen(m);
    let d = DMatrix::from_diagonal(&vals.map(|v| C64::new(f(v), 0.0)));
    let out = &vecs * d * vecs.adjoint();
    hermitian_part(&out)
}

/// Clips the spectrum to `[lo, hi]`.
pub fn clip_spectrum(m: &DMatrix<C64>, lo: f64, hi: f64) -> DMatrix<C64> {
    hermitian_map(m, |v| v.clamp(lo, hi))
}

pub fn psd_sqrt(m: &DMatrix<C64>) -> DMatrix<C64> {
    hermitian_map(m, |v| v.max(0.0).sqrt())
}

pub fn psd_inv_sqrt(m: &DMatrix<C64>, floor: f64) -> DMatrix<C64> {
    hermitian_map(m, |v| 1.0 / v.max(floor).sqrt())
}

/// Normalized Uhlmann fidelity `(Tr√(√A B √A))² / (Tr A · Tr B)` between two
/// positive operators; 1 iff `A ∝ B`.
pub fn normalized_operator_fidelity(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    let ta = a.trace().re;
    let tb = b.trace().re;
    if ta <= 0.0 || tb <= 0.0 {
        return if ta <= 0.0 && tb <= 0.0 { 1.0 } else { 0.0 };
    }
    let sa = psd_sqrt(a);
    let inner = &sa * b * &sa;
    let (vals, _) = hermitian_eigen(&inner);
    let tr: f64 = vals.iter().map(|v| v.max(0.0).sqrt()).sum();
    (tr * tr / (ta * tb)).min(1.0)
}

/// Haar-random unitary via QR of a complex Ginibre matrix with phase-fixed `R`.
pub fn random_unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DMatrix<C64> {
    let z = DMatrix::from_fn(n, n, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re, im) / 2f64.sqrt()
    });
    let qr = z.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        let d = r[(j, j)];
        let ph = if d.norm() > 0.0 { d / d.norm() } else { C64::new(1.0, 0.0) };
        for i in 0..n {
            q[(i, j)] *= ph;
        }
    }
    q
}

/// Random POVM element `U diag(λ) U†` with `λ_i ~ U[0, 1]`.
pub fn random_povm_element<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DMatrix<C64> {
    let u = random_unitary(n, rng);
    let lam = DVector::from_fn(n, |_, _| C64::new(rng.random::<f64>(), 0.0));
    hermitian_part(&(&u * DMatrix::from_diagonal(&lam) * u.adjoint()))
}
