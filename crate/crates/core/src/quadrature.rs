//! Hermite functions and adaptive Gauss–Kronrod quadrature for vector-valued
//! integrands.

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
// Gauss weights for XGK[1], XGK[3], XGK[5], XGK[7]
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_94,
    0.417_959_183_673_469_4,
];

const MAX_INTERVALS: usize = 4096;

/// Hermite functions `ψ_0(x)..ψ_{n_max}(x)` (oscillator eigenfunctions for
/// `x̂ = (â + â†)/√2`), via the stable three-term recurrence.
pub fn hermite_functions(n_max: usize, x: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n_max + 1);
    let p0 = std::f64::consts::PI.powf(-0.25) * (-x * x / 2.0).exp();
    out.push(p0);
    if n_max == 0 {
        return out;
    }
    out.push(std::f64::consts::SQRT_2 * x * p0);
    for n in 1..n_max {
        let nf = n as f64;
        let next = (2.0 / (nf + 1.0)).sqrt() * x * out[n] - (nf / (nf + 1.0)).sqrt() * out[n - 1];
        out.push(next);
    }
    out
}

fn kronrod_panel<F>(f: &F, a: f64, b: f64, m: usize) -> (Vec<f64>, f64)
where
    F: Fn(f64, &mut [f64]),
{
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut k = vec![0.0; m];
    let mut g = vec![0.0; m];
    let mut buf = vec![0.0; m];
    let mut accumulate = |x: f64, wk: f64, wg: Option<f64>, buf: &mut [f64]| {
        f(x, buf);
        for i in 0..m {
            k[i] += wk * buf[i];
            if let Some(w) = wg {
                g[i] += w * buf[i];
            }
        }
    };
    for (j, (&x, &w)) in XGK.iter().zip(WGK.iter()).enumerate() {
        let wg = if j % 2 == 1 { Some(WG[j / 2]) } else { None };
        if x == 0.0 {
            accumulate(c, w, wg, &mut buf);
        } else {
            accumulate(c - h * x, w, wg, &mut buf);
            accumulate(c + h * x, w, wg, &mut buf);
        }
    }
    let mut err: f64 = 0.0;
    for i in 0..m {
        k[i] *= h;
        g[i] *= h;
        err = err.max((k[i] - g[i]).abs());
    }
    (k, err)
}

/// Integrates an `m`-component integrand over `[a, b]` to absolute tolerance
/// `tol` (max-norm over components), bisecting panels whose Gauss/Kronrod
/// discrepancy exceeds their share of the tolerance.
pub fn integrate_vec<F>(f: F, a: f64, b: f64, m: usize, tol: f64) -> Result<Vec<f64>>
where
    F: Fn(f64, &mut [f64]),
{
    let mut total = vec![0.0; m];
    if b <= a {
        return Ok(total);
    }
    let width = b - a;
    let mut stack = vec![(a, b)];
    let mut panels = 0usize;
    let mut worst = 0.0f64;
    while let Some((lo, hi)) = stack.pop() {
        panels += 1;
        let (val, err) = kronrod_panel(&f, lo, hi, m);
        let share = tol * (hi - lo) / width;
        if err <= share || panels > MAX_INTERVALS {
            if err > share {
                worst = worst.max(err);
            }
            for i in 0..m {
                total[i] += val[i];
            }
        } else {
            let mid = 0.5 * (lo + hi);
            stack.push((mid, hi));
            stack.push((lo, mid));
        }
    }
    if worst > 0.0 {
        return Err(Error::NonConvergence {
            stage: "quadrature",
            iterations: panels,
            residual: worst,
        });
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hermite_functions_are_orthonormal() {
        let n = 6;
        let m = (n + 1) * (n + 1);
        let v = integrate_vec(
            |x, out| {
                let h = hermite_functions(n, x);
                for i in 0..=n {
                    for j in 0..=n {
                        out[i * (n + 1) + j] = h[i] * h[j];
                    }
                }
            },
            -15.0,
            15.0,
            m,
            1e-12,
        )
        .unwrap();
        for i in 0..=n {
            for j in 0..=n {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((v[i * (n + 1) + j] - e).abs() < 1e-11, "{i} {j}");
            }
        }
    }

    #[test]
    fn gaussian_integral() {
        let v = integrate_vec(|x, o| o[0] = (-x * x).exp(), -10.0, 10.0, 1, 1e-13).unwrap();
        assert!((v[0] - std::f64::consts::PI.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn empty_interval_is_zero() {
        let v = integrate_vec(|_, o| o[0] = 1.0, 2.0, 1.0, 1, 1e-10).unwrap();
        assert_eq!(v, vec![0.0]);
    }
}
