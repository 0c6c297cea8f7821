use std::f64::consts::PI;

use catproj_core::fidelity::{dp_fidelity, fidelity, onoff_fidelity, optimize_displacement};
use catproj_core::fock::{displacement_operator, FockOperator, ScsMeasurementSpec, TruncationDim, C64};
use catproj_core::linalg::random_povm_element;
use catproj_core::povm::{apply_loss, compensate_loss, dp_povm, onoff_povm, DetectorModel, PovmKind, PovmPair};
use catproj_core::qdt::{mle_reconstruct, phi_from_operator, povm_entry_bound_check, Mat2, ProbeSet};
use catproj_core::sim::{simulate_counts, Campaign};
use nalgebra::Vector2;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn dim(n: usize) -> TruncationDim {
    TruncationDim::new(n).unwrap()
}

fn random_element(n_max: usize, seed: u64) -> FockOperator {
    let d = dim(n_max);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    FockOperator::from_matrix(d, random_povm_element(d.size(), &mut rng)).unwrap()
}

fn beta_strategy(radius: f64) -> impl Strategy<Value = C64> {
    (0.0..radius, 0.0..2.0 * PI).prop_map(|(r, t)| C64::from_polar(r, t))
}

fn spec_strategy() -> impl Strategy<Value = ScsMeasurementSpec> {
    (0.2f64..1.0, 0.0f64..=1.0, 0.0..2.0 * PI)
        .prop_map(|(a, c0sq, phi)| ScsMeasurementSpec::from_c0_squared(a, c0sq, phi).unwrap())
}

fn pure_qubit(theta: f64, phase: f64) -> Mat2 {
    let v = Vector2::new(C64::new((theta / 2.0).cos(), 0.0), C64::from_polar((theta / 2.0).sin(), phase));
    v * v.adjoint()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn displacement_inverse_on_low_block(beta in beta_strategy(1.0)) {
        let d = dim(20);
        let prod = displacement_operator(beta, d).unwrap()
            .mul(&displacement_operator(-beta, d).unwrap()).unwrap();
        for m in 0..8 {
            for n in 0..8 {
                let want = if m == n { 1.0 } else { 0.0 };
                prop_assert!((prod.entry(m, n) - C64::new(want, 0.0)).norm() < 1e-6);
            }
        }
    }

    #[test]
    fn dp_povm_is_complete_and_positive(spec in spec_strategy(), beta in beta_strategy(1.0)) {
        let p = dp_povm(&spec, beta, dim(20)).unwrap();
        let sum = p.pi0().add(p.pi1()).unwrap();
        prop_assert!(sum.max_abs_diff(&FockOperator::identity(p.dim())).unwrap() < 1e-9);
        prop_assert!(p.pi0().is_positive_semidefinite(1e-9));
        prop_assert!(p.pi1().is_positive_semidefinite(1e-9));
    }

    #[test]
    fn onoff_povm_is_complete_and_positive(
        beta in beta_strategy(1.0),
        eta in 0.0f64..=1.0,
        nu in 0.0f64..0.1,
        vis in 0.8f64..=1.0,
    ) {
        let p = onoff_povm(beta, &DetectorModel::new(eta, nu, vis).unwrap(), dim(20)).unwrap();
        let sum = p.pi0().add(p.pi1()).unwrap();
        prop_assert!(sum.max_abs_diff(&FockOperator::identity(p.dim())).unwrap() < 1e-9);
        prop_assert!(p.pi0().is_positive_semidefinite(1e-9));
        prop_assert!(p.pi1().is_positive_semidefinite(1e-9));
    }

    #[test]
    fn povm_entries_bounded(n_max in 1usize..12, seed: u64) {
        let op = random_element(n_max, seed);
        prop_assert!(povm_entry_bound_check(&op).max_abs_entry <= 1.0 + 1e-9);
        prop_assert!(phi_from_operator(&op, op.dim().size()).within_bounds(1e-12));
    }

    #[test]
    fn fast_fidelity_matches_operator_fidelity(spec in spec_strategy(), beta in beta_strategy(1.0)) {
        let d = dim(20);
        let fast = dp_fidelity(&spec, beta, d).unwrap();
        let direct = fidelity(&dp_povm(&spec, beta, d).unwrap(), &spec).unwrap();
        prop_assert!((fast - direct).abs() < 1e-10, "{fast} vs {direct}");
    }

    #[test]
    fn fidelity_parity_and_conjugation_covariance(spec in spec_strategy(), beta in beta_strategy(1.0)) {
        let d = dim(20);
        let model = DetectorModel::experimental();
        let f = onoff_fidelity(&spec, beta, &model, d).unwrap();
        let parity = ScsMeasurementSpec { phi: spec.phi + PI, ..spec };
        let conj = ScsMeasurementSpec { phi: -spec.phi, ..spec };
        prop_assert!((onoff_fidelity(&parity, -beta, &model, d).unwrap() - f).abs() < 1e-9);
        prop_assert!((onoff_fidelity(&conj, beta.conj(), &model, d).unwrap() - f).abs() < 1e-9);
    }

    #[test]
    fn loss_round_trip(n_max in 1usize..10, seed: u64, eta in 0.6f64..=1.0) {
        let p = PovmPair::from_element(random_element(n_max, seed), PovmKind::Reconstructed).unwrap();
        let back = compensate_loss(&apply_loss(&p, eta).unwrap(), eta).unwrap();
        prop_assert!(back.pi0().max_abs_diff(p.pi0()).unwrap() < 1e-6);
    }

    #[test]
    fn mle_likelihood_never_decreases(
        states in prop::collection::vec((0.0..PI, 0.0..2.0 * PI), 3..7),
        freqs in prop::collection::vec(0.0f64..=1.0, 7),
    ) {
        let probes: Vec<Mat2> = states.iter().map(|&(t, p)| pure_qubit(t, p)).collect();
        let freqs: Vec<[f64; 2]> = freqs[..probes.len()].iter().map(|&f| [f, 1.0 - f]).collect();
        let (povm, diag) = mle_reconstruct(&probes, &freqs).unwrap();
        prop_assert!(diag.max_likelihood_decrease <= 1e-12, "{}", diag.max_likelihood_decrease);
        prop_assert!(diag.max_completeness_defect <= 1e-9);
        prop_assert!(povm.validate().is_ok());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn lower_efficiency_never_helps(spec in spec_strategy(), eta in 0.3f64..=1.0, drop in 0.05f64..0.3) {
        let d = dim(20);
        let hi = DetectorModel::new(eta, 0.0, 1.0).unwrap();
        let lo = DetectorModel::new((eta - drop).max(0.0), 0.0, 1.0).unwrap();
        let (_, f_hi) = optimize_displacement(&spec, &hi, d).unwrap();
        let (_, f_lo) = optimize_displacement(&spec, &lo, d).unwrap();
        prop_assert!(f_lo <= f_hi + 1e-6, "{f_lo} > {f_hi}");
    }

    #[test]
    fn simulation_deterministic_and_within_six_sigma(seed: u64, element_seed: u64) {
        let truth = PovmPair::from_element(random_element(20, element_seed), PovmKind::Reconstructed).unwrap();
        let probes = ProbeSet::new(0.499, vec![0.2, 0.3]).unwrap();
        let campaign = Campaign {
            probes: probes.clone(),
            shots_per_probe: 200_000,
            detector: DetectorModel::ideal(),
            displacement_schedule: vec![C64::new(0.0, 0.0)],
            rng_seed: seed,
        };
        let a = simulate_counts(&truth, &campaign).unwrap();
        prop_assert_eq!(&a, &simulate_counts(&truth, &campaign).unwrap());
        let rates = catproj_core::sim::expected_rates(&truth, &probes).unwrap();
        let mut chi2 = 0.0;
        for (row, (_, p)) in a.rows.iter().zip(&rates) {
            let n = row.shots as f64;
            let var = (n * p * (1.0 - p)).max(1e-12);
            let dev = row.counts[0] as f64 - n * p;
            prop_assert!(dev.abs() <= 6.0 * var.sqrt() + 1.0);
            chi2 += dev * dev / var;
        }
        // Six degrees of freedom; the 1e-6 upper quantile is about 39.
        prop_assert!(chi2 < 45.0, "chi2 = {chi2}");
    }
}
