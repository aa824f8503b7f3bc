use proptest::prelude::*;
use switchstab_core::exponents::{chi_plus_prefix, liao_windows, lyapunov_qr, FrameState};
use switchstab_core::flow::{cocycle_check, propagate_linear, Propagator};
use switchstab_core::lie::{
    closed_form_exponents, is_solvable, simultaneous_triangularize, MatrixFamily, ProbabilityVector,
};
use switchstab_core::matkit::RMatrix;
use switchstab_core::stability::{
    control_product_experiment, default_control_maps, random_solvable_case, SweepConfig, DEFAULT_DT, SUITE_DIAG,
};
use switchstab_core::symdyn::{sample_switch_point, stream_rng};
use switchstab_core::Error;

fn diag_pair() -> MatrixFamily {
    MatrixFamily::new(vec![RMatrix::diag(&[-2.0, 1.0]), RMatrix::diag(&[1.0, -2.0])]).unwrap()
}

fn family_from(entries: &[f64], n: usize, modes: usize) -> MatrixFamily {
    let mats = (0..modes)
        .map(|m| RMatrix::from_fn(n, n, |i, j| entries[m * n * n + i * n + j]))
        .collect();
    MatrixFamily::new(mats).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn constructed_families_recover_their_exponent(seed in any::<u64>(), n in 2usize..=4, modes in 2usize..=3) {
        let case = random_solvable_case(&mut stream_rng(seed, 0), n, modes, SUITE_DIAG);
        prop_assert!(is_solvable(&case.family).solvable);
        let tri = simultaneous_triangularize(&case.family).unwrap();
        prop_assert!(tri.lower_residue <= 1e-8);
        let cf = closed_form_exponents(&tri, &case.alpha).unwrap();
        prop_assert!((cf.chi - case.chi()).abs() <= 1e-8, "{} vs {}", cf.chi, case.chi());
    }

    #[test]
    fn cocycle_holds_relative_to_scale(
        entries in prop::collection::vec(-1.0f64..1.0, 18),
        seed in any::<u64>(),
        t1 in 0.0f64..8.0,
        t2 in 0.0f64..8.0,
    ) {
        let fam = family_from(&entries, 3, 2);
        let prop = Propagator::new(&fam, sample_switch_point(&ProbabilityVector::uniform(2), 20.0, seed)).unwrap();
        let scale = propagate_linear(&prop, t1).unwrap().norm_fro()
            * propagate_linear(&prop.advance(t1).unwrap(), t2).unwrap().norm_fro();
        prop_assert!(cocycle_check(&prop, t1, t2).unwrap() <= 1e-12 * scale.max(1.0));
    }

    #[test]
    fn liao_exponent_dominates_qr_exponent(
        entries in prop::collection::vec(-1.0f64..1.0, 8),
        seed in any::<u64>(),
        ell in 0u32..=6,
    ) {
        let fam = family_from(&entries, 2, 2);
        let point = sample_switch_point(&ProbabilityVector::uniform(2), 300.0, seed);
        let tau = point.tau;
        let prop = Propagator::new(&fam, point).unwrap();
        let run = lyapunov_qr(&prop, 300.0, FrameState::identity(2)).unwrap();
        let m = run.series.len() >> ell;
        let w = liao_windows(&run.series, tau, ell, m).unwrap();
        prop_assert!(w.chi_star >= chi_plus_prefix(&run.series, m << ell) - 1e-12);
    }
}

#[test]
fn verdict_does_not_depend_on_initial_frame() {
    let fam = diag_pair();
    let alpha = ProbabilityVector::uniform(2);
    for seed in 0..5 {
        let prop = Propagator::new(&fam, sample_switch_point(&alpha, 2000.0, seed)).unwrap();
        let fixed = lyapunov_qr(&prop, 2000.0, FrameState::identity(2)).unwrap().chi_plus;
        let random = lyapunov_qr(&prop, 2000.0, FrameState::random(2, &mut stream_rng(seed, 1)))
            .unwrap()
            .chi_plus;
        assert!(fixed < 0.0 && random < 0.0);
        assert!((fixed - random).abs() < 0.05, "{fixed} vs {random}");
    }
}

#[test]
fn small_control_inputs_keep_diag_pair_stable() {
    let fam = diag_pair();
    let cfg = SweepConfig {
        grid: vec![0.05],
        trials: 20,
        horizon: 200.0,
        seed: 5,
        dt: DEFAULT_DT,
    };
    let res = control_product_experiment(
        &fam,
        &ProbabilityVector::uniform(2),
        default_control_maps(2, 2),
        1.0,
        &cfg,
    )
    .unwrap();
    assert!(res.fractions[0][0] >= 0.9, "{:?}", res.fractions);
}

#[test]
fn sl2_family_is_refused() {
    let e = RMatrix::from_rows(&[vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap();
    let f = RMatrix::from_rows(&[vec![0.0, 0.0], vec![1.0, 0.0]]).unwrap();
    let fam = MatrixFamily::new(vec![e, f]).unwrap();
    assert!(!is_solvable(&fam).solvable);
    assert!(matches!(
        simultaneous_triangularize(&fam),
        Err(Error::NotSolvable { .. })
    ));
}
