use alpnet_core::alp::{alp_step, AlpConfig, NetworkState};
use alpnet_core::feasibility::{
    affine_fixed_point, c_gamma_affine, spectral_radius_nonneg, yates_fixed_point, IterationOptions,
};
use alpnet_core::interference::{check_axioms, AxiomCheck};
use alpnet_core::linalg::{CVector, Complex64};
use alpnet_core::{AffineModel, InterferenceFunction, MinStrategyModel, PowerVector, SirTargets};
use approx::assert_relative_eq;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn affine(k: usize) -> impl Strategy<Value = AffineModel> {
    (
        prop::collection::vec(0.0..1.0f64, k * k),
        prop::collection::vec(0.05..2.0f64, k),
    )
        .prop_map(move |(mut gains, noise)| {
            for i in 0..k {
                gains[i * k + i] = 0.0;
            }
            AffineModel::new(gains, noise).unwrap()
        })
}

fn any_affine() -> impl Strategy<Value = AffineModel> {
    (2usize..=6).prop_flat_map(affine)
}

fn min_strategy() -> impl Strategy<Value = MinStrategyModel> {
    (2usize..=5, 2usize..=3).prop_flat_map(|(k, dim)| {
        (
            prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), k * k * dim),
            prop::collection::vec(0.05..2.0f64, k),
        )
            .prop_map(move |(entries, noise)| {
                let channels: Vec<Vec<CVector>> = (0..k)
                    .map(|i| {
                        (0..k)
                            .map(|j| {
                                (0..dim)
                                    .map(|d| {
                                        let (re, im) = entries[(i * k + j) * dim + d];
                                        Complex64::new(re, im)
                                    })
                                    .collect()
                            })
                            .collect()
                    })
                    .collect();
                MinStrategyModel::new(channels, noise).unwrap()
            })
    })
}

fn powers(k: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-6.0..4.0f64, k).prop_map(|e| e.into_iter().map(f64::exp).collect())
}

/// Lifts user 0 above its target so the initial active set is not empty.
fn admit_first<M: InterferenceFunction + ?Sized>(model: &M, gamma: f64, mut p: Vec<f64>) -> PowerVector {
    p[0] = 1.1 * gamma * model.interference(0, &p);
    PowerVector::new(p).unwrap()
}

/// Checks one admission step against the per-step bounds and returns the next state.
fn checked_step<M: InterferenceFunction + ?Sized>(
    model: &M,
    targets: &SirTargets,
    state: &NetworkState,
) -> Result<NetworkState, TestCaseError> {
    let next = alp_step(model, targets, state);
    let delta = targets.delta();
    for k in 0..state.users() {
        prop_assert!(next.interference[k] < delta * state.interference[k] * (1.0 + 1e-12));
        if state.active[k] {
            prop_assert!(next.powers[k] / state.powers[k] < delta * (1.0 + 1e-12));
            prop_assert!(next.active[k], "user {k} dropped out");
            prop_assert!(next.sirs[k] >= targets.gamma()[k] * (1.0 - 1e-12));
        } else {
            prop_assert!(next.sirs[k] > state.sirs[k] * (1.0 - 1e-12));
        }
    }
    Ok(next)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn affine_steps_protect_active_links(
        (model, p) in any_affine().prop_flat_map(|m| { let k = m.users(); (Just(m), powers(k)) }),
        gamma in 0.2..3.0f64,
        delta in 1.01..2.5f64,
    ) {
        let targets = SirTargets::common(model.users(), gamma, delta).unwrap();
        let mut state = AlpConfig::new(targets.clone(), admit_first(&model, gamma, p))
            .initial_state(&model)
            .unwrap();
        for _ in 0..30 {
            state = checked_step(&model, &targets, &state)?;
        }
    }

    #[test]
    fn mmse_steps_protect_active_links(
        (model, p) in min_strategy().prop_flat_map(|m| { let k = m.users(); (Just(m), powers(k)) }),
        gamma in 0.2..3.0f64,
        delta in 1.01..2.5f64,
    ) {
        let targets = SirTargets::common(model.users(), gamma, delta).unwrap();
        let mut state = AlpConfig::new(targets.clone(), admit_first(&model, gamma, p))
            .initial_state(&model)
            .unwrap();
        for _ in 0..15 {
            state = checked_step(&model, &targets, &state)?;
        }
    }

    #[test]
    fn models_satisfy_the_axioms(a in any_affine(), m in min_strategy(), seed in any::<u64>()) {
        let plan = AxiomCheck { trials: 40, ..AxiomCheck::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ra = check_axioms(&a, &plan, &mut rng);
        prop_assert!(ra.all_pass(), "{ra:?}");
        let rm = check_axioms(&m, &plan, &mut rng);
        prop_assert!(rm.all_pass(), "{rm:?}");
    }

    #[test]
    fn mmse_beats_every_fixed_receiver(
        (model, p) in min_strategy().prop_flat_map(|m| { let k = m.users(); (Just(m), powers(k)) }),
        probes in prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 3),
    ) {
        for k in 0..model.users() {
            let best = model.interference(k, &p);
            let u_opt = model.optimal_receiver(k, &p);
            assert_relative_eq!(model.rho(k, &p, &u_opt), best, max_relative = 1e-9);
            let mut u: CVector = probes.iter().map(|&(re, im)| Complex64::new(re, im)).collect();
            u.resize(model.dim(), Complex64::new(0.3, -0.1));
            prop_assert!(model.rho(k, &p, &u) >= best * (1.0 - 1e-9));
        }
    }

    #[test]
    fn spectral_radius_matches_dense_eigenvalues(model in any_affine()) {
        let k = model.users();
        let m = nalgebra::DMatrix::from_row_slice(k, k, model.gains());
        let oracle = m
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        assert_relative_eq!(spectral_radius_nonneg(model.gains(), k), oracle, max_relative = 1e-8, epsilon = 1e-12);
    }

    #[test]
    fn index_scales_linearly_with_targets(model in any_affine(), gamma in 0.1..3.0f64, s in 0.1..10.0f64) {
        let targets = SirTargets::common(model.users(), gamma, 1.5).unwrap();
        let c = c_gamma_affine(&model, &targets).unwrap();
        let cs = c_gamma_affine(&model, &targets.scaled(s).unwrap()).unwrap();
        assert_relative_eq!(cs, s * c, max_relative = 1e-9, epsilon = 1e-300);
    }

    #[test]
    fn direct_solve_matches_the_iteration(model in any_affine(), frac in 0.1..0.9f64) {
        let unit = SirTargets::common(model.users(), 1.0, 1.5).unwrap();
        let c = c_gamma_affine(&model, &unit).unwrap();
        prop_assume!(c > 1e-6);
        let targets = unit.scaled(frac / c).unwrap();
        let direct = affine_fixed_point(&model, targets.gamma()).unwrap();
        let p0 = vec![1.0; model.users()];
        let iterated = yates_fixed_point(&model, &targets, &p0, &IterationOptions::default()).unwrap();
        for (a, b) in direct.iter().zip(iterated.iter()) {
            assert_relative_eq!(*a, *b, max_relative = 1e-7);
        }
    }
}
