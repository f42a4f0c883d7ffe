use alpnet_core::beamforming::{
    effective_gains, max_common_sir, reverse, sirs, svd_init, transceiver_round, BeamPolicy, BeamformerSet,
    MaxSirOptions, MimoScenario, RoundOptions,
};
use alpnet_core::feasibility::c_gamma_affine;
use alpnet_core::linalg::{leading_singular_pair, norm, CMatrix, Complex64};
use alpnet_core::SirTargets;
use approx::assert_relative_eq;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| {
        Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    })
}

fn random_scenario(seed: u64, users: usize, rx: usize, tx: usize) -> MimoScenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let channels = (0..users)
        .map(|_| (0..users).map(|_| random_matrix(&mut rng, rx, tx)).collect())
        .collect();
    let noise = (0..users).map(|_| rng.random_range(0.2..1.0)).collect();
    MimoScenario::new(channels, noise).unwrap()
}

fn to_nalgebra(h: &CMatrix) -> nalgebra::DMatrix<nalgebra::Complex<f64>> {
    nalgebra::DMatrix::from_fn(h.rows(), h.cols(), |i, j| {
        let z = h.get(i, j);
        nalgebra::Complex::new(z.re, z.im)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn leading_singular_value_matches_dense_svd(seed in any::<u64>(), rows in 1usize..=5, cols in 1usize..=5) {
        let h = random_matrix(&mut ChaCha8Rng::seed_from_u64(seed), rows, cols);
        let (sigma, u, v) = leading_singular_pair(&h);
        let oracle = to_nalgebra(&h).singular_values().max();
        assert_relative_eq!(sigma, oracle, max_relative = 1e-9);
        assert_relative_eq!(norm(&u), 1.0, max_relative = 1e-12);
        assert_relative_eq!(norm(&v), 1.0, max_relative = 1e-12);
        let hv = h.mul_vec(&v);
        for (a, b) in hv.iter().zip(&u) {
            prop_assert!((a - b * sigma).norm() <= 1e-9 * sigma);
        }
    }

    #[test]
    fn reversal_is_an_involution(seed in any::<u64>(), users in 1usize..=4) {
        let scn = random_scenario(seed, users, 3, 2);
        let beams = svd_init(&scn);
        let once = reverse(&scn, &beams).unwrap();
        let twice = reverse(&once.scenario, &once.beams).unwrap();
        prop_assert_eq!(&twice.scenario, &scn);
        prop_assert_eq!(&twice.beams, &beams);
    }

    #[test]
    fn reversal_preserves_the_feasibility_index(seed in any::<u64>(), users in 2usize..=5) {
        let scn = random_scenario(seed, users, 2, 3);
        let beams = svd_init(&scn);
        let rev = reverse(&scn, &beams).unwrap();
        let targets = SirTargets::common(users, 1.0, 1.5).unwrap();
        let primal = c_gamma_affine(&effective_gains(&scn, &beams).unwrap(), &targets).unwrap();
        let reversed = c_gamma_affine(&effective_gains(&rev.scenario, &rev.beams).unwrap(), &targets).unwrap();
        assert_relative_eq!(primal, reversed, max_relative = 1e-9);
    }

    #[test]
    fn rounds_never_lower_the_minimum_sir(seed in any::<u64>(), users in 2usize..=6) {
        let scn = random_scenario(seed, users, 3, 3);
        let mut beams = svd_init(&scn);
        let mut p = vec![1.0; users];
        let mut floor = sirs(&scn, &beams, &p).unwrap().into_iter().fold(f64::INFINITY, f64::min);
        for _ in 0..6 {
            let out = transceiver_round(&scn, &beams, &p, &RoundOptions::default()).unwrap();
            let min = out.sirs.iter().copied().fold(f64::INFINITY, f64::min);
            prop_assert!(min >= floor * (1.0 - 1e-9), "{min} < {floor}");
            floor = min;
            beams = out.beams;
            p = out.primal_powers;
        }
    }
}

#[test]
fn single_link_sir_is_the_channel_gain_over_noise() {
    let scn = random_scenario(7, 1, 4, 3);
    let beams = svd_init(&scn);
    let (sigma, _, _) = leading_singular_pair(scn.channel(0, 0));
    let s = sirs(&scn, &beams, &[2.5]).unwrap();
    assert_relative_eq!(s[0], 2.5 * sigma * sigma / scn.noise()[0], max_relative = 1e-10);
}

#[test]
fn unitary_change_of_receive_basis_leaves_sirs_unchanged() {
    let scn = random_scenario(11, 3, 2, 2);
    let beams = svd_init(&scn);
    let (c, s) = (0.6_f64.cos(), 0.6_f64.sin());
    let phase = Complex64::from_polar(1.0, 0.7);
    let u = CMatrix::new(
        2,
        2,
        vec![
            Complex64::new(c, 0.0),
            -phase * s,
            phase.conj() * s,
            Complex64::new(c, 0.0),
        ],
    )
    .unwrap();
    let rotated = MimoScenario::new(
        (0..3)
            .map(|k| (0..3).map(|l| u.mul(scn.channel(k, l))).collect())
            .collect(),
        scn.noise().to_vec(),
    )
    .unwrap();
    let moved = BeamformerSet {
        transmit: beams.transmit.clone(),
        receive: beams.receive.iter().map(|r| u.mul_vec(r)).collect(),
    };
    let p = [1.0, 2.0, 0.5];
    let a = sirs(&scn, &beams, &p).unwrap();
    let b = sirs(&rotated, &moved, &p).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert_relative_eq!(x, y, max_relative = 1e-12);
    }
}

#[test]
fn rank_one_channels_leave_nothing_to_gain_from_receivers() {
    // every channel from user l is a multiple of a shared outer product, so
    // all links see the same direction and the receivers cannot separate them
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a: Vec<Complex64> = (0..2)
        .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    let b: Vec<Complex64> = (0..2)
        .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    let outer = CMatrix::from_fn(2, 2, |i, j| a[i] * b[j].conj());
    let channels = (0..3)
        .map(|_| (0..3).map(|_| outer.scale(rng.random_range(0.5..1.5))).collect())
        .collect();
    let scn = MimoScenario::new(channels, vec![1.0; 3]).unwrap();
    let opts = MaxSirOptions::default();
    let fixed = max_common_sir(&scn, BeamPolicy::FixedSvd, &opts).unwrap().value;
    let receive = max_common_sir(&scn, BeamPolicy::ReceiveOnly, &opts).unwrap().value;
    assert_relative_eq!(fixed, receive, max_relative = 5e-3);
}

#[test]
fn beamformers_are_normalized_on_construction() {
    let scn = random_scenario(5, 2, 2, 3);
    let t = vec![vec![Complex64::new(3.0, 0.0); 3], vec![Complex64::new(0.0, 2.0); 3]];
    let r = vec![vec![Complex64::new(1.0, 1.0); 2]; 2];
    let beams = BeamformerSet::new(&scn, t, r).unwrap();
    for v in beams.transmit.iter().chain(&beams.receive) {
        assert_relative_eq!(norm(v), 1.0, max_relative = 1e-14);
    }
    assert!(BeamformerSet::new(
        &scn,
        vec![vec![Complex64::new(0.0, 0.0); 3]; 2],
        vec![vec![Complex64::new(1.0, 0.0); 2]; 2]
    )
    .is_err());
}
