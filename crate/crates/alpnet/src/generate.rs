//! Seeded random channel generation.

use alpnet_core::beamforming::{
    effective_gains, optimize_for_target, svd_init, AlternatingTarget, BeamformerSet, MimoScenario,
};
use alpnet_core::feasibility::affine_fixed_point;
use alpnet_core::linalg::{CMatrix, Complex64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::Error;

/// The generator used for every seeded draw.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Circularly symmetric complex normal sample with unit variance.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}

/// `users²` i.i.d. `CN(0, 1)` channel matrices of size `rx × tx`, drawn in
/// row-major order of `(k, l)` and then of matrix entries.
pub fn random_mimo<R: Rng + ?Sized>(
    rng: &mut R,
    users: usize,
    rx: usize,
    tx: usize,
    noise: f64,
) -> Result<MimoScenario, Error> {
    let channels = (0..users)
        .map(|_| {
            (0..users)
                .map(|_| CMatrix::from_fn(rx, tx, |_, _| complex_normal(rng)))
                .collect()
        })
        .collect();
    Ok(MimoScenario::new(channels, vec![noise; users])?)
}

/// Starting point in which `admitted` already run at SIR `target` with
/// beamformers pre-optimized among themselves, and everyone else transmits at
/// `low_power` with SVD beamformers.
#[derive(Debug, Clone)]
pub struct WarmStart {
    pub beams: BeamformerSet,
    pub powers: Vec<f64>,
}

pub fn warm_start(
    scn: &MimoScenario,
    admitted: &[usize],
    target: f64,
    rounds: usize,
    low_power: f64,
) -> Result<WarmStart, Error> {
    let mut beams = svd_init(scn);
    let mut powers = vec![low_power; scn.users()];
    if admitted.is_empty() {
        return Ok(WarmStart { beams, powers });
    }
    let sub = scn.subnetwork(admitted)?;
    let goal = AlternatingTarget {
        gamma: target,
        rounds,
        power_scale: 1e4,
    };
    let tuned = optimize_for_target(&sub, &svd_init(&sub), &goal)?;
    if !tuned.reached {
        return Err(Error::validation(
            "warm_start",
            format!("SIR {target} not reached by the admitted users after {rounds} rounds"),
        ));
    }
    let model = effective_gains(&sub, &tuned.beams)?;
    let p = affine_fixed_point(&model, &vec![target; admitted.len()])?;
    for (i, &k) in admitted.iter().enumerate() {
        beams.transmit[k] = tuned.beams.transmit[i].clone();
        beams.receive[k] = tuned.beams.receive[i].clone();
        powers[k] = p[i];
    }
    Ok(WarmStart { beams, powers })
}
