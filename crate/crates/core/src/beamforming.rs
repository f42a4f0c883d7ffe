//! Single-stream MIMO links with transmit and receive beamformers.
//!
//! Link `l`'s transmitter reaches receiver `k` through `H_kl` (`rx × tx`).
//! With unit-norm beamformers `t_l` and `u_k`, the network collapses to the
//! affine model `v_kl = |u_k^H H_kl t_l|² / |u_k^H H_kk t_k|²`,
//! `z_k = σ_k² / |u_k^H H_kk t_k|²`. Receivers are optimized directly
//! (MMSE); transmitters are optimized as receivers of the reversed network,
//! where every link runs backwards through `H_lk^H`.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::feasibility::{affine_fixed_point, c_gamma_affine, probe_feasibility, ProbeOptions, Verdict};
use crate::interference::{check_powers, MinStrategyModel, SirTargets};
use crate::linalg::{self, CMatrix, CVector};
use crate::AffineModel;

/// Signal gains `|u_k^H H_kk t_k|` below this are degenerate.
pub const DEGENERATE_GAIN: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq)]
pub struct MimoScenario {
    users: usize,
    rx: usize,
    tx: usize,
    channels: Vec<CMatrix>,
    noise: Vec<f64>,
}

impl MimoScenario {
    /// `channels[k][l]` is `H_kl`, from transmitter `l` to receiver `k`.
    pub fn new(channels: Vec<Vec<CMatrix>>, noise: Vec<f64>) -> Result<Self> {
        let users = channels.len();
        if users == 0 {
            return Err(invalid("channels", "no users"));
        }
        if noise.len() != users {
            return Err(Error::DimensionMismatch {
                expected: users,
                found: noise.len(),
            });
        }
        if noise.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(invalid("noise", "must be finite and positive"));
        }
        let (rx, tx) = channels[0]
            .first()
            .map(|h| (h.rows(), h.cols()))
            .ok_or(invalid("channels", "empty row"))?;
        if rx == 0 || tx == 0 {
            return Err(invalid("channels", "empty matrices"));
        }
        let mut flat = Vec::with_capacity(users * users);
        for row in channels {
            if row.len() != users {
                return Err(Error::DimensionMismatch {
                    expected: users,
                    found: row.len(),
                });
            }
            for h in row {
                if h.rows() != rx || h.cols() != tx {
                    return Err(invalid("channels", "matrices differ in shape"));
                }
                flat.push(h);
            }
        }
        Ok(Self {
            users,
            rx,
            tx,
            channels: flat,
            noise,
        })
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn rx(&self) -> usize {
        self.rx
    }

    pub fn tx(&self) -> usize {
        self.tx
    }

    pub fn noise(&self) -> &[f64] {
        &self.noise
    }

    /// `H_kl`.
    pub fn channel(&self, k: usize, l: usize) -> &CMatrix {
        &self.channels[k * self.users + l]
    }

    /// Same links restricted to `users` (in the given order).
    pub fn subnetwork(&self, users: &[usize]) -> Result<Self> {
        if users.iter().any(|&u| u >= self.users) {
            return Err(invalid("subnetwork", "user index out of range"));
        }
        let channels = users
            .iter()
            .map(|&k| users.iter().map(|&l| self.channel(k, l).clone()).collect())
            .collect();
        Self::new(channels, users.iter().map(|&k| self.noise[k]).collect())
    }
}

/// One unit-norm transmit and receive vector per link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamformerSet {
    pub transmit: Vec<CVector>,
    pub receive: Vec<CVector>,
}

impl BeamformerSet {
    /// Normalizes every vector; fails on zero vectors or wrong sizes.
    pub fn new(scn: &MimoScenario, transmit: Vec<CVector>, receive: Vec<CVector>) -> Result<Self> {
        let k = scn.users();
        if transmit.len() != k || receive.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                found: transmit.len().min(receive.len()),
            });
        }
        let fix = |v: Vec<CVector>, dim: usize| -> Result<Vec<CVector>> {
            v.into_iter()
                .enumerate()
                .map(|(user, x)| {
                    if x.len() != dim {
                        return Err(Error::DimensionMismatch {
                            expected: dim,
                            found: x.len(),
                        });
                    }
                    linalg::normalized(&x).ok_or(Error::DegenerateBeam { user })
                })
                .collect()
        };
        Ok(Self {
            transmit: fix(transmit, scn.tx())?,
            receive: fix(receive, scn.rx())?,
        })
    }

    pub(crate) fn check(&self, scn: &MimoScenario) -> Result<()> {
        let k = scn.users();
        if self.transmit.len() != k || self.receive.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                found: self.transmit.len().min(self.receive.len()),
            });
        }
        for (t, u) in self.transmit.iter().zip(&self.receive) {
            if t.len() != scn.tx() {
                return Err(Error::DimensionMismatch {
                    expected: scn.tx(),
                    found: t.len(),
                });
            }
            if u.len() != scn.rx() {
                return Err(Error::DimensionMismatch {
                    expected: scn.rx(),
                    found: u.len(),
                });
            }
        }
        Ok(())
    }
}

fn coupling(scn: &MimoScenario, beams: &BeamformerSet, k: usize, l: usize) -> f64 {
    let g = scn.channel(k, l).mul_vec(&beams.transmit[l]);
    linalg::dot(&beams.receive[k], &g).norm_sqr()
}

/// The affine model induced by fixed beamformers.
pub fn effective_gains(scn: &MimoScenario, beams: &BeamformerSet) -> Result<AffineModel> {
    beams.check(scn)?;
    let k = scn.users();
    let mut gains = vec![0.0; k * k];
    let mut noise = vec![0.0; k];
    for i in 0..k {
        let signal = coupling(scn, beams, i, i);
        if !(libm::sqrt(signal) >= DEGENERATE_GAIN) {
            return Err(Error::DegenerateBeam { user: i });
        }
        for j in 0..k {
            if j != i {
                gains[i * k + j] = coupling(scn, beams, i, j) / signal;
            }
        }
        noise[i] = scn.noise()[i] / signal;
    }
    AffineModel::new(gains, noise)
}

/// SIR of every link at powers `p`.
pub fn sirs(scn: &MimoScenario, beams: &BeamformerSet, p: &[f64]) -> Result<Vec<f64>> {
    let model = effective_gains(scn, beams)?;
    check_powers(scn.users(), p)?;
    Ok((0..p.len())
        .map(|k| p[k] / crate::InterferenceFunction::interference(&model, k, p))
        .collect())
}

/// Interference seen by optimally adapted receivers when the transmit
/// vectors are held fixed: receiver `k` sees transmitter `l` through
/// `H_kl t_l`.
pub fn receive_model(scn: &MimoScenario, transmit: &[CVector]) -> Result<MinStrategyModel> {
    if transmit.len() != scn.users() {
        return Err(Error::DimensionMismatch {
            expected: scn.users(),
            found: transmit.len(),
        });
    }
    let k = scn.users();
    let rows = (0..k)
        .map(|i| (0..k).map(|j| scn.channel(i, j).mul_vec(&transmit[j])).collect())
        .collect();
    MinStrategyModel::new(rows, scn.noise().to_vec())
}

/// Replaces every receive vector with the MMSE receiver at powers `p`.
pub fn mmse_receivers(scn: &MimoScenario, beams: &BeamformerSet, p: &[f64]) -> Result<BeamformerSet> {
    beams.check(scn)?;
    check_powers(scn.users(), p)?;
    let model = receive_model(scn, &beams.transmit)?;
    let receive = (0..scn.users()).map(|k| model.optimal_receiver(k, p)).collect();
    Ok(BeamformerSet {
        transmit: beams.transmit.clone(),
        receive,
    })
}

/// The network with every link reversed: `H'_kl = H_lk^H`, the receive
/// vectors transmit and the transmit vectors receive. Noise is unchanged.
#[derive(Debug, Clone, PartialEq)]
pub struct ReversedScenario {
    pub scenario: MimoScenario,
    pub beams: BeamformerSet,
}

pub fn reverse(scn: &MimoScenario, beams: &BeamformerSet) -> Result<ReversedScenario> {
    beams.check(scn)?;
    let k = scn.users();
    let channels = (0..k)
        .map(|i| (0..k).map(|j| scn.channel(j, i).adjoint()).collect())
        .collect();
    Ok(ReversedScenario {
        scenario: MimoScenario::new(channels, scn.noise().to_vec())?,
        beams: BeamformerSet {
            transmit: beams.receive.clone(),
            receive: beams.transmit.clone(),
        },
    })
}

/// Leading singular vectors of every direct channel `H_kk`.
pub fn svd_init(scn: &MimoScenario) -> BeamformerSet {
    let (transmit, receive) = (0..scn.users())
        .map(|k| {
            let (_, u, v) = linalg::leading_singular_pair(scn.channel(k, k));
            (v, u)
        })
        .unzip();
    BeamformerSet { transmit, receive }
}

/// Re-initializes from the SVD every link whose signal gain is degenerate.
/// Returns the affected users.
pub fn repair_degenerate(scn: &MimoScenario, beams: &mut BeamformerSet) -> Vec<usize> {
    let mut fresh: Option<BeamformerSet> = None;
    let mut reset = Vec::new();
    for k in 0..scn.users() {
        if !(libm::sqrt(coupling(scn, beams, k, k)) >= DEGENERATE_GAIN) {
            let init = fresh.get_or_insert_with(|| svd_init(scn));
            beams.transmit[k] = init.transmit[k].clone();
            beams.receive[k] = init.receive[k].clone();
            reset.push(k);
        }
    }
    reset
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RoundOptions {
    /// SIR values handed between the networks are clipped to this target.
    pub target_cap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundOutcome {
    pub beams: BeamformerSet,
    pub primal_powers: Vec<f64>,
    pub reversed_powers: Vec<f64>,
    /// Primal SIRs after the round.
    pub sirs: Vec<f64>,
    pub reinitialized: Vec<usize>,
}

fn clip(values: &[f64], cap: Option<f64>) -> Vec<f64> {
    values.iter().map(|v| cap.map_or(*v, |c| v.min(c))).collect()
}

/// One round of alternating transceiver optimization:
///
/// 1. MMSE receivers in the primal network at powers `p`;
/// 2. reversed powers meeting the primal SIRs;
/// 3. MMSE receivers of the reversed network, which become the new transmit
///    vectors;
/// 4. primal powers meeting the reversed SIRs.
///
/// Each step keeps the SIR profile (clipped to the cap) from decreasing, and
/// the powers in steps 2 and 4 are the exact fixed points of the respective
/// affine models.
pub fn transceiver_round(
    scn: &MimoScenario,
    beams: &BeamformerSet,
    p: &[f64],
    opts: &RoundOptions,
) -> Result<RoundOutcome> {
    let mut beams = mmse_receivers(scn, beams, p)?;
    let mut reinitialized = repair_degenerate(scn, &mut beams);
    let primal_sirs = sirs(scn, &beams, p)?;

    let reversed = reverse(scn, &beams)?;
    let reversed_model = effective_gains(&reversed.scenario, &reversed.beams)?;
    let reversed_powers = affine_fixed_point(&reversed_model, &clip(&primal_sirs, opts.target_cap))?.into_inner();

    let updated = mmse_receivers(&reversed.scenario, &reversed.beams, &reversed_powers)?;
    beams.transmit = updated.receive;
    for k in repair_degenerate(scn, &mut beams) {
        if !reinitialized.contains(&k) {
            reinitialized.push(k);
        }
    }
    let reversed_sirs = sirs(
        &reversed.scenario,
        &BeamformerSet {
            transmit: beams.receive.clone(),
            receive: beams.transmit.clone(),
        },
        &reversed_powers,
    )?;

    let model = effective_gains(scn, &beams)?;
    let primal_powers = affine_fixed_point(&model, &clip(&reversed_sirs, opts.target_cap))?.into_inner();
    let sirs = sirs(scn, &beams, &primal_powers)?;
    Ok(RoundOutcome {
        beams,
        primal_powers,
        reversed_powers,
        sirs,
        reinitialized,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BeamPolicy {
    /// SVD beams, never adapted.
    FixedSvd,
    /// SVD transmit beams, MMSE receivers adapted to the powers.
    ReceiveOnly,
    /// Alternating optimization of both ends.
    FullAlternating,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaxSirOptions {
    /// Relative width of the final bisection bracket.
    pub tol: f64,
    /// Targets at or above this are reported as the cap.
    pub cap: f64,
    /// Targets below this count as infeasible.
    pub floor: f64,
    /// Transceiver rounds per probe for the alternating policy.
    pub rounds: usize,
    /// Largest power of the balanced allocation that precedes every round of
    /// the alternating policy. Large values put the receivers in the
    /// interference-limited regime.
    pub power_scale: f64,
    pub probe: ProbeOptions,
}

impl Default for MaxSirOptions {
    fn default() -> Self {
        Self {
            tol: 1e-3,
            cap: 1e6,
            floor: 1e-6,
            rounds: 100,
            power_scale: 1e4,
            probe: ProbeOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaxSir {
    pub value: f64,
    /// The cap was reached.
    pub capped: bool,
}

/// Whether the common target `gamma` is attainable under `policy`.
pub fn common_target_feasible(
    scn: &MimoScenario,
    policy: BeamPolicy,
    gamma: f64,
    opts: &MaxSirOptions,
) -> Result<bool> {
    let k = scn.users();
    let targets = SirTargets::common(k, gamma, 1.0 + f64::EPSILON * 4.0)?;
    match policy {
        BeamPolicy::FixedSvd => {
            let model = effective_gains(scn, &svd_init(scn))?;
            Ok(c_gamma_affine(&model, &targets)? < 1.0)
        }
        BeamPolicy::ReceiveOnly => {
            let model = receive_model(scn, &svd_init(scn).transmit)?;
            Ok(probe_feasibility(&model, targets.gamma(), &opts.probe) == Verdict::Feasible)
        }
        BeamPolicy::FullAlternating => {
            let target = AlternatingTarget {
                gamma,
                rounds: opts.rounds,
                power_scale: opts.power_scale,
            };
            Ok(optimize_for_target(scn, &svd_init(scn), &target)?.reached)
        }
    }
}

/// A common SIR target pursued by alternating optimization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlternatingTarget {
    pub gamma: f64,
    pub rounds: usize,
    /// Largest power of the balanced allocation preceding every round.
    pub power_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlternatingOutcome {
    pub beams: BeamformerSet,
    /// The target is feasible for the returned beams.
    pub reached: bool,
    pub rounds: usize,
}

/// Runs transceiver rounds until the common target becomes feasible for the
/// effective model or the round budget is spent. Each round starts from
/// powers that balance the interference-limited SIRs at the current beams,
/// so the weakest links drive the update.
pub fn optimize_for_target(
    scn: &MimoScenario,
    beams: &BeamformerSet,
    target: &AlternatingTarget,
) -> Result<AlternatingOutcome> {
    let targets = SirTargets::common(scn.users(), target.gamma, 1.0 + f64::EPSILON * 4.0)?;
    let round_opts = RoundOptions {
        target_cap: Some(target.gamma),
    };
    let mut beams = beams.clone();
    for round in 0..=target.rounds {
        let model = effective_gains(scn, &beams)?;
        if c_gamma_affine(&model, &targets)? < 1.0 {
            return Ok(AlternatingOutcome {
                beams,
                reached: true,
                rounds: round,
            });
        }
        if round == target.rounds {
            break;
        }
        let p = balanced_powers(&model, target.gamma, target.power_scale);
        beams = transceiver_round(scn, &beams, &p, &round_opts)?.beams;
    }
    Ok(AlternatingOutcome {
        beams,
        reached: false,
        rounds: target.rounds,
    })
}

/// Powers proportional to the Perron vector of `γV`, scaled so the largest is
/// `scale`. They equalize the interference-limited SIRs across users.
fn balanced_powers(model: &AffineModel, gamma: f64, scale: f64) -> Vec<f64> {
    let k = crate::InterferenceFunction::users(model);
    let v = model.gains();
    let mut x = vec![1.0; k];
    for _ in 0..2000 {
        let mut next: Vec<f64> = (0..k)
            .map(|i| x[i] + gamma * (0..k).map(|j| v[i * k + j] * x[j]).sum::<f64>())
            .collect();
        let m = next.iter().cloned().fold(0.0, f64::max);
        next.iter_mut().for_each(|y| *y /= m);
        let diff = next.iter().zip(&x).fold(0.0f64, |d, (a, b)| d.max((a - b).abs()));
        x = next;
        if diff < 1e-12 {
            break;
        }
    }
    x.iter().map(|y| y * scale).collect()
}

/// Largest common SIR target attainable under `policy`, by geometric
/// bisection between `floor` and `cap`. Returns 0 if even the floor fails.
pub fn max_common_sir(scn: &MimoScenario, policy: BeamPolicy, opts: &MaxSirOptions) -> Result<MaxSir> {
    if !(opts.floor > 0.0 && opts.cap > opts.floor && opts.tol > 0.0) {
        return Err(invalid("max-SIR options", "need 0 < floor < cap and tol > 0"));
    }
    if common_target_feasible(scn, policy, opts.cap, opts)? {
        return Ok(MaxSir {
            value: opts.cap,
            capped: true,
        });
    }
    if !common_target_feasible(scn, policy, opts.floor, opts)? {
        return Ok(MaxSir {
            value: 0.0,
            capped: false,
        });
    }
    let (mut lo, mut hi) = (opts.floor, opts.cap);
    while hi / lo - 1.0 > opts.tol {
        let mid = libm::sqrt(lo * hi);
        if common_target_feasible(scn, policy, mid, opts)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(MaxSir {
        value: lo,
        capped: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::InterferenceFunction;
    use num_complex::Complex64;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn diag(a: f64, b: f64) -> CMatrix {
        CMatrix::new(2, 2, vec![c(a, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(b, 0.0)]).unwrap()
    }

    fn e(i: usize) -> CVector {
        (0..2).map(|j| c(if i == j { 1.0 } else { 0.0 }, 0.0)).collect()
    }

    #[test]
    fn decoupled_effective_model() {
        let scn = MimoScenario::new(
            vec![
                vec![diag(1.0, 1.0), CMatrix::zeros(2, 2)],
                vec![CMatrix::zeros(2, 2), diag(1.0, 1.0)],
            ],
            vec![0.5, 0.5],
        )
        .unwrap();
        let beams = BeamformerSet::new(&scn, vec![e(0), e(0)], vec![e(0), e(0)]).unwrap();
        let m = effective_gains(&scn, &beams).unwrap();
        assert_eq!(m.gains(), &[0.0; 4]);
        assert_eq!(m.noise(), &[0.5, 0.5]);
    }

    #[test]
    fn single_user_noise() {
        let scn = MimoScenario::new(vec![vec![diag(2.0, 2.0)]], vec![1.0]).unwrap();
        let beams = BeamformerSet::new(&scn, vec![e(0)], vec![e(0)]).unwrap();
        assert_eq!(effective_gains(&scn, &beams).unwrap().noise(), &[0.25]);
        let zero = BeamformerSet::new(&scn, vec![e(0)], vec![e(1)]).unwrap();
        assert!(matches!(
            effective_gains(&scn, &zero),
            Err(Error::DegenerateBeam { user: 0 })
        ));
    }

    #[test]
    fn svd_of_diagonal() {
        let scn = MimoScenario::new(vec![vec![diag(3.0, 1.0)]], vec![1.0]).unwrap();
        let b = svd_init(&scn);
        assert!(linalg::norm(&b.transmit[0].iter().zip(&e(0)).map(|(a, b)| a - b).collect::<Vec<_>>()) < 1e-12);
        assert!((b.receive[0][0].norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reverse_twice_is_identity() {
        let h = |s: f64| CMatrix::new(2, 2, vec![c(s, 0.3), c(-0.2, s), c(0.7, -0.1), c(0.4, s)]).unwrap();
        let scn = MimoScenario::new(vec![vec![h(1.0), h(0.2)], vec![h(-0.5), h(2.0)]], vec![1.0, 0.7]).unwrap();
        let beams = svd_init(&scn);
        let once = reverse(&scn, &beams).unwrap();
        let twice = reverse(&once.scenario, &once.beams).unwrap();
        assert_eq!(twice.scenario, scn);
        assert_eq!(
            effective_gains(&twice.scenario, &twice.beams).unwrap(),
            effective_gains(&scn, &beams).unwrap()
        );
    }

    #[test]
    fn orthogonal_receivers_null_interference() {
        // receiver k sees transmitter l along e_l
        let col = |i: usize| {
            let mut m = CMatrix::zeros(2, 2);
            m.set(i, 0, c(1.0, 0.0));
            m
        };
        let scn = MimoScenario::new(vec![vec![col(0), col(1)], vec![col(0), col(1)]], vec![1.0, 1.0]).unwrap();
        let beams = BeamformerSet::new(&scn, vec![e(0), e(0)], vec![e(0), e(1)]).unwrap();
        let p = [3.0, 40.0];
        let beams = mmse_receivers(&scn, &beams, &p).unwrap();
        let s = sirs(&scn, &beams, &p).unwrap();
        assert!((s[0] - 3.0).abs() < 1e-12 && (s[1] - 40.0).abs() < 1e-12);
        let rm = receive_model(&scn, &beams.transmit).unwrap();
        assert!((rm.interference(0, &p) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn decoupled_max_sir_is_capped() {
        let scn = MimoScenario::new(
            vec![
                vec![diag(1.0, 1.0), CMatrix::zeros(2, 2)],
                vec![CMatrix::zeros(2, 2), diag(1.0, 1.0)],
            ],
            vec![1.0, 1.0],
        )
        .unwrap();
        for policy in [
            BeamPolicy::FixedSvd,
            BeamPolicy::ReceiveOnly,
            BeamPolicy::FullAlternating,
        ] {
            let r = max_common_sir(&scn, policy, &MaxSirOptions::default()).unwrap();
            assert!(r.capped, "{policy:?}");
        }
    }
}
