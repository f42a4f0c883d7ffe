//! Distributed admission control with active link protection.
//!
//! Every user updates synchronously:
//! active users (meeting their target) move to `δ γ_k I_k(p)`, inactive users
//! ramp their power by `δ`. Equivalently `p(n+1) = δ min{p(n), Γ I(p(n))}`.
//! Users that meet their target keep meeting it, and inactive users see their
//! SIR strictly increase, so admissions are never undone.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::interference::{check_powers, eval, InterferenceFunction, PowerVector, SirTargets};

/// Powers at or beyond this magnitude end a run as exhausted.
pub(crate) const OVERFLOW: f64 = 1e290;

/// The network at one iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkState {
    pub step: usize,
    pub powers: Vec<f64>,
    /// Unweighted interference `I(p)`.
    pub interference: Vec<f64>,
    pub sirs: Vec<f64>,
    /// `p_k ≥ γ_k I_k(p)`; ties count as active.
    pub active: Vec<bool>,
    /// Users broadcasting a distress signal (constrained runs only).
    pub distress: Vec<bool>,
    /// Whether the powers satisfied the gating condition; `None` where no
    /// gate is in use.
    pub gate: Option<bool>,
}

impl NetworkState {
    /// Evaluates the model at `powers` and derives SIRs and the partition.
    pub fn observe<M: InterferenceFunction + ?Sized>(
        model: &M,
        targets: &SirTargets,
        step: usize,
        powers: Vec<f64>,
    ) -> Result<Self> {
        check_powers(model.users(), &powers)?;
        targets.check_users(model.users())?;
        Ok(Self::observe_unchecked(model, targets, step, powers))
    }

    pub(crate) fn observe_unchecked<M: InterferenceFunction + ?Sized>(
        model: &M,
        targets: &SirTargets,
        step: usize,
        powers: Vec<f64>,
    ) -> Self {
        let interference = eval(model, &powers);
        let sirs = powers.iter().zip(&interference).map(|(p, i)| p / i).collect();
        let active = powers
            .iter()
            .zip(&interference)
            .zip(targets.gamma())
            .map(|((p, i), g)| *p >= g * i)
            .collect();
        let k = powers.len();
        Self {
            step,
            powers,
            interference,
            sirs,
            active,
            distress: vec![false; k],
            gate: None,
        }
    }

    pub fn users(&self) -> usize {
        self.powers.len()
    }

    pub fn active_users(&self) -> Vec<usize> {
        (0..self.users()).filter(|&k| self.active[k]).collect()
    }

    pub fn inactive_users(&self) -> Vec<usize> {
        (0..self.users()).filter(|&k| !self.active[k]).collect()
    }

    pub fn all_active(&self) -> bool {
        self.active.iter().all(|a| *a)
    }

    /// `Γ I(p)` at this state.
    pub fn weighted_interference(&self, targets: &SirTargets) -> Vec<f64> {
        self.interference
            .iter()
            .zip(targets.gamma())
            .map(|(i, g)| g * i)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// All users admitted and powers settled.
    Converged,
    /// All users admitted and every power beyond the divergence guard.
    Diverged,
    /// Iteration budget exhausted (or powers left floating-point range).
    Budget,
    /// All users admitted (runs that stop at admission).
    AdmittedAll,
    /// Some users never admitted; the normalized active powers settled.
    Steady,
    /// A user was given up on after a protection violation or a permanent
    /// distress condition.
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    Admitted {
        user: usize,
    },
    /// A previously admitted user fell below its target.
    Violation {
        user: usize,
    },
    GateOpened,
    GateClosed,
    /// The admission outcome was decided.
    Decision {
        admitted: Vec<usize>,
        rejected: Vec<usize>,
    },
    DeltaReduced {
        delta: f64,
    },
    BeamReset {
        user: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub step: usize,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<NetworkState>,
    pub termination: Termination,
    pub events: Vec<Event>,
}

impl Trajectory {
    pub fn last(&self) -> &NetworkState {
        &self.states[self.states.len() - 1]
    }

    /// First step at which `user` is active.
    pub fn admission_step(&self, user: usize) -> Option<usize> {
        self.states.iter().find(|s| s.active[user]).map(|s| s.step)
    }

    /// Number of `(user, step)` pairs where a user that was active at an
    /// earlier step is not active.
    pub fn alp_violations(&self) -> usize {
        count_violations(self.states.iter().map(|s| s.active.as_slice()))
    }
}

/// Counts `(user, step)` pairs where an earlier-active user is inactive.
pub fn count_violations<'a, I>(partitions: I) -> usize
where
    I: IntoIterator<Item = &'a [bool]>,
{
    let mut seen: Vec<bool> = Vec::new();
    let mut count = 0;
    for active in partitions {
        if seen.is_empty() {
            seen = vec![false; active.len()];
        }
        for (s, a) in seen.iter_mut().zip(active) {
            if *s && !*a {
                count += 1;
            }
            *s |= *a;
        }
    }
    count
}

/// Appends admission and violation events for the transition `prev -> next`.
pub fn record_transitions(ever_active: &mut [bool], next: &NetworkState, events: &mut Vec<Event>) {
    for (k, seen) in ever_active.iter_mut().enumerate() {
        if next.active[k] && !*seen {
            events.push(Event {
                step: next.step,
                kind: EventKind::Admitted { user: k },
            });
            *seen = true;
        } else if *seen && !next.active[k] {
            events.push(Event {
                step: next.step,
                kind: EventKind::Violation { user: k },
            });
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlpConfig {
    pub targets: SirTargets,
    pub initial_powers: PowerVector,
    /// When given, must match the partition induced by the initial powers.
    pub initial_active: Option<Vec<usize>>,
    /// Relative ∞-norm change regarded as settled.
    pub tol: f64,
    /// Divergence threshold on every power once all users are active.
    pub guard: f64,
    pub max_iter: usize,
    /// Consecutive settled steps required before stopping.
    pub window: usize,
}

impl AlpConfig {
    pub fn new(targets: SirTargets, initial_powers: PowerVector) -> Self {
        Self {
            targets,
            initial_powers,
            initial_active: None,
            tol: 1e-10,
            guard: 1e12,
            max_iter: 10_000,
            window: 3,
        }
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    /// Validates the configuration against `model` and returns the initial
    /// state.
    pub fn initial_state<M: InterferenceFunction + ?Sized>(&self, model: &M) -> Result<NetworkState> {
        if !(self.tol > 0.0) || !(self.guard > 0.0) || self.window == 0 {
            return Err(invalid("run configuration", "tol, guard and window must be positive"));
        }
        let state = NetworkState::observe(model, &self.targets, 0, self.initial_powers.to_vec())?;
        if let Some(listed) = &self.initial_active {
            let mut expected = vec![false; state.users()];
            for &k in listed {
                if k >= expected.len() {
                    return Err(invalid("initial active set", "user index out of range"));
                }
                expected[k] = true;
            }
            if expected != state.active {
                return Err(invalid(
                    "initial active set",
                    "does not match the SIRs at the initial powers",
                ));
            }
        }
        if !state.active.iter().any(|a| *a) {
            return Err(invalid("initial active set", "at least one user must be admitted"));
        }
        Ok(state)
    }
}

/// One synchronous update `p -> δ min{p, Γ I(p)}`.
pub fn alp_step<M: InterferenceFunction + ?Sized>(
    model: &M,
    targets: &SirTargets,
    state: &NetworkState,
) -> NetworkState {
    let delta = targets.delta();
    let powers = state
        .powers
        .iter()
        .zip(state.weighted_interference(targets))
        .map(|(p, w)| delta * p.min(w))
        .collect();
    NetworkState::observe_unchecked(model, targets, state.step + 1, powers)
}

fn rel_change(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let diff = a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

/// Runs the admission iteration until it converges, diverges, settles in
/// normalized form, or exhausts its budget. Only invalid input is an error.
pub fn run_alp<M: InterferenceFunction + ?Sized>(model: &M, config: &AlpConfig) -> Result<Trajectory> {
    let targets = &config.targets;
    let delta = targets.delta();
    let first = config.initial_state(model)?;
    let mut ever_active = first.active.clone();
    let mut events = Vec::new();
    let mut states = vec![first];
    let mut settled = 0usize;
    let mut termination = Termination::Budget;
    for _ in 0..config.max_iter {
        let prev = &states[states.len() - 1];
        let next = alp_step(model, targets, prev);
        if next.powers.iter().any(|p| !(p.is_finite() && *p < OVERFLOW)) {
            break;
        }
        record_transitions(&mut ever_active, &next, &mut events);
        let same_partition = prev.active == next.active;
        let progress = if next.all_active() {
            rel_change(&next.powers, &prev.powers)
        } else if same_partition {
            // change of the normalized active powers p_a(n) / δ^n
            let active = next.active_users();
            let scaled: Vec<f64> = active.iter().map(|&k| next.powers[k] / delta).collect();
            let before: Vec<f64> = active.iter().map(|&k| prev.powers[k]).collect();
            rel_change(&scaled, &before)
        } else {
            f64::INFINITY
        };
        settled = if progress < config.tol { settled + 1 } else { 0 };
        let all_active = next.all_active();
        let diverged = all_active && next.powers.iter().all(|p| *p > config.guard);
        states.push(next);
        if diverged {
            termination = Termination::Diverged;
            break;
        }
        if settled >= config.window {
            termination = if all_active {
                Termination::Converged
            } else {
                Termination::Steady
            };
            break;
        }
    }
    Ok(Trajectory {
        states,
        termination,
        events,
    })
}

/// Active powers rescaled by `δ^n` for a run whose partition has settled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedTrajectory {
    pub active: Vec<usize>,
    pub inactive: Vec<usize>,
    /// Initial powers of the inactive users, which their normalized powers
    /// keep forever.
    pub lambda: Vec<f64>,
    /// Step of the first entry of `pi`.
    pub start: usize,
    /// `π(n) = p_a(n) / δ^n` for every step from `start` on.
    pub pi: Vec<Vec<f64>>,
}

impl NormalizedTrajectory {
    pub fn limit(&self) -> &[f64] {
        &self.pi[self.pi.len() - 1]
    }
}

/// Normalizes a settled run. Fails unless the run ended in
/// [`Termination::Steady`]; the error names the first step of the final
/// partition.
pub fn normalized_trajectory(traj: &Trajectory, targets: &SirTargets) -> Result<NormalizedTrajectory> {
    let last = traj.last();
    let start = traj
        .states
        .iter()
        .rposition(|s| s.active != last.active)
        .map_or(0, |i| i + 1);
    if traj.termination != Termination::Steady {
        return Err(Error::PartitionUnstable {
            index: traj.states[start].step,
        });
    }
    let active = last.active_users();
    let inactive = last.inactive_users();
    let lambda = inactive.iter().map(|&k| traj.states[0].powers[k]).collect();
    let ln_delta = libm::log(targets.delta());
    let pi = traj.states[start..]
        .iter()
        .map(|s| {
            active
                .iter()
                .map(|&k| libm::exp(libm::log(s.powers[k]) - s.step as f64 * ln_delta))
                .collect()
        })
        .collect();
    Ok(NormalizedTrajectory {
        active,
        inactive,
        lambda,
        start: traj.states[start].step,
        pi,
    })
}

/// Whether every active user's interference responds to some inactive
/// user's power. Vacuously true without inactive users.
pub fn actives_coupled<M: InterferenceFunction + ?Sized>(model: &M, state: &NetworkState) -> bool {
    let inactive = state.inactive_users();
    if inactive.is_empty() {
        return true;
    }
    state.active_users().into_iter().all(|k| {
        let base = model.interference(k, &state.powers);
        inactive.iter().any(|&l| {
            let mut p = state.powers.clone();
            p[l] = 2.0 * p[l] + 1.0;
            model.interference(k, &p) > base
        })
    })
}

/// The map `p -> min{p, Γ I(p)}` whose `δ`-multiple is the admission
/// iteration. It is not a standard interference function once some user is
/// inactive, which [`crate::interference::check_axioms`] detects.
#[derive(Debug, Clone)]
pub struct AlpMap<M> {
    pub model: M,
    pub targets: SirTargets,
}

impl<M: InterferenceFunction> InterferenceFunction for AlpMap<M> {
    fn users(&self) -> usize {
        self.model.users()
    }

    fn interference(&self, k: usize, p: &[f64]) -> f64 {
        p[k].min(self.targets.gamma()[k] * self.model.interference(k, p))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feasibility::{yates_fixed_point, IterationOptions};
    use crate::interference::{check_axioms, restrict_active, AsymptoticModel, AxiomCheck, Weighted};
    use crate::AffineModel;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn symmetric() -> AffineModel {
        AffineModel::from_rows(&[vec![0.0, 0.5], vec![0.5, 0.0]], vec![1.0, 1.0]).unwrap()
    }

    fn config(gamma: f64, delta: f64, p0: [f64; 2]) -> AlpConfig {
        AlpConfig::new(
            SirTargets::common(2, gamma, delta).unwrap(),
            PowerVector::new(p0.to_vec()).unwrap(),
        )
    }

    #[test]
    fn single_step_by_hand() {
        let m = symmetric();
        let c = config(1.0, 1.5, [2.0, 0.1]);
        let s0 = c.initial_state(&m).unwrap();
        assert_eq!(s0.active, vec![true, false]);
        let s1 = alp_step(&m, &c.targets, &s0);
        assert!((s1.powers[0] - 1.575).abs() < 1e-15);
        assert!((s1.powers[1] - 0.15).abs() < 1e-15);
        assert_eq!(s1.step, 1);
    }

    #[test]
    fn fixed_point_is_stationary() {
        let m = symmetric();
        let c = config(1.0, 1.5, [6.0, 6.0]);
        let s = c.initial_state(&m).unwrap();
        assert_eq!(alp_step(&m, &c.targets, &s).powers, vec![6.0, 6.0]);
    }

    #[test]
    fn mismatched_initial_set_is_rejected() {
        let m = symmetric();
        let mut c = config(1.0, 1.5, [2.0, 0.1]);
        c.initial_active = Some(vec![1]);
        assert!(c.initial_state(&m).is_err());
        c.initial_active = Some(vec![0]);
        assert!(c.initial_state(&m).is_ok());
        let c = config(1.0, 1.5, [0.1, 0.1]);
        assert!(c.initial_state(&m).is_err());
    }

    #[test]
    fn regimes_terminate_as_expected() {
        let m = symmetric();
        let t = run_alp(&m, &config(1.0, 1.5, [2.0, 0.01])).unwrap();
        assert_eq!(t.termination, Termination::Converged);
        assert!(t.admission_step(1).is_some());
        for p in &t.last().powers {
            assert!((p - 6.0).abs() < 1e-8 * 6.0);
        }
        let t = run_alp(&m, &config(1.0, 2.2, [2.0, 0.01])).unwrap();
        assert_eq!(t.termination, Termination::Diverged);
        let t = run_alp(&m, &config(3.0, 1.5, [10.0, 0.01])).unwrap();
        assert_eq!(t.termination, Termination::Steady);
        assert_eq!(t.alp_violations(), 0);
    }

    #[test]
    fn steady_limit_matches_restricted_fixed_point() {
        let m = symmetric();
        let c = config(3.0, 1.5, [10.0, 0.01]);
        let t = run_alp(&m, &c).unwrap();
        let norm = normalized_trajectory(&t, &c.targets).unwrap();
        assert_eq!(norm.active, vec![0]);
        // J_1((π, λ)) = 3 * 0.5 * λ
        let expected = 1.5 * norm.lambda[0];
        assert!((norm.limit()[0] - expected).abs() < 1e-6 * expected);

        let weighted = Weighted::targets(&m, &c.targets).unwrap();
        let j = AsymptoticModel::new(weighted);
        let r = restrict_active(&j, &norm.active, &norm.lambda).unwrap();
        let fp = yates_fixed_point(
            &r,
            &SirTargets::common(1, 1.0, 1.5).unwrap(),
            &[1.0],
            &IterationOptions::default(),
        )
        .unwrap();
        assert!((fp[0] - norm.limit()[0]).abs() < 1e-6 * fp[0]);
    }

    #[test]
    fn unsettled_run_cannot_be_normalized() {
        let m = symmetric();
        let c = config(1.0, 1.5, [2.0, 0.01]);
        let t = run_alp(&m, &c).unwrap();
        assert!(matches!(
            normalized_trajectory(&t, &c.targets),
            Err(Error::PartitionUnstable { .. })
        ));
    }

    #[test]
    fn coupling_detects_orthogonal_users() {
        let c = config(1.0, 1.5, [2.0, 0.1]);
        let s = c.initial_state(&symmetric()).unwrap();
        assert!(actives_coupled(&symmetric(), &s));
        let decoupled = AffineModel::from_rows(&[vec![0.0, 0.0], vec![0.5, 0.0]], vec![1.0, 1.0]).unwrap();
        let s = c.initial_state(&decoupled).unwrap();
        assert!(!actives_coupled(&decoupled, &s));
    }

    #[test]
    fn alp_map_is_not_standard() {
        let map = AlpMap {
            model: symmetric(),
            targets: SirTargets::common(2, 1.0, 1.5).unwrap(),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let report = check_axioms(&map, &AxiomCheck::default(), &mut rng);
        assert!(!(report.positivity && report.scalability));
    }
}
