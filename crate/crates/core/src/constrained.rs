//! Admission control under per-user power caps.
//!
//! The capped iteration is `p(n+1) = min{δ p(n), δ Γ I(p(n)), p̂}`. Caps can
//! break protection of admitted users, so this module also provides the
//! sufficient conditions that restore it and the distress-signaling scheme
//! that enforces one of them online: whenever an admitted user's power
//! exceeds its local bound, everybody holds power (`p -> min{p, δ Γ I(p)}`)
//! until the bound is met again.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::alp::{record_transitions, AlpConfig, Event, EventKind, NetworkState, Termination, Trajectory, OVERFLOW};
use crate::error::{invalid, Error, Result};
use crate::feasibility::{constrained_fixed_point, IterationOptions, PowerConstraints};
use crate::interference::{check_powers, eval, InterferenceFunction, SirTargets};

const REL_SLACK: f64 = 1e-12;

/// Largest scaling tried by [`compute_lambda`].
pub const LAMBDA_MAX: f64 = 1e6;

fn check_caps(constraints: &PowerConstraints, p: &[f64]) -> Result<()> {
    for (user, (&power, &cap)) in p.iter().zip(constraints.caps()).enumerate() {
        if power > cap {
            return Err(Error::AboveCap { user, power, cap });
        }
    }
    Ok(())
}

/// One capped update `p -> min{δ p, δ Γ I(p), p̂}`.
pub fn constrained_alp_step<M: InterferenceFunction + ?Sized>(
    model: &M,
    targets: &SirTargets,
    constraints: &PowerConstraints,
    state: &NetworkState,
) -> Result<NetworkState> {
    constraints.check_users(model.users())?;
    check_caps(constraints, &state.powers)?;
    Ok(capped_step(model, targets, constraints, state))
}

fn capped_step<M: InterferenceFunction + ?Sized>(
    model: &M,
    targets: &SirTargets,
    constraints: &PowerConstraints,
    state: &NetworkState,
) -> NetworkState {
    let delta = targets.delta();
    let powers = state
        .powers
        .iter()
        .zip(state.weighted_interference(targets))
        .zip(constraints.caps())
        .map(|((p, w), cap)| (delta * p.min(w)).min(*cap))
        .collect();
    NetworkState::observe_unchecked(model, targets, state.step + 1, powers)
}

fn rel_change(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let diff = a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    diff / scale.max(f64::MIN_POSITIVE)
}

/// Runs the capped iteration until the powers settle. Protection
/// violations are recorded as events; the run always ends `Converged` or,
/// if the budget runs out first, `Budget`.
pub fn run_constrained<M: InterferenceFunction + ?Sized>(
    model: &M,
    config: &AlpConfig,
    constraints: &PowerConstraints,
) -> Result<Trajectory> {
    constraints.check_users(model.users())?;
    check_caps(constraints, &config.initial_powers)?;
    let first = config.initial_state(model)?;
    let mut ever_active = first.active.clone();
    let mut events = Vec::new();
    let mut states = vec![first];
    let mut settled = 0;
    let mut termination = Termination::Budget;
    for _ in 0..config.max_iter {
        let prev = &states[states.len() - 1];
        let next = capped_step(model, &config.targets, constraints, prev);
        record_transitions(&mut ever_active, &next, &mut events);
        settled = if rel_change(&next.powers, &prev.powers) < config.tol {
            settled + 1
        } else {
            0
        };
        states.push(next);
        if settled >= config.window {
            termination = Termination::Converged;
            break;
        }
    }
    Ok(Trajectory {
        states,
        termination,
        events,
    })
}

/// Whether the caps themselves meet the targets, `p̂ ≥ Γ I(p̂)`. When they
/// do, capped runs never undo an admission.
pub fn caps_meet_targets<M: InterferenceFunction + ?Sized>(
    model: &M,
    targets: &SirTargets,
    constraints: &PowerConstraints,
) -> Result<bool> {
    constraints.check_users(model.users())?;
    targets.check_users(model.users())?;
    let caps = constraints.caps();
    let i = eval(model, caps);
    Ok((0..caps.len()).all(|k| caps[k] >= targets.gamma()[k] * i[k]))
}

fn weighted<M: InterferenceFunction + ?Sized>(model: &M, targets: &SirTargets, p: &[f64]) -> Vec<f64> {
    let mut out = eval(model, p);
    for (o, g) in out.iter_mut().zip(targets.gamma()) {
        *o *= g;
    }
    out
}

/// Components where `δ Γ I(p) ≤ p ≤ p̂` fails (with relative slack `1e-9`).
pub fn delta_validity_violations<M: InterferenceFunction + ?Sized>(
    model: &M,
    targets: &SirTargets,
    constraints: &PowerConstraints,
    p: &[f64],
) -> Vec<usize> {
    let delta = targets.delta();
    let w = weighted(model, targets, p);
    (0..p.len())
        .filter(|&k| {
            let slack = 1e-9 * p[k].abs().max(f64::MIN_POSITIVE);
            delta * w[k] > p[k] + slack || p[k] > constraints.caps()[k] * (1.0 + 1e-9)
        })
        .collect()
}

/// Largest `λ ∈ [1, LAMBDA_MAX]` with `Γ I(λ δ p) ≤ p̂`, for a `δ`-valid `p`
/// (geometric bisection, 60 halvings).
pub fn compute_lambda<M: InterferenceFunction + ?Sized>(
    model: &M,
    targets: &SirTargets,
    constraints: &PowerConstraints,
    p: &[f64],
) -> Result<f64> {
    let k = model.users();
    check_powers(k, p)?;
    targets.check_users(k)?;
    constraints.check_users(k)?;
    let components = delta_validity_violations(model, targets, constraints, p);
    if !components.is_empty() {
        return Err(Error::NotDeltaValid { components });
    }
    let delta = targets.delta();
    let caps = constraints.caps();
    let fits = |lambda: f64| {
        let scaled: Vec<f64> = p.iter().map(|x| lambda * delta * x).collect();
        weighted(model, targets, &scaled).iter().zip(caps).all(|(w, c)| w <= c)
    };
    if fits(LAMBDA_MAX) {
        return Ok(LAMBDA_MAX);
    }
    let (mut lo, mut hi) = (1.0, LAMBDA_MAX);
    for _ in 0..60 {
        let mid = libm::sqrt(lo * hi);
        if fits(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// `min_k δλ Γ_k I_k(p/(δλ)) / Γ_k I_k(p)`, the largest `β` for which the
/// local bound `p ≤ β δ Γ I(p)` still certifies protection.
pub fn beta_max<M: InterferenceFunction + ?Sized>(
    model: &M,
    targets: &SirTargets,
    powers: &[f64],
    lambda: f64,
) -> Result<f64> {
    check_powers(model.users(), powers)?;
    targets.check_users(model.users())?;
    if !(lambda >= 1.0) {
        return Err(invalid("lambda", "must be at least 1"));
    }
    let s = targets.delta() * lambda;
    let shrunk: Vec<f64> = powers.iter().map(|x| x / s).collect();
    let at_p = eval(model, powers);
    let at_shrunk = eval(model, &shrunk);
    Ok(at_p
        .iter()
        .zip(&at_shrunk)
        .map(|(a, b)| s * b / a)
        .fold(f64::INFINITY, f64::min))
}

/// Parameters of the online protection conditions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateParams {
    pub lambda: f64,
    pub beta: f64,
    /// A `δ`-valid reference vector for the `p ≤ λ δ p_ref` test.
    pub reference: Option<Vec<f64>>,
}

/// Outcome of each sufficient condition at one power vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OnlineConditions {
    /// `p ≤ λ δ p_ref`; `None` without a reference vector.
    pub below_reference: Option<bool>,
    /// `p/(λδ) ≤ δ Γ I(p/(λδ))`.
    pub lambda_margin: bool,
    /// `p ≤ δ² Γ I(p/δ)`.
    pub delta_squared_margin: bool,
    /// `p ≤ β δ Γ I(p)`.
    pub beta_margin: bool,
}

fn within(lhs: f64, rhs: f64) -> bool {
    lhs <= rhs + REL_SLACK * rhs.abs()
}

/// Evaluates every sufficient protection condition at `powers`.
pub fn check_online_conditions<M: InterferenceFunction + ?Sized>(
    model: &M,
    targets: &SirTargets,
    powers: &[f64],
    params: &GateParams,
) -> Result<OnlineConditions> {
    let k = model.users();
    check_powers(k, powers)?;
    targets.check_users(k)?;
    if !(params.lambda >= 1.0 && params.beta >= 1.0) {
        return Err(invalid("gate parameters", "lambda and beta must be at least 1"));
    }
    let delta = targets.delta();
    let below_reference = match &params.reference {
        Some(r) => {
            check_powers(k, r)?;
            Some(powers.iter().zip(r).all(|(p, r)| within(*p, params.lambda * delta * r)))
        }
        None => None,
    };
    let gate = |condition| {
        local_violations(model, targets, powers, condition, params.lambda, params.beta)
            .iter()
            .all(|v| !v)
    };
    Ok(OnlineConditions {
        below_reference,
        lambda_margin: gate(GateCondition::Lambda),
        delta_squared_margin: gate(GateCondition::DeltaSquared),
        beta_margin: gate(GateCondition::Beta),
    })
}

/// The local test that decides whether an admitted user signals distress.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GateCondition {
    /// `p_k/(λδ) ≤ δ Γ_k I_k(p/(λδ))`.
    Lambda,
    /// `p_k ≤ δ² Γ_k I_k(p/δ)`.
    DeltaSquared,
    /// `p_k ≤ β δ Γ_k I_k(p)`, checkable from the user's own measurement.
    #[default]
    Beta,
}

/// Per-user violation of `condition` at `powers`.
fn local_violations<M: InterferenceFunction + ?Sized>(
    model: &M,
    targets: &SirTargets,
    powers: &[f64],
    condition: GateCondition,
    lambda: f64,
    beta: f64,
) -> Vec<bool> {
    let delta = targets.delta();
    match condition {
        GateCondition::Beta => {
            let w = weighted(model, targets, powers);
            powers
                .iter()
                .zip(&w)
                .map(|(p, w)| !within(*p, beta * delta * w))
                .collect()
        }
        GateCondition::Lambda | GateCondition::DeltaSquared => {
            let s = if condition == GateCondition::Lambda {
                lambda * delta
            } else {
                delta
            };
            let shrunk: Vec<f64> = powers.iter().map(|x| x / s).collect();
            let w = weighted(model, targets, &shrunk);
            shrunk.iter().zip(&w).map(|(q, w)| !within(*q, delta * w)).collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistressState {
    pub broadcasting: Vec<usize>,
    pub beta: f64,
    pub lambda: f64,
    /// The powers satisfy the gating condition (nobody broadcasts).
    pub in_gate: bool,
    /// `β` is no longer recomputed.
    pub beta_frozen: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaReduction {
    /// Consecutive distress steps after which `δ - 1` is halved, once.
    pub window: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DistressConfig {
    pub gate: GateCondition,
    /// `None`: computed at `p°`, or 1 when `p°` is not `δ`-valid.
    pub lambda: Option<f64>,
    /// `None`: `β_max` at the current powers, frozen once the gate opens.
    pub beta: Option<f64>,
    pub delta_reduction: Option<DeltaReduction>,
}

impl Default for DistressConfig {
    fn default() -> Self {
        Self {
            gate: GateCondition::Beta,
            lambda: None,
            beta: None,
            delta_reduction: None,
        }
    }
}

/// `λ` as configured, or derived from `p°`.
pub fn resolve_lambda<M: InterferenceFunction + ?Sized>(
    model: &M,
    targets: &SirTargets,
    constraints: &PowerConstraints,
    config: &DistressConfig,
) -> Result<f64> {
    if let Some(l) = config.lambda {
        if !(l >= 1.0 && l.is_finite()) {
            return Err(invalid("lambda", "must be finite and at least 1"));
        }
        return Ok(l);
    }
    let p_circle = constrained_fixed_point(model, targets, constraints, &IterationOptions::default())?;
    match compute_lambda(model, targets, constraints, &p_circle) {
        Ok(l) => Ok(l),
        Err(Error::NotDeltaValid { .. }) => Ok(1.0),
        Err(e) => Err(e),
    }
}

/// Distress status of `state`: who broadcasts and whether the gate is open.
/// Adaptive `β` is refreshed here unless frozen.
pub fn distress_status<M: InterferenceFunction + ?Sized>(
    model: &M,
    targets: &SirTargets,
    state: &NetworkState,
    condition: GateCondition,
    previous: &DistressState,
    adaptive_beta: bool,
) -> DistressState {
    let mut beta = previous.beta;
    if adaptive_beta && !previous.beta_frozen {
        beta = beta_max(model, targets, &state.powers, previous.lambda)
            .unwrap_or(1.0)
            .max(1.0);
    }
    let violations = local_violations(model, targets, &state.powers, condition, previous.lambda, beta);
    let broadcasting: Vec<usize> = (0..state.users())
        .filter(|&k| state.active[k] && violations[k])
        .collect();
    let in_gate = broadcasting.is_empty();
    DistressState {
        broadcasting,
        beta,
        lambda: previous.lambda,
        in_gate,
        beta_frozen: previous.beta_frozen || (adaptive_beta && in_gate),
    }
}

/// One step of the distress scheme. Returns the current state annotated
/// with its distress status, the status itself, and the next state.
pub fn distress_step<M: InterferenceFunction + ?Sized>(
    model: &M,
    targets: &SirTargets,
    constraints: &PowerConstraints,
    state: &NetworkState,
    condition: GateCondition,
    previous: &DistressState,
    adaptive_beta: bool,
) -> Result<(NetworkState, DistressState, NetworkState)> {
    constraints.check_users(model.users())?;
    check_caps(constraints, &state.powers)?;
    let status = distress_status(model, targets, state, condition, previous, adaptive_beta);
    let mut annotated = state.clone();
    annotated.distress = vec![false; state.users()];
    for &k in &status.broadcasting {
        annotated.distress[k] = true;
    }
    annotated.gate = Some(status.in_gate);
    let next = if status.in_gate {
        capped_step(model, targets, constraints, state)
    } else {
        let delta = targets.delta();
        let powers = state
            .powers
            .iter()
            .zip(state.weighted_interference(targets))
            .map(|(p, w)| p.min(delta * w))
            .collect();
        NetworkState::observe_unchecked(model, targets, state.step + 1, powers)
    };
    Ok((annotated, status, next))
}

/// Full distress-signaling run.
///
/// Ends `AdmittedAll` once every user is admitted and powers settle, or
/// `Rejected` when the outcome is decided otherwise: an admitted user fell
/// below its target, or the powers settled with users still inactive. Both
/// record a [`EventKind::Decision`].
pub fn run_distress<M: InterferenceFunction + ?Sized>(
    model: &M,
    config: &AlpConfig,
    constraints: &PowerConstraints,
    distress: &DistressConfig,
) -> Result<Trajectory> {
    constraints.check_users(model.users())?;
    check_caps(constraints, &config.initial_powers)?;
    let first = config.initial_state(model)?;
    let mut targets = config.targets.clone();
    let lambda = resolve_lambda(model, &targets, constraints, distress)?;
    if let Some(b) = distress.beta {
        if !(b >= 1.0 && b.is_finite()) {
            return Err(invalid("beta", "must be finite and at least 1"));
        }
    }
    let adaptive = distress.beta.is_none();
    let mut status = DistressState {
        broadcasting: Vec::new(),
        beta: distress.beta.unwrap_or(1.0),
        lambda,
        in_gate: true,
        beta_frozen: false,
    };
    let mut ever_active = first.active.clone();
    let mut events = Vec::new();
    let mut states: Vec<NetworkState> = Vec::new();
    let mut current = first;
    let mut settled = 0;
    let mut distress_streak = 0;
    let mut reduced = false;
    let mut gate_was: Option<bool> = None;
    let mut termination = Termination::Budget;
    let decision = |state: &NetworkState| EventKind::Decision {
        admitted: state.active_users(),
        rejected: state.inactive_users(),
    };
    for _ in 0..config.max_iter {
        let (annotated, next_status, next) =
            distress_step(model, &targets, constraints, &current, distress.gate, &status, adaptive)?;
        if gate_was != Some(next_status.in_gate) {
            if gate_was.is_some() || !next_status.in_gate {
                events.push(Event {
                    step: annotated.step,
                    kind: if next_status.in_gate {
                        EventKind::GateOpened
                    } else {
                        EventKind::GateClosed
                    },
                });
            }
            gate_was = Some(next_status.in_gate);
        }
        distress_streak = if next_status.in_gate { 0 } else { distress_streak + 1 };
        status = next_status;
        states.push(annotated);
        if next.powers.iter().any(|p| !(p.is_finite() && *p < OVERFLOW)) {
            break;
        }
        let n_events = events.len();
        record_transitions(&mut ever_active, &next, &mut events);
        let violated = events[n_events..]
            .iter()
            .any(|e| matches!(e.kind, EventKind::Violation { .. }));
        settled = if rel_change(&next.powers, &current.powers) < config.tol {
            settled + 1
        } else {
            0
        };
        current = next;
        if violated {
            events.push(Event {
                step: current.step,
                kind: decision(&current),
            });
            termination = Termination::Rejected;
            break;
        }
        if settled >= config.window {
            events.push(Event {
                step: current.step,
                kind: decision(&current),
            });
            termination = if current.all_active() {
                Termination::AdmittedAll
            } else {
                Termination::Rejected
            };
            break;
        }
        if let Some(rule) = distress.delta_reduction {
            if !reduced && rule.window > 0 && distress_streak >= rule.window {
                let delta = 1.0 + 0.5 * (targets.delta() - 1.0);
                targets = targets.with_delta(delta)?;
                reduced = true;
                events.push(Event {
                    step: current.step,
                    kind: EventKind::DeltaReduced { delta },
                });
                current = NetworkState::observe_unchecked(model, &targets, current.step, current.powers);
            }
        }
    }
    // status of the final state, for the record
    let last = distress_status(model, &targets, &current, distress.gate, &status, adaptive);
    current.distress = (0..current.users()).map(|k| last.broadcasting.contains(&k)).collect();
    current.gate = Some(last.in_gate);
    states.push(current);
    Ok(Trajectory {
        states,
        termination,
        events,
    })
}
