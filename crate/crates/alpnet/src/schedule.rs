//! Execution of a scenario's phase schedule.
//!
//! Admission phases run the protected iteration (capped when the scenario
//! has power constraints), transceiver phases run alternating beamformer
//! rounds and distress phases run the distress-signaling iteration. Powers
//! and beamformers carry over from one phase to the next, and every phase
//! starts by recording the state it inherits.

use alpnet_core::alp::{
    alp_step, count_violations, record_transitions, Event, EventKind, NetworkState, Termination, Trajectory,
};
use alpnet_core::beamforming::{effective_gains, mmse_receivers, transceiver_round, BeamformerSet, RoundOptions};
use alpnet_core::constrained::{constrained_alp_step, run_distress};
use alpnet_core::feasibility::{classify, ProbeOptions, Regime};
use alpnet_core::InterferenceFunction;
use serde::{Deserialize, Serialize};

use crate::scenario::{Network, Phase, Scenario, ScenarioFile, Switching};
use crate::Error;

/// Powers beyond this are treated as having left the floating-point range.
const OVERFLOW: f64 = 1e290;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseOutcome {
    /// SIRs stopped changing.
    Settled,
    /// Powers grew past the switching threshold.
    PowerThreshold,
    /// The step budget ran out first.
    Budget,
    /// Powers left the floating-point range.
    Overflow,
    /// All transceiver rounds were run.
    RoundsDone,
    AdmittedAll,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSummary {
    pub label: String,
    pub first_step: usize,
    pub last_step: usize,
    pub outcome: PhaseOutcome,
    /// Regime of the interference function in force at the phase start.
    pub regime: Option<Regime>,
    pub c_gamma: Option<f64>,
    pub c_delta_gamma: Option<f64>,
    pub admitted_at_end: Vec<usize>,
    pub events: Vec<Event>,
}

/// Thresholds that the model leaves open, reported with every run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactChoices {
    pub switching: Switching,
    /// SIR values exchanged in transceiver rounds are clipped to this.
    pub transceiver_target_cap: f64,
    pub reversed_noise: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub name: String,
    pub seed: u64,
    pub kind: String,
    pub users: usize,
    pub termination: PhaseOutcome,
    pub phases: Vec<PhaseSummary>,
    pub admission_steps: Vec<Option<usize>>,
    pub all_admitted: bool,
    pub alp_violations: usize,
    pub budget_exceeded: bool,
    pub final_powers: Vec<f64>,
    pub final_sirs: Vec<f64>,
    pub artifact_choices: ArtifactChoices,
    pub config: ScenarioFile,
}

/// A completed run. `phase_of[i]` indexes the phase of `trajectory.states[i]`.
#[derive(Debug, Clone)]
pub struct ScheduleRun {
    pub trajectory: Trajectory,
    pub phase_of: Vec<usize>,
    pub summary: Summary,
}

impl ScheduleRun {
    pub fn label(&self, state: usize) -> &str {
        &self.summary.phases[self.phase_of[state]].label
    }
}

fn labels(schedule: &[Phase]) -> Vec<String> {
    let (mut a, mut t, mut d) = (0, 0, 0);
    schedule
        .iter()
        .map(|p| match p {
            Phase::Admission { .. } => {
                a += 1;
                format!("A.{a}")
            }
            Phase::Transceiver { .. } => {
                t += 1;
                format!("T.{t}")
            }
            Phase::Distress { .. } => {
                d += 1;
                format!("D.{d}")
            }
        })
        .collect()
}

fn max_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(0.0, f64::max)
}

fn sir_change(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| if x == y { 0.0 } else { (x - y).abs() / y.abs() })
        .fold(0.0, f64::max)
}

struct Runner<'a> {
    scn: &'a Scenario,
    beams: Option<BeamformerSet>,
    states: Vec<NetworkState>,
    phase_of: Vec<usize>,
    ever_active: Vec<bool>,
    events: Vec<Event>,
}

impl Runner<'_> {
    fn current(&self) -> &NetworkState {
        &self.states[self.states.len() - 1]
    }

    fn next_step(&self) -> usize {
        self.states.last().map_or(0, |s| s.step + 1)
    }

    fn powers(&self) -> Vec<f64> {
        self.states
            .last()
            .map_or_else(|| self.scn.initial_powers.clone(), |s| s.powers.clone())
    }

    fn push(&mut self, phase: usize, state: NetworkState) {
        if self.states.is_empty() {
            self.ever_active = state.active.clone();
        } else {
            record_transitions(&mut self.ever_active, &state, &mut self.events);
        }
        self.states.push(state);
        self.phase_of.push(phase);
    }

    fn observe(&self, model: &dyn InterferenceFunction, powers: Vec<f64>) -> Result<NetworkState, Error> {
        Ok(NetworkState::observe(
            model,
            &self.scn.targets,
            self.next_step(),
            powers,
        )?)
    }

    fn regime(&self, model: &dyn InterferenceFunction) -> (Option<Regime>, Option<f64>, Option<f64>) {
        if !self.scn.classify_phases {
            return (None, None, None);
        }
        match classify(
            model,
            &self.scn.targets,
            self.scn.constraints.as_ref(),
            &ProbeOptions::default(),
        ) {
            Ok(r) => (Some(r.regime), Some(r.c_gamma), Some(r.c_delta_gamma)),
            Err(_) => (None, None, None),
        }
    }

    fn admission(&mut self, phase: usize, budget: usize) -> Result<(PhaseOutcome, Classified), Error> {
        let model = self.scn.network.model(self.beams.as_ref())?;
        let start = self.observe(&*model, self.powers())?;
        let classified = self.regime(&*model);
        let ceiling = self.scn.switching.power_factor * max_of(&start.powers);
        self.push(phase, start);
        let mut settled = 0;
        let mut outcome = PhaseOutcome::Budget;
        for _ in 0..budget {
            let prev = self.current();
            let mut next = match &self.scn.constraints {
                Some(c) => constrained_alp_step(&*model, &self.scn.targets, c, prev)?,
                None => alp_step(&*model, &self.scn.targets, prev),
            };
            if next.powers.iter().any(|p| !(p.is_finite() && *p < OVERFLOW)) {
                outcome = PhaseOutcome::Overflow;
                break;
            }
            next.step = self.next_step();
            let change = sir_change(&next.sirs, &prev.sirs);
            settled = if change < self.scn.switching.sir_tol {
                settled + 1
            } else {
                0
            };
            let top = max_of(&next.powers);
            self.push(phase, next);
            if settled >= self.scn.switching.window {
                outcome = PhaseOutcome::Settled;
                break;
            }
            if top > ceiling {
                outcome = PhaseOutcome::PowerThreshold;
                break;
            }
        }
        drop(model);
        // receivers track the powers during admission; keep the final ones
        if let (Network::Mimo { scenario, .. }, Some(beams)) = (&self.scn.network, &self.beams) {
            self.beams = Some(mmse_receivers(scenario, beams, &self.current().powers)?);
        }
        Ok((outcome, classified))
    }

    fn transceiver(&mut self, phase: usize, rounds: usize) -> Result<PhaseOutcome, Error> {
        let (Network::Mimo { scenario, .. }, Some(beams)) = (&self.scn.network, self.beams.clone()) else {
            return Err(Error::validation("schedule", "transceiver phases need a MIMO model"));
        };
        let opts = RoundOptions {
            target_cap: Some(transceiver_cap(self.scn)),
        };
        let mut beams = beams;
        let start = self.observe(&effective_gains(scenario, &beams)?, self.powers())?;
        self.push(phase, start);
        for _ in 0..rounds {
            let out = transceiver_round(scenario, &beams, &self.current().powers, &opts)?;
            let step = self.next_step();
            for user in out.reinitialized {
                self.events.push(Event {
                    step,
                    kind: EventKind::BeamReset { user },
                });
            }
            beams = out.beams;
            let state = self.observe(&effective_gains(scenario, &beams)?, out.primal_powers)?;
            self.push(phase, state);
        }
        self.beams = Some(beams);
        Ok(PhaseOutcome::RoundsDone)
    }

    fn distress(
        &mut self,
        phase: usize,
        budget: usize,
        config: &alpnet_core::constrained::DistressConfig,
    ) -> Result<(PhaseOutcome, Classified), Error> {
        let caps = self
            .scn
            .constraints
            .as_ref()
            .ok_or_else(|| Error::validation("schedule", "distress phases need power constraints"))?;
        let model = self.scn.network.model(self.beams.as_ref())?;
        let classified = self.regime(&*model);
        let mut alp = self.scn.alp_config(self.powers(), budget)?;
        alp.initial_active = None;
        let traj = run_distress(&*model, &alp, caps, config)?;
        let offset = self.next_step();
        for mut s in traj.states {
            s.step += offset;
            self.push(phase, s);
        }
        self.events.extend(
            traj.events
                .into_iter()
                .filter(|e| !matches!(e.kind, EventKind::Admitted { .. } | EventKind::Violation { .. }))
                .map(|e| Event {
                    step: e.step + offset,
                    kind: e.kind,
                }),
        );
        self.events.sort_by_key(|e| e.step);
        let outcome = match traj.termination {
            Termination::AdmittedAll => PhaseOutcome::AdmittedAll,
            Termination::Rejected => PhaseOutcome::Rejected,
            _ => PhaseOutcome::Budget,
        };
        Ok((outcome, classified))
    }
}

type Classified = (Option<Regime>, Option<f64>, Option<f64>);

/// SIR cap for the SIR values exchanged in transceiver rounds: the largest
/// protected target `δγ_k`.
fn transceiver_cap(scn: &Scenario) -> f64 {
    scn.targets.delta() * max_of(scn.targets.gamma())
}

/// Runs every phase of `scn` in order.
pub fn run_schedule(scn: &Scenario) -> Result<ScheduleRun, Error> {
    let users = scn.network.users();
    let beams = match &scn.network {
        Network::Mimo { beams, .. } => Some(beams.clone()),
        _ => None,
    };
    let labels = labels(&scn.schedule);
    let mut runner = Runner {
        scn,
        beams,
        states: Vec::new(),
        phase_of: Vec::new(),
        ever_active: Vec::new(),
        events: Vec::new(),
    };
    {
        // validates the initial state, including a listed active set
        let model = scn.network.model(None)?;
        scn.alp_config(scn.initial_powers.clone(), 1)?.initial_state(&*model)?;
    }

    let mut phases = Vec::new();
    for (i, phase) in scn.schedule.iter().enumerate() {
        let event_mark = runner.events.len();
        let first_step = runner.next_step();
        let (outcome, (regime, c_gamma, c_delta_gamma)) = match phase {
            Phase::Admission { budget } => runner.admission(i, *budget)?,
            Phase::Transceiver { rounds } => (runner.transceiver(i, *rounds)?, (None, None, None)),
            Phase::Distress { budget, config } => runner.distress(i, *budget, config)?,
        };
        let last = runner.current();
        phases.push(PhaseSummary {
            label: labels[i].clone(),
            first_step,
            last_step: last.step,
            outcome,
            regime,
            c_gamma,
            c_delta_gamma,
            admitted_at_end: last.active_users(),
            events: runner.events[event_mark..].to_vec(),
        });
    }

    let trajectory = Trajectory {
        termination: match phases.last().map(|p| p.outcome) {
            Some(PhaseOutcome::AdmittedAll) => Termination::AdmittedAll,
            Some(PhaseOutcome::Rejected) => Termination::Rejected,
            Some(PhaseOutcome::Settled) if runner.current().all_active() => Termination::Converged,
            Some(PhaseOutcome::Settled) => Termination::Steady,
            Some(PhaseOutcome::PowerThreshold) if runner.current().all_active() => Termination::Diverged,
            _ => Termination::Budget,
        },
        states: runner.states,
        events: runner.events,
    };
    let last = trajectory.last();
    let summary = Summary {
        name: scn.name.clone(),
        seed: scn.seed,
        kind: scn.network.kind().into(),
        users,
        termination: phases.last().map_or(PhaseOutcome::Budget, |p| p.outcome),
        admission_steps: (0..users).map(|k| trajectory.admission_step(k)).collect(),
        all_admitted: last.all_active(),
        alp_violations: count_violations(trajectory.states.iter().map(|s| s.active.as_slice())),
        budget_exceeded: phases.iter().any(|p| p.outcome == PhaseOutcome::Budget),
        final_powers: last.powers.clone(),
        final_sirs: last.sirs.clone(),
        artifact_choices: ArtifactChoices {
            switching: scn.switching,
            transceiver_target_cap: transceiver_cap(scn),
            reversed_noise: "same as primal".into(),
        },
        config: scn.source.clone(),
        phases,
    };
    Ok(ScheduleRun {
        trajectory,
        phase_of: runner.phase_of,
        summary,
    })
}
