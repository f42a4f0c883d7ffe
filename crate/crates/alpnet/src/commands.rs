//! The operations behind the command line, returning JSON-ready reports.

use std::path::{Path, PathBuf};

use alpnet_core::alp::actives_coupled;
use alpnet_core::beamforming::{max_common_sir, BeamPolicy, MaxSir, MaxSirOptions};
use alpnet_core::constrained::{
    beta_max, caps_meet_targets, delta_validity_violations, resolve_lambda, DistressConfig,
};
use alpnet_core::feasibility::{classify, FeasibilityReport, ProbeOptions, Regime};
use alpnet_core::interference::{check_axioms, AxiomCheck, AxiomReport};
use rayon::prelude::*;
use serde::Serialize;

use crate::generate::rng;
use crate::scenario::{seed_override, Network, Scenario, ScenarioFile};
use crate::schedule::run_schedule;
use crate::trace::emit_trace;
use crate::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_UNDECIDED: i32 = 3;

/// Exit status for a failed operation.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Core(alpnet_core::Error::Budget { .. }) => EXIT_UNDECIDED,
        Error::Io { .. } => 1,
        _ => EXIT_INVALID,
    }
}

/// Loads and generates a scenario. The seed comes from `seed`, else from
/// the environment, else from the file.
pub fn load(path: &Path, seed: Option<u64>) -> Result<Scenario, Error> {
    let file = ScenarioFile::load(path)?;
    let seed = match seed {
        Some(s) => Some(s),
        None => seed_override()?,
    };
    Scenario::generate(&file, seed)
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub scenario: PathBuf,
    pub out: PathBuf,
    pub name: String,
    pub seed: u64,
    pub termination: crate::schedule::PhaseOutcome,
    pub all_admitted: bool,
    pub alp_violations: usize,
    pub budget_exceeded: bool,
}

/// Runs every scenario (concurrently) into its own directory under `out`,
/// named after the scenario file.
pub fn run(scenarios: &[PathBuf], out: &Path, seed: Option<u64>) -> Vec<Result<RunReport, Error>> {
    scenarios
        .par_iter()
        .map(|path| {
            let scn = load(path, seed)?;
            let stem = path
                .file_stem()
                .map_or_else(|| scn.name.clone(), |s| s.to_string_lossy().into_owned());
            let dir = out.join(stem);
            let result = run_schedule(&scn)?;
            emit_trace(&result, &dir)?;
            let s = &result.summary;
            Ok(RunReport {
                scenario: path.clone(),
                out: dir,
                name: s.name.clone(),
                seed: s.seed,
                termination: s.termination,
                all_admitted: s.all_admitted,
                alp_violations: s.alp_violations,
                budget_exceeded: s.budget_exceeded,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct ClassifyReport {
    pub name: String,
    pub seed: u64,
    #[serde(flatten)]
    pub report: FeasibilityReport,
}

impl ClassifyReport {
    pub fn decided(&self) -> bool {
        self.report.regime != Regime::Undecided
    }
}

pub fn classify_scenario(scn: &Scenario) -> Result<ClassifyReport, Error> {
    let model = scn.network.model(None)?;
    let report = classify(
        &*model,
        &scn.targets,
        scn.constraints.as_ref(),
        &ProbeOptions::default(),
    )?;
    Ok(ClassifyReport {
        name: scn.name.clone(),
        seed: scn.seed,
        report,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct MaxSirReport {
    pub name: String,
    pub seed: u64,
    pub policy: BeamPolicy,
    #[serde(flatten)]
    pub result: MaxSir,
    pub options: MaxSirOptions,
}

pub fn maxsir(scn: &Scenario, policy: BeamPolicy, opts: &MaxSirOptions) -> Result<MaxSirReport, Error> {
    let Network::Mimo { scenario, .. } = &scn.network else {
        return Err(Error::validation("model", "max common SIR needs a MIMO model"));
    };
    Ok(MaxSirReport {
        name: scn.name.clone(),
        seed: scn.seed,
        policy,
        result: max_common_sir(scenario, policy, opts)?,
        options: *opts,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ConstraintAudit {
    /// The caps themselves meet the targets.
    pub caps_meet_targets: bool,
    /// Users whose initial powers are not `δ`-valid.
    pub delta_invalid_users: Vec<usize>,
    pub lambda: f64,
    /// `β_max` at the initial powers.
    pub beta_max: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub name: String,
    pub seed: u64,
    pub axioms: AxiomReport,
    /// Every active user is coupled to another active user at the start.
    pub actives_coupled: bool,
    pub constraints: Option<ConstraintAudit>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.axioms.all_pass() && self.constraints.as_ref().is_none_or(|c| c.caps_meet_targets)
    }
}

pub fn check(scn: &Scenario, trials: usize) -> Result<CheckReport, Error> {
    let model = scn.network.model(None)?;
    let plan = AxiomCheck {
        trials,
        ..AxiomCheck::default()
    };
    let axioms = check_axioms(&*model, &plan, &mut rng(scn.seed));
    let state = scn.alp_config(scn.initial_powers.clone(), 1)?.initial_state(&*model)?;
    let constraints = match &scn.constraints {
        None => None,
        Some(caps) => {
            let lambda = resolve_lambda(&*model, &scn.targets, caps, &DistressConfig::default())?;
            Some(ConstraintAudit {
                caps_meet_targets: caps_meet_targets(&*model, &scn.targets, caps)?,
                delta_invalid_users: delta_validity_violations(&*model, &scn.targets, caps, &scn.initial_powers),
                lambda,
                beta_max: beta_max(&*model, &scn.targets, &scn.initial_powers, lambda)?,
            })
        }
    };
    Ok(CheckReport {
        name: scn.name.clone(),
        seed: scn.seed,
        axioms,
        actives_coupled: actives_coupled(&*model, &state),
        constraints,
    })
}
