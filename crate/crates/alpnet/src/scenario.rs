//! Scenario files and their resolution into runnable networks.
//!
//! A scenario is a JSON document. Complex numbers are `[re, im]` pairs and
//! MIMO channels are nested as `channels[k][l][row][col]`, the matrix from
//! transmitter `l` to receiver `k`.

use std::path::Path;

use alpnet_core::beamforming::{receive_model, BeamformerSet, MimoScenario};
use alpnet_core::constrained::DistressConfig;
use alpnet_core::feasibility::PowerConstraints;
use alpnet_core::linalg::{CMatrix, Complex64};
use alpnet_core::{AffineModel, InterferenceFunction, MinStrategyModel, SirTargets, WorstCaseModel};
use serde::{Deserialize, Serialize};

use crate::generate::{random_mimo, rng, warm_start};
use crate::Error;

/// Environment variable overriding the seed of every scenario.
pub const SEED_ENV: &str = "ALPNET_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub seed: u64,
    pub model: ModelEntry,
    pub targets: TargetEntry,
    /// Required unless a MIMO warm start provides them.
    #[serde(default)]
    pub initial_powers: Option<Vec<f64>>,
    /// Checked against the SIRs at the initial powers when given.
    #[serde(default)]
    pub initial_active: Option<Vec<usize>>,
    #[serde(default)]
    pub constraints: Option<Vec<f64>>,
    #[serde(default)]
    pub warm_start: Option<WarmStartEntry>,
    pub schedule: Vec<PhaseEntry>,
    #[serde(default)]
    pub switching: Switching,
    /// Compute the feasibility regime at the start of every admission phase.
    #[serde(default = "yes")]
    pub classify_phases: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelEntry {
    Affine(AffineEntry),
    WorstCase {
        members: Vec<AffineEntry>,
    },
    Mimo {
        channels: Vec<Vec<Vec<Vec<[f64; 2]>>>>,
        noise: Vec<f64>,
        #[serde(default)]
        beams: Option<BeamformerSet>,
    },
    /// i.i.d. `CN(0, 1)` channels drawn from the scenario seed.
    MimoRandom {
        users: usize,
        rx: usize,
        tx: usize,
        noise: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AffineEntry {
    /// `gains[k][l]`, with a zero diagonal.
    pub gains: Vec<Vec<f64>>,
    pub noise: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetEntry {
    pub gamma: GammaEntry,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GammaEntry {
    Common(f64),
    PerUser(Vec<f64>),
}

/// Users admitted at time zero, with beamformers tuned among themselves and
/// powers meeting `δγ` exactly on that sub-network. Everyone else starts at
/// `low_power` with SVD beamformers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WarmStartEntry {
    pub admitted: Vec<usize>,
    #[serde(default = "default_warm_rounds")]
    pub rounds: usize,
    #[serde(default = "default_low_power")]
    pub low_power: f64,
}

fn default_warm_rounds() -> usize {
    100
}

fn default_low_power() -> f64 {
    1e-2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "phase", rename_all = "snake_case", deny_unknown_fields)]
pub enum PhaseEntry {
    Admission {
        budget: usize,
    },
    Transceiver {
        rounds: usize,
    },
    Distress {
        budget: usize,
        #[serde(default)]
        config: DistressConfig,
    },
    /// `count` pairs of admission and transceiver phases followed by a final
    /// admission phase.
    Cycles {
        count: usize,
        budget: usize,
        rounds: usize,
    },
}

/// When an admission phase hands over to the next phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Switching {
    /// Relative change of every SIR regarded as converged.
    pub sir_tol: f64,
    /// Consecutive converged steps required.
    pub window: usize,
    /// The phase also ends once the largest power exceeds this multiple of
    /// the largest power at the phase start.
    pub power_factor: f64,
}

impl Default for Switching {
    fn default() -> Self {
        Self {
            sir_tol: 1e-6,
            window: 3,
            power_factor: 1e6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Admission { budget: usize },
    Transceiver { rounds: usize },
    Distress { budget: usize, config: DistressConfig },
}

/// The network under study.
pub enum Network {
    Affine(AffineModel),
    WorstCase(WorstCaseModel),
    Mimo {
        scenario: MimoScenario,
        beams: BeamformerSet,
    },
}

impl Network {
    pub fn kind(&self) -> &'static str {
        match self {
            Network::Affine(_) => "affine",
            Network::WorstCase(_) => "worst_case",
            Network::Mimo { .. } => "mimo",
        }
    }

    pub fn users(&self) -> usize {
        match self {
            Network::Affine(m) => m.users(),
            Network::WorstCase(m) => m.users(),
            Network::Mimo { scenario, .. } => scenario.users(),
        }
    }

    /// The interference function in force with transmit beamformers `beams`
    /// (the scenario's own when `None`). MIMO links adapt their receivers, so
    /// their model is the receive-strategy minimum.
    pub fn model(&self, beams: Option<&BeamformerSet>) -> Result<Box<dyn InterferenceFunction + '_>, Error> {
        Ok(match self {
            Network::Affine(m) => Box::new(m),
            Network::WorstCase(m) => Box::new(m),
            Network::Mimo { scenario, beams: own } => {
                let m: MinStrategyModel = receive_model(scenario, &beams.unwrap_or(own).transmit)?;
                Box::new(m)
            }
        })
    }
}

/// A validated, fully generated scenario.
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub network: Network,
    pub targets: SirTargets,
    pub initial_powers: Vec<f64>,
    pub initial_active: Option<Vec<usize>>,
    pub constraints: Option<PowerConstraints>,
    pub schedule: Vec<Phase>,
    pub switching: Switching,
    pub classify_phases: bool,
    /// The file as read, echoed into reports.
    pub source: ScenarioFile,
}

impl ScenarioFile {
    pub fn from_json(text: &str) -> Result<Self, Error> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::from_json(&text)
    }
}

/// Seed from [`SEED_ENV`] if set.
pub fn seed_override() -> Result<Option<u64>, Error> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::validation(SEED_ENV, format!("not an unsigned integer: {v:?}"))),
        Err(_) => Ok(None),
    }
}

fn affine(entry: &AffineEntry, path: &str) -> Result<AffineModel, Error> {
    let k = entry.gains.len();
    if entry.noise.len() != k {
        return Err(Error::validation(
            format!("{path}.noise"),
            format!("expected {k} entries, found {}", entry.noise.len()),
        ));
    }
    for (i, row) in entry.gains.iter().enumerate() {
        if row.len() != k {
            return Err(Error::validation(
                format!("{path}.gains[{i}]"),
                format!("expected {k} entries, found {}", row.len()),
            ));
        }
    }
    AffineModel::from_rows(&entry.gains, entry.noise.clone()).map_err(|e| Error::validation(path, e.to_string()))
}

fn matrix(rows: &[Vec<[f64; 2]>], path: &str) -> Result<CMatrix, Error> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    let mut data = Vec::with_capacity(r * c);
    for (i, row) in rows.iter().enumerate() {
        if row.len() != c {
            return Err(Error::validation(format!("{path}[{i}]"), "ragged matrix"));
        }
        data.extend(row.iter().map(|[re, im]| Complex64::new(*re, *im)));
    }
    if data.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
        return Err(Error::validation(path, "non-finite entry"));
    }
    CMatrix::new(r, c, data).map_err(|e| Error::validation(path, e.to_string()))
}

fn expand(schedule: &[PhaseEntry]) -> Result<Vec<Phase>, Error> {
    let mut out = Vec::new();
    for (i, p) in schedule.iter().enumerate() {
        match p {
            PhaseEntry::Admission { budget } => out.push(Phase::Admission { budget: *budget }),
            PhaseEntry::Transceiver { rounds } => out.push(Phase::Transceiver { rounds: *rounds }),
            PhaseEntry::Distress { budget, config } => out.push(Phase::Distress {
                budget: *budget,
                config: config.clone(),
            }),
            PhaseEntry::Cycles { count, budget, rounds } => {
                if *count == 0 {
                    return Err(Error::validation(format!("schedule[{i}].count"), "must be positive"));
                }
                for _ in 0..*count {
                    out.push(Phase::Admission { budget: *budget });
                    out.push(Phase::Transceiver { rounds: *rounds });
                }
                out.push(Phase::Admission { budget: *budget });
            }
        }
    }
    if out.is_empty() {
        return Err(Error::validation("schedule", "must not be empty"));
    }
    Ok(out)
}

impl Scenario {
    /// Validates `file` and draws its random parts from `seed` (the file's
    /// own seed when `None`).
    pub fn generate(file: &ScenarioFile, seed: Option<u64>) -> Result<Self, Error> {
        let seed = seed.unwrap_or(file.seed);
        let name = file.name.clone().unwrap_or_else(|| "scenario".into());
        let schedule = expand(&file.schedule)?;
        let mut warm_powers = None;
        let network = match &file.model {
            ModelEntry::Affine(entry) => Network::Affine(affine(entry, "model")?),
            ModelEntry::WorstCase { members } => {
                let boxed = members
                    .iter()
                    .enumerate()
                    .map(|(i, m)| {
                        affine(m, &format!("model.members[{i}]"))
                            .map(|a| Box::new(a) as Box<dyn InterferenceFunction + Send + Sync>)
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                Network::WorstCase(
                    WorstCaseModel::new(boxed).map_err(|e| Error::validation("model.members", e.to_string()))?,
                )
            }
            ModelEntry::Mimo { channels, noise, beams } => {
                let mats = channels
                    .iter()
                    .enumerate()
                    .map(|(k, row)| {
                        row.iter()
                            .enumerate()
                            .map(|(l, m)| matrix(m, &format!("model.channels[{k}][{l}]")))
                            .collect::<Result<Vec<_>, _>>()
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                let scenario = MimoScenario::new(mats, noise.clone())
                    .map_err(|e| Error::validation("model.channels", e.to_string()))?;
                let beams = match beams {
                    Some(b) => BeamformerSet::new(&scenario, b.transmit.clone(), b.receive.clone())
                        .map_err(|e| Error::validation("model.beams", e.to_string()))?,
                    None => alpnet_core::beamforming::svd_init(&scenario),
                };
                Network::Mimo { scenario, beams }
            }
            ModelEntry::MimoRandom { users, rx, tx, noise } => {
                if *users == 0 || *rx == 0 || *tx == 0 {
                    return Err(Error::validation("model", "users, rx and tx must be positive"));
                }
                let scenario = random_mimo(&mut rng(seed), *users, *rx, *tx, *noise)
                    .map_err(|e| Error::validation("model.noise", e.to_string()))?;
                let beams = alpnet_core::beamforming::svd_init(&scenario);
                Network::Mimo { scenario, beams }
            }
        };
        let users = network.users();
        let gamma = match &file.targets.gamma {
            GammaEntry::Common(g) => vec![*g; users],
            GammaEntry::PerUser(g) => g.clone(),
        };
        let targets =
            SirTargets::new(gamma, file.targets.delta).map_err(|e| Error::validation("targets", e.to_string()))?;
        targets
            .check_users(users)
            .map_err(|e| Error::validation("targets.gamma", e.to_string()))?;

        let mut network = network;
        if let Some(ws) = &file.warm_start {
            let Network::Mimo { scenario, beams } = &mut network else {
                return Err(Error::validation("warm_start", "only MIMO models have a warm start"));
            };
            if let Some(&k) = ws.admitted.iter().find(|&&k| k >= users) {
                return Err(Error::validation(
                    "warm_start.admitted",
                    format!("user {k} out of range"),
                ));
            }
            let target = targets.delta() * targets.gamma()[ws.admitted.first().copied().unwrap_or(0)];
            if ws
                .admitted
                .iter()
                .any(|&k| targets.gamma()[k] * targets.delta() != target)
            {
                return Err(Error::validation(
                    "warm_start.admitted",
                    "admitted users must share one target",
                ));
            }
            if !(ws.low_power > 0.0 && ws.low_power.is_finite()) {
                return Err(Error::validation("warm_start.low_power", "must be finite and positive"));
            }
            let start = warm_start(scenario, &ws.admitted, target, ws.rounds, ws.low_power)?;
            *beams = start.beams;
            warm_powers = Some(start.powers);
        }

        let initial_powers = match (&file.initial_powers, warm_powers) {
            (Some(_), Some(_)) => {
                return Err(Error::validation(
                    "initial_powers",
                    "conflicts with the warm start, which sets the powers",
                ))
            }
            (Some(p), None) => p.clone(),
            (None, Some(p)) => p,
            (None, None) => return Err(Error::validation("initial_powers", "required")),
        };
        if initial_powers.len() != users {
            return Err(Error::validation(
                "initial_powers",
                format!("expected {users} entries, found {}", initial_powers.len()),
            ));
        }
        if let Some(i) = initial_powers.iter().position(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::validation(
                format!("initial_powers[{i}]"),
                "must be finite and non-negative",
            ));
        }
        let constraints = file
            .constraints
            .as_ref()
            .map(|c| {
                let pc =
                    PowerConstraints::new(c.clone()).map_err(|e| Error::validation("constraints", e.to_string()))?;
                pc.check_users(users)
                    .map_err(|e| Error::validation("constraints", e.to_string()))?;
                Ok::<_, Error>(pc)
            })
            .transpose()?;
        if schedule.iter().any(|p| matches!(p, Phase::Transceiver { .. })) && !matches!(network, Network::Mimo { .. }) {
            return Err(Error::validation("schedule", "transceiver phases need a MIMO model"));
        }
        if schedule.iter().any(|p| matches!(p, Phase::Distress { .. })) && constraints.is_none() {
            return Err(Error::validation("schedule", "distress phases need power constraints"));
        }
        let sw = file.switching;
        if !(sw.sir_tol > 0.0 && sw.power_factor > 1.0 && sw.window > 0) {
            return Err(Error::validation(
                "switching",
                "sir_tol > 0, power_factor > 1 and window > 0 required",
            ));
        }

        let scenario = Self {
            name,
            seed,
            network,
            targets,
            initial_powers,
            initial_active: file.initial_active.clone(),
            constraints,
            schedule,
            switching: sw,
            classify_phases: file.classify_phases,
            source: file.clone(),
        };
        scenario.check_initial_partition()?;
        Ok(scenario)
    }

    fn check_initial_partition(&self) -> Result<(), Error> {
        let config = self.alp_config(self.initial_powers.clone(), 1)?;
        let model = self.network.model(None)?;
        config
            .initial_state(&*model)
            .map(|_| ())
            .map_err(|e| Error::validation("initial_active", e.to_string()))
    }

    pub(crate) fn alp_config(&self, powers: Vec<f64>, max_iter: usize) -> Result<alpnet_core::alp::AlpConfig, Error> {
        let mut config = alpnet_core::alp::AlpConfig::new(self.targets.clone(), alpnet_core::PowerVector::new(powers)?)
            .with_max_iter(max_iter);
        config.initial_active = self.initial_active.clone();
        Ok(config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const AFFINE: &str = r#"{
        "name": "two-users",
        "model": {"kind": "affine", "gains": [[0, 0.5], [0.5, 0]], "noise": [1, 1]},
        "targets": {"gamma": 1, "delta": 1.5},
        "initial_powers": [2, 0.1],
        "schedule": [{"phase": "admission", "budget": 200}]
    }"#;

    #[test]
    fn affine_file_resolves() {
        let f = ScenarioFile::from_json(AFFINE).unwrap();
        let s = Scenario::generate(&f, None).unwrap();
        assert_eq!(s.network.users(), 2);
        assert_eq!(s.targets.gamma(), &[1.0, 1.0]);
        assert_eq!(s.schedule, vec![Phase::Admission { budget: 200 }]);
    }

    #[test]
    fn validation_names_the_field() {
        let bad = AFFINE.replace("[0.5, 0]]", "[0.5]]");
        let f = ScenarioFile::from_json(&bad).unwrap();
        let err = Scenario::generate(&f, None).err().unwrap().to_string();
        assert!(err.starts_with("model.gains[1]"), "{err}");

        let bad = AFFINE.replace("\"delta\": 1.5", "\"delta\": 0.9");
        let f = ScenarioFile::from_json(&bad).unwrap();
        let err = Scenario::generate(&f, None).err().unwrap().to_string();
        assert!(err.starts_with("targets"), "{err}");
    }

    #[test]
    fn empty_active_set_rejected() {
        let bad = AFFINE.replace("[2, 0.1]", "[0.1, 0.1]");
        let f = ScenarioFile::from_json(&bad).unwrap();
        assert!(matches!(Scenario::generate(&f, None), Err(Error::Validation { .. })));
    }

    #[test]
    fn cycles_expand() {
        let phases = expand(&[PhaseEntry::Cycles {
            count: 2,
            budget: 5,
            rounds: 3,
        }])
        .unwrap();
        assert_eq!(phases.len(), 5);
        assert_eq!(phases[4], Phase::Admission { budget: 5 });
        assert!(expand(&[]).is_err());
    }

    #[test]
    fn random_mimo_is_seeded() {
        let text = r#"{
            "seed": 3,
            "model": {"kind": "mimo_random", "users": 10, "rx": 4, "tx": 4, "noise": 1},
            "targets": {"gamma": 8, "delta": 1.2},
            "warm_start": {"admitted": [0, 1, 2, 3, 4]},
            "schedule": [{"phase": "cycles", "count": 1, "budget": 10, "rounds": 2}]
        }"#;
        let f = ScenarioFile::from_json(text).unwrap();
        let a = Scenario::generate(&f, None).unwrap();
        let b = Scenario::generate(&f, None).unwrap();
        let (Network::Mimo { scenario: sa, .. }, Network::Mimo { scenario: sb, .. }) = (&a.network, &b.network) else {
            panic!("not MIMO");
        };
        assert_eq!(sa, sb);
        assert_eq!(a.initial_powers, b.initial_powers);
        let c = Scenario::generate(&f, Some(4)).unwrap();
        let Network::Mimo { scenario: sc, .. } = &c.network else {
            panic!("not MIMO");
        };
        assert_ne!(sa, sc);
        assert_eq!(c.seed, 4);
    }
}
