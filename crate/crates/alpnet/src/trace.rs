//! CSV traces and JSON run summaries.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use alpnet_core::alp::count_violations;
use serde::{Deserialize, Serialize};

use crate::schedule::ScheduleRun;
use crate::Error;

pub const HEADER: [&str; 8] = ["step", "phase", "user", "power", "sir", "active", "distress", "gate"];

pub const TRACE_FILE: &str = "trace.csv";
pub const SUMMARY_FILE: &str = "summary.json";

/// One user at one step. Flags are 0/1; `gate` is empty outside distress
/// phases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    pub phase: String,
    pub user: usize,
    pub power: f64,
    pub sir: f64,
    pub active: u8,
    pub distress: u8,
    pub gate: Option<u8>,
}

impl TraceRow {
    pub fn from_run(run: &ScheduleRun) -> Vec<Self> {
        run.trajectory
            .states
            .iter()
            .enumerate()
            .flat_map(|(i, s)| {
                let phase = run.label(i).to_owned();
                (0..s.users()).map(move |k| TraceRow {
                    step: s.step,
                    phase: phase.clone(),
                    user: k,
                    power: s.powers[k],
                    sir: s.sirs[k],
                    active: s.active[k].into(),
                    distress: s.distress.get(k).copied().unwrap_or(false).into(),
                    gate: s.gate.map(u8::from),
                })
            })
            .collect()
    }
}

/// 17 significant digits, enough to round-trip every `f64`.
fn float(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_rows<W: Write>(rows: &[TraceRow], out: W) -> Result<(), Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HEADER)?;
    for r in rows {
        w.write_record([
            r.step.to_string(),
            r.phase.clone(),
            r.user.to_string(),
            float(r.power),
            float(r.sir),
            r.active.to_string(),
            r.distress.to_string(),
            r.gate.map_or(String::new(), |g| g.to_string()),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_rows<R: Read>(input: R) -> Result<Vec<TraceRow>, Error> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    if header != HEADER {
        return Err(Error::validation("trace header", header.join(",")));
    }
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

/// ALP violations recomputed from a trace alone: `(user, step)` pairs where
/// a user active at an earlier step is inactive.
pub fn violations_from_rows(rows: &[TraceRow]) -> usize {
    let mut steps: Vec<(usize, Vec<bool>)> = Vec::new();
    for r in rows {
        if steps.last().is_none_or(|(s, _)| *s != r.step) {
            steps.push((r.step, Vec::new()));
        }
        let flags = &mut steps.last_mut().expect("pushed above").1;
        if flags.len() <= r.user {
            flags.resize(r.user + 1, false);
        }
        flags[r.user] = r.active == 1;
    }
    count_violations(steps.iter().map(|(_, f)| f.as_slice()))
}

/// Writes `trace.csv` and `summary.json` into `dir`, creating it if needed.
pub fn emit_trace(run: &ScheduleRun, dir: &Path) -> Result<(), Error> {
    let io = |path: &Path| {
        let path = path.to_owned();
        move |source| Error::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io(dir))?;
    let trace = dir.join(TRACE_FILE);
    let file = fs::File::create(&trace).map_err(io(&trace))?;
    write_rows(&TraceRow::from_run(run), std::io::BufWriter::new(file))?;
    let summary = dir.join(SUMMARY_FILE);
    let mut text = serde_json::to_string_pretty(&run.summary)?;
    text.push('\n');
    fs::write(&summary, text).map_err(io(&summary))?;
    Ok(())
}
