use std::path::PathBuf;

use alpnet::scenario::{Scenario, ScenarioFile};
use alpnet::schedule::{run_schedule, PhaseOutcome};
use alpnet::trace::{emit_trace, read_rows, violations_from_rows, TraceRow, SUMMARY_FILE, TRACE_FILE};
use alpnet_core::interference::sirs;

fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
}

fn load(name: &str) -> Scenario {
    Scenario::generate(&ScenarioFile::load(&scenario_path(name)).unwrap(), None).unwrap()
}

fn inline(json: &str) -> Scenario {
    Scenario::generate(&ScenarioFile::from_json(json).unwrap(), None).unwrap()
}

const SMALL_MIMO: &str = r#"{
  "name": "small mimo",
  "seed": 4,
  "model": {"kind": "mimo_random", "users": 3, "rx": 2, "tx": 2, "noise": 1},
  "targets": {"gamma": 0.5, "delta": 1.3},
  "warm_start": {"admitted": [0]},
  "schedule": [{"phase": "cycles", "count": 2, "budget": 60, "rounds": 3}]
}"#;

#[test]
fn traces_are_byte_identical_across_runs() {
    for scn in [load("two_user_c1.json"), inline(SMALL_MIMO)] {
        let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
        for d in &dirs {
            emit_trace(&run_schedule(&scn).unwrap(), d.path()).unwrap();
        }
        for file in [TRACE_FILE, SUMMARY_FILE] {
            let a = std::fs::read(dirs[0].path().join(file)).unwrap();
            let b = std::fs::read(dirs[1].path().join(file)).unwrap();
            assert_eq!(a, b, "{file} differs for {}", scn.name);
        }
    }
}

#[test]
fn phases_follow_each_other_without_gaps() {
    let run = run_schedule(&inline(SMALL_MIMO)).unwrap();
    let states = &run.trajectory.states;
    for w in states.windows(2) {
        assert_eq!(w[1].step, w[0].step + 1);
    }
    assert!(run.phase_of.windows(2).all(|w| w[1] == w[0] || w[1] == w[0] + 1));
    let phases = &run.summary.phases;
    assert_eq!(phases.len(), 5);
    let labels: Vec<_> = phases.iter().map(|p| p.label.as_str()).collect();
    assert_eq!(labels, ["A.1", "T.1", "A.2", "T.2", "A.3"]);
    for w in phases.windows(2) {
        assert_eq!(w[1].first_step, w[0].last_step + 1);
    }
}

#[test]
fn violation_count_can_be_recomputed_from_the_trace() {
    for scn in [
        load("two_user_c1.json"),
        load("two_user_c3.json"),
        load("capped_distress.json"),
        inline(SMALL_MIMO),
    ] {
        let run = run_schedule(&scn).unwrap();
        let rows = TraceRow::from_run(&run);
        assert_eq!(violations_from_rows(&rows), run.summary.alp_violations, "{}", scn.name);
    }
}

#[test]
fn one_row_per_user_and_state() {
    let scn = inline(
        r#"{
          "model": {"kind": "affine", "gains": [[0, 0.5], [0.5, 0]], "noise": [1, 1]},
          "targets": {"gamma": 1, "delta": 1.5},
          "initial_powers": [3, 0.1],
          "schedule": [{"phase": "admission", "budget": 3}]
        }"#,
    );
    let run = run_schedule(&scn).unwrap();
    let rows = TraceRow::from_run(&run);
    assert_eq!(rows.len(), 2 * run.trajectory.states.len());
    assert_eq!(run.trajectory.last().step, 3);
    assert!(run.summary.budget_exceeded);
    let steps: Vec<_> = rows.iter().map(|r| (r.step, r.user)).collect();
    assert_eq!(&steps[..4], &[(0, 0), (0, 1), (1, 0), (1, 1)]);
}

#[test]
fn written_trace_reproduces_sirs_from_powers() {
    let scn = load("two_user_c1.json");
    let dir = tempfile::tempdir().unwrap();
    emit_trace(&run_schedule(&scn).unwrap(), dir.path()).unwrap();
    let rows = read_rows(std::fs::File::open(dir.path().join(TRACE_FILE)).unwrap()).unwrap();
    let model = scn.network.model(None).unwrap();
    for pair in rows.chunks(2) {
        let p = [pair[0].power, pair[1].power];
        let s = sirs(&*model, &p).unwrap();
        for (row, sir) in pair.iter().zip(s) {
            assert!(
                (row.sir - sir).abs() <= 1e-12 * sir,
                "step {}: {} vs {sir}",
                row.step,
                row.sir
            );
        }
    }
}

#[test]
fn schedules_end_as_their_regime_predicts() {
    let c1 = run_schedule(&load("two_user_c1.json")).unwrap().summary;
    assert_eq!(c1.termination, PhaseOutcome::Settled);
    assert!(c1.all_admitted);
    let c2 = run_schedule(&load("two_user_c2.json")).unwrap().summary;
    assert_eq!(c2.termination, PhaseOutcome::PowerThreshold);
    assert!(c2.all_admitted);
    let c3 = run_schedule(&load("two_user_c3.json")).unwrap().summary;
    assert!(!c3.all_admitted);
    assert_eq!(c3.alp_violations, 0);
}
