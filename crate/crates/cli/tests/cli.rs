//! End-to-end tests driving the installed binary through its public surface.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use funsat_core::cnf::{CnfFormula, CnfSink};
use funsat_core::encrypt::interlock_encrypt_with;
use funsat_core::netlist::{parse_bench, write_bench};
use funsat_core::sim::KeySequence;
use funsat_core::solver::{ExternalSolver, SatEngine, SolveResult, Solver};
use funsat_core::verify::{keyed_equivalence_bmc, SolveLimits};

const BIN: &str = env!("CARGO_BIN_EXE_funsat");

fn bench_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../benchmarks")
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary failed to launch")
}

fn run_ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "command {:?} failed:\n{}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn key_from_report(report: &serde_json::Value) -> KeySequence {
    report["result"]["key"]
        .as_array()
        .expect("report carries a key")
        .iter()
        .map(|f| f.as_str().unwrap().chars().map(|c| c == '1').collect())
        .collect()
}

/// Counter that advances every cycle; its input only reaches the output.
fn counter_bench() -> &'static str {
    "INPUT(a)\nOUTPUT(y)\n\
     s0 = DFF(n0)\ns1 = DFF(n1)\ns2 = DFF(n2)\n\
     n0 = NOT(s0)\nn1 = XOR(s1, s0)\nc1 = AND(s1, s0)\nn2 = XOR(s2, c1)\n\
     y = XOR(s0, a)\n"
}

/// Interlocked counter with the trap forced to a known distance, written out
/// for the binary to consume.
fn locked_counter(dir: &Path, d: usize) -> PathBuf {
    let orig = parse_bench(counter_bench()).unwrap();
    let enc = interlock_encrypt_with(&orig, 1, d, 1, Some(d), 7).unwrap();
    let orig_path = dir.join("counter.bench");
    let enc_path = dir.join("counter.enc.bench");
    fs::write(&orig_path, counter_bench()).unwrap();
    fs::write(&enc_path, write_bench(&enc.encrypted)).unwrap();
    enc_path
}

#[test]
fn encrypt_then_attack_recovers_a_sound_key() {
    let dir = tempfile::tempdir().unwrap();
    let s27 = bench_dir().join("s27.bench");
    let stem = dir.path().join("s27h");
    run_ok(&[
        "encrypt", s27.to_str().unwrap(),
        "--scheme", "harpoon", "--tk", "1", "--rmkf", "0.2", "--seed", "0",
        "--out", stem.to_str().unwrap(),
    ]);
    let enc_path = dir.path().join("s27h.enc.bench");
    let rep_path = dir.path().join("report.json");
    run_ok(&[
        "attack", enc_path.to_str().unwrap(),
        "--oracle", s27.to_str().unwrap(),
        "--tk", "1", "--seed", "5",
        "--out", rep_path.to_str().unwrap(),
    ]);
    let rep: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&rep_path).unwrap()).unwrap();
    assert_eq!(rep["result"]["status"], "success");
    assert!(rep["oracle_queries"].as_u64().unwrap() > 0);

    // The recovered key must make the encrypted design equivalent to the
    // original after activation.
    let key = key_from_report(&rep);
    let enc = parse_bench(&fs::read_to_string(&enc_path).unwrap()).unwrap();
    let orig = parse_bench(&fs::read_to_string(&s27).unwrap()).unwrap();
    let cex = keyed_equivalence_bmc(&enc, 1, &key, &orig, 6, SolveLimits::default()).unwrap();
    assert!(cex.is_none(), "recovered key is not equivalent: {cex:?}");
}

fn strip_seconds(v: &mut serde_json::Value) {
    match v {
        serde_json::Value::Object(m) => {
            m.remove("seconds");
            for x in m.values_mut() {
                strip_seconds(x);
            }
        }
        serde_json::Value::Array(a) => {
            for x in a {
                strip_seconds(x);
            }
        }
        _ => {}
    }
}

#[test]
fn attack_reports_are_blind_to_the_key_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let s27 = bench_dir().join("s27.bench");
    let stem = dir.path().join("x");
    run_ok(&[
        "encrypt", s27.to_str().unwrap(),
        "--scheme", "interlocking", "--tk", "1", "--dmax", "2", "--seed", "1",
        "--out", stem.to_str().unwrap(),
    ]);
    let enc_path = dir.path().join("x.enc.bench");
    let attack = |out: &Path| {
        run_ok(&[
            "attack", enc_path.to_str().unwrap(),
            "--oracle", s27.to_str().unwrap(),
            "--tk", "1", "--seed", "9",
            "--out", out.to_str().unwrap(),
        ]);
        let mut v: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(out).unwrap()).unwrap();
        strip_seconds(&mut v);
        v
    };
    let with_sidecar = attack(&dir.path().join("a.json"));
    fs::remove_file(dir.path().join("x.key.json")).unwrap();
    let without_sidecar = attack(&dir.path().join("b.json"));
    assert_eq!(with_sidecar, without_sidecar);
}

#[test]
fn doubling_schedule_reports_the_power_of_two_depths() {
    let dir = tempfile::tempdir().unwrap();
    let enc_path = locked_counter(dir.path(), 4);
    let oracle = dir.path().join("counter.bench");
    let out = run_ok(&[
        "attack", enc_path.to_str().unwrap(),
        "--oracle", oracle.to_str().unwrap(),
        "--tk", "1", "--mode", "reference", "--update", "double",
    ]);
    let rep: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(rep["result"]["status"], "success");
    let depths: Vec<u64> =
        rep["phases"].as_array().unwrap().iter().map(|p| p["b_star"].as_u64().unwrap()).collect();
    assert_eq!(depths, vec![1, 2, 4], "doubling schedule must visit 1, 2, 4");
}

#[test]
fn fc_scan_emits_the_documented_csv() {
    let dir = tempfile::tempdir().unwrap();
    let enc_path = locked_counter(dir.path(), 2);
    let oracle = dir.path().join("counter.bench");
    let out = run_ok(&[
        "fc-scan", enc_path.to_str().unwrap(),
        "--oracle", oracle.to_str().unwrap(),
        "--tk", "1", "--from", "1", "--to", "3", "--exact",
    ]);
    // The trap sits two steps from reset, so corruption steps from 0 to one
    // half (the one wrong key out of two) exactly at depth 2.
    assert_eq!(
        String::from_utf8_lossy(&out.stdout),
        "b,fc,exact,samples\n1,0,true,4\n2,0.5,true,8\n3,0.5,true,16\n"
    );
}

#[test]
fn campaign_reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let s27 = bench_dir().join("s27.bench");
    let sweep = |out_dir: &Path| {
        run_ok(&[
            "bench", s27.to_str().unwrap(),
            "--tk", "1", "--rmkf", "0.1", "--dmax", "2", "--seed", "3",
            "--out-dir", out_dir.to_str().unwrap(),
        ]);
        (
            fs::read(out_dir.join("campaign.csv")).unwrap(),
            fs::read(out_dir.join("campaign.json")).unwrap(),
        )
    };
    let (csv_a, json_a) = sweep(&dir.path().join("one"));
    let (csv_b, json_b) = sweep(&dir.path().join("two"));
    assert_eq!(csv_a, csv_b);
    assert_eq!(json_a, json_b);
    let text = String::from_utf8(csv_a).unwrap();
    // Two instances (one per scheme) times two attack modes, plus a header.
    assert_eq!(text.lines().count(), 5);
    assert!(text.lines().skip(1).all(|l| l.contains(",success,")));
}

#[test]
fn exhausted_budgets_exit_with_the_documented_codes() {
    let dir = tempfile::tempdir().unwrap();
    let enc_path = locked_counter(dir.path(), 4);
    let oracle = dir.path().join("counter.bench");
    let base = [
        "attack", enc_path.to_str().unwrap(),
        "--oracle", oracle.to_str().unwrap(),
        "--tk", "1", "--mode", "reference",
    ];
    let timeout = run(&[&base[..], &["--time-limit", "0.0000001"]].concat());
    assert_eq!(timeout.status.code(), Some(3));
    let rep: serde_json::Value = serde_json::from_slice(&timeout.stdout).unwrap();
    assert_eq!(rep["result"]["status"], "timeout");

    let capped = run(&[&base[..], &["--depth-cap", "2"]].concat());
    assert_eq!(capped.status.code(), Some(2));
    let rep: serde_json::Value = serde_json::from_slice(&capped.stdout).unwrap();
    assert_eq!(rep["result"]["status"], "depth_cap");
}

#[test]
fn external_solver_round_trips_through_the_solve_command() {
    let mut sat = CnfFormula::new();
    let (a, b) = (sat.fresh(), sat.fresh());
    sat.add_clause(&[a, b]);
    sat.add_clause(&[!a, b]);
    sat.add_clause(&[a, !b]);
    let mut unsat = sat.clone();
    unsat.add_clause(&[!a, !b]);

    for (f, want) in [(&sat, SolveResult::Sat), (&unsat, SolveResult::Unsat)] {
        let mut ext = ExternalSolver::new(BIN, &["solve".to_string()]);
        for _ in 0..f.num_vars() {
            ext.fresh_var();
        }
        for c in &f.clauses {
            ext.add_clause(c);
        }
        let got = ext.solve_under(&[]).unwrap();
        assert_eq!(got, want);
        let mut native = Solver::default();
        native.load(f);
        assert_eq!(native.solve_under(&[]).unwrap(), want);
        if want == SolveResult::Sat {
            let model: Vec<bool> = (0..f.num_vars())
                .map(|v| ext.model_value(funsat_core::cnf::Var(v as u32).lit(false)))
                .collect();
            assert!(f.eval(&model), "external model does not satisfy the formula");
        }
    }
}
