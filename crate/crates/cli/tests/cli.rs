use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fedsim_core::flow::{run_flow, FlowTrace, SimState};
use fedsim_core::suites::{conformance_cases, reference_topology};
use fedsim_core::topology::{load_topology, validate_invariants};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn fedsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fedsim"))
        .args(args)
        .env("FEDSIM_SCENARIO_DIR", scenarios())
        .output()
        .expect("spawn fedsim")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn validate_exit_codes_follow_findings() {
    for name in ["clean.toml", "double-trust.toml", "dangling.toml"] {
        let path = fixture(name);
        let want = match load_topology(&fs::read_to_string(&path).unwrap()) {
            Err(_) => 2,
            Ok(t) if validate_invariants(&t).is_empty() => 0,
            Ok(_) => 1,
        };
        let o = fedsim(&["validate", path.to_str().unwrap()]);
        assert_eq!(code(&o), want, "{name}");
    }
    let o = fedsim(&["validate", fixture("double-trust.toml").to_str().unwrap()]);
    assert!(stdout(&o).contains("internal-sp-multiple-trust"));
    assert_eq!(code(&fedsim(&["validate", "/nonexistent.toml"])), 2);
    let elixir = scenarios().join("b3-elixir.toml");
    assert_eq!(code(&fedsim(&["validate", elixir.to_str().unwrap()])), 0);
}

#[test]
fn wlcg_run_translates_to_certificates() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("wlcg.jsonl");
    let o = fedsim(&["run", "b4-wlcg", "--trace", trace.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let t = FlowTrace::from_jsonl(&fs::read_to_string(&trace).unwrap()).unwrap();
    assert!(t
        .events
        .iter()
        .any(|e| e.action.as_str() == "translate" && e.summary.get("to").map(String::as_str) == Some("x509-like")));
}

#[test]
fn same_seed_gives_identical_trace_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        let o = fedsim(&["run", "--all", "--seed", seed, "--trace", out.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{}", stdout(&o));
        let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(&out)
            .unwrap()
            .map(|e| e.unwrap().path())
            .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
            .collect();
        files.sort();
        files
    };
    let a = run("a", "42");
    assert_eq!(a.len(), 7);
    assert_eq!(a, run("b", "42"));
    assert_ne!(a, run("c", "43"));
}

#[test]
fn tampered_skeleton_is_reported() {
    let text = fs::read_to_string(scenarios().join("b4-wlcg.toml")).unwrap();
    let tampered = text.replacen("\"4 tts translate\"", "\"4 proxy translate\"", 1);
    assert_ne!(text, tampered);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tampered.toml");
    fs::write(&path, tampered).unwrap();
    let o = fedsim(&["run", path.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    let out = stdout(&o);
    assert!(out.contains("missing (4 proxy translate)"), "{out}");
    assert!(out.contains("unexpected (4 tts translate)"), "{out}");
}

#[test]
fn diagrams_draw_one_arrow_per_event() {
    let t = reference_topology();
    let mut cases = conformance_cases();
    cases.shuffle(&mut ChaCha8Rng::seed_from_u64(3));
    let dir = tempfile::tempdir().unwrap();
    for (i, spec) in cases.iter().take(20).enumerate() {
        let mut st = SimState::new(&t).unwrap();
        let trace = run_flow(&t, &mut st, spec, i);
        let path = dir.path().join(format!("{i}.jsonl"));
        let jsonl = trace.trace.to_jsonl();
        fs::write(&path, &jsonl).unwrap();
        let lines = jsonl.lines().count();

        let text = stdout(&fedsim(&["diagram", path.to_str().unwrap()]));
        assert_eq!(text.lines().filter(|l| l.contains(" -> ")).count(), lines, "{spec}");

        let mermaid = stdout(&fedsim(&["diagram", path.to_str().unwrap(), "--format", "mermaid"]));
        assert!(mermaid.starts_with("sequenceDiagram\n"));
        assert_eq!(mermaid.lines().filter(|l| l.contains("->>")).count(), lines, "{spec}");
        for e in &trace.trace.events {
            assert!(mermaid.contains(&format!(" as {}\n", e.actor)), "{}", e.actor);
        }
    }
}

#[test]
fn check_suites_and_registry_audit() {
    assert_eq!(code(&fedsim(&["check", "--suite", "ids"])), 0);
    assert_eq!(code(&fedsim(&["check", "--suite", "nonsense"])), 2);
    let clean = fixture("registry-clean.txt");
    assert_eq!(code(&fedsim(&["check", "--suite", "ids", "--registry", clean.to_str().unwrap()])), 0);
    let bad = fixture("registry-reassigned.txt");
    let o = fedsim(&["check", "--suite", "ids", "--registry", bad.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("FAIL ids/snapshot non-reassignment"));
}

#[test]
fn scenarios_are_listed() {
    let o = fedsim(&["scenarios"]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o).lines().count(), 7);
}

#[test]
fn ad_hoc_flow_grants_and_denies() {
    let topo = fixture("clean.toml");
    let args = |user: &str| {
        vec![
            "flow".to_string(),
            topo.to_str().unwrap().to_string(),
            "--user".into(),
            user.into(),
            "--sp".into(),
            "sp:wiki".into(),
            "--tech".into(),
            "saml-like".into(),
            "--provider".into(),
            "idp:uni".into(),
        ]
    };
    let run = |user: &str| {
        let a = args(user);
        fedsim(&a.iter().map(String::as_str).collect::<Vec<_>>())
    };
    assert_eq!(code(&run("ada")), 0);
    assert_eq!(code(&run("nobody")), 1);
}
