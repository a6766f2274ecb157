use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use nngtl_core::bench::{case_study_workspace, CASE_STUDY_FORMULA};
use nngtl_core::buchi::Nba;
use nngtl_core::ltl::{ltl_to_nba, parse_ltl};
use nngtl_core::planner::Plan;
use nngtl_core::workspace::GridWorkspace;

fn nngtl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nngtl")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn case_study(dir: &Path) -> std::path::PathBuf {
    let p = dir.join("case.json");
    case_study_workspace(200).save(&p).unwrap();
    p
}

#[test]
fn translate_writes_json_and_hoa() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("b.json");
    let hoa = dir.path().join("b.hoa");
    assert_eq!(code(&nngtl(&["translate", "--ltl", CASE_STUDY_FORMULA, "--out", s(&json)])), 0);
    assert_eq!(code(&nngtl(&["translate", "--ltl", CASE_STUDY_FORMULA, "--out", s(&hoa)])), 0);
    let b = Nba::from_json(&fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(b, ltl_to_nba(&parse_ltl(CASE_STUDY_FORMULA).unwrap()));
    assert!(fs::read_to_string(&hoa).unwrap().starts_with("HOA: v1"));
}

#[test]
fn nba_info_reports_feasible_states() {
    let o = nngtl(&["nba", "info", "--ltl", "[]<> l1 && []<> l2"]);
    assert_eq!(code(&o), 0);
    let out = String::from_utf8(o.stdout).unwrap();
    assert!(out.contains("states: "));
    assert!(out.contains("feasible accepting: ["));
    assert!(out.contains("rho from init 0: ["));
}

#[test]
fn generate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        let o = nngtl(&["generate", "--seed", "3", "--count", "2", "--size", "60", "--labels", "4", "--out", s(d)]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["manifest.json", "inst0000/workspace.json", "inst0001/formula.ltl"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn guided_case_study_plan_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let ws_path = case_study(dir.path());
    let out = dir.path().join("run");
    let o = nngtl(&[
        "plan", "--workspace", s(&ws_path), "--ltl", CASE_STUDY_FORMULA, "--strategy", "guided", "--oracle",
        "--first-solution", "--out", s(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let plan = Plan::from_json(&fs::read_to_string(out.join("plan.json")).unwrap()).unwrap();
    let ws = GridWorkspace::load(&ws_path).unwrap();
    let nba = ltl_to_nba(&parse_ltl(CASE_STUDY_FORMULA).unwrap());
    plan.check(&ws, &nba).unwrap();
    let stats: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("stats.json")).unwrap()).unwrap();
    assert!(stats["n"].as_u64().unwrap() > 0);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let ws = case_study(dir.path());
    let out = dir.path().join("run");
    let unsat = nngtl(&["plan", "--workspace", s(&ws), "--ltl", "<> (l1 && l2)", "--out", s(&out)]);
    assert_eq!(code(&unsat), 2);
    let no_pred = nngtl(&["plan", "--workspace", s(&ws), "--ltl", "<> l1", "--strategy", "guided", "--out", s(&out)]);
    assert_eq!(code(&no_pred), 64);
    let budget = nngtl(&["plan", "--workspace", s(&ws), "--ltl", "<> l1", "--max-iters", "1", "--out", s(&out)]);
    assert_eq!(code(&budget), 3);
    assert_eq!(code(&nngtl(&["plan", "--no-such-flag"])), 64);
    assert_eq!(code(&nngtl(&["plan", "--workspace", s(&ws), "--ltl", "<> (l1", "--out", s(&out)])), 64);
    assert!(!out.join("plan.json").exists());
}

#[test]
fn oracle_file_drives_guided_planning_and_rendering() {
    let dir = tempfile::tempdir().unwrap();
    let ws = case_study(dir.path());
    let pred = dir.path().join("pred.json");
    let o = nngtl(&["predict-oracle", "--workspace", s(&ws), "--ltl", CASE_STUDY_FORMULA, "--out", s(&pred)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let out = dir.path().join("run");
    let o = nngtl(&[
        "plan", "--workspace", s(&ws), "--ltl", CASE_STUDY_FORMULA, "--strategy", "guided", "--prediction", s(&pred),
        "--first-solution", "--out", s(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    let svg = dir.path().join("fig.svg");
    let o = nngtl(&[
        "render", "--workspace", s(&ws), "--plan", s(&out.join("plan.json")), "--heatmap", s(&pred), "--out", s(&svg),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&svg).unwrap();
    for l in ["l1", "l2", "l3"] {
        assert!(text.contains(&format!(">{l}</text>")));
    }
    assert!(text.contains(r#"id="prefix""#) && text.contains(r#"class="heat""#));
}

#[test]
fn compare_and_export_on_a_small_batch() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("inst");
    let o = nngtl(&["generate", "--seed", "5", "--count", "2", "--size", "60", "--labels", "4", "--out", s(&inst)]);
    assert_eq!(code(&o), 0);

    let out = dir.path().join("bench");
    let args = [
        "compare", "--instances", s(&inst), "--trials", "1", "--max-iters", "2000", "--time-limit", "20", "--out",
        s(&out),
    ];
    let o = nngtl(&args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let runs = fs::read_to_string(out.join("runs.csv")).unwrap();
    assert_eq!(runs.lines().count(), 1 + 2 * 3);
    assert!(fs::read_to_string(out.join("summary.csv")).unwrap().starts_with("class,strategy,T,n,len,m,timeouts"));
    assert!(out.join("report.md").exists());
    // completed runs are not repeated
    assert_eq!(code(&nngtl(&args)), 0);
    assert_eq!(fs::read_to_string(out.join("runs.csv")).unwrap(), runs);

    let data = dir.path().join("data");
    let o = nngtl(&["export-dataset", "--instances", s(&inst), "--out", s(&data), "--iterations", "3000"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(data.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["instances"].as_array().unwrap().len(), 2);
}
