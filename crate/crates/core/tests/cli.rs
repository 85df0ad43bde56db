use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn gatecert(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gatecert"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn simulate_writes_full_table() {
    let dir = tempfile::tempdir().unwrap();
    let o = gatecert(&["simulate"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let text = fs::read_to_string(dir.path().join("table.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 1 + 288);
    let summary: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["entries"], 288);
    for p in summary["p_l"].as_array().unwrap() {
        assert!((p.as_f64().unwrap() - 0.25).abs() < 1e-12);
    }
}

#[test]
fn outputs_are_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["simulate", "--gate", "random:7", "--scheme", "di"];
    assert_eq!(gatecert(&args, a.path()).status.code(), Some(0));
    assert_eq!(gatecert(&args, b.path()).status.code(), Some(0));
    for name in ["table.jsonl", "summary.json"] {
        assert_eq!(
            fs::read(a.path().join(name)).unwrap(),
            fs::read(b.path().join(name)).unwrap(),
            "{name} differs"
        );
    }
}

#[test]
fn certify_reference_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let o = gatecert(&["certify", "--gate", "cz"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let rep: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(rep["verdict"], "certified");
}

#[test]
fn perturbed_adversary_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let adv = dir.path().join("adv.json");
    fs::write(&adv, r#"{"kind":"perturb","epsilon":0.1,"seed":1}"#).unwrap();
    let o = gatecert(&["certify", "--adversary", adv.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("failing: step2"));
}

#[test]
fn corrupted_table_names_failing_check() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(gatecert(&["simulate"], dir.path()).status.code(), Some(0));
    let path = dir.path().join("table.jsonl");
    let mut rows: Vec<Value> = fs::read_to_string(&path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    // Swap two outcomes of one e = 1 row; normalization is untouched.
    let pick = |rows: &[Value], l: Value| {
        rows.iter()
            .position(|r| {
                r["e"] == 1 && r["y"] == "perp" && r["x"] == serde_json::json!([0, 0])
                    && r["a"] == serde_json::json!([0, 0]) && r["l"] == l
            })
            .unwrap()
    };
    let i = pick(&rows, serde_json::json!([0, 0]));
    let j = pick(&rows, serde_json::json!([0, 1]));
    let (pi, pj) = (rows[i]["p"].clone(), rows[j]["p"].clone());
    rows[i]["p"] = pj;
    rows[j]["p"] = pi;
    let text: String = rows.iter().map(|r| format!("{r}\n")).collect();
    fs::write(&path, text).unwrap();

    let o = gatecert(&["certify", "--table", path.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("failing: step2.l="), "{}", stdout(&o));
}

#[test]
fn bad_input_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(gatecert(&["certify", "--n", "7"], dir.path()).status.code(), Some(2));
    let adv = dir.path().join("adv.json");
    fs::write(&adv, "{not json").unwrap();
    let o = gatecert(&["certify", "--adversary", adv.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(gatecert(&["frobnicate"], dir.path()).status.code(), Some(2));
}

#[test]
fn bounds_report_all_functionals() {
    let dir = tempfile::tempdir().unwrap();
    let o = gatecert(&["bounds", "--restarts", "2"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let doc: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("bounds.json")).unwrap()).unwrap();
    let text = doc.to_string();
    assert!(text.contains("classical"));
    assert!(text.contains("seesaw"));
}

#[test]
fn extract_and_decompose_write_documents() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(gatecert(&["extract", "--scheme", "di"], dir.path()).status.code(), Some(0));
    let doc: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("extraction.json")).unwrap()).unwrap();
    assert_eq!(doc["pass"], true);
    assert!(doc["unitary_d"].as_f64().unwrap() < 1e-8);

    assert_eq!(gatecert(&["decompose", "--gate", "swap"], dir.path()).status.code(), Some(0));
    let doc: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("decomposition.json")).unwrap()).unwrap();
    assert_eq!(doc["tensors"].as_array().unwrap().len(), 4);
}

#[test]
fn adversary_sweep_grows_with_epsilon() {
    let dir = tempfile::tempdir().unwrap();
    let adv = dir.path().join("adv.json");
    fs::write(&adv, r#"[{"kind":"dilate","junk_dim":2,"seed":3}]"#).unwrap();
    let o = gatecert(&["adversary", "--adversary", adv.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let csv = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let res: Vec<f64> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().trim().parse().unwrap())
        .collect();
    assert_eq!(res.len(), 4);
    assert!(res[0] < 1e-9);
    assert!(res.windows(2).all(|w| w[0] < w[1]), "{res:?}");
}
