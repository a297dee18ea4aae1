use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn mmjoin(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mmjoin"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn generate_optimize_run() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let gen = mmjoin(
        d,
        &["gen", "--shape", "snowflake:3,2", "--n", "2000", "--m", "0.1:0.5", "--fo", "uniform:1,10", "--seed", "7", "--out", "inst"],
    );
    assert!(gen.status.success(), "{}", String::from_utf8_lossy(&gen.stderr));
    for f in ["query.json", "stats.json", "catalog/catalog.json"] {
        assert!(d.join("inst").join(f).exists(), "{f}");
    }
    let mut costs = Vec::new();
    for algo in ["survival", "exhaustive"] {
        let plan = format!("{algo}.plan.json");
        let report = format!("{algo}.report.json");
        let out = mmjoin(
            d,
            &[
                "optimize", "--query", "inst/query.json", "--stats", "inst/stats.json", "--algo", algo, "--strategy", "com", "--out", &plan,
                "--report", &report,
            ],
        );
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let r = json(&d.join(&report));
        assert_eq!(r["schema_version"], 1);
        costs.push(r["cost"].as_f64().unwrap());
    }
    assert!(costs[1] <= costs[0] * (1.0 + 1e-12));

    let run = mmjoin(
        d,
        &["run", "--query", "inst/query.json", "--plan", "exhaustive.plan.json", "--strategy", "com", "--output", "count", "--report", "run.json"],
    );
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let r = json(&d.join("run.json"));
    assert!(r["hash_probes"].as_u64().unwrap() > 0);
    let card = r["cardinality"].as_u64().unwrap();

    let flat = mmjoin(
        d,
        &["run", "--query", "inst/query.json", "--plan", "exhaustive.plan.json", "--strategy", "sj+std", "--output", "flat", "--csv", "out.csv"],
    );
    assert!(flat.status.success());
    let printed: serde_json::Value = serde_json::from_slice(&flat.stdout).unwrap();
    assert_eq!(printed["cardinality"].as_u64().unwrap(), card);
    let lines = fs::read_to_string(d.join("out.csv")).unwrap().lines().count() as u64;
    assert_eq!(lines, card + 1);
}

#[test]
fn ingest_and_sample_stats() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::create_dir(d.join("data")).unwrap();
    fs::write(d.join("data/r.csv"), "a\n1\n2\n3\n4\n").unwrap();
    fs::write(d.join("data/s.csv"), "a,tag\n1,x\n1,y\n2,z\n").unwrap();
    fs::write(
        d.join("schema.json"),
        r#"{"r": [{"name": "a", "type": "Int64"}], "s": [{"name": "a", "type": "Int64"}, {"name": "tag", "type": "Utf8Dict"}]}"#,
    )
    .unwrap();
    let out = mmjoin(d, &["ingest", "--schema", "schema.json", "--dir", "data", "--out", "cat"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    fs::write(
        d.join("q.json"),
        r#"{"relations": ["r", "s"], "edges": [{"left": "r", "left_attr": "a", "right": "s", "right_attr": "a"}], "driver": "r"}"#,
    )
    .unwrap();
    let out = mmjoin(d, &["stats", "--catalog", "cat", "--query", "q.json", "--estimator", "sample", "--sample-size", "100", "--out", "s.json"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let s = json(&d.join("s.json"));
    let edge = s["edges"].as_array().unwrap().iter().find(|e| e["parent"] == "r").unwrap().clone();
    assert_eq!(edge["m"], 0.5);
    assert_eq!(edge["fo"], 1.5);
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    assert_eq!(mmjoin(d, &["frobnicate"]).status.code(), Some(1));
    assert_eq!(mmjoin(d, &["run", "--query"]).status.code(), Some(1));
    assert_eq!(mmjoin(d, &["--chunk-size", "0", "gen", "--shape", "star:3", "--out", "x"]).status.code(), Some(1));
    assert_eq!(mmjoin(d, &["run", "--query", "missing.json", "--plan", "p.json"]).status.code(), Some(2));
    assert_eq!(mmjoin(d, &["gen", "--shape", "star:3", "--n", "10", "--m", "0.01", "--out", "x"]).status.code(), Some(2));
    assert_eq!(mmjoin(d, &["--help"]).status.code(), Some(0));

    let gen = mmjoin(d, &["gen", "--shape", "path:6", "--n", "20000", "--m", "1", "--fo", "3", "--out", "big"]);
    assert!(gen.status.success());
    fs::write(
        d.join("plan.json"),
        r#"{"driver": "R3", "order": ["R2", "R1", "R4", "R5", "R6"], "strategy": "STD"}"#,
    )
    .unwrap();
    let out = mmjoin(d, &["--timeout", "0.000001", "run", "--query", "big/query.json", "--plan", "plan.json"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn sweeps_write_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let out = mmjoin(
        d,
        &["validate-cost", "--shape", "star:4", "--n", "1000", "--m", "0.5", "--fo", "2", "--orders", "3", "--out", "vc"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r = json(&d.join("vc/report.json"));
    assert_eq!(r["schema_version"], 1);
    assert_eq!(r["config"]["orders"], 3);
    assert!(d.join("vc/orders.csv").exists());

    let out = mmjoin(d, &["robustness", "--shape", "path:4", "--n", "500", "--orders", "4", "--strategies", "SJ+COM,STD", "--out", "rb"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r = json(&d.join("rb/report.json"));
    assert_eq!(r["summary"]["max_spread_SJ+COM"].as_f64(), Some(0.0));

    fs::write(d.join("cfg.json"), r#"{"experiment": "optimizer_quality", "trees": 5, "strategies": ["COM"]}"#).unwrap();
    let out = mmjoin(d, &["bench", "--config", "cfg.json", "--out", "oq"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(d.join("oq/trees.csv").exists());
}
