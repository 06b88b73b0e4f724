use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use kgflow_core::fixtures::{G4DN_JSON, LISTING1, QCLOUD_JSON, QCLOUD_OBSERVATIONS_JSON};
use kgflow_runtime::corpus::format_corpus;
use kgflow_runtime::synthetic_corpus;
use serde_json::Value;

const PROFILE: &str = r#"{
  "vertex_weights": {"BertNER": 1.6, "f_bert": 0.04, "f_lstm": 0.04, "p1": 0.08, "p2": 0.08,
                     "BERTRE": 2.2, "LSTMRE": 1.9, "re": 0.03, "triple": 0.05},
  "edge_payloads": [
    {"from": "BertNER", "to": "f_bert", "bytes": 180000}, {"from": "BertNER", "to": "f_lstm", "bytes": 180000},
    {"from": "f_bert", "to": "p1", "bytes": 120000}, {"from": "f_lstm", "to": "p2", "bytes": 90000},
    {"from": "p1", "to": "BERTRE", "bytes": 900000}, {"from": "p2", "to": "LSTMRE", "bytes": 600000},
    {"from": "BERTRE", "to": "re", "bytes": 60000}, {"from": "LSTMRE", "to": "re", "bytes": 45000},
    {"from": "re", "to": "triple", "bytes": 100000}
  ]
}"#;

const CHAIN: &str = ":data
    | model.OracleNER -> ent, ent_t
        | opt.permutate -> ent_p, ent_t_p
            | model.OracleRE
                | opt.triple:
";

struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    fn new() -> Self {
        let w = Workspace {
            dir: tempfile::tempdir().unwrap(),
        };
        w.write("listing1.gfl", LISTING1);
        w.write("profile.json", PROFILE);
        w.write("qcloud.json", QCLOUD_JSON);
        w.write("g4dn.json", G4DN_JSON);
        w.write("observations.json", QCLOUD_OBSERVATIONS_JSON);
        w.write("chain.gfl", CHAIN);
        w.write("corpus.jsonl", &format_corpus(&synthetic_corpus(30, 2)));
        w.write("endpoints.toml", "[OracleNER]\nkind = \"oracle-ce\"\n\n[OracleRE]\nkind = \"oracle-cc\"\n");
        w
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn write(&self, name: &str, text: &str) -> PathBuf {
        let p = self.path(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    fn read(&self, name: &str) -> String {
        std::fs::read_to_string(self.path(name)).unwrap()
    }

    fn kgflow(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_kgflow"))
            .args(args)
            .current_dir(self.dir.path())
            .env_remove("KGFLOW_CATALOG")
            .env_remove("RUST_LOG")
            .output()
            .unwrap()
    }
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&o.stdout)))
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn gfl_check_accepts_the_listing_and_rejects_cycles() {
    let w = Workspace::new();
    let ok = w.kgflow(&["gfl", "check", "listing1.gfl"]);
    assert_eq!(code(&ok), 0, "{}", stderr(&ok));
    let v = stdout_json(&ok);
    assert_eq!((v["vertices"].as_u64(), v["edges"].as_u64()), (Some(10), Some(10)));

    w.write("cyclic.gfl", ":data\n    | opt.merge[a]\n        | opt.merge[b]\n            | opt.merge[a]\n    | opt.triple:\n");
    let bad = w.kgflow(&["gfl", "check", "cyclic.gfl"]);
    assert_eq!(code(&bad), 1);
    assert!(stderr(&bad).contains("cycle"), "{}", stderr(&bad));
    assert!(bad.stdout.is_empty());
}

#[test]
fn gfl_fmt_and_dot() {
    let w = Workspace::new();
    let f = w.kgflow(&["gfl", "fmt", "listing1.gfl", "--out", "fmt.gfl"]);
    assert_eq!(code(&f), 0, "{}", stderr(&f));
    assert_eq!(code(&w.kgflow(&["gfl", "fmt", "--check", "fmt.gfl"])), 0);
    let again = w.kgflow(&["gfl", "fmt", "fmt.gfl"]);
    assert_eq!(String::from_utf8(again.stdout).unwrap(), w.read("fmt.gfl"));
    w.write("ugly.gfl", ":data\n  | model.OracleNER\n    | opt.triple:\n");
    assert_eq!(code(&w.kgflow(&["gfl", "fmt", "--check", "ugly.gfl"])), 1);

    let d = w.kgflow(&["gfl", "dot", "listing1.gfl"]);
    let dot = String::from_utf8(d.stdout).unwrap();
    assert!(dot.starts_with("digraph"));
    assert_eq!(dot.matches("->").count(), 10);
}

#[test]
fn usage_errors_exit_one() {
    let w = Workspace::new();
    assert_eq!(code(&w.kgflow(&["frobnicate"])), 1);
    assert_eq!(code(&w.kgflow(&["schedule", "--bogus"])), 1);
    let eta = w.kgflow(&["schedule", "--flowline", "listing1.gfl", "--profile", "profile.json", "--eta", "1.5"]);
    assert_eq!(code(&eta), 1);
    assert!(stderr(&eta).contains("eta out of range"));
    let missing = w.kgflow(&["schedule", "--profile", "profile.json"]);
    assert_eq!(code(&missing), 1);
    assert!(stderr(&missing).contains("--flowline"));
    assert_eq!(code(&w.kgflow(&["--help"])), 0);
}

#[test]
fn io_errors_exit_two() {
    let w = Workspace::new();
    assert_eq!(code(&w.kgflow(&["gfl", "check", "absent.gfl"])), 2);
    assert_eq!(code(&w.kgflow(&["schedule", "--flowline", "listing1.gfl", "--profile", "absent.json"])), 2);
    assert_eq!(code(&w.kgflow(&["--config", "absent.toml", "fit-price"])), 2);
    // Collinear cpu and gpu counts leave the price model undetermined.
    let collinear = w.kgflow(&["fit-price", "--catalog", "qcloud.json"]);
    assert_eq!(code(&collinear), 1);
    assert!(stderr(&collinear).contains("collinear"));
}

fn schedule_args<'a>(extra: &[&'a str]) -> Vec<&'a str> {
    let mut args = vec!["schedule", "--flowline", "listing1.gfl", "--profile", "profile.json", "--catalog", "qcloud.json"];
    args.extend_from_slice(extra);
    args
}

#[test]
fn schedule_procures_five_x_plus_two_x() {
    let w = Workspace::new();
    let o = w.kgflow(&schedule_args(&["--eta", "0.5", "--out", "plan.json"]));
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(o.stdout.is_empty());
    let plan: Value = serde_json::from_str(&w.read("plan.json")).unwrap();
    let mut items: Vec<(String, u64)> = plan["procurement"]
        .as_array()
        .unwrap()
        .iter()
        .map(|i| (i["type"].as_str().unwrap().to_string(), i["count"].as_u64().unwrap()))
        .collect();
    items.sort();
    assert_eq!(items, [("2XLARGE40".to_string(), 1), ("5XLARGE80".to_string(), 1)]);

    let fitted = w.kgflow(&schedule_args(&["--observations", "observations.json"]));
    let plan: Value = stdout_json(&fitted);
    assert!((plan["x0"].as_f64().unwrap() - 25.07).abs() < 0.02);
    assert!((plan["fit"]["b"].as_f64().unwrap() - 5.15).abs() < 0.05);
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let w = Workspace::new();
    for args in [
        schedule_args(&["--eta", "0.3"]),
        vec!["fit-price", "--catalog", "g4dn.json"],
        vec!["fit-g", "--observations", "observations.json", "--eta", "0.7"],
    ] {
        let a = w.kgflow(&args);
        let b = w.kgflow(&args);
        assert_eq!(code(&a), 0, "{args:?}: {}", stderr(&a));
        assert_eq!(a.stdout, b.stdout);
    }
}

#[test]
fn config_file_is_overridden_by_flags() {
    let w = Workspace::new();
    w.write("kgflow.toml", "slice_size = 10\nflowline = \"chain.gfl\"\ncorpus = \"corpus.jsonl\"\nendpoints = \"endpoints.toml\"\n");
    let from_file = w.kgflow(&["--config", "kgflow.toml", "run", "--out", "a.nt"]);
    assert_eq!(code(&from_file), 0, "{}", stderr(&from_file));
    assert_eq!(stdout_json(&from_file)["slices"], 3);
    let flagged = w.kgflow(&["--config", "kgflow.toml", "run", "--out", "b.nt", "--slice-size", "5"]);
    assert_eq!(stdout_json(&flagged)["slices"], 6);
    assert_eq!(w.read("a.nt"), w.read("b.nt"));
    let defaults = w.kgflow(&[
        "run", "--flowline", "chain.gfl", "--corpus", "corpus.jsonl", "--endpoints", "endpoints.toml", "--out", "c.nt",
    ]);
    assert_eq!(stdout_json(&defaults)["slices"], 1);
    w.write("bad.toml", "eta = 1.0\n");
    let bad = w.kgflow(&["--config", "bad.toml", "fit-price"]);
    assert_eq!(code(&bad), 1);
    assert!(stderr(&bad).contains("eta out of range"));
}

#[test]
fn catalog_comes_from_the_environment() {
    let w = Workspace::new();
    w.write("tiny.json", r#"[{"name": "solo", "cpu_cores": 64, "gpu_cards": 8, "unit_price": 9.0}]"#);
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_kgflow"));
    cmd.args(["schedule", "--flowline", "listing1.gfl", "--profile", "profile.json"])
        .current_dir(w.dir.path())
        .env("KGFLOW_CATALOG", w.path("tiny.json"));
    let o = cmd.output().unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(stdout_json(&o)["procurement"][0]["type"], "solo");
}

#[test]
fn run_eval_profile_round_trip() {
    let w = Workspace::new();
    let base = ["--flowline", "chain.gfl", "--corpus", "corpus.jsonl", "--endpoints", "endpoints.toml"];
    let mut run = vec!["run", "--out", "pred.nt"];
    run.extend(base);
    let o = w.kgflow(&run);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(w.read("pred.nt").lines().all(|l| l.ends_with(" .")));

    let e = w.kgflow(&["eval", "--predicted", "pred.nt", "--gold", "corpus.jsonl"]);
    assert_eq!(code(&e), 0, "{}", stderr(&e));
    let prf = stdout_json(&e);
    assert_eq!((prf["precision"].as_f64(), prf["recall"].as_f64(), prf["f1"].as_f64()), (Some(1.0), Some(1.0), Some(1.0)));
    let self_eval = w.kgflow(&["eval", "--predicted", "pred.nt", "--gold", "pred.nt"]);
    assert_eq!(stdout_json(&self_eval)["f1"], 1.0);

    let mut prof = vec!["profile", "--sample", "10", "--out", "warm.json", "--slice-size", "5"];
    prof.extend(base);
    let p = w.kgflow(&prof);
    assert_eq!(code(&p), 0, "{}", stderr(&p));
    let profile: Value = serde_json::from_str(&w.read("warm.json")).unwrap();
    assert!(profile["vertex_weights"]["OracleRE"].as_f64().unwrap() > 0.0);

    // The measured profile feeds straight into scheduling and simulation.
    let s = w.kgflow(&["schedule", "--flowline", "chain.gfl", "--profile", "warm.json", "--out", "plan.json"]);
    assert_eq!(code(&s), 0, "{}", stderr(&s));
    let sim = w.kgflow(&[
        "simulate", "--flowline", "chain.gfl", "--profile", "warm.json", "--plan", "plan.json", "--corpus-size", "1000",
        "--trace", "trace.json",
    ]);
    assert_eq!(code(&sim), 0, "{}", stderr(&sim));
    let v = stdout_json(&sim);
    let (got, want) = (v["total_time"].as_f64().unwrap(), v["predicted_total_time"].as_f64().unwrap());
    assert!((got - want).abs() <= 1e-9 * want, "{got} vs {want}");
    let trace: Value = serde_json::from_str(&w.read("trace.json")).unwrap();
    assert!(trace.to_string().contains("\"ph\":\"X\""));
}

#[test]
fn unbound_model_is_a_domain_error() {
    let w = Workspace::new();
    w.write("partial.toml", "[OracleNER]\nkind = \"oracle-ce\"\n");
    let o = w.kgflow(&[
        "run", "--flowline", "chain.gfl", "--corpus", "corpus.jsonl", "--endpoints", "partial.toml", "--out", "x.nt",
    ]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("OracleRE"));
    assert!(!Path::new(&w.path("x.nt")).exists());
}

#[test]
fn sweep_writes_json_and_csv() {
    let w = Workspace::new();
    let o = w.kgflow(&[
        "sweep", "--flowline", "listing1.gfl", "--profile", "profile.json", "--etas", "0.2,0.8", "--csv", "sweep.csv",
        "--corpus-size", "2000",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(stdout_json(&o).as_array().unwrap().len(), 6);
    let csv = w.read("sweep.csv");
    assert_eq!(csv.lines().count(), 7);
    assert!(csv.starts_with("eta,scheduler"));
}
