use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn dynacd(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dynacd"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

const SMALL: &[&str] = &[
    "generate",
    "--n",
    "40",
    "--k",
    "2",
    "--t",
    "3",
    "--avg-degree",
    "4",
    "--rho-a",
    "0.2",
    "--seed",
    "3",
];

const QUICK_FIT: &[&str] = &["--restarts", "2", "--max-iter", "40", "--seed", "5"];

fn generated() -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    ok(&dynacd(dir.path(), SMALL));
    dir
}

fn fit_args<'a>(input: &'a str, out: &'a str) -> Vec<&'a str> {
    let mut v = vec!["fit", "--input", input, "--k", "2", "--out", out];
    v.extend_from_slice(QUICK_FIT);
    v
}

#[test]
fn generate_writes_network_truth_and_manifests() {
    let dir = generated();
    for f in [
        "net.json",
        "truth.json",
        "net.json.manifest.json",
        "truth.json.manifest.json",
    ] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("net.json.manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["command"], "generate");
    assert_eq!(manifest["seed"], 3);
    let net_bytes = fs::read(dir.path().join("net.json")).unwrap();
    assert_eq!(
        manifest["output_digest"].as_str().unwrap(),
        dynacd::manifest::sha256_hex(&net_bytes)
    );
}

#[test]
fn fit_is_byte_identical_across_runs_and_threads() {
    let dir = generated();
    ok(&dynacd(dir.path(), &fit_args("net.json", "a.json")));
    let mut args = vec!["--threads", "3"];
    args.extend(fit_args("net.json", "b.json"));
    ok(&dynacd(dir.path(), &args));
    let a = fs::read(dir.path().join("a.json")).unwrap();
    let b = fs::read(dir.path().join("b.json")).unwrap();
    assert_eq!(a, b);
    let result: dynacd::FitResult = serde_json::from_slice(&a).unwrap();
    assert_eq!(result.seed_used, 5);
    assert_eq!(result.restart_objectives.len(), 2);
}

#[test]
fn score_lists_pairs_by_descending_q() {
    let dir = generated();
    ok(&dynacd(dir.path(), &fit_args("net.json", "fit.json")));
    let out = dynacd(dir.path(), &["score", "--fit", "fit.json", "--top", "25"]);
    ok(&out);
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("rank,i,j,q"));
    let rows: Vec<(usize, usize, f64)> = lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (
                f[1].parse().unwrap(),
                f[2].parse().unwrap(),
                f[3].parse().unwrap(),
            )
        })
        .collect();
    assert_eq!(rows.len(), 25);
    for w in rows.windows(2) {
        let (a, b) = (w[0], w[1]);
        assert!(a.2 > b.2 || (a.2 == b.2 && (a.0, a.1) < (b.0, b.1)));
    }
}

#[test]
fn score_from_params_matches_score_from_fit() {
    let dir = generated();
    ok(&dynacd(dir.path(), &fit_args("net.json", "fit.json")));
    let fitted: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("fit.json")).unwrap()).unwrap();
    fs::write(
        dir.path().join("params.json"),
        serde_json::to_vec(&fitted["params"]).unwrap(),
    )
    .unwrap();
    let from_fit = dynacd(dir.path(), &["score", "--fit", "fit.json", "--top", "10"]);
    let from_params = dynacd(
        dir.path(),
        &[
            "score",
            "--params",
            "params.json",
            "--input",
            "net.json",
            "--top",
            "10",
        ],
    );
    ok(&from_fit);
    ok(&from_params);
    let pairs = |o: &Output| -> Vec<String> {
        String::from_utf8_lossy(&o.stdout)
            .lines()
            .map(|l| l.splitn(4, ',').take(3).collect::<Vec<_>>().join(","))
            .collect()
    };
    assert_eq!(pairs(&from_fit), pairs(&from_params));
}

#[test]
fn evaluate_reports_metrics_in_unit_interval() {
    let dir = generated();
    ok(&dynacd(dir.path(), &fit_args("net.json", "fit.json")));
    ok(&dynacd(
        dir.path(),
        &[
            "evaluate",
            "--truth",
            "truth.json",
            "--fit",
            "fit.json",
            "--out",
            "m.csv",
        ],
    ));
    let text = fs::read_to_string(dir.path().join("m.csv")).unwrap();
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let mut seen = Vec::new();
    for rec in rdr.records() {
        let rec = rec.unwrap();
        let value: f64 = rec[5].parse().unwrap();
        assert!((0.0..=1.0).contains(&value), "{rec:?}");
        seen.push(rec[4].to_string());
    }
    for m in ["auc_z", "recall_at_n", "cosine_u", "cosine_v"] {
        assert!(seen.iter().any(|s| s == m), "{m} missing from {seen:?}");
    }
}

#[test]
fn inject_then_evaluate_with_labels() {
    let dir = tempfile::tempdir().unwrap();
    ok(&dynacd(
        dir.path(),
        &[
            "generate",
            "--n",
            "40",
            "--k",
            "2",
            "--t",
            "3",
            "--avg-degree",
            "4",
            "--rho-a",
            "0",
            "--seed",
            "4",
        ],
    ));
    ok(&dynacd(
        dir.path(),
        &[
            "inject", "--input", "net.json", "--rho-a", "0.1", "--seed", "2",
        ],
    ));
    let labels = fs::read_to_string(dir.path().join("injected_pairs.csv")).unwrap();
    assert!(labels.lines().count() > 1);
    ok(&dynacd(dir.path(), &fit_args("injected.json", "fit.json")));
    let out = dynacd(
        dir.path(),
        &[
            "evaluate",
            "--labels",
            "injected_pairs.csv",
            "--fit",
            "fit.json",
        ],
    );
    ok(&out);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("auc_z") && text.contains("recall_at_n"));
    assert!(!text.contains("cosine"));
}

#[test]
fn cv_reports_a_candidate() {
    let dir = generated();
    let out = dynacd(
        dir.path(),
        &[
            "cv",
            "--input",
            "net.json",
            "--k-candidates",
            "1,2",
            "--folds",
            "2",
            "--restarts",
            "1",
            "--max-iter",
            "20",
            "--out",
            "cv.json",
        ],
    );
    ok(&out);
    let report: dynacd::CvReport =
        serde_json::from_slice(&fs::read(dir.path().join("cv.json")).unwrap()).unwrap();
    assert!(report.k_candidates.contains(&report.chosen_k));
    assert_eq!(report.per_fold.len(), 2);
}

#[test]
fn config_file_supplies_flags_and_explicit_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("cfg.json"),
        r#"{"n": 30, "k": 2, "t": 2, "avg_degree": 4, "seed": 8, "out_net": "from_cfg.json"}"#,
    )
    .unwrap();
    ok(&dynacd(
        dir.path(),
        &[
            "--config",
            "cfg.json",
            "generate",
            "--seed",
            "9",
            "--out-truth",
            "t.json",
        ],
    ));
    let net: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("from_cfg.json")).unwrap()).unwrap();
    assert_eq!(net["n_nodes"], 30);
    let truth: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("t.json")).unwrap()).unwrap();
    assert_eq!(truth["seed"], 9);
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let unknown = dynacd(dir.path(), &["fit", "--bogus"]);
    assert_eq!(unknown.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&unknown.stderr).contains("Usage"));

    let both = dynacd(dir.path(), &["generate", "--pi", "0.2", "--mu", "0.01"]);
    assert_eq!(both.status.code(), Some(1));

    let sources = dynacd(
        dir.path(),
        &["score", "--fit", "a.json", "--params", "b.json"],
    );
    assert_eq!(sources.status.code(), Some(1));

    let help = dynacd(dir.path(), &["fit", "--help"]);
    assert_eq!(help.status.code(), Some(0));
}

#[test]
fn data_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dynacd(dir.path(), &["fit", "--input", "nope.json", "--k", "2"]);
    assert_eq!(missing.status.code(), Some(2));
    fs::write(dir.path().join("bad.json"), "{not json").unwrap();
    let bad = dynacd(dir.path(), &["fit", "--input", "bad.json", "--k", "2"]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn edge_list_input_is_binned() {
    let dir = tempfile::tempdir().unwrap();
    let mut csv = String::from("source,target,time\n");
    for t in 0..4 {
        for (a, b) in [("a", "b"), ("b", "c"), ("c", "a"), ("c", "d"), ("d", "a")] {
            csv.push_str(&format!("{a},{b},{}\n", t as f64 * 10.0 + 1.0));
        }
    }
    fs::write(dir.path().join("edges.csv"), csv).unwrap();
    let out = dynacd(
        dir.path(),
        &[
            "fit",
            "--input",
            "edges.csv",
            "--window",
            "10",
            "--k",
            "1",
            "--restarts",
            "1",
            "--max-iter",
            "10",
        ],
    );
    ok(&out);
    let result: dynacd::FitResult = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(result.params.n_nodes, 4);
    assert_eq!(result.params.n_steps, 3);
}
