use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_raresub");

/// Small enough to run in seconds, with a planted group strong enough to be
/// found every time.
const CONFIG: &str = r#"{
  "top_n": 150,
  "k_min": 2,
  "k_max": 5,
  "scan_n_init": 4,
  "final_n_init": 6,
  "autoencoder": { "latent_dim": 8, "max_epochs": 25, "patience": 5 },
  "stability": { "runs": 6, "n_init": 2 },
  "synth": {
    "n_samples": 80,
    "n_genes": 200,
    "n_background_clusters": 2,
    "rare_fraction": 0.075,
    "n_marker_genes": 20,
    "effect_size": 3.0,
    "seed": 5
  }
}"#;

fn raresub(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env("RUST_LOG", "warn")
        .env_remove("RARESUB_OUT")
        .output()
        .expect("binary runs")
}

fn run_dir(out: &Output) -> PathBuf {
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    PathBuf::from(String::from_utf8(out.stdout.clone()).unwrap().trim())
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn csv_files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for sub in ["", "figures"] {
        for entry in std::fs::read_dir(dir.join(sub)).unwrap() {
            let path = entry.unwrap().path();
            if path.extension().is_some_and(|e| e == "csv") {
                let name = path
                    .strip_prefix(dir)
                    .unwrap()
                    .to_string_lossy()
                    .into_owned();
                out.insert(name, std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

struct Fixture {
    root: tempfile::TempDir,
    config: PathBuf,
    data: PathBuf,
    labels: PathBuf,
}

fn fixture() -> Fixture {
    let root = tempfile::tempdir().unwrap();
    let config = root.path().join("config.json");
    std::fs::write(&config, CONFIG).unwrap();
    let out = root.path().join("runs");
    let synth = run_dir(&raresub(&[
        "--config",
        s(&config),
        "--out",
        s(&out),
        "synth",
    ]));
    Fixture {
        data: synth.join("data.csv"),
        labels: synth.join("labels.csv"),
        root,
        config,
    }
}

impl Fixture {
    fn out(&self) -> PathBuf {
        self.root.path().join("runs")
    }

    fn within(&self, config: &Path) -> PathBuf {
        run_dir(&raresub(&[
            "--config",
            s(config),
            "--data",
            s(&self.data),
            "--labels",
            s(&self.labels),
            "--out",
            s(&self.out()),
            "within",
            "--class",
            "SYN",
        ]))
    }
}

#[test]
fn synth_then_within_finds_the_planted_group() {
    let fx = fixture();
    let truth = json(&fx.data.with_file_name("ground_truth.json"));
    let dir = fx.within(&fx.config);
    for name in [
        "config.json",
        "manifest.json",
        "summary.json",
        "discovery.json",
        "kscan.csv",
        "stability.csv",
        "training.csv",
        "clusters.csv",
        "latent.csv",
        "markers.json",
    ] {
        assert!(dir.join(name).is_file(), "missing {name}");
    }
    for name in [
        "silhouette",
        "dbi",
        "cluster_sizes",
        "stability_bars",
        "volcano",
        "heatmap",
        "latent_pca",
    ] {
        assert!(
            dir.join(format!("figures/{name}.csv")).is_file(),
            "missing {name}.csv"
        );
        let svg = std::fs::read_to_string(dir.join(format!("figures/{name}.svg"))).unwrap();
        assert!(
            svg.starts_with("<svg") || svg.starts_with("<?xml"),
            "{name}.svg"
        );
    }

    let discovery = json(&dir.join("discovery.json"));
    assert!(!discovery["hits"].as_array().unwrap().is_empty());
    let mut found: Vec<&str> = discovery["chosen"]["member_ids"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap())
        .collect();
    let mut planted: Vec<&str> = truth["member_ids"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap())
        .collect();
    found.sort_unstable();
    planted.sort_unstable();
    assert_eq!(found, planted);

    let manifest = json(&dir.join("manifest.json"));
    assert_eq!(manifest["command"], "within");
    assert_eq!(manifest["inputs"].as_array().unwrap().len(), 2);
    let outputs: Vec<&str> = manifest["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| f["path"].as_str().unwrap())
        .collect();
    assert!(outputs.contains(&"summary.json") && outputs.contains(&"figures/volcano.svg"));
    assert!(!outputs.contains(&"manifest.json"));
}

#[test]
fn rerun_from_saved_config_is_byte_identical() {
    let fx = fixture();
    let first = fx.within(&fx.config);
    // the saved config carries the resolved paths and seeds
    let second = run_dir(&raresub(&[
        "--config",
        s(&first.join("config.json")),
        "within",
    ]));
    assert_ne!(first, second);
    let a = csv_files(&first);
    assert!(a.len() > 10);
    assert_eq!(a, csv_files(&second));
    for name in ["summary.json", "discovery.json", "markers.json"] {
        assert_eq!(
            std::fs::read(first.join(name)).unwrap(),
            std::fs::read(second.join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn de_on_exported_clusters_matches_the_within_run() {
    let fx = fixture();
    let within = fx.within(&fx.config);
    let cluster = json(&within.join("summary.json"))["final_cluster"]
        .as_u64()
        .unwrap()
        .to_string();
    let de = run_dir(&raresub(&[
        "--config",
        s(&fx.config),
        "--data",
        s(&fx.data),
        "--labels",
        s(&fx.labels),
        "--out",
        s(&fx.out()),
        "de",
        "--class",
        "SYN",
        "--cluster",
        &cluster,
        "--assignments",
        s(&within.join("clusters.csv")),
    ]));
    let name = format!("de_c{cluster}.csv");
    assert_eq!(
        std::fs::read(within.join(&name)).unwrap(),
        std::fs::read(de.join(&name)).unwrap()
    );
    let manifest = json(&de.join("manifest.json"));
    assert_eq!(manifest["inputs"].as_array().unwrap().len(), 3);
}

#[test]
fn report_rerenders_figures_from_csv() {
    let fx = fixture();
    let within = fx.within(&fx.config);
    let report = run_dir(&raresub(&[
        "--out",
        s(&fx.out()),
        "report",
        "--from",
        s(&within),
    ]));
    for name in ["silhouette", "volcano", "heatmap"] {
        let csv = format!("figures/{name}.csv");
        assert_eq!(
            std::fs::read(within.join(&csv)).unwrap(),
            std::fs::read(report.join(&csv)).unwrap()
        );
        assert_eq!(
            std::fs::read(within.join(format!("figures/{name}.svg"))).unwrap(),
            std::fs::read(report.join(format!("figures/{name}.svg"))).unwrap()
        );
    }
}

#[test]
fn stage_commands_write_their_tables() {
    let fx = fixture();
    let base = [
        "--config",
        s(&fx.config),
        "--data",
        s(&fx.data),
        "--labels",
        s(&fx.labels),
        "--out",
    ];
    let out = fx.out();
    let mut args: Vec<&str> = base.to_vec();
    args.extend([s(&out), "scan-k", "--class", "SYN"]);
    let scan = run_dir(&raresub(&args));
    let kscan = std::fs::read_to_string(scan.join("kscan.csv")).unwrap();
    assert_eq!(kscan.lines().count(), 1 + 4);

    args.truncate(base.len() + 1);
    args.extend(["stability", "--class", "SYN"]);
    let stab = run_dir(&raresub(&args));
    assert!(json(&stab.join("discovery.json"))["chosen"].is_object());

    args.truncate(base.len() + 1);
    args.extend(["ingest", "--class", "SYN"]);
    let ingest = run_dir(&raresub(&args));
    assert_eq!(json(&ingest.join("cohort.json"))["n_samples"], 80);
}

#[test]
fn exit_codes_follow_error_kind() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("runs");

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"no_such_field": 1}"#).unwrap();
    assert_eq!(
        raresub(&["--config", s(&bad), "--out", s(&out), "synth"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        raresub(&["--out", s(&out), "--k-min", "5", "--k-max", "3", "synth"])
            .status
            .code(),
        Some(2)
    );

    let data = dir.path().join("data.csv");
    let labels = dir.path().join("labels.csv");
    std::fs::write(&data, "sample_id,g0,g1\ns0,1,oops\n").unwrap();
    std::fs::write(&labels, "sample_id,class\ns0,A\n").unwrap();
    let r = raresub(&[
        "--data",
        s(&data),
        "--labels",
        s(&labels),
        "--out",
        s(&out),
        "within",
        "--class",
        "A",
    ]);
    assert_eq!(r.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&r.stderr).contains("oops"));

    let missing = dir.path().join("nope.csv");
    let r = raresub(&[
        "--data",
        s(&missing),
        "--labels",
        s(&labels),
        "--out",
        s(&out),
        "ingest",
    ]);
    assert_eq!(r.status.code(), Some(3));

    let r = raresub(&[
        "--out",
        s(&out),
        "report",
        "--from",
        s(&dir.path().join("nowhere")),
    ]);
    assert_eq!(r.status.code(), Some(3));

    std::fs::write(&data, "sample_id,g0,g1\ns0,1,2\n").unwrap();
    let r = raresub(&[
        "--data",
        s(&data),
        "--labels",
        s(&labels),
        "--out",
        s(&out),
        "within",
    ]);
    assert_eq!(r.status.code(), Some(2), "within without a class");
}
