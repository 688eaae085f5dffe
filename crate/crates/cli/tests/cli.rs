use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    fn new() -> Self {
        Self {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn write(&self, name: &str, text: &str) -> PathBuf {
        let p = self.path(name);
        fs::write(&p, text).unwrap();
        p
    }

    fn out(&self) -> PathBuf {
        self.path("out")
    }

    fn run(&self, input: &Path, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_epine"))
            .arg("--input")
            .arg(input)
            .arg("--out")
            .arg(self.out())
            .args(args)
            .env_remove("EPINE_WORKERS")
            .output()
            .unwrap()
    }

    fn ok(&self, input: &Path, args: &[&str]) -> String {
        let o = self.run(input, args);
        assert!(
            o.status.success(),
            "epine {args:?} failed\nstdout: {}\nstderr: {}",
            String::from_utf8_lossy(&o.stdout),
            String::from_utf8_lossy(&o.stderr)
        );
        String::from_utf8(o.stdout).unwrap()
    }

    fn fail(&self, input: &Path, args: &[&str]) -> String {
        let o = self.run(input, args);
        assert!(!o.status.success(), "epine {args:?} unexpectedly succeeded");
        String::from_utf8(o.stderr).unwrap()
    }

    fn manifest(&self, stage: &str) -> Value {
        serde_json::from_slice(&fs::read(self.out().join(format!("{stage}.json"))).unwrap()).unwrap()
    }

    fn cache_entries(&self, stage: &str) -> Vec<PathBuf> {
        match fs::read_dir(self.out().join("cache").join(stage)) {
            Ok(rd) => rd
                .map(|e| e.unwrap().path())
                .filter(|p| !p.file_name().unwrap().to_string_lossy().starts_with('.'))
                .collect(),
            Err(_) => Vec::new(),
        }
    }
}

fn clique_edges(nodes: std::ops::Range<usize>) -> String {
    let mut s = String::new();
    for u in nodes.clone() {
        for v in u + 1..nodes.end {
            s.push_str(&format!("{u} {v}\n"));
        }
    }
    s
}

fn two_cliques(ws: &Workspace) -> PathBuf {
    ws.write("cliques.txt", &(clique_edges(0..6) + &clique_edges(6..12)))
}

fn clique_labels(ws: &Workspace) -> PathBuf {
    let text: String = (0..12).map(|n| format!("{n} {}\n", n / 6)).collect();
    ws.write("labels.txt", &text)
}

#[test]
fn path_reaches_its_diameter() {
    let ws = Workspace::new();
    let g = ws.write("path.txt", "1 2\n2 3\n3 4\n");
    let out = ws.ok(&g, &["proximity", "--set", "k=3"]);
    assert!(out.contains("reached order 3 of 3"), "{out}");
    let m = ws.manifest("proximity");
    assert_eq!(m["reached_order"], 3);
    assert_eq!(m["early_stopped"], false);
    assert_eq!(m["id_base"], 1);
    assert_eq!(m["num_nodes"], 4);
    assert!(m["seconds"].as_f64().unwrap() >= 0.0);
}

#[test]
fn triangle_stops_after_first_order() {
    let ws = Workspace::new();
    let g = ws.write("k3.txt", "0 1\n1 2\n0 2\n");
    let out = ws.ok(&g, &["proximity", "--set", "k=5"]);
    assert!(out.contains("stopped early"), "{out}");
    let m = ws.manifest("proximity");
    assert_eq!(m["reached_order"], 1);
    assert_eq!(m["early_stopped"], true);
}

#[test]
fn missing_input_is_a_stage_error() {
    let ws = Workspace::new();
    let err = ws.fail(&ws.path("nope.txt"), &["proximity"]);
    assert!(err.contains("[proximity]") && err.contains("does not exist"), "{err}");
}

#[test]
fn bad_config_names_the_line() {
    let ws = Workspace::new();
    let g = two_cliques(&ws);
    let conf = ws.write("run.conf", "k = 2\nfrobnicate = 3\n");
    let err = ws.fail(&g, &["--config", conf.to_str().unwrap(), "load"]);
    assert!(err.contains("run.conf:2") && err.contains("frobnicate"), "{err}");
}

#[test]
fn config_file_is_read_and_overridden() {
    let ws = Workspace::new();
    let g = ws.write("path.txt", "0 1\n1 2\n2 3\n3 4\n");
    let conf = ws.write("run.conf", "# orders\nk = 4\nmatmul = mul\n");
    ws.ok(&g, &["--config", conf.to_str().unwrap(), "proximity"]);
    assert_eq!(ws.manifest("proximity")["reached_order"], 4);
    ws.ok(&g, &["--config", conf.to_str().unwrap(), "--set", "k=2", "proximity"]);
    assert_eq!(ws.manifest("proximity")["reached_order"], 2);
}

#[test]
fn first_order_embedding_has_the_configured_header() {
    let ws = Workspace::new();
    let g = two_cliques(&ws);
    ws.ok(&g, &["embed", "--set", "dim=8", "--set", "order=first"]);
    let text = fs::read_to_string(ws.out().join("embedding.txt")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("12 8"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 12);
    assert!(rows.iter().all(|r| r.split_whitespace().count() == 9));
    assert_eq!(ws.manifest("embedding")["dim"], 8);
}

#[test]
fn both_orders_share_the_dimension() {
    let ws = Workspace::new();
    let g = two_cliques(&ws);
    ws.ok(&g, &["embed", "--set", "dim=8", "--set", "order=both"]);
    let text = fs::read_to_string(ws.out().join("embedding.txt")).unwrap();
    assert_eq!(text.lines().next(), Some("12 8"));
}

#[test]
fn corrupt_similarity_is_rejected() {
    let ws = Workspace::new();
    let g = two_cliques(&ws);
    ws.ok(&g, &["similarity"]);
    let entries = ws.cache_entries("similarity");
    assert_eq!(entries.len(), 1);
    let file = entries[0].join("similarity.bin");
    let mut bytes = fs::read(&file).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x40;
    fs::write(&file, bytes).unwrap();
    let err = ws.fail(&g, &["embed", "--set", "dim=8"]);
    assert!(err.contains("[embed]") && err.contains("checksum"), "{err}");
}

#[test]
fn sweeps_reuse_the_proximity_stack() {
    let ws = Workspace::new();
    let g = two_cliques(&ws);
    ws.ok(&g, &["similarity", "--set", "eta=0.001"]);
    let again = ws.ok(&g, &["proximity"]);
    assert!(again.contains("(cached)"), "{again}");
    ws.ok(&g, &["similarity", "--set", "eta=0.01", "--set", "lambda=0.5"]);
    assert_eq!(ws.cache_entries("proximity").len(), 1);
    assert_eq!(ws.cache_entries("similarity").len(), 2);
    ws.ok(&g, &["similarity", "--set", "k=3"]);
    assert_eq!(ws.cache_entries("proximity").len(), 2);
}

#[test]
fn similarity_triplets_use_raw_ids() {
    let ws = Workspace::new();
    let g = ws.write("path.txt", "1 2\n2 3\n");
    let t = ws.path("sim.txt");
    ws.ok(&g, &["similarity", "--triplets", t.to_str().unwrap()]);
    let text = fs::read_to_string(&t).unwrap();
    let pairs: Vec<(u64, u64)> = text
        .lines()
        .map(|l| {
            let f: Vec<&str> = l.split_whitespace().collect();
            (f[0].parse().unwrap(), f[1].parse().unwrap())
        })
        .collect();
    assert_eq!(pairs, vec![(1, 2), (1, 3), (2, 1), (2, 3), (3, 1), (3, 2)]);
}

#[test]
fn reconstruction_on_two_cliques() {
    let ws = Workspace::new();
    let g = two_cliques(&ws);
    let out = ws.ok(
        &g,
        &["evaluate", "--set", "dim=8", "--set", "order=first", "--set", "tasks=reconstruction"],
    );
    assert!(out.contains("reconstruction"), "{out}");
    let text = fs::read_to_string(ws.out().join("metrics.jsonl")).unwrap();
    let records: Vec<Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(records.len(), 1);
    let r = &records[0];
    assert_eq!(r["task"], "reconstruction");
    assert_eq!(r["variant"], "full");
    assert_eq!(r["seed"], 1);
    assert_eq!(r["fingerprint"], ws.manifest("embedding")["fingerprint"]);
    let auc = r["metrics"]["auc"].as_f64().unwrap();
    assert!(auc >= 0.9, "auc {auc}");
}

#[test]
fn classification_needs_labels() {
    let ws = Workspace::new();
    let g = two_cliques(&ws);
    let err = ws.fail(&g, &["evaluate", "--set", "tasks=classification"]);
    assert!(err.contains("[evaluate]") && err.contains("label file"), "{err}");
}

#[test]
fn classification_with_labels() {
    let ws = Workspace::new();
    let g = two_cliques(&ws);
    let labels = clique_labels(&ws);
    let out = ws.ok(
        &g,
        &[
            "evaluate",
            "--labels",
            labels.to_str().unwrap(),
            "--set",
            "tasks=classification",
            "--set",
            "dim=8",
            "--set",
            "order=first",
            "--set",
            "classification_train=0.5",
        ],
    );
    assert!(out.contains("micro_f1") && out.contains("macro_f1"), "{out}");
}

#[test]
fn evaluate_refuses_foreign_embeddings_unless_forced() {
    let ws = Workspace::new();
    let g = two_cliques(&ws);
    ws.ok(&g, &["embed", "--set", "dim=8"]);
    let emb = ws.out().join("embedding.bin");
    let emb = emb.to_str().unwrap();
    let args = ["evaluate", "--embedding", emb, "--set", "dim=8", "--set", "seed=7", "--set", "tasks=reconstruction"];
    let err = ws.fail(&g, &args);
    assert!(err.contains("fingerprint") && err.contains("--force"), "{err}");
    ws.ok(&g, &[&args[..], &["--force"]].concat());
}

#[test]
fn link_prediction_retrains_after_removal() {
    let ws = Workspace::new();
    let g = two_cliques(&ws);
    let out = ws.ok(
        &g,
        &["evaluate", "--set", "dim=8", "--set", "tasks=link_prediction", "--set", "removal=0.3"],
    );
    assert!(out.contains("link_prediction"), "{out}");
    let text = fs::read_to_string(ws.out().join("metrics.jsonl")).unwrap();
    let r: Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert!(r["metrics"]["removed_edges"].as_f64().unwrap() > 0.0);
}

fn ablation_rows(out: &str) -> usize {
    out.lines().take_while(|l| !l.starts_with("metrics ")).count() - 1
}

#[test]
fn ablation_named_rows() {
    let ws = Workspace::new();
    let g = two_cliques(&ws);
    let out = ws.ok(&g, &["ablate", "--set", "dim=4", "--set", "samples=2000"]);
    assert_eq!(ablation_rows(&out), 7, "{out}");
    assert!(out.contains("LINE") && out.contains("+ truncating"), "{out}");
    let text = fs::read_to_string(ws.out().join("ablation.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 7);
}

#[test]
fn ablation_flag_matrix() {
    let ws = Workspace::new();
    let g = two_cliques(&ws);
    let out = ws.ok(&g, &["ablate", "--set", "ablation=matrix", "--set", "dim=4", "--set", "samples=2000"]);
    assert_eq!(ablation_rows(&out), 16, "{out}");
}

#[test]
fn workers_come_from_the_environment_and_flag() {
    let ws = Workspace::new();
    let g = two_cliques(&ws);
    let run = |extra: &[&str], env: Option<&str>| {
        let mut c = Command::new(env!("CARGO_BIN_EXE_epine"));
        c.arg("--input").arg(&g).arg("--out").arg(ws.out()).args(["embed", "--set", "dim=4"]).args(extra);
        match env {
            Some(v) => c.env("EPINE_WORKERS", v),
            None => c.env_remove("EPINE_WORKERS"),
        };
        assert!(c.output().unwrap().status.success());
        ws.manifest("embedding")["train"]["workers"].as_u64().unwrap()
    };
    assert_eq!(run(&[], Some("2")), 2);
    assert_eq!(run(&["--workers", "3"], Some("2")), 3);
    assert_eq!(run(&[], None), 1);
}

#[test]
fn run_all_writes_every_stage() {
    let ws = Workspace::new();
    let g = two_cliques(&ws);
    let labels = clique_labels(&ws);
    let out = ws.ok(
        &g,
        &[
            "run-all",
            "--labels",
            labels.to_str().unwrap(),
            "--set",
            "dim=8",
            "--set",
            "classification_train=0.5",
            "--set",
            "runs=2",
        ],
    );
    for stage in ["graph", "proximity", "similarity", "embedding"] {
        assert!(ws.out().join(format!("{stage}.json")).exists(), "{stage}");
    }
    for task in ["reconstruction", "link_prediction", "classification"] {
        assert!(out.contains(task), "{out}");
    }
}
