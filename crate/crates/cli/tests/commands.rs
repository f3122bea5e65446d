use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use semeq_cli::report::format_sig9;
use semeq_cli::seeds;
use semeq_cli::store::{load_agent, load_anchors, load_dataset, load_support};
use semeq_core::agents::{gen_gaussian_mixture, Agent, AgentSpec, EncoderKind};
use semeq_core::anchors::encode_support;
use semeq_core::eval::{evaluate_pair, Equalizer, InverseMethod};
use semeq_core::inverse::InverseConfig;
use semeq_core::relative::Similarity;
use tempfile::TempDir;

fn semeq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_semeq"))
        .args(args)
        .env_remove("SEMEQ_THREADS")
        .output()
        .expect("run semeq")
}

fn ok(args: &[&str]) -> String {
    let out = semeq(args);
    assert!(
        out.status.success(),
        "semeq {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn files(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push((path.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

/// Small dataset with a split, plus trained `tx` and `rx` MLP agents.
struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new(classes: &str, per_class: &str, test_per_class: &str) -> Self {
        let dir = TempDir::new().unwrap();
        let f = Fixture { dir };
        ok(&[
            "--seed",
            "7",
            "gen-data",
            "--classes",
            classes,
            "--dim",
            "16",
            "--per-class",
            per_class,
            "--test-per-class",
            test_per_class,
            "--out",
            p(&f.path("data")),
        ]);
        for id in ["tx", "rx"] {
            ok(&[
                "--seed",
                "7",
                "train-agent",
                "--data",
                p(&f.path("data")),
                "--id",
                id,
                "--kind",
                "mlp",
                "--out",
                p(&f.path(id)),
            ]);
        }
        f
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }
}

#[test]
fn gen_data_round_trips_bit_exactly() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("d");
    ok(&[
        "--seed",
        "7",
        "gen-data",
        "--classes",
        "10",
        "--dim",
        "16",
        "--per-class",
        "200",
        "--out",
        p(&out),
    ]);
    let expected = gen_gaussian_mixture(10, 16, 200, 8.0, seeds::data(7)).unwrap();
    let loaded = load_dataset(&out).unwrap();
    assert_eq!(loaded, expected);
    for (a, b) in loaded.samples.as_slice().iter().zip(expected.samples.as_slice()) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
}

#[test]
fn gen_data_split_matches_library_split() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("d");
    ok(&[
        "--seed",
        "3",
        "gen-data",
        "--classes",
        "4",
        "--dim",
        "5",
        "--per-class",
        "20",
        "--test-per-class",
        "6",
        "--out",
        p(&out),
    ]);
    let (train, test) = gen_gaussian_mixture(4, 5, 26, 8.0, seeds::data(3))
        .unwrap()
        .split_per_class(6)
        .unwrap();
    assert_eq!(load_dataset(&out).unwrap(), train);
    assert_eq!(load_dataset(&out.join("test")).unwrap(), test);
}

#[test]
fn gen_data_rerun_is_byte_identical() {
    let dir = TempDir::new().unwrap();
    let args = |out: &Path| {
        ok(&[
            "--seed",
            "11",
            "gen-data",
            "--classes",
            "3",
            "--dim",
            "4",
            "--per-class",
            "9",
            "--out",
            p(out),
        ]);
    };
    args(&dir.path().join("a"));
    args(&dir.path().join("b"));
    assert_eq!(files(&dir.path().join("a")), files(&dir.path().join("b")));
}

#[test]
fn zero_classes_fails_with_usage() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("d");
    let r = semeq(&[
        "gen-data",
        "--classes",
        "0",
        "--dim",
        "4",
        "--per-class",
        "5",
        "--out",
        p(&out),
    ]);
    assert!(!r.status.success());
    assert!(String::from_utf8_lossy(&r.stderr).contains("Usage:"));
    assert!(!out.exists());
}

#[test]
fn train_agent_round_trips_and_is_deterministic() {
    let f = Fixture::new("3", "30", "0");
    let data = load_dataset(&f.path("data")).unwrap();
    let spec = AgentSpec::new("tx", EncoderKind::Mlp, 16, seeds::agent(7, "tx"));
    assert_eq!(load_agent(&f.path("tx")).unwrap(), Agent::train(&spec, &data).unwrap());
    ok(&[
        "--seed",
        "7",
        "train-agent",
        "--data",
        p(&f.path("data")),
        "--id",
        "tx",
        "--kind",
        "mlp",
        "--out",
        p(&f.path("tx2")),
    ]);
    assert_eq!(files(&f.path("tx")), files(&f.path("tx2")));
}

#[test]
fn train_agent_reports_missing_dataset() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("agent");
    let r = semeq(&[
        "train-agent",
        "--data",
        p(&dir.path().join("nope")),
        "--id",
        "a",
        "--kind",
        "affine",
        "--out",
        p(&out),
    ]);
    assert!(!r.status.success());
    assert!(String::from_utf8_lossy(&r.stderr).contains("cannot read"));
    assert!(!out.exists());
}

#[test]
fn single_proto_anchor_over_whole_dataset_is_the_mean_latent() {
    let f = Fixture::new("2", "3", "0");
    let r = semeq(&[
        "anchors",
        "--agent",
        p(&f.path("tx")),
        "--data",
        p(&f.path("data")),
        "--method",
        "proto",
        "--count",
        "1",
        "--support-size",
        "10",
        "--out",
        p(&f.path("a")),
    ]);
    assert!(r.status.success());
    assert!(String::from_utf8_lossy(&r.stderr).contains("warning"));
    let agent = load_agent(&f.path("tx")).unwrap();
    let z = agent
        .encoder
        .encode_batch(&load_dataset(&f.path("data")).unwrap().samples)
        .unwrap();
    let anchor = load_anchors(&f.path("a")).unwrap().anchors;
    for j in 0..z.cols() {
        let mean = z.row_iter().map(|r| r[j]).sum::<f64>() / z.rows() as f64;
        assert!((anchor.anchor(0)[j] - mean).abs() < 1e-12);
    }
}

#[test]
fn anchors_are_deterministic_and_shared_supports_reencode() {
    let f = Fixture::new("3", "20", "0");
    for out in ["a", "b"] {
        ok(&[
            "--seed",
            "5",
            "anchors",
            "--agent",
            p(&f.path("tx")),
            "--data",
            p(&f.path("data")),
            "--method",
            "random",
            "--count",
            "8",
            "--out",
            p(&f.path(out)),
        ]);
    }
    assert_eq!(files(&f.path("a")), files(&f.path("b")));
    ok(&[
        "anchors",
        "--agent",
        p(&f.path("rx")),
        "--support",
        p(&f.path("a")),
        "--out",
        p(&f.path("rx_a")),
    ]);
    let support = load_support(&f.path("a")).unwrap();
    let expected = encode_support(&load_agent(&f.path("rx")).unwrap().encoder, &support).unwrap();
    assert_eq!(load_anchors(&f.path("rx_a")).unwrap().anchors, expected);
}

#[test]
fn proto_groups_are_class_pure_on_standard_config() {
    let f = Fixture::new("10", "200", "100");
    ok(&[
        "anchors",
        "--agent",
        p(&f.path("tx")),
        "--data",
        p(&f.path("data")),
        "--method",
        "proto",
        "--count",
        "10",
        "--out",
        p(&f.path("a")),
    ]);
    let data = load_dataset(&f.path("data")).unwrap();
    let support = load_support(&f.path("a")).unwrap();
    let pure = support
        .sample_indices
        .iter()
        .filter(|g| g.iter().all(|&i| data.labels[i] == data.labels[g[0]]))
        .count();
    assert!(pure >= 8, "{pure} pure groups");
}

#[test]
fn anchor_count_beyond_dataset_is_rejected() {
    let f = Fixture::new("2", "4", "0");
    let out = f.path("a");
    let r = semeq(&[
        "anchors",
        "--agent",
        p(&f.path("tx")),
        "--data",
        p(&f.path("data")),
        "--method",
        "random",
        "--count",
        "9",
        "--out",
        p(&out),
    ]);
    assert!(!r.status.success());
    assert!(!out.exists());
}

fn stored_anchor_fixture() -> Fixture {
    let f = Fixture::new("4", "40", "10");
    ok(&[
        "--seed",
        "2",
        "anchors",
        "--agent",
        p(&f.path("tx")),
        "--data",
        p(&f.path("data")),
        "--count",
        "12",
        "--out",
        p(&f.path("atx")),
    ]);
    ok(&[
        "anchors",
        "--agent",
        p(&f.path("rx")),
        "--support",
        p(&f.path("atx")),
        "--out",
        p(&f.path("arx")),
    ]);
    f
}

fn evaluate_args<'a>(f: &'a Fixture, out: &'a Path, extra: &[&'a str]) -> Vec<String> {
    let mut v: Vec<String> = [
        "--seed",
        "3",
        "evaluate",
        "--tx",
        p(&f.path("tx")),
        "--rx",
        p(&f.path("rx")),
        "--test",
        p(&f.path("data/test")),
        "--out",
        p(out),
        "--max-iter",
        "300",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    v.extend(extra.iter().map(|s| s.to_string()));
    v
}

fn run_strings(args: &[String]) -> Output {
    semeq(&args.iter().map(String::as_str).collect::<Vec<_>>())
}

#[test]
fn evaluate_row_matches_library_and_reruns_identically() {
    let f = stored_anchor_fixture();
    let (atx, arx) = (f.path("atx"), f.path("arx"));
    let anchors = [
        "--tx-anchors",
        p(&atx),
        "--rx-anchors",
        p(&arx),
        "--similarity",
        "cosine",
    ];
    for out in ["r1.csv", "r2.csv"] {
        assert!(run_strings(&evaluate_args(&f, &f.path(out), &anchors)).status.success());
    }
    let text = fs::read_to_string(f.path("r1.csv")).unwrap();
    assert_eq!(text, fs::read_to_string(f.path("r2.csv")).unwrap());

    let tx = load_agent(&f.path("tx")).unwrap();
    let rx = load_agent(&f.path("rx")).unwrap();
    let eq = Equalizer::new(
        load_anchors(&f.path("atx")).unwrap().anchors,
        load_anchors(&f.path("arx")).unwrap().anchors,
        Similarity::Cosine,
        InverseMethod::Gradient,
        InverseConfig {
            max_iterations: 300,
            init_seed: seeds::inverse(3),
            ..InverseConfig::default()
        },
    )
    .unwrap();
    let r = evaluate_pair(&tx, &rx, &eq, &load_dataset(&f.path("data/test")).unwrap()).unwrap();
    let expected = format!(
        "tx_id,rx_id,similarity,inverse_method,anchor_method,anchor_count,seed,matched_acc,cross_acc_uneq,cross_acc_eq,agreement,mean_gse\n\
         tx,rx,cosine,gradient,proto,12,3,{},{},{},{},{}\n",
        format_sig9(r.matched_accuracy),
        format_sig9(r.cross_accuracy_unequalized.unwrap()),
        format_sig9(r.cross_accuracy_equalized),
        format_sig9(r.decoder_agreement),
        format_sig9(r.mean_reconstruction_error),
    );
    assert_eq!(text, expected);
}

#[test]
fn evaluate_rejects_anchors_from_another_agent() {
    let f = stored_anchor_fixture();
    let out = f.path("bad.csv");
    let (atx, arx) = (f.path("atx"), f.path("arx"));
    let swapped = ["--tx-anchors", p(&arx), "--rx-anchors", p(&atx)];
    let r = run_strings(&evaluate_args(&f, &out, &swapped));
    assert!(!r.status.success());
    assert!(String::from_utf8_lossy(&r.stderr).contains("were not encoded by"));
    assert!(!out.exists());
    assert!(fs::read_dir(f.dir.path())
        .unwrap()
        .all(|e| !e.unwrap().file_name().to_string_lossy().contains(".tmp")));
}

#[test]
fn closed_form_with_euclidean_is_rejected() {
    let f = stored_anchor_fixture();
    let out = f.path("bad.csv");
    let (atx, arx) = (f.path("atx"), f.path("arx"));
    let args = [
        "--tx-anchors",
        p(&atx),
        "--rx-anchors",
        p(&arx),
        "--similarity",
        "euclidean",
        "--inverse",
        "closed_form",
    ];
    assert!(!run_strings(&evaluate_args(&f, &out, &args)).status.success());
    assert!(!out.exists());
}

#[test]
fn single_cell_sweep_equals_evaluate() {
    let f = Fixture::new("4", "40", "10");
    let data = p(&f.path("data")).to_string();
    let eval = evaluate_args(
        &f,
        &f.path("eval.csv"),
        &["--data", &data, "--count", "8", "--method", "random"],
    );
    assert!(run_strings(&eval).status.success());
    ok(&[
        "sweep",
        "--tx",
        p(&f.path("tx")),
        "--rx",
        p(&f.path("rx")),
        "--data",
        &data,
        "--test",
        p(&f.path("data/test")),
        "--counts",
        "8",
        "--methods",
        "random",
        "--seeds",
        "3",
        "--max-iter",
        "300",
        "--out",
        p(&f.path("sweep")),
    ]);
    assert_eq!(
        fs::read(f.path("eval.csv")).unwrap(),
        fs::read(f.path("sweep/sweep.csv")).unwrap()
    );
}

#[test]
fn sweep_writes_one_row_per_cell_in_tuple_order() {
    let f = Fixture::new("4", "40", "10");
    let sweep = |out: &str, threads: Option<&str>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_semeq"));
        cmd.args([
            "--seed",
            "9",
            "sweep",
            "--tx",
            p(&f.path("tx")),
            "--rx",
            p(&f.path("rx")),
            "--data",
            p(&f.path("data")),
            "--test",
            p(&f.path("data/test")),
            "--counts",
            "20,16",
            "--methods",
            "proto,random",
            "--similarities",
            "euclidean,cosine",
            "--inverse",
            "gradient,closed_form",
            "--repeats",
            "2",
            "--max-iter",
            "200",
            "--out",
            p(&f.path(out)),
        ]);
        match threads {
            Some(t) => cmd.env("SEMEQ_THREADS", t),
            None => cmd.env_remove("SEMEQ_THREADS"),
        };
        assert!(cmd.output().unwrap().status.success());
    };
    sweep("s1", None);
    sweep("s2", Some("1"));
    let csv = fs::read_to_string(f.path("s1/sweep.csv")).unwrap();
    assert_eq!(csv, fs::read_to_string(f.path("s2/sweep.csv")).unwrap());
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    // cosine × {gradient, closed_form} + euclidean × gradient, 2 methods, 2 counts, 2 seeds.
    assert_eq!(rows.len(), 3 * 2 * 2 * 2);
    assert!(rows[0].starts_with("tx,rx,cosine,gradient,random,16,"));
    assert!(rows.last().unwrap().starts_with("tx,rx,euclidean,gradient,proto,20,"));
    let scatter = fs::read_to_string(f.path("s1/scatter.csv")).unwrap();
    assert_eq!(scatter.lines().count(), 1 + rows.len() * 40);
    assert!(!csv.contains('\r'));
}

#[test]
fn sweep_rejects_invalid_grids_and_bad_thread_cap() {
    let f = Fixture::new("2", "10", "5");
    let [tx, rx, data, test, out] = ["tx", "rx", "data", "data/test", "s"].map(|r| f.path(r));
    let base = [
        "sweep",
        "--tx",
        p(&tx),
        "--rx",
        p(&rx),
        "--data",
        p(&data),
        "--test",
        p(&test),
        "--counts",
        "4",
        "--out",
        p(&out),
    ];
    let mut args = base.to_vec();
    args.extend(["--similarities", "euclidean", "--inverse", "closed_form"]);
    assert!(!semeq(&args).status.success());
    let mut too_few = base.to_vec();
    too_few.extend(["--similarities", "cosine", "--inverse", "closed_form"]);
    let r = semeq(&too_few);
    assert!(!r.status.success());
    assert!(String::from_utf8_lossy(&r.stderr).contains("closed-form inverse needs at least 16 anchors"));
    let r = Command::new(env!("CARGO_BIN_EXE_semeq"))
        .args(base)
        .env("SEMEQ_THREADS", "zero")
        .output()
        .unwrap();
    assert!(!r.status.success());
    assert!(String::from_utf8_lossy(&r.stderr).contains("SEMEQ_THREADS"));
    assert!(!f.path("s").exists());
}

#[test]
fn sweep_from_config_file() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        r#"
seed = 4
[dataset]
classes = 3
dim = 6
per_class = 30
test_per_class = 10
separation = 8.0
[transmitter]
id = "alice"
kind = "affine"
[receiver]
id = "bob"
kind = "orthogonal"
epochs = 100
[anchors]
methods = ["proto"]
counts = [6, 12]
[equalizer]
similarities = ["cosine"]
inverse_methods = ["closed_form"]
[sweep]
repeats = 2
"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    ok(&["sweep", "--config", p(&cfg), "--out", p(&out)]);
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 4);
    assert!(csv
        .lines()
        .nth(1)
        .unwrap()
        .starts_with("alice,bob,cosine,closed_form,proto,6,"));
}
