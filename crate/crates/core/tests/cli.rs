//! End-to-end runs of the command line through `cli::run`.

use std::fs;
use std::path::Path;

use feag::cli::{run, EXIT_OK, EXIT_RUNTIME, EXIT_USAGE};
use feag::corpus::read_jsonl_file;
use feag::models::load_model;

const FAST: &[&str] = &["--epochs", "3", "--seeds", "0", "--cross-fit", "2"];
const FEATURE: &str = "prefix:treated,untreated";

fn feag(dir: &Path, args: &[&str]) -> i32 {
    let mut argv = vec!["feag", "--out-dir", dir.to_str().unwrap()];
    argv.extend_from_slice(args);
    run(argv)
}

fn gen_small(dir: &Path) {
    let code = feag(
        dir,
        &[
            "gen",
            "ss",
            "--n",
            "800",
            "--tau",
            "0.3",
            "--eps",
            "0.1",
            "--plant",
            "guys:0.5:0.05:0",
            "--out",
            "c.jsonl",
        ],
    );
    assert_eq!(code, EXIT_OK);
}

fn with_fast<'a>(args: &[&'a str]) -> Vec<&'a str> {
    let mut v = args.to_vec();
    v.extend_from_slice(FAST);
    v
}

#[test]
fn full_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    gen_small(dir);
    let corpus = read_jsonl_file(dir.join("c.jsonl")).unwrap();
    assert_eq!(corpus.len(), 800);
    assert!(dir.join("gen-ss.toml").exists());

    let corpus_path = dir.join("c.jsonl");
    let c = corpus_path.to_str().unwrap();
    assert_eq!(
        feag(dir, &with_fast(&["estimate", "--corpus", c, "--feature", FEATURE])),
        EXIT_OK
    );
    let estimates = fs::read_to_string(dir.join("estimates.csv")).unwrap();
    assert!(estimates.starts_with("feature_id,method,estimate"));
    assert_eq!(estimates.lines().count(), 4);

    for mode in ["erm", "feag", "reg", "remove-token", "subsample"] {
        let out = format!("{mode}.bin");
        let mut args = with_fast(&[
            "train",
            "--corpus",
            c,
            "--mode",
            mode,
            "--feature",
            FEATURE,
            "--model-out",
            &out,
        ]);
        if mode == "feag" {
            args.extend_from_slice(&["--aug-out", "aug.jsonl"]);
        }
        assert_eq!(feag(dir, &args), EXIT_OK, "train --mode {mode}");
        load_model(dir.join(&out)).unwrap();

        let metrics = format!("{mode}.json");
        let model = dir.join(&out);
        let code = feag(
            dir,
            &[
                "eval",
                "--model",
                model.to_str().unwrap(),
                "--corpus",
                c,
                "--feature",
                FEATURE,
                "--out",
                &metrics,
            ],
        );
        assert_eq!(code, EXIT_OK, "eval {mode}");
        let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join(&metrics)).unwrap()).unwrap();
        let total = report["total"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&total));
        assert!(report["learned_effect"].is_number());
        assert!(dir.join(format!("{mode}.csv")).exists());
    }
    let aug = fs::read_to_string(dir.join("aug.jsonl")).unwrap();
    assert!(aug.lines().count() > 800);

    let code = feag(
        dir,
        &with_fast(&[
            "bias-scan",
            "--corpus",
            c,
            "--tokens",
            "guys,absent",
            "--min-count",
            "10",
        ]),
    );
    assert_eq!(code, EXIT_OK);
    let scan = fs::read_to_string(dir.join("bias_scan.csv")).unwrap();
    assert!(scan.lines().any(|l| l.starts_with("guys,")));
    let json = fs::read_to_string(dir.join("bias_scan.json")).unwrap();
    assert!(json.contains("absent"), "skipped tokens are reported");
}

#[test]
fn generation_replays_byte_identically() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    gen_small(a.path());
    let config = a.path().join("gen-ss.toml");
    assert_eq!(feag(b.path(), &["replay", config.to_str().unwrap()]), EXIT_OK);
    assert_eq!(
        fs::read(a.path().join("c.jsonl")).unwrap(),
        fs::read(b.path().join("c.jsonl")).unwrap()
    );
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    assert_eq!(run(["feag", "--help"]), EXIT_OK);
    assert_eq!(run(["feag", "frobnicate"]), EXIT_USAGE);
    assert_eq!(feag(dir, &["gen", "ss", "--tau", "2.0", "--eps", "0.1"]), EXIT_USAGE);
    assert_eq!(feag(dir, &["gen", "ss", "--n", "100", "--lr", "x"]), EXIT_USAGE);

    let missing = dir.join("missing.jsonl");
    let m = missing.to_str().unwrap();
    assert_eq!(
        feag(dir, &["estimate", "--corpus", m, "--feature", FEATURE]),
        EXIT_RUNTIME
    );

    gen_small(dir);
    let c = dir.join("c.jsonl");
    let c = c.to_str().unwrap();
    assert_eq!(
        feag(dir, &["estimate", "--corpus", c, "--feature", FEATURE, "--lr=-1"]),
        EXIT_USAGE
    );
    assert_eq!(
        feag(dir, &["estimate", "--corpus", c, "--feature", "bogus"]),
        EXIT_USAGE
    );
    assert_eq!(feag(dir, &["replay", m]), EXIT_RUNTIME);
}
