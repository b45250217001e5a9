use std::path::Path;
use std::process::{Command, Output};

fn hctc(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hctc"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("run hctc")
}

fn ok(args: &[&str], cwd: &Path) -> String {
    let out = hctc(args, cwd);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap()
}

#[test]
fn bpe_learn_apply_invert() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("corpus.txt"),
        "cold cold old code\nbold cod doc\nclod old cold\n",
    )
    .unwrap();
    let summary = ok(
        &[
            "bpe",
            "learn",
            "--corpus",
            "corpus.txt",
            "--ops",
            "4",
            "--out",
            "merges.txt",
            "--inventory",
            "inv.txt",
        ],
        d,
    );
    assert!(summary.starts_with("merges="));
    let merges = read(d, "merges.txt");
    assert!(merges.lines().filter(|l| !l.starts_with('#')).count() <= 4);
    let inventory = read(d, "inv.txt");
    assert!(inventory.starts_with("<blank>\n"));
    assert!(inventory.lines().any(|u| u == "c@"));

    std::fs::write(d.join("text.txt"), "cold code\n").unwrap();
    ok(
        &[
            "bpe",
            "apply",
            "--merges",
            "merges.txt",
            "--input",
            "text.txt",
            "--out",
            "units.txt",
        ],
        d,
    );
    let units = read(d, "units.txt");
    assert!(units.contains('@'), "{units}");
    assert_ne!(units.trim(), "cold code");
    ok(
        &["bpe", "invert", "--input", "units.txt", "--out", "back.txt"],
        d,
    );
    assert_eq!(read(d, "back.txt"), "cold code\n");

    // zero merges leaves only marked characters
    std::fs::write(d.join("none.txt"), "").unwrap();
    let applied = ok(
        &[
            "bpe", "apply", "--merges", "none.txt", "--input", "text.txt",
        ],
        d,
    );
    assert_eq!(applied, "c@ o@ l@ d c@ o@ d@ e\n");
}

#[test]
fn features_convert_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("u1.txt"), "0.5 1 -2\n# comment\n3 4.25 5\n").unwrap();
    ok(
        &[
            "features", "convert", "--input", "u1.txt", "--out", "u1.feat",
        ],
        d,
    );
    assert_eq!(
        std::fs::metadata(d.join("u1.feat")).unwrap().len(),
        16 + 6 * 4
    );
    ok(
        &[
            "features", "convert", "--input", "u1.feat", "--out", "back.txt", "--to", "text",
        ],
        d,
    );
    assert_eq!(read(d, "back.txt"), "0.5 1 -2\n3 4.25 5\n");
}

const TRAIN_FLAGS: &[&str] = &[
    "--heads",
    "char,s10,s30",
    "--shared-layers",
    "1",
    "--hidden",
    "6",
    "--projection",
    "0",
    "--head-hidden",
    "4",
    "--epochs",
    "2",
    "--batch-size",
    "4",
    "--lr",
    "0.05",
    "--subsample",
    "1",
    "--no-augment",
];

fn train_into(d: &Path, out: &str, extra: &[&str]) -> Vec<u8> {
    let mut args = vec![
        "train",
        "--features",
        "data/feats",
        "--transcripts",
        "data/train.txt",
        "--out",
        out,
    ];
    args.extend_from_slice(TRAIN_FLAGS);
    args.extend_from_slice(extra);
    let log = ok(&args, d);
    assert!(log.contains("epoch=2 loss="), "{log}");
    std::fs::read(d.join(out).join("model.hctc")).unwrap()
}

#[test]
fn synthetic_pipeline_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(
        &[
            "synth", "generate", "--out", "data", "--train", "16", "--test", "6", "--seed", "3",
        ],
        d,
    );
    assert_eq!(read(d, "data/train.txt").lines().count(), 16);
    assert_eq!(read(d, "data/test.txt").lines().count(), 6);

    let first = train_into(d, "m1", &[]);
    let again = train_into(d, "m2", &[]);
    let threaded = train_into(d, "m3", &["--jobs", "3"]);
    assert_eq!(first, again);
    assert_eq!(first, threaded);

    let manifest: serde_json::Value =
        serde_json::from_str(&read(d, "m1/model.hctc.manifest.json")).unwrap();
    assert_eq!(manifest["tool"], "hctc");
    assert_eq!(manifest["config"]["model"]["heads"][2], "s30");
    assert_eq!(manifest["config"]["training"]["jobs"], 1);
    assert_eq!(manifest["seeds"]["training"], 0);
    assert_eq!(manifest["inputs"].as_object().unwrap().len(), 2);
    assert_eq!(manifest["command"][0], "train");

    let inspect = ok(&["inspect", "checkpoint", "m1/model.hctc"], d);
    assert!(inspect.contains("kind=Hmtl"));
    assert!(inspect.contains("head=s30 tap=2"));

    ok(
        &[
            "lm",
            "train",
            "--checkpoint",
            "m1/model.hctc",
            "--transcripts",
            "data/train.txt",
            "--out",
            "lm.hclm",
        ],
        d,
    );
    let test = [
        "--checkpoint",
        "m1/model.hctc",
        "--features",
        "data/feats",
        "--transcripts",
        "data/test.txt",
    ];
    let greedy = [&["decode"][..], &test, &["--out", "greedy.txt"]].concat();
    ok(&greedy, d);
    let fusion = [
        &["decode"][..],
        &test,
        &[
            "--out",
            "fused.txt",
            "--mode",
            "fusion",
            "--lm",
            "lm.hclm",
            "--beam",
            "8",
        ],
    ]
    .concat();
    ok(&fusion, d);
    let fused = read(d, "fused.txt");
    ok(&fusion, d);
    assert_eq!(read(d, "fused.txt"), fused);
    assert_eq!(fused.lines().count(), 6);
    assert!(d.join("fused.txt.manifest.json").exists());

    for hyp in ["greedy.txt", "fused.txt"] {
        let report = ok(
            &[
                "score",
                "--reference",
                "data/test.txt",
                "--hypothesis",
                hyp,
                "--out",
                "score.txt",
            ],
            d,
        );
        let keys: Vec<&str> = report
            .lines()
            .map(|l| l.split('=').next().unwrap())
            .collect();
        assert_eq!(keys, ["wer", "sub", "ins", "del", "ref", "err"]);
        assert_eq!(read(d, "score.txt"), report);
    }

    // LM for a different head does not fit the coarsest head's inventory
    ok(
        &[
            "lm",
            "train",
            "--checkpoint",
            "m1/model.hctc",
            "--head",
            "char",
            "--transcripts",
            "data/train.txt",
            "--out",
            "char.hclm",
        ],
        d,
    );
    let wrong = [
        &["decode"][..],
        &test,
        &["--out", "x.txt", "--mode", "fusion", "--lm", "char.hclm"],
    ]
    .concat();
    let out = hctc(&wrong, d);
    assert_eq!(out.status.code(), Some(2));
    assert!(
        String::from_utf8_lossy(&out.stderr).starts_with("error kind=inventory-mismatch reason=")
    );
}

#[test]
fn exit_codes_and_error_lines() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let usage = hctc(&["decode", "--beam", "x"], d);
    assert_eq!(usage.status.code(), Some(1));
    let line = String::from_utf8(usage.stderr).unwrap();
    assert!(line.starts_with("error kind=usage reason="), "{line}");
    assert_eq!(line.lines().count(), 1);

    let unknown = hctc(&["frobnicate"], d);
    assert_eq!(unknown.status.code(), Some(1));

    let missing = hctc(&["inspect", "checkpoint", "nope.hctc"], d);
    assert_eq!(missing.status.code(), Some(2));
    let line = String::from_utf8(missing.stderr).unwrap();
    assert!(line.starts_with("error kind=io reason="), "{line}");
    assert_eq!(line.lines().count(), 1);

    std::fs::write(d.join("bad.hctc"), b"HCTX").unwrap();
    let corrupt = hctc(&["inspect", "checkpoint", "bad.hctc"], d);
    assert_eq!(corrupt.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&corrupt.stderr).starts_with("error kind=parse"));

    std::fs::write(d.join("r.txt"), "u1\ta b\n").unwrap();
    std::fs::write(d.join("h.txt"), "u2\ta b\n").unwrap();
    let misaligned = hctc(
        &["score", "--reference", "r.txt", "--hypothesis", "h.txt"],
        d,
    );
    assert_eq!(misaligned.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&misaligned.stderr).starts_with("error kind=alignment"));
}

#[test]
fn help_documents_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let help = ok(&["decode", "--help"], dir.path());
    for needle in [
        "[default: 40]",
        "[default: 1.5]",
        "[default: per-emission]",
        "[default: greedy]",
    ] {
        assert!(help.contains(needle), "missing {needle}");
    }
    let help = ok(&["train", "--help"], dir.path());
    for needle in [
        "[default: hmtl]",
        "[default: 320]",
        "[default: 340]",
        "[default: 3]",
        "[default: 1]",
    ] {
        assert!(help.contains(needle), "missing {needle}");
    }
    let top = ok(&["--help"], dir.path());
    for sub in [
        "bpe", "features", "synth", "train", "lm", "decode", "score", "inspect",
    ] {
        assert!(top.contains(sub));
    }
}
