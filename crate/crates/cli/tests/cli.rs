use std::collections::BTreeSet;
use std::path::Path;

use soma_forge::synthset::{read_manifest, Split};
use soma_forge_cli::run;

fn cli(args: &[&str]) -> i32 {
    run(std::iter::once("soma-forge").chain(args.iter().copied()))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn small_set(dir: &Path, seed: &str) {
    let code = cli(&[
        "genset",
        "--subjects",
        "3",
        "--clothing",
        "1",
        "--poses",
        "8",
        "--seed",
        seed,
        "--threads",
        "1",
        "--out",
        s(dir),
    ]);
    assert_eq!(code, 0);
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("x");
    assert_eq!(cli(&["--bogus"]), 1);
    assert_eq!(cli(&["--help"]), 0);
    assert_eq!(cli(&["genset", "--threads", "0", "--out", s(&out)]), 1);
    let missing = tmp.path().join("missing");
    assert_eq!(cli(&["train", "--data", s(&missing), "--out", s(&out)]), 2);
    let bad = tmp.path().join("bad.json");
    std::fs::write(&bad, "{\"seed\": 1, \"nope\": 2}").unwrap();
    assert_eq!(cli(&["--config", s(&bad), "genset", "--out", s(&out)]), 1);
}

#[test]
fn genset_is_reproducible_and_partitioned() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    small_set(&a, "7");
    small_set(&b, "7");
    for f in ["manifest.jsonl", "manifest.header.json"] {
        assert_eq!(
            std::fs::read(a.join(f)).unwrap(),
            std::fs::read(b.join(f)).unwrap()
        );
    }
    let m = read_manifest(&a).unwrap();
    assert_eq!(m.len(), 24);
    assert_eq!(m.header.subjects, 3);
    assert!(m.records.iter().all(|r| a.join(&r.path).exists()));
    assert!(a.join("config.json").exists());
}

#[test]
fn reduce_copies_a_subset() {
    let tmp = tempfile::tempdir().unwrap();
    let (src, dst) = (tmp.path().join("src"), tmp.path().join("dst"));
    small_set(&src, "3");
    assert_eq!(
        cli(&[
            "genset",
            "--from",
            s(&src),
            "--reduce-poses",
            "2",
            "--out",
            s(&src)
        ]),
        1
    );
    let code = cli(&[
        "genset",
        "--from",
        s(&src),
        "--reduce-poses",
        "2",
        "--out",
        s(&dst),
    ]);
    assert_eq!(code, 0);
    let m = read_manifest(&dst).unwrap();
    assert_eq!(m.len(), 6);
    assert!(m.records.iter().all(|r| dst.join(&r.path).exists()));
}

#[test]
fn probe_rejects_a_rule_that_selects_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let (data, run_dir) = (tmp.path().join("data"), tmp.path().join("run"));
    small_set(&data, "1");
    let code = cli(&[
        "train",
        "--data",
        s(&data),
        "--profile",
        "tiny",
        "--input-height",
        "16",
        "--input-width",
        "8",
        "--epochs",
        "1",
        "--out",
        s(&run_dir),
    ]);
    assert_eq!(code, 0);
    let ckpt = run_dir.join("checkpoint.somf");
    let probe = |rule: &str, out: &str| {
        cli(&[
            "probe",
            "--checkpoint",
            s(&ckpt),
            "--data",
            s(&data),
            "--attribute",
            rule,
            "--permutations",
            "20",
            "--k",
            "3",
            "--out",
            s(&tmp.path().join(out)),
        ])
    };
    assert_eq!(probe("pose>1000", "p1"), 2);
    assert_eq!(probe("gender=female", "p2"), 1);
    assert_eq!(probe("pose<2", "p3"), 0);
    assert!(tmp.path().join("p3/probe.json").exists());
    assert_eq!(
        cli(&[
            "report",
            "--run",
            s(&run_dir),
            "--out",
            s(&tmp.path().join("rep"))
        ]),
        0
    );
    assert!(tmp.path().join("rep/summary.json").exists());
}

#[test]
fn holdout_subjects_fill_the_test_split() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let code = cli(&[
        "genset",
        "--subjects",
        "5",
        "--clothing",
        "1",
        "--poses",
        "6",
        "--holdout-subjects",
        "2",
        "--out",
        s(&data),
    ]);
    assert_eq!(code, 0);
    let m = read_manifest(&data).unwrap();
    let subjects =
        |split: Split| -> BTreeSet<usize> { m.split(split).iter().map(|r| r.subject_id).collect() };
    let test = subjects(Split::Test);
    assert_eq!(test.len(), 2);
    assert_eq!(m.split(Split::Test).len(), 12);
    assert!(test.is_disjoint(&subjects(Split::Train)));
    assert!(test.is_disjoint(&subjects(Split::Val)));
    assert_eq!(subjects(Split::Train).len(), 3);
}
