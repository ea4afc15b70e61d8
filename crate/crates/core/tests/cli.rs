use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn smallcap(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_smallcap"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn files(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .map(|d| d.map(|e| e.unwrap().path()).collect())
        .unwrap_or_default();
    v.sort();
    v
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn only_manifest(out: &Path) -> Value {
    let m = files(&out.join("manifests"));
    assert_eq!(m.len(), 1, "{m:?}");
    read_json(&m[0])
}

fn only_result(out: &Path) -> Value {
    let r = files(&out.join("results"));
    assert_eq!(r.len(), 1, "{r:?}");
    read_json(&r[0])
}

#[test]
fn moment_examples() {
    let cases: [(&[&str], f64); 4] = [
        (
            &[
                "moment", "--N", "5", "--sigma", "0", "--s", "2", "--coeffs", "constant",
                "--method", "exact",
            ],
            45.0,
        ),
        (
            &["moment", "--N", "5", "--s", "2", "--method", "brute"],
            45.0,
        ),
        (&["moment", "--N", "1", "--sigma", "1.7", "--s", "3"], 1.0),
        (
            &[
                "moment",
                "--N",
                "30",
                "--sigma",
                "0.5",
                "--s",
                "1",
                "--coeffs",
                "random_sign",
                "--seed",
                "7",
            ],
            30f64.sqrt(),
        ),
    ];
    for (args, want) in cases {
        let dir = tempfile::tempdir().unwrap();
        let o = smallcap(dir.path(), args);
        assert_eq!(
            o.status.code(),
            Some(0),
            "{}",
            String::from_utf8_lossy(&o.stderr)
        );
        let r = only_result(dir.path());
        let v = r["value"].as_f64().unwrap();
        assert!((v - want).abs() <= 1e-10 * want, "{args:?}: {v}");
        let m = only_manifest(dir.path());
        assert_eq!(r["manifest"], m["id"]);
        assert_eq!(m["state"], "COMPLETED");
        assert!(String::from_utf8_lossy(&o.stdout).starts_with("moment N="));
    }
}

#[test]
fn quadrature_method_and_real_exponent() {
    let dir = tempfile::tempdir().unwrap();
    let o = smallcap(
        dir.path(),
        &[
            "moment", "--N", "4", "--sigma", "1", "--s", "2", "--method", "quad",
        ],
    );
    assert_eq!(o.status.code(), Some(0));
    let v = only_result(dir.path())["value"].as_f64().unwrap();
    let dir2 = tempfile::tempdir().unwrap();
    smallcap(
        dir2.path(),
        &["moment", "--N", "4", "--sigma", "1", "--s", "2"],
    );
    let e = only_result(dir2.path())["value"].as_f64().unwrap();
    assert!((v - e).abs() <= 1e-9 * e);
    let dir3 = tempfile::tempdir().unwrap();
    let o = smallcap(
        dir3.path(),
        &["moment", "--N", "4", "--p", "3.5", "--method", "quad"],
    );
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn failure_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cases: [(&[&str], i32); 8] = [
        (&["moment", "--N", "5"], 2),
        (&["moment", "--N", "5", "--s", "2", "--sigma", "-1"], 2),
        (&["moment", "--N", "5", "--s", "2", "--coeffs", "bogus"], 2),
        (&["moment", "--N", "5", "--s", "2", "--p", "3"], 2),
        (&["moment"], 2),
        (&["frobnicate"], 2),
        (&["moment", "--N", "400", "--s", "4"], 3),
        (
            &["moment", "--N", "50", "--s", "3", "--budget-tuples", "1000"],
            3,
        ),
    ];
    for (args, code) in cases {
        let o = smallcap(d, args);
        assert_eq!(
            o.status.code(),
            Some(code),
            "{args:?}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
    }
    // budget and validation failures that reach a run leave a FAILED manifest
    for m in files(&d.join("manifests")) {
        assert_eq!(read_json(&m)["state"], "FAILED");
    }
    let cfg = d.join("two.toml");
    std::fs::write(&cfg, "kind = \"mainexp\"\n[mainexp]\nn_values = [4, 8]\nsigma = 0.0\ns = 2\nfamily = \"constant\"\n")
        .unwrap();
    assert_eq!(
        smallcap(d, &["sweep", cfg.to_str().unwrap()]).status.code(),
        Some(2)
    );
    assert_eq!(
        smallcap(d, &["sweep", d.join("missing.toml").to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );
    let blocker = d.join("file");
    std::fs::write(&blocker, "x").unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_smallcap"))
        .args(["moment", "--N", "3", "--s", "1", "--out"])
        .arg(&blocker)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn synthetic_sweep_recovers_slope() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = d.join("syn.toml");
    std::fs::write(&cfg, "kind = \"synthetic\"\n[synthetic]\nx = [2.0, 8.0, 32.0]\nexponent = 2.5\nconstant = 0.75\n").unwrap();
    let o = smallcap(d, &["sweep", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let r = only_result(d);
    assert!((r["slope"].as_f64().unwrap() - 2.5).abs() <= 1e-9);
    assert_eq!(r["verdict"], "PASS");
    let csv = std::fs::read_to_string(files(&d.join("tables"))[0].clone()).unwrap();
    assert!(csv.starts_with("N,value,envelope,seed_count,method,err_estimate\n"));
    assert!(!csv.contains('\r'));
    assert_eq!(csv.lines().count(), 4);
    let m = only_manifest(d);
    // defaults are echoed into the snapshot
    assert_eq!(m["config"]["synthetic"]["tolerance"].as_f64(), Some(0.3));
    assert!(m["config"]["budget"]["tuples"].is_u64());
}

#[test]
fn reruns_give_identical_tables_and_valid_digests() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = d.join("me.toml");
    std::fs::write(
        &cfg,
        "kind = \"mainexp\"\n[mainexp]\nn_values = [6, 9, 12, 15]\nsigma = 1.0\ns = 2\nfamily = \"random_sign\"\nseeds = [0,1,2,3,4,5,6,7,8,9,10,11,12,13,14,15,16,17,18,19]\nrandom_h0 = true\n",
    )
    .unwrap();
    let a = smallcap(d, &["sweep", cfg.to_str().unwrap(), "--workers", "1"]);
    let b = smallcap(d, &["sweep", cfg.to_str().unwrap(), "--workers", "3"]);
    assert_eq!(a.status.code(), b.status.code());
    let tables = files(&d.join("tables"));
    assert_eq!(tables.len(), 2);
    assert_eq!(
        std::fs::read(&tables[0]).unwrap(),
        std::fs::read(&tables[1]).unwrap()
    );
    let manifests = files(&d.join("manifests"));
    assert_eq!(manifests.len(), 2);
    for m in manifests {
        let m = read_json(&m);
        let outs = m["outputs"].as_array().unwrap();
        assert_eq!(outs.len(), 2);
        for o in outs {
            let bytes = std::fs::read(d.join(o["path"].as_str().unwrap())).unwrap();
            use sha2::Digest;
            assert_eq!(
                o["sha256"].as_str().unwrap(),
                hex::encode(sha2::Sha256::digest(bytes))
            );
        }
        assert_eq!(m["seeds"].as_array().unwrap().len(), 20);
    }
}

#[test]
fn sweep_budget_failure_flushes_partial_rows() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = d.join("big.toml");
    std::fs::write(&cfg, "kind = \"mainexp\"\n[mainexp]\nn_values = [4, 8, 400]\nsigma = 0.0\ns = 3\nfamily = \"constant\"\n")
        .unwrap();
    let o = smallcap(
        d,
        &["sweep", cfg.to_str().unwrap(), "--budget-tuples", "100000"],
    );
    assert_eq!(o.status.code(), Some(3));
    let m = only_manifest(d);
    assert_eq!(m["state"], "FAILED");
    assert_eq!(m["budgets"]["tuples"], 100000);
    let csv = std::fs::read_to_string(files(&d.join("tables"))[0].clone()).unwrap();
    assert_eq!(csv.lines().count(), 3, "{csv}");
    assert!(files(&d.join("results")).is_empty());
}

#[test]
fn sweep_fail_verdict_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = d.join("tight.toml");
    // constant s = 3 at σ = 0 grows like N³ log N; a zero-width tolerance cannot hold
    std::fs::write(
        &cfg,
        "kind = \"mainexp\"\n[mainexp]\nn_values = [8, 16, 32]\nsigma = 0.0\ns = 3\nfamily = \"constant\"\ntolerance = 1e-6\n",
    )
    .unwrap();
    let o = smallcap(d, &["sweep", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(only_result(d)["verdict"], "FAIL");
    assert_eq!(only_manifest(d)["state"], "VIOLATION");
}

#[test]
fn geometry_examples() {
    let cases: [&[&str]; 6] = [
        &[
            "geometry",
            "--check",
            "geo1",
            "--R",
            "1048576",
            "--beta",
            "0.75",
            "--c-eps",
            "1",
            "--samples",
            "10000",
            "--seed",
            "1",
        ],
        &[
            "geometry", "--check", "rescale", "--R-prev", "4096", "--l", "3",
        ],
        &[
            "geometry",
            "--check",
            "partition",
            "--R",
            "1024",
            "--beta",
            "0.5",
            "--samples",
            "100000",
        ],
        &[
            "geometry",
            "--check",
            "geo2",
            "--beta",
            "1",
            "--samples",
            "2000",
        ],
        &[
            "geometry",
            "--check",
            "geo3",
            "--R",
            "16777216",
            "--samples",
            "2000",
        ],
        &[
            "geometry",
            "--check",
            "broad-narrow",
            "--samples",
            "2000",
            "--seed",
            "4",
        ],
    ];
    for args in cases {
        let dir = tempfile::tempdir().unwrap();
        let o = smallcap(dir.path(), args);
        assert_eq!(
            o.status.code(),
            Some(0),
            "{args:?}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
        let r = only_result(dir.path());
        assert_eq!(r["violations"], 0);
        if args[2] == "rescale" {
            assert!(r["report"]["max_residual"].as_f64().unwrap() <= 1e-9);
        }
        if args[2] == "partition" {
            assert_eq!(r["report"]["max_multiplicity"], 1);
        }
    }
    let dir = tempfile::tempdir().unwrap();
    let o = smallcap(
        dir.path(),
        &[
            "geometry", "--check", "rescale", "--R-prev", "4096", "--l", "16",
        ],
    );
    assert_eq!(o.status.code(), Some(2));
    let o = smallcap(
        dir.path(),
        &["geometry", "--check", "broad-narrow", "--bands", "5"],
    );
    assert_eq!(o.status.code(), Some(2));
}
