use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn facrank(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_facrank")).args(args).env_remove("FACRANK_THREADS").output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = facrank(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

/// Drop wall-clock fields so runs can be compared.
fn without_times(mut v: Value) -> Value {
    fn strip(v: &mut Value) {
        match v {
            Value::Object(map) => {
                map.remove("time_s");
                map.values_mut().for_each(strip);
            }
            Value::Array(items) => items.iter_mut().for_each(strip),
            _ => {}
        }
    }
    strip(&mut v);
    v
}

fn trace_without_times(path: &Path) -> Vec<Vec<String>> {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    let headers = rdr.headers().unwrap().clone();
    let col = headers.iter().position(|h| h == "time_s").unwrap();
    rdr.records().map(|r| r.unwrap().iter().enumerate().filter(|(i, _)| *i != col).map(|(_, s)| s.to_string()).collect()).collect()
}

fn dir_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn full_observation_recovers_the_target() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&[
        "synth",
        "--n",
        "20",
        "--rank",
        "2",
        "--sr",
        "1.0",
        "--noise",
        "0",
        "--lambda",
        "beta1:2",
        "--repeats",
        "3",
        "--out",
        dir_str(tmp.path()),
    ]);
    let rep = report(tmp.path());
    for inst in rep["instances"].as_array().unwrap() {
        assert!(inst["re"].as_f64().unwrap() <= 1e-6, "{inst}");
        assert_eq!(inst["rank_nnzc"], 2);
    }
    for key in ["seed", "re", "nmae", "rank_nnzc", "rank_numeric", "iters", "time_s", "termination"] {
        assert!(rep["instances"][0].get(key).is_some(), "missing {key}");
    }
    for key in ["re", "nmae", "rank", "time_s"] {
        assert!(rep["mean"].get(key).is_some(), "missing mean.{key}");
    }
    assert!(tmp.path().join("trace_seed2.csv").exists());
    assert!(!tmp.path().join("path_seed0.csv").exists());
}

#[test]
fn noiseless_partial_observation() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&["synth", "--n", "300", "--rank", "3", "--sr", "0.25", "--noise", "0", "--repeats", "1", "--out", dir_str(tmp.path())]);
    let rep = report(tmp.path());
    assert!(rep["mean"]["re"].as_f64().unwrap() <= 0.01, "{}", rep["mean"]);
}

#[test]
fn runs_are_reproducible_and_parallel_runs_agree() {
    let tmp = tempfile::tempdir().unwrap();
    let dirs = ["a", "b", "c"].map(|d| tmp.path().join(d));
    let base =
        ["synth", "--n", "120", "--rank", "3", "--sr", "0.3", "--lambda", "beta2:3", "--alg", "alg2", "--repeats", "3", "--seed", "9"];
    for (i, d) in dirs.iter().enumerate() {
        let mut args = base.to_vec();
        args.extend(["--out", dir_str(d)]);
        if i == 2 {
            args.push("--parallel");
        }
        ok(&args);
    }
    let first = without_times(report(&dirs[0]));
    for d in &dirs[1..] {
        assert_eq!(without_times(report(d)), first);
        for seed in 9..12 {
            let name = format!("trace_seed{seed}.csv");
            assert_eq!(trace_without_times(&d.join(&name)), trace_without_times(&dirs[0].join(&name)));
        }
    }
    let seeds: Vec<u64> = first["instances"].as_array().unwrap().iter().map(|i| i["seed"].as_u64().unwrap()).collect();
    assert_eq!(seeds, vec![9, 10, 11]);
}

fn write_movielens_fixture(path: &Path) {
    let mut text = String::new();
    for u in 0..40usize {
        for i in 0..25usize {
            if (u * 7 + i * 5) % 3 == 0 {
                continue;
            }
            let r = 1 + (u % 5 + (i % 3) * (u % 2)) % 5;
            text.push_str(&format!("{}\t{}\t{}\t88125{:04}\n", u + 1, i + 1, r, u * 25 + i));
        }
    }
    std::fs::write(path, text).unwrap();
}

#[test]
fn real_data_fixture_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("u.data");
    write_movielens_fixture(&data);
    let out = tmp.path().join("out");
    let stdout =
        ok(&["real", "--input", dir_str(&data), "--format", "movielens_100k", "--sr", "0.5", "--repeats", "2", "--out", dir_str(&out)]);
    assert!(stdout.contains("NMAE"));
    let rep = report(&out);
    let nmae = rep["mean"]["nmae"].as_f64().unwrap();
    assert!(nmae.is_finite() && nmae >= 0.0);
    assert!(rep["mean"]["re"].is_null());
    assert_eq!(rep["config"]["data"]["m"], 40);
    assert_eq!(rep["config"]["solver"]["tol"], 1e-4);
    assert_eq!(rep["config"]["solver"]["n_lambda"], 50);

    let bad = tmp.path().join("bad.data");
    std::fs::write(&bad, "1\t1\tfive\t0\n").unwrap();
    let res = facrank(&["real", "--input", dir_str(&bad), "--out", dir_str(&out)]);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("line 1"));
}

#[test]
fn path_command_writes_the_scan() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for d in [&a, &b] {
        ok(&["path", "--n", "150", "--rank", "3", "--sr", "0.3", "--alg", "alg2", "--nlambda", "15", "--out", dir_str(d)]);
    }
    let text = std::fs::read_to_string(a.join("path.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), "i,lambda,solved,loss,nz,zeta,criterion_fired");
    assert_eq!(text, std::fs::read_to_string(b.join("path.csv")).unwrap());
    assert_eq!(without_times(report(&a)), without_times(report(&b)));
    assert_eq!(report(&a)["instances"][0]["rank_nnzc"], 3);

    let res = facrank(&["path", "--lambda", "2.0", "--out", dir_str(&a)]);
    assert!(!res.status.success());
}

#[test]
fn path_on_zero_data_falls_through() {
    let tmp = tempfile::tempdir().unwrap();
    let inst = tmp.path().join("zero.csv");
    std::fs::write(&inst, "i,j,v\n0,0,0\n3,4,0\n5,5,0\n").unwrap();
    let sidecar = r#"{"m": 6, "n": 6, "r_min": null, "r_max": null, "seed": 0, "scheme": "one", "sr": 0.1, "sigma": 0.0, "rank": null}"#;
    std::fs::write(tmp.path().join("zero.csv.json"), sidecar).unwrap();
    let out = tmp.path().join("out");
    let stdout = ok(&["path", "--instance", dir_str(&inst), "--nlambda", "5", "--out", dir_str(&out)]);
    assert!(stdout.contains("no criterion fired"));
    assert_eq!(report(&out)["instances"][0]["rank_nnzc"], 0);
}

#[test]
fn saved_instances_feed_the_path_command() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("s");
    ok(&[
        "synth",
        "--n",
        "150",
        "--rank",
        "3",
        "--sr",
        "0.3",
        "--alg",
        "alg2",
        "--lambda",
        "beta2:3",
        "--repeats",
        "1",
        "--save-instances",
        "--out",
        dir_str(&out),
    ]);
    let meta: Value = serde_json::from_str(&std::fs::read_to_string(out.join("instance_seed0.csv.json")).unwrap()).unwrap();
    assert_eq!(meta["m"], 150);
    assert_eq!(meta["rank"], 3);
    let p = tmp.path().join("p");
    ok(&["path", "--instance", dir_str(&out.join("instance_seed0.csv")), "--alg", "alg2", "--out", dir_str(&p)]);
    assert_eq!(report(&p)["instances"][0]["rank_nnzc"], 3);
}

fn read_csv_matrix(path: &Path) -> Vec<Vec<f64>> {
    std::fs::read_to_string(path).unwrap().lines().map(|l| l.split(',').map(|v| v.trim().parse().unwrap()).collect()).collect()
}

#[test]
fn factorize_small_matrices() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("z.csv");
    std::fs::write(&input, "4\n").unwrap();
    let out = tmp.path().join("f");
    let stdout = ok(&["factorize", "--input", dir_str(&input), "--out", dir_str(&out)]);
    assert!(stdout.starts_with("rank 1"));
    assert_eq!(read_csv_matrix(&out.join("x.csv")), vec![vec![2.0]]);
    assert_eq!(read_csv_matrix(&out.join("y.csv")), vec![vec![2.0]]);

    std::fs::write(&input, "0,0,0\n0,0,0\n").unwrap();
    ok(&["factorize", "--input", dir_str(&input), "--d", "2", "--out", dir_str(&out)]);
    assert!(read_csv_matrix(&out.join("x.csv")).iter().flatten().all(|&v| v == 0.0));

    // rank 3, 10 x 8, from integer factors
    let left: Vec<[f64; 3]> = (0..10).map(|i| [(i % 3) as f64 - 1.0, (i % 4) as f64, 1.0 + (i % 2) as f64]).collect();
    let right: Vec<[f64; 3]> = (0..8).map(|j| [1.0, (j % 3) as f64 - 0.5, (j * j % 5) as f64]).collect();
    let z: Vec<Vec<f64>> = left.iter().map(|l| right.iter().map(|r| l[0] * r[0] + l[1] * r[1] + l[2] * r[2]).collect()).collect();
    let text: String = z.iter().map(|row| row.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",") + "\n").collect();
    std::fs::write(&input, text).unwrap();
    let stdout = ok(&["factorize", "--input", dir_str(&input), "--d", "4", "--out", dir_str(&out)]);
    assert!(stdout.starts_with("rank 3"), "{stdout}");
    let (x, y) = (read_csv_matrix(&out.join("x.csv")), read_csv_matrix(&out.join("y.csv")));
    let mut err = 0.0f64;
    let mut norm = 0.0f64;
    for i in 0..10 {
        for j in 0..8 {
            let v: f64 = (0..4).map(|c| x[i][c] * y[j][c]).sum();
            err += (v - z[i][j]).powi(2);
            norm += z[i][j].powi(2);
        }
    }
    assert!(err.sqrt() <= 1e-10 * norm.sqrt());

    let res = facrank(&["factorize", "--input", dir_str(&input), "--d", "2", "--out", dir_str(&out)]);
    assert!(!res.status.success());
}

#[test]
fn selftest_exit_codes() {
    let out = facrank(&["selftest", "--quick"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let out = facrank(&["selftest", "--quick", "--inject-fault", "prox"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL prox_hard_vs_search"));
}

#[test]
fn invalid_flags_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let out = dir_str(tmp.path());
    for args in [
        vec!["synth", "--lambda", "beta3:2", "--out", out],
        vec!["synth", "--lambda", "-1", "--out", out],
        vec!["synth", "--lambda", "0", "--out", out],
        vec!["synth", "--alg", "alg7", "--out", out],
        vec!["synth", "--n", "20", "--repeats", "0", "--out", out],
        vec!["synth", "--n", "20", "--sr", "1.5", "--repeats", "1", "--out", out],
        vec!["synth", "--n", "20", "--rank", "2", "--lambda", "beta1:50", "--repeats", "1", "--out", out],
        vec!["selftest", "--inject-fault", "nothing"],
    ] {
        assert!(!facrank(&args).status.success(), "{args:?} should fail");
    }
}
