use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn secvault(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_secvault"))
        .env("SECVAULT_ROOT", root)
        .current_dir(root)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn base_object(len: usize) -> Vec<u8> {
    (0..len).map(|i| (i * 37 % 251) as u8 + 1).collect()
}

/// Changes the first byte of `blocks` distinct blocks, block size `stripe`.
fn touch(obj: &[u8], stripe: usize, blocks: &[usize]) -> Vec<u8> {
    let mut out = obj.to_vec();
    for &b in blocks {
        out[b * stripe] ^= 0x5a;
    }
    out
}

fn csv_value(csv: &str, cols: &[(usize, &str)], metric: &str) -> Vec<f64> {
    csv.lines()
        .filter(|l| !l.starts_with('#'))
        .filter(|l| {
            let f: Vec<&str> = l.split(',').collect();
            f.last().is_some()
                && cols.iter().all(|&(i, v)| f.get(i) == Some(&v))
                && f.get(f.len() - 2) == Some(&metric)
        })
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect()
}

#[test]
fn encode_single_version() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("v1"), base_object(30)).unwrap();
    let o = secvault(tmp.path(), &["encode", "--id", "one", "v1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("stored: {x1}"));
}

#[test]
fn identical_versions_report_gamma_zero() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("v1"), base_object(30)).unwrap();
    let o = secvault(tmp.path(), &["encode", "--id", "same", "v1", "v1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("version 2: gamma 0"), "{}", stdout(&o));
    let r = secvault(
        tmp.path(),
        &["retrieve", "--id", "same", "--version", "2", "--out", "got"],
    );
    assert!(r.status.success());
    assert!(stdout(&r).contains("version 2: 3 reads"), "{}", stdout(&r));
}

#[test]
fn optimized_five_versions_pattern() {
    let tmp = tempfile::tempdir().unwrap();
    let stripe = 4;
    let mut versions = vec![base_object(10 * stripe)];
    for blocks in [
        &[0, 1, 2][..],
        &[0, 1, 2, 3, 4, 5, 6, 7],
        &[3, 4, 5],
        &[4, 5, 6, 7, 8, 9],
    ] {
        versions.push(touch(versions.last().unwrap(), stripe, blocks));
    }
    let mut args = vec![
        "encode",
        "--id",
        "l5",
        "--n",
        "20",
        "--k",
        "10",
        "--mode",
        "optimized",
    ];
    let names: Vec<String> = (1..=5).map(|i| format!("v{i}")).collect();
    for (name, v) in names.iter().zip(&versions) {
        fs::write(tmp.path().join(name), v).unwrap();
    }
    args.extend(names.iter().map(String::as_str));
    let o = secvault(tmp.path(), &args);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(
        stdout(&o).contains("stored: {x1, z2, x3, z4, x5}"),
        "{}",
        stdout(&o)
    );
    for (i, v) in versions.iter().enumerate() {
        let ver = (i + 1).to_string();
        let r = secvault(
            tmp.path(),
            &["retrieve", "--id", "l5", "--version", &ver, "--out", "got"],
        );
        assert!(r.status.success(), "{}", stderr(&r));
        assert_eq!(&fs::read(tmp.path().join("got")).unwrap(), v);
    }
}

#[test]
fn two_version_retrieval_reads_five() {
    for flag in ["--systematic", "--non-systematic"] {
        let tmp = tempfile::tempdir().unwrap();
        let v1 = base_object(30);
        fs::write(tmp.path().join("v1"), &v1).unwrap();
        fs::write(tmp.path().join("v2"), touch(&v1, 10, &[1])).unwrap();
        let o = secvault(tmp.path(), &["encode", "--id", "pair", flag, "v1", "v2"]);
        assert!(o.status.success(), "{}", stderr(&o));
        let r = secvault(
            tmp.path(),
            &["retrieve", "--id", "pair", "--version", "2", "--out", "got"],
        );
        assert!(stdout(&r).contains("version 2: 5 reads"), "{}", stdout(&r));
        assert_eq!(
            fs::read(tmp.path().join("got")).unwrap(),
            touch(&v1, 10, &[1])
        );
    }
}

#[test]
fn too_many_failures_is_unrecoverable() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("v1"), base_object(30)).unwrap();
    secvault(tmp.path(), &["encode", "--id", "u", "v1"]);
    let r = secvault(
        tmp.path(),
        &[
            "retrieve",
            "--id",
            "u",
            "--version",
            "1",
            "--failed",
            "0,1,2,3",
            "--out",
            "got",
        ],
    );
    assert_eq!(r.status.code(), Some(3));
    assert!(stderr(&r).contains("stored object 1"), "{}", stderr(&r));
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = secvault(
        tmp.path(),
        &["retrieve", "--id", "nope", "--version", "1", "--out", "x"],
    );
    assert_eq!(missing.status.code(), Some(4));
    let usage = secvault(tmp.path(), &["simulate"]);
    assert_eq!(usage.status.code(), Some(2));
    let bad_mode = secvault(
        tmp.path(),
        &["encode", "--id", "a", "--mode", "sideways", "v1"],
    );
    assert_eq!(bad_mode.status.code(), Some(2));
    fs::write(tmp.path().join("v1"), b"abc").unwrap();
    fs::write(tmp.path().join("v2"), b"abcd").unwrap();
    let sizes = secvault(tmp.path(), &["encode", "--id", "a", "v1", "v2"]);
    assert_eq!(sizes.status.code(), Some(2), "{}", stderr(&sizes));
    secvault(tmp.path(), &["encode", "--id", "b", "v1"]);
    let conflict = secvault(tmp.path(), &["encode", "--id", "b", "v1"]);
    assert_eq!(conflict.status.code(), Some(4));
}

#[test]
fn append_then_retrieve() {
    let tmp = tempfile::tempdir().unwrap();
    let v1 = base_object(24);
    let v2 = touch(&v1, 8, &[2]);
    fs::write(tmp.path().join("v1"), &v1).unwrap();
    fs::write(tmp.path().join("v2"), &v2).unwrap();
    secvault(
        tmp.path(),
        &["encode", "--id", "r", "--mode", "reversed", "v1"],
    );
    let a = secvault(tmp.path(), &["append", "--id", "r", "v2"]);
    assert!(a.status.success(), "{}", stderr(&a));
    assert!(stdout(&a).contains("stored: {z2, x2}"), "{}", stdout(&a));
    let r = secvault(
        tmp.path(),
        &["retrieve", "--id", "r", "--version", "2", "--out", "got"],
    );
    assert!(stdout(&r).contains("version 2: 3 reads"), "{}", stdout(&r));
    assert_eq!(fs::read(tmp.path().join("got")).unwrap(), v2);
}

#[test]
fn resilience_census_and_zero_p() {
    let tmp = tempfile::tempdir().unwrap();
    let o = secvault(tmp.path(), &["resilience", "--p-grid", "0,0.1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = stdout(&o);
    assert_eq!(
        csv_value(&csv, &[(1, "nonsys")], "census_mds_gamma1"),
        [41.0]
    );
    assert_eq!(
        csv_value(&csv, &[(1, "nonsys")], "census_handled_gamma1"),
        [56.0]
    );
    assert_eq!(
        csv_value(&csv, &[(1, "sys")], "census_handled_gamma1"),
        [44.0]
    );
    for line in csv
        .lines()
        .filter(|l| l.starts_with("0,") && l.contains("loss"))
    {
        assert!(line.ends_with(",0"), "{line}");
    }
    let colocated: Vec<f64> = ["nonsys", "sys", "nondiff"]
        .iter()
        .flat_map(|v| csv_value(&csv, &[(0, "0.1"), (1, v), (2, "colocated")], "retention"))
        .collect();
    assert_eq!(colocated.len(), 3);
    assert!(colocated.iter().all(|&r| r == colocated[0]));
}

#[test]
fn simulate_mu_nonsys_is_two() {
    let tmp = tempfile::tempdir().unwrap();
    let args = [
        "simulate",
        "--mu",
        "--p-grid",
        "0.01,0.1,0.2",
        "--trials",
        "5000",
        "--seed",
        "4",
    ];
    let o = secvault(tmp.path(), &args);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = stdout(&o);
    assert!(csv.starts_with("# seed=4\n"));
    let mus = csv_value(&csv, &[], "mu_gamma1_nonsys");
    assert_eq!(mus, [2.0, 2.0, 2.0]);
    // deterministic given the seed
    let again = secvault(tmp.path(), &args);
    assert_eq!(o.stdout, again.stdout);
}

#[test]
fn simulate_scenario_table() {
    let tmp = tempfile::tempdir().unwrap();
    let o = secvault(tmp.path(), &["simulate", "--scenario-l5"]);
    let csv = stdout(&o);
    assert_eq!(csv_value(&csv, &[(3, "l=5")], "basic_cumulative"), [42.0]);
    assert_eq!(csv_value(&csv, &[(3, "l=5")], "nondiff_cumulative"), [50.0]);
}

#[test]
fn simulate_expected_io_poisson_small() {
    let tmp = tempfile::tempdir().unwrap();
    let o = secvault(
        tmp.path(),
        &["simulate", "--expected-io", "--pmf", "poisson:4"],
    );
    let reduction = csv_value(&stdout(&o), &[], "reduction_pct_pair");
    assert_eq!(reduction.len(), 1);
    assert!(reduction[0] > 0.0 && reduction[0] < 4.0, "{reduction:?}");
}

#[test]
fn pmf_table_file() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("pmf.txt"), "1 0 0\n").unwrap();
    let o = secvault(
        tmp.path(),
        &["simulate", "--expected-io", "--pmf", "table:pmf.txt"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(csv_value(&stdout(&o), &[], "expected_reads_pair"), [5.0]);
    fs::write(tmp.path().join("bad.txt"), "0.5 0.4 0\n").unwrap();
    let bad = secvault(
        tmp.path(),
        &["simulate", "--expected-io", "--pmf", "table:bad.txt"],
    );
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn config_file_precedence() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(
        tmp.path().join("cfg.toml"),
        "n = 8\nk = 4\nsystematic = true\n",
    )
    .unwrap();
    fs::write(tmp.path().join("v1"), base_object(16)).unwrap();
    let o = secvault(
        tmp.path(),
        &[
            "--config", "cfg.toml", "encode", "--id", "c", "--k", "2", "v1",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(
        stdout(&o).contains("(8, 2) over GF(2^8), systematic"),
        "{}",
        stdout(&o)
    );
    fs::write(tmp.path().join("bad.toml"), "colour = 1\n").unwrap();
    let bad = secvault(
        tmp.path(),
        &["--config", "bad.toml", "simulate", "--scenario-l5"],
    );
    assert_eq!(bad.status.code(), Some(2));
}
