use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use codnet_cli::{run_study, Config, STUDIES};

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn codnet(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_codnet"));
    cmd.args(args).env_remove("CODNET_SEED").env_remove("CODNET_OUT");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn read_dir(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect()
}

fn run_all_studies(out: &Path, extra: &[&str]) {
    let quick = root().join("configs/quick.toml");
    for study in STUDIES.iter().copied().chain(["dist"]) {
        let mut args = vec!["--config", quick.to_str().unwrap(), "--out", out.to_str().unwrap()];
        args.extend_from_slice(extra);
        args.extend(["exp", study]);
        let o = codnet(&args, &[]);
        assert!(o.status.success(), "{study}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn reruns_are_byte_identical() {
    let (a, b, c) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_all_studies(a.path(), &[]);
    run_all_studies(b.path(), &[]);
    run_all_studies(c.path(), &["--parallel"]);
    let (fa, fb, fc) = (read_dir(a.path()), read_dir(b.path()), read_dir(c.path()));
    assert!(fa.len() > 20);
    assert_eq!(fa.keys().collect::<Vec<_>>(), fc.keys().collect::<Vec<_>>());
    for (name, bytes) in &fa {
        assert!(fb[name] == *bytes, "{name} differs between serial runs");
        assert!(fc[name] == *bytes, "{name} differs between serial and parallel runs");
    }
}

#[test]
fn empty_study_writes_header_only() {
    let mut cfg = Config::default();
    cfg.wucast.instances = 0;
    let res = run_study("wucast", &cfg).unwrap();
    let t = res.tables.iter().find(|t| t.file == "wucast_instances.csv").unwrap();
    let csv = t.to_csv();
    assert_eq!(csv.lines().count(), 1, "{csv}");
    assert!(csv.starts_with("instance,seed,"));
    assert_eq!(res.checks[0].status.label(), "SKIP");
}

#[test]
fn default_config_file_matches_defaults() {
    let cfg = Config::load(Some(&root().join("configs/default.toml"))).unwrap();
    assert_eq!(cfg, Config::default());
    Config::load(Some(&root().join("configs/quick.toml"))).unwrap().validate().unwrap();
}

#[test]
fn unknown_keys_and_bad_values_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[finmem]\nbogus = 1\n").unwrap();
    let o = codnet(&["--config", bad.to_str().unwrap(), "exp", "aloha"], &[]);
    assert_eq!(o.status.code(), Some(2));
    std::fs::write(&bad, "[finmem]\nr = [0.95]\n").unwrap();
    let o = codnet(&["--config", bad.to_str().unwrap(), "exp", "aloha"], &[]);
    assert_eq!(o.status.code(), Some(2));
    let o = codnet(&["--out", dir.path().to_str().unwrap(), "exp", "nosuch"], &[]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn environment_sets_seed_and_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("envout");
    let o = codnet(&["exp", "aloha"], &[("CODNET_SEED", "9"), ("CODNET_OUT", out.to_str().unwrap())]);
    assert!(o.status.success());
    let m: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("aloha_manifest.json")).unwrap()).unwrap();
    assert_eq!(m["base_seed"], 9);
    assert_eq!(m["config_hash"].as_str().unwrap().len(), 64);
    // The flag wins over the environment.
    let o = codnet(
        &["--seed", "4", "exp", "aloha"],
        &[("CODNET_SEED", "9"), ("CODNET_OUT", out.to_str().unwrap())],
    );
    assert!(o.status.success());
    let m: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("aloha_manifest.json")).unwrap()).unwrap();
    assert_eq!(m["base_seed"], 4);
}

#[test]
fn verify_subset_passes_and_skips_missing_topology() {
    let dir = tempfile::tempdir().unwrap();
    let o = codnet(&["--out", dir.path().to_str().unwrap(), "verify", "--only", "1,8"], &[]);
    let text = stdout(&o);
    assert_eq!(o.status.code(), Some(0), "{text}");
    assert!(text.contains("criterion   1 PASS"), "{text}");
    assert!(text.contains("criterion   8 PASS"), "{text}");
    assert!(text.contains("criterion 11r SKIP"), "{text}");
    let m: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("verify_manifest.json")).unwrap()).unwrap();
    assert_eq!(m["all_passed"], true);
    assert_eq!(m["criteria"].as_array().unwrap().len(), 3);

    let o = codnet(&["--out", dir.path().to_str().unwrap(), "verify", "--only", "99"], &[]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sim_and_opt_read_hypergraph_files() {
    let dir = tempfile::tempdir().unwrap();
    let net = root().join("data/butterfly.hnet");
    let base = ["--out", dir.path().to_str().unwrap()];
    let session = ["--net", net.to_str().unwrap(), "--source", "s", "--sinks", "t1,t2"];

    let o = codnet(&[&base[..], &["sim"], &session[..], &["--rate", "0.9"]].concat(), &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stats: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("sim_stats.json")).unwrap()).unwrap();
    assert_eq!(stats["k"], 64);
    let ranks = std::fs::read_to_string(dir.path().join("sim_ranks.csv")).unwrap();
    assert!(ranks.starts_with("tau,"));

    let o = codnet(&[&base[..], &["opt"], &session[..], &["--rate", "0.8"]].concat(), &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let sub = std::fs::read_to_string(dir.path().join("opt_subgraph.csv")).unwrap();
    assert_eq!(sub.lines().next(), Some("arc,tail,heads,z,cost"));
    assert_eq!(sub.lines().count(), 8);
    let opt: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("opt.json")).unwrap()).unwrap();
    assert!((opt["cost"].as_f64().unwrap() - 2.4).abs() < 1e-6);

    let o = codnet(&[&base[..], &["opt", "--net", net.to_str().unwrap(), "--source", "s", "--sinks", "zz", "--rate", "1"]].concat(), &[]);
    assert_eq!(o.status.code(), Some(2));
}
