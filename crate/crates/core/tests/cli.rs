use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use equilab::csvio::{read_phi_cloud, read_table};
use equilab::localfield::Reals;
use equilab::runner::net_count;

fn run(dir: &Path, name: &str, cfg: &str, extra: &[&str]) -> (Output, PathBuf) {
    let path = dir.join(format!("{name}.cfg"));
    std::fs::write(&path, cfg).unwrap();
    let out = dir.join(name);
    let o = Command::new(env!("CARGO_BIN_EXE_equilab"))
        .args(["run", "--config", path.to_str().unwrap(), "--out", out.to_str().unwrap()])
        .args(extra)
        .output()
        .unwrap();
    (o, out)
}

fn summary(dir: &Path) -> Vec<(String, String)> {
    read_table(dir.join("summary.csv")).unwrap().1.into_iter().map(|r| (r[0].clone(), r[1].clone())).collect()
}

fn value(rows: &[(String, String)], key: &str) -> String {
    rows.iter().find(|(k, _)| k == key).unwrap_or_else(|| panic!("no `{key}` in summary")).1.clone()
}

#[test]
fn missing_key_exits_2_and_names_it() {
    let tmp = tempfile::tempdir().unwrap();
    let (o, _) = run(tmp.path(), "bad", "experiment = proj\n[proj]\nfixture = planted_box\nks = 4\nn = 100\n", &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("proj.k"));
}

#[test]
fn config_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    for (name, cfg) in [
        ("unknown", "experiment = nothing\n"),
        ("garbled", "this is not a config\n"),
        ("fixture_without_kind", "experiment = fixtures\n"),
        ("bad_field", "experiment = fixtures\nfield = padic:p=4,K=3\n[fixtures]\nkind = iid\nn = 5\n"),
        ("bad_number", "experiment = flow\n[flow]\nT = five\n"),
    ] {
        let (o, _) = run(tmp.path(), name, cfg, &[]);
        assert_eq!(o.status.code(), Some(2), "{name}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn io_errors_exit_4() {
    let tmp = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_equilab")).args(["run", "--config", "/nonexistent/equilab.cfg"]).output().unwrap();
    assert_eq!(o.status.code(), Some(4));
    let (o, _) = run(tmp.path(), "missing_input", "experiment = proj\n[proj]\ninput = /nonexistent/cloud.csv\nk = 4\n", &[]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn numerical_failures_map_to_exit_3() {
    use equilab::error::Error;
    use equilab::runner::exit_code;
    assert_eq!(exit_code(&Error::IterationCap(10)), 3);
    assert_eq!(exit_code(&Error::PrecisionExceeded { precision: 6, what: "p^-1".into() }), 3);
    assert_eq!(exit_code(&Error::InvalidConfig("x".into())), 2);
    assert_eq!(exit_code(&Error::Io(std::io::Error::other("x"))), 4);
}

#[test]
fn flow_identity_proxies_are_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = "experiment = flow\nseed = 3\n[flow]\nx0 = identity\nT = 5\nn_r = 500\nn_haar = 5000\n";
    let (o, out) = run(tmp.path(), "flow", cfg, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (head, rows) = read_table(out.join("proximity.csv")).unwrap();
    assert_eq!(head[..2], ["candidate", "proxy"]);
    assert_eq!(rows.len(), 5);
    assert!(rows.iter().all(|r| r[1] == "0"), "{rows:?}");
    let (head, rows) = read_table(out.join("arc.csv")).unwrap();
    assert_eq!(head, ["r", "tau", "phi_id", "value"]);
    assert_eq!(rows.len(), 500 * 4);
    let (head, rows) = read_table(out.join("x0.csv")).unwrap();
    assert_eq!((head.len(), rows[0].len()), (15, 15));
    let manifest = std::fs::read_to_string(out.join("manifest.txt")).unwrap();
    assert!(manifest.starts_with(&format!("equilab {}", env!("CARGO_PKG_VERSION"))));
    assert!(manifest.contains("flow.T = 5") && manifest.contains("flow.n_haar = 5000") && manifest.contains("seed = 3"));
}

#[test]
fn same_seed_gives_identical_csvs_and_seed_flag_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = "experiment = proj\nseed = 5\n[proj]\nfixture = planted_box\nks = 2\nn = 4000\nk = 5\nr_samples = 40\n";
    let (a, da) = run(tmp.path(), "a", cfg, &[]);
    let (b, db) = run(tmp.path(), "b", cfg, &["--threads", "3"]);
    let (c, dc) = run(tmp.path(), "c", cfg, &["--seed", "6"]);
    assert!(a.status.success() && b.status.success() && c.status.success());
    for f in ["profile.csv", "summary.csv"] {
        assert_eq!(std::fs::read(da.join(f)).unwrap(), std::fs::read(db.join(f)).unwrap(), "{f}");
    }
    assert_ne!(std::fs::read(da.join("profile.csv")).unwrap(), std::fs::read(dc.join("profile.csv")).unwrap());
    assert!(std::fs::read_to_string(dc.join("manifest.txt")).unwrap().contains("seed = 6"));
}

#[test]
fn unused_keys_are_warned_about() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = "experiment = fixtures\nfield = padic:p=3,K=6\ntypo_key = 1\n[fixtures]\nkind = iid\nn = 50\n";
    let (o, out) = run(tmp.path(), "warn", cfg, &[]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("typo_key"));
    let (head, rows) = read_table(out.join("points.csv")).unwrap();
    assert_eq!((head.len(), rows.len()), (2, 50));
}

#[test]
fn planted_box_fixture_reloads_with_matching_cover() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = "experiment = fixtures\nseed = 7\n[fixtures]\nkind = planted_box\nks = 2\nn = 20000\nk = 4\n";
    let (o, out) = run(tmp.path(), "box", cfg, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = summary(&out);
    let box_cover: f64 = value(&s, "box_cover").parse().unwrap();
    let (cloud, weights) = read_phi_cloud(out.join("cloud.csv"), Reals).unwrap();
    assert!(weights.is_none());
    assert_eq!(cloud.len(), 20000);
    let n = net_count(&cloud, 4).unwrap() as f64;
    assert_eq!(n.to_string(), value(&s, "cloud_net"));
    // a delta-cover of a 3-cube by balls needs at least 6/pi times the box count
    let ratio = n / box_cover;
    assert!((1.0..=3.0).contains(&ratio), "ratio {ratio}");
}

#[test]
fn weighted_fixture_feeds_focus_input() {
    let tmp = tempfile::tempdir().unwrap();
    let gen = "experiment = fixtures\nseed = 2\n[fixtures]\nkind = two_scale\nclusters = 50\nper = 20\nk_small = 6\n";
    let (o, out) = run(tmp.path(), "ts", gen, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let input = out.join("cloud.csv");
    let focus = format!("experiment = focus\n[focus]\ninput = {}\nalpha = 2\nk1 = 2\nk2 = 6\n", input.display());
    let (o, out) = run(tmp.path(), "focus", &focus, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = summary(&out);
    let parts: f64 = ["mass_ip", "mass_fs", "mass_negligible"].iter().map(|k| value(&s, k).parse::<f64>().unwrap()).sum();
    let total: f64 = value(&s, "mass_total").parse().unwrap();
    assert!((parts - total).abs() <= 1e-12 * total);
    let (_, labels) = read_table(out.join("labels.csv")).unwrap();
    assert_eq!(labels.len(), 1000);
}

#[test]
fn sumprod_padic_shared_box() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = "experiment = sumprod\nfield = padic:p=3,K=12\n[sumprod]\nfixture = segment\nbox_k = 2\nk = 6\nalpha_hat = 0.6666666666666666\n";
    let (o, out) = run(tmp.path(), "sp", cfg, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = summary(&out);
    assert_eq!(value(&s, "common_box_found"), "true");
    assert_eq!(value(&s, "all_exact"), "true");
    let (head, rows) = read_table(out.join("exceptional.csv")).unwrap();
    assert_eq!(head[0], "r");
    assert_eq!(rows.len(), 200);
}
