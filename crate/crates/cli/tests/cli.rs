use std::path::Path;
use std::process::{Command, Output};

use ris_noma::scenario::import_scenario;

fn ris_noma(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ris-noma"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn unknown_preset_is_a_usage_error() {
    let o = ris_noma(&["run", "fig10"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("error[usage]"), "{}", stderr(&o));
}

#[test]
fn config_errors_map_to_categories() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "seeds = [1,\n").unwrap();
    let o = ris_noma(&[
        "run",
        "v2x_highway",
        "--config",
        path(&bad),
        "--out",
        path(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).starts_with("error[parse]"), "{}", stderr(&o));

    std::fs::write(&bad, "[game]\nbeta = 1.0\n").unwrap();
    let o = ris_noma(&[
        "run",
        "v2x_highway",
        "--config",
        path(&bad),
        "--out",
        path(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).starts_with("error[schema]"), "{}", stderr(&o));
    assert!(stderr(&o).contains("beta"));

    let missing = dir.path().join("missing.toml");
    let o = ris_noma(&["run", "v2x_highway", "--config", path(&missing)]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).starts_with("error[io]"), "{}", stderr(&o));
}

#[test]
fn preset_output_is_reproducible_and_tagged() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let o = ris_noma(&["run", "fig9", "--seed", "3", "--out", path(d.path())]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let x = std::fs::read_to_string(a.path().join("fig9.csv")).unwrap();
    let y = std::fs::read_to_string(b.path().join("fig9.csv")).unwrap();
    assert_eq!(x, y);
    let mut lines = x.lines();
    assert!(lines.next().unwrap().starts_with("# preset=fig9"));
    assert_eq!(lines.next().unwrap(), "# seeds=3");
    let rows: Vec<&str> = x.lines().filter(|l| !l.starts_with('#')).skip(1).collect();
    // 4 UEs at 0 and 100 elements.
    assert_eq!(rows.len(), 8);
    assert!(rows.iter().all(|r| r.starts_with("3,")));
}

#[test]
fn config_file_overrides_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "[highway]\nsample_interval_s = 1.0\n").unwrap();
    let o = ris_noma(&[
        "run",
        "v2x_highway",
        "--config",
        path(&cfg),
        "--out",
        path(dir.path()),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(dir.path().join("v2x_highway.csv")).unwrap();
    let rows = text.lines().filter(|l| !l.starts_with('#')).count() - 1;
    // 150 m at 66 km/h takes 8.18 s: samples at 0..=8 s.
    assert_eq!(rows, 9);
}

#[test]
fn exported_scenario_covers_every_pair() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("s.txt");
    let o = ris_noma(&[
        "export-scenario",
        "--seed",
        "4",
        "--band",
        "mmwave",
        "--out",
        path(&file),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let s = import_scenario(&file).unwrap();
    assert_eq!(s.band, "mmwave");
    assert_eq!(s.seed, 4);
    assert_eq!(s.ris_elements, 100);
    assert_eq!(s.carrier_frequency_hz, 28e9);
    // uav, ris and five UEs.
    assert_eq!(s.pairs.len(), 21);
    assert!(s
        .pairs
        .iter()
        .all(|p| p.re.is_finite() && p.im.is_finite() && p.toa_s > 0.0));

    let o = ris_noma(&[
        "export-scenario",
        "--ris-elements",
        "0",
        "--out",
        path(&file),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(import_scenario(&file).unwrap().pairs.len(), 15);
}

#[test]
fn verify_checks_every_band_and_size() {
    let dir = tempfile::tempdir().unwrap();
    let o = ris_noma(&[
        "verify",
        "--seed",
        "7",
        "--grid-points",
        "2000",
        "--out",
        path(dir.path()),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = out.lines().collect();
    // Two bands, elements {0, 1, 10, 100, 1000}.
    assert_eq!(lines.len(), 10);
    assert!(lines.iter().all(|l| l.starts_with("PASS ")), "{out}");
    let trace = std::fs::read_to_string(dir.path().join("trace_sub6_100_7.csv")).unwrap();
    assert!(trace.starts_with("iteration,p_dbm_0,"));
}
