//! The file formats and command-line surfaces, driven through the binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use proptest::prelude::*;
use supermix_cli::config::validate_config;
use supermix_cli::formats::{parse_trace, trace_csv};
use supermix_cli::pipeline::{read_manifest, read_output, run_stages, RecurrenceScan, Stage, CEILING_DIR};
use supermix_core::birkhoff::GridRow;
use supermix_core::ceiling::bundle::read_bundle;
use supermix_core::ceiling::CeilingFunction;
use supermix_core::cfrac::FrequencyPair;
use supermix_core::schrodinger::{GordonReport, PotentialTrace};

const MINIMAL: &str = include_str!("fixtures/minimal.toml");

fn fixture() -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures/minimal.toml")
        .to_string_lossy()
        .into_owned()
}

/// One pipeline directory with the stages the commands below read.
fn run_dir() -> &'static Path {
    static DIR: OnceLock<tempfile::TempDir> = OnceLock::new();
    DIR.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = validate_config(MINIMAL).unwrap();
        cfg.output_dir = dir.path().to_path_buf();
        run_stages(&cfg, dir.path(), &[Stage::RecurrenceScan, Stage::Spectrum]).unwrap();
        dir
    })
    .path()
}

fn supermix(out: &Path, args: &[&str]) -> Output {
    let o = Command::new(env!("CARGO_BIN_EXE_supermix"))
        .args(["--config", &fixture(), "--out"])
        .arg(out)
        .args(args)
        .output()
        .unwrap();
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    o
}

fn csv_rows<T: for<'de> serde::Deserialize<'de>>(text: &[u8]) -> Vec<T> {
    csv::Reader::from_reader(text).deserialize().collect::<Result<_, _>>().unwrap()
}

fn header(text: &[u8]) -> String {
    String::from_utf8_lossy(text).lines().next().unwrap_or("").to_string()
}

#[test]
fn pipeline_bundle_matches_stage_json() {
    let dir = run_dir();
    let (ceiling, pair) = read_bundle(&dir.join(CEILING_DIR)).unwrap();
    let stage: CeilingFunction = read_output(dir, Stage::BuildCeiling).unwrap();
    let designed: FrequencyPair = read_output(dir, Stage::DesignFrequency).unwrap();
    assert_eq!(ceiling, stage);
    assert_eq!(pair, designed);
    let m = read_manifest(dir).unwrap();
    let outputs: Vec<&str> = m.record(Stage::BuildCeiling).unwrap().outputs.iter().map(|f| f.path.as_str()).collect();
    assert!(outputs.contains(&"ceiling/meta.json") && outputs.contains(&"ceiling/x-layer-2.json"), "{outputs:?}");
}

#[test]
fn build_from_pair_then_verify_bundle() {
    let tmp = tempfile::tempdir().unwrap();
    let bundle = tmp.path().join("bundle");
    let pair = run_dir().join(CEILING_DIR).join("pair.json");
    supermix(&bundle, &["build-ceiling", "--pair", pair.to_str().unwrap(), "--levels", "1", "--amplitude", "poly:3"]);
    let (c, _) = read_bundle(&bundle).unwrap();
    assert_eq!(c.levels(), 1);
    assert_eq!(c.amplitude.name(), "poly:3");

    let report = tmp.path().join("report.json");
    supermix(tmp.path(), &["verify-properties", "--ceiling", bundle.to_str().unwrap(), "--report", report.to_str().unwrap()]);
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(&report).unwrap()).unwrap();
    assert_eq!(v["levels"].as_array().unwrap().len(), 1);
}

#[derive(Debug, serde::Deserialize)]
struct Orbit {
    t: String,
    x: f64,
    y: f64,
    s: f64,
    distance: f64,
    flag: String,
}

#[test]
fn orbit_log() {
    let tmp = tempfile::tempdir().unwrap();
    let o = supermix(tmp.path(), &["orbit", "--point", "0.3,0.6,0.1", "--times", "0,2.5,-3"]);
    assert_eq!(header(&o.stdout), "t,x,y,s,distance,flag");
    let rows: Vec<Orbit> = csv_rows(&o.stdout);
    assert_eq!(rows.len(), 3);
    assert_eq!((rows[0].x, rows[0].y, rows[0].s, rows[0].distance), (0.3, 0.6, 0.1, 0.0));
    assert!(rows.iter().all(|r| r.flag == "ok"));
    assert_eq!(rows[1].t, "2.5");

    // recurrence times: the logged distance is the census one
    let o = supermix(tmp.path(), &["orbit", "--point", "0.3,0.6,0.1", "--times", "auto:2"]);
    let rows: Vec<Orbit> = csv_rows(&o.stdout);
    let pair: FrequencyPair = read_output(run_dir(), Stage::DesignFrequency).unwrap();
    assert_eq!(rows.len(), 2);
    for (j, r) in rows.iter().enumerate() {
        assert_eq!(r.t, pair.recurrence_time(j + 1).to_string());
        assert!(["witness", "miss", "ambiguous"].contains(&r.flag.as_str()));
        assert!(r.distance.is_finite() && r.distance >= 0.0);
    }
}

#[test]
fn birkhoff_reports_have_grid_sidecars() {
    let tmp = tempfile::tempdir().unwrap();
    supermix(tmp.path(), &["stretch", "--level", "1", "--m", "1000", "--axis", "y", "--grid", "64"]);
    let csv = std::fs::read(tmp.path().join("stretch-1-y.csv")).unwrap();
    assert_eq!(header(&csv), "x,y,value,threshold,pass");
    let rows: Vec<GridRow> = csv_rows(&csv);
    assert!(!rows.is_empty() && rows.len() <= 64);

    supermix(tmp.path(), &["recurrence", "--level", "1"]);
    let csv = std::fs::read(tmp.path().join("recurrence-1.csv")).unwrap();
    let rows: Vec<GridRow> = csv_rows(&csv);
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(tmp.path().join("recurrence-1.json")).unwrap()).unwrap();
    let max = rows.iter().map(|r| r.value).fold(0.0, f64::max);
    let reported: f64 = report["max_deviation"].as_str().unwrap().parse().unwrap();
    assert_eq!(max, reported);
}

#[test]
fn recurrence_scan_logs_every_sampled_orbit() {
    let dir = run_dir();
    let scan: RecurrenceScan = read_output(dir, Stage::RecurrenceScan).unwrap();
    assert_eq!(scan.orbits.len(), 20);
    assert_eq!(scan.level_witness.len(), 2);
    let csv = std::fs::read(dir.join("recurrence-scan.csv")).unwrap();
    assert_eq!(header(&csv), "id,x,y,s,level,t,distance,radius,witness,ambiguous");
    assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 1 + 20 * 2);
    for j in 1..=2 {
        let rows: Vec<GridRow> = csv_rows(&std::fs::read(dir.join(format!("recurrence-level-{j}.csv"))).unwrap());
        let max = rows.iter().map(|r| r.value).fold(0.0, f64::max);
        assert_eq!(max, scan.reports[j - 1].max_deviation);
    }
}

fn trace_path() -> PathBuf {
    run_dir().join("trace-0.csv")
}

#[test]
fn spectrum_of_a_trace_file_reproduces_the_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let stage = std::fs::read(run_dir().join("spectrum-0.csv")).unwrap();
    assert_eq!(header(&stage), "index,eigenvalue,IPR,decay_rate,edge_mass");
    let o = supermix(tmp.path(), &["spectrum", "--trace", trace_path().to_str().unwrap(), "--size", "101"]);
    assert_eq!(o.stdout, stage);
    let o = supermix(tmp.path(), &["spectrum", "--trace", trace_path().to_str().unwrap(), "--size", "11"]);
    assert_eq!(String::from_utf8(o.stdout).unwrap().lines().count(), 12);
}

#[test]
fn gordon_and_block_bound_on_a_trace_file() {
    let tmp = tempfile::tempdir().unwrap();
    let o = supermix(tmp.path(), &["gordon-scan", "--trace", trace_path().to_str().unwrap(), "--candidates", "3,7,12"]);
    let r: GordonReport = serde_json::from_slice(&o.stdout).unwrap();
    let ks: Vec<usize> = r.entries.iter().map(|e| e.k).collect();
    assert_eq!(ks, vec![3, 7, 12]);

    // a periodic trace has zero defect at its period
    let per = supermix_core::schrodinger::periodic_trace(&[0.5, -1.0, 2.0], 30).unwrap();
    let path = tmp.path().join("periodic.csv");
    std::fs::write(&path, trace_csv(&per)).unwrap();
    let o = supermix(tmp.path(), &["gordon-scan", "--trace", path.to_str().unwrap(), "--candidates", "3,6"]);
    let r: GordonReport = serde_json::from_slice(&o.stdout).unwrap();
    assert!(r.entries.iter().all(|e| e.defect == 0.0 && e.pass));

    // auto: the recurrence times of the fixture's pair (t₁ = 260) that fit
    let long = supermix_core::schrodinger::periodic_trace(&[0.5, -1.0, 2.0, 0.25], 600).unwrap();
    let long_path = tmp.path().join("long.csv");
    std::fs::write(&long_path, trace_csv(&long)).unwrap();
    let o = supermix(tmp.path(), &["gordon-scan", "--trace", long_path.to_str().unwrap(), "--candidates", "auto"]);
    let r: GordonReport = serde_json::from_slice(&o.stdout).unwrap();
    let ks: Vec<usize> = r.entries.iter().map(|e| e.k).collect();
    assert_eq!(ks, vec![260]);
    assert!(r.entries[0].pass);

    let o = supermix(tmp.path(), &["block-bound", "--trace", path.to_str().unwrap(), "--k", "6", "--energies", "-3:3:7"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["total"], 7);
    assert_eq!(v["satisfied"], 7);
}

#[test]
fn overrides_reach_the_stage_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    supermix(tmp.path(), &["recurrence-scan", "--samples", "3"]);
    let scan: RecurrenceScan = read_output(tmp.path(), Stage::RecurrenceScan).unwrap();
    assert_eq!(scan.orbits.len(), 3);
    // faster growth than the fixture's budget allows: the override reaches
    // the stage and fails it
    let o = Command::new(env!("CARGO_BIN_EXE_supermix"))
        .args(["--config", &fixture(), "--out"])
        .arg(tmp.path())
        .args(["design-frequency", "--schedule", "power:5"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("schedule overflow"));
}

proptest! {
    #[test]
    fn trace_csv_round_trips(values in prop::collection::vec(-1e12f64..1e12, 1..40usize)) {
        let mut v = values;
        if v.len() % 2 == 0 {
            v.pop();
        }
        prop_assume!(v.len() >= 3);
        let t = PotentialTrace::from_values(v, "p").unwrap();
        let back = parse_trace(std::str::from_utf8(&trace_csv(&t)).unwrap(), "p").unwrap();
        prop_assert_eq!(back.samples, t.samples);
    }
}
