use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

use tranche_core::impliedcorr::{invert_compound, tranche_spread_vs_rho, CopulaContext};
use tranche_core::{DiscountCurve, Instrument, Quote, QuoteType, TrancheDef};

const HEADER: &str =
    "date,family,series,maturity_years,attach,detach,quote_type,bid,mid,ask,fixed_running_bps";
const INDEX_BPS: f64 = 40.0;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tranche-lab"))
}

fn run(args: &[&str]) -> Output {
    bin()
        .args(args)
        .env_remove("TRANCHE_LAB_THREADS")
        .output()
        .unwrap()
}

fn data(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(name)
        .display()
        .to_string()
}

fn write(dir: &TempDir, name: &str, text: &str) -> String {
    let p: PathBuf = dir.path().join(name);
    fs::write(&p, text).unwrap();
    p.display().to_string()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn ctx() -> CopulaContext {
    CopulaContext::homogeneous_from_index(INDEX_BPS, 0.4, 125, 5.0, DiscountCurve::flat(0.03))
        .unwrap()
}

fn rows(date: &str, mezz_bps: f64) -> String {
    format!(
        "{date},test,1,5,INDEX,INDEX,running,{i},{i},{i},\n{date},test,1,5,0.03,0.06,running,{m},{m},{m},\n",
        i = INDEX_BPS,
        m = mezz_bps
    )
}

/// Three dates whose 3-6% quote is attainable, below the attainable range,
/// then attainable again.
fn synthetic_panel() -> String {
    let c = ctx();
    let mezz = TrancheDef::new(0.03, 0.06).unwrap();
    let at = |rho| tranche_spread_vs_rho(&c, &mezz, &QuoteType::Running, rho).unwrap();
    let probe = Quote::running_mid(Instrument::Tranche(mezz), 5.0, at(0.2)).unwrap();
    let (lo, _) = invert_compound(&probe, &c).unwrap().attainable_range;
    let below = 0.8 * lo;
    let check = Quote::running_mid(Instrument::Tranche(mezz), 5.0, below).unwrap();
    assert!(!invert_compound(&check, &c).unwrap().invertible());
    format!(
        "{HEADER}\n{}{}{}",
        rows("2005-01-07", at(0.2)),
        rows("2005-01-14", below),
        rows("2005-01-21", at(0.35))
    )
}

#[test]
fn panel_reports_invertibility_series() {
    let dir = TempDir::new().unwrap();
    let quotes = write(&dir, "q.csv", &synthetic_panel());
    let out = dir.path().join("panel");
    let o = run(&[
        "panel",
        "compound",
        "--quotes",
        &quotes,
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let doc = json(&out.join("panel.json"));
    let series = &doc["summary"]["invertibility"][0];
    assert_eq!(series["instrument"], "5y 3-6%");
    assert_eq!(series["series"], serde_json::json!([1, 0, 1]));
    let csv = fs::read_to_string(out.join("invertibility.csv")).unwrap();
    let flags: Vec<&str> = csv
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap())
        .collect();
    assert_eq!(flags, ["1", "0", "1"]);
}

#[test]
fn single_date_panel_matches_single_shot() {
    let dir = TempDir::new().unwrap();
    let quotes = write(
        &dir,
        "q.csv",
        &format!("{HEADER}\n{}", rows("2005-01-07", 120.0)),
    );
    let single = dir.path().join("single");
    let panel = dir.path().join("panel");
    assert!(run(&[
        "compound",
        "--quotes",
        &quotes,
        "--out",
        single.to_str().unwrap()
    ])
    .status
    .success());
    assert!(run(&[
        "panel",
        "compound",
        "--quotes",
        &quotes,
        "--out",
        panel.to_str().unwrap()
    ])
    .status
    .success());
    let a = json(&single.join("result.json"));
    let b = json(&panel.join("panel.json"));
    assert_eq!(a["result"], b["records"][0]["result"]);
}

#[test]
fn failed_date_gives_partial_exit_code() {
    let dir = TempDir::new().unwrap();
    // the middle date has no index quote to calibrate the pool
    let text = format!(
        "{HEADER}\n{}2005-01-14,test,1,5,0.03,0.06,running,100,100,100,\n{}",
        rows("2005-01-07", 120.0),
        rows("2005-01-21", 110.0)
    );
    let quotes = write(&dir, "q.csv", &text);
    let out = dir.path().join("panel");
    let o = run(&[
        "panel",
        "compound",
        "--quotes",
        &quotes,
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let doc = json(&out.join("panel.json"));
    let status: Vec<&str> = doc["records"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["status"].as_str().unwrap())
        .collect();
    assert_eq!(status, ["ok", "failed", "ok"]);
    assert_eq!(doc["summary"]["failed"], 1);
}

#[test]
fn hard_errors_exit_with_one() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("nope.csv");
    assert_eq!(
        run(&["compound", "--quotes", missing.to_str().unwrap()])
            .status
            .code(),
        Some(1)
    );

    let bad = write(
        &dir,
        "bad.csv",
        &format!("{HEADER}\n2005-01-07,test,1,5,0.03,0.06,running,12,11,10,\n"),
    );
    let o = run(&["compound", "--quotes", &bad]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));

    let empty = write(&dir, "empty.csv", &format!("{HEADER}\n"));
    let o = run(&["compound", "--quotes", &empty]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("warning"));

    assert_eq!(run(&["compound", "--bogus"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn thread_setting_is_validated() {
    let o = bin()
        .args(["compound", "--quotes", &data("itraxx_2005-08-03.csv")])
        .env("TRANCHE_LAB_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("TRANCHE_LAB_THREADS"));
}

#[test]
fn outputs_are_byte_identical_across_runs_and_thread_counts() {
    let dir = TempDir::new().unwrap();
    let quotes = data("itraxx_gpl_2005.csv");
    let mut docs = Vec::new();
    for (i, threads) in ["1", "2", "1"].iter().enumerate() {
        let out = dir.path().join(format!("run{i}"));
        let o = bin()
            .args([
                "panel",
                "etl-strip",
                "--quotes",
                &quotes,
                "--seed",
                "7",
                "--out",
                out.to_str().unwrap(),
            ])
            .env("TRANCHE_LAB_THREADS", threads)
            .output()
            .unwrap();
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let mut files: Vec<_> = fs::read_dir(&out)
            .unwrap()
            .map(|e| e.unwrap().path())
            .collect();
        files.sort();
        docs.push(
            files
                .iter()
                .map(|f| fs::read(f).unwrap())
                .collect::<Vec<_>>(),
        );
    }
    assert!(docs[0].len() >= 3);
    assert_eq!(docs[0], docs[1]);
    assert_eq!(docs[0], docs[2]);
}

#[test]
fn implied_copula_and_etl_price_run() {
    let o = run(&[
        "implied-copula",
        "--quotes",
        &data("cdx_2006-06-06.csv"),
        "--maturity",
        "5",
        "--flat-rate",
        "0.05",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let doc: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(doc["command"], "implied-copula");
    assert_eq!(
        doc["result"]["mispricing"]["outside"],
        serde_json::json!([])
    );

    let dir = TempDir::new().unwrap();
    let out = dir.path().join("etl");
    let quotes = data("itraxx_gpl_2005.csv");
    let o = run(&[
        "etl-strip",
        "--quotes",
        &quotes,
        "--date",
        "2005-05-13",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let surface = out.join("result.json");
    let price = |maturity: &str| {
        run(&[
            "etl-price",
            "--surface",
            surface.to_str().unwrap(),
            "--attach",
            "0.04",
            "--detach",
            "0.15",
            "--maturity",
            maturity,
        ])
    };
    let o = price("5");
    assert!(o.status.success());
    let doc: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(doc["result"]["spread_bps"].as_f64().unwrap() > 0.0);
    assert_eq!(price("12").status.code(), Some(1));
}

#[test]
fn gpl_calibrate_writes_loss_surface() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("gpl");
    let o = run(&[
        "gpl-calibrate",
        "--quotes",
        &data("itraxx_gpl_2005.csv"),
        "--date",
        "2005-05-13",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let doc = json(&out.join("result.json"));
    assert_eq!(
        doc["result"]["calibration"]["report"]["outside"],
        serde_json::json!([])
    );
    let csv = fs::read_to_string(out.join("loss_distribution.csv")).unwrap();
    assert!(csv.starts_with("time,loss,probability"));
}
