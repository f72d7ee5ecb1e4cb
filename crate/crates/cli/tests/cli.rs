use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use bdist::pmf::{compose, pmf_default};
use bdist::{ChainParams, ParentDist};
use bdist_cli::{ingest_csv, CliError};

fn bdist(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bdist"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(args: &[&str]) -> String {
    let out = bdist(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn tsv_column(text: &str, name: &str) -> Vec<String> {
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split('\t').collect();
    let j = header.iter().position(|h| *h == name).unwrap();
    lines.map(|l| l.split('\t').nth(j).unwrap().to_owned()).collect()
}

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

#[test]
fn fixed_parent_pmf_has_n_plus_one_rows() {
    let out = stdout(&["pmf", "--parent", "fixed", "--n", "20", "--r1", "0.8", "--r2", "0.8"]);
    let p: Vec<f64> = tsv_column(&out, "p").iter().map(|v| v.parse().unwrap()).collect();
    assert_eq!(p.len(), 21);
    let mean: f64 = p.iter().enumerate().map(|(i, q)| i as f64 * q).sum();
    let var: f64 = p.iter().enumerate().map(|(i, q)| (i as f64 - mean).powi(2) * q).sum();
    assert!((mean - 10.0).abs() < 1e-12);
    // Narrower than Bin(20, 1/2).
    assert!(var < 5.0, "{var}");
}

#[test]
fn table_n2_matches_the_small_n_listing() {
    let out = stdout(&["table", "--N", "2"]);
    assert_eq!(
        out,
        "p0 = (r1 + r2)^-1 {(1-r1)*r2}\np1 = (r1 + r2)^-1 {2*r1*r2}\np2 = (r1 + r2)^-1 {r1*(1-r2)}\n"
    );
}

#[test]
fn seeded_sampling_is_byte_identical() {
    let args = [
        "sample", "--seed", "7", "--draws", "10", "--parent", "poisson", "--mu0", "10", "--r1", "0.5", "--r2", "0.5",
    ];
    let a = bdist(&args);
    let b = bdist(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(tsv_column(&String::from_utf8(a.stdout).unwrap(), "count").len(), 10);
    let c = stdout(&[
        "sample", "--seed", "8", "--draws", "10", "--parent", "poisson", "--mu0", "10", "--r1", "0.5", "--r2", "0.5",
    ]);
    assert_ne!(c, String::from_utf8(b.stdout).unwrap());
}

#[test]
fn pmf_output_round_trips_as_a_custom_parent() {
    let dir = tempfile::tempdir().unwrap();
    let inner = dir.path().join("inner.tsv");
    let text = stdout(&["pmf", "--parent", "poisson", "--mu0", "6", "--r1", "0.3", "--r2", "0.6"]);
    std::fs::write(&inner, &text).unwrap();
    let outer = stdout(&[
        "pmf",
        "--parent",
        "custom",
        "--parent-file",
        inner.to_str().unwrap(),
        "--r1",
        "0.7",
        "--r2",
        "0.4",
    ]);
    let got: Vec<f64> = tsv_column(&outer, "p").iter().map(|v| v.parse().unwrap()).collect();
    assert!((got.iter().sum::<f64>() - 1.0).abs() < 1e-10);

    let inner_pmf = pmf_default(
        &bdist::BDist::new(ChainParams::new(0.3, 0.6).unwrap(), ParentDist::poisson(6.0).unwrap()).unwrap(),
    )
    .unwrap();
    let want = pmf_default(&compose(ChainParams::new(0.7, 0.4).unwrap(), &inner_pmf).unwrap()).unwrap();
    assert_eq!(got.len(), want.len());
    for (g, w) in got.iter().zip(&want.probs) {
        assert!((g - w).abs() < 1e-14, "{g} {w}");
    }
}

#[test]
fn figure_series_are_normalized() {
    for which in ["1", "3"] {
        let out = stdout(&["figure", "--which", which]);
        let series = tsv_column(&out, "series");
        let p: Vec<f64> = tsv_column(&out, "p").iter().map(|v| v.parse().unwrap()).collect();
        for name in ["thinning", "overdispersed", "underdispersed"] {
            let total: f64 = series.iter().zip(&p).filter(|(s, _)| *s == name).map(|(_, q)| q).sum();
            assert!((total - 1.0).abs() < 1e-8, "figure {which} {name}: {total}");
        }
        if which == "1" {
            assert_eq!(p.len(), 63);
        }
    }
}

#[test]
fn figure_two_covers_both_families() {
    let out = stdout(&["figure", "--which", "2", "--points", "3"]);
    let family = tsv_column(&out, "family");
    let mean = tsv_column(&out, "mean");
    assert_eq!(family.len(), 6);
    assert_eq!(mean[0], "0.5");
    assert_eq!(mean[2], "20");
    assert_eq!(family.iter().filter(|f| *f == "com-poisson").count(), 3);
}

#[test]
fn dispersion_json_fields() {
    let out = stdout(&["dispersion", "--mean", "1.456", "--format", "json"]);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    let rows = v.as_array().unwrap();
    assert_eq!(rows.len(), 2);
    for key in ["family", "mean", "min_cd", "max_cd", "min_at", "max_at"] {
        assert!(rows[0].get(key).is_some(), "{key}");
    }
    assert_eq!(rows[1]["family"], "com-poisson");
}

#[test]
fn fit_on_the_synthetic_fixture() {
    let data = root().join("fixtures/synthetic.csv");
    let out = stdout(&[
        "fit",
        "--data",
        data.to_str().unwrap(),
        "--response",
        "count",
        "--covariates",
        "dose,treated",
        "--starts",
        "1",
    ]);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    for key in [
        "family",
        "n_obs",
        "neg_loglik",
        "aic",
        "free_params",
        "converged",
        "iterations",
        "grad_norm",
        "floored",
        "params",
        "covariance",
        "warnings",
    ] {
        assert!(v.get(key).is_some(), "{key}");
    }
    assert_eq!(v["n_obs"], 400);
    assert_eq!(v["converged"], true);
    let names: Vec<&str> = v["params"].as_array().unwrap().iter().map(|p| p["name"].as_str().unwrap()).collect();
    assert_eq!(names, ["alpha", "dose", "treated", "r1", "r2"]);
    let dose = &v["params"][1];
    assert!((dose["estimate"].as_f64().unwrap() - 0.3).abs() < 3.0 * dose["se"].as_f64().unwrap());

    let tsv = stdout(&[
        "fit",
        "--data",
        data.to_str().unwrap(),
        "--response",
        "count",
        "--family",
        "poisson",
        "--format",
        "tsv",
    ]);
    assert!(tsv.starts_with("name\testimate\tse\tfixed\nalpha\t"));
    assert!(tsv.contains("r1\t1\t0\ttrue"));
}

#[test]
fn fix_r1_without_value_pins_one() {
    let data = root().join("fixtures/synthetic.csv");
    let out = stdout(&[
        "fit", "--data", data.to_str().unwrap(), "--response", "count", "--fix-r1", "--starts", "1",
    ]);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    let r1 = &v["params"][1];
    assert_eq!(r1["name"], "r1");
    assert_eq!(r1["estimate"], 1.0);
    assert_eq!(r1["fixed"], true);
    assert_eq!(v["free_params"], 2);
}

#[test]
fn exit_codes() {
    assert_eq!(bdist(&["nonsense"]).status.code(), Some(1));
    assert_eq!(bdist(&["fit", "--data", "x.csv"]).status.code(), Some(1));
    assert_eq!(bdist(&["pmf", "--r1", "0.5", "--r2", "0.5", "--parent", "fixed"]).status.code(), Some(1));
    assert_eq!(bdist(&["fit", "--data", "/no/such/file.csv", "--response", "y"]).status.code(), Some(2));
    let huge = bdist(&["pmf", "--r1", "0.5", "--r2", "0.5", "--mu0", "1e9"]);
    assert_eq!(huge.status.code(), Some(3));
    assert_eq!(bdist(&["--help"]).status.code(), Some(0));
}

fn write_csv(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("d.csv");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn ingest_reports_line_numbers_and_columns() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_csv(dir.path(), "y,a\n1,0.5\n2,oops\n");
    let e = ingest_csv(&p, "y", &["a".into()]).unwrap_err();
    assert!(matches!(e, CliError::Data(_)));
    assert!(e.to_string().contains(":3:"), "{e}");

    let e = ingest_csv(&p, "y", &["b".into()]).unwrap_err();
    assert!(e.to_string().contains("missing column `b`"), "{e}");

    let p = write_csv(dir.path(), "y,a\n1,0.5\n-2,1\n");
    let e = ingest_csv(&p, "y", &["a".into()]).unwrap_err();
    assert!(e.to_string().contains("negative response"), "{e}");
    assert_eq!(e.exit_code(), 2);

    let p = write_csv(dir.path(), "y,a\n1.5,0.5\n");
    assert!(ingest_csv(&p, "y", &[]).is_err());
}

#[test]
fn single_row_without_covariates() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_csv(dir.path(), "y\n4\n");
    let d = ingest_csv(&p, "y", &[]).unwrap();
    assert_eq!(d.len(), 1);
    assert_eq!(d.n_covariates(), 0);
}

#[test]
fn covariates_keep_the_requested_order() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_csv(dir.path(), "a,y,b\n1,3,2\n4,0,5\n");
    let d = ingest_csv(&p, "y", &["b".into(), "a".into()]).unwrap();
    assert_eq!(d.y(), [3, 0]);
    assert_eq!(d.x()[1], vec![5.0, 4.0]);
}

#[test]
fn affairs_summary_when_fetched() {
    let path = root().join("data/affairs.csv");
    if !path.exists() {
        eprintln!("skipped: data/affairs.csv not fetched (scripts/fetch_datasets.py)");
        return;
    }
    let d = ingest_csv(&path, "affairs", &[]).unwrap();
    assert_eq!(d.len(), 601);
    assert!((d.mean_y() - 1.456).abs() < 5e-4);
    assert!((d.sd_y() - 3.299).abs() < 5e-4);
}
