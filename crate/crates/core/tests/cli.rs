use sg_thermal::cli::run;
use sg_thermal::covariance::thermal_covariance_quadrature;
use sg_thermal::params::{EuclideanPoint, ThermalParams};
use sg_thermal::record::ResultRecord;

fn out_dir() -> (tempfile::TempDir, String) {
    let d = tempfile::tempdir().unwrap();
    let s = d.path().to_str().unwrap().to_string();
    (d, s)
}

#[test]
fn cov_eval_matches_quadrature() {
    let (d, out) = out_dir();
    let code = run(["sgt", "cov", "eval", "--beta", "2", "--m", "1", "--u", "0.7", "--x", "1.3", "-q", "--output-dir", &out]);
    assert_eq!(code, 0);
    let rec = ResultRecord::read_json(&d.path().join("cov-eval.json")).unwrap();
    let want = thermal_covariance_quadrature(&ThermalParams::new(2.0, 1.0), EuclideanPoint::new(0.7, 1.3)).unwrap();
    for key in ["quadrature", "matsubara", "images"] {
        let v = rec.values[key].as_f64().unwrap();
        assert!((v - want).abs() < 1e-9 * want, "{key}: {v} vs {want}");
    }
}

#[test]
fn exit_codes() {
    let (_d, out) = out_dir();
    assert_eq!(run(["sgt", "cov", "eval", "--bogus"]), 1);
    assert_eq!(run(["sgt"]), 1);
    assert_eq!(run(["sgt", "--version"]), 0);
    assert_eq!(run(["sgt", "cov", "eval", "--u", "0.5", "--x", "1", "--samples", "0", "--output-dir", &out]), 1);
    // u outside [0, β] is a domain error
    assert_eq!(run(["sgt", "cov", "eval", "--u", "3", "--x", "1", "-q", "--output-dir", &out]), 2);
}

#[test]
fn csv_has_documented_header() {
    let (d, out) = out_dir();
    let code = run(["sgt", "cov", "table", "--u", "0.3", "--points", "4", "--format", "csv", "-q", "--output-dir", &out]);
    assert_eq!(code, 0);
    let text = std::fs::read_to_string(d.path().join("cov-table.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("u,x,quadrature,matsubara,vacuum,decay_bound"));
    assert_eq!(lines.count(), 4);
}

#[test]
fn config_file_is_overridden_by_flags() {
    let (d, out) = out_dir();
    let cfg = d.path().join("run.toml");
    std::fs::write(&cfg, "[params]\nbeta = 3.0\nmass = 5.0\n").unwrap();
    let code = run(["sgt", "cov", "eval", "--config", cfg.to_str().unwrap(), "--m", "1", "--u", "0.2", "--x", "0.4", "-q", "--output-dir", &out]);
    assert_eq!(code, 0);
    let rec = ResultRecord::read_json(&d.path().join("cov-eval.json")).unwrap();
    assert_eq!(rec.params["params"]["beta"], 3.0);
    assert_eq!(rec.params["params"]["mass"], 1.0);
    std::fs::write(&cfg, "[params]\nbta = 3.0\n").unwrap();
    assert_eq!(run(["sgt", "cov", "eval", "--config", cfg.to_str().unwrap(), "--u", "0.2", "--x", "0.4", "-q"]), 1);
}
