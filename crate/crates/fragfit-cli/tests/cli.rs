//! End-to-end CLI tests: plumbing, exit codes and file schemas.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_fragfit")
}

fn run(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_demo_data(dir: &Path, n: usize) -> PathBuf {
    // Deterministic synthetic dataset from a latent monotone rule spread over
    // categories; enough structure for the fitters to converge.
    let mut text = String::from("im,ds\n");
    for i in 0..n {
        let im = 0.05 + 1.95 * (i as f64 / (n - 1) as f64);
        let x = im.ln();
        let score = 1.4 * x + ((i * 2654435761) % 1000) as f64 / 1000.0 * 2.4 - 1.2;
        let ds = if score < -1.5 {
            1
        } else if score < -0.8 {
            2
        } else if score < 0.0 {
            3
        } else if score < 0.7 {
            4
        } else {
            5
        };
        text.push_str(&format!("{im},{ds}\n"));
    }
    let path = dir.join("demo.csv");
    std::fs::write(&path, text).unwrap();
    path
}

fn read_csv_body(path: &Path) -> Vec<String> {
    let text = std::fs::read_to_string(path).unwrap();
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .map(|s| s.to_string())
        .collect()
}

#[test]
fn fit_mle_writes_reports_and_prints_table() {
    let tmp = tempfile::tempdir().unwrap();
    let data = write_demo_data(tmp.path(), 300);
    let out = tmp.path().join("out");
    let r = run(&[
        "fit",
        "--input",
        data.to_str().unwrap(),
        "--models",
        "cum,seq+cs",
        "--mode",
        "mle",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let stdout = String::from_utf8_lossy(&r.stdout);
    assert!(stdout.contains("estimate"));
    assert!(stdout.contains("std.error"));
    assert!(stdout.contains("z_value"));
    for f in ["fit_cum.json", "fit_seq-cs.json", "summary.json"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("fit_cum.json")).unwrap()).unwrap();
    assert_eq!(report["mode"], "mle");
    assert!(report["converged"].as_bool().unwrap());
    assert_eq!(report["params"].as_array().unwrap().len(), 5);
    assert!(report["engine_version"].is_string());
    assert!(report["config_hash"].is_string());
    assert!(report["aic"].is_f64() && report["bic"].is_f64());
}

#[test]
fn fit_missing_input_exits_2_with_path() {
    let r = run(&["fit", "--input", "/nope/missing.csv", "--models", "cum"]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("/nope/missing.csv"));
}

#[test]
fn unknown_model_exits_2_and_lists_catalog() {
    let tmp = tempfile::tempdir().unwrap();
    let data = write_demo_data(tmp.path(), 60);
    let r = run(&[
        "fit",
        "--input",
        data.to_str().unwrap(),
        "--models",
        "weibull",
    ]);
    assert_eq!(r.status.code(), Some(2));
    let err = String::from_utf8_lossy(&r.stderr);
    for name in ["cum", "seq+vh+cs", "mlogit"] {
        assert!(err.contains(name), "missing {name} in: {err}");
    }
}

#[test]
fn bayes_mode_requires_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let data = write_demo_data(tmp.path(), 60);
    let r = run(&[
        "fit",
        "--input",
        data.to_str().unwrap(),
        "--models",
        "cum",
        "--mode",
        "bayes",
    ]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("seed"));
}

#[test]
fn fit_bayes_all_writes_eleven_reports_and_draws() {
    let tmp = tempfile::tempdir().unwrap();
    let data = write_demo_data(tmp.path(), 150);
    let out = tmp.path().join("out");
    let r = run(&[
        "fit",
        "--input",
        data.to_str().unwrap(),
        "--models",
        "all",
        "--mode",
        "bayes",
        "--seed",
        "7",
        "--chains",
        "2",
        "--warmup",
        "150",
        "--iters",
        "120",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let reports = std::fs::read_dir(&out)
        .unwrap()
        .filter(|e| {
            let name = e
                .as_ref()
                .unwrap()
                .file_name()
                .to_string_lossy()
                .to_string();
            name.starts_with("fit_") && name.ends_with(".json")
        })
        .count();
    assert_eq!(reports, 11);
    let draws = std::fs::read_dir(&out)
        .unwrap()
        .filter(|e| {
            let name = e
                .as_ref()
                .unwrap()
                .file_name()
                .to_string_lossy()
                .to_string();
            name.starts_with("draws_") && name.ends_with(".csv")
        })
        .count();
    assert_eq!(draws, 11);
    // Draws CSV schema.
    let body = read_csv_body(&out.join("draws_cum.csv"));
    assert_eq!(body[0], "chain,iter,param,value");
    assert!(body[1].starts_with("1,1,tau_1,"));
}

#[test]
fn compare_needs_two_models_and_ranks() {
    let tmp = tempfile::tempdir().unwrap();
    let data = write_demo_data(tmp.path(), 150);
    let out = tmp.path().join("out");
    let r = run(&[
        "compare",
        "--input",
        data.to_str().unwrap(),
        "--models",
        "cum",
        "--seed",
        "3",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(r.status.code(), Some(2));

    let r = run(&[
        "compare",
        "--input",
        data.to_str().unwrap(),
        "--models",
        "cum,seq,cum",
        "--seed",
        "3",
        "--chains",
        "2",
        "--warmup",
        "150",
        "--iters",
        "150",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let body = read_csv_body(&out.join("comparison.csv"));
    assert_eq!(body[0], "model,n_params,elpd_loo,elpd_diff,se_diff,rank");
    assert_eq!(body.len(), 4);
    // The duplicated model appears twice with identical elpd (same seed) and
    // a zero difference between the copies.
    let cum_rows: Vec<&String> = body[1..].iter().filter(|l| l.starts_with("cum,")).collect();
    assert_eq!(cum_rows.len(), 2);
    let elpds: Vec<&str> = cum_rows
        .iter()
        .map(|l| l.split(',').nth(2).unwrap())
        .collect();
    assert_eq!(elpds[0], elpds[1]);
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("comparison.json")).unwrap())
            .unwrap();
    assert_eq!(json["rows"].as_array().unwrap().len(), 3);
}

#[test]
fn diagnose_writes_figure_data_and_rejects_non_cumulative() {
    let tmp = tempfile::tempdir().unwrap();
    let data = write_demo_data(tmp.path(), 400);
    let out = tmp.path().join("out");
    let r = run(&[
        "diagnose",
        "--input",
        data.to_str().unwrap(),
        "--seed",
        "11",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    for f in [
        "residuals.csv",
        "qq.csv",
        "trend.csv",
        "dcheck.csv",
        "diagnose_summary.json",
    ] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let residuals = read_csv_body(&out.join("residuals.csv"));
    assert_eq!(residuals[0], "index,ln_im,ds,residual,replicate");
    assert_eq!(residuals.len(), 401);
    let dcheck = read_csv_body(&out.join("dcheck.csv"));
    assert_eq!(dcheck[0], "ln_im,D");
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("diagnose_summary.json")).unwrap())
            .unwrap();
    assert!(summary["p_value"].is_f64());
    assert!(summary["var_d"].is_f64());

    let r = run(&[
        "diagnose",
        "--input",
        data.to_str().unwrap(),
        "--model",
        "seq",
        "--seed",
        "11",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("cumulative"));
}

#[test]
fn curves_exports_point_grids_bands_and_facets() {
    let tmp = tempfile::tempdir().unwrap();
    let data = write_demo_data(tmp.path(), 300);
    let out_mle = tmp.path().join("mle");
    let r = run(&[
        "curves",
        "--input",
        data.to_str().unwrap(),
        "--model",
        "cum",
        "--mode",
        "mle",
        "--grid",
        "0.1:2.0:20",
        "--out",
        out_mle.to_str().unwrap(),
    ]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let exc = read_csv_body(&out_mle.join("curves_exceedance.csv"));
    assert_eq!(exc[0], "im,k,exceedance_prob");
    assert_eq!(exc.len(), 1 + 20 * 4);
    let cat = read_csv_body(&out_mle.join("curves_category.csv"));
    assert_eq!(cat.len(), 1 + 20 * 5);
    assert!(!out_mle.join("bands_exceedance.csv").exists());

    // Facet export at the six standard intensities.
    let out_facet = tmp.path().join("facet");
    let r = run(&[
        "curves",
        "--input",
        data.to_str().unwrap(),
        "--model",
        "cum",
        "--mode",
        "bayes",
        "--seed",
        "5",
        "--chains",
        "2",
        "--warmup",
        "150",
        "--iters",
        "150",
        "--ims",
        "0.2,0.4,0.6,0.8,1.0,1.2",
        "--out",
        out_facet.to_str().unwrap(),
    ]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let bands = read_csv_body(&out_facet.join("bands_category.csv"));
    assert_eq!(bands[0], "im,k,stat,value");
    // 6 intensities x 5 categories x 3 stats.
    assert_eq!(bands.len(), 1 + 6 * 5 * 3);
    for row in &bands[1..] {
        let stat = row.split(',').nth(2).unwrap();
        assert!(["median", "lower", "upper"].contains(&stat));
    }

    // geq convention adds the k = 1 row pinned at 1.
    let out_geq = tmp.path().join("geq");
    let r = run(&[
        "curves",
        "--input",
        data.to_str().unwrap(),
        "--model",
        "cum",
        "--mode",
        "mle",
        "--grid",
        "0.1:2.0:5",
        "--convention",
        "geq",
        "--out",
        out_geq.to_str().unwrap(),
    ]);
    assert!(r.status.success());
    let exc = read_csv_body(&out_geq.join("curves_exceedance.csv"));
    assert_eq!(exc.len(), 1 + 5 * 5);
    let k1: Vec<&String> = exc[1..]
        .iter()
        .filter(|l| l.split(',').nth(1).unwrap() == "1")
        .collect();
    assert_eq!(k1.len(), 5);
    assert!(k1.iter().all(|l| l.ends_with(",1")));

    // Empty grid is a usage error.
    let r = run(&[
        "curves",
        "--input",
        data.to_str().unwrap(),
        "--model",
        "cum",
        "--mode",
        "mle",
        "--out",
        out_geq.to_str().unwrap(),
    ]);
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn simulate_and_analytic_round_trip_through_load() {
    let tmp = tempfile::tempdir().unwrap();
    let params = tmp.path().join("params.json");
    std::fs::write(&params, r#"{"tau": [-1.6, -1.0, -0.1, 0.6], "beta": 1.5}"#).unwrap();
    let out = tmp.path().join("sim");
    let r = run(&[
        "simulate",
        "--model",
        "cum",
        "--params",
        params.to_str().unwrap(),
        "--grid",
        "0.05:2.0:100",
        "--replicate",
        "3",
        "--seed",
        "9",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    // The engine reads its own output (comment stamp included).
    let ds = fragfit_core::Dataset::load_csv(out.join("simulated.csv"), 5).unwrap();
    assert_eq!(ds.n(), 300);

    let cfg = tmp.path().join("analytic.json");
    std::fs::write(
        &cfg,
        r#"{
          "psdm": {"ln_a0": 0.2, "a1": 1.5, "beta_d": 0.35},
          "capacity": [
            {"ln_sc": -1.0, "beta_c": 0.5},
            {"ln_sc": -0.3, "beta_c": 0.5},
            {"ln_sc": 0.4, "beta_c": 0.5},
            {"ln_sc": 1.0, "beta_c": 0.5}
          ],
          "rho": 1.0
        }"#,
    )
    .unwrap();
    let out2 = tmp.path().join("analytic");
    let r = run(&[
        "analytic",
        "--config",
        cfg.to_str().unwrap(),
        "--grid",
        "0.05:2.0:200",
        "--seed",
        "13",
        "--out",
        out2.to_str().unwrap(),
    ]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let closed = read_csv_body(&out2.join("closed_form.csv"));
    assert_eq!(closed[0], "im,k,exceedance_prob");
    assert_eq!(closed.len(), 1 + 200 * 4);
    let sampled = fragfit_core::Dataset::load_csv(out2.join("sampled.csv"), 5).unwrap();
    assert_eq!(sampled.n(), 200);
}

#[test]
fn outputs_embed_version_and_config_hash() {
    let tmp = tempfile::tempdir().unwrap();
    let data = write_demo_data(tmp.path(), 120);
    let out = tmp.path().join("out");
    let r = run(&[
        "curves",
        "--input",
        data.to_str().unwrap(),
        "--model",
        "cum",
        "--mode",
        "mle",
        "--grid",
        "0.1:1.0:4",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(r.status.success());
    let first = std::fs::read_to_string(out.join("curves_exceedance.csv")).unwrap();
    let stamp = first.lines().next().unwrap();
    assert!(stamp.starts_with("# fragfit v"));
    assert!(stamp.contains("config "));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("curves.json")).unwrap()).unwrap();
    let hash_in_stamp = stamp.split_whitespace().last().unwrap();
    assert_eq!(json["config_hash"].as_str().unwrap(), hash_in_stamp);
}
