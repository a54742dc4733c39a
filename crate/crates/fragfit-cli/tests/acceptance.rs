//! Acceptance criterion 11: every stochastic command reproduces
//! byte-identical output files when rerun with an identical configuration
//! and seed.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_fragfit")
}

fn run_ok(args: &[&str]) {
    let out = Command::new(bin())
        .args(args)
        .output()
        .expect("binary runs");
    assert!(
        out.status.success(),
        "command {:?} failed: {}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
}

fn dir_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut map = BTreeMap::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let entry = entry.unwrap();
        map.insert(
            entry.file_name().to_string_lossy().to_string(),
            std::fs::read(entry.path()).unwrap(),
        );
    }
    map
}

#[test]
fn criterion_11_byte_identical_reruns() {
    let tmp = tempfile::tempdir().unwrap();
    // Input data via the simulate command itself (also under test).
    let params = tmp.path().join("params.json");
    std::fs::write(&params, r#"{"tau": [-1.6, -1.0, -0.1, 0.6], "beta": 1.5}"#).unwrap();
    let data_dir = tmp.path().join("data");
    run_ok(&[
        "simulate",
        "--model",
        "cum",
        "--params",
        params.to_str().unwrap(),
        "--grid",
        "0.05:2.0:150",
        "--replicate",
        "2",
        "--seed",
        "21",
        "--out",
        data_dir.to_str().unwrap(),
    ]);
    let input = data_dir.join("simulated.csv");
    let input = input.to_str().unwrap();

    let cfg = tmp.path().join("analytic.json");
    std::fs::write(
        &cfg,
        r#"{"psdm": {"ln_a0": 0.2, "a1": 1.5, "beta_d": 0.35},
            "capacity": [{"ln_sc": -0.6, "beta_c": 0.4}, {"ln_sc": 0.4, "beta_c": 0.4}],
            "rho": 0.9}"#,
    )
    .unwrap();

    let stochastic_commands: Vec<Vec<String>> = vec![
        vec![
            "fit",
            "--input",
            input,
            "--models",
            "cum,seq+cs",
            "--mode",
            "bayes",
            "--seed",
            "5",
            "--chains",
            "2",
            "--warmup",
            "120",
            "--iters",
            "100",
        ],
        vec![
            "compare", "--input", input, "--models", "cum,seq", "--seed", "6", "--chains", "2",
            "--warmup", "120", "--iters", "100",
        ],
        vec!["diagnose", "--input", input, "--seed", "7"],
        vec![
            "curves",
            "--input",
            input,
            "--model",
            "cum",
            "--mode",
            "bayes",
            "--seed",
            "8",
            "--chains",
            "2",
            "--warmup",
            "120",
            "--iters",
            "100",
            "--grid",
            "0.1:1.8:12",
        ],
        vec![
            "simulate",
            "--model",
            "cum",
            "--params",
            params.to_str().unwrap(),
            "--grid",
            "0.1:1.5:50",
            "--seed",
            "9",
        ],
        vec![
            "analytic",
            "--config",
            cfg.to_str().unwrap(),
            "--grid",
            "0.1:1.5:50",
            "--seed",
            "10",
        ],
    ]
    .into_iter()
    .map(|v| v.into_iter().map(|s| s.to_string()).collect())
    .collect();

    let mut all_identical = true;
    for (idx, cmd) in stochastic_commands.iter().enumerate() {
        let out_a = tmp.path().join(format!("a{idx}"));
        let out_b = tmp.path().join(format!("b{idx}"));
        for out in [&out_a, &out_b] {
            let mut args: Vec<&str> = cmd.iter().map(|s| s.as_str()).collect();
            args.push("--out");
            args.push(out.to_str().unwrap());
            run_ok(&args);
        }
        let a = dir_bytes(&out_a);
        let b = dir_bytes(&out_b);
        if a != b {
            all_identical = false;
            eprintln!("command {:?} produced differing outputs", cmd);
        }
    }
    println!(
        "ACCEPTANCE 11: {} - all stochastic commands reproduce byte-identical outputs",
        if all_identical { "PASS" } else { "FAIL" }
    );
    assert!(all_identical);
}
