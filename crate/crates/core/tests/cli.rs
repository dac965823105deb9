use std::fs;
use std::path::Path;

use bootdiag::cli::*;
use bootdiag::diagnostics::{default_alpha_grid, DiagnosticConfig};
use bootdiag::discrepancy::DiscrepancyMeasure;
use bootdiag::probkernel::{sample_std_normal, SeedSpec};

fn run_in(dir: &Path, args: &[&str]) -> i32 {
    let mut argv = vec!["bootdiag".to_string()];
    argv.extend(args.iter().map(|s| s.to_string()));
    argv.push("--out".into());
    argv.push(dir.display().to_string());
    run(argv)
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn every_command_runs_and_writes_a_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let pool = tmp.path().join("pool.csv");
    let draws = sample_std_normal(&SeedSpec::new(1), 2000);
    let text: String = std::iter::once("draw".to_string())
        .chain(draws.iter().map(|d| d.to_string()))
        .collect::<Vec<_>>()
        .join("\n");
    fs::write(&pool, text).unwrap();
    let pool = pool.display().to_string();
    let cases: Vec<(&str, Vec<&str>, &str)> = vec![
        ("simulate", vec!["simulate", "--set", "scenario=iv", "--set", "R=20", "--n", "200"], "simulate.csv"),
        ("diagnose", vec!["diagnose", "--n", "400", "--m", "50", "--set", "K=50"], "profile.csv"),
        ("size-power", vec!["size-power", "--set", "scenario=ar1", "--set", "R=20", "--n", "200"], "size_power.csv"),
        (
            "fan-chart",
            vec!["fan-chart", "--set", "scenario=iv", "--set", "plan.M=100", "--set", "plan.B=1000", "--n", "200"],
            "fan_chart.csv",
        ),
        ("posttest", vec!["posttest", "--set", "scenario=iv", "--set", "R=50", "--n", "200"], "posttest.csv"),
        ("external", vec!["external", "--input", &pool, "--set", "K=100"], "external_tests.csv"),
        (
            "build-tables",
            vec!["build-tables", "--measure", "cvm", "--set", "diagnostic.table_m_ref=1000", "--set", "diagnostic.table_reps=10000"],
            "",
        ),
    ];
    for (name, args, file) in cases {
        let dir = tmp.path().join(name);
        let mut args = args.clone();
        args.extend(["--seed", "42", "--workers", "2"]);
        assert_eq!(run_in(&dir, &args), 0, "{name}");
        let m = manifest(&dir);
        assert_eq!(m["master_seed"], 42);
        assert_eq!(m["workers"], 2);
        assert_eq!(m["command"], name);
        for out in m["outputs"].as_array().unwrap() {
            let bytes = fs::read(dir.join(out["file"].as_str().unwrap())).unwrap();
            assert_eq!(out["sha256"].as_str().unwrap(), sha256_hex(&bytes));
        }
        if !file.is_empty() {
            assert!(dir.join(file).exists(), "{name}: {file}");
        }
    }
}

#[test]
fn outputs_do_not_depend_on_workers() {
    let tmp = tempfile::tempdir().unwrap();
    let mut seen: Option<Vec<u8>> = None;
    for (i, workers) in ["1", "4", "16", "4"].iter().enumerate() {
        let dir = tmp.path().join(format!("run{i}"));
        let args = ["size-power", "--set", "scenario=heavytail", "--set", "R=40", "--n", "200,300", "--workers", workers];
        assert_eq!(run_in(&dir, &args), 0);
        let bytes = fs::read(dir.join("size_power.csv")).unwrap();
        if let Some(prev) = &seen {
            assert_eq!(prev, &bytes, "workers = {workers}");
        }
        seen = Some(bytes);
    }
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(run_in(tmp.path(), &["diagnose", "--set", "bogus=1"]), 2);
    assert_eq!(run_in(tmp.path(), &["diagnose", "--set", "level_alpha=0"]), 2);
    assert_eq!(run_in(tmp.path(), &["nonsense"]), 2);
    let missing = tmp.path().join("missing.csv").display().to_string();
    assert_eq!(run_in(tmp.path(), &["external", "--input", &missing]), 4);
    let flat = tmp.path().join("flat.csv");
    fs::write(&flat, "1\n".repeat(100)).unwrap();
    let flat = flat.display().to_string();
    assert_eq!(run_in(tmp.path(), &["external", "--input", &flat, "--m", "10", "--set", "K=10"]), 3);
    let blocked = tmp.path().join("blocked");
    fs::write(&blocked, "file").unwrap();
    assert_eq!(run(["bootdiag", "simulate", "--set", "R=2", "--out", &blocked.display().to_string()]), 4);
}

#[test]
fn config_file_and_flag_precedence() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.cfg");
    fs::write(&cfg, "# demo\ncommand: diagnose\nscenario: boundary\nn: 400\nm: 50\nseed: 42\n").unwrap();
    let dir = tmp.path().join("out");
    assert_eq!(run_in(&dir, &["--config", &cfg.display().to_string(), "--m", "30"]), 0);
    let m = manifest(&dir);
    assert_eq!(m["config"]["diagnostic.m"], "30");
    assert_eq!(m["overridden_by_flags"][0], "diagnostic.m");
    let csv = fs::read_to_string(dir.join("diagnose.csv")).unwrap();
    assert!(csv.lines().nth(1).unwrap().starts_with("0,30,"));

    let c = parse_config(Some("command: diagnose\nscenario: boundary\nn: 400\nm: 50\nseed: 42\n"), &[]).unwrap();
    assert_eq!(c.diagnostic.measure, DiscrepancyMeasure::Ks);
    assert!(parse_config(Some("command = diagnose\nm = 5\nm = 6"), &[]).is_err());
}

#[test]
fn same_config_twice_gives_same_hashes() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let args = ["posttest", "--set", "scenario=ar1", "--set", "R=40", "--n", "200"];
    assert_eq!(run_in(&a, &args), 0);
    assert_eq!(run_in(&b, &args), 0);
    assert_eq!(manifest(&a)["outputs"], manifest(&b)["outputs"]);
}

#[test]
fn empty_output_has_header() {
    let tmp = tempfile::tempdir().unwrap();
    let mut config = parse_config(Some("command = size-power"), &[]).unwrap();
    config.out = tmp.path().to_path_buf();
    let header = bootdiag::experiments::size_power_csv(&[], &config.plan.alphas);
    let m = emit_results(&[("size_power.csv".into(), header.clone())], &config, 0.0).unwrap();
    let text = fs::read_to_string(tmp.path().join("size_power.csv")).unwrap();
    assert_eq!(text, header);
    assert_eq!(text.lines().count(), 1);
    assert_eq!(m.outputs[0].sha256, sha256_hex(header.as_bytes()));
}

#[test]
fn pool_parsing() {
    let pool = ExternalDrawPool::parse_csv("p", "value\n1.5\n-2\n\n3e-1\n").unwrap();
    assert_eq!(pool.draws, vec![1.5, -2.0, 0.3]);
    let err = ExternalDrawPool::parse_csv("p", "1\n2\nNaN\n").unwrap_err();
    assert!(err.to_string().contains("line 3"), "{err}");
    let err = ExternalDrawPool::parse_csv("p", "1\nabc\n").unwrap_err();
    assert!(err.to_string().contains("line 2"), "{err}");
    assert!(ExternalDrawPool::parse_csv("p", "header\n").is_err());
    assert!(ExternalDrawPool::new("p", vec![f64::INFINITY]).is_err());
}

#[test]
fn disjoint_blocks_use_each_draw_once() {
    let draws = sample_std_normal(&SeedSpec::new(4), 200);
    let pool = ExternalDrawPool::new("n", draws).unwrap();
    let config = DiagnosticConfig::new(20, DiscrepancyMeasure::Ks);
    let alphas = default_alpha_grid();
    let r = run_external(&pool, 20, 10, &config, &SeedSpec::new(1), false, &alphas).unwrap();
    let mut used: Vec<usize> = r.blocks.concat();
    used.sort_unstable();
    assert_eq!(used, (0..200).collect::<Vec<_>>());
    assert_eq!(r.outcomes.len(), 10);
    assert!(run_external(&pool, 21, 10, &config, &SeedSpec::new(1), false, &alphas).is_err());
    let with = run_external(&pool, 21, 10, &config, &SeedSpec::new(1), true, &alphas).unwrap();
    assert_eq!(with.blocks.len(), 10);
    assert!(with.blocks.iter().all(|b| b.len() == 21 && b.iter().all(|&i| i < 200)));
}

#[test]
fn normal_pool_is_not_rejected() {
    let pool = ExternalDrawPool::new("n", sample_std_normal(&SeedSpec::new(5), 100_000)).unwrap();
    let config = DiagnosticConfig::new(20, DiscrepancyMeasure::Ks);
    let r = run_external(&pool, 20, 500, &config, &SeedSpec::new(6), false, &default_alpha_grid()).unwrap();
    let pi = r.profile.at(0.05);
    assert!((pi - 0.05).abs() <= 0.03, "{pi}");
}
