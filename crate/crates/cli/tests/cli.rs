use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn uqpde(args: &[&str]) -> Output {
    uqpde_with_env(args, &[])
}

fn uqpde_with_env(args: &[&str], env: &[(&str, &Path)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_uqpde"));
    cmd.args(args).env_remove("UQPDE_OUTPUT_DIR");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn read_meta(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("meta.json")).unwrap()).unwrap()
}

fn csv_rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(str::to_string).collect();
    let rows = lines.map(|l| l.split(',').map(str::to_string).collect()).collect();
    (header, rows)
}

/// Function-space rows of stats.csv as (mean, lower, upper).
fn function_stats(dir: &Path) -> Vec<(f64, f64, f64)> {
    let (_, rows) = csv_rows(&dir.join("stats.csv"));
    rows.iter()
        .filter(|r| r[0] == "function")
        .map(|r| (r[2].parse().unwrap(), r[4].parse().unwrap(), r[5].parse().unwrap()))
        .collect()
}

fn dir_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn files_under(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        if p.is_dir() {
            out.extend(files_under(&p));
        } else {
            out.push(p);
        }
    }
    out.sort();
    out
}

#[test]
fn heat_step_example_encloses_truth_coefficients() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let res = uqpde(&[
        "heat1d", "--variant", "step3", "--noise", "0.10", "--sampler", "cwmh", "--samples", "50000", "--seed", "1",
        "--quiet", "-o", dir_str(&out),
    ]);
    assert!(res.status.success(), "{}", stderr(&res));
    for f in ["data.csv", "samples.csv", "stats.csv", "meta.json", "plots/ci_band.svg", "plots/coefficients_ci.svg"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let meta = read_meta(&out);
    assert_eq!(meta["truth_coefficients_in_ci95"], 3);
    assert_eq!(meta["sampler"], "cwmh");
    assert_eq!(meta["seed"], 1);
    assert_eq!(meta["config"]["heat1d.noise_level"], 0.10);
    assert!(meta["runtime_seconds"].as_f64().unwrap() > 0.0);
    assert!(meta["s_noise"][0].as_f64().unwrap() > 0.0);

    let (header, rows) = csv_rows(&out.join("samples.csv"));
    assert_eq!(header, ["x_1", "x_2", "x_3"]);
    assert_eq!(rows.len(), 50_000);
    let (header, rows) = csv_rows(&out.join("stats.csv"));
    assert_eq!(header, ["space", "index", "mean", "variance", "ci95_lower", "ci95_upper", "ess"]);
    assert_eq!(rows.len(), 3 + 100);
    let (header, rows) = csv_rows(&out.join("data.csv"));
    assert_eq!(header, ["kind", "dataset", "index", "value"]);
    assert_eq!(rows.len(), 3 + 100 + 100 + 100);
}

#[test]
fn same_seed_gives_identical_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = tmp.path().join(name);
        let res = uqpde(&["heat1d", "--samples", "2000", "--seed", "1", "-q", "-o", dir_str(&out)]);
        assert!(res.status.success(), "{}", stderr(&res));
        out
    };
    let (a, b) = (run("a"), run("b"));
    let files_a = files_under(&a);
    assert_eq!(files_a.len(), files_under(&b).len());
    for fa in files_a {
        let fb = b.join(fa.strip_prefix(&a).unwrap());
        if fa.file_name().unwrap() == "meta.json" && fa.parent() == Some(a.as_path()) {
            let (mut ma, mut mb) = (read_meta(&a), read_meta(&b));
            ma.as_object_mut().unwrap().remove("runtime_seconds");
            mb.as_object_mut().unwrap().remove("runtime_seconds");
            ma["config"]["output.dir"] = Value::Null;
            mb["config"]["output.dir"] = Value::Null;
            assert_eq!(ma, mb);
        } else {
            assert_eq!(fs::read(&fa).unwrap(), fs::read(&fb).unwrap(), "{}", fa.display());
        }
    }
}

#[test]
fn config_echo_reruns_to_identical_samples() {
    let tmp = tempfile::tempdir().unwrap();
    let first = tmp.path().join("first");
    let res = uqpde(&["heat1d", "--variant", "kl20", "--samples", "300", "--seed", "5", "-q", "-o", dir_str(&first)]);
    assert!(res.status.success(), "{}", stderr(&res));
    let second = tmp.path().join("second");
    let meta_path = first.join("meta.json");
    let res = uqpde(&["heat1d", "--config", dir_str(&meta_path), "-q", "-o", dir_str(&second)]);
    assert!(res.status.success(), "{}", stderr(&res));
    for f in ["samples.csv", "stats.csv", "data.csv"] {
        assert_eq!(fs::read(first.join(f)).unwrap(), fs::read(second.join(f)).unwrap(), "{f}");
    }
    assert_eq!(read_meta(&second)["config"]["heat1d.variant"], "kl20");
}

#[test]
fn config_file_keys_and_flag_precedence() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.json");
    fs::write(&cfg, r#"{"sampler.n_samples": 200, "sampler.seed": 3, "heat1d.variant": "kl20"}"#).unwrap();
    let out = tmp.path().join("out");
    let res = uqpde(&["heat1d", "--config", dir_str(&cfg), "--seed", "9", "-q", "-o", dir_str(&out)]);
    assert!(res.status.success(), "{}", stderr(&res));
    let meta = read_meta(&out);
    assert_eq!(meta["seed"], 9);
    assert_eq!(meta["n_samples"], 200);
    assert_eq!(meta["options"]["variant"], "kl20");

    fs::write(&cfg, r#"{"sampler.n_samples": 200, "heat1d.colour": "red"}"#).unwrap();
    let res = uqpde(&["heat1d", "--config", dir_str(&cfg), "-q", "-o", dir_str(&out)]);
    assert_eq!(res.status.code(), Some(1));
    assert!(stderr(&res).contains("unknown configuration key 'heat1d.colour'"), "{}", stderr(&res));
}

#[test]
fn invalid_values_exit_with_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("never");
    let res = uqpde(&["heat1d", "--noise", "-0.1", "-o", dir_str(&out)]);
    assert_eq!(res.status.code(), Some(1));
    assert!(stderr(&res).contains("noise_level must be ≥ 0"), "{}", stderr(&res));

    let res = uqpde(&["eit", "--sampler", "nuts", "-o", dir_str(&out)]);
    assert_eq!(res.status.code(), Some(1));
    let msg = stderr(&res);
    assert!(msg.contains("nuts") && msg.contains("mh, cwmh, pcn"), "{msg}");

    let res = uqpde(&["heat1d", "--n-tau", "10", "-o", dir_str(&out)]);
    assert_eq!(res.status.code(), Some(1));
    assert!(stderr(&res).to_lowercase().contains("implicit"), "{}", stderr(&res));
    assert!(!out.exists());
}

#[test]
fn output_root_comes_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let res = uqpde_with_env(&["heat1d", "--samples", "100", "-q"], &[("UQPDE_OUTPUT_DIR", tmp.path())]);
    assert!(res.status.success(), "{}", stderr(&res));
    assert!(tmp.path().join("heat1d/meta.json").is_file());
}

#[test]
fn foreign_output_dir_is_left_untouched() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("mine");
    fs::create_dir(&out).unwrap();
    fs::write(out.join("notes.txt"), "keep").unwrap();
    let res = uqpde(&["heat1d", "--samples", "100", "-q", "-o", dir_str(&out)]);
    assert_ne!(res.status.code(), Some(0));
    assert_eq!(fs::read_to_string(out.join("notes.txt")).unwrap(), "keep");
    let leftovers: Vec<_> = fs::read_dir(tmp.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(leftovers.len(), 1, "{leftovers:?}");
}

#[test]
fn chains_write_subdirectories_and_pooled_output() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("chains");
    let res = uqpde(&["heat1d", "--samples", "500", "--chains", "3", "--seed", "10", "-q", "-o", dir_str(&out)]);
    assert!(res.status.success(), "{}", stderr(&res));
    let (_, pooled) = csv_rows(&out.join("samples.csv"));
    assert_eq!(pooled.len(), 1500);
    for c in 0..3 {
        let chain = out.join(format!("chain_{c}"));
        let (_, rows) = csv_rows(&chain.join("samples.csv"));
        assert_eq!(rows.len(), 500);
        assert_eq!(read_meta(&chain)["seed"], 10 + c);
    }
    let meta = read_meta(&out);
    assert_eq!(meta["n_chains"], 3);
    assert_eq!(meta["chains"][2]["seed"], 12);
}

#[test]
fn mesh_problems_dump_mesh_and_plot_heatmaps() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("poisson");
    let res = uqpde(&["poisson2d", "--nx", "8", "--ny", "8", "--n-kl", "6", "--samples", "200", "--dump-mesh", "-q", "-o", dir_str(&out)]);
    assert!(res.status.success(), "{}", stderr(&res));
    let mesh = fs::read_to_string(out.join("mesh.txt")).unwrap();
    assert_eq!(mesh.lines().filter(|l| l.starts_with("v ")).count(), 81);
    assert_eq!(mesh.lines().filter(|l| l.starts_with("t ")).count(), 128);
    for f in ["truth_field.svg", "posterior_mean.svg", "ci_width.svg"] {
        assert!(fs::read_to_string(out.join("plots").join(f)).unwrap().contains("<polygon"));
    }
    assert_eq!(read_meta(&out)["sampler"], "pcn");
}

#[test]
fn plot_subcommand_redraws_from_saved_samples() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("eit");
    let res = uqpde(&["eit", "--n-rings", "4", "--n-sectors", "24", "--n-kl", "8", "--samples", "200", "-q", "-o", dir_str(&out)]);
    assert!(res.status.success(), "{}", stderr(&res));
    let plots = out.join("plots");
    let before = fs::read(plots.join("posterior_mean.svg")).unwrap();
    fs::remove_dir_all(&plots).unwrap();
    let res = uqpde(&["plot", dir_str(&out)]);
    assert!(res.status.success(), "{}", stderr(&res));
    assert_eq!(fs::read(plots.join("posterior_mean.svg")).unwrap(), before);
    for k in 1..=4 {
        assert!(plots.join(format!("data_y{k}.svg")).is_file());
    }

    let res = uqpde(&["plot", dir_str(&tmp.path().join("missing"))]);
    assert_ne!(res.status.code(), Some(0));
}

#[test]
fn pat_partial_data_widens_right_end_interval() {
    let tmp = tempfile::tempdir().unwrap();
    let width = |data: &str| {
        let out = tmp.path().join(data);
        let res = uqpde(&["pat", "--data", data, "-q", "-o", dir_str(&out)]);
        assert!(res.status.success(), "{}", stderr(&res));
        let stats = function_stats(&out);
        let n = stats.len();
        let right: Vec<f64> = stats
            .iter()
            .enumerate()
            .filter(|(i, _)| *i as f64 / (n - 1) as f64 >= 0.9 - 1e-12)
            .map(|(_, (_, lo, hi))| hi - lo)
            .collect();
        right.iter().sum::<f64>() / right.len() as f64
    };
    let partial = width("partial");
    let full = width("full");
    assert!(partial > full, "partial {partial} vs full {full}");
}
