//! Running a configured problem and writing its artifacts.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde_json::{json, Map, Value};
use uqpde::geometry::Support;
use uqpde::problems::{build_eit, build_heat1d, build_pat, build_poisson2d, ProblemBundle};
use uqpde::samplers::{self, ChainConfig, ChainResult, Progress, ProgressFn, SamplerKind, RNG_ID};
use uqpde::samples::{CredibleInterval, SampleMeta, Samples};

use crate::config::{Problem, RunConfig};
use crate::error::{CliError, CliResult};
use crate::svg::{self, Band, Series, BLACK, BLUE, GREEN, ORANGE};

/// Upper bound on stored function values (samples × nodes) for function-space statistics.
pub const FUNCTION_VALUE_BUDGET: usize = 25_000_000;

/// Number of progress lines printed per chain.
const PROGRESS_LINES: usize = 20;

pub fn build_bundle(config: &RunConfig) -> CliResult<ProblemBundle> {
    let bundle = match config.problem {
        Problem::Heat1d => build_heat1d(&config.heat1d_spec())?,
        Problem::Poisson2d => build_poisson2d(&config.poisson2d_spec())?,
        Problem::Eit => build_eit(&config.eit_spec())?,
        Problem::Pat => build_pat(&config.pat_spec())?,
    };
    Ok(bundle)
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub output_dir: PathBuf,
    pub sampler: SamplerKind,
    pub acceptance: Vec<f64>,
    pub runtime_seconds: f64,
}

/// Mean, variance, 95% interval and ESS of one space.
#[derive(Clone, Debug)]
pub struct SpaceStats {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub ci: CredibleInterval,
    pub ess: Vec<f64>,
}

impl SpaceStats {
    fn of(samples: &Samples, ess: Vec<f64>) -> CliResult<Self> {
        Ok(SpaceStats {
            mean: samples.mean(),
            variance: samples.variance()?,
            ci: samples.ci(95.0)?,
            ess,
        })
    }
}

/// Parameter- and function-space statistics of the pooled chains.
#[derive(Clone, Debug)]
pub struct Summary {
    pub parameter: SpaceStats,
    pub function: SpaceStats,
    /// Thinning applied before mapping samples to function space.
    pub function_thinning: usize,
}

fn function_thinning(total_samples: usize, fun_dim: usize) -> usize {
    (total_samples * fun_dim).div_ceil(FUNCTION_VALUE_BUDGET).max(1)
}

fn sum_columns(parts: impl IntoIterator<Item = Vec<f64>>) -> Vec<f64> {
    parts
        .into_iter()
        .reduce(|a, b| a.iter().zip(&b).map(|(x, y)| x + y).collect())
        .unwrap_or_default()
}

fn concat(chains: &[Samples]) -> CliResult<Samples> {
    let first = &chains[0];
    let values: Vec<f64> = chains.iter().flat_map(|c| c.values().iter().copied()).collect();
    Ok(Samples::new(values, first.n_dim(), first.geometry().clone())?.with_meta(first.meta().clone()))
}

/// Pools the chains; ESS is summed over chains, which treats them as independent.
pub fn summarize(chains: &[Samples]) -> CliResult<(Samples, Summary)> {
    let pooled = concat(chains)?;
    let geometry = pooled.geometry();
    let k = function_thinning(pooled.n_samples(), geometry.fun_dim());
    let fun_chains = chains
        .iter()
        .map(|c| Ok(c.thin(k)?.funvals()?))
        .collect::<CliResult<Vec<_>>>()?;
    let fun_pooled = concat(&fun_chains)?;
    let summary = Summary {
        parameter: SpaceStats::of(&pooled, sum_columns(chains.iter().map(Samples::ess)))?,
        function: SpaceStats::of(&fun_pooled, sum_columns(fun_chains.iter().map(Samples::ess)))?,
        function_thinning: k,
    };
    Ok((pooled, summary))
}

fn progress_hook(problem: Problem, total: usize) -> (usize, ProgressFn) {
    let every = (total / PROGRESS_LINES).max(1);
    let hook: ProgressFn = Arc::new(move |p: Progress| {
        let phase = if p.burn_in { "burn-in" } else { "sampling" };
        eprintln!(
            "{problem}: {}/{} ({phase}), acceptance {:.3}",
            p.iteration, p.total, p.acceptance
        );
    });
    (every, hook)
}

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn create_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

/// Runs the configured problem and writes all artifacts into `config.output_dir`.
///
/// Artifacts are staged in a sibling directory and moved into place only when
/// everything succeeded, so a failed run leaves no partial output behind.
pub fn run(config: &RunConfig, quiet: bool) -> CliResult<RunSummary> {
    let start = Instant::now();
    let bundle = build_bundle(config)?;
    let kind = config.sampler().unwrap_or(bundle.recommended);

    let mut chain_cfg = ChainConfig::new(config.n_samples(), config.seed());
    chain_cfg.n_burn = config.n_burn();
    chain_cfg.target_acceptance = config.target_acceptance();
    chain_cfg.initial_scale = config.initial_scale();
    if !quiet {
        chain_cfg.progress = Some(progress_hook(config.problem, config.n_samples() + chain_cfg.burn_in()));
    }
    let results: Vec<ChainResult> = if config.chains() == 1 {
        vec![samplers::sample(kind, &bundle.posterior, &chain_cfg)?]
    } else {
        samplers::sample_chains(kind, &bundle.posterior, &chain_cfg, config.chains())?
    };

    let geometry = bundle.domain_geometry().clone();
    let chain_summaries: Vec<Value> = results.iter().map(chain_json).collect();
    let acceptance: Vec<f64> = results.iter().map(|r| r.acceptance_rate).collect();
    let chains = results
        .into_iter()
        .map(|r| Ok(r.into_samples(geometry.clone())?))
        .collect::<CliResult<Vec<Samples>>>()?;
    let (mut pooled, summary) = summarize(&chains)?;
    let mean_acceptance = acceptance.iter().sum::<f64>() / acceptance.len() as f64;
    *pooled.meta_mut() = SampleMeta {
        sampler: kind.id().to_string(),
        seed: Some(config.seed()),
        rng: Some(RNG_ID.to_string()),
        acceptance_rate: Some(mean_acceptance),
        extra: Map::new(),
    };

    let out = &config.output_dir;
    let staging = staging_dir(out);
    if staging.exists() {
        fs::remove_dir_all(&staging).map_err(|e| CliError::io(&staging, e))?;
    }
    let written = (|| -> CliResult<()> {
        create_dir(&staging)?;
        pooled.export(&staging)?;
        write_file(&staging.join("stats.csv"), &stats_csv(&summary))?;
        write_file(&staging.join("data.csv"), &data_csv(&bundle))?;
        if chains.len() > 1 {
            for (c, samples) in chains.iter().enumerate() {
                samples.export(&staging.join(format!("chain_{c}")))?;
            }
        }
        if config.dump_mesh() {
            if let Support::Mesh(mesh) = geometry.fun_geometry().support() {
                mesh.write(&staging.join("mesh.txt"))?;
            }
        }
        write_plots(&staging.join("plots"), &bundle, &summary)?;
        let runtime = start.elapsed().as_secs_f64();
        let meta = meta_json(config, &bundle, kind, &chain_cfg, &pooled, &summary, chain_summaries, runtime);
        write_file(
            &staging.join("meta.json"),
            &(serde_json::to_string_pretty(&meta).expect("meta serializes") + "\n"),
        )?;
        replace_dir(&staging, out)
    })();
    if let Err(e) = written {
        let _ = fs::remove_dir_all(&staging);
        return Err(e);
    }
    Ok(RunSummary {
        output_dir: out.clone(),
        sampler: kind,
        acceptance,
        runtime_seconds: start.elapsed().as_secs_f64(),
    })
}

fn staging_dir(out: &Path) -> PathBuf {
    let name = out.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "output".into());
    out.with_file_name(format!(".{name}.partial-{}", std::process::id()))
}

/// Moves `staging` to `out`, replacing an earlier run's output.
fn replace_dir(staging: &Path, out: &Path) -> CliResult<()> {
    if out.exists() {
        let is_previous_run = out.join("meta.json").is_file()
            || fs::read_dir(out).map_err(|e| CliError::io(out, e))?.next().is_none();
        if !is_previous_run {
            return Err(CliError::Config(format!(
                "output dir {} is not empty and holds no earlier run; refusing to overwrite it",
                out.display()
            )));
        }
        fs::remove_dir_all(out).map_err(|e| CliError::io(out, e))?;
    }
    fs::rename(staging, out).map_err(|e| CliError::io(out, e))
}

fn chain_json(r: &ChainResult) -> Value {
    json!({
        "seed": r.seed,
        "n_burn": r.n_burn,
        "acceptance_rate": r.acceptance_rate,
        "burn_in_acceptance": r.burn_in_acceptance,
        "final_scale": r.final_scale,
        "component_acceptance": r.component_acceptance,
    })
}

fn min_mean(v: &[f64]) -> Value {
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    let mean = v.iter().sum::<f64>() / v.len().max(1) as f64;
    json!({ "min": min, "mean": mean })
}

#[allow(clippy::too_many_arguments)]
fn meta_json(
    config: &RunConfig,
    bundle: &ProblemBundle,
    kind: SamplerKind,
    chain_cfg: &ChainConfig,
    pooled: &Samples,
    summary: &Summary,
    chain_summaries: Vec<Value>,
    runtime: f64,
) -> Value {
    let datasets: Vec<Value> = bundle
        .datasets
        .iter()
        .map(|d| {
            json!({
                "name": d.name,
                "n_obs": d.y_obs.len(),
                "s_noise": d.s_noise,
                "likelihood_sdev": d.sdev,
            })
        })
        .collect();
    let truth_in_ci = bundle.truth.parameter.as_ref().map(|x| {
        let ci = &summary.parameter.ci;
        x.iter()
            .enumerate()
            .filter(|&(i, &v)| ci.lower[i] <= v && v <= ci.upper[i])
            .count()
    });
    let acceptance: Vec<f64> = chain_summaries.iter().filter_map(|c| c["acceptance_rate"].as_f64()).collect();
    json!({
        "problem": config.problem.name(),
        "config": config.values,
        "options": bundle.options,
        "sampler": kind.id(),
        "rng": RNG_ID,
        "seed": config.seed(),
        "n_samples": chain_cfg.n_samples,
        "n_burn": chain_cfg.burn_in(),
        "n_chains": chain_summaries.len(),
        "n_pooled": pooled.n_samples(),
        "n_dim": pooled.n_dim(),
        "geometry": bundle.domain_geometry().descriptor(),
        "acceptance_rate": acceptance.iter().sum::<f64>() / acceptance.len() as f64,
        "chains": chain_summaries,
        "s_noise": bundle.datasets.iter().map(|d| d.s_noise).collect::<Vec<_>>(),
        "datasets": datasets,
        "ess": {
            "parameter": min_mean(&summary.parameter.ess),
            "function": min_mean(&summary.function.ess),
        },
        "function_thinning": summary.function_thinning,
        "truth_coefficients_in_ci95": truth_in_ci,
        "runtime_seconds": runtime,
        "version": env!("CARGO_PKG_VERSION"),
    })
}

/// `space,index,mean,variance,ci95_lower,ci95_upper,ess`, parameter rows first.
pub fn stats_csv(summary: &Summary) -> String {
    let mut text = String::from("space,index,mean,variance,ci95_lower,ci95_upper,ess\n");
    for (space, s) in [("parameter", &summary.parameter), ("function", &summary.function)] {
        for i in 0..s.mean.len() {
            let _ = writeln!(
                text,
                "{space},{},{},{},{},{},{}",
                i + 1,
                s.mean[i],
                s.variance[i],
                s.ci.lower[i],
                s.ci.upper[i],
                s.ess[i]
            );
        }
    }
    text
}

/// Long-format `kind,dataset,index,value` rows of truth and data.
pub fn data_csv(bundle: &ProblemBundle) -> String {
    let mut text = String::from("kind,dataset,index,value\n");
    let mut rows = |kind: &str, dataset: &str, values: &[f64]| {
        for (i, v) in values.iter().enumerate() {
            let _ = writeln!(text, "{kind},{dataset},{},{v}", i + 1);
        }
    };
    if let Some(x) = &bundle.truth.parameter {
        rows("truth_parameter", "", x);
    }
    rows("truth_field", "", &bundle.truth.field);
    for d in &bundle.datasets {
        rows("y_exact", &d.name, &d.y_exact);
        rows("y_obs", &d.name, &d.y_obs);
    }
    text
}

/// Renders all plots for a bundle and its posterior summary into `dir`.
pub fn write_plots(dir: &Path, bundle: &ProblemBundle, summary: &Summary) -> CliResult<()> {
    create_dir(dir)?;
    let name = bundle.name;
    let par = &summary.parameter;
    let fun = &summary.function;
    let truth_par = bundle.truth.parameter.as_deref();
    write_file(
        &dir.join("coefficients_ci.svg"),
        &svg::coefficient_plot(
            &format!("{name}: posterior mean and 95% CI per coefficient"),
            &par.mean,
            &par.ci.lower,
            &par.ci.upper,
            truth_par,
        ),
    )?;

    match bundle.domain_geometry().fun_geometry().support() {
        Support::Grid1D(grid) => {
            let x = grid.nodes();
            let truth = Series {
                label: "truth",
                y: &bundle.truth.field,
                color: ORANGE,
                dashed: true,
            };
            let mean = Series {
                label: "posterior mean",
                y: &fun.mean,
                color: BLUE,
                dashed: false,
            };
            write_file(
                &dir.join("mean_vs_truth.svg"),
                &svg::line_plot(&format!("{name}: truth and posterior mean"), "ξ", x, &[truth.clone(), mean.clone()], None),
            )?;
            let band = Band {
                label: "95% CI",
                lower: &fun.ci.lower,
                upper: &fun.ci.upper,
            };
            write_file(
                &dir.join("ci_band.svg"),
                &svg::line_plot(&format!("{name}: 95% credible interval"), "ξ", x, &[truth, mean], Some(&band)),
            )?;
        }
        Support::Mesh(mesh) => {
            let (v, t) = (mesh.vertices(), mesh.triangles());
            write_file(
                &dir.join("truth_field.svg"),
                &svg::tri_heatmap(&format!("{name}: true field"), v, t, &bundle.truth.field),
            )?;
            write_file(
                &dir.join("posterior_mean.svg"),
                &svg::tri_heatmap(&format!("{name}: posterior mean"), v, t, &fun.mean),
            )?;
            write_file(
                &dir.join("ci_width.svg"),
                &svg::tri_heatmap(&format!("{name}: 95% CI width"), v, t, &fun.ci.widths()),
            )?;
        }
        Support::Grid2D(_) | Support::Index(_) => {}
    }

    for d in &bundle.datasets {
        let file = dir.join(format!("data_{}.svg", d.name));
        let title = format!("{name}: data {}", d.name);
        let doc = match d.model.range_geometry().support() {
            Support::Grid1D(grid) => svg::line_plot(
                &title,
                "observation coordinate",
                grid.nodes(),
                &[
                    Series {
                        label: "y_obs",
                        y: &d.y_obs,
                        color: GREEN,
                        dashed: false,
                    },
                    Series {
                        label: "y_exact",
                        y: &d.y_exact,
                        color: BLACK,
                        dashed: true,
                    },
                ],
                None,
            ),
            Support::Grid2D(grid) => svg::grid_heatmap(&title, "τ", grid.axis1.nodes(), grid.axis2.nodes(), &d.y_obs),
            Support::Mesh(mesh) => svg::tri_heatmap(&title, mesh.vertices(), mesh.triangles(), &d.y_obs),
            Support::Index(n) => {
                let idx: Vec<f64> = (1..=n).map(|i| i as f64).collect();
                svg::line_plot(
                    &title,
                    "index",
                    &idx,
                    &[Series {
                        label: "y_obs",
                        y: &d.y_obs,
                        color: GREEN,
                        dashed: false,
                    }],
                    None,
                )
            }
        };
        write_file(&file, &doc)?;
    }
    Ok(())
}

/// Rebuilds the problem recorded in `dir/meta.json` and redraws `dir/plots`.
pub fn replot(dir: &Path) -> CliResult<()> {
    let meta_path = dir.join("meta.json");
    let text = fs::read_to_string(&meta_path).map_err(|e| CliError::io(&meta_path, e))?;
    let meta: Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: not valid JSON: {e}", meta_path.display())))?;
    let problem: Problem = meta["problem"]
        .as_str()
        .ok_or_else(|| CliError::Config(format!("{}: missing 'problem'", meta_path.display())))?
        .parse()?;
    let file = meta["config"]
        .as_object()
        .cloned()
        .ok_or_else(|| CliError::Config(format!("{}: missing 'config'", meta_path.display())))?;
    let mut flags = Map::new();
    flags.insert("output.dir".into(), Value::from(dir.to_string_lossy().into_owned()));
    let config = crate::config::validate_config(problem, &file, &flags, None)?;
    let bundle = build_bundle(&config)?;
    let samples = Samples::import(dir, bundle.domain_geometry().clone())?;
    let (_, summary) = summarize(std::slice::from_ref(&samples))?;
    let plots = dir.join("plots");
    if plots.exists() {
        fs::remove_dir_all(&plots).map_err(|e| CliError::io(&plots, e))?;
    }
    write_plots(&plots, &bundle, &summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thinning_respects_budget() {
        assert_eq!(function_thinning(50_000, 100), 1);
        let k = function_thinning(200_000, 753);
        assert!(200_000usize.div_ceil(k) * 753 <= FUNCTION_VALUE_BUDGET + 753);
        assert!(k > 1);
    }

    #[test]
    fn ess_sums_over_chains() {
        assert_eq!(sum_columns([vec![1.0, 2.0], vec![3.0, 4.0]]), vec![4.0, 6.0]);
    }
}
