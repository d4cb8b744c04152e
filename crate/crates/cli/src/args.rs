//! Command-line flags and their mapping onto configuration keys.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde_json::{Map, Value};

use crate::config::Problem;

#[derive(Debug, Parser)]
#[command(name = "uqpde", version, about = "Bayesian inversion of PDE test problems with adaptive MCMC")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// 1D heat equation: recover the initial temperature.
    Heat1d(Heat1dArgs),
    /// 2D Poisson equation: recover the log-conductivity.
    Poisson2d(Poisson2dArgs),
    /// Electrical impedance tomography on the unit disk with a level-set prior.
    Eit(EitArgs),
    /// 1D photoacoustic tomography: recover the initial pressure.
    Pat(PatArgs),
    /// Redraw the plots of an earlier run from its saved samples.
    Plot(PlotArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// JSON file of flat keys such as "sampler.n_samples"; flags take precedence.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// One of mh, cwmh, pcn; defaults to the problem's recommended sampler.
    #[arg(long)]
    pub sampler: Option<String>,
    /// Kept samples per chain.
    #[arg(long)]
    pub samples: Option<u64>,
    /// Burn-in iterations per chain (default: a fifth of the kept samples, 100000 for pat).
    #[arg(long)]
    pub burn: Option<u64>,
    /// Seed for the data noise and the first chain.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Independent chains run in parallel with seeds seed, seed+1, ...
    #[arg(long)]
    pub chains: Option<u64>,
    #[arg(long, allow_negative_numbers = true)]
    pub target_acceptance: Option<f64>,
    /// Initial proposal scale (pCN: step size β).
    #[arg(long, allow_negative_numbers = true)]
    pub initial_scale: Option<f64>,
    /// Output directory (default: $UQPDE_OUTPUT_DIR/<problem> or uqpde-output/<problem>).
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// Suppress progress output on stderr.
    #[arg(long, short)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct Heat1dArgs {
    /// step3 or kl20.
    #[arg(long)]
    pub variant: Option<String>,
    /// Relative noise level (default 0.10 for step3, 0.05 for kl20).
    #[arg(long, allow_negative_numbers = true)]
    pub noise: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub tau_max: Option<f64>,
    #[arg(long)]
    pub n_grid: Option<u64>,
    #[arg(long)]
    pub n_tau: Option<u64>,
    /// Diffusion speed.
    #[arg(long, allow_negative_numbers = true)]
    pub c: Option<f64>,
    /// full or half.
    #[arg(long)]
    pub observation: Option<String>,
    /// explicit or implicit.
    #[arg(long)]
    pub scheme: Option<String>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct Poisson2dArgs {
    #[arg(long, allow_negative_numbers = true)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub nx: Option<u64>,
    #[arg(long)]
    pub ny: Option<u64>,
    #[arg(long)]
    pub n_kl: Option<u64>,
    #[arg(long, allow_negative_numbers = true)]
    pub length_scale: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub smoothness: Option<f64>,
    #[arg(long)]
    pub truth_seed: Option<u64>,
    /// Also write the mesh as mesh.txt.
    #[arg(long)]
    pub dump_mesh: bool,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct EitArgs {
    #[arg(long, allow_negative_numbers = true)]
    pub noise: Option<f64>,
    /// three_circles or one_circle.
    #[arg(long)]
    pub truth: Option<String>,
    #[arg(long)]
    pub n_rings: Option<u64>,
    #[arg(long)]
    pub n_sectors: Option<u64>,
    #[arg(long)]
    pub n_kl: Option<u64>,
    #[arg(long, allow_negative_numbers = true)]
    pub length_scale: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub smoothness: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub sigma_minus: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub sigma_plus: Option<f64>,
    /// Number of boundary potentials sin(kθ), k = 1..n.
    #[arg(long)]
    pub frequencies: Option<u64>,
    /// Also write the mesh as mesh.txt.
    #[arg(long)]
    pub dump_mesh: bool,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct PatArgs {
    /// full or partial.
    #[arg(long)]
    pub data: Option<String>,
    /// prior_draw or two_bump.
    #[arg(long)]
    pub truth: Option<String>,
    /// Absolute noise standard deviation.
    #[arg(long, allow_negative_numbers = true)]
    pub s_noise: Option<f64>,
    #[arg(long)]
    pub n_g: Option<u64>,
    #[arg(long)]
    pub n_kl: Option<u64>,
    #[arg(long, allow_negative_numbers = true)]
    pub length_scale: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub smoothness: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub scale: Option<f64>,
    /// Sensor sampling frequency.
    #[arg(long, allow_negative_numbers = true)]
    pub frequency: Option<f64>,
    #[arg(long)]
    pub n_times: Option<u64>,
    #[arg(long)]
    pub truth_seed: Option<u64>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// Output directory of an earlier run.
    pub dir: PathBuf,
}

struct Flags(Map<String, Value>);

impl Flags {
    fn set<T: Into<Value>>(&mut self, key: &str, value: Option<T>) {
        if let Some(v) = value {
            self.0.insert(key.to_string(), v.into());
        }
    }

    fn set_true(&mut self, key: &str, flag: bool) {
        if flag {
            self.0.insert(key.to_string(), Value::Bool(true));
        }
    }
}

/// Problem, flag overrides keyed like the config file, and the shared options.
pub fn flag_overrides(command: &Command) -> Option<(Problem, Map<String, Value>, &CommonArgs)> {
    let mut f = Flags(Map::new());
    let (problem, common) = match command {
        Command::Heat1d(a) => {
            f.set("heat1d.variant", a.variant.clone());
            f.set("heat1d.noise_level", a.noise);
            f.set("heat1d.tau_max", a.tau_max);
            f.set("heat1d.n_grid", a.n_grid);
            f.set("heat1d.n_tau", a.n_tau);
            f.set("heat1d.c", a.c);
            f.set("heat1d.observation", a.observation.clone());
            f.set("heat1d.scheme", a.scheme.clone());
            (Problem::Heat1d, &a.common)
        }
        Command::Poisson2d(a) => {
            f.set("poisson2d.noise_level", a.noise);
            f.set("poisson2d.nx", a.nx);
            f.set("poisson2d.ny", a.ny);
            f.set("poisson2d.n_kl", a.n_kl);
            f.set("poisson2d.length_scale", a.length_scale);
            f.set("poisson2d.smoothness", a.smoothness);
            f.set("poisson2d.truth_seed", a.truth_seed);
            f.set_true("output.dump_mesh", a.dump_mesh);
            (Problem::Poisson2d, &a.common)
        }
        Command::Eit(a) => {
            f.set("eit.noise_level", a.noise);
            f.set("eit.truth", a.truth.clone());
            f.set("eit.n_rings", a.n_rings);
            f.set("eit.n_sectors", a.n_sectors);
            f.set("eit.n_kl", a.n_kl);
            f.set("eit.length_scale", a.length_scale);
            f.set("eit.smoothness", a.smoothness);
            f.set("eit.sigma_minus", a.sigma_minus);
            f.set("eit.sigma_plus", a.sigma_plus);
            f.set("eit.frequencies", a.frequencies);
            f.set_true("output.dump_mesh", a.dump_mesh);
            (Problem::Eit, &a.common)
        }
        Command::Pat(a) => {
            f.set("pat.data", a.data.clone());
            f.set("pat.truth", a.truth.clone());
            f.set("pat.s_noise", a.s_noise);
            f.set("pat.n_g", a.n_g);
            f.set("pat.n_kl", a.n_kl);
            f.set("pat.length_scale", a.length_scale);
            f.set("pat.smoothness", a.smoothness);
            f.set("pat.scale", a.scale);
            f.set("pat.frequency", a.frequency);
            f.set("pat.n_times", a.n_times);
            f.set("pat.truth_seed", a.truth_seed);
            (Problem::Pat, &a.common)
        }
        Command::Plot(_) => return None,
    };
    f.set("sampler.id", common.sampler.clone());
    f.set("sampler.n_samples", common.samples);
    f.set("sampler.n_burn", common.burn);
    f.set("sampler.seed", common.seed);
    f.set("sampler.chains", common.chains);
    f.set("sampler.target_acceptance", common.target_acceptance);
    f.set("sampler.initial_scale", common.initial_scale);
    f.set("output.dir", common.output.as_ref().map(|p| p.to_string_lossy().into_owned()));
    Some((problem, f.0, common))
}
