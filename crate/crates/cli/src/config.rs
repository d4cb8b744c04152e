//! Flat-key JSON configuration with defaults, validation and merging.
//!
//! Every option is addressed by a key namespaced by the module it configures,
//! such as `heat1d.noise_level` or `sampler.n_samples`. Values are merged with
//! precedence flags > config file > defaults, then checked against the key's
//! declared kind and range.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde_json::{Map, Value};
use uqpde::pde::TimeScheme;
use uqpde::problems::{
    EitSpec, EitTruth, Heat1dSpec, HeatObservation, HeatVariant, PatData, PatSpec, PatTruth, Poisson2dSpec,
};
use uqpde::samplers::{SamplerKind, SUPPORTED_SAMPLERS};

use crate::error::{CliError, CliResult};

pub const OUTPUT_DIR_ENV: &str = "UQPDE_OUTPUT_DIR";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Problem {
    Heat1d,
    Poisson2d,
    Eit,
    Pat,
}

impl Problem {
    pub const ALL: [Problem; 4] = [Problem::Heat1d, Problem::Poisson2d, Problem::Eit, Problem::Pat];

    pub fn name(self) -> &'static str {
        match self {
            Problem::Heat1d => "heat1d",
            Problem::Poisson2d => "poisson2d",
            Problem::Eit => "eit",
            Problem::Pat => "pat",
        }
    }

    fn default_samples(self) -> u64 {
        match self {
            Problem::Heat1d => 50_000,
            Problem::Poisson2d => 20_000,
            Problem::Eit | Problem::Pat => 200_000,
        }
    }

    /// PAT needs a long burn-in: its concentrated posterior asks for a pCN
    /// step near 1e-3, two orders below the initial 0.1.
    fn default_burn(self) -> Value {
        match self {
            Problem::Pat => Value::from(100_000),
            _ => Value::Null,
        }
    }

    fn has_mesh(self) -> bool {
        matches!(self, Problem::Poisson2d | Problem::Eit)
    }
}

impl fmt::Display for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Problem {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        Problem::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| CliError::Config(format!("unknown problem '{s}' (supported: heat1d, poisson2d, eit, pat)")))
    }
}

#[derive(Clone, Debug)]
enum Kind {
    /// Real number `≥ min` (or `> min` when `strict`), optionally `< max`.
    Float { min: f64, strict: bool, max: Option<f64> },
    Int { min: u64 },
    Seed,
    Choice(&'static [&'static str]),
    Bool,
    Path,
}

#[derive(Clone, Debug)]
struct KeySpec {
    key: &'static str,
    kind: Kind,
    nullable: bool,
    default: Value,
}

fn float(key: &'static str, min: f64, strict: bool, default: f64) -> KeySpec {
    KeySpec {
        key,
        kind: Kind::Float { min, strict, max: None },
        nullable: false,
        default: Value::from(default),
    }
}

fn int(key: &'static str, min: u64, default: u64) -> KeySpec {
    KeySpec {
        key,
        kind: Kind::Int { min },
        nullable: false,
        default: Value::from(default),
    }
}

fn seed(key: &'static str, default: u64) -> KeySpec {
    KeySpec {
        key,
        kind: Kind::Seed,
        nullable: false,
        default: Value::from(default),
    }
}

fn choice(key: &'static str, options: &'static [&'static str]) -> KeySpec {
    KeySpec {
        key,
        kind: Kind::Choice(options),
        nullable: false,
        default: Value::from(options[0]),
    }
}

fn nullable(mut spec: KeySpec) -> KeySpec {
    spec.nullable = true;
    spec.default = Value::Null;
    spec
}

fn key_table(problem: Problem) -> Vec<KeySpec> {
    let mut keys = match problem {
        Problem::Heat1d => vec![
            choice("heat1d.variant", &["step3", "kl20"]),
            float("heat1d.tau_max", 0.0, true, 0.01),
            int("heat1d.n_grid", 4, 100),
            nullable(int("heat1d.n_tau", 2, 0)),
            float("heat1d.c", 0.0, true, 1.0),
            nullable(float("heat1d.noise_level", 0.0, false, 0.0)),
            choice("heat1d.observation", &["full", "half"]),
            choice("heat1d.scheme", &["explicit", "implicit"]),
        ],
        Problem::Poisson2d => vec![
            int("poisson2d.nx", 4, 32),
            int("poisson2d.ny", 4, 32),
            int("poisson2d.n_kl", 1, 32),
            float("poisson2d.length_scale", 0.0, true, 0.1),
            float("poisson2d.smoothness", 0.0, true, 2.0),
            float("poisson2d.noise_level", 0.0, false, 0.01),
            seed("poisson2d.truth_seed", 2),
        ],
        Problem::Eit => vec![
            int("eit.n_rings", 1, 8),
            int("eit.n_sectors", 3, 94),
            int("eit.n_kl", 1, 64),
            float("eit.length_scale", 0.0, true, 0.2),
            float("eit.smoothness", 0.0, true, 2.0),
            float("eit.sigma_minus", 0.0, true, 1.0),
            float("eit.sigma_plus", 0.0, true, 10.0),
            int("eit.frequencies", 1, 4),
            float("eit.noise_level", 0.0, false, 0.05),
            choice("eit.truth", &["three_circles", "one_circle"]),
        ],
        Problem::Pat => vec![
            choice("pat.data", &["full", "partial"]),
            int("pat.n_g", 2, 121),
            int("pat.n_kl", 1, 100),
            float("pat.length_scale", 0.0, true, 0.1),
            float("pat.smoothness", 0.0, true, 0.75),
            float("pat.scale", 0.0, true, 15.0),
            float("pat.s_noise", 0.0, false, 0.125),
            float("pat.frequency", 0.0, true, 250.0),
            int("pat.n_times", 2, 250),
            choice("pat.truth", &["prior_draw", "two_bump"]),
            seed("pat.truth_seed", 1),
        ],
    };
    keys.extend([
        nullable(choice("sampler.id", &SUPPORTED_SAMPLERS)),
        int("sampler.n_samples", 1, problem.default_samples()),
        KeySpec {
            key: "sampler.n_burn",
            kind: Kind::Int { min: 0 },
            nullable: true,
            default: problem.default_burn(),
        },
        seed("sampler.seed", 0),
        int("sampler.chains", 1, 1),
        KeySpec {
            key: "sampler.target_acceptance",
            kind: Kind::Float {
                min: 0.0,
                strict: true,
                max: Some(1.0),
            },
            nullable: true,
            default: Value::Null,
        },
        nullable(float("sampler.initial_scale", 0.0, true, 1.0)),
        KeySpec {
            key: "output.dir",
            kind: Kind::Path,
            nullable: true,
            default: Value::Null,
        },
    ]);
    if problem.has_mesh() {
        keys.push(KeySpec {
            key: "output.dump_mesh",
            kind: Kind::Bool,
            nullable: false,
            default: Value::Bool(false),
        });
    }
    keys
}

/// All keys accepted for `problem`, in declaration order.
pub fn known_keys(problem: Problem) -> Vec<&'static str> {
    key_table(problem).into_iter().map(|k| k.key).collect()
}

fn short_name(key: &str) -> &str {
    key.rsplit('.').next().unwrap_or(key)
}

fn check_value(spec: &KeySpec, value: &Value) -> CliResult<Value> {
    let name = short_name(spec.key);
    let bad = |msg: String| CliError::Config(format!("invalid value {value} for '{}': {msg}", spec.key));
    if value.is_null() {
        return if spec.nullable {
            Ok(Value::Null)
        } else {
            Err(bad(format!("{name} must not be null")))
        };
    }
    match &spec.kind {
        Kind::Float { min, strict, max } => {
            let v = value.as_f64().filter(|v| v.is_finite()).ok_or_else(|| bad(format!("{name} must be a finite number")))?;
            let range_msg = match (strict, max) {
                (true, Some(hi)) => format!("{name} must be in ({min}, {hi})"),
                (false, Some(hi)) => format!("{name} must be in [{min}, {hi})"),
                (true, None) => format!("{name} must be > {min}"),
                (false, None) => format!("{name} must be ≥ {min}"),
            };
            let above = if *strict { v > *min } else { v >= *min };
            if !above || max.is_some_and(|hi| v >= hi) {
                return Err(bad(range_msg));
            }
            Ok(Value::from(v))
        }
        Kind::Int { min } => {
            let v = value.as_u64().ok_or_else(|| bad(format!("{name} must be an integer ≥ {min}")))?;
            if v < *min {
                return Err(bad(format!("{name} must be an integer ≥ {min}")));
            }
            Ok(Value::from(v))
        }
        Kind::Seed => value
            .as_u64()
            .map(Value::from)
            .ok_or_else(|| bad(format!("{name} must be an integer in [0, 2^64)"))),
        Kind::Choice(options) => {
            let s = value.as_str().ok_or_else(|| bad(format!("{name} must be a string")))?;
            if spec.key == "sampler.id" {
                SamplerKind::from_str(s).map_err(|e| CliError::Config(format!("invalid value for 'sampler.id': {e}")))?;
            } else if !options.contains(&s) {
                return Err(bad(format!("{name} must be one of: {}", options.join(", "))));
            }
            Ok(Value::from(s))
        }
        Kind::Bool => value
            .as_bool()
            .map(Value::Bool)
            .ok_or_else(|| bad(format!("{name} must be true or false"))),
        Kind::Path => value
            .as_str()
            .filter(|s| !s.is_empty())
            .map(Value::from)
            .ok_or_else(|| bad(format!("{name} must be a non-empty path"))),
    }
}

/// Parses config file text: a JSON object of flat keys.
///
/// A `meta.json` written by a run is also accepted; its `config` object is used.
pub fn parse_config_text(text: &str) -> CliResult<Map<String, Value>> {
    let value: Value =
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("config is not valid JSON: {e}")))?;
    let Value::Object(map) = value else {
        return Err(CliError::Config("config must be a JSON object of flat keys".into()));
    };
    if let (Some(Value::Object(inner)), true) = (map.get("config"), map.contains_key("problem")) {
        return Ok(inner.clone());
    }
    Ok(map)
}

pub fn read_config_file(path: &Path) -> CliResult<Map<String, Value>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    parse_config_text(&text).map_err(|e| match e {
        CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
        e => e,
    })
}

/// Fully resolved and validated run configuration.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub problem: Problem,
    /// Every known key with its resolved value; written back as the config echo.
    pub values: BTreeMap<String, Value>,
    pub output_dir: PathBuf,
}

impl RunConfig {
    fn get(&self, key: &str) -> &Value {
        self.values.get(key).unwrap_or_else(|| panic!("config key '{key}' is known"))
    }

    fn f64(&self, key: &str) -> f64 {
        self.get(key).as_f64().expect("validated float")
    }

    fn opt_f64(&self, key: &str) -> Option<f64> {
        self.get(key).as_f64()
    }

    fn usize(&self, key: &str) -> usize {
        self.opt_usize(key).expect("validated integer")
    }

    fn opt_usize(&self, key: &str) -> Option<usize> {
        self.get(key).as_u64().map(|v| v as usize)
    }

    fn u64(&self, key: &str) -> u64 {
        self.get(key).as_u64().expect("validated integer")
    }

    fn str(&self, key: &str) -> &str {
        self.get(key).as_str().expect("validated string")
    }

    pub fn seed(&self) -> u64 {
        self.u64("sampler.seed")
    }

    pub fn sampler(&self) -> Option<SamplerKind> {
        self.get("sampler.id").as_str().map(|s| s.parse().expect("validated sampler"))
    }

    pub fn n_samples(&self) -> usize {
        self.usize("sampler.n_samples")
    }

    pub fn n_burn(&self) -> Option<usize> {
        self.opt_usize("sampler.n_burn")
    }

    pub fn chains(&self) -> usize {
        self.usize("sampler.chains")
    }

    pub fn target_acceptance(&self) -> Option<f64> {
        self.opt_f64("sampler.target_acceptance")
    }

    pub fn initial_scale(&self) -> Option<f64> {
        self.opt_f64("sampler.initial_scale")
    }

    pub fn dump_mesh(&self) -> bool {
        self.values.get("output.dump_mesh").and_then(Value::as_bool).unwrap_or(false)
    }

    pub fn heat1d_spec(&self) -> Heat1dSpec {
        Heat1dSpec {
            variant: parse_choice::<HeatVariant>(self.str("heat1d.variant")),
            tau_max: self.f64("heat1d.tau_max"),
            n_grid: self.usize("heat1d.n_grid"),
            n_tau: self.opt_usize("heat1d.n_tau"),
            c: self.f64("heat1d.c"),
            noise_level: self.opt_f64("heat1d.noise_level"),
            observation: parse_choice::<HeatObservation>(self.str("heat1d.observation")),
            scheme: match self.str("heat1d.scheme") {
                "implicit" => TimeScheme::ImplicitEuler,
                _ => TimeScheme::ExplicitEuler,
            },
            seed: self.seed(),
        }
    }

    pub fn poisson2d_spec(&self) -> Poisson2dSpec {
        Poisson2dSpec {
            nx: self.usize("poisson2d.nx"),
            ny: self.usize("poisson2d.ny"),
            n_kl: self.usize("poisson2d.n_kl"),
            length_scale: self.f64("poisson2d.length_scale"),
            smoothness: self.f64("poisson2d.smoothness"),
            noise_level: self.f64("poisson2d.noise_level"),
            seed: self.seed(),
            truth_seed: self.u64("poisson2d.truth_seed"),
        }
    }

    pub fn eit_spec(&self) -> EitSpec {
        EitSpec {
            n_rings: self.usize("eit.n_rings"),
            n_sectors: self.usize("eit.n_sectors"),
            n_kl: self.usize("eit.n_kl"),
            length_scale: self.f64("eit.length_scale"),
            smoothness: self.f64("eit.smoothness"),
            sigma_minus: self.f64("eit.sigma_minus"),
            sigma_plus: self.f64("eit.sigma_plus"),
            frequencies: self.u64("eit.frequencies") as u32,
            noise_level: self.f64("eit.noise_level"),
            truth: parse_choice::<EitTruth>(self.str("eit.truth")),
            seed: self.seed(),
        }
    }

    pub fn pat_spec(&self) -> PatSpec {
        PatSpec {
            data: parse_choice::<PatData>(self.str("pat.data")),
            n_g: self.usize("pat.n_g"),
            n_kl: self.usize("pat.n_kl"),
            length_scale: self.f64("pat.length_scale"),
            smoothness: self.f64("pat.smoothness"),
            scale: self.f64("pat.scale"),
            s_noise: self.f64("pat.s_noise"),
            frequency: self.f64("pat.frequency"),
            n_times: self.usize("pat.n_times"),
            truth: parse_choice::<PatTruth>(self.str("pat.truth")),
            seed: self.seed(),
            truth_seed: self.u64("pat.truth_seed"),
        }
    }

    /// Runs the problem builder's own consistency checks without building.
    fn validate_problem(&self) -> CliResult<()> {
        match self.problem {
            Problem::Heat1d => self.heat1d_spec().validate()?,
            Problem::Poisson2d => self.poisson2d_spec().validate()?,
            Problem::Eit => self.eit_spec().validate()?,
            Problem::Pat => self.pat_spec().validate()?,
        }
        if let Some(burn) = self.n_burn() {
            // Guards against silly totals overflowing the chain bookkeeping.
            if burn.checked_add(self.n_samples()).is_none() {
                return Err(CliError::Config("n_burn + n_samples overflows".into()));
            }
        }
        Ok(())
    }
}

fn parse_choice<T: FromStr>(s: &str) -> T
where
    T::Err: fmt::Debug,
{
    s.parse().expect("validated choice")
}

/// Merges defaults, the config file and flag overrides, then validates.
///
/// `env_output_root` is the value of [`OUTPUT_DIR_ENV`], if set; it is only
/// used when neither the file nor the flags name an output directory.
pub fn validate_config(
    problem: Problem,
    file: &Map<String, Value>,
    flags: &Map<String, Value>,
    env_output_root: Option<&Path>,
) -> CliResult<RunConfig> {
    let table = key_table(problem);
    for key in file.keys().chain(flags.keys()) {
        if !table.iter().any(|k| k.key == key) {
            return Err(CliError::Config(format!(
                "unknown configuration key '{key}' for {problem} (known keys: {})",
                known_keys(problem).join(", ")
            )));
        }
    }
    let mut values = BTreeMap::new();
    for spec in &table {
        let raw = flags
            .get(spec.key)
            .or_else(|| file.get(spec.key))
            .unwrap_or(&spec.default);
        values.insert(spec.key.to_string(), check_value(spec, raw)?);
    }
    let output_dir = match values["output.dir"].as_str() {
        Some(dir) => PathBuf::from(dir),
        None => env_output_root.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("uqpde-output")).join(problem.name()),
    };
    let config = RunConfig {
        problem,
        values,
        output_dir,
    };
    config.validate_problem()?;
    check_creatable(&config.output_dir)?;
    Ok(config)
}

/// Rejects output paths whose nearest existing ancestor is not a directory.
fn check_creatable(dir: &Path) -> CliResult<()> {
    if dir.exists() && !dir.is_dir() {
        return Err(CliError::Config(format!("output dir {} exists and is not a directory", dir.display())));
    }
    let mut ancestor = dir.parent();
    while let Some(p) = ancestor {
        if p.as_os_str().is_empty() {
            return Ok(());
        }
        if p.exists() {
            return if p.is_dir() {
                Ok(())
            } else {
                Err(CliError::Config(format!(
                    "output dir {} cannot be created: {} is not a directory",
                    dir.display(),
                    p.display()
                )))
            };
        }
        ancestor = p.parent();
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use serde_json::json;

    use super::*;

    fn map(v: Value) -> Map<String, Value> {
        v.as_object().unwrap().clone()
    }

    fn config(problem: Problem, file: Value, flags: Value) -> CliResult<RunConfig> {
        validate_config(problem, &map(file), &map(flags), None)
    }

    #[test]
    fn empty_heat_config_gives_defaults() {
        let c = config(Problem::Heat1d, json!({}), json!({})).unwrap();
        let spec = c.heat1d_spec();
        assert_eq!(spec.n_grid, 100);
        assert_eq!(spec.tau_max, 0.01);
        assert_eq!(spec.time_points(), 225);
        assert_eq!(c.output_dir, PathBuf::from("uqpde-output/heat1d"));
        assert_eq!(c.sampler(), None);
    }

    #[test]
    fn negative_noise_is_rejected_with_range() {
        let err = config(Problem::Heat1d, json!({}), json!({"heat1d.noise_level": -0.1})).unwrap_err();
        assert_eq!(err.exit_code(), 1);
        let msg = err.to_string();
        assert!(msg.contains("noise_level must be ≥ 0"), "{msg}");
        assert!(msg.contains("heat1d.noise_level"), "{msg}");
    }

    #[test]
    fn unsupported_sampler_lists_supported_ones() {
        let msg = config(Problem::Eit, json!({"sampler.id": "nuts"}), json!({})).unwrap_err().to_string();
        for id in ["mh", "cwmh", "pcn", "nuts"] {
            assert!(msg.contains(id), "{msg}");
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let msg = config(Problem::Pat, json!({"heat1d.variant": "kl20"}), json!({})).unwrap_err().to_string();
        assert!(msg.contains("unknown configuration key 'heat1d.variant'"), "{msg}");
        assert!(config(Problem::Heat1d, json!({}), json!({"output.dump_mesh": true})).is_err());
    }

    #[test]
    fn flags_override_file_override_defaults() {
        let c = config(
            Problem::Heat1d,
            json!({"sampler.seed": 4, "sampler.n_samples": 10, "heat1d.variant": "kl20"}),
            json!({"sampler.seed": 7}),
        )
        .unwrap();
        assert_eq!(c.seed(), 7);
        assert_eq!(c.n_samples(), 10);
        assert_eq!(c.heat1d_spec().variant, HeatVariant::Kl20);
        assert_eq!(c.heat1d_spec().seed, 7);
    }

    #[test]
    fn wrong_types_and_ranges_name_the_key() {
        for (key, v) in [
            ("sampler.n_samples", json!(0)),
            ("sampler.n_samples", json!(1.5)),
            ("sampler.target_acceptance", json!(1.0)),
            ("pat.data", json!("half")),
            ("eit.sigma_plus", json!("ten")),
        ] {
            let msg = config(
                if key.starts_with("pat") { Problem::Pat } else { Problem::Eit },
                json!({}),
                json!({ key: v }),
            )
            .unwrap_err()
            .to_string();
            assert!(msg.contains(key), "{msg}");
        }
    }

    #[test]
    fn builder_checks_surface_as_config_errors() {
        let err = config(Problem::Poisson2d, json!({"poisson2d.n_kl": 5000}), json!({})).unwrap_err();
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn env_root_is_used_only_without_explicit_dir() {
        let root = Path::new("/tmp/root");
        let c = validate_config(Problem::Eit, &Map::new(), &Map::new(), Some(root)).unwrap();
        assert_eq!(c.output_dir, root.join("eit"));
        let c = validate_config(Problem::Eit, &map(json!({"output.dir": "x"})), &Map::new(), Some(root)).unwrap();
        assert_eq!(c.output_dir, PathBuf::from("x"));
    }

    #[test]
    fn meta_json_config_echo_is_accepted() {
        let text = r#"{"problem": "pat", "config": {"pat.data": "partial"}, "runtime_seconds": 1.0}"#;
        let file = parse_config_text(text).unwrap();
        assert_eq!(file["pat.data"], "partial");
        assert!(parse_config_text("[1, 2]").is_err());
    }

    #[test]
    fn uncreatable_output_dir_is_a_config_error() {
        let tmp = tempfile::tempdir().unwrap();
        let file = tmp.path().join("f");
        std::fs::write(&file, "x").unwrap();
        let dir = file.join("sub");
        let err = config(Problem::Heat1d, json!({"output.dir": dir.to_str().unwrap()}), json!({})).unwrap_err();
        assert_eq!(err.exit_code(), 1);
    }
}
