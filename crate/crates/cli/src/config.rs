//! Layered configuration: command-line flags, then a `key=value` file, then
//! the tolerance override from the environment, then built-in defaults.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, ValueEnum};
use silnikov_core::integrator::IntegratorOptions;
use silnikov_core::model::{State, SystemParams};
use silnikov_core::orbit::{default_seed, OrbitSearchOptions};

use crate::error::CliError;
use crate::output::{fmt_num, Header};

/// Environment variable overriding the default integrator tolerances.
pub const TOL_ENV: &str = "CASCADE_SCAN_SEED_TOL";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
    Svg,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        <Self as ValueEnum>::from_str(s, true)
    }
}

impl Display for Format {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Format::Csv => "csv",
            Format::Json => "json",
            Format::Svg => "svg",
        })
    }
}

/// Start point `x,y,z`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Seed(pub State);

impl FromStr for Seed {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let v: Vec<f64> = s
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|e| format!("bad seed component {t:?}: {e}"))
            })
            .collect::<Result<_, _>>()?;
        match v.as_slice() {
            [x, y, z] => Ok(Seed(State::new(*x, *y, *z))),
            _ => Err(format!(
                "seed needs three comma-separated values, got {s:?}"
            )),
        }
    }
}

impl Display for Seed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{},{},{}",
            fmt_num(self.0.x),
            fmt_num(self.0.y),
            fmt_num(self.0.z)
        )
    }
}

/// Options shared by every simulation subcommand.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Cubic coefficient a (> 0).
    #[arg(long)]
    pub a: Option<f64>,
    /// Damping parameter b (0 <= b < 1).
    #[arg(long)]
    pub b: Option<f64>,
    /// Initial state `x,y,z`.
    #[arg(long, allow_hyphen_values = true)]
    pub seed: Option<Seed>,
    /// Relative integration tolerance
    #[arg(long)]
    pub rtol: Option<f64>,
    /// Absolute integration tolerance
    #[arg(long)]
    pub atol: Option<f64>,
    /// Largest integrator step
    #[arg(long = "max-step")]
    pub max_step: Option<f64>,
    /// Transient integration time before recurrence is tested.
    #[arg(long)]
    pub transient: Option<f64>,
    /// Recurrence distance accepted as a closed orbit
    #[arg(long = "match-tol")]
    pub match_tol: Option<f64>,
    /// Largest rotation number tested
    #[arg(long = "max-rotation")]
    pub max_rotation: Option<usize>,
    /// Section crossings recorded per observation window.
    #[arg(long)]
    pub events: Option<usize>,
    /// Extra observation windows, each 3x longer
    #[arg(long)]
    pub escalations: Option<u32>,
    /// Output format
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Output file; standard output when absent.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// `key=value` configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Worker threads for parallel stages.
    #[arg(long)]
    pub jobs: Option<usize>,
}

/// Resolves values through the precedence layers and records each one.
pub struct Resolver {
    file: BTreeMap<String, String>,
    used: RefCell<BTreeSet<String>>,
    recorded: RefCell<Vec<(String, String)>>,
}

impl Resolver {
    pub fn new(config: Option<&Path>) -> Result<Self, CliError> {
        let file = match config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    CliError::Config(format!("cannot read {}: {e}", path.display()))
                })?;
                parse_config_file(&text)?
            }
            None => BTreeMap::new(),
        };
        Ok(Self {
            file,
            used: RefCell::default(),
            recorded: RefCell::default(),
        })
    }

    fn file_value<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: Display,
    {
        let Some(raw) = self.file.get(key) else {
            return Ok(None);
        };
        self.used.borrow_mut().insert(key.to_string());
        raw.parse::<T>()
            .map(Some)
            .map_err(|e| CliError::Config(format!("config key {key}: {e}")))
    }

    /// Flag value, else file value, else `default`.
    pub fn get<T>(&self, key: &str, flag: Option<T>, default: T) -> Result<T, CliError>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let file = self.file_value::<T>(key)?;
        let v = flag.or(file).unwrap_or(default);
        self.record(key, &v);
        Ok(v)
    }

    /// As [`get`](Self::get) for settings without a default.
    pub fn get_opt<T>(&self, key: &str, flag: Option<T>) -> Result<Option<T>, CliError>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let file = self.file_value::<T>(key)?;
        let v = flag.or(file);
        if let Some(v) = &v {
            self.record(key, v);
        }
        Ok(v)
    }

    pub fn require<T>(&self, key: &str, flag: Option<T>) -> Result<T, CliError>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        self.get_opt(key, flag)?
            .ok_or_else(|| CliError::Config(format!("missing required setting --{key}")))
    }

    pub fn record(&self, key: &str, v: &dyn Display) {
        let text = match v.to_string().parse::<f64>() {
            Ok(x) if key != "seed" => fmt_num(x),
            _ => v.to_string(),
        };
        self.recorded.borrow_mut().push((key.to_string(), text));
    }

    /// Rejects file keys no command consumed.
    pub fn finish(&self) -> Result<(), CliError> {
        let used = self.used.borrow();
        let unknown: Vec<&String> = self.file.keys().filter(|k| !used.contains(*k)).collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(CliError::Config(format!(
                "unknown config keys: {unknown:?}"
            )))
        }
    }

    pub fn summary(&self) -> String {
        self.recorded
            .borrow()
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Parses `key = value` lines; `#` starts a comment, blank lines are skipped.
pub fn parse_config_file(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            CliError::Config(format!("config line {}: expected key=value", i + 1))
        })?;
        let key = k.trim().replace('_', "-");
        if out.insert(key.clone(), v.trim().to_string()).is_some() {
            return Err(CliError::Config(format!(
                "config line {}: duplicate key {key}",
                i + 1
            )));
        }
    }
    Ok(out)
}

/// Tolerance override from the environment, if set.
pub fn env_tolerance() -> Result<Option<f64>, CliError> {
    match std::env::var(TOL_ENV) {
        Ok(raw) => raw
            .trim()
            .parse::<f64>()
            .ok()
            .filter(|v| *v > 0.0 && v.is_finite())
            .map(Some)
            .ok_or_else(|| {
                CliError::Config(format!("{TOL_ENV} must be a positive number, got {raw:?}"))
            }),
        Err(_) => Ok(None),
    }
}

/// Fully resolved shared configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub params: SystemParams,
    pub seed: State,
    pub search: OrbitSearchOptions,
    pub format: Format,
    pub output: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub env_tol: Option<f64>,
}

impl RunConfig {
    /// Resolves the shared options. Commands that sweep `b` themselves pass
    /// `uses_b = false` and reject an explicit `b`.
    pub fn resolve(args: &CommonArgs, r: &Resolver, uses_b: bool) -> Result<Self, CliError> {
        let a = r.get("a", args.a, 1.0)?;
        let params = if uses_b {
            SystemParams::new(a, r.require("b", args.b)?)?
        } else {
            if r.get_opt::<f64>("b", args.b)?.is_some() {
                return Err(CliError::Config(
                    "this command sets b itself; remove --b".into(),
                ));
            }
            SystemParams::new(a, 0.0)?
        };
        let seed = r.get("seed", args.seed, Seed(default_seed()))?.0;
        if !seed.iter().all(|v| v.is_finite()) {
            return Err(CliError::Config("seed must be finite".into()));
        }
        let env_tol = env_tolerance()?;
        let mut integ = IntegratorOptions::default();
        if let Some(t) = env_tol {
            integ = integ.with_tolerances(t, t * 1e-2);
        }
        integ.rel_tol = r.get("rtol", args.rtol, integ.rel_tol)?;
        integ.abs_tol = r.get("atol", args.atol, integ.abs_tol)?;
        integ.max_step = r.get("max-step", args.max_step, integ.max_step)?;
        let d = OrbitSearchOptions::default();
        let search = OrbitSearchOptions {
            transient_time: r.get("transient", args.transient, d.transient_time)?,
            match_tol: r.get("match-tol", args.match_tol, d.match_tol)?,
            max_rotation: r.get("max-rotation", args.max_rotation, d.max_rotation)?,
            observation_events: r.get("events", args.events, d.observation_events)?,
            escalations: r.get("escalations", args.escalations, d.escalations)?,
            integrator: integ,
            ..d
        };
        search.validate()?;
        let format = r.get("format", args.format, Format::Csv)?;
        let output = args.output.clone().or(r.file_value::<PathBuf>("output")?);
        let jobs = r.get_opt("jobs", args.jobs)?;
        if jobs == Some(0) {
            return Err(CliError::Config("--jobs must be at least 1".into()));
        }
        Ok(Self {
            params,
            seed,
            search,
            format,
            output,
            jobs,
            env_tol,
        })
    }

    pub fn header(&self, command: &str, r: &Resolver) -> Header {
        let mut h = Header::default();
        h.add("program", format!("silnikov {}", env!("CARGO_PKG_VERSION")));
        h.add("command", command);
        h.add("config", r.summary());
        h.add(
            "rotation_convention",
            silnikov_core::orbit::ROTATION_CONVENTION,
        );
        if let Some(t) = self.env_tol {
            h.add("tolerance_override", format!("{TOL_ENV}={}", fmt_num(t)));
        }
        h
    }
}
