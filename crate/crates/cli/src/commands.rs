use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Subcommand, ValueEnum};
use silnikov_core::cascade::{
    default_interval, default_tol_b, feigenbaum_accumulation, feigenbaum_delta, feigenbaum_next,
    run_series, scan_with,
};
use silnikov_core::integrator::TimeDirection;
use silnikov_core::manifold::{
    sample_aclass_with, sweep_manifold_with, AClassOptions, ManifoldOptions,
};
use silnikov_core::model::{equilibria, EquilibriumKind, State};
use silnikov_core::orbit::{detect_orbit, AttractorVerdict};
use silnikov_core::par::Execution;

use crate::config::{CommonArgs, Format, Resolver, RunConfig};
use crate::error::CliError;
use crate::output::{fmt_num, write_csv, write_json, Cell, Header, Table};
use crate::svg::{self, Panel, Series, Style};

/// Largest number of points drawn in an SVG scatter.
const SVG_MAX_POINTS: usize = 20_000;

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Equilibria, eigenvalues and saddle-focus classification.
    Equilibria(EquilibriaArgs),
    /// Closed-orbit detection from a seed.
    Orbit(OrbitArgs),
    /// Attractor verdicts over a descending grid of b.
    Scan(ScanArgs),
    /// Located period-doubling values of one cascade series.
    Cascade(CascadeArgs),
    /// Integral curves seeded on an equilibrium eigenplane.
    Manifold(ManifoldArgs),
    /// Point cloud of the attractor reached from the unstable plane of p0.
    Aclass(AClassArgs),
    /// Feigenbaum-ratio arithmetic.
    Feigenbaum(FeigenbaumArgs),
}

#[derive(Debug, Args)]
pub struct EquilibriaArgs {
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct OrbitArgs {
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct ScanArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Upper end of the sweep.
    #[arg(long = "b-start")]
    pub b_start: Option<f64>,
    /// Lower end of the sweep (inclusive).
    #[arg(long = "b-end")]
    pub b_end: Option<f64>,
    #[arg(long)]
    pub step: Option<f64>,
}

#[derive(Debug, Args)]
pub struct CascadeArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Rotation character of the series: 1, 13 or 3.
    #[arg(long)]
    pub character: Option<u32>,
    /// Index of the deepest transition to locate.
    #[arg(long)]
    pub depth: Option<usize>,
    /// Bracket width at which bisection stops.
    #[arg(long = "tol-b")]
    pub tol_b: Option<f64>,
    /// Upper end of the search interval.
    #[arg(long = "b-upper")]
    pub b_upper: Option<f64>,
    /// Lower end of the search interval.
    #[arg(long = "b-lower")]
    pub b_lower: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Direction {
    Forward,
    Backward,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Projection {
    Xz,
    Xy,
    Yz,
}

impl Projection {
    fn apply(self, s: &State) -> (f64, f64) {
        match self {
            Projection::Xz => (s.x, s.z),
            Projection::Xy => (s.x, s.y),
            Projection::Yz => (s.y, s.z),
        }
    }

    fn labels(self) -> (&'static str, &'static str) {
        match self {
            Projection::Xz => ("x", "z"),
            Projection::Xy => ("x", "y"),
            Projection::Yz => ("y", "z"),
        }
    }
}

#[derive(Debug, Args)]
pub struct ManifoldArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Equilibrium: p0, p1 or p2.
    #[arg(long = "eq")]
    pub equilibrium: Option<String>,
    /// Defaults to the direction compatible with the equilibrium.
    #[arg(long = "dir", value_enum)]
    pub direction: Option<Direction>,
    #[arg(long)]
    pub seeds: Option<usize>,
    #[arg(long)]
    pub radius: Option<f64>,
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long, value_enum)]
    pub projection: Option<Projection>,
}

#[derive(Debug, Args)]
pub struct AClassArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Time discarded before sampling (overrides --transient here).
    #[arg(long = "transient-cut")]
    pub transient_cut: Option<f64>,
    #[arg(long = "total-time")]
    pub total_time: Option<f64>,
    #[arg(long)]
    pub seeds: Option<usize>,
    #[arg(long)]
    pub radius: Option<f64>,
    #[arg(long = "sample-interval")]
    pub sample_interval: Option<f64>,
    #[arg(long, value_enum)]
    pub projection: Option<Projection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FeigenbaumOp {
    /// Next value from `b_prev b_curr`.
    Next,
    /// Accumulation point from `b_prev b_curr`.
    Accum,
    /// Interval ratio from `b0 b1 b2`.
    Delta,
}

#[derive(Debug, Args)]
pub struct FeigenbaumArgs {
    #[arg(value_enum)]
    pub op: FeigenbaumOp,
    #[arg(required = true, allow_negative_numbers = true)]
    pub values: Vec<f64>,
}

/// Destination of the main output.
fn open_output(path: &Option<PathBuf>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    })
}

fn emit(
    cfg: &RunConfig,
    header: &Header,
    table: &Table,
    plot: impl FnOnce() -> Vec<Panel>,
) -> Result<(), CliError> {
    let mut out = open_output(&cfg.output)?;
    match cfg.format {
        Format::Csv => write_csv(&mut out, header, table)?,
        Format::Json => write_json(&mut out, header, table)?,
        Format::Svg => {
            let comments: String = header
                .lines
                .iter()
                .map(|(k, v)| format!("<!-- {k}: {} -->\n", v.replace("--", "- -")))
                .collect();
            out.write_all(comments.as_bytes())?;
            out.write_all(svg::render(&plot()).as_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Per-item diagnostics: a sidecar next to the output file, else standard error.
fn emit_diagnostics(cfg: &RunConfig, header: &Header, table: &Table) -> Result<(), CliError> {
    match &cfg.output {
        Some(p) => {
            let mut f = BufWriter::new(File::create(sidecar_path(p))?);
            write_csv(&mut f, header, table)?;
            f.flush()?;
        }
        None => write_csv(&mut std::io::stderr().lock(), header, table)?,
    }
    Ok(())
}

pub fn sidecar_path(p: &Path) -> PathBuf {
    let mut s = p.as_os_str().to_owned();
    s.push(".diagnostics.csv");
    PathBuf::from(s)
}

fn execution(cfg: &RunConfig) -> Execution {
    if cfg.jobs == Some(1) {
        Execution::Sequential
    } else {
        Execution::Parallel
    }
}

fn thin<T: Copy>(points: &[T], max: usize) -> Vec<T> {
    let stride = points.len().div_ceil(max).max(1);
    points.iter().step_by(stride).copied().collect()
}

fn setup(common: &CommonArgs, uses_b: bool) -> Result<(Resolver, RunConfig), CliError> {
    let r = Resolver::new(common.config.as_deref())?;
    let cfg = RunConfig::resolve(common, &r, uses_b)?;
    configure_pool(cfg.jobs)?;
    Ok((r, cfg))
}

pub fn run(cmd: Command) -> Result<i32, CliError> {
    match cmd {
        Command::Equilibria(a) => cmd_equilibria(a),
        Command::Orbit(a) => cmd_orbit(a),
        Command::Scan(a) => cmd_scan(a),
        Command::Cascade(a) => cmd_cascade(a),
        Command::Manifold(a) => cmd_manifold(a),
        Command::Aclass(a) => cmd_aclass(a),
        Command::Feigenbaum(a) => cmd_feigenbaum(a),
    }
}

/// Applies `--jobs` to the global worker pool.
fn configure_pool(jobs: Option<usize>) -> Result<(), CliError> {
    #[cfg(feature = "parallel")]
    if let Some(n) = jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("cannot size worker pool: {e}")))?;
    }
    #[cfg(not(feature = "parallel"))]
    let _ = jobs;
    Ok(())
}

fn cmd_equilibria(args: EquilibriaArgs) -> Result<i32, CliError> {
    let (r, cfg) = setup(&args.common, true)?;
    r.finish()?;
    if cfg.format == Format::Svg {
        return Err(CliError::Config("equilibria has no svg rendering".into()));
    }
    let mut t = Table::new(&[
        "name", "kind", "x", "y", "z", "eig1_re", "eig1_im", "eig2_re", "eig2_im", "eig3_re",
        "eig3_im", "eig_sum",
    ]);
    for eq in equilibria(&cfg.params) {
        let mut row: Vec<Cell> = vec![eq.name.into(), eq.kind.label().into()];
        row.extend(eq.point.iter().map(|v| Cell::Num(*v)));
        for l in eq.eigenvalues {
            row.push(l.re.into());
            row.push(l.im.into());
        }
        row.push(eq.eigenvalues.iter().map(|l| l.re).sum::<f64>().into());
        t.push(row);
    }
    emit(&cfg, &cfg.header("equilibria", &r), &t, Vec::new)?;
    Ok(0)
}

fn fmt_complex(z: silnikov_core::Complex64) -> String {
    let sign = if z.im < 0.0 { "-" } else { "+" };
    format!("{}{sign}{}i", fmt_num(z.re), fmt_num(z.im.abs()))
}

fn verdict_detail(v: &AttractorVerdict) -> String {
    match v {
        AttractorVerdict::Periodic(o) => format!(
            "period_std={} crossings={} multipliers={}",
            fmt_num(o.period_std),
            o.crossings.len(),
            o.multipliers.map_or("none".into(), |m| format!("{};{}", fmt_complex(m[0]), fmt_complex(m[1])))
        ),
        AttractorVerdict::Aperiodic {
            max_rotation,
            best_rotation,
            best_recurrence,
            transient_time,
        } => format!(
            "max_rotation={max_rotation} best_rotation={best_rotation} best_recurrence={} transient_time={}",
            fmt_num(*best_recurrence),
            fmt_num(*transient_time)
        ),
        AttractorVerdict::Diverged { t, state } => format!(
            "t={} state={},{},{}",
            fmt_num(*t),
            fmt_num(state.x),
            fmt_num(state.y),
            fmt_num(state.z)
        ),
    }
}

const VERDICT_COLUMNS: [&str; 6] = ["b", "outcome", "rotation", "period", "symmetry", "residual"];

fn cmd_orbit(args: OrbitArgs) -> Result<i32, CliError> {
    let (r, cfg) = setup(&args.common, true)?;
    r.finish()?;
    let v = detect_orbit(cfg.seed, &cfg.params, &cfg.search)?;
    let mut header = cfg.header("orbit", &r);
    header.add("detail", verdict_detail(&v));
    let mut t = Table::new(&VERDICT_COLUMNS);
    let o = v.orbit();
    t.push(vec![
        cfg.params.b.into(),
        v.outcome().into(),
        o.map(|o| o.rotation).into(),
        o.map(|o| o.period).into(),
        o.map_or(Cell::Empty, |o| o.symmetry.label().into()),
        o.map(|o| o.residual).into(),
    ]);
    let plot = || {
        let pts: Vec<State> = o
            .map(|o| o.cycle.resample(2000).into_iter().map(|(_, s)| s).collect())
            .unwrap_or_default();
        [Projection::Xz, Projection::Xy]
            .into_iter()
            .map(|proj| {
                let (xl, yl) = proj.labels();
                let title = match o {
                    Some(o) => format!("b = {}, rotation {}", fmt_num(cfg.params.b), o.rotation),
                    None => format!("b = {}, {}", fmt_num(cfg.params.b), v.outcome()),
                };
                let mut p = Panel::new(title, xl, yl);
                p.series.push(Series {
                    points: pts.iter().map(|s| proj.apply(s)).collect(),
                    style: Style::Line,
                    color: 0,
                });
                p
            })
            .collect()
    };
    emit(&cfg, &header, &t, plot)?;
    Ok(if matches!(v, AttractorVerdict::Diverged { .. }) {
        3
    } else {
        0
    })
}

fn cmd_scan(args: ScanArgs) -> Result<i32, CliError> {
    let (r, cfg) = setup(&args.common, false)?;
    let b_start = r.require("b-start", args.b_start)?;
    let b_end = r.require("b-end", args.b_end)?;
    let step = r.require("step", args.step)?;
    r.finish()?;
    let rows = scan_with(b_start, b_end, step, &cfg.search, execution(&cfg))?;
    let mut t = Table::new(&VERDICT_COLUMNS);
    for row in &rows {
        t.push(vec![
            row.b.into(),
            row.outcome.clone().into(),
            row.rotation.into(),
            row.period.into(),
            row.symmetry.map_or(Cell::Empty, |s| s.label().into()),
            row.residual.into(),
        ]);
    }
    let plot = || {
        let mut p = Panel::new("rotation number", "b", "rotation");
        p.reverse_x = true;
        p.series.push(Series {
            points: rows
                .iter()
                .filter_map(|r| Some((r.b, r.rotation? as f64)))
                .collect(),
            style: Style::Markers,
            color: 0,
        });
        p.series.push(Series {
            points: rows
                .iter()
                .filter(|r| r.rotation.is_none())
                .map(|r| (r.b, 0.0))
                .collect(),
            style: Style::Markers,
            color: 1,
        });
        vec![p]
    };
    emit(&cfg, &cfg.header("scan", &r), &t, plot)?;
    Ok(0)
}

fn cmd_cascade(args: CascadeArgs) -> Result<i32, CliError> {
    let (r, cfg) = setup(&args.common, false)?;
    let character = r.require("character", args.character)?;
    let Some((hi, lo)) = default_interval(character) else {
        return Err(CliError::Config(format!(
            "character must be 1, 13 or 3, got {character}"
        )));
    };
    let depth = r.get("depth", args.depth, 0)?;
    let tol_b = r.get("tol-b", args.tol_b, default_tol_b(character))?;
    let b_upper = r.get("b-upper", args.b_upper, hi)?;
    let b_lower = r.get("b-lower", args.b_lower, lo)?;
    r.finish()?;
    if !(tol_b > 0.0) {
        return Err(CliError::Config("--tol-b must be positive".into()));
    }
    let res = run_series(character, b_upper, b_lower, depth, tol_b, &cfg.search);
    let mut header = cfg.header("cascade", &r);
    if let Some(d) = &res.diagnostic {
        header.add("diagnostic", d.clone());
        eprintln!("cascade: {d}");
    }
    let mut t = Table::new(&["character", "n", "b", "kind", "bracket_width"]);
    for rec in &res.records {
        t.push(vec![
            rec.character.into(),
            rec.index.into(),
            rec.b_value.into(),
            rec.kind.label().into(),
            rec.bracket_width.into(),
        ]);
    }
    let plot = || {
        let mut p = Panel::new(format!("series {character}"), "n", "b");
        p.series.push(Series {
            points: res
                .records
                .iter()
                .filter(|r| r.index >= 0)
                .map(|r| (r.index as f64, r.b_value))
                .collect(),
            style: Style::Markers,
            color: 0,
        });
        vec![p]
    };
    emit(&cfg, &header, &t, plot)?;
    let complete = res.records.iter().filter(|r| r.index >= 0).count() == depth + 1;
    Ok(if complete { 0 } else { 4 })
}

fn cmd_manifold(args: ManifoldArgs) -> Result<i32, CliError> {
    let (r, cfg) = setup(&args.common, true)?;
    let name: String = r.require("eq", args.equilibrium)?;
    let eqs = equilibria(&cfg.params);
    let eq = eqs
        .iter()
        .find(|e| e.name == name)
        .ok_or_else(|| CliError::Config(format!("--eq must be p0, p1 or p2, got {name:?}")))?;
    let natural = match eq.kind {
        EquilibriumKind::SaddleFocus1StableDim => "forward",
        _ => "backward",
    };
    let dir_text = r.get(
        "dir",
        args.direction.map(|d| format!("{d:?}").to_lowercase()),
        natural.to_string(),
    )?;
    let dir = match dir_text.as_str() {
        "forward" => TimeDirection::Forward,
        "backward" => TimeDirection::Backward,
        other => {
            return Err(CliError::Config(format!(
                "--dir must be forward or backward, got {other:?}"
            )))
        }
    };
    let d = ManifoldOptions::default();
    let opts = ManifoldOptions {
        seed_radius: r.get("radius", args.radius, d.seed_radius)?,
        seed_count: r.get("seeds", args.seeds, d.seed_count)?,
        horizon: r.get("horizon", args.horizon, d.horizon)?,
        integrator: cfg.search.integrator,
    };
    let proj = projection(&r, args.projection)?;
    r.finish()?;
    let sweep = sweep_manifold_with(eq, dir, &cfg.params, &opts, execution(&cfg))?;
    let header = cfg.header("manifold", &r);
    let mut t = Table::new(&["curve_id", "t", "x", "y", "z"]);
    let mut diag = Table::new(&["curve_id", "angle", "points", "exit_time"]);
    for (id, c) in sweep.curves.iter().enumerate() {
        for (time, s) in &c.trajectory.samples {
            t.push(vec![
                id.into(),
                (*time).into(),
                s.x.into(),
                s.y.into(),
                s.z.into(),
            ]);
        }
        diag.push(vec![
            id.into(),
            c.angle.into(),
            c.trajectory.samples.len().into(),
            c.exit_time.into(),
        ]);
    }
    let plot = || {
        let (xl, yl) = proj.labels();
        let kind = if dir == TimeDirection::Forward {
            "unstable"
        } else {
            "stable"
        };
        let mut p = Panel::new(
            format!(
                "{kind} manifold of {}, b = {}",
                eq.name,
                fmt_num(cfg.params.b)
            ),
            xl,
            yl,
        );
        for c in &sweep.curves {
            p.series.push(Series {
                points: c
                    .trajectory
                    .samples
                    .iter()
                    .map(|(_, s)| proj.apply(s))
                    .collect(),
                style: Style::Line,
                color: 0,
            });
        }
        vec![p]
    };
    emit(&cfg, &header, &t, plot)?;
    emit_diagnostics(&cfg, &header, &diag)?;
    Ok(0)
}

fn projection(r: &Resolver, flag: Option<Projection>) -> Result<Projection, CliError> {
    let text = r.get(
        "projection",
        flag.map(|p| format!("{p:?}").to_lowercase()),
        "xz".to_string(),
    )?;
    <Projection as ValueEnum>::from_str(&text, true).map_err(CliError::Config)
}

fn cmd_aclass(args: AClassArgs) -> Result<i32, CliError> {
    let (r, cfg) = setup(&args.common, true)?;
    let d = AClassOptions::default();
    let opts = AClassOptions {
        transient_cut: r.get("transient-cut", args.transient_cut, d.transient_cut)?,
        total_time: r.get("total-time", args.total_time, d.total_time)?,
        seed_count: r.get("seeds", args.seeds, d.seed_count)?,
        seed_radius: r.get("radius", args.radius, d.seed_radius)?,
        sample_interval: r.get("sample-interval", args.sample_interval, d.sample_interval)?,
        integrator: cfg.search.integrator,
    };
    let proj = projection(&r, args.projection)?;
    r.finish()?;
    let sample = sample_aclass_with(&cfg.params, &opts, execution(&cfg))?;
    let header = cfg.header("aclass", &r);
    let mut t = Table::new(&["x", "y", "z"]);
    for s in &sample.points {
        t.push(vec![s.x.into(), s.y.into(), s.z.into()]);
    }
    let mut diag = Table::new(&["seed_id", "angle", "points", "diverged_t"]);
    for (i, s) in sample.seeds.iter().enumerate() {
        diag.push(vec![
            i.into(),
            s.angle.into(),
            s.points.into(),
            s.diverged.map(|d| d.0).into(),
        ]);
    }
    let plot = || {
        let (xl, yl) = proj.labels();
        let mut p = Panel::new(format!("attractor, b = {}", fmt_num(cfg.params.b)), xl, yl);
        p.series.push(Series {
            points: thin(&sample.points, SVG_MAX_POINTS)
                .iter()
                .map(|s| proj.apply(s))
                .collect(),
            style: Style::Markers,
            color: 0,
        });
        vec![p]
    };
    emit(&cfg, &header, &t, plot)?;
    emit_diagnostics(&cfg, &header, &diag)?;
    Ok(if sample.diverged_seeds() > 0 { 3 } else { 0 })
}

fn cmd_feigenbaum(args: FeigenbaumArgs) -> Result<i32, CliError> {
    let v = &args.values;
    let need = if args.op == FeigenbaumOp::Delta { 3 } else { 2 };
    if v.len() != need {
        return Err(CliError::Config(format!(
            "{:?} takes {need} values, got {}",
            args.op,
            v.len()
        )));
    }
    let out = match args.op {
        FeigenbaumOp::Next => feigenbaum_next(v[0], v[1])?,
        FeigenbaumOp::Accum => feigenbaum_accumulation(v[0], v[1])?,
        FeigenbaumOp::Delta => feigenbaum_delta(v[0], v[1], v[2])?,
    };
    println!("{}", fmt_num(out));
    Ok(0)
}
