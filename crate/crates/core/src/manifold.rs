//! Seeded sweeps of the two-dimensional invariant manifolds of the equilibria
//! and point-cloud samples of the attractor (the limit set of the unstable
//! manifold of `p0`).

use std::f64::consts::PI;
use std::ops::ControlFlow;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::{
    directed_field, drive, integrate_directed, Integration, IntegratorOptions, TimeDirection,
    Trajectory,
};
use crate::model::{equilibria, Equilibrium, EquilibriumKind, State, SystemParams};
use crate::par::{map_ordered, Execution};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ManifoldOptions {
    pub seed_radius: f64,
    pub seed_count: usize,
    pub horizon: f64,
    pub integrator: IntegratorOptions,
}

impl Default for ManifoldOptions {
    fn default() -> Self {
        Self {
            seed_radius: 1e-4,
            seed_count: 72,
            horizon: 60.0,
            integrator: IntegratorOptions::default(),
        }
    }
}

impl ManifoldOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.seed_radius > 0.0 && self.seed_radius.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "seed_radius must be positive, got {}",
                self.seed_radius
            )));
        }
        if self.seed_count == 0 {
            return Err(Error::InvalidParameter(
                "seed_count must be at least 1".into(),
            ));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "horizon must be positive, got {}",
                self.horizon
            )));
        }
        self.integrator.validate()
    }
}

/// One integral curve of a sweep. Times are elapsed integration time in the
/// sweep direction.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldCurve {
    pub angle: f64,
    pub seed: State,
    pub trajectory: Trajectory,
    /// Time at which the curve left the divergence ball, if it did.
    pub exit_time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldSweep {
    pub equilibrium: Equilibrium,
    pub time_direction: TimeDirection,
    /// Ordered by seed angle.
    pub curves: Vec<ManifoldCurve>,
    pub seed_radius: f64,
    pub seed_count: usize,
    pub horizon: f64,
}

/// Seeds on the circle of radius `radius` around the equilibrium in its
/// complex eigenplane. For even `n`, seed `k + n/2` is the exact reflection of
/// seed `k` about the equilibrium.
pub fn eigenplane_seeds(eq: &Equilibrium, radius: f64, n: usize) -> Vec<(f64, State)> {
    let [u, v] = eq.plane_basis;
    let offset = |theta: f64| (u * theta.cos() + v * theta.sin()) * radius;
    let half = n / 2;
    (0..n)
        .map(|k| {
            let theta = 2.0 * PI * k as f64 / n as f64;
            let d = if n.is_multiple_of(2) && k >= half {
                -offset(2.0 * PI * (k - half) as f64 / n as f64)
            } else {
                offset(theta)
            };
            (theta, eq.point + d)
        })
        .collect()
}

/// Integrates a circle of eigenplane seeds: forward along the unstable plane of
/// a one-stable-dimensional saddle-focus, backward along the stable plane of a
/// two-stable-dimensional one.
pub fn sweep_manifold(
    eq: &Equilibrium,
    dir: TimeDirection,
    p: &SystemParams,
    opts: &ManifoldOptions,
) -> Result<ManifoldSweep> {
    sweep_manifold_with(eq, dir, p, opts, Execution::default())
}

pub fn sweep_manifold_with(
    eq: &Equilibrium,
    dir: TimeDirection,
    p: &SystemParams,
    opts: &ManifoldOptions,
    exec: Execution,
) -> Result<ManifoldSweep> {
    opts.validate()?;
    match (eq.kind, dir) {
        (EquilibriumKind::SaddleFocus1StableDim, TimeDirection::Forward)
        | (EquilibriumKind::SaddleFocus2StableDim, TimeDirection::Backward) => {}
        (kind, dir) => {
            return Err(Error::InvalidParameter(format!(
                "{dir:?} sweep is not defined for a {} equilibrium",
                kind.label()
            )))
        }
    }
    let integ = opts.integrator.with_max_time(opts.horizon);
    let seeds = eigenplane_seeds(eq, opts.seed_radius, opts.seed_count);
    let curves = map_ordered(&seeds, exec, |&(angle, seed)| {
        integrate_directed(seed, p, dir, &integ).map(|run| {
            let exit_time = match &run {
                Integration::Diverged { t, .. } => Some(*t),
                Integration::Completed(_) => None,
            };
            let trajectory = match run {
                Integration::Completed(t) | Integration::Diverged { trajectory: t, .. } => t,
            };
            ManifoldCurve {
                angle,
                seed,
                trajectory,
                exit_time,
            }
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(ManifoldSweep {
        equilibrium: eq.clone(),
        time_direction: dir,
        curves,
        seed_radius: opts.seed_radius,
        seed_count: opts.seed_count,
        horizon: opts.horizon,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AClassOptions {
    pub transient_cut: f64,
    pub total_time: f64,
    pub seed_count: usize,
    pub seed_radius: f64,
    /// Spacing of the uniform post-transient samples.
    pub sample_interval: f64,
    pub integrator: IntegratorOptions,
}

impl Default for AClassOptions {
    fn default() -> Self {
        Self {
            transient_cut: 3000.0,
            total_time: 6000.0,
            seed_count: 8,
            seed_radius: 1e-4,
            sample_interval: 0.1,
            integrator: IntegratorOptions::default(),
        }
    }
}

impl AClassOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.transient_cut >= 0.0 && self.transient_cut < self.total_time) {
            return Err(Error::InvalidParameter(format!(
                "need 0 <= transient_cut < total_time, got {} and {}",
                self.transient_cut, self.total_time
            )));
        }
        if !self.total_time.is_finite() {
            return Err(Error::InvalidParameter("total_time must be finite".into()));
        }
        if self.seed_count == 0 {
            return Err(Error::InvalidParameter(
                "seed_count must be at least 1".into(),
            ));
        }
        if !(self.seed_radius > 0.0 && self.sample_interval > 0.0) {
            return Err(Error::InvalidParameter(
                "seed_radius and sample_interval must be positive".into(),
            ));
        }
        self.integrator.validate()
    }
}

/// Outcome of one seed of the attractor sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeedReport {
    pub angle: f64,
    pub seed: State,
    pub points: usize,
    /// Time and state where the seed left the divergence ball.
    pub diverged: Option<(f64, State)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AClassSample {
    /// Pooled post-transient samples, seed by seed.
    pub points: Vec<State>,
    pub b: f64,
    pub transient_cut: f64,
    pub total_time: f64,
    pub seeds: Vec<SeedReport>,
}

impl AClassSample {
    pub fn diverged_seeds(&self) -> usize {
        self.seeds.iter().filter(|s| s.diverged.is_some()).count()
    }

    pub fn max_norm(&self) -> f64 {
        self.points.iter().map(|s| s.norm()).fold(0.0, f64::max)
    }
}

/// Samples the attractor with the default fan of 8 seeds.
pub fn sample_aclass(
    p: &SystemParams,
    transient_cut: f64,
    total_time: f64,
) -> Result<AClassSample> {
    let opts = AClassOptions {
        transient_cut,
        total_time,
        ..AClassOptions::default()
    };
    sample_aclass_with(p, &opts, Execution::default())
}

pub fn sample_aclass_with(
    p: &SystemParams,
    opts: &AClassOptions,
    exec: Execution,
) -> Result<AClassSample> {
    opts.validate()?;
    let [p0, ..] = equilibria(p);
    let seeds = eigenplane_seeds(&p0, opts.seed_radius, opts.seed_count);
    let integ = opts.integrator.with_max_time(opts.total_time);
    let runs = map_ordered(&seeds, exec, |&(angle, seed)| {
        let mut points = Vec::new();
        let mut next = opts.transient_cut;
        let exit = drive(
            directed_field(*p, TimeDirection::Forward),
            seed,
            &integ,
            |step| {
                while next <= step.t1() {
                    points.push(step.eval(next));
                    next = opts.transient_cut + opts.sample_interval * (points.len() as f64);
                }
                ControlFlow::Continue(())
            },
        )?;
        // samples past the exit point are outside the ball and dropped
        if let Some((t, _)) = exit {
            let keep = ((t - opts.transient_cut) / opts.sample_interval)
                .ceil()
                .max(0.0) as usize;
            points.truncate(keep);
        }
        Ok::<_, Error>((
            SeedReport {
                angle,
                seed,
                points: points.len(),
                diverged: exit,
            },
            points,
        ))
    });
    let mut sample = AClassSample {
        points: Vec::new(),
        b: p.b,
        transient_cut: opts.transient_cut,
        total_time: opts.total_time,
        seeds: Vec::with_capacity(runs.len()),
    };
    for run in runs {
        let (report, points) = run?;
        sample.seeds.push(report);
        sample.points.extend(points);
    }
    Ok(sample)
}

/// Symmetric Hausdorff distance between two point sets.
pub fn hausdorff(a: &[State], b: &[State]) -> f64 {
    fn directed(a: &[State], b: &[State]) -> f64 {
        if a.is_empty() {
            return 0.0;
        }
        if b.is_empty() {
            return f64::INFINITY;
        }
        let mut sorted = b.to_vec();
        sorted.sort_by(|p, q| p.x.total_cmp(&q.x));
        let mut worst: f64 = 0.0;
        for x in a {
            // sweep outward in x from the insertion point, stopping once the
            // x-gap alone exceeds the best distance
            let i = sorted.partition_point(|y| y.x < x.x);
            let mut best = f64::INFINITY;
            for y in sorted[i..].iter() {
                if (y.x - x.x).powi(2) >= best {
                    break;
                }
                best = best.min((y - x).norm_squared());
            }
            for y in sorted[..i].iter().rev() {
                if (y.x - x.x).powi(2) >= best {
                    break;
                }
                best = best.min((y - x).norm_squared());
            }
            worst = worst.max(best);
        }
        worst.sqrt()
    }
    directed(a, b).max(directed(b, a))
}
