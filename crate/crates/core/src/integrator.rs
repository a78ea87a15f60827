//! Dormand–Prince 5(4) integration with free 4th-order dense output and
//! root-resolved section crossings.

use nalgebra::SVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{vector_field, State, SystemParams};

// Butcher tableau.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
// Error weights (5th minus 4th order).
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
// Dense output.
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const MIN_STEP: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    pub max_time: f64,
    /// Norm beyond which the trajectory counts as unbounded.
    pub divergence_radius: f64,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            max_step: 0.1,
            max_time: 100.0,
            divergence_radius: 1e3,
        }
    }
}

impl IntegratorOptions {
    pub fn with_max_time(mut self, t: f64) -> Self {
        self.max_time = t;
        self
    }

    pub fn with_tolerances(mut self, rel_tol: f64, abs_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self.abs_tol = abs_tol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.rel_tol > 0.0
            && self.abs_tol > 0.0
            && self.max_step > 0.0
            && self.max_time >= 0.0
            && self.divergence_radius > 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "integrator options {self:?}"
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TimeDirection {
    Forward,
    Backward,
}

/// Dense interpolant over one accepted step.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseStep<const N: usize> {
    pub t0: f64,
    pub h: f64,
    cont: [SVector<f64, N>; 5],
}

impl<const N: usize> DenseStep<N> {
    pub fn t1(&self) -> f64 {
        self.t0 + self.h
    }

    pub fn start(&self) -> SVector<f64, N> {
        self.cont[0]
    }

    pub fn end(&self) -> SVector<f64, N> {
        self.cont[0] + self.cont[1]
    }

    /// The interpolant of the pointwise negated solution.
    pub fn negated(&self) -> Self {
        Self {
            t0: self.t0,
            h: self.h,
            cont: self.cont.map(|c| -c),
        }
    }

    pub fn eval(&self, t: f64) -> SVector<f64, N> {
        let s = (t - self.t0) / self.h;
        let s1 = 1.0 - s;
        let c = &self.cont;
        c[0] + (c[1] + (c[2] + (c[3] + c[4] * s1) * s) * s1) * s
    }
}

/// Adaptive stepper for `y' = f(y)`.
pub struct Dopri5<F, const N: usize> {
    f: F,
    t: f64,
    y: SVector<f64, N>,
    k1: SVector<f64, N>,
    h: f64,
    rel_tol: f64,
    abs_tol: f64,
    max_step: f64,
    /// Fixed-step mode disables error control.
    fixed: bool,
    pub evaluations: usize,
    pub rejected: usize,
}

impl<F, const N: usize> Dopri5<F, N>
where
    F: Fn(&SVector<f64, N>) -> SVector<f64, N>,
{
    pub fn new(f: F, y0: SVector<f64, N>, rel_tol: f64, abs_tol: f64, max_step: f64) -> Self {
        let k1 = f(&y0);
        let mut me = Self {
            f,
            t: 0.0,
            y: y0,
            k1,
            h: 0.0,
            rel_tol,
            abs_tol,
            max_step,
            fixed: false,
            evaluations: 1,
            rejected: 0,
        };
        me.h = me.initial_step();
        me
    }

    /// Constant step `h`, no error control.
    pub fn fixed_step(f: F, y0: SVector<f64, N>, h: f64) -> Self {
        let mut me = Self::new(f, y0, 1.0, 1.0, h);
        me.h = h;
        me.fixed = true;
        me
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn state(&self) -> SVector<f64, N> {
        self.y
    }

    fn scale(&self, a: &SVector<f64, N>, b: &SVector<f64, N>) -> SVector<f64, N> {
        a.zip_map(b, |u, v| self.abs_tol + self.rel_tol * u.abs().max(v.abs()))
    }

    // Hairer's starting step heuristic.
    fn initial_step(&mut self) -> f64 {
        let sc = self.scale(&self.y, &self.y);
        let d0 = self.y.component_div(&sc).norm() / (N as f64).sqrt();
        let d1 = self.k1.component_div(&sc).norm() / (N as f64).sqrt();
        let h0 = if d0 < 1e-5 || d1 < 1e-5 {
            1e-6
        } else {
            0.01 * d0 / d1
        };
        let h0 = h0.min(self.max_step);
        let y1 = self.y + self.k1 * h0;
        let f1 = (self.f)(&y1);
        self.evaluations += 1;
        let d2 = (f1 - self.k1).component_div(&sc).norm() / (N as f64).sqrt() / h0;
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(1.0 / 5.0)
        };
        (100.0 * h0).min(h1).min(self.max_step)
    }

    /// Advances by one accepted step, never past `t_end`.
    pub fn step(&mut self, t_end: f64) -> Result<DenseStep<N>> {
        loop {
            let mut h = self.h.min(self.max_step);
            let last = self.t + h >= t_end;
            if last {
                h = t_end - self.t;
            }
            if h < MIN_STEP && !last {
                return Err(Error::StepSizeUnderflow { t: self.t, h });
            }
            let f = &self.f;
            let y = self.y;
            let k1 = self.k1;
            let k2 = f(&(y + k1 * (h * A21)));
            let k3 = f(&(y + (k1 * A31 + k2 * A32) * h));
            let k4 = f(&(y + (k1 * A41 + k2 * A42 + k3 * A43) * h));
            let k5 = f(&(y + (k1 * A51 + k2 * A52 + k3 * A53 + k4 * A54) * h));
            let k6 = f(&(y + (k1 * A61 + k2 * A62 + k3 * A63 + k4 * A64 + k5 * A65) * h));
            let y1 = y + (k1 * A71 + k3 * A73 + k4 * A74 + k5 * A75 + k6 * A76) * h;
            let k7 = f(&y1);
            self.evaluations += 6;
            if !y1.iter().all(|v| v.is_finite()) {
                if self.fixed {
                    return Err(Error::NonFinite { t: self.t });
                }
                self.h = h * 0.1;
                self.rejected += 1;
                continue;
            }

            let err_norm = if self.fixed {
                0.0
            } else {
                let err = (k1 * E1 + k3 * E3 + k4 * E4 + k5 * E5 + k6 * E6 + k7 * E7) * h;
                let sc = self.scale(&y, &y1);
                err.component_div(&sc).norm() / (N as f64).sqrt()
            };

            if err_norm <= 1.0 {
                let ydiff = y1 - y;
                let bspl = k1 * h - ydiff;
                let dense = DenseStep {
                    t0: self.t,
                    h,
                    cont: [
                        y,
                        ydiff,
                        bspl,
                        ydiff - k7 * h - bspl,
                        (k1 * D1 + k3 * D3 + k4 * D4 + k5 * D5 + k6 * D6 + k7 * D7) * h,
                    ],
                };
                self.t = if last { t_end } else { self.t + h };
                self.y = y1;
                self.k1 = k7;
                if !self.fixed {
                    let fac = (0.9 * err_norm.max(1e-10).powf(-0.2)).clamp(0.2, 10.0);
                    // keep the controller's proposal when the step was shortened to hit t_end
                    if !last || h >= self.h {
                        self.h = h * fac;
                    }
                }
                return Ok(dense);
            }
            self.rejected += 1;
            self.h = h * (0.9 * err_norm.powf(-0.2)).clamp(0.2, 1.0);
        }
    }
}

/// Vector field in the requested time direction.
pub fn directed_field(p: SystemParams, dir: TimeDirection) -> impl Fn(&State) -> State + Clone {
    move |s| match dir {
        TimeDirection::Forward => vector_field(s, &p),
        TimeDirection::Backward => -vector_field(s, &p),
    }
}

/// Sampled trajectory together with its piecewise dense interpolant.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<(f64, State)>,
    pub dense: Vec<DenseStep<3>>,
}

impl Trajectory {
    fn starting_at(s0: State) -> Self {
        Self {
            samples: vec![(0.0, s0)],
            dense: Vec::new(),
        }
    }

    fn push(&mut self, step: DenseStep<3>) {
        self.samples.push((step.t1(), step.end()));
        self.dense.push(step);
    }

    pub fn start_time(&self) -> f64 {
        self.samples.first().map_or(0.0, |s| s.0)
    }

    pub fn end_time(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.0)
    }

    pub fn final_state(&self) -> State {
        self.samples.last().map_or_else(State::zeros, |s| s.1)
    }

    /// Dense value at `t`; clamps outside the covered interval.
    pub fn eval(&self, t: f64) -> State {
        if self.dense.is_empty() || t <= self.start_time() {
            return self.samples[0].1;
        }
        if t >= self.end_time() {
            return self.final_state();
        }
        let i = self.dense.partition_point(|d| d.t1() < t);
        self.dense[i.min(self.dense.len() - 1)].eval(t)
    }

    /// Point reflection `s -> -s` of the whole trajectory.
    pub fn reflected(&self) -> Self {
        Self {
            samples: self.samples.iter().map(|(t, s)| (*t, -s)).collect(),
            dense: self.dense.iter().map(DenseStep::negated).collect(),
        }
    }

    /// Uniform resampling with `n` points on `[t_start, t_end]`.
    pub fn resample(&self, n: usize) -> Vec<(f64, State)> {
        let (t0, t1) = (self.start_time(), self.end_time());
        if n < 2 {
            return vec![(t0, self.eval(t0))];
        }
        (0..n)
            .map(|i| {
                let t = t0 + (t1 - t0) * i as f64 / (n - 1) as f64;
                (t, self.eval(t))
            })
            .collect()
    }
}

/// Result of a forward run.
#[derive(Debug, Clone, PartialEq)]
pub enum Integration {
    Completed(Trajectory),
    /// The norm exceeded `divergence_radius`; the partial trajectory ends at the exit.
    Diverged {
        t: f64,
        state: State,
        trajectory: Trajectory,
    },
}

impl Integration {
    pub fn trajectory(&self) -> &Trajectory {
        match self {
            Self::Completed(t) => t,
            Self::Diverged { trajectory, .. } => trajectory,
        }
    }

    pub fn is_diverged(&self) -> bool {
        matches!(self, Self::Diverged { .. })
    }
}

/// Drives a stepper over `[0, opts.max_time]`, calling `visit` on each accepted
/// step. Returns the divergence exit if the radius is crossed.
pub(crate) fn drive<F>(
    f: F,
    s0: State,
    opts: &IntegratorOptions,
    mut visit: impl FnMut(&DenseStep<3>) -> std::ops::ControlFlow<()>,
) -> Result<Option<(f64, State)>>
where
    F: Fn(&State) -> State,
{
    opts.validate()?;
    if !s0.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite { t: 0.0 });
    }
    if s0.norm() > opts.divergence_radius {
        return Ok(Some((0.0, s0)));
    }
    let mut solver = Dopri5::new(f, s0, opts.rel_tol, opts.abs_tol, opts.max_step);
    while solver.time() < opts.max_time {
        let step = solver.step(opts.max_time)?;
        if visit(&step).is_break() {
            break;
        }
        if step.end().norm() > opts.divergence_radius {
            return Ok(Some((step.t1(), step.end())));
        }
    }
    Ok(None)
}

/// Integrates the flow from `s0` over `[0, opts.max_time]`.
pub fn integrate(s0: State, p: &SystemParams, opts: &IntegratorOptions) -> Result<Integration> {
    integrate_directed(s0, p, TimeDirection::Forward, opts)
}

/// As [`integrate`], with `Backward` following the negated field.
pub fn integrate_directed(
    s0: State,
    p: &SystemParams,
    dir: TimeDirection,
    opts: &IntegratorOptions,
) -> Result<Integration> {
    let mut traj = Trajectory::starting_at(s0);
    let exit = drive(directed_field(*p, dir), s0, opts, |step| {
        traj.push(step.clone());
        std::ops::ControlFlow::Continue(())
    })?;
    Ok(match exit {
        None => Integration::Completed(traj),
        Some((t, state)) => Integration::Diverged {
            t,
            state,
            trajectory: traj,
        },
    })
}

/// Scalar section function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SectionFunction {
    /// `g(s) = s[i]`.
    Coordinate(usize),
    /// `g(s) = normal · s − offset`.
    Plane { normal: [f64; 3], offset: f64 },
}

impl SectionFunction {
    pub fn eval(&self, s: &State) -> f64 {
        match *self {
            Self::Coordinate(i) => s[i],
            Self::Plane { normal, offset } => {
                normal[0] * s.x + normal[1] * s.y + normal[2] * s.z - offset
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Crossing {
    Increasing,
    Decreasing,
    Both,
}

/// Poincaré section: zero set of `function`, filtered by direction and an
/// optional half-space guard `guard · s > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectionSpec {
    pub function: SectionFunction,
    pub crossing: Crossing,
    pub guard: Option<[f64; 3]>,
}

impl SectionSpec {
    /// `y = 0` crossed with `y` decreasing: the local maxima of `x(t)`.
    pub fn x_maxima() -> Self {
        Self {
            function: SectionFunction::Coordinate(1),
            crossing: Crossing::Decreasing,
            guard: None,
        }
    }

    fn accepts(&self, s: &State, direction: f64) -> bool {
        let dir_ok = match self.crossing {
            Crossing::Increasing => direction > 0.0,
            Crossing::Decreasing => direction < 0.0,
            Crossing::Both => true,
        };
        let guard_ok = self
            .guard
            .is_none_or(|g| g[0] * s.x + g[1] * s.y + g[2] * s.z > 0.0);
        dir_ok && guard_ok
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectionEvent {
    pub t: f64,
    pub s: State,
    /// Sign of `dg/dt` at the crossing.
    pub direction: f64,
}

const EVENT_REL_TOL: f64 = 1e-10;
const EVENT_MAX_ITER: usize = 60;
const EVENT_BISECTIONS: usize = 6;

/// Sign change of `g` inside one dense step, refined to `|g| <= 1e-10 (1 + |s|)`
/// by bisection followed by safeguarded secant steps.
///
/// Returns `(t, state, direction)`. A zero at the step start is not a crossing
/// (it belonged to the previous step).
pub fn crossing_in_step<const N: usize>(
    step: &DenseStep<N>,
    g: impl Fn(&SVector<f64, N>) -> f64,
) -> Option<(f64, SVector<f64, N>, f64)> {
    let (mut ta, mut tb) = (step.t0, step.t1());
    let (mut ga, mut gb) = (g(&step.start()), g(&step.end()));
    if ga == 0.0 || ga.signum() == gb.signum() && gb != 0.0 {
        return None;
    }
    let direction = (gb - ga).signum();
    let mut t_root = tb;
    let mut s_root = step.end();
    if gb != 0.0 {
        for it in 0..EVENT_MAX_ITER {
            let mut t = if it < EVENT_BISECTIONS {
                0.5 * (ta + tb)
            } else {
                tb - gb * (tb - ta) / (gb - ga)
            };
            if !(t > ta && t < tb) {
                t = 0.5 * (ta + tb);
            }
            s_root = step.eval(t);
            t_root = t;
            let gt = g(&s_root);
            let scale = 1.0 + s_root.iter().take(3).map(|v| v * v).sum::<f64>().sqrt();
            if gt.abs() <= EVENT_REL_TOL * scale || tb - ta <= f64::EPSILON * tb.abs().max(1.0) {
                break;
            }
            if gt.signum() == ga.signum() {
                ta = t;
                ga = gt;
            } else {
                tb = t;
                gb = gt;
            }
        }
    }
    Some((t_root, s_root, direction))
}

/// Locates an accepted crossing of `section` inside one dense step, if any.
pub fn locate_event(section: &SectionSpec, step: &DenseStep<3>) -> Option<SectionEvent> {
    let (t, s, direction) = crossing_in_step(step, |s| section.function.eval(s))?;
    section
        .accepts(&s, direction)
        .then_some(SectionEvent { t, s, direction })
}

/// Forward run with all accepted section crossings.
pub fn integrate_with_events(
    s0: State,
    p: &SystemParams,
    section: &SectionSpec,
    opts: &IntegratorOptions,
) -> Result<(Integration, Vec<SectionEvent>)> {
    let mut traj = Trajectory::starting_at(s0);
    let mut events = Vec::new();
    let exit = drive(
        directed_field(*p, TimeDirection::Forward),
        s0,
        opts,
        |step| {
            if let Some(ev) = locate_event(section, step) {
                events.push(ev);
            }
            traj.push(step.clone());
            std::ops::ControlFlow::Continue(())
        },
    )?;
    let integration = match exit {
        None => Integration::Completed(traj),
        Some((t, state)) => Integration::Diverged {
            t,
            state,
            trajectory: traj,
        },
    };
    Ok((integration, events))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector2;

    fn params(b: f64) -> SystemParams {
        SystemParams::with_b(b).unwrap()
    }

    #[test]
    fn origin_is_stationary() {
        let out = integrate(
            State::zeros(),
            &params(0.315),
            &IntegratorOptions::default(),
        )
        .unwrap();
        let traj = out.trajectory();
        assert!(!out.is_diverged());
        assert!(traj.samples.iter().all(|(_, s)| *s == State::zeros()));
        assert_eq!(traj.end_time(), 100.0);
    }

    #[test]
    fn origin_has_no_events() {
        let (_, events) = integrate_with_events(
            State::zeros(),
            &params(0.4),
            &SectionSpec::x_maxima(),
            &IntegratorOptions::default().with_max_time(50.0),
        )
        .unwrap();
        assert!(events.is_empty());
    }

    #[test]
    fn harmonic_oscillator_is_accurate() {
        let f = |y: &Vector2<f64>| Vector2::new(y[1], -y[0]);
        let mut s = Dopri5::new(f, Vector2::new(1.0, 0.0), 1e-10, 1e-12, 0.1);
        let t_end = 10.0;
        while s.time() < t_end {
            s.step(t_end).unwrap();
        }
        assert!((s.state()[0] - t_end.cos()).abs() < 1e-8);
        assert!((s.state()[1] + t_end.sin()).abs() < 1e-8);
    }

    #[test]
    fn dense_output_matches_nodes_and_exact_solution() {
        let f = |y: &Vector2<f64>| Vector2::new(y[1], -y[0]);
        let mut s = Dopri5::new(f, Vector2::new(1.0, 0.0), 1e-10, 1e-12, 0.5);
        for _ in 0..20 {
            let y0 = s.state();
            let d = s.step(100.0).unwrap();
            assert_eq!(d.eval(d.t0), y0);
            assert!((d.eval(d.t1()) - s.state()).norm() < 1e-15);
            let tm = d.t0 + 0.37 * d.h;
            assert!((d.eval(tm)[0] - tm.cos()).abs() < 1e-8);
        }
    }

    #[test]
    fn divergence_is_reported() {
        // far outside the bounded region the cubic term blows up
        let out = integrate(
            State::new(3.0, 0.0, 0.0),
            &params(0.5),
            &IntegratorOptions::default().with_max_time(50.0),
        )
        .unwrap();
        match out {
            Integration::Diverged { state, t, .. } => {
                assert!(state.norm() > 1e3);
                assert!(t < 50.0);
            }
            _ => panic!("expected divergence"),
        }
    }

    #[test]
    fn bounded_at_b_one_half() {
        let out = integrate(
            State::new(0.1, 0.0, 0.0),
            &params(0.5),
            &IntegratorOptions::default().with_max_time(2000.0),
        )
        .unwrap();
        assert!(!out.is_diverged());
        assert!(out
            .trajectory()
            .samples
            .iter()
            .all(|(_, s)| s.norm() < 10.0));
    }

    #[test]
    fn times_strictly_increase() {
        let out = integrate(
            State::new(0.1, 0.0, 0.0),
            &params(0.4),
            &IntegratorOptions::default().with_max_time(30.0),
        )
        .unwrap();
        let s = &out.trajectory().samples;
        assert!(s.windows(2).all(|w| w[1].0 > w[0].0));
    }

    #[test]
    fn events_satisfy_section_and_filters() {
        let section = SectionSpec {
            function: SectionFunction::Coordinate(1),
            crossing: Crossing::Decreasing,
            guard: Some([1.0, 0.0, 0.0]),
        };
        let (_, events) = integrate_with_events(
            State::new(0.1, 0.0, 0.0),
            &params(0.4),
            &section,
            &IntegratorOptions::default().with_max_time(300.0),
        )
        .unwrap();
        assert!(events.len() > 10);
        for e in &events {
            assert!(e.s.y.abs() <= 1e-10 * (1.0 + e.s.norm()));
            assert!(e.s.x > 0.0);
            assert!(e.s.z < 0.0);
            assert_eq!(e.direction, -1.0);
        }
    }

    #[test]
    fn plane_section_and_both_directions() {
        let section = SectionSpec {
            function: SectionFunction::Plane {
                normal: [1.0, 0.0, 0.0],
                offset: 0.5,
            },
            crossing: Crossing::Both,
            guard: None,
        };
        let (_, events) = integrate_with_events(
            State::new(0.1, 0.0, 0.0),
            &params(0.45),
            &section,
            &IntegratorOptions::default().with_max_time(200.0),
        )
        .unwrap();
        assert!(events.iter().any(|e| e.direction > 0.0));
        assert!(events.iter().any(|e| e.direction < 0.0));
        for w in events.windows(2) {
            assert_ne!(w[0].direction, w[1].direction);
        }
    }

    #[test]
    fn invalid_options_rejected() {
        let o = IntegratorOptions {
            divergence_radius: 0.5,
            ..Default::default()
        };
        assert!(integrate(State::zeros(), &params(0.4), &o).is_err());
    }
}
