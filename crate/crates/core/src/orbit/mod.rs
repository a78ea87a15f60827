//! Limit closed orbits: detection by first returns to the `x`-maxima section,
//! rotation number, and symmetry under point reflection through the origin.
//!
//! A rotation is one crossing of `y = 0` with `y` decreasing, i.e. one local
//! maximum of `x(t)`. The rotation number of a closed orbit is the number of
//! such crossings per period.

pub mod refine;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::{
    directed_field, drive, integrate_with_events, locate_event, Crossing, IntegratorOptions,
    SectionEvent, SectionFunction, SectionSpec, TimeDirection, Trajectory,
};
use crate::model::{State, SystemParams};
use refine::{project, refine_orbit, return_map, RefinedOrbit};

/// Recorded in every output header.
pub const ROTATION_CONVENTION: &str = "x-maxima: crossings of y=0 with y decreasing per period";

/// Default starting point, a small perturbation of the origin.
pub fn default_seed() -> State {
    State::new(0.1, 0.0, 0.0)
}

/// Recurrence below which a slowly converging trajectory is handed to Newton refinement.
const LOOSE_MATCH_TOL: f64 = 1e-3;
/// Refined points further than this from the observed trajectory are rejected.
const REFINE_DRIFT_TOL: f64 = 1e-2;
/// Upper bound on the time between two section events.
const MAX_EVENT_GAP: f64 = 60.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrbitSearchOptions {
    pub transient_time: f64,
    /// Section-point recurrence tolerance.
    pub match_tol: f64,
    pub max_rotation: usize,
    pub observation_events: usize,
    /// Times the transient is extended (×4, with twice the events) before
    /// giving up on periodicity.
    pub escalations: u32,
    /// Polish detected orbits and resolve slow near-critical convergence by
    /// Newton shooting on the return map.
    pub refine: bool,
    pub integrator: IntegratorOptions,
}

impl Default for OrbitSearchOptions {
    fn default() -> Self {
        Self {
            transient_time: 3000.0,
            match_tol: 1e-6,
            max_rotation: 64,
            observation_events: 512,
            escalations: 1,
            refine: true,
            integrator: IntegratorOptions::default(),
        }
    }
}

impl OrbitSearchOptions {
    pub fn validate(&self) -> Result<()> {
        self.integrator.validate()?;
        let ok = self.transient_time > 0.0
            && self.match_tol > 0.0
            && self.match_tol < 1.0
            && self.max_rotation >= 1
            && self.max_rotation * 4 <= self.observation_events;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "orbit search options {self:?}"
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Symmetry {
    /// The orbit is mapped onto itself by `s -> -s`.
    SelfSymmetric,
    /// The mirror image is a distinct orbit.
    PairMember,
}

impl Symmetry {
    pub fn label(self) -> &'static str {
        match self {
            Self::SelfSymmetric => "self-symmetric",
            Self::PairMember => "pair-member",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedOrbit {
    pub period: f64,
    /// Spread of the observed return times (zero for refined-only orbits).
    pub period_std: f64,
    pub rotation: usize,
    /// One period starting on the section.
    pub cycle: Trajectory,
    /// All crossings of `y = 0` along `cycle`, both directions.
    pub crossings: Vec<SectionEvent>,
    pub symmetry: Symmetry,
    pub residual: f64,
    /// Nontrivial Floquet multipliers, when the orbit was refined.
    pub multipliers: Option<[Complex64; 2]>,
}

impl ClosedOrbit {
    /// Integrates one period from `start` and classifies the result.
    fn build(
        start: State,
        period: f64,
        period_std: f64,
        residual: f64,
        multipliers: Option<[Complex64; 2]>,
        p: &SystemParams,
        search: &OrbitSearchOptions,
    ) -> Result<Self> {
        let both = SectionSpec {
            function: SectionFunction::Coordinate(1),
            crossing: Crossing::Both,
            guard: None,
        };
        let opts = search.integrator.with_max_time(period);
        let (run, crossings) = integrate_with_events(start, p, &both, &opts)?;
        if let crate::integrator::Integration::Diverged { t, .. } = run {
            return Err(Error::Diverged { t });
        }
        let mut orbit = Self {
            period,
            period_std,
            rotation: 0,
            cycle: run.trajectory().clone(),
            crossings,
            symmetry: Symmetry::PairMember,
            residual,
            multipliers,
        };
        orbit.rotation = rotation_number(&orbit);
        orbit.symmetry = symmetry_class(&orbit, search.match_tol.max(10.0 * residual)).0;
        Ok(orbit)
    }

    pub fn start(&self) -> State {
        self.cycle.samples[0].1
    }

    /// Point reflection of the orbit through the origin.
    pub fn mirror(&self) -> Self {
        Self {
            cycle: self.cycle.reflected(),
            crossings: self
                .crossings
                .iter()
                .map(|e| SectionEvent {
                    t: e.t,
                    s: -e.s,
                    direction: -e.direction,
                })
                .collect(),
            ..self.clone()
        }
    }

    /// Distance from `s` to the cycle.
    pub fn distance_to(&self, s: &State) -> f64 {
        distance_to_trajectory(&self.cycle, s)
    }
}

/// Distance from `s` to a trajectory, refined on the dense interpolant around
/// the nodes nearest to `s` (several, since a closed cycle revisits its start).
pub fn distance_to_trajectory(traj: &Trajectory, s: &State) -> f64 {
    let d: Vec<f64> = traj.samples.iter().map(|(_, x)| (x - s).norm()).collect();
    let nearest = d.iter().copied().fold(f64::INFINITY, f64::min);
    if !nearest.is_finite() {
        return f64::INFINITY;
    }
    let mut best = nearest;
    let mut refined = usize::MAX;
    for i in (0..d.len()).filter(|&i| d[i] <= 2.0 * nearest + f64::EPSILON) {
        // neighbouring steps are i-1 (ending at node i) and i (starting at node i)
        for k in [i.wrapping_sub(1), i] {
            let Some(step) = traj.dense.get(k) else {
                continue;
            };
            if k == refined {
                continue;
            }
            refined = k;
            // golden-section search of |x(t) - s| over the step
            let f = |t: f64| (step.eval(t) - s).norm();
            let (mut a, mut b) = (step.t0, step.t1());
            let g = 0.5 * (5f64.sqrt() - 1.0);
            for _ in 0..60 {
                let c = b - g * (b - a);
                let d = a + g * (b - a);
                if f(c) < f(d) {
                    b = d;
                } else {
                    a = c;
                }
            }
            best = best.min(f(0.5 * (a + b)));
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub enum AttractorVerdict {
    Periodic(ClosedOrbit),
    /// No recurrence with rotation up to `max_rotation`.
    Aperiodic {
        max_rotation: usize,
        /// Rotation with the smallest recurrence mismatch, and that mismatch.
        best_rotation: usize,
        best_recurrence: f64,
        transient_time: f64,
    },
    Diverged {
        t: f64,
        state: State,
    },
}

impl AttractorVerdict {
    pub fn outcome(&self) -> &'static str {
        match self {
            Self::Periodic(_) => "Periodic",
            Self::Aperiodic { .. } => "Aperiodic",
            Self::Diverged { .. } => "Diverged",
        }
    }

    pub fn orbit(&self) -> Option<&ClosedOrbit> {
        match self {
            Self::Periodic(o) => Some(o),
            _ => None,
        }
    }

    pub fn rotation(&self) -> Option<usize> {
        self.orbit().map(|o| o.rotation)
    }
}

/// Number of `x` maxima per period of the orbit.
pub fn rotation_number(orbit: &ClosedOrbit) -> usize {
    // the start (on the section) stands for the crossing closing the period
    let margin = 1e-6 * orbit.period;
    1 + orbit
        .crossings
        .iter()
        .filter(|e| e.direction < 0.0 && e.t > margin && e.t < orbit.period - margin)
        .count()
}

/// Whether the orbit coincides with its mirror image; for pair members also a
/// point whose trajectory runs along the mirror orbit.
pub fn symmetry_class(orbit: &ClosedOrbit, match_tol: f64) -> (Symmetry, Option<State>) {
    // Reflection maps maxima of x onto minima of x, so the orbit is
    // self-symmetric iff every reflected maximum is one of its minima.
    let minima: Vec<State> = orbit
        .crossings
        .iter()
        .filter(|e| e.direction > 0.0)
        .map(|e| e.s)
        .collect();
    let mut maxima: Vec<State> = orbit
        .crossings
        .iter()
        .filter(|e| e.direction < 0.0)
        .map(|e| e.s)
        .collect();
    maxima.push(orbit.start());
    let symmetric = !minima.is_empty()
        && maxima
            .iter()
            .all(|m| minima.iter().any(|n| (*n + *m).norm() < match_tol));
    if symmetric {
        (Symmetry::SelfSymmetric, None)
    } else {
        (Symmetry::PairMember, Some(-orbit.start()))
    }
}

fn recurrence(events: &[SectionEvent], r: usize) -> f64 {
    events
        .iter()
        .zip(&events[r..])
        .map(|(a, b)| (b.s - a.s).norm())
        .fold(0.0, f64::max)
}

fn period_stats(events: &[SectionEvent], r: usize) -> (f64, f64) {
    let d: Vec<f64> = events
        .iter()
        .zip(&events[r..])
        .map(|(a, b)| b.t - a.t)
        .collect();
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

enum Observation {
    Events {
        events: Vec<SectionEvent>,
        end: State,
    },
    Diverged {
        t: f64,
        state: State,
    },
}

/// Integrates `duration` from `s0`, then records `n` section events.
fn observe(
    s0: State,
    duration: f64,
    n: usize,
    p: &SystemParams,
    opts: &IntegratorOptions,
) -> Result<Observation> {
    let field = directed_field(*p, TimeDirection::Forward);
    let transient = opts.with_max_time(duration);
    let mut end = s0;
    if let Some((t, state)) = drive(&field, s0, &transient, |step| {
        end = step.end();
        std::ops::ControlFlow::Continue(())
    })? {
        return Ok(Observation::Diverged { t, state });
    }
    let section = SectionSpec::x_maxima();
    let mut events = Vec::with_capacity(n);
    let window = opts.with_max_time(MAX_EVENT_GAP * n as f64);
    let start = end;
    let exit = drive(&field, start, &window, |step| {
        if let Some(e) = locate_event(&section, step) {
            events.push(e);
            if events.len() == n {
                end = step.end();
                return std::ops::ControlFlow::Break(());
            }
        }
        std::ops::ControlFlow::Continue(())
    })?;
    if let Some((t, state)) = exit {
        return Ok(Observation::Diverged {
            t: t + duration,
            state,
        });
    }
    if events.len() < n {
        return Err(Error::InsufficientEvents {
            found: events.len(),
            needed: n,
        });
    }
    Ok(Observation::Events { events, end })
}

fn from_refined(
    orbit: &RefinedOrbit,
    events: &[SectionEvent],
    p: &SystemParams,
    search: &OrbitSearchOptions,
) -> Result<ClosedOrbit> {
    let period_std = if events.len() > orbit.rotation {
        period_stats(events, orbit.rotation).1
    } else {
        0.0
    };
    ClosedOrbit::build(
        orbit.state(),
        orbit.period,
        period_std,
        orbit.residual,
        Some(orbit.multipliers),
        p,
        search,
    )
}

/// Newton resolution of a slowly converging window with loose recurrence at `r`.
fn resolve_slow(
    r: usize,
    events: &[SectionEvent],
    p: &SystemParams,
    search: &OrbitSearchOptions,
) -> Option<RefinedOrbit> {
    let last = events.last()?;
    let guess = project(&last.s);
    let near = |o: &RefinedOrbit| (o.point - guess).norm() < REFINE_DRIFT_TOL;
    let base = refine_orbit(guess, r, p, &search.integrator)
        .ok()
        .filter(near)?;
    if base.is_stable() {
        return Some(base);
    }
    // past a flip the attractor is the doubled orbit next to the unstable one
    if base.flip_multiplier().is_some() && 2 * r <= search.max_rotation {
        let doubled = refine_orbit(guess, 2 * r, p, &search.integrator)
            .ok()
            .filter(near)
            .filter(|o| o.is_stable())?;
        let half = return_map(&doubled.point, r, p, &search.integrator).ok()?;
        if (half.image - doubled.point).norm() > 1e3 * doubled.residual.max(1e-12) {
            return Some(doubled);
        }
    }
    None
}

/// Integrates from `s0` past the transient and classifies the attractor it reaches.
pub fn detect_orbit(
    s0: State,
    p: &SystemParams,
    search: &OrbitSearchOptions,
) -> Result<AttractorVerdict> {
    search.validate()?;
    let mut state = s0;
    let mut duration = search.transient_time;
    let mut n = search.observation_events;
    let mut elapsed = 0.0;
    let mut best = (0, f64::INFINITY);
    for attempt in 0..=search.escalations {
        let (events, end) = match observe(state, duration, n, p, &search.integrator)? {
            Observation::Diverged { t, state } => {
                return Ok(AttractorVerdict::Diverged {
                    t: elapsed + t,
                    state,
                })
            }
            Observation::Events { events, end } => (events, end),
        };
        elapsed += duration;
        let recurrences: Vec<f64> = (1..=search.max_rotation)
            .map(|r| recurrence(&events, r))
            .collect();
        best = recurrences
            .iter()
            .enumerate()
            .map(|(i, d)| (i + 1, *d))
            .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });

        if let Some(r) = recurrences
            .iter()
            .position(|d| *d < search.match_tol)
            .map(|i| i + 1)
        {
            let last = events[events.len() - 1];
            if search.refine {
                if let Ok(o) = refine_orbit(project(&last.s), r, p, &search.integrator) {
                    if o.is_stable() && (o.state() - last.s).norm() < 10.0 * search.match_tol {
                        return from_refined(&o, &events, p, search)
                            .map(AttractorVerdict::Periodic);
                    }
                }
            }
            let (period, std) = period_stats(&events, r);
            let orbit =
                ClosedOrbit::build(last.s, period, std, recurrences[r - 1], None, p, search)?;
            return Ok(AttractorVerdict::Periodic(orbit));
        }

        if search.refine {
            // judge convergence on the second half of the window
            let tail = &events[events.len() / 2..];
            let loose = (1..=search.max_rotation)
                .filter(|r| tail.len() > 2 * r)
                .find(|r| recurrence(tail, *r) < LOOSE_MATCH_TOL);
            if let Some(r) = loose {
                if let Some(o) = resolve_slow(r, &events, p, search) {
                    return from_refined(&o, &events, p, search).map(AttractorVerdict::Periodic);
                }
            }
        }

        if attempt < search.escalations {
            state = end;
            duration *= 3.0;
            n *= 2;
        }
    }
    Ok(AttractorVerdict::Aperiodic {
        max_rotation: search.max_rotation,
        best_rotation: best.0,
        best_recurrence: best.1,
        transient_time: elapsed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(b: f64) -> SystemParams {
        SystemParams::with_b(b).unwrap()
    }

    fn periodic(b: f64) -> ClosedOrbit {
        match detect_orbit(default_seed(), &params(b), &OrbitSearchOptions::default()).unwrap() {
            AttractorVerdict::Periodic(o) => o,
            v => panic!("b = {b}: {v:?}"),
        }
    }

    #[test]
    fn rotation_one_cycle() {
        let o = periodic(0.45);
        assert_eq!(o.rotation, 1);
        assert_eq!(rotation_number(&o), 1);
        assert!(o.residual <= 1e-6);
        assert!((o.cycle.final_state() - o.start()).norm() < 1e-6);
        assert!(o.multipliers.is_some());
    }

    #[test]
    fn symmetry_is_reflection_invariant() {
        for b in [0.45, 0.3991] {
            let o = periodic(b);
            let tol = 1e-6;
            assert_eq!(
                symmetry_class(&o, tol).0,
                symmetry_class(&o.mirror(), tol).0
            );
        }
    }

    #[test]
    fn pair_member_has_partner_seed() {
        let o = periodic(0.3991);
        assert_eq!(o.rotation, 2);
        let (sym, seed) = symmetry_class(&o, 1e-6);
        assert_eq!(sym, Symmetry::PairMember);
        let seed = seed.unwrap();
        assert!(distance_to_trajectory(&o.mirror().cycle, &seed) < 1e-9);
    }

    #[test]
    fn origin_has_no_section_events() {
        let r = detect_orbit(State::zeros(), &params(0.4), &OrbitSearchOptions::default());
        assert!(matches!(r, Err(Error::InsufficientEvents { .. })));
    }

    #[test]
    fn divergent_seed_is_reported() {
        let v = detect_orbit(
            State::new(3.0, 0.0, 0.0),
            &params(0.4),
            &OrbitSearchOptions::default(),
        )
        .unwrap();
        assert!(matches!(v, AttractorVerdict::Diverged { .. }));
    }

    #[test]
    fn invalid_search_rejected() {
        let s = OrbitSearchOptions {
            max_rotation: 200,
            ..Default::default()
        };
        assert!(detect_orbit(default_seed(), &params(0.4), &s).is_err());
    }
}
