//! Parameter sweeps, location of period-doubling values of `b`, and Feigenbaum
//! estimates for the three cascade series (characters 1, 13 and 3).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::SystemParams;
use crate::orbit::refine::{project, refine_orbit};
use crate::orbit::{default_seed, detect_orbit, AttractorVerdict, OrbitSearchOptions, Symmetry};
use crate::par::{map_ordered, Execution};

/// First Feigenbaum constant.
pub const FEIGENBAUM_DELTA: f64 = 4.669201609;

/// Index value marking the accumulation-point estimate.
pub const ACCUMULATION_INDEX: i32 = -1;

/// Rotation characters of the three known series.
pub const CHARACTERS: [u32; 3] = [1, 13, 3];

const MAX_BISECTIONS: usize = 60;
/// Refined orbits further than this from the anchor are a different orbit.
const ANCHOR_DRIFT_TOL: f64 = 5e-2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RecordKind {
    Measured,
    Extrapolated,
}

impl RecordKind {
    pub fn label(self) -> &'static str {
        match self {
            Self::Measured => "Measured",
            Self::Extrapolated => "Extrapolated",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CascadeRecord {
    pub character: u32,
    /// Doubling index `n`, or [`ACCUMULATION_INDEX`].
    pub index: i32,
    pub b_value: f64,
    pub kind: RecordKind,
    /// Final bisection bracket; `None` for extrapolated records.
    pub bracket_width: Option<f64>,
}

/// `b_curr − (b_prev − b_curr)/δ`: the next bifurcation value if successive
/// intervals shrink by δ.
pub fn feigenbaum_next(b_prev: f64, b_curr: f64) -> Result<f64> {
    check_order(b_prev, b_curr)?;
    Ok(b_curr - (b_prev - b_curr) / FEIGENBAUM_DELTA)
}

/// `b_prev − (b_prev − b_curr)/(1 − 1/δ)`: the limit of the geometric series
/// of intervals started by `(b_prev, b_curr)`.
pub fn feigenbaum_accumulation(b_prev: f64, b_curr: f64) -> Result<f64> {
    check_order(b_prev, b_curr)?;
    Ok(b_prev - (b_prev - b_curr) / (1.0 - 1.0 / FEIGENBAUM_DELTA))
}

/// Interval ratio `(b_nm2 − b_nm1)/(b_nm1 − b_n)`.
pub fn feigenbaum_delta(b_nm2: f64, b_nm1: f64, b_n: f64) -> Result<f64> {
    if !(b_nm2 > b_nm1 && b_nm1 > b_n) {
        return Err(Error::InvalidParameter(format!(
            "expected a strictly decreasing triple, got ({b_nm2}, {b_nm1}, {b_n})"
        )));
    }
    let den = b_nm1 - b_n;
    if den == 0.0 {
        return Err(Error::InvalidParameter("zero denominator".into()));
    }
    Ok((b_nm2 - b_nm1) / den)
}

fn check_order(b_prev: f64, b_curr: f64) -> Result<()> {
    if b_prev >= b_curr && b_prev.is_finite() && b_curr.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "expected b_prev >= b_curr, got ({b_prev}, {b_curr})"
        )))
    }
}

/// Verdict at `(a = 1, b)` from the default seed.
pub fn classify_parameter(b: f64, search: &OrbitSearchOptions) -> Result<AttractorVerdict> {
    let p = SystemParams::with_b(b)?;
    detect_orbit(default_seed(), &p, search)
}

/// One row of a parameter sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub b: f64,
    pub outcome: String,
    pub rotation: Option<usize>,
    pub period: Option<f64>,
    pub symmetry: Option<Symmetry>,
    pub residual: Option<f64>,
}

impl ScanRow {
    fn from_verdict(b: f64, v: Result<AttractorVerdict>) -> Self {
        let mut row = Self {
            b,
            outcome: String::new(),
            rotation: None,
            period: None,
            symmetry: None,
            residual: None,
        };
        match v {
            Ok(v) => {
                row.outcome = v.outcome().to_string();
                if let Some(o) = v.orbit() {
                    row.rotation = Some(o.rotation);
                    row.period = Some(o.period);
                    row.symmetry = Some(o.symmetry);
                    row.residual = Some(o.residual);
                }
            }
            Err(e) => row.outcome = format!("Error: {e}"),
        }
        row
    }
}

/// The descending grid `b_start, b_start − step, …` down to `b_end` inclusive.
pub fn scan_grid(b_start: f64, b_end: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || b_start < b_end {
        return Err(Error::InvalidParameter(format!(
            "scan needs b_start >= b_end and step > 0, got ({b_start}, {b_end}, {step})"
        )));
    }
    if b_start == b_end {
        return Ok(Vec::new());
    }
    let n = ((b_start - b_end) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| b_start - i as f64 * step).collect())
}

/// Descending sweep; rows are independent and failures stay in their row.
pub fn scan(
    b_start: f64,
    b_end: f64,
    step: f64,
    search: &OrbitSearchOptions,
) -> Result<Vec<ScanRow>> {
    scan_with(b_start, b_end, step, search, Execution::default())
}

pub fn scan_with(
    b_start: f64,
    b_end: f64,
    step: f64,
    search: &OrbitSearchOptions,
    exec: Execution,
) -> Result<Vec<ScanRow>> {
    search.validate()?;
    let grid = scan_grid(b_start, b_end, step)?;
    Ok(map_ordered(&grid, exec, |&b| {
        ScanRow::from_verdict(b, classify_parameter(b, search))
    }))
}

/// The bifurcation being located.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transition {
    /// Rotation `r` above, `2r` below.
    Doubling { rotation: usize },
    /// A self-symmetric orbit of rotation `r` above splits into a symmetric
    /// pair of the same rotation below.
    SymmetryBreaking { rotation: usize },
}

impl Transition {
    fn rotation(self) -> usize {
        match self {
            Self::Doubling { rotation } | Self::SymmetryBreaking { rotation } => rotation,
        }
    }

    /// Rotation on the low-`b` side.
    pub fn rotation_below(self) -> usize {
        match self {
            Self::Doubling { rotation } => 2 * rotation,
            Self::SymmetryBreaking { rotation } => rotation,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    /// The pre-bifurcation regime (larger `b`).
    Upper,
    Lower,
}

/// Classifies `b` relative to `transition`. Periodic verdicts decide by
/// rotation (or symmetry); when the transient cannot resolve the attractor
/// the stability of the pre-bifurcation orbit, continued from `anchor`,
/// decides instead.
fn side_of(
    b: f64,
    transition: Transition,
    anchor: &mut Option<nalgebra::Vector2<f64>>,
    search: &OrbitSearchOptions,
) -> Result<Side> {
    let r = transition.rotation();
    match classify_parameter(b, search)? {
        AttractorVerdict::Periodic(o) => {
            let side = match transition {
                Transition::Doubling { .. } if o.rotation == r => Side::Upper,
                Transition::Doubling { .. } if o.rotation < 2 * r => Side::Upper,
                Transition::Doubling { .. } => Side::Lower,
                Transition::SymmetryBreaking { .. } if o.rotation < r => Side::Upper,
                Transition::SymmetryBreaking { .. } if o.rotation > r => Side::Lower,
                Transition::SymmetryBreaking { .. } => match o.symmetry {
                    Symmetry::SelfSymmetric => Side::Upper,
                    Symmetry::PairMember => Side::Lower,
                },
            };
            if side == Side::Upper && o.rotation == r {
                *anchor = Some(project(&o.start()));
            }
            Ok(side)
        }
        AttractorVerdict::Aperiodic { .. } => {
            let guess = anchor.ok_or_else(|| {
                Error::Bracket(format!(
                    "aperiodic verdict at b = {b} and no orbit to continue"
                ))
            })?;
            let p = SystemParams::with_b(b)?;
            let orbit = refine_orbit(guess, r, &p, &search.integrator)
                .ok()
                .filter(|o| (o.point - guess).norm() < ANCHOR_DRIFT_TOL)
                .ok_or_else(|| {
                    Error::Bracket(format!(
                        "aperiodic verdict at b = {b}; rotation-{r} orbit lost"
                    ))
                })?;
            if orbit.is_stable() {
                *anchor = Some(orbit.point);
                Ok(Side::Upper)
            } else {
                Ok(Side::Lower)
            }
        }
        AttractorVerdict::Diverged { t, .. } => Err(Error::Diverged { t }),
    }
}

/// Bisects on `b` for `transition` between `b_hi` (upper regime) and `b_lo`
/// (lower regime) until the bracket is at most `tol_b` wide.
pub fn locate_transition(
    character: u32,
    index: i32,
    b_hi: f64,
    b_lo: f64,
    transition: Transition,
    tol_b: f64,
    search: &OrbitSearchOptions,
) -> Result<CascadeRecord> {
    if !(b_lo < b_hi) || !(tol_b > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "need b_lo < b_hi and tol_b > 0, got ({b_hi}, {b_lo}, {tol_b})"
        )));
    }
    let mut anchor = None;
    if side_of(b_hi, transition, &mut anchor, search)? != Side::Upper {
        return Err(Error::Bracket(format!(
            "b_hi = {b_hi} is not above {transition:?}"
        )));
    }
    if side_of(b_lo, transition, &mut None, search)? != Side::Lower {
        return Err(Error::Bracket(format!(
            "b_lo = {b_lo} is not below {transition:?}"
        )));
    }
    let (mut hi, mut lo) = (b_hi, b_lo);
    for _ in 0..MAX_BISECTIONS {
        if hi - lo <= tol_b {
            return Ok(CascadeRecord {
                character,
                index,
                b_value: 0.5 * (hi + lo),
                kind: RecordKind::Measured,
                bracket_width: Some(hi - lo),
            });
        }
        let mid = 0.5 * (hi + lo);
        match side_of(mid, transition, &mut anchor, search)? {
            Side::Upper => hi = mid,
            Side::Lower => lo = mid,
        }
    }
    Err(Error::NoConvergence(format!(
        "bracket still {} wide after {MAX_BISECTIONS} bisections",
        hi - lo
    )))
}

/// Locates the doubling `r -> 2r` between `b_hi` and `b_lo`.
pub fn locate_doubling(
    b_hi: f64,
    b_lo: f64,
    r: usize,
    tol_b: f64,
    search: &OrbitSearchOptions,
) -> Result<CascadeRecord> {
    locate_transition(
        r as u32,
        0,
        b_hi,
        b_lo,
        Transition::Doubling { rotation: r },
        tol_b,
        search,
    )
}

/// Default bisection tolerance per series.
pub fn default_tol_b(character: u32) -> f64 {
    if character == 1 {
        1e-5
    } else {
        1e-7
    }
}

/// Default search interval `(b_upper, b_lower_hint)` per series.
pub fn default_interval(character: u32) -> Option<(f64, f64)> {
    match character {
        1 => Some((0.55, 0.3785)),
        13 => Some((0.3341, 0.3332)),
        3 => Some((0.3237, 0.3175)),
        _ => None,
    }
}

/// Records of one series plus the reason it stopped early, if it did.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SeriesResult {
    pub records: Vec<CascadeRecord>,
    pub diagnostic: Option<String>,
}

/// Transition at depth `n` of series `character`.
fn transition_at(character: u32, n: usize) -> Transition {
    let c = character as usize;
    match (character, n) {
        (1, 0) => Transition::SymmetryBreaking { rotation: 1 },
        (1, n) => Transition::Doubling {
            rotation: 1 << (n - 1),
        },
        (_, n) => Transition::Doubling { rotation: c << n },
    }
}

/// Walks down from `start` (upper regime) in steps of `step`, halving the step
/// whenever a point is in neither regime, until a lower-regime point is found.
fn walk_to_bracket(
    start: f64,
    floor: f64,
    step: f64,
    min_step: f64,
    transition: Transition,
    search: &OrbitSearchOptions,
) -> Result<(f64, f64)> {
    let mut hi = start;
    let mut step = step;
    while step >= min_step {
        let b = hi - step;
        if b <= floor {
            step *= 0.5;
            continue;
        }
        let v = classify_parameter(b, search);
        if is_lower(&v, transition) {
            return Ok((hi, b));
        } else if is_upper(&v, transition) {
            hi = b;
        } else {
            step *= 0.5;
        }
    }
    Err(Error::Bracket(format!(
        "no {transition:?} found below b = {hi} (step shrank below {min_step:e})"
    )))
}

// Bracket ends must be exactly the two regimes of the transition.
fn is_upper(v: &Result<AttractorVerdict>, t: Transition) -> bool {
    matches!(v, Ok(AttractorVerdict::Periodic(o)) if o.rotation == t.rotation()
        && (matches!(t, Transition::Doubling { .. }) || o.symmetry == Symmetry::SelfSymmetric))
}

fn is_lower(v: &Result<AttractorVerdict>, t: Transition) -> bool {
    matches!(v, Ok(AttractorVerdict::Periodic(o)) if o.rotation == t.rotation_below()
        && (matches!(t, Transition::Doubling { .. }) || o.symmetry == Symmetry::PairMember))
}

/// Locates `b_{c,0}, …, b_{c,depth}` and appends the accumulation estimate.
///
/// The first two values are measured from brackets found by walking down from
/// `b_upper`; deeper ones are searched in a bracket centred on the Feigenbaum
/// prediction and fall back to that prediction when the rotation involved
/// exceeds `search.max_rotation` or no bracket can be established.
pub fn run_series(
    character: u32,
    b_upper: f64,
    b_lower_hint: f64,
    depth: usize,
    tol_b: f64,
    search: &OrbitSearchOptions,
) -> SeriesResult {
    let mut out = SeriesResult::default();
    if !CHARACTERS.contains(&character) {
        out.diagnostic = Some(format!("unknown series character {character}"));
        return out;
    }
    if !(b_lower_hint < b_upper) {
        out.diagnostic = Some(format!("empty interval ({b_lower_hint}, {b_upper})"));
        return out;
    }
    // lowest b known to be in the regime above the next transition
    let mut upper_start = b_upper;
    let base_step = (b_upper - b_lower_hint) / 40.0;
    for n in 0..=depth {
        let transition = transition_at(character, n);
        let values: Vec<f64> = out.records.iter().map(|r| r.b_value).collect();
        let predicted = match values.as_slice() {
            [.., prev, curr] => feigenbaum_next(*prev, *curr).ok(),
            _ => None,
        };
        if transition.rotation_below() > search.max_rotation {
            match predicted {
                Some(b) => {
                    out.records.push(extrapolated(character, n as i32, b));
                    continue;
                }
                None => {
                    out.diagnostic = Some(format!(
                        "rotation beyond {} at n = {n}",
                        search.max_rotation
                    ));
                    break;
                }
            }
        }
        let bracket = match (values.as_slice(), predicted) {
            ([.., prev, curr], Some(pred)) => {
                let w = (prev - curr) / FEIGENBAUM_DELTA;
                let centred = (pred + 0.5 * w).min(upper_start);
                let (hi, lo) = (centred, pred - 0.5 * w);
                if is_upper(&classify_parameter(hi, search), transition)
                    && is_lower(&classify_parameter(lo, search), transition)
                {
                    Ok((hi, lo))
                } else {
                    walk_to_bracket(
                        upper_start,
                        b_lower_hint.min(pred - 2.0 * w),
                        w / 4.0,
                        tol_b,
                        transition,
                        search,
                    )
                }
            }
            ([.., prev, curr], None) => {
                let w = (prev - curr) / FEIGENBAUM_DELTA;
                walk_to_bracket(
                    upper_start,
                    b_lower_hint,
                    w / 4.0,
                    tol_b,
                    transition,
                    search,
                )
            }
            ([curr], _) => {
                let w = (upper_start.max(*curr) - b_lower_hint).max(tol_b) / 40.0;
                walk_to_bracket(upper_start, b_lower_hint, w, tol_b, transition, search)
            }
            _ => walk_to_bracket(
                upper_start,
                b_lower_hint,
                base_step,
                tol_b,
                transition,
                search,
            ),
        };
        let located = bracket.and_then(|(hi, lo)| {
            locate_transition(character, n as i32, hi, lo, transition, tol_b, search)
        });
        match located {
            Ok(rec) => {
                // the next regime starts just below the bracket
                upper_start = rec.b_value - rec.bracket_width.unwrap_or(0.0);
                out.records.push(rec);
            }
            Err(e) => match predicted {
                Some(b) => {
                    out.diagnostic
                        .get_or_insert(format!("n = {n}: {e}; extrapolated"));
                    out.records.push(extrapolated(character, n as i32, b));
                }
                None => {
                    out.diagnostic = Some(format!("n = {n}: {e}"));
                    break;
                }
            },
        }
    }
    if let [.., prev, curr] = out.records.as_slice() {
        if let Ok(b) = feigenbaum_accumulation(prev.b_value, curr.b_value) {
            out.records.push(CascadeRecord {
                character,
                index: ACCUMULATION_INDEX,
                b_value: b,
                kind: RecordKind::Extrapolated,
                bracket_width: None,
            });
        }
    }
    out
}

fn extrapolated(character: u32, index: i32, b: f64) -> CascadeRecord {
    CascadeRecord {
        character,
        index,
        b_value: b,
        kind: RecordKind::Extrapolated,
        bracket_width: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn next_and_accumulation_values() {
        assert_abs_diff_eq!(
            feigenbaum_next(0.3829, 0.3793).unwrap(),
            0.37853,
            epsilon = 5e-6
        );
        assert_abs_diff_eq!(
            feigenbaum_next(0.3184, 0.3177).unwrap(),
            0.31755,
            epsilon = 5e-6
        );
        assert_abs_diff_eq!(
            feigenbaum_accumulation(0.3829, 0.3793).unwrap(),
            0.37832,
            epsilon = 5e-6
        );
        assert_abs_diff_eq!(
            feigenbaum_accumulation(0.33331, 0.333299).unwrap(),
            0.333296,
            epsilon = 1e-6
        );
        assert_abs_diff_eq!(
            feigenbaum_accumulation(0.3184, 0.3177).unwrap(),
            0.31751,
            epsilon = 5e-6
        );
    }

    #[test]
    fn zero_interval_is_fixed() {
        assert_eq!(feigenbaum_next(0.4, 0.4).unwrap(), 0.4);
        assert_eq!(feigenbaum_accumulation(0.4, 0.4).unwrap(), 0.4);
    }

    #[test]
    fn order_violations() {
        assert!(feigenbaum_next(0.3, 0.4).is_err());
        assert!(feigenbaum_accumulation(0.3, 0.4).is_err());
        assert!(feigenbaum_delta(0.3, 0.4, 0.2).is_err());
        assert!(feigenbaum_delta(0.5, 0.4, 0.4).is_err());
    }

    #[test]
    fn delta_from_listed_values() {
        assert_abs_diff_eq!(
            feigenbaum_delta(0.4892, 0.3992, 0.3829).unwrap(),
            5.521,
            epsilon = 1e-3
        );
        assert_abs_diff_eq!(
            feigenbaum_delta(0.3992, 0.3829, 0.3794).unwrap(),
            4.657,
            epsilon = 1e-3
        );
    }

    #[test]
    fn grid_shapes() {
        assert_eq!(scan_grid(0.5, 0.47, 0.01).unwrap().len(), 4);
        assert!(scan_grid(0.4, 0.4, 0.01).unwrap().is_empty());
        assert!(scan_grid(0.3, 0.4, 0.01).is_err());
        assert!(scan_grid(0.5, 0.4, 0.0).is_err());
        let g = scan_grid(0.3238, 0.3237, 0.0001).unwrap();
        assert_eq!(g.len(), 2);
    }

    #[test]
    fn transitions_per_series() {
        assert_eq!(
            transition_at(1, 0),
            Transition::SymmetryBreaking { rotation: 1 }
        );
        assert_eq!(transition_at(1, 3), Transition::Doubling { rotation: 4 });
        assert_eq!(transition_at(13, 1), Transition::Doubling { rotation: 26 });
        assert_eq!(transition_at(3, 2), Transition::Doubling { rotation: 12 });
    }

    #[test]
    fn unknown_character_rejected() {
        let r = run_series(5, 0.4, 0.3, 1, 1e-5, &OrbitSearchOptions::default());
        assert!(r.records.is_empty());
        assert!(r.diagnostic.is_some());
    }

    proptest! {
        #[test]
        fn geometric_triple_gives_delta(x in 0.0..0.5f64, d in 1e-4..0.1f64) {
            let got = feigenbaum_delta(x + d + d / FEIGENBAUM_DELTA, x + d / FEIGENBAUM_DELTA, x).unwrap();
            prop_assert!((got - FEIGENBAUM_DELTA).abs() < 1e-6 * FEIGENBAUM_DELTA / d.min(1.0));
        }

        #[test]
        fn accumulation_lies_below(prev in 0.3..0.6f64, gap in 1e-6..0.1f64) {
            let curr = prev - gap;
            let acc = feigenbaum_accumulation(prev, curr).unwrap();
            prop_assert!(acc < curr && curr < prev);
            let alt = curr - (prev - curr) / (FEIGENBAUM_DELTA - 1.0);
            prop_assert!((acc - alt).abs() <= 1e-15 * acc.abs().max(1.0) * 4.0);
        }
    }
}
