//! Newton shooting on the first-return map of the `x`-maxima section and the
//! Floquet multipliers of the resulting closed orbit.

use nalgebra::{Matrix2, Matrix3, SVector, Vector2};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::integrator::{crossing_in_step, Dopri5, IntegratorOptions};
use crate::model::{jacobian, vector_field, State, SystemParams};

type Augmented = SVector<f64, 12>;

const NEWTON_TOL: f64 = 1e-9;
const NEWTON_MAX_ITER: usize = 16;
/// Upper bound on the time between consecutive section crossings.
const MAX_RETURN_TIME: f64 = 60.0;

/// Section point `(x, 0, z)` in section coordinates `(x, z)`.
pub fn lift(u: &Vector2<f64>) -> State {
    State::new(u.x, 0.0, u.y)
}

pub fn project(s: &State) -> Vector2<f64> {
    Vector2::new(s.x, s.z)
}

/// `r`-fold return map evaluated with its derivative.
#[derive(Debug, Clone)]
pub struct ReturnMap {
    pub image: Vector2<f64>,
    /// Images after `1, …, r` returns.
    pub returns: Vec<Vector2<f64>>,
    pub time: f64,
    pub derivative: Matrix2<f64>,
}

fn augmented_field(p: SystemParams) -> impl Fn(&Augmented) -> Augmented {
    move |y| {
        let s = State::new(y[0], y[1], y[2]);
        let f = vector_field(&s, &p);
        let phi = Matrix3::from_column_slice(&y.as_slice()[3..]);
        let dphi = jacobian(&s, &p) * phi;
        let mut out = Augmented::zeros();
        out.fixed_rows_mut::<3>(0).copy_from(&f);
        out.fixed_rows_mut::<9>(3).copy_from_slice(dphi.as_slice());
        out
    }
}

/// Applies the return map `r` times, integrating the variational equations
/// alongside so the derivative is exact to integration tolerance.
pub fn return_map(
    u: &Vector2<f64>,
    r: usize,
    p: &SystemParams,
    opts: &IntegratorOptions,
) -> Result<ReturnMap> {
    let mut y0 = Augmented::zeros();
    y0.fixed_rows_mut::<3>(0).copy_from(&lift(u));
    y0.fixed_rows_mut::<9>(3)
        .copy_from_slice(Matrix3::<f64>::identity().as_slice());
    let mut solver = Dopri5::new(
        augmented_field(*p),
        y0,
        opts.rel_tol,
        opts.abs_tol,
        opts.max_step,
    );
    let t_end = MAX_RETURN_TIME * r as f64;
    let mut count = 0;
    let mut returns = Vec::with_capacity(r);
    while solver.time() < t_end {
        let step = solver.step(t_end)?;
        if let Some((t, y, dir)) = crossing_in_step(&step, |y| y[1]) {
            if dir < 0.0 {
                count += 1;
                returns.push(Vector2::new(y[0], y[2]));
                if count == r {
                    let s = State::new(y[0], y[1], y[2]);
                    let phi = Matrix3::from_column_slice(&y.as_slice()[3..]);
                    let f = vector_field(&s, p);
                    // project the flow derivative onto the section along f
                    let mut proj = Matrix3::<f64>::identity();
                    for i in 0..3 {
                        proj[(i, 1)] -= f[i] / f.y;
                    }
                    let d: Matrix3<f64> = proj * phi;
                    let derivative = Matrix2::new(d[(0, 0)], d[(0, 2)], d[(2, 0)], d[(2, 2)]);
                    return Ok(ReturnMap {
                        image: project(&s),
                        returns,
                        time: t,
                        derivative,
                    });
                }
            }
        }
        if step.end().fixed_rows::<3>(0).norm() > opts.divergence_radius {
            return Err(Error::Diverged { t: step.t1() });
        }
    }
    Err(Error::NoConvergence(format!(
        "only {count} of {r} section returns within t = {t_end}"
    )))
}

/// A fixed point of the `r`-fold return map.
#[derive(Debug, Clone, Copy)]
pub struct RefinedOrbit {
    pub point: Vector2<f64>,
    pub rotation: usize,
    pub period: f64,
    /// Nontrivial Floquet multipliers (eigenvalues of the return-map derivative).
    pub multipliers: [Complex64; 2],
    /// `|P^r(u) - u|` at the returned point.
    pub residual: f64,
}

impl RefinedOrbit {
    pub fn spectral_radius(&self) -> f64 {
        self.multipliers
            .iter()
            .map(|m| m.norm())
            .fold(0.0, f64::max)
    }

    pub fn is_stable(&self) -> bool {
        self.spectral_radius() < 1.0
    }

    /// Real multiplier below −1, if the orbit lost stability through a flip.
    pub fn flip_multiplier(&self) -> Option<f64> {
        self.multipliers
            .iter()
            .find(|m| m.im == 0.0 && m.re < -1.0)
            .map(|m| m.re)
    }

    /// Real multiplier above +1.
    pub fn fold_multiplier(&self) -> Option<f64> {
        self.multipliers
            .iter()
            .find(|m| m.im == 0.0 && m.re > 1.0)
            .map(|m| m.re)
    }

    pub fn state(&self) -> State {
        lift(&self.point)
    }
}

pub fn eigenvalues2(m: &Matrix2<f64>) -> [Complex64; 2] {
    let tr = m.trace();
    let det = m.determinant();
    let disc = tr * tr / 4.0 - det;
    if disc >= 0.0 {
        let s = disc.sqrt();
        [
            Complex64::new(tr / 2.0 + s, 0.0),
            Complex64::new(tr / 2.0 - s, 0.0),
        ]
    } else {
        let s = (-disc).sqrt();
        [Complex64::new(tr / 2.0, s), Complex64::new(tr / 2.0, -s)]
    }
}

/// Newton iteration for `P^r(u) = u` from `guess`.
pub fn refine_orbit(
    guess: Vector2<f64>,
    r: usize,
    p: &SystemParams,
    opts: &IntegratorOptions,
) -> Result<RefinedOrbit> {
    let mut u = guess;
    let mut map = return_map(&u, r, p, opts)?;
    let mut res = map.image - u;
    for _ in 0..NEWTON_MAX_ITER {
        if res.norm() < NEWTON_TOL {
            break;
        }
        let jac = map.derivative - Matrix2::identity();
        let delta = jac
            .try_inverse()
            .ok_or_else(|| Error::NoConvergence("singular Newton matrix".into()))?
            * (-res);
        // damped step: accept the first fraction that lowers the residual
        let mut lambda = 1.0;
        loop {
            let trial = u + delta * lambda;
            match return_map(&trial, r, p, opts) {
                Ok(m) if (m.image - trial).norm() < res.norm() || lambda < 1.0 / 32.0 => {
                    u = trial;
                    map = m;
                    res = map.image - u;
                    break;
                }
                Err(e) if lambda < 1.0 / 32.0 => return Err(e),
                _ => lambda *= 0.5,
            }
        }
        if delta.norm() * lambda > 1.0 {
            return Err(Error::NoConvergence(
                "Newton step left the attractor".into(),
            ));
        }
    }
    if res.norm() >= 10.0 * NEWTON_TOL {
        return Err(Error::NoConvergence(format!(
            "return-map residual {:e} after {NEWTON_MAX_ITER} iterations",
            res.norm()
        )));
    }
    // a fixed point of P^r may have a smaller minimal period
    if let Some(d) = (1..r)
        .filter(|d| r.is_multiple_of(*d))
        .find(|d| (map.returns[d - 1] - u).norm() < 1e3 * NEWTON_TOL)
    {
        return refine_orbit(u, d, p, opts);
    }
    Ok(RefinedOrbit {
        point: u,
        rotation: r,
        period: map.time,
        multipliers: eigenvalues2(&map.derivative),
        residual: res.norm(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(b: f64) -> SystemParams {
        SystemParams::with_b(b).unwrap()
    }

    #[test]
    fn derivative_matches_finite_differences() {
        let p = params(0.45);
        let opts = IntegratorOptions::default().with_tolerances(1e-12, 1e-14);
        let u = Vector2::new(0.95, -0.9);
        let m = return_map(&u, 1, &p, &opts).unwrap();
        let h = 1e-5;
        for j in 0..2 {
            let mut e = Vector2::zeros();
            e[j] = h;
            let plus = return_map(&(u + e), 1, &p, &opts).unwrap().image;
            let minus = return_map(&(u - e), 1, &p, &opts).unwrap().image;
            let fd = (plus - minus) / (2.0 * h);
            for i in 0..2 {
                assert!(
                    (m.derivative[(i, j)] - fd[i]).abs() < 1e-5,
                    "entry ({i},{j}): {} vs {}",
                    m.derivative[(i, j)],
                    fd[i]
                );
            }
        }
    }

    #[test]
    fn refined_cycle_obeys_liouville() {
        // the divergence of the field is −b, so μ1 μ2 = exp(−b T)
        let p = params(0.45);
        let opts = IntegratorOptions::default();
        let search = crate::orbit::OrbitSearchOptions::default();
        let verdict =
            crate::orbit::detect_orbit(crate::orbit::default_seed(), &p, &search).unwrap();
        let start = project(&verdict.orbit().unwrap().start());
        let orbit = refine_orbit(start, 1, &p, &opts).unwrap();
        let prod = orbit.multipliers[0] * orbit.multipliers[1];
        assert!((prod.re - (-p.b * orbit.period).exp()).abs() < 1e-7);
        assert!(prod.im.abs() < 1e-12);
        assert!(orbit.is_stable());

        // the self-symmetric cycle from which the attracting pair branched off
        let saddle = refine_orbit(Vector2::new(0.95, -0.9), 1, &p, &opts).unwrap();
        assert!(saddle.fold_multiplier().is_some());
        assert!(orbit.residual < 1e-8);
    }

    #[test]
    fn eigenvalues_of_2x2() {
        let e = eigenvalues2(&Matrix2::new(0.0, -1.0, 1.0, 0.0));
        assert_eq!(e[0], Complex64::new(0.0, 1.0));
        let e = eigenvalues2(&Matrix2::new(2.0, 0.0, 0.0, -3.0));
        assert_eq!(e, [Complex64::new(2.0, 0.0), Complex64::new(-3.0, 0.0)]);
    }
}
