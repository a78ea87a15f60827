//! The cubic Silnikov-type flow
//!
//! ```text
//! x' = y
//! y' = z
//! z' = x^3 - a^2 x - y - b z
//! ```
//!
//! together with its Jacobian, its three equilibria and their eigenstructure.

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Phase-space point `(x, y, z)`.
pub type State = Vector3<f64>;

/// Imaginary parts below `REAL_TOL * (1 + |λ|)` count as real.
pub const REAL_TOL: f64 = 1e-9;

/// Parameters `(a, b)` of the flow.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub a: f64,
    pub b: f64,
}

impl SystemParams {
    /// Checked constructor: `a > 0`, `0 <= b < 1`.
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && a > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "a must be positive, got {a}"
            )));
        }
        if !(b.is_finite() && (0.0..1.0).contains(&b)) {
            return Err(Error::InvalidParameter(format!(
                "b must lie in [0, 1), got {b}"
            )));
        }
        Ok(Self { a, b })
    }

    /// `a = 1`, the only value the cascades are studied at.
    pub fn with_b(b: f64) -> Result<Self> {
        Self::new(1.0, b)
    }
}

/// Right-hand side of the flow.
#[inline]
pub fn vector_field(s: &State, p: &SystemParams) -> State {
    let (x, y, z) = (s.x, s.y, s.z);
    Vector3::new(y, z, x * x * x - p.a * p.a * x - y - p.b * z)
}

/// Analytic Jacobian of [`vector_field`].
pub fn jacobian(s: &State, p: &SystemParams) -> Matrix3<f64> {
    Matrix3::new(
        0.0,
        1.0,
        0.0,
        0.0,
        0.0,
        1.0,
        3.0 * s.x * s.x - p.a * p.a,
        -1.0,
        -p.b,
    )
}

/// Roots of `λ³ + bλ² + λ − (3x² − a²)`, the characteristic polynomial of the
/// Jacobian at any point with abscissa `x`.
///
/// A real root comes first; the remaining two are either a conjugate pair
/// (positive imaginary part first) or two reals in descending order.
pub fn characteristic_roots(x: f64, p: &SystemParams) -> [Complex64; 3] {
    cubic_roots(p.b, 1.0, -(3.0 * x * x - p.a * p.a))
}

/// Roots of the monic cubic `λ³ + c2 λ² + c1 λ + c0`.
pub(crate) fn cubic_roots(c2: f64, c1: f64, c0: f64) -> [Complex64; 3] {
    let r = real_cubic_root(c2, c1, c0);
    // (λ - r)(λ² + pλ + q)
    let p = c2 + r;
    let q = c1 + r * p;
    let disc = p * p - 4.0 * q;
    if disc < 0.0 {
        let re = -0.5 * p;
        let im = 0.5 * (-disc).sqrt();
        [
            Complex64::new(r, 0.0),
            Complex64::new(re, im),
            Complex64::new(re, -im),
        ]
    } else {
        // Stable quadratic formula.
        let s = -0.5 * (p + p.signum() * disc.sqrt());
        let (mut r1, mut r2) = if s == 0.0 { (0.0, 0.0) } else { (s, q / s) };
        if r1 < r2 {
            std::mem::swap(&mut r1, &mut r2);
        }
        [
            Complex64::new(r, 0.0),
            Complex64::new(r1, 0.0),
            Complex64::new(r2, 0.0),
        ]
    }
}

/// Largest-magnitude real root via Cardano / trigonometric form, polished by Newton.
fn real_cubic_root(c2: f64, c1: f64, c0: f64) -> f64 {
    // depressed cubic t³ + pt + q with λ = t − c2/3
    let shift = c2 / 3.0;
    let p = c1 - c2 * c2 / 3.0;
    let q = 2.0 * c2 * c2 * c2 / 27.0 - c2 * c1 / 3.0 + c0;
    let delta = (q / 2.0).powi(2) + (p / 3.0).powi(3);
    let t = if delta >= 0.0 {
        let sq = delta.sqrt();
        (-q / 2.0 + sq).cbrt() + (-q / 2.0 - sq).cbrt()
    } else {
        // three real roots; pick the largest in magnitude for stable deflation
        let m = 2.0 * (-p / 3.0).sqrt();
        let theta = (3.0 * q / (p * m)).clamp(-1.0, 1.0).acos() / 3.0;
        (0..3)
            .map(|k| m * (theta - 2.0 * std::f64::consts::PI * k as f64 / 3.0).cos())
            .max_by(|a, b| (a - shift).abs().total_cmp(&(b - shift).abs()))
            .unwrap_or(0.0)
    };
    let mut lam = t - shift;
    for _ in 0..4 {
        let f = ((lam + c2) * lam + c1) * lam + c0;
        let df = (3.0 * lam + 2.0 * c2) * lam + c1;
        if df == 0.0 {
            break;
        }
        let step = f / df;
        lam -= step;
        if step.abs() <= f64::EPSILON * lam.abs().max(1.0) {
            break;
        }
    }
    lam
}

/// Eigenstructure type of an equilibrium.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EquilibriumKind {
    /// One negative real eigenvalue, complex pair with positive real part (`p0`).
    SaddleFocus1StableDim,
    /// One positive real eigenvalue, complex pair with negative real part (`p1`, `p2`).
    SaddleFocus2StableDim,
    Other,
}

impl EquilibriumKind {
    pub fn label(self) -> &'static str {
        match self {
            Self::SaddleFocus1StableDim => "saddle-focus-1-stable-dim",
            Self::SaddleFocus2StableDim => "saddle-focus-2-stable-dim",
            Self::Other => "other",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Equilibrium {
    pub name: &'static str,
    pub point: State,
    pub eigenvalues: [Complex64; 3],
    pub kind: EquilibriumKind,
    /// Unit eigenvector of the real eigenvalue.
    pub real_eigvec: State,
    /// Orthonormal basis of the eigenplane of the complex pair.
    pub plane_basis: [State; 2],
}

fn is_real(l: Complex64) -> bool {
    l.im.abs() < REAL_TOL * (1.0 + l.norm())
}

/// Classifies a root triple in the order produced by [`characteristic_roots`].
pub fn classify(roots: &[Complex64; 3]) -> EquilibriumKind {
    let [r, c1, c2] = *roots;
    if !is_real(r) || is_real(c1) || is_real(c2) {
        return EquilibriumKind::Other;
    }
    match (r.re, c1.re) {
        (lr, lc) if lr < 0.0 && lc > 0.0 => EquilibriumKind::SaddleFocus1StableDim,
        (lr, lc) if lr > 0.0 && lc < 0.0 => EquilibriumKind::SaddleFocus2StableDim,
        _ => EquilibriumKind::Other,
    }
}

/// The equilibria `p0 = (0,0,0)`, `p1 = (-a,0,0)`, `p2 = (a,0,0)`.
pub fn equilibria(p: &SystemParams) -> [Equilibrium; 3] {
    [("p0", 0.0), ("p1", -p.a), ("p2", p.a)].map(|(name, x)| equilibrium_at(name, x, p))
}

fn equilibrium_at(name: &'static str, x: f64, p: &SystemParams) -> Equilibrium {
    let eigenvalues = characteristic_roots(x, p);
    let kind = classify(&eigenvalues);
    // For this companion-form Jacobian, (1, λ, λ²) is an eigenvector of λ.
    let r = eigenvalues[0].re;
    let real_eigvec = Vector3::new(1.0, r, r * r).normalize();
    let plane_basis = if is_real(eigenvalues[1]) {
        let u = Vector3::new(1.0, eigenvalues[1].re, eigenvalues[1].re.powi(2)).normalize();
        let w = Vector3::new(1.0, eigenvalues[2].re, eigenvalues[2].re.powi(2));
        [u, (w - u * u.dot(&w)).normalize()]
    } else {
        let l = eigenvalues[1];
        let l2 = l * l;
        let re = Vector3::new(1.0, l.re, l2.re);
        let im = Vector3::new(0.0, l.im, l2.im);
        let u = re.normalize();
        let w = (im - u * u.dot(&im)).normalize();
        [u, w]
    };
    Equilibrium {
        name,
        point: Vector3::new(x, 0.0, 0.0),
        eigenvalues,
        kind,
        real_eigvec,
        plane_basis,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn params(a: f64, b: f64) -> SystemParams {
        SystemParams::new(a, b).unwrap()
    }

    /// Independent oracle: eigenvalues of the companion matrix.
    fn companion_roots(c2: f64, c1: f64, c0: f64) -> Vec<Complex64> {
        let m = Matrix3::new(0.0, 1.0, 0.0, 0.0, 0.0, 1.0, -c0, -c1, -c2);
        m.complex_eigenvalues().iter().copied().collect()
    }

    fn matches_oracle(roots: &[Complex64; 3], oracle: &[Complex64], tol: f64) -> bool {
        roots
            .iter()
            .all(|r| oracle.iter().any(|o| (r - o).norm() < tol))
    }

    #[test]
    fn vector_field_examples() {
        let p = params(1.0, 0.315);
        assert_eq!(vector_field(&State::zeros(), &p), State::zeros());
        let p = params(1.0, 0.5);
        assert_eq!(vector_field(&State::new(1.0, 0.0, 0.0), &p), State::zeros());
        assert_eq!(
            vector_field(&State::new(0.0, 1.0, 0.0), &p),
            State::new(1.0, 0.0, -1.0)
        );
    }

    #[test]
    fn jacobian_bottom_rows() {
        let p = params(1.0, 0.315);
        let j = jacobian(&State::zeros(), &p);
        assert_eq!([j[(2, 0)], j[(2, 1)], j[(2, 2)]], [-1.0, -1.0, -0.315]);
        let j = jacobian(&State::new(1.0, 0.0, 0.0), &p);
        assert_eq!([j[(2, 0)], j[(2, 1)], j[(2, 2)]], [2.0, -1.0, -0.315]);
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let p = params(1.0, 0.4);
        let s = State::new(0.3, -0.2, 0.7);
        let j = jacobian(&s, &p);
        let h = 1e-6;
        for col in 0..3 {
            let mut e = State::zeros();
            e[col] = h;
            let fd = (vector_field(&(s + e), &p) - vector_field(&(s - e), &p)) / (2.0 * h);
            for row in 0..3 {
                assert_abs_diff_eq!(j[(row, col)], fd[row], epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn equilibria_at_reference_b() {
        let p = params(1.0, 0.315);
        let eqs = equilibria(&p);
        assert_eq!(eqs[0].point, State::new(0.0, 0.0, 0.0));
        assert_eq!(eqs[1].point, State::new(-1.0, 0.0, 0.0));
        assert_eq!(eqs[2].point, State::new(1.0, 0.0, 0.0));
        for e in &eqs {
            assert!(vector_field(&e.point, &p).norm() <= 1e-12);
        }
        assert_eq!(eqs[0].kind, EquilibriumKind::SaddleFocus1StableDim);
        assert_eq!(eqs[1].kind, EquilibriumKind::SaddleFocus2StableDim);
        assert_eq!(eqs[2].kind, EquilibriumKind::SaddleFocus2StableDim);

        let oracle0 = companion_roots(0.315, 1.0, 1.0);
        assert!(matches_oracle(&eqs[0].eigenvalues, &oracle0, 1e-9));
        assert!(eqs[0].eigenvalues[0].re < 0.0 && eqs[0].eigenvalues[1].re > 0.0);
        let oracle2 = companion_roots(0.315, 1.0, -2.0);
        assert!(matches_oracle(&eqs[2].eigenvalues, &oracle2, 1e-9));
        assert!(eqs[2].eigenvalues[0].re > 0.0 && eqs[2].eigenvalues[1].re < 0.0);
    }

    #[test]
    fn eigenvectors_are_invariant() {
        let p = params(1.0, 0.315);
        for e in equilibria(&p) {
            let j = jacobian(&e.point, &p);
            let r = e.eigenvalues[0].re;
            assert!((j * e.real_eigvec - e.real_eigvec * r).norm() < 1e-12);
            // J maps the eigenplane into itself
            let [u, w] = e.plane_basis;
            assert_abs_diff_eq!(u.dot(&w), 0.0, epsilon = 1e-14);
            let n = u.cross(&w);
            for v in [u, w] {
                assert!((j * v).dot(&n).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn known_roots() {
        let r = characteristic_roots(0.0, &params(1.0, 0.0));
        // real root of λ³ + λ + 1, computed with the companion oracle
        let oracle = companion_roots(0.0, 1.0, 1.0);
        let real = oracle.iter().find(|c| c.im.abs() < 1e-12).unwrap().re;
        assert_abs_diff_eq!(r[0].re, real, epsilon = 1e-12);
        assert_abs_diff_eq!(r[0].re, -0.6823, epsilon = 1e-4);

        let r = characteristic_roots(1.0, &params(1.0, 0.0));
        assert_abs_diff_eq!(r[0].re, 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(r[1].re, -0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(r[1].im, 7f64.sqrt() / 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r[2].im, -7f64.sqrt() / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn three_real_roots_are_ordered() {
        // (λ-1)(λ-2)(λ+3) = λ³ - 7λ + 6
        let r = cubic_roots(0.0, -7.0, 6.0);
        assert!(r.iter().all(|c| c.im == 0.0));
        assert_abs_diff_eq!(r[0].re, -3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r[1].re, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r[2].re, 1.0, epsilon = 1e-12);
        assert_eq!(classify(&r), EquilibriumKind::Other);
    }

    #[test]
    fn saddle_focus_on_grid() {
        for k in 0..10 {
            let p = params(1.0, k as f64 * 0.1);
            let kinds = equilibria(&p).map(|e| e.kind);
            assert_eq!(
                kinds,
                [
                    EquilibriumKind::SaddleFocus1StableDim,
                    EquilibriumKind::SaddleFocus2StableDim,
                    EquilibriumKind::SaddleFocus2StableDim
                ],
                "b = {}",
                p.b
            );
        }
    }

    #[test]
    fn rejects_bad_params() {
        assert!(SystemParams::new(0.0, 0.3).is_err());
        assert!(SystemParams::new(1.0, 1.0).is_err());
        assert!(SystemParams::new(1.0, -0.1).is_err());
        assert!(SystemParams::new(f64::NAN, 0.3).is_err());
    }

    proptest! {
        #[test]
        fn field_is_odd(x in -3.0..3.0f64, y in -3.0..3.0f64, z in -3.0..3.0f64,
                        a in 0.1..2.0f64, b in 0.0..0.99f64) {
            let p = params(a, b);
            let s = State::new(x, y, z);
            prop_assert_eq!(vector_field(&-s, &p), -vector_field(&s, &p));
        }

        #[test]
        fn vieta_relations(x in -3.0..3.0f64, a in 0.1..2.0f64, b in 0.0..0.99f64) {
            let p = params(a, b);
            let [l1, l2, l3] = characteristic_roots(x, &p);
            let c = 3.0 * x * x - a * a;
            prop_assert!(((l1 + l2 + l3) - Complex64::new(-b, 0.0)).norm() <= 1e-9);
            prop_assert!(((l1 * l2 + l1 * l3 + l2 * l3) - Complex64::new(1.0, 0.0)).norm() <= 1e-9);
            prop_assert!(((l1 * l2 * l3) - Complex64::new(c, 0.0)).norm() <= 1e-9 * (1.0 + c.abs()));
        }
    }
}
