//! Classical spline baseline on the unit sphere: dense universal kriging with
//! a truncated Legendre series kernel, plus the analytical test functions.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mesh::Point;
use crate::metric::rotation_matrix_2d;

pub const DEFAULT_TRUNCATION: usize = 40;

const UNIT_TOLERANCE: f64 = 1e-9;
const MAX_CONDITION: f64 = 1e12;

/// Legendre polynomial `P_k(x)` by the three-term recurrence.
pub fn legendre(k: usize, x: f64) -> Result<f64> {
    if !(x.abs() <= 1.0) {
        return Err(Error::Domain(format!("Legendre argument {x} outside [-1, 1]")));
    }
    Ok(legendre_unchecked(k, x))
}

fn legendre_unchecked(k: usize, x: f64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    let (mut p0, mut p1) = (1.0, x);
    for j in 1..k {
        let jf = j as f64;
        let p2 = ((2.0 * jf + 1.0) * x * p1 - jf * p0) / (jf + 1.0);
        p0 = p1;
        p1 = p2;
    }
    p1
}

/// `sum_{k=1}^{K} (2k+1)/(k^2 (k+1)^2) P_k(cos xi)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TruncatedSphericalKernel {
    coefficients: Vec<f64>,
}

impl Default for TruncatedSphericalKernel {
    fn default() -> Self {
        Self::new(DEFAULT_TRUNCATION)
    }
}

impl TruncatedSphericalKernel {
    pub fn new(truncation: usize) -> Self {
        let coefficients = (1..=truncation)
            .map(|k| {
                let k = k as f64;
                (2.0 * k + 1.0) / (k * k * (k + 1.0) * (k + 1.0))
            })
            .collect();
        Self { coefficients }
    }

    pub fn truncation(&self) -> usize {
        self.coefficients.len()
    }

    /// Coefficient of `P_k` for `k = 1..=K`.
    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    /// Kernel as a function of the cosine of the angle.
    pub fn eval_cos(&self, x: f64) -> f64 {
        let x = x.clamp(-1.0, 1.0);
        let (mut p0, mut p1) = (1.0, x);
        let mut sum = 0.0;
        for (j, c) in self.coefficients.iter().enumerate() {
            let k = (j + 1) as f64;
            sum += c * p1;
            let p2 = ((2.0 * k + 1.0) * x * p1 - k * p0) / (k + 1.0);
            p0 = p1;
            p1 = p2;
        }
        sum
    }

    pub fn eval(&self, s1: &Point, s2: &Point) -> Result<f64> {
        for s in [s1, s2] {
            if (s.norm() - 1.0).abs() > UNIT_TOLERANCE {
                return Err(Error::Domain(format!("point with norm {} is not on the unit sphere", s.norm())));
            }
        }
        Ok(self.eval_cos(s1.dot(s2)))
    }

    /// Kernel matrix between two point sets.
    pub fn matrix(&self, rows: &[Point], cols: &[Point]) -> Result<DMatrix<f64>> {
        check_unit(rows)?;
        check_unit(cols)?;
        let entries: Vec<f64> = rows
            .par_iter()
            .flat_map_iter(|r| cols.iter().map(move |c| self.eval_cos(r.dot(c))))
            .collect();
        Ok(DMatrix::from_row_slice(rows.len(), cols.len(), &entries))
    }
}

fn check_unit(points: &[Point]) -> Result<()> {
    match points.iter().find(|s| (s.norm() - 1.0).abs() > UNIT_TOLERANCE) {
        Some(s) => Err(Error::Domain(format!("point with norm {} is not on the unit sphere", s.norm()))),
        None => Ok(()),
    }
}

/// Positive definiteness of the kernel matrix on `points`, judged by its
/// smallest eigenvalue relative to the largest. Fails when two observation
/// sites coincide since the corresponding rows are equal.
pub fn kernel_is_positive_definite(kernel: &TruncatedSphericalKernel, points: &[Point]) -> Result<bool> {
    let k = kernel.matrix(points, points)?;
    let eig = k.symmetric_eigen().eigenvalues;
    let max = eig.amax();
    Ok(eig.min() > 1e-12 * max)
}

/// Constant unit-norm function on the unit sphere.
pub fn sphere_phi0() -> f64 {
    1.0 / (4.0 * PI).sqrt()
}

/// Fitted classical spline `u(s) = a phi0 + b^T k(s)`.
#[derive(Clone, Debug)]
pub struct ClassicalSpline {
    kernel: TruncatedSphericalKernel,
    points: Vec<Point>,
    phi0: f64,
    pub a: f64,
    pub b: Vec<f64>,
    /// Diagonal jitter that was needed to factor the kernel matrix.
    pub jitter: f64,
}

impl ClassicalSpline {
    /// Solves the universal kriging system with noise `tau >= 0`.
    pub fn fit(kernel: &TruncatedSphericalKernel, points: &[Point], y: &[f64], tau: f64) -> Result<Self> {
        Self::fit_with_trend(kernel, points, y, tau, sphere_phi0())
    }

    /// As [`ClassicalSpline::fit`] with an explicit constant trend basis value.
    pub fn fit_with_trend(
        kernel: &TruncatedSphericalKernel,
        points: &[Point],
        y: &[f64],
        tau: f64,
        phi0: f64,
    ) -> Result<Self> {
        let n = points.len();
        if n == 0 {
            return Err(Error::Parameter("at least one observation is required".into()));
        }
        if y.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: y.len() });
        }
        if !(tau >= 0.0) || !(phi0 > 0.0) {
            return Err(Error::Parameter("tau must be >= 0 and phi0 > 0".into()));
        }
        if tau == 0.0 {
            for i in 0..n {
                for j in 0..i {
                    if (points[i] - points[j]).norm() <= 1e-12 {
                        return Err(Error::Parameter(format!(
                            "observations {j} and {i} coincide; the interpolating kernel matrix is singular"
                        )));
                    }
                }
            }
        }
        let mut k = kernel.matrix(points, points)?;
        for i in 0..n {
            k[(i, i)] += tau * tau;
        }
        let (chol, jitter) = factor_with_jitter(k)?;
        let yv = DVector::from_column_slice(y);
        let ones = DVector::from_element(n, phi0);
        let k_phi = chol.solve(&ones);
        let k_y = chol.solve(&yv);
        let a = ones.dot(&k_y) / ones.dot(&k_phi);
        let b = chol.solve(&(yv - ones * a));
        Ok(Self {
            kernel: kernel.clone(),
            points: points.to_vec(),
            phi0,
            a,
            b: b.as_slice().to_vec(),
            jitter,
        })
    }

    pub fn predict_at(&self, query: &[Point]) -> Result<Vec<f64>> {
        check_unit(query)?;
        Ok(query
            .par_iter()
            .map(|q| {
                self.a * self.phi0
                    + self
                        .points
                        .iter()
                        .zip(&self.b)
                        .map(|(s, b)| b * self.kernel.eval_cos(s.dot(q)))
                        .sum::<f64>()
            })
            .collect())
    }

    /// `b^T phi_obs`, zero for the interpolating spline.
    pub fn side_condition(&self) -> f64 {
        self.b.iter().sum::<f64>() * self.phi0
    }
}

/// Fits and predicts in one call.
pub fn classical_predict(
    kernel: &TruncatedSphericalKernel,
    points: &[Point],
    y: &[f64],
    query: &[Point],
    tau: f64,
) -> Result<Vec<f64>> {
    ClassicalSpline::fit(kernel, points, y, tau)?.predict_at(query)
}

/// Cholesky factor of `k`, adding relative diagonal jitter `1e-12, 1e-11, ..., 1e-6`
/// when the plain factorization fails or is too ill-conditioned.
fn factor_with_jitter(k: DMatrix<f64>) -> Result<(nalgebra::Cholesky<f64, nalgebra::Dyn>, f64)> {
    let n = k.nrows();
    let mean_diag = k.diagonal().mean().abs().max(f64::MIN_POSITIVE);
    let acceptable = |c: &nalgebra::Cholesky<f64, nalgebra::Dyn>| {
        let d = c.l_dirty().diagonal();
        let (lo, hi) = d.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &x| (lo.min(x), hi.max(x)));
        lo > 0.0 && (hi / lo).powi(2) < MAX_CONDITION
    };
    if let Some(c) = k.clone().cholesky() {
        if acceptable(&c) {
            return Ok((c, 0.0));
        }
    }
    let mut rel = 1e-12;
    while rel <= 1e-6 * (1.0 + 1e-9) {
        let mut kj = k.clone();
        for i in 0..n {
            kj[(i, i)] += rel * mean_diag;
        }
        if let Some(c) = kj.cholesky() {
            if acceptable(&c) {
                log::warn!("kernel matrix needed diagonal jitter {:e}", rel * mean_diag);
                return Ok((c, rel * mean_diag));
            }
        }
        rel *= 10.0;
    }
    Err(Error::Conditioning { jitter: 1e-6 * mean_diag })
}

/// `cos(2 theta + phi + pi/4) sin^2 theta`.
pub fn f_sphere(theta: f64, phi: f64) -> f64 {
    (2.0 * theta + phi + PI / 4.0).cos() * theta.sin().powi(2)
}

/// `P = diag(0.5, 1.5) R(pi/5)` used by [`f_cyl`].
pub fn cylinder_transform() -> Matrix2<f64> {
    Matrix2::new(0.5, 0.0, 0.0, 1.5) * rotation_matrix_2d(PI / 5.0)
}

/// `exp(-3/4 |P (cos theta, z / z_max)|^2)`.
pub fn f_cyl(theta: f64, z: f64, z_max: f64) -> f64 {
    let p = cylinder_transform() * Vector2::new(theta.cos(), z / z_max);
    (-0.75 * p.norm_squared()).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn legendre_values() {
        assert_eq!(legendre(0, 0.3).unwrap(), 1.0);
        assert!((legendre(2, 0.5).unwrap() + 0.125).abs() < 1e-15);
        assert!((legendre(40, 1.0).unwrap() - 1.0).abs() < 1e-12);
        assert!((legendre(7, -1.0).unwrap() + 1.0).abs() < 1e-12);
        assert!(matches!(legendre(3, 1.5), Err(Error::Domain(_))));
        // P_3 explicitly.
        let x = 0.37;
        assert!((legendre(3, x).unwrap() - 0.5 * (5.0 * x * x * x - 3.0 * x)).abs() < 1e-14);
    }

    #[test]
    fn coefficients_decrease() {
        let k = TruncatedSphericalKernel::default();
        assert_eq!(k.truncation(), 40);
        assert!(k.coefficients().windows(2).all(|w| w[0] > w[1] && w[1] > 0.0));
    }

    #[test]
    fn kernel_at_coincident_and_antipodal_points() {
        let k = TruncatedSphericalKernel::default();
        let s = Point::new(0.0, 0.6, 0.8);
        let same: f64 = (1..=40).map(|k| (2 * k + 1) as f64 / (k * k * (k + 1) * (k + 1)) as f64).sum();
        let anti: f64 = (1..=40)
            .map(|k| if k % 2 == 0 { 1.0 } else { -1.0 } * (2 * k + 1) as f64 / (k * k * (k + 1) * (k + 1)) as f64)
            .sum();
        assert!((k.eval(&s, &s).unwrap() - same).abs() < 1e-13);
        assert!((k.eval(&s, &(-s)).unwrap() - anti).abs() < 1e-13);
        assert!(k.eval(&s, &(s * 2.0)).is_err());
    }

    #[test]
    fn test_function_values() {
        assert_eq!(f_sphere(0.0, 1.3), 0.0);
        assert!(f_sphere(PI / 2.0, PI / 4.0).abs() < 1e-15);
        assert!((f_sphere(PI / 2.0, 0.0) + 0.5f64.sqrt()).abs() < 1e-15);
        assert!((f_cyl(PI / 2.0, 0.0, 10.0) - 1.0).abs() < 1e-15);
        let (c, s) = ((PI / 5.0).cos(), (PI / 5.0).sin());
        let p = [0.5 * (c - s), 1.5 * (s + c)];
        let expected = (-0.75 * (p[0] * p[0] + p[1] * p[1])).exp();
        assert!((f_cyl(0.0, 10.0, 10.0) - expected).abs() < 1e-15);
    }

    fn unit(v: [f64; 3]) -> Point {
        Point::new(v[0], v[1], v[2] + 1e-3).normalize()
    }

    proptest! {
        #[test]
        fn kernel_is_symmetric(a in prop::array::uniform3(-1.0f64..1.0), b in prop::array::uniform3(-1.0f64..1.0)) {
            let k = TruncatedSphericalKernel::default();
            let (a, b) = (unit(a), unit(b));
            prop_assert_eq!(k.eval(&a, &b).unwrap(), k.eval(&b, &a).unwrap());
        }

        #[test]
        fn cylinder_function_in_unit_interval(theta in 0.0f64..(2.0 * PI), z in 0.0f64..10.0) {
            let v = f_cyl(theta, z, 10.0);
            prop_assert!(v > 0.0 && v <= 1.0);
        }
    }
}
