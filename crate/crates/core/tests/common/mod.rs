//! Dense reference computations shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use surfspline::fem::FemSystem;
use surfspline::mesh::ProjectionMatrix;

/// Covariance `D S^+^2 D` with `D = M^{-1/2}`, from a dense eigendecomposition of `S`.
pub fn dense_sigma(fem: &FemSystem) -> DMatrix<f64> {
    let m = fem.dim();
    let s = fem.s_matrix().to_dense();
    let eig = s.symmetric_eigen();
    let lmax = eig.eigenvalues.amax();
    let f = DVector::from_iterator(
        m,
        eig.eigenvalues
            .iter()
            .map(|&l| if l.abs() <= 1e-9 * lmax { 0.0 } else { 1.0 / (l * l) }),
    );
    let v = &eig.eigenvectors;
    let core = v * DMatrix::from_diagonal(&f) * v.transpose();
    let d = DVector::from_iterator(m, fem.mass().iter().map(|x| 1.0 / x.sqrt()));
    DMatrix::from_fn(m, m, |i, j| d[i] * core[(i, j)] * d[j])
}

pub struct DenseFit {
    pub values: DVector<f64>,
    pub trend: f64,
    pub loglik: f64,
    pub logdet: f64,
    pub quad: f64,
}

/// Universal kriging with covariance `Sigma`, noise `tau^2` and trend `phi0`.
pub fn dense_fit(fem: &FemSystem, a: &ProjectionMatrix, y: &[f64], tau: f64) -> DenseFit {
    dense_fit_with(fem, &dense_sigma(fem), a, y, tau)
}

/// As [`dense_fit`] with a precomputed covariance.
pub fn dense_fit_with(fem: &FemSystem, sigma: &DMatrix<f64>, a: &ProjectionMatrix, y: &[f64], tau: f64) -> DenseFit {
    let a = a.to_dense();
    let n = a.nrows();
    let y = DVector::from_column_slice(y);
    let phi0 = DVector::from_column_slice(fem.phi0());
    let k = &a * sigma * a.transpose() + DMatrix::identity(n, n) * (tau * tau);
    let chol = k.clone().cholesky().expect("kernel matrix positive definite");
    let b = &a * &phi0;
    let kb = chol.solve(&b);
    let ky = chol.solve(&y);
    let trend = b.dot(&ky) / b.dot(&kb);
    let r = &y - &b * trend;
    let kr = chol.solve(&r);
    let values = &phi0 * trend + sigma * a.transpose() * &kr;
    let logdet = 2.0 * chol.l().diagonal().iter().map(|x| x.ln()).sum::<f64>();
    let quad = r.dot(&kr);
    let loglik = -0.5 * (n as f64 * (2.0 * std::f64::consts::PI).ln() + logdet + quad);
    DenseFit {
        values,
        trend,
        loglik,
        logdet,
        quad,
    }
}

pub fn random_nodes(m: usize, n: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rand::seq::index::sample(&mut rng, m, n).into_vec()
}

pub fn random_values(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().map(|x| x.abs()).fold(0.0, f64::max)
}

/// Random points on the unit sphere, kept away from the poles.
pub fn sphere_points(n: usize, seed: u64) -> Vec<surfspline::mesh::Point> {
    random_values(3 * n, seed)
        .chunks(3)
        .map(|c| surfspline::mesh::Point::new(c[0], c[1], 0.9 * c[2]).normalize())
        .collect()
}

pub fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    sab / (saa * sbb).sqrt()
}
