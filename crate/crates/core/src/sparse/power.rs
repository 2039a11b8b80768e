use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{cholesky, SparseSymmetric};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub struct PowerOptions {
    pub tol: f64,
    /// `None` means `10 * dimension`.
    pub max_iters: Option<usize>,
}

impl Default for PowerOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iters: None,
        }
    }
}

impl PowerOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            tol,
            ..Self::default()
        }
    }
}

#[derive(Clone, Debug)]
pub struct EigenEstimate {
    pub value: f64,
    pub vector: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

/// Number of vectors iterated together.
pub const POWER_BLOCK: usize = 16;

fn start_block(n: usize, b: usize) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
    let x = DMatrix::from_fn(n, b, |_, _| rng.random::<f64>() - 0.5);
    x.qr().q()
}

/// Dominant eigenpair of a symmetric positive semidefinite operator.
///
/// A block of vectors is iterated together and the pair is extracted by a
/// Rayleigh-Ritz step, so clusters at the top of the spectrum do not stall
/// convergence. Stops once the residual `|A v - lambda v|` of the leading
/// Ritz pair falls below `tol * lambda`.
pub fn power_iteration_max<F>(matvec: F, n: usize, opts: PowerOptions) -> Result<EigenEstimate>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    if n == 0 {
        return Err(Error::Parameter("empty operator".into()));
    }
    let max_iters = opts.max_iters.unwrap_or(10 * n).max(1);
    let b = n.min(POWER_BLOCK);
    let mut q = start_block(n, b);
    let mut z = DMatrix::zeros(n, b);
    let mut best = (0.0, vec![0.0; n], f64::INFINITY);
    for it in 1..=max_iters {
        for j in 0..b {
            let col: Vec<f64> = q.column(j).iter().copied().collect();
            let y = matvec(&col);
            if y.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: y.len(),
                });
            }
            z.column_mut(j).copy_from_slice(&y);
        }
        let h = q.transpose() * &z;
        let h = (&h + h.transpose()) * 0.5;
        let eig = h.symmetric_eigen();
        let top = eig.eigenvalues.imax();
        let lambda = eig.eigenvalues[top];
        let y = eig.eigenvectors.column(top);
        let v = &q * y;
        let av = &z * y;
        let residual = (&av - &v * lambda).norm();
        best = (lambda, v.iter().copied().collect(), residual);
        if residual <= opts.tol * lambda.abs() {
            return Ok(EigenEstimate {
                value: lambda,
                vector: best.1,
                iterations: it,
                residual,
            });
        }
        q = z.clone().qr().q();
    }
    Err(Error::Convergence {
        iterations: max_iters,
        estimate: best.0,
        residual: best.2,
        vector: best.1,
    })
}

fn normalize(v: &mut [f64]) -> f64 {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    norm
}

/// Largest eigenvalue of a sparse symmetric positive semidefinite matrix.
pub fn largest_eigenvalue(a: &SparseSymmetric, opts: PowerOptions) -> Result<EigenEstimate> {
    power_iteration_max(|v| a.mul_vec(v), a.dim(), opts)
}

/// Smallest nonzero eigenvalue of a positive semidefinite `s` whose kernel is
/// spanned by `kernel`. Runs power iteration on `(S + I)^{-1} - e e^T` with
/// `e` the normalized kernel vector and maps the result back.
pub fn second_smallest_eigenvalue(
    s: &SparseSymmetric,
    kernel: &[f64],
    opts: PowerOptions,
) -> Result<f64> {
    let n = s.dim();
    if kernel.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: kernel.len(),
        });
    }
    let mut e = kernel.to_vec();
    if normalize(&mut e) == 0.0 {
        return Err(Error::Parameter("kernel vector is zero".into()));
    }
    let shifted = s.add_diagonal(&vec![1.0; n])?;
    let factor = cholesky(&shifted)?;
    let op = |v: &[f64]| {
        let mut x = factor.solve(v);
        let d: f64 = e.iter().zip(v).map(|(a, b)| a * b).sum();
        x.iter_mut().zip(&e).for_each(|(xi, ei)| *xi -= d * ei);
        x
    };
    let est = power_iteration_max(op, n, opts)?;
    if !(est.value > 0.0) {
        return Err(Error::Parameter(
            "deflated operator has no positive eigenvalue".into(),
        ));
    }
    Ok((1.0 / est.value - 1.0).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_dominant_value() {
        let a = SparseSymmetric::from_diagonal(&[1.0, 2.0, 5.0]);
        let e = largest_eigenvalue(&a, PowerOptions::default()).unwrap();
        assert!((e.value - 5.0).abs() < 1e-7);
        assert!(e.residual <= 1e-8 * e.value);
    }

    #[test]
    fn identity_converges_immediately() {
        let a = SparseSymmetric::identity(7);
        let e = largest_eigenvalue(&a, PowerOptions::default()).unwrap();
        assert_eq!(e.iterations, 1);
        assert!((e.value - 1.0).abs() < 1e-14);
    }

    #[test]
    fn deflated_inverse_gives_second_eigenvalue() {
        let s = SparseSymmetric::from_diagonal(&[0.0, 2.0, 5.0]);
        let l1 = second_smallest_eigenvalue(&s, &[1.0, 0.0, 0.0], PowerOptions::default()).unwrap();
        assert!((l1 - 2.0).abs() < 1e-7);
    }

    #[test]
    fn non_convergence_reports_best_iterate() {
        let d: Vec<f64> = (0..60).map(|i| 1.0 - 1e-3 * i as f64).collect();
        let a = SparseSymmetric::from_diagonal(&d);
        let opts = PowerOptions {
            tol: 1e-15,
            max_iters: Some(2),
        };
        match largest_eigenvalue(&a, opts) {
            Err(Error::Convergence {
                iterations, vector, ..
            }) => {
                assert_eq!(iterations, 2);
                assert_eq!(vector.len(), 60);
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
