//! Finite-element spline predictors built on the augmented precision matrix
//! `Q_alpha = Q + (1/alpha) (M phi0)(M phi0)^T`.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fem::FemSystem;
use crate::mesh::ProjectionMatrix;
use crate::sparse::{
    cholesky, cholesky_rank_one_bordered, largest_eigenvalue, rank_one_update,
    second_smallest_eigenvalue, CholeskyFactor, PowerOptions, SparseSymmetric,
};

/// Chosen `alpha` and the eigenvalue bracket it came from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AlphaSelection {
    pub alpha: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
}

/// `1 / sqrt(lambda_1 lambda_{m-1})`, the geometric midpoint of the bracket.
pub fn select_alpha_from(lambda_min: f64, lambda_max: f64) -> Result<f64> {
    if !(lambda_min > 0.0 && lambda_max >= lambda_min && lambda_max.is_finite()) {
        return Err(Error::Parameter(format!(
            "invalid eigenvalue bracket [{lambda_min}, {lambda_max}]"
        )));
    }
    Ok(1.0 / (lambda_min * lambda_max).sqrt())
}

/// Chooses `alpha` from the smallest nonzero and the largest eigenvalue of `S`.
pub fn select_alpha(fem: &FemSystem, opts: PowerOptions) -> Result<AlphaSelection> {
    let lambda_max = largest_eigenvalue(fem.s_matrix(), opts)?.value;
    let lambda_min = second_smallest_eigenvalue(fem.s_matrix(), &fem.kernel_vector(), opts)?;
    Ok(AlphaSelection {
        alpha: select_alpha_from(lambda_min, lambda_max)?,
        lambda_min,
        lambda_max,
    })
}

/// `h[u] = (u - phi0 (M phi0)^T u) / (1 - (M phi0)^T u)`.
pub fn h_transform(u: &[f64], fem: &FemSystem) -> Result<Vec<f64>> {
    if u.len() != fem.dim() {
        return Err(Error::DimensionMismatch {
            expected: fem.dim(),
            found: u.len(),
        });
    }
    let a = dot(&fem.mass_phi0(), u);
    let denom = 1.0 - a;
    if denom.abs() <= 1e-12 {
        return Err(Error::SingularTransform { denominator: denom });
    }
    Ok(u.iter().zip(fem.phi0()).map(|(ui, p)| (ui - p * a) / denom).collect())
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Sparse matrix plus a scaled rank-one term; never densified on the hot path.
#[derive(Clone, Debug)]
pub struct QAlpha {
    q: SparseSymmetric,
    w: Vec<f64>,
    inv_alpha: f64,
}

impl QAlpha {
    pub fn new(fem: &FemSystem, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::Parameter(format!("alpha must be positive, got {alpha}")));
        }
        Ok(Self {
            q: fem.q_matrix(),
            w: fem.mass_phi0(),
            inv_alpha: 1.0 / alpha,
        })
    }

    /// The sparse part `Q`.
    pub fn sparse_part(&self) -> &SparseSymmetric {
        &self.q
    }

    /// The vector `M phi0`.
    pub fn vector(&self) -> &[f64] {
        &self.w
    }

    pub fn inv_alpha(&self) -> f64 {
        self.inv_alpha
    }

    pub fn dim(&self) -> usize {
        self.w.len()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.q.mul_vec(x);
        let s = self.inv_alpha * dot(&self.w, x);
        y.iter_mut().zip(&self.w).for_each(|(yi, wi)| *yi += s * wi);
        y
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let w = DVector::from_column_slice(&self.w);
        self.q.to_dense() + self.inv_alpha * &w * w.transpose()
    }

    /// Factor of the full matrix. `Q` is singular, so a node is bordered on.
    pub fn factor(&self) -> Result<CholeskyFactor> {
        cholesky_rank_one_bordered(&self.q, self.inv_alpha, &self.w)
    }
}

#[derive(Debug)]
enum Solver {
    /// Observations on nodes `observed`, noise free. Holds the factor of the
    /// block of `Q_alpha` on the unobserved nodes.
    Interpolation {
        observed: Vec<usize>,
        free: Vec<usize>,
        factor: CholeskyFactor,
    },
    /// Factor of `tau^2 Q_alpha + A^T A`.
    Smoothing { factor: CholeskyFactor },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    /// Predicted values at the mesh nodes.
    pub values: Vec<f64>,
    /// Coefficient of `phi0` in the fitted trend.
    pub trend: f64,
    pub alpha: f64,
    /// `(M phi0)^T u(y)`.
    pub a_y: f64,
    /// `(M phi0)^T u(A phi0)`.
    pub a_phi: f64,
}

/// Assembled spline problem ready for repeated predictions.
#[derive(Debug)]
pub struct SplineModel {
    fem: FemSystem,
    q_alpha: QAlpha,
    alpha: f64,
    projection: ProjectionMatrix,
    tau: f64,
    solver: Solver,
    full_factor: OnceLock<CholeskyFactor>,
}

impl SplineModel {
    /// Builds a model, choosing `alpha` from the spectrum of `S`.
    pub fn new(fem: FemSystem, projection: ProjectionMatrix, tau: f64) -> Result<Self> {
        let sel = select_alpha(&fem, PowerOptions::default())?;
        Self::with_alpha(fem, projection, tau, sel.alpha)
    }

    /// Builds a model with a given `alpha`. `tau == 0` needs node-indexed
    /// observations on fewer nodes than the mesh has; `tau > 0` uses the
    /// smoothing path for any projection.
    pub fn with_alpha(fem: FemSystem, projection: ProjectionMatrix, tau: f64, alpha: f64) -> Result<Self> {
        let m = fem.dim();
        if projection.ncols() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                found: projection.ncols(),
            });
        }
        if projection.nrows() == 0 {
            return Err(Error::Parameter("at least one observation is required".into()));
        }
        if !(tau >= 0.0) || !tau.is_finite() {
            return Err(Error::Parameter(format!("noise tau must be >= 0, got {tau}")));
        }
        let q_alpha = QAlpha::new(&fem, alpha)?;
        let solver = if tau == 0.0 {
            let observed = projection.indicator_indices().ok_or_else(|| {
                Error::Parameter(
                    "interpolation (tau = 0) requires observations on distinct mesh nodes".into(),
                )
            })?;
            if observed.len() >= m {
                return Err(Error::Parameter(format!(
                    "interpolation needs fewer observations ({}) than nodes ({m})",
                    observed.len()
                )));
            }
            let mut is_obs = vec![false; m];
            for &i in &observed {
                is_obs[i] = true;
            }
            let free: Vec<usize> = (0..m).filter(|&j| !is_obs[j]).collect();
            let block = q_alpha.q.principal_submatrix(&free)?;
            let w_free: Vec<f64> = free.iter().map(|&j| q_alpha.w[j]).collect();
            let factor = rank_one_update(&cholesky(&block)?, q_alpha.inv_alpha, &w_free)?;
            Solver::Interpolation {
                observed,
                free,
                factor,
            }
        } else {
            let t2 = tau * tau;
            let sys = q_alpha.q.linear_combination(t2, &projection.gram(), 1.0)?;
            let factor = rank_one_update(&cholesky(&sys)?, t2 * q_alpha.inv_alpha, &q_alpha.w)?;
            Solver::Smoothing { factor }
        };
        Ok(Self {
            fem,
            q_alpha,
            alpha,
            projection,
            tau,
            solver,
            full_factor: OnceLock::new(),
        })
    }

    pub fn fem(&self) -> &FemSystem {
        &self.fem
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn projection(&self) -> &ProjectionMatrix {
        &self.projection
    }

    pub fn q_alpha(&self) -> &QAlpha {
        &self.q_alpha
    }

    pub fn num_observations(&self) -> usize {
        self.projection.nrows()
    }

    pub fn is_interpolation(&self) -> bool {
        matches!(self.solver, Solver::Interpolation { .. })
    }

    /// Observed and unobserved node sets in the interpolation case.
    pub fn node_partition(&self) -> Option<(&[usize], &[usize])> {
        match &self.solver {
            Solver::Interpolation { observed, free, .. } => Some((observed, free)),
            Solver::Smoothing { .. } => None,
        }
    }

    /// Factor used by the scenario: the unobserved block of `Q_alpha` when
    /// interpolating, `tau^2 Q_alpha + A^T A` when smoothing.
    pub fn scenario_factor(&self) -> &CholeskyFactor {
        match &self.solver {
            Solver::Interpolation { factor, .. } | Solver::Smoothing { factor } => factor,
        }
    }

    /// Factor of the full `Q_alpha`, computed on first use.
    pub fn full_factor(&self) -> Result<&CholeskyFactor> {
        if let Some(f) = self.full_factor.get() {
            return Ok(f);
        }
        let f = self.q_alpha.factor()?;
        Ok(self.full_factor.get_or_init(|| f))
    }

    fn check_len(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.num_observations() {
            return Err(Error::DimensionMismatch {
                expected: self.num_observations(),
                found: x.len(),
            });
        }
        Ok(())
    }

    /// Noise-free interpolation: `u_I = x` and the unobserved values solve
    /// `[Q_alpha]_{free,free} u_free = -[Q_alpha]_{free,I} x`.
    pub fn u_interp(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_len(x)?;
        let Solver::Interpolation {
            observed,
            free,
            factor,
        } = &self.solver
        else {
            return Err(Error::Parameter("model is not in the interpolation scenario".into()));
        };
        let mut z = vec![0.0; self.fem.dim()];
        for (&i, &xi) in observed.iter().zip(x) {
            z[i] = xi;
        }
        let r = self.q_alpha.mul_vec(&z);
        let rhs: Vec<f64> = free.iter().map(|&j| -r[j]).collect();
        let omega = factor.solve(&rhs);
        for (&j, &o) in free.iter().zip(&omega) {
            z[j] = o;
        }
        Ok(z)
    }

    /// Smoothing: solves `(tau^2 Q_alpha + A^T A) u = A^T x`.
    pub fn u_smooth(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_len(x)?;
        let Solver::Smoothing { factor } = &self.solver else {
            return Err(Error::Parameter("model is not in the smoothing scenario".into()));
        };
        Ok(factor.solve(&self.projection.mul_transpose(x)))
    }

    /// `u_{tau,alpha}(x)` through the scenario's solver.
    pub fn u(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self.solver {
            Solver::Interpolation { .. } => self.u_interp(x),
            Solver::Smoothing { .. } => self.u_smooth(x),
        }
    }

    /// `A phi0`.
    pub fn projected_phi0(&self) -> Vec<f64> {
        self.projection.mul(self.fem.phi0())
    }

    /// Spline prediction at every node from observed values `y`.
    pub fn predict(&self, y: &[f64]) -> Result<Prediction> {
        self.check_len(y)?;
        let aphi = self.projected_phi0();
        let (uy, uphi) = rayon::join(|| self.u(y), || self.u(&aphi));
        let (uy, uphi) = (uy?, uphi?);
        let w = &self.q_alpha.w;
        let a_y = dot(w, &uy);
        let a_phi = dot(w, &uphi);
        if a_phi.abs() <= 1e-300 {
            return Err(Error::SingularTransform { denominator: a_phi });
        }
        let h = h_transform(&uphi, &self.fem)?;
        let values = uy
            .iter()
            .zip(self.fem.phi0())
            .zip(&h)
            .map(|((u, p), hi)| u + ((p - hi) / a_phi - p + hi) * a_y)
            .collect();
        Ok(Prediction {
            values,
            trend: a_y / a_phi,
            alpha: self.alpha,
            a_y,
            a_phi,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_projection, generate_sphere_mesh, Sites};
    use crate::metric::MetricField;

    fn sphere_fem(r: u32) -> FemSystem {
        FemSystem::assemble(&generate_sphere_mesh(r).unwrap(), &MetricField::Isotropic).unwrap()
    }

    #[test]
    fn alpha_from_bracket() {
        assert!((select_alpha_from(2.0, 8.0).unwrap() - 0.25).abs() < 1e-15);
        assert!((select_alpha_from(3.0, 3.0).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(select_alpha_from(0.0, 1.0).is_err());
    }

    #[test]
    fn alpha_inside_bracket() {
        let fem = sphere_fem(2);
        let sel = select_alpha(&fem, PowerOptions::default()).unwrap();
        let inv = 1.0 / sel.alpha;
        assert!(sel.lambda_min <= inv && inv <= sel.lambda_max);
        assert!(sel.lambda_min > 0.0);
    }

    #[test]
    fn q_alpha_on_phi0() {
        let fem = sphere_fem(1);
        let qa = QAlpha::new(&fem, 0.3).unwrap();
        let r = qa.mul_vec(fem.phi0());
        for (ri, wi) in r.iter().zip(fem.mass_phi0()) {
            assert!((ri - wi / 0.3).abs() < 1e-10);
        }
        let d = qa.to_dense();
        assert!((&d - d.transpose()).abs().max() < 1e-14);
    }

    #[test]
    fn h_transform_cases() {
        let fem = sphere_fem(1);
        assert!(matches!(h_transform(fem.phi0(), &fem), Err(Error::SingularTransform { .. })));
        let mut u = vec![0.0; fem.dim()];
        u[0] = 1.0;
        u[1] = -fem.mass()[0] / fem.mass()[1];
        let h = h_transform(&u, &fem).unwrap();
        for (a, b) in h.iter().zip(&u) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn interpolation_hits_data_and_constants() {
        let mesh = generate_sphere_mesh(2).unwrap();
        let fem = FemSystem::assemble(&mesh, &MetricField::Isotropic).unwrap();
        let nodes = vec![3, 40, 77, 101, 150];
        let a = build_projection(&mesh, &Sites::Nodes(nodes.clone())).unwrap();
        let model = SplineModel::new(fem, a, 0.0).unwrap();
        let y = [1.0, -0.5, 2.0, 0.3, 0.0];
        let p = model.predict(&y).unwrap();
        for (&i, &yi) in nodes.iter().zip(&y) {
            assert!((p.values[i] - yi).abs() < 1e-8 * (1.0 + yi.abs()));
        }
        let c = model.predict(&[2.5; 5]).unwrap();
        assert!(c.values.iter().all(|v| (v - 2.5).abs() < 1e-8));
    }

    #[test]
    fn interpolation_is_linear() {
        let mesh = generate_sphere_mesh(2).unwrap();
        let fem = FemSystem::assemble(&mesh, &MetricField::Isotropic).unwrap();
        let a = build_projection(&mesh, &Sites::Nodes(vec![0, 9, 60])).unwrap();
        let model = SplineModel::with_alpha(fem, a, 0.0, 0.1).unwrap();
        let x = [0.2, 1.0, -3.0];
        let u1 = model.u_interp(&x).unwrap();
        let u2 = model.u_interp(&x.map(|v| 2.0 * v)).unwrap();
        for (a, b) in u1.iter().zip(&u2) {
            assert!((2.0 * a - b).abs() < 1e-10 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn smoothing_shrinks_with_large_noise() {
        let mesh = generate_sphere_mesh(2).unwrap();
        let fem = FemSystem::assemble(&mesh, &MetricField::Isotropic).unwrap();
        let a = build_projection(&mesh, &Sites::Nodes(vec![0, 9, 60])).unwrap();
        let model = SplineModel::with_alpha(fem, a, 1e6, 0.1).unwrap();
        let u = model.u_smooth(&[1.0, 2.0, 3.0]).unwrap();
        assert!(u.iter().all(|v| v.abs() < 1e-6));
    }

    #[test]
    fn scenario_guards() {
        let mesh = generate_sphere_mesh(1).unwrap();
        let fem = FemSystem::assemble(&mesh, &MetricField::Isotropic).unwrap();
        let pts = Sites::Points(vec![mesh.centroid(0).normalize()]);
        let a = build_projection(&mesh, &pts).unwrap();
        assert!(SplineModel::with_alpha(fem.clone(), a, 0.0, 1.0).is_err());
        let all = build_projection(&mesh, &Sites::Nodes((0..42).collect())).unwrap();
        assert!(SplineModel::with_alpha(fem, all, 0.0, 1.0).is_err());
    }
}
