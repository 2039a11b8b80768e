//! Maximum-likelihood estimation of constant anisotropy parameters.

mod cmaes;

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

pub use cmaes::{default_population, maximize, reflect, CmaesOptions, CmaesResult, StopReason};

use crate::error::{Error, Result};
use crate::fem::FemSystem;
use crate::likelihood::{log_likelihood, LikelihoodReport};
use crate::mesh::{build_projection, Observations, ProjectionMatrix, TriangleMesh};
use crate::metric::{Anisotropy, Hyperparameters, MetricField};
use crate::sparse::PowerOptions;
use crate::spline::{select_alpha, SplineModel};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    /// Starting `(delta, rho1, rho2)`.
    pub initial: [f64; 3],
    pub initial_tau: Option<f64>,
    pub delta_bounds: [f64; 2],
    pub rho_bounds: [f64; 2],
    pub tau_bounds: [f64; 2],
    /// Defaults to `4 + floor(3 ln d)`.
    pub population: Option<usize>,
    pub max_evaluations: usize,
    /// Spread of objective values below which the search stops.
    pub tolerance: f64,
    /// Initial step size as a fraction of the box.
    pub sigma0: f64,
    pub seed: u64,
    pub estimate_tau: bool,
    /// Relative tolerance of the eigenvalue estimates used to pick `alpha`.
    pub alpha_tolerance: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            initial: [0.0, 1.0, 1.0],
            initial_tau: None,
            delta_bounds: [-FRAC_PI_2, FRAC_PI_2],
            rho_bounds: [0.05, 20.0],
            tau_bounds: [1e-4, 10.0],
            population: None,
            max_evaluations: 400,
            tolerance: 1e-8,
            sigma0: 0.3,
            seed: 0,
            estimate_tau: false,
            alpha_tolerance: 1e-2,
        }
    }
}

impl FitConfig {
    pub fn dimension(&self) -> usize {
        if self.estimate_tau {
            4
        } else {
            3
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ordered = |name: &str, b: [f64; 2], positive: bool| {
            if !(b[0] < b[1]) || !b[0].is_finite() || !b[1].is_finite() || (positive && !(b[0] > 0.0)) {
                return Err(Error::Parameter(format!("invalid {name} bounds [{}, {}]", b[0], b[1])));
            }
            Ok(())
        };
        ordered("delta", self.delta_bounds, false)?;
        ordered("rho", self.rho_bounds, true)?;
        if self.estimate_tau {
            ordered("tau", self.tau_bounds, true)?;
        }
        let inside = |x: f64, b: [f64; 2]| x >= b[0] && x <= b[1];
        if !inside(self.initial[0], self.delta_bounds)
            || !inside(self.initial[1], self.rho_bounds)
            || !inside(self.initial[2], self.rho_bounds)
        {
            return Err(Error::Parameter(format!("initial parameters {:?} lie outside the bounds", self.initial)));
        }
        if let (true, Some(t)) = (self.estimate_tau, self.initial_tau) {
            if !inside(t, self.tau_bounds) {
                return Err(Error::Parameter(format!("initial tau {t} lies outside the bounds")));
            }
        }
        if self.population.is_some_and(|p| p < 4) {
            return Err(Error::Parameter("population must be at least 4".into()));
        }
        if self.max_evaluations == 0 || !(self.sigma0 > 0.0) || !(self.tolerance >= 0.0) {
            return Err(Error::Parameter("max_evaluations, sigma0 and tolerance must be positive".into()));
        }
        if !(self.alpha_tolerance > 0.0) {
            return Err(Error::Parameter("alpha_tolerance must be positive".into()));
        }
        Ok(())
    }

    fn lin(x: f64, b: [f64; 2]) -> f64 {
        b[0] + x * (b[1] - b[0])
    }

    fn log(x: f64, b: [f64; 2]) -> f64 {
        (b[0].ln() + x * (b[1].ln() - b[0].ln())).exp()
    }

    fn inv_lin(v: f64, b: [f64; 2]) -> f64 {
        (v - b[0]) / (b[1] - b[0])
    }

    fn inv_log(v: f64, b: [f64; 2]) -> f64 {
        (v.ln() - b[0].ln()) / (b[1].ln() - b[0].ln())
    }

    /// Maps a point of the unit box to parameters. `tau` is present only
    /// when it is estimated.
    pub fn decode(&self, x: &[f64]) -> Result<Hyperparameters> {
        let tau = if self.estimate_tau {
            Some(Self::log(x[3], self.tau_bounds))
        } else {
            None
        };
        Hyperparameters::new(
            Self::lin(x[0], self.delta_bounds),
            Self::log(x[1], self.rho_bounds),
            Self::log(x[2], self.rho_bounds),
            tau,
        )
    }

    pub fn encode(&self, delta: f64, rho: [f64; 2], tau: Option<f64>) -> Vec<f64> {
        let mut x = vec![
            Self::inv_lin(delta, self.delta_bounds),
            Self::inv_log(rho[0], self.rho_bounds),
            Self::inv_log(rho[1], self.rho_bounds),
        ];
        if self.estimate_tau {
            let t = tau.unwrap_or((self.tau_bounds[0] * self.tau_bounds[1]).sqrt());
            x.push(Self::inv_log(t, self.tau_bounds));
        }
        x
    }

    fn cmaes_options(&self) -> CmaesOptions {
        CmaesOptions {
            population: self.population.unwrap_or_else(|| default_population(self.dimension())),
            max_evaluations: self.max_evaluations,
            tolerance: self.tolerance,
            sigma0: self.sigma0,
            seed: self.seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FitResult {
    pub beta: Anisotropy,
    pub tau: f64,
    pub loglik: f64,
    pub evaluations: usize,
    pub reason: StopReason,
    /// `(generation, best objective so far)`.
    pub history: Vec<(usize, f64)>,
}

/// Runs the optimizer on an arbitrary objective of the decoded parameters.
/// `tau` in the result is the decoded `tau`, or `fixed_tau` when it is not
/// estimated.
pub fn optimize_with<F>(config: &FitConfig, fixed_tau: f64, objective: F) -> Result<FitResult>
where
    F: Fn(&Hyperparameters) -> Option<f64> + Sync,
{
    config.validate()?;
    let x0 = config.encode(
        config.initial[0],
        [config.initial[1], config.initial[2]],
        config.initial_tau.or(Some(fixed_tau)).filter(|t| *t > 0.0),
    );
    let res = maximize(
        |x| config.decode(x).ok().and_then(|h| objective(&h)),
        &x0,
        &config.cmaes_options(),
    )?;
    let best = config.decode(&res.best_x)?;
    Ok(FitResult {
        beta: best.beta,
        tau: best.tau.unwrap_or(fixed_tau),
        loglik: res.best_value,
        evaluations: res.evaluations,
        reason: res.reason,
        history: res.history,
    })
}

/// Assembles a model for a constant anisotropy, picking `alpha` from eigenvalue
/// estimates of the given relative tolerance.
pub fn build_model(
    mesh: &TriangleMesh,
    projection: &ProjectionMatrix,
    beta: &Anisotropy,
    tau: f64,
    alpha_tolerance: f64,
) -> Result<SplineModel> {
    let metric = if beta.is_identity() {
        MetricField::Isotropic
    } else {
        MetricField::Constant(*beta)
    };
    let fem = FemSystem::assemble(mesh, &metric)?;
    let sel = select_alpha(&fem, PowerOptions::with_tol(alpha_tolerance))?;
    SplineModel::with_alpha(fem, projection.clone(), tau, sel.alpha)
}

/// Log-likelihood of `values` for a constant anisotropy.
pub fn loglik_at(
    mesh: &TriangleMesh,
    projection: &ProjectionMatrix,
    values: &[f64],
    beta: &Anisotropy,
    tau: f64,
    alpha_tolerance: f64,
) -> Result<LikelihoodReport> {
    log_likelihood(&build_model(mesh, projection, beta, tau, alpha_tolerance)?, values)
}

/// Maximizes the log-likelihood of `obs` over constant anisotropies (and
/// `tau` when requested).
pub fn optimize(mesh: &TriangleMesh, obs: &Observations, config: &FitConfig) -> Result<FitResult> {
    config.validate()?;
    if mesh.chart().is_none() {
        return Err(Error::Chart("anisotropy fitting needs a mesh with a chart".into()));
    }
    if config.estimate_tau && obs.tau == 0.0 && config.initial_tau.is_none() {
        log::info!("estimating tau from the geometric middle of its bounds");
    }
    let projection = build_projection(mesh, &obs.sites)?;
    optimize_with(config, obs.tau, |h| {
        let tau = h.tau.unwrap_or(obs.tau);
        match loglik_at(mesh, &projection, &obs.values, &h.beta, tau, config.alpha_tolerance) {
            Ok(r) => Some(r.loglik),
            Err(e) => {
                log::debug!("candidate {:?} failed: {e}", h.beta);
                None
            }
        }
    })
}

/// Root mean square difference between a prediction and the truth.
pub fn evaluate_rmse(prediction: &[f64], truth: &[f64]) -> Result<f64> {
    if prediction.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            found: prediction.len(),
        });
    }
    if truth.is_empty() {
        return Err(Error::Parameter("empty vectors".into()));
    }
    let ss: f64 = prediction.iter().zip(truth).map(|(u, t)| (u - t).powi(2)).sum();
    Ok((ss / truth.len() as f64).sqrt())
}
