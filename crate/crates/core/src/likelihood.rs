//! Exact Gaussian log-likelihood of the observations under the FEM model,
//! evaluated from sparse factors without forming the covariance.

use std::time::Instant;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::spline::{dot, SplineModel};

/// Threshold below which `a(A phi0)` or `1 - a(A phi0)` counts as zero.
pub const DEGENERATE_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct LikelihoodTimings {
    pub solve_seconds: f64,
    pub logdet_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LikelihoodReport {
    pub loglik: f64,
    /// Quadratic term `l1`.
    pub quad_term: f64,
    /// Log-determinant term `l2`.
    pub logdet_term: f64,
    /// Generalized least squares trend coefficient.
    pub trend: f64,
    pub timings: LikelihoodTimings,
}

impl LikelihoodReport {
    fn new(n: usize, quad_term: f64, logdet_term: f64, trend: f64, timings: LikelihoodTimings) -> Self {
        let loglik = -0.5 * (n as f64 * (2.0 * std::f64::consts::PI).ln() + logdet_term + quad_term);
        Self {
            loglik,
            quad_term,
            logdet_term,
            trend,
            timings,
        }
    }
}

struct Trends {
    a_y: f64,
    a_phi: f64,
}

fn check_degenerate(a_phi: f64) -> Result<()> {
    if !a_phi.is_finite()
        || a_phi.abs() <= DEGENERATE_TOLERANCE
        || (1.0 - a_phi).abs() <= DEGENERATE_TOLERANCE
    {
        return Err(Error::DegenerateLikelihood { a_phi });
    }
    if 1.0 - a_phi < 0.0 {
        log::warn!("1 - a(A phi0) = {} is negative; using its absolute value", 1.0 - a_phi);
    }
    Ok(())
}

/// Solves for `u(y)` and `u(A phi0)` in parallel and returns them with the
/// augmented trends `(M phi0)^T u`.
fn solves(model: &SplineModel, y: &[f64]) -> Result<(Vec<f64>, Trends)> {
    let aphi = model.projected_phi0();
    let (uy, uphi) = rayon::join(|| model.u(y), || model.u(&aphi));
    let (uy, uphi) = (uy?, uphi?);
    let w = model.q_alpha().vector();
    let t = Trends {
        a_y: dot(w, &uy),
        a_phi: dot(w, &uphi),
    };
    check_degenerate(t.a_phi)?;
    Ok((uy, t))
}

/// Log-likelihood when the data are noise-free observations at mesh nodes.
pub fn loglik_interp(model: &SplineModel, y: &[f64]) -> Result<LikelihoodReport> {
    if !model.is_interpolation() {
        return Err(Error::Parameter("model is not in the interpolation scenario".into()));
    }
    let start = Instant::now();
    let (uy, t) = solves(model, y)?;
    let (observed, _) = model.node_partition().expect("interpolation model");
    // v(y) = [Q_alpha u(y)]_I is the Schur complement applied to y.
    let qu = model.q_alpha().mul_vec(&uy);
    let yv: f64 = observed.iter().zip(y).map(|(&i, yi)| yi * qu[i]).sum();
    let solve_seconds = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let logdet_full = model.full_factor()?.log_determinant();
    let logdet_free = model.scenario_factor().log_determinant();
    let logdet_seconds = start.elapsed().as_secs_f64();

    let quad = yv - t.a_y * t.a_y / (model.alpha() * t.a_phi);
    let logdet = logdet_free - logdet_full + (1.0 - t.a_phi).abs().ln();
    Ok(LikelihoodReport::new(
        y.len(),
        quad,
        logdet,
        t.a_y / t.a_phi,
        LikelihoodTimings {
            solve_seconds,
            logdet_seconds,
        },
    ))
}

/// Log-likelihood with Gaussian noise of standard deviation `tau > 0`.
pub fn loglik_smooth(model: &SplineModel, y: &[f64]) -> Result<LikelihoodReport> {
    if model.is_interpolation() {
        return Err(Error::Parameter("model is not in the smoothing scenario".into()));
    }
    let start = Instant::now();
    let (uy, t) = solves(model, y)?;
    let ay = model.projection().mul(&uy);
    let t2 = model.tau() * model.tau();
    let yy = dot(y, y);
    let yaw = dot(y, &ay);
    let solve_seconds = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let logdet_full = model.full_factor()?.log_determinant();
    let logdet_sys = model.scenario_factor().log_determinant();
    let logdet_seconds = start.elapsed().as_secs_f64();

    let n = y.len() as f64;
    let m = model.fem().dim() as f64;
    let quad = (yy - yaw) / t2 - t.a_y * t.a_y / (model.alpha() * t.a_phi);
    let logdet = (n - m) * t2.ln() - logdet_full + logdet_sys + (1.0 - t.a_phi).abs().ln();
    Ok(LikelihoodReport::new(
        y.len(),
        quad,
        logdet,
        t.a_y / t.a_phi,
        LikelihoodTimings {
            solve_seconds,
            logdet_seconds,
        },
    ))
}

/// Dispatches on the model's scenario.
pub fn log_likelihood(model: &SplineModel, y: &[f64]) -> Result<LikelihoodReport> {
    if model.is_interpolation() {
        loglik_interp(model, y)
    } else {
        loglik_smooth(model, y)
    }
}

/// Generalized least squares estimate of the `phi0` coefficient.
pub fn trend_estimate(model: &SplineModel, y: &[f64]) -> Result<f64> {
    let aphi = model.projected_phi0();
    let (uy, uphi) = rayon::join(|| model.u(y), || model.u(&aphi));
    let w = model.q_alpha().vector();
    let a_phi = dot(w, &uphi?);
    if !a_phi.is_finite() || a_phi.abs() <= DEGENERATE_TOLERANCE {
        return Err(Error::DegenerateLikelihood { a_phi });
    }
    Ok(dot(w, &uy?) / a_phi)
}
