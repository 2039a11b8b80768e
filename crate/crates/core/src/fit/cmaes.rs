//! (mu/mu_w, lambda)-CMA-ES on the unit box with reflection at the faces.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxEvaluations,
    /// Objective values of the last generations spread less than the tolerance.
    FunctionTolerance,
    /// Step size collapsed.
    StepTolerance,
}

#[derive(Clone, Debug)]
pub struct CmaesOptions {
    pub population: usize,
    pub max_evaluations: usize,
    pub tolerance: f64,
    /// Initial step size in box units.
    pub sigma0: f64,
    pub seed: u64,
}

pub fn default_population(dim: usize) -> usize {
    4 + (3.0 * (dim as f64).ln()).floor() as usize
}

#[derive(Clone, Debug)]
pub struct CmaesResult {
    pub best_x: Vec<f64>,
    pub best_value: f64,
    pub evaluations: usize,
    pub reason: StopReason,
    /// Best-so-far objective after each generation.
    pub history: Vec<(usize, f64)>,
}

/// Maps `x` into `[0, 1]` by mirroring at the faces.
pub fn reflect(x: f64) -> f64 {
    let r = x.rem_euclid(2.0);
    if r > 1.0 {
        2.0 - r
    } else {
        r
    }
}

/// Maximizes `objective` over `[0, 1]^d` starting from `x0`. Candidates for
/// which the objective returns `None` or a non-finite value rank last; a
/// generation in which every candidate fails aborts the run.
pub fn maximize<F>(objective: F, x0: &[f64], opts: &CmaesOptions) -> Result<CmaesResult>
where
    F: Fn(&[f64]) -> Option<f64> + Sync,
{
    let d = x0.len();
    if d == 0 {
        return Err(Error::Parameter("empty search space".into()));
    }
    if opts.population < 4 {
        return Err(Error::Parameter(format!("population {} is below 4", opts.population)));
    }
    if !(opts.sigma0 > 0.0) {
        return Err(Error::Parameter("initial step size must be positive".into()));
    }
    let df = d as f64;
    let lambda = opts.population;
    let mu = lambda / 2;
    let raw: Vec<f64> = (1..=mu).map(|i| (mu as f64 + 0.5).ln() - (i as f64).ln()).collect();
    let wsum: f64 = raw.iter().sum();
    let weights: Vec<f64> = raw.iter().map(|w| w / wsum).collect();
    let mueff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();

    let cs = (mueff + 2.0) / (df + mueff + 5.0);
    let ds = 1.0 + 2.0 * (((mueff - 1.0) / (df + 1.0)).sqrt() - 1.0).max(0.0) + cs;
    let cc = (4.0 + mueff / df) / (df + 4.0 + 2.0 * mueff / df);
    let c1 = 2.0 / ((df + 1.3).powi(2) + mueff);
    let cmu = (1.0 - c1).min(2.0 * (mueff - 2.0 + 1.0 / mueff) / ((df + 2.0).powi(2) + mueff));
    let chi_n = df.sqrt() * (1.0 - 1.0 / (4.0 * df) + 1.0 / (21.0 * df * df));

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut mean = DVector::from_iterator(d, x0.iter().map(|&x| reflect(x)));
    let mut sigma = opts.sigma0;
    let mut c = DMatrix::<f64>::identity(d, d);
    let mut b = DMatrix::<f64>::identity(d, d);
    let mut dvec = DVector::from_element(d, 1.0);
    let mut ps = DVector::zeros(d);
    let mut pc = DVector::zeros(d);

    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut history = Vec::new();
    let mut evaluations = 0;
    let mut recent_best: Vec<f64> = Vec::new();
    let mut generation = 0usize;

    loop {
        generation += 1;
        let count = lambda.min(opts.max_evaluations - evaluations);
        let candidates: Vec<DVector<f64>> = (0..count)
            .map(|_| {
                let z = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
                let y = &b * dvec.component_mul(&z);
                (&mean + y * sigma).map(reflect)
            })
            .collect();
        let values: Vec<f64> = candidates
            .par_iter()
            .map(|x| match objective(x.as_slice()) {
                Some(v) if v.is_finite() => v,
                _ => f64::NEG_INFINITY,
            })
            .collect();
        evaluations += count;

        let mut order: Vec<usize> = (0..count).collect();
        order.sort_by(|&i, &j| values[j].total_cmp(&values[i]));
        let finite = values.iter().filter(|v| v.is_finite()).count();
        if finite == 0 {
            return Err(Error::Optimization(format!(
                "all {count} candidates of generation {generation} failed to evaluate"
            )));
        }
        let top = order[0];
        if best.as_ref().is_none_or(|(_, v)| values[top] > *v) {
            best = Some((candidates[top].as_slice().to_vec(), values[top]));
        }
        let best_value = best.as_ref().map(|b| b.1).unwrap_or(f64::NEG_INFINITY);
        history.push((generation, best_value));

        if evaluations >= opts.max_evaluations || count < lambda {
            return finish(best, evaluations, StopReason::MaxEvaluations, history);
        }

        // Recombination and adaptation.
        let old_mean = mean.clone();
        let ys: Vec<DVector<f64>> = order[..mu]
            .iter()
            .map(|&i| (&candidates[i] - &old_mean) / sigma)
            .collect();
        let yw = ys
            .iter()
            .zip(&weights)
            .fold(DVector::zeros(d), |acc, (y, w)| acc + y * *w);
        mean = (&old_mean + &yw * sigma).map(reflect);

        let inv_sqrt_c = &b * DMatrix::from_diagonal(&dvec.map(|x| 1.0 / x)) * b.transpose();
        ps = &ps * (1.0 - cs) + &inv_sqrt_c * &yw * (cs * (2.0 - cs) * mueff).sqrt();
        let ps_norm = ps.norm();
        let hsig = ps_norm / (1.0 - (1.0 - cs).powi(2 * generation as i32)).sqrt()
            < (1.4 + 2.0 / (df + 1.0)) * chi_n;
        let hs = if hsig { 1.0 } else { 0.0 };
        pc = &pc * (1.0 - cc) + &yw * (hs * (cc * (2.0 - cc) * mueff).sqrt());
        let rank_mu = ys
            .iter()
            .zip(&weights)
            .fold(DMatrix::zeros(d, d), |acc, (y, w)| acc + y * y.transpose() * *w);
        c = &c * (1.0 - c1 - cmu)
            + (&pc * pc.transpose() + &c * ((1.0 - hs) * cc * (2.0 - cc))) * c1
            + rank_mu * cmu;
        c = (&c + c.transpose()) * 0.5;
        sigma *= ((cs / ds) * (ps_norm / chi_n - 1.0)).exp();
        sigma = sigma.min(1.0);

        let eig = c.clone().symmetric_eigen();
        b = eig.eigenvectors;
        dvec = eig.eigenvalues.map(|l| l.max(1e-20).sqrt());

        // Termination.
        recent_best.push(values[top]);
        let window = 10 + (30.0 * df / lambda as f64).ceil() as usize;
        if recent_best.len() > window {
            recent_best.remove(0);
        }
        let gen_finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
        let spread = |v: &[f64]| {
            let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
            hi - lo
        };
        if gen_finite.len() == count
            && recent_best.len() == window
            && spread(&gen_finite) < opts.tolerance
            && spread(&recent_best) < opts.tolerance
        {
            return finish(best, evaluations, StopReason::FunctionTolerance, history);
        }
        if sigma * dvec.max() < 1e-12 {
            return finish(best, evaluations, StopReason::StepTolerance, history);
        }
    }
}

fn finish(
    best: Option<(Vec<f64>, f64)>,
    evaluations: usize,
    reason: StopReason,
    history: Vec<(usize, f64)>,
) -> Result<CmaesResult> {
    let (best_x, best_value) = best.expect("at least one generation evaluated");
    Ok(CmaesResult {
        best_x,
        best_value,
        evaluations,
        reason,
        history,
    })
}
