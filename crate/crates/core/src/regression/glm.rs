//! Maximum-likelihood fitting of log-link count models by iteratively
//! reweighted least squares.
//!
//! Poisson and NB2 negative binomial share the same IRLS core; the
//! negative binomial alternates IRLS passes for the coefficients with
//! Newton updates of the dispersion on the profile likelihood.

use nalgebra::{DMatrix, DVector};

use super::special::{digamma, ln_gamma, trigamma, wald_p_value};
use super::{Design, Family, RegressionFit};
use crate::{Error, Result};

const MAX_IRLS_ITER: usize = 100;
const MAX_OUTER_ITER: usize = 100;
const LL_REL_TOL: f64 = 1e-10;
const GRAD_STOP_TOL: f64 = 1e-8;
const THETA_REL_TOL: f64 = 1e-8;
// Dispersion beyond this is reported as the Poisson limit.
const THETA_CAP: f64 = 1e8;
const ETA_CLAMP: f64 = 300.0;

/// Family-specific pieces of the IRLS iteration for a log link.
#[derive(Clone, Copy)]
enum Likelihood {
    Poisson,
    NegBin { theta: f64 },
}

impl Likelihood {
    fn log_likelihood(&self, y: &[f64], mu: &[f64]) -> f64 {
        match *self {
            Likelihood::Poisson => y
                .iter()
                .zip(mu)
                .map(|(&y, &m)| y * m.ln() - m - ln_gamma(y + 1.0))
                .sum(),
            Likelihood::NegBin { theta } => y
                .iter()
                .zip(mu)
                .map(|(&y, &m)| {
                    ln_gamma_ratio(y, theta) - ln_gamma(y + 1.0)
                        - theta * (m / theta).ln_1p()
                        + y * (m.ln() - (theta + m).ln())
                })
                .sum(),
        }
    }

    /// Fisher weight of one observation (log link).
    fn weight(&self, mu: f64) -> f64 {
        match *self {
            Likelihood::Poisson => mu,
            Likelihood::NegBin { theta } => mu * theta / (theta + mu),
        }
    }

    /// Per-observation score residual s_i so that the score is X^T s.
    fn score_residual(&self, y: f64, mu: f64) -> f64 {
        match *self {
            Likelihood::Poisson => y - mu,
            Likelihood::NegBin { theta } => (y - mu) * theta / (theta + mu),
        }
    }

    /// Negative second derivative of the log likelihood in the linear
    /// predictor, evaluated at the data (observed information weight).
    fn observed_weight(&self, y: f64, mu: f64) -> f64 {
        match *self {
            Likelihood::Poisson => mu,
            Likelihood::NegBin { theta } => {
                let denom = theta + mu;
                (y + theta) * theta * mu / (denom * denom)
            }
        }
    }
}

/// ln Gamma(y + theta) - ln Gamma(theta), stable for large theta.
///
/// For small integer-valued y the ratio telescopes into a short sum of
/// logs, which avoids the catastrophic cancellation of differencing two
/// huge Lanczos values when theta is near the Poisson limit.
fn ln_gamma_ratio(y: f64, theta: f64) -> f64 {
    let yi = y as u64;
    if y == yi as f64 && yi <= 64 {
        (0..yi).map(|j| (theta + j as f64).ln()).sum()
    } else {
        ln_gamma(y + theta) - ln_gamma(theta)
    }
}

fn digamma_diff(y: f64, theta: f64) -> f64 {
    let yi = y as u64;
    if y == yi as f64 && yi <= 64 {
        (0..yi).map(|j| 1.0 / (theta + j as f64)).sum()
    } else {
        digamma(y + theta) - digamma(theta)
    }
}

fn trigamma_diff(y: f64, theta: f64) -> f64 {
    let yi = y as u64;
    if y == yi as f64 && yi <= 64 {
        (0..yi)
            .map(|j| {
                let t = theta + j as f64;
                -1.0 / (t * t)
            })
            .sum()
    } else {
        trigamma(y + theta) - trigamma(theta)
    }
}

fn mu_from_eta(eta: f64) -> f64 {
    eta.clamp(-ETA_CLAMP, ETA_CLAMP).exp()
}

struct IrlsOutcome {
    beta: DVector<f64>,
    mu: Vec<f64>,
    log_likelihood: f64,
    iterations: usize,
    converged: bool,
    // Inspected by the monotonicity tests.
    #[cfg_attr(not(test), allow(dead_code))]
    ll_trace: Vec<f64>,
}

/// IRLS with step-halving; the log likelihood is non-decreasing along
/// `ll_trace`.
fn irls(
    x: &DMatrix<f64>,
    y: &[f64],
    offset: &[f64],
    lik: Likelihood,
    beta0: DVector<f64>,
) -> Result<IrlsOutcome> {
    let n = x.nrows();
    let p = x.ncols();
    let mut beta = beta0;
    let mut eta: Vec<f64> = (0..n)
        .map(|i| x.row(i).iter().zip(beta.iter()).map(|(a, b)| a * b).sum::<f64>() + offset[i])
        .collect();
    let mut mu: Vec<f64> = eta.iter().map(|&e| mu_from_eta(e)).collect();
    let mut ll = lik.log_likelihood(y, &mu);
    let mut ll_trace = vec![ll];
    let mut converged = false;
    let mut iterations = 0;

    for iter in 1..=MAX_IRLS_ITER {
        iterations = iter;
        // Weighted normal equations X' W X b = X' W z.
        let mut a = DMatrix::zeros(p, p);
        let mut b = DVector::zeros(p);
        for i in 0..n {
            let w = lik.weight(mu[i]).max(1e-12);
            let z = (eta[i] - offset[i]) + (y[i] - mu[i]) / mu[i];
            let xi = x.row(i);
            for j in 0..p {
                b[j] += w * xi[j] * z;
                for k in j..p {
                    a[(j, k)] += w * xi[j] * xi[k];
                }
            }
        }
        for j in 0..p {
            for k in 0..j {
                a[(j, k)] = a[(k, j)];
            }
        }
        let chol = a.cholesky().ok_or_else(|| {
            Error::Regression("singular weighted normal equations".into())
        })?;
        let proposal = chol.solve(&b);

        // Step-halving keeps the likelihood non-decreasing.
        let mut step = &proposal - &beta;
        let mut accepted = false;
        for _ in 0..40 {
            let candidate = &beta + &step;
            let eta_c: Vec<f64> = (0..n)
                .map(|i| {
                    x.row(i)
                        .iter()
                        .zip(candidate.iter())
                        .map(|(a, b)| a * b)
                        .sum::<f64>()
                        + offset[i]
                })
                .collect();
            let mu_c: Vec<f64> = eta_c.iter().map(|&e| mu_from_eta(e)).collect();
            let ll_c = lik.log_likelihood(y, &mu_c);
            if ll_c.is_finite() && ll_c >= ll - 1e-12 {
                beta = candidate;
                eta = eta_c;
                mu = mu_c;
                let rel = (ll_c - ll).abs() / ll.abs().max(1.0);
                ll = ll_c;
                ll_trace.push(ll);
                accepted = true;
                let grad_inf = score_inf_norm(x, y, &mu, lik);
                if rel < LL_REL_TOL || grad_inf < GRAD_STOP_TOL {
                    converged = true;
                }
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            return Err(Error::NonConvergence {
                context: "IRLS step-halving stalled".into(),
                iterations: iter,
                last_coefficients: beta.iter().cloned().collect(),
            });
        }
        if converged {
            break;
        }
    }
    if !converged {
        return Err(Error::NonConvergence {
            context: "IRLS".into(),
            iterations,
            last_coefficients: beta.iter().cloned().collect(),
        });
    }
    Ok(IrlsOutcome {
        beta,
        mu,
        log_likelihood: ll,
        iterations,
        converged,
        ll_trace,
    })
}

fn score_inf_norm(x: &DMatrix<f64>, y: &[f64], mu: &[f64], lik: Likelihood) -> f64 {
    let p = x.ncols();
    let mut g = vec![0.0; p];
    for i in 0..x.nrows() {
        let s = lik.score_residual(y[i], mu[i]);
        let xi = x.row(i);
        for j in 0..p {
            g[j] += xi[j] * s;
        }
    }
    g.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn initial_beta(design: &Design, y: &[f64]) -> DVector<f64> {
    let p = design.x.ncols();
    let mut beta = DVector::zeros(p);
    if design.names.first().map(String::as_str) == Some("intercept") {
        let total: f64 = y.iter().sum();
        let exposure: f64 = design.offset.iter().map(|&o| o.exp()).sum();
        beta[0] = (total.max(0.5) / exposure).ln();
    }
    beta
}

/// Inverse of X' W X; `w` must be the per-observation information weights.
fn covariance(x: &DMatrix<f64>, w: &[f64]) -> Result<DMatrix<f64>> {
    let p = x.ncols();
    let mut info = DMatrix::zeros(p, p);
    for i in 0..x.nrows() {
        let xi = x.row(i);
        for j in 0..p {
            for k in j..p {
                info[(j, k)] += w[i] * xi[j] * xi[k];
            }
        }
    }
    for j in 0..p {
        for k in 0..j {
            info[(j, k)] = info[(k, j)];
        }
    }
    info.cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::Regression("singular information matrix".into()))
}

fn wald_columns(beta: &DVector<f64>, cov: &DMatrix<f64>) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let se: Vec<f64> = (0..beta.len()).map(|j| cov[(j, j)].sqrt()).collect();
    let z: Vec<f64> = beta
        .iter()
        .zip(&se)
        .map(|(b, s)| if *s > 0.0 { b / s } else { 0.0 })
        .collect();
    let p = z.iter().map(|&z| wald_p_value(z)).collect();
    (se, z, p)
}

/// Maximum-likelihood Poisson regression with log link and offset.
pub fn fit_poisson(design: &Design) -> Result<RegressionFit> {
    let y: Vec<f64> = design.y.iter().map(|&v| v as f64).collect();
    let beta0 = initial_beta(design, &y);
    let out = irls(&design.x, &y, &design.offset, Likelihood::Poisson, beta0)?;
    let w: Vec<f64> = out.mu.iter().map(|&m| Likelihood::Poisson.weight(m)).collect();
    let cov = covariance(&design.x, &w)?;
    let (se, z, p) = wald_columns(&out.beta, &cov);
    Ok(RegressionFit {
        family: Family::Poisson,
        terms: design.names.clone(),
        coefficients: out.beta.iter().cloned().collect(),
        standard_errors: se,
        z_values: z,
        p_values: p,
        log_likelihood: out.log_likelihood,
        dispersion: None,
        iterations: out.iterations,
        converged: out.converged,
        poisson_limit: false,
    })
}

/// Maximum-likelihood NB2 negative-binomial regression (variance
/// mu + mu^2/theta) with log link and offset.
///
/// Alternates IRLS for the coefficients with Newton steps for the
/// dispersion on the profile likelihood, starting from a
/// method-of-moments estimate on the Poisson residuals. When the
/// dispersion runs beyond 1e8 the data carry no overdispersion and the
/// Poisson-limit fit is returned with `poisson_limit` set.
pub fn fit_negbin(design: &Design) -> Result<RegressionFit> {
    let y: Vec<f64> = design.y.iter().map(|&v| v as f64).collect();
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    if y.iter().all(|&v| v == mean) {
        return Err(Error::Regression("degenerate response".into()));
    }

    let poisson = fit_poisson(design)?;
    let beta_poisson = DVector::from_vec(poisson.coefficients.clone());
    let mu0: Vec<f64> = (0..design.x.nrows())
        .map(|i| {
            let eta: f64 = design
                .x
                .row(i)
                .iter()
                .zip(beta_poisson.iter())
                .map(|(a, b)| a * b)
                .sum::<f64>()
                + design.offset[i];
            mu_from_eta(eta)
        })
        .collect();

    // Method-of-moments start: 1/theta from the Pearson residual excess.
    let num: f64 = y.iter().zip(&mu0).map(|(&y, &m)| (y - m) * (y - m) - m).sum();
    let den: f64 = mu0.iter().map(|&m| m * m).sum();
    let mut theta = if num / den > 1e-4 {
        (den / num).clamp(1e-3, 1e7)
    } else {
        1e4
    };

    let mut beta = beta_poisson;
    let mut mu = mu0;
    let mut ll = Likelihood::NegBin { theta }.log_likelihood(&y, &mu);
    let mut iterations = poisson.iterations;
    let mut poisson_limit = false;
    let mut converged = false;

    for _ in 0..MAX_OUTER_ITER {
        match update_theta(&y, &mu, theta)? {
            ThetaStep::Converged(t) => theta = t,
            ThetaStep::PoissonLimit => {
                theta = THETA_CAP;
                poisson_limit = true;
            }
        }
        let lik = Likelihood::NegBin { theta };
        let out = irls(&design.x, &y, &design.offset, lik, beta)?;
        beta = out.beta;
        mu = out.mu;
        iterations += out.iterations;
        let ll_new = out.log_likelihood;
        let rel = (ll_new - ll).abs() / ll.abs().max(1.0);
        ll = ll_new;
        if poisson_limit || rel < LL_REL_TOL {
            converged = out.converged;
            break;
        }
    }
    if !converged {
        return Err(Error::NonConvergence {
            context: "negative binomial alternation".into(),
            iterations,
            last_coefficients: beta.iter().cloned().collect(),
        });
    }

    let lik = Likelihood::NegBin { theta };
    let w_obs: Vec<f64> = y
        .iter()
        .zip(&mu)
        .map(|(&y, &m)| lik.observed_weight(y, m))
        .collect();
    let cov = covariance(&design.x, &w_obs)?;
    let (se, z, p) = wald_columns(&beta, &cov);
    Ok(RegressionFit {
        family: Family::NegativeBinomial,
        terms: design.names.clone(),
        coefficients: beta.iter().cloned().collect(),
        standard_errors: se,
        z_values: z,
        p_values: p,
        log_likelihood: ll,
        dispersion: Some(theta),
        iterations,
        converged,
        poisson_limit,
    })
}

enum ThetaStep {
    Converged(f64),
    PoissonLimit,
}

/// Newton maximization of the profile likelihood in the dispersion.
fn update_theta(y: &[f64], mu: &[f64], start: f64) -> Result<ThetaStep> {
    let mut theta = start;
    for _ in 0..100 {
        let mut d1 = 0.0;
        let mut d2 = 0.0;
        for (&y, &m) in y.iter().zip(mu) {
            let denom = theta + m;
            d1 += digamma_diff(y, theta) + (theta / denom).ln() + 1.0 - (y + theta) / denom;
            d2 += trigamma_diff(y, theta) + 1.0 / theta - 1.0 / denom + (y - m) / (denom * denom);
        }
        if theta > 1e7 && d1 > 0.0 {
            return Ok(ThetaStep::PoissonLimit);
        }
        let step = if d2 < 0.0 {
            -d1 / d2
        } else {
            // Hessian not negative: fall back to a multiplicative move
            // along the gradient sign.
            if d1 > 0.0 {
                theta
            } else {
                -theta / 2.0
            }
        };
        // Damp to at most a factor-five move per step.
        let proposal = (theta + step).clamp(theta / 5.0, theta * 5.0).max(1e-4);
        let done = (proposal - theta).abs() <= THETA_REL_TOL * theta;
        theta = proposal;
        if theta > THETA_CAP {
            return Ok(ThetaStep::PoissonLimit);
        }
        if done {
            return Ok(ThetaStep::Converged(theta));
        }
    }
    Err(Error::NonConvergence {
        context: "dispersion Newton".into(),
        iterations: 100,
        last_coefficients: vec![theta],
    })
}
