//! Binary-outcome GLMs (logit and probit) fitted by IRLS, with average
//! marginal effects and predictive margins.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::design::{CovType, Design, FitResult};
use super::linalg::{inverse_checked, normal_cdf, normal_pdf, weighted_crossprod, z_pvalue};
use super::ols::{cluster_meat, count_clusters, z_pvalues, COLLINEAR_TOL};
use super::StatsError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Link {
    Logit,
    Probit,
}

impl Link {
    fn mean(self, eta: f64) -> f64 {
        let p = match self {
            Link::Logit => 1.0 / (1.0 + (-eta).exp()),
            Link::Probit => normal_cdf(eta),
        };
        p.clamp(1e-15, 1.0 - 1e-15)
    }

    /// `dp / d eta`.
    fn density(self, eta: f64) -> f64 {
        match self {
            Link::Logit => {
                let p = 1.0 / (1.0 + (-eta).exp());
                p * (1.0 - p)
            }
            Link::Probit => normal_pdf(eta),
        }
    }

    /// `d^2 p / d eta^2`.
    fn density_slope(self, eta: f64) -> f64 {
        match self {
            Link::Logit => {
                let p = 1.0 / (1.0 + (-eta).exp());
                p * (1.0 - p) * (1.0 - 2.0 * p)
            }
            Link::Probit => -eta * normal_pdf(eta),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GlmOptions {
    pub link: Link,
    pub cov: CovType,
    pub max_iterations: usize,
    /// Threshold on the max-norm of the mean score.
    pub tolerance: f64,
    /// `|eta|` beyond which fitted probabilities count as saturated.
    pub separation_eta: f64,
}

impl GlmOptions {
    pub fn new(link: Link) -> Self {
        let separation_eta = match link {
            Link::Logit => 30.0,
            Link::Probit => 10.0,
        };
        Self { link, cov: CovType::Classical, max_iterations: 100, tolerance: 1e-8, separation_eta }
    }

    pub fn logit() -> Self {
        Self::new(Link::Logit)
    }

    pub fn probit() -> Self {
        Self::new(Link::Probit)
    }

    pub fn with_cov(mut self, cov: CovType) -> Self {
        self.cov = cov;
        self
    }
}

/// A fitted binary model together with the data needed for marginal effects.
#[derive(Debug, Clone)]
pub struct BinaryFit {
    pub fit: FitResult,
    pub link: Link,
    pub x: DMatrix<f64>,
    /// Weights normalised to mean one.
    pub weights: Vec<f64>,
    pub fitted: Vec<f64>,
}

impl BinaryFit {
    pub fn linear_predictor(&self, x: &DMatrix<f64>) -> DVector<f64> {
        x * self.fit.coef_vector()
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Vec<f64> {
        self.linear_predictor(x).iter().map(|e| self.link.mean(*e)).collect()
    }
}

struct Moments {
    loglik: f64,
    score: DVector<f64>,
    /// Per-observation score multipliers, `x_i * u_i` is the observation score.
    u: Vec<f64>,
    info_weight: Vec<f64>,
}

fn moments(link: Link, x: &DMatrix<f64>, y: &[f64], w: &[f64], beta: &DVector<f64>) -> Moments {
    let eta = x * beta;
    let n = y.len();
    let mut loglik = 0.0;
    let mut u = vec![0.0; n];
    let mut info_weight = vec![0.0; n];
    for i in 0..n {
        let p = link.mean(eta[i]);
        loglik += w[i] * (y[i] * p.ln() + (1.0 - y[i]) * (1.0 - p).ln());
        let (ui, vi) = match link {
            Link::Logit => (y[i] - p, p * (1.0 - p)),
            Link::Probit => {
                let d = normal_pdf(eta[i]);
                let denom = p * (1.0 - p);
                ((y[i] - p) * d / denom, d * d / denom)
            }
        };
        u[i] = w[i] * ui;
        info_weight[i] = w[i] * vi;
    }
    let score = x.transpose() * DVector::from_column_slice(&u);
    Moments { loglik, score, u, info_weight }
}

/// Logit or probit by iteratively reweighted least squares with step-halving.
pub fn glm_binary(design: &Design, opts: &GlmOptions) -> Result<BinaryFit, StatsError> {
    design.validate()?;
    if !design.factors.is_empty() {
        return Err(StatsError::InvalidInput("binary GLMs take explicit dummies, not absorbed factors".into()));
    }
    if design.y.iter().any(|v| *v != 0.0 && *v != 1.0) {
        return Err(StatsError::InvalidInput("binary outcome must be 0 or 1".into()));
    }
    let pos = design.y.iter().filter(|v| **v == 1.0).count();
    if pos == 0 || pos == design.n() {
        return Err(StatsError::Separation("outcome has a single class".into()));
    }
    if opts.cov == CovType::Cluster && design.clusters.is_none() {
        return Err(StatsError::InvalidInput("cluster covariance requested without cluster ids".into()));
    }
    let n = design.n();
    let names = design.coef_names();
    let k = names.len();
    let x = design.matrix();
    let w = design.normalized_weights();
    let y = &design.y;

    let mut beta = DVector::zeros(k);
    if design.has_intercept_column() {
        let ybar = y.iter().zip(&w).map(|(y, w)| y * w).sum::<f64>() / n as f64;
        beta[0] = match opts.link {
            Link::Logit => (ybar / (1.0 - ybar)).ln(),
            Link::Probit => super::linalg::normal_quantile(ybar),
        };
    }
    let mut m = moments(opts.link, &x, y, &w, &beta);
    let mut iterations = 0;
    let mut converged = false;
    let mut info_inv;
    loop {
        let info = weighted_crossprod(&x, &m.info_weight);
        info_inv = inverse_checked(&info, &names, COLLINEAR_TOL)?;
        let grad = m.score.amax() / n as f64;
        let step = &info_inv * &m.score;
        // Under separation the score vanishes while Newton steps stay large, so
        // both must be small.
        if grad < opts.tolerance && step.amax() < 1e-6 * (1.0 + beta.amax()) {
            converged = true;
            break;
        }
        if iterations >= opts.max_iterations {
            break;
        }
        iterations += 1;
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let cand = &beta + &step * t;
            let mc = moments(opts.link, &x, y, &w, &cand);
            if mc.loglik.is_finite() && mc.loglik >= m.loglik - 1e-10 * m.loglik.abs().max(1.0) {
                beta = cand;
                m = mc;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
        let eta_max = (&x * &beta).amax();
        if eta_max > opts.separation_eta {
            return Err(StatsError::Separation(format!(
                "linear predictor reached {eta_max:.1} after {iterations} iterations; coefficients diverging"
            )));
        }
    }
    if !converged {
        return Err(StatsError::NotConverged { iterations, gradient: m.score.amax() / n as f64 });
    }

    let (cov, n_clusters) = match opts.cov {
        CovType::Classical => (info_inv.clone(), None),
        CovType::Hc1 => {
            let ids: Vec<usize> = (0..n).collect();
            let meat = cluster_meat(&x, &m.u, &ids);
            let factor = n as f64 / (n - k) as f64;
            (&info_inv * meat * &info_inv * factor, None)
        }
        CovType::Cluster => {
            let clusters = design.clusters.as_ref().expect("checked above");
            let g = count_clusters(clusters);
            if g < 2 {
                return Err(StatsError::InvalidInput("cluster covariance needs at least two clusters".into()));
            }
            let meat = cluster_meat(&x, &m.u, clusters);
            let gf = g as f64;
            (&info_inv * meat * &info_inv * (gf / (gf - 1.0)), Some(g))
        }
    };
    let se: Vec<f64> = (0..k).map(|j| cov[(j, j)].max(0.0).sqrt()).collect();
    let coef: Vec<f64> = beta.iter().copied().collect();
    let stat: Vec<f64> = coef.iter().zip(&se).map(|(b, s)| b / s).collect();
    let p = z_pvalues(&stat);
    let eta = &x * &beta;
    let fitted: Vec<f64> = eta.iter().map(|e| opts.link.mean(*e)).collect();
    let residuals = y.iter().zip(&fitted).map(|(y, p)| y - p).collect();

    Ok(BinaryFit {
        fit: FitResult {
            names,
            coef,
            cov,
            se,
            stat,
            p,
            n,
            df_resid: f64::INFINITY,
            cov_type: opts.cov,
            n_clusters,
            r2: None,
            within_r2: None,
            absorbed_df: 0,
            iterations,
            converged,
            log_likelihood: Some(m.loglik),
            objective: Some(-m.loglik),
            residuals,
        },
        link: opts.link,
        x,
        weights: w,
        fitted,
    })
}

/// An average marginal effect or predictive margin with its delta-method SE.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ame {
    pub variable: String,
    pub estimate: f64,
    pub se: f64,
    pub z: f64,
    pub p: f64,
}

/// Average over observations of `dp/dx` for a continuous regressor.
pub fn ame(fit: &BinaryFit, variable: &str) -> Result<Ame, StatsError> {
    let j = fit.fit.index_of(variable).ok_or_else(|| StatsError::UnknownVariable(variable.to_string()))?;
    let beta = fit.fit.coef_vector();
    let eta = &fit.x * &beta;
    let k = beta.len();
    let n = fit.x.nrows();
    let total_w: f64 = fit.weights.iter().sum();
    let bj = beta[j];
    let mut est = 0.0;
    let mut grad = DVector::zeros(k);
    for i in 0..n {
        let wi = fit.weights[i] / total_w;
        let d = fit.link.density(eta[i]);
        let ds = fit.link.density_slope(eta[i]);
        est += wi * d * bj;
        for a in 0..k {
            grad[a] += wi * ds * bj * fit.x[(i, a)];
        }
        grad[j] += wi * d;
    }
    let var = (grad.transpose() * &fit.fit.cov * &grad)[(0, 0)];
    let se = var.max(0.0).sqrt();
    let z = est / se;
    Ok(Ame { variable: variable.to_string(), estimate: est, se, z, p: z_pvalue(z) })
}

/// Average predicted probability with the named regressors set to fixed values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Margin {
    pub at: Vec<(String, f64)>,
    pub estimate: f64,
    pub se: f64,
}

pub fn predictive_margin(fit: &BinaryFit, at: &[(&str, f64)]) -> Result<Margin, StatsError> {
    let mut x = fit.x.clone();
    for (name, value) in at {
        let j = fit.fit.index_of(name).ok_or_else(|| StatsError::UnknownVariable(name.to_string()))?;
        x.column_mut(j).fill(*value);
    }
    let beta = fit.fit.coef_vector();
    let eta = &x * &beta;
    let total_w: f64 = fit.weights.iter().sum();
    let k = beta.len();
    let mut est = 0.0;
    let mut grad = DVector::zeros(k);
    for i in 0..x.nrows() {
        let wi = fit.weights[i] / total_w;
        est += wi * fit.link.mean(eta[i]);
        let d = fit.link.density(eta[i]);
        for a in 0..k {
            grad[a] += wi * d * x[(i, a)];
        }
    }
    let var = (grad.transpose() * &fit.fit.cov * &grad)[(0, 0)];
    Ok(Margin { at: at.iter().map(|(n, v)| (n.to_string(), *v)).collect(), estimate: est, se: var.max(0.0).sqrt() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_log_odds_ratio() {
        let mut x = Vec::new();
        let mut y = Vec::new();
        for (xv, yv, count) in [(1.0, 1.0, 20), (1.0, 0.0, 10), (0.0, 1.0, 10), (0.0, 0.0, 20)] {
            for _ in 0..count {
                x.push(xv);
                y.push(yv);
            }
        }
        let fit = glm_binary(&Design::new(y).column("x", x), &GlmOptions::logit()).unwrap();
        assert!((fit.fit.coef_of("x").unwrap() - 4f64.ln()).abs() < 1e-8);
    }

    #[test]
    fn separation_is_an_error() {
        let x: Vec<f64> = (0..20).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| f64::from(u8::from(*v >= 10.0))).collect();
        assert!(matches!(
            glm_binary(&Design::new(y).column("x", x), &GlmOptions::logit()),
            Err(StatsError::Separation(_))
        ));
    }
}
