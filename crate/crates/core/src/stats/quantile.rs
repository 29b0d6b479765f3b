//! Weighted linear quantile regression.
//!
//! The fit starts from iteratively reweighted least squares on a majoriser of
//! the check loss, with the smoothing floor decayed towards zero. On problems
//! up to `QuantileOptions::refine_max_n` rows the smoothed solution is then
//! moved to an exact vertex (a `p`-point interpolation) and improved by exact
//! line searches along simplex edges until no edge lowers the loss.
//! Covariances use a Powell kernel sandwich with a Hall-Sheather bandwidth.

use nalgebra::{DMatrix, DVector};

use super::descriptive::weighted_quantile;
use super::design::{CovType, Design, FitResult};
use super::linalg::{inverse_checked, normal_pdf, normal_quantile, weighted_crossprod, weighted_xty};
use super::ols::{cluster_meat, count_clusters, z_pvalues, COLLINEAR_TOL};
use super::StatsError;

#[derive(Debug, Clone, Copy)]
pub struct QuantileOptions {
    pub tau: f64,
    pub cov: CovType,
    pub refine_max_n: usize,
    pub max_iterations: usize,
}

impl QuantileOptions {
    pub fn new(tau: f64) -> Self {
        Self { tau, cov: CovType::Hc1, refine_max_n: 2000, max_iterations: 2000 }
    }

    pub fn with_cov(mut self, cov: CovType) -> Self {
        self.cov = cov;
        self
    }
}

fn rho(r: f64, tau: f64) -> f64 {
    if r < 0.0 {
        (tau - 1.0) * r
    } else {
        tau * r
    }
}

/// Weighted check loss `sum w_i rho_tau(r_i)`.
pub fn check_loss(residuals: &[f64], weights: Option<&[f64]>, tau: f64) -> f64 {
    residuals.iter().enumerate().map(|(i, r)| weights.map_or(1.0, |w| w[i]) * rho(*r, tau)).sum()
}

fn residuals(x: &DMatrix<f64>, y: &[f64], beta: &DVector<f64>) -> Vec<f64> {
    let fit = x * beta;
    y.iter().zip(fit.iter()).map(|(y, f)| y - f).collect()
}

fn irls(
    x: &DMatrix<f64>,
    y: &[f64],
    w: &[f64],
    tau: f64,
    names: &[String],
    max_iterations: usize,
) -> Result<(DVector<f64>, usize), StatsError> {
    let xtx = weighted_crossprod(x, w);
    let mut beta = inverse_checked(&xtx, names, COLLINEAR_TOL)? * weighted_xty(x, w, y);
    let mut r = residuals(x, y, &beta);
    let scale = {
        let mut a: Vec<f64> = r.iter().map(|v| v.abs()).collect();
        a.sort_by(f64::total_cmp);
        a[a.len() / 2].max(1e-12)
    };
    let lin = weighted_xty(x, w, &vec![tau - 0.5; y.len()]);
    let mut eps = scale * 0.1;
    let floor = scale * 1e-9;
    let mut iterations = 0;
    while iterations < max_iterations {
        let mut moved = 0.0_f64;
        for _ in 0..50 {
            iterations += 1;
            let d: Vec<f64> = r.iter().zip(w).map(|(ri, wi)| wi / (2.0 * ri.abs().max(eps))).collect();
            let a = weighted_crossprod(x, &d);
            let b = weighted_xty(x, &d, y) + &lin;
            let next = inverse_checked(&a, names, 1e-14)? * b;
            moved = (&next - &beta).amax();
            beta = next;
            r = residuals(x, y, &beta);
            if moved < 1e-10 * (1.0 + beta.amax()) || iterations >= max_iterations {
                break;
            }
        }
        if eps <= floor {
            break;
        }
        eps = (eps * 0.1).max(floor);
        if !moved.is_finite() {
            break;
        }
    }
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(StatsError::NotConverged { iterations, gradient: f64::NAN });
    }
    Ok((beta, iterations))
}

/// Picks `p` linearly independent rows, preferring the smallest residuals.
fn initial_basis(x: &DMatrix<f64>, r: &[f64]) -> Option<Vec<usize>> {
    let p = x.ncols();
    let mut order: Vec<usize> = (0..r.len()).collect();
    order.sort_by(|&a, &b| r[a].abs().total_cmp(&r[b].abs()).then(a.cmp(&b)));
    let mut basis: Vec<usize> = Vec::with_capacity(p);
    let mut q: Vec<DVector<f64>> = Vec::with_capacity(p);
    for i in order {
        let mut v: DVector<f64> = x.row(i).transpose();
        let norm0 = v.norm();
        if norm0 == 0.0 {
            continue;
        }
        for u in &q {
            let c = u.dot(&v);
            v -= u * c;
        }
        let nv = v.norm();
        if nv > 1e-8 * norm0 {
            q.push(v / nv);
            basis.push(i);
            if basis.len() == p {
                return Some(basis);
            }
        }
    }
    None
}

/// Minimiser of `sum a_i rho_{tau_i}(z_i - t)`: the lowest point where the
/// right derivative becomes non-negative. Returns the index into `pts`.
fn line_min(pts: &mut [(f64, f64, f64, usize)]) -> usize {
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.3.cmp(&b.3)));
    let total: f64 = pts.iter().map(|p| p.1).sum();
    let mut slope: f64 = -pts.iter().map(|p| p.1 * p.2).sum::<f64>();
    for (k, p) in pts.iter().enumerate() {
        slope += p.1;
        if slope >= -1e-12 * total {
            return k;
        }
    }
    pts.len() - 1
}

fn refine(
    x: &DMatrix<f64>,
    y: &[f64],
    w: &[f64],
    tau: f64,
    start: &DVector<f64>,
    max_iterations: usize,
) -> Option<(DVector<f64>, usize)> {
    let n = y.len();
    let p = x.ncols();
    let r0 = residuals(x, y, start);
    let mut basis = initial_basis(x, &r0)?;
    let xb = DMatrix::from_fn(p, p, |a, b| x[(basis[a], b)]);
    let mut xb_inv = xb.try_inverse()?;
    let yb = DVector::from_fn(p, |a, _| y[basis[a]]);
    let mut beta = &xb_inv * yb;
    let mut r = residuals(x, y, &beta);
    let mut loss = check_loss(&r, Some(w), tau);
    let start_loss = check_loss(&r0, Some(w), tau);
    let mut iterations = 0;
    while iterations < max_iterations {
        iterations += 1;
        let mut best: Option<(f64, usize, usize, f64, DVector<f64>)> = None;
        for h in 0..p {
            let d: DVector<f64> = xb_inv.column(h).into_owned();
            let c = x * &d;
            let mut pts: Vec<(f64, f64, f64, usize)> = Vec::with_capacity(n);
            for i in 0..n {
                if c[i].abs() > 1e-12 {
                    let ti = if c[i] > 0.0 { tau } else { 1.0 - tau };
                    pts.push((r[i] / c[i], w[i] * c[i].abs(), ti, i));
                }
            }
            if pts.is_empty() {
                continue;
            }
            let k = line_min(&mut pts);
            let (t, _, _, enter) = pts[k];
            if t == 0.0 || enter == basis[h] {
                continue;
            }
            let cand = &beta + &d * t;
            let cand_loss = check_loss(&residuals(x, y, &cand), Some(w), tau);
            if cand_loss < loss - 1e-13 * (1.0 + loss.abs()) && best.as_ref().map_or(true, |b| cand_loss < b.0) {
                best = Some((cand_loss, h, enter, t, cand));
            }
        }
        let Some((new_loss, h, enter, _, cand)) = best else { break };
        basis[h] = enter;
        let xb = DMatrix::from_fn(p, p, |a, b| x[(basis[a], b)]);
        match xb.try_inverse() {
            Some(inv) => xb_inv = inv,
            None => break,
        }
        beta = cand;
        r = residuals(x, y, &beta);
        loss = new_loss;
    }
    if loss <= start_loss + 1e-9 * (1.0 + start_loss.abs()) {
        Some((beta, iterations))
    } else {
        None
    }
}

fn hall_sheather(n: usize, tau: f64) -> f64 {
    let z = normal_quantile(0.975);
    let q = normal_quantile(tau);
    let f = normal_pdf(q);
    (n as f64).powf(-1.0 / 3.0) * z.powf(2.0 / 3.0) * (1.5 * f * f / (2.0 * q * q + 1.0)).powf(1.0 / 3.0)
}

/// Weighted quantile regression at level `tau`.
pub fn quantile_reg(design: &Design, opts: &QuantileOptions) -> Result<FitResult, StatsError> {
    design.validate()?;
    let tau = opts.tau;
    if !(tau > 0.0 && tau < 1.0) {
        return Err(StatsError::InvalidInput(format!("quantile level {tau} outside (0, 1)")));
    }
    if !design.factors.is_empty() {
        return Err(StatsError::InvalidInput(
            "quantile regression takes explicit dummies, not absorbed factors".into(),
        ));
    }
    if opts.cov == CovType::Cluster && design.clusters.is_none() {
        return Err(StatsError::InvalidInput("cluster covariance requested without cluster ids".into()));
    }
    let n = design.n();
    let names = design.coef_names();
    let k = names.len();
    if n <= k {
        return Err(StatsError::InvalidInput(format!("{n} rows cannot identify {k} coefficients")));
    }
    let x = design.matrix();
    let w = design.normalized_weights();
    let y = &design.y;

    let (mut beta, mut iterations) = irls(&x, y, &w, tau, &names, opts.max_iterations)?;
    if n <= opts.refine_max_n {
        if let Some((b, it)) = refine(&x, y, &w, tau, &beta, opts.max_iterations) {
            beta = b;
            iterations += it;
        }
    }
    let r = residuals(&x, y, &beta);

    // Powell sandwich.
    let hs = hall_sheather(n, tau);
    let lo_q = (tau - hs).max(1e-6);
    let hi_q = (tau + hs).min(1.0 - 1e-6);
    let sd = super::descriptive::weighted_sd(&r, Some(&w)).unwrap_or(0.0);
    let iqr = weighted_quantile(&r, Some(&w), 0.75)? - weighted_quantile(&r, Some(&w), 0.25)?;
    let kappa = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    let bw = (kappa * (normal_quantile(hi_q) - normal_quantile(lo_q))).max(1e-12);
    let f: Vec<f64> = r.iter().zip(&w).map(|(ri, wi)| if ri.abs() <= bw { wi / (2.0 * bw) } else { 0.0 }).collect();
    let bread_m = weighted_crossprod(&x, &f);
    let psi: Vec<f64> = r.iter().zip(&w).map(|(ri, wi)| wi * (tau - f64::from(u8::from(*ri < 0.0)))).collect();
    let (cov, n_clusters) = match inverse_checked(&bread_m, &names, 1e-14) {
        Ok(bread) => match opts.cov {
            CovType::Cluster => {
                let clusters = design.clusters.as_ref().expect("checked above");
                let g = count_clusters(clusters);
                if g < 2 {
                    return Err(StatsError::InvalidInput("cluster covariance needs at least two clusters".into()));
                }
                let meat = cluster_meat(&x, &psi, clusters);
                let gf = g as f64;
                (&bread * meat * &bread * (gf / (gf - 1.0)), Some(g))
            }
            _ => {
                let ids: Vec<usize> = (0..n).collect();
                let meat = cluster_meat(&x, &psi, &ids);
                (&bread * meat * &bread * (n as f64 / (n - k) as f64), None)
            }
        },
        // Too few residuals inside the kernel window to estimate the density.
        Err(_) => (DMatrix::from_element(k, k, f64::NAN), None),
    };
    let se: Vec<f64> = (0..k).map(|j| cov[(j, j)].max(0.0).sqrt()).collect();
    let coef: Vec<f64> = beta.iter().copied().collect();
    let stat: Vec<f64> = coef.iter().zip(&se).map(|(b, s)| b / s).collect();
    let p = z_pvalues(&stat);
    let objective = check_loss(&r, design.weights.as_deref(), tau);
    Ok(FitResult {
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
        converged: true,
        log_likelihood: None,
        objective: Some(objective),
        residuals: r,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn intercept_only_is_lower_quantile() {
        let y: Vec<f64> = (1..=10).map(f64::from).collect();
        for tau in [0.2, 0.5, 0.73] {
            let fit = quantile_reg(&Design::new(y.clone()), &QuantileOptions::new(tau)).unwrap();
            let q = weighted_quantile(&y, None, tau).unwrap();
            let loss_q = check_loss(&y.iter().map(|v| v - q).collect::<Vec<_>>(), None, tau);
            assert!((fit.objective.unwrap() - loss_q).abs() < 1e-9, "tau {tau}");
        }
    }
}
