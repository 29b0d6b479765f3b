//! Weighted least squares with absorbed fixed effects.
//!
//! Factors are swept out of the outcome and every regressor by alternating
//! weighted demeaning with Irons-Tuck extrapolation, then the slopes come from
//! the demeaned normal equations. The slopes equal those of the dummy-expanded
//! regression (Frisch-Waugh-Lovell).

use nalgebra::{DMatrix, DVector};

use super::design::{CovType, Design, Factor, FitOptions, FitResult};
use super::linalg::{f_sf, inverse_checked, t_pvalue, weighted_crossprod, weighted_xty, z_pvalue};
use super::StatsError;

pub(crate) const COLLINEAR_TOL: f64 = 1e-10;

struct Demeaner<'a> {
    factors: &'a [Factor],
    w: &'a [f64],
    level_weight: Vec<Vec<f64>>,
}

impl<'a> Demeaner<'a> {
    fn new(factors: &'a [Factor], w: &'a [f64]) -> Self {
        let level_weight = factors
            .iter()
            .map(|f| {
                let mut s = vec![0.0; f.levels];
                for (i, &l) in f.ids.iter().enumerate() {
                    s[l] += w[i];
                }
                s
            })
            .collect();
        Self { factors, w, level_weight }
    }

    /// One pass of sequential projections, in place.
    fn sweep(&self, x: &mut [f64]) {
        for (f, lw) in self.factors.iter().zip(&self.level_weight) {
            let mut sums = vec![0.0; f.levels];
            for (i, &l) in f.ids.iter().enumerate() {
                sums[l] += self.w[i] * x[i];
            }
            for (s, w) in sums.iter_mut().zip(lw) {
                *s /= w;
            }
            for (i, &l) in f.ids.iter().enumerate() {
                x[i] -= sums[l];
            }
        }
    }

    fn wdot(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).zip(self.w).map(|((x, y), w)| w * x * y).sum()
    }

    /// Residual of `x` after projecting out all factors. Returns the sweeps used.
    fn demean(&self, x: &mut Vec<f64>, tol: f64, max_sweeps: usize) -> Result<usize, StatsError> {
        if self.factors.is_empty() {
            return Ok(0);
        }
        if self.factors.len() == 1 {
            self.sweep(x);
            return Ok(1);
        }
        let scale = 1.0 + x.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let threshold = tol * scale;
        let mut sweeps = 0;
        let mut last_change = f64::INFINITY;
        while sweeps < max_sweeps {
            let mut g = x.clone();
            self.sweep(&mut g);
            let mut gg = g.clone();
            self.sweep(&mut gg);
            sweeps += 2;
            let change = gg.iter().zip(&g).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
            last_change = change;
            if change < threshold {
                *x = gg;
                return Ok(sweeps);
            }
            let d1: Vec<f64> = gg.iter().zip(&g).map(|(a, b)| a - b).collect();
            let d2: Vec<f64> = gg.iter().zip(&g).zip(x.iter()).map(|((a, b), c)| a - 2.0 * b + c).collect();
            let ssq = self.wdot(&d2, &d2);
            if ssq > 0.0 {
                let coef = self.wdot(&d1, &d2) / ssq;
                for i in 0..x.len() {
                    x[i] = gg[i] - coef * d1[i];
                }
            } else {
                *x = gg;
            }
        }
        Err(StatsError::FeNotConverged { sweeps, max_change: last_change })
    }
}

fn find(parent: &mut [usize], mut a: usize) -> usize {
    while parent[a] != a {
        parent[a] = parent[parent[a]];
        a = parent[a];
    }
    a
}

/// Connected components of the bipartite graph linking levels of two factors.
fn connected_components(a: &Factor, b: &Factor) -> usize {
    let mut parent: Vec<usize> = (0..a.levels + b.levels).collect();
    for (&x, &y) in a.ids.iter().zip(&b.ids) {
        let (ra, rb) = (find(&mut parent, x), find(&mut parent, a.levels + y));
        if ra != rb {
            parent[ra] = rb;
        }
    }
    let mut roots: Vec<usize> = (0..parent.len()).map(|i| find(&mut parent, i)).collect();
    roots.sort_unstable();
    roots.dedup();
    roots.len()
}

/// Degrees of freedom absorbed by each factor: all levels of the first, and
/// for later factors the levels not already implied by their overlap with it.
fn absorbed_df(factors: &[Factor]) -> Vec<usize> {
    factors
        .iter()
        .enumerate()
        .map(|(j, f)| if j == 0 { f.levels } else { f.levels.saturating_sub(connected_components(&factors[0], f)) })
        .collect()
}

fn nested_in(f: &Factor, clusters: &[usize]) -> bool {
    let mut owner: Vec<Option<usize>> = vec![None; f.levels];
    for (&l, &c) in f.ids.iter().zip(clusters) {
        match owner[l] {
            None => owner[l] = Some(c),
            Some(o) if o != c => return false,
            _ => {}
        }
    }
    true
}

/// Sum over clusters of the outer products of per-cluster score totals, where
/// row `i` contributes `u[i] * x[i, ..]`.
pub fn cluster_meat(x: &DMatrix<f64>, u: &[f64], clusters: &[usize]) -> DMatrix<f64> {
    let k = x.ncols();
    let g = clusters.iter().copied().max().map_or(0, |m| m + 1);
    let mut totals = DMatrix::<f64>::zeros(g, k);
    for i in 0..x.nrows() {
        for a in 0..k {
            totals[(clusters[i], a)] += u[i] * x[(i, a)];
        }
    }
    totals.transpose() * totals
}

pub(crate) fn count_clusters(clusters: &[usize]) -> usize {
    let mut seen = clusters.to_vec();
    seen.sort_unstable();
    seen.dedup();
    seen.len()
}

/// Weighted least squares with optional absorbed factors and robust covariance.
pub fn wls_fe(design: &Design, opts: &FitOptions) -> Result<FitResult, StatsError> {
    design.validate()?;
    let n = design.n();
    let w = design.normalized_weights();
    let names = design.coef_names();
    let k = names.len();
    if k == 0 {
        return Err(StatsError::InvalidInput("no regressors".into()));
    }
    if opts.cov == CovType::Cluster && design.clusters.is_none() {
        return Err(StatsError::InvalidInput("cluster covariance requested without cluster ids".into()));
    }

    let demeaner = Demeaner::new(&design.factors, &w);
    let mut iterations = 0;
    let mut y = design.y.clone();
    iterations = iterations.max(demeaner.demean(&mut y, opts.fe_tolerance, opts.fe_max_sweeps)?);
    let mut x = design.matrix();
    if !design.factors.is_empty() {
        for j in 0..x.ncols() {
            let mut col: Vec<f64> = x.column(j).iter().copied().collect();
            iterations = iterations.max(demeaner.demean(&mut col, opts.fe_tolerance, opts.fe_max_sweeps)?);
            x.set_column(j, &DVector::from_vec(col));
        }
        // A regressor that lies in the span of the factors demeans to (numerically) zero.
        for (j, name) in names.iter().enumerate() {
            let orig = design.columns[j].iter().map(|v| v * v).sum::<f64>().sqrt();
            let now = x.column(j).norm();
            if now <= 1e-9 * (1.0 + orig) {
                return Err(StatsError::Collinear { column: name.clone() });
            }
        }
    }

    let xtx = weighted_crossprod(&x, &w);
    let bread = inverse_checked(&xtx, &names, COLLINEAR_TOL)?;
    let beta = &bread * weighted_xty(&x, &w, &y);
    let fitted = &x * &beta;
    let resid: Vec<f64> = (0..n).map(|i| y[i] - fitted[i]).collect();
    let ssr: f64 = resid.iter().zip(&w).map(|(e, w)| w * e * e).sum();

    let fe_df = absorbed_df(&design.factors);
    let absorbed: usize = fe_df.iter().sum();
    let df_resid = n as f64 - k as f64 - absorbed as f64;
    if df_resid <= 0.0 {
        return Err(StatsError::InvalidInput(format!(
            "no residual degrees of freedom ({n} rows, {} parameters)",
            k + absorbed
        )));
    }

    let (cov, n_clusters, inference_df) = match opts.cov {
        CovType::Classical => (&bread * (ssr / df_resid), None, df_resid),
        CovType::Hc1 => {
            let u: Vec<f64> = resid.iter().zip(&w).map(|(e, w)| e * w).collect();
            let ids: Vec<usize> = (0..n).collect();
            let meat = cluster_meat(&x, &u, &ids);
            (&bread * meat * &bread * (n as f64 / df_resid), None, df_resid)
        }
        CovType::Cluster => {
            let clusters = design.clusters.as_ref().expect("checked above");
            let g = count_clusters(clusters);
            if g < 2 {
                return Err(StatsError::InvalidInput("cluster covariance needs at least two clusters".into()));
            }
            let u: Vec<f64> = resid.iter().zip(&w).map(|(e, w)| e * w).collect();
            let meat = cluster_meat(&x, &u, clusters);
            let kept: usize =
                design.factors.iter().zip(&fe_df).filter(|(f, _)| !nested_in(f, clusters)).map(|(_, d)| *d).sum();
            let k_eff = (k + kept) as f64;
            let nf = n as f64;
            let gf = g as f64;
            let factor = gf / (gf - 1.0) * (nf - 1.0) / (nf - k_eff);
            (&bread * meat * &bread * factor, Some(g), gf - 1.0)
        }
    };

    let se: Vec<f64> = (0..k).map(|j| cov[(j, j)].max(0.0).sqrt()).collect();
    let coef: Vec<f64> = beta.iter().copied().collect();
    let stat: Vec<f64> = coef.iter().zip(&se).map(|(b, s)| b / s).collect();
    let p: Vec<f64> = stat.iter().map(|t| t_pvalue(*t, inference_df)).collect();

    let ybar = design.y.iter().zip(&w).map(|(y, w)| y * w).sum::<f64>() / n as f64;
    let tss: f64 = design.y.iter().zip(&w).map(|(y, w)| w * (y - ybar).powi(2)).sum();
    let (r2, within_r2) = if design.factors.is_empty() {
        if design.has_intercept_column() {
            (Some(1.0 - ssr / tss), None)
        } else {
            let uncentered: f64 = design.y.iter().zip(&w).map(|(y, w)| w * y * y).sum();
            (Some(1.0 - ssr / uncentered), None)
        }
    } else {
        let within_tss: f64 = y.iter().zip(&w).map(|(y, w)| w * y * y).sum();
        (Some(1.0 - ssr / tss), Some(1.0 - ssr / within_tss))
    };

    Ok(FitResult {
        names,
        coef,
        cov,
        se,
        stat,
        p,
        n,
        df_resid: inference_df,
        cov_type: opts.cov,
        n_clusters,
        r2,
        within_r2,
        absorbed_df: absorbed,
        iterations,
        converged: true,
        log_likelihood: None,
        objective: Some(ssr),
        residuals: resid,
    })
}

/// Joint Wald test of `R beta = r`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct WaldTest {
    pub chi2: f64,
    pub df: usize,
    pub p_chi2: f64,
    pub f: f64,
    pub p_f: f64,
}

pub fn wald_test(fit: &FitResult, r: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<WaldTest, StatsError> {
    let q = r.nrows();
    if r.ncols() != fit.coef.len() || rhs.len() != q || q == 0 {
        return Err(StatsError::Dimension("restriction matrix does not match the coefficients".into()));
    }
    let diff = r * fit.coef_vector() - rhs;
    let v = r * &fit.cov * r.transpose();
    let names: Vec<String> = (0..q).map(|i| format!("restriction {i}")).collect();
    let vinv = inverse_checked(&v, &names, 1e-12)?;
    let chi2 = (diff.transpose() * vinv * &diff)[(0, 0)];
    let chi = statrs::distribution::ChiSquared::new(q as f64).expect("positive df");
    use statrs::distribution::ContinuousCDF;
    let p_chi2 = (1.0 - chi.cdf(chi2)).clamp(0.0, 1.0);
    let f = chi2 / q as f64;
    let p_f = if fit.df_resid.is_finite() { f_sf(f, q as f64, fit.df_resid) } else { p_chi2 };
    Ok(WaldTest { chi2, df: q, p_chi2, f, p_f })
}

/// Joint test that the named coefficients are all zero.
pub fn wald_zero(fit: &FitResult, names: &[&str]) -> Result<WaldTest, StatsError> {
    let k = fit.coef.len();
    let mut r = DMatrix::zeros(names.len(), k);
    for (row, name) in names.iter().enumerate() {
        let j = fit.index_of(name).ok_or_else(|| StatsError::UnknownVariable(name.to_string()))?;
        r[(row, j)] = 1.0;
    }
    wald_test(fit, &r, &DVector::zeros(names.len()))
}

/// z-based p-values, for estimators with asymptotic normal inference.
pub(crate) fn z_pvalues(stat: &[f64]) -> Vec<f64> {
    stat.iter().map(|z| z_pvalue(*z)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simple_regression_exact() {
        let x: Vec<f64> = (0..10).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| 1.5 + 2.0 * v).collect();
        let fit = wls_fe(&Design::new(y).column("x", x), &FitOptions::default()).unwrap();
        assert!((fit.coef_of("(intercept)").unwrap() - 1.5).abs() < 1e-10);
        assert!((fit.coef_of("x").unwrap() - 2.0).abs() < 1e-10);
    }

    #[test]
    fn components_between_factors() {
        let a = Factor::from_keys("a", &[0, 0, 1, 1, 2]);
        let b = Factor::from_keys("b", &[0, 1, 0, 1, 2]);
        assert_eq!(connected_components(&a, &b), 2);
        assert_eq!(absorbed_df(&[a, b]), vec![3, 1]);
    }

    #[test]
    fn regressor_inside_factor_span_is_collinear() {
        let g = [0, 0, 1, 1, 2, 2];
        let x = vec![1.0, 1.0, 3.0, 3.0, 5.0, 5.0];
        let y = vec![0.1, 0.4, 0.2, 0.9, 0.5, 0.3];
        let d = Design::new(y)
            .column("x", x)
            .column("z", vec![1.0, 2.0, 0.0, 1.0, 4.0, 2.0])
            .factor(Factor::from_keys("g", &g));
        match wls_fe(&d, &FitOptions::default()) {
            Err(StatsError::Collinear { column }) => assert_eq!(column, "x"),
            other => panic!("{other:?}"),
        }
    }
}
