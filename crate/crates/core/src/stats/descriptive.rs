//! Weighted summaries shared by the estimators and studies.

use super::StatsError;

fn check(values: &[f64], weights: Option<&[f64]>) -> Result<(), StatsError> {
    if values.is_empty() {
        return Err(StatsError::Empty);
    }
    if let Some(w) = weights {
        if w.len() != values.len() {
            return Err(StatsError::Dimension(format!("{} values but {} weights", values.len(), w.len())));
        }
        if w.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
            return Err(StatsError::InvalidInput("weights must be positive and finite".into()));
        }
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::InvalidInput("non-finite value".into()));
    }
    Ok(())
}

fn weight_at(weights: Option<&[f64]>, i: usize) -> f64 {
    weights.map_or(1.0, |w| w[i])
}

pub fn weighted_mean(values: &[f64], weights: Option<&[f64]>) -> Result<f64, StatsError> {
    check(values, weights)?;
    let (mut sw, mut swx) = (0.0, 0.0);
    for (i, v) in values.iter().enumerate() {
        let w = weight_at(weights, i);
        sw += w;
        swx += w * v;
    }
    Ok(swx / sw)
}

/// Weighted standard deviation with the reliability-weight correction
/// `sum(w) / (sum(w) - sum(w^2)/sum(w))`, which is the usual `n - 1` form for unit weights.
pub fn weighted_sd(values: &[f64], weights: Option<&[f64]>) -> Result<f64, StatsError> {
    let mean = weighted_mean(values, weights)?;
    if values.len() < 2 {
        return Err(StatsError::InvalidInput("standard deviation needs at least two values".into()));
    }
    let (mut sw, mut sw2, mut ss) = (0.0, 0.0, 0.0);
    for (i, v) in values.iter().enumerate() {
        let w = weight_at(weights, i);
        sw += w;
        sw2 += w * w;
        ss += w * (v - mean).powi(2);
    }
    Ok((ss / (sw - sw2 / sw)).sqrt())
}

/// Lower weighted quantile: the smallest value whose cumulative weight share reaches `p`.
pub fn weighted_quantile(values: &[f64], weights: Option<&[f64]>, p: f64) -> Result<f64, StatsError> {
    check(values, weights)?;
    if !(0.0..=1.0).contains(&p) {
        return Err(StatsError::InvalidInput(format!("quantile level {p} outside [0, 1]")));
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let total: f64 = (0..values.len()).map(|i| weight_at(weights, i)).sum();
    let target = p * total;
    let mut cum = 0.0;
    for &i in &order {
        cum += weight_at(weights, i);
        if cum >= target * (1.0 - 1e-12) {
            return Ok(values[i]);
        }
    }
    Ok(values[*order.last().expect("non-empty")])
}

/// Kish effective sample size `(sum w)^2 / sum w^2`.
pub fn effective_n(weights: Option<&[f64]>, n: usize) -> f64 {
    match weights {
        None => n as f64,
        Some(w) => {
            let s: f64 = w.iter().sum();
            let s2: f64 = w.iter().map(|x| x * x).sum();
            s * s / s2
        }
    }
}

/// Weighted z-scores. Kept outside the estimators so that scaling is always explicit.
pub fn standardize(values: &[f64], weights: Option<&[f64]>) -> Result<Vec<f64>, StatsError> {
    let mean = weighted_mean(values, weights)?;
    let sd = weighted_sd(values, weights)?;
    if sd <= 0.0 {
        return Err(StatsError::Degenerate("cannot standardise a constant variable".into()));
    }
    Ok(values.iter().map(|v| (v - mean) / sd).collect())
}

/// Weighted empirical CDF `P(X <= x)` at each grid point.
pub fn weighted_cdf(values: &[f64], weights: Option<&[f64]>, grid: &[f64]) -> Result<Vec<f64>, StatsError> {
    check(values, weights)?;
    let mut pairs: Vec<(f64, f64)> = values.iter().enumerate().map(|(i, v)| (*v, weight_at(weights, i))).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    let mut cum = Vec::with_capacity(pairs.len());
    let mut acc = 0.0;
    for p in &pairs {
        acc += p.1;
        cum.push(acc);
    }
    Ok(grid
        .iter()
        .map(|&x| {
            let k = pairs.partition_point(|p| p.0 <= x);
            if k == 0 {
                0.0
            } else {
                cum[k - 1] / total
            }
        })
        .collect())
}

/// Weighted share of observations satisfying `pred`.
pub fn weighted_share(values: &[f64], weights: Option<&[f64]>, pred: impl Fn(f64) -> bool) -> Result<f64, StatsError> {
    check(values, weights)?;
    let (mut hit, mut total) = (0.0, 0.0);
    for (i, v) in values.iter().enumerate() {
        let w = weight_at(weights, i);
        total += w;
        if pred(*v) {
            hit += w;
        }
    }
    Ok(hit / total)
}

/// Weighted Pearson correlation.
pub fn weighted_pearson(x: &[f64], y: &[f64], weights: Option<&[f64]>) -> Result<f64, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::Dimension("x and y differ in length".into()));
    }
    let mx = weighted_mean(x, weights)?;
    let my = weighted_mean(y, weights)?;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for i in 0..x.len() {
        let w = weight_at(weights, i);
        sxy += w * (x[i] - mx) * (y[i] - my);
        sxx += w * (x[i] - mx).powi(2);
        syy += w * (y[i] - my).powi(2);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return Err(StatsError::Degenerate("correlation of a constant variable".into()));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_lower_definition() {
        let v: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(weighted_quantile(&v, None, 0.2).unwrap(), 2.0);
        assert_eq!(weighted_quantile(&v, None, 0.21).unwrap(), 3.0);
        assert_eq!(weighted_quantile(&v, None, 0.5).unwrap(), 5.0);
        let w = [1.0, 1.0, 8.0];
        assert_eq!(weighted_quantile(&[1.0, 2.0, 3.0], Some(&w), 0.5).unwrap(), 3.0);
    }

    #[test]
    fn sd_matches_unit_weight_formula() {
        let v = [1.0, 2.0, 4.0, 7.0];
        let m = 3.5;
        let expected = (v.iter().map(|x: &f64| (x - m).powi(2)).sum::<f64>() / 3.0).sqrt();
        assert!((weighted_sd(&v, None).unwrap() - expected).abs() < 1e-12);
        assert!((weighted_sd(&v, Some(&[2.0; 4])).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn cdf_counts_sorted() {
        let v = [0.3, 0.1, 0.2, 0.2];
        let c = weighted_cdf(&v, None, &[0.0, 0.1, 0.2, 0.25, 0.3]).unwrap();
        assert_eq!(c, vec![0.0, 0.25, 0.75, 0.75, 1.0]);
    }

    #[test]
    fn standardize_constant_fails() {
        assert!(standardize(&[1.0, 1.0, 1.0], None).is_err());
    }
}
