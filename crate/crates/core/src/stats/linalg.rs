use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, FisherSnedecor, Normal, StudentsT};

use super::StatsError;

/// Minimum-norm least-squares solution through the SVD.
pub fn lstsq_svd(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>, StatsError> {
    if x.nrows() != y.len() {
        return Err(StatsError::Dimension(format!("{} rows but {} responses", x.nrows(), y.len())));
    }
    let svd = x.clone().svd(true, true);
    let tol = svd.singular_values.max() * 1e-12 * x.nrows().max(x.ncols()) as f64;
    svd.solve(y, tol).map_err(|e| StatsError::InvalidInput(e.to_string()))
}

/// Inverts a symmetric positive semi-definite cross-product matrix, reporting
/// the first column whose Cholesky pivot falls below `rel_tol` of its diagonal.
pub(crate) fn inverse_checked(a: &DMatrix<f64>, names: &[String], rel_tol: f64) -> Result<DMatrix<f64>, StatsError> {
    let k = a.nrows();
    if k == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    // Scale to unit diagonal so the pivot threshold is comparable across columns.
    let mut scale = DVector::zeros(k);
    for j in 0..k {
        let d = a[(j, j)];
        if !(d > 0.0) {
            return Err(StatsError::Collinear { column: names.get(j).cloned().unwrap_or_else(|| j.to_string()) });
        }
        scale[j] = 1.0 / d.sqrt();
    }
    let s = DMatrix::from_fn(k, k, |i, j| a[(i, j)] * scale[i] * scale[j]);
    let mut l = DMatrix::<f64>::zeros(k, k);
    for j in 0..k {
        let mut d = s[(j, j)];
        for m in 0..j {
            d -= l[(j, m)] * l[(j, m)];
        }
        if d < rel_tol {
            return Err(StatsError::Collinear { column: names.get(j).cloned().unwrap_or_else(|| j.to_string()) });
        }
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in j + 1..k {
            let mut v = s[(i, j)];
            for m in 0..j {
                v -= l[(i, m)] * l[(j, m)];
            }
            l[(i, j)] = v / ljj;
        }
    }
    let chol = nalgebra::Cholesky::new(s)
        .ok_or_else(|| StatsError::Collinear { column: names.last().cloned().unwrap_or_default() })?;
    let inv = chol.inverse();
    Ok(DMatrix::from_fn(k, k, |i, j| inv[(i, j)] * scale[i] * scale[j]))
}

/// `X' diag(w) X`.
pub(crate) fn weighted_crossprod(x: &DMatrix<f64>, w: &[f64]) -> DMatrix<f64> {
    let k = x.ncols();
    let mut out = DMatrix::zeros(k, k);
    for i in 0..x.nrows() {
        let wi = w[i];
        for a in 0..k {
            let xa = x[(i, a)] * wi;
            if xa == 0.0 {
                continue;
            }
            for b in a..k {
                out[(a, b)] += xa * x[(i, b)];
            }
        }
    }
    for a in 0..k {
        for b in 0..a {
            out[(a, b)] = out[(b, a)];
        }
    }
    out
}

/// `X' diag(w) y`.
pub(crate) fn weighted_xty(x: &DMatrix<f64>, w: &[f64], y: &[f64]) -> DVector<f64> {
    let k = x.ncols();
    let mut out = DVector::zeros(k);
    for i in 0..x.nrows() {
        let wy = w[i] * y[i];
        for a in 0..k {
            out[a] += x[(i, a)] * wy;
        }
    }
    out
}

/// Two-sided p-value from Student's t.
pub(crate) fn t_pvalue(stat: f64, df: f64) -> f64 {
    if !stat.is_finite() {
        return f64::NAN;
    }
    if !(df > 0.0) {
        return f64::NAN;
    }
    let t = StudentsT::new(0.0, 1.0, df).expect("positive df");
    (2.0 * (1.0 - t.cdf(stat.abs()))).clamp(0.0, 1.0)
}

/// Two-sided p-value from the standard normal.
pub(crate) fn z_pvalue(stat: f64) -> f64 {
    if !stat.is_finite() {
        return f64::NAN;
    }
    let n = Normal::standard();
    (2.0 * n.cdf(-stat.abs())).clamp(0.0, 1.0)
}

pub(crate) fn f_sf(stat: f64, df1: f64, df2: f64) -> f64 {
    if !(stat.is_finite() && df1 > 0.0 && df2 > 0.0) {
        return f64::NAN;
    }
    let f = FisherSnedecor::new(df1, df2).expect("positive df");
    (1.0 - f.cdf(stat.max(0.0))).clamp(0.0, 1.0)
}

pub(crate) fn f_quantile(p: f64, df1: f64, df2: f64) -> f64 {
    FisherSnedecor::new(df1, df2).expect("positive df").inverse_cdf(p)
}

pub(crate) fn normal_cdf(x: f64) -> f64 {
    Normal::standard().cdf(x)
}

pub(crate) fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

pub(crate) fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn collinear_column_named() {
        let x = DMatrix::from_row_slice(4, 3, &[1.0, 1.0, 2.0, 1.0, 2.0, 3.0, 1.0, 3.0, 4.0, 1.0, 5.0, 6.0]);
        let xtx = weighted_crossprod(&x, &[1.0; 4]);
        let names: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        match inverse_checked(&xtx, &names, 1e-10) {
            Err(StatsError::Collinear { column }) => assert_eq!(column, "c"),
            other => panic!("expected collinearity, got {other:?}"),
        }
    }

    #[test]
    fn inverse_roundtrip() {
        let a = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let inv = inverse_checked(&a, &["a".into(), "b".into()], 1e-10).unwrap();
        let id = &a * inv;
        assert!((id - DMatrix::identity(2, 2)).abs().max() < 1e-12);
    }

    #[test]
    fn pvalues_sane() {
        assert!((z_pvalue(1.959963984540054) - 0.05).abs() < 1e-9);
        assert!((t_pvalue(0.0, 5.0) - 1.0).abs() < 1e-12);
    }
}
