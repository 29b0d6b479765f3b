use serde::Serialize;

use super::descriptive::{effective_n, weighted_quantile, weighted_sd};
use super::StatsError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Bandwidth {
    /// `0.9 * min(sd, IQR / 1.34) * n^(-1/5)`, with the Kish effective n under weights.
    Silverman,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KdeCurve {
    pub bandwidth: f64,
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
}

impl KdeCurve {
    /// Trapezoid integral of the density over the grid.
    pub fn integral(&self) -> f64 {
        self.grid.windows(2).zip(self.density.windows(2)).map(|(g, d)| (g[1] - g[0]) * (d[0] + d[1]) / 2.0).sum()
    }
}

const MAX_GRID: usize = 200_000;

/// Weighted Gaussian kernel density on a grid padded by five bandwidths each
/// side, with spacing at most a quarter bandwidth (and at least 512 points).
pub fn kde(values: &[f64], weights: Option<&[f64]>, bandwidth: Bandwidth) -> Result<KdeCurve, StatsError> {
    if values.len() < 2 {
        return Err(StatsError::InvalidInput("density estimate needs at least two values".into()));
    }
    let sd = weighted_sd(values, weights)?;
    if !(sd > 0.0) {
        return Err(StatsError::Degenerate("zero variance".into()));
    }
    let h = match bandwidth {
        Bandwidth::Fixed(h) if h > 0.0 && h.is_finite() => h,
        Bandwidth::Fixed(h) => return Err(StatsError::InvalidInput(format!("bandwidth {h} must be positive"))),
        Bandwidth::Silverman => {
            let iqr = weighted_quantile(values, weights, 0.75)? - weighted_quantile(values, weights, 0.25)?;
            let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
            0.9 * spread * effective_n(weights, values.len()).powf(-0.2)
        }
    };
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min) - 5.0 * h;
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 5.0 * h;
    let points = (((hi - lo) / (h / 4.0)).ceil() as usize + 1).clamp(512, MAX_GRID);
    let step = (hi - lo) / (points - 1) as f64;
    let grid: Vec<f64> = (0..points).map(|i| lo + step * i as f64).collect();

    let total: f64 = weights.map_or(values.len() as f64, |w| w.iter().sum());
    let norm = 1.0 / (h * (2.0 * std::f64::consts::PI).sqrt() * total);
    let mut density = vec![0.0; points];
    // Each kernel only touches grid points within 8 bandwidths.
    let reach = (8.0 * h / step).ceil() as isize;
    for (i, &v) in values.iter().enumerate() {
        let w = weights.map_or(1.0, |w| w[i]);
        let centre = ((v - lo) / step).round() as isize;
        let from = (centre - reach).max(0) as usize;
        let to = ((centre + reach) as usize).min(points - 1);
        for (g, d) in grid[from..=to].iter().zip(&mut density[from..=to]) {
            let u = (g - v) / h;
            *d += w * (-0.5 * u * u).exp();
        }
    }
    for d in &mut density {
        *d *= norm;
    }
    Ok(KdeCurve { bandwidth: h, grid, density })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_to_one() {
        let v = [0.1, 0.2, 0.25, 0.7, 0.9, 0.95];
        let c = kde(&v, None, Bandwidth::Silverman).unwrap();
        assert!((c.integral() - 1.0).abs() < 1e-3);
    }

    #[test]
    fn constant_rejected() {
        assert!(kde(&[0.5, 0.5, 0.5], None, Bandwidth::Silverman).is_err());
    }
}
