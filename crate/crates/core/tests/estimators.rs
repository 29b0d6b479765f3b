//! Estimators against brute-force references.

use gaisi::stats::{
    auc, auc_compare_paired, check_loss, quantile_reg, spearman, weighted_quantile, wls_fe, Design, Factor, FitOptions,
    QuantileOptions,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Weighted least squares on explicit dummies via SVD; returns the first `k` coefficients.
fn dummy_ols(y: &[f64], cols: &[Vec<f64>], factors: &[Vec<usize>], w: &[f64], k: usize) -> Vec<f64> {
    let n = y.len();
    let mut full: Vec<Vec<f64>> = cols.to_vec();
    full.push(vec![1.0; n]);
    for f in factors {
        let levels = f.iter().max().unwrap() + 1;
        for l in 1..levels {
            full.push(f.iter().map(|&g| f64::from(u8::from(g == l))).collect());
        }
    }
    let x = DMatrix::from_fn(n, full.len(), |i, j| full[j][i] * w[i].sqrt());
    let yv = DVector::from_iterator(n, y.iter().zip(w).map(|(v, wi)| v * wi.sqrt()));
    let beta = x.svd(true, true).solve(&yv, 1e-10).unwrap();
    beta.iter().take(k).copied().collect()
}

fn dense_ids(raw: Vec<usize>) -> Vec<usize> {
    let mut seen: Vec<usize> = raw.clone();
    seen.sort_unstable();
    seen.dedup();
    raw.iter().map(|v| seen.binary_search(v).unwrap()).collect()
}

#[test]
fn fixed_effects_match_dummy_regression() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let n = rng.random_range(40..=500);
        let k = rng.random_range(1..=3);
        let nf = rng.random_range(1..=3);
        let factors: Vec<Vec<usize>> = (0..nf)
            .map(|_| {
                let levels = rng.random_range(2..=12);
                dense_ids((0..n).map(|_| rng.random_range(0..levels)).collect())
            })
            .collect();
        let cols: Vec<Vec<f64>> = (0..k).map(|_| (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect()).collect();
        let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..2.0)).collect();
        let y: Vec<f64> = (0..n)
            .map(|i| {
                let fe: f64 = factors.iter().map(|f| (f[i] as f64).sin()).sum();
                cols.iter().enumerate().map(|(j, c)| (j as f64 + 1.0) * c[i]).sum::<f64>() + fe + rng.random::<f64>()
            })
            .collect();
        let mut d = Design::new(y.clone()).weights(w.clone());
        for (j, c) in cols.iter().enumerate() {
            d = d.column(format!("x{j}"), c.clone());
        }
        for (j, f) in factors.iter().enumerate() {
            d = d.factor(Factor::from_keys(format!("f{j}"), f));
        }
        let opts = FitOptions { fe_tolerance: 1e-12, ..FitOptions::default() };
        let fit = wls_fe(&d, &opts).unwrap();
        let want = dummy_ols(&y, &cols, &factors, &w, k);
        for j in 0..k {
            assert!((fit.coef[j] - want[j]).abs() < 1e-6, "n {n} factors {nf}: {} vs {}", fit.coef[j], want[j]);
        }
    }
}

#[test]
fn single_factor_classical_se_matches_dummies() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let n = 300;
    let g: Vec<usize> = (0..n).map(|i| i % 7).collect();
    let x: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let y: Vec<f64> = (0..n).map(|i| 2.0 * x[i] + g[i] as f64 + rng.random::<f64>()).collect();
    let fe = wls_fe(
        &Design::new(y.clone()).column("x", x.clone()).factor(Factor::from_keys("g", &g)),
        &FitOptions::default(),
    )
    .unwrap();
    let dummies = wls_fe(&Design::new(y).column("x", x).dummies("g", &g), &FitOptions::default()).unwrap();
    assert!((fe.coef_of("x").unwrap() - dummies.coef_of("x").unwrap()).abs() < 1e-9);
    assert!((fe.se_of("x").unwrap() - dummies.se_of("x").unwrap()).abs() < 1e-9);
}

/// Pairwise definition: positives beating negatives, ties counted half, weighted by w_i w_j.
fn auc_pairs(s: &[f64], y: &[bool], w: &[f64]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for i in (0..s.len()).filter(|&i| y[i]) {
        for j in (0..s.len()).filter(|&j| !y[j]) {
            let ww = w[i] * w[j];
            den += ww;
            num += ww
                * if s[i] > s[j] {
                    1.0
                } else if s[i] == s[j] {
                    0.5
                } else {
                    0.0
                };
        }
    }
    num / den
}

fn labelled(max: usize) -> impl Strategy<Value = (Vec<f64>, Vec<bool>, Vec<f64>)> {
    (2..=max).prop_flat_map(|n| {
        (
            prop::collection::vec((0u8..6).prop_map(|v| f64::from(v) / 5.0), n),
            prop::collection::vec(any::<bool>(), n),
            prop::collection::vec(0.2f64..3.0, n),
        )
            .prop_filter("both classes", |(_, y, _)| y.iter().any(|b| *b) && y.iter().any(|b| !*b))
    })
}

proptest! {
    #[test]
    fn auc_equals_pair_enumeration((s, y, w) in labelled(12)) {
        let got = auc(&s, &y, None).unwrap().auc;
        prop_assert!((got - auc_pairs(&s, &y, &vec![1.0; s.len()])).abs() < 1e-12);
        let got = auc(&s, &y, Some(&w)).unwrap().auc;
        prop_assert!((got - auc_pairs(&s, &y, &w)).abs() < 1e-12);
    }

    #[test]
    fn auc_invariant_under_monotone_transform((s, y, w) in labelled(40)) {
        let t: Vec<f64> = s.iter().map(|v| (3.0 * v).exp() - 7.0).collect();
        let a = auc(&s, &y, Some(&w)).unwrap();
        let b = auc(&t, &y, Some(&w)).unwrap();
        prop_assert!((a.auc - b.auc).abs() < 1e-12);
        prop_assert!((a.se - b.se).abs() < 1e-12 || (a.se.is_nan() && b.se.is_nan()));
    }

    #[test]
    fn delong_self_comparison_is_null((s, y, _w) in labelled(40)) {
        let c = auc_compare_paired(&s, &s, &y, None).unwrap();
        prop_assert_eq!(c.diff, 0.0);
        prop_assert_eq!(c.p, 1.0);
    }

    #[test]
    fn spearman_of_monotone_transform_is_one(v in prop::collection::vec(-5.0f64..5.0, 3..30)) {
        prop_assume!(v.iter().any(|x| *x != v[0]));
        let t: Vec<f64> = v.iter().map(|x| x.powi(3) + 2.0).collect();
        prop_assert!((spearman(&v, &t).unwrap().rho - 1.0).abs() < 1e-12);
    }

    #[test]
    fn intercept_only_quantile_is_weighted_quantile(
        y in prop::collection::vec(-10.0f64..10.0, 3..60),
        tau in 0.05f64..0.95,
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w: Vec<f64> = y.iter().map(|_| rng.random_range(0.5..2.0)).collect();
        let fit = quantile_reg(&Design::new(y.clone()).weights(w.clone()), &QuantileOptions::new(tau)).unwrap();
        let q = weighted_quantile(&y, Some(&w), tau).unwrap();
        // Any point in the optimal interval is a solution; the objectives must agree
        // and the weighted quantile itself must be one of them.
        let loss = |b: f64| check_loss(&y.iter().map(|v| v - b).collect::<Vec<_>>(), Some(&w), tau);
        prop_assert!((loss(fit.coef[0]) - loss(q)).abs() < 1e-9 * (1.0 + loss(q)));
        prop_assert!((fit.coef[0] - q).abs() < 1e-9);
    }
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for first in 0..n {
        for mut rest in combinations(n, k - 1).into_iter().filter(|r| r.first().is_none_or(|&r0| r0 > first)) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

/// Minimum check loss over every basic solution: fits passing exactly through k points.
fn enumerate_basic(x: &DMatrix<f64>, y: &[f64], w: &[f64], tau: f64) -> f64 {
    let (n, k) = x.shape();
    let mut best = f64::INFINITY;
    for rows in combinations(n, k) {
        let a = DMatrix::from_fn(k, k, |i, j| x[(rows[i], j)]);
        let b = DVector::from_iterator(k, rows.iter().map(|&r| y[r]));
        let Some(inv) = a.try_inverse() else { continue };
        let beta = inv * b;
        let r: Vec<f64> = (0..n).map(|i| y[i] - (x.row(i) * &beta)[0]).collect();
        best = best.min(check_loss(&r, Some(w), tau));
    }
    best
}

#[test]
fn small_quantile_designs_match_basic_solution_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..60 {
        let n = rng.random_range(5..=12);
        let p = rng.random_range(0..=2);
        let tau = [0.2, 0.5, 0.8][rng.random_range(0..3)];
        let cols: Vec<Vec<f64>> = (0..p).map(|_| (0..n).map(|_| rng.random::<f64>() * 4.0).collect()).collect();
        let y: Vec<f64> = (0..n).map(|i| cols.iter().map(|c| c[i]).sum::<f64>() + rng.random::<f64>() * 3.0).collect();
        let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..2.0)).collect();
        let mut d = Design::new(y.clone()).weights(w.clone());
        for (j, c) in cols.iter().enumerate() {
            d = d.column(format!("x{j}"), c.clone());
        }
        let fit = quantile_reg(&d, &QuantileOptions::new(tau)).unwrap();
        let x = d.matrix();
        let r: Vec<f64> = (0..n).map(|i| y[i] - (x.row(i) * fit.coef_vector())[0]).collect();
        let got = check_loss(&r, Some(&w), tau);
        let best = enumerate_basic(&x, &y, &w, tau);
        assert!((got - best).abs() < 1e-6, "n {n} p {p} tau {tau}: {got} vs {best}");
    }
}
