//! Descriptive studies: the score distribution, group gaps, the shift-share
//! decomposition across waves and task coverage.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::corpus::Wave;
use crate::index::{bounded_gaisi, coverage_share};
use crate::stats::{
    kde, wald_zero, weighted_cdf, weighted_mean, weighted_quantile, weighted_share, wls_fe, Bandwidth, Design,
    FitOptions,
};

use super::sample::{add_varying, flag, occ_view, Sample};
use super::{coef_table, num, opt, text, StudyError, StudyInputs, StudyResult, Table};

fn grid(step: f64) -> Vec<f64> {
    let n = (1.0 / step).round() as usize;
    (0..=n).map(|i| i as f64 * step).collect()
}

pub fn distribution_study(inputs: &StudyInputs) -> Result<StudyResult, StudyError> {
    let p = &inputs.params;
    let mut out = StudyResult::new("distribution", inputs);
    let sample = Sample::scored(inputs);
    if sample.is_empty() {
        return Err(StudyError::MissingInput("scored workers".into()));
    }
    let w = sample.weights();
    let g = sample.gaisi();
    let e1 = sample.col(|_, s| s.e1);
    let e2e3 = sample.col(|_, s| s.e2e3);

    let xs = grid(0.01);
    let cdf_g = weighted_cdf(&g, Some(&w), &xs)?;
    let cdf_e1 = weighted_cdf(&e1, Some(&w), &xs)?;
    let cdf_l = weighted_cdf(&e2e3, Some(&w), &xs)?;
    let mut cdf = Table::new("cdf", &["x", "gaisi", "e1", "e2e3"]);
    for i in 0..xs.len() {
        cdf.push(vec![num(xs[i]), num(cdf_g[i]), num(cdf_e1[i]), num(cdf_l[i])]);
    }
    // Direct count at every grid point as a check on the sorted accumulation.
    let total: f64 = w.iter().sum();
    let worst = xs
        .iter()
        .zip(&cdf_g)
        .map(|(x, c)| {
            let direct: f64 = g.iter().zip(&w).filter(|(v, _)| *v <= x).map(|(_, wi)| wi).sum::<f64>() / total;
            (direct - c).abs()
        })
        .fold(0.0, f64::max);
    out.expect("cdf_matches_direct_count", worst < 1e-12, format!("largest gap {worst:e}"));
    out.figures.push(cdf);

    let mut shares = Table::new("shares", &["measure", "share"]);
    shares.push(vec![text("any_exposure"), num(weighted_share(&g, Some(&w), |v| v > 0.0)?)]);
    shares.push(vec![
        text(format!("above_{}", p.exposure_cut)),
        num(weighted_share(&g, Some(&w), |v| v > p.exposure_cut)?),
    ]);
    for wave in [Wave::W2017, Wave::W2023] {
        let s = sample.filter(|j, _| j.wave == wave);
        if !s.is_empty() {
            let v = weighted_share(&s.gaisi(), Some(&s.weights()), |v| v > p.exposure_cut)?;
            shares.push(vec![text(format!("above_{}_{}", p.exposure_cut, wave.as_str())), num(v)]);
        }
    }
    out.tables.push(shares);

    let mut means = Table::new("component_means", &["component", "mean"]);
    let comps: [(&str, fn(&crate::index::GaisiScore) -> f64); 7] = [
        ("e0", |s| s.e0),
        ("e1", |s| s.e1),
        ("e2", |s| s.e2),
        ("e3", |s| s.e3),
        ("e2e3", |s| s.e2e3),
        ("task_load", |s| s.task_load),
        ("gaisi", |s| s.gaisi),
    ];
    let mut m = BTreeMap::new();
    for (name, f) in comps {
        let v = weighted_mean(&sample.col(|_, s| f(s)), Some(&w))?;
        m.insert(name, v);
        means.push(vec![text(name), num(v)]);
    }
    let id_gap = (m["gaisi"] - (m["e1"] + p.omega * m["e2e3"])).abs();
    out.expect(
        "mean_index_identity",
        id_gap < 1e-10,
        format!("|mean(gaisi) - mean(e1) - omega mean(e2e3)| = {id_gap:e}"),
    );
    let sum_gap = (m["e0"] + m["e1"] + m["e2e3"] - 1.0).abs();
    out.expect("components_sum_to_one", sum_gap < 1e-10, format!("|e0 + e1 + e2e3 - 1| = {sum_gap:e}"));
    out.tables.push(means);

    for (name, v) in [("kde_gaisi", &g), ("kde_e1", &e1), ("kde_e2e3", &e2e3)] {
        let curve = kde(v, Some(&w), Bandwidth::Silverman)?;
        let mut t = Table::new(name, &["x", "density"]);
        for (x, d) in curve.grid.iter().zip(&curve.density) {
            t.push(vec![num(*x), num(*d)]);
        }
        out.notes.push(format!("{name}: Silverman bandwidth {:.5}", curve.bandwidth));
        out.figures.push(t);
    }

    out.tables.push(group_means("by_major_group", &sample, |j| j.occ_code.major().to_string())?);
    out.tables.push(group_means("by_education", &sample, |j| {
        j.covariates
            .education
            .map_or("NA".into(), |e| ["below_gcse", "gcse", "a_level", "degree"][e.min(3) as usize].into())
    })?);
    out.tables.push(group_means("by_wave", &sample, |j| j.wave.as_str().to_string())?);

    let occ = group_means("by_occupation", &sample, |j| occ_view(&j.occ_code, p.occupation_depth).to_string())?;
    let n_col = occ.column_index("n").expect("n column");
    let g_col = occ.column_index("gaisi").expect("gaisi column");
    let mut ranked: Vec<&Vec<serde_json::Value>> =
        occ.rows.iter().filter(|r| r[n_col].as_u64().unwrap_or(0) >= p.min_n as u64).collect();
    ranked.sort_by(|a, b| b[g_col].as_f64().unwrap_or(0.0).total_cmp(&a[g_col].as_f64().unwrap_or(0.0)));
    let mut extremes = Table::new("top_bottom_occupations", &["rank", "group", "n", "gaisi", "e1", "e2e3"]);
    let k = ranked.len().min(10);
    for (label, rows) in [("top", &ranked[..k]), ("bottom", &ranked[ranked.len() - k..])] {
        for (i, r) in rows.iter().enumerate() {
            extremes.push(vec![
                text(format!("{label}_{}", i + 1)),
                r[0].clone(),
                r[1].clone(),
                r[3].clone(),
                r[4].clone(),
                r[5].clone(),
            ]);
        }
    }
    out.tables.push(extremes);
    Ok(out)
}

/// Weighted means of the index and its parts per group.
fn group_means(
    name: &str,
    sample: &Sample,
    key: impl Fn(&crate::corpus::JobRecord) -> String,
) -> Result<Table, StudyError> {
    let mut acc: BTreeMap<String, [f64; 5]> = BTreeMap::new();
    let total: f64 = sample.weights().iter().sum();
    for (j, s) in &sample.rows {
        let a = acc.entry(key(j)).or_insert([0.0; 5]);
        let w = j.survey_weight;
        a[0] += 1.0;
        a[1] += w;
        a[2] += w * s.gaisi;
        a[3] += w * s.e1;
        a[4] += w * s.e2e3;
    }
    let mut t = Table::new(name, &["group", "n", "weight_share", "gaisi", "e1", "e2e3"]);
    for (k, a) in acc {
        t.push(vec![
            text(k),
            serde_json::Value::from(a[0] as u64),
            num(a[1] / total),
            num(a[2] / a[1]),
            num(a[3] / a[1]),
            num(a[4] / a[1]),
        ]);
    }
    Ok(t)
}

pub fn group_gaps(inputs: &StudyInputs) -> Result<StudyResult, StudyError> {
    let p = &inputs.params;
    let mut out = StudyResult::new("group-gaps", inputs);
    let sample = Sample::scored(inputs).with_demographics();
    if sample.len() < 10 {
        return Err(StudyError::MissingInput("workers with complete demographics".into()));
    }
    let post = sample.col(|j, _| flag(j.wave.is_post()));
    let mut cols = sample.demographic_columns();
    let interactions: Vec<(String, Vec<f64>)> =
        cols.iter().map(|(n, v)| (format!("{n}_x_post"), v.iter().zip(&post).map(|(a, b)| a * b).collect())).collect();
    cols.push(("post".into(), post.clone()));
    cols.extend(interactions);
    let mut dropped = Vec::new();
    let design = add_varying(Design::new(sample.gaisi()), cols, &mut dropped)
        .weights(sample.weights())
        .clusters(&sample.occ(p.occupation_depth));
    let fit = wls_fe(&design, &FitOptions::cluster())?;
    if !dropped.is_empty() {
        out.notes.push(format!("constant columns dropped: {}", dropped.join(", ")));
    }
    out.tables.push(coef_table("gaps", &fit, &[]));
    let inter: Vec<&str> = fit.names.iter().filter(|n| n.ends_with("_x_post")).map(String::as_str).collect();
    let mut tests = Table::new("joint_tests", &["test", "chi2", "df", "p_chi2", "f", "p_f"]);
    if !inter.is_empty() {
        let w = wald_zero(&fit, &inter)?;
        tests.push(vec![text("post_interactions"), num(w.chi2), w.df.into(), num(w.p_chi2), num(w.f), num(w.p_f)]);
    }
    let levels: Vec<&str> = fit
        .names
        .iter()
        .filter(|n| !n.ends_with("_x_post") && *n != "post" && *n != "(intercept)")
        .map(String::as_str)
        .collect();
    if !levels.is_empty() {
        let w = wald_zero(&fit, &levels)?;
        tests.push(vec![text("demographics"), num(w.chi2), w.df.into(), num(w.p_chi2), num(w.f), num(w.p_f)]);
    }
    out.tables.push(tests);
    out.notes.push(format!("n = {}, clusters = {}", fit.n, fit.n_clusters.unwrap_or(0)));
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShiftShareRow {
    pub group: String,
    pub share0: f64,
    pub share1: f64,
    pub mean0: f64,
    pub mean1: f64,
    pub within: f64,
    pub between: f64,
    /// Set when the group is absent in one wave and borrows the other wave's mean.
    pub borrowed_mean: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShiftShare {
    pub rows: Vec<ShiftShareRow>,
    pub mean0: f64,
    pub mean1: f64,
    pub total: f64,
    pub within: f64,
    pub between: f64,
}

/// Splits the change in a share-weighted mean between two waves into
///
/// ```text
/// within  = sum_g (s0 + s1)/2 * (m1 - m0)
/// between = sum_g (m0 + m1)/2 * (s1 - s0)
/// ```
///
/// which add up to the total change exactly. Inputs map a group to its
/// `(share, mean)`; shares in each wave should sum to one.
pub fn shift_share_decompose(wave0: &BTreeMap<String, (f64, f64)>, wave1: &BTreeMap<String, (f64, f64)>) -> ShiftShare {
    let mut groups: Vec<&String> = wave0.keys().chain(wave1.keys()).collect();
    groups.sort();
    groups.dedup();
    let mut rows = Vec::with_capacity(groups.len());
    let (mut m0, mut m1, mut within, mut between) = (0.0, 0.0, 0.0, 0.0);
    for g in groups {
        let a = wave0.get(g);
        let b = wave1.get(g);
        let (s0, g0) = a.copied().unwrap_or((0.0, b.map_or(0.0, |x| x.1)));
        let (s1, g1) = b.copied().unwrap_or((0.0, g0));
        let w = (s0 + s1) / 2.0 * (g1 - g0);
        let bt = (g0 + g1) / 2.0 * (s1 - s0);
        m0 += s0 * g0;
        m1 += s1 * g1;
        within += w;
        between += bt;
        rows.push(ShiftShareRow {
            group: g.clone(),
            share0: s0,
            share1: s1,
            mean0: g0,
            mean1: g1,
            within: w,
            between: bt,
            borrowed_mean: a.is_none() || b.is_none(),
        });
    }
    ShiftShare { rows, mean0: m0, mean1: m1, total: m1 - m0, within, between }
}

fn wave_map(sample: &Sample, depth: usize) -> BTreeMap<String, (f64, f64)> {
    let mut acc: BTreeMap<String, (f64, f64)> = BTreeMap::new();
    let mut total = 0.0;
    for (j, s) in &sample.rows {
        let e = acc.entry(occ_view(&j.occ_code, depth).to_string()).or_insert((0.0, 0.0));
        e.0 += j.survey_weight;
        e.1 += j.survey_weight * s.gaisi;
        total += j.survey_weight;
    }
    acc.into_iter().map(|(k, (w, wg))| (k, (w / total, wg / w))).collect()
}

pub fn shift_share(inputs: &StudyInputs) -> Result<StudyResult, StudyError> {
    let p = &inputs.params;
    let mut out = StudyResult::new("shift-share", inputs);
    let sample = Sample::scored(inputs);
    let early = sample.filter(|j, _| j.wave == Wave::W2017);
    let late = sample.filter(|j, _| j.wave == Wave::W2023);
    if early.is_empty() || late.is_empty() {
        return Err(StudyError::MissingInput("scored workers in both survey waves".into()));
    }
    let d = shift_share_decompose(&wave_map(&early, p.occupation_depth), &wave_map(&late, p.occupation_depth));
    let gap = (d.within + d.between - d.total).abs();
    out.expect("decomposition_adds_up", gap < 1e-10, format!("|within + between - total| = {gap:e}"));
    let borrowed: Vec<&str> = d.rows.iter().filter(|r| r.borrowed_mean).map(|r| r.group.as_str()).collect();
    if !borrowed.is_empty() {
        out.notes.push(format!("groups present in one wave only, mean carried across: {}", borrowed.join(", ")));
    }
    let mut summary = Table::new("decomposition", &["component", "value"]);
    for (k, v) in [
        ("mean_2017", d.mean0),
        ("mean_2023_24", d.mean1),
        ("total", d.total),
        ("within", d.within),
        ("between", d.between),
    ] {
        summary.push(vec![text(k), num(v)]);
    }
    out.tables.push(summary);
    let mut rows =
        Table::new("by_group", &["group", "share0", "share1", "mean0", "mean1", "within", "between", "borrowed_mean"]);
    for r in &d.rows {
        rows.push(vec![
            text(r.group.clone()),
            num(r.share0),
            num(r.share1),
            num(r.mean0),
            num(r.mean1),
            num(r.within),
            num(r.between),
            r.borrowed_mean.into(),
        ]);
    }
    out.tables.push(rows);
    Ok(out)
}

pub fn coverage_study(inputs: &StudyInputs) -> Result<StudyResult, StudyError> {
    let p = &inputs.params;
    let mut out = StudyResult::new("coverage", inputs);
    let cov = coverage_share(&inputs.scores.scores, &inputs.corpus.jobs, p.occupation_depth)?;
    let mut reg = Table::new("hours_regression", &["term", "estimate", "se"]);
    reg.push(vec![text("(intercept)"), num(cov.alpha), serde_json::Value::Null]);
    reg.push(vec![text("task_load"), num(cov.beta), num(cov.beta_se)]);
    out.tables.push(reg);
    out.expect_recovery("hours_slope_recovered", cov.beta, cov.beta_se, p.planted.as_ref().map(|e| e.hours_slope));
    if let Some(w) = &cov.warning {
        out.notes.push(w.clone());
        return Ok(out);
    }

    let mut occ = Table::new("by_occupation", &["group", "coverage"]);
    for (k, v) in &cov.occupations {
        occ.push(vec![text(k.clone()), num(*v)]);
    }
    out.tables.push(occ);

    let share_of: BTreeMap<&str, f64> = cov.workers.iter().filter_map(|(id, s)| s.map(|s| (id.as_str(), s))).collect();
    let sample = Sample::scored(inputs).filter(|j, _| share_of.contains_key(j.worker_id.as_str()));
    let w = sample.weights();
    let shares = sample.col(|j, _| share_of[j.worker_id.as_str()]);
    let bounds: Vec<(f64, f64)> =
        sample.rows.iter().zip(&shares).map(|((_, s), c)| bounded_gaisi(s.gaisi, *c)).collect::<Result<_, _>>()?;
    let lo: Vec<f64> = bounds.iter().map(|b| b.0).collect();
    let hi: Vec<f64> = bounds.iter().map(|b| b.1).collect();
    let mut summary = Table::new("summary", &["measure", "value"]);
    summary.push(vec![text("mean_coverage"), opt(cov.grand_mean)]);
    summary.push(vec![text("median_coverage"), num(weighted_quantile(&shares, Some(&w), 0.5)?)]);
    summary.push(vec![text("mean_gaisi"), num(weighted_mean(&sample.gaisi(), Some(&w))?)]);
    summary.push(vec![text("mean_lower_bound"), num(weighted_mean(&lo, Some(&w))?)]);
    summary.push(vec![text("mean_upper_bound"), num(weighted_mean(&hi, Some(&w))?)]);
    out.tables.push(summary);

    let mut major: BTreeMap<String, (f64, f64)> = BTreeMap::new();
    for ((j, _), s) in sample.rows.iter().zip(&shares) {
        let e = major.entry(j.occ_code.major().to_string()).or_insert((0.0, 0.0));
        e.0 += j.survey_weight;
        e.1 += j.survey_weight * s;
    }
    let mut mt = Table::new("by_major_group", &["group", "coverage"]);
    for (k, (w, ws)) in major {
        mt.push(vec![text(k), num(ws / w)]);
    }
    out.tables.push(mt);

    let mean_g = weighted_mean(&sample.gaisi(), Some(&w))?;
    let mut grid_t = Table::new("bounds_grid", &["coverage", "lower", "upper"]);
    for s in [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0] {
        let (l, h) = bounded_gaisi(mean_g, s)?;
        grid_t.push(vec![num(s), num(l), num(h)]);
    }
    out.figures.push(grid_t);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pure_reallocation() {
        let w0 = BTreeMap::from([("a".to_string(), (0.5, 0.2)), ("b".to_string(), (0.5, 0.6))]);
        let w1 = BTreeMap::from([("a".to_string(), (0.3, 0.2)), ("b".to_string(), (0.7, 0.6))]);
        let d = shift_share_decompose(&w0, &w1);
        assert!((d.between - 0.08).abs() < 1e-15);
        assert_eq!(d.within, 0.0);
        assert!((d.total - 0.08).abs() < 1e-15);
    }

    #[test]
    fn group_missing_in_one_wave() {
        let w0 = BTreeMap::from([("a".to_string(), (1.0, 0.2))]);
        let w1 = BTreeMap::from([("a".to_string(), (0.5, 0.3)), ("b".to_string(), (0.5, 0.5))]);
        let d = shift_share_decompose(&w0, &w1);
        assert!((d.within + d.between - d.total).abs() < 1e-15);
        assert!(d.rows[1].borrowed_mean && d.rows[1].mean0 == 0.5);
    }
}
