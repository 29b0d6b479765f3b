//! Pay and vacancy studies.

use std::collections::BTreeMap;

use crate::corpus::{Phase, YearQuarter};
use crate::index::occupation_stats;
use crate::stats::{standardize, wald_zero, weighted_quantile, wls_fe, Design, Factor, FitOptions, FitResult};

use super::sample::{add_varying, flag, occ_view, Sample};
use super::{num, text, StudyError, StudyInputs, StudyResult, Table};

/// Controls shared by every pay specification.
fn pay_controls(sample: &Sample) -> Vec<(String, Vec<f64>)> {
    let mut cols = sample.demographic_columns();
    let female = cols[0].1.clone();
    let age = cols[1].1.clone();
    let age_sq = cols[2].1.clone();
    cols.push(("female_x_age".into(), female.iter().zip(&age).map(|(a, b)| a * b).collect()));
    cols.push(("female_x_age_sq".into(), female.iter().zip(&age_sq).map(|(a, b)| a * b).collect()));
    cols.push(("task_load".into(), sample.col(|_, s| s.task_load)));
    cols
}

pub fn wage_premium(inputs: &StudyInputs) -> Result<StudyResult, StudyError> {
    let p = &inputs.params;
    let mut out = StudyResult::new("wage-premium", inputs);
    let sample = Sample::scored(inputs).with_demographics().filter(|j, _| {
        j.outcomes.log_hourly_pay.is_some() && j.covariates.region.is_some() && j.covariates.industry.is_some()
    });
    if sample.len() < 50 {
        return Err(StudyError::MissingInput("workers with pay, region, industry and demographics".into()));
    }
    let y = sample.col(|j, _| j.outcomes.log_hourly_pay.expect("filtered"));
    let w = sample.weights();
    let g = sample.gaisi();
    let post = sample.col(|j, _| flag(j.wave.is_post()));
    let cut = weighted_quantile(&g, Some(&w), p.wage_split_quantile)?;
    let high: Vec<f64> = g.iter().map(|v| flag(*v > cut)).collect();
    let zg = standardize(&g, Some(&w))?;
    let times = |a: &[f64]| a.iter().zip(&post).map(|(x, t)| x * t).collect::<Vec<f64>>();
    let occ = sample.occ(p.occupation_depth);
    let region_wave =
        sample.keys(|j, _| format!("{}:{}", j.covariates.region.as_deref().unwrap_or(""), j.wave.as_str()));
    let industry_wave =
        sample.keys(|j, _| format!("{}:{}", j.covariates.industry.as_deref().unwrap_or(""), j.wave.as_str()));
    let major_wave = sample.keys(|j, _| format!("{}:{}", j.occ_code.major(), j.wave.as_str()));

    let specs: [(&str, &str, &[f64], bool); 6] = [
        ("(1)", "gaisi", &g, false),
        ("(2)", "gaisi", &g, true),
        ("(3)", "high", &high, false),
        ("(4)", "high", &high, true),
        ("(1z)", "z_gaisi", &zg, false),
        ("(2z)", "z_gaisi", &zg, true),
    ];
    let mut table = Table::new("models", &["model", "term", "estimate", "se", "p", "n", "clusters", "within_r2"]);
    let mut fits: BTreeMap<&str, FitResult> = BTreeMap::new();
    for (label, var, x, major_fe) in specs {
        let mut cols = vec![(var.to_string(), x.to_vec()), (format!("{var}_x_post"), times(x))];
        cols.extend(pay_controls(&sample));
        let mut dropped = Vec::new();
        let mut d = add_varying(Design::new(y.clone()), cols, &mut dropped)
            .weights(w.clone())
            .clusters(&occ)
            .factor(Factor::from_keys("occupation", &occ))
            .factor(Factor::from_keys("region_x_wave", &region_wave))
            .factor(Factor::from_keys("industry_x_wave", &industry_wave));
        if major_fe {
            d = d.factor(Factor::from_keys("major_x_wave", &major_wave));
        }
        let fit = wls_fe(&d, &FitOptions::cluster())?;
        for term in [var.to_string(), format!("{var}_x_post")] {
            let Some(i) = fit.index_of(&term) else { continue };
            table.push(vec![
                text(label),
                text(term.clone()),
                num(fit.coef[i]),
                num(fit.se[i]),
                num(fit.p[i]),
                fit.n.into(),
                fit.n_clusters.unwrap_or(0).into(),
                super::opt(fit.within_r2),
            ]);
        }
        if !dropped.is_empty() {
            out.notes.push(format!("{label}: constant columns dropped: {}", dropped.join(", ")));
        }
        fits.insert(label, fit);
    }
    out.tables.push(table);
    out.notes.push(format!("high exposure: index above the weighted {} quantile, {cut:.4}", p.wage_split_quantile));

    let f1 = &fits["(1)"];
    let planted = p.planted.as_ref();
    out.expect_recovery(
        "gaisi_slope_recovered",
        f1.coef_of("gaisi").expect("estimated"),
        f1.se_of("gaisi").expect("estimated"),
        planted.map(|e| e.wage_gaisi),
    );
    out.expect_recovery(
        "post_change_recovered",
        f1.coef_of("gaisi_x_post").expect("estimated"),
        f1.se_of("gaisi_x_post").expect("estimated"),
        planted.map(|e| e.wage_post_gaisi),
    );
    Ok(out)
}

struct PanelRow {
    y: f64,
    share: f64,
    quarter: YearQuarter,
    occ_area: String,
    area_quarter: String,
    major_quarter: String,
    month_key: (i32, u32),
}

/// Fixed-effects design on panel rows with the given share-interaction columns.
fn panel_design(rows: &[PanelRow], cols: Vec<(String, Vec<f64>)>) -> Design {
    let occ_area: Vec<&str> = rows.iter().map(|r| r.occ_area.as_str()).collect();
    let area_q: Vec<&str> = rows.iter().map(|r| r.area_quarter.as_str()).collect();
    let major_q: Vec<&str> = rows.iter().map(|r| r.major_quarter.as_str()).collect();
    let mut d = Design::new(rows.iter().map(|r| r.y).collect());
    for (n, v) in cols {
        d = d.column(n, v);
    }
    d.clusters(&occ_area)
        .factor(Factor::from_keys("occupation_x_area", &occ_area))
        .factor(Factor::from_keys("area_x_quarter", &area_q))
        .factor(Factor::from_keys("major_x_quarter", &major_q))
}

fn event_name(q: YearQuarter) -> String {
    format!("share_x_{q}")
}

pub fn vacancy_event_study(inputs: &StudyInputs) -> Result<StudyResult, StudyError> {
    let p = &inputs.params;
    let cal = p.calendar()?;
    let mut out = StudyResult::new("vacancy", inputs);
    if inputs.corpus.panel.is_empty() {
        return Err(StudyError::MissingInput("vacancy panel".into()));
    }
    let stats =
        occupation_stats(&inputs.scores.scores, &inputs.corpus.jobs, p.occupation_depth, p.min_n, p.high_percentile)?;
    let mut unmatched = BTreeMap::new();
    let mut rows = Vec::with_capacity(inputs.corpus.panel.len());
    for c in &inputs.corpus.panel {
        let Some(share) = c.exposure_share.or_else(|| stats.share_for(&c.occ_code)) else {
            *unmatched.entry(c.occ_code.as_str().to_string()).or_insert(0usize) += 1;
            continue;
        };
        let q = c.period.quarter();
        let occ = occ_view(&c.occ_code, p.occupation_depth);
        rows.push(PanelRow {
            y: c.log_outcome(),
            share,
            quarter: q,
            occ_area: format!("{occ}:{}", c.area_code),
            area_quarter: format!("{}:{q}", c.area_code),
            major_quarter: format!("{}:{q}", c.occ_code.major()),
            month_key: (c.period.year, c.period.month),
        });
    }
    if !unmatched.is_empty() {
        out.notes.push(format!(
            "panel rows without an exposure share dropped: {}",
            unmatched.iter().map(|(k, n)| format!("{k} ({n})")).collect::<Vec<_>>().join(", ")
        ));
    }
    let mut quarters: Vec<YearQuarter> = rows.iter().map(|r| r.quarter).collect();
    quarters.sort();
    quarters.dedup();
    if !quarters.contains(&cal.reference) {
        return Err(StudyError::InvalidParameter(format!("reference quarter {} not in the panel", cal.reference)));
    }

    // Event study: one share interaction per quarter, reference omitted.
    let event_q: Vec<YearQuarter> = quarters.iter().copied().filter(|q| *q != cal.reference).collect();
    let cols: Vec<(String, Vec<f64>)> = event_q
        .iter()
        .map(|q| (event_name(*q), rows.iter().map(|r| if r.quarter == *q { r.share } else { 0.0 }).collect()))
        .collect();
    let event = wls_fe(&panel_design(&rows, cols), &FitOptions::cluster())?;
    let mut fig = Table::new("event_study", &["quarter", "phase", "estimate", "se", "lower", "upper"]);
    for q in &quarters {
        let (b, se) = if *q == cal.reference {
            (0.0, 0.0)
        } else {
            let n = event_name(*q);
            (event.coef_of(&n).expect("estimated"), event.se_of(&n).expect("estimated"))
        };
        fig.push(vec![
            text(q.to_string()),
            text(cal.phase(*q).as_str()),
            num(b),
            num(se),
            num(b - 1.96 * se),
            num(b + 1.96 * se),
        ]);
    }
    out.figures.push(fig);
    let pre: Vec<String> =
        event_q.iter().filter(|q| cal.phase(**q) == Phase::PrePandemic).map(|q| event_name(*q)).collect();
    let post: Vec<String> =
        event_q.iter().filter(|q| cal.phase(**q) == Phase::PostLaunch).map(|q| event_name(*q)).collect();
    let mut tests = Table::new("joint_tests", &["test", "chi2", "df", "p_chi2"]);
    for (label, names) in [("pre_pandemic_quarters", &pre), ("post_launch_quarters", &post)] {
        if !names.is_empty() {
            let refs: Vec<&str> = names.iter().map(String::as_str).collect();
            let wt = wald_zero(&event, &refs)?;
            tests.push(vec![text(label), num(wt.chi2), wt.df.into(), num(wt.p_chi2)]);
        }
    }
    out.tables.push(tests);

    // Three-period variant against the interim period.
    let phase_cols: Vec<(String, Vec<f64>)> = [Phase::PrePandemic, Phase::Pandemic, Phase::PostLaunch]
        .iter()
        .filter(|ph| rows.iter().any(|r| cal.phase(r.quarter) == **ph))
        .map(|ph| {
            let v = rows.iter().map(|r| if cal.phase(r.quarter) == *ph { r.share } else { 0.0 }).collect();
            (format!("share_x_{}", ph.as_str()), v)
        })
        .collect();
    let three = wls_fe(&panel_design(&rows, phase_cols), &FitOptions::cluster())?;
    out.tables.push(super::coef_table("three_period", &three, &[]));
    let planted = p.planted.as_ref();
    for (name, term, truth) in [
        ("pre_pandemic_recovered", "share_x_pre_pandemic", planted.map(|e| e.vacancy_pre)),
        ("pandemic_recovered", "share_x_pandemic", planted.map(|e| e.vacancy_pandemic)),
        ("post_launch_recovered", "share_x_post_launch", planted.map(|e| e.vacancy_post)),
    ] {
        if let (Some(b), Some(se)) = (three.coef_of(term), three.se_of(term)) {
            out.expect_recovery(name, b, se, truth);
        }
    }

    // Interquartile effect across occupation-area cells.
    let mut cell_share: BTreeMap<&str, f64> = BTreeMap::new();
    for r in &rows {
        cell_share.insert(r.occ_area.as_str(), r.share);
    }
    let shares: Vec<f64> = cell_share.values().copied().collect();
    let iqr = weighted_quantile(&shares, None, 0.75)? - weighted_quantile(&shares, None, 0.25)?;
    let mut effects = Table::new("effects", &["measure", "value"]);
    effects.push(vec![text("share_iqr"), num(iqr)]);
    if let Some(b) = three.coef_of("share_x_post_launch") {
        effects.push(vec![text("post_launch_iqr_decline"), num(1.0 - (b * iqr).exp())]);
    }

    // Counterfactual: post-launch quarter effects replaced by the linear trend
    // through the pre-launch ones, evaluated in the last complete quarter.
    let trend_pts: Vec<(f64, f64)> = quarters
        .iter()
        .filter(|q| cal.phase(**q) != Phase::PostLaunch)
        .map(|q| {
            let b = if *q == cal.reference { 0.0 } else { event.coef_of(&event_name(*q)).expect("estimated") };
            (q.ordinal() as f64, b)
        })
        .collect();
    let mut months_in: BTreeMap<YearQuarter, std::collections::BTreeSet<(i32, u32)>> = BTreeMap::new();
    for r in &rows {
        months_in.entry(r.quarter).or_default().insert(r.month_key);
    }
    let last_full = months_in.iter().rev().find(|(_, m)| m.len() == 3).map(|(q, _)| *q);
    match (last_full, trend_pts.len() >= 2) {
        (Some(lq), true) if cal.phase(lq) == Phase::PostLaunch => {
            let n = trend_pts.len() as f64;
            let mx = trend_pts.iter().map(|t| t.0).sum::<f64>() / n;
            let my = trend_pts.iter().map(|t| t.1).sum::<f64>() / n;
            let sxy: f64 = trend_pts.iter().map(|t| (t.0 - mx) * (t.1 - my)).sum();
            let sxx: f64 = trend_pts.iter().map(|t| (t.0 - mx).powi(2)).sum();
            let slope = sxy / sxx;
            let trend = my + slope * (lq.ordinal() as f64 - mx);
            let b = event.coef_of(&event_name(lq)).expect("estimated");
            let (mut actual, mut counterfactual) = (0.0, 0.0);
            for (r, e) in rows.iter().zip(&event.residuals) {
                if r.quarter != lq {
                    continue;
                }
                let fitted = r.y - e;
                actual += fitted.exp() - 1.0;
                counterfactual += (fitted + (trend - b) * r.share).exp() - 1.0;
            }
            effects.push(vec![text("counterfactual_quarter"), text(lq.to_string())]);
            effects.push(vec![text("monthly_gap"), num((counterfactual - actual) / 3.0)]);
            effects.push(vec![text("relative_gap"), num((counterfactual - actual) / counterfactual)]);
        }
        _ => out.notes.push("no complete post-launch quarter; counterfactual gap not computed".into()),
    }
    out.tables.push(effects);
    out.notes.push(format!("n = {}, clusters = {}", event.n, event.n_clusters.unwrap_or(0)));
    Ok(out)
}
