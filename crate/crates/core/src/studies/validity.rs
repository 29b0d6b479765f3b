//! Validity checks: prediction of reported AI use, agreement with rival
//! measures, justification content, the data-driven weight, rater robustness
//! and the demographic audit.

use std::collections::BTreeMap;

use crate::corpus::{RatingRecord, RivalIndices, Wave};
use crate::index::{average_runs, occupation_stats, score_jobs, GaisiScore};
use crate::rater::{tag_justification, MockRater};
use crate::stats::{
    ame, auc, auc_compare_paired, cv_omega, encode_keys, glm_binary, predictive_margin, quantile_reg, spearman,
    standardize, wald_zero, weighted_mean, weighted_quantile, weighted_sd, wls_fe, AdoptionData, CovType, Design,
    Factor, FitOptions, GlmOptions, QuantileOptions,
};

use super::sample::{add_varying, flag, occ_view, quintile_bins, Sample, DEMOGRAPHICS};
use super::{coef_table, num, opt, text, StudyError, StudyInputs, StudyResult, Table};

/// Later-wave workers with a reported AI-use answer.
fn adoption_sample<'a>(inputs: &'a StudyInputs<'a>) -> Sample<'a> {
    Sample::scored(inputs).filter(|j, _| j.wave == Wave::W2023 && j.outcomes.ai_use.is_some())
}

fn labels(sample: &Sample) -> Vec<bool> {
    sample.rows.iter().map(|(j, _)| j.outcomes.ai_use.expect("filtered")).collect()
}

fn rival_values(rivals: &RivalIndices, sample: &Sample, k: usize) -> Vec<Option<f64>> {
    sample.rows.iter().map(|(j, _)| rivals.lookup(&j.occ_code).and_then(|v| v[k])).collect()
}

pub fn predictive_validity(inputs: &StudyInputs) -> Result<StudyResult, StudyError> {
    let p = &inputs.params;
    let mut out = StudyResult::new("predictive", inputs);
    let base = adoption_sample(inputs).with_demographics();
    if base.len() < 50 {
        return Err(StudyError::MissingInput("later-wave workers with reported AI use".into()));
    }
    let logit = GlmOptions::logit().with_cov(CovType::Cluster);
    let mut ames = Table::new("ames", &["model", "variable", "estimate", "se", "p", "n"]);
    let push_ame = |t: &mut Table, model: &str, fit: &crate::stats::BinaryFit, var: &str| -> Result<f64, StudyError> {
        let a = ame(fit, var)?;
        t.push(vec![text(model), text(var), num(a.estimate), num(a.se), num(a.p), fit.fit.n.into()]);
        Ok(a.estimate)
    };
    let y: Vec<f64> = labels(&base).into_iter().map(flag).collect();
    let w = base.weights();
    let occ = base.occ(p.occupation_depth);
    let zg = standardize(&base.gaisi(), Some(&w))?;
    let simple = Design::new(y.clone()).column("z_gaisi", zg.clone()).weights(w.clone()).clusters(&occ);
    let m1 = glm_binary(&simple, &logit)?;
    let a1 = ame(&m1, "z_gaisi")?;
    push_ame(&mut ames, "(1)", &m1, "z_gaisi")?;
    out.expect(
        "index_predicts_use",
        a1.estimate > 0.0 && a1.p < 0.05,
        format!("AME {:.4}, p = {:.4}", a1.estimate, a1.p),
    );

    let mut dropped = Vec::new();
    let with_demo =
        add_varying(Design::new(y.clone()).column("z_gaisi", zg.clone()), base.demographic_columns(), &mut dropped)
            .weights(w.clone())
            .clusters(&occ);
    let m2 = glm_binary(&with_demo, &logit)?;
    push_ame(&mut ames, "(2)", &m2, "z_gaisi")?;

    // Rivals: listwise on every rival, each standardised on the common sample.
    if let Some(rivals) = &inputs.corpus.rivals {
        let vals: Vec<Vec<Option<f64>>> = (0..rivals.names.len()).map(|k| rival_values(rivals, &base, k)).collect();
        let keep: Vec<bool> = (0..base.len()).map(|i| vals.iter().all(|v| v[i].is_some())).collect();
        let sub = Sample { rows: base.rows.iter().zip(&keep).filter(|(_, k)| **k).map(|(r, _)| *r).collect() };
        out.notes.push(format!("rival models use {} of {} workers with every rival present", sub.len(), base.len()));
        if sub.len() >= 50 {
            let sw = sub.weights();
            let sy: Vec<f64> = labels(&sub).into_iter().map(flag).collect();
            let mut cols = vec![("z_gaisi".to_string(), standardize(&sub.gaisi(), Some(&sw))?)];
            for (k, name) in rivals.names.iter().enumerate() {
                let raw: Vec<f64> =
                    vals[k].iter().zip(&keep).filter(|(_, k)| **k).map(|(v, _)| v.expect("kept")).collect();
                match standardize(&raw, Some(&sw)) {
                    Ok(z) => cols.push((format!("z_{name}"), z)),
                    Err(_) => out.notes.push(format!("rival {name} is constant on the sample; omitted")),
                }
            }
            cols.extend(sub.demographic_columns());
            let mut dropped3 = Vec::new();
            let d3 =
                add_varying(Design::new(sy), cols, &mut dropped3).weights(sw).clusters(&sub.occ(p.occupation_depth));
            match glm_binary(&d3, &logit) {
                Ok(m3) => {
                    push_ame(&mut ames, "(3)", &m3, "z_gaisi")?;
                    for name in &rivals.names {
                        let var = format!("z_{name}");
                        if m3.fit.index_of(&var).is_some() {
                            push_ame(&mut ames, "(3)", &m3, &var)?;
                        }
                    }
                }
                Err(e) => out.notes.push(format!("model (3) not estimated: {e}")),
            }
        }
    }

    // Occupation-level variants: leave-one-out mean and plain occupation mean.
    let stats =
        occupation_stats(&inputs.scores.scores, &inputs.corpus.jobs, p.occupation_depth, p.min_n, p.high_percentile)?;
    let by_worker: BTreeMap<&str, &crate::index::WorkerOccupation> =
        stats.workers.iter().map(|w| (w.worker_id.as_str(), w)).collect();
    for (label, var, get) in [
        ("(4a)", "z_loo_mean", (|o: &crate::index::WorkerOccupation| o.loo_mean) as fn(&_) -> Option<f64>),
        ("(4b)", "z_occupation_mean", |o: &crate::index::WorkerOccupation| Some(o.occ_mean)),
    ] {
        let sub = base.filter(|j, _| by_worker.get(j.worker_id.as_str()).and_then(|o| get(o)).is_some());
        let sw = sub.weights();
        let x = sub.col(|j, _| get(by_worker[j.worker_id.as_str()]).expect("filtered"));
        let Ok(zx) = standardize(&x, Some(&sw)) else {
            out.notes.push(format!("model {label}: occupation means do not vary"));
            continue;
        };
        let mut dr = Vec::new();
        let d = add_varying(
            Design::new(labels(&sub).into_iter().map(flag).collect()).column(var, zx),
            sub.demographic_columns(),
            &mut dr,
        )
        .weights(sw)
        .clusters(&sub.occ(p.occupation_depth));
        match glm_binary(&d, &logit) {
            Ok(m) => {
                push_ame(&mut ames, label, &m, var)?;
            }
            Err(e) => out.notes.push(format!("model {label} not estimated: {e}")),
        }
    }
    out.tables.push(ames);

    // Discrimination.
    let lab = labels(&base);
    let g = base.gaisi();
    let mut aucs = Table::new("auc", &["measure", "auc", "se", "lower", "upper", "n_pos", "n_neg"]);
    let push_auc = |t: &mut Table, name: &str, s: &[f64], l: &[bool], w: &[f64]| -> Result<f64, StudyError> {
        let r = auc(s, l, Some(w))?;
        t.push(vec![
            text(name),
            num(r.auc),
            num(r.se),
            num(r.auc - 1.96 * r.se),
            num(r.auc + 1.96 * r.se),
            r.n_pos.into(),
            r.n_neg.into(),
        ]);
        Ok(r.auc)
    };
    let a_g = push_auc(&mut aucs, "gaisi", &g, &lab, &w)?;
    push_auc(&mut aucs, "e1", &base.col(|_, s| s.e1), &lab, &w)?;
    push_auc(&mut aucs, "e2e3", &base.col(|_, s| s.e2e3), &lab, &w)?;
    let exp_g: Vec<f64> = g.iter().map(|v| v.exp()).collect();
    let a_exp = auc(&exp_g, &lab, Some(&w))?.auc;
    out.expect("auc_rank_invariant", (a_exp - a_g).abs() < 1e-12, format!("AUC {a_g:.6} vs {a_exp:.6} after exp()"));
    let mut cmp = Table::new("auc_comparisons", &["measure", "auc_gaisi", "auc_other", "diff", "se", "p", "n"]);
    if let Some(rivals) = &inputs.corpus.rivals {
        for (k, name) in rivals.names.iter().enumerate() {
            let v = rival_values(rivals, &base, k);
            let idx: Vec<usize> = (0..base.len()).filter(|i| v[*i].is_some()).collect();
            let a: Vec<f64> = idx.iter().map(|&i| g[i]).collect();
            let b: Vec<f64> = idx.iter().map(|&i| v[i].expect("filtered")).collect();
            let l: Vec<bool> = idx.iter().map(|&i| lab[i]).collect();
            let ww: Vec<f64> = idx.iter().map(|&i| w[i]).collect();
            if !(l.iter().any(|x| *x) && l.iter().any(|x| !*x)) {
                continue;
            }
            push_auc(&mut aucs, name, &b, &l, &ww)?;
            let c = auc_compare_paired(&a, &b, &l, Some(&ww))?;
            cmp.push(vec![text(name), num(c.auc_a), num(c.auc_b), num(c.diff), num(c.se), num(c.p), idx.len().into()]);
        }
    }
    out.tables.push(aucs);
    out.tables.push(cmp);

    // Probit on weighted quintiles with predictive margins.
    let bins = quintile_bins(&g, &w)?;
    let qcols: Vec<(String, Vec<f64>)> =
        (1..5).map(|q| (format!("quintile_{}", q + 1), bins.iter().map(|b| flag(*b == q)).collect())).collect();
    let mut cols = qcols;
    cols.extend(base.demographic_columns());
    let mut dq = Vec::new();
    let dprobit = add_varying(Design::new(y), cols, &mut dq).weights(w.clone()).clusters(&occ);
    match glm_binary(&dprobit, &GlmOptions::probit().with_cov(CovType::Cluster)) {
        Ok(fit) => {
            let present: Vec<usize> =
                (1..5).filter(|q| fit.fit.index_of(&format!("quintile_{}", q + 1)).is_some()).collect();
            let mut margins = Table::new("quintile_margins", &["quintile", "probability", "se"]);
            for q in 0..5 {
                if q > 0 && !present.contains(&q) {
                    continue;
                }
                let names: Vec<String> = present.iter().map(|k| format!("quintile_{}", k + 1)).collect();
                let at: Vec<(&str, f64)> =
                    names.iter().zip(&present).map(|(n, k)| (n.as_str(), flag(*k == q))).collect();
                let m = predictive_margin(&fit, &at)?;
                margins.push(vec![text(format!("Q{}", q + 1)), num(m.estimate), num(m.se)]);
            }
            out.figures.push(margins);
        }
        Err(e) => out.notes.push(format!("quintile probit not estimated: {e}")),
    }
    if !dropped.is_empty() {
        out.notes.push(format!("constant columns dropped: {}", dropped.join(", ")));
    }
    Ok(out)
}

pub fn convergent_validity(inputs: &StudyInputs) -> Result<StudyResult, StudyError> {
    let mut out = StudyResult::new("convergent", inputs);
    let rivals = inputs.corpus.rivals.as_ref().ok_or_else(|| StudyError::MissingInput("rival indices".into()))?;
    let sample = Sample::scored(inputs);
    let depth = inputs.corpus.cell_digits();
    // Occupation means at the rated depth.
    let mut acc: BTreeMap<String, (f64, f64, crate::corpus::OccCode)> = BTreeMap::new();
    for (j, s) in &sample.rows {
        let e = acc.entry(occ_view(&j.occ_code, depth).to_string()).or_insert((0.0, 0.0, j.occ_code.clone()));
        e.0 += j.survey_weight;
        e.1 += j.survey_weight * s.gaisi;
    }
    let mut corr = Table::new("spearman", &["level", "measure", "rho", "p", "n"]);
    for (k, name) in rivals.names.iter().enumerate() {
        let (mut a, mut b) = (Vec::new(), Vec::new());
        for (w, wg, code) in acc.values() {
            if let Some(v) = rivals.lookup(code).and_then(|r| r[k]) {
                a.push(wg / w);
                b.push(v);
            }
        }
        if a.len() >= 3 {
            let c = spearman(&a, &b)?;
            corr.push(vec![text("occupation"), text(name.clone()), num(c.rho), num(c.p), c.n.into()]);
        }
        let vals = rival_values(rivals, &sample, k);
        let (wa, wb): (Vec<f64>, Vec<f64>) =
            sample.rows.iter().zip(&vals).filter_map(|((_, s), v)| v.map(|v| (s.gaisi, v))).unzip();
        if wa.len() >= 3 {
            let c = spearman(&wa, &wb)?;
            corr.push(vec![text("worker"), text(name.clone()), num(c.rho), num(c.p), c.n.into()]);
        }
    }
    out.tables.push(corr);

    // Joint regression of the standardised index on standardised rivals.
    let vals: Vec<Vec<Option<f64>>> = (0..rivals.names.len()).map(|k| rival_values(rivals, &sample, k)).collect();
    let keep: Vec<bool> = (0..sample.len()).map(|i| vals.iter().all(|v| v[i].is_some())).collect();
    let sub = Sample { rows: sample.rows.iter().zip(&keep).filter(|(_, k)| **k).map(|(r, _)| *r).collect() };
    if sub.len() > rivals.names.len() + 2 {
        let w = sub.weights();
        let mut d = Design::new(standardize(&sub.gaisi(), Some(&w))?);
        for (k, name) in rivals.names.iter().enumerate() {
            let raw: Vec<f64> = vals[k].iter().zip(&keep).filter(|(_, k)| **k).map(|(v, _)| v.expect("kept")).collect();
            if let Ok(z) = standardize(&raw, Some(&w)) {
                d = d.column(format!("z_{name}"), z);
            }
        }
        let d = d.weights(w).clusters(&sub.occ(depth));
        match wls_fe(&d, &FitOptions::cluster()) {
            Ok(fit) => out.tables.push(coef_table("joint_regression", &fit, &[])),
            Err(e) => out.notes.push(format!("joint regression not estimated: {e}")),
        }
    }
    Ok(out)
}

pub fn affordance_regression(inputs: &StudyInputs) -> Result<StudyResult, StudyError> {
    let p = &inputs.params;
    let mut out = StudyResult::new("affordance", inputs);
    let ratings = &inputs.corpus.ratings;
    let tags: Vec<_> = ratings.iter().map(|r| tag_justification(&r.justification)).collect();
    let y: Vec<f64> = ratings.iter().map(|r| r.distribution.gaisi(p.omega)).collect();
    let count: Vec<f64> = tags.iter().map(|t| t.affordance_count() as f64).collect();
    let cue_names = ["integration", "human_constraint", "limited_contribution", "uncertainty", "contrast"];
    let mut cols = vec![
        ("affordance_count".to_string(), count.clone()),
        ("affordance_count_sq".to_string(), count.iter().map(|c| c * c).collect()),
    ];
    for (k, name) in cue_names.iter().enumerate() {
        cols.push((name.to_string(), tags.iter().map(|t| flag(t.cues()[k])).collect()));
    }
    let mut dropped = Vec::new();
    let d = add_varying(Design::new(y), cols, &mut dropped);
    if !dropped.is_empty() {
        out.notes.push(format!("tags that never vary dropped: {}", dropped.join(", ")));
    }
    let fit = wls_fe(&d, &FitOptions::hc1())?;
    out.tables.push(coef_table("coefficients", &fit, &[]));
    let mut freq = Table::new("tag_frequency", &["tag", "share"]);
    let n = ratings.len() as f64;
    for k in 0..=5 {
        freq.push(vec![
            text(format!("affordances_{k}")),
            num(count.iter().filter(|c| **c == k as f64).count() as f64 / n),
        ]);
    }
    for (k, name) in cue_names.iter().enumerate() {
        freq.push(vec![text(*name), num(tags.iter().filter(|t| t.cues()[k]).count() as f64 / n)]);
    }
    out.tables.push(freq);
    match (fit.coef_of("affordance_count"), fit.p_of("affordance_count")) {
        (Some(b), Some(pv)) => {
            // Net slope at the mean count includes the quadratic term.
            let mean_c = count.iter().sum::<f64>() / n;
            let slope = b + 2.0 * fit.coef_of("affordance_count_sq").unwrap_or(0.0) * mean_c;
            out.expect(
                "affordances_raise_rating",
                slope > 0.0,
                format!("linear term {b:.4} (p = {pv:.4}); slope at mean count {slope:.4}"),
            );
        }
        _ => out.not_applicable("affordances_raise_rating", "no affordance variation"),
    }
    Ok(out)
}

pub fn cv_omega_study(inputs: &StudyInputs) -> Result<StudyResult, StudyError> {
    let p = &inputs.params;
    let mut out = StudyResult::new("cv-omega", inputs);
    let sample = adoption_sample(inputs).filter(|j, _| {
        let c = &j.covariates;
        c.female.is_some() && c.age.is_some() && c.education.is_some()
    });
    if sample.len() < 10 * p.folds {
        return Err(StudyError::MissingInput("later-wave workers with reported AI use".into()));
    }
    let edu = |j: &crate::corpus::JobRecord, k: u8| flag(j.covariates.education == Some(k));
    let mut controls = vec![
        ("female".to_string(), sample.col(|j, _| flag(j.covariates.female == Some(true)))),
        ("age".to_string(), sample.col(|j, _| j.covariates.age.expect("filtered"))),
        ("edu_gcse".to_string(), sample.col(|j, _| edu(j, 1))),
        ("edu_alevel".to_string(), sample.col(|j, _| edu(j, 2))),
        ("edu_degree".to_string(), sample.col(|j, _| edu(j, 3))),
    ];
    controls.retain(|(_, v)| v.iter().any(|x| *x != v[0]));
    let (clusters, _) = encode_keys(&sample.occ(p.occupation_depth));
    let data = AdoptionData {
        e1: sample.col(|_, s| s.e1),
        e2e3: sample.col(|_, s| s.e2e3),
        ai_use: labels(&sample),
        controls,
        weights: Some(sample.weights()),
        clusters: Some(clusters),
    };
    let r = cv_omega(&data, p.folds, p.seed)?;
    let mut t = Table::new(
        "folds",
        &["fold", "n_train", "n_test", "beta1", "beta2", "w2", "w2_se", "auc_derived", "auc_canonical", "auc_diff_p"],
    );
    for f in &r.folds {
        t.push(vec![
            f.fold.into(),
            f.n_train.into(),
            f.n_test.into(),
            num(f.beta1),
            num(f.beta2),
            opt(f.w2),
            opt(f.w2_se),
            opt(f.auc_derived),
            num(f.auc_canonical),
            opt(f.auc_diff_p),
        ]);
    }
    out.tables.push(t);
    let mut s = Table::new("summary", &["measure", "value"]);
    s.push(vec![text("folds_defined"), r.n_defined.into()]);
    s.push(vec![text("mean_w2"), opt(r.mean_w2)]);
    s.push(vec![text("sd_w2"), opt(r.sd_w2)]);
    s.push(vec![text("mean_auc_derived"), opt(r.mean_auc_derived)]);
    s.push(vec![text("mean_auc_canonical"), num(r.mean_auc_canonical)]);
    out.tables.push(s);
    if r.n_defined < r.folds.len() {
        out.notes.push(format!(
            "{} folds had a non-positive E1 coefficient; ratio undefined there",
            r.folds.len() - r.n_defined
        ));
    }
    match (p.planted.as_ref(), r.mean_w2) {
        (Some(e), Some(m)) => {
            let target = e.adoption_b2 / e.adoption_b1;
            out.expect(
                "weight_recovered",
                (m - target).abs() <= 0.1,
                format!("mean w2 {m:.4} vs planted ratio {target:.4}"),
            );
        }
        (Some(_), None) => out.expect("weight_recovered", false, "no fold gave a defined ratio"),
        (None, _) => out.not_applicable("weight_recovered", "no planted ratio"),
    }
    Ok(out)
}

/// Offline rating variants for the robustness matrix: the reference ratings,
/// a re-rating around the reference cell means with extra noise, and a rater
/// that ignores the reference entirely.
pub fn mock_variants(inputs: &StudyInputs) -> Vec<(String, Vec<RatingRecord>)> {
    let p = &inputs.params;
    let truth = inputs.cells.iter().map(|(k, c)| (k.clone(), c.distribution)).collect();
    let noisy = MockRater::new(p.seed.wrapping_add(1), p.robustness_noise).with_truth(truth);
    let random = MockRater::new(p.seed.wrapping_add(2), p.robustness_noise);
    let rerate = |rater: &MockRater, model: &str| -> Vec<RatingRecord> {
        inputs
            .corpus
            .ratings
            .iter()
            .map(|r| {
                let (d, j) = rater.rate(&r.occ_code, &r.task_id, r.run_index);
                RatingRecord { distribution: d, justification: j, model_id: model.to_string(), ..r.clone() }
            })
            .collect()
    };
    vec![
        ("reference".to_string(), inputs.corpus.ratings.clone()),
        ("mock-noise".to_string(), rerate(&noisy, "mock-noise")),
        ("mock-random".to_string(), rerate(&random, "mock-random")),
    ]
}

pub fn robustness_matrix(inputs: &StudyInputs) -> Result<StudyResult, StudyError> {
    let p = &inputs.params;
    let mut out = StudyResult::new("robustness", inputs);
    let variants = if inputs.variants.is_empty() {
        out.notes.push("no rating variants supplied; using the offline mock variants".into());
        mock_variants(inputs)
    } else {
        inputs.variants.clone()
    };
    let reference = inputs.scores.by_worker();
    let adopt = adoption_sample(inputs);
    let lab = labels(&adopt);
    let aw = adopt.weights();
    let ref_scores = adopt.gaisi();
    // Worker scores inherit their variation from the rated occupations, so an
    // unrelated rater's rank correlation has sampling spread of about 1/sqrt(G - 1).
    let occupations: std::collections::BTreeSet<&str> = inputs.cells.iter().map(|((o, _), _)| o.as_str()).collect();
    let null_band = 2.576 / ((occupations.len().max(2) - 1) as f64).sqrt();
    let mut t = Table::new(
        "variants",
        &[
            "variant",
            "n",
            "mean",
            "sd",
            "p10",
            "p50",
            "p90",
            "rho",
            "auc",
            "auc_lower",
            "auc_upper",
            "auc_diff",
            "p_diff",
        ],
    );
    for (name, records) in &variants {
        let cells = average_runs(records)?;
        let scores = score_jobs(&inputs.corpus.jobs, &cells, p.missing_policy, p.omega)?;
        let by: BTreeMap<&str, &GaisiScore> = scores.by_worker();
        let weights: BTreeMap<&str, f64> =
            inputs.corpus.jobs.iter().map(|j| (j.worker_id.as_str(), j.survey_weight)).collect();
        let (mut a, mut b, mut w) = (Vec::new(), Vec::new(), Vec::new());
        for (id, s) in &by {
            if let Some(r) = reference.get(id) {
                a.push(r.gaisi);
                b.push(s.gaisi);
                w.push(weights[id]);
            }
        }
        if a.len() < 3 {
            out.notes.push(format!("variant {name}: fewer than three workers in common; skipped"));
            continue;
        }
        let rho = spearman(&a, &b)?.rho;
        let q = |x: f64| weighted_quantile(&b, Some(&w), x);
        let vs: Option<Vec<f64>> =
            adopt.rows.iter().map(|(j, _)| by.get(j.worker_id.as_str()).map(|s| s.gaisi)).collect();
        let (auc_v, cmp) = match vs {
            Some(v) if !adopt.is_empty() => {
                let r = auc(&v, &lab, Some(&aw))?;
                (Some(r), Some(auc_compare_paired(&v, &ref_scores, &lab, Some(&aw))?))
            }
            _ => (None, None),
        };
        t.push(vec![
            text(name.clone()),
            a.len().into(),
            num(weighted_mean(&b, Some(&w))?),
            num(weighted_sd(&b, Some(&w))?),
            num(q(0.1)?),
            num(q(0.5)?),
            num(q(0.9)?),
            num(rho),
            opt(auc_v.map(|r| r.auc)),
            opt(auc_v.map(|r| r.auc - 1.96 * r.se)),
            opt(auc_v.map(|r| r.auc + 1.96 * r.se)),
            opt(cmp.map(|c| c.diff)),
            opt(cmp.map(|c| c.p)),
        ]);
        match (name.as_str(), cmp) {
            ("mock-noise", Some(c)) => out.expect(
                "noise_variant_agrees",
                rho > 0.95 && c.p > 0.05,
                format!("rho {rho:.4}, AUC difference {:.4} (p = {:.4})", c.diff, c.p),
            ),
            ("mock-random", Some(c)) => out.expect(
                "random_variant_fails",
                rho.abs() < null_band && c.diff < 0.0 && c.p < 0.05,
                format!(
                    "rho {rho:.4} (null band {null_band:.3} over {} occupations), AUC difference {:.4} (p = {:.4})",
                    occupations.len(),
                    c.diff,
                    c.p
                ),
            ),
            _ => {}
        }
    }
    out.tables.push(t);
    Ok(out)
}

pub fn bias_audit(inputs: &StudyInputs) -> Result<StudyResult, StudyError> {
    let p = &inputs.params;
    let mut out = StudyResult::new("bias-audit", inputs);
    let sample = Sample::scored(inputs).with_demographics();
    if sample.len() < 50 {
        return Err(StudyError::MissingInput("workers with complete demographics".into()));
    }
    let w = sample.weights();
    let g = sample.gaisi();
    let depth = inputs.corpus.cell_digits();
    let occ = sample.occ(depth);

    // Residualise on occupation and reported task importance.
    let task_ids: Vec<&str> = inputs.corpus.tasks.iter().map(|t| t.task_id.as_str()).collect();
    let mut cols = Vec::new();
    for t in &task_ids {
        let imp = sample.col(|j, _| j.importance.get(*t).map_or(0.0, |i| i.weight()));
        cols.push((format!("imp_{t}"), imp));
        let missing = sample.col(|j, _| flag(!j.importance.contains_key(*t)));
        if missing.iter().any(|m| *m > 0.0) {
            cols.push((format!("na_{t}"), missing));
        }
    }
    // Tasks skipped together give identical indicators; keep the first of each pattern.
    let mut seen: Vec<Vec<f64>> = Vec::new();
    cols.retain(|(n, v)| {
        if !n.starts_with("na_") {
            return true;
        }
        if seen.contains(v) {
            return false;
        }
        seen.push(v.clone());
        true
    });
    let mut dropped = Vec::new();
    let first = add_varying(Design::new(g.clone()), cols, &mut dropped)
        .weights(w.clone())
        .factor(Factor::from_keys("occupation", &occ));
    let stage1 = wls_fe(&first, &FitOptions::default())?;
    let resid = stage1.residuals.clone();
    out.notes.push(format!(
        "first stage: {} importance columns, within R2 {:.4}",
        stage1.names.len(),
        stage1.within_r2.unwrap_or(f64::NAN)
    ));

    let threshold = p.bias_threshold_sd * weighted_sd(&g, Some(&w))?;
    let demo = sample.demographic_columns();
    let mut dd = Vec::new();
    let second = add_varying(Design::new(resid), demo, &mut dd).weights(w).clusters(&occ);
    let mut table = Table::new("gaps", &["estimator", "term", "estimate", "se", "p", "flagged"]);
    let mut tests = Table::new("joint_tests", &["estimator", "chi2", "df", "p_chi2"]);
    let mut flagged = Vec::new();
    let mean = wls_fe(&second, &FitOptions::cluster())?;
    let q20 = quantile_reg(&second, &QuantileOptions::new(0.2).with_cov(CovType::Cluster))?;
    let q80 = quantile_reg(&second, &QuantileOptions::new(0.8).with_cov(CovType::Cluster))?;
    for (label, fit) in [("mean", &mean), ("q20", &q20), ("q80", &q80)] {
        let terms: Vec<&str> = DEMOGRAPHICS.iter().copied().filter(|t| fit.index_of(t).is_some()).collect();
        for term in &terms {
            let i = fit.index_of(term).expect("present");
            // Age terms are flagged on the change from 40 to 50 rather than per unit.
            let scale = match *term {
                "age" => 10.0,
                "age_sq" => 9.0,
                _ => 1.0,
            };
            let hit = (fit.coef[i] * scale).abs() > threshold;
            if hit {
                flagged.push(format!("{label}:{term}"));
            }
            table.push(vec![text(label), text(*term), num(fit.coef[i]), num(fit.se[i]), num(fit.p[i]), hit.into()]);
        }
        if !terms.is_empty() {
            let wt = wald_zero(fit, &terms)?;
            tests.push(vec![text(label), num(wt.chi2), wt.df.into(), num(wt.p_chi2)]);
        }
    }
    out.tables.push(table);
    out.tables.push(tests);
    out.expect(
        "no_material_gaps",
        flagged.is_empty(),
        if flagged.is_empty() {
            format!("no coefficient exceeds {threshold:.5}")
        } else {
            format!("above {threshold:.5}: {}", flagged.join(", "))
        },
    );
    Ok(out)
}
