use std::collections::BTreeMap;
use std::sync::OnceLock;

use gaisi::corpus::{generate_synthetic, Corpus, RivalIndices, SyntheticConfig};
use gaisi::stats::{weighted_sd, wls_fe, Design, FitOptions};
use gaisi::studies::{
    affordance_regression, bias_audit, convergent_validity, predictive_validity, robustness_matrix, run_study,
    shift_share_decompose, vacancy_event_study, write_study, Status, StudyError, StudyInputs, StudyParams, Table,
    STUDIES,
};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

fn corpus() -> &'static Corpus {
    static CORPUS: OnceLock<Corpus> = OnceLock::new();
    CORPUS.get_or_init(|| {
        let cfg = SyntheticConfig { seed: 21, occupations: 12, workers: 5000, areas: 6, ..SyntheticConfig::default() };
        generate_synthetic(&cfg).unwrap()
    })
}

fn planted() -> StudyParams {
    StudyParams { planted: Some(SyntheticConfig::default().effects), ..StudyParams::default() }
}

fn column(t: &Table, name: &str) -> usize {
    t.column_index(name).unwrap_or_else(|| panic!("{} has no column {name}", t.name))
}

fn rows_where<'a>(t: &'a Table, col: &str, v: &str) -> Vec<&'a Vec<Value>> {
    let c = column(t, col);
    t.rows.iter().filter(|r| r[c].as_str() == Some(v)).collect()
}

#[test]
fn every_study_runs_and_serialises() {
    let inputs = StudyInputs::new(corpus(), planted()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    for name in STUDIES {
        let r = run_study(name, &inputs).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(r.study, name);
        assert_eq!(r.inputs, inputs.digests);
        let files = write_study(&dir.path().join(name), &r).unwrap();
        assert!(files.contains(&"study_result.json".to_string()));
    }
}

#[test]
fn unknown_study_lists_the_available_ones() {
    let inputs = StudyInputs::new(corpus(), StudyParams::default()).unwrap();
    let err = run_study("horoscope", &inputs).unwrap_err();
    assert!(matches!(err, StudyError::UnknownStudy(_)));
    let msg = err.to_string();
    assert!(STUDIES.iter().all(|s| msg.contains(s)), "{msg}");
}

#[test]
fn bias_audit_flags_planted_leakage() {
    let clean = StudyInputs::new(corpus(), StudyParams::default()).unwrap();
    let r = bias_audit(&clean).unwrap();
    assert_eq!(r.expectation("no_material_gaps").unwrap().status, Status::Pass);

    let mut leaky = clean.clone();
    let female: BTreeMap<&str, bool> =
        corpus().jobs.iter().map(|j| (j.worker_id.as_str(), j.covariates.female == Some(true))).collect();
    let g: Vec<f64> = leaky.scores.scores.iter().map(|s| s.gaisi).collect();
    let sd = weighted_sd(&g, None).unwrap();
    for s in &mut leaky.scores.scores {
        if female[s.worker_id.as_str()] {
            s.gaisi += 0.05 * sd;
        }
    }
    let r = bias_audit(&leaky).unwrap();
    let e = r.expectation("no_material_gaps").unwrap();
    assert_eq!(e.status, Status::Fail);
    assert!(e.detail.contains("mean:female"), "{}", e.detail);
    let gaps = r.table("gaps").unwrap();
    let est = column(gaps, "estimate");
    let row = rows_where(gaps, "term", "female").into_iter().find(|r| r[0] == "mean").unwrap();
    let b = row[est].as_f64().unwrap();
    assert!((b / sd - 0.05).abs() < 0.02, "recovered {:.4} SD", b / sd);
}

#[test]
fn affordance_without_tags_is_intercept_only() {
    let mut c = corpus().clone();
    for r in &mut c.ratings {
        r.justification = "Rated.".into();
    }
    let inputs = StudyInputs::new(&c, StudyParams::default()).unwrap();
    let r = affordance_regression(&inputs).unwrap();
    let coef = r.table("coefficients").unwrap();
    assert_eq!(coef.rows.len(), 1);
    assert_eq!(coef.rows[0][0], "(intercept)");
    let y: Vec<f64> = c.ratings.iter().map(|r| r.distribution.gaisi(0.5)).collect();
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let got = coef.rows[0][column(coef, "estimate")].as_f64().unwrap();
    assert!((got - mean).abs() < 1e-12);
    assert_eq!(r.expectation("affordances_raise_rating").unwrap().status, Status::NotApplicable);
}

#[test]
fn shuffled_scores_do_not_predict_use() {
    let mut inputs = StudyInputs::new(corpus(), StudyParams::default()).unwrap();
    let real = predictive_validity(&inputs).unwrap();
    let auc_of = |t: &Table| rows_where(t, "measure", "gaisi")[0][column(t, "auc")].as_f64().unwrap();
    assert!(auc_of(real.table("auc").unwrap()) > 0.6);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut g: Vec<f64> = inputs.scores.scores.iter().map(|s| s.gaisi).collect();
    g.shuffle(&mut rng);
    for (s, v) in inputs.scores.scores.iter_mut().zip(g) {
        s.gaisi = v;
    }
    let r = predictive_validity(&inputs).unwrap();
    let a = auc_of(r.table("auc").unwrap());
    assert!((a - 0.5).abs() < 0.03, "auc {a}");
}

#[test]
fn monotone_rival_correlates_perfectly() {
    let base = StudyInputs::new(corpus(), StudyParams::default()).unwrap();
    let depth = corpus().cell_digits();
    let by: BTreeMap<&str, f64> = base.scores.scores.iter().map(|s| (s.worker_id.as_str(), s.gaisi)).collect();
    let mut acc: BTreeMap<String, (f64, f64)> = BTreeMap::new();
    for j in &corpus().jobs {
        if let Some(g) = by.get(j.worker_id.as_str()) {
            let e = acc.entry(j.occ_code.view(depth).unwrap().to_string()).or_default();
            e.0 += j.survey_weight;
            e.1 += j.survey_weight * g;
        }
    }
    let mut c = corpus().clone();
    c.rivals = Some(RivalIndices {
        names: vec!["shadow".into()],
        values: acc.iter().map(|(o, (w, wg))| (o.clone(), vec![Some((5.0 * wg / w).exp())])).collect(),
    });
    let inputs = StudyInputs::new(&c, StudyParams::default()).unwrap();
    let r = convergent_validity(&inputs).unwrap();
    let t = r.table("spearman").unwrap();
    let row = rows_where(t, "level", "occupation")[0];
    assert!((row[column(t, "rho")].as_f64().unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn identical_variant_agrees_perfectly() {
    let ratings = corpus().ratings.clone();
    let inputs = StudyInputs::new(corpus(), StudyParams::default())
        .unwrap()
        .with_variants(vec![("reference".into(), ratings.clone()), ("copy".into(), ratings)]);
    let r = robustness_matrix(&inputs).unwrap();
    let t = r.table("variants").unwrap();
    let row = rows_where(t, "variant", "copy")[0];
    assert_eq!(row[column(t, "rho")].as_f64(), Some(1.0));
    assert_eq!(row[column(t, "p_diff")].as_f64(), Some(1.0));
    assert_eq!(row[column(t, "auc_diff")].as_f64(), Some(0.0));
}

#[test]
fn mock_variants_separate_noise_from_randomness() {
    let inputs = StudyInputs::new(corpus(), StudyParams::default()).unwrap();
    let r = robustness_matrix(&inputs).unwrap();
    for name in ["noise_variant_agrees", "random_variant_fails"] {
        let e = r.expectation(name).unwrap();
        assert_eq!(e.status, Status::Pass, "{name}: {}", e.detail);
    }
}

#[test]
fn vacancy_reference_quarter_is_exactly_zero() {
    let inputs = StudyInputs::new(corpus(), planted()).unwrap();
    let r = vacancy_event_study(&inputs).unwrap();
    let fig = r.figure("event_study").unwrap();
    let row = rows_where(fig, "quarter", "2022Q3")[0];
    assert_eq!(row[column(fig, "estimate")].as_f64(), Some(0.0));
    assert_eq!(row[column(fig, "se")].as_f64(), Some(0.0));
    let three = r.table("three_period").unwrap();
    assert!(rows_where(three, "term", "share_x_interim").is_empty());
}

#[test]
fn shift_share_pieces_add_up() {
    let wave = |rows: &[(&str, f64, f64)]| -> BTreeMap<String, (f64, f64)> {
        rows.iter().map(|(g, s, m)| (g.to_string(), (*s, *m))).collect()
    };
    let w0 = wave(&[("a", 0.6, 0.2), ("b", 0.4, 0.6)]);
    let w1 = wave(&[("a", 0.3, 0.3), ("b", 0.5, 0.5), ("c", 0.2, 0.9)]);
    let s = shift_share_decompose(&w0, &w1);
    assert!((s.within + s.between - s.total).abs() < 1e-12);
    assert!((s.mean0 - (0.6 * 0.2 + 0.4 * 0.6)).abs() < 1e-12);
    assert!((s.mean1 - (0.3 * 0.3 + 0.5 * 0.5 + 0.2 * 0.9)).abs() < 1e-12);
    assert!((s.total - (s.mean1 - s.mean0)).abs() < 1e-12);
}

#[test]
fn recovery_checks_pass_on_planted_corpus() {
    let inputs = StudyInputs::new(corpus(), planted()).unwrap();
    for name in ["wage-premium", "vacancy", "coverage", "distribution", "shift-share"] {
        let r = run_study(name, &inputs).unwrap();
        for e in &r.expectations {
            assert_ne!(e.status, Status::Fail, "{name}/{}: {}", e.name, e.detail);
        }
    }
}

#[test]
fn results_are_deterministic() {
    let a = StudyInputs::new(corpus(), planted()).unwrap();
    let b = StudyInputs::new(corpus(), planted()).unwrap();
    for name in ["cv-omega", "robustness", "predictive"] {
        assert_eq!(run_study(name, &a).unwrap(), run_study(name, &b).unwrap(), "{name}");
    }
}

#[test]
fn study_params_reject_bad_values() {
    for p in [
        StudyParams { omega: 1.2, ..StudyParams::default() },
        StudyParams { high_percentile: 1.0, ..StudyParams::default() },
        StudyParams { folds: 1, ..StudyParams::default() },
        StudyParams { reference_quarter: "Q3 2022".into(), ..StudyParams::default() },
    ] {
        assert!(matches!(StudyInputs::new(corpus(), p), Err(StudyError::InvalidParameter(_))));
    }
}

#[test]
fn within_estimator_ignores_constant_shift_per_group() {
    // Sanity check on the kernel the studies lean on: adding a group constant changes nothing.
    let g: Vec<usize> = (0..60).map(|i| i % 4).collect();
    let x: Vec<f64> = (0..60).map(|i| (i as f64 * 0.37).sin()).collect();
    let y: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
    let shifted: Vec<f64> = y.iter().zip(&g).map(|(v, k)| v + *k as f64 * 10.0).collect();
    let fit = |y: Vec<f64>| {
        wls_fe(
            &Design::new(y).column("x", x.clone()).factor(gaisi::stats::Factor::from_keys("g", &g)),
            &FitOptions::default(),
        )
        .unwrap()
        .coef[0]
    };
    assert!((fit(y) - fit(shifted)).abs() < 1e-9);
}
