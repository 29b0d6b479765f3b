use std::collections::BTreeMap;

use gaisi::corpus::{Covariates, ExposureDistribution, Importance, JobRecord, OccCode, Outcomes, Wave};
use gaisi::index::{aggregate_worker, score_jobs, CellExposure, CellTable, IndexError, MissingPolicy};
use proptest::prelude::*;

fn job(id: &str, occ: &str, importance: &[(&str, Importance)]) -> JobRecord {
    JobRecord {
        worker_id: id.into(),
        wave: Wave::W2023,
        occ_code: OccCode::new(occ).unwrap(),
        survey_weight: 1.0,
        covariates: Covariates::default(),
        outcomes: Outcomes::default(),
        importance: importance.iter().map(|(t, i)| (t.to_string(), *i)).collect(),
    }
}

fn table(cells: &[(&str, &str, [f64; 4])]) -> CellTable {
    CellTable {
        cells: cells
            .iter()
            .map(|(o, t, p)| {
                (
                    (o.to_string(), t.to_string()),
                    CellExposure { distribution: ExposureDistribution::new(*p).unwrap(), run_count: 5 },
                )
            })
            .collect(),
    }
}

/// Straight transcription of the weighted-share definition, one level at a time.
fn naive(job: &JobRecord, cells: &CellTable, occ: &str) -> Option<[f64; 4]> {
    let mut out = [0.0; 4];
    for (level, slot) in out.iter_mut().enumerate() {
        let mut num = 0.0;
        let mut den = 0.0;
        for (task, imp) in &job.importance {
            if let Some(c) = cells.get(occ, task) {
                num += imp.weight() * c.distribution.probs()[level];
                den += imp.weight();
            }
        }
        if den == 0.0 {
            return None;
        }
        *slot = num / den;
    }
    Some(out)
}

#[test]
fn two_component_means_combine_at_half_weight() {
    let cells = table(&[("11", "t1", [0.47, 0.26, 0.27, 0.0])]);
    let s = aggregate_worker(&job("w", "11", &[("t1", Importance::Essential)]), &cells, MissingPolicy::Exclude, 0.5)
        .unwrap();
    assert!((s.gaisi - 0.395).abs() < 1e-12);
    assert!((s.gaisi - 0.40).abs() <= 0.01);
}

#[test]
fn zero_importance_everywhere_is_undefined() {
    let cells = table(&[("11", "t1", [0.25; 4])]);
    let err = aggregate_worker(&job("w", "11", &[("t1", Importance::NotAtAll)]), &cells, MissingPolicy::Exclude, 0.5)
        .unwrap_err();
    assert!(matches!(err, IndexError::UndefinedExposure { .. }));
}

#[test]
fn strict_policy_fails_on_missing_cell_exclude_skips_it() {
    let cells = table(&[("11", "t1", [0.1, 0.2, 0.3, 0.4])]);
    let j = job("w", "11", &[("t1", Importance::Fairly), ("t2", Importance::Very)]);
    let s = aggregate_worker(&j, &cells, MissingPolicy::Exclude, 0.5).unwrap();
    assert_eq!(s.e1, 0.2);
    assert!(matches!(aggregate_worker(&j, &cells, MissingPolicy::Strict, 0.5), Err(IndexError::MissingCell { .. })));
}

#[test]
fn omega_outside_unit_interval_rejected() {
    let cells = table(&[("11", "t1", [0.25; 4])]);
    let j = job("w", "11", &[("t1", Importance::Fairly)]);
    assert!(aggregate_worker(&j, &cells, MissingPolicy::Exclude, 1.01).is_err());
    assert!(score_jobs(&[j], &cells, MissingPolicy::Exclude, -0.1).is_err());
}

#[test]
fn finer_worker_codes_use_cell_depth() {
    let cells = table(&[("11", "t1", [0.0, 1.0, 0.0, 0.0])]);
    let s =
        aggregate_worker(&job("w", "1123", &[("t1", Importance::Very)]), &cells, MissingPolicy::Exclude, 0.5).unwrap();
    assert_eq!(s.gaisi, 1.0);
}

fn dist() -> impl Strategy<Value = [f64; 4]> {
    prop::array::uniform4(0.0f64..1.0).prop_filter("positive mass", |m| m.iter().sum::<f64>() > 1e-3).prop_map(|m| {
        let s: f64 = m.iter().sum();
        m.map(|v| v / s)
    })
}

fn importance() -> impl Strategy<Value = Option<Importance>> {
    prop_oneof![Just(None), (0usize..5).prop_map(|i| Some(Importance::GRID[i]))]
}

proptest! {
    #[test]
    fn matches_naive_loop(
        cells in prop::collection::vec(dist(), 1..=10),
        workers in prop::collection::vec(prop::collection::vec(importance(), 10), 1..=10),
        omega in 0.0f64..=1.0,
    ) {
        let ids: Vec<String> = (0..cells.len()).map(|t| format!("t{t}")).collect();
        let table = CellTable {
            cells: cells.iter().enumerate().map(|(t, p)| {
                ((String::from("21"), ids[t].clone()), CellExposure {
                    distribution: ExposureDistribution::new(*p).unwrap(),
                    run_count: 1,
                })
            }).collect(),
        };
        for (w, imps) in workers.iter().enumerate() {
            let mut importance = BTreeMap::new();
            for (t, imp) in imps.iter().enumerate() {
                if let Some(i) = imp {
                    // Tasks past the rated ones exercise the missing-cell path.
                    importance.insert(format!("t{t}"), *i);
                }
            }
            let j = JobRecord { importance, ..job(&format!("w{w}"), "21", &[]) };
            let got = aggregate_worker(&j, &table, MissingPolicy::Exclude, omega);
            match naive(&j, &table, "21") {
                None => prop_assert!(got.is_err()),
                Some(e) => {
                    let s = got.unwrap();
                    for (a, b) in [s.e0, s.e1, s.e2, s.e3].iter().zip(e) {
                        prop_assert!((a - b).abs() < 1e-12);
                    }
                    prop_assert!((s.gaisi - (e[1] + omega * (e[2] + e[3]))).abs() < 1e-12);
                    prop_assert!((s.e0 + s.e1 + s.e2e3 - 1.0).abs() < 1e-6);
                    prop_assert!(s.gaisi >= -1e-12 && s.gaisi <= 1.0 + 1e-12);
                }
            }
        }
    }

    #[test]
    fn index_is_monotone_in_omega(p in dist(), a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
        let d = ExposureDistribution::new(p).unwrap();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(d.gaisi(lo) <= d.gaisi(hi) + 1e-15);
    }
}
