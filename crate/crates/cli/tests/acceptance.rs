//! Acceptance suite: one PASS/FAIL line per criterion, each with its tolerance
//! and a wall-clock limit. Run with `cargo test --test acceptance`.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use gaisi::corpus::{
    generate_synthetic, Corpus, Covariates, ExposureDistribution, Importance, JobRecord, OccCode, OccupationVignette,
    Outcomes, PlantedEffects, SyntheticConfig, TaskItem, Wave,
};
use gaisi::index::{aggregate_worker, CellExposure, CellTable, MissingPolicy};
use gaisi::rater::{rate_corpus, BackendConfig, MockBackend, MockRater, PromptSpec};
use gaisi::reliability::{icc_absolute, reliability_report};
use gaisi::stats::{
    auc, auc_compare_paired, check_loss, glm_binary, quantile_reg, weighted_quantile, wls_fe, Design, Factor,
    FitOptions, GlmOptions, QuantileOptions,
};
use gaisi::studies::{run_study, Status, StudyInputs, StudyParams, StudyResult, Table};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn run(id: u32, title: &str, limit: Duration, f: impl FnOnce() -> Check) -> bool {
    let t = Instant::now();
    let result = f();
    let took = t.elapsed();
    let in_time = took <= limit;
    let (pass, detail) = match result {
        Ok(d) if in_time => (true, d),
        Ok(d) => (false, format!("{d}; over the time limit")),
        Err(e) => (false, e),
    };
    println!(
        "{} {id}. {title} [{:.2} s, limit {} s] {detail}",
        if pass { "PASS" } else { "FAIL" },
        took.as_secs_f64(),
        limit.as_secs()
    );
    pass
}

// 1. Aggregation.

fn random_dist(rng: &mut ChaCha8Rng) -> [f64; 4] {
    let m: [f64; 4] = std::array::from_fn(|_| rng.random::<f64>() + 1e-3);
    let s: f64 = m.iter().sum();
    m.map(|v| v / s)
}

fn bare_job(id: String, occ: &str, importance: BTreeMap<String, Importance>) -> JobRecord {
    JobRecord {
        worker_id: id,
        wave: Wave::W2023,
        occ_code: OccCode::new(occ).unwrap(),
        survey_weight: 1.0,
        covariates: Covariates::default(),
        outcomes: Outcomes::default(),
        importance,
    }
}

fn aggregation() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    let mut worst_sum = 0.0f64;
    let mut workers = 0;
    for _ in 0..1000 {
        let n_tasks = rng.random_range(1..=10);
        let n_workers = rng.random_range(1..=10);
        let omega = rng.random::<f64>();
        let dists: Vec<[f64; 4]> = (0..n_tasks).map(|_| random_dist(&mut rng)).collect();
        let cells = CellTable {
            cells: dists
                .iter()
                .enumerate()
                .map(|(t, p)| {
                    (
                        (String::from("31"), format!("t{t}")),
                        CellExposure { distribution: ExposureDistribution::new(*p).unwrap(), run_count: 5 },
                    )
                })
                .collect(),
        };
        for w in 0..n_workers {
            let mut imp = BTreeMap::new();
            for t in 0..n_tasks {
                if rng.random::<f64>() < 0.8 {
                    imp.insert(format!("t{t}"), Importance::GRID[rng.random_range(0..5)]);
                }
            }
            // Naive loop over the definition.
            let (mut num, mut den) = ([0.0; 4], 0.0);
            for (t, i) in &imp {
                let k: usize = t[1..].parse().unwrap();
                for l in 0..4 {
                    num[l] += i.weight() * dists[k][l];
                }
                den += i.weight();
            }
            let got = aggregate_worker(&bare_job(format!("w{w}"), "31", imp), &cells, MissingPolicy::Exclude, omega);
            if den == 0.0 {
                ensure(got.is_err(), "zero-weight worker was scored")?;
                continue;
            }
            let s = got.map_err(|e| e.to_string())?;
            let e = num.map(|v| v / den);
            let want = e[1] + omega * (e[2] + e[3]);
            for (a, b) in [s.e0, s.e1, s.e2, s.e3, s.gaisi].iter().zip([e[0], e[1], e[2], e[3], want]) {
                worst = worst.max((a - b).abs());
            }
            worst_sum = worst_sum.max((s.e0 + s.e1 + s.e2e3 - 1.0).abs());
            workers += 1;
        }
    }
    ensure(worst <= 1e-12, format!("max deviation {worst:e} > 1e-12"))?;
    ensure(worst_sum <= 1e-6, format!("component sum off by {worst_sum:e}"))?;
    Ok(format!("{workers} workers, max |diff| {worst:.1e} (tol 1e-12), max |sum-1| {worst_sum:.1e} (tol 1e-6)"))
}

// 2. Component means combined at half weight.

fn half_weight() -> Check {
    let cells = CellTable {
        cells: [(
            ("31".to_string(), "t".to_string()),
            CellExposure { distribution: ExposureDistribution::new([0.47, 0.26, 0.27, 0.0]).unwrap(), run_count: 1 },
        )]
        .into(),
    };
    let job = bare_job("w".into(), "31", [("t".to_string(), Importance::Essential)].into());
    let s = aggregate_worker(&job, &cells, MissingPolicy::Exclude, 0.5).map_err(|e| e.to_string())?;
    ensure((s.gaisi - 0.395).abs() < 1e-12, format!("index {}", s.gaisi))?;
    ensure((s.gaisi - 0.40).abs() <= 0.01, format!("index {} not within 0.01 of 0.40", s.gaisi))?;
    Ok(format!("0.26 + 0.5 x 0.27 = {:.4}, |diff from 0.40| = {:.4} (tol 0.01)", s.gaisi, (s.gaisi - 0.40).abs()))
}

// 3. ICC.

fn anova_icc(m: &[Vec<f64>]) -> (f64, f64) {
    let (n, k) = (m.len(), m[0].len());
    let (nf, kf) = (n as f64, k as f64);
    let all: Vec<f64> = m.iter().flatten().copied().collect();
    let grand = all.iter().sum::<f64>() / all.len() as f64;
    let ssr: f64 = m.iter().map(|r| kf * (r.iter().sum::<f64>() / kf - grand).powi(2)).sum();
    let ssc: f64 = (0..k).map(|j| nf * (m.iter().map(|r| r[j]).sum::<f64>() / nf - grand).powi(2)).sum();
    let sst: f64 = all.iter().map(|v| (v - grand).powi(2)).sum();
    let sse = sst - ssr - ssc;
    let (msr, msc, mse) = (ssr / (nf - 1.0), ssc / (kf - 1.0), sse / ((nf - 1.0) * (kf - 1.0)));
    ((msr - mse) / (msr + (kf - 1.0) * mse + kf / nf * (msc - mse)), (msr - mse) / (msr + (msc - mse) / nf))
}

fn exact_var(v: Vec<f64>, var: f64) -> Vec<f64> {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    let s = (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt();
    v.into_iter().map(|x| (x - m) / s * var.sqrt()).collect()
}

fn tiny_rating_corpus() -> (Vec<OccupationVignette>, Vec<TaskItem>) {
    let vignettes = (1..=8)
        .map(|i| OccupationVignette {
            occ_code: format!("{i}2"),
            title: format!("Occupation {i}"),
            narrative: "Plans, records and reports.".into(),
        })
        .collect();
    let tasks = (1..=6)
        .map(|i| TaskItem {
            task_id: format!("t{i}"),
            category: if i <= 3 { "Professional Communication" } else { "Data Analysis" }.into(),
            text: format!("Task {i}"),
        })
        .collect();
    (vignettes, tasks)
}

fn icc() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let n = rng.random_range(2..=20);
        let k = rng.random_range(2..=6);
        let m: Vec<Vec<f64>> = (0..n).map(|_| (0..k).map(|_| rng.random::<f64>()).collect()).collect();
        let got = icc_absolute(&m).map_err(|e| e.to_string())?;
        let (s, a) = anova_icc(&m);
        worst = worst.max((got.icc_single.unwrap() - s).abs()).max((got.icc_average.unwrap() - a).abs());
    }
    ensure(worst <= 1e-10, format!("oracle deviation {worst:e}"))?;

    let (vignettes, tasks) = tiny_rating_corpus();
    let out = rate_corpus(
        &MockBackend::new(MockRater::new(9, 0.0)),
        &BackendConfig::default(),
        &PromptSpec::default(),
        &vignettes,
        &tasks,
        None,
    )
    .map_err(|e| e.to_string())?;
    let report = reliability_report(&out.records).map_err(|e| e.to_string())?;
    for l in &report.levels {
        ensure(l.icc_single == Some(1.0) && l.icc_average == Some(1.0), format!("zero-noise {}: {:?}", l.level, l))?;
    }

    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut worst_vc = 0.0f64;
    for (var_r, var_c, var_e) in [(1.0f64, 0.05, 0.5f64), (0.3, 0.1, 0.6), (2.0, 0.0, 0.3)] {
        let (n, k) = (1000, 5);
        let r = exact_var((0..n).map(|_| normal.sample(&mut rng)).collect(), var_r);
        let c = if var_c > 0.0 {
            exact_var((0..k).map(|_| normal.sample(&mut rng)).collect(), var_c)
        } else {
            vec![0.0; k]
        };
        let m: Vec<Vec<f64>> =
            (0..n).map(|i| (0..k).map(|j| r[i] + c[j] + var_e.sqrt() * normal.sample(&mut rng)).collect()).collect();
        let got = icc_absolute(&m).map_err(|e| e.to_string())?;
        let single = var_r / (var_r + var_c + var_e);
        let average = var_r / (var_r + (var_c + var_e) / k as f64);
        worst_vc =
            worst_vc.max((got.icc_single.unwrap() - single).abs()).max((got.icc_average.unwrap() - average).abs());
    }
    ensure(worst_vc <= 0.02, format!("variance-component recovery off by {worst_vc:.4}"))?;
    Ok(format!(
        "50 matrices max |diff| {worst:.1e} (tol 1e-10); zero noise ICC = 1; n = 1000 recovery max |diff| {worst_vc:.4} (tol 0.02)"
    ))
}

// 4. Absorbed fixed effects against explicit dummies.

fn fixed_effects() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = rng.random_range(30..=500);
        let k = rng.random_range(1..=3);
        let nf = rng.random_range(1..=3);
        let factors: Vec<Vec<usize>> = (0..nf)
            .map(|_| {
                let levels = rng.random_range(2..=15);
                let raw: Vec<usize> = (0..n).map(|_| rng.random_range(0..levels)).collect();
                let mut seen = raw.clone();
                seen.sort_unstable();
                seen.dedup();
                raw.iter().map(|v| seen.binary_search(v).unwrap()).collect()
            })
            .collect();
        let cols: Vec<Vec<f64>> = (0..k).map(|_| (0..n).map(|_| rng.random::<f64>()).collect()).collect();
        let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..3.0)).collect();
        let y: Vec<f64> = (0..n)
            .map(|i| {
                factors.iter().map(|f| f[i] as f64 * 0.3).sum::<f64>()
                    + cols.iter().map(|c| c[i]).sum::<f64>()
                    + rng.random::<f64>()
            })
            .collect();
        let mut d = Design::new(y.clone()).weights(w.clone());
        for (j, c) in cols.iter().enumerate() {
            d = d.column(format!("x{j}"), c.clone());
        }
        for (j, f) in factors.iter().enumerate() {
            d = d.factor(Factor::from_keys(format!("f{j}"), f));
        }
        let fit =
            wls_fe(&d, &FitOptions { fe_tolerance: 1e-12, ..FitOptions::default() }).map_err(|e| e.to_string())?;
        let mut full = cols.clone();
        full.push(vec![1.0; n]);
        for f in &factors {
            for l in 1..=*f.iter().max().unwrap() {
                full.push(f.iter().map(|&g| f64::from(u8::from(g == l))).collect());
            }
        }
        let x = DMatrix::from_fn(n, full.len(), |i, j| full[j][i] * w[i].sqrt());
        let yv = DVector::from_iterator(n, y.iter().zip(&w).map(|(v, wi)| v * wi.sqrt()));
        let beta = x.svd(true, true).solve(&yv, 1e-10).map_err(|e| e.to_string())?;
        for j in 0..k {
            worst = worst.max((fit.coef[j] - beta[j]).abs());
        }
    }
    ensure(worst <= 1e-6, format!("max deviation {worst:e}"))?;
    Ok(format!("100 designs, max |diff| {worst:.1e} (tol 1e-6)"))
}

// 5. Planted effects on full-size synthetic data.

fn find(t: &Table, filters: &[(&str, &str)], column: &str) -> Result<f64, String> {
    let c = t.column_index(column).ok_or(format!("{} has no {column}", t.name))?;
    t.rows
        .iter()
        .find(|r| filters.iter().all(|(k, v)| t.column_index(k).is_some_and(|i| r[i].as_str() == Some(*v))))
        .and_then(|r| r[c].as_f64())
        .ok_or(format!("{}: no row {filters:?}", t.name))
}

fn study(inputs: &StudyInputs, name: &str) -> Result<StudyResult, String> {
    run_study(name, inputs).map_err(|e| format!("{name}: {e}"))
}

fn within(label: &str, est: f64, se: f64, truth: f64) -> Result<String, String> {
    let z = (est - truth) / se;
    ensure(z.abs() <= 2.0, format!("{label} {est:.4} (se {se:.4}) vs {truth}: z = {z:.2}"))?;
    Ok(format!("{label} {est:.3} (se {se:.3}, z {z:.2})"))
}

fn adoption_fit(corpus: &Corpus, inputs: &StudyInputs) -> Result<(Vec<f64>, Vec<f64>), String> {
    let by = inputs.scores.by_worker();
    let (mut y, mut e1, mut e23) = (Vec::new(), Vec::new(), Vec::new());
    for j in &corpus.jobs {
        if let (Some(u), Some(s)) = (j.outcomes.ai_use, by.get(j.worker_id.as_str())) {
            y.push(f64::from(u8::from(u)));
            e1.push(s.e1);
            e23.push(s.e2e3);
        }
    }
    let fit = glm_binary(&Design::new(y).column("e1", e1).column("e2e3", e23), &GlmOptions::logit())
        .map_err(|e| e.to_string())?;
    Ok((fit.fit.coef, fit.fit.se))
}

fn mean_w2(r: &StudyResult) -> Result<f64, String> {
    find(r.table("summary").ok_or("no cv summary")?, &[("measure", "mean_w2")], "value")
}

fn planted_recovery(corpus: &Corpus) -> Check {
    ensure(corpus.jobs.len() >= 20_000 && corpus.panel.len() >= 50_000, "corpus below 20k workers / 50k cells")?;
    let effects = PlantedEffects::default();
    let params = StudyParams { planted: Some(effects.clone()), ..StudyParams::default() };
    let inputs = StudyInputs::new(corpus, params).map_err(|e| e.to_string())?;
    let mut lines = Vec::new();

    let (b, se) = adoption_fit(corpus, &inputs)?;
    lines.push(within("b1", b[1], se[1], effects.adoption_b1)?);
    lines.push(within("b2", b[2], se[2], effects.adoption_b2)?);

    let w2 = mean_w2(&study(&inputs, "cv-omega")?)?;
    ensure((0.4..=0.6).contains(&w2), format!("cv weight {w2:.3} outside [0.4, 0.6]"))?;
    lines.push(format!("cv w2 {w2:.3} in [0.4, 0.6]"));

    let alt = SyntheticConfig {
        effects: PlantedEffects { adoption_b2: 0.24 * effects.adoption_b1, ..effects.clone() },
        ..SyntheticConfig::default()
    };
    let corpus_b = generate_synthetic(&alt).map_err(|e| e.to_string())?;
    let inputs_b =
        StudyInputs::new(&corpus_b, StudyParams { planted: Some(alt.effects.clone()), ..StudyParams::default() })
            .map_err(|e| e.to_string())?;
    let w2b = mean_w2(&study(&inputs_b, "cv-omega")?)?;
    ensure((0.14..=0.34).contains(&w2b), format!("cv weight {w2b:.3} outside [0.14, 0.34]"))?;
    lines.push(format!("cv w2 {w2b:.3} in [0.14, 0.34]"));

    let wage = study(&inputs, "wage-premium")?;
    let models = wage.table("models").ok_or("no models table")?;
    let f = [("model", "(1)"), ("term", "gaisi_x_post")];
    lines.push(within("wage DiD", find(models, &f, "estimate")?, find(models, &f, "se")?, effects.wage_post_gaisi)?);

    let vac = study(&inputs, "vacancy")?;
    let three = vac.table("three_period").ok_or("no three_period table")?;
    let f = [("term", "share_x_post_launch")];
    lines.push(within("vacancy", find(three, &f, "estimate")?, find(three, &f, "se")?, effects.vacancy_post)?);
    Ok(lines.join("; "))
}

// 6. AUC.

fn pair_auc(s: &[f64], y: &[bool]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for i in (0..s.len()).filter(|&i| y[i]) {
        for j in (0..s.len()).filter(|&j| !y[j]) {
            den += 1.0;
            num += if s[i] > s[j] {
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

fn auc_checks() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut worst, mut worst_mono, mut trials) = (0.0f64, 0.0f64, 0);
    while trials < 500 {
        let n = rng.random_range(2..=12);
        let s: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(0..5u8))).collect();
        let y: Vec<bool> = (0..n).map(|_| rng.random()).collect();
        if y.iter().all(|b| *b) || y.iter().all(|b| !*b) {
            continue;
        }
        trials += 1;
        let a = auc(&s, &y, None).map_err(|e| e.to_string())?;
        worst = worst.max((a.auc - pair_auc(&s, &y)).abs());
        let t: Vec<f64> = s.iter().map(|v| (v * 1.7).exp() + 3.0).collect();
        worst_mono = worst_mono.max((auc(&t, &y, None).map_err(|e| e.to_string())?.auc - a.auc).abs());
        let c = auc_compare_paired(&s, &s, &y, None).map_err(|e| e.to_string())?;
        ensure(c.p == 1.0, format!("self-comparison p = {}", c.p))?;
    }
    ensure(worst <= 1e-12, format!("pair oracle deviation {worst:e}"))?;
    ensure(worst_mono <= 1e-12, format!("monotone transform moved AUC by {worst_mono:e}"))?;
    Ok(format!(
        "{trials} samples, pair oracle max |diff| {worst:.1e}, transform max |diff| {worst_mono:.1e}, self p = 1"
    ))
}

// 7. Quantile regression.

fn basic_min(x: &DMatrix<f64>, y: &[f64], tau: f64) -> f64 {
    let (n, k) = x.shape();
    let mut best = f64::INFINITY;
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        let a = DMatrix::from_fn(k, k, |i, j| x[(idx[i], j)]);
        if let Some(inv) = a.try_inverse() {
            let beta = inv * DVector::from_iterator(k, idx.iter().map(|&r| y[r]));
            let r: Vec<f64> = (0..n).map(|i| y[i] - (x.row(i) * &beta)[0]).collect();
            best = best.min(check_loss(&r, None, tau));
        }
        // Next k-combination in lexicographic order.
        let Some(p) = (0..k).rev().find(|&p| idx[p] < n - k + p) else { break };
        idx[p] += 1;
        for q in p + 1..k {
            idx[q] = idx[q - 1] + 1;
        }
    }
    best
}

fn quantile_checks() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst_q = 0.0f64;
    for _ in 0..200 {
        let n = rng.random_range(3..=50);
        let y: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 10.0).collect();
        let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..2.0)).collect();
        let tau = rng.random_range(0.05..0.95);
        let fit = quantile_reg(&Design::new(y.clone()).weights(w.clone()), &QuantileOptions::new(tau))
            .map_err(|e| e.to_string())?;
        let q = weighted_quantile(&y, Some(&w), tau).map_err(|e| e.to_string())?;
        worst_q = worst_q.max((fit.coef[0] - q).abs());
    }
    ensure(worst_q <= 1e-9, format!("intercept-only deviation {worst_q:e}"))?;
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = rng.random_range(4..=12);
        let p = rng.random_range(0..=2);
        let tau = rng.random_range(0.1..0.9);
        let cols: Vec<Vec<f64>> = (0..p).map(|_| (0..n).map(|_| rng.random::<f64>() * 5.0).collect()).collect();
        let y: Vec<f64> = (0..n).map(|i| cols.iter().map(|c| c[i]).sum::<f64>() + rng.random::<f64>() * 2.0).collect();
        let mut d = Design::new(y.clone());
        for (j, c) in cols.iter().enumerate() {
            d = d.column(format!("x{j}"), c.clone());
        }
        let fit = quantile_reg(&d, &QuantileOptions::new(tau)).map_err(|e| e.to_string())?;
        let x = d.matrix();
        let r: Vec<f64> = (0..n).map(|i| y[i] - (x.row(i) * fit.coef_vector())[0]).collect();
        worst = worst.max((check_loss(&r, None, tau) - basic_min(&x, &y, tau)).abs());
    }
    ensure(worst <= 1e-6, format!("objective gap {worst:e}"))?;
    Ok(format!("intercept-only max |diff| {worst_q:.1e}; 100 small designs objective gap {worst:.1e} (tol 1e-6)"))
}

// 8. End-to-end determinism through the binary.

fn pipeline(dir: &Path) -> Result<Duration, String> {
    let t = Instant::now();
    let steps: [&[&str]; 6] = [
        &["synth", "--seed", "7"],
        &["rate", "--backend", "mock"],
        &["index"],
        &["reliability"],
        &["study", "all"],
        &["report"],
    ];
    for args in steps {
        let o = Command::new(env!("CARGO_BIN_EXE_gaisi"))
            .current_dir(dir)
            .args(args)
            .output()
            .map_err(|e| e.to_string())?;
        ensure(
            o.status.success(),
            format!("{args:?} exited {:?}: {}", o.status.code(), String::from_utf8_lossy(&o.stderr)),
        )?;
    }
    Ok(t.elapsed())
}

fn determinism() -> Check {
    let (a, b) = (tempfile::tempdir().map_err(|e| e.to_string())?, tempfile::tempdir().map_err(|e| e.to_string())?);
    let ta = pipeline(a.path())?;
    let tb = pipeline(b.path())?;
    let slowest = ta.max(tb);
    ensure(slowest <= Duration::from_secs(180), format!("a run took {:.1} s", slowest.as_secs_f64()))?;
    let ma = std::fs::read(a.path().join("out/manifest.json")).map_err(|e| e.to_string())?;
    let mb = std::fs::read(b.path().join("out/manifest.json")).map_err(|e| e.to_string())?;
    ensure(ma == mb, "run manifests differ")?;
    let files = serde_json::from_slice::<serde_json::Value>(&ma).map_err(|e| e.to_string())?["files"]
        .as_object()
        .map_or(0, |m| m.len());
    Ok(format!("manifests identical over {files} files; slowest run {:.1} s (limit 180 s)", slowest.as_secs_f64()))
}

// 9. Robustness variants.

fn robustness(corpus: &Corpus) -> Check {
    let inputs = StudyInputs::new(corpus, StudyParams::default()).map_err(|e| e.to_string())?;
    let r = study(&inputs, "robustness")?;
    let t = r.table("variants").ok_or("no variants table")?;
    let get = |v: &str, c: &str| find(t, &[("variant", v)], c);
    let (rho_n, p_n) = (get("mock-noise", "rho")?, get("mock-noise", "p_diff")?);
    let (rho_r, d_r, p_r) =
        (get("mock-random", "rho")?, get("mock-random", "auc_diff")?, get("mock-random", "p_diff")?);
    let mut band = String::new();
    for name in ["noise_variant_agrees", "random_variant_fails"] {
        let e = r.expectation(name).ok_or(format!("no {name}"))?;
        ensure(e.status == Status::Pass, format!("{name}: {}", e.detail))?;
        band = e.detail.clone();
    }
    Ok(format!(
        "noise: rho {rho_n:.3} (> 0.95), AUC p {p_n:.3} (> 0.05); random: rho {rho_r:.3}, AUC diff {d_r:.3}, p {p_r:.1e} (< 0.05); {band}"
    ))
}

fn main() {
    println!("acceptance criteria");
    let mut ok = true;
    ok &= run(1, "aggregation matches naive loop on 1000 random corpora", Duration::from_secs(10), aggregation);
    ok &= run(2, "component means 0.26 and 0.27 at omega 0.5", Duration::from_secs(1), half_weight);
    ok &= run(3, "ICC against ANOVA oracle, zero noise and variance components", Duration::from_secs(30), icc);
    ok &= run(4, "absorbed fixed effects equal dummy regression", Duration::from_secs(60), fixed_effects);
    let t = Instant::now();
    let corpus = generate_synthetic(&SyntheticConfig::default()).map_err(|e| e.to_string());
    // Criterion 5's limit includes generating its corpus.
    let limit = Duration::from_secs(300).saturating_sub(t.elapsed());
    let corpus = corpus.as_ref();
    let with_corpus = |f: fn(&Corpus) -> Check| move || corpus.map_err(Clone::clone).and_then(f);
    ok &= run(5, "planted effects recovered at full scale", limit, with_corpus(planted_recovery));
    ok &= run(6, "AUC pair oracle, monotone invariance, DeLong self-comparison", Duration::from_secs(10), auc_checks);
    ok &= run(
        7,
        "quantile regression intercept-only and basic-solution oracle",
        Duration::from_secs(10),
        quantile_checks,
    );
    ok &=
        run(8, "synth, rate, index, studies, report twice: identical manifests", Duration::from_secs(360), determinism);
    ok &= run(9, "robustness variants", Duration::from_secs(60), with_corpus(robustness));
    if !ok {
        std::process::exit(1);
    }
}
