//! Acceptance checks. Runs every criterion, prints one PASS/FAIL line each
//! and exits non-zero if any fails.

use std::collections::btree_map::Entry;
use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng as _;
use roletrack::formats::{read_dataset, read_records};
use roletrack::pipeline::DatasetMeta;
use roletrack::{run, PipelineConfig, Stage};
use roletrack_core::churn::{
    compute_features, delta_poap, feature_names, label_user, ChurnConfig, Label, UserHistory, Window,
};
use roletrack_core::classify::{cross_validate, MeanReport};
use roletrack_core::corpus::{build_corpus, Document, TimeSlicedCorpus, Vocabulary};
use roletrack_core::dtm::{fit_dtm, fit_lda, DtmConfig};
use roletrack_core::evaluate::{default_fractions, lift_curve, roc_auc, AblationResult};
use roletrack_core::ingest::{quarterize, QuarterClock};
use roletrack_core::nmf::{fit_nmf, nndsvd_init, NmfParams};
use roletrack_core::rng;
use roletrack_core::synth::{evaluate_recovery, generate_population, SynthConfig};

type Check = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(elapsed: Duration, limit: Duration, detail: String) -> Check {
    ensure(
        elapsed < limit,
        format!("{detail}; {:.1}s of {}s", elapsed.as_secs_f64(), limit.as_secs()),
    )
}

fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

// 1. Feature exactness.

fn history(active: &[u32], poap: &[(u32, Vec<f64>)]) -> UserHistory {
    UserHistory {
        user: "u".into(),
        active: active.iter().copied().collect(),
        poap: poap.iter().cloned().collect(),
    }
}

fn feature_exactness() -> Check {
    let config = ChurnConfig::default();
    let active = [10, 11, 13, 15, 16, 17, 18, 19];
    let h = history(
        &active,
        &active.iter().map(|&q| (q, vec![1.0, 0.0])).collect::<Vec<_>>(),
    );
    let f = compute_features(
        &h,
        &Window {
            index: 0,
            start: 16,
            end: 19,
        },
        30,
        2,
        &config,
    )
    .map_err(|e| e.to_string())?;
    let names = feature_names(2);
    let lifespan = f[names.iter().position(|n| n == "frac_active_lifespan").unwrap()];

    let short = ChurnConfig { window: 2, ..config };
    let h = history(&[0, 1], &[(0, vec![0.2, 0.8]), (1, vec![0.3, 0.7])]);
    let f = compute_features(
        &h,
        &Window {
            index: 0,
            start: 0,
            end: 1,
        },
        8,
        2,
        &short,
    )
    .map_err(|e| e.to_string())?;
    let through_features = f[names.iter().position(|n| n == "delta_poap_mean_0").unwrap()];
    let direct = delta_poap(0.2, 0.3, 0.001);
    let expected = 0.101 / 0.201;
    let err = (direct - expected).abs().max((through_features - expected).abs());
    ensure(
        lifespan == 0.80 && err < 0.5e-12,
        format!("frac_active_lifespan = {lifespan}, delta_poap = {direct:.12} (error {err:.1e})"),
    )
}

// 2. Single-slice degeneracy.

fn random_docs(n: usize, vocab: usize, seed: u64) -> Vec<Document> {
    let mut r = rng::seeded(seed);
    (0..n)
        .map(|i| {
            let mut counts: BTreeMap<usize, u64> = BTreeMap::new();
            for _ in 0..r.random_range(1..40) {
                *counts.entry(r.random_range(0..vocab)).or_default() += 1;
            }
            Document::new(format!("d{i:04}"), 0, counts.into_iter().collect())
        })
        .collect()
}

fn dtm_degeneracy() -> Check {
    let start = Instant::now();
    let docs = random_docs(500, 28, 5);
    let vocab = Vocabulary::namespaces();
    let mut mismatches = Vec::new();
    for seed in [0u64, 1, 2] {
        let config = DtmConfig {
            seed,
            ..DtmConfig::new(7)
        };
        let lda = fit_lda(&docs, vocab.len(), &config).map_err(|e| e.to_string())?;
        let corpus = TimeSlicedCorpus {
            vocab: vocab.clone(),
            slices: vec![docs.clone()],
        };
        let dtm = fit_dtm(&corpus, &config).map_err(|e| e.to_string())?;
        let bits = |m: &[Vec<f64>]| m.iter().flatten().map(|x| x.to_bits()).collect::<Vec<_>>();
        let same = dtm.beta.len() == 1
            && bits(&dtm.beta[0]) == bits(&lda.beta)
            && bits(std::slice::from_ref(&dtm.topic_tokens[0])) == bits(std::slice::from_ref(&lda.topic_tokens));
        if !same {
            mismatches.push(seed);
        }
    }
    let elapsed = start.elapsed() / 3;
    if !mismatches.is_empty() {
        return Err(format!("beta differs from LDA for seeds {mismatches:?}"));
    }
    within(
        elapsed,
        Duration::from_secs(10),
        "T=1 fit bitwise equal to LDA over 500 docs, seeds 0-2 (per fit)".into(),
    )
}

// 3. Planted-role recovery.

fn role_recovery() -> Check {
    let start = Instant::now();
    let mut cosines = Vec::new();
    for seed in 0..3u64 {
        let synth = SynthConfig {
            seed,
            ..SynthConfig::default()
        };
        let (events, truth) = generate_population(&synth).map_err(|e| e.to_string())?;
        let records = quarterize(&events, &QuarterClock::new(synth.epoch), 28).map_err(|e| e.to_string())?;
        let corpus = build_corpus(&records, &Vocabulary::namespaces()).map_err(|e| e.to_string())?;
        let model = fit_dtm(
            &corpus,
            &DtmConfig {
                seed,
                ..DtmConfig::new(7)
            },
        )
        .map_err(|e| e.to_string())?;
        cosines.push(
            evaluate_recovery(&model, &truth.topics)
                .map_err(|e| e.to_string())?
                .mean_cosine,
        );
    }
    let mean = cosines.iter().sum::<f64>() / cosines.len() as f64;
    let detail = format!("matched cosine per seed {cosines:.4?}, mean {mean:.4} (need >= 0.9)");
    if mean < 0.9 {
        return Err(detail);
    }
    within(start.elapsed(), Duration::from_secs(120), detail)
}

// 4. NMF.

fn nmf_correctness() -> Check {
    let start = Instant::now();
    let w = DVector::from_fn(50, |i, _| 0.2 + ((i * 7) % 11) as f64 / 5.0);
    let h = DVector::from_fn(21, |j, _| 1.0 + ((j * 3) % 5) as f64 / 4.0);
    let m = &w * h.transpose();
    let params = NmfParams {
        tol: 0.0,
        ..NmfParams::default()
    };
    let model = fit_nmf(&m, 1, &params, None).map_err(|e| e.to_string())?;
    let rel = (&m - &model.w * &model.h).norm() / m.norm();

    let mut increases = 0;
    let mut nondeterministic = 0;
    for seed in 0..20u64 {
        let mut r = rng::seeded(seed);
        let (n, d) = (r.random_range(10..60), r.random_range(5..30));
        let kc = r.random_range(1..6).min(d);
        let m = DMatrix::from_fn(n, d, |_, _| r.random::<f64>());
        let fit = fit_nmf(
            &m,
            kc,
            &NmfParams {
                tol: 0.0,
                max_iter: 100,
                ..NmfParams::default()
            },
            None,
        )
        .map_err(|e| e.to_string())?;
        increases += fit.objective.windows(2).filter(|p| p[1] > p[0]).count();
        let a = nndsvd_init(&m, kc).map_err(|e| e.to_string())?;
        let b = nndsvd_init(&m, kc).map_err(|e| e.to_string())?;
        let bits = |x: &DMatrix<f64>| x.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        if bits(&a.0) != bits(&b.0) || bits(&a.1) != bits(&b.1) {
            nondeterministic += 1;
        }
    }
    let detail = format!(
        "rank-1 relative error {rel:.2e}; {increases} objective increases and {nondeterministic} \
         non-identical initialisations over 20 matrices"
    );
    if rel > 1e-6 || increases > 0 || nondeterministic > 0 {
        return Err(detail);
    }
    within(start.elapsed(), Duration::from_secs(30), detail)
}

// 5 and 6. Ranking oracles.

fn random_scored(r: &mut rng::Rng) -> (Vec<f64>, Vec<bool>) {
    let n = r.random_range(2..=1000);
    // Coarse scores so that ties are common.
    let levels = r.random_range(2..50);
    let mut labels: Vec<bool> = (0..n).map(|_| r.random_bool(0.3)).collect();
    labels[0] = true;
    labels[1] = false;
    labels.shuffle(r);
    let scores = (0..n)
        .map(|_| r.random_range(0..levels) as f64 / levels as f64)
        .collect();
    (scores, labels)
}

/// Top `ceil(i n / 20)` by score, ties in input order.
fn oracle_lift(scores: &[f64], labels: &[bool], twentieths: usize) -> f64 {
    let n = scores.len();
    let k = (twentieths * n).div_ceil(20);
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 1..n {
        let mut j = i;
        while j > 0 && scores[idx[j - 1]] < scores[idx[j]] {
            idx.swap(j - 1, j);
            j -= 1;
        }
    }
    let captured = idx[..k].iter().filter(|&&i| labels[i]).count();
    let total = labels.iter().filter(|&&l| l).count();
    (captured * n) as f64 / (total * k) as f64
}

fn lift_oracle() -> Check {
    let mut r = rng::seeded(2024);
    let fractions = default_fractions();
    let mut mismatches = 0;
    let mut last_not_one = 0;
    for _ in 0..100 {
        let (scores, labels) = random_scored(&mut r);
        let curve = lift_curve(&scores, &labels, &fractions).map_err(|e| e.to_string())?;
        for (i, p) in curve.iter().enumerate() {
            if p.lift != oracle_lift(&scores, &labels, i + 1) {
                mismatches += 1;
            }
        }
        if curve.last().map(|p| p.lift) != Some(1.0) {
            last_not_one += 1;
        }
    }
    let labels: Vec<bool> = (0..300).map(|i| i % 3 == 0).collect();
    let perfect: Vec<f64> = labels.iter().map(|&l| if l { 1.0 } else { 0.0 }).collect();
    let at_tenth = lift_curve(&perfect, &labels, &[0.10]).map_err(|e| e.to_string())?[0].lift;
    ensure(
        mismatches == 0 && last_not_one == 0 && at_tenth == 3.0,
        format!(
            "{mismatches} mismatches against the oracle over 100 datasets, lift(1.0) != 1 in {last_not_one}, \
             perfect scorer lift(0.10) = {at_tenth}"
        ),
    )
}

fn pairwise_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut wins2, mut pairs) = (0u64, 0u64);
    let pos = scores.iter().zip(labels).filter(|p| *p.1).map(|p| *p.0);
    for a in pos {
        for b in scores.iter().zip(labels).filter(|p| !*p.1).map(|p| *p.0) {
            pairs += 1;
            wins2 += match a.partial_cmp(&b).unwrap() {
                std::cmp::Ordering::Greater => 2,
                std::cmp::Ordering::Equal => 1,
                std::cmp::Ordering::Less => 0,
            };
        }
    }
    wins2 as f64 / (2 * pairs) as f64
}

fn auc_oracle() -> Check {
    let mut cases: Vec<(Vec<f64>, Vec<bool>)> = Vec::new();
    let labels: Vec<bool> = (0..40).map(|i| i % 4 == 0).collect();
    cases.push((vec![0.5; 40], labels.clone()));
    cases.push((
        labels
            .iter()
            .enumerate()
            .map(|(i, &l)| if l { 1.0 + i as f64 } else { i as f64 / 100.0 })
            .collect(),
        labels,
    ));
    let mut r = rng::seeded(77);
    cases.extend((0..100).map(|_| random_scored(&mut r)));
    let mut mismatches = 0;
    let mut special = Vec::new();
    for (i, (scores, labels)) in cases.iter().enumerate() {
        let fast = roc_auc(scores, labels).map_err(|e| e.to_string())?;
        let brute = pairwise_auc(scores, labels);
        if fast != brute {
            mismatches += 1;
        }
        if i < 2 {
            special.push(fast);
        }
    }
    ensure(
        mismatches == 0 && special == [0.5, 1.0],
        format!(
            "all-tied {}, perfect {}, {mismatches} mismatches over 102 datasets",
            special[0], special[1]
        ),
    )
}

// 7 to 10 run the file pipeline.

fn acceptance_config(seed: u64, out: &Path) -> Result<PipelineConfig, String> {
    PipelineConfig::load(&repo_root().join("configs/acceptance.toml"))
        .and_then(|c| c.finish(Some(seed), Some(out.to_path_buf())))
        .map_err(|e| e.to_string())
}

struct Prepared {
    config: PipelineConfig,
    _dir: tempfile::TempDir,
}

fn prepare(seed: u64) -> Result<Prepared, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = acceptance_config(seed, dir.path())?;
    for stage in [
        Stage::Synth,
        Stage::Ingest,
        Stage::Corpus,
        Stage::FitDtm,
        Stage::Dataset,
    ] {
        run(stage, &config).map_err(|e| format!("seed {seed} {}: {e}", stage.name()))?;
    }
    Ok(Prepared { config, _dir: dir })
}

fn load_dataset(config: &PipelineConfig) -> Result<(DatasetMeta, roletrack_core::churn::Dataset), String> {
    let dir = config.paths.out.join("dataset");
    let meta: DatasetMeta =
        serde_json::from_slice(&std::fs::read(dir.join("features.json")).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
    let path = dir.join("dataset.csv");
    let bytes = std::fs::read(&path).map_err(|e| e.to_string())?;
    let ds = read_dataset(&path, &bytes, meta.roles, meta.feature_names.clone()).map_err(|e| e.to_string())?;
    Ok((meta, ds))
}

fn planted_churn(cache: &mut BTreeMap<u64, Prepared>) -> Check {
    let start = Instant::now();
    let p = prepare(0)?;
    run(Stage::Eval, &p.config).map_err(|e| e.to_string())?;
    let cv: serde_json::Value =
        serde_json::from_slice(&std::fs::read(p.config.paths.out.join("eval/cv.json")).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
    let mean: MeanReport = serde_json::from_value(cv["mean"].clone()).map_err(|e| e.to_string())?;
    let auc = mean.roc_auc.value().ok_or("AUC undefined")?;

    let (_, ds) = load_dataset(&p.config)?;
    let x: Vec<Vec<f64>> = ds.examples.iter().map(|e| e.features.clone()).collect();
    let mut y = ds.labels();
    y.shuffle(&mut rng::seeded(p.config.seed + 99));
    let permuted = cross_validate(&x, &y, p.config.eval.folds, &p.config.classifier, p.config.seed)
        .map_err(|e| e.to_string())?
        .mean
        .roc_auc
        .value()
        .ok_or("permuted AUC undefined")?;
    let elapsed = start.elapsed();
    cache.insert(0, p);
    let detail = format!(
        "{} examples, AUC {auc:.4} (need >= 0.75), permuted {permuted:.4} (need 0.45-0.55)",
        x.len()
    );
    if auc < 0.75 || !(0.45..=0.55).contains(&permuted) {
        return Err(detail);
    }
    within(elapsed, Duration::from_secs(300), detail)
}

fn ablation_direction(cache: &mut BTreeMap<u64, Prepared>) -> Check {
    let mut lines = Vec::new();
    let mut ok = true;
    for seed in 0..3u64 {
        if let Entry::Vacant(e) = cache.entry(seed) {
            e.insert(prepare(seed)?);
        }
        let config = &cache[&seed].config;
        run(Stage::Ablate, config).map_err(|e| e.to_string())?;
        let result: AblationResult = serde_json::from_slice(
            &std::fs::read(config.paths.out.join("ablate/ablation.json")).map_err(|e| e.to_string())?,
        )
        .map_err(|e| e.to_string())?;
        let drop = result.largest_drop().ok_or("no defined ablation deltas")?;
        let delta_of = |name: &str| {
            result
                .groups
                .iter()
                .find(|g| g.group == name)
                .and_then(|g| g.roc_auc_delta.value())
                .unwrap_or(f64::NAN)
        };
        let runner_up = result
            .groups
            .iter()
            .filter(|g| g.group != "delta_poap")
            .filter_map(|g| g.roc_auc_delta.value().map(|d| (d, g.group.as_str())))
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .unwrap_or((f64::NAN, "-"));
        ok &= drop.group == "delta_poap";
        lines.push(format!(
            "seed {seed}: largest drop {} (delta_poap {:+.4}, next {} {:+.4})",
            drop.group,
            delta_of("delta_poap"),
            runner_up.1,
            runner_up.0
        ));
    }
    ensure(ok, lines.join("; "))
}

fn label_semantics(cache: &BTreeMap<u64, Prepared>) -> Check {
    let c = ChurnConfig::default();
    let w = Window {
        index: 2,
        start: 2,
        end: 5,
    };
    let set = |q: &[u32]| q.iter().copied().collect::<BTreeSet<u32>>();
    let worked = [
        (label_user(&set(&[2, 3, 4, 5]), &w, &c), Label::Departed),
        (label_user(&set(&[2, 3, 4, 5, 9]), &w, &c), Label::Staying),
        (label_user(&set(&[2, 3, 4, 5, 6]), &w, &c), Label::Excluded),
    ];
    let worked_ok = worked.iter().all(|(got, want)| got.as_ref().ok() == Some(want));

    let config = &cache.get(&0).ok_or("criterion 7 did not prepare a dataset")?.config;
    let (meta, ds) = load_dataset(config)?;
    let path = config.paths.out.join("ingest/records.csv");
    let records = read_records(&path, &std::fs::read(&path).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let mut active: BTreeMap<&str, BTreeSet<u32>> = BTreeMap::new();
    for r in &records {
        active.entry(r.user.as_str()).or_default().insert(r.quarter);
    }
    let last = meta.quarters - 1;
    let mut violations = 0;
    for e in &ds.examples {
        let window = meta
            .windows
            .iter()
            .find(|w| w.index == e.window)
            .ok_or("example window not enumerated")?;
        let seen = &active[e.user.as_str()];
        let censored = window.end + c.staying_horizon > last;
        let consistent = if e.label.is_departed() {
            seen.range(window.end + 1..).next().is_none()
        } else {
            seen.range(window.end + c.staying_horizon..).next().is_some()
        };
        if censored || !consistent || seen.range(window.quarters()).next().is_none() {
            violations += 1;
        }
    }
    ensure(
        worked_ok && violations == 0,
        format!(
            "worked examples {}; {violations} of {} emitted examples violate labels or censoring",
            if worked_ok { "hold" } else { "fail" },
            ds.examples.len()
        ),
    )
}

fn determinism() -> Check {
    let bin = env!("CARGO_BIN_EXE_roletrack");
    let config = repo_root().join("configs/small.toml");
    let mut runs = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        for cmd in ["synth", "pipeline"] {
            let status = Command::new(bin)
                .args([
                    "--config",
                    config.to_str().unwrap(),
                    "--out",
                    dir.path().to_str().unwrap(),
                    cmd,
                ])
                .env("RUST_LOG", "warn")
                .status()
                .map_err(|e| e.to_string())?;
            if !status.success() {
                return Err(format!("`{cmd}` exited with {status}"));
            }
        }
        runs.push(dir);
    }
    let files = |root: &Path| -> Vec<PathBuf> {
        let mut out = Vec::new();
        let mut stack = vec![root.to_path_buf()];
        while let Some(d) = stack.pop() {
            for entry in std::fs::read_dir(&d).unwrap() {
                let p = entry.unwrap().path();
                if p.is_dir() {
                    stack.push(p);
                } else if matches!(p.extension().and_then(|e| e.to_str()), Some("csv" | "json")) {
                    out.push(p.strip_prefix(root).unwrap().to_path_buf());
                }
            }
        }
        out.sort();
        out
    };
    let (a, b) = (files(runs[0].path()), files(runs[1].path()));
    if a != b {
        return Err("the two runs wrote different file sets".into());
    }
    let differing: Vec<String> = a
        .iter()
        .filter(|f| std::fs::read(runs[0].path().join(f)).ok() != std::fs::read(runs[1].path().join(f)).ok())
        .map(|f| f.display().to_string())
        .collect();
    ensure(
        differing.is_empty(),
        format!("{} CSV/JSON files compared, differing: {differing:?}", a.len()),
    )
}

fn main() {
    let mut cache = BTreeMap::new();
    let mut failed = 0;
    let mut report = |n: usize, name: &str, check: &mut dyn FnMut() -> Check| {
        let start = Instant::now();
        let result = check();
        let secs = start.elapsed().as_secs_f64();
        let (tag, detail) = match &result {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        println!("criterion {n:>2} {name:<24} {tag} [{secs:.1}s] {detail}");
        if result.is_err() {
            failed += 1;
        }
    };
    report(1, "feature exactness", &mut feature_exactness);
    report(2, "dtm degeneracy", &mut dtm_degeneracy);
    report(3, "planted-role recovery", &mut role_recovery);
    report(4, "nmf correctness", &mut nmf_correctness);
    report(5, "lift oracle", &mut lift_oracle);
    report(6, "auc oracle", &mut auc_oracle);
    report(7, "planted churn signal", &mut || planted_churn(&mut cache));
    report(8, "ablation direction", &mut || ablation_direction(&mut cache));
    report(9, "label semantics", &mut || label_semantics(&cache));
    report(10, "determinism", &mut determinism);
    if failed > 0 {
        println!("{failed} of 10 criteria failed");
        std::process::exit(1);
    }
    println!("all 10 criteria passed");
}
