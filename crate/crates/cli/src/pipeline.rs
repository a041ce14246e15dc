//! The pipeline stages. Each reads its declared inputs from the output
//! directory (or the configured paths), writes its outputs atomically into
//! `<out>/<stage>/` and finishes with a manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use log::{info, warn};
use nalgebra::DMatrix;
use roletrack_core::churn::{build_dataset, enumerate_windows, user_histories, Dataset, Window};
use roletrack_core::classify::cross_validate_at;
use roletrack_core::corpus::{build_corpus, corpus_stats, Document, TimeSlicedCorpus, Vocabulary};
use roletrack_core::dtm::{fit_dtm, infer_corpus, mean_drift, top_terms, DtmConfig, DtmModel, RoleMixture};
use roletrack_core::evaluate::{ablate, churn_groups, evaluate, ColumnGroup, EvalReport, Metric};
use roletrack_core::ingest::{
    format_event, lifespan_stats, parse_events, quarterize, sample_population, truncate_quarters, ActivityRecord,
    QuarterClock,
};
use roletrack_core::nmf::{
    assign_clusters, build_profile_matrix, cluster_summary, fit_nmf, nndsvd_init, ProfileMatrix,
};
use roletrack_core::synth::generate_population;
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::error::{CliError, Result};
use crate::formats::{
    csv_bytes, dataset_csv, header, label_name, metric_cell, parse_cell, read_dataset, read_matrix, read_records,
    read_rows, read_theta, records_csv, theta_csv,
};
use crate::plot;
use crate::store::{read_input, StageDir};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Ingest,
    Corpus,
    FitDtm,
    Profiles,
    Cluster,
    Dataset,
    Train,
    Eval,
    Ablate,
    Synth,
    Report,
}

impl Stage {
    /// Every stage after `synth`, in dependency order.
    pub const PIPELINE: [Stage; 10] = [
        Stage::Ingest,
        Stage::Corpus,
        Stage::FitDtm,
        Stage::Profiles,
        Stage::Cluster,
        Stage::Dataset,
        Stage::Train,
        Stage::Eval,
        Stage::Ablate,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Corpus => "corpus",
            Stage::FitDtm => "fit-dtm",
            Stage::Profiles => "profiles",
            Stage::Cluster => "cluster",
            Stage::Dataset => "dataset",
            Stage::Train => "train",
            Stage::Eval => "eval",
            Stage::Ablate => "ablate",
            Stage::Synth => "synth",
            Stage::Report => "report",
        }
    }

    /// Directory under the output root.
    pub fn dir(self) -> &'static str {
        match self {
            Stage::FitDtm => "dtm",
            s => s.name(),
        }
    }
}

pub fn run(stage: Stage, config: &PipelineConfig) -> Result<()> {
    info!("running {}", stage.name());
    match stage {
        Stage::Ingest => ingest(config),
        Stage::Corpus => corpus(config),
        Stage::FitDtm => fit(config),
        Stage::Profiles => profiles(config),
        Stage::Cluster => cluster(config),
        Stage::Dataset => dataset(config),
        Stage::Train => train(config),
        Stage::Eval => eval(config),
        Stage::Ablate => ablation(config),
        Stage::Synth => synth(config),
        Stage::Report => report(config),
    }
}

/// Runs every stage from `ingest` to `report`.
pub fn run_pipeline(config: &PipelineConfig) -> Result<()> {
    Stage::PIPELINE.iter().try_for_each(|&s| run(s, config))
}

fn stage_path(config: &PipelineConfig, stage: Stage, file: &str) -> PathBuf {
    config.paths.out.join(stage.dir()).join(file)
}

/// Reads an output of an earlier stage and records it as an input.
fn upstream(dir: &mut StageDir, config: &PipelineConfig, stage: Stage, file: &str) -> Result<(PathBuf, Vec<u8>)> {
    let path = stage_path(config, stage, file);
    let bytes = read_input(&path, Some(stage.name()))?;
    dir.input(&path, &bytes);
    Ok((path, bytes))
}

fn upstream_json<T: for<'de> Deserialize<'de>>(
    dir: &mut StageDir,
    config: &PipelineConfig,
    stage: Stage,
    file: &str,
) -> Result<T> {
    let (path, bytes) = upstream(dir, config, stage, file)?;
    serde_json::from_slice(&bytes).map_err(|e| CliError::format(&path, e))
}

fn text(path: &Path, bytes: Vec<u8>) -> Result<String> {
    String::from_utf8(bytes).map_err(|_| CliError::format(path, "not valid UTF-8"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub events: usize,
    pub parse_errors: usize,
    /// Quarters in the analysis horizon.
    pub quarters: u32,
    pub vocab_size: usize,
    pub users_before_sampling: usize,
    pub users: usize,
    pub records: usize,
}

fn ingest(c: &PipelineConfig) -> Result<()> {
    let mut dir = StageDir::open(&c.paths.out, Stage::Ingest.dir(), "ingest")?;
    let events_path = c.events_path();
    let from_synth = c.paths.events.is_none();
    let map_path = c
        .paths
        .namespace_map
        .clone()
        .or_else(|| from_synth.then(|| stage_path(c, Stage::Synth, "namespaces.txt")));
    let vocab = match map_path {
        Some(p) => {
            let bytes = read_input(&p, from_synth.then_some("synth"))?;
            dir.input(&p, &bytes);
            Vocabulary::parse_map(&text(&p, bytes)?).map_err(|e| CliError::format(&p, e))?
        }
        None => Vocabulary::namespaces(),
    };
    let bytes = read_input(&events_path, from_synth.then_some("synth"))?;
    dir.input(&events_path, &bytes);
    let body = text(&events_path, bytes)?;
    let clock = QuarterClock::new(c.ingest.epoch);
    let (events, errors) = parse_events(body.lines(), &vocab, &clock);
    for e in errors.iter().take(20) {
        warn!("{}:{}: {}", events_path.display(), e.line, e.message);
    }
    if errors.len() > 20 {
        warn!(
            "{} more malformed lines in {}",
            errors.len() - 20,
            events_path.display()
        );
    }
    let records = quarterize(&events, &clock, vocab.len())?;
    let quarters = c
        .ingest
        .quarters
        .unwrap_or_else(|| records.iter().map(|r| r.quarter + 1).max().unwrap_or(0));
    let records = truncate_quarters(records, quarters);
    let lifespans = lifespan_stats(&records);
    let sampled = sample_population(&records, c.ingest.single_quarter_fraction, c.seed)?;
    let users = |rs: &[ActivityRecord]| {
        rs.iter()
            .map(|r| r.user.as_str())
            .collect::<std::collections::BTreeSet<_>>()
            .len()
    };
    let summary = IngestSummary {
        events: events.len(),
        parse_errors: errors.len(),
        quarters,
        vocab_size: vocab.len(),
        users_before_sampling: users(&records),
        users: users(&sampled),
        records: sampled.len(),
    };
    dir.write("namespaces.txt", vocab.to_map().as_bytes())?;
    dir.write("records.csv", &records_csv(&sampled, vocab.len()))?;
    dir.write(
        "lifespan.csv",
        &csv_bytes(
            &header(&["active_quarters", "user_count"], "", 0),
            lifespans
                .buckets
                .iter()
                .map(|(q, n)| vec![q.to_string(), n.to_string()]),
        ),
    )?;
    dir.write(
        "errors.csv",
        &csv_bytes(
            &header(&["line", "message"], "", 0),
            errors.iter().map(|e| vec![e.line.to_string(), e.message.clone()]),
        ),
    )?;
    dir.write_json("summary.json", &summary)?;
    dir.finish(c)?;
    info!(
        "ingested {} events into {} records over {quarters} quarters",
        events.len(),
        sampled.len()
    );
    Ok(())
}

struct IngestOutputs {
    vocab: Vocabulary,
    records: Vec<ActivityRecord>,
    summary: IngestSummary,
}

fn ingest_outputs(dir: &mut StageDir, c: &PipelineConfig, with_records: bool) -> Result<IngestOutputs> {
    let summary: IngestSummary = upstream_json(dir, c, Stage::Ingest, "summary.json")?;
    let (p, bytes) = upstream(dir, c, Stage::Ingest, "namespaces.txt")?;
    let vocab = Vocabulary::parse_map(&text(&p, bytes)?).map_err(|e| CliError::format(&p, e))?;
    let records = if with_records {
        let (p, bytes) = upstream(dir, c, Stage::Ingest, "records.csv")?;
        read_records(&p, &bytes)?
    } else {
        Vec::new()
    };
    Ok(IngestOutputs {
        vocab,
        records,
        summary,
    })
}

fn corpus(c: &PipelineConfig) -> Result<()> {
    let mut dir = StageDir::open(&c.paths.out, Stage::Corpus.dir(), "corpus")?;
    let up = ingest_outputs(&mut dir, c, true)?;
    let mut corpus = build_corpus(&up.records, &up.vocab)?;
    corpus.slices.resize_with(up.summary.quarters as usize, Vec::new);
    let mut vocab_txt = up.vocab.names().join("\n");
    vocab_txt.push('\n');
    dir.write("vocab.txt", vocab_txt.as_bytes())?;
    for (t, docs) in corpus.slices.iter().enumerate() {
        let rows = docs.iter().flat_map(|d| {
            d.terms
                .iter()
                .map(move |&(term, n)| vec![d.user.clone(), term.to_string(), n.to_string()])
        });
        dir.write(
            &format!("slice_{t}.csv"),
            &csv_bytes(&header(&["user", "term_id", "count"], "", 0), rows),
        )?;
    }
    dir.write_json("stats.json", &corpus_stats(&corpus))?;
    dir.finish(c)?;
    Ok(())
}

fn read_corpus(dir: &mut StageDir, c: &PipelineConfig) -> Result<TimeSlicedCorpus> {
    let (p, bytes) = upstream(dir, c, Stage::Corpus, "vocab.txt")?;
    let vocab = Vocabulary::new(text(&p, bytes)?.lines().map(str::to_string)).map_err(|e| CliError::format(&p, e))?;
    let stats: roletrack_core::corpus::CorpusStats = upstream_json(dir, c, Stage::Corpus, "stats.json")?;
    let mut slices = Vec::with_capacity(stats.slices);
    for t in 0..stats.slices {
        let (p, bytes) = upstream(dir, c, Stage::Corpus, &format!("slice_{t}.csv"))?;
        let (_, rows) = read_rows(&p, &bytes)?;
        let mut docs: Vec<Document> = Vec::new();
        for (i, row) in rows.iter().enumerate() {
            let term: usize = parse_cell(&p, i, &row[1])?;
            let n: u64 = parse_cell(&p, i, &row[2])?;
            match docs.last_mut() {
                Some(d) if d.user == row[0] => d.terms.push((term, n)),
                _ => docs.push(Document::new(row[0].clone(), t, vec![(term, n)])),
            }
        }
        slices.push(docs);
    }
    Ok(TimeSlicedCorpus { vocab, slices })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ModelConfig {
    config: DtmConfig,
    vocab_size: usize,
    slices: usize,
    topic_tokens: Vec<Vec<f64>>,
    mean_drift: f64,
}

fn fit(c: &PipelineConfig) -> Result<()> {
    let mut dir = StageDir::open(&c.paths.out, Stage::FitDtm.dir(), "fit-dtm")?;
    let corpus = read_corpus(&mut dir, c)?;
    let model = fit_dtm(&corpus, &c.dtm)?;
    let mixtures = infer_corpus(&model, &corpus)?;
    let k = model.topics();
    dir.write_json(
        "config.json",
        &ModelConfig {
            config: model.config.clone(),
            vocab_size: model.vocab_size,
            slices: model.num_slices(),
            topic_tokens: model.topic_tokens.clone(),
            mean_drift: mean_drift(&model),
        },
    )?;
    let mut names = vec!["topic".to_string()];
    names.extend(corpus.vocab.names().iter().cloned());
    for (t, beta) in model.beta.iter().enumerate() {
        let rows = beta.iter().enumerate().map(|(i, row)| {
            std::iter::once(i.to_string())
                .chain(row.iter().map(f64::to_string))
                .collect::<Vec<_>>()
        });
        dir.write(&format!("beta_{t}.csv"), &csv_bytes(&names, rows))?;
    }
    dir.write(
        "alpha.csv",
        &csv_bytes(
            &header(&["slice"], "role_", k),
            model.alpha.iter().enumerate().map(|(t, a)| {
                std::iter::once(t.to_string())
                    .chain(a.iter().map(f64::to_string))
                    .collect::<Vec<_>>()
            }),
        ),
    )?;
    let mut top = Vec::new();
    for t in 0..model.num_slices() {
        for topic in 0..k {
            for (rank, (term, p)) in top_terms(&model, &corpus.vocab, topic, t, 5)?.into_iter().enumerate() {
                top.push(vec![
                    t.to_string(),
                    topic.to_string(),
                    rank.to_string(),
                    term,
                    p.to_string(),
                ]);
            }
        }
    }
    dir.write(
        "top_terms.csv",
        &csv_bytes(&header(&["slice", "topic", "rank", "term", "probability"], "", 0), top),
    )?;
    dir.write("theta.csv", &theta_csv(&mixtures, k))?;
    dir.finish(c)?;
    Ok(())
}

fn read_model(dir: &mut StageDir, c: &PipelineConfig) -> Result<DtmModel> {
    let mc: ModelConfig = upstream_json(dir, c, Stage::FitDtm, "config.json")?;
    let mut beta = Vec::with_capacity(mc.slices);
    for t in 0..mc.slices {
        let (p, bytes) = upstream(dir, c, Stage::FitDtm, &format!("beta_{t}.csv"))?;
        beta.push(read_matrix(&p, &bytes, 1)?.into_iter().map(|(_, v)| v).collect());
    }
    let (p, bytes) = upstream(dir, c, Stage::FitDtm, "alpha.csv")?;
    let alpha = read_matrix(&p, &bytes, 1)?.into_iter().map(|(_, v)| v).collect();
    Ok(DtmModel {
        config: mc.config,
        vocab_size: mc.vocab_size,
        beta,
        alpha,
        topic_tokens: mc.topic_tokens,
    })
}

fn read_mixtures(dir: &mut StageDir, c: &PipelineConfig) -> Result<(usize, Vec<RoleMixture>)> {
    let (p, bytes) = upstream(dir, c, Stage::FitDtm, "theta.csv")?;
    read_theta(&p, &bytes)
}

fn profiles(c: &PipelineConfig) -> Result<()> {
    let mut dir = StageDir::open(&c.paths.out, Stage::Profiles.dir(), "profiles")?;
    let up = ingest_outputs(&mut dir, c, false)?;
    let (k, mixtures) = read_mixtures(&mut dir, c)?;
    let t = up.summary.quarters as usize;
    let built = build_profile_matrix(&mixtures, c.nmf.min_active_quarters, t, k)?;
    let m = &built.matrix;
    let rows = m.users.iter().enumerate().map(|(i, u)| {
        std::iter::once(u.clone())
            .chain(m.values.row(i).iter().map(f64::to_string))
            .collect::<Vec<_>>()
    });
    let names: Vec<String> = std::iter::once("user".to_string())
        .chain((0..t).flat_map(|q| (0..k).map(move |r| format!("q{q}_role{r}"))))
        .collect();
    dir.write("matrix.csv", &csv_bytes(&names, rows))?;
    dir.write(
        "excluded.csv",
        &csv_bytes(
            &header(&["user"], "", 0),
            built.excluded.iter().map(|u| vec![u.clone()]),
        ),
    )?;
    dir.write_json(
        "shape.json",
        &serde_json::json!({ "users": m.users.len(), "quarters": t, "roles": k }),
    )?;
    dir.finish(c)?;
    Ok(())
}

fn matrix_csv(prefix: &str, labels: &[String], m: &DMatrix<f64>, first: &str) -> Vec<u8> {
    csv_bytes(
        &header(&[first], prefix, m.ncols()),
        labels.iter().enumerate().map(|(i, l)| {
            std::iter::once(l.clone())
                .chain(m.row(i).iter().map(f64::to_string))
                .collect::<Vec<_>>()
        }),
    )
}

fn cluster(c: &PipelineConfig) -> Result<()> {
    let mut dir = StageDir::open(&c.paths.out, Stage::Cluster.dir(), "cluster")?;
    let up = ingest_outputs(&mut dir, c, true)?;
    let (k, mixtures) = read_mixtures(&mut dir, c)?;
    let (p, bytes) = upstream(&mut dir, c, Stage::Profiles, "matrix.csv")?;
    let rows = read_matrix(&p, &bytes, 1)?;
    let t = up.summary.quarters as usize;
    let d = t * k;
    let users: Vec<String> = rows.iter().map(|r| r.0[0].clone()).collect();
    let values = DMatrix::from_fn(rows.len(), d, |i, j| rows[i].1[j]);
    let matrix = ProfileMatrix::new(users, t, k, values).map_err(|e| CliError::format(&p, e))?;
    let kc = c.nmf.clusters;
    let init = nndsvd_init(&matrix.values, kc)?;
    let model = fit_nmf(&matrix.values, kc, &c.nmf.params(), Some(init))?;
    let assignment = assign_clusters(&matrix, &model);
    let summary = cluster_summary(&assignment, &up.records, &mixtures, k, c.nmf.role_threshold)?;
    dir.write("w.csv", &matrix_csv("k_", &matrix.users, &model.w, "user"))?;
    let cl: Vec<String> = (0..kc).map(|i| i.to_string()).collect();
    dir.write("h.csv", &matrix_csv("c_", &cl, &model.h, "cluster"))?;
    dir.write(
        "objective.csv",
        &csv_bytes(
            &header(&["iteration", "objective"], "", 0),
            model
                .objective
                .iter()
                .enumerate()
                .map(|(i, o)| vec![i.to_string(), o.to_string()]),
        ),
    )?;
    dir.write(
        "assignment.csv",
        &csv_bytes(
            &header(&["user", "cluster"], "", 0),
            assignment
                .users
                .iter()
                .zip(&assignment.clusters)
                .map(|(u, k)| vec![u.clone(), k.to_string()]),
        ),
    )?;
    let opt = |v: Option<String>| v.unwrap_or_default();
    let rows = summary.iter().map(|s| {
        vec![
            s.cluster.to_string(),
            s.size.to_string(),
            s.fraction.to_string(),
            opt(s.min_active.map(|v| v.to_string())),
            opt(s.max_active.map(|v| v.to_string())),
            opt(s.median_active.map(|v| v.to_string())),
            opt(s.mean_active.map(|v| v.to_string())),
            opt(s.dominant_quarters.map(|q| format!("{}-{}", q.0, q.1))),
            s.dominant_roles
                .iter()
                .map(|r| r.to_string())
                .collect::<Vec<_>>()
                .join(" "),
        ]
    });
    let cols = [
        "cluster",
        "size",
        "fraction",
        "min_active",
        "max_active",
        "median_active",
        "mean_active",
        "dominant_quarters",
        "dominant_roles",
    ];
    dir.write("summary.csv", &csv_bytes(&header(&cols, "", 0), rows))?;
    dir.write_json("summary.json", &summary)?;
    dir.finish(c)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub roles: usize,
    pub quarters: u32,
    pub feature_names: Vec<String>,
    pub groups: Vec<ColumnGroup>,
    pub windows: Vec<Window>,
    pub skipped_windows: Vec<usize>,
    pub departed: usize,
    pub staying: usize,
    /// Entropy is in nats.
    pub entropy_base: String,
}

fn dataset(c: &PipelineConfig) -> Result<()> {
    let mut dir = StageDir::open(&c.paths.out, Stage::Dataset.dir(), "dataset")?;
    let up = ingest_outputs(&mut dir, c, true)?;
    let (k, mixtures) = read_mixtures(&mut dir, c)?;
    let histories = user_histories(&up.records, &mixtures);
    let built = build_dataset(&histories, up.summary.quarters, k, &c.churn, c.seed)?;
    let ds = &built.dataset;
    let departed = ds.examples.iter().filter(|e| e.label.is_departed()).count();
    let meta = DatasetMeta {
        roles: k,
        quarters: up.summary.quarters,
        feature_names: ds.feature_names.clone(),
        groups: churn_groups(k),
        windows: enumerate_windows(up.summary.quarters, &c.churn),
        skipped_windows: built.skipped_windows.clone(),
        departed,
        staying: ds.examples.len() - departed,
        entropy_base: "e".into(),
    };
    dir.write("dataset.csv", &dataset_csv(ds))?;
    dir.write_json("features.json", &meta)?;
    dir.finish(c)?;
    info!("dataset: {departed} departed, {} staying", ds.examples.len() - departed);
    Ok(())
}

fn read_ds(dir: &mut StageDir, c: &PipelineConfig) -> Result<(DatasetMeta, Dataset)> {
    let meta: DatasetMeta = upstream_json(dir, c, Stage::Dataset, "features.json")?;
    let (p, bytes) = upstream(dir, c, Stage::Dataset, "dataset.csv")?;
    let ds = read_dataset(&p, &bytes, meta.roles, meta.feature_names.clone())?;
    if ds.examples.is_empty() {
        return Err(CliError::format(&p, "dataset is empty; no window had both classes"));
    }
    Ok((meta, ds))
}

fn xy(ds: &Dataset) -> (Vec<Vec<f64>>, Vec<bool>) {
    (ds.examples.iter().map(|e| e.features.clone()).collect(), ds.labels())
}

fn train(c: &PipelineConfig) -> Result<()> {
    let mut dir = StageDir::open(&c.paths.out, Stage::Train.dir(), "train")?;
    let (_, ds) = read_ds(&mut dir, c)?;
    let (x, y) = xy(&ds);
    let mut model = c.classifier.train(&x, &y, c.seed)?;
    model.feature_names = ds.feature_names.clone();
    dir.write_json("model.json", &model)?;
    dir.finish(c)?;
    Ok(())
}

const METRICS: [&str; 6] = ["tp_rate", "fp_rate", "precision", "recall", "f_measure", "roc_auc"];

fn metric_values(r: &EvalReport) -> [&Metric; 6] {
    [
        &r.tp_rate,
        &r.fp_rate,
        &r.precision,
        &r.recall,
        &r.f_measure,
        &r.roc_auc,
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowReport {
    pub window: usize,
    pub examples: usize,
    pub departed: usize,
    pub report: Option<EvalReport>,
}

fn eval(c: &PipelineConfig) -> Result<()> {
    let mut dir = StageDir::open(&c.paths.out, Stage::Eval.dir(), "eval")?;
    let (meta, ds) = read_ds(&mut dir, c)?;
    let (x, y) = xy(&ds);
    let fractions = &c.eval.lift_fractions;
    let cv = cross_validate_at(&x, &y, c.eval.folds, &c.classifier, c.seed, c.eval.threshold, fractions)?;
    let mut by_window: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, e) in ds.examples.iter().enumerate() {
        by_window.entry(e.window).or_default().push(i);
    }
    let windows: Vec<WindowReport> = meta
        .windows
        .iter()
        .map(|w| {
            let idx = by_window.get(&w.index).cloned().unwrap_or_default();
            let scores: Vec<f64> = idx.iter().map(|&i| cv.oof_scores[i]).collect();
            let labels: Vec<bool> = idx.iter().map(|&i| y[i]).collect();
            WindowReport {
                window: w.index,
                examples: idx.len(),
                departed: labels.iter().filter(|&&l| l).count(),
                report: evaluate(&scores, &labels, c.eval.threshold, fractions).ok(),
            }
        })
        .collect();
    dir.write_json(
        "cv.json",
        &serde_json::json!({ "folds": cv.folds, "mean": cv.mean, "pooled": cv.pooled }),
    )?;
    let rows = METRICS.iter().enumerate().map(|(i, name)| {
        let mean = [
            &cv.mean.tp_rate,
            &cv.mean.fp_rate,
            &cv.mean.precision,
            &cv.mean.recall,
            &cv.mean.f_measure,
            &cv.mean.roc_auc,
        ][i];
        vec![
            name.to_string(),
            metric_cell(mean),
            metric_cell(metric_values(&cv.pooled)[i]),
        ]
    });
    dir.write(
        "metrics.csv",
        &csv_bytes(&header(&["metric", "fold_mean", "pooled"], "", 0), rows),
    )?;
    dir.write(
        "lift.csv",
        &csv_bytes(
            &header(&["fraction", "lift", "fold_mean_lift"], "", 0),
            cv.pooled.lift.iter().map(|p| {
                let mean = cv.mean.lift.iter().find(|m| m.fraction == p.fraction);
                vec![
                    p.fraction.to_string(),
                    p.lift.to_string(),
                    mean.map(|m| m.lift.to_string()).unwrap_or_default(),
                ]
            }),
        ),
    )?;
    let mut cols = vec!["window", "examples", "departed"];
    cols.extend(METRICS);
    let rows = windows.iter().map(|w| {
        let mut row = vec![w.window.to_string(), w.examples.to_string(), w.departed.to_string()];
        match &w.report {
            Some(r) => row.extend(metric_values(r).iter().map(|m| metric_cell(m))),
            None => row.extend(METRICS.iter().map(|_| "undefined".to_string())),
        }
        row
    });
    dir.write("windows.csv", &csv_bytes(&header(&cols, "", 0), rows))?;
    dir.write(
        "oof.csv",
        &csv_bytes(
            &header(&["user", "window", "label", "score"], "", 0),
            ds.examples.iter().zip(&cv.oof_scores).map(|(e, s)| {
                vec![
                    e.user.clone(),
                    e.window.to_string(),
                    label_name(e.label).into(),
                    s.to_string(),
                ]
            }),
        ),
    )?;
    dir.finish(c)?;
    info!("cross-validated AUC {}", metric_cell(&cv.mean.roc_auc));
    Ok(())
}

fn ablation(c: &PipelineConfig) -> Result<()> {
    let mut dir = StageDir::open(&c.paths.out, Stage::Ablate.dir(), "ablate")?;
    let (meta, ds) = read_ds(&mut dir, c)?;
    let (x, y) = xy(&ds);
    let result = ablate(&x, &y, &meta.groups, &c.classifier, c.eval.folds, c.seed)?;
    let rows = result.groups.iter().map(|g| {
        vec![
            g.group.clone(),
            g.columns.len().to_string(),
            metric_cell(&g.roc_auc),
            metric_cell(&g.f_measure),
            metric_cell(&g.roc_auc_delta),
            metric_cell(&g.f_measure_delta),
        ]
    });
    let cols = [
        "group",
        "columns",
        "roc_auc",
        "f_measure",
        "roc_auc_delta",
        "f_measure_delta",
    ];
    dir.write("ablation.csv", &csv_bytes(&header(&cols, "", 0), rows))?;
    dir.write_json("ablation.json", &result)?;
    dir.finish(c)?;
    if let Some(g) = result.largest_drop() {
        info!("largest AUC drop without {}", g.group);
    }
    Ok(())
}

fn synth(c: &PipelineConfig) -> Result<()> {
    let mut dir = StageDir::open(&c.paths.out, Stage::Synth.dir(), "synth")?;
    let (events, truth) = generate_population(&c.synth)?;
    let v = c.synth.vocab_size();
    let vocab = if v == roletrack_core::corpus::DEFAULT_NAMESPACES.len() {
        Vocabulary::namespaces()
    } else {
        Vocabulary::new((0..v).map(|i| format!("ns{i}")))?
    };
    let clock = QuarterClock::new(c.synth.epoch);
    let mut tsv = String::new();
    for e in &events {
        tsv.push_str(&format_event(e, &vocab, &clock)?);
        tsv.push('\n');
    }
    dir.write("events.tsv", tsv.as_bytes())?;
    dir.write("namespaces.txt", vocab.to_map().as_bytes())?;
    dir.write_json("truth.json", &truth)?;
    dir.finish(c)?;
    info!("generated {} events for {} users", events.len(), truth.users.len());
    Ok(())
}

fn report(c: &PipelineConfig) -> Result<()> {
    let mut dir = StageDir::open(&c.paths.out, Stage::Report.dir(), "report")?;
    // Evaluation outputs come last in the pipeline, so check them first.
    if c.plots.windows {
        let (p, bytes) = upstream(&mut dir, c, Stage::Eval, "windows.csv")?;
        let (head, rows) = read_rows(&p, &bytes)?;
        let windows = rows
            .iter()
            .enumerate()
            .map(|(i, r)| parse_cell(&p, i, &r[0]))
            .collect::<Result<Vec<usize>>>()?;
        let series = (3..head.len())
            .map(|j| (head[j].clone(), rows.iter().map(|r| r[j].parse::<f64>().ok()).collect()))
            .collect::<Vec<_>>();
        dir.write("windows.svg", plot::window_series(&windows, &series).as_bytes())?;
    }
    if c.plots.lift {
        let (p, bytes) = upstream(&mut dir, c, Stage::Eval, "lift.csv")?;
        let (_, rows) = read_rows(&p, &bytes)?;
        let points = rows
            .iter()
            .enumerate()
            .map(|(i, r)| Ok((parse_cell(&p, i, &r[0])?, parse_cell(&p, i, &r[1])?)))
            .collect::<Result<Vec<(f64, f64)>>>()?;
        dir.write("lift.svg", plot::lift_chart(&points).as_bytes())?;
    }
    if c.plots.lifespan {
        let (p, bytes) = upstream(&mut dir, c, Stage::Ingest, "lifespan.csv")?;
        let (_, rows) = read_rows(&p, &bytes)?;
        let buckets = rows
            .iter()
            .enumerate()
            .map(|(i, r)| Ok((parse_cell(&p, i, &r[0])?, parse_cell(&p, i, &r[1])?)))
            .collect::<Result<Vec<(u32, u64)>>>()?;
        dir.write("lifespan.svg", plot::lifespan_histogram(&buckets).as_bytes())?;
    }
    if c.plots.topics {
        let model = read_model(&mut dir, c)?;
        let (p, bytes) = upstream(&mut dir, c, Stage::Corpus, "vocab.txt")?;
        let vocab: Vec<String> = text(&p, bytes)?.lines().map(str::to_string).collect();
        let tracks: Vec<Vec<Vec<f64>>> = (0..model.topics())
            .map(|k| model.beta.iter().map(|slice| slice[k].clone()).collect())
            .collect();
        dir.write("topics.svg", plot::topic_evolution(&tracks, &vocab, 3).as_bytes())?;
    }
    dir.finish(c)?;
    Ok(())
}
