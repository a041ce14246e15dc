//! Pipeline configuration, read from a TOML file with one table per stage.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use roletrack_core::churn::ChurnConfig;
use roletrack_core::classify::TrainerConfig;
use roletrack_core::dtm::DtmConfig;
use roletrack_core::evaluate::default_fractions;
use roletrack_core::nmf::NmfParams;
use roletrack_core::synth::SynthConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

/// Environment variable that may override the output directory. No other
/// setting can come from the environment.
pub const OUT_ENV: &str = "ROLETRACK_OUT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Event TSV. Defaults to `<out>/synth/events.tsv`.
    pub events: Option<PathBuf>,
    /// `name=id` lines. Defaults to the 28 standard namespaces.
    pub namespace_map: Option<PathBuf>,
    pub out: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            events: None,
            namespace_map: None,
            out: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestSection {
    pub epoch: NaiveDate,
    /// Analysis horizon: records at or after this quarter are dropped.
    /// Defaults to one past the last quarter seen.
    pub quarters: Option<u32>,
    pub single_quarter_fraction: f64,
}

impl Default for IngestSection {
    fn default() -> Self {
        Self {
            epoch: NaiveDate::from_ymd_opt(2001, 1, 1).expect("valid date"),
            quarters: None,
            single_quarter_fraction: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NmfSection {
    pub clusters: usize,
    pub min_active_quarters: usize,
    /// Mean POAP a role needs to be listed as dominant in the cluster report.
    pub role_threshold: f64,
    pub max_iter: usize,
    pub tol: f64,
    pub inner_tol: f64,
    pub inner_max_iter: usize,
}

impl Default for NmfSection {
    fn default() -> Self {
        let p = NmfParams::default();
        Self {
            clusters: 10,
            min_active_quarters: 4,
            role_threshold: 0.15,
            max_iter: p.max_iter,
            tol: p.tol,
            inner_tol: p.inner_tol,
            inner_max_iter: p.inner_max_iter,
        }
    }
}

impl NmfSection {
    pub fn params(&self) -> NmfParams {
        NmfParams {
            max_iter: self.max_iter,
            tol: self.tol,
            inner_tol: self.inner_tol,
            inner_max_iter: self.inner_max_iter,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub folds: usize,
    pub threshold: f64,
    pub lift_fractions: Vec<f64>,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            folds: 10,
            threshold: 0.5,
            lift_fractions: default_fractions(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Plots {
    pub lifespan: bool,
    pub topics: bool,
    pub windows: bool,
    pub lift: bool,
}

impl Default for Plots {
    fn default() -> Self {
        Self {
            lifespan: true,
            topics: true,
            windows: true,
            lift: true,
        }
    }
}

/// Everything a run needs. The global `seed` is copied into the DTM and
/// synth sections, so their own `seed` keys have no effect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub paths: Paths,
    pub ingest: IngestSection,
    pub dtm: DtmConfig,
    pub nmf: NmfSection,
    pub churn: ChurnConfig,
    pub classifier: TrainerConfig,
    pub eval: EvalSection,
    pub plots: Plots,
    pub synth: SynthConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            paths: Paths::default(),
            ingest: IngestSection::default(),
            dtm: DtmConfig::new(7),
            nmf: NmfSection::default(),
            churn: ChurnConfig::default(),
            classifier: TrainerConfig::default(),
            eval: EvalSection::default(),
            plots: Plots::default(),
            synth: SynthConfig::default(),
        }
    }
}

fn invalid(section: &str, e: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("[{section}] {e}"))
}

impl PipelineConfig {
    /// Parses TOML text. Relative paths are taken relative to `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self> {
        let raw: toml::Table = text.parse().map_err(|e| CliError::Config(format!("{e}")))?;
        let alpha_given = raw
            .get("dtm")
            .and_then(|d| d.as_table())
            .is_some_and(|d| d.contains_key("alpha"));
        let mut config: PipelineConfig = toml::Value::Table(raw)
            .try_into()
            .map_err(|e| CliError::Config(format!("{e}")))?;
        if !alpha_given {
            config.dtm.alpha = DtmConfig::new(config.dtm.topics.max(1)).alpha;
        }
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = config.paths.events.as_mut() {
            rebase(p);
        }
        if let Some(p) = config.paths.namespace_map.as_mut() {
            rebase(p);
        }
        rebase(&mut config.paths.out);
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                CliError::missing(path, Some("config file".to_string()))
            } else {
                CliError::io(path, e)
            }
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        Self::from_toml(&text, base)
    }

    /// Applies the command-line and environment overrides, propagates the
    /// seed and validates. `--out` beats `ROLETRACK_OUT` beats the file.
    pub fn finish(mut self, seed: Option<u64>, out: Option<PathBuf>) -> Result<Self> {
        if let Some(s) = seed {
            self.seed = s;
        }
        if let Some(o) = out {
            self.paths.out = o;
        } else if let Some(o) = std::env::var_os(OUT_ENV) {
            self.paths.out = PathBuf::from(o);
        }
        self.dtm.seed = self.seed;
        self.synth.seed = self.seed;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, section: &str, msg: &str| {
            if ok {
                Ok(())
            } else {
                Err(invalid(section, msg))
            }
        };
        let f = self.ingest.single_quarter_fraction;
        check(
            (0.0..=1.0).contains(&f),
            "ingest",
            "single_quarter_fraction must be in [0, 1]",
        )?;
        self.dtm.validate().map_err(|e| invalid("dtm", e))?;
        check(self.nmf.clusters >= 1, "nmf", "clusters must be >= 1")?;
        check(self.nmf.tol >= 0.0, "nmf", "tol must be >= 0")?;
        check(self.nmf.inner_tol > 0.0, "nmf", "inner_tol must be > 0")?;
        self.churn.validate().map_err(|e| invalid("churn", e))?;
        if let TrainerConfig::RandomForest(c) = &self.classifier {
            check(c.n_trees >= 1, "classifier", "n_trees must be >= 1")?;
            check(c.min_leaf >= 1, "classifier", "min_leaf must be >= 1")?;
            check(
                c.features_per_split != Some(0),
                "classifier",
                "features_per_split must be >= 1",
            )?;
        }
        check(self.eval.folds >= 2, "eval", "folds must be >= 2")?;
        check(
            (0.0..=1.0).contains(&self.eval.threshold),
            "eval",
            "threshold must be in [0, 1]",
        )?;
        check(
            self.eval.lift_fractions.iter().all(|s| *s > 0.0 && *s <= 1.0),
            "eval",
            "lift fractions must be in (0, 1]",
        )?;
        self.synth.validate().map_err(|e| invalid("synth", e))
    }

    /// SHA-256 of the effective configuration without the output directory,
    /// so identical runs into different directories share a hash.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.paths.out = PathBuf::new();
        let json = serde_json::to_string(&c).expect("config serialises");
        hex(&Sha256::digest(json.as_bytes()))
    }

    pub fn events_path(&self) -> PathBuf {
        self.paths
            .events
            .clone()
            .unwrap_or_else(|| self.paths.out.join("synth").join("events.tsv"))
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
