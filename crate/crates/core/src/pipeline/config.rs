use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{CollapsePolicy, NetworkConfig, PiSource};
use crate::ingest::CsvFormat;
use crate::metrics::{
    ConnectivityMode, EigenvectorConfig, EntropyUnits, Metric, MetricsConfig, PageRankConfig,
};
use crate::stats::{DesignConfig, RemlConfig, PREDICTORS};
use crate::synth::CohortConfig;
use crate::tsc::{DbaConfig, KMeansConfig, NormalizeMode};

/// Largest cluster count accepted anywhere in the configuration.
pub const MAX_K: usize = 10;

/// Fixed cluster count, or silhouette selection over the candidates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "KRepr", into = "KRepr")]
pub enum KSetting {
    #[default]
    Auto,
    Fixed(usize),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum KRepr {
    Number(usize),
    Text(String),
}

impl TryFrom<KRepr> for KSetting {
    type Error = Error;
    fn try_from(r: KRepr) -> Result<Self> {
        match r {
            KRepr::Number(k) => Ok(KSetting::Fixed(k)),
            KRepr::Text(s) => s.parse(),
        }
    }
}

impl From<KSetting> for KRepr {
    fn from(k: KSetting) -> Self {
        match k {
            KSetting::Auto => KRepr::Text("auto".into()),
            KSetting::Fixed(k) => KRepr::Number(k),
        }
    }
}

impl FromStr for KSetting {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            return Ok(KSetting::Auto);
        }
        s.parse()
            .map(KSetting::Fixed)
            .map_err(|_| Error::Config(format!("k must be `auto` or an integer, got `{s}`")))
    }
}

impl fmt::Display for KSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KSetting::Auto => f.write_str("auto"),
            KSetting::Fixed(k) => write!(f, "{k}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputSection {
    pub fixations: Option<PathBuf>,
    pub outcomes: Option<PathBuf>,
    pub delimiter: String,
}

impl Default for InputSection {
    fn default() -> Self {
        InputSection {
            fixations: None,
            outcomes: None,
            delimiter: ",".into(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSection {
    pub collapse_policy: CollapsePolicy,
    pub pi_source: PiSource,
    /// Write one node-link JSON document per trial under `networks/`.
    pub export_networks: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsSection {
    pub entropy_units: EntropyUnits,
    pub connectivity: ConnectivityMode,
    pub pagerank_damping: f64,
    pub pagerank_tol: f64,
    pub pagerank_max_iter: usize,
    pub eigenvector_tol: f64,
    pub eigenvector_max_iter: usize,
    pub strict_eigenvector: bool,
}

impl Default for MetricsSection {
    fn default() -> Self {
        let pr = PageRankConfig::default();
        let ev = EigenvectorConfig::default();
        MetricsSection {
            entropy_units: EntropyUnits::Nats,
            connectivity: ConnectivityMode::Undirected,
            pagerank_damping: pr.damping,
            pagerank_tol: pr.tol,
            pagerank_max_iter: pr.max_iter,
            eigenvector_tol: ev.tol,
            eigenvector_max_iter: ev.max_iter,
            strict_eigenvector: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusteringSection {
    pub k: KSetting,
    pub candidates: Vec<usize>,
    pub restarts: usize,
    pub max_iter: usize,
    pub band: Option<usize>,
    pub normalize: NormalizeMode,
    pub metrics: Vec<Metric>,
    pub dba_max_iter: usize,
    pub dba_tol: f64,
}

impl Default for ClusteringSection {
    fn default() -> Self {
        let km = KMeansConfig::default();
        ClusteringSection {
            k: KSetting::Auto,
            candidates: vec![2, 3],
            restarts: km.restarts,
            max_iter: km.max_iter,
            band: None,
            normalize: NormalizeMode::Zscore,
            metrics: Metric::CLUSTERED.to_vec(),
            dba_max_iter: km.dba.max_iter,
            dba_tol: km.dba.tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LmmSection {
    /// Predictors left out of the fixed effects. The default removes
    /// `density`, which equals half of `avg_degree` on every network.
    pub drop_predictors: Vec<String>,
    pub standardize: bool,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for LmmSection {
    fn default() -> Self {
        let r = RemlConfig::default();
        LmmSection {
            drop_predictors: vec!["density".into()],
            standardize: false,
            tol: r.tol,
            max_iter: r.max_iter,
        }
    }
}

/// Every setting of a batch run. Loaded from TOML; missing keys take defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    pub jobs: usize,
    pub out_dir: PathBuf,
    pub input: InputSection,
    pub network: NetworkSection,
    pub metrics: MetricsSection,
    pub clustering: ClusteringSection,
    pub lmm: LmmSection,
    pub synth: CohortConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            jobs: 0,
            out_dir: PathBuf::from("out"),
            input: InputSection::default(),
            network: NetworkSection::default(),
            metrics: MetricsSection::default(),
            clustering: ClusteringSection::default(),
            lmm: LmmSection::default(),
            synth: CohortConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let m = &self.metrics;
        if !(m.pagerank_damping > 0.0 && m.pagerank_damping < 1.0) {
            return bad(format!(
                "pagerank_damping must lie in (0, 1), got {}",
                m.pagerank_damping
            ));
        }
        for (name, tol) in [
            ("pagerank_tol", m.pagerank_tol),
            ("eigenvector_tol", m.eigenvector_tol),
            ("clustering.dba_tol", self.clustering.dba_tol),
            ("lmm.tol", self.lmm.tol),
        ] {
            if !(tol > 0.0 && tol.is_finite()) {
                return bad(format!("{name} must be positive, got {tol}"));
            }
        }
        for (name, n) in [
            ("pagerank_max_iter", m.pagerank_max_iter),
            ("eigenvector_max_iter", m.eigenvector_max_iter),
            ("clustering.restarts", self.clustering.restarts),
            ("clustering.max_iter", self.clustering.max_iter),
            ("clustering.dba_max_iter", self.clustering.dba_max_iter),
            ("lmm.max_iter", self.lmm.max_iter),
        ] {
            if n == 0 {
                return bad(format!("{name} must be at least 1"));
            }
        }
        let c = &self.clustering;
        if c.candidates.is_empty() {
            return bad("clustering.candidates is empty".into());
        }
        if let Some(k) = c.candidates.iter().find(|k| !(2..=MAX_K).contains(*k)) {
            return bad(format!("k candidate {k} outside 2..={MAX_K}"));
        }
        if let KSetting::Fixed(k) = c.k {
            if !(2..=MAX_K).contains(&k) {
                return bad(format!("k = {k} outside 2..={MAX_K}"));
            }
        }
        if c.metrics.is_empty() {
            return bad("clustering.metrics is empty".into());
        }
        for d in &self.lmm.drop_predictors {
            if !PREDICTORS.iter().any(|(n, _)| n == d) {
                return bad(format!("unknown predictor `{d}` in lmm.drop_predictors"));
            }
        }
        self.csv_format()?;
        Ok(())
    }

    pub fn csv_format(&self) -> Result<CsvFormat> {
        match self.input.delimiter.as_bytes() {
            [b] if b.is_ascii() && *b != b'"' && *b != b'#' => Ok(CsvFormat { delimiter: *b }),
            _ => Err(Error::Config(format!(
                "delimiter must be one ASCII character, got `{}`",
                self.input.delimiter
            ))),
        }
    }

    pub fn network_config(&self) -> NetworkConfig {
        NetworkConfig {
            collapse: self.network.collapse_policy,
        }
    }

    pub fn metrics_config(&self) -> MetricsConfig {
        let m = &self.metrics;
        MetricsConfig {
            pi_source: self.network.pi_source,
            entropy_units: m.entropy_units,
            pagerank: PageRankConfig {
                damping: m.pagerank_damping,
                tol: m.pagerank_tol,
                max_iter: m.pagerank_max_iter,
            },
            eigenvector: EigenvectorConfig {
                tol: m.eigenvector_tol,
                max_iter: m.eigenvector_max_iter,
            },
            connectivity: m.connectivity,
            strict_eigenvector: m.strict_eigenvector,
        }
    }

    pub fn kmeans_config(&self, k: usize) -> KMeansConfig {
        let c = &self.clustering;
        KMeansConfig {
            k,
            restarts: c.restarts,
            max_iter: c.max_iter,
            seed: self.seed,
            band: c.band,
            dba: DbaConfig {
                max_iter: c.dba_max_iter,
                tol: c.dba_tol,
                band: c.band,
            },
        }
    }

    pub fn design_config(&self) -> DesignConfig {
        DesignConfig {
            drop: self.lmm.drop_predictors.clone(),
            standardize: self.lmm.standardize,
        }
    }

    pub fn reml_config(&self) -> RemlConfig {
        RemlConfig {
            tol: self.lmm.tol,
            max_iter: self.lmm.max_iter,
        }
    }

    pub fn fixations_path(&self) -> Result<&Path> {
        self.input.fixations.as_deref().ok_or_else(|| {
            Error::Config("no fixations file given (--fixations or input.fixations)".into())
        })
    }

    pub fn outcomes_path(&self) -> Result<&Path> {
        self.input.outcomes.as_deref().ok_or_else(|| {
            Error::Config("no outcomes file given (--outcomes or input.outcomes)".into())
        })
    }
}
