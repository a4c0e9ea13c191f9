//! `key = value` run configuration with dotted section names.
//!
//! ```text
//! # comments start with '#'
//! input.path = counts.mtx
//! qc.min_cells_per_feature = 10
//! cluster.k = bic:2..12
//! ```
//!
//! Unknown and repeated keys are errors. Relative paths resolve against the
//! directory of the config file.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::layout::LayoutParams;
use crate::mixture::{GmmConfig, KStrategy};
use crate::qc::QcConfig;
use crate::simulate::{SamplingMode, SbmConfig};
use crate::spectral::{EmbedPolicy, ScalingMode, SpectralVariant};
use crate::validate::RatioDenominator;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InputFormat {
    /// From the extension: `.tsv`/`.txt` dense, anything else MatrixMarket.
    Auto,
    MatrixMarket,
    DenseTsv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterMethod {
    Gmm,
    Kmeans,
    Louvain,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InputSection {
    pub path: Option<PathBuf>,
    pub format: InputFormat,
    /// Optional `cell_id  label` truth used only for reporting ARI.
    pub truth: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSection {
    pub enable: bool,
    pub top_k: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralSection {
    pub variant: SpectralVariant,
    pub policy: EmbedPolicy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSection {
    pub method: ClusterMethod,
    pub k: KStrategy,
    pub seed: u64,
    pub gmm: GmmConfig,
    /// Neighbours in the kNN graph used by Louvain and the modularity report.
    pub graph_k: usize,
    pub resolution: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayoutSection {
    pub enable: bool,
    pub params: LayoutParams,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidateSection {
    pub labels: Option<PathBuf>,
    pub panels: Option<PathBuf>,
    pub denominator: RatioDenominator,
    pub gate_positive: Vec<String>,
    pub gate_negative: Vec<String>,
    pub min_pos: u64,
    pub max_neg: u64,
    /// Panel whose clusters are gated; defaults to the first panel.
    pub gate_type: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub input: InputSection,
    pub qc_enable: bool,
    pub qc: QcConfig,
    pub features: FeatureSection,
    pub spectral: SpectralSection,
    pub cluster: ClusterSection,
    pub layout: LayoutSection,
    pub output: PathBuf,
    pub sbm: SbmConfig,
    pub validate: ValidateSection,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            input: InputSection {
                path: None,
                format: InputFormat::Auto,
                truth: None,
            },
            qc_enable: true,
            qc: QcConfig::default(),
            features: FeatureSection {
                enable: true,
                top_k: 2000,
            },
            spectral: SpectralSection {
                variant: SpectralVariant::Normalized,
                policy: EmbedPolicy::default(),
            },
            cluster: ClusterSection {
                method: ClusterMethod::Gmm,
                k: KStrategy::DPlusOne,
                seed: 0,
                gmm: GmmConfig::default(),
                graph_k: 20,
                resolution: 1.0,
            },
            layout: LayoutSection {
                enable: true,
                params: LayoutParams::default(),
                seed: 0,
            },
            output: PathBuf::from("out"),
            sbm: SbmConfig::planted(vec![100, 100, 100], vec![200, 200, 200], 5.0, 0.5, 0),
            validate: ValidateSection {
                labels: None,
                panels: None,
                denominator: RatioDenominator::Pooled,
                gate_positive: vec![],
                gate_negative: vec![],
                min_pos: 1,
                max_neg: 0,
                gate_type: None,
            },
        }
    }
}

struct Value<'a> {
    key: &'a str,
    raw: &'a str,
    line: usize,
    path: &'a Path,
}

impl Value<'_> {
    fn err(&self, msg: impl std::fmt::Display) -> Error {
        Error::Config(format!("{}:{}: {}: {msg}", self.path.display(), self.line, self.key))
    }

    fn parse<T: std::str::FromStr>(&self, what: &str) -> Result<T> {
        self.raw.parse().map_err(|_| self.err(format!("expected {what}, got '{}'", self.raw)))
    }

    fn usize(&self) -> Result<usize> {
        self.parse("a non-negative integer")
    }

    fn u64(&self) -> Result<u64> {
        self.parse("a non-negative integer")
    }

    fn f64(&self) -> Result<f64> {
        let v: f64 = self.parse("a number")?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(self.err("must be finite"))
        }
    }

    fn opt_f64(&self) -> Result<Option<f64>> {
        if self.raw == "none" {
            Ok(None)
        } else {
            self.f64().map(Some)
        }
    }

    fn bool(&self) -> Result<bool> {
        self.parse("true or false")
    }

    fn list(&self) -> Vec<String> {
        self.raw.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect()
    }

    fn usize_list(&self) -> Result<Vec<usize>> {
        self.list().iter().map(|t| t.parse().map_err(|_| self.err(format!("bad integer '{t}'")))).collect()
    }

    fn path(&self, base: &Path) -> PathBuf {
        let p = PathBuf::from(self.raw);
        if p.is_absolute() {
            p
        } else {
            base.join(p)
        }
    }

    fn parsed<T: std::str::FromStr<Err = Error>>(&self) -> Result<T> {
        self.raw.parse().map_err(|e: Error| self.err(e))
    }
}

impl Config {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, path, &base)
    }

    /// `path` is only used in messages; `base` anchors relative paths.
    pub fn parse(text: &str, path: &Path, base: &Path) -> Result<Self> {
        let mut cfg = Config::default();
        let mut seen = std::collections::HashSet::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, raw) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("{}:{}: expected 'key = value'", path.display(), i + 1)))?;
            let v = Value {
                key: key.trim(),
                raw: raw.trim(),
                line: i + 1,
                path,
            };
            if !seen.insert(v.key.to_string()) {
                return Err(v.err("key given twice"));
            }
            cfg.set(&v, base)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, v: &Value, base: &Path) -> Result<()> {
        match v.key {
            "input.path" => self.input.path = Some(v.path(base)),
            "input.format" => {
                self.input.format = match v.raw {
                    "auto" => InputFormat::Auto,
                    "mtx" | "matrix_market" => InputFormat::MatrixMarket,
                    "tsv" | "dense_tsv" => InputFormat::DenseTsv,
                    _ => return Err(v.err("expected auto, mtx or tsv")),
                }
            }
            "input.truth" => self.input.truth = Some(v.path(base)),

            "qc.enable" => self.qc_enable = v.bool()?,
            "qc.preset" => {
                self.qc = match v.raw {
                    "default" => QcConfig::default(),
                    "embryo" => QcConfig::embryo_preset(),
                    _ => return Err(v.err("expected default or embryo")),
                }
            }
            "qc.min_cells_per_feature" => self.qc.min_cells_per_feature = v.usize()?,
            "qc.min_features_per_cell" => self.qc.min_features_per_cell = v.usize()?,
            "qc.max_top_share" => self.qc.max_top_share = v.f64()?,
            "qc.top_share_exclude" => self.qc.top_share_exclude = v.list(),
            "qc.max_mito_share" => self.qc.max_mito_share = v.opt_f64()?,
            "qc.mito_prefix" => self.qc.mito_prefix = v.raw.to_string(),
            "qc.max_ribo_share" => self.qc.max_ribo_share = v.opt_f64()?,
            "qc.ribo_prefixes" => self.qc.ribo_prefixes = v.list(),
            "qc.shares_before_feature_filter" => self.qc.shares_before_feature_filter = v.bool()?,

            "features.enable" => self.features.enable = v.bool()?,
            "features.top_k" => self.features.top_k = v.usize()?,

            "spectral.variant" => self.spectral.variant = v.parsed()?,
            "spectral.energy_threshold" => self.spectral.policy.energy_threshold = v.f64()?,
            "spectral.drop_first" => self.spectral.policy.drop_first = v.bool()?,
            "spectral.scaling" => self.spectral.policy.scaling = v.parsed::<ScalingMode>()?,
            "spectral.share_exponent" => self.spectral.policy.share_exponent = v.parse("1 or 2")?,
            "spectral.seed" => self.spectral.policy.svd.seed = v.u64()?,

            "cluster.method" => {
                self.cluster.method = match v.raw {
                    "gmm" => ClusterMethod::Gmm,
                    "kmeans" => ClusterMethod::Kmeans,
                    "louvain" => ClusterMethod::Louvain,
                    _ => return Err(v.err("expected gmm, kmeans or louvain")),
                }
            }
            "cluster.k" => self.cluster.k = v.parsed()?,
            "cluster.seed" => self.cluster.seed = v.u64()?,
            "cluster.n_init" => self.cluster.gmm.n_init = v.usize()?,
            "cluster.max_iter" => self.cluster.gmm.max_iter = v.usize()?,
            "cluster.rel_tol" => self.cluster.gmm.rel_tol = v.f64()?,
            "cluster.ridge" => self.cluster.gmm.ridge = v.f64()?,
            "cluster.graph_k" => self.cluster.graph_k = v.usize()?,
            "cluster.resolution" => self.cluster.resolution = v.f64()?,

            "layout.enable" => self.layout.enable = v.bool()?,
            "layout.n_neighbors" => self.layout.params.n_neighbors = v.usize()?,
            "layout.epochs" => self.layout.params.epochs = v.usize()?,
            "layout.negative_samples" => self.layout.params.negative_samples = v.usize()?,
            "layout.seed" => self.layout.seed = v.u64()?,

            "output.directory" => self.output = v.path(base),

            "sbm.gene_block_sizes" => self.sbm.gene_block_sizes = v.usize_list()?,
            "sbm.cell_block_sizes" => self.sbm.cell_block_sizes = v.usize_list()?,
            "sbm.rates" => {
                // rows separated by ';', entries by ','
                self.sbm.rates = v
                    .raw
                    .split(';')
                    .map(|row| {
                        row.split(',')
                            .map(|t| t.trim().parse::<f64>().map_err(|_| v.err(format!("bad rate '{}'", t.trim()))))
                            .collect()
                    })
                    .collect::<Result<_>>()?
            }
            "sbm.seed" => self.sbm.seed = v.u64()?,
            "sbm.mode" => {
                self.sbm.mode = match v.raw {
                    "poisson" => SamplingMode::Poisson,
                    "multinomial" => SamplingMode::Multinomial { fixed_total: None },
                    _ => return Err(v.err("expected poisson or multinomial")),
                }
            }
            "sbm.cell_total" => {
                let total = if v.raw == "none" { None } else { Some(v.u64()?) };
                match &mut self.sbm.mode {
                    SamplingMode::Multinomial { fixed_total } => *fixed_total = total,
                    SamplingMode::Poisson => {
                        self.sbm.mode = SamplingMode::Multinomial { fixed_total: total };
                    }
                }
            }

            "validate.labels" => self.validate.labels = Some(v.path(base)),
            "validate.panels" => self.validate.panels = Some(v.path(base)),
            "validate.denominator" => self.validate.denominator = v.parsed()?,
            "validate.gate_positive" => self.validate.gate_positive = v.list(),
            "validate.gate_negative" => self.validate.gate_negative = v.list(),
            "validate.min_pos" => self.validate.min_pos = v.u64()?,
            "validate.max_neg" => self.validate.max_neg = v.u64()?,
            "validate.gate_type" => self.validate.gate_type = Some(v.raw.to_string()),

            _ => return Err(Error::Config(format!("{}:{}: unknown key '{}'", v.path.display(), v.line, v.key))),
        }
        Ok(())
    }

    /// Range checks that do not need any input file.
    pub fn validate(&self) -> Result<()> {
        self.qc.validate()?;
        if self.features.top_k == 0 {
            return Err(Error::Config("features.top_k must be at least 1".into()));
        }
        let e = self.spectral.policy.energy_threshold;
        if !(e > 0.0 && e < 1.0) {
            return Err(Error::Config(format!("spectral.energy_threshold must be in (0, 1), got {e}")));
        }
        if !matches!(self.spectral.policy.share_exponent, 1 | 2) {
            return Err(Error::Config("spectral.share_exponent must be 1 or 2".into()));
        }
        match self.cluster.k {
            KStrategy::Fixed(0) => return Err(Error::Config("cluster.k must be at least 1".into())),
            KStrategy::Bic { min, max } if min == 0 || min > max => {
                return Err(Error::Config(format!("cluster.k range {min}..{max} is empty")))
            }
            _ => {}
        }
        if self.cluster.gmm.n_init == 0 || self.cluster.gmm.max_iter == 0 {
            return Err(Error::Config("cluster.n_init and cluster.max_iter must be at least 1".into()));
        }
        if !(self.cluster.gmm.ridge > 0.0) || !(self.cluster.gmm.rel_tol > 0.0) {
            return Err(Error::Config("cluster.ridge and cluster.rel_tol must be positive".into()));
        }
        if self.cluster.graph_k == 0 || !(self.cluster.resolution > 0.0) {
            return Err(Error::Config("cluster.graph_k and cluster.resolution must be positive".into()));
        }
        if self.layout.params.n_neighbors < 2 || self.layout.params.epochs == 0 {
            return Err(Error::Config("layout.n_neighbors must be at least 2 and layout.epochs at least 1".into()));
        }
        Ok(())
    }

    /// One seed for every stage.
    pub fn set_all_seeds(&mut self, seed: u64) {
        self.spectral.policy.svd.seed = seed;
        self.cluster.seed = seed;
        self.layout.seed = seed;
        self.sbm.seed = seed;
    }
}
