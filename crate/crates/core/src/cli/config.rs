use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::CliError;
use crate::effectiveness::{Gain, Metric};
use crate::outliers::{CutoffFamily, DetectionMethod, DEFAULT_ALPHA};
use crate::predictors::{Aggregation, PredictorConfig, PredictorKind, PredictorSpec};
use crate::trec_io::TopicFormat;

/// One `[[predictors]]` entry of the config file.
#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PredictorEntry {
    pub name: String,
    /// nqc, uqc, wig, qf or feature
    pub kind: String,
    pub k: Option<usize>,
    /// Feature file index (feature predictors).
    pub file: Option<usize>,
    pub feature: Option<String>,
    pub agg: Option<Aggregation>,
    pub depth: Option<usize>,
}

impl PredictorEntry {
    pub fn to_spec(&self) -> Result<PredictorSpec, CliError> {
        let kind = match self.kind.to_ascii_lowercase().as_str() {
            "nqc" => PredictorKind::Nqc { k: self.k },
            "uqc" => PredictorKind::Uqc { k: self.k },
            "wig" => PredictorKind::Wig { k: self.k },
            "qf" => PredictorKind::Qf { k: self.k },
            "feature" | "letor" => PredictorKind::Feature {
                table: self.file.unwrap_or(0),
                feature: self.feature.clone().ok_or_else(|| {
                    CliError::config(format!("predictor {}: feature predictors need 'feature'", self.name))
                })?,
                agg: self.agg,
                depth: self.depth.unwrap_or(1000),
            },
            other => {
                return Err(CliError::config(format!(
                    "predictor {}: unknown predictor kind {other:?} (expected nqc, uqc, wig, qf or feature)",
                    self.name
                )))
            }
        };
        Ok(PredictorSpec::new(self.name.clone(), kind))
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub run: Option<PathBuf>,
    pub feedback_run: Option<PathBuf>,
    pub qrels: Option<PathBuf>,
    pub topics: Option<PathBuf>,
    pub topic_format: TopicFormatName,
    pub feature_files: Vec<PathBuf>,
    /// Optional names for the features of each file, by position.
    pub feature_names: Vec<Vec<String>>,
    pub corpus_scores: Option<PathBuf>,
    /// Precomputed matrix CSV, used instead of computing predictors.
    pub matrix: Option<PathBuf>,
    /// Precomputed effectiveness CSV, used instead of run + qrels.
    pub effectiveness: Option<PathBuf>,
    pub metric: Metric,
    pub cutoff: Option<usize>,
    pub gain: Gain,
    pub alpha: f64,
    pub method: DetectionMethod,
    pub cutoff_family: CutoffFamily,
    pub out: Option<PathBuf>,
    pub predictor_config: PredictorConfig,
    pub predictors: Vec<PredictorEntry>,
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "lowercase")]
pub enum TopicFormatName {
    #[default]
    Tab,
    Colon,
}

impl From<TopicFormatName> for TopicFormat {
    fn from(f: TopicFormatName) -> Self {
        match f {
            TopicFormatName::Tab => TopicFormat::Tab,
            TopicFormatName::Colon => TopicFormat::Colon,
        }
    }
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            run: None,
            feedback_run: None,
            qrels: None,
            topics: None,
            topic_format: TopicFormatName::Tab,
            feature_files: Vec::new(),
            feature_names: Vec::new(),
            corpus_scores: None,
            matrix: None,
            effectiveness: None,
            metric: Metric::Ap,
            cutoff: None,
            gain: Gain::Linear,
            alpha: DEFAULT_ALPHA,
            method: DetectionMethod::Trc,
            cutoff_family: CutoffFamily::F,
            out: None,
            predictor_config: PredictorConfig::default(),
            predictors: Vec::new(),
        }
    }
}

impl AnalysisConfig {
    /// Parses a TOML config; relative paths are resolved against `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self, CliError> {
        let mut cfg: AnalysisConfig =
            toml::from_str(text).map_err(|e| CliError::config(format!("config file: {e}")))?;
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [
            &mut cfg.run,
            &mut cfg.feedback_run,
            &mut cfg.qrels,
            &mut cfg.topics,
            &mut cfg.corpus_scores,
            &mut cfg.matrix,
            &mut cfg.effectiveness,
            &mut cfg.out,
        ]
        .into_iter()
        .flatten()
        {
            rebase(p);
        }
        cfg.feature_files.iter_mut().for_each(rebase);
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::from_toml(&text, base)
    }

    pub fn metric_cutoff(&self) -> usize {
        self.cutoff.unwrap_or_else(|| self.metric.default_cutoff())
    }

    pub fn predictor_specs(&self) -> Result<Vec<PredictorSpec>, CliError> {
        self.predictors.iter().map(PredictorEntry::to_spec).collect()
    }

    /// Checks value ranges and that every referenced input file exists.
    pub fn validate(&self) -> Result<(), CliError> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(CliError::config(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        if self.cutoff == Some(0) {
            return Err(CliError::config("cutoff must be at least 1"));
        }
        let inputs = [
            ("run", &self.run),
            ("feedback_run", &self.feedback_run),
            ("qrels", &self.qrels),
            ("topics", &self.topics),
            ("corpus_scores", &self.corpus_scores),
            ("matrix", &self.matrix),
            ("effectiveness", &self.effectiveness),
        ];
        for (what, path) in inputs {
            if let Some(p) = path {
                if !p.is_file() {
                    return Err(CliError::config(format!("{what} file {} does not exist", p.display())));
                }
            }
        }
        for p in &self.feature_files {
            if !p.is_file() {
                return Err(CliError::config(format!("feature file {} does not exist", p.display())));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_full_config() {
        let text = r#"
run = "run.txt"
qrels = "/abs/qrels.txt"
metric = "ndcg"
cutoff = 20
alpha = 0.9
method = "classical"
cutoff_family = "chisq"
feature_files = ["f.txt"]

[predictor_config]
k_nqc = 50
aggregation = "mean"

[[predictors]]
name = "NQC"
kind = "nqc"

[[predictors]]
name = "LemurTF_IDF"
kind = "feature"
feature = "1"
agg = "max"
"#;
        let cfg = AnalysisConfig::from_toml(text, Path::new("/base")).unwrap();
        assert_eq!(cfg.run.as_deref(), Some(Path::new("/base/run.txt")));
        assert_eq!(cfg.qrels.as_deref(), Some(Path::new("/abs/qrels.txt")));
        assert_eq!(cfg.feature_files, vec![PathBuf::from("/base/f.txt")]);
        assert_eq!(cfg.metric, Metric::Ndcg);
        assert_eq!(cfg.method, DetectionMethod::Classical);
        assert_eq!(cfg.cutoff_family, CutoffFamily::ChiSquare);
        assert_eq!(cfg.predictor_config.k_nqc, 50);
        assert_eq!(cfg.predictor_config.k_wig, 5);
        assert_eq!(cfg.predictor_config.aggregation, Aggregation::Mean);
        let specs = cfg.predictor_specs().unwrap();
        assert_eq!(specs[0].kind, PredictorKind::Nqc { k: None });
        assert!(matches!(
            specs[1].kind,
            PredictorKind::Feature {
                table: 0,
                depth: 1000,
                ..
            }
        ));
    }

    #[test]
    fn unknown_kind_is_config_error() {
        let cfg =
            AnalysisConfig::from_toml("[[predictors]]\nname = \"x\"\nkind = \"clarity\"\n", Path::new(".")).unwrap();
        let err = cfg.predictor_specs().unwrap_err();
        assert_eq!(err.code, super::super::EXIT_CONFIG);
        assert!(err.message.contains("clarity"));
    }

    #[test]
    fn bad_values() {
        assert!(AnalysisConfig::from_toml("alpha = \"x\"", Path::new(".")).is_err());
        assert!(AnalysisConfig::from_toml("bogus = 1", Path::new(".")).is_err());
        let cfg = AnalysisConfig::from_toml("alpha = 1.5", Path::new(".")).unwrap();
        assert!(cfg.validate().is_err());
        let cfg = AnalysisConfig::from_toml("qrels = \"/nonexistent/q\"", Path::new(".")).unwrap();
        assert!(cfg.validate().is_err());
    }
}
