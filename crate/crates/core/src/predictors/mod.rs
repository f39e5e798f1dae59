//! Post-retrieval query performance predictors.
//!
//! Score-based predictors (NQC, UQC, WIG) read the retrieval scores of the
//! primary run; QF compares the primary ranking with a user-supplied
//! feedback run; Letor-style features are aggregated over the retrieved
//! documents of each query.

mod matrix;

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

pub use matrix::QueryFeatureMatrix;

use crate::error::{QppError, Result};
use crate::exec::Execution;
use crate::trec_io::{FeatureTable, RunSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusScoreMode {
    /// Per-query corpus score read from an external file.
    Provided,
    /// Mean of all scores in the query's retrieved list.
    #[default]
    MeanOfFullList,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    #[default]
    Max,
    Mean,
    Std,
    Sum,
    Min,
}

impl Aggregation {
    pub fn apply(self, values: &[f64]) -> Option<f64> {
        if values.is_empty() {
            return None;
        }
        Some(match self {
            Aggregation::Max => values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            Aggregation::Min => values.iter().copied().fold(f64::INFINITY, f64::min),
            Aggregation::Sum => values.iter().sum(),
            Aggregation::Mean => mean(values),
            Aggregation::Std => population_std(values),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PredictorConfig {
    pub k_nqc: usize,
    pub k_wig: usize,
    pub k_qf: usize,
    pub corpus_score_mode: CorpusScoreMode,
    pub aggregation: Aggregation,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self {
            k_nqc: 100,
            k_wig: 5,
            k_qf: 50,
            corpus_score_mode: CorpusScoreMode::MeanOfFullList,
            aggregation: Aggregation::Max,
        }
    }
}

impl PredictorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_nqc == 0 || self.k_wig == 0 || self.k_qf == 0 {
            return Err(QppError::invalid("predictor cutoffs k must be at least 1"));
        }
        Ok(())
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn population_std(xs: &[f64]) -> f64 {
    let mu = mean(xs);
    (xs.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / xs.len() as f64).sqrt()
}

fn top_k(scores: &[f64], k: usize) -> Result<&[f64]> {
    if scores.is_empty() {
        return Err(QppError::invalid("empty score list"));
    }
    if k == 0 {
        return Err(QppError::invalid("k must be at least 1"));
    }
    Ok(&scores[..k.min(scores.len())])
}

/// Normalized query commitment: population standard deviation of the top-k
/// scores divided by `|corpus_score|`.
pub fn nqc(scores: &[f64], corpus_score: f64, k: usize) -> Result<f64> {
    let top = top_k(scores, k)?;
    if corpus_score == 0.0 || !corpus_score.is_finite() {
        return Err(QppError::invalid("NQC needs a finite non-zero corpus score"));
    }
    Ok(population_std(top) / corpus_score.abs())
}

/// Unnormalized query commitment: population standard deviation of the
/// top-k scores.
pub fn uqc(scores: &[f64], k: usize) -> Result<f64> {
    Ok(population_std(top_k(scores, k)?))
}

/// Weighted information gain: mean excess of the top-k scores over the
/// corpus score, divided by `sqrt(term_count)`.
pub fn wig(scores: &[f64], corpus_score: f64, term_count: usize, k: usize) -> Result<f64> {
    let top = top_k(scores, k)?;
    if term_count == 0 {
        return Err(QppError::invalid("WIG needs a query with at least one term"));
    }
    let excess = top.iter().map(|s| s - corpus_score).sum::<f64>() / top.len() as f64;
    Ok(excess / (term_count as f64).sqrt())
}

/// Query feedback: overlap of the top-k of two rankings, divided by `k`.
pub fn qf<S: AsRef<str>>(primary: &[S], feedback: &[S], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(QppError::invalid("QF needs k >= 1"));
    }
    let fb: HashSet<&str> = feedback.iter().take(k).map(AsRef::as_ref).collect();
    let overlap = primary.iter().take(k).filter(|d| fb.contains(d.as_ref())).count();
    Ok(overlap as f64 / k as f64)
}

/// Aggregates one feature over the top `depth` retrieved documents of a
/// query. `Ok(None)` means none of those documents is in the table.
pub fn aggregate_feature(
    table: &FeatureTable,
    run: &RunSet,
    query_id: &str,
    feature_name: &str,
    agg: Aggregation,
    depth: usize,
) -> Result<Option<f64>> {
    let j = table
        .feature_index(feature_name)
        .ok_or_else(|| QppError::invalid(format!("feature {feature_name:?} not in feature table")))?;
    let Some(entries) = run.get(query_id) else {
        return Ok(None);
    };
    let values: Vec<f64> = entries
        .iter()
        .take(depth)
        .filter_map(|e| table.get(query_id, &e.doc_id).map(|v| v[j]))
        .collect();
    Ok(agg.apply(&values))
}

/// What a matrix column is computed from.
#[derive(Debug, Clone, PartialEq)]
pub enum PredictorKind {
    Nqc {
        k: Option<usize>,
    },
    Uqc {
        k: Option<usize>,
    },
    Wig {
        k: Option<usize>,
    },
    Qf {
        k: Option<usize>,
    },
    Feature {
        /// Index into [`PredictorInputs::feature_tables`].
        table: usize,
        feature: String,
        agg: Option<Aggregation>,
        depth: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictorSpec {
    /// Column name in the matrix.
    pub name: String,
    pub kind: PredictorKind,
}

impl PredictorSpec {
    pub fn new(name: impl Into<String>, kind: PredictorKind) -> Self {
        Self {
            name: name.into(),
            kind,
        }
    }
}

/// Everything the predictors may read. Only the primary run is mandatory.
#[derive(Debug, Clone, Copy)]
pub struct PredictorInputs<'a> {
    pub run: &'a RunSet,
    pub feedback_run: Option<&'a RunSet>,
    /// query id → number of query terms.
    pub term_counts: Option<&'a BTreeMap<String, usize>>,
    pub feature_tables: &'a [FeatureTable],
    /// query id → corpus score, used in [`CorpusScoreMode::Provided`].
    pub corpus_scores: Option<&'a BTreeMap<String, f64>>,
}

impl<'a> PredictorInputs<'a> {
    pub fn new(run: &'a RunSet) -> Self {
        Self {
            run,
            feedback_run: None,
            term_counts: None,
            feature_tables: &[],
            corpus_scores: None,
        }
    }
}

/// Parses a per-query corpus-score file `query_id,score` (a header row is
/// optional).
pub fn parse_corpus_scores(text: &str) -> Result<BTreeMap<String, f64>> {
    let mut out = BTreeMap::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (q, s) = line
            .split_once(',')
            .ok_or_else(|| QppError::parse(lineno, "expected 'query_id,score'"))?;
        let (q, s) = (q.trim(), s.trim());
        if lineno == 1 && q == "query_id" {
            continue;
        }
        let v: f64 = s
            .parse()
            .map_err(|_| QppError::parse(lineno, format!("score {s:?} is not a number")))?;
        if out.insert(q.to_string(), v).is_some() {
            return Err(QppError::parse(lineno, format!("duplicate query id {q}")));
        }
    }
    Ok(out)
}

fn check_spec(spec: &PredictorSpec, inputs: &PredictorInputs, config: &PredictorConfig) -> Result<()> {
    let needs_corpus = matches!(spec.kind, PredictorKind::Nqc { .. } | PredictorKind::Wig { .. });
    if needs_corpus && config.corpus_score_mode == CorpusScoreMode::Provided && inputs.corpus_scores.is_none() {
        return Err(QppError::invalid(format!(
            "predictor {}: corpus_score_mode is 'provided' but no corpus-score file was given",
            spec.name
        )));
    }
    match &spec.kind {
        PredictorKind::Nqc { k } | PredictorKind::Uqc { k } | PredictorKind::Qf { k } | PredictorKind::Wig { k }
            if *k == Some(0) =>
        {
            Err(QppError::invalid(format!(
                "predictor {}: k must be at least 1",
                spec.name
            )))
        }
        PredictorKind::Wig { .. } if inputs.term_counts.is_none() => Err(QppError::invalid(format!(
            "predictor {}: WIG needs a topics file",
            spec.name
        ))),
        PredictorKind::Qf { .. } if inputs.feedback_run.is_none() => Err(QppError::invalid(format!(
            "predictor {}: QF needs a feedback run",
            spec.name
        ))),
        PredictorKind::Feature {
            table, feature, depth, ..
        } => {
            let t = inputs
                .feature_tables
                .get(*table)
                .ok_or_else(|| QppError::invalid(format!("predictor {}: no feature file #{table}", spec.name)))?;
            if t.feature_index(feature).is_none() {
                return Err(QppError::invalid(format!(
                    "predictor {}: feature {feature:?} not in feature file #{table}",
                    spec.name
                )));
            }
            if *depth == 0 {
                return Err(QppError::invalid(format!(
                    "predictor {}: depth must be at least 1",
                    spec.name
                )));
            }
            Ok(())
        }
        _ => Ok(()),
    }
}

fn corpus_score(query_id: &str, scores: &[f64], inputs: &PredictorInputs, config: &PredictorConfig) -> Option<f64> {
    match config.corpus_score_mode {
        CorpusScoreMode::MeanOfFullList => Some(mean(scores)),
        CorpusScoreMode::Provided => inputs.corpus_scores?.get(query_id).copied(),
    }
}

/// Computes one cell; `None` marks it missing.
fn cell(query_id: &str, spec: &PredictorSpec, inputs: &PredictorInputs, config: &PredictorConfig) -> Option<f64> {
    let scores = inputs.run.scores(query_id)?;
    let value = match &spec.kind {
        PredictorKind::Nqc { k } => {
            let c = corpus_score(query_id, &scores, inputs, config)?;
            nqc(&scores, c, k.unwrap_or(config.k_nqc)).ok()
        }
        PredictorKind::Uqc { k } => uqc(&scores, k.unwrap_or(config.k_nqc)).ok(),
        PredictorKind::Wig { k } => {
            let c = corpus_score(query_id, &scores, inputs, config)?;
            let terms = *inputs.term_counts?.get(query_id)?;
            wig(&scores, c, terms, k.unwrap_or(config.k_wig)).ok()
        }
        PredictorKind::Qf { k } => {
            let primary = inputs.run.ranking(query_id)?;
            let feedback = inputs.feedback_run?.ranking(query_id)?;
            qf(&primary, &feedback, k.unwrap_or(config.k_qf)).ok()
        }
        PredictorKind::Feature {
            table,
            feature,
            agg,
            depth,
        } => aggregate_feature(
            &inputs.feature_tables[*table],
            inputs.run,
            query_id,
            feature,
            agg.unwrap_or(config.aggregation),
            *depth,
        )
        .ok()
        .flatten(),
    };
    value.filter(|v| v.is_finite())
}

/// Assembles the queries × predictors matrix. Rows are all queries of the
/// primary run, columns follow `specs`; cells a predictor cannot compute
/// for a query are masked missing.
pub fn build_feature_matrix(
    config: &PredictorConfig,
    inputs: &PredictorInputs,
    specs: &[PredictorSpec],
) -> Result<QueryFeatureMatrix> {
    build_feature_matrix_with(Execution::default(), config, inputs, specs)
}

pub fn build_feature_matrix_with(
    exec: Execution,
    config: &PredictorConfig,
    inputs: &PredictorInputs,
    specs: &[PredictorSpec],
) -> Result<QueryFeatureMatrix> {
    config.validate()?;
    if specs.is_empty() {
        return Err(QppError::invalid("no predictors requested"));
    }
    if inputs.run.is_empty() {
        return Err(QppError::invalid("primary run has no queries"));
    }
    for spec in specs {
        check_spec(spec, inputs, config)?;
    }
    let query_ids: Vec<String> = inputs.run.query_ids().map(str::to_string).collect();
    let rows: Vec<Vec<Option<f64>>> = exec.map(&query_ids, |q| {
        specs.iter().map(|s| cell(q, s, inputs, config)).collect()
    });
    let mut values = Vec::with_capacity(query_ids.len() * specs.len());
    let mut missing = Vec::with_capacity(values.capacity());
    for row in rows {
        for c in row {
            values.push(c.unwrap_or(0.0));
            missing.push(c.is_none());
        }
    }
    let names = specs.iter().map(|s| s.name.clone()).collect();
    QueryFeatureMatrix::with_missing(query_ids, names, values, missing)
}
