//! Per-query effectiveness: AP@k and nDCG@k.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{QppError, Result};
use crate::exec::Execution;
use crate::trec_io::{QrelsSet, RunSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Ap,
    Ndcg,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Ap => "ap",
            Metric::Ndcg => "ndcg",
        }
    }

    /// Cutoff used when none is configured: AP@1000, nDCG@20.
    pub fn default_cutoff(self) -> usize {
        match self {
            Metric::Ap => 1000,
            Metric::Ndcg => 20,
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = QppError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ap" | "map" => Ok(Metric::Ap),
            "ndcg" => Ok(Metric::Ndcg),
            other => Err(QppError::invalid(format!("unknown metric {other:?}"))),
        }
    }
}

/// Gain function for nDCG.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gain {
    /// `gain(g) = g`
    #[default]
    Linear,
    /// `gain(g) = 2^g − 1`
    Exponential,
}

impl Gain {
    fn apply(self, grade: u32) -> f64 {
        match self {
            Gain::Linear => grade as f64,
            Gain::Exponential => 2f64.powi(grade as i32) - 1.0,
        }
    }
}

/// AP at `cutoff`, normalized by the total number of relevant documents
/// (grade ≥ 1) in the judgments, not capped at the cutoff.
pub fn average_precision<S: AsRef<str>>(ranking: &[S], rels: &BTreeMap<String, u32>, cutoff: usize) -> f64 {
    let total_relevant = rels.values().filter(|&&g| g >= 1).count();
    if total_relevant == 0 {
        return 0.0;
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, doc) in ranking.iter().take(cutoff).enumerate() {
        if rels.get(doc.as_ref()).is_some_and(|&g| g >= 1) {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    sum / total_relevant as f64
}

fn dcg(grades: impl Iterator<Item = u32>, gain: Gain) -> f64 {
    grades
        .enumerate()
        .map(|(i, g)| gain.apply(g) / ((i + 2) as f64).log2())
        .sum()
}

/// nDCG at `cutoff` with linear gain and `log2(i + 1)` discount.
pub fn ndcg<S: AsRef<str>>(ranking: &[S], rels: &BTreeMap<String, u32>, cutoff: usize) -> f64 {
    ndcg_with_gain(ranking, rels, cutoff, Gain::Linear)
}

pub fn ndcg_with_gain<S: AsRef<str>>(ranking: &[S], rels: &BTreeMap<String, u32>, cutoff: usize, gain: Gain) -> f64 {
    let mut ideal: Vec<u32> = rels.values().copied().collect();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg = dcg(ideal.into_iter().take(cutoff), gain);
    if idcg <= 0.0 {
        return 0.0;
    }
    let actual = dcg(
        ranking
            .iter()
            .take(cutoff)
            .map(|d| rels.get(d.as_ref()).copied().unwrap_or(0)),
        gain,
    );
    (actual / idcg).min(1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EffectivenessVector {
    pub metric: Metric,
    pub cutoff: usize,
    pub scores: BTreeMap<String, f64>,
    pub mean: f64,
    /// Run queries without judgments; not scored.
    pub unjudged_queries: Vec<String>,
}

impl EffectivenessVector {
    pub fn from_scores(metric: Metric, cutoff: usize, scores: BTreeMap<String, f64>) -> Result<Self> {
        if scores.values().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(QppError::invalid("effectiveness scores must lie in [0, 1]"));
        }
        let mean = if scores.is_empty() {
            0.0
        } else {
            scores.values().sum::<f64>() / scores.len() as f64
        };
        Ok(Self {
            metric,
            cutoff,
            scores,
            mean,
            unjudged_queries: Vec::new(),
        })
    }

    pub fn get(&self, query_id: &str) -> Option<f64> {
        self.scores.get(query_id).copied()
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn label(&self) -> String {
        format!("{}@{}", self.metric.as_str(), self.cutoff)
    }

    /// `query_id,<metric>@<cutoff>` rows followed by an `all,<mean>` row.
    pub fn to_csv(&self) -> String {
        let mut out = format!("query_id,{}\n", self.label());
        for (q, s) in &self.scores {
            let _ = writeln!(out, "{q},{s}");
        }
        let _ = writeln!(out, "all,{}", self.mean);
        out
    }

    /// Reads the format written by [`EffectivenessVector::to_csv`]. The
    /// `all` row is recomputed, not trusted.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines
            .next()
            .ok_or_else(|| QppError::parse(1, "empty effectiveness file"))?;
        let label = header
            .strip_prefix("query_id,")
            .ok_or_else(|| QppError::parse(1, "header must be 'query_id,<metric>@<cutoff>'"))?;
        let (metric, cutoff) = label
            .split_once('@')
            .ok_or_else(|| QppError::parse(1, "header must be 'query_id,<metric>@<cutoff>'"))?;
        let metric: Metric = metric
            .parse()
            .map_err(|e: QppError| QppError::parse(1, e.to_string()))?;
        let cutoff: usize = cutoff
            .trim()
            .parse()
            .map_err(|_| QppError::parse(1, format!("bad cutoff {cutoff:?}")))?;
        let mut scores = BTreeMap::new();
        for (idx, line) in lines {
            let lineno = idx + 1;
            let (q, v) = line
                .split_once(',')
                .ok_or_else(|| QppError::parse(lineno, "expected 'query_id,score'"))?;
            let q = q.trim();
            if q == "all" {
                continue;
            }
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| QppError::parse(lineno, format!("bad score {v:?}")))?;
            if !(0.0..=1.0).contains(&v) {
                return Err(QppError::parse(lineno, format!("score {v} outside [0, 1]")));
            }
            if scores.insert(q.to_string(), v).is_some() {
                return Err(QppError::parse(lineno, format!("duplicate query id {q}")));
            }
        }
        Self::from_scores(metric, cutoff, scores)
    }
}

/// Scores every judged query. Judged queries missing from the run score 0;
/// run queries without judgments are listed in `unjudged_queries`.
pub fn evaluate_run(run: &RunSet, qrels: &QrelsSet, metric: Metric, cutoff: usize) -> Result<EffectivenessVector> {
    evaluate_run_with(Execution::default(), run, qrels, metric, cutoff, Gain::Linear)
}

pub fn evaluate_run_with(
    exec: Execution,
    run: &RunSet,
    qrels: &QrelsSet,
    metric: Metric,
    cutoff: usize,
    gain: Gain,
) -> Result<EffectivenessVector> {
    if cutoff == 0 {
        return Err(QppError::invalid("metric cutoff must be at least 1"));
    }
    let queries: Vec<&str> = qrels.query_ids().collect();
    let values = exec.map(&queries, |&q| {
        let rels = qrels.get(q).expect("query id taken from qrels");
        let ranking = run.ranking(q).unwrap_or_default();
        match metric {
            Metric::Ap => average_precision(&ranking, rels, cutoff),
            Metric::Ndcg => ndcg_with_gain(&ranking, rels, cutoff, gain),
        }
    });
    let scores: BTreeMap<String, f64> = queries.iter().map(|q| q.to_string()).zip(values).collect();
    let mut out = EffectivenessVector::from_scores(metric, cutoff, scores)?;
    out.unjudged_queries = run
        .query_ids()
        .filter(|q| qrels.get(q).is_none())
        .map(str::to_string)
        .collect();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trec_io::{parse_qrels, parse_run};
    use approx::assert_abs_diff_eq;

    fn rels(pairs: &[(&str, u32)]) -> BTreeMap<String, u32> {
        pairs.iter().map(|(d, g)| (d.to_string(), *g)).collect()
    }

    #[test]
    fn ap_examples() {
        let r = rels(&[("a", 1), ("c", 2), ("x", 0)]);
        assert_abs_diff_eq!(
            average_precision(&["a", "b", "c"], &r, 1000),
            (1.0 + 2.0 / 3.0) / 2.0,
            epsilon = 1e-15
        );
        assert_eq!(average_precision(&["c", "a", "b"], &r, 1000), 1.0);
        assert_eq!(average_precision(&["a"], &rels(&[("a", 0)]), 10), 0.0);
        assert_eq!(average_precision::<&str>(&[], &r, 10), 0.0);
        // R is not capped at the cutoff
        assert_abs_diff_eq!(average_precision(&["a", "c"], &r, 1), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn ndcg_examples() {
        let r = rels(&[("a", 3), ("b", 1), ("c", 2)]);
        assert_abs_diff_eq!(ndcg(&["a", "c", "b"], &r, 20), 1.0, epsilon = 1e-15);
        let r = rels(&[("b", 1)]);
        assert_abs_diff_eq!(ndcg(&["a", "b"], &r, 2), 1.0 / 3f64.log2(), epsilon = 1e-15);
        assert_abs_diff_eq!(ndcg(&["a", "b"], &r, 2), 0.630_929_753_571_457_4, epsilon = 1e-15);
        assert_eq!(ndcg(&["a"], &rels(&[("a", 0)]), 5), 0.0);
        let r = rels(&[("a", 2), ("b", 1)]);
        // exp gain: (1/1 + 3/log2 3) / (3/1 + 1/log2 3)
        let l3 = 3f64.log2();
        assert_abs_diff_eq!(
            ndcg_with_gain(&["b", "a"], &r, 10, Gain::Exponential),
            (1.0 + 3.0 / l3) / (3.0 + 1.0 / l3),
            epsilon = 1e-15
        );
    }

    #[test]
    fn evaluate_two_queries() {
        let run =
            parse_run("1 Q0 a 1 3 t\n1 Q0 b 2 2 t\n1 Q0 c 3 1 t\n2 Q0 x 1 2 t\n2 Q0 y 2 1 t\n9 Q0 z 1 1 t\n").unwrap();
        let qrels = parse_qrels("1 0 a 1\n1 0 c 1\n2 0 y 1\n3 0 k 1\n").unwrap().qrels;
        let ev = evaluate_run(&run, &qrels, Metric::Ap, 1000).unwrap();
        assert_abs_diff_eq!(ev.get("1").unwrap(), 5.0 / 6.0, epsilon = 1e-15);
        assert_abs_diff_eq!(ev.get("2").unwrap(), 0.5, epsilon = 1e-15);
        assert_eq!(ev.get("3"), Some(0.0));
        assert_eq!(ev.get("9"), None);
        assert_eq!(ev.unjudged_queries, vec!["9".to_string()]);
        assert_abs_diff_eq!(ev.mean, (5.0 / 6.0 + 0.5) / 3.0, epsilon = 1e-15);
        assert!(evaluate_run(&run, &qrels, Metric::Ap, 0).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let mut s = BTreeMap::new();
        s.insert("1".to_string(), 5.0 / 6.0);
        s.insert("2".to_string(), 0.5);
        let ev = EffectivenessVector::from_scores(Metric::Ndcg, 20, s).unwrap();
        let text = ev.to_csv();
        assert_eq!(
            text,
            "query_id,ndcg@20\n1,0.8333333333333334\n2,0.5\nall,0.6666666666666667\n"
        );
        assert_eq!(EffectivenessVector::from_csv(&text).unwrap(), ev);
        assert!(EffectivenessVector::from_csv("query_id,ap\n").is_err());
        assert!(EffectivenessVector::from_csv("query_id,ap@10\nq,1.5\n").is_err());
    }
}
