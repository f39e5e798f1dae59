//! Readers and writers for the evaluation file formats: TREC runs and qrels,
//! flat topic files, Letor-style feature files and CSV predictor matrices.

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;

use crate::error::{QppError, Result};
use crate::predictors::QueryFeatureMatrix;

/// Token used for missing cells in CSV matrices.
pub const MISSING_TOKEN: &str = "NA";

#[derive(Debug, Clone, PartialEq)]
pub struct RunEntry {
    pub query_id: String,
    pub doc_id: String,
    /// 1-based rank after re-sorting by score.
    pub rank: usize,
    /// Rank column as written in the input file, kept for diagnostics only.
    pub input_rank: i64,
    pub score: f64,
    pub run_tag: String,
}

/// Ranked results per query. Within a query the entries are sorted by score
/// descending (ties broken by ascending doc id) and ranks are `1..=len`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunSet {
    queries: BTreeMap<String, Vec<RunEntry>>,
}

impl RunSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a run from `(query_id, doc_id, score)` triples, applying the
    /// same normalization as [`parse_run`].
    pub fn from_scores<I, Q, D>(tag: &str, triples: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Q, D, f64)>,
        Q: Into<String>,
        D: Into<String>,
    {
        let mut raw: BTreeMap<String, Vec<RunEntry>> = BTreeMap::new();
        for (i, (q, d, score)) in triples.into_iter().enumerate() {
            let entry = RunEntry {
                query_id: q.into(),
                doc_id: d.into(),
                rank: 0,
                input_rank: i as i64 + 1,
                score,
                run_tag: tag.to_string(),
            };
            if !score.is_finite() {
                return Err(QppError::parse(i + 1, "score is not finite"));
            }
            raw.entry(entry.query_id.clone()).or_default().push(entry);
        }
        Self::normalize(raw, None)
    }

    fn normalize(
        mut raw: BTreeMap<String, Vec<RunEntry>>,
        lines: Option<&BTreeMap<(String, String), usize>>,
    ) -> Result<Self> {
        for entries in raw.values_mut() {
            entries.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.doc_id.cmp(&b.doc_id)));
            for pair in entries.windows(2) {
                if pair[0].doc_id == pair[1].doc_id {
                    let key = (pair[1].query_id.clone(), pair[1].doc_id.clone());
                    let line = lines.and_then(|l| l.get(&key).copied()).unwrap_or(0);
                    return Err(QppError::Duplicate {
                        line,
                        query_id: key.0,
                        doc_id: key.1,
                    });
                }
            }
            for (i, e) in entries.iter_mut().enumerate() {
                e.rank = i + 1;
            }
        }
        Ok(Self { queries: raw })
    }

    pub fn get(&self, query_id: &str) -> Option<&[RunEntry]> {
        self.queries.get(query_id).map(Vec::as_slice)
    }

    pub fn query_ids(&self) -> impl Iterator<Item = &str> {
        self.queries.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[RunEntry])> {
        self.queries.iter().map(|(q, v)| (q.as_str(), v.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    /// Scores of a query in rank order.
    pub fn scores(&self, query_id: &str) -> Option<Vec<f64>> {
        self.get(query_id).map(|es| es.iter().map(|e| e.score).collect())
    }

    /// Doc ids of a query in rank order.
    pub fn ranking(&self, query_id: &str) -> Option<Vec<&str>> {
        self.get(query_id)
            .map(|es| es.iter().map(|e| e.doc_id.as_str()).collect())
    }
}

/// Parses a six-column TREC run: `qid Q0 docid rank score tag`.
pub fn parse_run(text: &str) -> Result<RunSet> {
    let mut raw: BTreeMap<String, Vec<RunEntry>> = BTreeMap::new();
    let mut seen: BTreeMap<(String, String), usize> = BTreeMap::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() != 6 {
            return Err(QppError::parse(
                lineno,
                format!("expected 6 fields, found {}", fields.len()),
            ));
        }
        let input_rank: i64 = fields[3]
            .parse()
            .map_err(|_| QppError::parse(lineno, format!("rank {:?} is not an integer", fields[3])))?;
        let score: f64 = fields[4]
            .parse()
            .map_err(|_| QppError::parse(lineno, format!("score {:?} is not a number", fields[4])))?;
        if !score.is_finite() {
            return Err(QppError::parse(lineno, "score is not finite"));
        }
        let key = (fields[0].to_string(), fields[2].to_string());
        if seen.insert(key.clone(), lineno).is_some() {
            return Err(QppError::Duplicate {
                line: lineno,
                query_id: key.0,
                doc_id: key.1,
            });
        }
        raw.entry(key.0.clone()).or_default().push(RunEntry {
            query_id: key.0,
            doc_id: key.1,
            rank: 0,
            input_rank,
            score,
            run_tag: fields[5].to_string(),
        });
    }
    RunSet::normalize(raw, Some(&seen))
}

/// Relevance grades per query and document.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct QrelsSet {
    queries: BTreeMap<String, BTreeMap<String, u32>>,
}

impl QrelsSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts a judgment. Returns an error message when the pair already
    /// exists with a different grade.
    pub fn insert(&mut self, query_id: &str, doc_id: &str, grade: u32) -> std::result::Result<(), u32> {
        let docs = self.queries.entry(query_id.to_string()).or_default();
        match docs.entry(doc_id.to_string()) {
            Entry::Vacant(v) => {
                v.insert(grade);
                Ok(())
            }
            Entry::Occupied(o) if *o.get() == grade => Ok(()),
            Entry::Occupied(o) => Err(*o.get()),
        }
    }

    pub fn get(&self, query_id: &str) -> Option<&BTreeMap<String, u32>> {
        self.queries.get(query_id)
    }

    pub fn query_ids(&self) -> impl Iterator<Item = &str> {
        self.queries.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }
}

/// Result of [`parse_qrels`]: the judgments and the number of negative grades
/// that were clamped to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedQrels {
    pub qrels: QrelsSet,
    pub clamped: usize,
}

/// Parses four-column TREC qrels: `qid iter docid grade`. The second column
/// is ignored.
pub fn parse_qrels(text: &str) -> Result<ParsedQrels> {
    let mut qrels = QrelsSet::new();
    let mut clamped = 0;
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() != 4 {
            return Err(QppError::parse(
                lineno,
                format!("expected 4 fields, found {}", fields.len()),
            ));
        }
        let grade: i64 = fields[3]
            .parse()
            .map_err(|_| QppError::parse(lineno, format!("grade {:?} is not an integer", fields[3])))?;
        let grade = if grade < 0 {
            clamped += 1;
            0
        } else {
            u32::try_from(grade).map_err(|_| QppError::parse(lineno, "grade out of range"))?
        };
        if qrels.insert(fields[0], fields[2], grade).is_err() {
            return Err(QppError::Duplicate {
                line: lineno,
                query_id: fields[0].to_string(),
                doc_id: fields[2].to_string(),
            });
        }
    }
    if clamped > 0 {
        log::warn!("clamped {clamped} negative relevance grades to 0");
    }
    Ok(ParsedQrels { qrels, clamped })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topic {
    pub query_id: String,
    pub text: String,
    pub term_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TopicFormat {
    /// `qid<TAB>text`
    #[default]
    Tab,
    /// `qid:text`
    Colon,
}

/// Number of query terms: whitespace tokens of the lowercased text.
pub fn term_count(text: &str) -> usize {
    text.to_lowercase().split_whitespace().count()
}

pub fn parse_topics(text: &str, format: TopicFormat) -> Result<Vec<Topic>> {
    let sep = match format {
        TopicFormat::Tab => '\t',
        TopicFormat::Colon => ':',
    };
    let mut topics = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let (qid, body) = line
            .split_once(sep)
            .ok_or_else(|| QppError::parse(lineno, format!("missing {sep:?} separator")))?;
        let qid = qid.trim();
        if qid.is_empty() {
            return Err(QppError::parse(lineno, "empty query id"));
        }
        let body = body.trim();
        let count = term_count(body);
        if count == 0 {
            return Err(QppError::parse(lineno, format!("query {qid} has empty text")));
        }
        topics.push(Topic {
            query_id: qid.to_string(),
            text: body.to_string(),
            term_count: count,
        });
    }
    Ok(topics)
}

/// Per-(query, document) feature vectors from a Letor-style file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureTable {
    names: Vec<String>,
    rows: BTreeMap<(String, String), Vec<f64>>,
}

impl FeatureTable {
    pub fn new(names: Vec<String>) -> Self {
        Self {
            names,
            rows: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, query_id: &str, doc_id: &str, values: Vec<f64>) -> Result<()> {
        if values.len() != self.names.len() {
            return Err(QppError::invalid(format!(
                "expected {} feature values, got {}",
                self.names.len(),
                values.len()
            )));
        }
        self.rows.insert((query_id.to_string(), doc_id.to_string()), values);
        Ok(())
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Replaces the positional feature names (`"1"`, `"2"`, ...) with
    /// human-readable ones.
    pub fn with_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.names.len() {
            return Err(QppError::invalid(format!(
                "feature file has {} features but {} names were given",
                self.names.len(),
                names.len()
            )));
        }
        self.names = names;
        Ok(self)
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn get(&self, query_id: &str, doc_id: &str) -> Option<&[f64]> {
        self.rows
            .get(&(query_id.to_string(), doc_id.to_string()))
            .map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Parses lines of the form `label qid:Q 1:v1 2:v2 ... # docid`. Feature
/// indices must run densely from 1 and every line must carry the same
/// number of features. Features are named by their index.
pub fn parse_feature_file(text: &str) -> Result<FeatureTable> {
    let mut table: Option<FeatureTable> = None;
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let (body, comment) = line
            .split_once('#')
            .ok_or_else(|| QppError::parse(lineno, "missing '# docid' comment"))?;
        let doc_id = comment
            .split_whitespace()
            .next()
            .ok_or_else(|| QppError::parse(lineno, "empty '# docid' comment"))?;
        let mut tokens = body.split_whitespace();
        let _label = tokens.next().ok_or_else(|| QppError::parse(lineno, "missing label"))?;
        let qid = tokens
            .next()
            .and_then(|t| t.strip_prefix("qid:"))
            .filter(|q| !q.is_empty())
            .ok_or_else(|| QppError::parse(lineno, "missing 'qid:' field"))?;
        let mut values = Vec::new();
        for tok in tokens {
            let (i, v) = tok
                .split_once(':')
                .ok_or_else(|| QppError::parse(lineno, format!("bad feature token {tok:?}")))?;
            let i: usize = i
                .parse()
                .map_err(|_| QppError::parse(lineno, format!("bad feature index {i:?}")))?;
            if i != values.len() + 1 {
                return Err(QppError::parse(
                    lineno,
                    format!("feature index {i} where {} was expected", values.len() + 1),
                ));
            }
            let v: f64 = v
                .parse()
                .map_err(|_| QppError::parse(lineno, format!("bad feature value {v:?}")))?;
            values.push(v);
        }
        if values.is_empty() {
            return Err(QppError::parse(lineno, "no features"));
        }
        let t = table.get_or_insert_with(|| FeatureTable::new((1..=values.len()).map(|i| i.to_string()).collect()));
        if values.len() != t.names.len() {
            return Err(QppError::parse(
                lineno,
                format!("expected {} features, found {}", t.names.len(), values.len()),
            ));
        }
        let key = (qid.to_string(), doc_id.to_string());
        if t.rows.contains_key(&key) {
            return Err(QppError::Duplicate {
                line: lineno,
                query_id: key.0,
                doc_id: key.1,
            });
        }
        t.rows.insert(key, values);
    }
    Ok(table.unwrap_or_default())
}

fn format_real(v: f64) -> String {
    format!("{v:.16e}")
}

/// Renders a matrix as CSV with header `query_id,<name1>,...`. Reals are
/// written with 17 significant digits; missing cells as `NA`.
pub fn write_matrix(m: &QueryFeatureMatrix) -> String {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let mut header = vec!["query_id".to_string()];
    header.extend(m.predictor_names().iter().cloned());
    // Writing into a Vec<u8> cannot fail.
    w.write_record(&header).expect("in-memory write");
    for (i, qid) in m.query_ids().iter().enumerate() {
        let mut rec = vec![qid.clone()];
        for j in 0..m.n_predictors() {
            rec.push(match m.get(i, j) {
                Some(v) => format_real(v),
                None => MISSING_TOKEN.to_string(),
            });
        }
        w.write_record(&rec).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
}

fn is_missing_token(s: &str) -> bool {
    s == MISSING_TOKEN || s.eq_ignore_ascii_case("nan")
}

pub fn read_matrix(text: &str) -> Result<QueryFeatureMatrix> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut records = r.records();
    let header = match records.next() {
        None => return Err(QppError::parse(1, "empty matrix file")),
        Some(rec) => rec.map_err(|e| QppError::parse(1, e.to_string()))?,
    };
    if header.get(0) != Some("query_id") {
        return Err(QppError::parse(1, "header must start with 'query_id'"));
    }
    let names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let width = names.len();
    let mut ids = Vec::new();
    let mut values = Vec::new();
    let mut missing = Vec::new();
    for rec in records {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            QppError::parse(line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        if rec.len() == 1 && rec.get(0) == Some("") {
            continue;
        }
        if rec.len() != width + 1 {
            return Err(QppError::parse(
                line,
                format!("expected {} columns, found {}", width + 1, rec.len()),
            ));
        }
        ids.push(rec[0].to_string());
        for cell in rec.iter().skip(1) {
            if is_missing_token(cell) {
                values.push(0.0);
                missing.push(true);
            } else {
                let v: f64 = cell
                    .parse()
                    .map_err(|_| QppError::parse(line, format!("bad value {cell:?}")))?;
                if !v.is_finite() {
                    return Err(QppError::parse(line, format!("non-finite value {cell:?}")));
                }
                values.push(v);
                missing.push(false);
            }
        }
    }
    QueryFeatureMatrix::with_missing(ids, names, values, missing).map_err(|e| QppError::parse(0, e.to_string()))
}
