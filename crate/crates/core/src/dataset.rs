//! Task datasets: line-delimited JSON records and gold-score rescaling.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read dataset {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: missing required field `{field}`")]
    MissingField { line: usize, field: &'static str },
    #[error("line {line}: duplicate id `{id}`")]
    DuplicateId { line: usize, id: String },
    #[error("degenerate gold span: lo ({lo}) must be below hi ({hi})")]
    DegenerateSpan { lo: f64, hi: f64 },
    #[error("invalid score range `{0}`")]
    InvalidRange(String),
    #[error("unknown task `{0}` (expected mtqe, gecqe or lcp)")]
    UnknownTask(String),
}

/// The three regression tasks a dataset can hold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Mtqe,
    Gecqe,
    Lcp,
}

impl Task {
    /// Record keys that must be present and non-empty for this task.
    pub fn required_fields(self) -> &'static [&'static str] {
        match self {
            Task::Mtqe => &["source", "hypothesis", "source_lang", "target_lang"],
            Task::Gecqe => &["original", "corrected"],
            Task::Lcp => &["sentence", "word"],
        }
    }

    /// Span the raw gold scores are expressed in when the user gives none.
    pub fn default_gold_span(self) -> (f64, f64) {
        match self {
            Task::Mtqe => (0.0, 100.0),
            Task::Gecqe => (1.0, 4.0),
            Task::Lcp => (0.0, 1.0),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Task::Mtqe => "mtqe",
            Task::Gecqe => "gecqe",
            Task::Lcp => "lcp",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "mtqe" => Ok(Task::Mtqe),
            "gecqe" => Ok(Task::Gecqe),
            "lcp" => Ok(Task::Lcp),
            _ => Err(DatasetError::UnknownTask(s.to_string())),
        }
    }
}

/// Inclusive integer score range stated in the prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScoreRange {
    min: i64,
    max: i64,
}

impl ScoreRange {
    pub fn new(min: i64, max: i64) -> Result<Self, DatasetError> {
        if min < 0 || min >= max {
            return Err(DatasetError::InvalidRange(format!("{min}:{max}")));
        }
        Ok(Self { min, max })
    }

    pub fn min(&self) -> i64 {
        self.min
    }

    pub fn max(&self) -> i64 {
        self.max
    }

    /// Number of integer values in the range.
    pub fn len(&self) -> usize {
        (self.max - self.min + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn support(&self) -> impl Iterator<Item = i64> {
        self.min..=self.max
    }

    pub fn contains(&self, v: i64) -> bool {
        v >= self.min && v <= self.max
    }

    /// Position of `v` in the support, if it belongs to it.
    pub fn index_of(&self, v: i64) -> Option<usize> {
        self.contains(v).then(|| (v - self.min) as usize)
    }
}

impl Default for ScoreRange {
    fn default() -> Self {
        Self { min: 0, max: 9 }
    }
}

impl fmt::Display for ScoreRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.min, self.max)
    }
}

/// Parses `MIN:MAX` (a `-` separator is accepted too, e.g. `1-100`).
impl FromStr for ScoreRange {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || DatasetError::InvalidRange(s.to_string());
        let (lo, hi) = s.trim().split_once([':', '-']).ok_or_else(bad)?;
        let lo: i64 = lo.trim().parse().map_err(|_| bad())?;
        let hi: i64 = hi.trim().parse().map_err(|_| bad())?;
        ScoreRange::new(lo, hi).map_err(|_| bad())
    }
}

/// Task-specific text of one example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "lowercase")]
pub enum ExampleFields {
    Mtqe {
        source: String,
        hypothesis: String,
        source_lang: String,
        target_lang: String,
    },
    Gecqe {
        original: String,
        corrected: String,
    },
    Lcp {
        sentence: String,
        word: String,
    },
}

impl ExampleFields {
    pub fn task(&self) -> Task {
        match self {
            ExampleFields::Mtqe { .. } => Task::Mtqe,
            ExampleFields::Gecqe { .. } => Task::Gecqe,
            ExampleFields::Lcp { .. } => Task::Lcp,
        }
    }

    /// The input side of the pair (source / original / sentence).
    pub fn source_text(&self) -> &str {
        match self {
            ExampleFields::Mtqe { source, .. } => source,
            ExampleFields::Gecqe { original, .. } => original,
            ExampleFields::Lcp { sentence, .. } => sentence,
        }
    }

    /// The evaluated side of the pair (hypothesis / correction / word).
    pub fn target_text(&self) -> &str {
        match self {
            ExampleFields::Mtqe { hypothesis, .. } => hypothesis,
            ExampleFields::Gecqe { corrected, .. } => corrected,
            ExampleFields::Lcp { word, .. } => word,
        }
    }
}

/// One evaluation instance with its gold score in original units.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub id: String,
    pub gold: f64,
    pub fields: ExampleFields,
}

impl Example {
    pub fn task(&self) -> Task {
        self.fields.task()
    }
}

/// Parses one dataset record. `line` is 1-based and only used for error messages.
pub fn parse_record(text: &str, task: Task, line: usize) -> Result<Example, DatasetError> {
    let value: Value = serde_json::from_str(text).map_err(|e| DatasetError::Malformed {
        line,
        message: e.to_string(),
    })?;
    let Value::Object(obj) = value else {
        return Err(DatasetError::Malformed {
            line,
            message: "record is not an object".into(),
        });
    };

    let id = match obj.get("id") {
        None | Some(Value::Null) => line.to_string(),
        Some(Value::String(s)) if !s.is_empty() => s.clone(),
        Some(Value::Number(n)) => n.to_string(),
        Some(other) => {
            return Err(DatasetError::Malformed {
                line,
                message: format!("id must be a string or number, got {other}"),
            })
        }
    };

    let gold = match obj.get("gold") {
        None | Some(Value::Null) => return Err(DatasetError::MissingField { line, field: "gold" }),
        Some(Value::Number(n)) => n.as_f64().filter(|g| g.is_finite()),
        Some(Value::String(s)) => s.trim().parse::<f64>().ok().filter(|g| g.is_finite()),
        Some(_) => None,
    }
    .ok_or_else(|| DatasetError::Malformed {
        line,
        message: "gold must be a finite number".into(),
    })?;

    let text_field = |name: &'static str| -> Result<String, DatasetError> {
        required_text(&obj, name, line)
    };
    let fields = match task {
        Task::Mtqe => ExampleFields::Mtqe {
            source: text_field("source")?,
            hypothesis: text_field("hypothesis")?,
            source_lang: text_field("source_lang")?,
            target_lang: text_field("target_lang")?,
        },
        Task::Gecqe => ExampleFields::Gecqe {
            original: text_field("original")?,
            corrected: text_field("corrected")?,
        },
        Task::Lcp => ExampleFields::Lcp {
            sentence: text_field("sentence")?,
            word: text_field("word")?,
        },
    };

    Ok(Example { id, gold, fields })
}

fn required_text(
    obj: &Map<String, Value>,
    field: &'static str,
    line: usize,
) -> Result<String, DatasetError> {
    match obj.get(field) {
        Some(Value::String(s)) if !s.trim().is_empty() => Ok(s.clone()),
        Some(Value::String(_)) | None | Some(Value::Null) => {
            Err(DatasetError::MissingField { line, field })
        }
        Some(other) => Err(DatasetError::Malformed {
            line,
            message: format!("field `{field}` must be a string, got {other}"),
        }),
    }
}

/// Parses a whole dataset document. Blank lines are skipped but still counted.
pub fn parse_dataset(text: &str, task: Task) -> Result<Vec<Example>, DatasetError> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let ex = parse_record(raw, task, line)?;
        if !seen.insert(ex.id.clone()) {
            return Err(DatasetError::DuplicateId { line, id: ex.id });
        }
        out.push(ex);
    }
    Ok(out)
}

pub fn load_dataset(path: &Path, task: Task) -> Result<Vec<Example>, DatasetError> {
    let text = fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_dataset(&text, task)
}

/// Gold scores mapped into a score range, with the number of inputs that
/// had to be clamped into the source span first.
#[derive(Debug, Clone, PartialEq)]
pub struct RescaledGold {
    pub values: Vec<f64>,
    pub n_clamped: usize,
}

/// Linear map from `[source_lo, source_hi]` onto `[range.min, range.max]`.
/// Values outside the source span are clamped before mapping.
pub fn rescale_gold(
    gold: &[f64],
    source_lo: f64,
    source_hi: f64,
    range: ScoreRange,
) -> Result<RescaledGold, DatasetError> {
    if !(source_lo < source_hi) {
        return Err(DatasetError::DegenerateSpan {
            lo: source_lo,
            hi: source_hi,
        });
    }
    let lo = range.min() as f64;
    let width = (range.max() - range.min()) as f64;
    let span = source_hi - source_lo;
    let mut n_clamped = 0;
    let values = gold
        .iter()
        .map(|&g| {
            let c = g.clamp(source_lo, source_hi);
            if c != g {
                n_clamped += 1;
            }
            (lo + (c - source_lo) * width / span).clamp(lo, range.max() as f64)
        })
        .collect();
    Ok(RescaledGold { values, n_clamped })
}

/// Serializes an example back into a dataset record line (no trailing newline).
pub fn to_record(ex: &Example) -> String {
    let mut obj = Map::new();
    obj.insert("id".into(), Value::String(ex.id.clone()));
    obj.insert("gold".into(), serde_json::json!(ex.gold));
    let pairs: Vec<(&str, &str)> = match &ex.fields {
        ExampleFields::Mtqe {
            source,
            hypothesis,
            source_lang,
            target_lang,
        } => vec![
            ("source", source),
            ("hypothesis", hypothesis),
            ("source_lang", source_lang),
            ("target_lang", target_lang),
        ],
        ExampleFields::Gecqe { original, corrected } => {
            vec![("original", original), ("corrected", corrected)]
        }
        ExampleFields::Lcp { sentence, word } => vec![("sentence", sentence), ("word", word)],
    };
    for (k, v) in pairs {
        obj.insert(k.into(), Value::String(v.to_string()));
    }
    Value::Object(obj).to_string()
}

/// Parses a gold-only file: each non-blank line is either a bare number or a
/// JSON object with a numeric `gold` field (other fields are ignored).
pub fn parse_gold_values(text: &str) -> Result<Vec<f64>, DatasetError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let t = raw.trim();
        if t.is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(t).map_err(|e| DatasetError::Malformed {
            line,
            message: e.to_string(),
        })?;
        let g = match &value {
            Value::Number(n) => n.as_f64(),
            Value::Object(obj) => match obj.get("gold") {
                None | Some(Value::Null) => {
                    return Err(DatasetError::MissingField { line, field: "gold" })
                }
                Some(Value::Number(n)) => n.as_f64(),
                Some(Value::String(s)) => s.trim().parse::<f64>().ok(),
                Some(_) => None,
            },
            _ => None,
        }
        .filter(|g| g.is_finite())
        .ok_or_else(|| DatasetError::Malformed {
            line,
            message: "expected a finite gold score".into(),
        })?;
        out.push(g);
    }
    Ok(out)
}
