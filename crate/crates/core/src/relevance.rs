//! Caption annotations and the class-IoU relevance function.
//!
//! Two captions are compared through the overlap of their verb-class and
//! noun-class sets:
//!
//! ```text
//! R(a, b) = 0.5 * (IoU(verbs_a, verbs_b) + IoU(nouns_a, nouns_b))
//! ```
//!
//! The part-of-speech restricted modes replace one of the two IoU terms by 1.

use std::collections::{BTreeSet, HashSet};
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Header line of the annotation CSV.
pub const ANNOTATION_HEADER: &str = "id,verb_class,noun_classes";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CaptionAnnotation {
    pub id: String,
    pub verb_classes: BTreeSet<u32>,
    pub noun_classes: BTreeSet<u32>,
}

impl CaptionAnnotation {
    pub fn new(
        id: impl Into<String>,
        verbs: impl IntoIterator<Item = u32>,
        nouns: impl IntoIterator<Item = u32>,
    ) -> Result<Self> {
        let ann = Self {
            id: id.into(),
            verb_classes: verbs.into_iter().collect(),
            noun_classes: nouns.into_iter().collect(),
        };
        if ann.verb_classes.is_empty() || ann.noun_classes.is_empty() {
            return Err(Error::arg(format!("annotation `{}` has an empty class set", ann.id)));
        }
        Ok(ann)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RelevanceMode {
    #[default]
    Full,
    /// Verb IoU fixed to 1 (noun-level relevance).
    #[serde(rename = "verb1")]
    VerbFixedToOne,
    /// Noun IoU fixed to 1 (verb-level relevance).
    #[serde(rename = "noun1")]
    NounFixedToOne,
}

impl FromStr for RelevanceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Self::Full),
            "verb1" => Ok(Self::VerbFixedToOne),
            "noun1" => Ok(Self::NounFixedToOne),
            other => Err(Error::arg(format!(
                "unknown relevance mode `{other}` (expected full, verb1 or noun1)"
            ))),
        }
    }
}

/// Relevance values of items A (rows) against items B (columns).
pub type RelevanceMatrix = Matrix<f32>;

fn iou(a: &BTreeSet<u32>, b: &BTreeSet<u32>) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    inter as f64 / union as f64
}

pub fn relevance(a: &CaptionAnnotation, b: &CaptionAnnotation, mode: RelevanceMode) -> f32 {
    let verb = match mode {
        RelevanceMode::VerbFixedToOne => 1.0,
        _ => iou(&a.verb_classes, &b.verb_classes),
    };
    let noun = match mode {
        RelevanceMode::NounFixedToOne => 1.0,
        _ => iou(&a.noun_classes, &b.noun_classes),
    };
    (0.5 * (verb + noun)) as f32
}

pub fn relevance_matrix(
    items_a: &[CaptionAnnotation],
    items_b: &[CaptionAnnotation],
    mode: RelevanceMode,
) -> Result<RelevanceMatrix> {
    if items_a.is_empty() || items_b.is_empty() {
        return Err(Error::arg("relevance_matrix needs two non-empty item lists"));
    }
    Ok(Matrix::from_fn(items_a.len(), items_b.len(), |i, j| {
        relevance(&items_a[i], &items_b[j], mode)
    }))
}

fn parse_classes(field: &str, line: usize, column: &str) -> Result<BTreeSet<u32>> {
    let mut set = BTreeSet::new();
    for token in field.split_whitespace() {
        let class = token.parse::<u32>().map_err(|_| Error::Parse {
            line,
            message: format!("{column}: `{token}` is not a non-negative integer"),
        })?;
        set.insert(class);
    }
    if set.is_empty() {
        return Err(Error::Parse {
            line,
            message: format!("{column} is empty"),
        });
    }
    Ok(set)
}

/// Parses the annotation CSV (`id,verb_class,noun_classes`).
///
/// Class fields are space-separated integer lists. Errors carry the
/// 1-based line number of the offending row.
pub fn parse_annotations(csv_text: &str) -> Result<Vec<CaptionAnnotation>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(csv_text.as_bytes());

    let mut records = reader.records();
    let header_ok = match records.next() {
        Some(Ok(rec)) => rec.iter().eq(ANNOTATION_HEADER.split(',')),
        Some(Err(_)) | None => false,
    };
    if !header_ok {
        return Err(Error::Parse {
            line: 1,
            message: format!("missing header `{ANNOTATION_HEADER}`"),
        });
    }

    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for rec in records {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        if rec.len() != 3 {
            return Err(Error::Parse {
                line,
                message: format!("expected 3 fields, found {}", rec.len()),
            });
        }
        let id = rec[0].to_string();
        if id.is_empty() {
            return Err(Error::Parse {
                line,
                message: "id is empty".into(),
            });
        }
        let verb_classes = parse_classes(&rec[1], line, "verb_class")?;
        let noun_classes = parse_classes(&rec[2], line, "noun_classes")?;
        if !seen.insert(id.clone()) {
            return Err(Error::DuplicateId { line, id });
        }
        out.push(CaptionAnnotation {
            id,
            verb_classes,
            noun_classes,
        });
    }
    Ok(out)
}

pub fn format_annotations(items: &[CaptionAnnotation]) -> String {
    fn join(set: &BTreeSet<u32>) -> String {
        set.iter().map(u32::to_string).collect::<Vec<_>>().join(" ")
    }
    let mut out = String::from(ANNOTATION_HEADER);
    out.push('\n');
    for a in items {
        let _ = writeln!(out, "{},{},{}", a.id, join(&a.verb_classes), join(&a.noun_classes));
    }
    out
}
