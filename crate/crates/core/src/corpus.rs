//! Ad-record data model, validation, deduplication and per-record CTR.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of object labels carried by every record.
pub const LABELS_PER_RECORD: usize = 5;
pub const DEFAULT_NUM_CLASSES: u32 = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectLabel {
    pub class_id: u32,
    pub name: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdRecord {
    /// Hex content hash of the image bytes.
    pub id: String,
    pub width: u32,
    pub height: u32,
    pub category: String,
    pub impressions: u64,
    pub clicks: u64,
    /// Top-5 object predictions, descending score.
    pub labels: Vec<ObjectLabel>,
    pub vector: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RecordError {
    #[error("record id must be a non-empty hex string, got {0:?}")]
    InvalidId(String),
    #[error("non-positive dimensions {width}x{height}")]
    NonPositiveDimensions { width: u32, height: u32 },
    #[error("clicks ({clicks}) exceed impressions ({impressions})")]
    ClicksExceedImpressions { clicks: u64, impressions: u64 },
    #[error("category must be non-empty and free of control characters, got {0:?}")]
    InvalidCategory(String),
    #[error("expected {LABELS_PER_RECORD} labels, found {0}")]
    LabelCount(usize),
    #[error("label class {class_id} outside [0, {num_classes})")]
    ClassOutOfRange { class_id: u32, num_classes: u32 },
    #[error("label name for class {0} must be non-empty and free of control characters")]
    InvalidLabelName(u32),
    #[error("label score {score} for class {class_id} not in [0, 1]")]
    ScoreOutOfRange { class_id: u32, score: f64 },
    #[error("labels not sorted by descending score (ties by ascending class id)")]
    LabelsNotSorted,
    #[error("vector length mismatch: expected {expected}, found {found}")]
    VectorLengthMismatch { expected: usize, found: usize },
    #[error("non-finite vector entry at position {0}")]
    NonFiniteVector(usize),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CorpusError {
    #[error("embedding dimension must be positive")]
    ZeroDimension,
    #[error("number of object classes must be positive")]
    ZeroClasses,
    #[error("record {index}: {source}")]
    InvalidRecord { index: usize, source: RecordError },
    #[error("undefined CTR: record has zero impressions")]
    UndefinedCtr,
}

fn is_clean_text(s: &str) -> bool {
    !s.is_empty() && !s.chars().any(char::is_control)
}

/// Ordering of labels within a record: descending score, then ascending class.
pub fn label_order(a: &ObjectLabel, b: &ObjectLabel) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.class_id.cmp(&b.class_id))
}

impl AdRecord {
    pub fn validate(&self, dim: usize, num_classes: u32) -> Result<(), RecordError> {
        if self.id.is_empty() || !self.id.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(RecordError::InvalidId(self.id.clone()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(RecordError::NonPositiveDimensions {
                width: self.width,
                height: self.height,
            });
        }
        if self.clicks > self.impressions {
            return Err(RecordError::ClicksExceedImpressions {
                clicks: self.clicks,
                impressions: self.impressions,
            });
        }
        if !is_clean_text(&self.category) {
            return Err(RecordError::InvalidCategory(self.category.clone()));
        }
        if self.labels.len() != LABELS_PER_RECORD {
            return Err(RecordError::LabelCount(self.labels.len()));
        }
        for label in &self.labels {
            if label.class_id >= num_classes {
                return Err(RecordError::ClassOutOfRange {
                    class_id: label.class_id,
                    num_classes,
                });
            }
            if !is_clean_text(&label.name) {
                return Err(RecordError::InvalidLabelName(label.class_id));
            }
            if !(label.score.is_finite() && (0.0..=1.0).contains(&label.score)) {
                return Err(RecordError::ScoreOutOfRange {
                    class_id: label.class_id,
                    score: label.score,
                });
            }
        }
        if self
            .labels
            .windows(2)
            .any(|w| label_order(&w[0], &w[1]) == Ordering::Greater)
        {
            return Err(RecordError::LabelsNotSorted);
        }
        if self.vector.len() != dim {
            return Err(RecordError::VectorLengthMismatch {
                expected: dim,
                found: self.vector.len(),
            });
        }
        if let Some(pos) = self.vector.iter().position(|v| !v.is_finite()) {
            return Err(RecordError::NonFiniteVector(pos));
        }
        Ok(())
    }

    /// Distinct class ids in the record's top-5 list.
    pub fn object_set(&self) -> BTreeSet<u32> {
        self.labels.iter().map(|l| l.class_id).collect()
    }

    pub fn pixels(&self) -> u64 {
        u64::from(self.width) * u64::from(self.height)
    }
}

/// Click-through rate `clicks / impressions`.
pub fn ctr(record: &AdRecord) -> Result<f64, CorpusError> {
    if record.impressions == 0 {
        return Err(CorpusError::UndefinedCtr);
    }
    Ok(record.clicks as f64 / record.impressions as f64)
}

/// Drops records whose id was already seen, keeping the first occurrence.
/// Returns the survivors and the number dropped.
pub fn dedup(records: Vec<AdRecord>) -> (Vec<AdRecord>, usize) {
    let mut seen = BTreeSet::new();
    let before = records.len();
    let kept: Vec<AdRecord> = records
        .into_iter()
        .filter(|r| seen.insert(r.id.clone()))
        .collect();
    let dropped = before - kept.len();
    (kept, dropped)
}

/// A validated, deduplicated set of ad records sharing one embedding dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    records: Vec<AdRecord>,
    dim: usize,
    num_classes: u32,
    categories: Vec<String>,
}

impl Corpus {
    /// Validates every record and collapses duplicate ids (first wins).
    /// Returns the corpus and the number of duplicates dropped.
    pub fn from_records(
        records: Vec<AdRecord>,
        dim: usize,
        num_classes: u32,
    ) -> Result<(Self, usize), CorpusError> {
        if dim == 0 {
            return Err(CorpusError::ZeroDimension);
        }
        if num_classes == 0 {
            return Err(CorpusError::ZeroClasses);
        }
        for (index, record) in records.iter().enumerate() {
            record
                .validate(dim, num_classes)
                .map_err(|source| CorpusError::InvalidRecord { index, source })?;
        }
        let (records, dropped) = dedup(records);
        Ok((Self::assemble(records, dim, num_classes), dropped))
    }

    fn assemble(records: Vec<AdRecord>, dim: usize, num_classes: u32) -> Self {
        let categories = records
            .iter()
            .map(|r| r.category.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        Self {
            records,
            dim,
            num_classes,
            categories,
        }
    }

    pub fn records(&self) -> &[AdRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<AdRecord> {
        self.records
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> u32 {
        self.num_classes
    }

    /// Distinct category tags, sorted.
    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Sub-corpus of the records matching `keep`, in original order.
    pub fn filtered<F: FnMut(&AdRecord) -> bool>(&self, mut keep: F) -> Self {
        let records = self.records.iter().filter(|r| keep(r)).cloned().collect();
        Self::assemble(records, self.dim, self.num_classes)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub total: usize,
    pub per_category: BTreeMap<String, usize>,
    pub distinct_objects: usize,
    pub mean_width: Option<f64>,
    pub mean_height: Option<f64>,
}

pub fn corpus_stats(corpus: &Corpus) -> CorpusStats {
    let mut per_category = BTreeMap::new();
    let mut objects = BTreeSet::new();
    for r in corpus.records() {
        *per_category.entry(r.category.clone()).or_insert(0) += 1;
        objects.extend(r.labels.iter().map(|l| l.class_id));
    }
    let n = corpus.len();
    let mean_of = |f: fn(&AdRecord) -> u32| {
        (n > 0).then(|| {
            let total: u64 = corpus.records().iter().map(|r| u64::from(f(r))).sum();
            total as f64 / n as f64
        })
    };
    CorpusStats {
        total: n,
        per_category,
        distinct_objects: objects.len(),
        mean_width: mean_of(|r| r.width),
        mean_height: mean_of(|r| r.height),
    }
}
