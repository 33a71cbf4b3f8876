//! Object presence statistics and stop-object removal.
//!
//! An object is "present" in an ad when its class appears anywhere in the
//! ad's top-5 list; scores are ignored and repeated labels count once.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Corpus;

pub const DEFAULT_STOP_THRESHOLD: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ObjStatsError {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("threshold {0} not in (0, 1)")]
    ThresholdOutOfRange(f64),
    #[error("top-n must be at least 1")]
    ZeroTopN,
}

/// Presence counts over a corpus, with an optional excluded-object set.
///
/// Fractions are `count / ads in scope`; excluding objects never changes a
/// denominator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectFrequencyTable {
    pub total_ads: usize,
    pub object_counts: BTreeMap<u32, usize>,
    pub category_sizes: BTreeMap<String, usize>,
    pub category_counts: BTreeMap<String, BTreeMap<u32, usize>>,
    pub names: BTreeMap<u32, String>,
    pub excluded: BTreeSet<u32>,
}

impl ObjectFrequencyTable {
    pub fn corpus_fraction(&self, class_id: u32) -> f64 {
        let count = self.object_counts.get(&class_id).copied().unwrap_or(0);
        count as f64 / self.total_ads as f64
    }

    /// Fraction of `category`'s ads containing `class_id` (0 for unknown).
    pub fn category_fraction(&self, category: &str, class_id: u32) -> f64 {
        match (
            self.category_sizes.get(category),
            self.category_counts.get(category),
        ) {
            (Some(&size), Some(counts)) => {
                counts.get(&class_id).copied().unwrap_or(0) as f64 / size as f64
            }
            _ => 0.0,
        }
    }

    /// `(class_id, corpus fraction)` for every present object.
    pub fn corpus_fractions(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.object_counts
            .iter()
            .map(|(&id, &c)| (id, c as f64 / self.total_ads as f64))
    }

    /// `(class_id, fraction)` for every object present in `category`.
    pub fn category_fractions<'a>(
        &'a self,
        category: &str,
    ) -> impl Iterator<Item = (u32, f64)> + 'a {
        let size = self.category_sizes.get(category).copied().unwrap_or(1) as f64;
        self.category_counts
            .get(category)
            .into_iter()
            .flat_map(move |m| m.iter().map(move |(&id, &c)| (id, c as f64 / size)))
    }

    pub fn name(&self, class_id: u32) -> Option<&str> {
        self.names.get(&class_id).map(String::as_str)
    }
}

fn count(corpus: &Corpus, excluded: &BTreeSet<u32>) -> Result<ObjectFrequencyTable, ObjStatsError> {
    if corpus.is_empty() {
        return Err(ObjStatsError::EmptyCorpus);
    }
    let mut table = ObjectFrequencyTable {
        total_ads: corpus.len(),
        object_counts: BTreeMap::new(),
        category_sizes: BTreeMap::new(),
        category_counts: BTreeMap::new(),
        names: BTreeMap::new(),
        excluded: excluded.clone(),
    };
    for record in corpus.records() {
        *table
            .category_sizes
            .entry(record.category.clone())
            .or_insert(0) += 1;
        let per_cat = table
            .category_counts
            .entry(record.category.clone())
            .or_default();
        for label in &record.labels {
            table
                .names
                .entry(label.class_id)
                .or_insert_with(|| label.name.clone());
        }
        for class_id in record.object_set() {
            if excluded.contains(&class_id) {
                continue;
            }
            *table.object_counts.entry(class_id).or_insert(0) += 1;
            *per_cat.entry(class_id).or_insert(0) += 1;
        }
    }
    Ok(table)
}

pub fn object_frequencies(corpus: &Corpus) -> Result<ObjectFrequencyTable, ObjStatsError> {
    count(corpus, &BTreeSet::new())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopObject {
    pub class_id: u32,
    pub corpus_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StopObjectReport {
    /// Descending fraction, ties by ascending class id.
    pub stop_objects: Vec<StopObject>,
    pub threshold: f64,
}

impl StopObjectReport {
    pub fn class_ids(&self) -> BTreeSet<u32> {
        self.stop_objects.iter().map(|s| s.class_id).collect()
    }
}

/// Objects whose corpus-wide fraction is strictly above `threshold`.
pub fn detect_stop_objects(
    table: &ObjectFrequencyTable,
    threshold: f64,
) -> Result<StopObjectReport, ObjStatsError> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(ObjStatsError::ThresholdOutOfRange(threshold));
    }
    let mut stop_objects: Vec<StopObject> = table
        .corpus_fractions()
        .filter(|&(_, f)| f > threshold)
        .map(|(class_id, corpus_fraction)| StopObject {
            class_id,
            corpus_fraction,
        })
        .collect();
    stop_objects.sort_by(|a, b| {
        b.corpus_fraction
            .total_cmp(&a.corpus_fraction)
            .then(a.class_id.cmp(&b.class_id))
    });
    Ok(StopObjectReport {
        stop_objects,
        threshold,
    })
}

/// Recounts `corpus` with the report's stop-objects removed from every ad.
pub fn filter_stop_objects(
    corpus: &Corpus,
    report: &StopObjectReport,
) -> Result<ObjectFrequencyTable, ObjStatsError> {
    count(corpus, &report.class_ids())
}

/// Ranked `(class_id, fraction)` lists, `n` per category.
pub type CategoryRanking = BTreeMap<String, Vec<(u32, f64)>>;

pub fn top_objects_per_category(
    table: &ObjectFrequencyTable,
    n: usize,
) -> Result<CategoryRanking, ObjStatsError> {
    if n == 0 {
        return Err(ObjStatsError::ZeroTopN);
    }
    Ok(table
        .category_sizes
        .keys()
        .map(|cat| {
            let mut ranked: Vec<(u32, f64)> = table.category_fractions(cat).collect();
            ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            ranked.truncate(n);
            (cat.clone(), ranked)
        })
        .collect())
}
