//! Seeded synthetic corpora with planted ground truth.
//!
//! Generation is a pure function of [`SynthSpec`]. Record `i` draws every
//! random quantity from the substream `(seed, SYNTH_RECORD, i)` in this order:
//! content hash (2 words), cluster, category, width, height, impressions,
//! one categorical draw per label slot, five label scores, `dim` normal
//! coordinates, and finally one normal for CTR noise (only when
//! `noise_sd > 0`).
//!
//! Embeddings are isotropic Gaussians around orthogonal centroids
//! `(separation / sqrt 2) * e_c`, so planted centroids are exactly
//! `separation` apart. The within-cluster standard deviation is the RMS
//! distance of a member to its centroid, which puts the per-coordinate
//! deviation at `1 / sqrt(dim)`.
//!
//! Labels come from five disjoint per-category slot pools; slot `s` draws one
//! object from its own categorical distribution. Within a category an object
//! lives in at most one slot, so its presence probability is exactly its
//! normalized slot weight, and the planted table is exact.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{label_order, AdRecord, Corpus, CorpusError, ObjectLabel, LABELS_PER_RECORD};
use crate::exec::Executor;
use crate::numeric::round_half_even;
use crate::rng::{domain, SplitMix64};

/// Widths and heights enter the CTR model divided by this many pixels.
pub const CTR_PIXEL_SCALE: f64 = 10_000.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategorySpec {
    pub name: String,
    pub weight: f64,
    /// Five slot pools of `(class_id, weight)`.
    pub slots: Vec<Vec<(u32, f64)>>,
}

/// Planted CTR function, evaluated before noise and clamping:
///
/// `intercept + w_w * width/scale + w_h * height/scale
///  + sum e_j v_j + sum c_ab v_a v_b`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CtrModel {
    pub intercept: f64,
    pub width_weight: f64,
    pub height_weight: f64,
    /// Sparse linear weights over embedding coordinates.
    pub embedding_weights: Vec<(usize, f64)>,
    /// Pairwise products of embedding coordinates.
    pub interactions: Vec<(usize, usize, f64)>,
    pub noise_sd: f64,
}

impl CtrModel {
    pub fn evaluate(&self, width: u32, height: u32, vector: &[f32]) -> f64 {
        let mut value = self.intercept
            + self.width_weight * (f64::from(width) / CTR_PIXEL_SCALE)
            + self.height_weight * (f64::from(height) / CTR_PIXEL_SCALE);
        for &(j, w) in &self.embedding_weights {
            value += w * f64::from(vector[j]);
        }
        for &(a, b, c) in &self.interactions {
            value += c * f64::from(vector[a]) * f64::from(vector[b]);
        }
        value
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub seed: u64,
    pub num_records: usize,
    pub dim: usize,
    pub num_classes: u32,
    pub num_clusters: usize,
    pub cluster_separation: f64,
    /// Probability that a record's category is tied to its cluster
    /// (`cluster mod #categories`) instead of drawn by weight.
    pub cluster_category_coupling: f64,
    pub categories: Vec<CategorySpec>,
    pub ctr_model: CtrModel,
    pub impressions_range: (u64, u64),
    pub width_range: (u32, u32),
    pub height_range: (u32, u32),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("invalid synth spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

/// Ground truth behind a generated corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedTruth {
    pub cluster_of: BTreeMap<String, usize>,
    pub category_of: BTreeMap<String, String>,
    /// category -> class_id -> probability the object is in a record's top-5.
    pub category_object_freq: BTreeMap<String, BTreeMap<u32, f64>>,
    pub ctr_weights: CtrModel,
    pub centroids: Vec<Vec<f64>>,
}

/// Display name for an object class.
pub fn class_name(class_id: u32) -> String {
    let known = match class_id {
        692 => Some("packet"),
        781 => Some("scoreboard"),
        817 => Some("sports car"),
        916 => Some("web site"),
        921 => Some("book jacket"),
        _ => None,
    };
    match known {
        Some(n) => n.into(),
        None => format!("class {class_id}"),
    }
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, SynthError> {
    Err(SynthError::InvalidSpec(msg.into()))
}

fn check_weights(weights: impl Iterator<Item = f64>, what: &str) -> Result<(), SynthError> {
    let mut total = 0.0;
    for w in weights {
        if !(w.is_finite() && w >= 0.0) {
            return invalid(format!("{what}: weights must be finite and non-negative"));
        }
        total += w;
    }
    if total <= 0.0 {
        return invalid(format!("{what}: weights must not all be zero"));
    }
    Ok(())
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.dim == 0 {
            return invalid("dim must be positive");
        }
        if self.num_classes == 0 {
            return invalid("num_classes must be positive");
        }
        if self.num_clusters == 0 || self.num_clusters > self.dim {
            return invalid("num_clusters must be in [1, dim]");
        }
        if !(self.cluster_separation.is_finite() && self.cluster_separation >= 0.0) {
            return invalid("cluster_separation must be finite and >= 0");
        }
        if !(0.0..=1.0).contains(&self.cluster_category_coupling) {
            return invalid("cluster_category_coupling must be in [0, 1]");
        }
        if self.categories.is_empty() {
            return invalid("at least one category required");
        }
        check_weights(self.categories.iter().map(|c| c.weight), "category")?;
        let mut names = BTreeSet::new();
        for cat in &self.categories {
            if cat.name.is_empty() || cat.name.chars().any(char::is_control) {
                return invalid("category names must be non-empty plain text");
            }
            if !names.insert(cat.name.as_str()) {
                return invalid(format!("duplicate category {:?}", cat.name));
            }
            if cat.slots.len() != LABELS_PER_RECORD {
                return invalid(format!("category {:?}: exactly 5 slots required", cat.name));
            }
            let mut pool = BTreeSet::new();
            for slot in &cat.slots {
                check_weights(slot.iter().map(|p| p.1), &cat.name)?;
                for &(class_id, _) in slot {
                    if class_id >= self.num_classes {
                        return invalid(format!("class {class_id} >= num_classes"));
                    }
                    if !pool.insert(class_id) {
                        return invalid(format!(
                            "category {:?}: class {class_id} appears in two slots",
                            cat.name
                        ));
                    }
                }
            }
        }
        let m = &self.ctr_model;
        let finite = [m.intercept, m.width_weight, m.height_weight]
            .into_iter()
            .chain(m.embedding_weights.iter().map(|w| w.1))
            .chain(m.interactions.iter().map(|w| w.2))
            .all(f64::is_finite);
        if !finite {
            return invalid("ctr model weights must be finite");
        }
        if !(m.noise_sd.is_finite() && m.noise_sd >= 0.0) {
            return invalid("ctr noise_sd must be finite and >= 0");
        }
        if m.embedding_weights.iter().any(|w| w.0 >= self.dim)
            || m.interactions
                .iter()
                .any(|w| w.0 >= self.dim || w.1 >= self.dim)
        {
            return invalid("ctr model references an embedding coordinate >= dim");
        }
        let (ilo, ihi) = self.impressions_range;
        let (wlo, whi) = self.width_range;
        let (hlo, hhi) = self.height_range;
        if ilo > ihi || wlo > whi || hlo > hhi {
            return invalid("ranges must satisfy min <= max");
        }
        if wlo == 0 || hlo == 0 {
            return invalid("width and height ranges must be positive");
        }
        if ihi > (1u64 << 52) {
            return invalid("impressions must stay below 2^52");
        }
        Ok(())
    }

    /// A general-purpose spec: eight categories whose first slot shares
    /// a few corpus-wide "stop objects", category-specific pools in the
    /// middle slots, and a shared generic pool in the last slot.
    pub fn standard(seed: u64, num_records: usize, dim: usize, num_clusters: usize) -> Self {
        const NAMES: [(&str, f64); 8] = [
            ("Auto", 3.0),
            ("Travel", 2.0),
            ("Finance", 2.0),
            ("Retail", 2.0),
            ("Technology", 1.5),
            ("Health", 1.0),
            ("Entertainment", 1.0),
            ("Education", 1.0),
        ];
        let categories = NAMES
            .iter()
            .enumerate()
            .map(|(c, &(name, weight))| {
                let base = 100 + 40 * c as u32;
                let own = |slot: u32| -> Vec<(u32, f64)> {
                    (0..8)
                        .map(|j| (base + 8 * slot + j, libm::pow(0.7, f64::from(j))))
                        .collect()
                };
                let mut first = vec![(916, 3.0), (921, 2.0), (692, 1.0)];
                first.extend(own(0).into_iter().map(|(id, w)| (id, w * 0.8)));
                let mut slots = vec![first, own(1), own(2), own(3)];
                let mut generic: Vec<(u32, f64)> = (600..620).map(|id| (id, 1.0)).collect();
                if name == "Auto" {
                    generic.push((817, 12.0));
                }
                slots.push(generic);
                CategorySpec {
                    name: name.into(),
                    weight,
                    slots,
                }
            })
            .collect();
        let embedding_weights = (0..dim.min(8))
            .map(|j| (j, 0.002 * (j as f64 + 1.0)))
            .collect();
        Self {
            seed,
            num_records,
            dim,
            num_classes: crate::corpus::DEFAULT_NUM_CLASSES,
            num_clusters,
            cluster_separation: 10.0,
            cluster_category_coupling: 0.5,
            categories,
            ctr_model: CtrModel {
                intercept: 0.01,
                width_weight: 0.05,
                height_weight: 0.08,
                embedding_weights,
                interactions: Vec::new(),
                noise_sd: 0.002,
            },
            impressions_range: (1_000, 200_000),
            width_range: (120, 970),
            height_range: (60, 600),
        }
    }

    fn centroid_scale(&self) -> f64 {
        self.cluster_separation / core::f64::consts::SQRT_2
    }

    /// Exact planted presence probabilities.
    pub fn category_object_freq(&self) -> BTreeMap<String, BTreeMap<u32, f64>> {
        self.categories
            .iter()
            .map(|cat| {
                let mut freq = BTreeMap::new();
                for slot in &cat.slots {
                    let total: f64 = slot.iter().map(|p| p.1).sum();
                    for &(class_id, w) in slot {
                        if w > 0.0 {
                            freq.insert(class_id, w / total);
                        }
                    }
                }
                (cat.name.clone(), freq)
            })
            .collect()
    }
}

fn categorical(rng: &mut SplitMix64, weights: impl Iterator<Item = f64> + Clone) -> usize {
    let total: f64 = weights.clone().sum();
    let target = rng.next_f64() * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, w) in weights.enumerate() {
        if w > 0.0 {
            last_positive = i;
            acc += w;
            if target < acc {
                return i;
            }
        }
    }
    last_positive
}

struct Generated {
    record: AdRecord,
    cluster: usize,
}

fn generate_record(spec: &SynthSpec, index: usize) -> Generated {
    let mut rng = SplitMix64::substream(spec.seed, &[domain::SYNTH_RECORD, index as u64]);
    let id = format!("{:016x}{:016x}", rng.next_u64(), rng.next_u64());
    let cluster = rng.index(spec.num_clusters);
    let coupled = rng.next_f64() < spec.cluster_category_coupling;
    let weighted = categorical(&mut rng, spec.categories.iter().map(|c| c.weight));
    let category = if coupled {
        cluster % spec.categories.len()
    } else {
        weighted
    };
    let cat = &spec.categories[category];
    let width = rng.range_inclusive(spec.width_range.0.into(), spec.width_range.1.into()) as u32;
    let height = rng.range_inclusive(spec.height_range.0.into(), spec.height_range.1.into()) as u32;
    let impressions = rng.range_inclusive(spec.impressions_range.0, spec.impressions_range.1);

    let objects: Vec<u32> = cat
        .slots
        .iter()
        .map(|slot| slot[categorical(&mut rng, slot.iter().map(|p| p.1))].0)
        .collect();
    let mut scores: Vec<f64> = (0..LABELS_PER_RECORD).map(|_| rng.next_f64()).collect();
    scores.sort_by(|a, b| b.total_cmp(a));
    let mut labels: Vec<ObjectLabel> = objects
        .into_iter()
        .zip(scores)
        .map(|(class_id, score)| ObjectLabel {
            class_id,
            name: class_name(class_id),
            score,
        })
        .collect();
    labels.sort_by(label_order);

    let sd = 1.0 / libm::sqrt(spec.dim as f64);
    let scale = spec.centroid_scale();
    let vector: Vec<f32> = (0..spec.dim)
        .map(|j| {
            let centre = if j == cluster { scale } else { 0.0 };
            (centre + sd * rng.standard_normal()) as f32
        })
        .collect();

    let model = &spec.ctr_model;
    let mut p = model.evaluate(width, height, &vector);
    if model.noise_sd > 0.0 {
        p += model.noise_sd * rng.standard_normal();
    }
    let p = p.clamp(0.0, 1.0);
    let clicks = (round_half_even(impressions as f64 * p) as u64).min(impressions);

    Generated {
        record: AdRecord {
            id,
            width,
            height,
            category: cat.name.clone(),
            impressions,
            clicks,
            labels,
            vector,
        },
        cluster,
    }
}

/// Generates the corpus described by `spec`. Output is identical for any
/// executor.
pub fn generate_corpus<E: Executor + ?Sized>(
    spec: &SynthSpec,
    exec: &E,
) -> Result<(Corpus, PlantedTruth), SynthError> {
    spec.validate()?;
    let generated = exec.map_indexed(spec.num_records, |i| generate_record(spec, i));
    let mut cluster_of = BTreeMap::new();
    let mut category_of = BTreeMap::new();
    let mut records = Vec::with_capacity(generated.len());
    for g in generated {
        cluster_of.insert(g.record.id.clone(), g.cluster);
        category_of.insert(g.record.id.clone(), g.record.category.clone());
        records.push(g.record);
    }
    let (corpus, dropped) = Corpus::from_records(records, spec.dim, spec.num_classes)?;
    if dropped > 0 {
        return invalid("generated ids collided; choose another seed");
    }
    let scale = spec.centroid_scale();
    let centroids = (0..spec.num_clusters)
        .map(|c| {
            let mut v = vec![0.0; spec.dim];
            v[c] = scale;
            v
        })
        .collect();
    let truth = PlantedTruth {
        cluster_of,
        category_of,
        category_object_freq: spec.category_object_freq(),
        ctr_weights: spec.ctr_model.clone(),
        centroids,
    };
    Ok((corpus, truth))
}
