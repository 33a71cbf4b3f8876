//! Corpus manifests: one JSON header line, then one JSON record per line.
//! Vectors are either inline or rows of an optional little-endian f32
//! sidecar file. See the README for the byte-level format.

use std::fs;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use adscope_core::corpus::{CorpusError, RecordError};
use adscope_core::{AdRecord, Corpus, ObjectLabel};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const FORMAT: &str = "adscope-manifest";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Header {
    pub format: String,
    pub version: u32,
    pub dim: usize,
    #[serde(default = "default_num_classes")]
    pub num_classes: u32,
    /// Sidecar file name, relative to the manifest's directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sidecar: Option<String>,
}

fn default_num_classes() -> u32 {
    adscope_core::corpus::DEFAULT_NUM_CLASSES
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordLine {
    id: String,
    width: u32,
    height: u32,
    category: String,
    impressions: u64,
    clicks: u64,
    labels: Vec<ObjectLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    vector: Option<Vec<f32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    vector_row: Option<u64>,
}

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("manifest not found: {0}")]
    NotFound(PathBuf),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("manifest is empty: missing header line")]
    MissingHeader,
    #[error("line {line}: malformed {what}: {message}")]
    Malformed {
        line: usize,
        what: &'static str,
        message: String,
    },
    #[error("line 1: unknown format {0:?}")]
    UnknownFormat(String),
    #[error("line 1: unknown header version {0}")]
    UnknownVersion(u32),
    #[error("line {line}: {source}")]
    Record { line: usize, source: RecordError },
    #[error("line {line}: record needs exactly one of `vector` and `vector_row`")]
    VectorSource { line: usize },
    #[error("line {line}: vector_row given but the header names no sidecar")]
    NoSidecar { line: usize },
    #[error("line {line}: sidecar row {row} out of range ({rows} rows)")]
    SidecarRow { line: usize, row: u64, rows: u64 },
    #[error("sidecar size {bytes} bytes is not a whole number of {dim}-float rows")]
    SidecarSize { bytes: u64, dim: usize },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

impl ManifestError {
    fn io(path: &Path, source: io::Error) -> Self {
        if source.kind() == io::ErrorKind::NotFound {
            ManifestError::NotFound(path.to_path_buf())
        } else {
            ManifestError::Io {
                path: path.to_path_buf(),
                source,
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub header: Header,
    pub corpus: Corpus,
    pub duplicates_dropped: usize,
}

struct Sidecar {
    data: Vec<u8>,
    dim: usize,
}

impl Sidecar {
    fn rows(&self) -> u64 {
        (self.data.len() / (4 * self.dim)) as u64
    }

    fn row(&self, row: u64) -> Vec<f32> {
        let start = row as usize * 4 * self.dim;
        self.data[start..start + 4 * self.dim]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect()
    }
}

fn parse_header(text: &str) -> Result<Header, ManifestError> {
    let header: Header = serde_json::from_str(text).map_err(|e| ManifestError::Malformed {
        line: 1,
        what: "header",
        message: e.to_string(),
    })?;
    if header.format != FORMAT {
        return Err(ManifestError::UnknownFormat(header.format));
    }
    if header.version != VERSION {
        return Err(ManifestError::UnknownVersion(header.version));
    }
    if header.dim == 0 {
        return Err(CorpusError::ZeroDimension.into());
    }
    if header.num_classes == 0 {
        return Err(CorpusError::ZeroClasses.into());
    }
    Ok(header)
}

/// Reads and validates a manifest. Blank lines are skipped; duplicate ids
/// keep their first occurrence.
pub fn parse_manifest(path: &Path) -> Result<Manifest, ManifestError> {
    let file = fs::File::open(path).map_err(|e| ManifestError::io(path, e))?;
    let mut lines = BufReader::new(file).lines().enumerate();
    let header = loop {
        match lines.next() {
            None => return Err(ManifestError::MissingHeader),
            Some((_, line)) => {
                let line = line.map_err(|e| ManifestError::io(path, e))?;
                if !line.trim().is_empty() {
                    break parse_header(&line)?;
                }
            }
        }
    };
    let sidecar = match &header.sidecar {
        None => None,
        Some(name) => {
            let sidecar_path = path.parent().unwrap_or(Path::new(".")).join(name);
            let data = fs::read(&sidecar_path).map_err(|e| ManifestError::io(&sidecar_path, e))?;
            if data.len() % (4 * header.dim) != 0 {
                return Err(ManifestError::SidecarSize {
                    bytes: data.len() as u64,
                    dim: header.dim,
                });
            }
            Some(Sidecar {
                data,
                dim: header.dim,
            })
        }
    };

    let mut records = Vec::new();
    for (index, line) in lines {
        let line_no = index + 1;
        let text = line.map_err(|e| ManifestError::io(path, e))?;
        if text.trim().is_empty() {
            continue;
        }
        let raw: RecordLine =
            serde_json::from_str(&text).map_err(|e| ManifestError::Malformed {
                line: line_no,
                what: "record",
                message: e.to_string(),
            })?;
        let vector = match (raw.vector, raw.vector_row) {
            (Some(v), None) => v,
            (None, Some(row)) => {
                let sc = sidecar
                    .as_ref()
                    .ok_or(ManifestError::NoSidecar { line: line_no })?;
                if row >= sc.rows() {
                    return Err(ManifestError::SidecarRow {
                        line: line_no,
                        row,
                        rows: sc.rows(),
                    });
                }
                sc.row(row)
            }
            _ => return Err(ManifestError::VectorSource { line: line_no }),
        };
        let record = AdRecord {
            id: raw.id,
            width: raw.width,
            height: raw.height,
            category: raw.category,
            impressions: raw.impressions,
            clicks: raw.clicks,
            labels: raw.labels,
            vector,
        };
        record
            .validate(header.dim, header.num_classes)
            .map_err(|source| ManifestError::Record {
                line: line_no,
                source,
            })?;
        records.push(record);
    }
    let (corpus, duplicates_dropped) =
        Corpus::from_records(records, header.dim, header.num_classes)?;
    Ok(Manifest {
        header,
        corpus,
        duplicates_dropped,
    })
}

/// Where vectors go when writing a manifest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum VectorStorage {
    Inline,
    /// Sidecar file name, created next to the manifest.
    Sidecar(String),
}

/// Writes `corpus` as a manifest. Output bytes depend only on the corpus and
/// the storage choice.
pub fn write_manifest(
    path: &Path,
    corpus: &Corpus,
    storage: &VectorStorage,
) -> Result<(), ManifestError> {
    let header = Header {
        format: FORMAT.into(),
        version: VERSION,
        dim: corpus.dim(),
        num_classes: corpus.num_classes(),
        sidecar: match storage {
            VectorStorage::Inline => None,
            VectorStorage::Sidecar(name) => Some(name.clone()),
        },
    };
    let file = fs::File::create(path).map_err(|e| ManifestError::io(path, e))?;
    let mut out = BufWriter::new(file);
    let mut sidecar = Vec::new();
    let mut write = || -> io::Result<()> {
        serde_json::to_writer(&mut out, &header)?;
        out.write_all(b"\n")?;
        for (row, r) in corpus.records().iter().enumerate() {
            let inline = matches!(storage, VectorStorage::Inline);
            if !inline {
                for v in &r.vector {
                    sidecar.extend_from_slice(&v.to_le_bytes());
                }
            }
            let line = RecordLine {
                id: r.id.clone(),
                width: r.width,
                height: r.height,
                category: r.category.clone(),
                impressions: r.impressions,
                clicks: r.clicks,
                labels: r.labels.clone(),
                vector: inline.then(|| r.vector.clone()),
                vector_row: (!inline).then_some(row as u64),
            };
            serde_json::to_writer(&mut out, &line)?;
            out.write_all(b"\n")?;
        }
        out.flush()
    };
    write().map_err(|e| ManifestError::io(path, e))?;
    if let VectorStorage::Sidecar(name) = storage {
        let sidecar_path = path.parent().unwrap_or(Path::new(".")).join(name);
        fs::write(&sidecar_path, &sidecar).map_err(|e| ManifestError::io(&sidecar_path, e))?;
    }
    Ok(())
}
