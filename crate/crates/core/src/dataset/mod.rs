//! Dataset ingestion: class catalogs, sample manifests, and RGB rasters.
//!
//! Catalogs and manifests are tab-separated UTF-8 text files. Relative paths
//! inside them resolve against the directory of the file that names them.

mod catalog;
mod manifest;
mod raster;

use std::path::{Path, PathBuf};

pub use catalog::{load_catalog, ClassCatalog, ClassEntry};
pub use manifest::{load_manifest, sample_subset, Sample, SampleManifest};
pub use raster::RgbImage;

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("catalog must contain at least one class")]
    EmptyCatalog,
    #[error("duplicate class_id \"{0}\"")]
    DuplicateClass(String),
    #[error("class_id must be non-empty")]
    EmptyClassId,
    #[error("template image for class \"{class_id}\" is unreadable: {message}")]
    BadTemplate { class_id: String, message: String },
    #[error("sample \"{sample_id}\" has unknown ground_truth_class \"{class_id}\"")]
    UnknownClass { sample_id: String, class_id: String },
    #[error("sample \"{0}\" needs a sign image or both a road image and a segmentation map")]
    MissingImageMode(String),
    #[error("duplicate sample_id \"{0}\"")]
    DuplicateSample(String),
    #[error("cannot draw {requested} samples from a population of {population}")]
    SubsetTooLarge { requested: usize, population: usize },
    #[error("invalid image: {0}")]
    InvalidImage(String),
}

impl DatasetError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Yields `(1-based line number, tab-separated fields)` for every non-blank,
/// non-comment line.
pub(crate) fn records(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, line)| {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            None
        } else {
            Some((i + 1, line.split('\t').collect()))
        }
    })
}

pub(crate) fn resolve(base: &Path, raw: &str) -> PathBuf {
    let p = Path::new(raw);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

pub(crate) fn parent_dir(path: &Path) -> PathBuf {
    path.parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."))
}
