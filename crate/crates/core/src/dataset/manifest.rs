use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{parent_dir, records, resolve, ClassCatalog, DatasetError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sample {
    pub sample_id: String,
    pub ground_truth_class: String,
    pub road_image_path: Option<PathBuf>,
    pub sign_image_path: Option<PathBuf>,
    pub segmentation_path: Option<PathBuf>,
}

impl Sample {
    /// Road image plus segmentation map are both present.
    pub fn is_full_pipeline(&self) -> bool {
        self.road_image_path.is_some() && self.segmentation_path.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleManifest {
    samples: Vec<Sample>,
}

impl SampleManifest {
    /// Validates ground-truth classes against `catalog` and the image-mode rule.
    pub fn new(samples: Vec<Sample>, catalog: &ClassCatalog) -> Result<Self, DatasetError> {
        let mut seen = HashSet::new();
        for s in &samples {
            if !seen.insert(s.sample_id.as_str()) {
                return Err(DatasetError::DuplicateSample(s.sample_id.clone()));
            }
            if !catalog.contains(&s.ground_truth_class) {
                return Err(DatasetError::UnknownClass {
                    sample_id: s.sample_id.clone(),
                    class_id: s.ground_truth_class.clone(),
                });
            }
            if s.sign_image_path.is_none() && !s.is_full_pipeline() {
                return Err(DatasetError::MissingImageMode(s.sample_id.clone()));
            }
        }
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn get(&self, sample_id: &str) -> Option<&Sample> {
        self.samples.iter().find(|s| s.sample_id == sample_id)
    }

    /// Serializes to the manifest text format with absolute-as-stored paths.
    pub fn to_text(&self) -> String {
        fn field(p: &Option<PathBuf>) -> String {
            p.as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_else(|| "-".to_string())
        }
        let mut out = String::from("# sample_id\tground_truth_class\troad_image\tsign_image\tsegmentation\n");
        for s in &self.samples {
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}",
                s.sample_id,
                s.ground_truth_class,
                field(&s.road_image_path),
                field(&s.sign_image_path),
                field(&s.segmentation_path)
            )
            .unwrap();
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<(), DatasetError> {
        std::fs::write(path, self.to_text()).map_err(|e| DatasetError::io(path, e))
    }
}

/// Loads a five-column manifest:
/// `sample_id, ground_truth_class, road_image|-, sign_image|-, segmentation|-`.
pub fn load_manifest(path: &Path, catalog: &ClassCatalog) -> Result<SampleManifest, DatasetError> {
    let text = std::fs::read_to_string(path).map_err(|e| DatasetError::io(path, e))?;
    let base = parent_dir(path);
    let optional = |raw: &str| {
        let raw = raw.trim();
        (raw != "-" && !raw.is_empty()).then(|| resolve(&base, raw))
    };
    let mut samples = Vec::new();
    for (line, fields) in records(&text) {
        let [sample_id, class_id, road, sign, seg] = fields[..] else {
            return Err(DatasetError::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("expected 5 tab-separated fields, found {}", fields.len()),
            });
        };
        if sample_id.trim().is_empty() {
            return Err(DatasetError::Parse {
                path: path.to_path_buf(),
                line,
                message: "empty sample_id".to_string(),
            });
        }
        samples.push(Sample {
            sample_id: sample_id.trim().to_string(),
            ground_truth_class: class_id.trim().to_string(),
            road_image_path: optional(road),
            sign_image_path: optional(sign),
            segmentation_path: optional(seg),
        });
    }
    SampleManifest::new(samples, catalog)
}

/// Draws `n` distinct samples, deterministically for a given `seed`.
///
/// When `n` is at least the number of classes present, one sample of every
/// class is drawn first and the remainder is filled uniformly from what is
/// left, so the subset covers the same classes as the population. Otherwise
/// the draw is plain uniform sampling without replacement. The result is
/// shuffled.
pub fn sample_subset(
    manifest: &SampleManifest,
    n: usize,
    seed: u64,
) -> Result<SampleManifest, DatasetError> {
    let population = manifest.len();
    if n > population {
        return Err(DatasetError::SubsetTooLarge {
            requested: n,
            population,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut by_class: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, s) in manifest.samples.iter().enumerate() {
        by_class.entry(&s.ground_truth_class).or_default().push(i);
    }

    let mut chosen = Vec::with_capacity(n);
    let mut taken = vec![false; population];
    if n >= by_class.len() {
        for members in by_class.values() {
            let &pick = members.choose(&mut rng).expect("class groups are non-empty");
            chosen.push(pick);
            taken[pick] = true;
        }
    }
    let mut rest: Vec<usize> = (0..population).filter(|&i| !taken[i]).collect();
    rest.shuffle(&mut rng);
    chosen.extend(rest.into_iter().take(n - chosen.len()));
    chosen.shuffle(&mut rng);

    Ok(SampleManifest {
        samples: chosen.into_iter().map(|i| manifest.samples[i].clone()).collect(),
    })
}
