//! Stage orchestration over a run directory.
//!
//! ```text
//! <output_dir>/
//!   detect/masks/<sample>.png
//!   detect/crops/<sample>_<i>.png, detections.tsv
//!   detect/records/<sample>.tsv
//!   detect/samples.tsv
//!   descriptions/<class>.txt, index.json
//!   results/<strategy>/records/<sample>_<i>.json
//!   results/<strategy>.jsonl
//!   reports/report.json, table.txt
//! ```
//!
//! Every stage reads only files written by earlier stages, so stages can be
//! rerun independently. Workers write per-sample files; shared index files
//! are assembled afterwards on the calling thread.

mod config;

pub use config::{BackendKind, RunConfig};

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::contour::{filter_detections, parse_detection_records, trace_contours};
use crate::dataset::{
    load_catalog, load_manifest, sample_subset, ClassCatalog, DatasetError, RgbImage, Sample,
    SampleManifest,
};
use crate::description::{
    build_description_set, DescriptionError, DescriptionPrompt, DescriptionSet,
};
use crate::evaluator::{build_report, render_table, EvalError, EvalRecord, EvalReport};
use crate::mask::{to_binary_mask, Legend, MaskError, SegmentationMap};
use crate::mllm::write_atomic;
use crate::mllm::{Gateway, LiveBackend, MllmError, MockBackend, ResponseCache};
use crate::par::parallel_map;
use crate::recognizer::{
    RecognitionResult, RecognitionStrategy, Recognizer, RecognizerError, Variant,
};
use crate::region::{crop_file_name, extract_all, RegionError};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error(transparent)]
    Description(#[from] DescriptionError),
    #[error(transparent)]
    Recognizer(#[from] RecognizerError),
    #[error(transparent)]
    Mllm(#[from] MllmError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("precondition: {0}")]
    Precondition(String),
    #[error("no recognition results under {0}")]
    MissingResults(PathBuf),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn create_dir(path: &Path) -> Result<(), PipelineError> {
    std::fs::create_dir_all(path).map_err(io_err(path))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| PipelineError::Config(format!("bad output path {}", path.display())))?;
    write_atomic(dir, name, bytes).map_err(io_err(path))
}

/// Paths inside a run directory.
#[derive(Debug, Clone)]
pub struct RunLayout {
    root: PathBuf,
}

impl RunLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn masks_dir(&self) -> PathBuf {
        self.root.join("detect").join("masks")
    }

    pub fn crops_dir(&self) -> PathBuf {
        self.root.join("detect").join("crops")
    }

    pub fn detection_records_dir(&self) -> PathBuf {
        self.root.join("detect").join("records")
    }

    pub fn detections_file(&self) -> PathBuf {
        self.crops_dir().join("detections.tsv")
    }

    pub fn detect_summary_file(&self) -> PathBuf {
        self.root.join("detect").join("samples.tsv")
    }

    pub fn descriptions_dir(&self) -> PathBuf {
        self.root.join("descriptions")
    }

    pub fn results_dir(&self) -> PathBuf {
        self.root.join("results")
    }

    pub fn result_records_dir(&self, v: Variant) -> PathBuf {
        self.results_dir().join(v.as_str()).join("records")
    }

    pub fn results_file(&self, v: Variant) -> PathBuf {
        self.results_dir().join(format!("{}.jsonl", v.as_str()))
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.root.join("reports")
    }
}

/// Catalog and manifest with the configured subset applied.
pub fn load_inputs(cfg: &RunConfig) -> Result<(ClassCatalog, SampleManifest), PipelineError> {
    let catalog = load_catalog(&cfg.catalog)?;
    let manifest = load_manifest(&cfg.manifest, &catalog)?;
    let manifest = match cfg.subset_n {
        Some(n) => sample_subset(&manifest, n, cfg.subset_seed)?,
        None => manifest,
    };
    Ok((catalog, manifest))
}

/// Gateway for the configured backend. The mock runs without a rate limit.
pub fn build_gateway(cfg: &RunConfig) -> Result<Gateway, PipelineError> {
    Ok(match cfg.backend {
        BackendKind::Mock => {
            let mut mock = MockBackend::new();
            if let Some(dir) = &cfg.mock_fixtures {
                mock = mock.with_fixtures_dir(dir);
            }
            Gateway::new(mock)
                .with_config(cfg.gateway.clone())
                .with_rpm_limit(0)
        }
        BackendKind::Live => {
            Gateway::new(LiveBackend::from_env(&cfg.gateway)?).with_config(cfg.gateway.clone())
        }
    })
}

pub fn response_cache(cfg: &RunConfig) -> ResponseCache {
    ResponseCache::new(cfg.cache_dir())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SampleStatus {
    Ok { detections: usize },
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DetectSummary {
    /// One entry per full-pipeline sample, in manifest order.
    pub samples: Vec<(String, SampleStatus)>,
}

impl DetectSummary {
    pub fn failed(&self) -> usize {
        self.samples
            .iter()
            .filter(|(_, s)| matches!(s, SampleStatus::Failed(_)))
            .count()
    }

    pub fn total_detections(&self) -> usize {
        self.samples
            .iter()
            .map(|(_, s)| match s {
                SampleStatus::Ok { detections } => *detections,
                SampleStatus::Failed(_) => 0,
            })
            .sum()
    }
}

fn detect_one(
    cfg: &RunConfig,
    layout: &RunLayout,
    legend: &Legend,
    sample: &Sample,
) -> Result<String, String> {
    let id = &sample.sample_id;
    let (Some(road_path), Some(seg_path)) = (&sample.road_image_path, &sample.segmentation_path)
    else {
        return Err("not a full-pipeline sample".into());
    };
    let road = RgbImage::load(road_path).map_err(|e| e.to_string())?;
    let seg_image = RgbImage::load(seg_path).map_err(|e| e.to_string())?;
    let seg = SegmentationMap::new(seg_image, legend.clone(), &cfg.sign_label)
        .map_err(|e| e.to_string())?;
    let mask = to_binary_mask(&seg, seg.sign_color(), cfg.mask_tolerance);
    mask.save_png(&layout.masks_dir().join(format!("{id}.png")))
        .map_err(|e| e.to_string())?;
    let detections = filter_detections(&trace_contours(&mask), cfg.min_area, cfg.min_side);
    let crops = extract_all(&road, &mask, &detections, cfg.padding, id)
        .map_err(|e: RegionError| e.to_string())?;
    let crops_dir = layout.crops_dir();
    for c in &crops {
        c.save(&crops_dir).map_err(|e| e.to_string())?;
    }
    let records = detections.to_records(id);
    let path = layout.detection_records_dir().join(format!("{id}.tsv"));
    write_file(&path, records.as_bytes()).map_err(|e| e.to_string())?;
    Ok(records)
}

/// Masks, detections and crops for every full-pipeline sample. A failing
/// sample is logged and recorded; the others still run.
pub fn cmd_detect(cfg: &RunConfig) -> Result<DetectSummary, PipelineError> {
    let (_, manifest) = load_inputs(cfg)?;
    let samples: Vec<&Sample> = manifest
        .samples()
        .iter()
        .filter(|s| s.is_full_pipeline())
        .collect();
    if samples.is_empty() {
        log::info!("nothing to detect");
        return Ok(DetectSummary { samples: Vec::new() });
    }
    let legend_path = cfg.legend.as_ref().ok_or_else(|| {
        PipelineError::Config("legend is required when the manifest has segmentation maps".into())
    })?;
    let legend = Legend::load(legend_path)?;

    let layout = RunLayout::new(&cfg.output_dir);
    for dir in [layout.masks_dir(), layout.crops_dir(), layout.detection_records_dir()] {
        create_dir(&dir)?;
    }

    let outcomes = parallel_map(&samples, cfg.workers, |s| detect_one(cfg, &layout, &legend, s));

    let mut all_records = String::new();
    let mut summary_text = String::from("# sample_id\tstatus\tdetections\n");
    let mut statuses = Vec::with_capacity(samples.len());
    for (s, outcome) in samples.iter().zip(outcomes) {
        let status = match outcome {
            Ok(records) => {
                let n = records.lines().count();
                all_records.push_str(&records);
                summary_text.push_str(&format!("{}\tok\t{n}\n", s.sample_id));
                SampleStatus::Ok { detections: n }
            }
            Err(msg) => {
                log::error!("sample {}: {msg}", s.sample_id);
                summary_text.push_str(&format!("{}\tfailed\t0\n", s.sample_id));
                SampleStatus::Failed(msg)
            }
        };
        statuses.push((s.sample_id.clone(), status));
    }
    write_file(&layout.detections_file(), all_records.as_bytes())?;
    write_file(&layout.detect_summary_file(), summary_text.as_bytes())?;
    Ok(DetectSummary { samples: statuses })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DescribeSummary {
    pub classes: usize,
    /// Hand corrections carried over from the existing store.
    pub preserved_corrections: usize,
    pub backend_calls: usize,
}

/// Builds the description store. Entries corrected by hand in an existing
/// store for the same catalog are kept.
pub fn cmd_describe(cfg: &RunConfig, gateway: &Gateway) -> Result<DescribeSummary, PipelineError> {
    let catalog = load_catalog(&cfg.catalog)?;
    let prompt = match &cfg.description_prompt {
        Some(t) => DescriptionPrompt::new(t.clone())?,
        None => DescriptionPrompt::default(),
    };
    let cache = response_cache(cfg);
    let calls_before = gateway.dispatch_count();
    let mut set = build_description_set(&catalog, &prompt, gateway, &cache, cfg.workers)?;

    let dir = RunLayout::new(&cfg.output_dir).descriptions_dir();
    let mut preserved = 0;
    if dir.join("index.json").exists() {
        match DescriptionSet::load(&dir) {
            Ok(old) if old.catalog_digest == catalog.digest() => {
                for d in old.descriptions().iter().filter(|d| d.corrected) {
                    if catalog.contains(&d.class_id) {
                        set = set.apply_correction(&d.class_id, &d.text)?;
                        preserved += 1;
                    }
                }
            }
            Ok(_) => log::warn!("existing description store is for another catalog; replacing it"),
            Err(e) => log::warn!("existing description store unreadable ({e}); replacing it"),
        }
    }
    set.save(&dir)?;
    Ok(DescribeSummary {
        classes: set.len(),
        preserved_corrections: preserved,
        backend_calls: gateway.dispatch_count() - calls_before,
    })
}

#[derive(Debug, Clone)]
enum Input {
    Image(PathBuf),
    Unavailable(String),
}

#[derive(Debug, Clone)]
struct WorkItem {
    sample_id: String,
    detection_index: usize,
    input: Input,
}

fn read_detect_summary(layout: &RunLayout) -> Result<BTreeMap<String, (String, usize)>, PipelineError> {
    let path = layout.detect_summary_file();
    let text = std::fs::read_to_string(&path).map_err(|e| {
        PipelineError::Precondition(format!(
            "{}: {e}; run detect before recognize",
            path.display()
        ))
    })?;
    let mut out = BTreeMap::new();
    for (line, f) in crate::dataset::records(&text) {
        let [id, status, n] = f[..] else {
            return Err(PipelineError::Precondition(format!("{}: line {line} malformed", path.display())));
        };
        let n = n.parse().map_err(|_| {
            PipelineError::Precondition(format!("{}: line {line} bad count", path.display()))
        })?;
        out.insert(id.to_string(), (status.to_string(), n));
    }
    Ok(out)
}

fn work_items(
    variant: Variant,
    manifest: &SampleManifest,
    layout: &RunLayout,
) -> Result<Vec<WorkItem>, PipelineError> {
    let samples = manifest.samples();
    let item = |s: &Sample, i: usize, input: Input| WorkItem {
        sample_id: s.sample_id.clone(),
        detection_index: i,
        input,
    };
    if variant == Variant::BaselineO {
        let missing: Vec<&str> = samples
            .iter()
            .filter(|s| s.road_image_path.is_none())
            .map(|s| s.sample_id.as_str())
            .collect();
        if !missing.is_empty() {
            return Err(PipelineError::Precondition(format!(
                "baseline_o needs road images; {} sample(s) lack one (first: {})",
                missing.len(),
                missing[0]
            )));
        }
        return Ok(samples
            .iter()
            .map(|s| item(s, 0, Input::Image(s.road_image_path.clone().unwrap_or_default())))
            .collect());
    }

    let needs_detect = samples.iter().any(Sample::is_full_pipeline);
    let (summary, by_sample) = if needs_detect {
        let text_path = layout.detections_file();
        let text = std::fs::read_to_string(&text_path).map_err(io_err(&text_path))?;
        let mut by_sample: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for r in parse_detection_records(&text).map_err(PipelineError::Precondition)? {
            by_sample.entry(r.sample_id).or_default().push(r.index);
        }
        (read_detect_summary(layout)?, by_sample)
    } else {
        (BTreeMap::new(), BTreeMap::new())
    };

    let crops = layout.crops_dir();
    let mut items = Vec::new();
    for s in samples {
        if !s.is_full_pipeline() {
            let input = match &s.sign_image_path {
                Some(p) => Input::Image(p.clone()),
                None => Input::Unavailable("sample has no sign image".into()),
            };
            items.push(item(s, 0, input));
            continue;
        }
        match summary.get(&s.sample_id) {
            None => items.push(item(s, 0, Input::Unavailable("sample was not detected".into()))),
            Some((status, _)) if status != "ok" => {
                items.push(item(s, 0, Input::Unavailable("detection failed".into())))
            }
            Some(_) => match by_sample.get(&s.sample_id) {
                Some(indices) if !indices.is_empty() => {
                    for &i in indices {
                        let path = crops.join(crop_file_name(&s.sample_id, i));
                        items.push(item(s, i, Input::Image(path)));
                    }
                }
                _ => items.push(item(s, 0, Input::Unavailable("no sign detected".into()))),
            },
        }
    }
    Ok(items)
}

fn record_path(layout: &RunLayout, v: Variant, sample_id: &str, idx: usize) -> PathBuf {
    layout
        .result_records_dir(v)
        .join(format!("{sample_id}_{idx}.json"))
}

fn read_record(path: &Path) -> Option<RecognitionResult> {
    let text = std::fs::read_to_string(path).ok()?;
    match serde_json::from_str(&text) {
        Ok(r) => Some(r),
        Err(e) => {
            log::warn!("{}: unreadable result record ({e}); redoing", path.display());
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecognizeSummary {
    pub strategy: Variant,
    pub records: usize,
    /// Records already present from an earlier run and reused.
    pub skipped: usize,
    pub failed: usize,
    pub backend_calls: usize,
    pub results_file: PathBuf,
}

/// One result record per (sample, detection). Finished records from an
/// earlier run are reused; records that ended in an error are redone.
pub fn cmd_recognize(cfg: &RunConfig, gateway: &Gateway) -> Result<RecognizeSummary, PipelineError> {
    let variant = cfg.strategy;
    let (catalog, manifest) = load_inputs(cfg)?;
    let layout = RunLayout::new(&cfg.output_dir);
    let items = work_items(variant, &manifest, &layout)?;

    let descriptions = match variant {
        Variant::Full => Some(DescriptionSet::load(&layout.descriptions_dir()).map_err(|e| {
            PipelineError::Precondition(format!("full strategy needs descriptions: {e}"))
        })?),
        _ => None,
    };
    let strategy = RecognitionStrategy::new(variant, cfg.k_requested())?;
    let query = cfg.query.as_deref().unwrap_or(variant.default_query());
    let cache = response_cache(cfg);
    let recognizer = Recognizer::with_query(strategy, &catalog, descriptions.as_ref(), gateway, query)?
        .with_cache(&cache);

    let records_dir = layout.result_records_dir(variant);
    create_dir(&records_dir)?;
    let calls_before = gateway.dispatch_count();

    let pending: Vec<&WorkItem> = items
        .iter()
        .filter(|it| {
            let path = record_path(&layout, variant, &it.sample_id, it.detection_index);
            !matches!(read_record(&path), Some(r) if r.error.is_none())
        })
        .collect();
    let skipped = items.len() - pending.len();

    let written = parallel_map(&pending, cfg.workers, |it| {
        let result = match &it.input {
            Input::Unavailable(msg) => {
                RecognitionResult::failed(&it.sample_id, it.detection_index, variant, msg.clone())
            }
            Input::Image(path) => match RgbImage::load(path) {
                Err(e) => RecognitionResult::failed(&it.sample_id, it.detection_index, variant, e.to_string()),
                Ok(img) => recognizer
                    .recognize(&img, &it.sample_id, it.detection_index)
                    .unwrap_or_else(|e| {
                        log::error!("sample {} #{}: {e}", it.sample_id, it.detection_index);
                        RecognitionResult::failed(&it.sample_id, it.detection_index, variant, e.to_string())
                    }),
            },
        };
        let path = record_path(&layout, variant, &it.sample_id, it.detection_index);
        let json = serde_json::to_string(&result).expect("result serializes");
        write_file(&path, json.as_bytes())
    });
    for w in written {
        w?;
    }

    let mut results: Vec<RecognitionResult> = Vec::with_capacity(items.len());
    for it in &items {
        let path = record_path(&layout, variant, &it.sample_id, it.detection_index);
        results.push(read_record(&path).ok_or_else(|| {
            PipelineError::Precondition(format!("{} vanished during the run", path.display()))
        })?);
    }
    results.sort_by(|a, b| {
        (a.sample_id.as_str(), a.detection_index).cmp(&(b.sample_id.as_str(), b.detection_index))
    });
    let mut jsonl = String::new();
    for r in &results {
        jsonl.push_str(&serde_json::to_string(r).expect("result serializes"));
        jsonl.push('\n');
    }
    let results_file = layout.results_file(variant);
    write_file(&results_file, jsonl.as_bytes())?;

    Ok(RecognizeSummary {
        strategy: variant,
        records: results.len(),
        skipped,
        failed: results.iter().filter(|r| !r.parse_ok).count(),
        backend_calls: gateway.dispatch_count() - calls_before,
        results_file,
    })
}

/// Reads a `.jsonl` results file.
pub fn read_results(path: &Path) -> Result<Vec<RecognitionResult>, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| {
                PipelineError::Precondition(format!("{} line {}: {e}", path.display(), i + 1))
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluateSummary {
    pub reports: Vec<EvalReport>,
    pub table: String,
    pub report_file: PathBuf,
    pub table_file: PathBuf,
}

/// Scores every strategy that has a results file. Each (sample, detection)
/// record is scored against its sample's ground truth.
pub fn cmd_evaluate(cfg: &RunConfig) -> Result<EvaluateSummary, PipelineError> {
    let (_, manifest) = load_inputs(cfg)?;
    let layout = RunLayout::new(&cfg.output_dir);
    let dataset = cfg.dataset_name();
    let mut reports = Vec::new();
    for v in Variant::ALL {
        let path = layout.results_file(v);
        if !path.exists() {
            continue;
        }
        let records: Vec<EvalRecord> = read_results(&path)?
            .into_iter()
            .filter_map(|r| {
                let sample = manifest.get(&r.sample_id)?;
                Some(EvalRecord {
                    sample_id: r.sample_id,
                    ground_truth_class: sample.ground_truth_class.clone(),
                    ranked: r.ranked,
                })
            })
            .collect();
        if records.is_empty() {
            log::warn!("{}: no records for this manifest", path.display());
            continue;
        }
        reports.push(build_report(&records, &dataset, v.as_str(), &cfg.k_list)?);
    }
    if reports.is_empty() {
        return Err(PipelineError::MissingResults(layout.results_dir()));
    }
    let table = render_table(&reports)?;

    let dir = layout.reports_dir();
    create_dir(&dir)?;
    let report_file = dir.join("report.json");
    let json = serde_json::to_string_pretty(&reports).expect("reports serialize") + "\n";
    write_file(&report_file, json.as_bytes())?;
    let table_file = dir.join("table.txt");
    write_file(&table_file, table.as_bytes())?;
    Ok(EvaluateSummary {
        reports,
        table,
        report_file,
        table_file,
    })
}
