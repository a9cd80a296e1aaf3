//! `key = value` run configuration.
//!
//! Relative paths resolve against the config file's directory. Unknown keys
//! are rejected so typos do not silently fall back to defaults.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::contour::{DEFAULT_MIN_AREA, DEFAULT_MIN_SIDE};
use crate::evaluator::DEFAULT_KS;
use crate::mllm::GatewayConfig;
use crate::recognizer::Variant;

use super::PipelineError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendKind {
    Live,
    Mock,
}

impl FromStr for BackendKind {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "live" => Ok(Self::Live),
            "mock" => Ok(Self::Mock),
            other => Err(PipelineError::Config(format!(
                "backend must be live or mock, got \"{other}\""
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub catalog: PathBuf,
    pub manifest: PathBuf,
    pub legend: Option<PathBuf>,
    pub sign_label: String,
    pub output_dir: PathBuf,
    /// Defaults to `<output_dir>/cache`.
    pub cache_dir: Option<PathBuf>,
    pub dataset_name: Option<String>,
    pub backend: BackendKind,
    pub mock_fixtures: Option<PathBuf>,
    pub gateway: GatewayConfig,
    pub mask_tolerance: u8,
    pub min_area: usize,
    pub min_side: u32,
    pub padding: u32,
    pub strategy: Variant,
    /// Accuracy cut-offs reported; the largest is the candidate count requested.
    pub k_list: Vec<usize>,
    pub subset_n: Option<usize>,
    pub subset_seed: u64,
    pub workers: usize,
    pub description_prompt: Option<String>,
    pub query: Option<String>,
}

impl RunConfig {
    pub fn new(catalog: impl Into<PathBuf>, manifest: impl Into<PathBuf>, output_dir: impl Into<PathBuf>) -> Self {
        Self {
            catalog: catalog.into(),
            manifest: manifest.into(),
            legend: None,
            sign_label: "traffic_sign".to_string(),
            output_dir: output_dir.into(),
            cache_dir: None,
            dataset_name: None,
            backend: BackendKind::Mock,
            mock_fixtures: None,
            gateway: GatewayConfig::default(),
            mask_tolerance: 0,
            min_area: DEFAULT_MIN_AREA,
            min_side: DEFAULT_MIN_SIDE,
            padding: 0,
            strategy: Variant::Full,
            k_list: DEFAULT_KS.to_vec(),
            subset_n: None,
            subset_seed: 0,
            workers: 4,
            description_prompt: None,
            query: None,
        }
    }

    pub fn k_requested(&self) -> usize {
        self.k_list.iter().copied().max().unwrap_or(1)
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.cache_dir
            .clone()
            .unwrap_or_else(|| self.output_dir.join("cache"))
    }

    pub fn dataset_name(&self) -> String {
        self.dataset_name.clone().unwrap_or_else(|| {
            self.manifest
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "dataset".to_string())
        })
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self, PipelineError> {
        let mut catalog = None;
        let mut manifest = None;
        let mut cfg = RunConfig::new("", "", base.join("run"));
        let path = |v: &str| {
            let p = Path::new(v);
            if p.is_absolute() {
                p.to_path_buf()
            } else {
                base.join(p)
            }
        };
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                PipelineError::Config(format!("line {}: expected key = value", n + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |e: String| PipelineError::Config(format!("line {}: {key}: {e}", n + 1));
            fn num<T: FromStr>(v: &str) -> Result<T, String>
            where
                T::Err: std::fmt::Display,
            {
                v.parse::<T>().map_err(|e| format!("\"{v}\": {e}"))
            }
            match key {
                "catalog" => catalog = Some(path(value)),
                "manifest" => manifest = Some(path(value)),
                "legend" => cfg.legend = Some(path(value)),
                "sign_label" => cfg.sign_label = value.to_string(),
                "output_dir" => cfg.output_dir = path(value),
                "cache_dir" => cfg.cache_dir = Some(path(value)),
                "dataset_name" => cfg.dataset_name = Some(value.to_string()),
                "backend" => cfg.backend = value.parse()?,
                "mock_fixtures" => cfg.mock_fixtures = Some(path(value)),
                "endpoint_url" => cfg.gateway.endpoint_url = value.to_string(),
                "model_tag" => cfg.gateway.model_tag = value.to_string(),
                "rpm_limit" => cfg.gateway.rpm_limit = num(value).map_err(bad)?,
                "max_retries" => cfg.gateway.max_retries = num(value).map_err(bad)?,
                "timeout_seconds" => cfg.gateway.timeout_seconds = num(value).map_err(bad)?,
                "temperature" => cfg.gateway.temperature = num(value).map_err(bad)?,
                "max_output_tokens" => cfg.gateway.max_output_tokens = num(value).map_err(bad)?,
                "mask_tolerance" => cfg.mask_tolerance = num(value).map_err(bad)?,
                "min_area" => cfg.min_area = num(value).map_err(bad)?,
                "min_side" => cfg.min_side = num(value).map_err(bad)?,
                "padding" => cfg.padding = num(value).map_err(bad)?,
                "strategy" => cfg.strategy = value.parse().map_err(|e: crate::recognizer::RecognizerError| bad(e.to_string()))?,
                "k" | "k_list" => {
                    cfg.k_list = value
                        .split(',')
                        .map(|v| num::<usize>(v.trim()))
                        .collect::<Result<_, _>>()
                        .map_err(bad)?
                }
                "subset_n" => cfg.subset_n = Some(num(value).map_err(bad)?),
                "subset_seed" => cfg.subset_seed = num(value).map_err(bad)?,
                "workers" => cfg.workers = num(value).map_err(bad)?,
                "description_prompt" => cfg.description_prompt = Some(value.to_string()),
                "query" => cfg.query = Some(value.to_string()),
                other => {
                    return Err(PipelineError::Config(format!(
                        "line {}: unknown key \"{other}\"",
                        n + 1
                    )))
                }
            }
        }
        cfg.catalog = catalog.ok_or_else(|| PipelineError::Config("missing key: catalog".into()))?;
        cfg.manifest = manifest.ok_or_else(|| PipelineError::Config("missing key: manifest".into()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let cfg = Self::parse(&text, base)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Referenced input paths exist and numeric fields are in range.
    pub fn validate(&self) -> Result<(), PipelineError> {
        let must_exist = [
            ("catalog", Some(&self.catalog)),
            ("manifest", Some(&self.manifest)),
            ("legend", self.legend.as_ref()),
            ("mock_fixtures", self.mock_fixtures.as_ref()),
        ];
        for (key, p) in must_exist {
            if let Some(p) = p {
                if !p.exists() {
                    return Err(PipelineError::Config(format!(
                        "{key}: {} does not exist",
                        p.display()
                    )));
                }
            }
        }
        if self.k_list.is_empty() || self.k_list.contains(&0) {
            return Err(PipelineError::Config("k values must be >= 1".into()));
        }
        if !(self.gateway.temperature >= 0.0 && self.gateway.temperature.is_finite()) {
            return Err(PipelineError::Config("temperature must be >= 0".into()));
        }
        if self.workers == 0 {
            return Err(PipelineError::Config("workers must be >= 1".into()));
        }
        if self.gateway.max_output_tokens == 0 {
            return Err(PipelineError::Config("max_output_tokens must be >= 1".into()));
        }
        Ok(())
    }
}
