//! Shared fixtures for the integration and acceptance suites.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use tsr_core::dataset::RgbImage;
use tsr_core::mllm::{Gateway, MllmBackend, MllmError, MllmRequest, MllmResponse, Usage};
use tsr_core::pipeline::{
    cmd_describe, cmd_detect, cmd_evaluate, cmd_recognize, EvaluateSummary, RunConfig,
};
use tsr_core::recognizer::Variant;
use tsr_core::synthetic::{write_dataset, CLASSES};

/// Rule-based stand-in for an MLLM over the synthetic classes.
///
/// Description prompts get a fixed text naming the template's face color.
/// Recognition prompts are answered by averaging the saturated pixels of the
/// image and ranking the classes by distance to their face color.
pub struct ColorMock;

pub fn dominant_color(img: &RgbImage) -> Option<[u8; 3]> {
    let mut sum = [0u64; 3];
    let mut n = 0u64;
    for p in img.pixels() {
        let hi = *p.iter().max().unwrap();
        let lo = *p.iter().min().unwrap();
        if hi - lo >= 80 {
            for c in 0..3 {
                sum[c] += p[c] as u64;
            }
            n += 1;
        }
    }
    (n > 0).then(|| sum.map(|s| (s / n) as u8))
}

pub fn rank_by_color(color: [u8; 3]) -> Vec<&'static str> {
    let dist = |c: [u8; 3]| -> i64 {
        (0..3).map(|i| (c[i] as i64 - color[i] as i64).pow(2)).sum()
    };
    let mut ids: Vec<(i64, &'static str)> = CLASSES.iter().map(|(id, _, c)| (dist(*c), *id)).collect();
    ids.sort();
    ids.into_iter().map(|(_, id)| id).collect()
}

impl MllmBackend for ColorMock {
    fn call(&self, req: &MllmRequest) -> Result<MllmResponse, MllmError> {
        let img = RgbImage::decode(&req.images[0].bytes)
            .map_err(|e| MllmError::InvalidRequest(e.to_string()))?;
        let color = dominant_color(&img);
        let text = if req.text.starts_with("Describe this traffic sign") {
            let [r, g, b] = color.unwrap_or([0, 0, 0]);
            format!(
                "Shape: circle. Colors: face rgb({r},{g},{b}) with a white horizontal bar. \
                 Composition: a single bar glyph centered on the face."
            )
        } else {
            match color {
                Some(c) => rank_by_color(c)
                    .iter()
                    .enumerate()
                    .map(|(i, id)| format!("{}. {id}", i + 1))
                    .collect::<Vec<_>>()
                    .join("\n"),
                None => "I cannot identify this sign.".to_string(),
            }
        };
        Ok(MllmResponse {
            text,
            model_tag: req.model_tag.clone(),
            usage: Usage::default(),
            latency: Default::default(),
            attempts: 0,
        })
    }
}

pub fn color_gateway() -> Gateway {
    Gateway::new(ColorMock).with_rpm_limit(0)
}

/// Writes the synthetic dataset under `root/data` and returns a config whose
/// run directory is `root/run`.
pub fn synthetic_config(root: &Path) -> RunConfig {
    let data = root.join("data");
    let paths = write_dataset(&data).expect("synthetic dataset");
    let conf = data.join("run.conf");
    std::fs::write(
        &conf,
        format!(
            "catalog = catalog.tsv\nmanifest = manifest.tsv\nlegend = legend.txt\n\
             output_dir = {}\ndataset_name = synthetic\nbackend = mock\nworkers = 3\n",
            root.join("run").display()
        ),
    )
    .unwrap();
    let cfg = RunConfig::load(&conf).expect("config loads");
    assert_eq!(cfg.catalog, paths.catalog);
    cfg
}

/// detect, describe, recognize (every strategy), evaluate.
pub fn run_all(cfg: &RunConfig, gateway: &Gateway) -> EvaluateSummary {
    let detect = cmd_detect(cfg).expect("detect");
    assert_eq!(detect.failed(), 0);
    cmd_describe(cfg, gateway).expect("describe");
    for v in Variant::ALL {
        let mut c = cfg.clone();
        c.strategy = v;
        cmd_recognize(&c, gateway).expect("recognize");
    }
    cmd_evaluate(cfg).expect("evaluate")
}

/// Catalog of `n` classes with solid-color templates under `dir`.
pub fn toy_catalog(dir: &Path, n: usize) -> PathBuf {
    std::fs::create_dir_all(dir.join("templates")).unwrap();
    let mut text = String::new();
    for i in 0..n {
        let color = [(i * 37 % 256) as u8, (i * 91 % 256) as u8, (i * 53 % 256) as u8];
        let path = dir.join(format!("templates/c{i:02}.png"));
        RgbImage::filled(16, 16, color).save_png(&path).unwrap();
        text.push_str(&format!("c{i:02}\tClass {i}\ttemplates/c{i:02}.png\n"));
    }
    let catalog = dir.join("catalog.tsv");
    std::fs::write(&catalog, text).unwrap();
    catalog
}

/// Every file under `dir`, relative path and contents, sorted by path.
pub fn snapshot(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    fn walk(base: &Path, dir: &Path, out: &mut Vec<(PathBuf, Vec<u8>)>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(base, &path, out);
            } else {
                let rel = path.strip_prefix(base).unwrap().to_path_buf();
                out.push((rel, std::fs::read(&path).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out);
    out.sort();
    out
}
