//! Per-class description texts generated from template sign images.
//!
//! Each class gets one description stating shape, colors and composition.
//! Generation goes through the response cache, so a class is only ever sent
//! to the backend once per (model, prompt, template) combination.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{ClassCatalog, RgbImage};
use crate::mllm::{Gateway, ImagePayload, MllmError, ResponseCache};

pub const DEFAULT_DESCRIPTION_PROMPT: &str = "Describe this traffic sign named '{display_name}' for recognition purposes. State its shape, its colors, and its composition (symbols, numerals, arrows, text). Be concise and list only visually verifiable features.";

const INDEX_FILE: &str = "index.json";

#[derive(Debug, thiserror::Error)]
pub enum DescriptionError {
    #[error("description prompt must mention shape, color and composition (missing: {0})")]
    IncompletePrompt(String),
    #[error("describing class \"{class_id}\": {source}")]
    Gateway {
        class_id: String,
        #[source]
        source: MllmError,
    },
    #[error("template for class \"{class_id}\": {message}")]
    Template { class_id: String, message: String },
    #[error("backend returned an empty description for class \"{0}\"")]
    EmptyText(String),
    #[error("description generation failed for {} class(es): {}", .0.len(), format_failures(.0))]
    Failed(Vec<(String, String)>),
    #[error("unknown class_id \"{0}\"")]
    UnknownClass(String),
    #[error("corrected description text must be non-empty")]
    EmptyCorrection,
    #[error("class_id \"{0}\" cannot be used as a file name")]
    UnsafeClassId(String),
    #[error("description store {path}: {message}")]
    Store { path: PathBuf, message: String },
}

fn format_failures(failures: &[(String, String)]) -> String {
    failures
        .iter()
        .map(|(id, why)| format!("{id} ({why})"))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Prompt template; `{display_name}` is replaced by the class name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DescriptionPrompt {
    template_text: String,
}

impl DescriptionPrompt {
    pub fn new(template_text: impl Into<String>) -> Result<Self, DescriptionError> {
        let template_text = template_text.into();
        let lower = template_text.to_lowercase();
        let missing: Vec<_> = ["shape", "color", "composition"]
            .into_iter()
            .filter(|w| !lower.contains(w))
            .collect();
        if !missing.is_empty() {
            return Err(DescriptionError::IncompletePrompt(missing.join(", ")));
        }
        Ok(Self { template_text })
    }

    pub fn render(&self, display_name: &str) -> String {
        self.template_text.replace("{display_name}", display_name)
    }

    pub fn template_text(&self) -> &str {
        &self.template_text
    }
}

impl Default for DescriptionPrompt {
    fn default() -> Self {
        Self::new(DEFAULT_DESCRIPTION_PROMPT).expect("default prompt covers all attributes")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassDescription {
    pub class_id: String,
    pub text: String,
    pub model_tag: String,
    pub generated_at: String,
    pub corrected: bool,
}

/// One description per catalog class, in catalog order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DescriptionSet {
    pub model_tag: String,
    pub catalog_digest: String,
    descriptions: Vec<ClassDescription>,
}

pub fn generate_description(
    template: &RgbImage,
    class_id: &str,
    display_name: &str,
    prompt: &DescriptionPrompt,
    gateway: &Gateway,
    cache: &ResponseCache,
) -> Result<ClassDescription, DescriptionError> {
    let req = gateway.request(
        prompt.render(display_name),
        vec![ImagePayload::png(template.encode_png())],
    );
    let out = gateway
        .complete_cached(&req, cache)
        .map_err(|source| DescriptionError::Gateway {
            class_id: class_id.to_string(),
            source,
        })?;
    if out.response.text.trim().is_empty() {
        return Err(DescriptionError::EmptyText(class_id.to_string()));
    }
    Ok(ClassDescription {
        class_id: class_id.to_string(),
        text: out.response.text,
        model_tag: out.response.model_tag,
        generated_at: out.stored_at,
        corrected: false,
    })
}

/// Describes every catalog class using up to `workers` concurrent calls.
/// Any failure aborts the build and lists every failed class.
pub fn build_description_set(
    catalog: &ClassCatalog,
    prompt: &DescriptionPrompt,
    gateway: &Gateway,
    cache: &ResponseCache,
    workers: usize,
) -> Result<DescriptionSet, DescriptionError> {
    let entries = catalog.entries();
    let results = crate::par::parallel_map(entries, workers, |entry| {
        let template = RgbImage::load(&entry.template_image_path).map_err(|e| {
            DescriptionError::Template {
                class_id: entry.class_id.clone(),
                message: e.to_string(),
            }
        })?;
        generate_description(
            &template,
            &entry.class_id,
            &entry.display_name,
            prompt,
            gateway,
            cache,
        )
    });

    let mut descriptions = Vec::with_capacity(entries.len());
    let mut failures = Vec::new();
    for (entry, result) in entries.iter().zip(results) {
        match result {
            Ok(d) => descriptions.push(d),
            Err(e) => failures.push((entry.class_id.clone(), e.to_string())),
        }
    }
    if !failures.is_empty() {
        return Err(DescriptionError::Failed(failures));
    }
    Ok(DescriptionSet {
        model_tag: gateway.config().model_tag.clone(),
        catalog_digest: catalog.digest().to_string(),
        descriptions,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct IndexEntry {
    class_id: String,
    model_tag: String,
    generated_at: String,
    corrected: bool,
    text_sha256: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct Index {
    model_tag: String,
    catalog_digest: String,
    entries: Vec<IndexEntry>,
}

fn text_digest(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

fn check_file_safe(class_id: &str) -> Result<(), DescriptionError> {
    let bad = class_id.is_empty()
        || class_id.starts_with('.')
        || class_id.contains(['/', '\\', '\0']);
    if bad {
        Err(DescriptionError::UnsafeClassId(class_id.to_string()))
    } else {
        Ok(())
    }
}

impl DescriptionSet {
    pub fn new(
        model_tag: impl Into<String>,
        catalog_digest: impl Into<String>,
        descriptions: Vec<ClassDescription>,
    ) -> Self {
        Self {
            model_tag: model_tag.into(),
            catalog_digest: catalog_digest.into(),
            descriptions,
        }
    }

    pub fn descriptions(&self) -> &[ClassDescription] {
        &self.descriptions
    }

    pub fn len(&self) -> usize {
        self.descriptions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.descriptions.is_empty()
    }

    pub fn get(&self, class_id: &str) -> Option<&ClassDescription> {
        self.descriptions.iter().find(|d| d.class_id == class_id)
    }

    /// Catalog classes lacking a description, in catalog order.
    pub fn missing_for(&self, catalog: &ClassCatalog) -> Vec<String> {
        let have: HashMap<&str, ()> = self
            .descriptions
            .iter()
            .map(|d| (d.class_id.as_str(), ()))
            .collect();
        catalog
            .ids()
            .filter(|id| !have.contains_key(id))
            .map(String::from)
            .collect()
    }

    /// Replaces one description and marks it corrected.
    pub fn apply_correction(
        &self,
        class_id: &str,
        new_text: &str,
    ) -> Result<DescriptionSet, DescriptionError> {
        if new_text.trim().is_empty() {
            return Err(DescriptionError::EmptyCorrection);
        }
        let mut out = self.clone();
        let entry = out
            .descriptions
            .iter_mut()
            .find(|d| d.class_id == class_id)
            .ok_or_else(|| DescriptionError::UnknownClass(class_id.to_string()))?;
        entry.text = new_text.to_string();
        entry.corrected = true;
        Ok(out)
    }

    /// Writes `<class_id>.txt` per class plus `index.json`.
    pub fn save(&self, dir: &Path) -> Result<(), DescriptionError> {
        let store_err = |path: &Path, e: std::io::Error| DescriptionError::Store {
            path: path.to_path_buf(),
            message: e.to_string(),
        };
        std::fs::create_dir_all(dir).map_err(|e| store_err(dir, e))?;
        let mut entries = Vec::with_capacity(self.descriptions.len());
        for d in &self.descriptions {
            check_file_safe(&d.class_id)?;
            let path = dir.join(format!("{}.txt", d.class_id));
            std::fs::write(&path, &d.text).map_err(|e| store_err(&path, e))?;
            entries.push(IndexEntry {
                class_id: d.class_id.clone(),
                model_tag: d.model_tag.clone(),
                generated_at: d.generated_at.clone(),
                corrected: d.corrected,
                text_sha256: text_digest(&d.text),
            });
        }
        let index = Index {
            model_tag: self.model_tag.clone(),
            catalog_digest: self.catalog_digest.clone(),
            entries,
        };
        let path = dir.join(INDEX_FILE);
        let json = serde_json::to_string_pretty(&index).expect("index serializes");
        std::fs::write(&path, json + "\n").map_err(|e| store_err(&path, e))
    }

    /// Reads a store written by [`DescriptionSet::save`]. A text file whose
    /// content no longer matches the recorded digest was edited by hand and
    /// loads as corrected.
    pub fn load(dir: &Path) -> Result<DescriptionSet, DescriptionError> {
        let index_path = dir.join(INDEX_FILE);
        let err = |path: &Path, message: String| DescriptionError::Store {
            path: path.to_path_buf(),
            message,
        };
        let raw = std::fs::read_to_string(&index_path).map_err(|e| err(&index_path, e.to_string()))?;
        let index: Index = serde_json::from_str(&raw).map_err(|e| err(&index_path, e.to_string()))?;
        let mut descriptions = Vec::with_capacity(index.entries.len());
        for e in index.entries {
            check_file_safe(&e.class_id)?;
            let path = dir.join(format!("{}.txt", e.class_id));
            let text = std::fs::read_to_string(&path).map_err(|x| err(&path, x.to_string()))?;
            if text.trim().is_empty() {
                return Err(err(&path, "description text is empty".into()));
            }
            let edited = text_digest(&text) != e.text_sha256;
            descriptions.push(ClassDescription {
                class_id: e.class_id,
                text,
                model_tag: e.model_tag,
                generated_at: e.generated_at,
                corrected: e.corrected || edited,
            });
        }
        Ok(DescriptionSet {
            model_tag: index.model_tag,
            catalog_digest: index.catalog_digest,
            descriptions,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::ClassEntry;
    use crate::mllm::{CacheKey, MllmBackend, MllmRequest, MllmResponse, MockBackend};
    use proptest::prelude::*;
    use std::sync::Arc;

    fn catalog(dir: &Path, names: &[(&str, &str)]) -> ClassCatalog {
        let entries = names
            .iter()
            .enumerate()
            .map(|(i, (id, name))| {
                let path = dir.join(format!("{id}.png"));
                RgbImage::filled(6, 6, [200, (i * 20) as u8, 10]).save_png(&path).unwrap();
                ClassEntry {
                    class_id: id.to_string(),
                    display_name: name.to_string(),
                    template_image_path: path,
                }
            })
            .collect();
        ClassCatalog::new(entries).unwrap()
    }

    struct Offline;
    impl MllmBackend for Offline {
        fn call(&self, _: &MllmRequest) -> Result<MllmResponse, MllmError> {
            Err(MllmError::Transport("connection refused".into()))
        }
    }

    #[test]
    fn prompt_must_cover_three_attributes() {
        assert!(DescriptionPrompt::new("Describe the shape and color.").is_err());
        assert!(DescriptionPrompt::new("Shape? Colour? Composition?").is_err());
        let p = DescriptionPrompt::default();
        assert!(p.render("Stop").contains("named 'Stop'"));
    }

    #[test]
    fn generation_uses_fixture_text_verbatim() {
        let dir = tempfile::tempdir().unwrap();
        let template = RgbImage::filled(8, 8, [255, 255, 255]);
        let prompt = DescriptionPrompt::default();
        let probe = Gateway::new(MockBackend::new());
        let req = probe.request(
            prompt.render("Speed limit 30"),
            vec![ImagePayload::png(template.encode_png())],
        );
        let text = "Shape: circular. Color: white background with a red border. Composition: black numeral 30 centered.";
        let gw = Gateway::new(MockBackend::new().with_fixture(&CacheKey::of(&req), text));
        let cache = ResponseCache::new(dir.path());
        let d = generate_description(&template, "speed_limit_30", "Speed limit 30", &prompt, &gw, &cache)
            .unwrap();
        assert_eq!(d.text, text);
        assert!(!d.corrected);
        let again = generate_description(&template, "speed_limit_30", "Speed limit 30", &prompt, &gw, &cache)
            .unwrap();
        assert_eq!(again, d);
        assert_eq!(gw.dispatch_count(), 1);
    }

    #[test]
    fn offline_gateway_error_names_the_class() {
        let dir = tempfile::tempdir().unwrap();
        let gw = Gateway::new(Offline).with_retry(crate::mllm::RetryPolicy {
            max_retries: 0,
            ..Default::default()
        });
        let err = generate_description(
            &RgbImage::filled(2, 2, [0, 0, 0]),
            "yield",
            "Yield",
            &DescriptionPrompt::default(),
            &gw,
            &ResponseCache::new(dir.path()),
        )
        .unwrap_err();
        assert!(err.to_string().contains("\"yield\""), "{err}");
    }

    #[test]
    fn builds_one_description_per_class_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let ids: Vec<(String, String)> = (0..62).map(|i| (format!("b{i:02}"), format!("Sign {i}"))).collect();
        let refs: Vec<(&str, &str)> = ids.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
        let cat = catalog(dir.path(), &refs);
        let gw = Gateway::new(MockBackend::new());
        let cache = ResponseCache::new(dir.path().join("cache"));
        let set = build_description_set(&cat, &DescriptionPrompt::default(), &gw, &cache, 4).unwrap();
        assert_eq!(set.len(), 62);
        assert!(set.missing_for(&cat).is_empty());
        let order: Vec<_> = set.descriptions().iter().map(|d| d.class_id.as_str()).collect();
        assert_eq!(order, cat.ids().collect::<Vec<_>>());
        assert_eq!(set.catalog_digest, cat.digest());
    }

    #[test]
    fn failed_build_lists_every_class() {
        let dir = tempfile::tempdir().unwrap();
        let cat = catalog(dir.path(), &[("stop", "Stop"), ("yield", "Yield")]);
        let gw = Gateway::new(Offline).with_retry(crate::mllm::RetryPolicy {
            max_retries: 0,
            ..Default::default()
        });
        match build_description_set(
            &cat,
            &DescriptionPrompt::default(),
            &gw,
            &ResponseCache::new(dir.path().join("c")),
            2,
        ) {
            Err(DescriptionError::Failed(f)) => {
                let ids: Vec<_> = f.iter().map(|(id, _)| id.as_str()).collect();
                assert_eq!(ids, vec!["stop", "yield"]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    fn toy_set() -> DescriptionSet {
        DescriptionSet::new(
            "gpt-4o",
            "abc",
            ["access_zone_2", "access_zone_4", "stop"]
                .iter()
                .map(|id| ClassDescription {
                    class_id: id.to_string(),
                    text: format!("Description of {id}: blue circle with a straight arrow."),
                    model_tag: "gpt-4o".into(),
                    generated_at: "2024-01-01T00:00:00Z".into(),
                    corrected: false,
                })
                .collect(),
        )
    }

    #[test]
    fn correction_replaces_one_entry() {
        let set = toy_set();
        let fixed = set
            .apply_correction(
                "access_zone_2",
                "Blue circle with a white straight arrow and a left turn arrow.",
            )
            .unwrap();
        let d = fixed.get("access_zone_2").unwrap();
        assert!(d.corrected);
        assert!(d.text.contains("left turn arrow"));
        assert_eq!(fixed.get("stop"), set.get("stop"));
        assert!(matches!(
            set.apply_correction("access_zone_2", "  "),
            Err(DescriptionError::EmptyCorrection)
        ));
        assert!(matches!(
            set.apply_correction("nope", "x"),
            Err(DescriptionError::UnknownClass(_))
        ));
    }

    #[test]
    fn store_round_trip_and_hand_edit_detection() {
        let dir = tempfile::tempdir().unwrap();
        let set = toy_set().apply_correction("stop", "Red octagon, white STOP text.").unwrap();
        set.save(dir.path()).unwrap();
        assert_eq!(DescriptionSet::load(dir.path()).unwrap(), set);

        std::fs::write(dir.path().join("access_zone_4.txt"), "edited").unwrap();
        let loaded = DescriptionSet::load(dir.path()).unwrap();
        let d = loaded.get("access_zone_4").unwrap();
        assert_eq!(d.text, "edited");
        assert!(d.corrected);
        assert!(!loaded.get("access_zone_2").unwrap().corrected);
    }

    #[test]
    fn unsafe_ids_are_not_written() {
        let dir = tempfile::tempdir().unwrap();
        let mut set = toy_set();
        set.descriptions[0].class_id = "../escape".into();
        assert!(matches!(set.save(dir.path()), Err(DescriptionError::UnsafeClassId(_))));
    }

    #[test]
    fn shared_gateway_across_threads() {
        fn assert_sync<T: Sync>() {}
        assert_sync::<Gateway>();
        let _ = Arc::new(Gateway::new(MockBackend::new()));
    }

    proptest! {
        #[test]
        fn correction_touches_exactly_one_entry(
            n in 1usize..20, pick in any::<usize>(), text in "[a-z ]{0,10}[a-z]",
        ) {
            let set = DescriptionSet::new("m", "d", (0..n).map(|i| ClassDescription {
                class_id: format!("c{i}"),
                text: format!("text {i}"),
                model_tag: "m".into(),
                generated_at: "t".into(),
                corrected: false,
            }).collect());
            let target = format!("c{}", pick % n);
            let out = set.apply_correction(&target, &text).unwrap();
            let changed: Vec<_> = set.descriptions().iter().zip(out.descriptions())
                .filter(|(a, b)| a != b).map(|(a, _)| a.class_id.clone()).collect();
            prop_assert_eq!(changed, vec![target]);
        }
    }
}
