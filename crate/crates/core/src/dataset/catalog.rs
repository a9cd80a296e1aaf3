use std::collections::HashMap;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::{parent_dir, records, resolve, DatasetError, RgbImage};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassEntry {
    pub class_id: String,
    pub display_name: String,
    pub template_image_path: PathBuf,
}

/// Ordered set of sign classes with their template images.
///
/// Construction checks that ids are unique and non-empty and that every
/// template decodes, so a `ClassCatalog` value is always valid.
#[derive(Debug, Clone)]
pub struct ClassCatalog {
    entries: Vec<ClassEntry>,
    by_id: HashMap<String, usize>,
    digest: String,
}

impl ClassCatalog {
    pub fn new(entries: Vec<ClassEntry>) -> Result<Self, DatasetError> {
        if entries.is_empty() {
            return Err(DatasetError::EmptyCatalog);
        }
        let mut by_id = HashMap::with_capacity(entries.len());
        let mut hasher = Sha256::new();
        for (i, entry) in entries.iter().enumerate() {
            if entry.class_id.is_empty() {
                return Err(DatasetError::EmptyClassId);
            }
            if by_id.insert(entry.class_id.clone(), i).is_some() {
                return Err(DatasetError::DuplicateClass(entry.class_id.clone()));
            }
            let bytes = std::fs::read(&entry.template_image_path).map_err(|e| {
                DatasetError::BadTemplate {
                    class_id: entry.class_id.clone(),
                    message: format!("{}: {e}", entry.template_image_path.display()),
                }
            })?;
            RgbImage::decode(&bytes).map_err(|e| DatasetError::BadTemplate {
                class_id: entry.class_id.clone(),
                message: e.to_string(),
            })?;
            for field in [entry.class_id.as_bytes(), entry.display_name.as_bytes(), &bytes] {
                hasher.update((field.len() as u64).to_le_bytes());
                hasher.update(field);
            }
        }
        Ok(Self {
            entries,
            by_id,
            digest: hex::encode(hasher.finalize()),
        })
    }

    pub fn entries(&self) -> &[ClassEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    /// Always false; an empty catalog cannot be constructed.
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, class_id: &str) -> Option<&ClassEntry> {
        self.by_id.get(class_id).map(|&i| &self.entries[i])
    }

    pub fn contains(&self, class_id: &str) -> bool {
        self.by_id.contains_key(class_id)
    }

    pub fn position(&self, class_id: &str) -> Option<usize> {
        self.by_id.get(class_id).copied()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.class_id.as_str())
    }

    /// SHA-256 over ids, display names and template bytes, in catalog order.
    pub fn digest(&self) -> &str {
        &self.digest
    }
}

/// Loads a `class_id<TAB>display_name<TAB>template_image_path` catalog.
pub fn load_catalog(path: &Path) -> Result<ClassCatalog, DatasetError> {
    let text = std::fs::read_to_string(path).map_err(|e| DatasetError::io(path, e))?;
    let base = parent_dir(path);
    let mut entries = Vec::new();
    for (line, fields) in records(&text) {
        let [class_id, display_name, template] = fields[..] else {
            return Err(DatasetError::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("expected 3 tab-separated fields, found {}", fields.len()),
            });
        };
        entries.push(ClassEntry {
            class_id: class_id.trim().to_string(),
            display_name: display_name.trim().to_string(),
            template_image_path: resolve(&base, template.trim()),
        });
    }
    ClassCatalog::new(entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fmt::Write as _;

    fn write_template(dir: &Path, name: &str) {
        RgbImage::filled(4, 4, [200, 10, 10])
            .save_png(&dir.join(name))
            .unwrap();
    }

    #[test]
    fn loads_43_classes_in_file_order() {
        let dir = tempfile::tempdir().unwrap();
        write_template(dir.path(), "t.png");
        let mut text = String::from("# GTSRB-sized catalog\n");
        for i in 0..43 {
            writeln!(text, "class_{i:02}\tClass {i}\tt.png").unwrap();
        }
        let path = dir.path().join("catalog.tsv");
        std::fs::write(&path, text).unwrap();
        let catalog = load_catalog(&path).unwrap();
        assert_eq!(catalog.len(), 43);
        assert_eq!(catalog.entries()[0].class_id, "class_00");
        assert_eq!(catalog.entries()[42].class_id, "class_42");
        assert_eq!(catalog.position("class_07"), Some(7));
    }

    #[test]
    fn empty_catalog_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("catalog.tsv");
        std::fs::write(&path, "# nothing here\n\n").unwrap();
        let err = load_catalog(&path).unwrap_err();
        assert_eq!(err.to_string(), "catalog must contain at least one class");
    }

    #[test]
    fn duplicate_id_is_named() {
        let dir = tempfile::tempdir().unwrap();
        write_template(dir.path(), "t.png");
        let path = dir.path().join("catalog.tsv");
        std::fs::write(&path, "stop\tStop\tt.png\nstop\tStop again\tt.png\n").unwrap();
        let err = load_catalog(&path).unwrap_err();
        assert!(matches!(&err, DatasetError::DuplicateClass(id) if id == "stop"));
        assert!(err.to_string().contains("stop"));
    }

    #[test]
    fn unreadable_template_names_the_class() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("bad.png"), b"garbage").unwrap();
        let path = dir.path().join("catalog.tsv");
        std::fs::write(&path, "yield\tYield\tbad.png\n").unwrap();
        let err = load_catalog(&path).unwrap_err();
        assert!(matches!(&err, DatasetError::BadTemplate { class_id, .. } if class_id == "yield"));

        std::fs::write(&path, "yield\tYield\tmissing.png\n").unwrap();
        assert!(matches!(
            load_catalog(&path).unwrap_err(),
            DatasetError::BadTemplate { .. }
        ));
    }

    #[test]
    fn missing_file_and_wrong_arity() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_catalog(&dir.path().join("nope.tsv")),
            Err(DatasetError::Io { .. })
        ));
        let path = dir.path().join("catalog.tsv");
        std::fs::write(&path, "stop\tStop\n").unwrap();
        assert!(matches!(
            load_catalog(&path),
            Err(DatasetError::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn digest_tracks_content() {
        let dir = tempfile::tempdir().unwrap();
        write_template(dir.path(), "t.png");
        let path = dir.path().join("catalog.tsv");
        std::fs::write(&path, "stop\tStop\tt.png\n").unwrap();
        let a = load_catalog(&path).unwrap();
        let b = load_catalog(&path).unwrap();
        assert_eq!(a.digest(), b.digest());
        std::fs::write(&path, "stop\tStop sign\tt.png\n").unwrap();
        assert_ne!(load_catalog(&path).unwrap().digest(), a.digest());
    }
}
