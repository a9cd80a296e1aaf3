//! Small generated dataset for offline demos and end-to-end tests.
//!
//! Three color-coded classes, four road scenes each. Every scene has one
//! round sign, a matching color-coded segmentation map, and a couple of
//! segmentation speckles that the default detection filter removes.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::dataset::{DatasetError, RgbImage};

pub const SIGN_LABEL: &str = "traffic_sign";
pub const SIGN_COLOR: [u8; 3] = [220, 220, 0];
const ROAD_COLOR: [u8; 3] = [128, 64, 128];
const SKY_COLOR: [u8; 3] = [70, 130, 180];
const WHITE: [u8; 3] = [255, 255, 255];

const WIDTH: u32 = 64;
const HEIGHT: u32 = 48;
pub const SAMPLES_PER_CLASS: usize = 4;

/// `(class_id, display_name, sign face color)`
pub const CLASSES: [(&str, &str, [u8; 3]); 3] = [
    ("stop", "Stop", [210, 25, 30]),
    ("mandatory", "Mandatory direction", [25, 70, 200]),
    ("warning", "General warning", [235, 200, 20]),
];

/// Paths of the files written by [`write_dataset`].
#[derive(Debug, Clone)]
pub struct SyntheticPaths {
    pub root: PathBuf,
    pub catalog: PathBuf,
    pub manifest: PathBuf,
    pub legend: PathBuf,
}

fn background(x: u32, y: u32) -> [u8; 3] {
    // Unsaturated gray texture: sky band on top, road below.
    let v = ((x * 7 + y * 13) % 40) as u8;
    if y < HEIGHT / 3 {
        [175 + v / 4, 180 + v / 4, 185 + v / 4]
    } else {
        [90 + v, 90 + v, 92 + v]
    }
}

fn in_disk(x: u32, y: u32, cx: i64, cy: i64, r: i64) -> bool {
    let (dx, dy) = (x as i64 - cx, y as i64 - cy);
    dx * dx + dy * dy <= r * r
}

/// Road scene and segmentation map for sample `n` of class `c`.
fn scene(c: usize, n: usize) -> (RgbImage, RgbImage) {
    let face = CLASSES[c].2;
    let cx = 12 + ((c * 17 + n * 11) % 40) as i64;
    let cy = 10 + ((c * 5 + n * 7) % 26) as i64;
    let r = 5 + ((c + n) % 4) as i64;
    let mut road = RgbImage::filled(WIDTH, HEIGHT, [0, 0, 0]);
    let mut seg = RgbImage::filled(WIDTH, HEIGHT, ROAD_COLOR);
    for y in 0..HEIGHT {
        for x in 0..WIDTH {
            road.set(x, y, background(x, y));
            if y < HEIGHT / 3 {
                seg.set(x, y, SKY_COLOR);
            }
            if in_disk(x, y, cx, cy, r) {
                // White horizontal bar across the middle of the sign face.
                let glyph = (y as i64 - cy).abs() <= 1 && (x as i64 - cx).abs() < r - 1;
                road.set(x, y, if glyph { WHITE } else { face });
                seg.set(x, y, SIGN_COLOR);
            }
        }
    }
    // Speckles far from the sign.
    let sx = ((cx + 30) % WIDTH as i64) as u32;
    let sy = HEIGHT - 2 - (n as u32 % 3);
    seg.set(sx, sy, SIGN_COLOR);
    seg.set((sx + 3) % WIDTH, sy, SIGN_COLOR);
    (road, seg)
}

fn template(face: [u8; 3]) -> RgbImage {
    let mut img = RgbImage::filled(32, 32, WHITE);
    for y in 0..32 {
        for x in 0..32 {
            if in_disk(x, y, 16, 16, 14) {
                let glyph = (y as i64 - 16).abs() <= 2 && (x as i64 - 16).abs() < 10;
                img.set(x, y, if glyph { WHITE } else { face });
            }
        }
    }
    img
}

/// Writes templates, scenes, segmentation maps, catalog, manifest and legend
/// under `root`. Output is identical on every call.
pub fn write_dataset(root: &Path) -> Result<SyntheticPaths, DatasetError> {
    let mkdir = |p: &Path| std::fs::create_dir_all(p).map_err(|e| DatasetError::io(p, e));
    for sub in ["templates", "roads", "segmentation"] {
        mkdir(&root.join(sub))?;
    }

    let mut catalog = String::from("# class_id\tdisplay_name\ttemplate\n");
    for (id, name, face) in CLASSES {
        template(face).save_png(&root.join(format!("templates/{id}.png")))?;
        writeln!(catalog, "{id}\t{name}\ttemplates/{id}.png").unwrap();
    }

    let mut manifest = String::from("# sample_id\tclass\troad\tsign\tsegmentation\n");
    for n in 0..SAMPLES_PER_CLASS {
        for (c, (id, _, _)) in CLASSES.iter().enumerate() {
            let sample = format!("{id}_{n:02}");
            let (road, seg) = scene(c, n);
            road.save_png(&root.join(format!("roads/{sample}.png")))?;
            seg.save_png(&root.join(format!("segmentation/{sample}.png")))?;
            writeln!(
                manifest,
                "{sample}\t{id}\troads/{sample}.png\t-\tsegmentation/{sample}.png"
            )
            .unwrap();
        }
    }

    let legend = format!(
        "road\t{}\nsky\t{}\n{SIGN_LABEL}\t{}\n",
        rgb(ROAD_COLOR),
        rgb(SKY_COLOR),
        rgb(SIGN_COLOR)
    );

    let paths = SyntheticPaths {
        root: root.to_path_buf(),
        catalog: root.join("catalog.tsv"),
        manifest: root.join("manifest.tsv"),
        legend: root.join("legend.txt"),
    };
    for (path, text) in [
        (&paths.catalog, catalog),
        (&paths.manifest, manifest),
        (&paths.legend, legend),
    ] {
        std::fs::write(path, text).map_err(|e| DatasetError::io(path, e))?;
    }
    Ok(paths)
}

fn rgb(c: [u8; 3]) -> String {
    format!("{},{},{}", c[0], c[1], c[2])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contour::{filter_detections, trace_contours, DEFAULT_MIN_AREA, DEFAULT_MIN_SIDE};
    use crate::dataset::{load_catalog, load_manifest};
    use crate::mask::{to_binary_mask, Legend, SegmentationMap};

    #[test]
    fn writes_a_loadable_12_sample_dataset() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_dataset(dir.path()).unwrap();
        let catalog = load_catalog(&p.catalog).unwrap();
        assert_eq!(catalog.len(), 3);
        let manifest = load_manifest(&p.manifest, &catalog).unwrap();
        assert_eq!(manifest.len(), 12);
        assert!(manifest.samples().iter().all(|s| s.is_full_pipeline()));
    }

    #[test]
    fn each_scene_has_one_sign_after_filtering() {
        let legend = Legend::parse(&format!("{SIGN_LABEL}\t{}\n", rgb(SIGN_COLOR))).unwrap();
        for c in 0..CLASSES.len() {
            for n in 0..SAMPLES_PER_CLASS {
                let (_, seg) = scene(c, n);
                let seg = SegmentationMap::new(seg, legend.clone(), SIGN_LABEL).unwrap();
                let raw = trace_contours(&to_binary_mask(&seg, SIGN_COLOR, 0));
                assert!(raw.len() >= 2, "speckles present");
                let kept = filter_detections(&raw, DEFAULT_MIN_AREA, DEFAULT_MIN_SIDE);
                assert_eq!(kept.len(), 1, "class {c} sample {n}");
            }
        }
    }

    #[test]
    fn generation_is_reproducible() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        write_dataset(a.path()).unwrap();
        write_dataset(b.path()).unwrap();
        for f in ["manifest.tsv", "roads/stop_00.png", "segmentation/warning_03.png"] {
            assert_eq!(
                std::fs::read(a.path().join(f)).unwrap(),
                std::fs::read(b.path().join(f)).unwrap()
            );
        }
    }
}
