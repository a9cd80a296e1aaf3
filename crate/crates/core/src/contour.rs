//! Border following on binary masks.
//!
//! Implements topological border following (outer and hole borders) with
//! 8-connected foreground and 4-connected background. Each 8-connected
//! foreground component has exactly one outer border, found when the raster
//! scan reaches the component's topmost-leftmost pixel.

use std::fmt::Write as _;

use crate::mask::BinaryMask;

pub const DEFAULT_MIN_AREA: usize = 16;
pub const DEFAULT_MIN_SIDE: u32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Point {
    pub x: u32,
    pub y: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BorderKind {
    Outer,
    Hole,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Contour {
    pub points: Vec<Point>,
    pub kind: BorderKind,
}

/// Inclusive pixel box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BoundingBox {
    pub x_min: u32,
    pub y_min: u32,
    pub x_max: u32,
    pub y_max: u32,
}

impl BoundingBox {
    pub fn new(x_min: u32, y_min: u32, x_max: u32, y_max: u32) -> Self {
        assert!(x_min <= x_max && y_min <= y_max, "inverted bounding box");
        Self {
            x_min,
            y_min,
            x_max,
            y_max,
        }
    }

    pub fn width(&self) -> u32 {
        self.x_max - self.x_min + 1
    }

    pub fn height(&self) -> u32 {
        self.y_max - self.y_min + 1
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        (self.x_min..=self.x_max).contains(&x) && (self.y_min..=self.y_max).contains(&y)
    }

    pub fn fits_within(&self, width: u32, height: u32) -> bool {
        self.x_max < width && self.y_max < height
    }

    fn of_points(points: &[Point]) -> Self {
        let mut b = Self::new(points[0].x, points[0].y, points[0].x, points[0].y);
        for p in &points[1..] {
            b.x_min = b.x_min.min(p.x);
            b.y_min = b.y_min.min(p.y);
            b.x_max = b.x_max.max(p.x);
            b.y_max = b.y_max.max(p.y);
        }
        b
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Detection {
    pub contour: Contour,
    pub bbox: BoundingBox,
    /// Foreground pixel count of the component.
    pub area: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DetectionSet {
    pub mask_dims: (u32, u32),
    pub detections: Vec<Detection>,
}

impl DetectionSet {
    pub fn len(&self) -> usize {
        self.detections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.detections.is_empty()
    }

    /// One `sample_id, index, x_min, y_min, x_max, y_max, area` line per
    /// detection, tab-separated.
    pub fn to_records(&self, sample_id: &str) -> String {
        let mut out = String::new();
        for (i, d) in self.detections.iter().enumerate() {
            let b = d.bbox;
            writeln!(
                out,
                "{sample_id}\t{i}\t{}\t{}\t{}\t{}\t{}",
                b.x_min, b.y_min, b.x_max, b.y_max, d.area
            )
            .unwrap();
        }
        out
    }
}

/// A parsed line of the detection record format.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DetectionRecord {
    pub sample_id: String,
    pub index: usize,
    pub bbox: BoundingBox,
    pub area: usize,
}

pub fn parse_detection_records(text: &str) -> Result<Vec<DetectionRecord>, String> {
    crate::dataset::records(text)
        .map(|(line, f)| {
            let bad = |m: &str| format!("detection record line {line}: {m}");
            if f.len() != 7 {
                return Err(bad("expected 7 fields"));
            }
            let n: Vec<u64> = f[1..]
                .iter()
                .map(|v| v.trim().parse::<u64>())
                .collect::<Result<_, _>>()
                .map_err(|e| bad(&e.to_string()))?;
            if n[1] > n[3] || n[2] > n[4] {
                return Err(bad("inverted bounding box"));
            }
            Ok(DetectionRecord {
                sample_id: f[0].to_string(),
                index: n[0] as usize,
                bbox: BoundingBox::new(n[1] as u32, n[2] as u32, n[3] as u32, n[4] as u32),
                area: n[5] as usize,
            })
        })
        .collect()
}

// Clockwise with y pointing down, starting east.
const DIRS: [(i64, i64); 8] = [
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
    (0, -1),
    (1, -1),
];

fn dir_index(dx: i64, dy: i64) -> usize {
    DIRS.iter()
        .position(|&d| d == (dx, dy))
        .expect("points are 8-neighbors")
}

/// Label grid with a one-pixel zero frame around the mask.
struct Grid {
    w: i64,
    f: Vec<i32>,
}

impl Grid {
    fn new(mask: &BinaryMask) -> Self {
        let w = mask.width() as i64 + 2;
        let h = mask.height() as i64 + 2;
        let mut f = vec![0; (w * h) as usize];
        for y in 0..mask.height() {
            for x in 0..mask.width() {
                if mask.get(x, y) {
                    f[((y as i64 + 1) * w + x as i64 + 1) as usize] = 1;
                }
            }
        }
        Self { w, f }
    }

    fn at(&self, x: i64, y: i64) -> i32 {
        self.f[(y * self.w + x) as usize]
    }

    fn put(&mut self, x: i64, y: i64, v: i32) {
        self.f[(y * self.w + x) as usize] = v;
    }
}

/// Traces every border (outer and hole) in raster order of border start.
pub fn trace_borders(mask: &BinaryMask) -> Vec<Contour> {
    let mut g = Grid::new(mask);
    let (w, h) = (mask.width() as i64, mask.height() as i64);
    let mut nbd: i32 = 1;
    let mut borders = Vec::new();

    for y in 1..=h {
        for x in 1..=w {
            let here = g.at(x, y);
            let (kind, from) = if here == 1 && g.at(x - 1, y) == 0 {
                (BorderKind::Outer, (x - 1, y))
            } else if here >= 1 && g.at(x + 1, y) == 0 {
                (BorderKind::Hole, (x + 1, y))
            } else {
                continue;
            };
            nbd += 1;
            let points = follow(&mut g, (x, y), from, nbd);
            borders.push(Contour {
                points: points
                    .into_iter()
                    .map(|(px, py)| Point {
                        x: (px - 1) as u32,
                        y: (py - 1) as u32,
                    })
                    .collect(),
                kind,
            });
        }
    }
    borders
}

fn follow(g: &mut Grid, start: (i64, i64), from: (i64, i64), nbd: i32) -> Vec<(i64, i64)> {
    let (sx, sy) = start;
    // Clockwise search for the first nonzero neighbor, starting at `from`.
    let d0 = dir_index(from.0 - sx, from.1 - sy);
    let first = (0..8)
        .map(|k| DIRS[(d0 + k) % 8])
        .map(|(dx, dy)| (sx + dx, sy + dy))
        .find(|&(nx, ny)| g.at(nx, ny) != 0);
    let Some(p1) = first else {
        g.put(sx, sy, -nbd);
        return vec![start];
    };

    let mut points = Vec::new();
    let mut p2 = p1;
    let mut p3 = start;
    loop {
        points.push(p3);
        // Counterclockwise search around p3, starting just after p2.
        let d = dir_index(p2.0 - p3.0, p2.1 - p3.1);
        let mut east_zero_examined = false;
        let mut p4 = p2;
        for k in 1..=8 {
            let nd = (d + 8 - k) % 8;
            let (dx, dy) = DIRS[nd];
            let q = (p3.0 + dx, p3.1 + dy);
            if g.at(q.0, q.1) != 0 {
                p4 = q;
                break;
            }
            if nd == 0 {
                east_zero_examined = true;
            }
        }
        if east_zero_examined {
            g.put(p3.0, p3.1, -nbd);
        } else if g.at(p3.0, p3.1) == 1 {
            g.put(p3.0, p3.1, nbd);
        }
        if p4 == start && p3 == p1 {
            break;
        }
        p2 = p3;
        p3 = p4;
    }
    points
}

/// Foreground pixel count per 8-connected component, keyed by pixel index.
/// Two-pass union-find labeling.
fn component_sizes(mask: &BinaryMask) -> (Vec<usize>, Vec<usize>) {
    let (w, h) = (mask.width() as usize, mask.height() as usize);
    let bits = mask.bits();
    let mut parent: Vec<usize> = (0..w * h).collect();

    fn root(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }

    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if !bits[i] {
                continue;
            }
            // Already-visited neighbors: W, NW, N, NE.
            let mut neighbors = Vec::with_capacity(4);
            if x > 0 {
                neighbors.push(i - 1);
            }
            if y > 0 {
                if x > 0 {
                    neighbors.push(i - w - 1);
                }
                neighbors.push(i - w);
                if x + 1 < w {
                    neighbors.push(i - w + 1);
                }
            }
            for n in neighbors {
                if bits[n] {
                    let (a, b) = (root(&mut parent, i), root(&mut parent, n));
                    if a != b {
                        parent[a.max(b)] = a.min(b);
                    }
                }
            }
        }
    }

    let mut sizes = vec![0; w * h];
    let mut roots = vec![0; w * h];
    for i in 0..w * h {
        if bits[i] {
            let r = root(&mut parent, i);
            roots[i] = r;
            sizes[r] += 1;
        }
    }
    (roots, sizes)
}

/// One detection per 8-connected component, in raster order of each
/// component's topmost-leftmost pixel.
pub fn trace_contours(mask: &BinaryMask) -> DetectionSet {
    let outers: Vec<Contour> = trace_borders(mask)
        .into_iter()
        .filter(|c| c.kind == BorderKind::Outer)
        .collect();
    let detections = if outers.is_empty() {
        Vec::new()
    } else {
        let (roots, sizes) = component_sizes(mask);
        let w = mask.width() as usize;
        outers
            .into_iter()
            .map(|contour| {
                let s = contour.points[0];
                let area = sizes[roots[s.y as usize * w + s.x as usize]];
                Detection {
                    bbox: BoundingBox::of_points(&contour.points),
                    contour,
                    area,
                }
            })
            .collect()
    };
    DetectionSet {
        mask_dims: mask.dims(),
        detections,
    }
}

/// Keeps detections with `area >= min_area` and both box sides `>= min_side`.
pub fn filter_detections(set: &DetectionSet, min_area: usize, min_side: u32) -> DetectionSet {
    DetectionSet {
        mask_dims: set.mask_dims,
        detections: set
            .detections
            .iter()
            .filter(|d| d.area >= min_area && d.bbox.width() >= min_side && d.bbox.height() >= min_side)
            .cloned()
            .collect(),
    }
}
