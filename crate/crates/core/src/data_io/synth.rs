//! Procedural stand-ins for small natural-image and RGB-D training sets.

use std::path::{Path, PathBuf};

use super::codec::{save_pgm16, save_png};
use super::image::{DepthMap, ImageU8};
use super::manifest::{Manifest, Record, Role};
use crate::error::{Error, Result};
use crate::tensor::SeededRng;

#[derive(Clone, Copy, Debug)]
enum Shape {
    Disc { cx: f64, cy: f64, r: f64 },
    Rect { x0: f64, y0: f64, x1: f64, y1: f64 },
    Tri([(f64, f64); 3]),
}

impl Shape {
    fn random(rng: &mut SeededRng, h: f64, w: f64) -> Self {
        let s = h.min(w);
        match rng.below(3) {
            0 => Shape::Disc {
                cx: rng.uniform(0.0, w),
                cy: rng.uniform(0.0, h),
                r: rng.uniform(0.08, 0.3) * s,
            },
            1 => {
                let (cx, cy) = (rng.uniform(0.0, w), rng.uniform(0.0, h));
                let (hw, hh) = (rng.uniform(0.05, 0.3) * s, rng.uniform(0.05, 0.3) * s);
                Shape::Rect {
                    x0: cx - hw,
                    y0: cy - hh,
                    x1: cx + hw,
                    y1: cy + hh,
                }
            }
            _ => {
                let (cx, cy) = (rng.uniform(0.0, w), rng.uniform(0.0, h));
                let r = rng.uniform(0.1, 0.35) * s;
                let a0 = rng.uniform(0.0, std::f64::consts::TAU);
                let mut p = [(0.0, 0.0); 3];
                for (k, v) in p.iter_mut().enumerate() {
                    let a = a0 + k as f64 * std::f64::consts::TAU / 3.0 + rng.uniform(-0.4, 0.4);
                    *v = (cx + r * a.cos(), cy + r * a.sin());
                }
                Shape::Tri(p)
            }
        }
    }

    fn contains(&self, x: f64, y: f64) -> bool {
        match *self {
            Shape::Disc { cx, cy, r } => (x - cx).powi(2) + (y - cy).powi(2) <= r * r,
            Shape::Rect { x0, y0, x1, y1 } => x >= x0 && x < x1 && y >= y0 && y < y1,
            Shape::Tri(p) => {
                let side = |a: (f64, f64), b: (f64, f64)| {
                    (b.0 - a.0) * (y - a.1) - (b.1 - a.1) * (x - a.0)
                };
                let d = [side(p[0], p[1]), side(p[1], p[2]), side(p[2], p[0])];
                d.iter().all(|&v| v >= 0.0) || d.iter().all(|&v| v <= 0.0)
            }
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Paint {
    base: [f64; 3],
    stripe: Option<(f64, f64, f64, [f64; 3])>,
}

impl Paint {
    fn random(rng: &mut SeededRng) -> Self {
        let mut colour = || {
            [
                rng.uniform(0.0, 255.0),
                rng.uniform(0.0, 255.0),
                rng.uniform(0.0, 255.0),
            ]
        };
        let base = colour();
        let alt = colour();
        let stripe = (rng.unit() < 0.4).then(|| {
            let a = rng.uniform(0.0, std::f64::consts::PI);
            let period = rng.uniform(3.0, 9.0);
            (
                a.cos() / period,
                a.sin() / period,
                rng.uniform(0.0, 1.0),
                alt,
            )
        });
        Paint { base, stripe }
    }

    fn at(&self, x: f64, y: f64) -> [f64; 3] {
        match self.stripe {
            None => self.base,
            Some((fx, fy, ph, alt)) => {
                let t = 0.5 + 0.5 * (std::f64::consts::TAU * (fx * x + fy * y + ph)).sin();
                [0, 1, 2].map(|c| self.base[c] * (1.0 - t) + alt[c] * t)
            }
        }
    }
}

const SUPERSAMPLE: usize = 4;

/// An RGB image of smooth gradients overlaid with flat and striped shapes,
/// rendered with 4×4 supersampling.
pub fn synth_texture_image(h: usize, w: usize, rng: &mut SeededRng) -> ImageU8 {
    let (hf, wf) = (h as f64, w as f64);
    let c0 = [0, 1, 2].map(|_| rng.uniform(0.0, 255.0));
    let c1 = [0, 1, 2].map(|_| rng.uniform(0.0, 255.0));
    let ang = rng.uniform(0.0, std::f64::consts::TAU);
    let (gx, gy) = (ang.cos(), ang.sin());
    let n = rng.range(6, 12);
    let layers: Vec<(Shape, Paint)> = (0..n)
        .map(|_| (Shape::random(rng, hf, wf), Paint::random(rng)))
        .collect();
    let span = hf.hypot(wf);
    let sample = |x: f64, y: f64| -> [f64; 3] {
        if let Some((_, p)) = layers.iter().rev().find(|(s, _)| s.contains(x, y)) {
            return p.at(x, y);
        }
        let t = (0.5 + ((x - wf / 2.0) * gx + (y - hf / 2.0) * gy) / span).clamp(0.0, 1.0);
        [0, 1, 2].map(|c| c0[c] * (1.0 - t) + c1[c] * t)
    };
    let mut data = Vec::with_capacity(3 * h * w);
    let inv = 1.0 / SUPERSAMPLE as f64;
    for i in 0..h {
        for j in 0..w {
            let mut acc = [0.0; 3];
            for si in 0..SUPERSAMPLE {
                for sj in 0..SUPERSAMPLE {
                    let y = i as f64 + (si as f64 + 0.5) * inv;
                    let x = j as f64 + (sj as f64 + 0.5) * inv;
                    let v = sample(x, y);
                    for c in 0..3 {
                        acc[c] += v[c];
                    }
                }
            }
            let norm = (SUPERSAMPLE * SUPERSAMPLE) as f64;
            data.extend(acc.map(|v| (v / norm).round().clamp(0.0, 255.0) as u8));
        }
    }
    ImageU8::new(3, h, w, data).expect("sizes agree")
}

/// One depth layer; `shape: None` is the background.
#[derive(Clone, Copy)]
struct Region {
    shape: Option<Shape>,
    depth: u16,
    colour: [f64; 3],
    shade: (f64, f64),
}

/// A piecewise-constant depth map and a guide image whose colour edges
/// coincide with the depth edges. Depth counts lie in `500..=5000`.
pub fn synth_rgbd_pair(h: usize, w: usize, rng: &mut SeededRng) -> (ImageU8, DepthMap) {
    let (hf, wf) = (h as f64, w as f64);
    let n = rng.range(4, 8);
    let mut regions: Vec<Region> = Vec::with_capacity(n + 1);
    let shade =
        |rng: &mut SeededRng| (rng.uniform(-20.0, 20.0) / wf, rng.uniform(-20.0, 20.0) / hf);
    let region = |shape, shade| Region {
        shape,
        depth: 0,
        colour: [0.0; 3],
        shade,
    };
    let bg_shade = shade(rng);
    regions.push(region(None, bg_shade));
    for _ in 0..n {
        let s = shade(rng);
        regions.push(region(Some(Shape::random(rng, hf, wf)), s));
    }
    for r in regions.iter_mut() {
        r.depth = rng.range(500, 5000) as u16;
        r.colour = [0, 1, 2].map(|_| rng.uniform(30.0, 225.0));
    }
    let mut rgb = Vec::with_capacity(3 * h * w);
    let mut depth = Vec::with_capacity(h * w);
    for i in 0..h {
        for j in 0..w {
            let (x, y) = (j as f64 + 0.5, i as f64 + 0.5);
            let k = regions
                .iter()
                .rposition(|r| r.shape.is_none_or(|s| s.contains(x, y)))
                .unwrap_or(0);
            let Region {
                depth: d,
                colour: c,
                shade: (sx, sy),
                ..
            } = regions[k];
            depth.push(d);
            let t = sx * (x - wf / 2.0) + sy * (y - hf / 2.0);
            rgb.extend(c.map(|v| (v + t).round().clamp(0.0, 255.0) as u8));
        }
    }
    (
        ImageU8::new(3, h, w, rgb).expect("sizes agree"),
        DepthMap::new(h, w, depth).expect("sizes agree"),
    )
}

fn write_manifest(dir: &Path, m: &Manifest) -> Result<PathBuf> {
    let path = dir.join("manifest.tsv");
    std::fs::write(&path, m.to_text(dir)).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Writes `n_train + n_eval` texture PNGs and a manifest; returns the manifest path.
pub fn write_sisr_dataset(
    dir: &Path,
    n_train: usize,
    n_eval: usize,
    size: usize,
    seed: u64,
) -> Result<PathBuf> {
    ensure_dir(dir)?;
    let mut records = Vec::new();
    for k in 0..n_train + n_eval {
        let mut rng = SeededRng::new(seed).fork(k as u64);
        let (role, name) = if k < n_train {
            (Role::Train, format!("train_{k:03}.png"))
        } else {
            (Role::Eval, format!("eval_{:03}.png", k - n_train))
        };
        let path = dir.join(name);
        save_png(&path, &synth_texture_image(size, size, &mut rng))?;
        records.push(Record {
            role,
            target: path,
            guide: None,
        });
    }
    write_manifest(dir, &Manifest { records })
}

/// Writes depth PGMs with aligned guide PNGs and a manifest; returns the manifest path.
pub fn write_rgbd_dataset(
    dir: &Path,
    n_train: usize,
    n_eval: usize,
    size: usize,
    seed: u64,
) -> Result<PathBuf> {
    ensure_dir(dir)?;
    let mut records = Vec::new();
    for k in 0..n_train + n_eval {
        let mut rng = SeededRng::new(seed).fork(k as u64);
        let (role, stem) = if k < n_train {
            (Role::Train, format!("train_{k:03}"))
        } else {
            (Role::Eval, format!("eval_{:03}", k - n_train))
        };
        let (rgb, depth) = synth_rgbd_pair(size, size, &mut rng);
        let target = dir.join(format!("{stem}_depth.pgm"));
        let guide = dir.join(format!("{stem}_rgb.png"));
        save_pgm16(&target, &depth)?;
        save_png(&guide, &rgb)?;
        records.push(Record {
            role,
            target,
            guide: Some(guide),
        });
    }
    write_manifest(dir, &Manifest { records })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_io::{load_pgm16, load_png};

    #[test]
    fn texture_is_deterministic_and_varied() {
        let a = synth_texture_image(32, 40, &mut SeededRng::new(3));
        let b = synth_texture_image(32, 40, &mut SeededRng::new(3));
        let c = synth_texture_image(32, 40, &mut SeededRng::new(4));
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!((a.channels, a.height, a.width), (3, 32, 40));
        let distinct: std::collections::HashSet<_> = a.data.iter().collect();
        assert!(distinct.len() > 20);
    }

    #[test]
    fn depth_edges_follow_guide_edges() {
        let (rgb, depth) = synth_rgbd_pair(64, 64, &mut SeededRng::new(8));
        assert!(depth.data.iter().all(|&d| (500..=5000).contains(&d)));
        let mut depth_edges = 0;
        for i in 0..64 {
            for j in 1..64 {
                if depth.at(i, j) != depth.at(i, j - 1) {
                    depth_edges += 1;
                    let a = rgb.pixel(i, j);
                    let b = rgb.pixel(i, j - 1);
                    let diff: i32 = (0..3).map(|c| (a[c] as i32 - b[c] as i32).abs()).sum();
                    assert!(diff > 0, "depth edge without colour edge at ({i},{j})");
                }
            }
        }
        assert!(depth_edges > 0);
    }

    #[test]
    fn datasets_round_trip_through_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let m = write_sisr_dataset(&dir.path().join("sr"), 3, 2, 24, 1).unwrap();
        let man = Manifest::load(&m).unwrap();
        assert_eq!(man.role(Role::Train).count(), 3);
        assert_eq!(load_png(&man.records[4].target).unwrap().width, 24);
        let m = write_rgbd_dataset(&dir.path().join("rgbd"), 2, 1, 16, 1).unwrap();
        let man = Manifest::load(&m).unwrap();
        let r = &man.records[2];
        assert_eq!(r.role, Role::Eval);
        assert_eq!(load_pgm16(&r.target).unwrap().height, 16);
        assert_eq!(load_png(r.guide.as_ref().unwrap()).unwrap().channels, 3);
    }
}
