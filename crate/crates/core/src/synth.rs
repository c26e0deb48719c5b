//! Procedural garment/person fixtures with analytically known correspondence.
//!
//! Each part is an axis-aligned rectangle in the garment frame carrying an affine
//! UV field. The person frame shows the same parts moved by an affine placement,
//! with the UV field pulled back through that placement, so garment and person
//! charts agree exactly. The ground-truth warp samples the garment raster at the
//! exact pre-image of every person pixel.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::iuv::{DensePoseMap, NUM_PARTS};
use crate::raster::{BinaryMask, Plane, RgbImage, Sample};

/// Row-major 2x3 affine map: `(x, y) -> (m0 x + m1 y + m2, m3 x + m4 y + m5)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Affine2(pub [f64; 6]);

impl Affine2 {
    pub const IDENTITY: Affine2 = Affine2([1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);

    pub fn translation(tx: f64, ty: f64) -> Self {
        Affine2([1.0, 0.0, tx, 0.0, 1.0, ty])
    }

    /// Rotation by `degrees` about `(cx, cy)`; positive angles turn +x toward +y.
    pub fn rotation_about(cx: f64, cy: f64, degrees: f64) -> Self {
        let (s, c) = degrees.to_radians().sin_cos();
        Affine2([c, -s, cx - c * cx + s * cy, s, c, cy - s * cx - c * cy])
    }

    #[inline]
    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let m = &self.0;
        (m[0] * x + m[1] * y + m[2], m[3] * x + m[4] * y + m[5])
    }

    pub fn determinant(&self) -> f64 {
        self.0[0] * self.0[4] - self.0[1] * self.0[3]
    }

    pub fn inverse(&self) -> Option<Affine2> {
        let det = self.determinant();
        if !det.is_finite() || det.abs() < 1e-12 {
            return None;
        }
        if *self == Affine2::IDENTITY {
            return Some(*self);
        }
        let [a, b, c, d, e, f] = self.0;
        let (ia, ib, id, ie) = (e / det, -b / det, -d / det, a / det);
        Some(Affine2([ia, ib, -(ia * c + ib * f), id, ie, -(id * c + ie * f)]))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl Rect {
    pub fn new(x: usize, y: usize, width: usize, height: usize) -> Self {
        Rect { x, y, width, height }
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        (self.x..self.x + self.width).contains(&x) && (self.y..self.y + self.height).contains(&y)
    }

    /// Continuous footprint test: pixel `(x, y)` covers `[x - 0.5, x + 0.5)`.
    fn covers(&self, x: f64, y: f64) -> bool {
        x >= self.x as f64 - 0.5
            && x < (self.x + self.width) as f64 - 0.5
            && y >= self.y as f64 - 0.5
            && y < (self.y + self.height) as f64 - 0.5
    }

    fn overlaps(&self, o: &Rect) -> bool {
        self.x < o.x + o.width && o.x < self.x + self.width && self.y < o.y + o.height && o.y < self.y + self.height
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthPart {
    pub part_id: u8,
    pub rect: Rect,
    /// Garment pixel -> chart coordinates. When omitted, the rectangle's pixel
    /// footprints are stretched over the unit square.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uv_affine: Option<Affine2>,
    /// Garment frame -> person frame.
    #[serde(default = "identity")]
    pub placement: Affine2,
}

fn identity() -> Affine2 {
    Affine2::IDENTITY
}

impl SynthPart {
    pub fn fitted(part_id: u8, rect: Rect, placement: Affine2) -> Self {
        SynthPart {
            part_id,
            rect,
            uv_affine: None,
            placement,
        }
    }

    pub fn uv_map(&self) -> Affine2 {
        self.uv_affine.unwrap_or_else(|| {
            let Rect { x, y, width, height } = self.rect;
            let (w, h) = (width as f64, height as f64);
            Affine2([1.0 / w, 0.0, (0.5 - x as f64) / w, 0.0, 1.0 / h, (0.5 - y as f64) / h])
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TextureKind {
    Stripes,
    Checker,
    Gradient,
    Noise,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Texture {
    pub kind: TextureKind,
    /// Pattern period in pixels.
    pub period: f64,
}

/// Fixture description. Deserializes from the JSON accepted by `densewarp synth`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub width: usize,
    pub height: usize,
    pub parts: Vec<SynthPart>,
    pub texture: Texture,
    /// Probability of knocking out each garment DensePose pixel.
    #[serde(default)]
    pub speckle_dropout: f64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthPair {
    pub garment: RgbImage,
    pub garment_dp: DensePoseMap,
    pub garment_mask: BinaryMask,
    pub person_dp: DensePoseMap,
    pub gt_warp: RgbImage,
    pub gt_mask: BinaryMask,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParam(format!("synth spec: {msg}")));
        if self.width == 0 || self.height == 0 {
            return bad(format!("frame {}x{} is empty", self.width, self.height));
        }
        if !(0.0..=1.0).contains(&self.speckle_dropout) {
            return bad(format!("speckle_dropout {} outside [0, 1]", self.speckle_dropout));
        }
        if !(self.texture.period.is_finite() && self.texture.period > 0.0) {
            return bad(format!("texture period {} must be positive", self.texture.period));
        }
        for (k, part) in self.parts.iter().enumerate() {
            if !(1..=NUM_PARTS as u8).contains(&part.part_id) {
                return bad(format!("part_id {} outside 1..=24", part.part_id));
            }
            if self.parts[..k].iter().any(|p| p.part_id == part.part_id) {
                return bad(format!("duplicate part_id {}", part.part_id));
            }
            let r = part.rect;
            if r.width == 0 || r.height == 0 || r.x + r.width > self.width || r.y + r.height > self.height {
                return bad(format!("part {} rectangle {r:?} not inside the frame", part.part_id));
            }
            if let Some(other) = self.parts[..k].iter().find(|p| p.rect.overlaps(&r)) {
                return bad(format!("parts {} and {} overlap", other.part_id, part.part_id));
            }
            let uv = part.uv_map();
            let corners = [
                (r.x as f64 - 0.5, r.y as f64 - 0.5),
                ((r.x + r.width) as f64 - 0.5, r.y as f64 - 0.5),
                (r.x as f64 - 0.5, (r.y + r.height) as f64 - 0.5),
                ((r.x + r.width) as f64 - 0.5, (r.y + r.height) as f64 - 0.5),
            ];
            const TOL: f64 = 1e-9;
            for (cx, cy) in corners {
                let (u, v) = uv.apply(cx, cy);
                if !(-TOL..=1.0 + TOL).contains(&u) || !(-TOL..=1.0 + TOL).contains(&v) {
                    return bad(format!("part {} UV map leaves [0, 1]^2 at ({cx}, {cy})", part.part_id));
                }
            }
            if part.placement.inverse().is_none() {
                return bad(format!("part {} placement is not invertible", part.part_id));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::format("synth spec", e.to_string()))
    }

    /// A torso with two sleeves on a 192x256 frame. The sleeves turn about their
    /// shoulder joints by `sleeve_degrees`, swinging down toward the torso.
    pub fn torso_and_sleeves(sleeve_degrees: f64, texture: Texture, speckle_dropout: f64, seed: u64) -> Self {
        let torso = Rect::new(56, 60, 80, 140);
        let left = Rect::new(12, 60, 40, 56);
        let right = Rect::new(140, 60, 40, 56);
        SynthSpec {
            width: 192,
            height: 256,
            parts: vec![
                SynthPart::fitted(2, torso, Affine2::IDENTITY),
                SynthPart::fitted(15, left, Affine2::rotation_about(52.0, 60.0, -sleeve_degrees)),
                SynthPart::fitted(16, right, Affine2::rotation_about(140.0, 60.0, sleeve_degrees)),
            ],
            texture,
            speckle_dropout,
            seed,
        }
    }
}

fn fract(v: f64) -> f64 {
    v - v.floor()
}

fn palette(part: u8) -> ([f32; 3], [f32; 3]) {
    let p = part as f64;
    let base = [
        0.2 + 0.6 * fract(p * 0.37),
        0.2 + 0.6 * fract(p * 0.61 + 0.3),
        0.2 + 0.6 * fract(p * 0.83 + 0.6),
    ];
    (base.map(|c| c as f32), base.map(|c| (1.0 - c) as f32))
}

/// Deterministic lattice value in `[0, 1)` for noise textures.
fn lattice(seed: u64, part: u8, i: i64, j: i64) -> f64 {
    let mut h = seed ^ (part as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    for v in [i as u64, j as u64] {
        h ^= v.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(h << 6).wrapping_add(h >> 2);
        h = h.wrapping_mul(0xBF58_476D_1CE4_E5B9);
        h ^= h >> 31;
    }
    (h >> 11) as f64 / (1u64 << 53) as f64
}

/// Pattern weight in `[0, 1]` at local rectangle coordinates.
fn pattern(texture: &Texture, seed: u64, part: u8, lx: f64, ly: f64) -> f64 {
    let p = texture.period;
    match texture.kind {
        TextureKind::Stripes => ((lx / (p / 2.0)).floor().rem_euclid(2.0) == 1.0) as u8 as f64,
        TextureKind::Checker => {
            (((lx / (p / 2.0)).floor() + (ly / (p / 2.0)).floor()).rem_euclid(2.0) == 1.0) as u8 as f64
        }
        TextureKind::Gradient => 0.5 - 0.5 * (2.0 * PI * (lx + 0.5 * ly) / p).cos(),
        TextureKind::Noise => {
            let (gx, gy) = (lx / p, ly / p);
            let (i, j) = (gx.floor() as i64, gy.floor() as i64);
            let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
            let (tx, ty) = (smooth(fract(gx)), smooth(fract(gy)));
            let n = |di, dj| lattice(seed, part, i + di, j + dj);
            let top = n(0, 0) + (n(1, 0) - n(0, 0)) * tx;
            let bottom = n(0, 1) + (n(1, 1) - n(0, 1)) * tx;
            top + (bottom - top) * ty
        }
    }
}

fn clamp01(v: f64) -> f32 {
    v.clamp(0.0, 1.0) as f32
}

pub fn generate(spec: &SynthSpec) -> Result<SynthPair> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let uv_maps: Vec<Affine2> = spec.parts.iter().map(SynthPart::uv_map).collect();
    let inverses: Vec<Affine2> = spec
        .parts
        .iter()
        .map(|p| p.placement.inverse().expect("validated"))
        .collect();
    let owner = |x: usize, y: usize| spec.parts.iter().position(|p| p.rect.contains(x, y));

    let garment = Plane::from_fn(w, h, |x, y| match owner(x, y) {
        None => [1.0; 3],
        Some(k) => {
            let part = &spec.parts[k];
            let t = pattern(
                &spec.texture,
                spec.seed,
                part.part_id,
                (x - part.rect.x) as f64,
                (y - part.rect.y) as f64,
            ) as f32;
            let (a, b) = palette(part.part_id);
            std::array::from_fn(|c| a[c] + (b[c] - a[c]) * t)
        }
    });
    let garment_mask = Plane::from_fn(w, h, |x, y| owner(x, y).is_some());
    let clean_dp = DensePoseMap::from_fn(w, h, |x, y| match owner(x, y) {
        None => (0, 0.0, 0.0),
        Some(k) => {
            let (u, v) = uv_maps[k].apply(x as f64, y as f64);
            (spec.parts[k].part_id, clamp01(u), clamp01(v))
        }
    })?;

    let mut person_labels = Plane::filled(w, h, 0u8);
    let mut person_u = Plane::filled(w, h, 0.0f32);
    let mut person_v = Plane::filled(w, h, 0.0f32);
    let mut gt_warp = Plane::filled(w, h, [0.0f32; 3]);
    let mut gt_mask = Plane::filled(w, h, false);
    for y in 0..h {
        for x in 0..w {
            // later parts are drawn on top
            for k in (0..spec.parts.len()).rev() {
                let (gx, gy) = inverses[k].apply(x as f64, y as f64);
                let rect = spec.parts[k].rect;
                if !rect.covers(gx, gy) {
                    continue;
                }
                let (u, v) = uv_maps[k].apply(gx, gy);
                person_labels.set(x, y, spec.parts[k].part_id);
                person_u.set(x, y, clamp01(u));
                person_v.set(x, y, clamp01(v));
                let sx = gx.clamp(rect.x as f64, (rect.x + rect.width - 1) as f64);
                let sy = gy.clamp(rect.y as f64, (rect.y + rect.height - 1) as f64);
                gt_warp.set(x, y, <[f32; 3]>::sample(&garment, sx, sy));
                gt_mask.set(x, y, true);
                break;
            }
        }
    }
    let person_dp = DensePoseMap::new(person_labels, person_u, person_v)?;

    let garment_dp = if spec.speckle_dropout > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let keep = Plane::from_fn(w, h, |x, y| {
            !(clean_dp.label(x, y) != 0 && rng.random_bool(spec.speckle_dropout))
        });
        crate::iuv::mask_densepose(&clean_dp, &keep)?
    } else {
        clean_dp
    };

    Ok(SynthPair {
        garment,
        garment_dp,
        garment_mask,
        person_dp,
        gt_warp,
        gt_mask,
    })
}

/// File names written by [`SynthPair::save`].
pub mod files {
    pub const GARMENT: &str = "garment.png";
    pub const GARMENT_IUV: &str = "garment.iuv";
    pub const GARMENT_MASK: &str = "garment_mask.png";
    pub const PERSON_IUV: &str = "person.iuv";
    pub const GT_WARP: &str = "gt_warp.png";
    pub const GT_MASK: &str = "gt_mask.png";
}

impl SynthPair {
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        io::save_rgb(&self.garment, dir.join(files::GARMENT))?;
        io::save_iuv(&self.garment_dp, dir.join(files::GARMENT_IUV))?;
        io::save_mask(&self.garment_mask, dir.join(files::GARMENT_MASK))?;
        io::save_iuv(&self.person_dp, dir.join(files::PERSON_IUV))?;
        io::save_rgb(&self.gt_warp, dir.join(files::GT_WARP))?;
        io::save_mask(&self.gt_mask, dir.join(files::GT_MASK))?;
        Ok(())
    }
}
