//! Per-part UV texture atlases and the query-restricted nearest-neighbor fill.
//!
//! Every body part owns an `R x R` grid of texels. Texel `(part, a, b)` covers the
//! chart cell around `((a + 0.5) / R, (b + 0.5) / R)`; `a` follows `u` and `b`
//! follows `v`. Parts are stored lazily: a part that never received a value or
//! a query bit costs nothing.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::iuv::{DensePoseMap, NUM_PARTS};
use crate::raster::{check_dims, BinaryMask, Plane};

/// Source-image pixel coordinate `(x, y)`.
pub type Coord = [f64; 2];

/// Maps a chart coordinate in `[0, 1]` to a texel index in `0..resolution`.
#[inline]
pub fn texel_index(value: f32, resolution: usize) -> usize {
    ((value as f64 * resolution as f64).floor().max(0.0) as usize).min(resolution - 1)
}

/// Texel `(a, b)` hit by a pixel with chart coordinates `(u, v)`.
#[inline]
pub fn texel_of(u: f32, v: f32, resolution: usize) -> (usize, usize) {
    (texel_index(u, resolution), texel_index(v, resolution))
}

fn check_resolution(resolution: usize) -> Result<()> {
    if resolution == 0 {
        Err(Error::InvalidParam("atlas resolution must be at least 1".into()))
    } else {
        Ok(())
    }
}

fn part_slot(part: u8) -> usize {
    assert!((1..=NUM_PARTS as u8).contains(&part), "part {part} outside 1..=24");
    part as usize - 1
}

#[derive(Clone, Debug, PartialEq)]
pub struct UvAtlas<P = Coord> {
    resolution: usize,
    source_dims: (usize, usize),
    parts: Vec<Vec<Option<P>>>,
}

impl<P: Copy> UvAtlas<P> {
    pub fn empty(resolution: usize, source_dims: (usize, usize)) -> Self {
        UvAtlas {
            resolution,
            source_dims,
            parts: vec![Vec::new(); NUM_PARTS],
        }
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    /// Width and height of the image the payloads were scattered from.
    pub fn source_dims(&self) -> (usize, usize) {
        self.source_dims
    }

    #[inline]
    pub fn get(&self, part: u8, a: usize, b: usize) -> Option<P> {
        let texels = &self.parts[part_slot(part)];
        if texels.is_empty() {
            None
        } else {
            texels[b * self.resolution + a]
        }
    }

    pub fn set(&mut self, part: u8, a: usize, b: usize, payload: Option<P>) {
        let r = self.resolution;
        let texels = &mut self.parts[part_slot(part)];
        if texels.is_empty() {
            if payload.is_none() {
                return;
            }
            *texels = vec![None; r * r];
        }
        texels[b * r + a] = payload;
    }

    /// Row-major texels of one part (`b` is the row), or an empty slice if the
    /// part holds nothing.
    pub fn part_texels(&self, part: u8) -> &[Option<P>] {
        &self.parts[part_slot(part)]
    }

    pub fn valid_in_part(&self, part: u8) -> usize {
        self.part_texels(part).iter().filter(|t| t.is_some()).count()
    }

    pub fn valid_count(&self) -> usize {
        (1..=NUM_PARTS as u8).map(|p| self.valid_in_part(p)).sum()
    }

    /// Rewrites every valid payload; `f` receives `(part, a, b, payload)`.
    pub fn map_payloads<Q: Copy>(&self, f: impl Fn(u8, usize, usize, P) -> Q) -> UvAtlas<Q> {
        let r = self.resolution;
        let parts = self
            .parts
            .iter()
            .enumerate()
            .map(|(slot, texels)| {
                texels
                    .iter()
                    .enumerate()
                    .map(|(k, t)| t.map(|p| f(slot as u8 + 1, k % r, k / r, p)))
                    .collect()
            })
            .collect();
        UvAtlas {
            resolution: r,
            source_dims: self.source_dims,
            parts,
        }
    }
}

/// Scatters a per-pixel value into UV space.
///
/// Every pixel with `mask` set and a body-part label lands in the texel its
/// `(u, v)` falls into. Texels hit by several pixels hold the mean of their values.
pub fn scatter_values<const N: usize>(
    dp: &DensePoseMap,
    mask: &BinaryMask,
    resolution: usize,
    value: impl Fn(usize, usize) -> [f64; N],
) -> Result<UvAtlas<[f64; N]>> {
    check_dims(dp.dims(), mask.dims())?;
    check_resolution(resolution)?;
    let r = resolution;
    let mut sums: Vec<Vec<([f64; N], u32)>> = vec![Vec::new(); NUM_PARTS];
    for y in 0..dp.height() {
        for x in 0..dp.width() {
            let part = dp.label(x, y);
            if part == 0 || !mask.get(x, y) {
                continue;
            }
            let (u, v) = dp.uv(x, y);
            let (a, b) = texel_of(u, v, r);
            let acc = &mut sums[part as usize - 1];
            if acc.is_empty() {
                *acc = vec![([0.0; N], 0); r * r];
            }
            let (sum, count) = &mut acc[b * r + a];
            let val = value(x, y);
            for c in 0..N {
                sum[c] += val[c];
            }
            *count += 1;
        }
    }
    let parts = sums
        .into_iter()
        .map(|acc| {
            acc.into_iter()
                .map(|(sum, count)| (count > 0).then(|| sum.map(|s| s / count as f64)))
                .collect()
        })
        .collect();
    Ok(UvAtlas {
        resolution: r,
        source_dims: dp.dims(),
        parts,
    })
}

/// Scatters the pixel coordinates of the masked garment into UV space.
pub fn scatter_coords(g_dp: &DensePoseMap, g_mask: &BinaryMask, resolution: usize) -> Result<UvAtlas<Coord>> {
    scatter_values(g_dp, g_mask, resolution, |x, y| [x as f64, y as f64])
}

/// Boolean texel grids marking where UV-space fill is allowed.
#[derive(Clone, Debug, PartialEq)]
pub struct UvQueryMask {
    resolution: usize,
    parts: Vec<Vec<bool>>,
}

impl UvQueryMask {
    pub fn empty(resolution: usize) -> Self {
        UvQueryMask {
            resolution,
            parts: vec![Vec::new(); NUM_PARTS],
        }
    }

    /// Every texel of every part set.
    pub fn full(resolution: usize) -> Self {
        UvQueryMask {
            resolution,
            parts: vec![vec![true; resolution * resolution]; NUM_PARTS],
        }
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    #[inline]
    pub fn get(&self, part: u8, a: usize, b: usize) -> bool {
        let bits = &self.parts[part_slot(part)];
        !bits.is_empty() && bits[b * self.resolution + a]
    }

    pub fn set(&mut self, part: u8, a: usize, b: usize, value: bool) {
        let r = self.resolution;
        let bits = &mut self.parts[part_slot(part)];
        if bits.is_empty() {
            if !value {
                return;
            }
            *bits = vec![false; r * r];
        }
        bits[b * r + a] = value;
    }

    pub fn part_bits(&self, part: u8) -> &[bool] {
        &self.parts[part_slot(part)]
    }

    pub fn count(&self) -> usize {
        self.parts.iter().flatten().filter(|&&b| b).count()
    }
}

/// Projects a person-frame mask into UV space with the same texel rule as
/// [`scatter_coords`].
pub fn project_mask_to_uv(p_dp: &DensePoseMap, m_q: &BinaryMask, resolution: usize) -> Result<UvQueryMask> {
    check_dims(p_dp.dims(), m_q.dims())?;
    check_resolution(resolution)?;
    let mut query = UvQueryMask::empty(resolution);
    for y in 0..p_dp.height() {
        for x in 0..p_dp.width() {
            let part = p_dp.label(x, y);
            if part != 0 && m_q.get(x, y) {
                let (u, v) = p_dp.uv(x, y);
                let (a, b) = texel_of(u, v, resolution);
                query.set(part, a, b, true);
            }
        }
    }
    Ok(query)
}

/// Outcome of [`inpaint_nn`].
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct InpaintReport {
    /// Texels that received a copied payload.
    pub filled: usize,
    /// Parts with query texels to fill but no valid texel to copy from.
    pub starved_parts: Vec<u8>,
}

const NO_ROW: u32 = u32::MAX;

/// Outcome of filling one part: `None` when nothing changes, otherwise the new
/// texels and the fill count; `Err(())` flags a starved part.
type PartFill<P> = std::result::Result<Option<(Vec<Option<P>>, usize)>, ()>;

fn fill_part<P: Copy>(texels: &[Option<P>], query: &[bool], r: usize) -> PartFill<P> {
    let is_valid = |k: usize| !texels.is_empty() && texels[k].is_some();
    let holes: Vec<usize> = query
        .iter()
        .enumerate()
        .filter(|&(k, &q)| q && !is_valid(k))
        .map(|(k, _)| k)
        .collect();
    if holes.is_empty() {
        return Ok(None);
    }
    if texels.iter().all(|t| t.is_none()) {
        return Err(());
    }

    // Nearest valid row in each column; ties between the row above and the row
    // below go to the smaller row index.
    let mut nearest = vec![NO_ROW; r * r];
    for a in 0..r {
        let mut above = NO_ROW;
        for b in 0..r {
            if is_valid(b * r + a) {
                above = b as u32;
            }
            nearest[b * r + a] = above;
        }
        let mut below = NO_ROW;
        for b in (0..r).rev() {
            if is_valid(b * r + a) {
                below = b as u32;
            }
            let up = nearest[b * r + a];
            let pick = match (up, below) {
                (NO_ROW, d) => d,
                (u, NO_ROW) => u,
                (u, d) => {
                    if b as u32 - u <= d - b as u32 {
                        u
                    } else {
                        d
                    }
                }
            };
            nearest[b * r + a] = pick;
        }
    }

    let mut out = if texels.is_empty() { vec![None; r * r] } else { texels.to_vec() };
    for &k in &holes {
        let (a, b) = (k % r, k / r);
        // (squared distance, source row, source column), compared lexicographically.
        let mut best: Option<(u64, usize, usize)> = None;
        for step in 0..r {
            if let Some((d2, _, _)) = best {
                if (step * step) as u64 > d2 {
                    break;
                }
            }
            let left = a.checked_sub(step);
            let right = (step > 0 && a + step < r).then_some(a + step);
            for col in [left, right].into_iter().flatten() {
                let row = nearest[b * r + col];
                if row == NO_ROW {
                    continue;
                }
                let row = row as usize;
                let dy = row.abs_diff(b);
                let cand = ((step * step + dy * dy) as u64, row, col);
                if best.is_none_or(|cur| cand < cur) {
                    best = Some(cand);
                }
            }
        }
        let (_, row, col) = best.expect("part has at least one valid texel");
        out[k] = texels[row * r + col];
    }
    Ok(Some((out, holes.len())))
}

/// Fills query texels that hold no payload with the payload of the nearest
/// valid texel of the same part.
///
/// Distance is Euclidean on texel indices; ties go to the candidate with the
/// smallest `b`, then the smallest `a`. Texels outside the query are untouched.
/// Parts whose query cannot be served are listed in the report and left as is.
pub fn inpaint_nn<P: Copy + Send + Sync>(atlas: &UvAtlas<P>, query: &UvQueryMask) -> Result<(UvAtlas<P>, InpaintReport)> {
    if atlas.resolution != query.resolution {
        return Err(Error::InvalidParam(format!(
            "atlas resolution {} differs from query resolution {}",
            atlas.resolution, query.resolution
        )));
    }
    let r = atlas.resolution;
    let results: Vec<_> = atlas
        .parts
        .par_iter()
        .zip(query.parts.par_iter())
        .map(|(texels, bits)| fill_part(texels, bits, r))
        .collect();

    let mut out = atlas.clone();
    let mut report = InpaintReport::default();
    for (slot, res) in results.into_iter().enumerate() {
        match res {
            Ok(Some((texels, filled))) => {
                out.parts[slot] = texels;
                report.filled += filled;
            }
            Ok(None) => {}
            Err(()) => report.starved_parts.push(slot as u8 + 1),
        }
    }
    if !report.starved_parts.is_empty() {
        log::warn!(
            "query texels without any source texel in parts {:?}; those pixels stay invalid",
            report.starved_parts
        );
    }
    Ok((out, report))
}

/// Renders one part of a coordinate atlas: valid texels encode `x / width` in red
/// and `y / height` in green, invalid texels are magenta.
pub fn render_part(atlas: &UvAtlas<Coord>, part: u8) -> Plane<[f32; 3]> {
    let r = atlas.resolution;
    let (w, h) = atlas.source_dims;
    let sx = (w.max(2) - 1) as f64;
    let sy = (h.max(2) - 1) as f64;
    Plane::from_fn(r, r, |a, b| match atlas.get(part, a, b) {
        Some([x, y]) => [(x / sx) as f32, (y / sy) as f32, 0.0],
        None => [1.0, 0.0, 1.0],
    })
}
