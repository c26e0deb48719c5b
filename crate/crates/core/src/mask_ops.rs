//! Query-mask refinement, arm/hand masks, person preprocessing and free-form
//! brush-stroke masks.

use std::collections::VecDeque;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::iuv::DensePoseMap;
use crate::raster::{check_dims, BinaryMask, Plane, RgbImage};

/// Flat structuring elements for binary morphology.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Element {
    /// Pixels with `dx^2 + dy^2 <= r^2`.
    Disk(usize),
    /// The `(2r + 1) x (2r + 1)` square.
    Square(usize),
}

impl Element {
    fn radius(self) -> usize {
        match self {
            Element::Disk(r) | Element::Square(r) => r,
        }
    }

    /// Horizontal half-extent of the element on row offset `dy`.
    fn half_width(self, dy: usize) -> usize {
        match self {
            Element::Square(r) => r,
            Element::Disk(r) => {
                let rem = r * r - dy * dy;
                let mut w = (rem as f64).sqrt() as usize;
                while (w + 1) * (w + 1) <= rem {
                    w += 1;
                }
                while w * w > rem {
                    w -= 1;
                }
                w
            }
        }
    }
}

/// Binary dilation. Pixels outside the image count as unset.
pub fn dilate(mask: &BinaryMask, element: Element) -> BinaryMask {
    let r = element.radius();
    if r == 0 {
        return mask.clone();
    }
    let (w, h) = mask.dims();
    // prefix[y][x] = set pixels in row y before column x
    let prefix: Vec<Vec<u32>> = mask
        .rows()
        .map(|row| {
            let mut acc = Vec::with_capacity(w + 1);
            acc.push(0);
            for &b in row {
                acc.push(acc.last().unwrap() + b as u32);
            }
            acc
        })
        .collect();
    let spans: Vec<usize> = (0..=r).map(|dy| element.half_width(dy)).collect();
    Plane::from_fn(w, h, |x, y| {
        let y_lo = y.saturating_sub(r);
        let y_hi = (y + r).min(h - 1);
        (y_lo..=y_hi).any(|yy| {
            let hw = spans[yy.abs_diff(y)];
            let lo = x.saturating_sub(hw);
            let hi = (x + hw).min(w - 1);
            prefix[yy][hi + 1] > prefix[yy][lo]
        })
    })
}

/// Binary erosion. Pixels outside the image count as set, so shapes touching
/// the border are not eaten from outside.
pub fn erode(mask: &BinaryMask, element: Element) -> BinaryMask {
    dilate(&mask.complement(), element).complement()
}

/// Binary closing, computed on a canvas padded with background so that
/// dilation spilling past the border is eroded back.
pub fn close(mask: &BinaryMask, element: Element) -> BinaryMask {
    let r = element.radius();
    if r == 0 {
        return mask.clone();
    }
    let (w, h) = mask.dims();
    let padded = Plane::from_fn(w + 2 * r, h + 2 * r, |x, y| {
        x >= r && y >= r && x < w + r && y < h + r && mask.get(x - r, y - r)
    });
    let closed = erode(&dilate(&padded, element), element);
    Plane::from_fn(w, h, |x, y| closed.get(x + r, y + r))
}

pub fn open(mask: &BinaryMask, element: Element) -> BinaryMask {
    dilate(&erode(mask, element), element)
}

const NEIGHBORS4: [(isize, isize); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];

/// Labels the 4-connected components of pixels equal to `value`. Returns the
/// label plane (`u32::MAX` for other pixels) and each component's pixel list.
pub fn connected_components(mask: &BinaryMask, value: bool) -> (Plane<u32>, Vec<Vec<usize>>) {
    let (w, h) = mask.dims();
    let mut labels = Plane::filled(w, h, u32::MAX);
    let mut components = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if mask.data()[start] != value || labels.data()[start] != u32::MAX {
            continue;
        }
        let id = components.len() as u32;
        let mut pixels = Vec::new();
        labels.data_mut()[start] = id;
        queue.push_back(start);
        while let Some(k) = queue.pop_front() {
            pixels.push(k);
            let (x, y) = ((k % w) as isize, (k / w) as isize);
            for (dx, dy) in NEIGHBORS4 {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let n = ny as usize * w + nx as usize;
                if mask.data()[n] == value && labels.data()[n] == u32::MAX {
                    labels.data_mut()[n] = id;
                    queue.push_back(n);
                }
            }
        }
        components.push(pixels);
    }
    (labels, components)
}

/// Fills background components that do not touch the image border and have
/// fewer than `min_hole_area` pixels.
pub fn fill_holes(mask: &BinaryMask, min_hole_area: usize) -> BinaryMask {
    let (w, h) = mask.dims();
    let (_, holes) = connected_components(mask, false);
    let mut out = mask.clone();
    for hole in holes {
        let touches_border = hole
            .iter()
            .any(|&k| k % w == 0 || k % w == w - 1 || k / w == 0 || k / w == h - 1);
        if !touches_border && hole.len() < min_hole_area {
            for k in hole {
                out.data_mut()[k] = true;
            }
        }
    }
    out
}

/// Parameters of the morphological query-mask refinement.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RefineParams {
    /// Disk radius of the initial closing.
    pub close_radius: usize,
    /// Interior holes smaller than this are filled.
    pub min_hole_area: usize,
    /// Square half-width of the final open/close boundary smoothing.
    pub smooth_radius: usize,
}

impl Default for RefineParams {
    fn default() -> Self {
        RefineParams {
            close_radius: 5,
            min_hole_area: 64,
            smooth_radius: 3,
        }
    }
}

/// Turns a sparse, noisy warped garment mask into a query mask: closing,
/// interior hole filling, then an open/close pass to smooth the boundary.
pub fn refine_mask(coarse: &BinaryMask, params: &RefineParams) -> BinaryMask {
    let closed = close(coarse, Element::Disk(params.close_radius));
    let filled = fill_holes(&closed, params.min_hole_area);
    let smooth = Element::Square(params.smooth_radius);
    close(&open(&filled, smooth), smooth)
}

/// DensePose labels of the upper arms, lower arms and hands.
pub const ARM_HAND_PARTS: [u8; 10] = [3, 4, 15, 16, 17, 18, 19, 20, 21, 22];

/// Arm and hand pixels not covered by the warped garment.
pub fn derive_arm_mask(p_dp: &DensePoseMap, warped_validity: &BinaryMask) -> Result<BinaryMask> {
    check_dims(p_dp.dims(), warped_validity.dims())?;
    Ok(Plane::from_fn(p_dp.width(), p_dp.height(), |x, y| {
        ARM_HAND_PARTS.contains(&p_dp.label(x, y)) && !warped_validity.get(x, y)
    }))
}

/// Fill color used when no skin pixel is available.
pub const FALLBACK_SKIN: [f32; 3] = [0.5; 3];

/// Replaces the `upper_mask` region with the mean color of `p` over `skin_mask`.
pub fn preprocess_person(p: &RgbImage, upper_mask: &BinaryMask, skin_mask: &BinaryMask) -> Result<RgbImage> {
    check_dims(p.dims(), upper_mask.dims())?;
    check_dims(p.dims(), skin_mask.dims())?;
    let mut sum = [0.0f64; 3];
    let mut n = 0usize;
    for (px, _) in p.data().iter().zip(skin_mask.data()).filter(|(_, &s)| s) {
        for c in 0..3 {
            sum[c] += px[c] as f64;
        }
        n += 1;
    }
    let fill = if n == 0 {
        FALLBACK_SKIN
    } else {
        sum.map(|s| (s / n as f64) as f32)
    };
    let mut out = p.clone();
    for (px, &m) in out.data_mut().iter_mut().zip(upper_mask.data()) {
        if m {
            *px = fill;
        }
    }
    Ok(out)
}

/// Random brush-stroke parameters. Ranges are inclusive.
#[derive(Clone, Debug, PartialEq)]
pub struct BrushSpec {
    pub stroke_count_range: (u32, u32),
    pub vertex_count_range: (u32, u32),
    pub brush_width_range: (f64, f64),
    pub segment_length_range: (f64, f64),
    /// Largest heading change between consecutive segments, in radians.
    pub max_turn_angle: f64,
    pub seed: u64,
}

impl Default for BrushSpec {
    fn default() -> Self {
        BrushSpec {
            stroke_count_range: (1, 5),
            vertex_count_range: (4, 12),
            brush_width_range: (8.0, 32.0),
            segment_length_range: (10.0, 40.0),
            max_turn_angle: 100f64.to_radians(),
            seed: 0,
        }
    }
}

impl BrushSpec {
    pub fn with_seed(seed: u64) -> Self {
        BrushSpec {
            seed,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidParam(format!("brush spec: {msg}")));
        let (s0, s1) = self.stroke_count_range;
        let (v0, v1) = self.vertex_count_range;
        let (w0, w1) = self.brush_width_range;
        let (l0, l1) = self.segment_length_range;
        if s0 > s1 || v0 > v1 {
            return bad("empty count range");
        }
        if !(w0 > 0.0 && w0 <= w1 && w1.is_finite()) {
            return bad("brush widths must be positive and ordered");
        }
        if !(l0 >= 0.0 && l0 <= l1 && l1.is_finite()) {
            return bad("segment lengths must be non-negative and ordered");
        }
        if !(self.max_turn_angle >= 0.0 && self.max_turn_angle.is_finite()) {
            return bad("max turn angle must be non-negative");
        }
        Ok(())
    }
}

/// Marks every pixel whose center lies within `radius` of segment `p0`-`p1`.
fn stamp_segment(mask: &mut BinaryMask, p0: (f64, f64), p1: (f64, f64), radius: f64) {
    let (w, h) = mask.dims();
    let lo = |a: f64, b: f64| (a.min(b) - radius).floor().max(0.0) as usize;
    let hi = |a: f64, b: f64, n: usize| ((a.max(b) + radius).ceil().max(0.0) as usize).min(n - 1);
    let (dx, dy) = (p1.0 - p0.0, p1.1 - p0.1);
    let len2 = dx * dx + dy * dy;
    let r2 = radius * radius;
    for y in lo(p0.1, p1.1)..=hi(p0.1, p1.1, h) {
        for x in lo(p0.0, p1.0)..=hi(p0.0, p1.0, w) {
            let (px, py) = (x as f64 - p0.0, y as f64 - p0.1);
            let t = if len2 > 0.0 {
                ((px * dx + py * dy) / len2).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let (ex, ey) = (px - t * dx, py - t * dy);
            if ex * ex + ey * ey <= r2 {
                mask.set(x, y, true);
            }
        }
    }
}

/// Random free-form inpainting mask: the union of thick polyline strokes with
/// round caps, fully determined by `(width, height, spec)`.
pub fn free_form_mask(width: usize, height: usize, spec: &BrushSpec) -> Result<BinaryMask> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidParam(format!("mask size {width}x{height}")));
    }
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut mask = Plane::filled(width, height, false);
    let (xmax, ymax) = ((width - 1) as f64, (height - 1) as f64);
    let strokes = rng.random_range(spec.stroke_count_range.0..=spec.stroke_count_range.1);
    for _ in 0..strokes {
        let vertices = rng.random_range(spec.vertex_count_range.0..=spec.vertex_count_range.1);
        let radius = rng.random_range(spec.brush_width_range.0..=spec.brush_width_range.1) / 2.0;
        let mut point = (rng.random_range(0.0..=xmax), rng.random_range(0.0..=ymax));
        let mut heading = rng.random_range(0.0..2.0 * PI);
        stamp_segment(&mut mask, point, point, radius);
        for _ in 0..vertices {
            heading += rng.random_range(-spec.max_turn_angle..=spec.max_turn_angle);
            let length = rng.random_range(spec.segment_length_range.0..=spec.segment_length_range.1);
            let next = (
                (point.0 + length * heading.cos()).clamp(0.0, xmax),
                (point.1 + length * heading.sin()).clamp(0.0, ymax),
            );
            stamp_segment(&mut mask, point, next, radius);
            point = next;
        }
    }
    Ok(mask)
}
