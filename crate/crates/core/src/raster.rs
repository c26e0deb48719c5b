//! Planar raster containers shared by every stage of the pipeline.
//!
//! A [`Plane`] is a row-major `width x height` grid of one value type. Pixel
//! `(x, y)` has its center at the continuous coordinate `(x, y)`, so sampling at
//! integer coordinates returns stored values unchanged.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Plane<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

/// Per-pixel boolean mask.
pub type BinaryMask = Plane<bool>;
/// RGB image with channel values in `[0, 1]`.
pub type RgbImage = Plane<[f32; 3]>;
/// Real-valued plane used by the loss functions.
pub type RealPlane = Plane<f64>;
/// Integer body-part labels.
pub type LabelPlane = Plane<u8>;

impl<T> Plane<T> {
    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }
}

impl<T: Copy> Plane<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Plane {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Plane {
            width,
            height,
            data,
        }
    }

    /// Wraps row-major `data`. Fails on zero dimensions or a length mismatch.
    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::format(
                "dimensions",
                format!("{width}x{height} has a zero side"),
            ));
        }
        if data.len() != width * height {
            return Err(Error::format(
                "data",
                format!(
                    "expected {} values for {width}x{height}, found {}",
                    width * height,
                    data.len()
                ),
            ));
        }
        Ok(Plane {
            width,
            height,
            data,
        })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        debug_assert!(x < self.width && y < self.height);
        y * self.width + x
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        self.data[self.index(x, y)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: T) {
        let i = self.index(x, y);
        self.data[i] = value;
    }

    pub fn map<U: Copy>(&self, f: impl Fn(T) -> U) -> Plane<U> {
        Plane {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, T> {
        self.data.chunks_exact(self.width)
    }

    pub fn ensure_same_dims<U>(&self, other: &Plane<U>) -> Result<()> {
        check_dims(self.dims(), other.dims())
    }
}

pub(crate) fn check_dims(expected: (usize, usize), found: (usize, usize)) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

impl Plane<bool> {
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn none(&self) -> bool {
        !self.data.iter().any(|&b| b)
    }

    pub fn zip_with(&self, other: &BinaryMask, f: impl Fn(bool, bool) -> bool) -> Result<BinaryMask> {
        self.ensure_same_dims(other)?;
        Ok(Plane {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn union(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.zip_with(other, |a, b| a || b)
    }

    pub fn intersection(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.zip_with(other, |a, b| a && b)
    }

    pub fn difference(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.zip_with(other, |a, b| a && !b)
    }

    pub fn complement(&self) -> BinaryMask {
        self.map(|b| !b)
    }

    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.dims() == other.dims() && self.data.iter().zip(&other.data).all(|(&a, &b)| !a || b)
    }
}

/// Values that can be resampled at a real-valued position.
///
/// Continuous values interpolate bilinearly; categorical values (labels, mask
/// bits) take the nearest pixel. Positions outside the raster clamp to the edge.
pub trait Sample: Copy {
    fn sample(plane: &Plane<Self>, x: f64, y: f64) -> Self;
}

/// Clamped bilinear footprint: the two columns, two rows and fractional offsets.
#[inline]
pub(crate) fn bilinear_footprint(
    width: usize,
    height: usize,
    x: f64,
    y: f64,
) -> (usize, usize, usize, usize, f64, f64) {
    let x = x.clamp(0.0, (width - 1) as f64);
    let y = y.clamp(0.0, (height - 1) as f64);
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let x1 = (x0 + 1).min(width - 1);
    let y1 = (y0 + 1).min(height - 1);
    (x0, x1, y0, y1, x - x0 as f64, y - y0 as f64)
}

#[inline]
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + (b - a) * t
}

#[inline]
fn nearest_index(width: usize, height: usize, x: f64, y: f64) -> (usize, usize) {
    let x = x.clamp(0.0, (width - 1) as f64);
    let y = y.clamp(0.0, (height - 1) as f64);
    (
        ((x + 0.5).floor() as usize).min(width - 1),
        ((y + 0.5).floor() as usize).min(height - 1),
    )
}

impl Sample for f64 {
    fn sample(plane: &Plane<f64>, x: f64, y: f64) -> f64 {
        let (x0, x1, y0, y1, fx, fy) = bilinear_footprint(plane.width, plane.height, x, y);
        let top = lerp(plane.get(x0, y0), plane.get(x1, y0), fx);
        let bottom = lerp(plane.get(x0, y1), plane.get(x1, y1), fx);
        lerp(top, bottom, fy)
    }
}

impl Sample for f32 {
    fn sample(plane: &Plane<f32>, x: f64, y: f64) -> f32 {
        let (x0, x1, y0, y1, fx, fy) = bilinear_footprint(plane.width, plane.height, x, y);
        let p = |x, y| plane.get(x, y) as f64;
        let top = lerp(p(x0, y0), p(x1, y0), fx);
        let bottom = lerp(p(x0, y1), p(x1, y1), fx);
        lerp(top, bottom, fy) as f32
    }
}

impl Sample for [f32; 3] {
    fn sample(plane: &Plane<[f32; 3]>, x: f64, y: f64) -> [f32; 3] {
        let (x0, x1, y0, y1, fx, fy) = bilinear_footprint(plane.width, plane.height, x, y);
        let (p00, p10, p01, p11) = (
            plane.get(x0, y0),
            plane.get(x1, y0),
            plane.get(x0, y1),
            plane.get(x1, y1),
        );
        std::array::from_fn(|c| {
            let top = lerp(p00[c] as f64, p10[c] as f64, fx);
            let bottom = lerp(p01[c] as f64, p11[c] as f64, fx);
            lerp(top, bottom, fy) as f32
        })
    }
}

impl Sample for u8 {
    fn sample(plane: &Plane<u8>, x: f64, y: f64) -> u8 {
        let (x, y) = nearest_index(plane.width, plane.height, x, y);
        plane.get(x, y)
    }
}

impl Sample for bool {
    fn sample(plane: &Plane<bool>, x: f64, y: f64) -> bool {
        let (x, y) = nearest_index(plane.width, plane.height, x, y);
        plane.get(x, y)
    }
}

impl Plane<[f32; 3]> {
    /// Fails if any channel is non-finite or outside `[0, 1]`.
    pub fn validate_rgb(&self) -> Result<()> {
        match self
            .data
            .iter()
            .position(|px| px.iter().any(|c| !(0.0..=1.0).contains(c)))
        {
            None => Ok(()),
            Some(i) => Err(Error::format(
                "rgb",
                format!(
                    "pixel ({}, {}) has channel outside [0, 1]",
                    i % self.width,
                    i / self.width
                ),
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bilinear_midpoint() {
        let p = Plane::from_vec(2, 1, vec![0.0f64, 1.0]).unwrap();
        assert_eq!(f64::sample(&p, 0.5, 0.0), 0.5);
        assert_eq!(f64::sample(&p, 1.0, 0.0), 1.0);
        assert_eq!(f64::sample(&p, 7.0, -3.0), 1.0);
    }

    #[test]
    fn nearest_labels_do_not_blend() {
        let p = Plane::from_vec(2, 1, vec![3u8, 9]).unwrap();
        assert_eq!(u8::sample(&p, 0.49, 0.0), 3);
        assert_eq!(u8::sample(&p, 0.5, 0.0), 9);
        assert_eq!(u8::sample(&p, -10.0, 0.0), 3);
    }

    #[test]
    fn from_vec_rejects_bad_shapes() {
        assert!(Plane::from_vec(0, 3, Vec::<u8>::new()).is_err());
        assert!(Plane::from_vec(2, 2, vec![0u8; 3]).is_err());
    }

    #[test]
    fn mask_set_ops() {
        let a = Plane::from_vec(3, 1, vec![true, true, false]).unwrap();
        let b = Plane::from_vec(3, 1, vec![false, true, true]).unwrap();
        assert_eq!(a.union(&b).unwrap().count(), 3);
        assert_eq!(a.intersection(&b).unwrap().count(), 1);
        assert_eq!(a.difference(&b).unwrap().data(), &[true, false, false]);
        assert!(a.intersection(&b).unwrap().is_subset_of(&a));
    }
}
