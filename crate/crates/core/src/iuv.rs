//! DensePose IUV maps, flow fields and the flow-based warping operator.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::raster::{check_dims, BinaryMask, LabelPlane, Plane, Sample};

/// Number of body parts in the DensePose chart. Label 0 is background.
pub const NUM_PARTS: usize = 24;

/// Per-pixel body-part label and continuous `(u, v)` chart coordinates.
///
/// Labels are in `0..=24`, `u`/`v` are in `[0, 1]` and background pixels always
/// carry `(0, 0, 0)`. Every constructor enforces these.
#[derive(Clone, Debug, PartialEq)]
pub struct DensePoseMap {
    i: LabelPlane,
    u: Plane<f32>,
    v: Plane<f32>,
}

impl DensePoseMap {
    /// Validates labels and finiteness, clamps `u`/`v` into `[0, 1]` and zeroes
    /// the chart coordinates of background pixels.
    pub fn new(i: LabelPlane, mut u: Plane<f32>, mut v: Plane<f32>) -> Result<Self> {
        check_dims(i.dims(), u.dims()).map_err(|_| {
            Error::format("u_plane", format!("dimensions {:?} differ from i_plane {:?}", u.dims(), i.dims()))
        })?;
        check_dims(i.dims(), v.dims()).map_err(|_| {
            Error::format("v_plane", format!("dimensions {:?} differ from i_plane {:?}", v.dims(), i.dims()))
        })?;
        if let Some(pos) = i.data().iter().position(|&l| l as usize > NUM_PARTS) {
            return Err(Error::format(
                "i_plane",
                format!("label {} at index {pos} exceeds {NUM_PARTS}", i.data()[pos]),
            ));
        }
        for (name, plane) in [("u_plane", &mut u), ("v_plane", &mut v)] {
            if let Some(pos) = plane.data().iter().position(|c| !c.is_finite()) {
                return Err(Error::format(name, format!("non-finite value at index {pos}")));
            }
            for c in plane.data_mut() {
                *c = c.clamp(0.0, 1.0);
            }
        }
        for (k, &label) in i.data().iter().enumerate() {
            if label == 0 {
                u.data_mut()[k] = 0.0;
                v.data_mut()[k] = 0.0;
            }
        }
        Ok(DensePoseMap { i, u, v })
    }

    pub fn background(width: usize, height: usize) -> Self {
        DensePoseMap {
            i: Plane::filled(width, height, 0),
            u: Plane::filled(width, height, 0.0),
            v: Plane::filled(width, height, 0.0),
        }
    }

    /// Builds a map pixel by pixel; `f` returns `(label, u, v)`.
    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> (u8, f32, f32),
    ) -> Result<Self> {
        let mut i = Plane::filled(width, height, 0u8);
        let mut u = Plane::filled(width, height, 0.0f32);
        let mut v = Plane::filled(width, height, 0.0f32);
        for y in 0..height {
            for x in 0..width {
                let (l, pu, pv) = f(x, y);
                i.set(x, y, l);
                u.set(x, y, pu);
                v.set(x, y, pv);
            }
        }
        DensePoseMap::new(i, u, v)
    }

    pub fn width(&self) -> usize {
        self.i.width()
    }

    pub fn height(&self) -> usize {
        self.i.height()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.i.dims()
    }

    pub fn i_plane(&self) -> &LabelPlane {
        &self.i
    }

    pub fn u_plane(&self) -> &Plane<f32> {
        &self.u
    }

    pub fn v_plane(&self) -> &Plane<f32> {
        &self.v
    }

    #[inline]
    pub fn label(&self, x: usize, y: usize) -> u8 {
        self.i.get(x, y)
    }

    #[inline]
    pub fn uv(&self, x: usize, y: usize) -> (f32, f32) {
        (self.u.get(x, y), self.v.get(x, y))
    }

    /// Foreground (any body part) as a mask.
    pub fn foreground(&self) -> BinaryMask {
        self.i.map(|l| l != 0)
    }

    pub fn into_planes(self) -> (LabelPlane, Plane<f32>, Plane<f32>) {
        (self.i, self.u, self.v)
    }
}

/// Keeps the DensePose only where `mask` is set (the element-wise product with the mask).
pub fn mask_densepose(dp: &DensePoseMap, mask: &BinaryMask) -> Result<DensePoseMap> {
    check_dims(dp.dims(), mask.dims())?;
    let keep = mask.data();
    let select = |plane: &[f32]| -> Vec<f32> {
        plane
            .iter()
            .zip(keep)
            .map(|(&c, &m)| if m { c } else { 0.0 })
            .collect()
    };
    let (w, h) = dp.dims();
    let i = dp
        .i
        .data()
        .iter()
        .zip(keep)
        .map(|(&l, &m)| if m { l } else { 0 })
        .collect();
    Ok(DensePoseMap {
        i: Plane::from_vec(w, h, i)?,
        u: Plane::from_vec(w, h, select(dp.u.data()))?,
        v: Plane::from_vec(w, h, select(dp.v.data()))?,
    })
}

/// Per-pixel offsets: output pixel `(x, y)` reads the source at `(x + dx, y + dy)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowField {
    dx: Plane<f32>,
    dy: Plane<f32>,
}

impl FlowField {
    pub fn new(dx: Plane<f32>, dy: Plane<f32>) -> Result<Self> {
        check_dims(dx.dims(), dy.dims())?;
        if dx.data().iter().chain(dy.data()).any(|c| !c.is_finite()) {
            return Err(Error::format("flow", "offsets must be finite"));
        }
        Ok(FlowField { dx, dy })
    }

    pub fn zero(width: usize, height: usize) -> Self {
        FlowField {
            dx: Plane::filled(width, height, 0.0),
            dy: Plane::filled(width, height, 0.0),
        }
    }

    pub fn constant(width: usize, height: usize, dx: f32, dy: f32) -> Self {
        FlowField {
            dx: Plane::filled(width, height, dx),
            dy: Plane::filled(width, height, dy),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        self.dx.dims()
    }

    pub fn dx(&self) -> &Plane<f32> {
        &self.dx
    }

    pub fn dy(&self) -> &Plane<f32> {
        &self.dy
    }

    #[inline]
    pub fn offset(&self, x: usize, y: usize) -> (f32, f32) {
        (self.dx.get(x, y), self.dy.get(x, y))
    }
}

/// Warps any raster by a flow field with clamp-to-edge sampling.
///
/// Continuous planes interpolate bilinearly and label or mask planes take the
/// nearest pixel, as decided by the [`Sample`] impl of the value type.
pub fn flow_warp<T: Sample + Send + Sync>(src: &Plane<T>, flow: &FlowField) -> Result<Plane<T>> {
    check_dims(src.dims(), flow.dims())?;
    let (w, h) = src.dims();
    let mut out = src.data().to_vec();
    out.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (x, px) in row.iter_mut().enumerate() {
            let (dx, dy) = flow.offset(x, y);
            *px = T::sample(src, x as f64 + dx as f64, y as f64 + dy as f64);
        }
    });
    Plane::from_vec(w, h, out)
}

/// Warps all three DensePose planes. Labels use nearest sampling and `u`/`v`
/// bilinear; pixels that land on background get `(0, 0)` chart coordinates.
pub fn flow_warp_densepose(dp: &DensePoseMap, flow: &FlowField) -> Result<DensePoseMap> {
    let i = flow_warp(&dp.i, flow)?;
    let u = flow_warp(&dp.u, flow)?;
    let v = flow_warp(&dp.v, flow)?;
    DensePoseMap::new(i, u, v)
}
