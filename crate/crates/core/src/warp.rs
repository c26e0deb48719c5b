//! Garment warping through UV correspondence.
//!
//! The garment's pixel coordinates are scattered into the UV atlas, optionally
//! filled inside the projected query mask, read back at every person pixel and
//! finally used to sample colors from the full-resolution garment image.

use rayon::prelude::*;

use crate::atlas::{
    inpaint_nn, project_mask_to_uv, scatter_coords, scatter_values, texel_of, Coord, InpaintReport, UvAtlas,
};
use crate::error::{Error, Result};
use crate::iuv::DensePoseMap;
use crate::raster::{check_dims, BinaryMask, Plane, RgbImage, Sample};

/// Per-person-pixel source coordinate into the garment image.
#[derive(Clone, Debug, PartialEq)]
pub struct CoordGrid {
    coords: Plane<Option<Coord>>,
    source_dims: (usize, usize),
}

impl CoordGrid {
    /// Fails if any coordinate falls outside `source_dims`.
    pub fn new(coords: Plane<Option<Coord>>, source_dims: (usize, usize)) -> Result<Self> {
        let (sw, sh) = source_dims;
        let inside = |[x, y]: Coord| x >= 0.0 && y >= 0.0 && x <= (sw - 1) as f64 && y <= (sh - 1) as f64;
        if coords.data().iter().flatten().any(|&c| !inside(c)) {
            return Err(Error::InvalidParam(format!(
                "grid coordinate outside the {sw}x{sh} source image"
            )));
        }
        Ok(CoordGrid { coords, source_dims })
    }

    pub fn coords(&self) -> &Plane<Option<Coord>> {
        &self.coords
    }

    pub fn source_dims(&self) -> (usize, usize) {
        self.source_dims
    }

    pub fn dims(&self) -> (usize, usize) {
        self.coords.dims()
    }

    pub fn validity(&self) -> BinaryMask {
        self.coords.map(|c| c.is_some())
    }
}

/// Warped garment plus the pixels where it is defined. Invalid pixels are black.
#[derive(Clone, Debug, PartialEq)]
pub struct WarpResult {
    pub image: RgbImage,
    pub validity: BinaryMask,
}

/// Reads the atlas payload under every person pixel inside `region`.
fn lookup<P: Copy>(atlas: &UvAtlas<P>, p_dp: &DensePoseMap, region: &BinaryMask) -> Result<Plane<Option<P>>> {
    check_dims(p_dp.dims(), region.dims())?;
    let r = atlas.resolution();
    Ok(Plane::from_fn(p_dp.width(), p_dp.height(), |x, y| {
        let part = p_dp.label(x, y);
        if part == 0 || !region.get(x, y) {
            return None;
        }
        let (u, v) = p_dp.uv(x, y);
        let (a, b) = texel_of(u, v, r);
        atlas.get(part, a, b)
    }))
}

pub fn build_coord_grid(atlas: &UvAtlas<Coord>, p_dp: &DensePoseMap, region: &BinaryMask) -> Result<CoordGrid> {
    Ok(CoordGrid {
        coords: lookup(atlas, p_dp, region)?,
        source_dims: atlas.source_dims(),
    })
}

/// Bilinearly samples `src` at every valid grid coordinate.
pub fn gather(src: &RgbImage, grid: &CoordGrid) -> Result<WarpResult> {
    check_dims(grid.source_dims, src.dims())?;
    let (w, h) = grid.dims();
    let mut pixels = vec![[0.0f32; 3]; w * h];
    pixels
        .par_chunks_mut(w)
        .zip(grid.coords.data().par_chunks(w))
        .for_each(|(out, coords)| {
            for (px, c) in out.iter_mut().zip(coords) {
                if let Some([x, y]) = *c {
                    *px = <[f32; 3]>::sample(src, x, y);
                }
            }
        });
    Ok(WarpResult {
        image: Plane::from_vec(w, h, pixels)?,
        validity: grid.validity(),
    })
}

/// Sparse garment mask on the person: a person pixel is set iff its texel
/// received at least one garment pixel. No filling happens here.
pub fn warp_coarse_mask(
    g_mask: &BinaryMask,
    g_dp: &DensePoseMap,
    p_dp: &DensePoseMap,
    resolution: usize,
) -> Result<BinaryMask> {
    let atlas = scatter_values(g_dp, g_mask, resolution, |_, _| [0.0; 0])?;
    let everywhere = Plane::filled(p_dp.width(), p_dp.height(), true);
    Ok(lookup(&atlas, p_dp, &everywhere)?.map(|t| t.is_some()))
}

/// The images and maps a garment warp consumes.
#[derive(Clone, Copy, Debug)]
pub struct WarpInputs<'a> {
    pub garment: &'a RgbImage,
    pub garment_dp: &'a DensePoseMap,
    pub garment_mask: &'a BinaryMask,
    pub person_dp: &'a DensePoseMap,
    /// Refined query mask in the person frame.
    pub query_mask: &'a BinaryMask,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WarpOptions {
    pub resolution: usize,
    /// Fill query texels from their nearest valid neighbor.
    pub use_inpaint: bool,
    /// Warp the coordinate grid and sample the garment, instead of warping colors.
    pub use_grid: bool,
}

pub const DEFAULT_RESOLUTION: usize = 256;

impl Default for WarpOptions {
    fn default() -> Self {
        WarpOptions {
            resolution: DEFAULT_RESOLUTION,
            use_inpaint: true,
            use_grid: true,
        }
    }
}

fn fill<P: Copy + Send + Sync>(
    atlas: UvAtlas<P>,
    inputs: &WarpInputs<'_>,
    opts: &WarpOptions,
) -> Result<(UvAtlas<P>, InpaintReport)> {
    if !opts.use_inpaint {
        return Ok((atlas, InpaintReport::default()));
    }
    let query = project_mask_to_uv(inputs.person_dp, inputs.query_mask, opts.resolution)?;
    inpaint_nn(&atlas, &query)
}

/// Full garment warp onto the person.
pub fn warp_garment(inputs: &WarpInputs<'_>, opts: &WarpOptions) -> Result<(WarpResult, InpaintReport)> {
    check_dims(inputs.garment.dims(), inputs.garment_dp.dims())?;
    check_dims(inputs.garment.dims(), inputs.garment_mask.dims())?;
    check_dims(inputs.person_dp.dims(), inputs.query_mask.dims())?;

    if opts.use_grid {
        let atlas = scatter_coords(inputs.garment_dp, inputs.garment_mask, opts.resolution)?;
        let (atlas, report) = fill(atlas, inputs, opts)?;
        let grid = build_coord_grid(&atlas, inputs.person_dp, inputs.query_mask)?;
        Ok((gather(inputs.garment, &grid)?, report))
    } else {
        let garment = inputs.garment;
        let atlas = scatter_values(inputs.garment_dp, inputs.garment_mask, opts.resolution, |x, y| {
            garment.get(x, y).map(f64::from)
        })?;
        let (atlas, report) = fill(atlas, inputs, opts)?;
        let colors = lookup(&atlas, inputs.person_dp, inputs.query_mask)?;
        let result = WarpResult {
            image: colors.map(|c| c.map_or([0.0; 3], |rgb| rgb.map(|v| v as f32))),
            validity: colors.map(|c| c.is_some()),
        };
        Ok((result, report))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn textured(w: usize, h: usize) -> RgbImage {
        Plane::from_fn(w, h, |x, y| {
            [x as f32 / w as f32, y as f32 / h as f32, ((x * 5 + y * 3) % 7) as f32 / 6.0]
        })
    }

    /// One part covering a rectangle, with chart coordinates fitted so every pixel
    /// owns its own texel at resolution `r >= max(w, h)`.
    fn rect_dp(w: usize, h: usize, rect: (usize, usize, usize, usize)) -> DensePoseMap {
        let (x0, y0, rw, rh) = rect;
        DensePoseMap::from_fn(w, h, |x, y| {
            if (x0..x0 + rw).contains(&x) && (y0..y0 + rh).contains(&y) {
                (
                    6,
                    ((x - x0) as f32 + 0.5) / rw as f32,
                    ((y - y0) as f32 + 0.5) / rh as f32,
                )
            } else {
                (0, 0.0, 0.0)
            }
        })
        .unwrap()
    }

    #[test]
    fn empty_region_gives_invalid_grid() {
        let dp = rect_dp(10, 10, (2, 2, 5, 5));
        let atlas = scatter_coords(&dp, &dp.foreground(), 16).unwrap();
        let grid = build_coord_grid(&atlas, &dp, &Plane::filled(10, 10, false)).unwrap();
        assert!(grid.validity().none());
    }

    #[test]
    fn single_texel_lookup() {
        let mut atlas = UvAtlas::<Coord>::empty(4, (8, 8));
        atlas.set(3, 1, 2, Some([6.5, 2.0]));
        let p_dp = DensePoseMap::from_fn(5, 5, |x, y| {
            if (x, y) == (4, 0) {
                (3, 0.3, 0.6)
            } else {
                (0, 0.0, 0.0)
            }
        })
        .unwrap();
        let grid = build_coord_grid(&atlas, &p_dp, &Plane::filled(5, 5, true)).unwrap();
        assert_eq!(grid.validity().count(), 1);
        assert_eq!(grid.coords().get(4, 0), Some([6.5, 2.0]));
    }

    #[test]
    fn self_warp_grid_is_identity() {
        let dp = rect_dp(20, 16, (3, 2, 12, 10));
        let mask = dp.foreground();
        let atlas = scatter_coords(&dp, &mask, 16).unwrap();
        let grid = build_coord_grid(&atlas, &dp, &mask).unwrap();
        for y in 0..16 {
            for x in 0..20 {
                let expected = mask.get(x, y).then_some([x as f64, y as f64]);
                assert_eq!(grid.coords().get(x, y), expected);
            }
        }
    }

    #[test]
    fn gather_identity_and_midpoint() {
        let src = textured(6, 4);
        let ident = CoordGrid::new(Plane::from_fn(6, 4, |x, y| Some([x as f64, y as f64])), (6, 4)).unwrap();
        let out = gather(&src, &ident).unwrap();
        assert_eq!(out.image, src);
        assert_eq!(out.validity.count(), 24);

        let two = Plane::from_vec(2, 1, vec![[0.0f32; 3], [1.0; 3]]).unwrap();
        let grid = CoordGrid::new(Plane::from_vec(1, 1, vec![Some([0.5, 0.0])]).unwrap(), (2, 1)).unwrap();
        assert_eq!(gather(&two, &grid).unwrap().image.get(0, 0), [0.5; 3]);
    }

    #[test]
    fn grid_rejects_out_of_bounds() {
        assert!(CoordGrid::new(Plane::from_vec(1, 1, vec![Some([2.0, 0.0])]).unwrap(), (2, 2)).is_err());
    }

    #[test]
    fn gather_matches_scalar_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let src = Plane::from_fn(9, 7, |_, _| [rng.random::<f32>(), rng.random(), rng.random()]);
        let grid = Plane::from_fn(11, 5, |_, _| {
            rng.random_bool(0.8)
                .then(|| [rng.random_range(0.0..=8.0), rng.random_range(0.0..=6.0)])
        });
        let grid = CoordGrid::new(grid, (9, 7)).unwrap();
        let out = gather(&src, &grid).unwrap();
        for y in 0..5 {
            for x in 0..11 {
                match grid.coords().get(x, y) {
                    None => {
                        assert!(!out.validity.get(x, y));
                        assert_eq!(out.image.get(x, y), [0.0; 3]);
                    }
                    Some([sx, sy]) => {
                        let (x0, y0) = (sx.floor() as usize, sy.floor() as usize);
                        let (x1, y1) = ((x0 + 1).min(8), (y0 + 1).min(6));
                        let (fx, fy) = (sx - x0 as f64, sy - y0 as f64);
                        for c in 0..3 {
                            let p = |x: usize, y: usize| src.get(x, y)[c] as f64;
                            let expected = (1.0 - fx) * (1.0 - fy) * p(x0, y0)
                                + fx * (1.0 - fy) * p(x1, y0)
                                + (1.0 - fx) * fy * p(x0, y1)
                                + fx * fy * p(x1, y1);
                            assert!((out.image.get(x, y)[c] as f64 - expected).abs() <= 1e-6);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn coarse_mask_examples() {
        let dp = rect_dp(12, 12, (2, 3, 6, 5));
        let mask = dp.foreground();
        let coarse = warp_coarse_mask(&mask, &dp, &dp, 8).unwrap();
        assert!(coarse.is_subset_of(&mask));
        assert_eq!(coarse, mask);
        let empty = warp_coarse_mask(&Plane::filled(12, 12, false), &dp, &dp, 8).unwrap();
        assert!(empty.none());
    }

    #[test]
    fn self_warp_reproduces_garment() {
        let dp = rect_dp(24, 20, (4, 3, 14, 12));
        let mask = dp.foreground();
        let garment = textured(24, 20);
        let inputs = WarpInputs {
            garment: &garment,
            garment_dp: &dp,
            garment_mask: &mask,
            person_dp: &dp,
            query_mask: &mask,
        };
        for use_grid in [true, false] {
            let opts = WarpOptions {
                resolution: 16,
                use_grid,
                ..WarpOptions::default()
            };
            let (out, report) = warp_garment(&inputs, &opts).unwrap();
            assert_eq!(out.validity, mask);
            assert_eq!(report.filled, 0);
            for y in 0..20 {
                for x in 0..24 {
                    let expected = if mask.get(x, y) { garment.get(x, y) } else { [0.0; 3] };
                    let got = out.image.get(x, y);
                    for c in 0..3 {
                        assert!((got[c] - expected[c]).abs() <= 2.0 / 255.0);
                    }
                }
            }
        }
    }

    #[test]
    fn inpaint_only_adds_validity() {
        // garment chart covers only the left half of the part's UV square
        let garment_dp = rect_dp(16, 16, (0, 0, 16, 16));
        let g_mask = Plane::from_fn(16, 16, |x, _| x < 8);
        let garment = textured(16, 16);
        let query = Plane::filled(16, 16, true);
        let inputs = WarpInputs {
            garment: &garment,
            garment_dp: &garment_dp,
            garment_mask: &g_mask,
            person_dp: &garment_dp,
            query_mask: &query,
        };
        let with = warp_garment(&inputs, &WarpOptions { resolution: 16, ..Default::default() }).unwrap().0;
        let without = warp_garment(
            &inputs,
            &WarpOptions {
                resolution: 16,
                use_inpaint: false,
                ..Default::default()
            },
        )
        .unwrap()
        .0;
        assert!(without.validity.count() < with.validity.count());
        assert!(without.validity.is_subset_of(&with.validity));
        assert!(with.validity.is_subset_of(&query));
    }
}
