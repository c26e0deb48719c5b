//! End-to-end garment transfer: coarse mask, refinement, then the warp.

use crate::atlas::InpaintReport;
use crate::error::Result;
use crate::iuv::DensePoseMap;
use crate::mask_ops::{refine_mask, RefineParams};
use crate::raster::{BinaryMask, RgbImage};
use crate::warp::{warp_coarse_mask, warp_garment, WarpInputs, WarpOptions, WarpResult};

/// Chart resolution used when projecting the garment mask onto the person.
pub const DEFAULT_COARSE_RESOLUTION: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PipelineOptions {
    pub warp: WarpOptions,
    pub coarse_resolution: usize,
    pub refine: RefineParams,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            warp: WarpOptions::default(),
            coarse_resolution: DEFAULT_COARSE_RESOLUTION,
            refine: RefineParams::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct PipelineOutput {
    pub coarse_mask: BinaryMask,
    pub query_mask: BinaryMask,
    pub warp: WarpResult,
    pub report: InpaintReport,
}

/// Runs the full transfer. When `query_mask` is given it replaces the refined
/// coarse mask as the warp query.
pub fn transfer(
    garment: &RgbImage,
    garment_dp: &DensePoseMap,
    garment_mask: &BinaryMask,
    person_dp: &DensePoseMap,
    query_mask: Option<&BinaryMask>,
    opts: &PipelineOptions,
) -> Result<PipelineOutput> {
    let coarse_mask = warp_coarse_mask(garment_mask, garment_dp, person_dp, opts.coarse_resolution)?;
    let query_mask = match query_mask {
        Some(m) => m.clone(),
        None => refine_mask(&coarse_mask, &opts.refine),
    };
    let inputs = WarpInputs {
        garment,
        garment_dp,
        garment_mask,
        person_dp,
        query_mask: &query_mask,
    };
    let (warp, report) = warp_garment(&inputs, &opts.warp)?;
    log::info!(
        "coarse mask {} px, query {} px, warped {} px, {} texels filled",
        coarse_mask.count(),
        query_mask.count(),
        warp.validity.count(),
        report.filled
    );
    Ok(PipelineOutput {
        coarse_mask,
        query_mask,
        warp,
        report,
    })
}
