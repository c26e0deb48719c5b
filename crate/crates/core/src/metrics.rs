//! Image and mask agreement metrics.
//!
//! SSIM uses the canonical configuration: an 11x11 Gaussian window with
//! sigma 1.5, `C1 = 0.01^2` and `C2 = 0.03^2` for values in `[0, 1]`. Windows
//! must fit inside the image, so the SSIM map covers the pixels at least 5 away
//! from every border.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::raster::{check_dims, BinaryMask, Plane, RealPlane, RgbImage};

pub const WINDOW: usize = 11;
pub const SIGMA: f64 = 1.5;
pub const C1: f64 = 0.01 * 0.01;
pub const C2: f64 = 0.03 * 0.03;
const HALF: usize = WINDOW / 2;

/// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
pub fn gaussian_taps() -> [f64; WINDOW] {
    let mut taps: [f64; WINDOW] =
        std::array::from_fn(|i| (-((i as f64 - HALF as f64).powi(2)) / (2.0 * SIGMA * SIGMA)).exp());
    let sum: f64 = taps.iter().sum();
    for t in &mut taps {
        *t /= sum;
    }
    taps
}

/// Separable valid-mode Gaussian filter.
fn filter_valid(src: &[f64], w: usize, h: usize, taps: &[f64; WINDOW]) -> Vec<f64> {
    let ow = w - WINDOW + 1;
    let oh = h - WINDOW + 1;
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        let line = &src[y * w..(y + 1) * w];
        for x in 0..ow {
            rows[y * ow + x] = taps.iter().zip(&line[x..x + WINDOW]).map(|(t, v)| t * v).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = taps
                .iter()
                .enumerate()
                .map(|(k, t)| t * rows[(y + k) * ow + x])
                .sum();
        }
    }
    out
}

fn check_ssim_inputs(a: &RgbImage, b: &RgbImage) -> Result<()> {
    check_dims(a.dims(), b.dims())?;
    let (w, h) = a.dims();
    if w < WINDOW || h < WINDOW {
        return Err(Error::InvalidParam(format!(
            "SSIM needs at least {WINDOW}x{WINDOW} pixels, got {w}x{h}"
        )));
    }
    Ok(())
}

/// Per-window SSIM averaged over the three channels. Map pixel `(x, y)` is the
/// window centered on image pixel `(x + 5, y + 5)`.
pub fn ssim_map(a: &RgbImage, b: &RgbImage) -> Result<RealPlane> {
    check_ssim_inputs(a, b)?;
    let (w, h) = a.dims();
    let taps = gaussian_taps();
    let (ow, oh) = (w - WINDOW + 1, h - WINDOW + 1);
    let mut acc = vec![0.0; ow * oh];
    for c in 0..3 {
        let xa: Vec<f64> = a.data().iter().map(|p| p[c] as f64).collect();
        let xb: Vec<f64> = b.data().iter().map(|p| p[c] as f64).collect();
        let aa: Vec<f64> = xa.iter().map(|v| v * v).collect();
        let bb: Vec<f64> = xb.iter().map(|v| v * v).collect();
        let ab: Vec<f64> = xa.iter().zip(&xb).map(|(p, q)| p * q).collect();
        let [mu_a, mu_b, e_aa, e_bb, e_ab] = [&xa, &xb, &aa, &bb, &ab].map(|s| filter_valid(s, w, h, &taps));
        for k in 0..ow * oh {
            let (ma, mb) = (mu_a[k], mu_b[k]);
            let var_a = e_aa[k] - ma * ma;
            let var_b = e_bb[k] - mb * mb;
            let cov = e_ab[k] - ma * mb;
            let num = (2.0 * ma * mb + C1) * (2.0 * cov + C2);
            let den = (ma * ma + mb * mb + C1) * (var_a + var_b + C2);
            acc[k] += num / den;
        }
    }
    Plane::from_vec(ow, oh, acc.into_iter().map(|s| s / 3.0).collect())
}

/// Mean SSIM over all windows and channels.
pub fn ssim(a: &RgbImage, b: &RgbImage) -> Result<f64> {
    let map = ssim_map(a, b)?;
    Ok(map.data().iter().sum::<f64>() / map.len() as f64)
}

/// Normalized masked SSIM: the SSIM map is zeroed outside the union of the
/// two garment masks and summed, then divided by the number of windows. This
/// equals the mean SSIM inside the union scaled by the union's area fraction.
pub fn nm_ssim(t: &RgbImage, gt: &RgbImage, warped_mask: &BinaryMask, gt_garment_mask: &BinaryMask) -> Result<f64> {
    check_dims(t.dims(), warped_mask.dims())?;
    check_dims(t.dims(), gt_garment_mask.dims())?;
    let map = ssim_map(t, gt)?;
    let union = warped_mask.union(gt_garment_mask)?;
    let mut sum = 0.0;
    for y in 0..map.height() {
        for x in 0..map.width() {
            if union.get(x + HALF, y + HALF) {
                sum += map.get(x, y);
            }
        }
    }
    Ok(sum / map.len() as f64)
}

/// Intersection over union; two empty masks agree perfectly.
pub fn miou(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    let (inter, union) = overlap(a, b)?;
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

fn overlap(a: &BinaryMask, b: &BinaryMask) -> Result<(usize, usize)> {
    check_dims(a.dims(), b.dims())?;
    let mut inter = 0;
    let mut union = 0;
    for (&p, &q) in a.data().iter().zip(b.data()) {
        inter += (p && q) as usize;
        union += (p || q) as usize;
    }
    Ok((inter, union))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct PixelCounts {
    pub garment: usize,
    pub union: usize,
    pub total: usize,
}

/// Metrics of one prediction/ground-truth pair.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricReport {
    pub ssim: f64,
    pub nm_ssim: Option<f64>,
    pub miou: Option<f64>,
    pub pixel_counts: PixelCounts,
}

/// Garment masks for the mask-aware metrics.
#[derive(Clone, Copy, Debug)]
pub struct GarmentMasks<'a> {
    pub warped: &'a BinaryMask,
    pub ground_truth: &'a BinaryMask,
}

pub fn evaluate_pair(pred: &RgbImage, gt: &RgbImage, masks: Option<GarmentMasks<'_>>) -> Result<MetricReport> {
    let ssim = ssim(pred, gt)?;
    let total = pred.len();
    let Some(m) = masks else {
        return Ok(MetricReport {
            ssim,
            nm_ssim: None,
            miou: None,
            pixel_counts: PixelCounts {
                total,
                ..Default::default()
            },
        });
    };
    let (_, union) = overlap(m.warped, m.ground_truth)?;
    Ok(MetricReport {
        ssim,
        nm_ssim: Some(nm_ssim(pred, gt, m.warped, m.ground_truth)?),
        miou: Some(miou(m.warped, m.ground_truth)?),
        pixel_counts: PixelCounts {
            garment: m.ground_truth.count(),
            union,
            total,
        },
    })
}

/// Neumaier-compensated running sum.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn total(&self) -> f64 {
        self.sum + self.compensation
    }
}

/// Definition string stored alongside `nm_ssim` in dataset reports.
pub const NM_SSIM_NORMALIZATION: &str = "sum of SSIM map over union(warped, gt garment) / number of SSIM windows";

/// Dataset-level means of per-pair metrics.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DatasetReport {
    pub pairs: usize,
    pub ssim: f64,
    pub nm_ssim: Option<f64>,
    pub miou: Option<f64>,
    pub nm_ssim_normalization: &'static str,
    pub pixel_counts: PixelCounts,
}

/// Averages per-pair reports. Mask metrics are reported only when every pair
/// has them.
pub fn aggregate(reports: &[MetricReport]) -> Result<DatasetReport> {
    if reports.is_empty() {
        return Err(Error::InvalidParam("no image pairs to evaluate".into()));
    }
    let n = reports.len() as f64;
    let mean = |values: &mut dyn Iterator<Item = f64>| {
        let mut s = CompensatedSum::default();
        values.for_each(|v| s.add(v));
        s.total() / n
    };
    let all = |f: fn(&MetricReport) -> Option<f64>| -> Option<f64> {
        let vals: Option<Vec<f64>> = reports.iter().map(f).collect();
        vals.map(|v| mean(&mut v.into_iter()))
    };
    let mut counts = PixelCounts::default();
    for r in reports {
        counts.garment += r.pixel_counts.garment;
        counts.union += r.pixel_counts.union;
        counts.total += r.pixel_counts.total;
    }
    Ok(DatasetReport {
        pairs: reports.len(),
        ssim: mean(&mut reports.iter().map(|r| r.ssim)),
        nm_ssim: all(|r| r.nm_ssim),
        miou: all(|r| r.miou),
        nm_ssim_normalization: NM_SSIM_NORMALIZATION,
        pixel_counts: counts,
    })
}
