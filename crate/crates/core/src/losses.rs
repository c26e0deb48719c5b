//! Forward reference implementations of the training objectives that do not
//! need a pretrained feature network, plus the final blending formula.

use crate::error::{Error, Result};
use crate::iuv::{flow_warp, FlowField, NUM_PARTS};
use crate::raster::{check_dims, BinaryMask, LabelPlane, Plane, RealPlane, RgbImage};
use crate::warp::WarpResult;

/// Background plus the 24 body parts.
pub const NUM_CLASSES: usize = NUM_PARTS + 1;

/// Clamp applied to probabilities before taking logarithms in [`bce`].
pub const BCE_EPS: f64 = 1e-7;

/// Raw per-class scores for every pixel, one plane per class.
#[derive(Clone, Debug, PartialEq)]
pub struct LogitStack {
    planes: Vec<RealPlane>,
}

impl LogitStack {
    pub fn new(planes: Vec<RealPlane>) -> Result<Self> {
        if planes.len() != NUM_CLASSES {
            return Err(Error::format(
                "logits",
                format!("expected {NUM_CLASSES} class planes, found {}", planes.len()),
            ));
        }
        for p in &planes[1..] {
            check_dims(planes[0].dims(), p.dims())?;
        }
        if planes.iter().flat_map(|p| p.data()).any(|v| !v.is_finite()) {
            return Err(Error::format("logits", "non-finite value"));
        }
        Ok(LogitStack { planes })
    }

    /// Class-major `data` of length `25 * width * height`.
    pub fn from_class_major(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        let n = width * height;
        if data.len() != NUM_CLASSES * n {
            return Err(Error::format(
                "logits",
                format!("expected {} values, found {}", NUM_CLASSES * n, data.len()),
            ));
        }
        let planes = data
            .chunks_exact(n.max(1))
            .map(|c| Plane::from_vec(width, height, c.to_vec()))
            .collect::<Result<_>>()?;
        LogitStack::new(planes)
    }

    pub fn dims(&self) -> (usize, usize) {
        self.planes[0].dims()
    }

    pub fn plane(&self, class: usize) -> &RealPlane {
        &self.planes[class]
    }

    #[inline]
    pub fn logit(&self, class: usize, k: usize) -> f64 {
        self.planes[class].data()[k]
    }

    /// Warps every class plane bilinearly.
    pub fn warp(&self, flow: &FlowField) -> Result<Self> {
        let planes = self.planes.iter().map(|p| flow_warp(p, flow)).collect::<Result<_>>()?;
        Ok(LogitStack { planes })
    }
}

/// Non-negative finite loss value.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct ScalarLoss(f64);

impl ScalarLoss {
    fn new(value: f64) -> Result<Self> {
        if value.is_finite() {
            Ok(ScalarLoss(value.max(0.0)))
        } else {
            Err(Error::format("loss", format!("non-finite value {value}")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

fn check_labels(target: &LabelPlane) -> Result<()> {
    match target.data().iter().find(|&&l| l as usize >= NUM_CLASSES) {
        Some(l) => Err(Error::format("target", format!("label {l} outside 0..{NUM_CLASSES}"))),
        None => Ok(()),
    }
}

/// Mean negative log-softmax of the target class. With `ignore_background`,
/// pixels labeled 0 are left out; no counted pixel gives 0.
pub fn cross_entropy(logits: &LogitStack, target: &LabelPlane, ignore_background: bool) -> Result<ScalarLoss> {
    check_dims(logits.dims(), target.dims())?;
    check_labels(target)?;
    let mut total = 0.0;
    let mut count = 0usize;
    for (k, &t) in target.data().iter().enumerate() {
        if ignore_background && t == 0 {
            continue;
        }
        let max = (0..NUM_CLASSES).map(|c| logits.logit(c, k)).fold(f64::NEG_INFINITY, f64::max);
        let log_sum: f64 = (0..NUM_CLASSES).map(|c| (logits.logit(c, k) - max).exp()).sum::<f64>().ln() + max;
        total += log_sum - logits.logit(t as usize, k);
        count += 1;
    }
    ScalarLoss::new(if count == 0 { 0.0 } else { total / count as f64 })
}

/// Mean absolute difference, over `mask` when given. An empty mask gives 0.
pub fn l1(pred: &RealPlane, target: &RealPlane, mask: Option<&BinaryMask>) -> Result<ScalarLoss> {
    check_dims(pred.dims(), target.dims())?;
    if let Some(m) = mask {
        check_dims(pred.dims(), m.dims())?;
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for (k, (p, t)) in pred.data().iter().zip(target.data()).enumerate() {
        if mask.is_none_or(|m| m.data()[k]) {
            total += (p - t).abs();
            count += 1;
        }
    }
    ScalarLoss::new(if count == 0 { 0.0 } else { total / count as f64 })
}

/// Horizontal and vertical mean absolute differences of neighboring pixels.
pub fn total_variation_terms(plane: &RealPlane) -> Result<(f64, f64)> {
    let (w, h) = plane.dims();
    if w < 2 || h < 2 {
        return Err(Error::InvalidParam(format!(
            "total variation needs at least 2x2 pixels, got {w}x{h}"
        )));
    }
    let mut horizontal = 0.0;
    let mut vertical = 0.0;
    for y in 0..h {
        for x in 0..w {
            let p = plane.get(x, y);
            if x + 1 < w {
                horizontal += (plane.get(x + 1, y) - p).abs();
            }
            if y + 1 < h {
                vertical += (plane.get(x, y + 1) - p).abs();
            }
        }
    }
    Ok((
        horizontal / ((w - 1) * h) as f64,
        vertical / (w * (h - 1)) as f64,
    ))
}

/// Anisotropic total variation: the sum of the two directional means.
pub fn total_variation(plane: &RealPlane) -> Result<ScalarLoss> {
    let (h, v) = total_variation_terms(plane)?;
    ScalarLoss::new(h + v)
}

/// Mean binary cross entropy with predictions clamped to `[eps, 1 - eps]`.
pub fn bce(pred: &RealPlane, target: &BinaryMask) -> Result<ScalarLoss> {
    check_dims(pred.dims(), target.dims())?;
    let total: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| {
            let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
            if t {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    ScalarLoss::new(total / pred.len() as f64)
}

/// Mean squared blending weight.
pub fn l2_mask_reg(alpha: &RealPlane) -> Result<ScalarLoss> {
    ScalarLoss::new(alpha.data().iter().map(|a| a * a).sum::<f64>() / alpha.len() as f64)
}

/// `t = (1 - alpha) * t_hat + alpha * g_warp`, with `alpha` forced to 0 where the
/// warped garment is undefined.
pub fn blend(t_hat: &RgbImage, alpha: &RealPlane, g_warp: &WarpResult) -> Result<RgbImage> {
    check_dims(t_hat.dims(), alpha.dims())?;
    check_dims(t_hat.dims(), g_warp.image.dims())?;
    check_dims(t_hat.dims(), g_warp.validity.dims())?;
    let data = t_hat
        .data()
        .iter()
        .zip(alpha.data())
        .zip(g_warp.image.data().iter().zip(g_warp.validity.data()))
        .map(|((base, &a), (garment, &valid))| {
            let a = if valid { a } else { 0.0 };
            std::array::from_fn(|c| ((1.0 - a) * base[c] as f64 + a * garment[c] as f64) as f32)
        })
        .collect();
    Plane::from_vec(t_hat.width(), t_hat.height(), data)
}

/// Weights of the five IUV loss terms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IuvLossWeights {
    pub cls: f64,
    pub u: f64,
    pub v: f64,
    pub tv_u: f64,
    pub tv_v: f64,
}

impl Default for IuvLossWeights {
    fn default() -> Self {
        IuvLossWeights {
            cls: 1.0,
            u: 1.0,
            v: 1.0,
            tv_u: 1.0,
            tv_v: 1.0,
        }
    }
}

impl IuvLossWeights {
    pub fn from_slice(w: &[f64]) -> Result<Self> {
        match *w {
            [cls, u, v, tv_u, tv_v] => Ok(IuvLossWeights { cls, u, v, tv_u, tv_v }),
            _ => Err(Error::InvalidParam(format!("expected 5 loss weights, got {}", w.len()))),
        }
    }
}

/// Garment-DensePose predictions and their weak labels.
///
/// `*_warped` are the predictions after flow alignment with the person and
/// are compared with the masked person DensePose; `u_raw`/`v_raw` are the
/// unaligned predictions the smoothness terms act on.
#[derive(Clone, Copy, Debug)]
pub struct IuvLossInputs<'a> {
    pub i_logits_warped: &'a LogitStack,
    pub u_warped: &'a RealPlane,
    pub v_warped: &'a RealPlane,
    pub u_raw: &'a RealPlane,
    pub v_raw: &'a RealPlane,
    pub i_target: &'a LabelPlane,
    pub u_target: &'a RealPlane,
    pub v_target: &'a RealPlane,
}

/// Unweighted terms of the IUV loss and their weighted sum.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IuvLossBreakdown {
    pub cls: f64,
    pub l1_u: f64,
    pub l1_v: f64,
    pub tv_u: f64,
    pub tv_v: f64,
    pub total: f64,
}

/// Classification over all labels including background; L1 over labeled pixels
/// only; total variation on the unaligned U/V predictions.
pub fn l_iuv(inputs: &IuvLossInputs<'_>, weights: &IuvLossWeights) -> Result<IuvLossBreakdown> {
    let labeled = inputs.i_target.map(|l| l != 0);
    let cls = cross_entropy(inputs.i_logits_warped, inputs.i_target, false)?.value();
    let l1_u = l1(inputs.u_warped, inputs.u_target, Some(&labeled))?.value();
    let l1_v = l1(inputs.v_warped, inputs.v_target, Some(&labeled))?.value();
    let tv_u = total_variation(inputs.u_raw)?.value();
    let tv_v = total_variation(inputs.v_raw)?.value();
    let total =
        weights.cls * cls + weights.u * l1_u + weights.v * l1_v + weights.tv_u * tv_u + weights.tv_v * tv_v;
    Ok(IuvLossBreakdown {
        cls,
        l1_u,
        l1_v,
        tv_u,
        tv_v,
        total: ScalarLoss::new(total)?.value(),
    })
}
