//! Reference kernels for every training-loss term.
//!
//! All reductions run in `f64` in row-major order so results are
//! reproducible bit for bit.

use crate::bending::{bending_loss, BendingParams};
use crate::error::{Error, Result};
use crate::imgcore::{BinaryMask, FloatMap, FloatMapPair, LabelMap};
use crate::pipeline::{hv_ground_truth, identify_overlapped};

/// Lower clamp applied to probabilities before taking the log.
pub const EPSILON: f64 = 1e-7;

fn check_probabilities(pred: &FloatMap) -> Result<()> {
    if let Some(i) = pred.as_slice().iter().position(|&v| !(0.0..=1.0).contains(&v)) {
        let p = pred.point_of(i);
        return Err(Error::InvalidArgument(format!("probability {} at {p} outside [0, 1]", pred.as_slice()[i])));
    }
    Ok(())
}

/// `-(1/n) sum truth_i * ln(max(pred_i, EPSILON))`.
pub fn cross_entropy(pred: &FloatMap, truth: &BinaryMask) -> Result<f64> {
    pred.same_dims(truth)?;
    check_probabilities(pred)?;
    let mut sum = 0.0;
    for (&p, &t) in pred.as_slice().iter().zip(truth.as_slice()) {
        if t {
            sum += (p as f64).max(EPSILON).ln();
        }
    }
    Ok(-sum / pred.len() as f64)
}

/// `1 - 2 sum(p t) / (sum p + sum t)`; 0 when both maps are empty.
pub fn dice_loss(pred: &FloatMap, truth: &BinaryMask) -> Result<f64> {
    pred.same_dims(truth)?;
    check_probabilities(pred)?;
    let (mut inter, mut sp, mut st) = (0.0, 0.0, 0.0);
    for (&p, &t) in pred.as_slice().iter().zip(truth.as_slice()) {
        let p = p as f64;
        if t {
            inter += p;
            st += 1.0;
        }
        sp += p;
    }
    if sp + st == 0.0 {
        return Ok(0.0);
    }
    Ok(1.0 - 2.0 * inter / (sp + st))
}

/// Instance-branch loss: cross-entropy plus Dice.
pub fn inst_loss(pred: &FloatMap, truth: &BinaryMask) -> Result<f64> {
    Ok(cross_entropy(pred, truth)? + dice_loss(pred, truth)?)
}

fn check_pairs(d: &FloatMapPair, d_star: &FloatMapPair) -> Result<()> {
    if d.dims() != d_star.dims() {
        return Err(Error::mismatch(d.dims(), d_star.dims()));
    }
    Ok(())
}

/// Mean squared difference over both channels jointly (`n = 2 H W`).
pub fn mse(d: &FloatMapPair, d_star: &FloatMapPair) -> Result<f64> {
    check_pairs(d, d_star)?;
    let mut sum = 0.0;
    for i in 0..d.horizontal().len() {
        let dh = d.horizontal().as_slice()[i] as f64 - d_star.horizontal().as_slice()[i] as f64;
        let dv = d.vertical().as_slice()[i] as f64 - d_star.vertical().as_slice()[i] as f64;
        sum += dh * dh + dv * dv;
    }
    Ok(sum / (2 * d.horizontal().len()) as f64)
}

/// Mean squared gradient error over `region`.
///
/// With `e = D - D*`, the per-pixel gradient is `(de_h/dx, de_v/dy)` using
/// central differences and replicate borders; the result is the mean of its
/// squared norm over the region pixels. An empty region gives 0.
pub fn msge(d: &FloatMapPair, d_star: &FloatMapPair, region: &BinaryMask) -> Result<f64> {
    check_pairs(d, d_star)?;
    d.horizontal().same_dims(region)?;
    let (h, w) = d.dims();
    let diff = |a: &FloatMap, b: &FloatMap, x: isize, y: isize| a.get_clamped(x, y) as f64 - b.get_clamped(x, y) as f64;
    let mut sum = 0.0;
    let mut count = 0usize;
    for y in 0..h as isize {
        for x in 0..w as isize {
            if !region.get(x as usize, y as usize) {
                continue;
            }
            let (dh, sh) = (d.horizontal(), d_star.horizontal());
            let (dv, sv) = (d.vertical(), d_star.vertical());
            let gx = (diff(dh, sh, x + 1, y) - diff(dh, sh, x - 1, y)) / 2.0;
            let gy = (diff(dv, sv, x, y + 1) - diff(dv, sv, x, y - 1)) / 2.0;
            sum += gx * gx + gy * gy;
            count += 1;
        }
    }
    if count == 0 {
        log::warn!("gradient loss over an empty region is defined as 0");
        return Ok(0.0);
    }
    Ok(sum / count as f64)
}

/// Distance-map loss `mse + 2 msge`.
pub fn dist_loss(d: &FloatMapPair, d_star: &FloatMapPair, region: &BinaryMask) -> Result<f64> {
    Ok(mse(d, d_star)? + 2.0 * msge(d, d_star, region)?)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossBreakdown {
    /// Cross-entropy part of `l_inst`, when computed from maps.
    pub l_ce: Option<f64>,
    /// Dice part of `l_inst`, when computed from maps.
    pub l_dice: Option<f64>,
    pub l_inst: f64,
    pub l_hv: f64,
    pub l_ohv: f64,
    pub l_be: f64,
    pub alpha: f64,
    /// `l_inst + l_hv + l_ohv + alpha * l_be`, summed in that order.
    pub total: f64,
}

impl LossBreakdown {
    /// `(key, value)` pairs sorted by key; absent parts are skipped.
    pub fn fields(&self) -> Vec<(&'static str, f64)> {
        [
            ("alpha", Some(self.alpha)),
            ("l_be", Some(self.l_be)),
            ("l_ce", self.l_ce),
            ("l_dice", self.l_dice),
            ("l_hv", Some(self.l_hv)),
            ("l_inst", Some(self.l_inst)),
            ("l_ohv", Some(self.l_ohv)),
            ("total", Some(self.total)),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.map(|v| (k, v)))
        .collect()
    }
}

/// Combines sub-losses into the total loss. Every input must be finite.
pub fn total_loss(l_inst: f64, l_hv: f64, l_ohv: f64, l_be: f64, alpha: f64) -> Result<LossBreakdown> {
    for (name, v) in [("l_inst", l_inst), ("l_hv", l_hv), ("l_ohv", l_ohv), ("l_be", l_be), ("alpha", alpha)] {
        if !v.is_finite() {
            return Err(Error::InvalidArgument(format!("{name} is not finite ({v})")));
        }
    }
    Ok(LossBreakdown {
        l_ce: None,
        l_dice: None,
        l_inst,
        l_hv,
        l_ohv,
        l_be,
        alpha,
        total: l_inst + l_hv + l_ohv + alpha * l_be,
    })
}

/// Network outputs for one image.
#[derive(Clone, Debug)]
pub struct Prediction<'a> {
    pub prob: &'a FloatMap,
    pub hv: &'a FloatMapPair,
    pub ohv: &'a FloatMapPair,
    /// Instance map whose contours enter the bending term.
    pub labels: &'a LabelMap,
}

/// Evaluates every loss term of a prediction against a ground-truth label
/// map. Distance targets are built with [`hv_ground_truth`]; the HV
/// gradient term is restricted to the nuclei foreground and the OHV one to
/// the overlapped-nuclei foreground, unless `whole_image_gradient` is set.
pub fn compute_loss(
    pred: &Prediction<'_>,
    gt: &LabelMap,
    params: &BendingParams,
    whole_image_gradient: bool,
) -> Result<LossBreakdown> {
    params.validate()?;
    pred.prob.same_dims(gt)?;
    pred.labels.same_dims(gt)?;
    let truth = gt.foreground();
    let overlapped = identify_overlapped(gt);
    let targets = hv_ground_truth(gt, &overlapped);
    let (all_region, ohv_region) = if whole_image_gradient {
        let all = gt.map(|_| true);
        (all.clone(), all)
    } else {
        (truth.clone(), gt.map(|v| overlapped.contains(&v)))
    };
    let l_ce = cross_entropy(pred.prob, &truth)?;
    let l_dice = dice_loss(pred.prob, &truth)?;
    let l_hv = dist_loss(pred.hv, &targets.all_nuclei, &all_region)?;
    let l_ohv = dist_loss(pred.ohv, &targets.overlapped_only, &ohv_region)?;
    let l_be = bending_loss(pred.labels, params).loss;
    let mut out = total_loss(l_ce + l_dice, l_hv, l_ohv, l_be, params.alpha)?;
    out.l_ce = Some(l_ce);
    out.l_dice = Some(l_dice);
    Ok(out)
}
