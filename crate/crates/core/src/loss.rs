//! Multi-task loss: confidence-weighted offset regression, absolute height and
//! normalized orientation regression, and an optional nearest-anchor
//! cross-entropy, combined with scalar weights.
//!
//! Every term comes with its analytic gradient with respect to the raw
//! [`PosePrediction`]. The softmax confidences are not detached in the offset
//! term, so the classifier is trained by the offset residuals alone when the
//! cross-entropy is switched off.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{OffsetTable, Quat};
use crate::model::{PosePrediction, PredictionGrad};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    /// Cross-entropy weight.
    pub alpha1: f64,
    /// Offset weight.
    pub alpha2: f64,
    /// Height + orientation weight.
    pub alpha3: f64,
    pub use_cross_entropy: bool,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            alpha1: 2.0,
            alpha2: 10.0,
            alpha3: 1.0,
            use_cross_entropy: false,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha1", self.alpha1),
            ("alpha2", self.alpha2),
            ("alpha3", self.alpha3),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidSpec(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Per-term values of the combined loss.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub offset_term: f64,
    pub absolute_term: f64,
    pub ce_term: f64,
    pub total: f64,
}

/// Ground truth for one sample, as seen by the loss.
#[derive(Clone, Copy, Debug)]
pub struct Target<'a> {
    pub offsets: &'a OffsetTable,
    pub z: f64,
    pub orientation: Quat,
    /// Index of the nearest anchor, the cross-entropy label.
    pub nearest: usize,
}

/// Softmax of the logits, shifted by the maximum.
pub fn confidences(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut c: Vec<f64> = logits.iter().map(|&l| (l - m).exp()).collect();
    let s: f64 = c.iter().sum();
    for v in &mut c {
        *v /= s;
    }
    c
}

fn check_anchors(pred: &PosePrediction, gt: &OffsetTable) -> Result<()> {
    let n = pred.logits.len();
    if pred.offsets.len() != n || gt.len() != n {
        return Err(Error::InvalidInput(format!(
            "anchor count mismatch: {} logits, {} predicted offsets, {} ground-truth offsets",
            n,
            pred.offsets.len(),
            gt.len()
        )));
    }
    Ok(())
}

fn squared_residuals(pred: &PosePrediction, gt: &OffsetTable) -> Vec<f64> {
    pred.offsets
        .iter()
        .zip(gt.entries())
        .map(|(p, g)| {
            let dx = g[0] - p[0];
            let dy = g[1] - p[1];
            dx * dx + dy * dy
        })
        .collect()
}

/// `sum_i C_i * [(X_i - Xh_i)^2 + (Y_i - Yh_i)^2]` with `C = softmax(logits)`.
pub fn offset_loss(pred: &PosePrediction, gt: &OffsetTable) -> Result<f64> {
    check_anchors(pred, gt)?;
    let c = confidences(&pred.logits);
    Ok(c.iter().zip(squared_residuals(pred, gt)).map(|(c, r)| c * r).sum())
}

/// Offset loss and its gradient, accumulated into `grad` scaled by `scale`.
fn offset_loss_grad(pred: &PosePrediction, gt: &OffsetTable, scale: f64, grad: &mut PredictionGrad) -> Result<f64> {
    check_anchors(pred, gt)?;
    let c = confidences(&pred.logits);
    let r = squared_residuals(pred, gt);
    let loss: f64 = c.iter().zip(&r).map(|(c, r)| c * r).sum();
    for i in 0..c.len() {
        // d/dl_i sum_k c_k r_k = c_i (r_i - L)
        grad.logits[i] += scale * c[i] * (r[i] - loss);
        let g = gt.entries()[i];
        let p = pred.offsets[i];
        grad.offsets[i][0] += scale * 2.0 * c[i] * (p[0] - g[0]);
        grad.offsets[i][1] += scale * 2.0 * c[i] * (p[1] - g[1]);
    }
    Ok(loss)
}

fn orient_norm(pred: &PosePrediction) -> Result<f64> {
    let n = pred.orient_raw.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(n.is_finite() && n > 1e-12) {
        return Err(Error::DegenerateOrientation { norm: n });
    }
    Ok(n)
}

/// `(z - zh)^2 + || q - P / ||P|| ||^2`. Not invariant under `q -> -q`.
pub fn absolute_loss(pred: &PosePrediction, gt_z: f64, gt_orient: Quat) -> Result<f64> {
    let n = orient_norm(pred)?;
    let q = gt_orient.to_array();
    let dz = gt_z - pred.z;
    let orient: f64 = (0..4).map(|k| (q[k] - pred.orient_raw[k] / n).powi(2)).sum();
    Ok(dz * dz + orient)
}

fn absolute_loss_grad(
    pred: &PosePrediction,
    gt_z: f64,
    gt_orient: Quat,
    scale: f64,
    grad: &mut PredictionGrad,
) -> Result<f64> {
    let n = orient_norm(pred)?;
    let q = gt_orient.to_array();
    let u: [f64; 4] = std::array::from_fn(|k| pred.orient_raw[k] / n);
    let dz = gt_z - pred.z;
    let orient: f64 = (0..4).map(|k| (q[k] - u[k]).powi(2)).sum();
    grad.z += scale * -2.0 * dz;
    // Project the gradient w.r.t. the unit vector onto its tangent space.
    let gu: [f64; 4] = std::array::from_fn(|k| 2.0 * (u[k] - q[k]));
    let radial: f64 = (0..4).map(|k| u[k] * gu[k]).sum();
    for k in 0..4 {
        grad.orient_raw[k] += scale * (gu[k] - u[k] * radial) / n;
    }
    Ok(dz * dz + orient)
}

/// `-log softmax(logits)[nearest]`, evaluated without exponentiating large values.
pub fn cross_entropy_loss(logits: &[f64], nearest: usize) -> Result<f64> {
    if nearest >= logits.len() {
        return Err(Error::InvalidInput(format!(
            "label {nearest} out of range for {} anchors",
            logits.len()
        )));
    }
    let (top, m) = argmax(logits);
    let rest: f64 = logits
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != top)
        .map(|(_, &l)| (l - m).exp())
        .sum();
    Ok((m - logits[nearest]) + rest.ln_1p())
}

fn argmax(v: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, &x) in v.iter().enumerate() {
        if x > best.1 {
            best = (i, x);
        }
    }
    best
}

/// Weighted total and its gradient with respect to the prediction.
pub fn total_loss(
    pred: &PosePrediction,
    target: &Target<'_>,
    weights: &LossWeights,
) -> Result<(LossBreakdown, PredictionGrad)> {
    let mut grad = PosePrediction::zeros(pred.logits.len());
    let offset_term = offset_loss_grad(pred, target.offsets, weights.alpha2, &mut grad)?;
    let absolute_term = absolute_loss_grad(pred, target.z, target.orientation, weights.alpha3, &mut grad)?;
    let ce_term = cross_entropy_loss(&pred.logits, target.nearest)?;
    let mut total = weights.alpha2 * offset_term + weights.alpha3 * absolute_term;
    if weights.use_cross_entropy {
        total += weights.alpha1 * ce_term;
        let c = confidences(&pred.logits);
        for (i, ci) in c.iter().enumerate() {
            let onehot = if i == target.nearest { 1.0 } else { 0.0 };
            grad.logits[i] += weights.alpha1 * (ci - onehot);
        }
    }
    Ok((
        LossBreakdown {
            offset_term,
            absolute_term,
            ce_term,
            total,
        },
        grad,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pred_with(logits: Vec<f64>, offsets: Vec<[f64; 2]>) -> PosePrediction {
        PosePrediction {
            logits,
            offsets,
            z: 0.0,
            orient_raw: [1.0, 0.0, 0.0, 0.0],
        }
    }

    #[test]
    fn softmax_cases() {
        assert_eq!(confidences(&[0.0, 0.0]), vec![0.5, 0.5]);
        for c in [-300.0, 0.0, 7.5, 1e5] {
            let s = confidences(&[c, c, c]);
            assert!(s.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));
        }
        let s = confidences(&[1000.0, 0.0]);
        assert_eq!(s[0], 1.0);
        assert!(s[1] >= 0.0 && s[1] < 1e-300);
    }

    #[test]
    fn hand_evaluated_offset_loss() {
        let gt = OffsetTable(vec![[1.0, 0.0], [0.0, 2.0]]);
        let p = pred_with(vec![0.0, 0.0], vec![[0.0, 0.0], [0.0, 0.0]]);
        assert!((offset_loss(&p, &gt).unwrap() - 2.5).abs() < 1e-15);
    }

    #[test]
    fn one_hot_confidence_selects_single_anchor() {
        let gt = OffsetTable(vec![[1.0, -2.0], [3.0, 0.5], [-4.0, 4.0]]);
        let offsets = vec![[0.5, 0.5], [2.0, 2.0], [0.0, 0.0]];
        let p = pred_with(vec![0.0, 40.0, 0.0], offsets);
        let expected = (3.0f64 - 2.0).powi(2) + (0.5f64 - 2.0).powi(2);
        assert!((offset_loss(&p, &gt).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn perfect_offsets_zero_loss() {
        let gt = OffsetTable(vec![[1.0, -2.0], [3.0, 0.5]]);
        let p = pred_with(vec![0.3, -1.0], gt.0.clone());
        assert_eq!(offset_loss(&p, &gt).unwrap(), 0.0);
    }

    #[test]
    fn anchor_mismatch_is_an_error() {
        let gt = OffsetTable(vec![[1.0, -2.0]]);
        let p = pred_with(vec![0.0, 0.0], vec![[0.0; 2]; 2]);
        assert!(matches!(offset_loss(&p, &gt), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn absolute_loss_cases() {
        let q = Quat::new(0.5, -0.5, 0.5, 0.5);
        let mut p = pred_with(vec![0.0], vec![[0.0; 2]]);
        p.z = 1.25;
        p.orient_raw = q.to_array().map(|v| 3.7 * v);
        assert!(absolute_loss(&p, 1.25, q).unwrap().abs() < 1e-15);
        p.orient_raw = (-q).to_array();
        assert!((absolute_loss(&p, 1.25, q).unwrap() - 4.0).abs() < 1e-15);
        p.orient_raw = [0.0; 4];
        assert!(matches!(
            absolute_loss(&p, 0.0, q),
            Err(Error::DegenerateOrientation { .. })
        ));
    }

    #[test]
    fn cross_entropy_cases() {
        assert!(cross_entropy_loss(&[0.0, 40.0, 0.0], 1).unwrap() < 1e-15);
        assert!((cross_entropy_loss(&[2.0; 4], 3).unwrap() - 4f64.ln()).abs() < 1e-15);
        assert!(cross_entropy_loss(&[1000.0, 0.0], 1).unwrap().is_finite());
        assert!(matches!(cross_entropy_loss(&[0.0; 3], 3), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn weights_isolate_terms() {
        let gt = OffsetTable(vec![[1.0, 2.0], [-1.0, 0.0]]);
        let mut p = pred_with(vec![0.2, -0.4], vec![[0.0, 1.0], [1.0, 1.0]]);
        p.z = 0.7;
        p.orient_raw = [0.9, 0.1, 0.0, 0.3];
        let target = Target {
            offsets: &gt,
            z: 0.1,
            orientation: Quat::IDENTITY,
            nearest: 1,
        };
        let ce_only = LossWeights {
            alpha1: 1.7,
            alpha2: 0.0,
            alpha3: 0.0,
            use_cross_entropy: true,
        };
        let (b, _) = total_loss(&p, &target, &ce_only).unwrap();
        assert!((b.total - 1.7 * b.ce_term).abs() < 1e-12);

        let off = LossWeights {
            use_cross_entropy: false,
            ..LossWeights::default()
        };
        let (b, _) = total_loss(&p, &target, &off).unwrap();
        assert!((b.total - (10.0 * b.offset_term + b.absolute_term)).abs() < 1e-12);
        assert!(LossWeights { alpha2: -1.0, ..off }.validate().is_err());
    }
}
