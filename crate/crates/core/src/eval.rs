//! Pose reconstruction from the three heads and localization metrics.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::formats::fmt_f64;
use crate::data::Sample;
use crate::error::{Error, Result};
use crate::geometry::{nearest_anchor, quat_angle_deg, AnchorMap, Pose, Quat};
use crate::loss::confidences;
use crate::model::{self, Parameters, PosePrediction};
use crate::simworld::WorldSample;

/// Translation threshold of the accuracy metric (meters, exclusive).
pub const ACCURACY_MAX_TRANSLATION_M: f64 = 2.0;
/// Rotation threshold of the accuracy metric (degrees, exclusive).
pub const ACCURACY_MAX_ROTATION_DEG: f64 = 5.0;

/// How the horizontal position is read off the heads.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InferenceRule {
    /// Most confident anchor plus its own offset.
    #[default]
    Argmax,
    /// Confidence-weighted mean of `anchor_i + offset_i` over all anchors.
    Weighted,
}

/// Index of the largest value; the first one wins ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

pub fn reconstruct_pose(pred: &PosePrediction, map: &AnchorMap) -> Result<Pose> {
    reconstruct_pose_with(pred, map, InferenceRule::Argmax)
}

pub fn reconstruct_pose_with(pred: &PosePrediction, map: &AnchorMap, rule: InferenceRule) -> Result<Pose> {
    let n = map.len();
    if pred.logits.len() != n || pred.offsets.len() != n {
        return Err(Error::InvalidInput(format!(
            "prediction has {} anchors, map has {n}",
            pred.logits.len()
        )));
    }
    let c = confidences(&pred.logits);
    let [x, y] = match rule {
        InferenceRule::Argmax => {
            let j = argmax(&c);
            let a = map.anchors()[j];
            [a[0] + pred.offsets[j][0], a[1] + pred.offsets[j][1]]
        }
        InferenceRule::Weighted => {
            let mut xy = [0.0; 2];
            for ((ci, a), o) in c.iter().zip(map.anchors()).zip(&pred.offsets) {
                xy[0] += ci * (a[0] + o[0]);
                xy[1] += ci * (a[1] + o[1]);
            }
            xy
        }
    };
    let orientation = Quat::from_array(pred.orient_raw).normalized()?;
    Pose::new([x, y, pred.z], orientation)
}

/// Median; even lengths average the two middle values.
pub fn median(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidInput("median of an empty list".into()));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Ok(if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleError {
    pub frame_id: String,
    pub translation_m: f64,
    pub rotation_deg: f64,
    pub predicted_anchor: usize,
    pub nearest_anchor: usize,
}

impl SampleError {
    pub fn is_accurate(&self) -> bool {
        self.translation_m < ACCURACY_MAX_TRANSLATION_M && self.rotation_deg < ACCURACY_MAX_ROTATION_DEG
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub median_translation_m: f64,
    pub mean_translation_m: f64,
    pub median_rotation_deg: f64,
    pub accuracy_2m_5deg: f64,
    pub per_sample: Vec<SampleError>,
}

impl EvalReport {
    pub fn from_errors(per_sample: Vec<SampleError>) -> Result<Self> {
        if per_sample.is_empty() {
            return Err(Error::InvalidInput("cannot evaluate an empty test set".into()));
        }
        let t: Vec<f64> = per_sample.iter().map(|e| e.translation_m).collect();
        let r: Vec<f64> = per_sample.iter().map(|e| e.rotation_deg).collect();
        let hits = per_sample.iter().filter(|e| e.is_accurate()).count();
        Ok(EvalReport {
            median_translation_m: median(&t)?,
            mean_translation_m: t.iter().sum::<f64>() / t.len() as f64,
            median_rotation_deg: median(&r)?,
            accuracy_2m_5deg: hits as f64 / per_sample.len() as f64,
            per_sample,
        })
    }

    /// The headline metrics, one `key=value` per line.
    pub fn headline(&self) -> String {
        format!(
            "median_m={}\nmean_m={}\nmedian_deg={}\naccuracy={}\n",
            self.median_translation_m, self.mean_translation_m, self.median_rotation_deg, self.accuracy_2m_5deg
        )
    }

    /// Summary without the per-sample list, as pretty JSON.
    pub fn summary_json(&self) -> String {
        #[derive(Serialize)]
        struct Summary {
            median_translation_m: f64,
            mean_translation_m: f64,
            median_rotation_deg: f64,
            accuracy_2m_5deg: f64,
            samples: usize,
        }
        serde_json::to_string_pretty(&Summary {
            median_translation_m: self.median_translation_m,
            mean_translation_m: self.mean_translation_m,
            median_rotation_deg: self.median_rotation_deg,
            accuracy_2m_5deg: self.accuracy_2m_5deg,
            samples: self.per_sample.len(),
        })
        .expect("summary serializes")
    }

    pub fn per_sample_csv(&self) -> String {
        let mut s = String::from("frame_id,translation_m,rotation_deg,predicted_anchor,nearest_anchor\n");
        for e in &self.per_sample {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                e.frame_id,
                fmt_f64(e.translation_m),
                fmt_f64(e.rotation_deg),
                e.predicted_anchor,
                e.nearest_anchor
            );
        }
        s
    }
}

pub fn sample_error(
    pred: &PosePrediction,
    sample: &Sample,
    map: &AnchorMap,
    rule: InferenceRule,
) -> Result<SampleError> {
    let pose = reconstruct_pose_with(pred, map, rule)?;
    let p = pose.position;
    let g = sample.pose.position;
    let translation_m = ((p[0] - g[0]).powi(2) + (p[1] - g[1]).powi(2) + (p[2] - g[2]).powi(2)).sqrt();
    Ok(SampleError {
        frame_id: sample.frame_id.clone(),
        translation_m,
        rotation_deg: quat_angle_deg(pose.orientation, sample.pose.orientation)?,
        predicted_anchor: argmax(&pred.logits),
        nearest_anchor: nearest_anchor(g, map),
    })
}

pub fn evaluate(params: &Parameters, test: &[Sample], map: &AnchorMap) -> Result<EvalReport> {
    evaluate_with(params, test, map, InferenceRule::Argmax)
}

pub fn evaluate_with(params: &Parameters, test: &[Sample], map: &AnchorMap, rule: InferenceRule) -> Result<EvalReport> {
    if test.is_empty() {
        return Err(Error::InvalidInput("cannot evaluate an empty test set".into()));
    }
    if params.spec().num_anchors != map.len() {
        return Err(Error::InvalidInput(format!(
            "network predicts {} anchors, map has {}",
            params.spec().num_anchors,
            map.len()
        )));
    }
    let errors = test
        .iter()
        .map(|s| {
            let pred = model::forward(params, &s.feature)?;
            sample_error(&pred, s, map, rule)
        })
        .collect::<Result<Vec<_>>>()?;
    EvalReport::from_errors(errors)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscoveryStats {
    /// Test frames whose nearest anchor carries a landmark that is not in view.
    pub qualifying: usize,
    /// Qualifying frames whose chosen anchor carries a landmark that is in view.
    pub discovered: usize,
    pub rate: f64,
}

/// Discovery rate for an arbitrary anchor chooser.
///
/// `colocated[i]` names the landmark sitting on anchor `i`, if any.
pub fn discovery_rate_with<F>(
    samples: &[WorldSample],
    map: &AnchorMap,
    colocated: &[Option<u32>],
    mut choose: F,
) -> Result<DiscoveryStats>
where
    F: FnMut(&WorldSample) -> Result<usize>,
{
    if colocated.len() != map.len() {
        return Err(Error::InvalidInput(
            "co-location table does not match the anchor map".into(),
        ));
    }
    let mut qualifying = 0;
    let mut discovered = 0;
    for s in samples {
        let nearest = nearest_anchor(s.pose.position, map);
        let Some(lm) = colocated[nearest] else { continue };
        if s.visible_set.contains(&lm) {
            continue;
        }
        qualifying += 1;
        let chosen = choose(s)?;
        if let Some(Some(c)) = colocated.get(chosen) {
            if s.visible_set.contains(c) {
                discovered += 1;
            }
        }
    }
    if qualifying == 0 {
        return Err(Error::UndefinedRate(
            "no test frame has an occluded landmark on its nearest anchor".into(),
        ));
    }
    Ok(DiscoveryStats {
        qualifying,
        discovered,
        rate: discovered as f64 / qualifying as f64,
    })
}

/// Discovery rate of a trained network, choosing the most confident anchor.
pub fn discovery_rate(
    params: &Parameters,
    samples: &[WorldSample],
    map: &AnchorMap,
    colocated: &[Option<u32>],
) -> Result<DiscoveryStats> {
    discovery_rate_with(samples, map, colocated, |s| {
        Ok(argmax(&model::forward(params, &s.feature)?.logits))
    })
}
