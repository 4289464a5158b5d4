//! Randomized correctness checks shared by the focused test files and the
//! acceptance gate. Each returns a summary so callers pick their own bound.

use anchorloc::geometry::{nearest_anchor, relative_offsets, AnchorMap};
use anchorloc::loss::{absolute_loss, cross_entropy_loss, offset_loss, total_loss, LossWeights, Target};
use anchorloc::model::{backward, forward, init, Activation, Parameters, PosePrediction};
use anchorloc::simworld::segments_intersect;
use rand::Rng;

use super::*;

/// Finite-difference step.
pub const FD_STEP: f64 = 1e-5;
/// Gradients smaller than this are compared in absolute terms.
pub const FD_FLOOR: f64 = 1e-3;

#[derive(Clone, Copy, Debug, Default)]
pub struct GradCheck {
    pub draws: usize,
    pub entries: usize,
    pub max_rel_err: f64,
}

impl GradCheck {
    fn record(&mut self, analytic: f64, fd: f64) {
        self.entries += 1;
        self.max_rel_err = self.max_rel_err.max(rel_err(analytic, fd, FD_FLOOR));
    }
}

pub fn weights(alpha1: f64, alpha2: f64, alpha3: f64, ce: bool) -> LossWeights {
    LossWeights {
        alpha1,
        alpha2,
        alpha3,
        use_cross_entropy: ce,
    }
}

/// Each loss term alone, then two full combinations.
pub fn weight_configs() -> [(&'static str, LossWeights); 5] {
    [
        ("offset", weights(0.0, 1.0, 0.0, false)),
        ("absolute", weights(0.0, 0.0, 1.0, false)),
        ("cross-entropy", weights(1.0, 0.0, 0.0, true)),
        ("total", weights(2.0, 10.0, 1.0, true)),
        ("total without ce", weights(2.0, 10.0, 1.0, false)),
    ]
}

/// Loss value recomputed from the per-term value functions.
pub fn loss_value(pred: &PosePrediction, t: &Target<'_>, w: &LossWeights) -> f64 {
    let mut v =
        w.alpha2 * offset_loss(pred, t.offsets).unwrap() + w.alpha3 * absolute_loss(pred, t.z, t.orientation).unwrap();
    if w.use_cross_entropy {
        v += w.alpha1 * cross_entropy_loss(&pred.logits, t.nearest).unwrap();
    }
    v
}

/// Analytic loss gradients against central differences, for every entry of
/// the prediction and every weight configuration.
pub fn loss_gradient_check(seed: u64, draws: usize) -> GradCheck {
    let mut rng = rng(seed);
    let mut out = GradCheck {
        draws,
        ..GradCheck::default()
    };
    for _ in 0..draws {
        let n = rng.random_range(1..8);
        let pred = random_prediction(&mut rng, n);
        let offsets = random_offsets(&mut rng, n);
        let target = Target {
            offsets: &offsets,
            z: rng.random_range(-2.0..2.0),
            orientation: random_unit_quat(&mut rng),
            nearest: rng.random_range(0..n),
        };
        for (_, w) in weight_configs() {
            let (_, grad) = total_loss(&pred, &target, &w).unwrap();
            let analytic = grad.to_flat();
            let x = pred.to_flat();
            let mut f = |v: &[f64]| loss_value(&PosePrediction::from_flat(n, v).unwrap(), &target, &w);
            for (i, a) in analytic.iter().enumerate() {
                out.record(*a, central_diff(&mut f, &x, i, FD_STEP));
            }
        }
    }
    out
}

/// Analytic parameter gradients of the full loss against central
/// differences on random networks. Draws that put a relu unit within reach
/// of its kink, or the orientation output near zero, are redrawn.
pub fn parameter_gradient_check(seed: u64, draws: usize) -> GradCheck {
    let mut rng = rng(seed);
    let w = weights(2.0, 10.0, 1.0, true);
    let mut out = GradCheck {
        draws,
        ..GradCheck::default()
    };
    let mut checked = 0;
    while checked < draws {
        let spec = random_spec(&mut rng);
        let mut params = init(&spec).unwrap();
        for v in params.values_mut() {
            *v += rng.random_range(-0.1..0.1);
        }
        let feature = random_vec(&mut rng, spec.input_dim, 1.5);
        let (_, pre) = reference_forward(&spec, params.values(), &feature);
        if spec.activation == Activation::Relu && pre.iter().any(|p| p.abs() < 1e-3) {
            continue;
        }
        let pred = forward(&params, &feature).unwrap();
        if pred.orient_raw.iter().map(|v| v * v).sum::<f64>().sqrt() < 0.1 {
            continue;
        }
        let offsets = random_offsets(&mut rng, spec.num_anchors);
        let target = Target {
            offsets: &offsets,
            z: rng.random_range(-1.0..1.0),
            orientation: random_unit_quat(&mut rng),
            nearest: rng.random_range(0..spec.num_anchors),
        };
        let (_, upstream) = total_loss(&pred, &target, &w).unwrap();
        let analytic = backward(&params, &feature, &upstream).unwrap();
        let x = params.values().to_vec();
        let mut f = |v: &[f64]| {
            let p = Parameters::from_vec(spec.clone(), v.to_vec()).unwrap();
            loss_value(&forward(&p, &feature).unwrap(), &target, &w)
        };
        for (i, a) in analytic.iter().enumerate() {
            out.record(*a, central_diff(&mut f, &x, i, FD_STEP));
        }
        checked += 1;
    }
    out
}

/// Exact integer orientation test.
fn orient(a: (i64, i64), b: (i64, i64), c: (i64, i64)) -> i64 {
    ((b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0)).signum()
}

fn on_segment(a: (i64, i64), b: (i64, i64), p: (i64, i64)) -> bool {
    orient(a, b, p) == 0 && p.0 >= a.0.min(b.0) && p.0 <= a.0.max(b.0) && p.1 >= a.1.min(b.1) && p.1 <= a.1.max(b.1)
}

/// Closed-segment intersection in exact integer arithmetic, collinear and
/// touching cases spelled out.
pub fn intersect_oracle(p1: (i64, i64), p2: (i64, i64), q1: (i64, i64), q2: (i64, i64)) -> bool {
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    if d1 * d2 < 0 && d3 * d4 < 0 {
        return true;
    }
    on_segment(q1, q2, p1) || on_segment(q1, q2, p2) || on_segment(p1, p2, q1) || on_segment(p1, p2, q2)
}

#[derive(Clone, Copy, Debug, Default)]
pub struct OracleCheck {
    pub cases: usize,
    pub mismatches: usize,
    /// Cases where the oracle answered yes, to show both outcomes occur.
    pub positives: usize,
}

/// Segment occlusion test against the integer oracle on a small grid, where
/// collinear and touching configurations are common.
pub fn segment_oracle_check(seed: u64, cases: usize) -> OracleCheck {
    let mut rng = rng(seed);
    let mut out = OracleCheck {
        cases,
        ..OracleCheck::default()
    };
    for _ in 0..cases {
        let mut pt = || (rng.random_range(-3..4), rng.random_range(-3..4));
        let (p1, p2, q1, q2) = (pt(), pt(), pt(), pt());
        let f = |p: (i64, i64)| [p.0 as f64, p.1 as f64];
        let want = intersect_oracle(p1, p2, q1, q2);
        out.mismatches += (segments_intersect(f(p1), f(p2), f(q1), f(q2)) != want) as usize;
        out.positives += want as usize;
    }
    out
}

/// Nearest anchor against an exhaustive scan with lowest-index ties.
pub fn nearest_anchor_oracle_check(seed: u64, cases: usize) -> OracleCheck {
    let mut rng = rng(seed);
    let mut out = OracleCheck {
        cases,
        ..OracleCheck::default()
    };
    for _ in 0..cases {
        let n = rng.random_range(1..30);
        let mut anchors: Vec<[f64; 2]> = Vec::new();
        while anchors.len() < n {
            let a = [rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0)];
            if !anchors.contains(&a) {
                anchors.push(a);
            }
        }
        let map = AnchorMap::new(anchors.clone(), 1, "s").unwrap();
        let p = [
            rng.random_range(-60.0..60.0),
            rng.random_range(-60.0..60.0),
            rng.random_range(-3.0..3.0),
        ];
        let dist: Vec<f64> = anchors.iter().map(|a| (a[0] - p[0]).hypot(a[1] - p[1])).collect();
        let best = dist.iter().copied().fold(f64::INFINITY, f64::min);
        let want = dist.iter().position(|&d| d == best).unwrap();
        let got = nearest_anchor(p, &map);
        out.mismatches += (got != want) as usize;
        out.positives += (want != 0) as usize;
    }
    out
}

/// Largest `|anchor + offset - position|`, relative to the coordinate
/// magnitude, over random anchor maps and positions.
pub fn offset_round_trip_max_err(seed: u64, cases: usize) -> f64 {
    let mut rng = rng(seed);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let n = rng.random_range(1..20);
        let anchors: Vec<[f64; 2]> = (0..n)
            .map(|_| [rng.random_range(-1e3..1e3), rng.random_range(-1e3..1e3)])
            .collect();
        let map = AnchorMap::new(anchors, 1, "s").unwrap();
        let p = [rng.random_range(-1e3..1e3), rng.random_range(-1e3..1e3), 0.0];
        let table = relative_offsets(p, &map);
        for (a, o) in map.anchors().iter().zip(table.entries()) {
            for k in 0..2 {
                worst = worst.max((a[k] + o[k] - p[k]).abs() / p[k].abs().max(1.0));
            }
        }
    }
    worst
}
