#![allow(dead_code)]

pub mod checks;

use anchorloc::geometry::{OffsetTable, Quat};
use anchorloc::model::{Activation, NetworkSpec, PosePrediction};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_spec(rng: &mut impl Rng) -> NetworkSpec {
    let depth = rng.random_range(0..3);
    NetworkSpec {
        input_dim: rng.random_range(1..6),
        hidden_layers: (0..depth).map(|_| rng.random_range(1..7)).collect(),
        num_anchors: rng.random_range(1..6),
        activation: if rng.random_bool(0.5) {
            Activation::Tanh
        } else {
            Activation::Relu
        },
        seed: rng.random(),
    }
}

pub fn random_vec(rng: &mut impl Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

pub fn random_unit_quat(rng: &mut impl Rng) -> Quat {
    loop {
        let q = Quat::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        if q.norm() > 0.2 {
            return q.normalized().unwrap();
        }
    }
}

/// Raw prediction whose orientation output stays well away from zero.
pub fn random_prediction(rng: &mut impl Rng, n: usize) -> PosePrediction {
    let q = random_unit_quat(rng).to_array();
    let s = rng.random_range(0.5..3.0);
    PosePrediction {
        logits: random_vec(rng, n, 3.0),
        offsets: (0..n)
            .map(|_| [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)])
            .collect(),
        z: rng.random_range(-2.0..2.0),
        orient_raw: q.map(|v| s * v),
    }
}

pub fn random_offsets(rng: &mut impl Rng, n: usize) -> OffsetTable {
    OffsetTable(
        (0..n)
            .map(|_| [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)])
            .collect(),
    )
}

/// `|a - b| / max(|a|, |b|, floor)`.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Central difference of `f` along coordinate `i` of `x`.
pub fn central_diff(f: &mut impl FnMut(&[f64]) -> f64, x: &[f64], i: usize, h: f64) -> f64 {
    let mut xp = x.to_vec();
    xp[i] += h;
    let mut xm = x.to_vec();
    xm[i] -= h;
    (f(&xp) - f(&xm)) / (2.0 * h)
}

/// Plain re-implementation of the network: explicit loops over the flat
/// parameter vector, returning the prediction and every trunk pre-activation.
pub fn reference_forward(spec: &NetworkSpec, w: &[f64], x: &[f64]) -> (PosePrediction, Vec<f64>) {
    let mut pos = 0;
    let mut dense = |input: &[f64], outputs: usize| -> Vec<f64> {
        let n_in = input.len();
        let weights = &w[pos..pos + n_in * outputs];
        let biases = &w[pos + n_in * outputs..pos + n_in * outputs + outputs];
        pos += n_in * outputs + outputs;
        (0..outputs)
            .map(|j| {
                let mut acc = biases[j];
                for i in 0..n_in {
                    acc += weights[j * n_in + i] * input[i];
                }
                acc
            })
            .collect()
    };
    let mut h = x.to_vec();
    let mut pre_all = Vec::new();
    for &width in &spec.hidden_layers {
        let pre = dense(&h, width);
        pre_all.extend_from_slice(&pre);
        h = pre
            .iter()
            .map(|&v| match spec.activation {
                Activation::Relu => {
                    if v > 0.0 {
                        v
                    } else {
                        0.0
                    }
                }
                Activation::Tanh => v.tanh(),
            })
            .collect();
    }
    let n = spec.num_anchors;
    let logits = dense(&h, n);
    let offs = dense(&h, 2 * n);
    let abs = dense(&h, 5);
    let pred = PosePrediction {
        logits,
        offsets: (0..n).map(|i| [offs[2 * i], offs[2 * i + 1]]).collect(),
        z: abs[0],
        orient_raw: [abs[1], abs[2], abs[3], abs[4]],
    };
    (pred, pre_all)
}
