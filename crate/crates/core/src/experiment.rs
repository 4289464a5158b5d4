//! End-to-end runs: assemble a dataset, train, evaluate. Also the
//! frame-interval sweep and the direct-regression control.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::formats::fmt_f64;
use crate::data::{assemble, assemble_with_map, RawDataset, SceneDataset};
use crate::error::Result;
use crate::eval::{evaluate, EvalReport};
use crate::geometry::AnchorMap;
use crate::model::{Activation, NetworkSpec};
use crate::optim::{train, TrainConfig, TrainReport};

/// Network settings that do not depend on the dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkTemplate {
    pub hidden_layers: Vec<usize>,
    pub activation: Activation,
    pub seed: u64,
}

impl Default for NetworkTemplate {
    fn default() -> Self {
        NetworkTemplate {
            hidden_layers: vec![64, 64],
            activation: Activation::Relu,
            seed: 1,
        }
    }
}

impl NetworkTemplate {
    pub fn spec(&self, input_dim: usize, num_anchors: usize) -> NetworkSpec {
        NetworkSpec {
            input_dim,
            hidden_layers: self.hidden_layers.clone(),
            num_anchors,
            activation: self.activation,
            seed: self.seed,
        }
    }

    pub fn spec_for(&self, dataset: &SceneDataset) -> NetworkSpec {
        self.spec(dataset.feature_dim(), dataset.num_anchors())
    }
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub dataset: SceneDataset,
    pub training: TrainReport,
    pub eval: EvalReport,
}

/// Anchor model with anchors every `k` training frames.
pub fn run_anchor_model(
    name: &str,
    raw: &RawDataset,
    k: usize,
    net: &NetworkTemplate,
    config: &TrainConfig,
) -> Result<RunOutcome> {
    let dataset = assemble(name, raw, k)?;
    run_on(dataset, net, config)
}

/// A single anchor at the world origin: the offset head then regresses the
/// absolute `(x, y)` and the classifier is inert, which turns the same network
/// into a plain 6-DOF regressor with identical trunk capacity.
pub fn direct_regression_map(name: &str) -> AnchorMap {
    AnchorMap::new(vec![[0.0, 0.0]], 1, name).expect("single anchor map is valid")
}

pub fn run_direct_regressor(
    name: &str,
    raw: &RawDataset,
    net: &NetworkTemplate,
    config: &TrainConfig,
) -> Result<RunOutcome> {
    let dataset = assemble_with_map(name, raw, direct_regression_map(name))?;
    run_on(dataset, net, config)
}

fn run_on(dataset: SceneDataset, net: &NetworkTemplate, config: &TrainConfig) -> Result<RunOutcome> {
    let spec = net.spec_for(&dataset);
    let training = train(&dataset, &spec, config)?;
    let eval = evaluate(training.params(), &dataset.test, &dataset.anchor_map)?;
    Ok(RunOutcome {
        dataset,
        training,
        eval,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub k: usize,
    pub num_anchors: usize,
    pub median_m: f64,
    pub median_deg: f64,
    pub accuracy: f64,
}

/// Trains one model per frame interval with identical seeds and settings.
pub fn sweep_anchor_interval(
    name: &str,
    raw: &RawDataset,
    k_values: &[usize],
    net: &NetworkTemplate,
    config: &TrainConfig,
) -> Result<Vec<SweepRow>> {
    if k_values.is_empty() {
        return Err(crate::Error::InvalidInput(
            "sweep needs at least one frame interval".into(),
        ));
    }
    k_values
        .iter()
        .map(|&k| {
            let out = run_anchor_model(name, raw, k, net, config)?;
            Ok(SweepRow {
                k,
                num_anchors: out.dataset.num_anchors(),
                median_m: out.eval.median_translation_m,
                median_deg: out.eval.median_rotation_deg,
                accuracy: out.eval.accuracy_2m_5deg,
            })
        })
        .collect()
}

pub const SWEEP_HEADER: &str = "k,N,median_m,median_deg,accuracy";

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from(SWEEP_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            r.k,
            r.num_anchors,
            fmt_f64(r.median_m),
            fmt_f64(r.median_deg),
            fmt_f64(r.accuracy)
        );
    }
    s
}

/// Two stacked line charts (median translation error and accuracy against
/// the frame interval) as a standalone SVG document.
pub fn sweep_svg(rows: &[SweepRow]) -> String {
    const W: f64 = 480.0;
    const H: f64 = 200.0;
    const PAD: f64 = 40.0;
    let ks: Vec<f64> = rows.iter().map(|r| r.k as f64).collect();
    let (kmin, kmax) = bounds(&ks);
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{}" font-family="sans-serif" font-size="11">"#,
        2.0 * H
    );
    let panels: [(&str, Vec<f64>, &str); 2] = [
        (
            "median translation error (m)",
            rows.iter().map(|r| r.median_m).collect(),
            "#1f77b4",
        ),
        (
            "accuracy (<2 m, <5 deg)",
            rows.iter().map(|r| r.accuracy).collect(),
            "#d62728",
        ),
    ];
    for (p, (title, ys, color)) in panels.iter().enumerate() {
        let top = p as f64 * H;
        let (ymin, ymax) = bounds(ys);
        let px = |k: f64| PAD + (k - kmin) / (kmax - kmin) * (W - 2.0 * PAD);
        let py = |y: f64| top + H - PAD + (ymin - y) / (ymax - ymin) * (H - 2.0 * PAD);
        let _ = writeln!(svg, r#"<text x="{PAD}" y="{}">{title}</text>"#, top + PAD - 12.0);
        let _ = writeln!(
            svg,
            r#"<line x1="{PAD}" y1="{0}" x2="{1}" y2="{0}" stroke="black"/><line x1="{PAD}" y1="{2}" x2="{PAD}" y2="{0}" stroke="black"/>"#,
            top + H - PAD,
            W - PAD,
            top + PAD
        );
        let points: Vec<String> = ks
            .iter()
            .zip(ys)
            .map(|(&k, &y)| format!("{:.2},{:.2}", px(k), py(y)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            points.join(" ")
        );
        for (&k, &y) in ks.iter().zip(ys) {
            let _ = writeln!(
                svg,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/><text x="{:.2}" y="{:.2}" text-anchor="middle">k={k}</text>"#,
                px(k),
                py(y),
                px(k),
                top + H - PAD + 14.0
            );
            let _ = writeln!(
                svg,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{y:.3}</text>"#,
                px(k),
                py(y) - 6.0
            );
        }
    }
    svg.push_str("</svg>\n");
    svg
}

fn bounds(v: &[f64]) -> (f64, f64) {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() || !hi.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}
