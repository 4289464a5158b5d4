//! Deterministic 2-D localization world.
//!
//! A camera drives along a polyline route, looking roughly along the route
//! direction. Point landmarks are observed when they fall inside the field of
//! view and no obstacle segment blocks the line of sight. Each landmark fills
//! three feature channels: a visibility bit, the bearing relative to the
//! camera heading divided by pi, and `1 / (1 + d / inv_distance_scale)`.
//! Hidden landmarks leave all three channels at zero.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{FeatureTable, PoseRecord, RawDataset, Split};
use crate::error::{Error, Result};
use crate::geometry::{AnchorMap, Pose, Quat};

/// Collinearity tolerance of the orientation predicate.
pub const ORIENT_EPS: f64 = 1e-12;

const TRAIN_STREAM: u64 = 1;
const TEST_STREAM: u64 = 2;
const Z_STREAM: u64 = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Landmark {
    pub id: u32,
    pub position: [f64; 2],
}

/// Height along the route: `base` plus two sinusoids with seeded phases.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZProfile {
    pub base: f64,
    pub amplitude: f64,
    pub wavelength: f64,
}

impl Default for ZProfile {
    fn default() -> Self {
        ZProfile {
            base: 0.0,
            amplitude: 0.3,
            wavelength: 25.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldSpec {
    pub route: Vec<[f64; 2]>,
    /// Whether the route returns from its last waypoint to the first.
    #[serde(default)]
    pub closed: bool,
    pub landmarks: Vec<Landmark>,
    #[serde(default)]
    pub obstacles: Vec<[[f64; 2]; 2]>,
    pub fov_half_angle_deg: f64,
    #[serde(default)]
    pub z_profile: ZProfile,
    /// Standard deviation of the sideways displacement from the route (m).
    pub lateral_jitter: f64,
    /// Standard deviation of the heading around the route direction (deg).
    pub heading_jitter_deg: f64,
    /// Standard deviation of the noise added to visible bearing/distance channels.
    pub noise_sigma: f64,
    pub inv_distance_scale: f64,
    pub seed: u64,
}

impl Default for WorldSpec {
    /// A circular loop of radius 12 m approximated by 36 waypoints, with four
    /// landmarks a quarter turn apart and two short occluding segments.
    fn default() -> Self {
        let radius = 12.0;
        let route = (0..36)
            .map(|i| {
                let a = 2.0 * PI * i as f64 / 36.0;
                [radius * a.cos(), radius * a.sin()]
            })
            .collect::<Vec<_>>();
        let landmarks = (0..4)
            .map(|i| Landmark {
                id: i,
                position: route[9 * i as usize],
            })
            .collect();
        WorldSpec {
            route,
            closed: true,
            landmarks,
            obstacles: vec![[[11.0, -5.0], [12.5, -4.0]], [[-11.0, 5.0], [-12.5, 4.0]]],
            fov_half_angle_deg: 60.0,
            z_profile: ZProfile::default(),
            lateral_jitter: 0.5,
            heading_jitter_deg: 2.0,
            noise_sigma: 0.005,
            inv_distance_scale: 10.0,
            seed: 7,
        }
    }
}

impl WorldSpec {
    pub fn validate(&self) -> Result<()> {
        if self.route.len() < 2 {
            return Err(Error::InvalidSpec("route needs at least 2 waypoints".into()));
        }
        if !(self.fov_half_angle_deg > 0.0 && self.fov_half_angle_deg < 180.0) {
            return Err(Error::InvalidSpec(format!(
                "fov_half_angle_deg must be in (0, 180), got {}",
                self.fov_half_angle_deg
            )));
        }
        for (name, v) in [
            ("lateral_jitter", self.lateral_jitter),
            ("heading_jitter_deg", self.heading_jitter_deg),
            ("noise_sigma", self.noise_sigma),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidSpec(format!("{name} must be finite and >= 0")));
            }
        }
        if !(self.inv_distance_scale.is_finite() && self.inv_distance_scale > 0.0) {
            return Err(Error::InvalidSpec("inv_distance_scale must be positive".into()));
        }
        if !(self.z_profile.wavelength.is_finite() && self.z_profile.wavelength > 0.0) {
            return Err(Error::InvalidSpec("z_profile.wavelength must be positive".into()));
        }
        let mut ids: Vec<u32> = self.landmarks.iter().map(|l| l.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidSpec("landmark ids must be unique".into()));
        }
        let all_points = self
            .route
            .iter()
            .chain(self.landmarks.iter().map(|l| &l.position))
            .chain(self.obstacles.iter().flatten());
        if all_points.flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSpec("non-finite coordinate".into()));
        }
        Ok(())
    }

    pub fn feature_dim(&self) -> usize {
        3 * self.landmarks.len()
    }

    /// Parses a TOML world file.
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: WorldSpec = toml::from_str(text).map_err(|e| Error::InvalidSpec(format!("world spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(format!("world spec: {e}")))
    }
}

/// Arc-length parametrization of the route polyline.
#[derive(Clone, Debug)]
pub struct Route {
    points: Vec<[f64; 2]>,
    cumulative: Vec<f64>,
}

impl Route {
    pub fn new(spec: &WorldSpec) -> Result<Self> {
        let mut points = spec.route.clone();
        if spec.closed {
            points.push(spec.route[0]);
        }
        let mut cumulative = vec![0.0];
        for w in points.windows(2) {
            let len = (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]);
            cumulative.push(cumulative.last().unwrap() + len);
        }
        let total = *cumulative.last().unwrap();
        if !(total.is_finite() && total > 0.0) {
            return Err(Error::InvalidSpec("route has zero length".into()));
        }
        Ok(Route { points, cumulative })
    }

    pub fn length(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    /// Point and unit tangent at arc length `s` (clamped to the route).
    pub fn at(&self, s: f64) -> ([f64; 2], [f64; 2]) {
        let s = s.clamp(0.0, self.length());
        let seg = match self.cumulative.partition_point(|&c| c <= s) {
            0 => 0,
            i => (i - 1).min(self.points.len() - 2),
        };
        // skip zero-length segments
        let mut seg = seg;
        while self.cumulative[seg + 1] - self.cumulative[seg] <= 0.0 && seg > 0 {
            seg -= 1;
        }
        let a = self.points[seg];
        let b = self.points[seg + 1];
        let len = self.cumulative[seg + 1] - self.cumulative[seg];
        let t = if len > 0.0 {
            (s - self.cumulative[seg]) / len
        } else {
            0.0
        };
        let dir = if len > 0.0 {
            [(b[0] - a[0]) / len, (b[1] - a[1]) / len]
        } else {
            [1.0, 0.0]
        };
        ([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])], dir)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Visibility {
    pub visible: bool,
    /// Angle of the landmark relative to the camera heading, in `(-pi, pi]`.
    pub bearing: f64,
    pub distance: f64,
}

fn wrap_angle(a: f64) -> f64 {
    let mut a = a.rem_euclid(2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// Sign of the turn `a -> b -> c`, zero within [`ORIENT_EPS`].
fn orient(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> i8 {
    let v = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
    if v > ORIENT_EPS {
        1
    } else if v < -ORIENT_EPS {
        -1
    } else {
        0
    }
}

fn within_box(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> bool {
    p[0] >= a[0].min(b[0]) - ORIENT_EPS
        && p[0] <= a[0].max(b[0]) + ORIENT_EPS
        && p[1] >= a[1].min(b[1]) - ORIENT_EPS
        && p[1] <= a[1].max(b[1]) + ORIENT_EPS
}

/// Closed-segment intersection. Touching and collinear overlap count.
pub fn segments_intersect(p1: [f64; 2], p2: [f64; 2], q1: [f64; 2], q2: [f64; 2]) -> bool {
    let o1 = orient(p1, p2, q1);
    let o2 = orient(p1, p2, q2);
    let o3 = orient(q1, q2, p1);
    let o4 = orient(q1, q2, p2);
    if o1 * o2 < 0 && o3 * o4 < 0 {
        return true;
    }
    (o1 == 0 && within_box(p1, p2, q1))
        || (o2 == 0 && within_box(p1, p2, q2))
        || (o3 == 0 && within_box(q1, q2, p1))
        || (o4 == 0 && within_box(q1, q2, p2))
}

/// Heading of a planar pose, read from its yaw.
pub fn heading(pose: &Pose) -> f64 {
    pose.orientation.yaw()
}

pub fn visibility(pose: &Pose, landmark: [f64; 2], spec: &WorldSpec) -> Visibility {
    let cam = pose.xy();
    let dx = landmark[0] - cam[0];
    let dy = landmark[1] - cam[1];
    let distance = dx.hypot(dy);
    let bearing = wrap_angle(dy.atan2(dx) - heading(pose));
    let in_fov = bearing.abs() <= spec.fov_half_angle_deg.to_radians();
    let visible = in_fov
        && !spec
            .obstacles
            .iter()
            .any(|o| segments_intersect(cam, landmark, o[0], o[1]));
    Visibility {
        visible,
        bearing,
        distance,
    }
}

/// One generated frame with its ground-truth visibility.
#[derive(Clone, Debug, PartialEq)]
pub struct WorldSample {
    pub frame_id: String,
    pub feature: Vec<f64>,
    pub pose: Pose,
    /// Ids of the landmarks in view. Kept for evaluation only.
    pub visible_set: Vec<u32>,
}

/// Visible landmark ids for a pose.
pub fn visible_set(pose: &Pose, spec: &WorldSpec) -> Vec<u32> {
    spec.landmarks
        .iter()
        .filter(|l| visibility(pose, l.position, spec).visible)
        .map(|l| l.id)
        .collect()
}

pub fn encode_inv_distance(distance: f64, scale: f64) -> f64 {
    1.0 / (1.0 + distance / scale)
}

/// Recovers `(bearing, distance)` of landmark `index` from a feature vector,
/// or `None` when its visibility bit is off.
pub fn decode_landmark(feature: &[f64], index: usize, spec: &WorldSpec) -> Option<(f64, f64)> {
    let ch = &feature[3 * index..3 * index + 3];
    if ch[0] < 0.5 {
        return None;
    }
    Some((ch[1] * PI, spec.inv_distance_scale * (1.0 / ch[2] - 1.0)))
}

fn z_at(s: f64, spec: &WorldSpec, phases: [f64; 2]) -> f64 {
    let zp = &spec.z_profile;
    let w = 2.0 * PI * s / zp.wavelength;
    zp.base + zp.amplitude * ((w + phases[0]).sin() + 0.5 * (2.0 * w + phases[1]).sin()) / 1.5
}

fn z_phases(spec: &WorldSpec) -> [f64; 2] {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(Z_STREAM);
    [rng.random_range(0.0..2.0 * PI), rng.random_range(0.0..2.0 * PI)]
}

fn sample_split(spec: &WorldSpec, route: &Route, n: usize, stream: u64, prefix: &str) -> Vec<WorldSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(stream);
    let unit = Normal::new(0.0, 1.0).unwrap();
    let phases = z_phases(spec);
    let length = route.length();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        // one stratified draw per slot keeps frames ordered along the route
        let s = (i as f64 + rng.random::<f64>()) * length / n as f64;
        let (p, t) = route.at(s);
        let lateral = spec.lateral_jitter * unit.sample(&mut rng);
        let x = p[0] - t[1] * lateral;
        let y = p[1] + t[0] * lateral;
        let yaw = t[1].atan2(t[0]) + spec.heading_jitter_deg.to_radians() * unit.sample(&mut rng);
        let pose =
            Pose::new([x, y, z_at(s, spec, phases)], Quat::from_yaw(yaw)).expect("finite pose from a validated world");

        let mut feature = vec![0.0; spec.feature_dim()];
        let mut visible = Vec::new();
        for (li, lm) in spec.landmarks.iter().enumerate() {
            let v = visibility(&pose, lm.position, spec);
            let noise_b = spec.noise_sigma * unit.sample(&mut rng);
            let noise_d = spec.noise_sigma * unit.sample(&mut rng);
            if v.visible {
                visible.push(lm.id);
                feature[3 * li] = 1.0;
                feature[3 * li + 1] = v.bearing / PI + noise_b;
                feature[3 * li + 2] = encode_inv_distance(v.distance, spec.inv_distance_scale) + noise_d;
            }
        }
        out.push(WorldSample {
            frame_id: format!("{prefix}{i:06}"),
            feature,
            pose,
            visible_set: visible,
        });
    }
    out
}

/// Draws `n_train` and `n_test` frames. Both splits are ordered along the
/// route and come from independent random streams of the same seed.
pub fn generate(spec: &WorldSpec, n_train: usize, n_test: usize) -> Result<(Vec<WorldSample>, Vec<WorldSample>)> {
    spec.validate()?;
    let route = Route::new(spec)?;
    Ok((
        sample_split(spec, &route, n_train, TRAIN_STREAM, "train_"),
        sample_split(spec, &route, n_test, TEST_STREAM, "test_"),
    ))
}

/// Packs generated frames into the on-disk dataset representation.
pub fn to_raw(train: &[WorldSample], test: &[WorldSample], spec: &WorldSpec) -> RawDataset {
    let split = |samples: &[WorldSample]| Split {
        poses: samples
            .iter()
            .map(|s| PoseRecord {
                frame_id: s.frame_id.clone(),
                pose: s.pose,
            })
            .collect(),
        features: FeatureTable {
            dim: spec.feature_dim(),
            rows: samples
                .iter()
                .map(|s| (s.frame_id.clone(), s.feature.clone()))
                .collect(),
        },
    };
    RawDataset {
        train: split(train),
        test: split(test),
    }
}

/// Landmark co-located with each anchor, if any.
///
/// Every landmark is attached to its nearest anchor when that anchor lies
/// within half the median spacing between consecutive anchors.
pub fn colocated_landmarks(spec: &WorldSpec, map: &AnchorMap) -> Vec<Option<u32>> {
    let anchors = map.anchors();
    let mut gaps: Vec<f64> = anchors
        .windows(2)
        .map(|w| (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]))
        .collect();
    gaps.sort_by(f64::total_cmp);
    let radius = if gaps.is_empty() {
        f64::INFINITY
    } else {
        0.5 * gaps[gaps.len() / 2]
    };
    let mut out = vec![None; anchors.len()];
    for lm in &spec.landmarks {
        let pos = [lm.position[0], lm.position[1], 0.0];
        let j = crate::geometry::nearest_anchor(pos, map);
        let d = (anchors[j][0] - pos[0]).hypot(anchors[j][1] - pos[1]);
        if d <= radius && out[j].is_none() {
            out[j] = Some(lm.id);
        }
    }
    out
}
