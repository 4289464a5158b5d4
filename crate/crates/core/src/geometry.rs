//! Poses, quaternions and anchor maps.
//!
//! Anchors live in the horizontal plane only. Height and orientation are
//! regressed in the global frame, so an [`AnchorMap`] stores `(x, y)` pairs
//! and an [`OffsetTable`] is the horizontal position of a camera expressed in
//! each anchor's origin.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance under which two anchors are considered the same point.
pub const ANCHOR_DEDUP_TOL: f64 = 1e-9;

/// Quaternions are accepted as unit when their norm is within this of 1.
pub const UNIT_TOL: f64 = 1e-6;

/// Rotation quaternion in `(w, x, y, z)` order.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quat {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Quat {
    pub const IDENTITY: Quat = Quat {
        w: 1.0,
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    pub const fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Quat { w, x, y, z }
    }

    pub fn from_array(q: [f64; 4]) -> Self {
        Quat::new(q[0], q[1], q[2], q[3])
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    /// Rotation of `angle` radians about the vertical axis.
    pub fn from_yaw(angle: f64) -> Self {
        let (s, c) = (0.5 * angle).sin_cos();
        Quat::new(c, 0.0, 0.0, s)
    }

    /// Yaw angle in radians, assuming a rotation about the vertical axis.
    pub fn yaw(self) -> f64 {
        2.0 * self.z.atan2(self.w)
    }

    pub fn dot(self, other: Quat) -> f64 {
        self.w * other.w + self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn is_finite(self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    /// Divides by the norm. Fails when the norm is not usable.
    pub fn normalized(self) -> Result<Quat> {
        let n = self.norm();
        if !(n.is_finite() && n > 1e-12) {
            return Err(Error::DegenerateOrientation { norm: n });
        }
        Ok(Quat::new(self.w / n, self.x / n, self.y / n, self.z / n))
    }

    pub fn is_unit(self, tol: f64) -> bool {
        (self.norm() - 1.0).abs() <= tol
    }
}

/// Camera position (meters, world frame) plus unit orientation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: [f64; 3],
    pub orientation: Quat,
}

impl Pose {
    /// Builds a pose, normalizing the orientation.
    pub fn new(position: [f64; 3], orientation: Quat) -> Result<Self> {
        if !position.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite position {position:?}")));
        }
        let orientation = unit_or_renormalize(orientation)?;
        Ok(Pose { position, orientation })
    }

    pub fn xy(&self) -> [f64; 2] {
        [self.position[0], self.position[1]]
    }
}

/// Returns `q` untouched when it is already unit to within 1e-12, otherwise
/// its normalization. Keeps normalization idempotent at the bit level, so
/// poses survive repeated load/save cycles unchanged.
pub(crate) fn unit_or_renormalize(q: Quat) -> Result<Quat> {
    if !q.is_finite() {
        return Err(Error::InvalidInput(format!("non-finite quaternion {q:?}")));
    }
    if q.is_unit(1e-12) {
        Ok(q)
    } else {
        q.normalized()
    }
}

/// Anchor coordinates chosen from a training sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnchorMap {
    anchors: Vec<[f64; 2]>,
    frame_interval: usize,
    source_scene: String,
}

impl AnchorMap {
    /// Wraps an explicit anchor list. The list must be non-empty, finite and
    /// free of duplicates.
    pub fn new(anchors: Vec<[f64; 2]>, frame_interval: usize, source_scene: impl Into<String>) -> Result<Self> {
        if anchors.is_empty() {
            return Err(Error::InvalidInput("anchor map needs at least one anchor".into()));
        }
        if frame_interval == 0 {
            return Err(Error::InvalidInput("frame interval must be >= 1".into()));
        }
        if anchors.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite anchor coordinate".into()));
        }
        for (i, a) in anchors.iter().enumerate() {
            if anchors[..i].iter().any(|b| same_point(a, b)) {
                return Err(Error::InvalidInput(format!("duplicate anchor {i} at {a:?}")));
            }
        }
        Ok(AnchorMap {
            anchors,
            frame_interval,
            source_scene: source_scene.into(),
        })
    }

    pub fn anchors(&self) -> &[[f64; 2]] {
        &self.anchors
    }

    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    pub fn frame_interval(&self) -> usize {
        self.frame_interval
    }

    pub fn source_scene(&self) -> &str {
        &self.source_scene
    }
}

fn same_point(a: &[f64; 2], b: &[f64; 2]) -> bool {
    (a[0] - b[0]).abs() <= ANCHOR_DEDUP_TOL && (a[1] - b[1]).abs() <= ANCHOR_DEDUP_TOL
}

/// Selects every `k`-th pose (indices `0, k, 2k, ...`) as an anchor.
///
/// Repeated positions are dropped, keeping the first occurrence. When more
/// than one frame was selected but all of them sit on the same point the map
/// is rejected as degenerate.
pub fn build_anchor_map(poses: &[Pose], k: usize, source_scene: &str) -> Result<AnchorMap> {
    if poses.is_empty() {
        return Err(Error::InvalidInput(
            "cannot build anchors from an empty pose list".into(),
        ));
    }
    if k == 0 {
        return Err(Error::InvalidInput("frame interval must be >= 1".into()));
    }
    let mut anchors: Vec<[f64; 2]> = Vec::new();
    let mut selected = 0usize;
    for pose in poses.iter().step_by(k) {
        selected += 1;
        let xy = pose.xy();
        if !anchors.iter().any(|a| same_point(a, &xy)) {
            anchors.push(xy);
        }
    }
    if selected > 1 && anchors.len() == 1 {
        return Err(Error::DegenerateMap(format!(
            "{selected} selected frames all collapse to {:?}",
            anchors[0]
        )));
    }
    AnchorMap::new(anchors, k, source_scene)
}

/// Horizontal offsets of one camera position from every anchor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OffsetTable(pub Vec<[f64; 2]>);

impl OffsetTable {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn entries(&self) -> &[[f64; 2]] {
        &self.0
    }
}

/// Position minus anchor, for every anchor.
pub fn relative_offsets(position: [f64; 3], map: &AnchorMap) -> OffsetTable {
    OffsetTable(
        map.anchors
            .iter()
            .map(|a| [position[0] - a[0], position[1] - a[1]])
            .collect(),
    )
}

/// Index of the anchor closest in `(x, y)`; ties go to the lowest index.
pub fn nearest_anchor(position: [f64; 3], map: &AnchorMap) -> usize {
    let mut best = 0;
    let mut best_d2 = f64::INFINITY;
    for (i, a) in map.anchors.iter().enumerate() {
        let dx = position[0] - a[0];
        let dy = position[1] - a[1];
        let d2 = dx * dx + dy * dy;
        if d2 < best_d2 {
            best = i;
            best_d2 = d2;
        }
    }
    best
}

/// Geodesic angle between two rotations in degrees, `2 acos |a . b|`.
/// `q` and `-q` are the same rotation.
pub fn quat_angle_deg(a: Quat, b: Quat) -> Result<f64> {
    for q in [a, b] {
        if !q.is_finite() || !q.is_unit(UNIT_TOL) {
            return Err(Error::InvalidInput(format!(
                "quaternion {q:?} is not unit (norm {})",
                q.norm()
            )));
        }
    }
    let d = a.dot(b).abs().min(1.0);
    Ok((2.0 * d.acos()).to_degrees())
}

impl std::ops::Neg for Quat {
    type Output = Quat;

    fn neg(self) -> Quat {
        Quat::new(-self.w, -self.x, -self.y, -self.z)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn at(x: f64, y: f64) -> Pose {
        Pose::new([x, y, 0.0], Quat::IDENTITY).unwrap()
    }

    #[test]
    fn every_third_frame() {
        let poses: Vec<Pose> = (0..10).map(|i| at(i as f64, 0.0)).collect();
        let map = build_anchor_map(&poses, 3, "line").unwrap();
        assert_eq!(map.anchors(), &[[0.0, 0.0], [3.0, 0.0], [6.0, 0.0], [9.0, 0.0]]);
        assert_eq!(map.frame_interval(), 3);
    }

    #[test]
    fn unit_interval_keeps_unique_positions() {
        let poses = vec![at(0.0, 0.0), at(1.0, 0.0), at(1.0, 0.0), at(2.0, 5.0)];
        let map = build_anchor_map(&poses, 1, "s").unwrap();
        assert_eq!(map.anchors(), &[[0.0, 0.0], [1.0, 0.0], [2.0, 5.0]]);
    }

    #[test]
    fn anchor_map_errors() {
        assert!(matches!(build_anchor_map(&[], 1, "s"), Err(Error::InvalidInput(_))));
        assert!(matches!(
            build_anchor_map(&[at(0.0, 0.0)], 0, "s"),
            Err(Error::InvalidInput(_))
        ));
        let same = vec![at(1.0, 1.0); 5];
        assert!(matches!(build_anchor_map(&same, 2, "s"), Err(Error::DegenerateMap(_))));
        // a single selected frame is a valid one-anchor map
        assert_eq!(build_anchor_map(&same, 10, "s").unwrap().len(), 1);
    }

    #[test]
    fn offsets_change_origin() {
        let map = AnchorMap::new(vec![[0.0, 0.0], [10.0, 0.0]], 1, "s").unwrap();
        let t = relative_offsets([3.0, 4.0, 7.0], &map);
        assert_eq!(t.entries(), &[[3.0, 4.0], [-7.0, 4.0]]);
        let t = relative_offsets([10.0, 0.0, 0.0], &map);
        assert_eq!(t.entries()[1], [0.0, 0.0]);
    }

    #[test]
    fn nearest_with_tie_break() {
        let map = AnchorMap::new(vec![[0.0, 0.0], [1.0, 0.0]], 1, "s").unwrap();
        assert_eq!(nearest_anchor([0.4, 0.0, 0.0], &map), 0);
        assert_eq!(nearest_anchor([0.5, 0.0, 0.0], &map), 0);
        assert_eq!(nearest_anchor([0.6, 0.0, 0.0], &map), 1);
    }

    #[test]
    fn quat_angles() {
        let q = Quat::new(0.5, 0.5, -0.5, 0.5);
        assert_eq!(quat_angle_deg(q, q).unwrap(), 0.0);
        assert_eq!(quat_angle_deg(q, -q).unwrap(), 0.0);
        let h = std::f64::consts::FRAC_PI_4;
        let rz = Quat::new(h.cos(), 0.0, 0.0, h.sin());
        assert!((quat_angle_deg(Quat::IDENTITY, rz).unwrap() - 90.0).abs() < 1e-9);
        assert!(quat_angle_deg(Quat::new(2.0, 0.0, 0.0, 0.0), q).is_err());
    }

    #[test]
    fn pose_normalizes_orientation() {
        let p = Pose::new([0.0; 3], Quat::new(0.0, 0.0, 0.0, 2.0)).unwrap();
        assert_eq!(p.orientation, Quat::new(0.0, 0.0, 0.0, 1.0));
        assert!(Pose::new([f64::NAN, 0.0, 0.0], Quat::IDENTITY).is_err());
        assert!(Pose::new([0.0; 3], Quat::new(0.0, 0.0, 0.0, 0.0)).is_err());
    }

    fn unit_quat() -> impl Strategy<Value = Quat> {
        prop::array::uniform4(-1.0f64..1.0)
            .prop_filter("norm", |a| a.iter().map(|v| v * v).sum::<f64>() > 1e-3)
            .prop_map(|a| Quat::from_array(a).normalized().unwrap())
    }

    proptest! {
        #[test]
        fn angle_is_symmetric_and_bounded(a in unit_quat(), b in unit_quat()) {
            let ab = quat_angle_deg(a, b).unwrap();
            let ba = quat_angle_deg(b, a).unwrap();
            prop_assert_eq!(ab, ba);
            prop_assert!((0.0..=180.0).contains(&ab));
            prop_assert_eq!(quat_angle_deg(a, -b).unwrap(), ab);
        }

        #[test]
        fn larger_interval_never_adds_anchors(
            xs in prop::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 1..60),
            k in 1usize..12,
        ) {
            let poses: Vec<Pose> = xs.iter().map(|&(x, y)| at(x, y)).collect();
            if let (Ok(dense), Ok(sparse)) =
                (build_anchor_map(&poses, 1, "p"), build_anchor_map(&poses, k, "p"))
            {
                prop_assert!(sparse.len() <= dense.len());
            }
        }
    }
}
