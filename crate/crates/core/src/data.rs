//! Scene datasets: poses plus feature vectors, the anchor map built from the
//! training split, and per-sample offset tables.
//!
//! File formats live in [`formats`].

pub mod formats;

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{build_anchor_map, nearest_anchor, relative_offsets, AnchorMap, OffsetTable, Pose};

pub use formats::{FeatureTable, PoseRecord};

pub const POSES_TRAIN: &str = "poses_train.txt";
pub const POSES_TEST: &str = "poses_test.txt";
pub const FEATURES_TRAIN: &str = "features_train.bin";
pub const FEATURES_TEST: &str = "features_test.bin";

/// One frame with its ground truth and precomputed anchor offsets.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub frame_id: String,
    pub feature: Vec<f64>,
    pub pose: Pose,
    pub offsets: OffsetTable,
}

/// Frames of one split before anchors are attached.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Split {
    pub poses: Vec<PoseRecord>,
    pub features: FeatureTable,
}

impl Split {
    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    /// Reads `poses_<name>.txt` and `features_<name>.bin` from `dir`.
    pub fn load(dir: &Path, name: &str) -> Result<Self> {
        let poses = formats::load_pose_file(&dir.join(format!("poses_{name}.txt")))?;
        let features = FeatureTable::load(&dir.join(format!("features_{name}.bin")))?;
        Ok(Split { poses, features })
    }

    pub fn save(&self, dir: &Path, name: &str) -> Result<()> {
        formats::save_pose_file(&dir.join(format!("poses_{name}.txt")), &self.poses)?;
        self.features.save(&dir.join(format!("features_{name}.bin")))
    }
}

/// Both splits of a dataset directory, as stored on disk.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RawDataset {
    pub train: Split,
    pub test: Split,
}

impl RawDataset {
    pub fn load(dir: &Path) -> Result<Self> {
        if !dir.is_dir() {
            return Err(Error::InvalidInput(format!(
                "dataset directory {} does not exist",
                dir.display()
            )));
        }
        Ok(RawDataset {
            train: Split::load(dir, "train")?,
            test: Split::load(dir, "test")?,
        })
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.train.save(dir, "train")?;
        self.test.save(dir, "test")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneDataset {
    pub name: String,
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
    pub anchor_map: AnchorMap,
    /// Nearest anchor of every training sample.
    pub nearest_labels: Vec<usize>,
}

impl SceneDataset {
    pub fn num_anchors(&self) -> usize {
        self.anchor_map.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.train.first().or(self.test.first()).map_or(0, |s| s.feature.len())
    }
}

/// Builds anchors from every `k`-th training pose and attaches offsets to all
/// samples. Test poses never contribute anchors.
pub fn assemble(name: &str, raw: &RawDataset, k: usize) -> Result<SceneDataset> {
    let train_poses: Vec<Pose> = raw.train.poses.iter().map(|r| r.pose).collect();
    let anchor_map = build_anchor_map(&train_poses, k, name)?;
    assemble_with_map(name, raw, anchor_map)
}

/// Like [`assemble`] with a fixed anchor map.
pub fn assemble_with_map(name: &str, raw: &RawDataset, anchor_map: AnchorMap) -> Result<SceneDataset> {
    let dim = raw.train.features.dim.max(raw.test.features.dim);
    for (label, split) in [("train", &raw.train), ("test", &raw.test)] {
        if !split.features.is_empty() && split.features.dim != dim {
            return Err(Error::InvalidInput(format!(
                "{label} features have dimension {}, expected {dim}",
                split.features.dim
            )));
        }
    }
    let train = attach(&raw.train, &anchor_map, "train")?;
    let test = attach(&raw.test, &anchor_map, "test")?;
    let nearest_labels = train
        .iter()
        .map(|s| nearest_anchor(s.pose.position, &anchor_map))
        .collect();
    Ok(SceneDataset {
        name: name.to_string(),
        train,
        test,
        anchor_map,
        nearest_labels,
    })
}

fn attach(split: &Split, map: &AnchorMap, label: &str) -> Result<Vec<Sample>> {
    if split.poses.len() != split.features.len() {
        return Err(Error::InvalidInput(format!(
            "{label}: {} poses but {} feature rows",
            split.poses.len(),
            split.features.len()
        )));
    }
    let by_id: HashMap<&str, &[f64]> = split
        .features
        .rows
        .iter()
        .map(|(id, v)| (id.as_str(), v.as_slice()))
        .collect();
    if by_id.len() != split.features.len() {
        return Err(Error::InvalidInput(format!(
            "{label}: duplicate frame ids in feature file"
        )));
    }
    split
        .poses
        .iter()
        .map(|rec| {
            let feature = by_id
                .get(rec.frame_id.as_str())
                .ok_or_else(|| Error::InvalidInput(format!("{label}: no features for frame {}", rec.frame_id)))?;
            Ok(Sample {
                frame_id: rec.frame_id.clone(),
                feature: feature.to_vec(),
                pose: rec.pose,
                offsets: relative_offsets(rec.pose.position, map),
            })
        })
        .collect()
}
