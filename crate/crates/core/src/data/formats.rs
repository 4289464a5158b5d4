//! On-disk formats for poses and feature vectors.
//!
//! Pose files are plain text, one frame per line:
//!
//! ```text
//! # frame_id tx ty tz qw qx qy qz
//! f0 1 2 3 1 0 0 0
//! ```
//!
//! Lines starting with `#` and blank lines are skipped. Numbers are written
//! in scientific notation with 17 significant digits so every `f64` survives
//! a save/load cycle unchanged.
//!
//! Feature files are little-endian binary:
//!
//! | field        | type                         |
//! |--------------|------------------------------|
//! | magic        | `b"ANCFEAT\0"`               |
//! | version      | `u32` (currently 1)          |
//! | frame_count  | `u64`                        |
//! | dim          | `u64`                        |
//! | rows         | `frame_count` times: `u32` id length, UTF-8 id bytes, `dim` x `f64` |

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::geometry::{Pose, Quat};

/// Quaternions further than this from unit norm are rejected on load.
pub const QUAT_LOAD_TOL: f64 = 1e-3;

pub const FEATURE_MAGIC: &[u8; 8] = b"ANCFEAT\0";
pub const FEATURE_VERSION: u32 = 1;

const POSE_HEADER: &str = "# frame_id tx ty tz qw qx qy qz\n";

#[derive(Clone, Debug, PartialEq)]
pub struct PoseRecord {
    pub frame_id: String,
    pub pose: Pose,
}

/// Formats a float with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn parse_pose_text(text: &str, path: &Path) -> Result<Vec<PoseRecord>> {
    let err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != 8 {
            return Err(err(line_no, format!("expected 8 fields, found {}", tokens.len())));
        }
        let mut v = [0.0; 7];
        for (slot, tok) in v.iter_mut().zip(&tokens[1..]) {
            *slot = tok
                .parse::<f64>()
                .map_err(|e| err(line_no, format!("bad number {tok:?}: {e}")))?;
            if !slot.is_finite() {
                return Err(err(line_no, format!("non-finite value {tok:?}")));
            }
        }
        let q = Quat::new(v[3], v[4], v[5], v[6]);
        if !q.is_unit(QUAT_LOAD_TOL) {
            return Err(Error::DataIntegrity(format!(
                "{}:{line_no}: quaternion norm {} is not within {QUAT_LOAD_TOL} of 1",
                path.display(),
                q.norm()
            )));
        }
        let pose = Pose::new([v[0], v[1], v[2]], q).map_err(|e| err(line_no, e.to_string()))?;
        out.push(PoseRecord {
            frame_id: tokens[0].to_string(),
            pose,
        });
    }
    Ok(out)
}

pub fn format_pose_text(records: &[PoseRecord]) -> String {
    let mut s = String::from(POSE_HEADER);
    for r in records {
        let p = r.pose.position;
        let q = r.pose.orientation;
        let _ = writeln!(
            s,
            "{} {} {} {} {} {} {} {}",
            r.frame_id,
            fmt_f64(p[0]),
            fmt_f64(p[1]),
            fmt_f64(p[2]),
            fmt_f64(q.w),
            fmt_f64(q.x),
            fmt_f64(q.y),
            fmt_f64(q.z)
        );
    }
    s
}

pub fn load_pose_file(path: &Path) -> Result<Vec<PoseRecord>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidInput(format!("cannot read {}: {e}", path.display())))?;
    parse_pose_text(&text, path)
}

pub fn save_pose_file(path: &Path, records: &[PoseRecord]) -> Result<()> {
    for r in records {
        if r.frame_id.is_empty() || r.frame_id.contains(char::is_whitespace) || r.frame_id.starts_with('#') {
            return Err(Error::InvalidInput(format!(
                "frame id {:?} cannot be written",
                r.frame_id
            )));
        }
    }
    std::fs::write(path, format_pose_text(records))?;
    Ok(())
}

/// Feature vectors keyed by frame id.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FeatureTable {
    pub dim: usize,
    pub rows: Vec<(String, Vec<f64>)>,
}

impl FeatureTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::with_capacity(24 + self.rows.len() * (12 + 8 * self.dim));
        buf.extend_from_slice(FEATURE_MAGIC);
        buf.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
        buf.extend_from_slice(&(self.rows.len() as u64).to_le_bytes());
        buf.extend_from_slice(&(self.dim as u64).to_le_bytes());
        for (id, v) in &self.rows {
            if v.len() != self.dim {
                return Err(Error::InvalidInput(format!(
                    "feature row {id} has {} values, table dim is {}",
                    v.len(),
                    self.dim
                )));
            }
            buf.extend_from_slice(&(id.len() as u32).to_le_bytes());
            buf.extend_from_slice(id.as_bytes());
            for x in v {
                buf.extend_from_slice(&x.to_le_bytes());
            }
        }
        Ok(buf)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != FEATURE_MAGIC {
            return Err(Error::Format("not a feature file (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != FEATURE_VERSION {
            return Err(Error::Format(format!("unsupported feature file version {version}")));
        }
        let count = r.u64()? as usize;
        let dim = r.u64()? as usize;
        let mut rows = Vec::with_capacity(count.min(1 << 20));
        for _ in 0..count {
            let n = r.u32()? as usize;
            let id = std::str::from_utf8(r.take(n)?)
                .map_err(|e| Error::Format(format!("frame id is not UTF-8: {e}")))?
                .to_string();
            let v = (0..dim).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
            rows.push((id, v));
        }
        if r.pos != bytes.len() {
            return Err(Error::Format(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(FeatureTable { dim, rows })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes =
            std::fs::read(path).map_err(|e| Error::InvalidInput(format!("cannot read {}: {e}", path.display())))?;
        FeatureTable::from_bytes(&bytes).map_err(|e| with_path(e, path))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }
}

fn with_path(e: Error, path: &Path) -> Error {
    match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", PathBuf::from(path).display())),
        other => other,
    }
}

/// Little-endian cursor shared by the binary formats.
pub(crate) struct Reader<'a> {
    pub bytes: &'a [u8],
    pub pos: usize,
}

impl<'a> Reader<'a> {
    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format("unexpected end of file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
