//! Timestamped pose sequences and the TUM trajectory text format
//! (`timestamp tx ty tz qx qy qz qw`, one pose per line).

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Quaternion, Translation3};
use thiserror::Error;

use crate::geometry::{PoseSE3, RotationSO3, Vec3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StampedPose {
    pub timestamp: f64,
    pub pose: PoseSE3,
}

impl StampedPose {
    pub fn new(timestamp: f64, pose: PoseSE3) -> Self {
        Self { timestamp, pose }
    }

    pub fn position(&self) -> Vec3 {
        self.pose.translation.vector
    }
}

#[derive(Debug, Error)]
pub enum TrajectoryError {
    #[error("timestamps must be strictly increasing: entry {index} has t={current} after t={previous}")]
    NonIncreasing {
        index: usize,
        previous: f64,
        current: f64,
    },
    #[error("entry {index} is not finite")]
    NonFinite { index: usize },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Poses ordered by strictly increasing timestamp.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    poses: Vec<StampedPose>,
}

impl Trajectory {
    pub fn new(poses: Vec<StampedPose>) -> Result<Self, TrajectoryError> {
        for (i, p) in poses.iter().enumerate() {
            let t = p.pose.translation.vector;
            if !p.timestamp.is_finite() || !t.iter().all(|c| c.is_finite()) {
                return Err(TrajectoryError::NonFinite { index: i });
            }
            if i > 0 && p.timestamp <= poses[i - 1].timestamp {
                return Err(TrajectoryError::NonIncreasing {
                    index: i,
                    previous: poses[i - 1].timestamp,
                    current: p.timestamp,
                });
            }
        }
        Ok(Self { poses })
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn poses(&self) -> &[StampedPose] {
        &self.poses
    }

    pub fn iter(&self) -> std::slice::Iter<'_, StampedPose> {
        self.poses.iter()
    }

    pub fn timestamps(&self) -> Vec<f64> {
        self.poses.iter().map(|p| p.timestamp).collect()
    }

    pub fn positions(&self) -> Vec<Vec3> {
        self.poses.iter().map(StampedPose::position).collect()
    }

    pub fn into_inner(self) -> Vec<StampedPose> {
        self.poses
    }

    /// Renders the trajectory in TUM format with 9 significant digits.
    pub fn to_tum_string(&self) -> String {
        let mut out = String::with_capacity(self.poses.len() * 96);
        out.push_str("# timestamp tx ty tz qx qy qz qw\n");
        for sp in &self.poses {
            let t = sp.pose.translation.vector;
            let q = sp.pose.rotation.quaternion();
            let fields = [sp.timestamp, t.x, t.y, t.z, q.i, q.j, q.k, q.w];
            let line: Vec<String> = fields.iter().map(|v| format_significant(*v, 9)).collect();
            let _ = writeln!(out, "{}", line.join(" "));
        }
        out
    }

    pub fn from_tum_str(text: &str) -> Result<Self, TrajectoryError> {
        let mut poses = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line
                .split(|c: char| c.is_whitespace() || c == ',')
                .filter(|s| !s.is_empty())
                .collect();
            if fields.len() != 8 {
                let message = if fields.len() < 8 && fields.len() >= 4 {
                    format!(
                        "expected 8 fields (timestamp tx ty tz qx qy qz qw), found {}; quaternion field missing",
                        fields.len()
                    )
                } else {
                    format!(
                        "expected 8 fields (timestamp tx ty tz qx qy qz qw), found {}",
                        fields.len()
                    )
                };
                return Err(TrajectoryError::Parse {
                    line: line_no,
                    message,
                });
            }
            let mut v = [0.0f64; 8];
            for (slot, field) in v.iter_mut().zip(&fields) {
                *slot = field.parse::<f64>().map_err(|e| TrajectoryError::Parse {
                    line: line_no,
                    message: format!("cannot parse `{field}` as a number: {e}"),
                })?;
                if !slot.is_finite() {
                    return Err(TrajectoryError::Parse {
                        line: line_no,
                        message: format!("non-finite value `{field}`"),
                    });
                }
            }
            let q = Quaternion::new(v[7], v[4], v[5], v[6]);
            if q.norm() < 1e-12 {
                return Err(TrajectoryError::Parse {
                    line: line_no,
                    message: "zero-norm quaternion".into(),
                });
            }
            let pose = PoseSE3::from_parts(
                Translation3::new(v[1], v[2], v[3]),
                RotationSO3::from_quaternion(q),
            );
            if let Some(last) = poses.last() {
                let last: &StampedPose = last;
                if v[0] <= last.timestamp {
                    return Err(TrajectoryError::Parse {
                        line: line_no,
                        message: format!(
                            "timestamp {} does not increase (previous {})",
                            v[0], last.timestamp
                        ),
                    });
                }
            }
            poses.push(StampedPose::new(v[0], pose));
        }
        Trajectory::new(poses)
    }

    pub fn read_tum(path: impl AsRef<Path>) -> Result<Self, TrajectoryError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| TrajectoryError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_tum_str(&text)
    }

    pub fn write_tum(&self, path: impl AsRef<Path>) -> Result<(), TrajectoryError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_tum_string()).map_err(|source| TrajectoryError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

impl<'a> IntoIterator for &'a Trajectory {
    type Item = &'a StampedPose;
    type IntoIter = std::slice::Iter<'a, StampedPose>;

    fn into_iter(self) -> Self::IntoIter {
        self.poses.iter()
    }
}

/// Fixed-point rendering with `digits` significant digits.
fn format_significant(v: f64, digits: i32) -> String {
    if v == 0.0 {
        return format!("{:.*}", (digits - 1) as usize, 0.0);
    }
    let magnitude = v.abs().log10().floor() as i32;
    let decimals = (digits - 1 - magnitude).max(0) as usize;
    format!("{v:.decimals$}")
}
