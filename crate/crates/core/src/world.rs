//! Synthetic corridor worlds with repeated door frames.
//!
//! The world frame has its origin at the first camera position, x along the
//! first corridor leg and z up. Door frames are two vertical jambs plus a
//! lintel; every jamb shares one archetype, every lintel on a corridor leg
//! with a given heading shares another. Clutter segments are unique and carry
//! archetype id [`CLUTTER_ARCHETYPE`].

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{Quaternion, Translation3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{rot_z, PoseSE3, RotationSO3, Vec3};
use crate::trajectory::{StampedPose, Trajectory};

/// Virtual camera frame rate.
pub const FRAME_RATE_HZ: f64 = 30.0;

/// Archetype id of a segment that belongs to no repeated class.
pub const CLUTTER_ARCHETYPE: i64 = -1;

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("invalid world spec: {0}")]
    InvalidSpec(String),
    #[error("world invariant violated: {0}")]
    Invariant(String),
    #[error("world file is truncated: missing section `{section}` (line {line}, column {column})")]
    Truncated {
        section: String,
        line: usize,
        column: usize,
    },
    #[error("malformed world file at line {line}, column {column}: {message}")]
    Malformed {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldSpec {
    /// Total length of the straight corridor legs (m).
    pub corridor_length: f64,
    /// Distance between consecutive door centers along a leg (m).
    pub door_spacing: f64,
    pub door_height: f64,
    pub door_width: f64,
    pub n_turns: u32,
    /// Heading change at each corner (degrees, counter-clockwise).
    pub turn_angle: f64,
    pub extra_unique_segments: u32,
    pub rng_seed: u64,
    pub corridor_width: f64,
    /// Height of the camera above the floor (m).
    pub camera_height: f64,
    /// Constant walking speed along the centerline (m/s).
    pub walk_speed: f64,
    /// Radius of the circular arc joining two legs (m).
    pub turn_radius: f64,
}

impl Default for WorldSpec {
    fn default() -> Self {
        Self {
            corridor_length: 40.0,
            door_spacing: 2.0,
            door_height: 2.1,
            door_width: 0.9,
            n_turns: 0,
            turn_angle: 90.0,
            extra_unique_segments: 10,
            rng_seed: 0,
            corridor_width: 2.0,
            camera_height: 1.5,
            walk_speed: 1.0,
            turn_radius: 1.0,
        }
    }
}

impl WorldSpec {
    pub fn validate(&self) -> Result<(), WorldError> {
        let positive = [
            ("corridor_length", self.corridor_length),
            ("door_spacing", self.door_spacing),
            ("door_height", self.door_height),
            ("door_width", self.door_width),
            ("corridor_width", self.corridor_width),
            ("camera_height", self.camera_height),
            ("walk_speed", self.walk_speed),
            ("turn_radius", self.turn_radius),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(WorldError::InvalidSpec(format!(
                    "{name} must be a finite positive length, got {v}"
                )));
            }
        }
        if !self.turn_angle.is_finite() {
            return Err(WorldError::InvalidSpec("turn_angle must be finite".into()));
        }
        if self.door_spacing >= self.corridor_length {
            return Err(WorldError::InvalidSpec(format!(
                "door_spacing ({}) must be less than corridor_length ({})",
                self.door_spacing, self.corridor_length
            )));
        }
        if self.door_width >= self.door_spacing {
            return Err(WorldError::InvalidSpec(format!(
                "door_width ({}) must be less than door_spacing ({})",
                self.door_width, self.door_spacing
            )));
        }
        let leg = self.leg_length();
        if leg < self.door_spacing {
            return Err(WorldError::InvalidSpec(format!(
                "each of the {} legs is {leg} m long, shorter than door_spacing ({}); no doors fit",
                self.n_turns + 1,
                self.door_spacing
            )));
        }
        Ok(())
    }

    fn leg_length(&self) -> f64 {
        self.corridor_length / f64::from(self.n_turns + 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldSegment {
    pub a: Vec3,
    pub b: Vec3,
    pub archetype: i64,
}

impl WorldSegment {
    pub fn vector(&self) -> Vec3 {
        self.b - self.a
    }

    pub fn is_clutter(&self) -> bool {
        self.archetype == CLUTTER_ARCHETYPE
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub segments: Vec<WorldSegment>,
    pub gt_trajectory: Trajectory,
    pub rng_seed: u64,
}

impl World {
    pub fn validate(&self) -> Result<(), WorldError> {
        for (i, s) in self.segments.iter().enumerate() {
            if !(s.a.iter().chain(s.b.iter()).all(|c| c.is_finite())) {
                return Err(WorldError::Invariant(format!("segment {i} is not finite")));
            }
            if s.vector().norm() <= 0.0 {
                return Err(WorldError::Invariant(format!("segment {i} has zero length")));
            }
            if s.archetype < CLUTTER_ARCHETYPE {
                return Err(WorldError::Invariant(format!(
                    "segment {i} has invalid archetype {}",
                    s.archetype
                )));
            }
        }
        let counts = self.archetype_sizes();
        if !counts.iter().any(|&(_, n)| n >= 2) {
            return Err(WorldError::Invariant(
                "no archetype has at least two member segments".into(),
            ));
        }
        if self.gt_trajectory.is_empty() {
            return Err(WorldError::Invariant("ground-truth trajectory is empty".into()));
        }
        Ok(())
    }

    /// `(archetype id, member count)` for every repeated archetype, ascending by id.
    pub fn archetype_sizes(&self) -> Vec<(i64, usize)> {
        let mut counts = std::collections::BTreeMap::new();
        for s in self.segments.iter().filter(|s| !s.is_clutter()) {
            *counts.entry(s.archetype).or_insert(0usize) += 1;
        }
        counts.into_iter().collect()
    }

    pub fn clutter_count(&self) -> usize {
        self.segments.iter().filter(|s| s.is_clutter()).count()
    }

    pub fn to_json_string(&self) -> String {
        let file = WorldFile::from(self);
        let mut s = serde_json::to_string_pretty(&file).expect("world serializes");
        s.push('\n');
        s
    }

    pub fn from_json_str(text: &str) -> Result<World, WorldError> {
        let file: WorldFile = serde_json::from_str(text).map_err(|e| classify_json_error(text, &e))?;
        let world = file.into_world()?;
        world.validate()?;
        Ok(world)
    }

    pub fn write_file(&self, path: impl AsRef<Path>) -> Result<(), WorldError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json_string()).map_err(|source| WorldError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn read_file(path: impl AsRef<Path>) -> Result<World, WorldError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| WorldError::Io {
            path: path.display().to_string(),
            source,
        })?;
        World::from_json_str(&text)
    }
}

pub fn world_to_file(w: &World, path: impl AsRef<Path>) -> Result<(), WorldError> {
    w.write_file(path)
}

pub fn world_from_file(path: impl AsRef<Path>) -> Result<World, WorldError> {
    World::read_file(path)
}

const SECTIONS: [&str; 3] = ["segments", "trajectory", "seed"];

fn classify_json_error(text: &str, e: &serde_json::Error) -> WorldError {
    let (line, column) = (e.line(), e.column());
    if e.is_eof() {
        let missing = SECTIONS
            .iter()
            .find(|s| !text.contains(&format!("\"{s}\"")))
            .copied()
            // Every key was seen, so the last section started is the one cut short.
            .unwrap_or_else(|| {
                SECTIONS
                    .iter()
                    .max_by_key(|s| text.find(&format!("\"{s}\"")).unwrap_or(0))
                    .copied()
                    .unwrap_or("seed")
            });
        return WorldError::Truncated {
            section: missing.to_string(),
            line,
            column,
        };
    }
    let message = e.to_string();
    if let Some(section) = SECTIONS
        .iter()
        .find(|s| message.contains(&format!("missing field `{s}`")))
    {
        return WorldError::Truncated {
            section: section.to_string(),
            line,
            column,
        };
    }
    WorldError::Malformed {
        line,
        column,
        message,
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WorldFile {
    segments: Vec<SegmentRecord>,
    trajectory: Vec<PoseRecord>,
    seed: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SegmentRecord {
    a: [f64; 3],
    b: [f64; 3],
    archetype: i64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PoseRecord {
    t: f64,
    /// `[w, x, y, z]`
    q: [f64; 4],
    p: [f64; 3],
}

impl From<&World> for WorldFile {
    fn from(w: &World) -> Self {
        WorldFile {
            segments: w
                .segments
                .iter()
                .map(|s| SegmentRecord {
                    a: s.a.into(),
                    b: s.b.into(),
                    archetype: s.archetype,
                })
                .collect(),
            trajectory: w
                .gt_trajectory
                .iter()
                .map(|sp| {
                    let q = sp.pose.rotation.quaternion();
                    PoseRecord {
                        t: sp.timestamp,
                        q: [q.w, q.i, q.j, q.k],
                        p: sp.pose.translation.vector.into(),
                    }
                })
                .collect(),
            seed: w.rng_seed,
        }
    }
}

impl WorldFile {
    fn into_world(self) -> Result<World, WorldError> {
        let segments = self
            .segments
            .into_iter()
            .map(|r| WorldSegment {
                a: r.a.into(),
                b: r.b.into(),
                archetype: r.archetype,
            })
            .collect();
        let mut poses = Vec::with_capacity(self.trajectory.len());
        for (i, r) in self.trajectory.into_iter().enumerate() {
            let q = Quaternion::new(r.q[0], r.q[1], r.q[2], r.q[3]);
            if (q.norm() - 1.0).abs() > 1e-6 {
                return Err(WorldError::Invariant(format!(
                    "trajectory entry {i}: quaternion is not unit length"
                )));
            }
            // Stored quaternions were unit when written; keep the bits as-is.
            let rotation = RotationSO3::new_unchecked(q);
            poses.push(StampedPose::new(
                r.t,
                PoseSE3::from_parts(Translation3::new(r.p[0], r.p[1], r.p[2]), rotation),
            ));
        }
        let gt_trajectory =
            Trajectory::new(poses).map_err(|e| WorldError::Invariant(e.to_string()))?;
        Ok(World {
            segments,
            gt_trajectory,
            rng_seed: self.seed,
        })
    }
}

enum PathPiece {
    Straight { start: Vec3, heading: f64, length: f64 },
    Arc { start: Vec3, heading: f64, radius: f64, sweep: f64 },
}

impl PathPiece {
    fn length(&self) -> f64 {
        match *self {
            PathPiece::Straight { length, .. } => length,
            PathPiece::Arc { radius, sweep, .. } => radius * sweep.abs(),
        }
    }

    /// Position and heading after travelling `s` along this piece.
    fn at(&self, s: f64) -> (Vec3, f64) {
        match *self {
            PathPiece::Straight { start, heading, .. } => {
                (start + s * Vec3::new(heading.cos(), heading.sin(), 0.0), heading)
            }
            PathPiece::Arc {
                start,
                heading,
                radius,
                sweep,
            } => {
                let dir = sweep.signum();
                let dtheta = dir * s / radius;
                // Center of curvature sits to the left (ccw) or right (cw) of the heading.
                let normal = Vec3::new(-heading.sin(), heading.cos(), 0.0) * dir;
                let center = start + radius * normal;
                let r0 = start - center;
                let pos = center + rot_z(dtheta) * r0;
                (pos, heading + dtheta)
            }
        }
    }

    fn end(&self) -> (Vec3, f64) {
        self.at(self.length())
    }
}

struct ArchetypeRegistry {
    vectors: Vec<Vec3>,
}

impl ArchetypeRegistry {
    /// Returns the id and canonical vector of the archetype matching `v` up to
    /// sign, registering a new one if none matches.
    fn intern(&mut self, v: Vec3) -> (i64, Vec3) {
        let tol = 1e-9 * v.norm();
        for (id, known) in self.vectors.iter().enumerate() {
            if (known - v).norm() <= tol {
                return (id as i64, *known);
            }
            if (known + v).norm() <= tol {
                return (id as i64, -known);
            }
        }
        self.vectors.push(v);
        (self.vectors.len() as i64 - 1, v)
    }
}

/// Builds a corridor world from its spec. Pure in `spec`.
pub fn generate_corridor(spec: &WorldSpec) -> Result<World, WorldError> {
    spec.validate()?;
    let leg_len = spec.leg_length();
    let sweep = spec.turn_angle.to_radians();

    let mut pieces = Vec::new();
    let mut legs = Vec::new();
    let (mut pos, mut heading) = (Vec3::zeros(), 0.0f64);
    for leg in 0..=spec.n_turns {
        let straight = PathPiece::Straight {
            start: pos,
            heading,
            length: leg_len,
        };
        legs.push((pos, heading));
        (pos, heading) = straight.end();
        pieces.push(straight);
        if leg < spec.n_turns && sweep != 0.0 {
            let arc = PathPiece::Arc {
                start: pos,
                heading,
                radius: spec.turn_radius,
                sweep,
            };
            pos = arc.end().0;
            // Snap accumulated rounding so each leg heading is exact.
            heading = legs[0].1 + f64::from(leg + 1) * sweep;
            pieces.push(arc);
        }
    }

    let floor_z = -spec.camera_height;
    let half_width = 0.5 * spec.corridor_width;
    let mut registry = ArchetypeRegistry { vectors: Vec::new() };
    let (jamb_id, jamb_vec) = registry.intern(Vec3::new(0.0, 0.0, spec.door_height));
    let mut segments = Vec::new();
    let doors_per_leg = (leg_len / spec.door_spacing).floor() as usize;
    let mut door_index = 0usize;
    for &(start, leg_heading) in &legs {
        let along = Vec3::new(leg_heading.cos(), leg_heading.sin(), 0.0);
        let left = Vec3::new(-leg_heading.sin(), leg_heading.cos(), 0.0);
        let (lintel_id, lintel_vec) = registry.intern(spec.door_width * along);
        for k in 0..doors_per_leg {
            let s = (k as f64 + 0.5) * spec.door_spacing;
            let side = if door_index % 2 == 0 { 1.0 } else { -1.0 };
            door_index += 1;
            let center = start + s * along + side * half_width * left;
            let base1 = center - 0.5 * spec.door_width * along + Vec3::new(0.0, 0.0, floor_z);
            let base2 = base1 + lintel_vec;
            let top1 = base1 + jamb_vec;
            let top2 = base2 + jamb_vec;
            segments.push(WorldSegment {
                a: base1,
                b: base1 + jamb_vec,
                archetype: jamb_id,
            });
            segments.push(WorldSegment {
                a: base2,
                b: base2 + jamb_vec,
                archetype: jamb_id,
            });
            segments.push(WorldSegment {
                a: top1,
                b: top1 + lintel_vec,
                archetype: lintel_id,
            });
            debug_assert!((top2 - (top1 + lintel_vec)).norm() < 1e-9);
        }
    }
    let archetype_vectors = registry.vectors.clone();

    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let mut clutter_vectors: Vec<Vec3> = Vec::new();
    let mut placed = 0;
    let mut attempts = 0;
    while placed < spec.extra_unique_segments {
        attempts += 1;
        if attempts > 100_000 {
            return Err(WorldError::InvalidSpec(format!(
                "could not place {} distinct clutter segments",
                spec.extra_unique_segments
            )));
        }
        let leg = rng.random_range(0..legs.len());
        let (start, leg_heading) = legs[leg];
        let along = Vec3::new(leg_heading.cos(), leg_heading.sin(), 0.0);
        let left = Vec3::new(-leg_heading.sin(), leg_heading.cos(), 0.0);
        let lo = 2.5f64.min(0.5 * leg_len);
        let hi = (leg_len - 0.5).max(lo + 1e-3);
        let s = rng.random_range(lo..hi);
        let lateral = rng.random_range(-0.9..0.9) * half_width;
        let height = rng.random_range(0.1..2.4);
        let mid = start + s * along + lateral * left + Vec3::new(0.0, 0.0, floor_z + height);
        let z: f64 = rng.random_range(-1.0..1.0);
        let phi: f64 = rng.random_range(0.0..2.0 * PI);
        let r = (1.0 - z * z).sqrt();
        let dir = Vec3::new(r * phi.cos(), r * phi.sin(), z);
        let length = rng.random_range(0.5..2.0);
        let v = length * dir;
        // Keep clutter well outside the 0.5 % membership radius of anything else.
        let distinct = archetype_vectors
            .iter()
            .chain(clutter_vectors.iter())
            .all(|u| (u - v).norm().min((u + v).norm()) > 0.05 * u.norm().max(v.norm()));
        if !distinct {
            continue;
        }
        clutter_vectors.push(v);
        segments.push(WorldSegment {
            a: mid - 0.5 * v,
            b: mid + 0.5 * v,
            archetype: CLUTTER_ARCHETYPE,
        });
        placed += 1;
    }

    let total: f64 = pieces.iter().map(PathPiece::length).sum();
    let step = spec.walk_speed / FRAME_RATE_HZ;
    let n_frames = (total / step).floor() as usize + 1;
    let mut poses = Vec::with_capacity(n_frames);
    for i in 0..n_frames {
        let mut s = i as f64 * step;
        let mut sample = pieces.last().expect("at least one leg").end();
        for piece in &pieces {
            let len = piece.length();
            if s <= len {
                sample = piece.at(s);
                break;
            }
            s -= len;
        }
        let (p, h) = sample;
        poses.push(StampedPose::new(
            i as f64 / FRAME_RATE_HZ,
            PoseSE3::from_parts(Translation3::from(p), rot_z(h)),
        ));
    }
    let gt_trajectory =
        Trajectory::new(poses).map_err(|e| WorldError::Invariant(e.to_string()))?;

    let world = World {
        segments,
        gt_trajectory,
        rng_seed: spec.rng_seed,
    };
    world.validate()?;
    Ok(world)
}

/// Heading (yaw about +z) of a pose whose forward axis is body x.
pub fn heading_of(pose: &PoseSE3) -> f64 {
    let f = pose.rotation * Vec3::x();
    f.y.atan2(f.x)
}
