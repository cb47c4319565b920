//! Trajectory alignment (Umeyama), ATE, RPE and natural cubic spline
//! interpolation of sparse ground truth.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix3, UnitQuaternion};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{PoseSE3, RotationSO3, Sim3, Vec3};
use crate::trajectory::{StampedPose, Trajectory, TrajectoryError};

/// Default association tolerance in seconds.
pub const DEFAULT_MATCH_TOLERANCE: f64 = 0.01;
/// Default RPE frame delta (one second at 30 Hz).
pub const DEFAULT_RPE_DELTA: usize = 30;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("need at least {needed} matched poses, found {found}")]
    TooFewPairs { needed: usize, found: usize },
    #[error("point sets differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("degenerate point set: all source points coincide")]
    Degenerate,
    #[error("spline needs at least 4 control points, got {0}")]
    TooFewControlPoints(usize),
    #[error("control timestamps must be strictly increasing")]
    UnsortedControlPoints,
    #[error("query t={t} outside control range [{min}, {max}]")]
    Extrapolation { t: f64, min: f64, max: f64 },
    #[error("rpe delta must be at least 1")]
    ZeroDelta,
    #[error("unknown alignment mode `{0}` (expected rigid or similarity)")]
    UnknownMode(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlignMode {
    Rigid,
    #[default]
    Similarity,
}

impl fmt::Display for AlignMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AlignMode::Rigid => "rigid",
            AlignMode::Similarity => "similarity",
        })
    }
}

impl FromStr for AlignMode {
    type Err = MetricsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rigid" => Ok(AlignMode::Rigid),
            "similarity" | "sim3" => Ok(AlignMode::Similarity),
            other => Err(MetricsError::UnknownMode(other.to_string())),
        }
    }
}

/// Matches poses by timestamp: each estimate, in time order, takes the
/// nearest unused ground-truth stamp within `tolerance`.
pub fn associate(est: &Trajectory, gt: &Trajectory, tolerance: f64) -> Vec<(usize, usize)> {
    let gt_t = gt.timestamps();
    let mut used = vec![false; gt_t.len()];
    let mut pairs = Vec::new();
    for (i, sp) in est.iter().enumerate() {
        let t = sp.timestamp;
        let k = gt_t.partition_point(|&g| g < t);
        let mut best: Option<(usize, f64)> = None;
        for j in [k.wrapping_sub(1), k] {
            if j >= gt_t.len() || used[j] {
                continue;
            }
            let d = (gt_t[j] - t).abs();
            if d <= tolerance && best.is_none_or(|(_, bd)| d < bd) {
                best = Some((j, d));
            }
        }
        if let Some((j, _)) = best {
            used[j] = true;
            pairs.push((i, j));
        }
    }
    pairs
}

/// Least-squares transform mapping `src` onto `dst` (Umeyama 1991).
pub fn umeyama(src: &[Vec3], dst: &[Vec3], with_scale: bool) -> Result<Sim3, MetricsError> {
    if src.len() != dst.len() {
        return Err(MetricsError::LengthMismatch(src.len(), dst.len()));
    }
    let n = src.len();
    if n < 3 {
        return Err(MetricsError::TooFewPairs { needed: 3, found: n });
    }
    let inv_n = 1.0 / n as f64;
    let mu_s = src.iter().sum::<Vec3>() * inv_n;
    let mu_d = dst.iter().sum::<Vec3>() * inv_n;
    let mut cov = Matrix3::zeros();
    let mut var_s = 0.0;
    for (s, d) in src.iter().zip(dst) {
        let (a, b) = (s - mu_s, d - mu_d);
        cov += b * a.transpose();
        var_s += a.norm_squared();
    }
    cov *= inv_n;
    var_s *= inv_n;
    if var_s <= f64::EPSILON * (1.0 + mu_s.norm_squared()) {
        return Err(MetricsError::Degenerate);
    }
    let svd = cov.svd(true, true);
    let (u, v_t) = (svd.u.expect("u requested"), svd.v_t.expect("v_t requested"));
    let mut sign = Matrix3::identity();
    if u.determinant() * v_t.determinant() < 0.0 {
        sign[(2, 2)] = -1.0;
    }
    let r = u * sign * v_t;
    let scale = if with_scale {
        (0..3).map(|i| svd.singular_values[i] * sign[(i, i)]).sum::<f64>() / var_s
    } else {
        1.0
    };
    // Rank-deficient covariances (e.g. parallel segments) leave part of the
    // SVD basis arbitrary; project onto the nearest rotation with a bounded
    // iteration.
    let rotation = UnitQuaternion::from_matrix_eps(&r, 1e-14, 200, UnitQuaternion::identity());
    let translation = mu_d - scale * (rotation * mu_s);
    Ok(Sim3::new(scale, rotation, translation))
}

fn matched_positions(est: &Trajectory, gt: &Trajectory, tolerance: f64) -> (Vec<Vec3>, Vec<Vec3>) {
    let pairs = associate(est, gt, tolerance);
    let e = pairs.iter().map(|&(i, _)| est.poses()[i].position()).collect();
    let g = pairs.iter().map(|&(_, j)| gt.poses()[j].position()).collect();
    (e, g)
}

/// Transform taking the estimated positions onto ground truth.
pub fn align(est: &Trajectory, gt: &Trajectory, mode: AlignMode) -> Result<Sim3, MetricsError> {
    let (e, g) = matched_positions(est, gt, DEFAULT_MATCH_TOLERANCE);
    umeyama(&e, &g, mode == AlignMode::Similarity)
}

/// RMSE of `gt_i - T(est_i)` for a fixed alignment.
pub fn ate_with_alignment(est: &[Vec3], gt: &[Vec3], alignment: &Sim3) -> f64 {
    assert_eq!(est.len(), gt.len(), "position lists differ in length");
    if est.is_empty() {
        return 0.0;
    }
    let sq: f64 = est
        .iter()
        .zip(gt)
        .map(|(e, g)| (g - alignment.apply(e)).norm_squared())
        .sum();
    (sq / est.len() as f64).sqrt()
}

pub fn ate(est: &Trajectory, gt: &Trajectory, mode: AlignMode) -> Result<f64, MetricsError> {
    let (e, g) = matched_positions(est, gt, DEFAULT_MATCH_TOLERANCE);
    let t = umeyama(&e, &g, mode == AlignMode::Similarity)?;
    Ok(ate_with_alignment(&e, &g, &t))
}

/// Translational RPE over frame offset `delta` between matched poses.
pub fn rpe(est: &Trajectory, gt: &Trajectory, delta: usize) -> Result<f64, MetricsError> {
    if delta == 0 {
        return Err(MetricsError::ZeroDelta);
    }
    let pairs = associate(est, gt, DEFAULT_MATCH_TOLERANCE);
    if pairs.len() < 2 || pairs.len() <= delta {
        return Err(MetricsError::TooFewPairs {
            needed: (delta + 1).max(2),
            found: pairs.len(),
        });
    }
    let (mut sq, mut count) = (0.0, 0usize);
    for w in 0..pairs.len().saturating_sub(delta) {
        let (ei, gi) = pairs[w];
        let (ej, gj) = pairs[w + delta];
        let e = est.poses();
        let g = gt.poses();
        let rel_e = e[ei].pose.inverse() * e[ej].pose;
        let rel_g = g[gi].pose.inverse() * g[gj].pose;
        let err = rel_g.inverse() * rel_e;
        sq += err.translation.vector.norm_squared();
        count += 1;
    }
    Ok((sq / count as f64).sqrt())
}

/// Natural cubic spline through `(times, values)` evaluated at `queries`.
pub fn spline_interpolate(
    times: &[f64],
    values: &[Vec3],
    queries: &[f64],
) -> Result<Vec<Vec3>, MetricsError> {
    let n = times.len();
    if values.len() != n {
        return Err(MetricsError::LengthMismatch(n, values.len()));
    }
    if n < 4 {
        return Err(MetricsError::TooFewControlPoints(n));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(MetricsError::UnsortedControlPoints);
    }
    let (t0, tn) = (times[0], times[n - 1]);
    if let Some(&t) = queries.iter().find(|&&t| !(t0..=tn).contains(&t)) {
        return Err(MetricsError::Extrapolation { t, min: t0, max: tn });
    }

    // Second derivatives M_i with M_0 = M_{n-1} = 0, by the Thomas algorithm.
    let h: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
    let m = n - 2;
    let mut diag = vec![0.0; m];
    let mut rhs = vec![Vec3::zeros(); m];
    let mut upper = vec![0.0; m];
    for k in 0..m {
        let i = k + 1;
        diag[k] = 2.0 * (h[i - 1] + h[i]);
        upper[k] = h[i];
        rhs[k] = 6.0 * ((values[i + 1] - values[i]) / h[i] - (values[i] - values[i - 1]) / h[i - 1]);
    }
    for k in 1..m {
        let w = h[k] / diag[k - 1];
        diag[k] -= w * upper[k - 1];
        let prev = rhs[k - 1];
        rhs[k] -= w * prev;
    }
    let mut second = vec![Vec3::zeros(); n];
    for k in (0..m).rev() {
        let next = if k + 1 < m { second[k + 2] } else { Vec3::zeros() };
        second[k + 1] = (rhs[k] - upper[k] * next) / diag[k];
    }

    let out = queries
        .iter()
        .map(|&t| {
            let i = times.partition_point(|&c| c <= t).clamp(1, n - 1) - 1;
            if t == times[i] {
                return values[i];
            }
            if t == times[i + 1] {
                return values[i + 1];
            }
            let hi = h[i];
            let a = (times[i + 1] - t) / hi;
            let b = (t - times[i]) / hi;
            a * values[i]
                + b * values[i + 1]
                + ((a * a * a - a) * second[i] + (b * b * b - b) * second[i + 1]) * (hi * hi / 6.0)
        })
        .collect();
    Ok(out)
}

/// Resamples `sparse` at `queries`: positions by natural cubic spline,
/// orientations by slerp between bracketing samples.
pub fn interpolate_trajectory(sparse: &Trajectory, queries: &[f64]) -> Result<Trajectory, MetricsError> {
    let times = sparse.timestamps();
    let positions = spline_interpolate(&times, &sparse.positions(), queries)?;
    let poses = queries
        .iter()
        .zip(positions)
        .map(|(&t, p)| {
            let i = times.partition_point(|&c| c <= t).clamp(1, times.len() - 1) - 1;
            let (a, b) = (&sparse.poses()[i], &sparse.poses()[i + 1]);
            let f = (t - a.timestamp) / (b.timestamp - a.timestamp);
            let rotation: RotationSO3 = a.pose.rotation.slerp(&b.pose.rotation, f);
            StampedPose::new(t, PoseSE3::from_parts(p.into(), rotation))
        })
        .collect();
    Ok(Trajectory::new(poses).expect("queries come from a valid trajectory"))
}

/// Scores in the layout of one results-table row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub ate_rmse: f64,
    pub rpe_rmse: f64,
    pub align_mode: AlignMode,
    pub rpe_delta: usize,
    pub alignment: Sim3,
    pub matched_pairs: usize,
}

pub const CSV_HEADER: &str = "mode,seed,ate_rmse,rpe_rmse,align_mode,rpe_delta";

impl MetricsReport {
    /// Aligns `est` to `gt`, then scores ATE and RPE. RPE is measured on the
    /// aligned estimate so a similarity alignment also fixes its scale.
    pub fn compute(
        est: &Trajectory,
        gt: &Trajectory,
        mode: AlignMode,
        rpe_delta: usize,
    ) -> Result<Self, MetricsError> {
        let (e, g) = matched_positions(est, gt, DEFAULT_MATCH_TOLERANCE);
        let alignment = umeyama(&e, &g, mode == AlignMode::Similarity)?;
        let ate_rmse = ate_with_alignment(&e, &g, &alignment);
        let aligned = Trajectory::new(
            est.iter()
                .map(|sp| StampedPose::new(sp.timestamp, alignment.apply_pose(&sp.pose)))
                .collect(),
        )
        .expect("alignment keeps timestamps");
        let rpe_rmse = rpe(&aligned, gt, rpe_delta)?;
        Ok(Self {
            ate_rmse,
            rpe_rmse,
            align_mode: mode,
            rpe_delta,
            alignment,
            matched_pairs: e.len(),
        })
    }

    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn csv_row(&self, mode: &str, seed: u64) -> String {
        format!(
            "{mode},{seed},{:.9},{:.9},{},{}",
            self.ate_rmse, self.rpe_rmse, self.align_mode, self.rpe_delta
        )
    }
}

/// Reads two TUM files and scores them.
pub fn evaluate_files(
    est: &std::path::Path,
    gt: &std::path::Path,
    mode: AlignMode,
    rpe_delta: usize,
    interpolate_gt: bool,
) -> Result<MetricsReport, EvalError> {
    let est = Trajectory::read_tum(est)?;
    let mut gt = Trajectory::read_tum(gt)?;
    if interpolate_gt {
        let (lo, hi) = match (gt.poses().first(), gt.poses().last()) {
            (Some(a), Some(b)) => (a.timestamp, b.timestamp),
            _ => return Err(MetricsError::TooFewControlPoints(0).into()),
        };
        let queries: Vec<f64> = est
            .timestamps()
            .into_iter()
            .filter(|t| (lo..=hi).contains(t))
            .collect();
        gt = interpolate_trajectory(&gt, &queries)?;
    }
    Ok(MetricsReport::compute(&est, &gt, mode, rpe_delta)?)
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}
