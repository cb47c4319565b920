//! Incremental clustering of 3D segment vectors.
//!
//! A segment joins the cluster whose center is nearest (over both segment
//! orientations) provided the distance is strictly below `tau` times the
//! center length. Otherwise it seeds a new cluster. Centers are running means
//! of the signed member vectors.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frontend::{EstimatedMap, ObservationId, SegmentObservation};
use crate::geometry::Vec3;

/// Relative membership threshold: 0.5 % of the center length.
pub const DEFAULT_TAU: f64 = 0.005;

pub type ClusterId = usize;

#[derive(Debug, Error, PartialEq)]
pub enum ClusterError {
    #[error("observation {0} has a zero-length segment vector; discarded")]
    ZeroLength(ObservationId),
    #[error("observation {observation} references missing map point {point}")]
    MissingPoint {
        observation: ObservationId,
        point: usize,
    },
    #[error("observation {0} is already clustered")]
    AlreadyAssigned(ObservationId),
}

/// Orientation a member enters its cluster with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "i8", try_from = "i8")]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

impl From<Sign> for i8 {
    fn from(s: Sign) -> i8 {
        match s {
            Sign::Plus => 1,
            Sign::Minus => -1,
        }
    }
}

impl TryFrom<i8> for Sign {
    type Error = String;

    fn try_from(v: i8) -> Result<Self, Self::Error> {
        match v {
            1 => Ok(Sign::Plus),
            -1 => Ok(Sign::Minus),
            other => Err(format!("sign must be 1 or -1, got {other}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterMember {
    pub observation: ObservationId,
    pub sign: Sign,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub id: ClusterId,
    pub center: Vec3,
    pub members: Vec<ClusterMember>,
}

impl Cluster {
    pub fn cardinality(&self) -> usize {
        self.members.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterStore {
    clusters: Vec<Cluster>,
    membership: Vec<Option<(ClusterId, Sign)>>,
    tau: f64,
    discarded: Vec<ObservationId>,
}

impl Default for ClusterStore {
    fn default() -> Self {
        Self::new(DEFAULT_TAU)
    }
}

/// Distance from `v` to `center` over both orientations of `v`, with the
/// orientation achieving it. Ties keep `+`.
pub fn oriented_distance(v: &Vec3, center: &Vec3) -> (f64, Sign) {
    let plus = (v - center).norm();
    let minus = (-v - center).norm();
    if minus < plus {
        (minus, Sign::Minus)
    } else {
        (plus, Sign::Plus)
    }
}

impl ClusterStore {
    pub fn new(tau: f64) -> Self {
        assert!(tau.is_finite() && tau > 0.0, "tau must be positive");
        Self {
            clusters: Vec::new(),
            membership: Vec::new(),
            tau,
            discarded: Vec::new(),
        }
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn clusters(&self) -> &[Cluster] {
        &self.clusters
    }

    pub fn cluster(&self, id: ClusterId) -> Option<&Cluster> {
        self.clusters.get(id)
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn membership(&self, obs: ObservationId) -> Option<(ClusterId, Sign)> {
        self.membership.get(obs).copied().flatten()
    }

    pub fn discarded(&self) -> &[ObservationId] {
        &self.discarded
    }

    fn vector_of(obs: &SegmentObservation, map: &EstimatedMap) -> Result<Vec3, ClusterError> {
        let (a, b) = obs.endpoints;
        let pa = map.position(a).ok_or(ClusterError::MissingPoint {
            observation: obs.id,
            point: a,
        })?;
        let pb = map.position(b).ok_or(ClusterError::MissingPoint {
            observation: obs.id,
            point: b,
        })?;
        Ok(pb - pa)
    }

    /// Places `obs` into an existing cluster or a new one and returns its id.
    pub fn assign(
        &mut self,
        obs: &SegmentObservation,
        map: &EstimatedMap,
    ) -> Result<ClusterId, ClusterError> {
        if self.membership(obs.id).is_some() {
            return Err(ClusterError::AlreadyAssigned(obs.id));
        }
        let v = Self::vector_of(obs, map)?;
        if !(v.norm() > 0.0) {
            self.discarded.push(obs.id);
            log::warn!("discarding observation {}: zero-length segment", obs.id);
            return Err(ClusterError::ZeroLength(obs.id));
        }

        let mut best: Option<(f64, ClusterId, Sign)> = None;
        for cluster in &self.clusters {
            let (d, sign) = oriented_distance(&v, &cluster.center);
            if d < self.tau * cluster.center.norm() && best.is_none_or(|(bd, _, _)| d < bd) {
                best = Some((d, cluster.id, sign));
            }
        }

        let (id, sign) = match best {
            Some((_, id, sign)) => {
                let cluster = &mut self.clusters[id];
                let n = cluster.members.len() as f64 + 1.0;
                cluster.center += (sign.value() * v - cluster.center) / n;
                cluster.members.push(ClusterMember {
                    observation: obs.id,
                    sign,
                });
                (id, sign)
            }
            None => {
                let id = self.clusters.len();
                self.clusters.push(Cluster {
                    id,
                    center: v,
                    members: vec![ClusterMember {
                        observation: obs.id,
                        sign: Sign::Plus,
                    }],
                });
                (id, Sign::Plus)
            }
        };
        if self.membership.len() <= obs.id {
            self.membership.resize(obs.id + 1, None);
        }
        self.membership[obs.id] = Some((id, sign));
        Ok(id)
    }

    /// Mean of the current signed member vectors of one cluster.
    pub fn batch_center(&self, id: ClusterId, map: &EstimatedMap) -> Result<Vec3, ClusterError> {
        let cluster = &self.clusters[id];
        let mut sum = Vec3::zeros();
        for m in &cluster.members {
            sum += m.sign.value() * Self::vector_of(&map.observations[m.observation], map)?;
        }
        Ok(sum / cluster.members.len() as f64)
    }

    /// Replaces every center with the mean of its members' current vectors.
    pub fn recompute_centers(&mut self, map: &EstimatedMap) -> Result<(), ClusterError> {
        for id in 0..self.clusters.len() {
            let c = self.batch_center(id, map)?;
            self.clusters[id].center = c;
        }
        Ok(())
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.clusters).expect("clusters serialize")
    }
}

/// Owned-value form of [`ClusterStore::assign`].
pub fn assign(
    mut store: ClusterStore,
    obs: &SegmentObservation,
    map: &EstimatedMap,
) -> (ClusterStore, Result<ClusterId, ClusterError>) {
    let r = store.assign(obs, map);
    (store, r)
}

/// Owned-value form of [`ClusterStore::recompute_centers`].
pub fn recompute_centers(
    mut store: ClusterStore,
    map: &EstimatedMap,
) -> Result<ClusterStore, ClusterError> {
    store.recompute_centers(map)?;
    Ok(store)
}
