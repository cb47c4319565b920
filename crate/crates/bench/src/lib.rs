//! Seeded inputs shared by the benchmarks.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use segclust_core::frontend::{MapPoint, SegmentObservation};
use segclust_core::optimize::ClusterEdge;
use segclust_core::{EstimatedMap, OptProblem, Sign, Vec3};

fn random_vec(rng: &mut ChaCha8Rng, r: f64) -> Vec3 {
    Vec3::new(
        rng.random_range(-r..r),
        rng.random_range(-r..r),
        rng.random_range(-r..r),
    )
}

/// `n` segment observations drawn around `archetypes` random directions with
/// relative jitter `jitter`, each on its own pair of points.
pub fn segment_map(n: usize, archetypes: usize, jitter: f64, seed: u64) -> EstimatedMap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<Vec3> = (0..archetypes).map(|_| random_vec(&mut rng, 2.0)).collect();
    let mut map = EstimatedMap::default();
    for i in 0..n {
        let c = centers[rng.random_range(0..archetypes)];
        let v = c + random_vec(&mut rng, jitter * c.norm());
        let v = if rng.random_bool(0.5) { v } else { -v };
        let a = random_vec(&mut rng, 20.0);
        for (k, p) in [a, a + v].into_iter().enumerate() {
            map.points.push(MapPoint {
                id: 2 * i + k,
                position: p,
                first_seen_frame: i,
            });
        }
        map.observations.push(SegmentObservation {
            id: i,
            endpoints: (2 * i, 2 * i + 1),
            frame: i,
            world_segment: i,
        });
    }
    map
}

/// Problem with `segments` independent segments spread over `clusters`
/// clusters, each segment observed `views` times.
pub fn cluster_problem(segments: usize, clusters: usize, views: usize, seed: u64) -> OptProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<Vec3> = (0..clusters).map(|_| random_vec(&mut rng, 2.0)).collect();
    let mut init = HashMap::new();
    let mut edges = Vec::new();
    for s in 0..segments {
        let cluster = s % clusters;
        let a = random_vec(&mut rng, 20.0);
        init.insert(2 * s, a);
        init.insert(2 * s + 1, a + 1.01 * centers[cluster] + random_vec(&mut rng, 0.02));
        for v in 0..views {
            edges.push(ClusterEdge {
                cluster,
                observation: s * views + v,
                endpoints: (2 * s, 2 * s + 1),
                sign: Sign::Plus,
                center: centers[cluster],
            });
        }
    }
    OptProblem::from_edges(edges, &init, 1e-3).expect("every endpoint has a position")
}

/// A random point cloud and its image under a fixed similarity.
pub fn point_clouds(n: usize, seed: u64) -> (Vec<Vec3>, Vec<Vec3>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let src: Vec<Vec3> = (0..n).map(|_| random_vec(&mut rng, 10.0)).collect();
    let t = segclust_core::Sim3::new(
        1.3,
        segclust_core::RotationSO3::from_scaled_axis(Vec3::new(0.2, -0.5, 0.9)),
        Vec3::new(1.0, 2.0, 3.0),
    );
    let dst = src.iter().map(|p| t.apply(p)).collect();
    (src, dst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_are_well_formed() {
        let map = segment_map(50, 3, 0.002, 1);
        map.validate().unwrap();
        assert_eq!(map.observations.len(), 50);
        let p = cluster_problem(20, 4, 3, 1);
        assert_eq!(p.edges().len(), 60);
        assert_eq!(p.variables().len(), 40);
        let (a, b) = point_clouds(10, 1);
        assert_eq!(a.len(), b.len());
    }
}
