//! Anchor-normal construction and the encode/decode scheme for plane normals.
//!
//! Normals are represented as an anchor id plus a residual 3-vector. Anchors
//! come from k-means over unit normals with cluster centers renormalized each
//! iteration, so every anchor stays on the unit sphere by construction.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{PlanarError, Result};
use crate::geometry::Vec3;

const UNIT_INPUT_TOL: f64 = 1e-6;
const MAX_ITERATIONS: usize = 100;

/// A set of k unit anchor normals; k = 7 is the usual configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorSet {
    anchors: Vec<Vec3>,
}

impl AnchorSet {
    pub const DEFAULT_K: usize = 7;

    pub fn new(anchors: Vec<Vec3>) -> Result<Self> {
        if anchors.is_empty() {
            return Err(PlanarError::Domain("anchor set must hold at least one anchor".into()));
        }
        for (i, a) in anchors.iter().enumerate() {
            if (a.norm() - 1.0).abs() > 1e-9 {
                return Err(PlanarError::Domain(format!(
                    "anchor {i} has norm {}, expected unit length",
                    a.norm()
                )));
            }
        }
        for i in 0..anchors.len() {
            for j in i + 1..anchors.len() {
                if (anchors[i] - anchors[j]).norm() < 1e-12 {
                    return Err(PlanarError::Domain(format!(
                        "anchors {i} and {j} coincide"
                    )));
                }
            }
        }
        Ok(Self { anchors })
    }

    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    pub fn anchors(&self) -> &[Vec3] {
        &self.anchors
    }
}

/// A normal expressed relative to an anchor set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncodedNormal {
    pub anchor_id: usize,
    pub residual: Vec3,
}

/// Spherical k-means over unit normals, deterministic for a fixed seed.
///
/// Centers are renormalized after every mean update; empty clusters are
/// reseeded with the point farthest from its current center. Iterates to an
/// assignment fixpoint or 100 iterations.
pub fn cluster_anchors(normals: &[Vec3], k: usize, seed: u64) -> Result<AnchorSet> {
    if k < 1 {
        return Err(PlanarError::Domain("k must be at least 1".into()));
    }
    for (i, n) in normals.iter().enumerate() {
        if (n.norm() - 1.0).abs() > UNIT_INPUT_TOL {
            return Err(PlanarError::Domain(format!(
                "input normal {i} has norm {}, expected unit length",
                n.norm()
            )));
        }
    }
    let mut distinct: Vec<Vec3> = Vec::new();
    for n in normals {
        if !distinct.iter().any(|d| (d - n).norm() < 1e-12) {
            distinct.push(*n);
        }
    }
    if distinct.len() < k {
        return Err(PlanarError::InsufficientData(format!(
            "need at least {k} distinct normals, got {}",
            distinct.len()
        )));
    }

    // sort before seeding so the init is invariant to input order
    distinct.sort_by(|a, b| {
        (a.x, a.y, a.z)
            .partial_cmp(&(b.x, b.y, b.z))
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    // Farthest-point init after a seeded first pick: each new center is the
    // distinct normal farthest from the centers chosen so far, which lands
    // exactly one seed in every well-separated cluster regardless of seed.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let first = *distinct.choose(&mut rng).expect("distinct is nonempty");
    let mut centers: Vec<Vec3> = vec![first];
    while centers.len() < k {
        let next = distinct
            .iter()
            .max_by(|a, b| {
                let da = centers.iter().map(|c| (*a - c).norm()).fold(f64::INFINITY, f64::min);
                let db = centers.iter().map(|c| (*b - c).norm()).fold(f64::INFINITY, f64::min);
                da.partial_cmp(&db).unwrap_or(std::cmp::Ordering::Equal)
            })
            .copied()
            .expect("distinct is nonempty");
        centers.push(next);
    }

    let mut assignment = vec![usize::MAX; normals.len()];
    for _ in 0..MAX_ITERATIONS {
        let mut changed = false;
        for (i, n) in normals.iter().enumerate() {
            let best = nearest_center(n, &centers);
            if assignment[i] != best {
                assignment[i] = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }

        let mut sums = vec![Vec3::zeros(); k];
        let mut counts = vec![0usize; k];
        for (i, n) in normals.iter().enumerate() {
            sums[assignment[i]] += n;
            counts[assignment[i]] += 1;
        }
        for c in 0..k {
            if counts[c] == 0 {
                // reseed with the point farthest from its assigned center
                let far = normals
                    .iter()
                    .enumerate()
                    .max_by(|(i, a), (j, b)| {
                        let da = (*a - centers[assignment[*i]]).norm();
                        let db = (*b - centers[assignment[*j]]).norm();
                        da.partial_cmp(&db).unwrap_or(std::cmp::Ordering::Equal)
                    })
                    .map(|(i, _)| i)
                    .expect("normals nonempty when k >= 1 clusters exist");
                centers[c] = normals[far];
                continue;
            }
            let mean = sums[c] / counts[c] as f64;
            if mean.norm() > 1e-12 {
                centers[c] = mean / mean.norm();
            }
        }
    }

    AnchorSet::new(centers)
}

fn nearest_center(n: &Vec3, centers: &[Vec3]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, c) in centers.iter().enumerate() {
        let d = (n - c).norm_squared();
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

/// Picks the Euclidean-nearest anchor (ties to the lowest index) and records
/// the residual `n − anchor`.
pub fn encode_normal(n: Vec3, anchors: &AnchorSet) -> Result<EncodedNormal> {
    if (n.norm() - 1.0).abs() > UNIT_INPUT_TOL {
        return Err(PlanarError::Domain(format!(
            "normal has norm {}, expected unit length",
            n.norm()
        )));
    }
    let anchor_id = nearest_center(&n, anchors.anchors());
    Ok(EncodedNormal { anchor_id, residual: n - anchors.anchors()[anchor_id] })
}

/// Recovers a unit normal: `(anchor + residual) / ‖anchor + residual‖`.
pub fn decode_normal(enc: &EncodedNormal, anchors: &AnchorSet) -> Result<Vec3> {
    let anchor = anchors.anchors().get(enc.anchor_id).ok_or_else(|| {
        PlanarError::Domain(format!(
            "anchor id {} out of range for {} anchors",
            enc.anchor_id,
            anchors.len()
        ))
    })?;
    let sum = anchor + enc.residual;
    let norm = sum.norm();
    if norm <= 1e-9 {
        return Err(PlanarError::DegenerateEncoding);
    }
    Ok(sum / norm)
}
