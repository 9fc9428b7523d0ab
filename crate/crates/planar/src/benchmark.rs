//! Ground-truth construction: multi-plane extraction from a depth frame,
//! pose-quality filtering, visible/complete mask rasterization, and layout
//! completion with convex/concave depth composition.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{PlanarError, Result};
use crate::geometry::{unproject, CameraIntrinsics, DepthMap, PixelCoord, Pose, Vec3};
use crate::plane::{fit_plane_svd, plane_depth, InstanceMask, Plane};

/// Default minimum visible area for a plane instance, in pixels.
pub const DEFAULT_MIN_AREA: usize = 500;
/// Default mean-discrepancy threshold for the pose-failure filter, meters.
pub const DEFAULT_POSE_THRESHOLD: f64 = 0.1;
/// Default depth tolerance for layout completion, meters.
pub const DEFAULT_COMPLETION_TOLERANCE: f64 = 0.2;
/// Default fraction of pixels that must sit behind the visible depth.
pub const DEFAULT_BEHIND_FRACTION: f64 = 0.9;
/// Layout subsets larger than this switch from exhaustive enumeration to
/// greedy inclusion by support.
const MAX_ENUMERATED_LAYOUT_PLANES: usize = 8;
/// Two planes closer than this in normal angle carry no convexity relation.
const PARALLEL_ANGLE_TOL_DEG: f64 = 0.5;

/// Per-frame ground-truth bundle.
#[derive(Debug, Clone)]
pub struct FrameAnnotation {
    pub planes: Vec<Plane>,
    pub visible_masks: Vec<InstanceMask>,
    pub complete_masks: Option<Vec<InstanceMask>>,
    pub is_layout: Vec<bool>,
    pub gt_depth: DepthMap,
    pub pose: Pose,
    pub intrinsics: CameraIntrinsics,
}

impl FrameAnnotation {
    /// Checks the structural invariants: disjoint visible masks, per-plane
    /// metadata counts, and complete masks containing their visible
    /// counterparts.
    pub fn validate(&self) -> Result<()> {
        let n = self.planes.len();
        if self.visible_masks.len() != n || self.is_layout.len() != n {
            return Err(PlanarError::Shape(format!(
                "{} planes but {} masks / {} layout flags",
                n,
                self.visible_masks.len(),
                self.is_layout.len()
            )));
        }
        let w = self.gt_depth.width();
        let h = self.gt_depth.height();
        let mut claimed = vec![false; w * h];
        for (i, m) in self.visible_masks.iter().enumerate() {
            if m.width() != w || m.height() != h {
                return Err(PlanarError::Shape(format!("visible mask {i} dimensions differ")));
            }
            for (j, &member) in m.membership().iter().enumerate() {
                if member {
                    if claimed[j] {
                        return Err(PlanarError::Domain(format!(
                            "visible mask {i} overlaps another at pixel {j}"
                        )));
                    }
                    claimed[j] = true;
                }
            }
        }
        if let Some(complete) = &self.complete_masks {
            if complete.len() != n {
                return Err(PlanarError::Shape(format!(
                    "{} complete masks for {n} planes",
                    complete.len()
                )));
            }
            for (i, (c, v)) in complete.iter().zip(&self.visible_masks).enumerate() {
                for j in 0..w * h {
                    if v.membership()[j] && !c.membership()[j] {
                        return Err(PlanarError::Domain(format!(
                            "complete mask {i} misses a visible pixel"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Convexity relation between two layout planes, as seen from the camera.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Convex,
    Concave,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairRelation {
    pub plane_a: usize,
    pub plane_b: usize,
    pub relation: Relation,
}

/// Greedy sequential RANSAC over the unprojected depth frame.
///
/// Repeatedly hypothesizes a plane from 3 sampled points, keeps the best
/// support after a fixed trial budget, refits with SVD on the inliers, and
/// removes them. Stops when the best support drops below `min_area` or
/// `max_planes` planes are found. Deterministic for a fixed seed.
pub fn extract_planes(
    depth: &DepthMap,
    intrinsics: &CameraIntrinsics,
    min_area: usize,
    inlier_tol: f64,
    max_planes: usize,
    seed: u64,
) -> Result<Vec<(Plane, InstanceMask)>> {
    const TRIALS: usize = 200;
    if depth.width() != intrinsics.width || depth.height() != intrinsics.height {
        return Err(PlanarError::Shape(format!(
            "depth is {}x{} but intrinsics expect {}x{}",
            depth.width(),
            depth.height(),
            intrinsics.width,
            intrinsics.height
        )));
    }
    let w = depth.width();
    let mut remaining: Vec<usize> = Vec::new();
    let mut points = vec![Vec3::zeros(); w * depth.height()];
    for row in 0..depth.height() {
        for col in 0..w {
            if let Some(z) = depth.depth_at(col, row) {
                let idx = row * w + col;
                points[idx] = unproject(PixelCoord::new(col as f64, row as f64), z, intrinsics)?;
                remaining.push(idx);
            }
        }
    }
    if remaining.len() < min_area {
        return Err(PlanarError::InsufficientData(format!(
            "{} valid pixels, need at least {min_area}",
            remaining.len()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut results = Vec::new();
    while results.len() < max_planes && remaining.len() >= min_area.max(3) {
        let mut best_inliers: Vec<usize> = Vec::new();
        for _ in 0..TRIALS {
            let a = points[remaining[rng.gen_range(0..remaining.len())]];
            let b = points[remaining[rng.gen_range(0..remaining.len())]];
            let c = points[remaining[rng.gen_range(0..remaining.len())]];
            let normal = (b - a).cross(&(c - a));
            if normal.norm() < 1e-9 {
                continue;
            }
            let Ok(plane) = Plane::new(normal, normal.dot(&a)) else { continue };
            let inliers: Vec<usize> = remaining
                .iter()
                .copied()
                .filter(|&i| plane.signed_distance(points[i]).abs() <= inlier_tol)
                .collect();
            if inliers.len() > best_inliers.len() {
                best_inliers = inliers;
            }
        }
        if best_inliers.len() < min_area {
            break;
        }
        let inlier_points: Vec<Vec3> = best_inliers.iter().map(|&i| points[i]).collect();
        let fit = match fit_plane_svd(&inlier_points) {
            Ok(fit) => fit,
            Err(PlanarError::DegenerateGeometry(_)) => break,
            Err(e) => return Err(e),
        };
        let mut mask = InstanceMask::empty(depth.width(), depth.height());
        for &i in &best_inliers {
            mask.set(i % w, i / w, true);
        }
        remaining.retain(|i| !mask.contains(i % w, i / w));
        results.push((fit.plane, mask));
    }
    Ok(results)
}

/// Outcome of the pose-quality check for one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseFilterDecision {
    pub keep: bool,
    /// Mean absolute depth discrepancy over planar regions, meters.
    pub discrepancy: f64,
}

/// Compares the assembled plane depth against a sensor depthmap over the
/// union of visible masks and drops the frame when the mean absolute
/// discrepancy exceeds the threshold.
pub fn pose_failure_filter(
    annotation: &FrameAnnotation,
    sensor_depth: &DepthMap,
    threshold: f64,
) -> Result<PoseFilterDecision> {
    let w = annotation.gt_depth.width();
    let h = annotation.gt_depth.height();
    if sensor_depth.width() != w || sensor_depth.height() != h {
        return Err(PlanarError::Shape(format!(
            "sensor depth is {}x{}, frame is {w}x{h}",
            sensor_depth.width(),
            sensor_depth.height()
        )));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for row in 0..h {
        for col in 0..w {
            let Some(sensor) = sensor_depth.depth_at(col, row) else { continue };
            for (plane, mask) in annotation.planes.iter().zip(&annotation.visible_masks) {
                if !mask.contains(col, row) {
                    continue;
                }
                if let Some(z) =
                    plane_depth(plane, PixelCoord::new(col as f64, row as f64), &annotation.intrinsics)
                {
                    sum += (z - sensor).abs();
                    count += 1;
                }
                break; // visible masks are disjoint
            }
        }
    }
    if count == 0 {
        return Err(PlanarError::EmptySupport(
            "no valid sensor pixels under any visible mask".into(),
        ));
    }
    let discrepancy = sum / count as f64;
    Ok(PoseFilterDecision { keep: discrepancy <= threshold, discrepancy })
}

/// Rasterizes with depth testing: at a pixel claimed by several full masks
/// only the plane with the smallest positive depth keeps it.
pub fn rasterize_visible(
    planes: &[Plane],
    full_masks: &[InstanceMask],
    intrinsics: &CameraIntrinsics,
) -> Result<Vec<InstanceMask>> {
    rasterize(planes, full_masks, intrinsics, true)
}

/// Rasterizes without depth testing: every claiming plane keeps every pixel
/// where its depth is defined, so masks may overlap.
pub fn rasterize_complete(
    planes: &[Plane],
    full_masks: &[InstanceMask],
    intrinsics: &CameraIntrinsics,
) -> Result<Vec<InstanceMask>> {
    rasterize(planes, full_masks, intrinsics, false)
}

fn rasterize(
    planes: &[Plane],
    full_masks: &[InstanceMask],
    intrinsics: &CameraIntrinsics,
    depth_test: bool,
) -> Result<Vec<InstanceMask>> {
    if planes.len() != full_masks.len() {
        return Err(PlanarError::Shape(format!(
            "{} planes vs {} masks",
            planes.len(),
            full_masks.len()
        )));
    }
    let w = intrinsics.width;
    let h = intrinsics.height;
    let mut out: Vec<InstanceMask> = planes.iter().map(|_| InstanceMask::empty(w, h)).collect();
    for row in 0..h {
        for col in 0..w {
            let pixel = PixelCoord::new(col as f64, row as f64);
            let mut nearest: Option<(usize, f64)> = None;
            for (i, (plane, mask)) in planes.iter().zip(full_masks).enumerate() {
                if !mask.contains(col, row) {
                    continue;
                }
                let Some(z) = plane_depth(plane, pixel, intrinsics) else { continue };
                if depth_test {
                    if nearest.map_or(true, |(_, best)| z < best) {
                        nearest = Some((i, z));
                    }
                } else {
                    out[i].set(col, row, true);
                }
            }
            if let Some((i, _)) = nearest {
                out[i].set(col, row, true);
            }
        }
    }
    for (o, m) in out.iter_mut().zip(full_masks) {
        *o = o.clone().with_confidence(m.confidence())?;
    }
    Ok(out)
}

/// Classifies the convexity of a layout plane pair from the camera's side.
///
/// The visible-region centroid of each plane is tested against the other
/// plane: the pair is concave when both centroids lie strictly on the camera
/// side (`n·X < d` in both cross-tests), convex otherwise. Near-parallel
/// planes carry no relation.
pub fn classify_pair(
    plane_a: &Plane,
    mask_a: &InstanceMask,
    plane_b: &Plane,
    mask_b: &InstanceMask,
    depth: &DepthMap,
    intrinsics: &CameraIntrinsics,
) -> Result<Option<Relation>> {
    let angle = plane_a
        .normal()
        .dot(&plane_b.normal())
        .abs()
        .clamp(-1.0, 1.0)
        .acos();
    if angle < PARALLEL_ANGLE_TOL_DEG.to_radians() {
        return Ok(None);
    }
    let centroid_a = mask_centroid_3d(mask_a, depth, intrinsics)?;
    let centroid_b = mask_centroid_3d(mask_b, depth, intrinsics)?;
    let concave =
        plane_b.signed_distance(centroid_a) < 0.0 && plane_a.signed_distance(centroid_b) < 0.0;
    Ok(Some(if concave { Relation::Concave } else { Relation::Convex }))
}

fn mask_centroid_3d(
    mask: &InstanceMask,
    depth: &DepthMap,
    intrinsics: &CameraIntrinsics,
) -> Result<Vec3> {
    let mut sum = Vec3::zeros();
    let mut count = 0usize;
    for row in 0..mask.height() {
        for col in 0..mask.width() {
            if !mask.contains(col, row) {
                continue;
            }
            let Some(z) = depth.depth_at(col, row) else { continue };
            sum += unproject(PixelCoord::new(col as f64, row as f64), z, intrinsics)?;
            count += 1;
        }
    }
    if count == 0 {
        return Err(PlanarError::EmptySupport("mask covers no valid-depth pixels".into()));
    }
    Ok(sum / count as f64)
}

/// Result of layout completion for one frame.
#[derive(Debug, Clone)]
pub struct LayoutCompletion {
    /// Indices (into the annotation's plane list) of the selected layout
    /// subset.
    pub selected: Vec<usize>,
    /// The composed complete depthmap of the selected candidate.
    pub complete_depth: DepthMap,
    /// Completed masks for the selected layout planes, parallel to
    /// `selected`; each contains the plane's visible mask.
    pub completed_masks: Vec<InstanceMask>,
    /// Visible-support pixel count of the selected candidate.
    pub support: usize,
    /// Fraction of compared pixels at or behind the visible depth.
    pub behind_fraction: f64,
}

/// Enumerates combinations of layout planes, composes candidate complete
/// depthmaps (per-pixel max for convex pairs, min for concave), validates the
/// behind-fraction rule against the visible depth, and picks the valid
/// candidate with the most support from visible layout regions.
///
/// Returns `Ok(None)` when no candidate survives validation; that is an
/// expected per-frame outcome, not a failure.
pub fn complete_layout(
    annotation: &FrameAnnotation,
    tolerance: f64,
    behind_fraction: f64,
) -> Result<Option<LayoutCompletion>> {
    let layout: Vec<usize> = (0..annotation.planes.len())
        .filter(|&i| annotation.is_layout[i])
        .collect();
    if layout.is_empty() {
        return Err(PlanarError::EmptySupport("no layout planes in the frame".into()));
    }

    let mut relations = std::collections::HashMap::new();
    for (ai, &a) in layout.iter().enumerate() {
        for &b in &layout[ai + 1..] {
            let rel = classify_pair(
                &annotation.planes[a],
                &annotation.visible_masks[a],
                &annotation.planes[b],
                &annotation.visible_masks[b],
                &annotation.gt_depth,
                &annotation.intrinsics,
            )?;
            relations.insert((a, b), rel);
        }
    }

    let subsets: Vec<Vec<usize>> = if layout.len() <= MAX_ENUMERATED_LAYOUT_PLANES {
        enumerate_subsets(&layout)
    } else {
        greedy_subsets(&layout, annotation, &relations, tolerance)
    };

    let mut best: Option<LayoutCompletion> = None;
    for subset in subsets {
        let Some(relation) = subset_relation(&subset, &relations) else { continue };
        let candidate = compose_candidate(&subset, relation, annotation);
        let Some(stats) = validate_candidate(&candidate, annotation, tolerance) else { continue };
        if stats.behind < behind_fraction {
            continue;
        }
        let support = candidate_support(&candidate, annotation, &layout, tolerance);
        let better = match &best {
            None => true,
            Some(b) => support > b.support,
        };
        if better {
            let completed_masks = completed_masks(&subset, &candidate, annotation);
            best = Some(LayoutCompletion {
                selected: subset,
                complete_depth: candidate,
                completed_masks,
                support,
                behind_fraction: stats.behind,
            });
        }
    }
    Ok(best)
}

fn enumerate_subsets(layout: &[usize]) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for bits in 1u32..(1u32 << layout.len()) {
        let subset: Vec<usize> = layout
            .iter()
            .enumerate()
            .filter(|(i, _)| bits & (1 << i) != 0)
            .map(|(_, &p)| p)
            .collect();
        out.push(subset);
    }
    out
}

/// For more than eight layout planes: grow one chain greedily by support,
/// still offering every singleton as a fallback candidate.
fn greedy_subsets(
    layout: &[usize],
    annotation: &FrameAnnotation,
    relations: &std::collections::HashMap<(usize, usize), Option<Relation>>,
    tolerance: f64,
) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = layout.iter().map(|&p| vec![p]).collect();
    let mut current: Vec<usize> = Vec::new();
    let mut pool: Vec<usize> = layout.to_vec();
    while !pool.is_empty() {
        let mut best: Option<(usize, usize)> = None; // (pool index, support)
        for (pi, &p) in pool.iter().enumerate() {
            let mut trial = current.clone();
            trial.push(p);
            trial.sort_unstable();
            let Some(relation) = subset_relation(&trial, relations) else { continue };
            let candidate = compose_candidate(&trial, relation, annotation);
            let support = candidate_support(&candidate, annotation, layout, tolerance);
            if best.map_or(true, |(_, s)| support > s) {
                best = Some((pi, support));
            }
        }
        let Some((pi, _)) = best else { break };
        current.push(pool.remove(pi));
        current.sort_unstable();
        if current.len() > 1 {
            out.push(current.clone());
        }
    }
    out
}

/// The shared relation of a subset, if every defined pair agrees. Singletons
/// compose trivially; mixed or unrelated (near-parallel) pairs yield no
/// well-defined fold and the subset is skipped.
fn subset_relation(
    subset: &[usize],
    relations: &std::collections::HashMap<(usize, usize), Option<Relation>>,
) -> Option<Relation> {
    if subset.len() == 1 {
        return Some(Relation::Concave); // fold over one plane; the kind is moot
    }
    let mut shared: Option<Relation> = None;
    for (i, &a) in subset.iter().enumerate() {
        for &b in &subset[i + 1..] {
            let key = if a < b { (a, b) } else { (b, a) };
            match relations.get(&key) {
                Some(Some(rel)) => match shared {
                    None => shared = Some(*rel),
                    Some(s) if s == *rel => {}
                    Some(_) => return None,
                },
                _ => return None,
            }
        }
    }
    shared
}

/// Pixel-wise fold of the subset's plane depths: min for concave, max for
/// convex. Min and max are associative and commutative, so the fold order
/// cannot matter.
fn compose_candidate(subset: &[usize], relation: Relation, annotation: &FrameAnnotation) -> DepthMap {
    let w = annotation.gt_depth.width();
    let h = annotation.gt_depth.height();
    let mut out = DepthMap::invalid(w, h);
    for row in 0..h {
        for col in 0..w {
            let pixel = PixelCoord::new(col as f64, row as f64);
            let mut acc: Option<f64> = None;
            for &p in subset {
                let Some(z) = plane_depth(&annotation.planes[p], pixel, &annotation.intrinsics)
                else {
                    continue;
                };
                acc = Some(match (acc, relation) {
                    (None, _) => z,
                    (Some(a), Relation::Concave) => a.min(z),
                    (Some(a), Relation::Convex) => a.max(z),
                });
            }
            if let Some(z) = acc {
                out.set(col, row, z);
            }
        }
    }
    out
}

struct CandidateStats {
    behind: f64,
}

/// Checks the behind-the-visible-depth rule: a pixel counts as behind when
/// `candidate ≥ visible − tolerance` (inclusive at equality).
fn validate_candidate(
    candidate: &DepthMap,
    annotation: &FrameAnnotation,
    tolerance: f64,
) -> Option<CandidateStats> {
    let mut compared = 0usize;
    let mut behind = 0usize;
    for (i, &z) in candidate.values().iter().enumerate() {
        if z <= 0.0 {
            continue;
        }
        let visible = annotation.gt_depth.values()[i];
        if visible <= 0.0 {
            continue;
        }
        compared += 1;
        if z >= visible - tolerance {
            behind += 1;
        }
    }
    if compared == 0 {
        return None;
    }
    Some(CandidateStats { behind: behind as f64 / compared as f64 })
}

/// Pixels of visible layout regions where the candidate agrees with the
/// visible depth within the tolerance.
fn candidate_support(
    candidate: &DepthMap,
    annotation: &FrameAnnotation,
    layout: &[usize],
    tolerance: f64,
) -> usize {
    let mut support = 0usize;
    for row in 0..candidate.height() {
        for col in 0..candidate.width() {
            let Some(z) = candidate.depth_at(col, row) else { continue };
            let Some(visible) = annotation.gt_depth.depth_at(col, row) else { continue };
            let on_layout = layout
                .iter()
                .any(|&p| annotation.visible_masks[p].contains(col, row));
            if on_layout && (z - visible).abs() <= tolerance {
                support += 1;
            }
        }
    }
    support
}

/// Per-plane completed masks: a plane keeps every pixel where it attains the
/// composed depth, unioned with its visible mask.
fn completed_masks(
    subset: &[usize],
    candidate: &DepthMap,
    annotation: &FrameAnnotation,
) -> Vec<InstanceMask> {
    let w = candidate.width();
    let h = candidate.height();
    subset
        .iter()
        .map(|&p| {
            let mut mask = InstanceMask::empty(w, h);
            for row in 0..h {
                for col in 0..w {
                    let attained = candidate.depth_at(col, row).is_some_and(|z| {
                        plane_depth(
                            &annotation.planes[p],
                            PixelCoord::new(col as f64, row as f64),
                            &annotation.intrinsics,
                        )
                        .is_some_and(|zp| (zp - z).abs() < 1e-6)
                    });
                    if attained || annotation.visible_masks[p].contains(col, row) {
                        mask.set(col, row, true);
                    }
                }
            }
            mask
        })
        .collect()
}
