//! Piecewise-planar depthmap assembly and the two-view warping-consistency
//! loss, with analytic gradients with respect to the current view's
//! coordinate map.
//!
//! For every valid 3D point of the nearby view, the point is brought into the
//! current camera frame, projected, and the current view's coordinate map is
//! read back with bilinear interpolation. The blended point is transformed
//! into the nearby frame and compared against the original point; the loss is
//! the mean of these 3D distances over contributing pixels.

use crate::error::{PlanarError, Result};
use crate::geometry::{
    bilinear_footprint, project, transform, CameraIntrinsics, CoordinateMap, DepthMap, PixelCoord,
    Pose, Vec3,
};
use crate::plane::{plane_depth, InstanceMask, Plane};

/// Distances below this are treated as exactly zero when forming the
/// direction of the distance gradient.
const ZERO_DISTANCE_TOL: f64 = 1e-12;

/// Planes with disjoint masks over a shared frame, plus the pixel-wise
/// fallback depth used outside every mask.
#[derive(Debug, Clone)]
pub struct PlanarScene {
    planes: Vec<Plane>,
    masks: Vec<InstanceMask>,
    fallback_depth: DepthMap,
}

impl PlanarScene {
    pub fn new(planes: Vec<Plane>, masks: Vec<InstanceMask>, fallback_depth: DepthMap) -> Result<Self> {
        if planes.len() != masks.len() {
            return Err(PlanarError::Shape(format!(
                "{} planes vs {} masks",
                planes.len(),
                masks.len()
            )));
        }
        for (i, m) in masks.iter().enumerate() {
            if m.width() != fallback_depth.width() || m.height() != fallback_depth.height() {
                return Err(PlanarError::Shape(format!(
                    "mask {i} is {}x{} but the frame is {}x{}",
                    m.width(),
                    m.height(),
                    fallback_depth.width(),
                    fallback_depth.height()
                )));
            }
        }
        let mut claimed = vec![false; fallback_depth.width() * fallback_depth.height()];
        for (i, m) in masks.iter().enumerate() {
            for (j, &member) in m.membership().iter().enumerate() {
                if member {
                    if claimed[j] {
                        return Err(PlanarError::Domain(format!(
                            "mask {i} overlaps an earlier mask at pixel index {j}"
                        )));
                    }
                    claimed[j] = true;
                }
            }
        }
        Ok(Self { planes, masks, fallback_depth })
    }

    pub fn planes(&self) -> &[Plane] {
        &self.planes
    }

    pub fn masks(&self) -> &[InstanceMask] {
        &self.masks
    }

    pub fn fallback_depth(&self) -> &DepthMap {
        &self.fallback_depth
    }
}

/// Builds the piecewise-planar depthmap: masked pixels take their plane's
/// depth, everything else (including grazing or behind-camera plane rays)
/// falls back to the pixel-wise depth.
pub fn assemble_depth(scene: &PlanarScene, intrinsics: &CameraIntrinsics) -> Result<DepthMap> {
    let fallback = scene.fallback_depth();
    if fallback.width() != intrinsics.width || fallback.height() != intrinsics.height {
        return Err(PlanarError::Shape(format!(
            "fallback depth is {}x{} but intrinsics expect {}x{}",
            fallback.width(),
            fallback.height(),
            intrinsics.width,
            intrinsics.height
        )));
    }
    let mut out = fallback.clone();
    for (plane, mask) in scene.planes().iter().zip(scene.masks()) {
        for row in 0..fallback.height() {
            for col in 0..fallback.width() {
                if !mask.contains(col, row) {
                    continue;
                }
                if let Some(z) =
                    plane_depth(plane, PixelCoord::new(col as f64, row as f64), intrinsics)
                {
                    out.set(col, row, z);
                }
            }
        }
    }
    Ok(out)
}

/// How per-pixel 3D distances are aggregated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WarpLossKind {
    /// `(Σᵢ dᵢ) / N` — mean of distances.
    #[default]
    MeanDistance,
    /// `√(Σᵢ dᵢ²) / N` — the L2 norm of the distance vector over the count.
    RootSumSquared,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct WarpLossReport {
    pub loss: f64,
    pub contributing_pixels: usize,
    pub skipped_out_of_frame: usize,
    pub skipped_invalid: usize,
}

/// Per-entry gradient of the warping loss with respect to the current view's
/// coordinate map. Entries never touched by a bilinear footprint are exactly
/// zero.
#[derive(Debug, Clone, PartialEq)]
pub struct WarpGradient {
    width: usize,
    height: usize,
    values: Vec<Vec3>,
}

impl WarpGradient {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn at(&self, col: usize, row: usize) -> Vec3 {
        self.values[row * self.width + col]
    }

    pub fn values(&self) -> &[Vec3] {
        &self.values
    }
}

struct Contribution {
    distance: f64,
    /// Unit direction `(p_c^t − p_n)/d` in the nearby frame, zero at d = 0.
    direction: Vec3,
    footprint: [(usize, usize, f64); 4],
}

fn accumulate_contributions(
    current: &CoordinateMap,
    nearby: &CoordinateMap,
    pose_nearby_from_current: &Pose,
    intrinsics: &CameraIntrinsics,
) -> Result<(Vec<Contribution>, WarpLossReport)> {
    if current.width() != intrinsics.width
        || current.height() != intrinsics.height
        || nearby.width() != intrinsics.width
        || nearby.height() != intrinsics.height
    {
        return Err(PlanarError::Shape(format!(
            "coordinate maps must match the {}x{} intrinsics",
            intrinsics.width, intrinsics.height
        )));
    }
    let pose_current_from_nearby = pose_nearby_from_current.inverse();
    let mut contributions = Vec::new();
    let mut skipped_out_of_frame = 0usize;
    let mut skipped_invalid = 0usize;
    for row in 0..nearby.height() {
        for col in 0..nearby.width() {
            if !nearby.is_valid(col, row) {
                continue;
            }
            let p_n = nearby.point(col, row);
            let in_current = transform(p_n, &pose_current_from_nearby);
            let Ok(pixel) = project(in_current, intrinsics) else {
                skipped_out_of_frame += 1;
                continue;
            };
            let Some(footprint) = bilinear_footprint(current.width(), current.height(), pixel)
            else {
                skipped_out_of_frame += 1;
                continue;
            };
            if footprint.iter().any(|&(c, r, _)| !current.is_valid(c, r)) {
                skipped_invalid += 1;
                continue;
            }
            let mut p_c = Vec3::zeros();
            for &(c, r, w) in &footprint {
                p_c += current.point(c, r) * w;
            }
            let p_ct = transform(p_c, pose_nearby_from_current);
            let diff = p_ct - p_n;
            let distance = diff.norm();
            let direction = if distance > ZERO_DISTANCE_TOL {
                diff / distance
            } else {
                Vec3::zeros()
            };
            contributions.push(Contribution { distance, direction, footprint });
        }
    }
    if contributions.is_empty() {
        return Err(PlanarError::EmptyOverlap);
    }
    let report = WarpLossReport {
        loss: 0.0,
        contributing_pixels: contributions.len(),
        skipped_out_of_frame,
        skipped_invalid,
    };
    Ok((contributions, report))
}

fn aggregate(contributions: &[Contribution], kind: WarpLossKind) -> f64 {
    let n = contributions.len() as f64;
    match kind {
        WarpLossKind::MeanDistance => {
            // Neumaier compensated summation keeps the fold order-independent
            let mut sum = 0.0;
            let mut comp = 0.0;
            for c in contributions {
                let t = sum + c.distance;
                comp += if sum.abs() >= c.distance.abs() {
                    (sum - t) + c.distance
                } else {
                    (c.distance - t) + sum
                };
                sum = t;
            }
            (sum + comp) / n
        }
        WarpLossKind::RootSumSquared => {
            let mut sq = 0.0;
            for c in contributions {
                sq += c.distance * c.distance;
            }
            sq.sqrt() / n
        }
    }
}

pub fn warping_loss(
    current: &CoordinateMap,
    nearby: &CoordinateMap,
    pose_nearby_from_current: &Pose,
    intrinsics: &CameraIntrinsics,
) -> Result<WarpLossReport> {
    warping_loss_with(current, nearby, pose_nearby_from_current, intrinsics, WarpLossKind::default())
}

pub fn warping_loss_with(
    current: &CoordinateMap,
    nearby: &CoordinateMap,
    pose_nearby_from_current: &Pose,
    intrinsics: &CameraIntrinsics,
    kind: WarpLossKind,
) -> Result<WarpLossReport> {
    let (contributions, mut report) =
        accumulate_contributions(current, nearby, pose_nearby_from_current, intrinsics)?;
    report.loss = aggregate(&contributions, kind);
    Ok(report)
}

pub fn warping_loss_grad(
    current: &CoordinateMap,
    nearby: &CoordinateMap,
    pose_nearby_from_current: &Pose,
    intrinsics: &CameraIntrinsics,
) -> Result<(WarpLossReport, WarpGradient)> {
    warping_loss_grad_with(
        current,
        nearby,
        pose_nearby_from_current,
        intrinsics,
        WarpLossKind::default(),
    )
}

/// Analytic gradient through the rigid transform, the bilinear weights, and
/// the distance norm. The subgradient at distance zero is taken as zero.
pub fn warping_loss_grad_with(
    current: &CoordinateMap,
    nearby: &CoordinateMap,
    pose_nearby_from_current: &Pose,
    intrinsics: &CameraIntrinsics,
    kind: WarpLossKind,
) -> Result<(WarpLossReport, WarpGradient)> {
    let (contributions, mut report) =
        accumulate_contributions(current, nearby, pose_nearby_from_current, intrinsics)?;
    report.loss = aggregate(&contributions, kind);

    let n = contributions.len() as f64;
    let rt = pose_nearby_from_current.rotation().transpose();
    let mut values = vec![Vec3::zeros(); current.width() * current.height()];
    match kind {
        WarpLossKind::MeanDistance => {
            for c in &contributions {
                // d dᵢ/d p_c = Rᵀ·(p_c^t − p_n)/dᵢ, spread by bilinear weight
                let g = rt * c.direction / n;
                for &(col, row, w) in &c.footprint {
                    values[row * current.width() + col] += g * w;
                }
            }
        }
        WarpLossKind::RootSumSquared => {
            let sum_sq: f64 = contributions.iter().map(|c| c.distance * c.distance).sum();
            let root = sum_sq.sqrt();
            if root > ZERO_DISTANCE_TOL {
                for c in &contributions {
                    let g = rt * c.direction * (c.distance / (root * n));
                    for &(col, row, w) in &c.footprint {
                        values[row * current.width() + col] += g * w;
                    }
                }
            }
        }
    }
    Ok((
        report,
        WarpGradient { width: current.width(), height: current.height(), values },
    ))
}
