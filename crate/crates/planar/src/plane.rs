//! Plane recovery from geometry: offset-from-depth averaging, least-squares
//! plane fitting via SVD, and plane-depth evaluation.
//!
//! A plane is the set `{X : n·X = d}` with unit normal `n` and offset `d` in
//! meters, stored in a canonical orientation with `d ≥ 0`.

use nalgebra::DMatrix;

use crate::error::{PlanarError, Result};
use crate::geometry::{CameraIntrinsics, DepthMap, PixelCoord, Vec3};

/// Denominator threshold below which a viewing ray counts as parallel to the
/// plane.
const RAY_PARALLEL_TOL: f64 = 1e-6;

/// Unit normal plus scalar offset, canonicalized so the offset is
/// non-negative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plane {
    normal: Vec3,
    offset: f64,
}

impl Plane {
    /// Builds a plane, normalizing the normal and flipping `(n, d)` to
    /// `(−n, −d)` when needed to keep `d ≥ 0`.
    pub fn new(normal: Vec3, offset: f64) -> Result<Self> {
        let norm = normal.norm();
        if !(norm > 1e-12) || !normal.iter().all(|x| x.is_finite()) {
            return Err(PlanarError::Domain(format!(
                "plane normal must be a finite nonzero vector, got {normal:?}"
            )));
        }
        if !offset.is_finite() {
            return Err(PlanarError::Domain(format!("plane offset must be finite, got {offset}")));
        }
        let mut n = normal / norm;
        let mut d = offset / norm;
        if d < 0.0 {
            n = -n;
            d = -d;
        }
        Ok(Self { normal: n, offset: d })
    }

    pub fn normal(&self) -> Vec3 {
        self.normal
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    /// Signed distance `n·X − d`; negative on the camera side for a plane
    /// facing the camera.
    pub fn signed_distance(&self, point: Vec3) -> f64 {
        self.normal.dot(&point) - self.offset
    }
}

/// Binary per-pixel membership for one plane instance.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceMask {
    width: usize,
    height: usize,
    membership: Vec<bool>,
    confidence: f64,
}

impl InstanceMask {
    pub fn new(width: usize, height: usize, membership: Vec<bool>, confidence: f64) -> Result<Self> {
        if membership.len() != width * height {
            return Err(PlanarError::Shape(format!(
                "mask buffer must hold {}x{} entries, got {}",
                width,
                height,
                membership.len()
            )));
        }
        if !(0.0..=1.0).contains(&confidence) {
            return Err(PlanarError::Domain(format!(
                "confidence must lie in [0,1], got {confidence}"
            )));
        }
        Ok(Self { width, height, membership, confidence })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self { width, height, membership: vec![false; width * height], confidence: 1.0 }
    }

    pub fn full(width: usize, height: usize) -> Self {
        Self { width, height, membership: vec![true; width * height], confidence: 1.0 }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn confidence(&self) -> f64 {
        self.confidence
    }

    pub fn with_confidence(mut self, confidence: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&confidence) {
            return Err(PlanarError::Domain(format!(
                "confidence must lie in [0,1], got {confidence}"
            )));
        }
        self.confidence = confidence;
        Ok(self)
    }

    pub fn contains(&self, col: usize, row: usize) -> bool {
        self.membership[row * self.width + col]
    }

    pub fn set(&mut self, col: usize, row: usize, member: bool) {
        self.membership[row * self.width + col] = member;
    }

    pub fn area(&self) -> usize {
        self.membership.iter().filter(|&&m| m).count()
    }

    pub fn membership(&self) -> &[bool] {
        &self.membership
    }

    pub fn intersection_area(&self, other: &InstanceMask) -> usize {
        self.membership
            .iter()
            .zip(&other.membership)
            .filter(|(a, b)| **a && **b)
            .count()
    }

    pub fn union_area(&self, other: &InstanceMask) -> usize {
        self.membership
            .iter()
            .zip(&other.membership)
            .filter(|(a, b)| **a || **b)
            .count()
    }

    pub fn iou(&self, other: &InstanceMask) -> f64 {
        let union = self.union_area(other);
        if union == 0 {
            return 0.0;
        }
        self.intersection_area(other) as f64 / union as f64
    }
}

/// Averages `nᵀ(z K⁻¹ x)` over the masked pixels with valid depth.
///
/// Invalid-depth pixels are excluded from both sums even when the mask claims
/// membership, so sensor holes cannot bias the offset.
pub fn offset_from_depth(
    normal: Vec3,
    depth: &DepthMap,
    mask: &InstanceMask,
    intrinsics: &CameraIntrinsics,
) -> Result<f64> {
    if depth.width() != mask.width() || depth.height() != mask.height() {
        return Err(PlanarError::Shape(format!(
            "depth {}x{} vs mask {}x{}",
            depth.width(),
            depth.height(),
            mask.width(),
            mask.height()
        )));
    }
    if (normal.norm() - 1.0).abs() > 1e-6 {
        return Err(PlanarError::Domain(format!(
            "normal has norm {}, expected unit length",
            normal.norm()
        )));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for row in 0..depth.height() {
        for col in 0..depth.width() {
            if !mask.contains(col, row) {
                continue;
            }
            let Some(z) = depth.depth_at(col, row) else { continue };
            let p = intrinsics.ray(PixelCoord::new(col as f64, row as f64)) * z;
            sum += normal.dot(&p);
            count += 1;
        }
    }
    if count == 0 {
        return Err(PlanarError::EmptySupport(
            "mask covers no valid-depth pixels".into(),
        ));
    }
    Ok(sum / count as f64)
}

/// Depth of the plane along a pixel's viewing ray: `z = d / (nᵀ K⁻¹ x)`.
///
/// Returns `None` when the ray is parallel to the plane or the intersection
/// lies behind the camera.
pub fn plane_depth(plane: &Plane, pixel: PixelCoord, intrinsics: &CameraIntrinsics) -> Option<f64> {
    let denom = plane.normal().dot(&intrinsics.ray(pixel));
    if denom.abs() < RAY_PARALLEL_TOL {
        return None;
    }
    let z = plane.offset() / denom;
    (z > 0.0).then_some(z)
}

/// A fitted plane together with the RMS point-to-plane residual.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneFit {
    pub plane: Plane,
    pub residual_rms: f64,
}

/// Least-squares plane through a point set: the normal is the right singular
/// vector of the smallest singular value of the centered point matrix.
pub fn fit_plane_svd(points: &[Vec3]) -> Result<PlaneFit> {
    if points.len() < 3 {
        return Err(PlanarError::InsufficientData(format!(
            "plane fit needs at least 3 points, got {}",
            points.len()
        )));
    }
    let centroid = points.iter().sum::<Vec3>() / points.len() as f64;
    let mut centered = DMatrix::<f64>::zeros(points.len(), 3);
    for (i, p) in points.iter().enumerate() {
        let c = p - centroid;
        centered[(i, 0)] = c.x;
        centered[(i, 1)] = c.y;
        centered[(i, 2)] = c.z;
    }
    let svd = centered.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    // singular values are not guaranteed sorted; order them ourselves
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .partial_cmp(&svd.singular_values[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    // collinear points leave two near-zero singular values
    let scale = svd.singular_values[order[0]].max(1.0);
    if order.len() < 3 || svd.singular_values[order[1]] <= 1e-9 * scale {
        return Err(PlanarError::DegenerateGeometry(
            "points are collinear; the plane is not unique".into(),
        ));
    }
    let least = order[2];
    let normal = Vec3::new(v_t[(least, 0)], v_t[(least, 1)], v_t[(least, 2)]);
    let plane = Plane::new(normal, normal.dot(&centroid))?;
    let mut sq = 0.0;
    for p in points {
        let r = plane.signed_distance(*p);
        sq += r * r;
    }
    Ok(PlaneFit { plane, residual_rms: (sq / points.len() as f64).sqrt() })
}

/// Which coefficient vector `param_difference` compares.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ParamNorm {
    /// `‖(n_a, d_a) − (n_b, d_b)‖₂` over the stacked 4-vector.
    #[default]
    Coefficients4,
    /// `‖n_a/d_a − n_b/d_b‖₂` over the offset-scaled 3-vector.
    Scaled3,
}

/// Euclidean distance between plane parameter vectors, 4-vector form by
/// default.
pub fn param_difference(a: &Plane, b: &Plane) -> f64 {
    param_difference_with(a, b, ParamNorm::Coefficients4)
}

pub fn param_difference_with(a: &Plane, b: &Plane, norm: ParamNorm) -> f64 {
    match norm {
        ParamNorm::Coefficients4 => {
            let dn = a.normal() - b.normal();
            let dd = a.offset() - b.offset();
            (dn.norm_squared() + dd * dd).sqrt()
        }
        ParamNorm::Scaled3 => (a.normal() / a.offset() - b.normal() / b.offset()).norm(),
    }
}

/// Renders the exact per-pixel depth of a plane over a full frame, leaving
/// pixels with no positive intersection invalid. Test and fixture helper.
pub fn render_plane_depth(plane: &Plane, intrinsics: &CameraIntrinsics) -> DepthMap {
    let mut out = DepthMap::invalid(intrinsics.width, intrinsics.height);
    for row in 0..intrinsics.height {
        for col in 0..intrinsics.width {
            if let Some(z) = plane_depth(plane, PixelCoord::new(col as f64, row as f64), intrinsics)
            {
                out.set(col, row, z);
            }
        }
    }
    out
}
