//! Camera model, projection/unprojection, rigid transforms, and the depth /
//! coordinate map containers used by every other module.
//!
//! All types are immutable values after construction and all operations are
//! pure functions, so they are safe to use from any number of workers.

use nalgebra::{Matrix3, Vector3};

use crate::error::{PlanarError, Result};

/// 3D point or vector in the camera frame, meters.
pub type Vec3 = Vector3<f64>;
/// 3×3 matrix over f64.
pub type Mat3 = Matrix3<f64>;

/// Pinhole intrinsics. Pixel centers sit at integer coordinates: pixel
/// `(u, v)` rays through the homogeneous point `(u, v, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        if !(fx > 0.0) || !(fy > 0.0) {
            return Err(PlanarError::Domain(format!(
                "focal lengths must be positive, got fx={fx}, fy={fy}"
            )));
        }
        if width < 1 || height < 1 {
            return Err(PlanarError::Domain(format!(
                "image size must be at least 1x1, got {width}x{height}"
            )));
        }
        Ok(Self { fx, fy, cx, cy, width, height })
    }

    /// The upper-triangular matrix `[fx 0 cx; 0 fy cy; 0 0 1]`.
    pub fn as_matrix(&self) -> Mat3 {
        Mat3::new(
            self.fx, 0.0, self.cx, //
            0.0, self.fy, self.cy, //
            0.0, 0.0, 1.0,
        )
    }

    /// The normalized ray direction `K⁻¹ (u, v, 1)` for a pixel.
    pub fn ray(&self, pixel: PixelCoord) -> Vec3 {
        Vec3::new(
            (pixel.u - self.cx) / self.fx,
            (pixel.v - self.cy) / self.fy,
            1.0,
        )
    }
}

/// Continuous pixel coordinates, `u` along columns and `v` along rows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelCoord {
    pub u: f64,
    pub v: f64,
}

impl PixelCoord {
    pub fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }
}

/// Rigid transform: rotation then translation, `p ↦ R p + t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Pose {
    rotation: Mat3,
    translation: Vec3,
}

impl Pose {
    const ORTHO_TOL: f64 = 1e-9;

    /// Builds a pose, checking `RᵀR = I` and `det R = 1` to 1e-9.
    pub fn new(rotation: Mat3, translation: Vec3) -> Result<Self> {
        let err = (rotation.transpose() * rotation - Mat3::identity()).abs().max();
        if err > Self::ORTHO_TOL {
            return Err(PlanarError::Domain(format!(
                "rotation is not orthonormal (max deviation {err:.3e})"
            )));
        }
        if (rotation.determinant() - 1.0).abs() > Self::ORTHO_TOL {
            return Err(PlanarError::Domain(format!(
                "rotation determinant is {} (must be +1)",
                rotation.determinant()
            )));
        }
        Ok(Self { rotation, translation })
    }

    pub fn identity() -> Self {
        Self { rotation: Mat3::identity(), translation: Vec3::zeros() }
    }

    pub fn rotation(&self) -> &Mat3 {
        &self.rotation
    }

    pub fn translation(&self) -> &Vec3 {
        &self.translation
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self { rotation: rt, translation: -(rt * self.translation) }
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Pose) -> Self {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }
}

/// Applies a rigid transform: `R p + t`.
pub fn transform(point: Vec3, pose: &Pose) -> Vec3 {
    pose.rotation * point + pose.translation
}

/// Lifts a pixel with a known depth into the camera frame: `z K⁻¹ x`.
pub fn unproject(pixel: PixelCoord, depth: f64, intrinsics: &CameraIntrinsics) -> Result<Vec3> {
    if !(depth > 0.0) {
        return Err(PlanarError::Domain(format!(
            "depth must be positive, got {depth}"
        )));
    }
    Ok(intrinsics.ray(pixel) * depth)
}

/// Perspective projection of a camera-frame point to pixel coordinates.
pub fn project(point: Vec3, intrinsics: &CameraIntrinsics) -> Result<PixelCoord> {
    if !(point.z > 0.0) {
        return Err(PlanarError::BehindCamera(point.z));
    }
    Ok(PixelCoord::new(
        intrinsics.fx * point.x / point.z + intrinsics.cx,
        intrinsics.fy * point.y / point.z + intrinsics.cy,
    ))
}

/// Per-pixel depth in meters, row-major. Depth 0 encodes a missing value and
/// is never treated as geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl DepthMap {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != width * height {
            return Err(PlanarError::Shape(format!(
                "expected {} values for a {}x{} depth map, got {}",
                width * height,
                width,
                height,
                values.len()
            )));
        }
        for (i, &z) in values.iter().enumerate() {
            if z != 0.0 && !(z > 0.0 && z.is_finite()) {
                return Err(PlanarError::Domain(format!(
                    "depth at index {i} is {z}; valid entries must be positive and finite"
                )));
            }
        }
        Ok(Self { width, height, values })
    }

    pub fn filled(width: usize, height: usize, depth: f64) -> Result<Self> {
        Self::new(width, height, vec![depth; width * height])
    }

    pub fn invalid(width: usize, height: usize) -> Self {
        Self { width, height, values: vec![0.0; width * height] }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, col: usize, row: usize) -> f64 {
        self.values[row * self.width + col]
    }

    /// Depth at a pixel, or `None` for the invalid sentinel.
    pub fn depth_at(&self, col: usize, row: usize) -> Option<f64> {
        let z = self.get(col, row);
        (z > 0.0).then_some(z)
    }

    pub fn set(&mut self, col: usize, row: usize, depth: f64) {
        self.values[row * self.width + col] = depth;
    }

    pub fn valid_count(&self) -> usize {
        self.values.iter().filter(|&&z| z > 0.0).count()
    }
}

/// Per-pixel 3D points with a validity flag; the backing store for the
/// coordinate maps the warping loss consumes.
#[derive(Debug, Clone, PartialEq)]
pub struct CoordinateMap {
    width: usize,
    height: usize,
    points: Vec<Vec3>,
    valid: Vec<bool>,
}

impl CoordinateMap {
    pub fn new(width: usize, height: usize, points: Vec<Vec3>, valid: Vec<bool>) -> Result<Self> {
        if points.len() != width * height || valid.len() != width * height {
            return Err(PlanarError::Shape(format!(
                "coordinate map buffers must hold {}x{} entries",
                width, height
            )));
        }
        for i in 0..points.len() {
            if valid[i] && !(points[i].z > 0.0) {
                return Err(PlanarError::Domain(format!(
                    "valid entry {i} has non-positive z = {}",
                    points[i].z
                )));
            }
        }
        Ok(Self { width, height, points, valid })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn is_valid(&self, col: usize, row: usize) -> bool {
        self.valid[row * self.width + col]
    }

    pub fn point(&self, col: usize, row: usize) -> Vec3 {
        self.points[row * self.width + col]
    }

    pub fn set_point(&mut self, col: usize, row: usize, p: Vec3) {
        self.points[row * self.width + col] = p;
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }
}

/// Converts a depth map to a 3D coordinate map by unprojecting every valid
/// pixel through its integer-coordinate ray.
pub fn depthmap_to_coords(depth: &DepthMap, intrinsics: &CameraIntrinsics) -> Result<CoordinateMap> {
    if depth.width() != intrinsics.width || depth.height() != intrinsics.height {
        return Err(PlanarError::Shape(format!(
            "depth map is {}x{} but intrinsics expect {}x{}",
            depth.width(),
            depth.height(),
            intrinsics.width,
            intrinsics.height
        )));
    }
    let mut points = Vec::with_capacity(depth.width() * depth.height());
    let mut valid = Vec::with_capacity(depth.width() * depth.height());
    for row in 0..depth.height() {
        for col in 0..depth.width() {
            match depth.depth_at(col, row) {
                Some(z) => {
                    let p = unproject(PixelCoord::new(col as f64, row as f64), z, intrinsics)?;
                    points.push(p);
                    valid.push(true);
                }
                None => {
                    points.push(Vec3::zeros());
                    valid.push(false);
                }
            }
        }
    }
    CoordinateMap::new(depth.width(), depth.height(), points, valid)
}

/// The four integer neighbors and bilinear weights for a sample position, or
/// `None` when the position falls outside `[0, W−1]×[0, H−1]`.
pub(crate) fn bilinear_footprint(
    width: usize,
    height: usize,
    at: PixelCoord,
) -> Option<[(usize, usize, f64); 4]> {
    if !(at.u >= 0.0 && at.u <= (width - 1) as f64 && at.v >= 0.0 && at.v <= (height - 1) as f64) {
        return None;
    }
    let u0 = (at.u.floor() as usize).min(width - 1);
    let v0 = (at.v.floor() as usize).min(height - 1);
    let u1 = (u0 + 1).min(width - 1);
    let v1 = (v0 + 1).min(height - 1);
    let fu = at.u - u0 as f64;
    let fv = at.v - v0 as f64;
    Some([
        (u0, v0, (1.0 - fu) * (1.0 - fv)),
        (u1, v0, fu * (1.0 - fv)),
        (u0, v1, (1.0 - fu) * fv),
        (u1, v1, fu * fv),
    ])
}

/// Bilinearly blends the four surrounding entries of a coordinate map.
///
/// Returns `None` when the sample position is out of frame or any of the four
/// neighbors is invalid; samples never blend across missing data.
pub fn bilinear_sample(map: &CoordinateMap, at: PixelCoord) -> Option<Vec3> {
    let footprint = bilinear_footprint(map.width(), map.height(), at)?;
    let mut acc = Vec3::zeros();
    for (col, row, w) in footprint {
        if !map.is_valid(col, row) {
            return None;
        }
        acc += map.point(col, row) * w;
    }
    Some(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn k() -> CameraIntrinsics {
        CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0, 640, 480).unwrap()
    }

    #[test]
    fn unproject_principal_ray() {
        let p = unproject(PixelCoord::new(320.0, 240.0), 1.0, &k()).unwrap();
        assert_relative_eq!(p, Vec3::new(0.0, 0.0, 1.0), epsilon = 1e-12);
    }

    #[test]
    fn unproject_one_focal_length_offset() {
        let p = unproject(PixelCoord::new(320.0 + 500.0, 240.0), 2.0, &k()).unwrap();
        assert_relative_eq!(p, Vec3::new(2.0, 0.0, 2.0), epsilon = 1e-12);
    }

    #[test]
    fn unproject_direct_evaluation() {
        let p = unproject(PixelCoord::new(100.0, 200.0), 1.7, &k()).unwrap();
        assert_relative_eq!(
            p,
            Vec3::new((100.0 - 320.0) / 500.0 * 1.7, (200.0 - 240.0) / 500.0 * 1.7, 1.7),
            epsilon = 1e-12
        );
    }

    #[test]
    fn unproject_rejects_nonpositive_depth() {
        assert!(unproject(PixelCoord::new(0.0, 0.0), 0.0, &k()).is_err());
        assert!(unproject(PixelCoord::new(0.0, 0.0), -1.0, &k()).is_err());
    }

    #[test]
    fn project_on_axis() {
        let px = project(Vec3::new(0.0, 0.0, 5.0), &k()).unwrap();
        assert_relative_eq!(px.u, 320.0, epsilon = 1e-12);
        assert_relative_eq!(px.v, 240.0, epsilon = 1e-12);
    }

    #[test]
    fn project_direct_evaluation() {
        let px = project(Vec3::new(1.0, 1.0, 2.0), &k()).unwrap();
        assert_relative_eq!(px.u, 570.0, epsilon = 1e-12);
        assert_relative_eq!(px.v, 490.0, epsilon = 1e-12);
    }

    #[test]
    fn project_rejects_behind_camera() {
        assert!(matches!(
            project(Vec3::new(0.0, 0.0, -1.0), &k()),
            Err(PlanarError::BehindCamera(_))
        ));
    }

    #[test]
    fn transform_identity_and_translation() {
        let p = Vec3::new(0.0, 0.0, 2.0);
        assert_eq!(transform(p, &Pose::identity()), p);
        let pose = Pose::new(Mat3::identity(), Vec3::new(1.0, 0.0, 0.0)).unwrap();
        assert_eq!(transform(p, &pose), Vec3::new(1.0, 0.0, 2.0));
    }

    #[test]
    fn transform_z_rotation() {
        let r = Mat3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        let pose = Pose::new(r, Vec3::zeros()).unwrap();
        assert_relative_eq!(
            transform(Vec3::new(1.0, 0.0, 0.0), &pose),
            Vec3::new(0.0, 1.0, 0.0),
            epsilon = 1e-12
        );
    }

    #[test]
    fn pose_rejects_non_orthonormal() {
        let r = Mat3::new(1.0, 0.1, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(Pose::new(r, Vec3::zeros()).is_err());
    }

    #[test]
    fn pose_compose_inverse_is_identity() {
        let angle: f64 = 0.7;
        let r = Mat3::new(
            angle.cos(), -angle.sin(), 0.0,
            angle.sin(), angle.cos(), 0.0,
            0.0, 0.0, 1.0,
        );
        let pose = Pose::new(r, Vec3::new(0.3, -0.2, 1.1)).unwrap();
        let id = pose.inverse().compose(&pose);
        assert!((id.rotation() - Mat3::identity()).abs().max() < 1e-9);
        assert!(id.translation().norm() < 1e-9);
    }

    #[test]
    fn depthmap_to_coords_matches_per_pixel_oracle() {
        let depth = DepthMap::new(2, 2, vec![1.0, 2.0, 0.0, 0.5]).unwrap();
        let k = CameraIntrinsics::new(100.0, 120.0, 0.5, 0.7, 2, 2).unwrap();
        let map = depthmap_to_coords(&depth, &k).unwrap();
        for row in 0..2 {
            for col in 0..2 {
                match depth.depth_at(col, row) {
                    Some(z) => {
                        let expect =
                            unproject(PixelCoord::new(col as f64, row as f64), z, &k).unwrap();
                        assert!(map.is_valid(col, row));
                        assert_relative_eq!(map.point(col, row), expect, epsilon = 1e-15);
                    }
                    None => assert!(!map.is_valid(col, row)),
                }
            }
        }
    }

    #[test]
    fn depthmap_to_coords_all_invalid() {
        let depth = DepthMap::invalid(3, 2);
        let k = CameraIntrinsics::new(10.0, 10.0, 1.0, 1.0, 3, 2).unwrap();
        let map = depthmap_to_coords(&depth, &k).unwrap();
        assert_eq!(map.valid_count(), 0);
    }

    #[test]
    fn depthmap_to_coords_rejects_dimension_mismatch() {
        let depth = DepthMap::filled(2, 2, 1.0).unwrap();
        let k = CameraIntrinsics::new(10.0, 10.0, 1.0, 1.0, 3, 2).unwrap();
        assert!(matches!(depthmap_to_coords(&depth, &k), Err(PlanarError::Shape(_))));
    }

    #[test]
    fn bilinear_sample_integer_pixel_is_exact() {
        let depth = DepthMap::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let k = CameraIntrinsics::new(10.0, 10.0, 0.5, 0.5, 2, 2).unwrap();
        let map = depthmap_to_coords(&depth, &k).unwrap();
        for row in 0..2 {
            for col in 0..2 {
                let got =
                    bilinear_sample(&map, PixelCoord::new(col as f64, row as f64)).unwrap();
                assert_eq!(got, map.point(col, row));
            }
        }
    }

    #[test]
    fn bilinear_sample_out_of_frame_is_none() {
        let depth = DepthMap::filled(4, 4, 1.0).unwrap();
        let k = CameraIntrinsics::new(10.0, 10.0, 2.0, 2.0, 4, 4).unwrap();
        let map = depthmap_to_coords(&depth, &k).unwrap();
        assert!(bilinear_sample(&map, PixelCoord::new(-0.5, 3.0)).is_none());
        assert!(bilinear_sample(&map, PixelCoord::new(1.0, 3.5)).is_none());
    }

    #[test]
    fn bilinear_sample_midpoint_is_mean() {
        let depth = DepthMap::new(2, 1, vec![1.0, 3.0]).unwrap();
        let k = CameraIntrinsics::new(10.0, 10.0, 0.5, 0.0, 2, 1).unwrap();
        let map = depthmap_to_coords(&depth, &k).unwrap();
        let mid = bilinear_sample(&map, PixelCoord::new(0.5, 0.0)).unwrap();
        let mean = (map.point(0, 0) + map.point(1, 0)) * 0.5;
        assert_relative_eq!(mid, mean, epsilon = 1e-15);
    }

    #[test]
    fn bilinear_sample_invalid_neighbor_is_none() {
        let depth = DepthMap::new(2, 1, vec![1.0, 0.0]).unwrap();
        let k = CameraIntrinsics::new(10.0, 10.0, 0.5, 0.0, 2, 1).unwrap();
        let map = depthmap_to_coords(&depth, &k).unwrap();
        assert!(bilinear_sample(&map, PixelCoord::new(0.5, 0.0)).is_none());
    }

    proptest! {
        #[test]
        fn project_unproject_round_trip(
            u in 0.0..639.0f64,
            v in 0.0..479.0f64,
            z in 0.05..50.0f64,
        ) {
            let k = k();
            let p = unproject(PixelCoord::new(u, v), z, &k).unwrap();
            prop_assert!((p.z - z).abs() < 1e-12);
            let px = project(p, &k).unwrap();
            prop_assert!((px.u - u).abs() < 1e-9);
            prop_assert!((px.v - v).abs() < 1e-9);
        }

        #[test]
        fn transform_inverse_round_trip(
            angle in -3.0..3.0f64,
            tx in -2.0..2.0f64,
            ty in -2.0..2.0f64,
            tz in -2.0..2.0f64,
            px in -5.0..5.0f64,
            py in -5.0..5.0f64,
            pz in -5.0..5.0f64,
        ) {
            let r = Mat3::new(
                angle.cos(), -angle.sin(), 0.0,
                angle.sin(), angle.cos(), 0.0,
                0.0, 0.0, 1.0,
            );
            let pose = Pose::new(r, Vec3::new(tx, ty, tz)).unwrap();
            let p = Vec3::new(px, py, pz);
            let back = transform(transform(p, &pose), &pose.inverse());
            prop_assert!((back - p).norm() < 1e-9);
        }
    }
}
