//! Pinhole camera model: projection, backprojection, cross-view reprojection
//! and the per-plane homography used to warp source views into the reference
//! frustum.
//!
//! Conventions (stated once, used everywhere):
//! - pixel centers at integer coordinates, principal point in the same frame;
//! - extrinsics are world -> camera (`p_cam = R p_world + T`);
//! - homographies are returned unnormalized, consumers divide by the
//!   homogeneous coordinate.

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CameraError {
    #[error("focal lengths must be positive, got fx={0}, fy={1}")]
    NonPositiveFocal(f64, f64),
    #[error("rotation is not orthonormal with det +1 (deviation {0:.3e})")]
    InvalidRotation(f64),
    #[error("depth range must satisfy 0 < min < max, got [{0}, {1}]")]
    InvalidDepthRange(f64, f64),
    #[error("point is behind the camera (z = {0})")]
    BehindCamera(f64),
    #[error("depth must be positive, got {0}")]
    NonPositiveDepth(f64),
    #[error("scale factor must be positive, got {0}")]
    NonPositiveScale(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self, CameraError> {
        if fx <= 0.0 || fy <= 0.0 {
            return Err(CameraError::NonPositiveFocal(fx, fy));
        }
        Ok(Self { fx, fy, cx, cy })
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    pub fn inverse_matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            1.0 / self.fx,
            0.0,
            -self.cx / self.fx,
            0.0,
            1.0 / self.fy,
            -self.cy / self.fy,
            0.0,
            0.0,
            1.0,
        )
    }

    /// Unit-depth viewing ray of pixel (x, y) in the camera frame (z = 1).
    #[inline]
    pub fn ray(&self, x: f64, y: f64) -> Vector3<f64> {
        Vector3::new((x - self.cx) / self.fx, (y - self.cy) / self.fy, 1.0)
    }
}

/// World -> camera rigid transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extrinsics {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Extrinsics {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, CameraError> {
        let dev = (rotation.transpose() * rotation - Matrix3::identity()).norm()
            + (rotation.determinant() - 1.0).abs();
        if dev > 1e-6 {
            return Err(CameraError::InvalidRotation(dev));
        }
        Ok(Self { rotation, translation })
    }

    pub fn identity() -> Self {
        Self { rotation: Matrix3::identity(), translation: Vector3::zeros() }
    }

    /// Camera center in world coordinates, -R^T T.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    pub intrinsics: Intrinsics,
    pub extrinsics: Extrinsics,
    pub depth_min: f64,
    pub depth_max: f64,
}

/// A projected point: pixel coordinate and depth along the camera z axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub x: f64,
    pub y: f64,
    pub depth: f64,
}

/// [`Projection`] plus its derivative with respect to the reference depth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReprojectionJacobian {
    pub x: f64,
    pub y: f64,
    pub depth: f64,
    pub dx_dd: f64,
    pub dy_dd: f64,
}

impl Camera {
    pub fn new(
        intrinsics: Intrinsics,
        extrinsics: Extrinsics,
        depth_min: f64,
        depth_max: f64,
    ) -> Result<Self, CameraError> {
        if !(0.0 < depth_min && depth_min < depth_max) {
            return Err(CameraError::InvalidDepthRange(depth_min, depth_max));
        }
        Ok(Self { intrinsics, extrinsics, depth_min, depth_max })
    }

    /// Project a world point; errors when it lies behind the camera.
    pub fn project(&self, p: Vector3<f64>) -> Result<Projection, CameraError> {
        let pc = self.extrinsics.rotation * p + self.extrinsics.translation;
        if pc.z <= 0.0 {
            return Err(CameraError::BehindCamera(pc.z));
        }
        Ok(Projection {
            x: self.intrinsics.fx * pc.x / pc.z + self.intrinsics.cx,
            y: self.intrinsics.fy * pc.y / pc.z + self.intrinsics.cy,
            depth: pc.z,
        })
    }

    /// World point of pixel (x, y) at camera depth d: R^T (d K^-1 (x,y,1) - T).
    pub fn backproject(&self, x: f64, y: f64, d: f64) -> Result<Vector3<f64>, CameraError> {
        if d <= 0.0 {
            return Err(CameraError::NonPositiveDepth(d));
        }
        let ray = self.intrinsics.ray(x, y);
        Ok(self.extrinsics.rotation.transpose() * (d * ray - self.extrinsics.translation))
    }
}

/// Relative rigid transform taking reference-camera coordinates to
/// source-camera coordinates.
fn relative_transform(reference: &Camera, source: &Camera) -> (Matrix3<f64>, Vector3<f64>) {
    let r_rel = source.extrinsics.rotation * reference.extrinsics.rotation.transpose();
    let t_rel = source.extrinsics.translation - r_rel * reference.extrinsics.translation;
    (r_rel, t_rel)
}

/// Map a reference pixel at depth `d` into the source view.
///
/// Equals `source.project(reference.backproject(x, y, d))` and is
/// differentiable in `d` (see [`reproject_with_jacobian`]).
pub fn reproject(
    reference: &Camera,
    source: &Camera,
    x: f64,
    y: f64,
    d: f64,
) -> Result<Projection, CameraError> {
    let j = reproject_with_jacobian(reference, source, x, y, d)?;
    Ok(Projection { x: j.x, y: j.y, depth: j.depth })
}

/// [`reproject`] plus analytic d(pixel)/d(depth).
pub fn reproject_with_jacobian(
    reference: &Camera,
    source: &Camera,
    x: f64,
    y: f64,
    d: f64,
) -> Result<ReprojectionJacobian, CameraError> {
    if d <= 0.0 {
        return Err(CameraError::NonPositiveDepth(d));
    }
    let (r_rel, t_rel) = relative_transform(reference, source);
    let a = r_rel * reference.intrinsics.ray(x, y);
    let b = t_rel;
    let pc = d * a + b;
    if pc.z <= 0.0 {
        return Err(CameraError::BehindCamera(pc.z));
    }
    let k = &source.intrinsics;
    let z2 = pc.z * pc.z;
    Ok(ReprojectionJacobian {
        x: k.fx * pc.x / pc.z + k.cx,
        y: k.fy * pc.y / pc.z + k.cy,
        depth: pc.z,
        dx_dd: k.fx * (a.x * b.z - a.z * b.x) / z2,
        dy_dd: k.fy * (a.y * b.z - a.z * b.y) / z2,
    })
}

/// Homography mapping homogeneous reference pixels to homogeneous source
/// pixels for the fronto-parallel plane at reference depth `d`:
/// `K_s (R_rel + t_rel n^T / d) K_r^-1` with `n = (0, 0, 1)` in the
/// reference camera frame. Returned unnormalized.
pub fn plane_homography(
    reference: &Camera,
    source: &Camera,
    d: f64,
) -> Result<Matrix3<f64>, CameraError> {
    if d <= 0.0 {
        return Err(CameraError::NonPositiveDepth(d));
    }
    let (r_rel, t_rel) = relative_transform(reference, source);
    let n = Vector3::new(0.0, 0.0, 1.0);
    let m = r_rel + t_rel * n.transpose() / d;
    Ok(source.intrinsics.matrix() * m * reference.intrinsics.inverse_matrix())
}

/// Rescale the intrinsics for a resized image; extrinsics and depth range are
/// unchanged.
pub fn scale_camera(cam: &Camera, factor: f64) -> Result<Camera, CameraError> {
    if factor <= 0.0 {
        return Err(CameraError::NonPositiveScale(factor));
    }
    Ok(Camera {
        intrinsics: Intrinsics {
            fx: cam.intrinsics.fx * factor,
            fy: cam.intrinsics.fy * factor,
            cx: cam.intrinsics.cx * factor,
            cy: cam.intrinsics.cy * factor,
        },
        extrinsics: cam.extrinsics,
        depth_min: cam.depth_min,
        depth_max: cam.depth_max,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_camera() -> Camera {
        Camera::new(
            Intrinsics::new(500.0, 500.0, 160.0, 120.0).unwrap(),
            Extrinsics::identity(),
            1.0,
            100.0,
        )
        .unwrap()
    }

    fn rotation_xyz(ax: f64, ay: f64, az: f64) -> Matrix3<f64> {
        let rx = Matrix3::new(1.0, 0.0, 0.0, 0.0, ax.cos(), -ax.sin(), 0.0, ax.sin(), ax.cos());
        let ry = Matrix3::new(ay.cos(), 0.0, ay.sin(), 0.0, 1.0, 0.0, -ay.sin(), 0.0, ay.cos());
        let rz = Matrix3::new(az.cos(), -az.sin(), 0.0, az.sin(), az.cos(), 0.0, 0.0, 0.0, 1.0);
        rz * ry * rx
    }

    fn offset_camera() -> Camera {
        Camera::new(
            Intrinsics::new(480.0, 510.0, 150.0, 130.0).unwrap(),
            Extrinsics::new(
                rotation_xyz(0.03, -0.05, 0.02),
                Vector3::new(-0.4, 0.1, 0.05),
            )
            .unwrap(),
            1.0,
            100.0,
        )
        .unwrap()
    }

    #[test]
    fn project_optical_axis() {
        let cam = identity_camera();
        let p = cam.project(Vector3::new(0.0, 0.0, 5.0)).unwrap();
        assert!((p.x - 160.0).abs() < 1e-12);
        assert!((p.y - 120.0).abs() < 1e-12);
        assert!((p.depth - 5.0).abs() < 1e-12);
    }

    #[test]
    fn project_pinhole_definition() {
        let cam = identity_camera();
        let p = cam.project(Vector3::new(0.2, 0.0, 4.0)).unwrap();
        assert!((p.x - (160.0 + 500.0 * 0.2 / 4.0)).abs() < 1e-12);
        assert!((p.y - 120.0).abs() < 1e-12);
    }

    #[test]
    fn project_behind_camera_errors() {
        let cam = identity_camera();
        assert!(matches!(
            cam.project(Vector3::new(0.0, 0.0, -1.0)),
            Err(CameraError::BehindCamera(_))
        ));
    }

    #[test]
    fn backproject_principal_point() {
        let cam = identity_camera();
        let p = cam.backproject(160.0, 120.0, 7.0).unwrap();
        assert!((p - Vector3::new(0.0, 0.0, 7.0)).norm() < 1e-12);
    }

    #[test]
    fn backproject_ray_linearity() {
        let cam = offset_camera();
        let center = cam.extrinsics.center();
        let p1 = cam.backproject(100.0, 80.0, 3.0).unwrap();
        let p2 = cam.backproject(100.0, 80.0, 6.0).unwrap();
        // doubling depth doubles the offset along the viewing ray
        assert!(((p2 - center) - 2.0 * (p1 - center)).norm() < 1e-9);
    }

    #[test]
    fn project_backproject_roundtrip() {
        let cam = offset_camera();
        for i in 0..20 {
            let x = 10.0 + (i as f64) * 13.7 % 300.0;
            let y = 5.0 + (i as f64) * 7.3 % 230.0;
            let d = 2.0 + (i as f64) * 0.9;
            let world = cam.backproject(x, y, d).unwrap();
            let p = cam.project(world).unwrap();
            assert!((p.x - x).abs() < 1e-6 && (p.y - y).abs() < 1e-6 && (p.depth - d).abs() < 1e-6);
        }
    }

    #[test]
    fn reproject_same_camera_is_identity() {
        let cam = offset_camera();
        let p = reproject(&cam, &cam, 42.0, 17.0, 9.5).unwrap();
        assert!((p.x - 42.0).abs() < 1e-9);
        assert!((p.y - 17.0).abs() < 1e-9);
        assert!((p.depth - 9.5).abs() < 1e-9);
    }

    #[test]
    fn reproject_rectified_pair_matches_disparity_formula() {
        let reference = identity_camera();
        // pure x translation by baseline b, same intrinsics
        let b = 0.3;
        let source = Camera::new(
            reference.intrinsics,
            Extrinsics::new(Matrix3::identity(), Vector3::new(-b, 0.0, 0.0)).unwrap(),
            1.0,
            100.0,
        )
        .unwrap();
        for &d in &[2.0, 5.0, 11.0] {
            let p = reproject(&reference, &source, 200.0, 90.0, d).unwrap();
            let expected = 200.0 - 500.0 * b / d;
            assert!((p.x - expected).abs() < 1e-9, "got {} expected {}", p.x, expected);
            assert!((p.y - 90.0).abs() < 1e-9);
        }
    }

    #[test]
    fn reproject_jacobian_matches_finite_differences() {
        let reference = identity_camera();
        let source = offset_camera();
        let (x, y, d) = (205.3, 101.7, 6.4);
        let j = reproject_with_jacobian(&reference, &source, x, y, d).unwrap();
        let h = 1e-5;
        let pp = reproject(&reference, &source, x, y, d + h).unwrap();
        let pm = reproject(&reference, &source, x, y, d - h).unwrap();
        let fd_x = (pp.x - pm.x) / (2.0 * h);
        let fd_y = (pp.y - pm.y) / (2.0 * h);
        assert!((j.dx_dd - fd_x).abs() / fd_x.abs().max(1e-8) < 1e-4);
        assert!((j.dy_dd - fd_y).abs() / fd_y.abs().max(1e-8) < 1e-4);
    }

    #[test]
    fn homography_identity_pair() {
        let cam = offset_camera();
        let h = plane_homography(&cam, &cam, 5.0).unwrap();
        let scaled = h / h[(2, 2)];
        assert!((scaled - Matrix3::identity()).norm() < 1e-9);
    }

    #[test]
    fn homography_agrees_with_reproject() {
        let reference = identity_camera();
        let source = offset_camera();
        for &d in &[2.5, 6.0, 20.0] {
            let h = plane_homography(&reference, &source, d).unwrap();
            for i in 0..25 {
                let x = (i % 5) as f64 * 70.0 + 10.0;
                let y = (i / 5) as f64 * 50.0 + 8.0;
                let hp = h * Vector3::new(x, y, 1.0);
                let (hx, hy) = (hp.x / hp.z, hp.y / hp.z);
                let r = reproject(&reference, &source, x, y, d).unwrap();
                assert!((hx - r.x).abs() < 1e-5 && (hy - r.y).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn homography_roundtrip_recovers_identity() {
        let reference = identity_camera();
        let source = offset_camera();
        let d = 7.0;
        // same world plane seen from the source: its depth there varies per
        // pixel, but composing forward and backward maps at matched depths
        // must return each tested pixel to itself.
        let h_fwd = plane_homography(&reference, &source, d).unwrap();
        for &(x, y) in &[(60.0, 40.0), (200.0, 150.0), (290.0, 30.0)] {
            let world = reference.backproject(x, y, d).unwrap();
            let src_cam_pt = source.extrinsics.rotation * world + source.extrinsics.translation;
            let h_bwd = plane_homography_for_reference_plane(&source, &reference, &src_cam_pt, d);
            let fwd = h_fwd * Vector3::new(x, y, 1.0);
            let back = h_bwd * Vector3::new(fwd.x / fwd.z, fwd.y / fwd.z, 1.0);
            assert!((back.x / back.z - x).abs() < 1e-4);
            assert!((back.y / back.z - y).abs() < 1e-4);
        }
    }

    // Backward homography for the reference-frame plane z_ref = d, expressed
    // in the source frame (plane normal rotated, offset from a point on it).
    fn plane_homography_for_reference_plane(
        source: &Camera,
        reference: &Camera,
        point_on_plane_src: &Vector3<f64>,
        _d: f64,
    ) -> Matrix3<f64> {
        let r_rel = reference.extrinsics.rotation * source.extrinsics.rotation.transpose();
        let t_rel = reference.extrinsics.translation - r_rel * source.extrinsics.translation;
        // plane in source frame: n_s^T p = dist
        let n_ref = Vector3::new(0.0, 0.0, 1.0);
        let n_s = source.extrinsics.rotation * reference.extrinsics.rotation.transpose() * n_ref;
        let dist = n_s.dot(point_on_plane_src);
        let m = r_rel + t_rel * n_s.transpose() / dist;
        reference.intrinsics.matrix() * m * source.intrinsics.inverse_matrix()
    }

    #[test]
    fn scale_camera_roundtrip_and_projection() {
        let cam = offset_camera();
        let same = scale_camera(&cam, 1.0).unwrap();
        assert_eq!(cam, same);
        let back = scale_camera(&scale_camera(&cam, 0.5).unwrap(), 2.0).unwrap();
        assert!((back.intrinsics.fx - cam.intrinsics.fx).abs() < 1e-6);
        assert!((back.intrinsics.cx - cam.intrinsics.cx).abs() < 1e-6);

        let world = cam.backproject(120.0, 77.0, 5.0).unwrap();
        let half = scale_camera(&cam, 0.5).unwrap();
        let p_full = cam.project(world).unwrap();
        let p_half = half.project(world).unwrap();
        assert!((p_half.x - 0.5 * p_full.x).abs() < 1e-9);
        assert!((p_half.y - 0.5 * p_full.y).abs() < 1e-9);
    }

    #[test]
    fn scale_camera_rejects_non_positive() {
        let cam = identity_camera();
        assert!(scale_camera(&cam, 0.0).is_err());
    }
}
