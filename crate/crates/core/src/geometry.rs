//! Coordinate transforms between world space, satellite pixels, and
//! equirectangular panorama angles.
//!
//! World frame: origin at the street-level camera, z up. The x axis runs
//! along the satellite image's v (row) direction and the y axis along u
//! (columns), so azimuth phi = atan2(x, y) measures from +u toward +v and
//! matches the pixel-space azimuth atan2(v - v0, u - u0) after the parallel
//! projection. Polar angle theta is 0 straight up, pi/2 at the horizon,
//! pi straight down.
//!
//! Satellite pixels: u is the fractional column, v the fractional row, with
//! pixel centers at integer coordinates. Panorama pixels: theta linear in
//! rows over [theta_min, theta_max], phi linear in columns over [-pi, pi),
//! both with half-pixel centering.

use crate::scalar::{wrap_angle, Real};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GeometryError {
    /// The world origin has no viewing direction.
    #[error("point at the camera origin has no direction")]
    OriginPoint,
    /// The satellite point directly at the camera with z = 0 has no direction.
    #[error("satellite point at the camera center with z = 0 has no direction")]
    DegeneratePoint,
    /// Rays through the zenith or nadir meet the satellite plane only at r = 0.
    #[error("pole ray (theta = 0 or pi) does not admit a positive cylinder radius")]
    PoleRay,
    #[error("invalid geometry parameter: {0}")]
    InvalidParameter(String),
}

/// Parallel-projection satellite camera: world meters map to pixels through
/// a uniform scale about the principal point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SatelliteCamera<R: Real> {
    pub center_u: R,
    pub center_v: R,
    /// Pixels per meter, strictly positive.
    pub scale: R,
}

impl<R: Real> SatelliteCamera<R> {
    pub fn new(center_u: R, center_v: R, scale: R) -> Result<Self, GeometryError> {
        if !(center_u.is_finite() && center_v.is_finite()) {
            return Err(GeometryError::InvalidParameter("camera center must be finite".into()));
        }
        if !(scale.is_finite() && scale > R::zero()) {
            return Err(GeometryError::InvalidParameter("scale must be finite and positive".into()));
        }
        Ok(Self { center_u, center_v, scale })
    }

    /// Camera centered on a width x height raster.
    pub fn centered(width: usize, height: usize, scale: R) -> Result<Self, GeometryError> {
        let half = R::from_f64(0.5);
        let u0 = (R::from_f64(width as f64) - R::one()) * half;
        let v0 = (R::from_f64(height as f64) - R::one()) * half;
        Self::new(u0, v0, scale)
    }
}

/// Equirectangular panorama raster and the camera it is levelled to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PanoramaGeometry<R: Real> {
    pub width: usize,
    pub height: usize,
    pub theta_min: R,
    pub theta_max: R,
    /// Street camera height above the ground plane, meters.
    pub camera_height: R,
    /// Global azimuth offset added to the column mapping, radians.
    pub phi_offset: R,
}

impl<R: Real> PanoramaGeometry<R> {
    pub fn new(
        width: usize,
        height: usize,
        theta_min: R,
        theta_max: R,
        camera_height: R,
    ) -> Result<Self, GeometryError> {
        if width == 0 || height == 0 {
            return Err(GeometryError::InvalidParameter("panorama dimensions must be nonzero".into()));
        }
        if !(theta_min >= R::zero() && theta_min < theta_max && theta_max <= R::PI()) {
            return Err(GeometryError::InvalidParameter(
                "theta range must satisfy 0 <= theta_min < theta_max <= pi".into(),
            ));
        }
        if !(camera_height.is_finite() && camera_height > R::zero()) {
            return Err(GeometryError::InvalidParameter("camera height must be positive".into()));
        }
        Ok(Self { width, height, theta_min, theta_max, camera_height, phi_offset: R::zero() })
    }

    pub fn with_phi_offset(mut self, phi_offset: R) -> Self {
        self.phi_offset = phi_offset;
        self
    }

    /// Polar-angle extent of one pixel row.
    pub fn theta_step(&self) -> R {
        (self.theta_max - self.theta_min) / R::from_f64(self.height as f64)
    }

    /// Azimuth extent of one pixel column.
    pub fn phi_step(&self) -> R {
        (R::PI() + R::PI()) / R::from_f64(self.width as f64)
    }

    /// Viewing angles of the pixel center (row i, column j).
    pub fn pixel_to_angles(&self, i: usize, j: usize) -> SphericalCoord<R> {
        debug_assert!(i < self.height && j < self.width);
        let half = R::from_f64(0.5);
        let theta = self.theta_min + (R::from_f64(i as f64) + half) * self.theta_step();
        let phi = -R::PI() + (R::from_f64(j as f64) + half) * self.phi_step() + self.phi_offset;
        SphericalCoord { theta, phi: wrap_angle(phi) }
    }

    /// Polar angle of the centers of row i.
    pub fn row_theta(&self, i: usize) -> R {
        let half = R::from_f64(0.5);
        self.theta_min + (R::from_f64(i as f64) + half) * self.theta_step()
    }

    /// Fractional (row, column) of a viewing direction plus an out-of-fov
    /// flag. Azimuth wraps; theta outside the span clamps to the nearest row
    /// and raises the flag.
    pub fn angles_to_pixel(&self, c: &SphericalCoord<R>) -> (R, R, bool) {
        let half = R::from_f64(0.5);
        let out = c.theta < self.theta_min || c.theta > self.theta_max;
        let theta = if c.theta < self.theta_min {
            self.theta_min
        } else if c.theta > self.theta_max {
            self.theta_max
        } else {
            c.theta
        };
        let mut row = (theta - self.theta_min) / self.theta_step() - half;
        let row_max = R::from_f64((self.height - 1) as f64);
        if row < R::zero() {
            row = R::zero();
        } else if row > row_max {
            row = row_max;
        }
        let phi = wrap_angle(c.phi - self.phi_offset);
        let col = (phi + R::PI()) / self.phi_step() - half;
        (row, col, out)
    }

    /// Nearest integer pixel for a viewing direction, None when theta falls
    /// outside the vertical field of view. The column wraps cyclically.
    pub fn nearest_pixel(&self, c: &SphericalCoord<R>) -> Option<(usize, usize)> {
        let (row, col, out) = self.angles_to_pixel(c);
        if out {
            return None;
        }
        let half = R::from_f64(0.5);
        let r = (row + half).floor().to_f64() as isize;
        let r = r.clamp(0, self.height as isize - 1) as usize;
        let w = self.width as isize;
        let mut j = (col + half).floor().to_f64() as isize;
        j = j.rem_euclid(w);
        Some((r, j as usize))
    }
}

/// Point in the world frame, meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorldPoint<R: Real> {
    pub x: R,
    pub y: R,
    pub z: R,
}

impl<R: Real> WorldPoint<R> {
    pub fn new(x: R, y: R, z: R) -> Self {
        Self { x, y, z }
    }
}

/// Viewing direction: theta in [0, pi] from zenith, phi in [-pi, pi).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphericalCoord<R: Real> {
    pub theta: R,
    pub phi: R,
}

impl<R: Real> SphericalCoord<R> {
    pub fn new(theta: R, phi: R) -> Self {
        Self { theta, phi }
    }
}

/// Parallel projection of a world point onto the satellite raster.
///
/// y runs along the u axis and x along v, so a point due +x lands below the
/// principal point (larger v) and a point due +y to its right (larger u).
pub fn world_to_satellite<R: Real>(p: &WorldPoint<R>, cam: &SatelliteCamera<R>) -> (R, R) {
    (cam.center_u + cam.scale * p.y, cam.center_v + cam.scale * p.x)
}

/// Viewing angles of a world point from the street camera at the origin.
pub fn world_to_panorama<R: Real>(p: &WorldPoint<R>) -> Result<SphericalCoord<R>, GeometryError> {
    let rho = (p.x * p.x + p.y * p.y).sqrt();
    if rho == R::zero() && p.z == R::zero() {
        return Err(GeometryError::OriginPoint);
    }
    // atan2 covers the z = 0 (horizon) and y = 0 (+-pi/2 azimuth) branches.
    Ok(SphericalCoord { theta: rho.atan2(p.z), phi: p.x.atan2(p.y) })
}

/// Viewing angles of a satellite pixel (u, v) whose surface sits at height z
/// meters relative to the street camera.
pub fn satellite_to_panorama<R: Real>(
    u: R,
    v: R,
    z: R,
    cam: &SatelliteCamera<R>,
) -> Result<SphericalCoord<R>, GeometryError> {
    let du = u - cam.center_u;
    let dv = v - cam.center_v;
    let rho = (du * du + dv * dv).sqrt();
    if rho == R::zero() && z == R::zero() {
        return Err(GeometryError::DegeneratePoint);
    }
    Ok(SphericalCoord { theta: rho.atan2(cam.scale * z), phi: dv.atan2(du) })
}

/// Satellite pixel (u, v) and height z met by the ray (theta, phi) at
/// horizontal cylinder radius r meters. Inverse of [`satellite_to_panorama`]
/// for r = hypot(v - v0, u - u0) / scale.
///
/// Rays through the poles return (u0, v0) with z = +-infinity when r = 0 and
/// fail with [`GeometryError::PoleRay`] otherwise; callers clamp z to their
/// plane-height bounds.
pub fn panorama_ray_to_satellite<R: Real>(
    c: &SphericalCoord<R>,
    r: R,
    cam: &SatelliteCamera<R>,
) -> Result<(R, R, R), GeometryError> {
    debug_assert!(r >= R::zero());
    if c.theta == R::zero() || c.theta == R::PI() {
        if r > R::zero() {
            return Err(GeometryError::PoleRay);
        }
        let z = if c.theta == R::zero() { R::infinity() } else { R::neg_infinity() };
        return Ok((cam.center_u, cam.center_v, z));
    }
    let u = cam.center_u + cam.scale * r * c.phi.cos();
    let v = cam.center_v + cam.scale * r * c.phi.sin();
    let z = if c.theta == R::FRAC_PI_2() { R::zero() } else { r / c.theta.tan() };
    Ok((u, v, z))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    fn cam(u0: f64, v0: f64, s: f64) -> SatelliteCamera<f64> {
        SatelliteCamera::new(u0, v0, s).unwrap()
    }

    #[test]
    fn world_to_satellite_scales_about_center() {
        let c = cam(128.0, 128.0, 10.0);
        assert_eq!(world_to_satellite(&WorldPoint::new(0.0, 0.0, 5.0), &c), (128.0, 128.0));
        // +x is parallel to v, +y to u.
        assert_eq!(world_to_satellite(&WorldPoint::new(1.0, 0.0, 0.0), &c), (128.0, 138.0));
        let c = cam(100.0, 100.0, 4.0);
        assert_eq!(world_to_satellite(&WorldPoint::new(-2.0, 3.0, 7.0), &c), (112.0, 92.0));
    }

    #[test]
    fn world_to_panorama_axes() {
        let c = world_to_panorama(&WorldPoint::new(0.0, 1.0, 0.0)).unwrap();
        assert_eq!((c.theta, c.phi), (FRAC_PI_2, 0.0));
        let c = world_to_panorama(&WorldPoint::new(1.0, 0.0, 0.0)).unwrap();
        assert_eq!((c.theta, c.phi), (FRAC_PI_2, FRAC_PI_2));
        let c = world_to_panorama(&WorldPoint::new(0.0, 1.0, 1.0)).unwrap();
        assert!((c.theta - FRAC_PI_4).abs() < 1e-15);
        assert_eq!(c.phi, 0.0);
        assert_eq!(world_to_panorama(&WorldPoint::<f64>::new(0.0, 0.0, 0.0)), Err(GeometryError::OriginPoint));
    }

    #[test]
    fn satellite_to_panorama_branches() {
        let c = cam(128.0, 128.0, 10.0);
        let a = satellite_to_panorama(128.0, 138.0, 0.0, &c).unwrap();
        assert_eq!((a.theta, a.phi), (FRAC_PI_2, FRAC_PI_2));
        let a = satellite_to_panorama(138.0, 128.0, 1.0, &c).unwrap();
        assert!((a.theta - FRAC_PI_4).abs() < 1e-15);
        assert_eq!(a.phi, 0.0);
        let a = satellite_to_panorama(128.0, 118.0, -1.0, &c).unwrap();
        assert!((a.theta - 3.0 * FRAC_PI_4).abs() < 1e-15);
        assert_eq!(a.phi, -FRAC_PI_2);
        assert_eq!(
            satellite_to_panorama(128.0, 128.0, 0.0, &c),
            Err(GeometryError::DegeneratePoint)
        );
        // Directly at the center with z != 0 is the zenith / nadir, not an error.
        let a = satellite_to_panorama(128.0, 128.0, 3.0, &c).unwrap();
        assert_eq!(a.theta, 0.0);
        let a = satellite_to_panorama(128.0, 128.0, -3.0, &c).unwrap();
        assert_eq!(a.theta, PI);
    }

    #[test]
    fn ray_to_satellite_examples() {
        let c = cam(128.0, 128.0, 10.0);
        let (u, v, z) =
            panorama_ray_to_satellite(&SphericalCoord::new(FRAC_PI_2, 0.0), 5.0, &c).unwrap();
        assert_eq!((u, v, z), (178.0, 128.0, 0.0));
        let (u, v, z) =
            panorama_ray_to_satellite(&SphericalCoord::new(FRAC_PI_4, FRAC_PI_2), 3.0, &c).unwrap();
        assert!((u - 128.0).abs() < 1e-12);
        assert!((v - 158.0).abs() < 1e-12);
        assert!((z - 3.0).abs() < 1e-12);
        let (u, v, z) =
            panorama_ray_to_satellite(&SphericalCoord::new(0.0, 1.0), 0.0, &c).unwrap();
        assert_eq!((u, v), (128.0, 128.0));
        assert!(z.is_infinite() && z > 0.0);
        let (_, _, z) = panorama_ray_to_satellite(&SphericalCoord::new(PI, 1.0), 0.0, &c).unwrap();
        assert!(z.is_infinite() && z < 0.0);
        assert_eq!(
            panorama_ray_to_satellite(&SphericalCoord::new(0.0, 1.0), 2.0, &c),
            Err(GeometryError::PoleRay)
        );
    }

    #[test]
    fn round_trip_satellite_pano_satellite() {
        let c = cam(128.0, 128.0, 10.0);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..2000 {
            let u: f64 = rng.gen_range(0.0..256.0);
            let v: f64 = rng.gen_range(0.0..256.0);
            let z: f64 = rng.gen_range(-2.0..6.0);
            let du = u - 128.0;
            let dv = v - 128.0;
            if du.hypot(dv) < 1e-6 {
                continue;
            }
            let ang = satellite_to_panorama(u, v, z, &c).unwrap();
            let r = dv.hypot(du) / 10.0;
            let (u2, v2, z2) = panorama_ray_to_satellite(&ang, r, &c).unwrap();
            let scale = u.abs().max(v.abs()).max(z.abs()).max(1.0);
            assert!((u2 - u).abs() / scale < 1e-9, "u {u} -> {u2}");
            assert!((v2 - v).abs() / scale < 1e-9, "v {v} -> {v2}");
            assert!((z2 - z).abs() / scale < 1e-9, "z {z} -> {z2}");
        }
    }

    #[test]
    fn world_and_satellite_paths_give_the_same_angles() {
        let c = cam(96.0, 104.0, 8.0);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..2000 {
            let p: WorldPoint<f64> = WorldPoint::new(
                rng.gen_range(-10.0..10.0),
                rng.gen_range(-10.0..10.0),
                rng.gen_range(-3.0..7.0),
            );
            if p.x.hypot(p.y) < 1e-9 && p.z.abs() < 1e-9 {
                continue;
            }
            let direct = world_to_panorama(&p).unwrap();
            let (u, v) = world_to_satellite(&p, &c);
            let via_sat = match satellite_to_panorama(u, v, p.z, &c) {
                Ok(a) => a,
                Err(_) => continue,
            };
            assert!((direct.theta - via_sat.theta).abs() < 1e-12);
            assert!(wrap_angle(direct.phi - via_sat.phi).abs() < 1e-12);
        }
    }

    #[test]
    fn azimuth_rotation_equivariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..2000 {
            let p = WorldPoint::new(
                rng.gen_range(-10.0..10.0f64),
                rng.gen_range(-10.0..10.0f64),
                rng.gen_range(-5.0..5.0f64),
            );
            if p.x.hypot(p.y) < 1e-3 {
                continue;
            }
            let delta: f64 = rng.gen_range(-8.0..8.0);
            // Rotation about z advancing phi by delta.
            let q = WorldPoint::new(
                p.x * delta.cos() + p.y * delta.sin(),
                p.y * delta.cos() - p.x * delta.sin(),
                p.z,
            );
            let a = world_to_panorama(&p).unwrap();
            let b = world_to_panorama(&q).unwrap();
            assert!((a.theta - b.theta).abs() < 1e-9);
            assert!(wrap_angle(b.phi - a.phi - delta).abs() < 1e-9);
        }
    }

    #[test]
    fn height_decreases_with_theta() {
        let c = cam(0.0, 0.0, 5.0);
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for _ in 0..500 {
            let r: f64 = rng.gen_range(0.1..30.0);
            let phi: f64 = rng.gen_range(-PI..PI);
            let mut prev = f64::INFINITY;
            for k in 1..200 {
                let theta = f64::from(k) / 200.0 * PI;
                let (_, _, z) =
                    panorama_ray_to_satellite(&SphericalCoord::new(theta, phi), r, &c).unwrap();
                assert!(z < prev, "z must strictly decrease in theta");
                prev = z;
            }
        }
    }

    #[test]
    fn pixel_angle_mapping_and_inverse() {
        let g = PanoramaGeometry::new(512, 128, 0.0, PI, 2.0).unwrap();
        let a = g.pixel_to_angles(0, 0);
        assert!((a.phi - (-PI + PI / 512.0)).abs() < 1e-15);
        assert!((a.theta - PI / 256.0).abs() < 1e-15);
        for &(i, j) in &[(0usize, 0usize), (63, 200), (127, 511), (64, 256)] {
            let ang = g.pixel_to_angles(i, j);
            let (row, col, out) = g.angles_to_pixel(&ang);
            assert!(!out);
            assert!((row - i as f64).abs() < 1e-9);
            assert!((col - j as f64).abs() < 1e-9);
            assert_eq!(g.nearest_pixel(&ang), Some((i, j)));
        }
        // Narrow fov clamps and flags.
        let g = PanoramaGeometry::new(512, 128, FRAC_PI_4, 3.0 * FRAC_PI_4, 2.0).unwrap();
        let (row, _, out) = g.angles_to_pixel(&SphericalCoord::new(0.1, 0.0));
        assert!(out);
        assert_eq!(row, 0.0);
        let (row, _, out) = g.angles_to_pixel(&SphericalCoord::new(3.0, 0.0));
        assert!(out);
        assert_eq!(row, 127.0);
        assert_eq!(g.nearest_pixel(&SphericalCoord::new(0.1, 0.0)), None);
    }

    #[test]
    fn phi_offset_shifts_columns() {
        let g = PanoramaGeometry::new(360, 90, 0.0, PI, 2.0).unwrap();
        let off = g.clone().with_phi_offset(2.0 * PI / 360.0 * 10.0);
        let a = g.pixel_to_angles(10, 40);
        let b = off.pixel_to_angles(10, 30);
        assert!((wrap_angle(a.phi - b.phi)).abs() < 1e-12);
        let (_, col, _) = off.angles_to_pixel(&a);
        assert!((col - 30.0).abs() < 1e-9);
    }

    #[test]
    fn seam_column_rounds_inside_raster() {
        let g = PanoramaGeometry::new(512, 128, 0.0, PI, 2.0).unwrap();
        // phi = -pi maps to fractional column -0.5, the left edge of column 0.
        let (_, col, out) = g.angles_to_pixel(&SphericalCoord::new(1.0, -PI));
        assert!(!out);
        assert!((col + 0.5).abs() < 1e-12);
        assert_eq!(g.nearest_pixel(&SphericalCoord::new(1.0, -PI)), Some((40, 0)));
    }

    #[test]
    fn constructors_reject_bad_parameters() {
        assert!(SatelliteCamera::new(0.0, 0.0, 0.0).is_err());
        assert!(SatelliteCamera::new(0.0, 0.0, -1.0).is_err());
        assert!(SatelliteCamera::new(f64::NAN, 0.0, 1.0).is_err());
        assert!(PanoramaGeometry::new(0, 10, 0.0, PI, 2.0).is_err());
        assert!(PanoramaGeometry::new(10, 10, -0.1, PI, 2.0).is_err());
        assert!(PanoramaGeometry::new(10, 10, 1.0, 1.0, 2.0).is_err());
        assert!(PanoramaGeometry::new(10, 10, 0.0, 3.2, 2.0).is_err());
        assert!(PanoramaGeometry::new(10, 10, 0.0, PI, 0.0).is_err());
    }

    #[test]
    fn generic_scalar_f32_agrees_with_f64() {
        let c64 = cam(64.0, 64.0, 10.0);
        let c32 = SatelliteCamera::<f32>::new(64.0, 64.0, 10.0).unwrap();
        let a = satellite_to_panorama(80.0f64, 50.0, 1.5, &c64).unwrap();
        let b = satellite_to_panorama(80.0f32, 50.0, 1.5, &c32).unwrap();
        assert!((a.theta - f64::from(b.theta)).abs() < 1e-6);
        assert!((a.phi - f64::from(b.phi)).abs() < 1e-6);
    }
}
