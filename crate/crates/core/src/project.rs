//! Projections between the satellite raster and the street panorama.
//!
//! The main path resamples a satellite height/opacity stack onto concentric
//! cylinders around the street camera ([`project_depthwise`]) so the result
//! can be alpha-composited far to near. [`project_heightwise`] instead warps
//! each satellite plane to the panorama directly; it keeps occlusion correct
//! only when plane supports do not overlap in the output, which makes it a
//! useful cross-check and the exact counterpart of [`ground_plane_project`].

use rayon::prelude::*;
use std::f64::consts::FRAC_PI_2;

use crate::geometry::{satellite_to_panorama, PanoramaGeometry, SatelliteCamera};
use crate::mpi::{OrderedPlane, OrderedPlaneStack, PlaneHalf, RgbaPlane, SatelliteMpi, StreetMpi};
use crate::raster::{ImageBuffer, Mask, MaskedImage};

/// Cylinder radii in meters, far to near: `r_j = max_radius * (m - j) / m`
/// for `j = 0..m`, so the radii are uniform over `(0, max_radius]` and the
/// nearest cylinder sits at `max_radius / m`, never at the camera axis.
pub fn cylinder_radii(m_planes: usize, max_radius: f64) -> Vec<f64> {
    assert!(m_planes >= 1, "need at least one cylinder");
    assert!(max_radius > 0.0, "max_radius must be positive");
    (0..m_planes).map(|j| max_radius * (m_planes - j) as f64 / m_planes as f64).collect()
}

/// Pixel radius of the circle where a horizontal plane at height `z` meets
/// the view cone of a panorama row. Shared by every plane-warping path so
/// that single-plane projections agree bitwise with the ground baseline.
#[inline]
fn plane_radius_px(scale: f64, z: f64, tan_theta: f64) -> f64 {
    scale * z * tan_theta
}

fn column_directions(g: &PanoramaGeometry<f64>) -> (Vec<f64>, Vec<f64>) {
    (0..g.width).map(|j| {
        let phi = g.pixel_to_angles(0, j).phi;
        (phi.cos(), phi.sin())
    }).unzip()
}

fn row_tangents(g: &PanoramaGeometry<f64>) -> Vec<f64> {
    (0..g.height).map(|i| g.row_theta(i).tan()).collect()
}

/// Where a sampled height lands in the descending plane-height grid.
#[derive(Clone, Copy)]
enum ZBracket {
    /// Above the top plane: nothing recorded there, fully transparent.
    Above,
    /// Between planes `k` and `k + 1`; blend weight `t` on plane `k`.
    Between { k: usize, t: f64 },
    /// At or below the ground plane, which terminates every ray.
    Ground,
}

/// Resamples the satellite stack onto `m_planes` concentric cylinders of
/// radius up to `max_radius` meters around the camera axis.
///
/// Each output pixel on cylinder `j` follows the panorama ray for that pixel
/// out to the cylinder, reads the shared color raster at the footprint, and
/// interpolates opacity from the two satellite planes bracketing the ray
/// height. Rays passing above the top plane get opacity zero, rays reaching
/// below the ground clamp to the ground opacity, and footprints outside the
/// satellite raster contribute nothing.
pub fn project_depthwise(
    mpi: &SatelliteMpi,
    g: &PanoramaGeometry<f64>,
    m_planes: usize,
    max_radius: f64,
    cam: &SatelliteCamera<f64>,
) -> StreetMpi {
    let radii = cylinder_radii(m_planes, max_radius);
    let heights: Vec<f64> = mpi.plane_heights().iter().map(|&h| f64::from(h)).collect();
    let n = heights.len();
    let (pw, ph) = (g.width, g.height);
    let (cos_phi, sin_phi) = column_directions(g);
    let tans = row_tangents(g);

    let planes: Vec<RgbaPlane> = radii
        .par_iter()
        .map(|&r| {
            // The footprint (u, v) depends only on the column, so color and
            // the full opacity profile are cached once per column.
            let mut col_color = vec![0.0f32; pw * 3];
            let mut col_profile = vec![0.0f32; pw * n];
            let mut col_inside = vec![false; pw];
            for c in 0..pw {
                let u = cam.center_u + cam.scale * r * cos_phi[c];
                let v = cam.center_v + cam.scale * r * sin_phi[c];
                let inside = mpi.color().bilinear_sample(u, v, &mut col_color[c * 3..c * 3 + 3]);
                if inside {
                    mpi.alpha_profile_bilinear(u, v, &mut col_profile[c * n..(c + 1) * n]);
                }
                col_inside[c] = inside;
            }

            // Ray height r / tan(theta) falls monotonically as theta sweeps
            // down the rows, so the bracketing plane index only advances.
            let mut brackets = Vec::with_capacity(ph);
            let mut k = 0usize;
            for &tan_theta in &tans {
                let z = r / tan_theta;
                brackets.push(if z > heights[0] {
                    ZBracket::Above
                } else if z <= heights[n - 1] {
                    ZBracket::Ground
                } else {
                    while heights[k + 1] >= z {
                        k += 1;
                    }
                    let t = (z - heights[k + 1]) / (heights[k] - heights[k + 1]);
                    ZBracket::Between { k, t }
                });
            }

            let mut color = vec![0.0f32; pw * ph * 3];
            let mut alpha = vec![0.0f32; pw * ph];
            for i in 0..ph {
                for c in 0..pw {
                    if !col_inside[c] {
                        continue;
                    }
                    let px = i * pw + c;
                    color[px * 3..px * 3 + 3].copy_from_slice(&col_color[c * 3..c * 3 + 3]);
                    let profile = &col_profile[c * n..(c + 1) * n];
                    alpha[px] = match brackets[i] {
                        ZBracket::Above => 0.0,
                        ZBracket::Ground => profile[n - 1],
                        ZBracket::Between { k, t } => {
                            (t * f64::from(profile[k]) + (1.0 - t) * f64::from(profile[k + 1]))
                                as f32
                        }
                    };
                }
            }
            RgbaPlane::new(
                ImageBuffer::from_vec(pw, ph, 3, color),
                ImageBuffer::from_vec(pw, ph, 1, alpha),
            )
            .expect("color and alpha share dimensions by construction")
        })
        .collect();

    let radii_f32 = radii.iter().map(|&r| r as f32).collect();
    StreetMpi::from_parts(radii_f32, planes).expect("radii strictly descend by construction")
}

/// Warps each satellite plane to the panorama on its own circle of radius
/// `scale * z * tan(theta)` per row.
///
/// Planes above the camera cover only rows above the horizon, planes below
/// only rows below it, and a plane exactly at camera height covers just the
/// horizon row (sampling the raster center). The returned stack lists planes
/// far to near: descending height through the top half, then ascending
/// height through the bottom half, the equator plane last. Because those
/// groups cover disjoint rows, one compositing pass resolves occlusion.
pub fn project_heightwise(
    mpi: &SatelliteMpi,
    g: &PanoramaGeometry<f64>,
    cam: &SatelliteCamera<f64>,
) -> OrderedPlaneStack {
    let heights = mpi.plane_heights();
    let n = heights.len();
    let mut order: Vec<(usize, PlaneHalf)> = Vec::with_capacity(n);
    for (idx, &h) in heights.iter().enumerate() {
        if h > 0.0 {
            order.push((idx, PlaneHalf::Top));
        }
    }
    for (idx, &h) in heights.iter().enumerate().rev() {
        if h < 0.0 {
            order.push((idx, PlaneHalf::Bottom));
        }
    }
    for (idx, &h) in heights.iter().enumerate() {
        if h == 0.0 {
            order.push((idx, PlaneHalf::Equator));
        }
    }

    let (pw, ph) = (g.width, g.height);
    let (cos_phi, sin_phi) = column_directions(g);
    let tans = row_tangents(g);
    let equator_band = g.theta_step() * 1e-3;

    let planes: Vec<OrderedPlane> = order
        .par_iter()
        .map(|&(idx, half)| {
            let z = f64::from(heights[idx]);
            let mut color = vec![0.0f32; pw * ph * 3];
            let mut alpha = vec![0.0f32; pw * ph];
            for i in 0..ph {
                let theta = g.row_theta(i);
                let covered = match half {
                    PlaneHalf::Top => theta < FRAC_PI_2,
                    PlaneHalf::Bottom => theta > FRAC_PI_2,
                    PlaneHalf::Equator => (theta - FRAC_PI_2).abs() < equator_band,
                };
                if !covered {
                    continue;
                }
                let rho = plane_radius_px(cam.scale, z, tans[i]);
                for c in 0..pw {
                    let u = cam.center_u + rho * cos_phi[c];
                    let v = cam.center_v + rho * sin_phi[c];
                    let px = i * pw + c;
                    let mut rgb = [0.0f32; 3];
                    if mpi.color().bilinear_sample(u, v, &mut rgb) {
                        color[px * 3..px * 3 + 3].copy_from_slice(&rgb);
                        alpha[px] = mpi.alpha_plane_bilinear(idx, u, v);
                    }
                }
            }
            OrderedPlane {
                z: heights[idx],
                half,
                plane: RgbaPlane::new(
                    ImageBuffer::from_vec(pw, ph, 3, color),
                    ImageBuffer::from_vec(pw, ph, 1, alpha),
                )
                .expect("color and alpha share dimensions by construction"),
            }
        })
        .collect();

    OrderedPlaneStack::from_parts(planes).expect("half ordering holds by construction")
}

/// Projects a flat satellite image onto the panorama assuming everything
/// lies on the ground plane at `-g.camera_height`.
///
/// Rows at or above the horizon stay black and masked out; below it, each
/// pixel samples the image where its view ray meets the ground, masked by
/// whether the footprint lands inside the raster.
pub fn ground_plane_project(
    img: &ImageBuffer,
    g: &PanoramaGeometry<f64>,
    cam: &SatelliteCamera<f64>,
) -> MaskedImage {
    let z = -g.camera_height;
    let (pw, ph) = (g.width, g.height);
    let (cos_phi, sin_phi) = column_directions(g);
    let mut image = ImageBuffer::new(pw, ph, img.channels());
    let mut mask = Mask::new_filled(pw, ph, false);
    let mut sample = vec![0.0f32; img.channels()];
    for i in 0..ph {
        let theta = g.row_theta(i);
        if theta <= FRAC_PI_2 {
            continue;
        }
        let rho = plane_radius_px(cam.scale, z, theta.tan());
        for c in 0..pw {
            let u = cam.center_u + rho * cos_phi[c];
            let v = cam.center_v + rho * sin_phi[c];
            if img.bilinear_sample(u, v, &mut sample) {
                for (ch, &s) in sample.iter().enumerate() {
                    image.set(i, c, ch, s);
                }
                mask.set(i, c, true);
            }
        }
    }
    MaskedImage { image, mask }
}

/// Unrolls an overhead image around its center into (radius, azimuth) axes:
/// row 0 holds the largest radius, the bottom row the center, and columns
/// sweep azimuth over the same half-open range as panorama columns.
///
/// The radius spans the inscribed circle, `min(width, height) / 2` pixels,
/// so corners of a non-square image are never sampled.
pub fn polar_transform(
    img: &ImageBuffer,
    out_width: usize,
    out_height: usize,
    cam: &SatelliteCamera<f64>,
) -> ImageBuffer {
    assert!(out_width >= 1 && out_height >= 1, "output dimensions must be positive");
    let r_img = 0.5 * img.width().min(img.height()) as f64;
    let phi_step = std::f64::consts::TAU / out_width as f64;
    let mut out = ImageBuffer::new(out_width, out_height, img.channels());
    let mut sample = vec![0.0f32; img.channels()];
    for i in 0..out_height {
        let rho = (out_height - 1 - i) as f64 / out_height as f64 * r_img;
        for j in 0..out_width {
            let phi = -std::f64::consts::PI + (j as f64 + 0.5) * phi_step;
            let u = cam.center_u + rho * phi.cos();
            let v = cam.center_v + rho * phi.sin();
            if img.bilinear_sample(u, v, &mut sample) {
                for (ch, &s) in sample.iter().enumerate() {
                    out.set(i, j, ch, s);
                }
            }
        }
    }
    out
}

/// Reverse ground mapping: fills a square overhead raster by looking up, for
/// each output pixel, the panorama direction of the ground point it images.
///
/// Pixels whose direction falls outside the panorama's polar range are
/// masked out; azimuth always wraps.
pub fn street_to_satellite_ground(
    pano: &ImageBuffer,
    g: &PanoramaGeometry<f64>,
    cam: &SatelliteCamera<f64>,
    out_size: usize,
) -> MaskedImage {
    assert!(out_size >= 1, "output size must be positive");
    let z = -g.camera_height;
    let mut image = ImageBuffer::new(out_size, out_size, pano.channels());
    let mut mask = Mask::new_filled(out_size, out_size, false);
    let mut sample = vec![0.0f32; pano.channels()];
    for row in 0..out_size {
        for col in 0..out_size {
            let coord = satellite_to_panorama(col as f64, row as f64, z, cam)
                .expect("ground height is nonzero");
            let (prow, pcol, outside) = g.angles_to_pixel(&coord);
            if outside {
                continue;
            }
            pano.bilinear_sample_wrap_u(pcol, prow, &mut sample);
            for (ch, &s) in sample.iter().enumerate() {
                image.set(row, col, ch, s);
            }
            mask.set(row, col, true);
        }
    }
    MaskedImage { image, mask }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mpi::{build_satellite_mpi, composite_ordered, composite_with_coverage};
    use crate::volume::{heightmap_to_distribution, uniform_plane_heights};
    use std::f64::consts::PI;

    fn pano(width: usize, height: usize, theta_min: f64, theta_max: f64) -> PanoramaGeometry<f64> {
        PanoramaGeometry::new(width, height, theta_min, theta_max, 2.0).unwrap()
    }

    fn ground_only_mpi(size: usize, color: f32, n_planes: usize) -> SatelliteMpi {
        let img = ImageBuffer::from_fn(size, size, 3, |_, _| [color; 3]);
        let heights = ImageBuffer::from_fn(size, size, 1, |_, _| [-2.0; 3]);
        let planes = uniform_plane_heights(n_planes, 6.0, -2.0);
        let vol = heightmap_to_distribution(&heights, &planes).unwrap();
        build_satellite_mpi(&img, &vol).unwrap()
    }

    #[test]
    fn radii_are_uniform_descending_and_positive() {
        let r = cylinder_radii(8, 6.4);
        assert_eq!(r.len(), 8);
        assert!((r[0] - 6.4).abs() < 1e-12);
        assert!((r[7] - 0.8).abs() < 1e-12);
        for w in r.windows(2) {
            assert!((w[0] - w[1] - 0.8).abs() < 1e-12);
        }
        assert!(r.iter().all(|&x| x > 0.0));
        assert_eq!(cylinder_radii(1, 5.0), vec![5.0]);
    }

    #[test]
    fn ground_only_depthwise_opacity_tracks_the_ray_height() {
        let mpi = ground_only_mpi(16, 0.7, 4);
        let cam = SatelliteCamera::centered(16, 16, 10.0).unwrap();
        let g = pano(16, 64, 0.0, PI);
        let street = project_depthwise(&mpi, &g, 8, 0.7, &cam);
        assert_eq!(street.m_planes(), 8);

        // Bottom row: every cylinder's ray reaches below the ground plane,
        // so every opacity clamps to the fully opaque ground sample.
        let bottom = g.height - 1;
        for p in street.planes() {
            for c in 0..g.width {
                assert!(p.alpha.get(bottom, c, 0) >= 1.0 - 1e-6);
            }
        }
        // With the nearest plane opaque the composite keeps its color bits.
        let out = composite_with_coverage(&street).unwrap();
        let near = &street.planes()[street.m_planes() - 1].color;
        for c in 0..g.width {
            for ch in 0..3 {
                assert_eq!(out.color.get(bottom, c, ch), near.get(bottom, c, ch));
            }
            assert!((out.color.get(bottom, c, 0) - 0.7).abs() < 1e-5);
            assert!(out.coverage.get(bottom, c, 0) >= 1.0 - 1e-6);
        }

        // Just below the horizon the rays sit far above the ground, between
        // grid planes, so opacity is partial: the lerp toward the opaque
        // ground plane, not a clamp.
        let row = 33;
        for p in street.planes() {
            let a = p.alpha.get(row, 0, 0);
            assert!(a > 0.0 && a < 0.9, "expected partial opacity, got {a}");
        }

        // Opacity is exactly zero only where both bracketing planes carry
        // none. On this coarse grid that is rows 0..3: there every ray sits
        // above the lowest empty plane at 2/3 m. Deeper rows above the
        // horizon still pick up a partial lerp toward the opaque ground
        // plane; this smear is why callers pack grid planes tightly above
        // the ground.
        for p in street.planes() {
            for i in 0..3 {
                for c in 0..g.width {
                    assert_eq!(p.alpha.get(i, c, 0), 0.0);
                }
            }
        }
        let above = 29; // above the horizon, ray height ~0.09 m on the nearest cylinder
        let near = &street.planes()[street.m_planes() - 1];
        assert!(near.alpha.get(above, 0, 0) > 0.0);
    }

    #[test]
    fn transparent_volume_projects_to_transparent_cylinders() {
        let img = ImageBuffer::from_fn(8, 8, 3, |_, _| [0.5; 3]);
        let heights = vec![4.0f32, 1.0, -2.0];
        let alphas = vec![0.0f32; 8 * 8 * 3];
        let mpi = SatelliteMpi::from_parts(img, heights, alphas).unwrap();
        let cam = SatelliteCamera::centered(8, 8, 10.0).unwrap();
        let g = pano(8, 16, 0.0, PI);
        let street = project_depthwise(&mpi, &g, 4, 0.4, &cam);
        for p in street.planes() {
            assert!(p.alpha.data().iter().all(|&a| a == 0.0));
        }
        let out = composite_with_coverage(&street).unwrap();
        assert!(out.coverage.data().iter().all(|&c| c == 0.0));
    }

    #[test]
    fn footprints_outside_the_raster_contribute_nothing() {
        let mpi = ground_only_mpi(16, 0.7, 4);
        let cam = SatelliteCamera::centered(16, 16, 10.0).unwrap();
        let g = pano(16, 64, 0.0, PI);
        // Radius 3 m = 30 px overruns the 16 px raster for every column.
        let street = project_depthwise(&mpi, &g, 2, 3.0, &cam);
        let far = &street.planes()[0];
        assert!(far.alpha.data().iter().all(|&a| a == 0.0));
        assert!(far.color.data().iter().all(|&c| c == 0.0));
    }

    #[test]
    fn heightwise_single_ground_plane_matches_ground_baseline_bitwise() {
        let size = 32;
        let img = ImageBuffer::from_fn(size, size, 3, |r, c| {
            [
                r as f32 / 31.0,
                c as f32 / 31.0,
                ((r * 7 + c * 3) % 16) as f32 / 15.0,
            ]
        });
        let heights = ImageBuffer::from_fn(size, size, 1, |_, _| [-2.0; 3]);
        let vol = heightmap_to_distribution(&heights, &[-2.0]).unwrap();
        let mpi = build_satellite_mpi(&img, &vol).unwrap();
        let cam = SatelliteCamera::centered(size, size, 10.0).unwrap();
        let g = pano(32, 64, 0.0, PI);

        let stack = project_heightwise(&mpi, &g, &cam);
        assert_eq!(stack.planes().len(), 1);
        assert_eq!(stack.planes()[0].half, PlaneHalf::Bottom);
        let composed = crate::mpi::composite_ordered_with_coverage(&stack).unwrap();
        let baseline = ground_plane_project(&img, &g, &cam);

        assert_eq!(composed.color.data(), baseline.image.data());
        let mask = composed.mask(0.5);
        assert_eq!(mask.data(), baseline.mask.data());
        // Sanity: the lower half actually has content.
        assert!(baseline.mask.count() > 0);
    }

    #[test]
    fn heightwise_planes_cover_only_their_half() {
        let size = 32;
        let img = ImageBuffer::from_fn(size, size, 3, |_, _| [0.6; 3]);
        // Raised square around the center at height exactly on a grid plane.
        let heights = ImageBuffer::from_fn(size, size, 1, |r, c| {
            let raised = (10..22).contains(&r) && (10..22).contains(&c);
            [if raised { 1.0 } else { -2.0 }; 3]
        });
        let planes = uniform_plane_heights(9, 6.0, -2.0);
        assert!(planes.iter().any(|&h| h == 1.0));
        let vol = heightmap_to_distribution(&heights, &planes).unwrap();
        let mpi = build_satellite_mpi(&img, &vol).unwrap();
        let cam = SatelliteCamera::centered(size, size, 10.0).unwrap();
        let g = pano(32, 64, 0.0, PI);
        let stack = project_heightwise(&mpi, &g, &cam);

        let horizon = g.height / 2;
        let raised = stack.planes().iter().find(|p| p.z == 1.0).unwrap();
        assert_eq!(raised.half, PlaneHalf::Top);
        let mut raised_any = false;
        for i in 0..g.height {
            for c in 0..g.width {
                let a = raised.plane.alpha.get(i, c, 0);
                if i >= horizon {
                    assert_eq!(a, 0.0, "top plane leaked below the horizon");
                } else if a > 0.0 {
                    raised_any = true;
                }
            }
        }
        assert!(raised_any, "raised plane never appeared above the horizon");

        let ground = stack.planes().iter().find(|p| p.z == -2.0).unwrap();
        assert_eq!(ground.half, PlaneHalf::Bottom);
        for i in 0..horizon {
            for c in 0..g.width {
                assert_eq!(ground.plane.alpha.get(i, c, 0), 0.0);
            }
        }
    }

    #[test]
    fn heightwise_orders_far_to_near_and_near_plane_occludes() {
        // Two opaque annuli painted directly into per-plane opacities: the
        // higher plane projects to a wide circle, the lower to a narrow one.
        // Where both cover a row the lower (nearer along the ray) wins.
        let size = 128;
        let center = 63.5f64;
        let color_a = [0.8f32, 0.1, 0.1];
        let color_b = [0.1f32, 0.8, 0.2];
        let img = ImageBuffer::from_fn(size, size, 3, |r, c| {
            let rho = ((r as f64 - center).powi(2) + (c as f64 - center).powi(2)).sqrt();
            if (40.0..=56.0).contains(&rho) {
                color_a
            } else if (10.0..=22.0).contains(&rho) {
                color_b
            } else {
                [0.0; 3]
            }
        });
        let mut alphas = vec![0.0f32; size * size * 2];
        for r in 0..size {
            for c in 0..size {
                let rho = ((r as f64 - center).powi(2) + (c as f64 - center).powi(2)).sqrt();
                let px = (r * size + c) * 2;
                if (40.0..=56.0).contains(&rho) {
                    alphas[px] = 1.0;
                }
                if (10.0..=22.0).contains(&rho) {
                    alphas[px + 1] = 1.0;
                }
            }
        }
        let mpi = SatelliteMpi::from_parts(img, vec![3.0, 1.0], alphas).unwrap();
        let cam = SatelliteCamera::centered(size, size, 10.0).unwrap();
        let g = pano(64, 64, 0.0, PI);
        let stack = project_heightwise(&mpi, &g, &cam);
        assert_eq!(stack.planes().len(), 2);
        assert_eq!(stack.planes()[0].z, 3.0);
        assert_eq!(stack.planes()[1].z, 1.0);

        // Row 20: theta about 1.006 rad, tan about 1.59, so the z=3 plane
        // samples radius ~47.8 px (inside the far annulus) and the z=1 plane
        // ~15.9 px (inside the near annulus). Both opaque: near must win.
        let row = 20;
        let composed = composite_ordered(&stack).unwrap();
        for c in 0..g.width {
            let got = [composed.get(row, c, 0), composed.get(row, c, 1), composed.get(row, c, 2)];
            for ch in 0..3 {
                assert!(
                    (got[ch] - color_b[ch]).abs() < 1e-3,
                    "row {row} col {c}: expected near annulus color, got {got:?}"
                );
            }
        }
    }

    #[test]
    fn ground_projection_radius_follows_the_tangent_law() {
        // Stripe pattern: color encodes floor(x) parity along the +x axis.
        // Looking along phi = pi/2 (the +x direction), the ground pixel at
        // row theta samples x = camera_height / tan(theta - pi/2).
        let size = 200;
        let cam = SatelliteCamera::centered(size, size, 10.0).unwrap();
        let img = ImageBuffer::from_fn(size, size, 3, |r, _c| {
            let x = (r as f64 - 99.5) / 10.0;
            [if x.floor().rem_euclid(2.0) == 0.0 { 1.0 } else { 0.0 }; 3]
        });
        let g = pano(10, 400, 0.0, PI);
        // Column 7 center: phi = -pi + 7.5 * (2 pi / 10) = pi / 2.
        let col = 7;
        assert!((g.pixel_to_angles(0, col).phi - FRAC_PI_2).abs() < 1e-12);
        let out = ground_plane_project(&img, &g, &cam);
        let mut checked = 0;
        for i in 201..400 {
            let theta = g.row_theta(i);
            // Ground 2 m below the camera, delta below the horizon: the ray
            // lands at distance 2 / tan(delta), far out near the horizon.
            let x = 2.0 / (theta - FRAC_PI_2).tan();
            if x > 9.0 {
                continue;
            }
            // Skip samples within a pixel of a stripe boundary; bilinear
            // filtering blends the two parities there.
            let frac = x.fract();
            if frac < 0.12 || frac > 0.88 {
                continue;
            }
            let expect = if x.floor().rem_euclid(2.0) == 0.0 { 1.0 } else { 0.0 };
            assert!(out.mask.get(i, col));
            assert!(
                (out.image.get(i, col, 0) - expect).abs() < 1e-4,
                "row {i}: x = {x:.3}, expected {expect}"
            );
            checked += 1;
        }
        assert!(checked > 50, "too few interior stripe samples: {checked}");
    }

    #[test]
    fn ground_projection_masks_above_horizon_and_outside_raster() {
        let img = ImageBuffer::from_fn(16, 16, 3, |_, _| [1.0; 3]);
        let cam = SatelliteCamera::centered(16, 16, 10.0).unwrap();
        let g = pano(16, 32, 0.0, PI);
        let out = ground_plane_project(&img, &g, &cam);
        for i in 0..16 {
            for c in 0..16 {
                assert!(!out.mask.get(i, c));
                assert_eq!(out.image.get(i, c, 0), 0.0);
            }
        }
        // Far below the horizon the footprint radius shrinks inside the
        // raster; the bottom row must be valid.
        for c in 0..16 {
            assert!(out.mask.get(31, c));
        }
        // Rows just below the horizon look beyond the 0.8 m raster edge.
        assert!(!out.mask.get(16, 0));
    }

    #[test]
    fn polar_rows_are_constant_on_radial_gradients() {
        // Radially symmetric image: every polar row should be constant and
        // follow the gradient value at its radius.
        let size = 128;
        let center = 63.5f64;
        let img = ImageBuffer::from_fn(size, size, 3, |r, c| {
            let rho = ((r as f64 - center).powi(2) + (c as f64 - center).powi(2)).sqrt();
            [(-(rho / 40.0).powi(2)).exp() as f32; 3]
        });
        let cam = SatelliteCamera::new(center, center, 10.0).unwrap();
        let out = polar_transform(&img, 64, 32, &cam);
        let r_img = 64.0;
        for i in 0..32 {
            let rho = (31 - i) as f64 / 32.0 * r_img;
            let expect = (-(rho / 40.0).powi(2)).exp() as f32;
            for j in 0..64 {
                let got = out.get(i, j, 0);
                assert!(
                    (got - expect).abs() < 0.02,
                    "row {i} col {j}: rho {rho:.2}, expected {expect:.4}, got {got:.4}"
                );
            }
        }
        // Bottom row samples the exact center: the average of the four
        // pixels around (63.5, 63.5), which all sit at rho ~ 0.707.
        let center_val = (-(0.5f64.sqrt() / 40.0).powi(2)).exp() as f32;
        assert!((out.get(31, 0, 0) - center_val).abs() < 1e-4);
    }

    #[test]
    fn polar_columns_shift_under_quarter_turns() {
        let size = 64;
        let img = ImageBuffer::from_fn(size, size, 3, |r, c| {
            [
                (r as f32 * 0.37).sin() * 0.5 + 0.5,
                (c as f32 * 0.53).cos() * 0.5 + 0.5,
                ((r + 2 * c) as f32 * 0.11).sin() * 0.5 + 0.5,
            ]
        });
        // Quarter turn about the center: new[r][c] = old[size-1-c][r] maps
        // world (x, y) to (y, -x), advancing azimuth by +pi/2.
        let rotated = ImageBuffer::from_fn(size, size, 3, |r, c| {
            let p = img.pixel(size - 1 - c, r);
            [p[0], p[1], p[2]]
        });
        let cam = SatelliteCamera::centered(size, size, 10.0).unwrap();
        let (w, h) = (64, 24);
        let a = polar_transform(&img, w, h, &cam);
        let b = polar_transform(&rotated, w, h, &cam);
        let mut max_err = 0.0f32;
        for i in 0..h {
            for j in 0..w {
                let jj = (j + w / 4) % w;
                for ch in 0..3 {
                    max_err = max_err.max((b.get(i, jj, ch) - a.get(i, j, ch)).abs());
                }
            }
        }
        assert!(max_err < 1e-5, "rotation should shift polar columns, max err {max_err}");
    }

    #[test]
    fn depthwise_composite_is_equivariant_under_quarter_turns() {
        let size = 64;
        let img = ImageBuffer::from_fn(size, size, 3, |r, c| {
            [
                0.3 + 0.2 * ((r as f32) * 0.2).sin(),
                0.4 + 0.2 * ((c as f32) * 0.17).cos(),
                0.5 + 0.1 * (((r + c) as f32) * 0.09).sin(),
            ]
        });
        let heights = ImageBuffer::from_fn(size, size, 1, |r, c| {
            let raised = (20..32).contains(&r) && (36..48).contains(&c);
            [if raised { 1.0 } else { -2.0 }; 3]
        });
        let rot = |src: &ImageBuffer| {
            ImageBuffer::from_fn(size, size, src.channels(), |r, c| {
                let p = src.pixel(size - 1 - c, r);
                [p[0], p.get(1).copied().unwrap_or(p[0]), p.get(2).copied().unwrap_or(p[0])]
            })
        };
        let planes = uniform_plane_heights(9, 6.0, -2.0);
        let cam = SatelliteCamera::centered(size, size, 10.0).unwrap();
        let g = pano(128, 32, 0.0, PI);

        let project = |im: &ImageBuffer, hm: &ImageBuffer| {
            let vol = heightmap_to_distribution(hm, &planes).unwrap();
            let mpi = build_satellite_mpi(im, &vol).unwrap();
            crate::mpi::composite(&project_depthwise(&mpi, &g, 16, 3.0, &cam)).unwrap()
        };
        let base = project(&img, &heights);
        let turned = project(&rot(&img), &rot(&heights));

        // A quarter turn of the scene must roll the panorama by a quarter
        // of its width. Interpolation is not bit-stable under the turn, so
        // compare with a small mean tolerance.
        let mut sum = 0.0f64;
        for i in 0..g.height {
            for j in 0..g.width {
                let jj = (j + g.width / 4) % g.width;
                for ch in 0..3 {
                    sum += f64::from((turned.get(i, jj, ch) - base.get(i, j, ch)).abs());
                }
            }
        }
        let mean = sum / (g.width * g.height * 3) as f64;
        assert!(mean < 2.0 / 255.0, "mean equivariance error {mean}");
    }

    #[test]
    fn street_to_satellite_masks_follow_the_field_of_view() {
        let pano_img = ImageBuffer::from_fn(8, 32, 3, |_, _| [0.5; 3]);
        let cam = SatelliteCamera::centered(64, 64, 10.0).unwrap();

        // Full lower hemisphere: every ground pixel maps inside.
        let g_full = pano(8, 32, 0.0, PI);
        let full = street_to_satellite_ground(&pano_img, &g_full, &cam, 64);
        assert_eq!(full.mask.count(), 64 * 64);

        // Cone reaching only 45 degrees below the horizon: ground closer
        // than camera_height * scale = 20 px needs a steeper view angle, so
        // the visible region is everything outside that radius.
        let g_cone = pano(8, 16, PI / 4.0, 3.0 * PI / 4.0);
        let cone = street_to_satellite_ground(&pano_img, &g_cone, &cam, 64);
        assert!(!cone.mask.get(32, 32), "the nadir region is out of view");
        for row in 0..64 {
            for col in 0..64 {
                let du = col as f64 - 31.5;
                let dv = row as f64 - 31.5;
                let r = (du * du + dv * dv).sqrt();
                // Skip the boundary ring where fp decides the tie.
                if (r - 20.0).abs() > 0.5 {
                    assert_eq!(cone.mask.get(row, col), r > 20.0, "r = {r:.3}");
                }
            }
        }
    }

    #[test]
    fn street_to_satellite_reads_the_expected_panorama_direction() {
        // Paint one below-horizon panorama row white and check that only the
        // ground ring at the matching radius lights up along +y (phi = 0).
        let g = pano(64, 64, 0.0, PI);
        let row = 48; // theta = 48.5/64 * pi, below the horizon
        let theta = g.row_theta(row);
        let pano_img = ImageBuffer::from_fn(64, 64, 3, |r, _| [if r == row { 1.0 } else { 0.0 }; 3]);
        let cam = SatelliteCamera::centered(128, 128, 10.0).unwrap();
        let out = street_to_satellite_ground(&pano_img, &g, &cam, 128);

        // Ring radius in meters: camera_height * tan(pi - theta); phi = 0
        // lies along +y, i.e. increasing u at v = center.
        let r_px = 2.0 * (std::f64::consts::PI - theta).tan() * 10.0;
        let u = (63.5 + r_px).round() as usize;
        let v = 64usize;
        assert!(out.mask.get(v, u));
        assert!(out.image.get(v, u, 0) > 0.5, "expected the lit ring at u = {u}");
        // Far inside the ring the row is dark.
        assert!(out.image.get(64, 64, 0) < 0.05);
    }
}
