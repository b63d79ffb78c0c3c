//! Brute-force reference renderers and synthetic scenes for testing.
//!
//! Nothing here is used by the production projection path. The two renderers
//! deliberately take different routes to the same image: an analytic ray
//! caster ([`raycast_reference`]) and a forward point-splatting rasterizer
//! with a z-buffer ([`zbuffer_forward_project`]). Test suites compare the
//! engine against both.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::TAU;

use crate::geometry::{PanoramaGeometry, SatelliteCamera, SphericalCoord};
use crate::raster::{ImageBuffer, Mask};
use crate::volume::uniform_plane_heights;

/// One sinusoidal component of the ground texture. Per-channel phases keep
/// the channels decorrelated; the spatial frequency is shared.
#[derive(Debug, Clone, PartialEq)]
pub struct SineWave {
    pub amplitude: [f64; 3],
    /// Spatial frequency in radians per meter along x and y.
    pub kx: f64,
    pub ky: f64,
    pub phase: [f64; 3],
}

/// Smooth analytic ground texture: a base color plus sine waves. Keeping
/// the waves long and shallow bounds the spatial gradient, which is what
/// makes resampling-based renderers agree to tight tolerances.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundPattern {
    pub base: [f32; 3],
    pub waves: Vec<SineWave>,
}

impl GroundPattern {
    pub fn color(&self, x: f64, y: f64) -> [f32; 3] {
        let mut c = [0.0f32; 3];
        for ch in 0..3 {
            let mut v = f64::from(self.base[ch]);
            for w in &self.waves {
                v += w.amplitude[ch] * (w.kx * x + w.ky * y + w.phase[ch]).sin();
            }
            c[ch] = (v as f32).clamp(0.0, 1.0);
        }
        c
    }
}

/// Axis-aligned box standing on the ground: footprint in meters, flat top.
/// Satellite imagery shows only the top, so the sides carry their own color
/// for renderers that can see them.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxObstacle {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub top_z: f64,
    pub top_color: [f32; 3],
    pub side_color: [f32; 3],
}

impl BoxObstacle {
    fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x_min && x <= self.x_max && y >= self.y_min && y <= self.y_max
    }
}

/// Analytic test scene: textured ground disk plus boxes. The camera sits at
/// the world origin; `ground_z` is negative (ground below the camera).
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub ground: GroundPattern,
    pub boxes: Vec<BoxObstacle>,
    /// Satellite coverage half width in meters.
    pub half_extent: f64,
    /// Radius of the valid ground disk in meters.
    pub ground_radius: f64,
    pub ground_z: f64,
}

impl SyntheticScene {
    fn box_at(&self, x: f64, y: f64) -> Option<&BoxObstacle> {
        self.boxes.iter().find(|b| b.contains(x, y))
    }

    /// Overhead color image, point-sampled at pixel centers: box tops where
    /// a footprint covers the pixel, ground texture elsewhere.
    pub fn render_satellite(
        &self,
        cam: &SatelliteCamera<f64>,
        width: usize,
        height: usize,
    ) -> ImageBuffer {
        ImageBuffer::from_fn(width, height, 3, |row, col| {
            let x = (row as f64 - cam.center_v) / cam.scale;
            let y = (col as f64 - cam.center_u) / cam.scale;
            match self.box_at(x, y) {
                Some(b) => b.top_color,
                None => self.ground.color(x, y),
            }
        })
    }

    /// Hard height map in meters, point-sampled at pixel centers.
    pub fn render_heights(
        &self,
        cam: &SatelliteCamera<f64>,
        width: usize,
        height: usize,
    ) -> ImageBuffer {
        ImageBuffer::from_fn(width, height, 1, |row, col| {
            let x = (row as f64 - cam.center_v) / cam.scale;
            let y = (col as f64 - cam.center_u) / cam.scale;
            let z = match self.box_at(x, y) {
                Some(b) => b.top_z,
                None => self.ground_z,
            };
            [z as f32; 3]
        })
    }
}

/// Ray-cast render: color, hit distance in meters, per-pixel hit id
/// (-1 none, 0 ground, 1 + 2i top of box i, 2 + 2i side of box i), and a
/// validity mask (false where the ray escapes the scene).
#[derive(Debug, Clone)]
pub struct RaycastOutput {
    pub color: ImageBuffer,
    pub depth: ImageBuffer,
    pub hit: Vec<i32>,
    pub mask: Mask,
}

/// Slab intersection of a ray from the origin with a box extending from the
/// ground plane to its top. Returns the entry distance and whether the entry
/// face is horizontal (a top).
fn ray_box_hit(dir: [f64; 3], b: &BoxObstacle, ground_z: f64) -> Option<(f64, bool)> {
    let slabs = [
        (b.x_min, b.x_max, dir[0]),
        (b.y_min, b.y_max, dir[1]),
        (ground_z, b.top_z, dir[2]),
    ];
    let mut t_enter = f64::NEG_INFINITY;
    let mut t_exit = f64::INFINITY;
    let mut enter_axis = usize::MAX;
    for (axis, &(lo, hi, d)) in slabs.iter().enumerate() {
        if d == 0.0 {
            if lo > 0.0 || hi < 0.0 {
                return None;
            }
            continue;
        }
        let (mut t1, mut t2) = (lo / d, hi / d);
        if t1 > t2 {
            std::mem::swap(&mut t1, &mut t2);
        }
        if t1 > t_enter {
            t_enter = t1;
            enter_axis = axis;
        }
        t_exit = t_exit.min(t2);
        if t_enter > t_exit {
            return None;
        }
    }
    if t_enter <= 1e-9 {
        return None;
    }
    Some((t_enter, enter_axis == 2))
}

/// Renders the scene by intersecting every panorama ray with the ground
/// disk and each box analytically; the nearest hit wins. No resampling is
/// involved, which makes this the ground truth the projection pipeline is
/// measured against.
pub fn raycast_reference(scene: &SyntheticScene, g: &PanoramaGeometry<f64>) -> RaycastOutput {
    let (w, h) = (g.width, g.height);
    let mut color = ImageBuffer::new(w, h, 3);
    let mut depth = ImageBuffer::new(w, h, 1);
    let mut hit = vec![-1i32; w * h];
    let mut mask = Mask::new_filled(w, h, false);
    for i in 0..h {
        for j in 0..w {
            let c = g.pixel_to_angles(i, j);
            let (st, ct) = c.theta.sin_cos();
            let (sp, cp) = c.phi.sin_cos();
            let dir = [st * sp, st * cp, ct];
            let mut best_t = f64::INFINITY;
            let mut id = -1i32;
            let mut rgb = [0.0f32; 3];
            if dir[2] < 0.0 {
                let t = scene.ground_z / dir[2];
                let (x, y) = (t * dir[0], t * dir[1]);
                if x.abs() <= scene.half_extent
                    && y.abs() <= scene.half_extent
                    && x.hypot(y) <= scene.ground_radius
                {
                    best_t = t;
                    id = 0;
                    rgb = scene.ground.color(x, y);
                }
            }
            for (bi, b) in scene.boxes.iter().enumerate() {
                if let Some((t, top)) = ray_box_hit(dir, b, scene.ground_z) {
                    if t < best_t {
                        best_t = t;
                        id = if top { 1 + 2 * bi as i32 } else { 2 + 2 * bi as i32 };
                        rgb = if top { b.top_color } else { b.side_color };
                    }
                }
            }
            if id >= 0 {
                for (ch, &v) in rgb.iter().enumerate() {
                    color.set(i, j, ch, v);
                }
                depth.set(i, j, 0, best_t as f32);
                mask.set(i, j, true);
            }
            hit[i * w + j] = id;
        }
    }
    RaycastOutput { color, depth, hit, mask }
}

/// Pixels within one pixel of a hit-id change (silhouettes, occlusion
/// boundaries, the ground-disk rim). Comparisons against resampling
/// renderers exclude this band: a half-pixel of blur there is expected.
/// Columns wrap; both sides of every boundary are marked.
pub fn discontinuity_mask(out: &RaycastOutput) -> Mask {
    let (w, h) = (out.color.width(), out.color.height());
    let mut m = Mask::new_filled(w, h, false);
    for i in 0..h {
        for j in 0..w {
            let id = out.hit[i * w + j];
            let jr = (j + 1) % w;
            if out.hit[i * w + jr] != id {
                m.set(i, j, true);
                m.set(i, jr, true);
            }
            if i + 1 < h && out.hit[(i + 1) * w + j] != id {
                m.set(i, j, true);
                m.set(i + 1, j, true);
            }
        }
    }
    m
}

/// Forward-splatting render: color, nearest depth in meters, and which
/// pixels received any splat.
#[derive(Debug, Clone)]
pub struct ZbufferOutput {
    pub color: ImageBuffer,
    pub depth: ImageBuffer,
    pub filled: Mask,
}

/// Vertical step between wall samples, sized so consecutive samples land at
/// most about half a panorama row apart: d(theta)/dz = rho / (rho^2 + z^2).
fn wall_step(theta_step: f64, rho: f64, z: f64) -> f64 {
    (0.5 * theta_step * (rho * rho + z * z) / rho.max(1e-9)).max(1e-3)
}

/// Projects the satellite image forward into the panorama by splatting
/// supersampled points, keeping the nearest per output pixel.
///
/// Every subsample splats its surface point at the height map's value for
/// its pixel, plus a vertical column of samples down to the map's ground
/// level so height steps become opaque walls. Surface splats take the
/// bilinear color at the subsample; wall columns take the owning pixel's
/// own color, since a wall belongs to the elevated pixel, not to whatever
/// lies across the footprint edge. Runs sequentially: splat order breaks
/// depth ties, and the oracle must stay reproducible.
pub fn zbuffer_forward_project(
    sat: &ImageBuffer,
    heights: &ImageBuffer,
    g: &PanoramaGeometry<f64>,
    cam: &SatelliteCamera<f64>,
    supersample: usize,
) -> ZbufferOutput {
    assert!(supersample >= 4, "supersampling below 4 leaves holes in the output");
    assert_eq!(sat.channels(), 3, "satellite image must be RGB");
    assert_eq!(heights.channels(), 1, "height map must be single channel");
    assert_eq!(
        (sat.width(), sat.height()),
        (heights.width(), heights.height()),
        "satellite image and height map must share dimensions"
    );
    let (pw, ph) = (g.width, g.height);
    let mut color = ImageBuffer::new(pw, ph, 3);
    let mut depth = vec![f32::INFINITY; pw * ph];
    let mut filled = Mask::new_filled(pw, ph, false);
    let ground_z =
        f64::from(heights.data().iter().fold(f32::INFINITY, |a, &b| a.min(b)));
    let theta_step = g.theta_step();
    let inv_ss = 1.0 / supersample as f64;

    let mut splat = |x: f64, y: f64, z: f64, rgb: [f32; 3]| {
        let rho = x.hypot(y);
        let dir = SphericalCoord::new(rho.atan2(z), x.atan2(y));
        if let Some((i, j)) = g.nearest_pixel(&dir) {
            let d = (rho * rho + z * z).sqrt() as f32;
            let px = i * pw + j;
            if d < depth[px] {
                depth[px] = d;
                for (ch, &v) in rgb.iter().enumerate() {
                    color.set(i, j, ch, v);
                }
                filled.set(i, j, true);
            }
        }
    };

    let mut sample = [0.0f32; 3];
    for r in 0..sat.height() {
        for c in 0..sat.width() {
            let z_top = f64::from(heights.get(r, c, 0));
            let wall_rgb = [sat.get(r, c, 0), sat.get(r, c, 1), sat.get(r, c, 2)];
            for a in 0..supersample {
                for b in 0..supersample {
                    let v = r as f64 - 0.5 + (a as f64 + 0.5) * inv_ss;
                    let u = c as f64 - 0.5 + (b as f64 + 0.5) * inv_ss;
                    let x = (v - cam.center_v) / cam.scale;
                    let y = (u - cam.center_u) / cam.scale;
                    sat.bilinear_sample_clamped(u, v, &mut sample);
                    splat(x, y, z_top, sample);
                    if z_top > ground_z + 1e-6 {
                        let rho = x.hypot(y);
                        let mut z = z_top;
                        loop {
                            z -= wall_step(theta_step, rho, z);
                            if z <= ground_z {
                                break;
                            }
                            splat(x, y, z, wall_rgb);
                        }
                    }
                }
            }
        }
    }
    let depth = ImageBuffer::from_vec(
        pw,
        ph,
        1,
        depth.into_iter().map(|d| if d.is_finite() { d } else { 0.0 }).collect(),
    );
    ZbufferOutput { color, depth, filled }
}

/// Vertical gap between the ground plane and the next grid plane. Packing
/// the first airborne plane this close to the ground stops near-ground rays
/// from picking up interpolated opacity meters above the actual surface.
pub const GROUND_PLANE_GAP: f32 = 0.02;

/// Parameters for seeded random scenes paired with a plane grid.
#[derive(Debug, Clone)]
pub struct SceneRecipe {
    /// Satellite coverage half width in meters; boxes stay well inside.
    pub half_extent: f64,
    pub ground_z: f32,
    /// Height of the top grid plane in meters.
    pub max_height: f32,
    pub n_planes: usize,
}

impl Default for SceneRecipe {
    fn default() -> Self {
        Self { half_extent: 6.4, ground_z: -2.0, max_height: 6.0, n_planes: 32 }
    }
}

impl SceneRecipe {
    /// Grid planes, descending: `n_planes - 1` planes uniform over
    /// `[ground_z + GROUND_PLANE_GAP, max_height]`, then the ground plane.
    pub fn plane_heights(&self) -> Vec<f32> {
        assert!(self.n_planes >= 2, "need a ground plane and at least one above");
        let mut v = uniform_plane_heights(
            self.n_planes - 1,
            self.max_height,
            self.ground_z + GROUND_PLANE_GAP,
        );
        v.push(self.ground_z);
        v
    }
}

fn snap_decimeter(v: f64) -> f64 {
    (v * 10.0).round() / 10.0
}

/// Draws a reproducible random scene: a shallow two-wave ground texture and
/// two or three boxes.
///
/// The construction keeps the renderers comparable at tight tolerances:
/// wave amplitudes and wavelengths bound the texture gradient; box
/// footprints snap to the 0.1 m grid (pixel boundaries at 10 px/m); box
/// tops snap to grid planes, stay at least a meter above ground, and avoid
/// the near-horizontal band around camera height; box colors sit a fixed
/// small offset from the local ground color so edge blends stay in budget.
pub fn sample_scene(recipe: &SceneRecipe, seed: u64) -> SyntheticScene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let e = recipe.half_extent;

    let base = [
        rng.gen_range(0.35..0.65) as f32,
        rng.gen_range(0.35..0.65) as f32,
        rng.gen_range(0.35..0.65) as f32,
    ];
    let mut waves = Vec::new();
    for &(amp, lo, hi) in &[(0.040, 20.0, 28.0), (0.025, 30.0, 40.0)] {
        let lambda: f64 = rng.gen_range(lo..hi);
        let angle: f64 = rng.gen_range(0.0..TAU);
        let k = TAU / lambda;
        let phase = [
            rng.gen_range(0.0..TAU),
            rng.gen_range(0.0..TAU),
            rng.gen_range(0.0..TAU),
        ];
        waves.push(SineWave {
            amplitude: [amp; 3],
            kx: k * angle.cos(),
            ky: k * angle.sin(),
            phase,
        });
    }
    let ground = GroundPattern { base, waves };

    let allowed_tops: Vec<f32> = recipe
        .plane_heights()
        .into_iter()
        .filter(|&h| h >= recipe.ground_z + 1.0 && !(-0.3..0.5).contains(&h))
        .collect();
    assert!(!allowed_tops.is_empty(), "plane grid leaves no valid box heights");

    let n_boxes = rng.gen_range(2..=3usize);
    let mut boxes: Vec<BoxObstacle> = Vec::new();
    for _ in 0..n_boxes {
        for _attempt in 0..24 {
            let angle: f64 = rng.gen_range(0.0..TAU);
            let dist: f64 = rng.gen_range(0.62 * e..0.75 * e);
            let hx = snap_decimeter(rng.gen_range(0.5..0.7));
            let hy = snap_decimeter(rng.gen_range(0.5..0.7));
            let cx = snap_decimeter(dist * angle.cos());
            let cy = snap_decimeter(dist * angle.sin());
            let (x_min, x_max) = (cx - hx, cx + hx);
            let (y_min, y_max) = (cy - hy, cy + hy);
            let margin = 0.4;
            let clear = boxes.iter().all(|b| {
                x_max + margin < b.x_min
                    || b.x_max + margin < x_min
                    || y_max + margin < b.y_min
                    || b.y_max + margin < y_min
            });
            if !clear {
                continue;
            }
            let top_z = allowed_tops[rng.gen_range(0..allowed_tops.len())];
            let gc = ground.color(cx, cy);
            let mut top_color = [0.0f32; 3];
            for ch in 0..3 {
                let offset = if rng.gen::<bool>() { 0.02 } else { -0.02 };
                top_color[ch] = (gc[ch] + offset).clamp(0.05, 0.95);
            }
            boxes.push(BoxObstacle {
                x_min,
                x_max,
                y_min,
                y_max,
                top_z: f64::from(top_z),
                top_color,
                side_color: top_color,
            });
            break;
        }
    }

    SyntheticScene {
        ground,
        boxes,
        half_extent: e,
        ground_radius: e,
        ground_z: f64::from(recipe.ground_z),
    }
}
