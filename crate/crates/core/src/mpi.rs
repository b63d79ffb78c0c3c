//! Multiplane-image stacks and the over-operator compositor.
//!
//! A satellite MPI shares one color raster across planes and stores one
//! opacity raster per plane height; opacities are cumulative from the top
//! plane down, so they are non-decreasing in plane index and the ground
//! plane is fully opaque. Street-side stacks hold RGBA planes ordered
//! far to near and composite with the over operator.

use crate::raster::{ImageBuffer, Mask};
use crate::volume::HeightProbabilityVolume;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MpiError {
    #[error("dimension mismatch: expected {expected_w}x{expected_h}, got {got_w}x{got_h}")]
    DimensionMismatch { expected_w: usize, expected_h: usize, got_w: usize, got_h: usize },
    #[error("cannot composite an empty stack")]
    EmptyStack,
    #[error("invalid stack: {0}")]
    InvalidStack(String),
}

/// Satellite-view MPI: one shared color raster, cumulative alpha per plane.
///
/// Alphas are stored packed in (row, col, plane) order, plane fastest, so a
/// full per-pixel opacity profile is one contiguous slice.
#[derive(Debug, Clone)]
pub struct SatelliteMpi {
    color: ImageBuffer,
    plane_heights: Vec<f32>,
    alphas: Vec<f32>,
}

pub fn build_satellite_mpi(
    img: &ImageBuffer,
    d: &HeightProbabilityVolume,
) -> Result<SatelliteMpi, MpiError> {
    assert_eq!(img.channels(), 3, "satellite imagery is RGB");
    if img.width() != d.width() || img.height() != d.height() {
        return Err(MpiError::DimensionMismatch {
            expected_w: img.width(),
            expected_h: img.height(),
            got_w: d.width(),
            got_h: d.height(),
        });
    }
    let n = d.n_planes();
    let mut alphas = d.data().to_vec();
    for px in alphas.chunks_exact_mut(n) {
        let mut acc = 0.0f64;
        for a in px.iter_mut().take(n - 1) {
            acc += f64::from(*a);
            *a = (acc as f32).clamp(0.0, 1.0);
        }
        // The ground terminates every ray; rounding in the prefix sum must
        // not leave it fractionally transparent.
        px[n - 1] = 1.0;
    }
    Ok(SatelliteMpi { color: img.clone(), plane_heights: d.plane_heights().to_vec(), alphas })
}

impl SatelliteMpi {
    /// Assembles a stack from raw parts; alphas packed (row, col, plane).
    /// Monotonicity is the caller's concern, which lets tests force
    /// degenerate opacities.
    pub fn from_parts(
        color: ImageBuffer,
        plane_heights: Vec<f32>,
        alphas: Vec<f32>,
    ) -> Result<Self, MpiError> {
        assert_eq!(color.channels(), 3);
        if plane_heights.is_empty() || !plane_heights.windows(2).all(|w| w[0] > w[1]) {
            return Err(MpiError::InvalidStack("plane heights must strictly decrease".into()));
        }
        if alphas.len() != color.width() * color.height() * plane_heights.len() {
            return Err(MpiError::InvalidStack("alpha buffer length mismatch".into()));
        }
        Ok(Self { color, plane_heights, alphas })
    }

    pub fn width(&self) -> usize {
        self.color.width()
    }

    pub fn height(&self) -> usize {
        self.color.height()
    }

    pub fn n_planes(&self) -> usize {
        self.plane_heights.len()
    }

    pub fn color(&self) -> &ImageBuffer {
        &self.color
    }

    pub fn plane_heights(&self) -> &[f32] {
        &self.plane_heights
    }

    #[inline]
    pub fn alpha(&self, row: usize, col: usize, plane: usize) -> f32 {
        let n = self.plane_heights.len();
        self.alphas[(row * self.width() + col) * n + plane]
    }

    /// Bilinear opacity of every plane at fractional (u, v), writing one
    /// value per plane. Outside the raster the profile is all zeros and the
    /// return is false.
    pub fn alpha_profile_bilinear(&self, u: f64, v: f64, out: &mut [f32]) -> bool {
        let n = self.plane_heights.len();
        debug_assert_eq!(out.len(), n);
        let (w, h) = (self.width(), self.height());
        if !(u >= 0.0 && u <= (w - 1) as f64 && v >= 0.0 && v <= (h - 1) as f64) {
            out.fill(0.0);
            return false;
        }
        let c0 = u.floor() as usize;
        let r0 = v.floor() as usize;
        let fu = u - c0 as f64;
        let fv = v - r0 as f64;
        let c1 = (c0 + 1).min(w - 1);
        let r1 = (r0 + 1).min(h - 1);
        let w00 = (1.0 - fu) * (1.0 - fv);
        let w01 = fu * (1.0 - fv);
        let w10 = (1.0 - fu) * fv;
        let w11 = fu * fv;
        let p00 = &self.alphas[(r0 * w + c0) * n..(r0 * w + c0) * n + n];
        let p01 = &self.alphas[(r0 * w + c1) * n..(r0 * w + c1) * n + n];
        let p10 = &self.alphas[(r1 * w + c0) * n..(r1 * w + c0) * n + n];
        let p11 = &self.alphas[(r1 * w + c1) * n..(r1 * w + c1) * n + n];
        for k in 0..n {
            out[k] = (w00 * f64::from(p00[k])
                + w01 * f64::from(p01[k])
                + w10 * f64::from(p10[k])
                + w11 * f64::from(p11[k])) as f32;
        }
        true
    }

    /// Bilinear opacity of one plane at fractional (u, v); zero outside.
    pub fn alpha_plane_bilinear(&self, plane: usize, u: f64, v: f64) -> f32 {
        let n = self.plane_heights.len();
        let (w, h) = (self.width(), self.height());
        if !(u >= 0.0 && u <= (w - 1) as f64 && v >= 0.0 && v <= (h - 1) as f64) {
            return 0.0;
        }
        let c0 = u.floor() as usize;
        let r0 = v.floor() as usize;
        let fu = u - c0 as f64;
        let fv = v - r0 as f64;
        let c1 = (c0 + 1).min(w - 1);
        let r1 = (r0 + 1).min(h - 1);
        let at = |r: usize, c: usize| f64::from(self.alphas[(r * w + c) * n + plane]);
        ((1.0 - fu) * (1.0 - fv) * at(r0, c0)
            + fu * (1.0 - fv) * at(r0, c1)
            + (1.0 - fu) * fv * at(r1, c0)
            + fu * fv * at(r1, c1)) as f32
    }

    /// Copies one opacity plane out as a grayscale raster.
    pub fn alpha_plane_image(&self, plane: usize) -> ImageBuffer {
        let n = self.plane_heights.len();
        let mut out = ImageBuffer::new(self.width(), self.height(), 1);
        for row in 0..self.height() {
            for col in 0..self.width() {
                out.set(row, col, 0, self.alphas[(row * self.width() + col) * n + plane]);
            }
        }
        out
    }
}

/// One street-side RGBA plane: RGB color plus a grayscale opacity raster of
/// the same size.
#[derive(Debug, Clone)]
pub struct RgbaPlane {
    pub color: ImageBuffer,
    pub alpha: ImageBuffer,
}

impl RgbaPlane {
    pub fn new(color: ImageBuffer, alpha: ImageBuffer) -> Result<Self, MpiError> {
        assert_eq!(color.channels(), 3);
        assert_eq!(alpha.channels(), 1);
        if color.width() != alpha.width() || color.height() != alpha.height() {
            return Err(MpiError::DimensionMismatch {
                expected_w: color.width(),
                expected_h: color.height(),
                got_w: alpha.width(),
                got_h: alpha.height(),
            });
        }
        Ok(Self { color, alpha })
    }

    pub fn transparent(width: usize, height: usize) -> Self {
        Self {
            color: ImageBuffer::new(width, height, 3),
            alpha: ImageBuffer::new(width, height, 1),
        }
    }
}

/// Street-view MPI on concentric cylinders; plane 0 is the farthest.
#[derive(Debug, Clone)]
pub struct StreetMpi {
    radii: Vec<f32>,
    planes: Vec<RgbaPlane>,
}

impl StreetMpi {
    pub fn from_parts(radii: Vec<f32>, planes: Vec<RgbaPlane>) -> Result<Self, MpiError> {
        if radii.len() != planes.len() {
            return Err(MpiError::InvalidStack("one radius per plane required".into()));
        }
        if radii.iter().any(|r| !(*r > 0.0)) {
            return Err(MpiError::InvalidStack("radii must be positive".into()));
        }
        if !radii.windows(2).all(|w| w[0] > w[1]) {
            return Err(MpiError::InvalidStack("radii must strictly decrease".into()));
        }
        if let Some(first) = planes.first() {
            let (w, h) = (first.color.width(), first.color.height());
            for p in &planes {
                if p.color.width() != w || p.color.height() != h {
                    return Err(MpiError::InvalidStack("planes must share dimensions".into()));
                }
            }
        }
        Ok(Self { radii, planes })
    }

    pub fn m_planes(&self) -> usize {
        self.planes.len()
    }

    pub fn radii(&self) -> &[f32] {
        &self.radii
    }

    pub fn planes(&self) -> &[RgbaPlane] {
        &self.planes
    }
}

/// Which panorama half a warped satellite plane can cover.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlaneHalf {
    /// Above the horizon (plane height above the camera).
    Top,
    /// Below the horizon (plane height below the camera).
    Bottom,
    /// Exactly the horizon row (plane at camera height).
    Equator,
}

#[derive(Debug, Clone)]
pub struct OrderedPlane {
    pub z: f32,
    pub half: PlaneHalf,
    pub plane: RgbaPlane,
}

/// Warped satellite planes sorted far to near: descending z through the top
/// half, ascending z through the bottom half, the equator plane nearest.
#[derive(Debug, Clone)]
pub struct OrderedPlaneStack {
    planes: Vec<OrderedPlane>,
}

impl OrderedPlaneStack {
    pub fn from_parts(planes: Vec<OrderedPlane>) -> Result<Self, MpiError> {
        let mut last_top: Option<f32> = None;
        let mut last_bottom: Option<f32> = None;
        for p in &planes {
            match p.half {
                PlaneHalf::Top => {
                    if !(p.z > 0.0) {
                        return Err(MpiError::InvalidStack("top-half planes need z > 0".into()));
                    }
                    if let Some(prev) = last_top {
                        if p.z >= prev {
                            return Err(MpiError::InvalidStack(
                                "top-half z must strictly decrease".into(),
                            ));
                        }
                    }
                    last_top = Some(p.z);
                }
                PlaneHalf::Bottom => {
                    if !(p.z < 0.0) {
                        return Err(MpiError::InvalidStack("bottom-half planes need z < 0".into()));
                    }
                    if let Some(prev) = last_bottom {
                        if p.z <= prev {
                            return Err(MpiError::InvalidStack(
                                "bottom-half z must strictly increase".into(),
                            ));
                        }
                    }
                    last_bottom = Some(p.z);
                }
                PlaneHalf::Equator => {
                    if p.z != 0.0 {
                        return Err(MpiError::InvalidStack("equator plane needs z = 0".into()));
                    }
                }
            }
        }
        Ok(Self { planes })
    }

    pub fn planes(&self) -> &[OrderedPlane] {
        &self.planes
    }
}

/// Composited color plus per-pixel coverage (one minus the transmitted
/// fraction); coverage near zero marks pixels no plane touched.
#[derive(Debug, Clone)]
pub struct CompositeOutput {
    pub color: ImageBuffer,
    pub coverage: ImageBuffer,
}

impl CompositeOutput {
    /// Validity mask: pixels where at least `threshold` of the ray was
    /// absorbed by some plane.
    pub fn mask(&self, threshold: f32) -> Mask {
        let mut m = Mask::new_filled(self.coverage.width(), self.coverage.height(), false);
        for row in 0..self.coverage.height() {
            for col in 0..self.coverage.width() {
                m.set(row, col, self.coverage.get(row, col, 0) > threshold);
            }
        }
        m
    }
}

// Shared over-operator pass; planes arrive far to near. Convex combinations
// keep values in [0,1]; per-step f64 keeps the f32 stores tight.
fn composite_over<'a, I>(mut planes: I) -> Result<CompositeOutput, MpiError>
where
    I: Iterator<Item = &'a RgbaPlane>,
{
    let first = planes.next().ok_or(MpiError::EmptyStack)?;
    let (w, h) = (first.color.width(), first.color.height());
    let mut color = vec![0.0f32; w * h * 3];
    let mut transmit = vec![1.0f32; w * h];
    let mut apply = |p: &RgbaPlane| {
        for i in 0..w * h {
            let a = f64::from(p.alpha.data()[i]);
            if a == 0.0 {
                continue;
            }
            for ch in 0..3 {
                let c = f64::from(p.color.data()[i * 3 + ch]);
                let prev = f64::from(color[i * 3 + ch]);
                color[i * 3 + ch] = (a * c + (1.0 - a) * prev) as f32;
            }
            transmit[i] = ((1.0 - a) * f64::from(transmit[i])) as f32;
        }
    };
    apply(first);
    for p in planes {
        apply(p);
    }
    let coverage: Vec<f32> = transmit.iter().map(|t| 1.0 - *t).collect();
    Ok(CompositeOutput {
        color: ImageBuffer::from_vec(w, h, 3, color),
        coverage: ImageBuffer::from_vec(w, h, 1, coverage),
    })
}

/// Over-composites a cylinder stack far to near.
pub fn composite(s: &StreetMpi) -> Result<ImageBuffer, MpiError> {
    Ok(composite_with_coverage(s)?.color)
}

pub fn composite_with_coverage(s: &StreetMpi) -> Result<CompositeOutput, MpiError> {
    composite_over(s.planes.iter())
}

/// Over-composites warped satellite planes in their stored order. The two
/// halves cover disjoint rows, so one pass is order-correct for both.
pub fn composite_ordered(s: &OrderedPlaneStack) -> Result<ImageBuffer, MpiError> {
    Ok(composite_ordered_with_coverage(s)?.color)
}

pub fn composite_ordered_with_coverage(s: &OrderedPlaneStack) -> Result<CompositeOutput, MpiError> {
    composite_over(s.planes.iter().map(|p| &p.plane))
}
