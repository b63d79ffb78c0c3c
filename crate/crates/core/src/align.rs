//! Cross-view pair alignment by exhaustive shift search.
//!
//! The satellite center is swept over a grid of candidate offsets; each
//! candidate is projected to the street view under the ground-plane
//! assumption and scored with SSIM against the reference panorama, restricted
//! to rows below the horizon. The highest-scoring offset wins.
//!
//! For speed the search projects satellite luma directly instead of
//! projecting RGB and converting afterward; luma is linear in RGB, so the
//! scores differ only by float rounding. The panorama-side SSIM statistics
//! are blurred once per pair and reused across all candidates.

use rayon::prelude::*;
use std::f64::consts::FRAC_PI_2;
use thiserror::Error;

use crate::geometry::{PanoramaGeometry, SatelliteCamera};
use crate::metrics::{luma_255, ssim_half, ssim_mean_against_half};
use crate::raster::ImageBuffer;

/// Best SSIM below this marks the pair as unalignable: the true offset is
/// likely outside the search extent.
pub const UNALIGNABLE_SSIM: f64 = 0.2;

/// Score spread (max minus min) at or under this marks the map degenerate:
/// the scene carries no alignment signal, so no correction is applied.
pub const DEGENERATE_SPREAD: f64 = 1e-9;

/// Candidate shift grid in meters, centered on zero. With `n` points per
/// axis the step is `extent / (n - 1)`, spanning `[-extent/2, extent/2]`;
/// a single-point axis holds only the zero shift.
#[derive(Debug, Clone)]
pub struct ShiftGrid {
    pub n_u: usize,
    pub n_v: usize,
    pub extent: f64,
}

impl Default for ShiftGrid {
    fn default() -> Self {
        Self { n_u: 40, n_v: 40, extent: 11.25 }
    }
}

fn axis_offsets(n: usize, extent: f64) -> Vec<f64> {
    assert!(n >= 1, "grid axes need at least one point");
    assert!(extent > 0.0, "grid extent must be positive");
    if n == 1 {
        return vec![0.0];
    }
    let step = extent / (n - 1) as f64;
    (0..n).map(|i| -0.5 * extent + i as f64 * step).collect()
}

impl ShiftGrid {
    pub fn offsets_u(&self) -> Vec<f64> {
        axis_offsets(self.n_u, self.extent)
    }

    pub fn offsets_v(&self) -> Vec<f64> {
        axis_offsets(self.n_v, self.extent)
    }
}

#[derive(Debug, Error)]
pub enum AlignError {
    #[error("no panorama rows below the horizon have valid satellite coverage")]
    EmptyValidRegion,
}

#[derive(Debug, Clone)]
pub struct AlignmentResult {
    /// Winning center offset (du, dv) in meters; (0, 0) when degenerate.
    pub best_shift: (f64, f64),
    /// Maximum of the score map.
    pub best_score: f64,
    /// SSIM per candidate, row-major: index `iv * n_u + iu`.
    pub score_map: Vec<f64>,
    pub degenerate: bool,
    pub unalignable: bool,
}

/// Argmax with the deterministic tie-break: highest score, then smallest
/// shift magnitude, then first in row-major order.
fn argmax_shift(
    scores: &[f64],
    offsets_u: &[f64],
    offsets_v: &[f64],
) -> (usize, usize, f64) {
    let n_u = offsets_u.len();
    let mut best = (0usize, 0usize);
    let mut best_score = f64::NEG_INFINITY;
    let mut best_mag = f64::INFINITY;
    for (idx, &s) in scores.iter().enumerate() {
        let (iv, iu) = (idx / n_u, idx % n_u);
        let mag = offsets_u[iu].powi(2) + offsets_v[iv].powi(2);
        if s > best_score || (s == best_score && mag < best_mag) {
            best = (iv, iu);
            best_score = s;
            best_mag = mag;
        }
    }
    (best.0, best.1, best_score)
}

/// f64 twin of `ImageBuffer::bilinear_sample`: same validity domain, same
/// clamped-neighbor weighting, `None` outside the pixel-center grid.
fn bilinear_f64(field: &[f64], width: usize, height: usize, u: f64, v: f64) -> Option<f64> {
    if !(u >= 0.0 && u <= (width - 1) as f64 && v >= 0.0 && v <= (height - 1) as f64) {
        return None;
    }
    let c0 = u.floor() as usize;
    let r0 = v.floor() as usize;
    let c1 = (c0 + 1).min(width - 1);
    let r1 = (r0 + 1).min(height - 1);
    let fu = u - c0 as f64;
    let fv = v - r0 as f64;
    let top = field[r0 * width + c0] * (1.0 - fu) + field[r0 * width + c1] * fu;
    let bot = field[r1 * width + c0] * (1.0 - fu) + field[r1 * width + c1] * fu;
    Some(top * (1.0 - fv) + bot * fv)
}

/// Finds the satellite center offset whose ground-plane projection best
/// matches the panorama.
///
/// The comparison region is the below-horizon crop of the panorama,
/// restricted to pixels whose projection footprint stays inside the
/// satellite raster for every candidate shift; all candidates are scored
/// over that one region. The region being empty (no below-horizon rows, or
/// the shift extent pushes every footprint off the raster) is an error.
pub fn align_pair(
    sat: &ImageBuffer,
    pano: &ImageBuffer,
    cam: &SatelliteCamera<f64>,
    g: &PanoramaGeometry<f64>,
    grid: &ShiftGrid,
) -> Result<AlignmentResult, AlignError> {
    assert_eq!((pano.width(), pano.height()), (g.width, g.height), "panorama must match its geometry");
    let h_start = (0..g.height)
        .find(|&i| g.row_theta(i) > FRAC_PI_2)
        .ok_or(AlignError::EmptyValidRegion)?;
    let crop_h = g.height - h_start;
    let w = g.width;

    // Panorama-side SSIM statistics, computed once on the cropped luma.
    let pano_luma_full = luma_255(pano);
    let pano_crop = pano_luma_full[h_start * w..].to_vec();
    let half = ssim_half(pano_crop, w, crop_h);

    let sat_luma = luma_255(sat);
    let (sw, sh) = (sat.width(), sat.height());

    // Per-row ground radius and per-column direction; a candidate only
    // moves the projection center.
    let rho: Vec<f64> = (h_start..g.height)
        .map(|i| cam.scale * (-g.camera_height) * g.row_theta(i).tan())
        .collect();
    let (cos_phi, sin_phi): (Vec<f64>, Vec<f64>) = (0..w)
        .map(|j| {
            let phi = g.pixel_to_angles(0, j).phi;
            (phi.cos(), phi.sin())
        })
        .unzip();

    let offsets_u = grid.offsets_u();
    let offsets_v = grid.offsets_v();
    let n_u = offsets_u.len();
    let n_v = offsets_v.len();

    // Comparison region shared by every candidate: pixels whose footprint
    // stays inside the raster under all candidate shifts. Scoring each
    // candidate on its own validity region would reward candidates that
    // happen to exclude hard-to-match pixels; a fixed region makes the
    // scores differ only through image agreement, and makes a constant
    // pair score identically everywhere (the degenerate case).
    let s_off_u = (cam.scale * offsets_u[0], cam.scale * offsets_u[n_u - 1]);
    let s_off_v = (cam.scale * offsets_v[0], cam.scale * offsets_v[n_v - 1]);
    let mut mask = vec![false; crop_h * w];
    let mut any_valid = false;
    for i in 0..crop_h {
        for j in 0..w {
            let base_u = cam.center_u + rho[i] * cos_phi[j];
            let base_v = cam.center_v + rho[i] * sin_phi[j];
            let ok = base_u + s_off_u.0 >= 0.0
                && base_u + s_off_u.1 <= (sw - 1) as f64
                && base_v + s_off_v.0 >= 0.0
                && base_v + s_off_v.1 <= (sh - 1) as f64;
            mask[i * w + j] = ok;
            any_valid |= ok;
        }
    }
    if !any_valid {
        return Err(AlignError::EmptyValidRegion);
    }

    let score_map: Vec<f64> = (0..n_u * n_v)
        .into_par_iter()
        .map(|idx| {
            let (iv, iu) = (idx / n_u, idx % n_u);
            let cu = cam.center_u + cam.scale * offsets_u[iu];
            let cv = cam.center_v + cam.scale * offsets_v[iv];
            let mut la = vec![0.0f64; crop_h * w];
            for i in 0..crop_h {
                for j in 0..w {
                    // Pixels outside the shared region still get content
                    // (edge-extended where the footprint leaves the
                    // raster): SSIM windows straddling the region boundary
                    // should see plausible values, not artificial zeros.
                    let u = (cu + rho[i] * cos_phi[j]).clamp(0.0, (sw - 1) as f64);
                    let v = (cv + rho[i] * sin_phi[j]).clamp(0.0, (sh - 1) as f64);
                    la[i * w + j] = bilinear_f64(&sat_luma, sw, sh, u, v)
                        .expect("clamped sample is always inside");
                }
            }
            ssim_mean_against_half(&la, &half, Some(&mask))
                .expect("comparison region checked non-empty")
        })
        .collect();

    let (iv, iu, best_score) = argmax_shift(&score_map, &offsets_u, &offsets_v);
    let spread = {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &s in &score_map {
            lo = lo.min(s);
            hi = hi.max(s);
        }
        hi - lo
    };
    let degenerate = spread <= DEGENERATE_SPREAD;
    let best_shift = if degenerate { (0.0, 0.0) } else { (offsets_u[iu], offsets_v[iv]) };
    Ok(AlignmentResult {
        best_shift,
        best_score,
        score_map,
        degenerate,
        unalignable: best_score < UNALIGNABLE_SSIM,
    })
}
