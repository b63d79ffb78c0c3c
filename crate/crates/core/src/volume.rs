//! Per-pixel height probability volumes and their binary serialization.
//!
//! A volume stores, for every satellite pixel, a categorical distribution
//! over N discrete plane heights. Heights are meters relative to the street
//! camera, strictly decreasing, with the last plane on the ground.
//!
//! File format `HPV1` (little endian): magic "HPV1"; width, height, n_planes
//! as u32; n_planes plane heights as f32; then width*height*n_planes f32
//! probabilities in (row, col, plane) order, plane fastest.

use crate::raster::ImageBuffer;
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

const MAGIC: &[u8; 4] = b"HPV1";

/// Per-pixel sum tolerance accepted by validation.
pub const SUM_TOLERANCE: f32 = 1e-5;

#[derive(Debug, Error)]
pub enum VolumeError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad volume file: {0}")]
    Format(String),
    #[error("height {height} at pixel ({row}, {col}) outside plane range [{min}, {max}]")]
    HeightOutOfRange { row: usize, col: usize, height: f32, min: f32, max: f32 },
    #[error("invalid volume: {0}")]
    Invalid(String),
}

/// Categorical height distribution per satellite pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct HeightProbabilityVolume {
    width: usize,
    height: usize,
    plane_heights: Vec<f32>,
    data: Vec<f32>,
}

/// n plane heights descending from top to ground inclusive; n = 1 gives just
/// the ground.
pub fn uniform_plane_heights(n: usize, top: f32, ground: f32) -> Vec<f32> {
    assert!(n >= 1 && top > ground);
    if n == 1 {
        return vec![ground];
    }
    (0..n)
        .map(|i| {
            let t = i as f64 / (n - 1) as f64;
            (f64::from(top) + (f64::from(ground) - f64::from(top)) * t) as f32
        })
        .collect()
}

impl HeightProbabilityVolume {
    pub fn zeroed(width: usize, height: usize, plane_heights: Vec<f32>) -> Result<Self, VolumeError> {
        check_heights(&plane_heights)?;
        let data = vec![0.0; width * height * plane_heights.len()];
        Ok(Self { width, height, plane_heights, data })
    }

    pub fn from_data(
        width: usize,
        height: usize,
        plane_heights: Vec<f32>,
        data: Vec<f32>,
    ) -> Result<Self, VolumeError> {
        check_heights(&plane_heights)?;
        if data.len() != width * height * plane_heights.len() {
            return Err(VolumeError::Invalid(format!(
                "data length {} does not match {}x{}x{}",
                data.len(),
                width,
                height,
                plane_heights.len()
            )));
        }
        Ok(Self { width, height, plane_heights, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn n_planes(&self) -> usize {
        self.plane_heights.len()
    }

    pub fn plane_heights(&self) -> &[f32] {
        &self.plane_heights
    }

    /// Distribution slice for one pixel, one probability per plane.
    #[inline]
    pub fn pixel(&self, row: usize, col: usize) -> &[f32] {
        let n = self.plane_heights.len();
        let i = (row * self.width + col) * n;
        &self.data[i..i + n]
    }

    #[inline]
    pub fn pixel_mut(&mut self, row: usize, col: usize) -> &mut [f32] {
        let n = self.plane_heights.len();
        let i = (row * self.width + col) * n;
        &mut self.data[i..i + n]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Checks probabilities are in range and sum to one per pixel.
    pub fn validate(&self) -> Result<(), VolumeError> {
        for row in 0..self.height {
            for col in 0..self.width {
                let mut sum = 0.0f64;
                for &p in self.pixel(row, col) {
                    if !(0.0..=1.0 + f64::from(SUM_TOLERANCE)).contains(&f64::from(p)) {
                        return Err(VolumeError::Invalid(format!(
                            "probability {p} at ({row}, {col}) out of [0, 1]"
                        )));
                    }
                    sum += f64::from(p);
                }
                if (sum - 1.0).abs() > f64::from(SUM_TOLERANCE) {
                    return Err(VolumeError::Invalid(format!(
                        "pixel ({row}, {col}) sums to {sum}, expected 1"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Probability-weighted mean height per pixel, meters.
    pub fn expected_height(&self) -> ImageBuffer {
        let mut out = ImageBuffer::new(self.width, self.height, 1);
        for row in 0..self.height {
            for col in 0..self.width {
                let mut e = 0.0f64;
                for (p, h) in self.pixel(row, col).iter().zip(&self.plane_heights) {
                    e += f64::from(*p) * f64::from(*h);
                }
                out.set(row, col, 0, e as f32);
            }
        }
        out
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<(), VolumeError> {
        w.write_all(MAGIC)?;
        w.write_all(&(self.width as u32).to_le_bytes())?;
        w.write_all(&(self.height as u32).to_le_bytes())?;
        w.write_all(&(self.plane_heights.len() as u32).to_le_bytes())?;
        let mut buf = Vec::with_capacity(4 * (self.plane_heights.len() + self.data.len()));
        for &h in &self.plane_heights {
            buf.extend_from_slice(&h.to_le_bytes());
        }
        for &p in &self.data {
            buf.extend_from_slice(&p.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self, VolumeError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(|_| VolumeError::Format("truncated header".into()))?;
        if &magic != MAGIC {
            return Err(VolumeError::Format("bad magic, expected HPV1".into()));
        }
        let mut word = [0u8; 4];
        let mut read_u32 = |r: &mut dyn Read| -> Result<u32, VolumeError> {
            r.read_exact(&mut word).map_err(|_| VolumeError::Format("truncated header".into()))?;
            Ok(u32::from_le_bytes(word))
        };
        let width = read_u32(&mut r)? as usize;
        let height = read_u32(&mut r)? as usize;
        let n = read_u32(&mut r)? as usize;
        if width == 0 || height == 0 || n == 0 {
            return Err(VolumeError::Format("zero dimension".into()));
        }
        let count = width
            .checked_mul(height)
            .and_then(|p| p.checked_mul(n))
            .ok_or_else(|| VolumeError::Format("dimensions overflow".into()))?;
        let mut floats = vec![0u8; 4 * (n + count)];
        r.read_exact(&mut floats).map_err(|_| VolumeError::Format("truncated payload".into()))?;
        let mut vals = floats.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]));
        let plane_heights: Vec<f32> = vals.by_ref().take(n).collect();
        let data: Vec<f32> = vals.collect();
        let mut extra = [0u8; 1];
        if r.read(&mut extra)? != 0 {
            return Err(VolumeError::Format("trailing bytes after payload".into()));
        }
        Self::from_data(width, height, plane_heights, data)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), VolumeError> {
        let f = std::fs::File::create(path)?;
        self.write_to(std::io::BufWriter::new(f))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, VolumeError> {
        let f = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(f))
    }
}

fn check_heights(plane_heights: &[f32]) -> Result<(), VolumeError> {
    if plane_heights.is_empty() {
        return Err(VolumeError::Invalid("no planes".into()));
    }
    for w in plane_heights.windows(2) {
        if !(w[0] > w[1]) {
            return Err(VolumeError::Invalid("plane heights must strictly decrease".into()));
        }
    }
    if plane_heights.iter().any(|h| !h.is_finite()) {
        return Err(VolumeError::Invalid("plane heights must be finite".into()));
    }
    Ok(())
}

/// Converts a hard height map (meters) into a distribution: a height on a
/// plane becomes one-hot; a height between two planes splits linearly
/// between them so the expected height is preserved.
pub fn heightmap_to_distribution(
    heights: &ImageBuffer,
    plane_heights: &[f32],
) -> Result<HeightProbabilityVolume, VolumeError> {
    assert_eq!(heights.channels(), 1, "height maps are single channel");
    check_heights(plane_heights)?;
    let n = plane_heights.len();
    let top = plane_heights[0];
    let ground = plane_heights[n - 1];
    // Absorb f32 round-off from file round trips before rejecting.
    let slack = 1e-4f32;
    let mut vol =
        HeightProbabilityVolume::zeroed(heights.width(), heights.height(), plane_heights.to_vec())?;
    for row in 0..heights.height() {
        for col in 0..heights.width() {
            let h = heights.get(row, col, 0);
            if !h.is_finite() || h > top + slack || h < ground - slack {
                return Err(VolumeError::HeightOutOfRange {
                    row,
                    col,
                    height: h,
                    min: ground,
                    max: top,
                });
            }
            let h = h.clamp(ground, top);
            let px = vol.pixel_mut(row, col);
            // Lowest plane at or above h; heights descend so search from top.
            let mut k = 0;
            while k + 1 < n && plane_heights[k + 1] >= h {
                k += 1;
            }
            if h == plane_heights[k] || k + 1 == n {
                px[k] = 1.0;
            } else {
                let hk = f64::from(plane_heights[k]);
                let hk1 = f64::from(plane_heights[k + 1]);
                let t = (f64::from(h) - hk1) / (hk - hk1);
                px[k] = t as f32;
                px[k + 1] = (1.0 - t) as f32;
            }
        }
    }
    Ok(vol)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_heights_span_and_order() {
        let h = uniform_plane_heights(64, 6.0, -2.0);
        assert_eq!(h.len(), 64);
        assert_eq!(h[0], 6.0);
        assert_eq!(h[63], -2.0);
        assert!(h.windows(2).all(|w| w[0] > w[1]));
        assert_eq!(uniform_plane_heights(1, 6.0, -2.0), vec![-2.0]);
    }

    #[test]
    fn split_preserves_expected_height() {
        let planes = uniform_plane_heights(17, 6.0, -2.0);
        let hm = ImageBuffer::from_fn(5, 4, 1, |r, c| {
            [-2.0 + 8.0 * ((r * 5 + c) as f32 / 19.0), 0.0, 0.0]
        });
        let vol = heightmap_to_distribution(&hm, &planes).unwrap();
        vol.validate().unwrap();
        let e = vol.expected_height();
        for r in 0..4 {
            for c in 0..5 {
                assert!((e.get(r, c, 0) - hm.get(r, c, 0)).abs() < 1e-5);
                let nz = vol.pixel(r, c).iter().filter(|&&p| p > 0.0).count();
                assert!(nz <= 2);
            }
        }
    }

    #[test]
    fn on_plane_heights_are_one_hot() {
        let planes = uniform_plane_heights(9, 6.0, -2.0);
        let hm = ImageBuffer::from_fn(3, 3, 1, |r, c| [planes[(r * 3 + c) % 9], 0.0, 0.0]);
        let vol = heightmap_to_distribution(&hm, &planes).unwrap();
        for r in 0..3 {
            for c in 0..3 {
                let px = vol.pixel(r, c);
                let ones = px.iter().filter(|&&p| p == 1.0).count();
                let zeros = px.iter().filter(|&&p| p == 0.0).count();
                assert_eq!((ones, zeros), (1, 8));
                assert_eq!(px[(r * 3 + c) % 9], 1.0);
            }
        }
    }

    #[test]
    fn out_of_range_heights_are_rejected_with_location() {
        let planes = uniform_plane_heights(5, 6.0, -2.0);
        let mut hm = ImageBuffer::new(4, 4, 1);
        hm.fill(0.0);
        hm.set(2, 3, 0, 6.3);
        match heightmap_to_distribution(&hm, &planes) {
            Err(VolumeError::HeightOutOfRange { row: 2, col: 3, .. }) => {}
            other => panic!("expected out-of-range at (2, 3), got {other:?}"),
        }
    }

    #[test]
    fn single_plane_volume() {
        let mut hm = ImageBuffer::new(2, 2, 1);
        hm.fill(-2.0);
        let vol = heightmap_to_distribution(&hm, &[-2.0]).unwrap();
        vol.validate().unwrap();
        assert_eq!(vol.pixel(0, 0), &[1.0]);
        hm.set(0, 0, 0, 1.0);
        assert!(heightmap_to_distribution(&hm, &[-2.0]).is_err());
    }

    #[test]
    fn hpv1_round_trip() {
        let planes = uniform_plane_heights(7, 6.0, -2.0);
        let hm = ImageBuffer::from_fn(6, 3, 1, |r, c| [-2.0 + ((r + c) % 8) as f32, 0.0, 0.0]);
        let vol = heightmap_to_distribution(&hm, &planes).unwrap();
        let mut bytes = Vec::new();
        vol.write_to(&mut bytes).unwrap();
        assert_eq!(&bytes[0..4], b"HPV1");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 6);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 3);
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 7);
        assert_eq!(bytes.len(), 16 + 4 * 7 + 4 * 6 * 3 * 7);
        let back = HeightProbabilityVolume::read_from(bytes.as_slice()).unwrap();
        assert_eq!(back, vol);
    }

    #[test]
    fn hpv1_rejects_corruption() {
        let vol = HeightProbabilityVolume::from_data(1, 1, vec![0.0, -1.0], vec![0.5, 0.5]).unwrap();
        let mut bytes = Vec::new();
        vol.write_to(&mut bytes).unwrap();
        assert!(HeightProbabilityVolume::read_from(&bytes[..bytes.len() - 2]).is_err());
        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        assert!(HeightProbabilityVolume::read_from(bad_magic.as_slice()).is_err());
        let mut trailing = bytes.clone();
        trailing.push(0);
        assert!(HeightProbabilityVolume::read_from(trailing.as_slice()).is_err());
        // Non-decreasing plane heights are structural corruption too.
        let mut swapped = bytes;
        swapped[16..20].copy_from_slice(&(-1.0f32).to_le_bytes());
        swapped[20..24].copy_from_slice(&(0.0f32).to_le_bytes());
        assert!(HeightProbabilityVolume::read_from(swapped.as_slice()).is_err());
    }

    #[test]
    fn validate_flags_bad_sums() {
        let vol = HeightProbabilityVolume::from_data(1, 1, vec![0.0, -1.0], vec![0.7, 0.2]).unwrap();
        assert!(vol.validate().is_err());
        let vol = HeightProbabilityVolume::from_data(1, 1, vec![0.0, -1.0], vec![1.2, -0.2]).unwrap();
        assert!(vol.validate().is_err());
    }
}
