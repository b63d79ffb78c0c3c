//! Float image buffers, validity masks, sampling, and PNG round trips.
//!
//! Pixel values live in [0, 1] as f32 with row-major layout and interleaved
//! channels. Sampling coordinates follow the satellite convention: u is the
//! fractional column, v the fractional row, pixel centers at integers.

use std::io::ErrorKind;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("unsupported or corrupt image {path}: {detail}")]
    UnsupportedFormat { path: String, detail: String },
    #[error("dimension mismatch: expected {expected:?}, got {got:?}")]
    DimensionMismatch { expected: (usize, usize, usize), got: (usize, usize, usize) },
    #[error("zero-sized raster dimension")]
    ZeroDimension,
}

/// Row-major float image with 1 (gray) or 3 (RGB) interleaved channels.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f32>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        assert!(channels == 1 || channels == 3, "1 or 3 channels");
        Self { width, height, channels, data: vec![0.0; width * height * channels] }
    }

    pub fn from_vec(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Self {
        assert!(channels == 1 || channels == 3, "1 or 3 channels");
        assert_eq!(data.len(), width * height * channels);
        Self { width, height, channels, data }
    }

    /// Builds a gray or RGB image by evaluating f at each (row, col).
    pub fn from_fn(width: usize, height: usize, channels: usize, mut f: impl FnMut(usize, usize) -> [f32; 3]) -> Self {
        let mut img = Self::new(width, height, channels);
        for r in 0..height {
            for c in 0..width {
                let px = f(r, c);
                for ch in 0..channels {
                    img.set(r, c, ch, px[ch]);
                }
            }
        }
        img
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.width, self.height, self.channels)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    #[inline]
    fn idx(&self, row: usize, col: usize, ch: usize) -> usize {
        (row * self.width + col) * self.channels + ch
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, ch: usize) -> f32 {
        self.data[self.idx(row, col, ch)]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, ch: usize, value: f32) {
        let i = self.idx(row, col, ch);
        self.data[i] = value;
    }

    /// Interleaved pixel slice at (row, col).
    #[inline]
    pub fn pixel(&self, row: usize, col: usize) -> &[f32] {
        let i = self.idx(row, col, 0);
        &self.data[i..i + self.channels]
    }

    pub fn fill(&mut self, value: f32) {
        self.data.fill(value);
    }

    /// Rec. 601 luma for RGB images; gray images pass through.
    pub fn luma(&self) -> ImageBuffer {
        if self.channels == 1 {
            return self.clone();
        }
        let mut out = ImageBuffer::new(self.width, self.height, 1);
        for r in 0..self.height {
            for c in 0..self.width {
                let p = self.pixel(r, c);
                let y = 0.299 * f64::from(p[0]) + 0.587 * f64::from(p[1]) + 0.114 * f64::from(p[2]);
                out.set(r, c, 0, y as f32);
            }
        }
        out
    }

    /// Bilinear sample at (u, v); writes one value per channel into out.
    /// Returns false and zeros when the point falls outside the pixel-center
    /// grid [0, w-1] x [0, h-1]. Exact at integer centers.
    pub fn bilinear_sample(&self, u: f64, v: f64, out: &mut [f32]) -> bool {
        debug_assert_eq!(out.len(), self.channels);
        let umax = (self.width - 1) as f64;
        let vmax = (self.height - 1) as f64;
        if !(u >= 0.0 && u <= umax && v >= 0.0 && v <= vmax) {
            out.fill(0.0);
            return false;
        }
        self.bilinear_unchecked(u, v, out);
        true
    }

    /// Bilinear sample with coordinates clamped onto the pixel-center grid.
    pub fn bilinear_sample_clamped(&self, u: f64, v: f64, out: &mut [f32]) {
        let u = u.clamp(0.0, (self.width - 1) as f64);
        let v = v.clamp(0.0, (self.height - 1) as f64);
        self.bilinear_unchecked(u, v, out);
    }

    /// Bilinear sample with the column wrapping cyclically and the row
    /// clamped; used for equirectangular sources where u is periodic.
    pub fn bilinear_sample_wrap_u(&self, u: f64, v: f64, out: &mut [f32]) {
        let w = self.width as f64;
        let u = u.rem_euclid(w);
        let v = v.clamp(0.0, (self.height - 1) as f64);
        let c0 = u.floor() as usize % self.width;
        let c1 = (c0 + 1) % self.width;
        let fu = u - u.floor();
        let r0 = v.floor() as usize;
        let r1 = (r0 + 1).min(self.height - 1);
        let fv = v - r0 as f64;
        for ch in 0..self.channels {
            let p00 = f64::from(self.get(r0, c0, ch));
            let p01 = f64::from(self.get(r0, c1, ch));
            let p10 = f64::from(self.get(r1, c0, ch));
            let p11 = f64::from(self.get(r1, c1, ch));
            let top = p00 * (1.0 - fu) + p01 * fu;
            let bot = p10 * (1.0 - fu) + p11 * fu;
            out[ch] = (top * (1.0 - fv) + bot * fv) as f32;
        }
    }

    fn bilinear_unchecked(&self, u: f64, v: f64, out: &mut [f32]) {
        let c0 = u.floor() as usize;
        let r0 = v.floor() as usize;
        let c1 = (c0 + 1).min(self.width - 1);
        let r1 = (r0 + 1).min(self.height - 1);
        let fu = u - c0 as f64;
        let fv = v - r0 as f64;
        for ch in 0..self.channels {
            let p00 = f64::from(self.get(r0, c0, ch));
            let p01 = f64::from(self.get(r0, c1, ch));
            let p10 = f64::from(self.get(r1, c0, ch));
            let p11 = f64::from(self.get(r1, c1, ch));
            let top = p00 * (1.0 - fu) + p01 * fu;
            let bot = p10 * (1.0 - fu) + p11 * fu;
            out[ch] = (top * (1.0 - fv) + bot * fv) as f32;
        }
    }

    /// Bilinear resize with half-pixel center alignment and edge clamping.
    /// Identity dimensions reproduce the input bit for bit.
    pub fn resize(&self, new_width: usize, new_height: usize) -> Result<ImageBuffer, RasterError> {
        if new_width == 0 || new_height == 0 {
            return Err(RasterError::ZeroDimension);
        }
        let mut out = ImageBuffer::new(new_width, new_height, self.channels);
        let sx = self.width as f64 / new_width as f64;
        let sy = self.height as f64 / new_height as f64;
        let mut px = vec![0.0f32; self.channels];
        for r in 0..new_height {
            let v = (r as f64 + 0.5) * sy - 0.5;
            for c in 0..new_width {
                let u = (c as f64 + 0.5) * sx - 0.5;
                self.bilinear_sample_clamped(u, v, &mut px);
                for ch in 0..self.channels {
                    out.set(r, c, ch, px[ch]);
                }
            }
        }
        Ok(out)
    }
}

/// Per-pixel validity, true where a raster carries data.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl Mask {
    pub fn new_filled(width: usize, height: usize, value: bool) -> Self {
        Self { width, height, data: vec![value; width * height] }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.data[row * self.width + col] = value;
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn and(&self, other: &Mask) -> Mask {
        assert_eq!((self.width, self.height), (other.width, other.height));
        let data = self.data.iter().zip(&other.data).map(|(a, b)| *a && *b).collect();
        Mask { width: self.width, height: self.height, data }
    }

    /// 0/1 gray image, convenient for saving alongside renders.
    pub fn to_image(&self) -> ImageBuffer {
        let data = self.data.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        ImageBuffer::from_vec(self.width, self.height, 1, data)
    }
}

/// Render output: color plus the validity of each pixel.
#[derive(Debug, Clone)]
pub struct MaskedImage {
    pub image: ImageBuffer,
    pub mask: Mask,
}

fn io_err(path: &Path, source: std::io::Error) -> RasterError {
    RasterError::Io { path: path.display().to_string(), source }
}

fn decode_err(path: &Path, detail: impl ToString) -> RasterError {
    RasterError::UnsupportedFormat { path: path.display().to_string(), detail: detail.to_string() }
}

fn open_image(path: &Path) -> Result<image::DynamicImage, RasterError> {
    match image::open(path) {
        Ok(img) => Ok(img),
        Err(image::ImageError::IoError(e)) => Err(io_err(path, e)),
        Err(e) => Err(decode_err(path, e)),
    }
}

/// Loads an 8- or 16-bit gray or RGB PNG into [0, 1] floats. An alpha
/// channel, if present, is dropped.
pub fn load_png(path: impl AsRef<Path>) -> Result<ImageBuffer, RasterError> {
    let path = path.as_ref();
    let img = open_image(path)?;
    use image::ColorType as Ct;
    let out = match img.color() {
        Ct::L8 => {
            let g = img.into_luma8();
            let (w, h) = (g.width() as usize, g.height() as usize);
            let data = g.into_raw().iter().map(|&v| f32::from(v) / 255.0).collect();
            ImageBuffer::from_vec(w, h, 1, data)
        }
        Ct::L16 => {
            let g = img.into_luma16();
            let (w, h) = (g.width() as usize, g.height() as usize);
            let data = g.into_raw().iter().map(|&v| f32::from(v) / 65535.0).collect();
            ImageBuffer::from_vec(w, h, 1, data)
        }
        Ct::Rgb8 | Ct::Rgba8 | Ct::La8 => {
            let rgb = img.into_rgb8();
            let (w, h) = (rgb.width() as usize, rgb.height() as usize);
            let data = rgb.into_raw().iter().map(|&v| f32::from(v) / 255.0).collect();
            ImageBuffer::from_vec(w, h, 3, data)
        }
        Ct::Rgb16 | Ct::Rgba16 | Ct::La16 => {
            let rgb = img.into_rgb16();
            let (w, h) = (rgb.width() as usize, rgb.height() as usize);
            let data = rgb.into_raw().iter().map(|&v| f32::from(v) / 65535.0).collect();
            ImageBuffer::from_vec(w, h, 3, data)
        }
        other => return Err(decode_err(path, format!("unsupported pixel format {other:?}"))),
    };
    Ok(out)
}

/// Loads a gray PNG as a height map in meters: raw integer sample * scale +
/// offset, without normalization.
pub fn load_height_png(
    path: impl AsRef<Path>,
    scale: f64,
    offset: f64,
) -> Result<ImageBuffer, RasterError> {
    let path = path.as_ref();
    let img = open_image(path)?;
    use image::ColorType as Ct;
    let out = match img.color() {
        Ct::L8 => {
            let g = img.into_luma8();
            let (w, h) = (g.width() as usize, g.height() as usize);
            let data = g.into_raw().iter().map(|&v| (f64::from(v) * scale + offset) as f32).collect();
            ImageBuffer::from_vec(w, h, 1, data)
        }
        Ct::L16 => {
            let g = img.into_luma16();
            let (w, h) = (g.width() as usize, g.height() as usize);
            let data = g.into_raw().iter().map(|&v| (f64::from(v) * scale + offset) as f32).collect();
            ImageBuffer::from_vec(w, h, 1, data)
        }
        other => return Err(decode_err(path, format!("height maps must be gray, got {other:?}"))),
    };
    Ok(out)
}

fn quantize8(v: f32) -> u8 {
    (f64::from(v) * 255.0).round().clamp(0.0, 255.0) as u8
}

fn quantize16(v: f32) -> u16 {
    (f64::from(v) * 65535.0).round().clamp(0.0, 65535.0) as u16
}

fn save_err(path: &Path, e: image::ImageError) -> RasterError {
    match e {
        image::ImageError::IoError(e) => io_err(path, e),
        other => io_err(path, std::io::Error::new(ErrorKind::Other, other.to_string())),
    }
}

/// Saves as 8-bit gray or RGB PNG, rounding and clamping to [0, 255].
pub fn save_png(img: &ImageBuffer, path: impl AsRef<Path>) -> Result<(), RasterError> {
    let path = path.as_ref();
    let (w, h) = (img.width() as u32, img.height() as u32);
    let data: Vec<u8> = img.data().iter().map(|&v| quantize8(v)).collect();
    let res = match img.channels() {
        1 => image::GrayImage::from_raw(w, h, data).unwrap().save(path),
        _ => image::RgbImage::from_raw(w, h, data).unwrap().save(path),
    };
    res.map_err(|e| save_err(path, e))
}

/// Saves a gray image as 16-bit PNG, rounding and clamping to [0, 65535].
pub fn save_png16(img: &ImageBuffer, path: impl AsRef<Path>) -> Result<(), RasterError> {
    let path = path.as_ref();
    assert_eq!(img.channels(), 1, "16-bit save is for gray images");
    let (w, h) = (img.width() as u32, img.height() as u32);
    let data: Vec<u16> = img.data().iter().map(|&v| quantize16(v)).collect();
    image::ImageBuffer::<image::Luma<u16>, Vec<u16>>::from_raw(w, h, data)
        .unwrap()
        .save(path)
        .map_err(|e| save_err(path, e))
}
