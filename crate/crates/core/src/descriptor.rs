//! Grayscale images, corner keypoints and gradient-histogram patch
//! descriptors.

use nalgebra::Vector2;
use thiserror::Error;

use crate::forest::Descriptor;

/// Spatial cells per patch side.
pub const GRID: usize = 4;
/// Orientation bins per cell.
pub const ORIENTATION_BINS: usize = 8;
/// Descriptor length.
pub const DESCRIPTOR_LEN: usize = GRID * GRID * ORIENTATION_BINS;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ImageError {
    #[error("not a binary PGM (P5) image")]
    BadMagic,
    #[error("malformed PGM header: {0}")]
    BadHeader(String),
    #[error("unsupported PGM maxval {0}; only 8-bit images are supported")]
    UnsupportedMaxval(u32),
    #[error("PGM pixel data truncated: expected {expected} bytes, got {got}")]
    Truncated { expected: usize, got: usize },
    #[error("image dimensions must be positive")]
    EmptyImage,
    #[error("patch of radius {radius} at ({x}, {y}) leaves the image")]
    PatchOutOfBounds { x: f64, y: f64, radius: u32 },
    #[error("patch radius must be at least 2")]
    RadiusTooSmall,
}

/// 8-bit grayscale raster in row-major order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::EmptyImage);
        }
        if data.len() != width * height {
            return Err(ImageError::Truncated {
                expected: width * height,
                got: data.len(),
            });
        }
        Ok(Self { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> u8) -> Result<Self, ImageError> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    fn at(&self, x: usize, y: usize) -> f64 {
        self.get(x, y) as f64
    }

    /// Parses a binary PGM. Header comments (`#` to end of line) are allowed.
    pub fn from_pgm(bytes: &[u8]) -> Result<Self, ImageError> {
        if bytes.len() < 2 || &bytes[..2] != b"P5" {
            return Err(ImageError::BadMagic);
        }
        let mut pos = 2;
        let mut fields = [0u32; 3];
        for (k, field) in fields.iter_mut().enumerate() {
            // whitespace and comments before each header field
            loop {
                match bytes.get(pos) {
                    Some(b) if b.is_ascii_whitespace() => pos += 1,
                    Some(b'#') => {
                        while bytes.get(pos).is_some_and(|b| *b != b'\n') {
                            pos += 1;
                        }
                    }
                    Some(_) => break,
                    None => return Err(ImageError::BadHeader("header ends early".into())),
                }
            }
            if pos == 2 {
                return Err(ImageError::BadHeader("missing whitespace after magic".into()));
            }
            let start = pos;
            while bytes.get(pos).is_some_and(|b| b.is_ascii_digit()) {
                pos += 1;
            }
            let text = std::str::from_utf8(&bytes[start..pos]).unwrap_or_default();
            *field = text
                .parse()
                .map_err(|_| ImageError::BadHeader(format!("header field {k} is not a number")))?;
        }
        match bytes.get(pos) {
            Some(b) if b.is_ascii_whitespace() => pos += 1,
            _ => return Err(ImageError::BadHeader("missing whitespace after maxval".into())),
        }
        let [w, h, maxval] = fields;
        if maxval == 0 || maxval > 255 {
            return Err(ImageError::UnsupportedMaxval(maxval));
        }
        let (w, h) = (w as usize, h as usize);
        if w == 0 || h == 0 {
            return Err(ImageError::EmptyImage);
        }
        let expected = w * h;
        let got = bytes.len() - pos;
        if got < expected {
            return Err(ImageError::Truncated { expected, got });
        }
        Self::new(w, h, bytes[pos..pos + expected].to_vec())
    }

    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.data);
        out
    }

    /// Central-difference gradient at an interior pixel.
    fn gradient(&self, x: usize, y: usize) -> (f64, f64) {
        (
            0.5 * (self.at(x + 1, y) - self.at(x - 1, y)),
            0.5 * (self.at(x, y + 1) - self.at(x, y - 1)),
        )
    }
}

/// A patch descriptor and whether the patch had no gradient at all.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchDescriptor {
    pub descriptor: Descriptor,
    pub flat: bool,
}

/// Gradient-orientation histogram of the square patch `[c - r, c + r]^2`.
///
/// Pixels whose centers lie strictly inside the square are split into a
/// 4x4 grid. Each pixel adds its gradient magnitude to the two nearest of
/// eight orientation bins of its cell, linearly interpolated. The 128-D
/// result is L2-normalized; a patch without gradient returns zeros and
/// `flat = true`.
pub fn patch_descriptor(image: &GrayImage, center: &Vector2<f64>, radius: u32) -> Result<PatchDescriptor, ImageError> {
    if radius < 2 {
        return Err(ImageError::RadiusTooSmall);
    }
    let r = radius as f64;
    let out_of_bounds = ImageError::PatchOutOfBounds { x: center.x, y: center.y, radius };
    let lo_x = (center.x - r).floor() as i64 + 1;
    let hi_x = (center.x + r).ceil() as i64 - 1;
    let lo_y = (center.y - r).floor() as i64 + 1;
    let hi_y = (center.y + r).ceil() as i64 - 1;
    if !(center.x.is_finite() && center.y.is_finite())
        || lo_x < 1
        || lo_y < 1
        || hi_x + 1 >= image.width as i64
        || hi_y + 1 >= image.height as i64
    {
        return Err(out_of_bounds);
    }
    let cell = 2.0 * r / GRID as f64;
    let bin_width = std::f64::consts::TAU / ORIENTATION_BINS as f64;
    let mut hist = vec![0.0; DESCRIPTOR_LEN];
    for y in lo_y..=hi_y {
        for x in lo_x..=hi_x {
            let (gx, gy) = image.gradient(x as usize, y as usize);
            let mag = gx.hypot(gy);
            if mag == 0.0 {
                continue;
            }
            let cx = (((x as f64 - (center.x - r)) / cell) as usize).min(GRID - 1);
            let cy = (((y as f64 - (center.y - r)) / cell) as usize).min(GRID - 1);
            let theta = gy.atan2(gx).rem_euclid(std::f64::consts::TAU);
            let pos = theta / bin_width;
            let b0 = (pos.floor() as usize) % ORIENTATION_BINS;
            let frac = pos - pos.floor();
            let b1 = (b0 + 1) % ORIENTATION_BINS;
            let base = (cy * GRID + cx) * ORIENTATION_BINS;
            hist[base + b0] += mag * (1.0 - frac);
            hist[base + b1] += mag * frac;
        }
    }
    let norm = hist.iter().map(|v| v * v).sum::<f64>().sqrt();
    let flat = norm == 0.0;
    if !flat {
        hist.iter_mut().for_each(|v| *v /= norm);
    }
    Ok(PatchDescriptor {
        descriptor: Descriptor::new(hist).expect("histogram is finite and non-empty"),
        flat,
    })
}

/// Harris corners: up to `max_count` local maxima of the corner response,
/// at least `min_distance` pixels apart and `border` pixels from the edge.
pub fn detect_keypoints(image: &GrayImage, max_count: usize, min_distance: f64, border: usize) -> Vec<Vector2<f64>> {
    const K: f64 = 0.04;
    const WINDOW: i64 = 2;
    let (w, h) = (image.width, image.height);
    if w < 2 * border + 3 || h < 2 * border + 3 {
        return Vec::new();
    }
    let mut ixx = vec![0.0; w * h];
    let mut iyy = vec![0.0; w * h];
    let mut ixy = vec![0.0; w * h];
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let (gx, gy) = image.gradient(x, y);
            ixx[y * w + x] = gx * gx;
            iyy[y * w + x] = gy * gy;
            ixy[y * w + x] = gx * gy;
        }
    }
    let start = border.max(WINDOW as usize + 1);
    let mut response = vec![0.0; w * h];
    let mut peak: f64 = 0.0;
    for y in start..h.saturating_sub(start) {
        for x in start..w.saturating_sub(start) {
            let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
            for dy in -WINDOW..=WINDOW {
                for dx in -WINDOW..=WINDOW {
                    let i = (y as i64 + dy) as usize * w + (x as i64 + dx) as usize;
                    a += ixx[i];
                    b += iyy[i];
                    c += ixy[i];
                }
            }
            let r = a * b - c * c - K * (a + b) * (a + b);
            response[y * w + x] = r;
            peak = peak.max(r);
        }
    }
    if peak <= 0.0 {
        return Vec::new();
    }
    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for y in start..h.saturating_sub(start) {
        for x in start..w.saturating_sub(start) {
            let r = response[y * w + x];
            if r < 0.01 * peak {
                continue;
            }
            let is_max = (-1i64..=1).all(|dy| {
                (-1i64..=1).all(|dx| {
                    let j = (y as i64 + dy) as usize * w + (x as i64 + dx) as usize;
                    (dx == 0 && dy == 0) || response[j] < r || (response[j] == r && j > y * w + x)
                })
            });
            if is_max {
                candidates.push((r, x, y));
            }
        }
    }
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.2.cmp(&b.2)).then(a.1.cmp(&b.1)));
    let mut out: Vec<Vector2<f64>> = Vec::new();
    for (_, x, y) in candidates {
        let p = Vector2::new(x as f64, y as f64);
        if out.iter().all(|q| (q - p).norm() >= min_distance) {
            out.push(p);
            if out.len() == max_count {
                break;
            }
        }
    }
    out
}
