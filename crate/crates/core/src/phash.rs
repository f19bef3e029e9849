//! 64-bit DCT perceptual hash and the Hamming metric.
//!
//! The hash is fixed as follows so that it stays bit-stable across releases:
//!
//! 1. decode, convert to ITU-R BT.601 luma (`0.299 R + 0.587 G + 0.114 B`) in `f64`;
//! 2. resize to 32x32 with a separable bilinear (triangle) filter whose support
//!    widens with the downscale factor;
//! 3. 2-D DCT-II (unnormalised, `sum x[n] cos(pi k (2n+1) / 2N)` along each axis);
//! 4. keep the top-left 8x8 block of coefficients, row-major;
//! 5. take the median of the 63 non-DC coefficients;
//! 6. coefficient `i` sets bit `63 - i` iff it exceeds that median by more than
//!    [`TIE_TOLERANCE`] times the block's largest magnitude (so the hex string
//!    reads in row-major order, DC first, and exact ties stay clear).

use std::fmt;
use std::io::Cursor;
use std::path::Path;
use std::str::FromStr;

use image::{AnimationDecoder, DynamicImage, ImageFormat, ImageReader};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Side of the square the image is resized to before the DCT.
pub const DCT_SIZE: usize = 32;
/// Side of the low-frequency block that becomes the hash.
pub const BLOCK_SIZE: usize = 8;

#[derive(Debug, Error)]
pub enum PhashError {
    #[error("cannot decode image: {0}")]
    Decode(String),
    #[error("image has zero area ({width}x{height})")]
    ZeroArea { width: u32, height: u32 },
    #[error("animated images are not supported")]
    Animated,
    #[error("invalid hash hex {0:?}: expected 16 hex digits")]
    InvalidHex(String),
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// A 64-bit perceptual fingerprint.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PHash64(pub u64);

impl PHash64 {
    pub fn bits(self) -> u64 {
        self.0
    }

    pub fn to_hex(self) -> String {
        format!("{:016x}", self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self, PhashError> {
        let t = s.trim();
        if t.len() != 16 || !t.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(PhashError::InvalidHex(s.to_string()));
        }
        u64::from_str_radix(t, 16)
            .map(PHash64)
            .map_err(|_| PhashError::InvalidHex(s.to_string()))
    }

    pub fn hamming(self, other: PHash64) -> u32 {
        hamming(self, other)
    }
}

impl fmt::Display for PHash64 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

impl FromStr for PHash64 {
    type Err = PhashError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PHash64::from_hex(s)
    }
}

impl Serialize for PHash64 {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for PHash64 {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        PHash64::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

/// Number of differing bits.
#[inline]
pub fn hamming(a: PHash64, b: PHash64) -> u32 {
    (a.0 ^ b.0).count_ones()
}

/// One image of a corpus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageRef {
    pub id: String,
    pub source: ImageSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub community: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<i64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageSource {
    Path(std::path::PathBuf),
    #[serde(skip)]
    Bytes(Vec<u8>),
}

impl ImageRef {
    pub fn from_path(id: impl Into<String>, path: impl Into<std::path::PathBuf>) -> Self {
        ImageRef {
            id: id.into(),
            source: ImageSource::Path(path.into()),
            community: None,
            timestamp: None,
        }
    }

    pub fn read_bytes(&self) -> Result<Vec<u8>, PhashError> {
        match &self.source {
            ImageSource::Bytes(b) => Ok(b.clone()),
            ImageSource::Path(p) => std::fs::read(p).map_err(|source| PhashError::Io {
                path: p.display().to_string(),
                source,
            }),
        }
    }

    pub fn phash(&self) -> Result<PHash64, PhashError> {
        phash_bytes(&self.read_bytes()?)
    }
}

/// Hash an already-decoded image.
pub fn compute_phash(img: &DynamicImage) -> Result<PHash64, PhashError> {
    let (w, h) = (img.width(), img.height());
    if w == 0 || h == 0 {
        return Err(PhashError::ZeroArea { width: w, height: h });
    }
    let luma = luma_bt601(img);
    let small = resize_bilinear(&luma, w as usize, h as usize, DCT_SIZE, DCT_SIZE);
    Ok(hash_from_luma32(&small))
}

/// Decode an encoded payload and hash it. Animated GIF/APNG payloads are rejected.
pub fn phash_bytes(bytes: &[u8]) -> Result<PHash64, PhashError> {
    let reader = ImageReader::new(Cursor::new(bytes))
        .with_guessed_format()
        .map_err(|e| PhashError::Decode(e.to_string()))?;
    let format = reader.format();
    if is_animated(bytes, format)? {
        return Err(PhashError::Animated);
    }
    let img = reader
        .decode()
        .map_err(|e| PhashError::Decode(e.to_string()))?;
    compute_phash(&img)
}

pub fn phash_file(path: &Path) -> Result<PHash64, PhashError> {
    let bytes = std::fs::read(path).map_err(|source| PhashError::Io {
        path: path.display().to_string(),
        source,
    })?;
    phash_bytes(&bytes)
}

fn is_animated(bytes: &[u8], format: Option<ImageFormat>) -> Result<bool, PhashError> {
    match format {
        Some(ImageFormat::Gif) => {
            let decoder = image::codecs::gif::GifDecoder::new(Cursor::new(bytes))
                .map_err(|e| PhashError::Decode(e.to_string()))?;
            Ok(decoder.into_frames().take(2).count() > 1)
        }
        Some(ImageFormat::Png) => {
            let decoder = image::codecs::png::PngDecoder::new(Cursor::new(bytes))
                .map_err(|e| PhashError::Decode(e.to_string()))?;
            decoder
                .is_apng()
                .map_err(|e| PhashError::Decode(e.to_string()))
        }
        _ => Ok(false),
    }
}

fn luma_bt601(img: &DynamicImage) -> Vec<f64> {
    let rgb = img.to_rgb8();
    rgb.pixels()
        .map(|p| 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64)
        .collect()
}

/// Per-output-sample weights of a triangle filter, support scaled by the
/// downscale factor (identity when sizes match).
fn triangle_weights(src: usize, dst: usize) -> Vec<(usize, Vec<f64>)> {
    let scale = src as f64 / dst as f64;
    let support = scale.max(1.0);
    (0..dst)
        .map(|o| {
            let center = (o as f64 + 0.5) * scale;
            let lo = ((center - support).floor().max(0.0)) as usize;
            let hi = ((center + support).ceil() as usize).min(src);
            let mut ws: Vec<f64> = (lo..hi)
                .map(|i| {
                    let x = (i as f64 + 0.5 - center) / support;
                    (1.0 - x.abs()).max(0.0)
                })
                .collect();
            let total: f64 = ws.iter().sum();
            if total > 0.0 {
                ws.iter_mut().for_each(|w| *w /= total);
                (lo, ws)
            } else {
                // upscaling far past the source: nearest sample
                let nearest = (center.floor() as usize).min(src - 1);
                (nearest, vec![1.0])
            }
        })
        .collect()
}

/// Separable bilinear resize of a row-major luma plane.
pub fn resize_bilinear(src: &[f64], sw: usize, sh: usize, dw: usize, dh: usize) -> Vec<f64> {
    let wx = triangle_weights(sw, dw);
    let wy = triangle_weights(sh, dh);

    let mut horiz = vec![0.0; dw * sh];
    for y in 0..sh {
        let row = &src[y * sw..(y + 1) * sw];
        for (x, (start, ws)) in wx.iter().enumerate() {
            horiz[y * dw + x] = ws.iter().enumerate().map(|(k, w)| w * row[start + k]).sum();
        }
    }
    let mut out = vec![0.0; dw * dh];
    for (y, (start, ws)) in wy.iter().enumerate() {
        for x in 0..dw {
            out[y * dw + x] = ws
                .iter()
                .enumerate()
                .map(|(k, w)| w * horiz[(start + k) * dw + x])
                .sum();
        }
    }
    out
}

fn cos_table() -> Vec<f64> {
    let n = DCT_SIZE as f64;
    let mut t = vec![0.0; BLOCK_SIZE * DCT_SIZE];
    for k in 0..BLOCK_SIZE {
        for i in 0..DCT_SIZE {
            t[k * DCT_SIZE + i] =
                (std::f64::consts::PI * k as f64 * (2 * i + 1) as f64 / (2.0 * n)).cos();
        }
    }
    t
}

/// Low-frequency 8x8 block (row-major, `[v * 8 + u]` with `v` the vertical
/// frequency) of the unnormalised 2-D DCT-II of a 32x32 luma plane.
pub fn dct_low_block(pixels: &[f64]) -> [f64; BLOCK_SIZE * BLOCK_SIZE] {
    assert_eq!(pixels.len(), DCT_SIZE * DCT_SIZE);
    let table = cos_table();
    // rows first: rowt[y][u] = sum_x p[y][x] cos(u, x)
    let mut rowt = vec![0.0; DCT_SIZE * BLOCK_SIZE];
    for y in 0..DCT_SIZE {
        let row = &pixels[y * DCT_SIZE..(y + 1) * DCT_SIZE];
        for u in 0..BLOCK_SIZE {
            let c = &table[u * DCT_SIZE..(u + 1) * DCT_SIZE];
            rowt[y * BLOCK_SIZE + u] = row.iter().zip(c).map(|(p, c)| p * c).sum();
        }
    }
    let mut out = [0.0; BLOCK_SIZE * BLOCK_SIZE];
    for v in 0..BLOCK_SIZE {
        let c = &table[v * DCT_SIZE..(v + 1) * DCT_SIZE];
        for u in 0..BLOCK_SIZE {
            out[v * BLOCK_SIZE + u] = (0..DCT_SIZE).map(|y| c[y] * rowt[y * BLOCK_SIZE + u]).sum();
        }
    }
    out
}

/// Median of the 63 non-DC coefficients (odd count, so an actual element).
pub fn ac_median(block: &[f64; BLOCK_SIZE * BLOCK_SIZE]) -> f64 {
    let mut ac: Vec<f64> = block[1..].to_vec();
    ac.sort_by(|a, b| a.total_cmp(b));
    ac[ac.len() / 2]
}

/// Coefficients within this fraction of the block's largest magnitude of the
/// median count as ties (bit clear), so rounding noise cannot flip a bit.
pub const TIE_TOLERANCE: f64 = 1e-9;

/// Threshold a coefficient block into a hash.
pub fn bits_from_block(block: &[f64; BLOCK_SIZE * BLOCK_SIZE]) -> PHash64 {
    let median = ac_median(block);
    let tol = TIE_TOLERANCE * block.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    let bits = block
        .iter()
        .enumerate()
        .filter(|(_, c)| **c - median > tol)
        .fold(0u64, |acc, (i, _)| acc | 1u64 << (63 - i));
    PHash64(bits)
}

/// Hash a 32x32 row-major luma plane.
pub fn hash_from_luma32(pixels: &[f64]) -> PHash64 {
    bits_from_block(&dct_low_block(pixels))
}
