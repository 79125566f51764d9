//! Raster decode to luminance, lossless 8-bit grayscale encode, and atomic
//! file writes.
//!
//! Decoding accepts PNG, BMP, PNM and JPEG. Color inputs are reduced to
//! luminance with the BT.601 weights and kept as `f64`, so no quantization
//! happens before normalization. Encoding writes 8-bit grayscale as PNG or
//! binary PGM (P5, maxval 255), chosen by file extension.

use std::io::Write;
use std::path::Path;

use image::codecs::png::PngEncoder;
use image::{DynamicImage, ImageEncoder, ImageReader};

use crate::error::{Error, Result};

const LUMA_R: f64 = 0.299;
const LUMA_G: f64 = 0.587;
const LUMA_B: f64 = 0.114;

/// Real-valued luminance raster, row-major, nominal range `[0, 255]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LuminanceImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl LuminanceImage {
    /// Builds an image, checking that it holds at least one 2×2 block and
    /// that every value is finite.
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width < 2 || height < 2 {
            return Err(Error::Dimension(format!(
                "image is {width}x{height}, at least 2x2 is required"
            )));
        }
        if data.len() != width * height {
            return Err(Error::Dimension(format!(
                "{width}x{height} image needs {} values, got {}",
                width * height,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Config(format!(
                "non-finite luminance at pixel ({}, {})",
                i / width,
                i % width
            )));
        }
        Ok(LuminanceImage {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for row in 0..height {
            for col in 0..width {
                data.push(f(row, col));
            }
        }
        Self::new(width, height, data)
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    /// Applies `f` to every pixel. The result must stay finite.
    pub fn map(&self, f: impl FnMut(f64) -> f64) -> Result<Self> {
        Self::new(
            self.width,
            self.height,
            self.data.iter().copied().map(f).collect(),
        )
    }

    /// Quantizes to 8 bits: clamp to `[0, 255]`, round half up.
    pub fn to_gray(&self) -> GrayOutputImage {
        GrayOutputImage {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| quantize(v)).collect(),
        }
    }
}

pub(crate) fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 255.0) + 0.5).floor().min(255.0) as u8
}

/// 8-bit grayscale raster used for every image the crate writes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayOutputImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl GrayOutputImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Dimension(format!(
                "output image is {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::Dimension(format!(
                "{width}x{height} output image needs {} values, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(GrayOutputImage {
            width,
            height,
            data,
        })
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
}

/// Decodes `path` into luminance.
///
/// Grayscale pixels pass through unchanged (16-bit samples are rescaled to
/// `[0, 255]`); color pixels become `0.299 R + 0.587 G + 0.114 B`.
pub fn load_image(path: impl AsRef<Path>) -> Result<LuminanceImage> {
    let path = path.as_ref();
    let decode_err = |source| Error::Decode {
        path: path.to_path_buf(),
        source,
    };
    let img = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(decode_err)?;
    let (width, height) = (img.width() as usize, img.height() as usize);
    luminance_from_dynamic(img)
        .and_then(|data| LuminanceImage::new(width, height, data))
        .map_err(|e| match e {
            Error::Dimension(msg) => Error::Dimension(format!("{}: {msg}", path.display())),
            other => other,
        })
}

fn bt601(r: f64, g: f64, b: f64) -> f64 {
    LUMA_R * r + LUMA_G * g + LUMA_B * b
}

fn luminance_from_dynamic(img: DynamicImage) -> Result<Vec<f64>> {
    const U16_TO_U8: f64 = 257.0;
    let data = match img {
        DynamicImage::ImageLuma8(buf) => buf.into_raw().into_iter().map(f64::from).collect(),
        DynamicImage::ImageLumaA8(buf) => buf.pixels().map(|p| f64::from(p.0[0])).collect(),
        DynamicImage::ImageLuma16(buf) => buf
            .into_raw()
            .into_iter()
            .map(|v| f64::from(v) / U16_TO_U8)
            .collect(),
        DynamicImage::ImageLumaA16(buf) => buf
            .pixels()
            .map(|p| f64::from(p.0[0]) / U16_TO_U8)
            .collect(),
        DynamicImage::ImageRgb8(buf) => buf
            .pixels()
            .map(|p| bt601(p.0[0].into(), p.0[1].into(), p.0[2].into()))
            .collect(),
        DynamicImage::ImageRgba8(buf) => buf
            .pixels()
            .map(|p| bt601(p.0[0].into(), p.0[1].into(), p.0[2].into()))
            .collect(),
        DynamicImage::ImageRgb16(buf) => buf
            .pixels()
            .map(|p| bt601(p.0[0].into(), p.0[1].into(), p.0[2].into()) / U16_TO_U8)
            .collect(),
        DynamicImage::ImageRgba16(buf) => buf
            .pixels()
            .map(|p| bt601(p.0[0].into(), p.0[1].into(), p.0[2].into()) / U16_TO_U8)
            .collect(),
        other => other
            .to_rgb32f()
            .pixels()
            .map(|p| 255.0 * bt601(p.0[0].into(), p.0[1].into(), p.0[2].into()))
            .collect(),
    };
    Ok(data)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum GrayFormat {
    Png,
    Pgm,
}

fn gray_format(path: &Path) -> Result<GrayFormat> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase);
    match ext.as_deref() {
        Some("png") => Ok(GrayFormat::Png),
        Some("pgm") => Ok(GrayFormat::Pgm),
        _ => Err(Error::UnsupportedFormat(path.to_path_buf())),
    }
}

/// True when `path` has an extension [`write_gray`] can encode.
pub fn is_gray_output_path(path: impl AsRef<Path>) -> bool {
    gray_format(path.as_ref()).is_ok()
}

/// Encodes `image` as binary P5 PGM with maxval 255.
pub fn encode_pgm(image: &GrayOutputImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", image.width, image.height).into_bytes();
    out.extend_from_slice(&image.data);
    out
}

fn encode_png(image: &GrayOutputImage, path: &Path) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    PngEncoder::new(&mut out)
        .write_image(
            &image.data,
            image.width as u32,
            image.height as u32,
            image::ExtendedColorType::L8,
        )
        .map_err(|source| Error::Encode {
            path: path.to_path_buf(),
            source,
        })?;
    Ok(out)
}

/// Writes `image` losslessly as PNG or PGM depending on the extension of
/// `path`. The file appears atomically or not at all.
pub fn write_gray(image: &GrayOutputImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = match gray_format(path)? {
        GrayFormat::Png => encode_png(image, path)?,
        GrayFormat::Pgm => encode_pgm(image),
    };
    write_atomic(path, &bytes)
}

/// Reads an 8-bit grayscale file back without any luminance conversion.
pub fn read_gray(path: impl AsRef<Path>) -> Result<GrayOutputImage> {
    let path = path.as_ref();
    let img = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(|source| Error::Decode {
            path: path.to_path_buf(),
            source,
        })?;
    let luma = img.into_luma8();
    let (w, h) = (luma.width() as usize, luma.height() as usize);
    GrayOutputImage::new(w, h, luma.into_raw())
}

/// Writes `bytes` to a temporary file next to `path` and renames it into
/// place.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}
