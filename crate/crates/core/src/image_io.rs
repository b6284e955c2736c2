//! Raster loading and 8-bit output. Multichannel rasters reduce to one
//! luminance channel through the p-energy transform.

use std::path::Path;

use image::{ColorType, DynamicImage, ImageBuffer, Luma, Rgb};

use crate::error::{Error, Result};

/// Interleaved 8-bit raster with `channels` samples per pixel, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterImage {
    width: usize,
    height: usize,
    channels: usize,
    samples: Vec<u8>,
}

impl RasterImage {
    pub fn new(width: usize, height: usize, channels: usize, samples: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::param("size", "image dimensions must be positive"));
        }
        if channels == 0 {
            return Err(Error::param("channels", "at least one channel is required"));
        }
        if samples.len() != width * height * channels {
            return Err(Error::param(
                "samples",
                format!(
                    "expected {} samples for {}x{}x{}, got {}",
                    width * height * channels,
                    width,
                    height,
                    channels,
                    samples.len()
                ),
            ));
        }
        Ok(Self {
            width,
            height,
            channels,
            samples,
        })
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

    pub fn samples(&self) -> &[u8] {
        &self.samples
    }

    /// Channel values of pixel `(x, y)`.
    pub fn pixel(&self, x: usize, y: usize) -> &[u8] {
        let base = (y * self.width + x) * self.channels;
        &self.samples[base..base + self.channels]
    }

    /// Writes the raster as PNG. Only 1- and 3-channel rasters are supported.
    pub fn save_png(&self, path: &Path) -> Result<()> {
        let (w, h) = (self.width as u32, self.height as u32);
        let result = match self.channels {
            1 => ImageBuffer::<Luma<u8>, _>::from_raw(w, h, self.samples.clone())
                .map(|b| b.save_with_format(path, image::ImageFormat::Png)),
            3 => ImageBuffer::<Rgb<u8>, _>::from_raw(w, h, self.samples.clone())
                .map(|b| b.save_with_format(path, image::ImageFormat::Png)),
            n => {
                return Err(Error::param(
                    "channels",
                    format!("cannot write a {n}-channel raster as PNG"),
                ))
            }
        };
        match result {
            Some(Ok(())) => Ok(()),
            Some(Err(e)) => Err(image_err(path, e)),
            None => unreachable!("sample count checked at construction"),
        }
    }
}

/// Single analysis channel: nonnegative real intensity per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct LuminanceImage {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl LuminanceImage {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::param("size", "image dimensions must be positive"));
        }
        if values.len() != width * height {
            return Err(Error::param("values", "length must equal width * height"));
        }
        if values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::param("values", "luminance must be finite and nonnegative"));
        }
        Ok(Self { width, height, values })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }
}

fn image_err(path: &Path, e: image::ImageError) -> Error {
    Error::Decode {
        path: path.to_path_buf(),
        reason: e.to_string(),
    }
}

/// Decodes an 8-bit PNG, PGM/PPM or TIFF file.
pub fn load_image(path: &Path) -> Result<RasterImage> {
    let reader = image::ImageReader::open(path)
        .map_err(|e| Error::Decode {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?
        .with_guessed_format()
        .map_err(|e| Error::Decode {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
    let decoded = reader.decode().map_err(|e| image_err(path, e))?;
    from_dynamic(decoded).map_err(|reason| Error::Decode {
        path: path.to_path_buf(),
        reason,
    })
}

fn from_dynamic(img: DynamicImage) -> std::result::Result<RasterImage, String> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let (channels, samples) = match img.color() {
        ColorType::L8 => (1, img.into_luma8().into_raw()),
        ColorType::La8 => (2, img.into_luma_alpha8().into_raw()),
        ColorType::Rgb8 => (3, img.into_rgb8().into_raw()),
        ColorType::Rgba8 => (4, img.into_rgba8().into_raw()),
        other => return Err(format!("unsupported pixel format {other:?}; expected 8-bit samples")),
    };
    RasterImage::new(w, h, channels, samples).map_err(|e| e.to_string())
}

/// Reduces a multi-channel raster to `U = (Σ uᵢ^p)^(1/p)` per pixel.
///
/// All channels take part, including a fourth (NIR or alpha) one.
pub fn p_energy(image: &RasterImage, p: f64) -> Result<LuminanceImage> {
    if !(p > 0.0) || !p.is_finite() {
        return Err(Error::param("p", format!("exponent must be positive, got {p}")));
    }
    let values = image
        .samples
        .chunks_exact(image.channels)
        .map(|px| {
            if px.len() == 1 {
                f64::from(px[0])
            } else if p == 1.0 {
                px.iter().map(|&v| f64::from(v)).sum()
            } else {
                px.iter().map(|&v| f64::from(v).powf(p)).sum::<f64>().powf(p.recip())
            }
        })
        .collect();
    Ok(LuminanceImage {
        width: image.width,
        height: image.height,
        values,
    })
}

/// Writes an 8-bit grayscale PNG.
pub fn save_gray_png(path: &Path, width: usize, height: usize, data: Vec<u8>) -> Result<()> {
    let buf = ImageBuffer::<Luma<u8>, _>::from_raw(width as u32, height as u32, data)
        .ok_or_else(|| Error::param("data", "buffer length must equal width * height"))?;
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| image_err(path, e))
}
