//! Accumulation of junction saliency over parallelograms into the building
//! index map, and its thresholding into a mask.

use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{parallelogram, Parallelogram};
use crate::image_io::{load_image, save_gray_png};
use crate::saliency::SaliencyRecord;

pub const GBIF_MAGIC: &[u8; 4] = b"GBIF";

/// Dense nonnegative index map, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GbiMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl GbiMap {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            values: vec![0.0; width * height],
        }
    }

    pub fn from_values(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || values.len() != width * height {
            return Err(Error::Dimension(format!(
                "{} values for a {width}x{height} map",
                values.len()
            )));
        }
        if values.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::Validation("index values must be nonnegative".into()));
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

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Mean over the strictly positive pixels; zero when there are none.
    pub fn nonzero_mean(&self) -> f64 {
        let (sum, n) = self
            .values
            .iter()
            .filter(|&&v| v > 0.0)
            .fold((0.0, 0usize), |(s, n), &v| (s + v, n + 1));
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    }

    /// Raw little-endian `f32` dump behind a 16-byte header:
    /// `"GBIF"`, width, height and a reserved zero, all `u32` LE.
    pub fn to_gbif_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 4 * self.values.len());
        out.extend_from_slice(GBIF_MAGIC);
        out.extend_from_slice(&(self.width as u32).to_le_bytes());
        out.extend_from_slice(&(self.height as u32).to_le_bytes());
        out.extend_from_slice(&0u32.to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        out
    }

    pub fn from_gbif_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..4] != GBIF_MAGIC {
            return Err(Error::Validation("missing GBIF header".into()));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
        let (w, h) = (word(4), word(8));
        if bytes.len() != 16 + 4 * w * h {
            return Err(Error::Dimension(format!(
                "GBIF payload of {} bytes does not match {w}x{h}",
                bytes.len() - 16
            )));
        }
        let values = bytes[16..]
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
            .collect();
        Self::from_values(w, h, values)
    }

    pub fn write_gbif(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_gbif_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read_gbif(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_gbif_bytes(&bytes)
    }

    /// 8-bit rendering, min-max normalized; a constant map renders black.
    pub fn preview_bytes(&self) -> Vec<u8> {
        let (lo, hi) = self
            .values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        let range = hi - lo;
        self.values
            .iter()
            .map(|&v| {
                if range > 0.0 {
                    ((v - lo) / range * 255.0).round() as u8
                } else {
                    0
                }
            })
            .collect()
    }

    pub fn write_preview(&self, path: &Path) -> Result<()> {
        save_gray_png(path, self.width, self.height, self.preview_bytes())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BuildingMask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl BuildingMask {
    pub fn new(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height {
            return Err(Error::Dimension(format!(
                "{} mask pixels for {width}x{height}",
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.data.iter().map(|&b| if b { 255 } else { 0 }).collect()
    }

    /// Writes 0 / 255 8-bit grayscale.
    pub fn write_png(&self, path: &Path) -> Result<()> {
        save_gray_png(path, self.width, self.height, self.to_bytes())
    }

    /// Reads a mask image; any nonzero first-channel value is building.
    pub fn read(path: &Path) -> Result<Self> {
        let img = load_image(path)?;
        let data = (0..img.height())
            .flat_map(|y| (0..img.width()).map(move |x| (x, y)))
            .map(|(x, y)| img.pixel(x, y)[0] != 0)
            .collect();
        Self::new(img.width(), img.height(), data)
    }
}

fn splat(map: &mut [f64], width: usize, height: usize, rec: &SaliencyRecord) {
    let r = parallelogram(&rec.l);
    let Some((x0, y0, x1, y1)) = r.pixel_bounds(width, height) else {
        return;
    };
    let weight = rec.omega1 + rec.omega2;
    for y in y0..=y1 {
        let row = &mut map[y * width + x0..=y * width + x1];
        for (x, v) in (x0..).zip(row.iter_mut()) {
            if r.contains(x as i64, y as i64) {
                *v += weight;
            }
        }
    }
}

/// Sums `ω⁽¹⁾ + ω⁽²⁾` of every record over the pixels its parallelogram
/// covers, adding records in list order.
pub fn rasterize_gbi(records: &[SaliencyRecord], width: usize, height: usize) -> Result<GbiMap> {
    if width == 0 || height == 0 {
        return Err(Error::param("size", "map dimensions must be positive"));
    }
    let mut values = vec![0.0; width * height];
    for rec in records {
        splat(&mut values, width, height, rec);
    }
    Ok(GbiMap { width, height, values })
}

/// Splits the records into `parts` contiguous partitions, rasterizes each
/// independently and combines the partial maps by pairwise addition in
/// partition order. Agrees with [`rasterize_gbi`] up to rounding.
pub fn rasterize_gbi_parallel(records: &[SaliencyRecord], width: usize, height: usize, parts: usize) -> Result<GbiMap> {
    if parts <= 1 || records.len() < 2 {
        return rasterize_gbi(records, width, height);
    }
    let chunk = records.len().div_ceil(parts);
    let mut partials: Vec<Vec<f64>> = records
        .par_chunks(chunk)
        .map(|c| rasterize_gbi(c, width, height).map(|m| m.values))
        .collect::<Result<_>>()?;
    while partials.len() > 1 {
        partials = partials
            .par_chunks(2)
            .map(|pair| match pair {
                [a, b] => a.iter().zip(b).map(|(x, y)| x + y).collect(),
                [a] => a.clone(),
                _ => unreachable!(),
            })
            .collect();
    }
    Ok(GbiMap {
        width,
        height,
        values: partials.pop().unwrap(),
    })
}

/// Number of grid pixels covered by a parallelogram.
pub fn pixel_count(r: &Parallelogram, width: usize, height: usize) -> usize {
    let Some((x0, y0, x1, y1)) = r.pixel_bounds(width, height) else {
        return 0;
    };
    (y0..=y1)
        .flat_map(|y| (x0..=x1).map(move |x| (x, y)))
        .filter(|&(x, y)| r.contains(x as i64, y as i64))
        .count()
}

/// Building where the index strictly exceeds its mean over all pixels.
pub fn threshold_mean(map: &GbiMap) -> BuildingMask {
    threshold_at(map, map.mean())
}

/// Alternative: mean over the nonzero pixels only (all-false when none).
pub fn threshold_mean_nonzero(map: &GbiMap) -> BuildingMask {
    threshold_at(map, map.nonzero_mean())
}

pub fn threshold_at(map: &GbiMap, threshold: f64) -> BuildingMask {
    BuildingMask {
        width: map.width,
        height: map.height,
        data: map.values.iter().map(|&v| v > threshold).collect(),
    }
}
