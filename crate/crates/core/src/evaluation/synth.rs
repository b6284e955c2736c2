//! Synthetic scenes: rectangular buildings on a flat background with
//! optional non-building clutter (road strips and thin triangles) and
//! additive Gaussian noise. The generator knows the building mask and the
//! true corner junctions.

use std::f64::consts::{FRAC_PI_2, PI};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::gbi::BuildingMask;
use crate::image_io::RasterImage;
use crate::junction::{Branch, Junction};

const SUPERSAMPLE: usize = 4;

/// A possibly rotated rectangle; `rotation` in radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RectSpec {
    pub cx: f64,
    pub cy: f64,
    pub width: f64,
    pub height: f64,
    pub rotation: f64,
    pub intensity: f64,
}

impl RectSpec {
    fn axes(&self) -> ([f64; 2], [f64; 2]) {
        let (s, c) = self.rotation.sin_cos();
        ([c, s], [-s, c])
    }

    /// Half-open containment in the rectangle's own frame.
    fn contains(&self, p: [f64; 2]) -> bool {
        let (u, v) = self.axes();
        let d = [p[0] - self.cx, p[1] - self.cy];
        let a = d[0] * u[0] + d[1] * u[1];
        let b = d[0] * v[0] + d[1] * v[1];
        (-self.width / 2.0..self.width / 2.0).contains(&a) && (-self.height / 2.0..self.height / 2.0).contains(&b)
    }

    /// Corners in traversal order.
    pub fn corners(&self) -> [[f64; 2]; 4] {
        let (u, v) = self.axes();
        let (hw, hh) = (self.width / 2.0, self.height / 2.0);
        [(-hw, -hh), (hw, -hh), (hw, hh), (-hw, hh)]
            .map(|(a, b)| [self.cx + a * u[0] + b * v[0], self.cy + a * u[1] + b * v[1]])
    }

    fn radius(&self) -> f64 {
        0.5 * self.width.hypot(self.height)
    }
}

/// Non-building structure.
#[derive(Debug, Clone, PartialEq)]
pub enum Clutter {
    Strip(RectSpec),
    Triangle { vertices: [[f64; 2]; 3], intensity: f64 },
}

impl Clutter {
    fn contains(&self, p: [f64; 2]) -> bool {
        match self {
            Clutter::Strip(r) => r.contains(p),
            Clutter::Triangle { vertices: v, .. } => {
                let side = |a: [f64; 2], b: [f64; 2]| (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
                let s = [side(v[0], v[1]), side(v[1], v[2]), side(v[2], v[0])];
                s.iter().all(|&x| x >= 0.0) || s.iter().all(|&x| x <= 0.0)
            }
        }
    }

    fn intensity(&self) -> f64 {
        match self {
            Clutter::Strip(r) => r.intensity,
            Clutter::Triangle { intensity, .. } => *intensity,
        }
    }

    fn bounds(&self) -> [f64; 4] {
        match self {
            Clutter::Strip(r) => bounds_of(&r.corners()),
            Clutter::Triangle { vertices, .. } => bounds_of(vertices),
        }
    }
}

fn bounds_of(pts: &[[f64; 2]]) -> [f64; 4] {
    pts.iter().fold(
        [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY],
        |b, p| [b[0].min(p[0]), b[1].min(p[1]), b[2].max(p[0]), b[3].max(p[1])],
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    /// 1 (gray) or 3 (gray replicated into RGB, independent noise).
    pub channels: usize,
    pub background: f64,
    pub noise_sigma: f64,
    pub min_contrast: f64,
    /// Cap applied to truth branch lengths.
    pub max_branch_length: f64,
    pub rectangles: Vec<RectSpec>,
    pub clutter: Vec<Clutter>,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            width: 128,
            height: 128,
            channels: 1,
            background: 90.0,
            noise_sigma: 0.0,
            min_contrast: 30.0,
            max_branch_length: 64.0,
            rectangles: Vec::new(),
            clutter: Vec::new(),
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::param("size", "scene dimensions must be positive"));
        }
        if self.channels != 1 && self.channels != 3 {
            return Err(Error::param("channels", "scenes have 1 or 3 channels"));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::param("noise_sigma", "must be nonnegative"));
        }
        for (i, r) in self.rectangles.iter().enumerate() {
            if !(r.width > 0.0 && r.height > 0.0) {
                return Err(Error::Validation(format!("rectangle {i} has a nonpositive side")));
            }
            let inside = r
                .corners()
                .iter()
                .all(|c| c[0] >= 0.0 && c[1] >= 0.0 && c[0] <= self.width as f64 && c[1] <= self.height as f64);
            if !inside {
                return Err(Error::Validation(format!("rectangle {i} leaves the image")));
            }
            if (r.intensity - self.background).abs() < self.min_contrast {
                return Err(Error::Validation(format!(
                    "rectangle {i} contrast {} below minimum {}",
                    (r.intensity - self.background).abs(),
                    self.min_contrast
                )));
            }
        }
        Ok(())
    }

    /// Draws a random scene: non-overlapping rectangles and random clutter.
    pub fn random(params: &RandomSceneParams, rng: &mut impl Rng) -> Self {
        let (w, h) = (params.width as f64, params.height as f64);
        let background = rng.random_range(params.background.0..=params.background.1);
        let contrast = |rng: &mut dyn rand::RngCore| {
            let c = rng.random_range(params.min_contrast..=params.min_contrast + 70.0);
            if background + c <= 250.0 && (background - c < 5.0 || rng.random_bool(0.6)) {
                background + c
            } else {
                background - c
            }
        };
        let count = rng.random_range(params.rectangles.0..=params.rectangles.1);
        let mut rectangles: Vec<RectSpec> = Vec::with_capacity(count);
        let mut attempts = 0;
        while rectangles.len() < count && attempts < 10_000 {
            attempts += 1;
            let rw = rng.random_range(params.size.0..=params.size.1);
            let rh = rng.random_range(params.size.0..=params.size.1);
            let rotation = if params.rotate {
                rng.random_range(0.0..FRAC_PI_2)
            } else {
                0.0
            };
            let radius = 0.5 * rw.hypot(rh);
            let margin = radius + params.margin;
            if 2.0 * margin >= w || 2.0 * margin >= h {
                continue;
            }
            let cand = RectSpec {
                cx: rng.random_range(margin..w - margin),
                cy: rng.random_range(margin..h - margin),
                width: rw,
                height: rh,
                rotation,
                intensity: 0.0,
            };
            let clear = rectangles
                .iter()
                .all(|r| (r.cx - cand.cx).hypot(r.cy - cand.cy) > r.radius() + cand.radius() + params.margin);
            if clear {
                rectangles.push(RectSpec {
                    intensity: contrast(rng),
                    ..cand
                });
            }
        }
        let clutter = (0..params.clutter)
            .map(|i| {
                if i % 2 == 0 {
                    Clutter::Strip(RectSpec {
                        cx: rng.random_range(0.0..w),
                        cy: rng.random_range(0.0..h),
                        width: rng.random_range(80.0..250.0),
                        height: rng.random_range(5.0..9.0),
                        rotation: rng.random_range(0.0..PI),
                        intensity: contrast(rng),
                    })
                } else {
                    let apex = [rng.random_range(0.0..w), rng.random_range(0.0..h)];
                    let dir: f64 = rng.random_range(0.0..2.0 * PI);
                    let half = rng.random_range(8.0f64..20.0).to_radians() / 2.0;
                    let len = rng.random_range(30.0..70.0);
                    let at = |a: f64| [apex[0] + len * a.cos(), apex[1] + len * a.sin()];
                    Clutter::Triangle {
                        vertices: [apex, at(dir - half), at(dir + half)],
                        intensity: contrast(rng),
                    }
                }
            })
            .collect();
        Self {
            width: params.width,
            height: params.height,
            channels: params.channels,
            background,
            noise_sigma: params.noise_sigma,
            min_contrast: params.min_contrast,
            max_branch_length: params.max_branch_length,
            rectangles,
            clutter,
        }
    }
}

/// Ranges for [`SceneSpec::random`].
#[derive(Debug, Clone, PartialEq)]
pub struct RandomSceneParams {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub rectangles: (usize, usize),
    pub size: (f64, f64),
    pub background: (f64, f64),
    pub min_contrast: f64,
    pub noise_sigma: f64,
    pub rotate: bool,
    pub clutter: usize,
    /// Minimum gap between rectangle circumcircles and to the border.
    pub margin: f64,
    pub max_branch_length: f64,
}

impl Default for RandomSceneParams {
    fn default() -> Self {
        Self {
            width: 512,
            height: 512,
            channels: 3,
            rectangles: (3, 8),
            size: (30.0, 110.0),
            background: (70.0, 120.0),
            min_contrast: 30.0,
            noise_sigma: 5.0,
            rotate: true,
            clutter: 0,
            margin: 10.0,
            max_branch_length: 64.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub image: RasterImage,
    pub truth: BuildingMask,
    /// Rectangle corners with branches along the incident edges, `ρ = 0`.
    pub corners: Vec<Junction>,
}

/// Renders a scene. Output is a pure function of `(spec, seed)`.
pub fn generate_scene(spec: &SceneSpec, seed: u64) -> Result<Scene> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let mut canvas = vec![spec.background; w * h];

    let mut paint = |bounds: [f64; 4], intensity: f64, inside: &dyn Fn([f64; 2]) -> bool| {
        let x0 = bounds[0].floor().max(0.0) as usize;
        let y0 = bounds[1].floor().max(0.0) as usize;
        let x1 = (bounds[2].ceil() as isize).clamp(0, w as isize) as usize;
        let y1 = (bounds[3].ceil() as isize).clamp(0, h as isize) as usize;
        let step = 1.0 / SUPERSAMPLE as f64;
        for y in y0..y1 {
            for x in x0..x1 {
                let mut hits = 0;
                for sy in 0..SUPERSAMPLE {
                    for sx in 0..SUPERSAMPLE {
                        let p = [x as f64 + (sx as f64 + 0.5) * step, y as f64 + (sy as f64 + 0.5) * step];
                        hits += usize::from(inside(p));
                    }
                }
                if hits > 0 {
                    let c = hits as f64 / (SUPERSAMPLE * SUPERSAMPLE) as f64;
                    let v = &mut canvas[y * w + x];
                    *v = *v * (1.0 - c) + intensity * c;
                }
            }
        }
    };
    for item in &spec.clutter {
        paint(item.bounds(), item.intensity(), &|p| item.contains(p));
    }
    for r in &spec.rectangles {
        paint(bounds_of(&r.corners()), r.intensity, &|p| r.contains(p));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, spec.noise_sigma.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::param("noise_sigma", e.to_string()))?;
    let mut samples = Vec::with_capacity(w * h * spec.channels);
    for v in &canvas {
        for _ in 0..spec.channels {
            let n = if spec.noise_sigma > 0.0 {
                noise.sample(&mut rng)
            } else {
                0.0
            };
            samples.push((v + n).round().clamp(0.0, 255.0) as u8);
        }
    }
    let image = RasterImage::new(w, h, spec.channels, samples)?;

    let truth_bits = (0..h)
        .flat_map(|y| (0..w).map(move |x| [x as f64 + 0.5, y as f64 + 0.5]))
        .map(|p| spec.rectangles.iter().any(|r| r.contains(p)))
        .collect();
    let truth = BuildingMask::new(w, h, truth_bits)?;

    let mut corners = Vec::with_capacity(4 * spec.rectangles.len());
    for r in &spec.rectangles {
        let c = r.corners();
        for k in 0..4 {
            let p = c[k];
            let branch = |q: [f64; 2]| {
                let (dx, dy) = (q[0] - p[0], q[1] - p[1]);
                Branch::new(dy.atan2(dx), dx.hypot(dy).min(spec.max_branch_length))
            };
            corners.push(Junction {
                x: p[0],
                y: p[1],
                branches: vec![branch(c[(k + 1) % 4]), branch(c[(k + 3) % 4])],
                rho: 0.0,
            });
        }
    }
    Ok(Scene { image, truth, corners })
}

/// Parses a flat `key = value` scene description.
///
/// Keys: `width`, `height`, `channels`, `background`, `noise_sigma`,
/// `min_contrast`, `max_branch_length`, repeatable
/// `rect = cx cy width height rotation_deg intensity`, and for seeded random
/// content `random_rectangles`, `min_size`, `max_size`, `rotate`, `clutter`.
/// Returns the explicit spec plus the random parameters, if any were asked
/// for.
pub fn parse_scene_spec(text: &str, origin: &Path) -> Result<(SceneSpec, Option<RandomSceneParams>)> {
    let mut spec = SceneSpec::default();
    let mut random = RandomSceneParams {
        rectangles: (0, 0),
        noise_sigma: 0.0,
        ..Default::default()
    };
    let mut want_random = false;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .ok_or_else(|| Error::parse(origin, i + 1, "expected `key = value`"))?;
        let bad = |what: &str| Error::Config {
            key: key.to_string(),
            reason: format!("expected {what}, got `{value}`"),
        };
        let num = || value.parse::<f64>().map_err(|_| bad("a number"));
        let int = || value.parse::<usize>().map_err(|_| bad("a nonnegative integer"));
        match key {
            "width" => spec.width = int()?,
            "height" => spec.height = int()?,
            "channels" => spec.channels = int()?,
            "background" => spec.background = num()?,
            "noise_sigma" => spec.noise_sigma = num()?,
            "min_contrast" => spec.min_contrast = num()?,
            "max_branch_length" => spec.max_branch_length = num()?,
            "rect" => {
                let f: Vec<f64> = value
                    .split_whitespace()
                    .map(|t| t.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| bad("six numbers"))?;
                if f.len() != 6 {
                    return Err(bad("six numbers"));
                }
                spec.rectangles.push(RectSpec {
                    cx: f[0],
                    cy: f[1],
                    width: f[2],
                    height: f[3],
                    rotation: f[4].to_radians(),
                    intensity: f[5],
                });
            }
            "random_rectangles" => {
                let n = int()?;
                random.rectangles = (n, n);
                want_random = true;
            }
            "min_size" => random.size.0 = num()?,
            "max_size" => random.size.1 = num()?,
            "rotate" => random.rotate = value.parse().map_err(|_| bad("true or false"))?,
            "clutter" => {
                random.clutter = int()?;
                want_random = true;
            }
            _ => {
                return Err(Error::Config {
                    key: key.to_string(),
                    reason: "unknown key".into(),
                })
            }
        }
    }
    random.width = spec.width;
    random.height = spec.height;
    random.channels = spec.channels;
    random.background = (spec.background, spec.background);
    random.min_contrast = spec.min_contrast;
    random.noise_sigma = spec.noise_sigma;
    random.max_branch_length = spec.max_branch_length;
    Ok((spec, want_random.then_some(random)))
}
