//! A-contrario junction detector.
//!
//! Candidates are local maxima of the structure-tensor determinant whose
//! eigenvalue ratio rules out straight (possibly staircased) edges. Rays
//! are cast from each candidate in every orientation bin; a ray pixel is
//! aligned when its gradient is within 22.5° of the ray normal, i.e. the
//! level line runs along the ray. Branches are peaks of the aligned count
//! over orientation, and each branch ends at the farthest aligned pixel
//! that keeps the running aligned fraction at or above 0.6. A junction is
//! kept when its number of false alarms under the uniform-orientation null
//! is at most one.

use std::f64::consts::{PI, TAU};

use log::{debug, warn};
use rayon::prelude::*;

use super::{angular_distance, significance_from_nfa, Branch, DetectorConfig, Junction};
use crate::error::Result;
use crate::image_io::LuminanceImage;

/// Probability that a uniformly random gradient orientation is within
/// ±22.5° of a given line normal, counting both polarities.
pub const ALIGNMENT_PROBABILITY: f64 = 0.25;

const ALIGN_TOLERANCE_DEG: f64 = 22.5;
const MIN_ALIGNED_FRACTION: f64 = 0.6;
const SMOOTHING_SIGMA: f64 = 1.0;
const NMS_RADIUS: isize = 2;
/// Minimum smaller-to-larger eigenvalue ratio of a candidate's tensor.
const MIN_ISOTROPY: f64 = 0.05;

struct Gradients {
    width: usize,
    height: usize,
    gx: Vec<f64>,
    gy: Vec<f64>,
    mag: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Default)]
struct RayScan {
    theta: f64,
    length: usize,
    aligned: usize,
}

/// Detects junctions, sorted by `(rho, y, x)` ascending.
pub fn detect_junctions(image: &LuminanceImage, cfg: &DetectorConfig) -> Result<Vec<Junction>> {
    cfg.validate()?;
    let (w, h) = (image.width(), image.height());
    let min_side = 2.0 * cfg.max_branch_length;
    if (w as f64) < min_side || (h as f64) < min_side {
        warn!(
            "image {w}x{h} is smaller than twice the max branch length ({}); no junctions detected",
            cfg.max_branch_length
        );
        return Ok(Vec::new());
    }
    let Some(normalized) = normalize(image.values()) else {
        return Ok(Vec::new());
    };
    let smooth = gaussian_blur(&normalized, w, h, SMOOTHING_SIGMA);
    let grad = gradients(&smooth, w, h);
    let tensor = Tensor::of(&grad);
    let strength: Vec<f64> = (0..w * h).map(|i| tensor.det(i)).collect();
    let min_strength = cfg.gradient_threshold.powi(4);
    let candidates: Vec<(usize, usize)> = local_maxima(&strength, w, h, min_strength)
        .into_iter()
        .filter(|&(x, y)| tensor.isotropy(y * w + x) >= MIN_ISOTROPY)
        .collect();

    let max_len = cfg.max_branch_length.floor();
    let ln_tests = cfg.nfa_test_base.ln() + ((w * h) as f64).ln();
    let ln_per_branch = (cfg.orientation_bins as f64 * max_len).ln();

    let mut junctions: Vec<Junction> = candidates
        .par_iter()
        .filter_map(|&(x, y)| {
            let (ox, oy) = subpixel(&strength, w, h, x, y);
            detect_at(&grad, ox, oy, cfg, ln_tests, ln_per_branch)
        })
        .collect();
    junctions.sort_by(|a, b| {
        a.rho
            .total_cmp(&b.rho)
            .then(a.y.total_cmp(&b.y))
            .then(a.x.total_cmp(&b.x))
    });
    debug!(
        "{} candidates, {} junctions on {w}x{h}",
        candidates.len(),
        junctions.len()
    );
    Ok(junctions)
}

fn normalize(values: &[f64]) -> Option<Vec<f64>> {
    let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    });
    let range = hi - lo;
    if !(range > 1e-12) {
        return None;
    }
    let scale = 255.0 / range;
    Some(values.iter().map(|v| (v - lo) * scale).collect())
}

fn gaussian_blur(values: &[f64], w: usize, h: usize, sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let mut kernel: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= sum);

    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = kernel
                .iter()
                .enumerate()
                .map(|(i, k)| k * values[y * w + clamp(x as isize + i as isize - radius, w)])
                .sum();
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = kernel
                .iter()
                .enumerate()
                .map(|(i, k)| k * tmp[clamp(y as isize + i as isize - radius, h) * w + x])
                .sum();
        }
    }
    out
}

fn gradients(img: &[f64], w: usize, h: usize) -> Gradients {
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    let mut mag = vec![0.0; w * h];
    for y in 0..h {
        let (ym, yp) = (y.saturating_sub(1), (y + 1).min(h - 1));
        for x in 0..w {
            let (xm, xp) = (x.saturating_sub(1), (x + 1).min(w - 1));
            let dx = (img[y * w + xp] - img[y * w + xm]) / 2.0;
            let dy = (img[yp * w + x] - img[ym * w + x]) / 2.0;
            let i = y * w + x;
            gx[i] = dx;
            gy[i] = dy;
            mag[i] = dx.hypot(dy);
        }
    }
    Gradients {
        width: w,
        height: h,
        gx,
        gy,
        mag,
    }
}

/// 3×3 box-summed structure tensor per pixel.
struct Tensor {
    sxx: Vec<f64>,
    syy: Vec<f64>,
    sxy: Vec<f64>,
}

impl Tensor {
    fn of(g: &Gradients) -> Self {
        let (w, h) = (g.width, g.height);
        let mut t = Tensor {
            sxx: vec![0.0; w * h],
            syy: vec![0.0; w * h],
            sxy: vec![0.0; w * h],
        };
        for y in 0..h {
            for x in 0..w {
                let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
                for yy in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                    for xx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                        let i = yy * w + xx;
                        sxx += g.gx[i] * g.gx[i];
                        syy += g.gy[i] * g.gy[i];
                        sxy += g.gx[i] * g.gy[i];
                    }
                }
                let i = y * w + x;
                (t.sxx[i], t.syy[i], t.sxy[i]) = (sxx, syy, sxy);
            }
        }
        t
    }

    /// Product of the eigenvalues.
    fn det(&self, i: usize) -> f64 {
        self.sxx[i] * self.syy[i] - self.sxy[i] * self.sxy[i]
    }

    /// Smaller over larger eigenvalue; 0 where the tensor vanishes.
    fn isotropy(&self, i: usize) -> f64 {
        let half_tr = 0.5 * (self.sxx[i] + self.syy[i]);
        let disc = (0.25 * (self.sxx[i] - self.syy[i]).powi(2) + self.sxy[i] * self.sxy[i]).sqrt();
        let hi = half_tr + disc;
        if hi > 0.0 {
            (half_tr - disc).max(0.0) / hi
        } else {
            0.0
        }
    }
}

/// Strict local maxima in a `(2r+1)²` window; plateaus resolve to the first
/// pixel in raster order.
fn local_maxima(strength: &[f64], w: usize, h: usize, min_strength: f64) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for y in 0..h {
        'px: for x in 0..w {
            let s = strength[y * w + x];
            if s < min_strength {
                continue;
            }
            for dy in -NMS_RADIUS..=NMS_RADIUS {
                for dx in -NMS_RADIUS..=NMS_RADIUS {
                    let (nx, ny) = (x as isize + dx, y as isize + dy);
                    if (dx, dy) == (0, 0) || nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                        continue;
                    }
                    let other = strength[ny as usize * w + nx as usize];
                    let earlier = (dy, dx) < (0, 0);
                    if other > s || (earlier && other == s) {
                        continue 'px;
                    }
                }
            }
            out.push((x, y));
        }
    }
    out
}

/// Pixel-center location refined by per-axis parabola through the strength
/// peak.
fn subpixel(strength: &[f64], w: usize, h: usize, x: usize, y: usize) -> (f64, f64) {
    let at = |x: usize, y: usize| strength[y * w + x];
    let offset = |m: f64, c: f64, p: f64| {
        let denom = m - 2.0 * c + p;
        if denom < 0.0 {
            (0.5 * (m - p) / denom).clamp(-0.5, 0.5)
        } else {
            0.0
        }
    };
    let dx = if x > 0 && x + 1 < w {
        offset(at(x - 1, y), at(x, y), at(x + 1, y))
    } else {
        0.0
    };
    let dy = if y > 0 && y + 1 < h {
        offset(at(x, y - 1), at(x, y), at(x, y + 1))
    } else {
        0.0
    };
    (x as f64 + 0.5 + dx, y as f64 + 0.5 + dy)
}

fn scan_ray(g: &Gradients, ox: f64, oy: f64, theta: f64, cfg: &DetectorConfig) -> RayScan {
    let (s, c) = theta.sin_cos();
    let cos_tol = ALIGN_TOLERANCE_DEG.to_radians().cos();
    let max_r = cfg.max_branch_length.floor() as usize;
    let mut aligned = 0usize;
    let mut best = RayScan {
        theta,
        ..Default::default()
    };
    for r in 1..=max_r {
        let sx = ox + r as f64 * c;
        let sy = oy + r as f64 * s;
        if sx < 0.0 || sy < 0.0 || sx >= g.width as f64 || sy >= g.height as f64 {
            break;
        }
        let i = sy as usize * g.width + sx as usize;
        let m = g.mag[i];
        // gradient against the ray normal (-s, c)
        let along_normal = (-g.gx[i] * s + g.gy[i] * c).abs();
        if m >= cfg.gradient_threshold && along_normal >= m * cos_tol {
            aligned += 1;
            if aligned as f64 >= MIN_ALIGNED_FRACTION * r as f64 {
                best.length = r;
                best.aligned = aligned;
            }
        }
    }
    best
}

fn detect_at(
    g: &Gradients,
    ox: f64,
    oy: f64,
    cfg: &DetectorConfig,
    ln_tests: f64,
    ln_per_branch: f64,
) -> Option<Junction> {
    let bins = cfg.orientation_bins;
    let bin_width = TAU / bins as f64;
    let min_len = cfg.min_branch_length.ceil() as usize;
    let scans: Vec<RayScan> = (0..bins)
        .map(|k| scan_ray(g, ox, oy, k as f64 * bin_width, cfg))
        .collect();
    let score: Vec<usize> = scans
        .iter()
        .map(|r| if r.length >= min_len { r.aligned } else { 0 })
        .collect();

    let window = ((cfg.min_angle_sep / bin_width).floor() as usize).max(1);
    let at = |k: isize| score[k.rem_euclid(bins as isize) as usize];
    let mut peaks: Vec<usize> = (0..bins)
        .filter(|&k| {
            let s = score[k];
            s > 0 && (1..=window as isize).all(|d| s > at(k as isize - d) && s >= at(k as isize + d))
        })
        .collect();
    peaks.sort_by(|&a, &b| score[b].cmp(&score[a]).then(a.cmp(&b)));

    let mut branches: Vec<RayScan> = Vec::with_capacity(cfg.max_branches);
    for k in peaks {
        let mut best = scans[k];
        let (m, p) = (at(k as isize - 1) as f64, at(k as isize + 1) as f64);
        let c = score[k] as f64;
        let denom = m - 2.0 * c + p;
        if denom < 0.0 {
            let delta = (0.5 * (m - p) / denom).clamp(-0.5, 0.5);
            let refined = scan_ray(g, ox, oy, (k as f64 + delta) * bin_width, cfg);
            if refined.length >= min_len && refined.aligned >= best.aligned {
                best = refined;
            }
        }
        if branches
            .iter()
            .all(|b| angular_distance(b.theta, best.theta) >= cfg.min_angle_sep)
        {
            branches.push(best);
            if branches.len() == cfg.max_branches {
                break;
            }
        }
    }
    if branches.len() < 2 {
        return None;
    }
    let has_corner = branches.iter().enumerate().any(|(i, a)| {
        branches[i + 1..].iter().any(|b| {
            let d = angular_distance(a.theta, b.theta);
            d >= cfg.min_angle_sep && d <= PI - cfg.min_angle_sep
        })
    });
    if !has_corner {
        return None;
    }

    let ln_nfa = ln_tests
        + branches.len() as f64 * ln_per_branch
        + branches
            .iter()
            .map(|b| binomial_tail_ln(b.length, b.aligned, ALIGNMENT_PROBABILITY))
            .sum::<f64>();
    if ln_nfa > 0.0 {
        return None;
    }
    let nfa = ln_nfa.exp().max(f64::MIN_POSITIVE);
    let rho = significance_from_nfa(nfa).ok()?;
    Some(Junction {
        x: ox,
        y: oy,
        branches: branches.iter().map(|b| Branch::new(b.theta, b.length as f64)).collect(),
        rho,
    })
}

/// `ln P[X ≥ k]` for `X ~ Binomial(n, p)`, evaluated in log space.
pub fn binomial_tail_ln(n: usize, k: usize, p: f64) -> f64 {
    if k == 0 {
        return 0.0;
    }
    if k > n {
        return f64::NEG_INFINITY;
    }
    let (lp, lq) = (p.ln(), (1.0 - p).ln());
    let ln_choose: f64 = (1..=k).map(|j| ((n - k + j) as f64 / j as f64).ln()).sum();
    let mut term = ln_choose + k as f64 * lp + (n - k) as f64 * lq;
    let mut terms = vec![term];
    for i in k..n {
        term += ((n - i) as f64 / (i + 1) as f64).ln() + lp - lq;
        terms.push(term);
    }
    let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_tail(n: usize, k: usize, p: f64) -> f64 {
        let mut total = 0.0;
        for i in k..=n {
            let mut c = 1.0;
            for j in 0..i {
                c = c * (n - j) as f64 / (j + 1) as f64;
            }
            total += c * p.powi(i as i32) * (1.0 - p).powi((n - i) as i32);
        }
        total
    }

    #[test]
    fn binomial_tail_matches_direct_sum() {
        for n in [1usize, 5, 12, 30, 64] {
            for k in 0..=n {
                let want = brute_tail(n, k, 0.25);
                let got = binomial_tail_ln(n, k, 0.25).exp();
                assert!(
                    (got - want).abs() <= 1e-12 * want.max(1e-300),
                    "n={n} k={k}: {got} vs {want}"
                );
            }
        }
    }

    #[test]
    fn binomial_tail_survives_long_runs() {
        let v = binomial_tail_ln(2000, 2000, 0.25);
        assert!((v - 2000.0 * 0.25f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn constant_image_has_no_junctions() {
        let img = LuminanceImage::new(160, 160, vec![77.0; 160 * 160]).unwrap();
        assert!(detect_junctions(&img, &DetectorConfig::default()).unwrap().is_empty());
    }

    #[test]
    fn tiny_image_yields_empty() {
        let img = LuminanceImage::new(100, 200, (0..20000).map(|i| (i % 7) as f64).collect()).unwrap();
        assert!(detect_junctions(&img, &DetectorConfig::default()).unwrap().is_empty());
    }

    #[test]
    fn local_maxima_resolves_plateau_once() {
        let mut s = vec![0.0; 25];
        s[12] = 5.0;
        s[13] = 5.0;
        assert_eq!(local_maxima(&s, 5, 5, 1.0), vec![(2, 2)]);
    }

    #[test]
    fn ray_along_step_edge_spans_the_edge() {
        // horizontal step at y = 40 from x = 10 to x = 90
        let (w, h) = (128, 128);
        let vals: Vec<f64> = (0..w * h)
            .map(|i| {
                let (x, y) = (i % w, i / w);
                if y >= 40 && (10..90).contains(&x) {
                    200.0
                } else {
                    50.0
                }
            })
            .collect();
        let norm = normalize(&vals).unwrap();
        let g = gradients(&gaussian_blur(&norm, w, h, SMOOTHING_SIGMA), w, h);
        let scan = scan_ray(&g, 10.0, 40.0, 0.0, &DetectorConfig::default());
        assert!((55..=64).contains(&scan.length), "{scan:?}");
        let diag = scan_ray(&g, 10.0, 40.0, PI / 4.0, &DetectorConfig::default());
        assert!(diag.length < 5, "{diag:?}");
    }
}
