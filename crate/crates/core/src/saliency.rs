//! Posterior that a junction lies inside a building, with the first-order
//! and pairwise geometric saliency built on it.
//!
//! The likelihoods are 4-D histograms over the translation-invariant
//! [`JunctionFeatures`], Laplace-smoothed with one pseudo-count per bin. The model stores raw
//! integer counts so that smoothing can always be recomputed.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gbi::BuildingMask;
use crate::geometry::{center_distance, LJunction, TauIndex};

pub const PRIOR_HEADER: &str = "geosay-prior v1";
const AXIS_NAMES: [&str; 4] = ["opening_angle", "log_min_length", "log_max_length", "rho"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JunctionFeatures {
    pub opening_angle: f64,
    pub log_min_length: f64,
    pub log_max_length: f64,
    pub rho: f64,
}

impl JunctionFeatures {
    pub fn of(l: &LJunction) -> Self {
        let (a, b) = l.branch_lengths();
        Self {
            opening_angle: l.opening_angle(),
            log_min_length: a.min(b).ln(),
            log_max_length: a.max(b).ln(),
            rho: l.rho,
        }
    }

    fn as_array(&self) -> [f64; 4] {
        [self.opening_angle, self.log_min_length, self.log_max_length, self.rho]
    }
}

/// Uniform histogram axis over `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis {
    pub bins: usize,
    pub lo: f64,
    pub hi: f64,
}

impl Axis {
    /// Bin index of `v`, clamping out-of-range values to the edge bins.
    /// The second value reports whether clamping happened.
    pub fn index(&self, v: f64) -> (usize, bool) {
        if !(v >= self.lo) {
            return (0, v < self.lo || v.is_nan());
        }
        if v >= self.hi {
            return (self.bins - 1, v > self.hi);
        }
        let i = ((v - self.lo) / (self.hi - self.lo) * self.bins as f64) as usize;
        (i.min(self.bins - 1), false)
    }
}

/// Default binning: 18 angle bins over (0, π), 8 bins for each log-length
/// over [ln 5, ln 200] and 4 bins of ρ over [0, 1].
pub fn default_axes() -> [Axis; 4] {
    let (lo, hi) = (5f64.ln(), 200f64.ln());
    [
        Axis {
            bins: 18,
            lo: 0.0,
            hi: PI,
        },
        Axis { bins: 8, lo, hi },
        Axis { bins: 8, lo, hi },
        Axis {
            bins: 4,
            lo: 0.0,
            hi: 1.0,
        },
    ]
}

#[derive(Debug)]
pub struct PriorModel {
    axes: [Axis; 4],
    building: Vec<u64>,
    background: Vec<u64>,
    n_building: u64,
    n_background: u64,
    clamped: AtomicU64,
}

impl Clone for PriorModel {
    fn clone(&self) -> Self {
        Self {
            axes: self.axes,
            building: self.building.clone(),
            background: self.background.clone(),
            n_building: self.n_building,
            n_background: self.n_background,
            clamped: AtomicU64::new(self.clamped.load(Ordering::Relaxed)),
        }
    }
}

impl PartialEq for PriorModel {
    fn eq(&self, other: &Self) -> bool {
        self.axes == other.axes && self.building == other.building && self.background == other.background
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Class {
    Building,
    Background,
}

impl PriorModel {
    /// Builds a model from per-bin counts laid out row-major over `axes`.
    pub fn from_counts(axes: [Axis; 4], building: Vec<u64>, background: Vec<u64>) -> Result<Self> {
        let bins: usize = axes.iter().map(|a| a.bins).product();
        if axes.iter().any(|a| a.bins == 0 || !(a.hi > a.lo)) {
            return Err(Error::Validation("histogram axes need bins > 0 and hi > lo".into()));
        }
        if building.len() != bins || background.len() != bins {
            return Err(Error::Validation(format!("expected {bins} counts per class")));
        }
        let n_building: u64 = building.iter().sum();
        let n_background: u64 = background.iter().sum();
        if n_building == 0 || n_background == 0 {
            let empty = if n_building == 0 { "building" } else { "background" };
            return Err(Error::Fit(format!(
                "no {empty} junctions in the corpus; fit on a larger corpus containing both classes"
            )));
        }
        Ok(Self {
            axes,
            building,
            background,
            n_building,
            n_background,
            clamped: AtomicU64::new(0),
        })
    }

    pub fn axes(&self) -> &[Axis; 4] {
        &self.axes
    }

    pub fn counts(&self, class: Class) -> &[u64] {
        match class {
            Class::Building => &self.building,
            Class::Background => &self.background,
        }
    }

    pub fn prior_building(&self) -> f64 {
        self.n_building as f64 / (self.n_building + self.n_background) as f64
    }

    pub fn prior_background(&self) -> f64 {
        self.n_background as f64 / (self.n_building + self.n_background) as f64
    }

    /// Features that fell outside the histogram range since construction.
    pub fn clamped_count(&self) -> u64 {
        self.clamped.load(Ordering::Relaxed)
    }

    pub fn bin_of(&self, f: &JunctionFeatures) -> usize {
        let mut flat = 0;
        let mut any_clamped = false;
        for (axis, v) in self.axes.iter().zip(f.as_array()) {
            let (i, c) = axis.index(v);
            any_clamped |= c;
            flat = flat * axis.bins + i;
        }
        if any_clamped {
            self.clamped.fetch_add(1, Ordering::Relaxed);
        }
        flat
    }

    /// Smoothed likelihood of a bin: `(count + 1) / (N + bins)`.
    pub fn likelihood(&self, class: Class, bin: usize) -> f64 {
        let (counts, n) = match class {
            Class::Building => (&self.building, self.n_building),
            Class::Background => (&self.background, self.n_background),
        };
        (counts[bin] + 1) as f64 / (n + counts.len() as u64) as f64
    }

    fn joint(&self, f: &JunctionFeatures) -> (f64, f64) {
        let bin = self.bin_of(f);
        (
            self.likelihood(Class::Building, bin) * self.prior_building(),
            self.likelihood(Class::Background, bin) * self.prior_background(),
        )
    }

    /// `P(inside building | features)` by Bayes' rule over the two classes.
    pub fn posterior(&self, f: &JunctionFeatures) -> f64 {
        let (b, bg) = self.joint(f);
        b / (b + bg)
    }

    pub fn posterior_complement(&self, f: &JunctionFeatures) -> f64 {
        let (b, bg) = self.joint(f);
        bg / (b + bg)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{PRIOR_HEADER}").unwrap();
        for (name, a) in AXIS_NAMES.iter().zip(&self.axes) {
            writeln!(s, "axis {name} {} {} {}", a.bins, a.lo, a.hi).unwrap();
        }
        for (label, counts) in [("building", &self.building), ("background", &self.background)] {
            s.push_str(label);
            for c in counts {
                write!(s, " {c}").unwrap();
            }
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str, origin: &Path) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let mut next = |what: &str| {
            lines
                .next()
                .ok_or_else(|| Error::parse(origin, 0, format!("unexpected end of file, expected {what}")))
        };
        let (i, header) = next("header")?;
        if header.trim() != PRIOR_HEADER {
            return Err(Error::parse(origin, i + 1, format!("expected header `{PRIOR_HEADER}`")));
        }
        let mut axes = default_axes();
        for (axis, name) in axes.iter_mut().zip(AXIS_NAMES) {
            let (i, line) = next("axis line")?;
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 5 || f[0] != "axis" || f[1] != name {
                return Err(Error::parse(
                    origin,
                    i + 1,
                    format!("expected `axis {name} <bins> <lo> <hi>`"),
                ));
            }
            let bad = |_| Error::parse(origin, i + 1, "malformed axis numbers");
            *axis = Axis {
                bins: f[2]
                    .parse()
                    .map_err(|_| Error::parse(origin, i + 1, "malformed bin count"))?,
                lo: f[3].parse().map_err(bad)?,
                hi: f[4].parse().map_err(bad)?,
            };
        }
        let mut read_counts = |label: &str| -> Result<Vec<u64>> {
            let (i, line) = next(label)?;
            let mut f = line.split_whitespace();
            if f.next() != Some(label) {
                return Err(Error::parse(origin, i + 1, format!("expected `{label}` counts")));
            }
            f.map(|c| {
                c.parse::<u64>()
                    .map_err(|_| Error::parse(origin, i + 1, format!("count `{c}` is not an integer")))
            })
            .collect()
        };
        let building = read_counts("building")?;
        let background = read_counts("background")?;
        Self::from_counts(axes, building, background)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text, path)
    }
}

/// Which class an L-junction belongs to: building iff its center falls on a
/// building pixel.
pub fn label(l: &LJunction, mask: &BuildingMask) -> Class {
    let (x, y) = (l.center[0].floor(), l.center[1].floor());
    let inside = x >= 0.0
        && y >= 0.0
        && (x as usize) < mask.width()
        && (y as usize) < mask.height()
        && mask.get(x as usize, y as usize);
    if inside {
        Class::Building
    } else {
        Class::Background
    }
}

/// Estimates priors and smoothed likelihood histograms from labeled scenes.
pub fn fit_prior(scenes: &[(Vec<LJunction>, BuildingMask)]) -> Result<PriorModel> {
    fit_prior_with_axes(scenes, default_axes())
}

pub fn fit_prior_with_axes(scenes: &[(Vec<LJunction>, BuildingMask)], axes: [Axis; 4]) -> Result<PriorModel> {
    if scenes.is_empty() {
        return Err(Error::Fit("no scenes given".into()));
    }
    let bins: usize = axes.iter().map(|a| a.bins).product();
    // Binning through a throwaway model keeps the index math in one place.
    let probe = PriorModel {
        axes,
        building: vec![0; bins],
        background: vec![0; bins],
        n_building: 1,
        n_background: 1,
        clamped: AtomicU64::new(0),
    };
    let mut building = vec![0u64; bins];
    let mut background = vec![0u64; bins];
    for (ljs, mask) in scenes {
        for l in ljs {
            let bin = probe.bin_of(&JunctionFeatures::of(l));
            match label(l, mask) {
                Class::Building => building[bin] += 1,
                Class::Background => background[bin] += 1,
            }
        }
    }
    PriorModel::from_counts(axes, building, background)
}

/// Per-L-junction saliency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SaliencyRecord {
    pub l: LJunction,
    pub omega1: f64,
    pub omega2: f64,
}

/// `ω⁽¹⁾ = (1 − ρ) · P(inside building | features)`.
pub fn first_order_saliency(l: &LJunction, model: &PriorModel) -> f64 {
    (1.0 - l.rho) * model.posterior(&JunctionFeatures::of(l))
}

/// `ω⁽²⁾`: mean over the τ-neighbors of `exp(-d/τ) · ω⁽¹⁾'`, zero when
/// there are none.
pub fn pairwise_saliency(l: &LJunction, neighbors: &[(LJunction, f64)]) -> f64 {
    if neighbors.is_empty() {
        return 0.0;
    }
    let tau = l.tau();
    let sum: f64 = neighbors
        .iter()
        .map(|(n, w1)| (-center_distance(l, n) / tau).exp() * w1)
        .sum();
    sum / neighbors.len() as f64
}

/// Saliency records for every L-junction, in input order.
pub fn compute_saliency(ljs: &[LJunction], model: &PriorModel) -> Vec<SaliencyRecord> {
    let omega1: Vec<f64> = ljs.par_iter().map(|l| first_order_saliency(l, model)).collect();
    let index = TauIndex::new(ljs);
    (0..ljs.len())
        .into_par_iter()
        .map(|i| {
            let neighbors: Vec<(LJunction, f64)> =
                index.neighbors(i).into_iter().map(|k| (ljs[k], omega1[k])).collect();
            SaliencyRecord {
                l: ljs[i],
                omega1: omega1[i],
                omega2: pairwise_saliency(&ljs[i], &neighbors),
            }
        })
        .collect()
}

pub const SALIENCY_HEADER: &str = "geosay-saliency v1";

/// Text dump: `vertex_x vertex_y v1_x v1_y v2_x v2_y rho omega1 omega2`.
pub fn format_saliency(records: &[SaliencyRecord]) -> String {
    let mut s = format!("{SALIENCY_HEADER}\n");
    for r in records {
        let l = &r.l;
        writeln!(
            s,
            "{} {} {} {} {} {} {} {} {}",
            l.vertex[0], l.vertex[1], l.v1[0], l.v1[1], l.v2[0], l.v2[1], l.rho, r.omega1, r.omega2
        )
        .unwrap();
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tiny_axes(angle_bins: usize) -> [Axis; 4] {
        [
            Axis {
                bins: angle_bins,
                lo: 0.0,
                hi: PI,
            },
            Axis {
                bins: 1,
                lo: 0.0,
                hi: 10.0,
            },
            Axis {
                bins: 1,
                lo: 0.0,
                hi: 10.0,
            },
            Axis {
                bins: 1,
                lo: 0.0,
                hi: 1.0,
            },
        ]
    }

    fn features(angle: f64, rho: f64) -> JunctionFeatures {
        JunctionFeatures {
            opening_angle: angle,
            log_min_length: 2.0,
            log_max_length: 3.0,
            rho,
        }
    }

    fn lj(v1: [f64; 2], v2: [f64; 2], rho: f64) -> LJunction {
        LJunction::new([0.0, 0.0], v1, v2, rho, 0).unwrap()
    }

    #[test]
    fn equal_likelihoods_return_the_prior() {
        let m = PriorModel::from_counts(default_axes(), vec![3; 4608], vec![7; 4608]).unwrap();
        assert_eq!(m.prior_building(), 0.3);
        let p = m.posterior(&features(1.0, 0.5));
        assert!((p - 0.3).abs() < 1e-12, "{p}");
    }

    #[test]
    fn likelihood_ratio_two_to_one() {
        let m = PriorModel::from_counts(tiny_axes(2), vec![3, 1], vec![1, 3]).unwrap();
        assert_eq!(m.prior_building(), 0.5);
        let p = m.posterior(&features(0.5, 0.0));
        assert!((p - 2.0 / 3.0).abs() < 1e-12, "{p}");
    }

    #[test]
    fn empty_class_is_a_fit_error() {
        let mask = BuildingMask::new(4, 4, vec![true; 16]).unwrap();
        let l = LJunction::new([0.5, 0.5], [2.0, 0.0], [0.0, 2.0], 0.1, 0).unwrap();
        let err = fit_prior(&[(vec![l], mask)]).unwrap_err();
        assert!(matches!(err, Error::Fit(_)));
        assert!(err.to_string().contains("background"));
        assert!(fit_prior(&[]).is_err());
    }

    #[test]
    fn priors_are_class_frequencies() {
        let mut data = vec![false; 100 * 100];
        for y in 0..50 {
            for x in 0..100 {
                data[y * 100 + x] = true;
            }
        }
        let mask = BuildingMask::new(100, 100, data).unwrap();
        let mut ljs = Vec::new();
        for i in 0..60 {
            ljs.push(LJunction::new([i as f64, 10.0], [6.0, 0.0], [0.0, 6.0], 0.0, i).unwrap());
        }
        for i in 0..40 {
            ljs.push(LJunction::new([i as f64, 70.0], [6.0, 0.0], [0.0, 6.0], 0.0, 100 + i).unwrap());
        }
        let m = fit_prior(&[(ljs, mask)]).unwrap();
        assert_eq!(m.prior_building(), 0.6);
        assert_eq!(m.prior_background(), 0.4);
    }

    #[test]
    fn out_of_range_features_are_clamped_and_counted() {
        let m = PriorModel::from_counts(tiny_axes(2), vec![3, 1], vec![1, 3]).unwrap();
        assert_eq!(m.clamped_count(), 0);
        let inside = m.posterior(&features(0.5, 0.0));
        let outside = m.posterior(&JunctionFeatures {
            log_min_length: -4.0,
            ..features(0.5, 0.0)
        });
        assert_eq!(inside, outside);
        assert_eq!(m.clamped_count(), 1);
    }

    #[test]
    fn first_order_examples() {
        let m = PriorModel::from_counts(tiny_axes(1), vec![4], vec![1]).unwrap();
        // single bin: posterior = prior = 0.8
        let v = [6.0, 0.0];
        let w = [0.0, 6.0];
        assert_eq!(first_order_saliency(&lj(v, w, 1.0), &m), 0.0);
        assert!((first_order_saliency(&lj(v, w, 0.0), &m) - 0.8).abs() < 1e-12);
        let m = PriorModel::from_counts(tiny_axes(1), vec![2], vec![3]).unwrap();
        assert!((first_order_saliency(&lj(v, w, 0.25), &m) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn pairwise_examples() {
        let me = lj([10.0, 0.0], [0.0, 10.0], 0.0);
        assert_eq!(pairwise_saliency(&me, &[]), 0.0);
        assert!((pairwise_saliency(&me, &[(me, 0.5)]) - 0.5).abs() < 1e-12);
        let far = me.translated([10.0 * 2f64.ln(), 0.0]);
        let got = pairwise_saliency(&me, &[(far, 1.0), (me, 0.4)]);
        assert!((got - 0.45).abs() < 1e-12, "{got}");
    }

    #[test]
    fn prior_text_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let b: Vec<u64> = (0..4608).map(|_| rng.random_range(0..20)).collect();
        let bg: Vec<u64> = (0..4608).map(|_| rng.random_range(0..20)).collect();
        let m = PriorModel::from_counts(default_axes(), b, bg).unwrap();
        let back = PriorModel::from_text(&m.to_text(), Path::new("m.gsp")).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_text(), m.to_text());
    }

    #[test]
    fn prior_text_rejects_garbage() {
        assert!(PriorModel::from_text("geosay-prior v2\n", Path::new("m")).is_err());
        let m = PriorModel::from_counts(tiny_axes(2), vec![3, 1], vec![1, 3]).unwrap();
        let broken = m.to_text().replace("building 3 1", "building 3 x");
        assert!(matches!(
            PriorModel::from_text(&broken, Path::new("m")),
            Err(Error::Parse { line: 6, .. })
        ));
    }

    proptest! {
        #[test]
        fn posterior_normalized(angle in 0.0f64..3.2, lmin in 0.0f64..6.0, lmax in 0.0f64..6.0, rho in 0.0f64..1.0, seed in 0u64..50) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let b: Vec<u64> = (0..4608).map(|_| rng.random_range(0..5)).collect();
            let bg: Vec<u64> = (0..4608).map(|_| rng.random_range(0..5)).collect();
            let m = PriorModel::from_counts(default_axes(), b, bg).unwrap();
            let f = JunctionFeatures { opening_angle: angle, log_min_length: lmin, log_max_length: lmax, rho };
            let p = m.posterior(&f);
            prop_assert!(p > 0.0 && p < 1.0);
            prop_assert!((p + m.posterior_complement(&f) - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn omega1_nonincreasing_in_rho(r1 in 0.0f64..1.0, r2 in 0.0f64..1.0) {
            let m = PriorModel::from_counts(tiny_axes(1), vec![4], vec![1]).unwrap();
            let (lo, hi) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
            let v = [6.0, 0.0];
            let w = [0.0, 6.0];
            prop_assert!(first_order_saliency(&lj(v, w, hi), &m) <= first_order_saliency(&lj(v, w, lo), &m));
        }

        #[test]
        fn omega2_bounded_by_max_neighbor(ws in proptest::collection::vec((0.0f64..1.0, -5.0f64..5.0), 1..20)) {
            let me = lj([10.0, 0.0], [0.0, 10.0], 0.0);
            let ns: Vec<(LJunction, f64)> = ws.iter().map(|&(w, dx)| (me.translated([dx, 0.0]), w)).collect();
            let max = ws.iter().map(|w| w.0).fold(0.0, f64::max);
            let v = pairwise_saliency(&me, &ns);
            prop_assert!((0.0..=max + 1e-15).contains(&v));
        }
    }
}
