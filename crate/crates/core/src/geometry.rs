//! L-junction decomposition and the parallelogram each L-junction spans.
//! Fixed-radius neighbor queries run over L-junction centers.

use std::collections::HashMap;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::junction::{angular_distance, Junction};

pub type Point = [f64; 2];

#[inline]
fn cross(a: Point, b: Point) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

#[inline]
fn norm(v: Point) -> f64 {
    (v[0] * v[0] + v[1] * v[1]).sqrt()
}

/// Two-branch junction `{c, ν₁, ν₂, ρ}` with its vertex kept for the
/// parallelogram.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LJunction {
    pub vertex: Point,
    pub v1: Point,
    pub v2: Point,
    pub center: Point,
    pub rho: f64,
    /// Index of the junction this one was decomposed from.
    pub parent: usize,
}

impl LJunction {
    pub fn new(vertex: Point, v1: Point, v2: Point, rho: f64, parent: usize) -> Result<Self> {
        if cross(v1, v2).abs() <= 1e-9 {
            return Err(Error::Validation("L-junction branches are parallel or zero".into()));
        }
        if !(0.0..=1.0).contains(&rho) {
            return Err(Error::Validation(format!("significance {rho} outside [0, 1]")));
        }
        Ok(Self {
            vertex,
            v1,
            v2,
            center: [vertex[0] + 0.5 * (v1[0] + v2[0]), vertex[1] + 0.5 * (v1[1] + v2[1])],
            rho,
            parent,
        })
    }

    /// Minimal branch length; the neighbor radius of this junction.
    pub fn tau(&self) -> f64 {
        norm(self.v1).min(norm(self.v2))
    }

    pub fn branch_lengths(&self) -> (f64, f64) {
        (norm(self.v1), norm(self.v2))
    }

    /// Unsigned angle between the two branches, in `(0, π)`.
    pub fn opening_angle(&self) -> f64 {
        cross(self.v1, self.v2)
            .abs()
            .atan2(self.v1[0] * self.v2[0] + self.v1[1] * self.v2[1])
    }

    pub fn translated(&self, t: Point) -> Self {
        Self {
            vertex: [self.vertex[0] + t[0], self.vertex[1] + t[1]],
            center: [self.center[0] + t[0], self.center[1] + t[1]],
            ..*self
        }
    }
}

pub fn l_center(l: &LJunction) -> Point {
    l.center
}

/// Splits a junction into one L-junction per unordered branch pair, skipping
/// pairs that are closer than `min_angle_sep` to parallel or anti-parallel.
pub fn decompose_to_l(j: &Junction, parent: usize, min_angle_sep: f64) -> Vec<LJunction> {
    let mut out = Vec::new();
    for (a, ba) in j.branches.iter().enumerate() {
        for bb in &j.branches[a + 1..] {
            let d = angular_distance(ba.theta, bb.theta);
            if d < min_angle_sep || d > PI - min_angle_sep {
                continue;
            }
            if let Ok(l) = LJunction::new([j.x, j.y], ba.vector(), bb.vector(), j.rho, parent) {
                out.push(l);
            }
        }
    }
    out
}

/// Decomposes a junction list in order; parents are list indices.
pub fn decompose_all(junctions: &[Junction], min_angle_sep: f64) -> Vec<LJunction> {
    junctions
        .iter()
        .enumerate()
        .flat_map(|(i, j)| decompose_to_l(j, i, min_angle_sep))
        .collect()
}

/// Parallelogram spanned by the two branches of an L-junction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Parallelogram {
    pub origin: Point,
    pub v1: Point,
    pub v2: Point,
}

pub fn parallelogram(l: &LJunction) -> Parallelogram {
    Parallelogram {
        origin: l.vertex,
        v1: l.v1,
        v2: l.v2,
    }
}

impl Parallelogram {
    /// `(p, q₁, p + ν₁ + ν₂, q₂)`.
    pub fn corners(&self) -> [Point; 4] {
        let [px, py] = self.origin;
        [
            [px, py],
            [px + self.v1[0], py + self.v1[1]],
            [px + self.v1[0] + self.v2[0], py + self.v1[1] + self.v2[1]],
            [px + self.v2[0], py + self.v2[1]],
        ]
    }

    pub fn area(&self) -> f64 {
        cross(self.v1, self.v2).abs()
    }

    pub fn center(&self) -> Point {
        [
            self.origin[0] + 0.5 * (self.v1[0] + self.v2[0]),
            self.origin[1] + 0.5 * (self.v1[1] + self.v2[1]),
        ]
    }

    /// Barycentric coordinates `(a, b)` of a point: `pt = p + a ν₁ + b ν₂`.
    pub fn barycentric(&self, pt: Point) -> (f64, f64) {
        let d = [pt[0] - self.origin[0], pt[1] - self.origin[1]];
        let det = cross(self.v1, self.v2);
        (cross(d, self.v2) / det, cross(self.v1, d) / det)
    }

    /// Half-open membership of the pixel center `(x + 0.5, y + 0.5)`.
    #[inline]
    pub fn contains(&self, x: i64, y: i64) -> bool {
        let (a, b) = self.barycentric([x as f64 + 0.5, y as f64 + 0.5]);
        (0.0..1.0).contains(&a) && (0.0..1.0).contains(&b)
    }

    /// Inclusive pixel bounding box `(x0, y0, x1, y1)` clipped to the grid,
    /// or `None` when it misses the grid entirely.
    pub fn pixel_bounds(&self, width: usize, height: usize) -> Option<(usize, usize, usize, usize)> {
        let c = self.corners();
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in c {
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        let x0 = (lo[0] - 1.0).floor().max(0.0);
        let y0 = (lo[1] - 1.0).floor().max(0.0);
        let x1 = hi[0].ceil().min(width as f64 - 1.0);
        let y1 = hi[1].ceil().min(height as f64 - 1.0);
        if x0 > x1 || y0 > y1 {
            return None;
        }
        Some((x0 as usize, y0 as usize, x1 as usize, y1 as usize))
    }
}

pub fn contains(r: &Parallelogram, x: i64, y: i64) -> bool {
    r.contains(x, y)
}

#[inline]
pub fn center_distance(a: &LJunction, b: &LJunction) -> f64 {
    let dx = a.center[0] - b.center[0];
    let dy = a.center[1] - b.center[1];
    (dx * dx + dy * dy).sqrt()
}

const BRUTE_FORCE_BELOW: usize = 64;

/// Fixed-radius neighbor index over L-junction centers.
///
/// Neighbors of `i` are the non-sibling L-junctions whose center lies
/// strictly closer than `tau(i)`. The relation is not symmetric.
pub struct TauIndex<'a> {
    all: &'a [LJunction],
    grid: Option<Grid>,
}

struct Grid {
    cell: f64,
    cells: HashMap<(i64, i64), Vec<usize>>,
}

impl Grid {
    fn key(&self, p: Point) -> (i64, i64) {
        ((p[0] / self.cell).floor() as i64, (p[1] / self.cell).floor() as i64)
    }
}

impl<'a> TauIndex<'a> {
    pub fn new(all: &'a [LJunction]) -> Self {
        let grid = (all.len() >= BRUTE_FORCE_BELOW).then(|| {
            let cell = all.iter().map(LJunction::tau).fold(0.0, f64::max);
            let mut g = Grid {
                cell,
                cells: HashMap::new(),
            };
            for (i, l) in all.iter().enumerate() {
                let k = g.key(l.center);
                g.cells.entry(k).or_default().push(i);
            }
            g
        });
        Self { all, grid }
    }

    /// Neighbor indices of `i`, ascending.
    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        let me = &self.all[i];
        let tau = me.tau();
        let accept = |k: usize| {
            let other = &self.all[k];
            k != i && other.parent != me.parent && center_distance(me, other) < tau
        };
        match &self.grid {
            None => (0..self.all.len()).filter(|&k| accept(k)).collect(),
            Some(g) => {
                let (cx, cy) = g.key(me.center);
                let mut out: Vec<usize> = (cy - 1..=cy + 1)
                    .flat_map(|y| (cx - 1..=cx + 1).map(move |x| (x, y)))
                    .filter_map(|k| g.cells.get(&k))
                    .flatten()
                    .copied()
                    .filter(|&k| accept(k))
                    .collect();
                out.sort_unstable();
                out
            }
        }
    }
}

/// One-shot neighbor query; builds an index over `all`.
pub fn tau_neighbors(all: &[LJunction], self_index: usize) -> Vec<usize> {
    TauIndex::new(all).neighbors(self_index)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::junction::Branch;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, TAU};

    const SEP: f64 = 10.0 * PI / 180.0;

    fn junction(thetas: &[f64]) -> Junction {
        Junction {
            x: 0.0,
            y: 0.0,
            branches: thetas.iter().map(|&t| Branch::new(t, 6.0)).collect(),
            rho: 0.3,
        }
    }

    fn l(vertex: Point, v1: Point, v2: Point) -> LJunction {
        LJunction::new(vertex, v1, v2, 0.0, 0).unwrap()
    }

    #[test]
    fn decomposition_counts() {
        assert_eq!(decompose_to_l(&junction(&[0.0, FRAC_PI_2]), 0, SEP).len(), 1);
        assert_eq!(decompose_to_l(&junction(&[0.0, 2.0, 4.0]), 0, SEP).len(), 3);
        let x = junction(&[0.3, 0.3 + FRAC_PI_2 - 0.4, PI + 0.1, 1.5 * PI + 0.6]);
        assert_eq!(decompose_to_l(&x, 0, SEP).len(), 6);
        // two anti-parallel pairs in a symmetric X
        let sym = junction(&[0.0, FRAC_PI_2, PI, 1.5 * PI]);
        assert_eq!(decompose_to_l(&sym, 0, SEP).len(), 4);
    }

    #[test]
    fn decomposition_inherits_rho() {
        for lj in decompose_to_l(&junction(&[0.0, 2.0, 4.0]), 7, SEP) {
            assert_eq!(lj.rho, 0.3);
            assert_eq!(lj.parent, 7);
        }
    }

    #[test]
    fn anti_parallel_pair_is_dropped() {
        assert!(decompose_to_l(&junction(&[0.0, PI]), 0, SEP).is_empty());
    }

    #[test]
    fn center_examples() {
        let j = Junction {
            x: 0.0,
            y: 0.0,
            branches: vec![Branch::new(0.0, 2.0), Branch::new(FRAC_PI_2, 2.0)],
            rho: 0.0,
        };
        let c = l_center(&decompose_to_l(&j, 0, SEP)[0]);
        assert!((c[0] - 1.0).abs() < 1e-12 && (c[1] - 1.0).abs() < 1e-12);

        let j = Junction {
            x: 5.0,
            y: 5.0,
            branches: vec![Branch::new(0.0, 6.0), Branch::new(FRAC_PI_2, 8.0)],
            rho: 0.0,
        };
        let c = l_center(&decompose_to_l(&j, 0, SEP)[0]);
        assert!((c[0] - 8.0).abs() < 1e-12 && (c[1] - 9.0).abs() < 1e-12);
    }

    #[test]
    fn parallelogram_examples() {
        let r = parallelogram(&l([0.0, 0.0], [2.0, 0.0], [0.0, 2.0]));
        assert_eq!(r.corners(), [[0.0, 0.0], [2.0, 0.0], [2.0, 2.0], [0.0, 2.0]]);
        assert_eq!(r.area(), 4.0);

        let lj = l([1.0, 1.0], [3.0, 1.0], [1.0, 2.0]);
        let r = parallelogram(&lj);
        assert_eq!(r.corners(), [[1.0, 1.0], [4.0, 2.0], [5.0, 4.0], [2.0, 3.0]]);
        assert_eq!(r.area(), 5.0);
        assert_eq!(r.center(), l_center(&lj));
    }

    #[test]
    fn containment_examples() {
        let r = parallelogram(&l([0.0, 0.0], [2.0, 0.0], [0.0, 2.0]));
        assert!(contains(&r, 0, 0));
        assert!(!contains(&r, 2, 2));
        assert!(contains(&r, 1, 1));
        assert_eq!(r.barycentric([1.5, 1.5]), (0.75, 0.75));
    }

    #[test]
    fn half_open_abutting_cells_never_double_count() {
        // vertex on pixel centers so edges pass exactly through them
        let a = parallelogram(&l([0.5, 0.5], [3.0, 0.0], [0.0, 3.0]));
        let b = parallelogram(&l([3.5, 0.5], [3.0, 0.0], [0.0, 3.0]));
        for y in 0..6 {
            for x in 0..8 {
                assert!(!(a.contains(x, y) && b.contains(x, y)));
            }
        }
        assert!(a.contains(0, 0) && !a.contains(3, 0) && b.contains(3, 0));
    }

    #[test]
    fn tau_strict_inequality() {
        // τ = 10, neighbors at center distances 5, 10 and 25
        let base = LJunction::new([0.0, 0.0], [10.0, 0.0], [0.0, 10.0], 0.0, 0).unwrap();
        let at = |dx: f64, parent| LJunction {
            parent,
            ..base.translated([dx, 0.0])
        };
        let all = vec![base, at(5.0, 1)];
        assert_eq!(tau_neighbors(&all, 0), vec![1]);
        let all = vec![base, at(10.0, 1), at(25.0, 2)];
        assert!(tau_neighbors(&all, 0).is_empty());
        // siblings are excluded even at distance 0
        let all = vec![base, at(0.0, 0)];
        assert!(tau_neighbors(&all, 0).is_empty());
    }

    fn random_ljunctions(n: usize, seed: u64) -> Vec<LJunction> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let t1: f64 = rng.random_range(0.0..2.0 * PI);
                let t2 = t1 + rng.random_range(0.3..2.8);
                let (s1, s2) = (rng.random_range(5.0..40.0), rng.random_range(5.0..40.0));
                LJunction::new(
                    [rng.random_range(0.0..512.0), rng.random_range(0.0..512.0)],
                    [s1 * t1.cos(), s1 * t1.sin()],
                    [s2 * t2.cos(), s2 * t2.sin()],
                    rng.random_range(0.0..1.0),
                    i / 2,
                )
                .unwrap()
            })
            .collect()
    }

    #[test]
    fn grid_matches_exhaustive_scan() {
        let all = random_ljunctions(1000, 11);
        let index = TauIndex::new(&all);
        assert!(index.grid.is_some());
        for i in 0..all.len() {
            let me = &all[i];
            let want: Vec<usize> = (0..all.len())
                .filter(|&k| {
                    let dx = all[k].center[0] - me.center[0];
                    let dy = all[k].center[1] - me.center[1];
                    k != i && all[k].parent != me.parent && (dx * dx + dy * dy).sqrt() < me.tau()
                })
                .collect();
            assert_eq!(index.neighbors(i), want, "junction {i}");
        }
    }

    #[test]
    fn small_sets_use_brute_force() {
        let all = random_ljunctions(40, 3);
        assert!(TauIndex::new(&all).grid.is_none());
    }

    proptest! {
        #[test]
        fn area_is_cross_product(a in -50.0f64..50.0, b in -50.0f64..50.0, c in -50.0f64..50.0, d in -50.0f64..50.0) {
            prop_assume!((a * d - b * c).abs() > 1e-6);
            let r = parallelogram(&l([0.0, 0.0], [a, b], [c, d]));
            prop_assert_eq!(r.area(), (a * d - b * c).abs());
        }

        #[test]
        fn translation_moves_corners_and_center(tx in -100i32..100, ty in -100i32..100, s in 1.0f64..30.0, t in 0.2f64..2.9) {
            let base = l([3.25, 7.5], [s, 0.0], [s * t.cos(), s * t.sin()]);
            let moved = base.translated([tx as f64, ty as f64]);
            let (ra, rb) = (parallelogram(&base), parallelogram(&moved));
            let close = |a: f64, b: f64| (a - b).abs() <= 1e-9;
            for (p, q) in ra.corners().iter().zip(rb.corners().iter()) {
                prop_assert!(close(q[0], p[0] + tx as f64) && close(q[1], p[1] + ty as f64));
            }
            prop_assert!(close(moved.center[0], base.center[0] + tx as f64));
            prop_assert!(close(moved.center[1], base.center[1] + ty as f64));
        }

        #[test]
        fn decomposition_bounded_by_pairs(thetas in proptest::collection::vec(0.0f64..TAU, 2..=4)) {
            let j = junction(&thetas);
            let n = thetas.len();
            prop_assert!(decompose_to_l(&j, 0, SEP).len() <= n * (n - 1) / 2);
        }
    }
}
