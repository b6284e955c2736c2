//! Anisotropic-scale junctions: a located point with two or more oriented
//! branches of individual length and an a-contrario significance.

mod detect;
mod io;

use std::f64::consts::{PI, TAU};

pub use detect::{binomial_tail_ln, detect_junctions, ALIGNMENT_PROBABILITY};
pub use io::{format_junctions, parse_junctions, read_junctions, write_junctions, JUNCTIONS_HEADER};

use crate::error::{Error, Result};

/// One branch leaving a junction vertex.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Branch {
    /// Orientation in radians, `[0, 2π)`.
    pub theta: f64,
    /// Length in pixels, `> 0`.
    pub length: f64,
}

impl Branch {
    pub fn new(theta: f64, length: f64) -> Self {
        Self {
            theta: theta.rem_euclid(TAU),
            length,
        }
    }

    /// Branch endpoint offset from the vertex.
    pub fn vector(&self) -> [f64; 2] {
        [self.length * self.theta.cos(), self.length * self.theta.sin()]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Junction {
    pub x: f64,
    pub y: f64,
    pub branches: Vec<Branch>,
    /// Significance in `[0, 1]`; smaller is more salient.
    pub rho: f64,
}

/// Unsigned circular distance between two orientations, in `[0, π]`.
pub fn angular_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

impl Junction {
    /// Checks the structural invariants that hold regardless of detector
    /// configuration.
    pub fn check(&self) -> Result<()> {
        if !(self.x.is_finite() && self.y.is_finite()) {
            return Err(Error::Validation("junction location is not finite".into()));
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::Validation(format!("significance {} outside [0, 1]", self.rho)));
        }
        if self.branches.len() < 2 {
            return Err(Error::Validation(format!(
                "junction needs at least 2 branches, has {}",
                self.branches.len()
            )));
        }
        for b in &self.branches {
            if !(b.length > 0.0) || !b.length.is_finite() {
                return Err(Error::Validation(format!("branch length {} not positive", b.length)));
            }
            if !(0.0..TAU).contains(&b.theta) {
                return Err(Error::Validation(format!("branch angle {} outside [0, 2π)", b.theta)));
            }
        }
        Ok(())
    }

    /// Full invariant check against an image size and detector limits.
    pub fn validate(&self, width: usize, height: usize, cfg: &DetectorConfig) -> Result<()> {
        self.check()?;
        if self.x < 0.0 || self.y < 0.0 || self.x > width as f64 || self.y > height as f64 {
            return Err(Error::Validation(format!(
                "location ({}, {}) outside {}x{}",
                self.x, self.y, width, height
            )));
        }
        if self.branches.len() > cfg.max_branches {
            return Err(Error::Validation(format!(
                "{} branches exceed the limit of {}",
                self.branches.len(),
                cfg.max_branches
            )));
        }
        for (i, a) in self.branches.iter().enumerate() {
            for b in &self.branches[i + 1..] {
                if angular_distance(a.theta, b.theta) < cfg.min_angle_sep {
                    return Err(Error::Validation("branches closer than min_angle_sep".into()));
                }
            }
        }
        Ok(())
    }
}

/// Tunables of the junction detector.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorConfig {
    /// Minimum gradient magnitude (on the internally 0..255-normalized
    /// luminance) for a pixel to count as aligned.
    pub gradient_threshold: f64,
    pub orientation_bins: usize,
    pub max_branch_length: f64,
    pub min_branch_length: f64,
    /// Multiplier on the number of tests in the NFA.
    pub nfa_test_base: f64,
    pub max_branches: usize,
    /// Minimum angular separation between branches, radians.
    pub min_angle_sep: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            gradient_threshold: 4.0,
            orientation_bins: 72,
            max_branch_length: 64.0,
            min_branch_length: 5.0,
            nfa_test_base: 1.0,
            max_branches: 4,
            min_angle_sep: 10.0_f64.to_radians(),
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("gradient_threshold", self.gradient_threshold),
            ("max_branch_length", self.max_branch_length),
            ("min_branch_length", self.min_branch_length),
            ("nfa_test_base", self.nfa_test_base),
            ("min_angle_sep", self.min_angle_sep),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::param(name, format!("must be positive, got {v}")));
            }
        }
        if self.orientation_bins < 4 {
            return Err(Error::param("orientation_bins", "need at least 4 bins"));
        }
        if self.max_branches < 2 {
            return Err(Error::param("max_branches", "need at least 2"));
        }
        if self.min_branch_length >= self.max_branch_length {
            return Err(Error::param(
                "min_branch_length",
                "must be smaller than max_branch_length",
            ));
        }
        if self.min_angle_sep >= PI {
            return Err(Error::param("min_angle_sep", "must be below π"));
        }
        Ok(())
    }
}

/// Maps a number of false alarms to a significance in `[0, 1]`: `min(1, nfa)`.
pub fn significance_from_nfa(nfa: f64) -> Result<f64> {
    if !(nfa > 0.0) {
        return Err(Error::param("nfa", format!("must be positive, got {nfa}")));
    }
    Ok(nfa.min(1.0))
}
