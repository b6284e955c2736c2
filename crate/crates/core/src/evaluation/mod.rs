//! Pixel-level scores of a mask and of an index map against truth. The
//! synthetic scene generator that provides the truth lives here too.

mod synth;

use std::fmt::Write as _;

pub use synth::{generate_scene, parse_scene_spec, Clutter, RandomSceneParams, RectSpec, Scene, SceneSpec};

use crate::error::{Error, Result};
use crate::gbi::{BuildingMask, GbiMap};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
}

impl Confusion {
    pub fn from_counts(tp: u64, fp: u64, tn: u64, fn_: u64) -> Self {
        let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f_score = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self {
            tp,
            fp,
            tn,
            fn_,
            precision,
            recall,
            f_score,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    pub confusion: Confusion,
    /// `None` when the truth has no positive pixel.
    pub average_precision: Option<f64>,
    pub threshold: f64,
}

fn check_dims(aw: usize, ah: usize, truth: &BuildingMask) -> Result<()> {
    if (aw, ah) != (truth.width(), truth.height()) {
        return Err(Error::Dimension(format!(
            "prediction is {aw}x{ah}, truth is {}x{}",
            truth.width(),
            truth.height()
        )));
    }
    Ok(())
}

pub fn confusion(mask: &BuildingMask, truth: &BuildingMask) -> Result<Confusion> {
    check_dims(mask.width(), mask.height(), truth)?;
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (&p, &t) in mask.data().iter().zip(truth.data()) {
        match (p, t) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    Ok(Confusion::from_counts(tp, fp, tn, fn_))
}

/// Average precision of the map as a ranking of truth pixels.
///
/// Thresholds run over the distinct map values in descending order; at each
/// one the prediction is every pixel at or above it (strictly above the
/// next lower distinct value). AP is `Σ (R_k − R_{k−1}) · P_k`.
pub fn average_precision(map: &GbiMap, truth: &BuildingMask) -> Result<f64> {
    check_dims(map.width(), map.height(), truth)?;
    let positives = truth.count();
    if positives == 0 {
        return Err(Error::Undefined(
            "truth mask has no building pixel; exclude this image from mAP".into(),
        ));
    }
    let mut ranked: Vec<(f64, bool)> = map.values().iter().copied().zip(truth.data().iter().copied()).collect();
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0));

    let (mut tp, mut fp) = (0u64, 0u64);
    let (mut ap, mut prev_recall) = (0.0, 0.0);
    let mut i = 0;
    while i < ranked.len() {
        let v = ranked[i].0;
        while i < ranked.len() && ranked[i].0 == v {
            if ranked[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let recall = tp as f64 / positives as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Ok(ap)
}

/// Evaluates a predicted mask and its index map against truth.
pub fn evaluate(map: &GbiMap, mask: &BuildingMask, truth: &BuildingMask, threshold: f64) -> Result<EvalReport> {
    let confusion = confusion(mask, truth)?;
    let average_precision = match average_precision(map, truth) {
        Ok(ap) => Some(ap),
        Err(Error::Undefined(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(EvalReport {
        confusion,
        average_precision,
        threshold,
    })
}

/// One manifest entry's outcome.
#[derive(Debug, Clone)]
pub struct ImageResult {
    pub name: String,
    pub outcome: std::result::Result<EvalReport, String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aggregate {
    pub mean_precision: f64,
    pub mean_recall: f64,
    pub mean_f: f64,
    /// Mean AP over images with a defined AP; `None` when there are none.
    pub map: Option<f64>,
    pub evaluated: usize,
    pub failed: usize,
    pub excluded_from_map: usize,
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

/// Averages per-image scalars in input order.
pub fn aggregate(results: &[ImageResult]) -> Aggregate {
    let ok: Vec<&EvalReport> = results.iter().filter_map(|r| r.outcome.as_ref().ok()).collect();
    Aggregate {
        mean_precision: mean(ok.iter().map(|r| r.confusion.precision)).unwrap_or(0.0),
        mean_recall: mean(ok.iter().map(|r| r.confusion.recall)).unwrap_or(0.0),
        mean_f: mean(ok.iter().map(|r| r.confusion.f_score)).unwrap_or(0.0),
        map: mean(ok.iter().filter_map(|r| r.average_precision)),
        evaluated: ok.len(),
        failed: results.len() - ok.len(),
        excluded_from_map: ok.iter().filter(|r| r.average_precision.is_none()).count(),
    }
}

pub const REPORT_HEADER: &str = "image,precision,recall,f_score,ap,threshold";

/// CSV report with one row per image after the header. The last row holds
/// the `__aggregate__` means.
/// Failed images and undefined APs are written as `nan`.
pub fn format_report(results: &[ImageResult]) -> String {
    let mut s = format!("{REPORT_HEADER}\n");
    for r in results {
        match &r.outcome {
            Ok(e) => {
                let ap = e.average_precision.map_or("nan".to_string(), |v| format!("{v:.6}"));
                writeln!(
                    s,
                    "{},{:.6},{:.6},{:.6},{},{:.6}",
                    r.name, e.confusion.precision, e.confusion.recall, e.confusion.f_score, ap, e.threshold
                )
                .unwrap();
            }
            Err(_) => writeln!(s, "{},nan,nan,nan,nan,nan", r.name).unwrap(),
        }
    }
    let agg = aggregate(results);
    let map = agg.map.map_or("nan".to_string(), |v| format!("{v:.6}"));
    writeln!(
        s,
        "__aggregate__,{:.6},{:.6},{:.6},{},",
        agg.mean_precision, agg.mean_recall, agg.mean_f, map
    )
    .unwrap();
    s
}
