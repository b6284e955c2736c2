//! Stage wiring from detection to the thresholded mask, driven by a flat
//! `key = value` configuration. Manifests pair images with truth masks for
//! dataset evaluation.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::evaluation::{evaluate, EvalReport, ImageResult};
use crate::gbi::{rasterize_gbi, threshold_at, BuildingMask, GbiMap};
use crate::geometry::{decompose_all, LJunction};
use crate::image_io::{load_image, p_energy, RasterImage};
use crate::junction::{detect_junctions, format_junctions, DetectorConfig, Junction};
use crate::saliency::{compute_saliency, fit_prior, format_saliency, PriorModel, SaliencyRecord};

pub const JOBS_ENV: &str = "GEOSAY_JOBS";

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub detector: DetectorConfig,
    /// Exponent of the p-energy channel reduction.
    pub p: f64,
    pub prior: Option<PathBuf>,
    /// Threshold at the mean of the nonzero pixels instead of all pixels.
    pub mean_over_nonzero: bool,
    /// Images processed concurrently; also the partition count of the
    /// parallel rasterizer when above one.
    pub parallelism: usize,
    pub out_dir: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            detector: DetectorConfig::default(),
            p: 1.0,
            prior: None,
            mean_over_nonzero: false,
            parallelism: 1,
            out_dir: PathBuf::from("geosay-out"),
        }
    }
}

impl PipelineConfig {
    /// Defaults, with `GEOSAY_JOBS` as the parallelism default when set.
    pub fn from_env() -> Result<Self> {
        let mut cfg = Self::default();
        if let Ok(v) = std::env::var(JOBS_ENV) {
            cfg.apply(JOBS_ENV, "parallelism", v.trim())?;
        }
        Ok(cfg)
    }

    /// Canonical `key = value` rendering; also what the config hash covers.
    pub fn to_text(&self) -> String {
        let d = &self.detector;
        let mut s = String::new();
        writeln!(s, "p = {}", self.p).unwrap();
        writeln!(s, "gradient_threshold = {}", d.gradient_threshold).unwrap();
        writeln!(s, "orientation_bins = {}", d.orientation_bins).unwrap();
        writeln!(s, "max_branch_length = {}", d.max_branch_length).unwrap();
        writeln!(s, "min_branch_length = {}", d.min_branch_length).unwrap();
        writeln!(s, "nfa_test_base = {}", d.nfa_test_base).unwrap();
        writeln!(s, "max_branches = {}", d.max_branches).unwrap();
        writeln!(s, "min_angle_sep_deg = {}", d.min_angle_sep.to_degrees()).unwrap();
        if let Some(p) = &self.prior {
            writeln!(s, "prior = {}", p.display()).unwrap();
        }
        writeln!(s, "mean_over_nonzero = {}", self.mean_over_nonzero).unwrap();
        writeln!(s, "parallelism = {}", self.parallelism).unwrap();
        writeln!(s, "out_dir = {}", self.out_dir.display()).unwrap();
        s
    }

    /// Short hex digest of [`Self::to_text`].
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_text().as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    fn apply(&mut self, origin: &str, key: &str, value: &str) -> Result<()> {
        let err = |reason: String| Error::Config {
            key: key.to_string(),
            reason: format!("{reason} (in {origin})"),
        };
        let num = || -> Result<f64> {
            value
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| err(format!("expected a number, got `{value}`")))
        };
        let int = || -> Result<usize> {
            value
                .parse::<usize>()
                .map_err(|_| err(format!("expected a nonnegative integer, got `{value}`")))
        };
        let positive = |v: f64| -> Result<f64> {
            if v > 0.0 {
                Ok(v)
            } else {
                Err(err(format!("out of range: must be positive, got {v}")))
            }
        };
        let d = &mut self.detector;
        match key {
            "p" => self.p = positive(num()?)?,
            "gradient_threshold" => d.gradient_threshold = positive(num()?)?,
            "orientation_bins" => d.orientation_bins = int()?,
            "max_branch_length" => d.max_branch_length = positive(num()?)?,
            "min_branch_length" => d.min_branch_length = positive(num()?)?,
            "nfa_test_base" => d.nfa_test_base = positive(num()?)?,
            "max_branches" => d.max_branches = int()?,
            "min_angle_sep_deg" => d.min_angle_sep = positive(num()?)?.to_radians(),
            "prior" => self.prior = Some(PathBuf::from(value)),
            "mean_over_nonzero" => {
                self.mean_over_nonzero = value
                    .parse()
                    .map_err(|_| err(format!("expected true or false, got `{value}`")))?
            }
            "parallelism" => {
                let n = int()?;
                if n == 0 {
                    return Err(err("out of range: must be at least 1".into()));
                }
                self.parallelism = n;
            }
            "out_dir" => self.out_dir = PathBuf::from(value),
            _ => return Err(err("unknown key".into())),
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of `self`.
    pub fn merge_text(mut self, text: &str, origin: &Path) -> Result<Self> {
        let label = origin.display().to_string();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(origin, i + 1, "expected `key = value`"))?;
            self.apply(&label, key.trim(), value.trim())?;
        }
        self.detector.validate().map_err(|e| match e {
            Error::Parameter { name, reason } => Error::Config {
                key: name.to_string(),
                reason,
            },
            other => other,
        })?;
        Ok(self)
    }
}

pub fn parse_config(path: &Path) -> Result<PipelineConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    PipelineConfig::default().merge_text(&text, path)
}

/// Everything one image run produces.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub junctions: Vec<Junction>,
    pub ljunctions: Vec<LJunction>,
    pub records: Vec<SaliencyRecord>,
    pub map: GbiMap,
    pub mask: BuildingMask,
    pub threshold: f64,
}

pub const ARTIFACTS: [&str; 5] = ["junctions.txt", "saliency.txt", "gbi.gbif", "mask.png", "preview.png"];

/// A configured pipeline with its prior model loaded.
pub struct Pipeline {
    cfg: PipelineConfig,
    prior: PriorModel,
}

impl Pipeline {
    /// Loads the prior named in the config; fails before any image is read.
    pub fn new(cfg: PipelineConfig) -> Result<Self> {
        cfg.detector.validate()?;
        let path = cfg.prior.clone().ok_or_else(|| Error::Config {
            key: "prior".into(),
            reason: "no prior model file given".into(),
        })?;
        if !path.is_file() {
            return Err(Error::Config {
                key: "prior".into(),
                reason: format!("prior model file {} does not exist", path.display()),
            });
        }
        let prior = PriorModel::load(&path)?;
        Ok(Self { cfg, prior })
    }

    pub fn with_prior(cfg: PipelineConfig, prior: PriorModel) -> Result<Self> {
        cfg.detector.validate()?;
        Ok(Self { cfg, prior })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn prior(&self) -> &PriorModel {
        &self.prior
    }

    /// Junction stage only.
    pub fn detect(&self, image: &RasterImage) -> Result<Vec<Junction>> {
        let lum = p_energy(image, self.cfg.p)?;
        detect_junctions(&lum, &self.cfg.detector)
    }

    /// Everything downstream of detection.
    pub fn from_junctions(&self, junctions: Vec<Junction>, width: usize, height: usize) -> Result<PipelineOutput> {
        let t = Instant::now();
        let ljunctions = decompose_all(&junctions, self.cfg.detector.min_angle_sep);
        let records = compute_saliency(&ljunctions, &self.prior);
        info!("saliency: {} L-junctions in {:?}", ljunctions.len(), t.elapsed());

        let t = Instant::now();
        // Sequential summation keeps artifacts independent of `parallelism`.
        let map = rasterize_gbi(&records, width, height)?;
        let threshold = if self.cfg.mean_over_nonzero {
            map.nonzero_mean()
        } else {
            map.mean()
        };
        let mask = threshold_at(&map, threshold);
        info!("index + threshold in {:?}", t.elapsed());
        Ok(PipelineOutput {
            junctions,
            ljunctions,
            records,
            map,
            mask,
            threshold,
        })
    }

    pub fn process(&self, image: &RasterImage) -> Result<PipelineOutput> {
        let t = Instant::now();
        let junctions = self.detect(image)?;
        info!("detect: {} junctions in {:?}", junctions.len(), t.elapsed());
        self.from_junctions(junctions, image.width(), image.height())
    }

    /// Runs one image file and persists every intermediate into `out_dir`.
    /// Partial artifacts are removed when a stage fails.
    pub fn run(&self, image_path: &Path, out_dir: &Path) -> Result<PipelineOutput> {
        let result = self.run_inner(image_path, out_dir);
        if result.is_err() {
            for name in ARTIFACTS {
                let _ = std::fs::remove_file(out_dir.join(name));
            }
        }
        result
    }

    fn run_inner(&self, image_path: &Path, out_dir: &Path) -> Result<PipelineOutput> {
        let image = load_image(image_path).map_err(|e| Error::stage("load", image_path, e))?;
        std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
        let t = Instant::now();
        let junctions = self.detect(&image).map_err(|e| Error::stage("detect", image_path, e))?;
        info!("detect: {} junctions in {:?}", junctions.len(), t.elapsed());
        let write = |name: &str, bytes: &[u8]| {
            let p = out_dir.join(name);
            std::fs::write(&p, bytes).map_err(|e| Error::io(p, e))
        };
        write("junctions.txt", format_junctions(&junctions)?.as_bytes())
            .map_err(|e| Error::stage("detect", image_path, e))?;
        let out = self
            .from_junctions(junctions, image.width(), image.height())
            .map_err(|e| Error::stage("gbi", image_path, e))?;
        write("saliency.txt", format_saliency(&out.records).as_bytes())
            .map_err(|e| Error::stage("saliency", image_path, e))?;
        write("gbi.gbif", &out.map.to_gbif_bytes()).map_err(|e| Error::stage("gbi", image_path, e))?;
        out.mask
            .write_png(&out_dir.join("mask.png"))
            .map_err(|e| Error::stage("threshold", image_path, e))?;
        out.map
            .write_preview(&out_dir.join("preview.png"))
            .map_err(|e| Error::stage("gbi", image_path, e))?;
        Ok(out)
    }

    /// Full pipeline plus scoring against a truth mask.
    pub fn evaluate_image(&self, image: &RasterImage, truth: &BuildingMask) -> Result<EvalReport> {
        let out = self.process(image)?;
        evaluate(&out.map, &out.mask, truth, out.threshold)
    }

    /// Evaluates every manifest entry; per-image failures are recorded, not
    /// propagated. Results keep manifest order.
    pub fn evaluate_dataset(&self, entries: &[ManifestEntry]) -> Result<Vec<ImageResult>> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.cfg.parallelism)
            .build()
            .map_err(|e| Error::param("parallelism", e.to_string()))?;
        Ok(pool.install(|| {
            entries
                .par_iter()
                .map(|e| {
                    let outcome = load_image(&e.image)
                        .and_then(|img| {
                            let truth = BuildingMask::read(&e.mask)?;
                            self.evaluate_image(&img, &truth)
                        })
                        .map_err(|err| {
                            warn!("{}: {err}", e.image.display());
                            err.to_string()
                        });
                    ImageResult {
                        name: e.name.clone(),
                        outcome,
                    }
                })
                .collect()
        }))
    }
}

/// Detects and decomposes junctions in every manifest image, then fits the
/// prior against the paired masks.
pub fn fit_prior_from_manifest(entries: &[ManifestEntry], cfg: &PipelineConfig) -> Result<PriorModel> {
    let scenes = entries
        .iter()
        .map(|e| {
            let image = load_image(&e.image)?;
            let mask = BuildingMask::read(&e.mask)?;
            if (mask.width(), mask.height()) != (image.width(), image.height()) {
                return Err(Error::Dimension(format!(
                    "{} and {} differ in size",
                    e.image.display(),
                    e.mask.display()
                )));
            }
            let lum = p_energy(&image, cfg.p)?;
            let junctions = detect_junctions(&lum, &cfg.detector)?;
            Ok((decompose_all(&junctions, cfg.detector.min_angle_sep), mask))
        })
        .collect::<Result<Vec<_>>>()?;
    fit_prior(&scenes)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    /// Image path as written in the manifest.
    pub name: String,
    pub image: PathBuf,
    pub mask: PathBuf,
}

/// Manifest lines are `<image> <mask>`; relative paths resolve against the
/// manifest's directory; `#` starts a comment.
pub fn parse_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(Error::parse(path, i + 1, "expected `<image> <mask>`"));
        }
        out.push(ManifestEntry {
            name: fields[0].to_string(),
            image: base.join(fields[0]),
            mask: base.join(fields[1]),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<PipelineConfig> {
        PipelineConfig::default().merge_text(text, Path::new("cfg"))
    }

    #[test]
    fn empty_config_is_default() {
        assert_eq!(parse("").unwrap(), PipelineConfig::default());
        assert_eq!(parse("# only a comment\n\n").unwrap(), PipelineConfig::default());
    }

    #[test]
    fn zero_p_is_range_error() {
        match parse("p = 0\n").unwrap_err() {
            Error::Config { key, reason } => {
                assert_eq!(key, "p");
                assert!(reason.contains("range"));
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn parallelism_passthrough() {
        assert_eq!(parse("parallelism = 4").unwrap().parallelism, 4);
        assert!(parse("parallelism = 0").is_err());
    }

    #[test]
    fn unknown_key_and_type_mismatch() {
        assert!(matches!(parse("colour = red"), Err(Error::Config { key, .. }) if key == "colour"));
        assert!(
            matches!(parse("orientation_bins = many"), Err(Error::Config { key, .. }) if key == "orientation_bins")
        );
        assert!(matches!(parse("mean_over_nonzero = maybe"), Err(Error::Config { .. })));
        assert!(matches!(parse("no equals sign"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn cross_field_validation_names_key() {
        let err = parse("min_branch_length = 100").unwrap_err();
        assert!(matches!(err, Error::Config { key, .. } if key == "min_branch_length"));
    }

    #[test]
    fn text_round_trip_and_hash() {
        let cfg = parse("p = 2\nmin_angle_sep_deg = 12\nprior = a.gsp\nmean_over_nonzero = true\n").unwrap();
        let again = parse(&cfg.to_text()).unwrap();
        assert_eq!(again.to_text(), cfg.to_text());
        assert_eq!(again.hash(), cfg.hash());
        assert_ne!(cfg.hash(), PipelineConfig::default().hash());
    }

    #[test]
    fn missing_prior_fails_at_startup() {
        let cfg = PipelineConfig {
            prior: Some(PathBuf::from("/nonexistent/prior.gsp")),
            ..Default::default()
        };
        assert!(matches!(Pipeline::new(cfg), Err(Error::Config { key, .. }) if key == "prior"));
        assert!(Pipeline::new(PipelineConfig::default()).is_err());
    }

    #[test]
    fn manifest_resolves_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let m = dir.path().join("list.txt");
        std::fs::write(&m, "# scenes\na.png a_mask.png\n/abs/b.png /abs/b_mask.png\n").unwrap();
        let entries = parse_manifest(&m).unwrap();
        assert_eq!(entries[0].image, dir.path().join("a.png"));
        assert_eq!(entries[0].name, "a.png");
        assert_eq!(entries[1].mask, PathBuf::from("/abs/b_mask.png"));
        std::fs::write(&m, "only-one-field\n").unwrap();
        assert!(parse_manifest(&m).is_err());
    }
}
