mod common;

use std::path::Path;

use common::{clutter_prior, one_rect_scene, rect};
use geosay::evaluation::{evaluate, format_report};
use geosay::gbi::BuildingMask;
use geosay::image_io::RasterImage;
use geosay::pipeline::{ManifestEntry, ARTIFACTS};
use geosay::{read_junctions, Error, GbiMap, Pipeline, PipelineConfig};

fn pipeline() -> Pipeline {
    Pipeline::with_prior(PipelineConfig::default(), clutter_prior(192, 4)).unwrap()
}

fn read(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap()
}

#[test]
fn constant_image_runs_to_empty_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("flat.png");
    RasterImage::new(160, 160, 3, vec![120; 160 * 160 * 3])
        .unwrap()
        .save_png(&img)
        .unwrap();
    let out_dir = dir.path().join("out");
    let out = pipeline().run(&img, &out_dir).unwrap();
    assert!(out.junctions.is_empty());
    assert!(read_junctions(&out_dir.join("junctions.txt")).unwrap().is_empty());
    let map = GbiMap::read_gbif(&out_dir.join("gbi.gbif")).unwrap();
    assert!(map.values().iter().all(|&v| v == 0.0));
    assert_eq!(BuildingMask::read(&out_dir.join("mask.png")).unwrap().count(), 0);
    for name in ARTIFACTS {
        assert!(out_dir.join(name).is_file(), "{name} missing");
    }
}

#[test]
fn one_rectangle_scene_reaches_f_070() {
    let scene = one_rect_scene(192, rect(96.0, 90.0, 70.0, 52.0, 15.0, 185.0));
    let out = pipeline().process(&scene.image).unwrap();
    let r = evaluate(&out.map, &out.mask, &scene.truth, out.threshold).unwrap();
    assert!(r.confusion.f_score >= 0.7, "F = {}", r.confusion.f_score);
}

#[test]
fn missing_prior_fails_before_reading_images() {
    let cfg = PipelineConfig {
        prior: Some("/nonexistent/prior.txt".into()),
        ..Default::default()
    };
    match Pipeline::new(cfg) {
        Err(Error::Config { key, .. }) => assert_eq!(key, "prior"),
        other => panic!("expected config error, got {:?}", other.err()),
    }
    let unset = Pipeline::new(PipelineConfig::default());
    assert!(matches!(unset, Err(Error::Config { .. })));
}

#[test]
fn failed_run_names_stage_and_leaves_no_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let bogus = dir.path().join("broken.png");
    std::fs::write(&bogus, b"not an image").unwrap();
    let out_dir = dir.path().join("out");
    match pipeline().run(&bogus, &out_dir) {
        Err(e @ Error::Stage { stage: "load", .. }) => assert!(e.to_string().contains("broken.png")),
        other => panic!("expected load stage error, got {:?}", other.err()),
    }
    for name in ARTIFACTS {
        assert!(!out_dir.join(name).exists());
    }
}

#[test]
fn rerun_reproduces_identical_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let scene = one_rect_scene(160, rect(80.0, 76.0, 60.0, 48.0, 33.0, 40.0));
    let img = dir.path().join("scene.png");
    scene.image.save_png(&img).unwrap();
    let p = pipeline();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    p.run(&img, &a).unwrap();
    p.run(&img, &b).unwrap();
    for name in ARTIFACTS {
        assert_eq!(read(&a.join(name)), read(&b.join(name)), "{name} differs");
    }
}

#[test]
fn dataset_failures_stay_per_image() {
    let dir = tempfile::tempdir().unwrap();
    let scene = one_rect_scene(160, rect(80.0, 80.0, 60.0, 40.0, 0.0, 200.0));
    let (img, mask) = (dir.path().join("s.png"), dir.path().join("s_mask.png"));
    scene.image.save_png(&img).unwrap();
    scene.truth.write_png(&mask).unwrap();
    let entries = vec![
        ManifestEntry {
            name: "good".into(),
            image: img.clone(),
            mask: mask.clone(),
        },
        ManifestEntry {
            name: "missing".into(),
            image: dir.path().join("nope.png"),
            mask,
        },
    ];
    let results = pipeline().evaluate_dataset(&entries).unwrap();
    assert!(results[0].outcome.is_ok());
    assert!(results[1].outcome.is_err());
    let csv = format_report(&results);
    assert!(csv.lines().nth(2).unwrap().starts_with("missing,nan"));
}
