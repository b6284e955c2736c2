use std::path::Path;
use std::process::{Command, Output};

use geosay::evaluation::REPORT_HEADER;
use geosay::gbi::BuildingMask;
use geosay::GbiMap;

fn geosay(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_geosay"))
        .args(args)
        .current_dir(cwd)
        .env_remove("GEOSAY_JOBS")
        .output()
        .unwrap()
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "status {:?}\nstderr:\n{}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
}

const SCENE: &str = "width = 192\nheight = 192\nchannels = 3\nbackground = 90\nnoise_sigma = 3\n\
rect = 70 80 60 44 20 180\nrect = 140 130 40 50 0 30\n";

const CLUTTER: &str = "width = 192\nheight = 192\nchannels = 3\nbackground = 100\n\
random_rectangles = 2\nmin_size = 30\nmax_size = 50\nclutter = 8\n";

/// Synthesizes two training scenes and fits a prior from them.
fn fit_prior(dir: &Path) {
    std::fs::write(dir.join("clutter.spec"), CLUTTER).unwrap();
    let mut manifest = String::new();
    for seed in ["11", "12"] {
        let d = format!("train{seed}");
        ok(&geosay(
            &["synth", "--spec", "clutter.spec", "--seed", seed, "--out-dir", &d],
            dir,
        ));
        manifest.push_str(&format!("{d}/image.png {d}/mask.png\n"));
    }
    std::fs::write(dir.join("train.txt"), manifest).unwrap();
    ok(&geosay(
        &["fit-prior", "--scenes", "train.txt", "--out", "prior.txt"],
        dir,
    ));
}

#[test]
fn version_flag() {
    let out = geosay(&["--version"], Path::new("."));
    ok(&out);
    assert!(String::from_utf8_lossy(&out.stdout).contains(env!("CARGO_PKG_VERSION")));
}

#[test]
fn full_cli_workflow() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fit_prior(dir);
    std::fs::write(dir.join("scene.spec"), SCENE).unwrap();
    ok(&geosay(
        &["synth", "--spec", "scene.spec", "--seed", "5", "--out-dir", "scene"],
        dir,
    ));
    for f in ["image.png", "mask.png", "corners.txt"] {
        assert!(dir.join("scene").join(f).is_file());
    }

    ok(&geosay(&["detect", "scene/image.png", "--out", "j.txt"], dir));
    assert!(!geosay::read_junctions(&dir.join("j.txt")).unwrap().is_empty());

    ok(&geosay(
        &[
            "gbi",
            "--junctions",
            "j.txt",
            "--prior",
            "prior.txt",
            "--size",
            "192x192",
            "--out-map",
            "m.gbif",
            "--out-mask",
            "m.png",
            "--out-preview",
            "p.png",
        ],
        dir,
    ));
    let map = GbiMap::read_gbif(&dir.join("m.gbif")).unwrap();
    assert_eq!((map.width(), map.height()), (192, 192));
    assert!(BuildingMask::read(&dir.join("m.png")).unwrap().count() > 0);

    std::fs::write(dir.join("eval.txt"), "scene/image.png scene/mask.png\n").unwrap();
    ok(&geosay(
        &[
            "eval",
            "--manifest",
            "eval.txt",
            "--prior",
            "prior.txt",
            "--report",
            "r.csv",
        ],
        dir,
    ));
    let report = std::fs::read_to_string(dir.join("r.csv")).unwrap();
    let lines: Vec<&str> = report.lines().collect();
    assert_eq!(lines[0], REPORT_HEADER);
    assert!(lines[1].starts_with("scene/image.png,"));
    assert!(lines[2].starts_with("__aggregate__,"));

    ok(&geosay(
        &[
            "run",
            "scene/image.png",
            "--prior",
            "prior.txt",
            "--out-dir",
            "runs",
            "--jobs",
            "2",
        ],
        dir,
    ));
    for f in ["junctions.txt", "saliency.txt", "gbi.gbif", "mask.png", "preview.png"] {
        assert!(dir.join("runs/image").join(f).is_file(), "{f} missing");
    }
    // detect+gbi go through the 6-decimal junction file, run does not
    let staged = GbiMap::read_gbif(&dir.join("runs/image/gbi.gbif")).unwrap();
    let differing = map
        .values()
        .iter()
        .zip(staged.values())
        .filter(|(a, b)| (*a - *b).abs() > 1e-3)
        .count();
    assert!(differing < 192 * 192 / 100, "{differing} pixels differ");
}

#[test]
fn run_fails_without_prior_and_on_bad_image() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let out = geosay(&["run", "x.png", "--prior", "absent.txt"], dir);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("prior"));

    fit_prior(dir);
    std::fs::write(dir.join("bad.png"), b"junk").unwrap();
    let out = geosay(
        &[
            "run",
            "train11/image.png",
            "bad.png",
            "--prior",
            "prior.txt",
            "--out-dir",
            "o",
        ],
        dir,
    );
    assert!(!out.status.success(), "exit code must flag the failed image");
    assert!(dir.join("o/image/gbi.gbif").is_file());
    assert!(!dir.join("o/bad/gbi.gbif").exists());
}

#[test]
fn config_file_errors_name_the_key() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    std::fs::write(dir.join("c.cfg"), "p = 0\n").unwrap();
    std::fs::write(dir.join("flat.spec"), "width = 140\nheight = 140\n").unwrap();
    ok(&geosay(&["synth", "--spec", "flat.spec", "--out-dir", "s"], dir));
    let out = geosay(&["--config", "c.cfg", "detect", "s/image.png", "--out", "j.txt"], dir);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("`p`"));

    std::fs::write(dir.join("c.cfg"), "colour = blue\n").unwrap();
    let out = geosay(&["--config", "c.cfg", "detect", "s/image.png", "--out", "j.txt"], dir);
    assert!(String::from_utf8_lossy(&out.stderr).contains("colour"));
}

#[test]
fn quiet_suppresses_info_logs() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    std::fs::write(dir.join("flat.spec"), "width = 140\nheight = 140\n").unwrap();
    ok(&geosay(&["synth", "--spec", "flat.spec", "--out-dir", "s"], dir));
    let loud = geosay(&["detect", "s/image.png", "--out", "j.txt"], dir);
    let quiet = geosay(&["--quiet", "detect", "s/image.png", "--out", "j.txt"], dir);
    ok(&loud);
    ok(&quiet);
    assert!(String::from_utf8_lossy(&loud.stderr).contains("config"));
    assert!(quiet.stderr.is_empty());
}
