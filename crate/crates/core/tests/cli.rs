use std::fs;
use std::path::Path;

use xplore::cli::run_command;
use xplore::data::{read_images, ImageSet};
use xplore::montage::{encode_montage, to_byte};

fn run(args: &[&str]) -> (i32, String, String) {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let mut argv = vec!["xplore"];
    argv.extend_from_slice(args);
    let code = run_command(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_string()
}

fn ok(args: &[&str]) -> String {
    let (code, out, err) = run(args);
    assert_eq!(code, 0, "{args:?}: {err}");
    out
}

#[test]
fn synth_features_cluster_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["synth", "--spec", "6x20", "--size", "16", "--seed", "2", "--out", &p(d, "im.xim")]);
    ok(&["features", "--images", &p(d, "im.xim"), "--pca-dim", "16", "--out", &p(d, "f.xfv")]);
    let out = ok(&[
        "cluster", "--features", &p(d, "f.xfv"), "--k", "6", "--seed", "1", "--images", &p(d, "im.xim"),
        "--out", &p(d, "c.xcm"),
    ]);
    assert!(out.starts_with("k = 6,"), "{out}");
    let nmi: f64 = out.split("NMI ").nth(1).unwrap().split_whitespace().next().unwrap().parse().unwrap();
    assert!(nmi > 0.8, "{out}");

    let out = ok(&["cluster", "--features", &p(d, "f.xfv"), "--out", &p(d, "c50.xcm")]);
    assert!(out.starts_with("k = 50,"), "{out}");

    let out = ok(&["inspect-clusters", "--images", &p(d, "im.xim"), "--clusters", &p(d, "c.xcm"), "--out-dir", &p(d, "")]);
    assert!(out.lines().count() >= 6, "{out}");
    assert!(d.join("cluster-005.ppm").exists());
}

#[test]
fn synth_artifacts_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    for name in ["a", "b"] {
        ok(&["synth", "--spec", "3x4", "--size", "8", "--seed", "9", "--out", &p(d, &format!("{name}.xim"))]);
        ok(&["features", "--images", &p(d, &format!("{name}.xim")), "--out", &p(d, &format!("{name}.xfv"))]);
    }
    assert_eq!(fs::read(d.join("a.xim")).unwrap(), fs::read(d.join("b.xim")).unwrap());
    assert_eq!(fs::read(d.join("a.xfv")).unwrap(), fs::read(d.join("b.xfv")).unwrap());
}

#[test]
fn train_translate_report() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["synth", "--spec", "red-circle:4,blue-square:4", "--size", "16", "--seed", "1", "--out", &p(d, "im.xim")]);
    ok(&["features", "--images", &p(d, "im.xim"), "--pca-dim", "4", "--out", &p(d, "f.xfv")]);
    ok(&["cluster", "--features", &p(d, "f.xfv"), "--k", "2", "--seed", "1", "--out", &p(d, "c.xcm")]);
    ok(&[
        "train", "--images", &p(d, "im.xim"), "--clusters", &p(d, "c.xcm"), "--out-dir", &p(d, "run"), "--steps", "2",
        "--seed", "3",
    ]);
    let ck = p(d, "run/final.xck");
    assert_eq!(fs::read_to_string(d.join("run/metrics.tsv")).unwrap().lines().count(), 2);

    let (code, _, err) = run(&["translate", "--checkpoint", &ck, "--images", &p(d, "im.xim"), "--cluster", "99", "--out", &p(d, "t.xim")]);
    assert_eq!(code, 1);
    assert!(err.contains("cluster out of range"), "{err}");

    ok(&[
        "translate", "--checkpoint", &ck, "--images", &p(d, "im.xim"), "--cluster", "1", "--out", &p(d, "t.xim"),
        "--montage", &p(d, "t.ppm"),
    ]);
    let t = read_images(&d.join("t.xim")).unwrap();
    assert_eq!((t.count, t.channels, t.height, t.width), (8, 3, 16, 16));
    assert!(fs::read(d.join("t.ppm")).unwrap().starts_with(b"P6\n128 32\n255\n"));

    let out = ok(&["report", "--metrics", &p(d, "run/metrics.tsv"), "--checkpoint", &ck]);
    assert!(out.contains("steps 1..2") && out.contains("step 2,"), "{out}");

    let (code, _, err) = run(&["report", "--checkpoint", &p(d, "missing.xck")]);
    assert_eq!(code, 1, "{err}");
}

#[test]
fn config_errors_and_seed_override() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = d.join("bad.toml");
    fs::write(&cfg, "seed = 1\n[clustering]\nk = 3\nbogus = 2\n").unwrap();
    let (code, _, err) = run(&["--config", cfg.to_str().unwrap(), "selftest"]);
    assert_eq!(code, 1);
    assert!(err.contains("bogus"), "{err}");

    // The only test that touches the environment; every other synth call passes --seed.
    let good = d.join("good.toml");
    fs::write(&good, "seed = 5\n[synth]\nspec = \"2x3\"\nsize = 8\n").unwrap();
    let cfgp = good.to_str().unwrap();
    ok(&["--config", cfgp, "synth", "--out", &p(d, "cfg.xim")]);
    ok(&["synth", "--spec", "2x3", "--size", "8", "--seed", "5", "--out", &p(d, "flag5.xim")]);
    ok(&["synth", "--spec", "2x3", "--size", "8", "--seed", "6", "--out", &p(d, "flag6.xim")]);
    std::env::set_var("XPLORE_SEED", "6");
    ok(&["--config", cfgp, "synth", "--out", &p(d, "env.xim")]);
    std::env::set_var("XPLORE_SEED", "abc");
    let (code, _, _) = run(&["--config", cfgp, "synth", "--out", &p(d, "x.xim")]);
    std::env::remove_var("XPLORE_SEED");
    assert_eq!(code, 1);
    let read = |n: &str| fs::read(d.join(n)).unwrap();
    assert_eq!(read("cfg.xim"), read("flag5.xim"));
    assert_eq!(read("env.xim"), read("flag6.xim"));
    assert_ne!(read("flag5.xim"), read("flag6.xim"));
}

#[test]
fn usage_errors() {
    assert_eq!(run(&["cluster", "--k", "many"]).0, 1);
    assert_eq!(run(&["frobnicate"]).0, 1);
    let (code, out, _) = run(&["cluster", "--help"]);
    assert_eq!(code, 0);
    assert!(out.contains("default: 50"), "{out}");
    let (code, _, err) = run(&["features", "--images", "/nonexistent/x.xim", "--out", "/tmp/never.xfv"]);
    assert_eq!(code, 1, "{err}");
}

#[test]
fn selftest_passes() {
    let (code, out, _) = run(&["selftest"]);
    assert_eq!(code, 0, "{out}");
    assert!(out.lines().all(|l| l.starts_with("PASS")), "{out}");
}

fn solid(values: &[f32], channels: usize, h: usize, w: usize) -> ImageSet {
    let mut pixels = Vec::new();
    for &v in values {
        pixels.extend(std::iter::repeat_n(v, channels * h * w));
    }
    ImageSet { count: values.len(), channels, height: h, width: w, pixels, truth_labels: None }
}

#[test]
fn montage_layout_and_byte_map() {
    assert_eq!((to_byte(-1.0), to_byte(1.0), to_byte(0.0)), (0, 255, 128));
    assert_eq!((to_byte(-7.0), to_byte(3.0)), (0, 255));
    let imgs = solid(&[-1.0, 1.0, 1.0, -1.0], 3, 3, 5);
    let buf = encode_montage(&imgs, 2, 2).unwrap();
    let header = b"P6\n10 6\n255\n";
    assert!(buf.starts_with(header));
    let body = &buf[header.len()..];
    assert_eq!(body.len(), 10 * 6 * 3);
    assert_eq!((body[0], body[5 * 3], body[3 * 10 * 3], body[(3 * 10 + 5) * 3]), (0, 255, 255, 0));

    let gray = solid(&[1.0], 1, 2, 2);
    let buf = encode_montage(&gray, 1, 1).unwrap();
    assert!(buf.ends_with(&[255; 12]));

    assert!(encode_montage(&solid(&[], 3, 2, 2), 1, 1).is_err());
    assert!(encode_montage(&imgs, 1, 3).is_err());
    assert!(encode_montage(&solid(&[0.0], 2, 2, 2), 1, 1).is_err());
}
