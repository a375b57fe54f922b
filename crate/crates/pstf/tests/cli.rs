use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pstf::commands::{self, CSV_HEADER};
use pstf::config::JobConfig;
use pstf::core::math::Rgb;
use pstf::core::sampling::{Rng, UniformSource};
use pstf::image::Image;
use pstf::sidecar::Sidecar;
use pstf::snapshot;

fn scene(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenes").join(name)
}

fn pstf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pstf")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let o = pstf(args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    o
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn furnace_job_within_five_percent() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("f.pfm");
    let furnace = scene("furnace.scene");
    // Without roulette every pixel must land within 5%.
    ok(&[
        "render",
        "--scene",
        s(&furnace),
        "--resolution",
        "16x16",
        "--spp",
        "64",
        "--russian-roulette",
        "false",
        "--out",
        s(&out),
    ]);
    let img = Image::read_pfm(&out).unwrap();
    assert_eq!((img.width, img.height), (16, 16));
    for p in &img.pixels {
        assert!((p.r - 2.0).abs() < 0.1, "pixel {p:?}");
    }
    // With roulette the per-pixel spread at 64 spp is about 4%; the image
    // mean (16384 paths) must still be within 5%.
    ok(&["render", "--scene", s(&furnace), "--resolution", "16x16", "--spp", "64", "--out", s(&out)]);
    let mean = Image::read_pfm(&out).unwrap().average();
    assert!((mean.r - 2.0).abs() < 0.1, "{mean:?}");
}

#[test]
fn deterministic_mode_is_bit_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let door = scene("cornell-door.scene");
    let mut files = Vec::new();
    for (i, threads) in ["1", "3", "3", "2"].iter().enumerate() {
        let out = dir.path().join(format!("d{i}.pfm"));
        ok(&[
            "render",
            "--scene",
            s(&door),
            "--resolution",
            "12x10",
            "--estimator",
            "is-cv",
            "--warmup",
            "3",
            "--spp",
            "6",
            "--seed",
            "11",
            "--deterministic",
            "--threads",
            threads,
            "--out",
            s(&out),
        ]);
        files.push(fs::read(&out).unwrap());
    }
    assert!(files.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn sidecar_reproduces_the_image() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.pfm");
    let b = dir.path().join("b.pfm");
    ok(&[
        "render",
        "--scene",
        s(&scene("cornell.scene")),
        "--resolution",
        "8x8",
        "--estimator",
        "cv",
        "--warmup",
        "2",
        "--seconds",
        "0.3",
        "--seed",
        "5",
        "--deterministic",
        "--ppm",
        "--out",
        s(&a),
    ]);
    assert!(dir.path().join("a.ppm").exists());
    let side = Sidecar::read(&a.with_extension("json")).unwrap();
    assert_eq!(side.seed, 5);
    assert_eq!(side.job.spp, Some(side.frames));
    assert!(side.job.scene_text.is_some());
    // The scene file is not needed any more.
    let copy = dir.path().join("a.json");
    ok(&["render", "--config", s(&copy), "--out", s(&b)]);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("c.pfm");
    let toml = dir.path().join("job.toml");
    fs::write(
        &toml,
        format!(
            "scene = {:?}\nestimator = \"pt\"\nspp = 8\nseed = 2\nresolution = [4, 4]\nout = {:?}\n",
            s(&scene("furnace.scene")),
            s(&out)
        ),
    )
    .unwrap();
    ok(&["render", "--config", s(&toml), "--spp", "2", "--seed", "9"]);
    let side = Sidecar::read(&out.with_extension("json")).unwrap();
    assert_eq!((side.spp, side.seed), (2, 9));
    assert_eq!(side.job.estimator.as_deref(), Some("pt"));
}

#[test]
fn errors_have_distinct_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.scene");
    let o = pstf(&["render", "--scene", s(&missing), "--spp", "1"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains(s(&missing)));

    let bad = dir.path().join("bad.scene");
    fs::write(&bad, "camera {\n  fov\n}\n").unwrap();
    let o = pstf(&["render", "--scene", s(&bad), "--spp", "1"]);
    assert_eq!(o.status.code(), Some(4));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("bad.scene") && err.contains("line"), "{err}");

    let o = pstf(&["render", "--scene", s(&scene("furnace.scene")), "--spp", "1", "--estimator", "mlt"]);
    assert_eq!(o.status.code(), Some(5));

    let o = pstf(&["render", "--scene", s(&scene("furnace.scene")), "--spp", "1", "--seconds", "1"]);
    assert_eq!(o.status.code(), Some(2));

    let junk = dir.path().join("junk.pfm");
    fs::write(&junk, b"P6\n1 1\n255\n\0\0\0").unwrap();
    let o = pstf(&["compare", s(&junk), s(&junk)]);
    assert_eq!(o.status.code(), Some(6));

    let a = dir.path().join("a.pfm");
    let b = dir.path().join("b.pfm");
    Image::new(2, 1, vec![Rgb::BLACK; 2]).write_pfm(&a).unwrap();
    Image::new(1, 2, vec![Rgb::BLACK; 2]).write_pfm(&b).unwrap();
    assert_eq!(pstf(&["compare", s(&a), s(&b)]).status.code(), Some(7));

    let o = pstf(&[
        "convergence",
        "--scene",
        s(&scene("furnace.scene")),
        "--checkpoints",
        "1",
        "--reference",
        s(&dir.path().join("none.pfm")),
    ]);
    assert_eq!(o.status.code(), Some(8));
}

#[test]
fn compare_examples() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, d) = (dir.path().join("a.pfm"), dir.path().join("b.pfm"), dir.path().join("d.pfm"));
    let mut rng = Rng::new(3, 3);
    let pa: Vec<Rgb> = (0..30).map(|_| Rgb::new(rng.next_f64(), rng.next_f64() * 4.0, -rng.next_f64())).collect();
    let pb: Vec<Rgb> = (0..30).map(|_| Rgb::new(rng.next_f64(), rng.next_f64(), rng.next_f64() * 9.0)).collect();
    Image::new(6, 5, pa).write_pfm(&a).unwrap();
    Image::new(6, 5, pb).write_pfm(&b).unwrap();

    let parse = |o: Output| String::from_utf8(o.stdout).unwrap().trim().parse::<f64>().unwrap();
    assert_eq!(parse(ok(&["compare", s(&a), s(&a)])), 0.0);

    // Independent definition over the stored f32 values.
    let (ia, ib) = (Image::read_pfm(&a).unwrap(), Image::read_pfm(&b).unwrap());
    let mut sq = 0.0;
    let mut n = 0.0;
    for (x, y) in ia.pixels.iter().zip(&ib.pixels) {
        for (u, v) in [(x.r, y.r), (x.g, y.g), (x.b, y.b)] {
            sq += (u - v).powi(2);
            n += 1.0;
        }
    }
    let expected = (sq / n).sqrt();
    let got = parse(ok(&["compare", s(&a), s(&b), "--diff", s(&d)]));
    assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
    let diff = Image::read_pfm(&d).unwrap();
    assert_eq!(diff.pixels[4].g, (ia.pixels[4].g - ib.pixels[4].g) as f32 as f64);

    let plus: Vec<Rgb> = ia.pixels.iter().map(|p| *p + Rgb::WHITE).collect();
    Image::new(6, 5, plus).write_pfm(&b).unwrap();
    assert!((parse(ok(&["compare", s(&b), s(&a)])) - 1.0).abs() < 1e-6);
}

#[test]
fn reference_of_black_scene_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let black = dir.path().join("black.scene");
    fs::write(
        &black,
        "camera {\n origin 0 0 -3\n look_at 0 0 0\n up 0 1 0\n fov 40\n resolution 4 4\n}\n\
         options {\n allow_no_emitters true\n}\nmaterial m {\n diffuse 0.5 0.5 0.5\n}\n\
         sphere {\n center 0 0 0\n radius 1\n material m\n}\n",
    )
    .unwrap();
    let out = dir.path().join("r.pfm");
    ok(&["reference", "--scene", s(&black), "--spp", "64", "--out", s(&out)]);
    assert!(Image::read_pfm(&out).unwrap().pixels.iter().all(|p| *p == Rgb::BLACK));
    let var = Image::read_pfm(&commands::variance_path(&out)).unwrap();
    assert!(var.pixels.iter().all(|p| *p == Rgb::BLACK));
}

#[test]
fn reference_is_cached() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.pfm");
    let cornell = scene("cornell.scene");
    let args = ["reference", "--scene", s(&cornell), "--resolution", "6x6", "--spp", "32", "--out", s(&out)];
    ok(&args);
    let first = (fs::read(&out).unwrap(), fs::read(out.with_extension("json")).unwrap());
    let o = ok(&args);
    assert!(String::from_utf8_lossy(&o.stdout).contains("up to date"));
    let second = (fs::read(&out).unwrap(), fs::read(out.with_extension("json")).unwrap());
    assert_eq!(first, second);
    // A different sample count recomputes.
    let o = ok(&["reference", "--scene", s(&cornell), "--resolution", "6x6", "--spp", "16", "--out", s(&out)]);
    assert!(!String::from_utf8_lossy(&o.stdout).contains("up to date"));
}

#[test]
fn high_spp_reference_has_small_standard_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.pfm");
    let job = JobConfig {
        scene: Some(scene("furnace.scene")),
        spp: Some(100_000),
        out: Some(out.clone()),
        ..JobConfig::default()
    }
    .resolve()
    .unwrap();
    commands::reference(&job).unwrap();
    let mean = Image::read_pfm(&out).unwrap();
    let var = Image::read_pfm(&commands::variance_path(&out)).unwrap();
    assert_eq!(mean.pixels.len(), 64);
    for (m, v) in mean.pixels.iter().zip(&var.pixels) {
        let se = v.r.sqrt() / m.r;
        assert!(se < 0.003, "relative standard error {se}");
        assert!((m.r - 2.0).abs() < 4.0 * v.r.sqrt() + 1e-6, "mean {}", m.r);
    }
}

#[test]
fn convergence_csv() {
    let dir = tempfile::tempdir().unwrap();
    let reference = dir.path().join("ref.pfm");
    Image::new(8, 8, vec![Rgb::splat(2.0); 64]).write_pfm(&reference).unwrap();
    let csv = dir.path().join("c.csv");
    ok(&[
        "convergence",
        "--scene",
        s(&scene("furnace.scene")),
        "--reference",
        s(&reference),
        "--checkpoints",
        "3",
        "--out",
        s(&csv),
    ]);
    let text = fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with(CSV_HEADER));
    let rows: Vec<&str> = text[CSV_HEADER.len()..].lines().collect();
    assert_eq!(rows.len(), 1);
    let cols: Vec<&str> = rows[0].split(',').collect();
    assert_eq!(&cols[..3], ["pt-nee", "1", "3"]);
    assert!(cols[4].parse::<f64>().unwrap() > 0.0);

    // Median RMSE over ten seeds falls at every checkpoint.
    let checks = [1u32, 4, 16, 64];
    ok(&[
        "convergence",
        "--scene",
        s(&scene("furnace.scene")),
        "--reference",
        s(&reference),
        "--checkpoints",
        "1,4,16,64",
        "--seeds",
        "1,2,3,4,5,6,7,8,9,10",
        "--out",
        s(&csv),
    ]);
    let text = fs::read_to_string(&csv).unwrap();
    let mut medians = Vec::new();
    for c in checks {
        let mut v: Vec<f64> = text
            .lines()
            .skip(2)
            .map(|l| l.split(',').collect::<Vec<_>>())
            .filter(|r| r[2] == c.to_string())
            .map(|r| r[4].parse().unwrap())
            .collect();
        assert_eq!(v.len(), 10);
        v.sort_by(f64::total_cmp);
        medians.push(0.5 * (v[4] + v[5]));
    }
    assert!(medians.windows(2).all(|w| w[1] < w[0]), "{medians:?}");
}

#[test]
fn snapshots_from_the_command_line() {
    let dir = tempfile::tempdir().unwrap();
    let snap = dir.path().join("snap");
    ok(&[
        "render",
        "--scene",
        s(&scene("cornell.scene")),
        "--resolution",
        "8x8",
        "--estimator",
        "is",
        "--model",
        "gmm",
        "--spp",
        "4",
        "--snapshot",
        s(&snap),
        "--out",
        s(&dir.path().join("x.pfm")),
    ]);
    for f in ["lo.field", "lo_minus_e.field", "continuation.field"] {
        let snap = snapshot::read_field(&fs::read(snap.join(f)).unwrap()).unwrap();
        assert!(!snap.cells.is_empty());
    }
    let models = snapshot::read_models(&fs::read(snap.join("models.bin")).unwrap()).unwrap();
    assert!(!models.is_empty());
}
