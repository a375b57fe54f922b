//! The `render`, `reference`, `compare` and `convergence` commands.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use pstf_core::estimators::{Engine, EstimatorConfig, EstimatorKind};
use pstf_core::render::rmse;
use pstf_core::scene::Scene;

use crate::config::{Budget, Job, JobConfig};
use crate::driver::{self, Mode};
use crate::error::{Error, IoContext};
use crate::image::{compare, write_file, Image};
use crate::sidecar::{fnv1a, sidecar_path, Sidecar, SIDECAR_FORMAT};
use crate::snapshot;

pub const CSV_HEADER: &str = "# pstf convergence v1\nestimator,seed,frame,wall_ms,rmse\n";

fn mode(job: &Job) -> Mode {
    if job.deterministic {
        Mode::Deterministic
    } else {
        Mode::Fast
    }
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

/// The job as it must be replayed: inline scene, sample budget fixed to
/// what was rendered.
fn replay_config(job: &Job, text: &str, spp: u32) -> JobConfig {
    JobConfig { scene_text: Some(text.to_string()), spp: Some(spp), seconds: None, ..job.config.clone() }
}

fn load_reference(path: &Path, scene: &Scene) -> Result<Image, Error> {
    if !path.exists() {
        return Err(Error::Reference(format!("{} does not exist", path.display())));
    }
    let r = Image::read_pfm(path)?;
    let cam = scene.camera();
    if (r.width, r.height) != (cam.width, cam.height) {
        return Err(Error::DimensionMismatch { a: (cam.width, cam.height), b: (r.width, r.height) });
    }
    Ok(r)
}

/// Renders the job and writes the PFM, an optional PPM, the sidecar and,
/// with `snapshot_dir`, the learned fields and models.
pub fn render(job: &Job, snapshot_dir: Option<&Path>) -> Result<Sidecar, Error> {
    let (scene, text) = job.load_scene()?;
    let out = job.out("render.pfm");
    let reference = match &job.config.reference {
        Some(p) => Some(load_reference(p, &scene)?),
        None => None,
    };
    let pool = driver::thread_pool(job.threads)?;
    let engine = Engine::new(&scene, job.estimator, job.path);
    let r = driver::render(&scene, engine, job.seed, job.spp_per_frame, job.budget, mode(job), &pool, |_| {});
    let cam = scene.camera();
    let image = Image::new(cam.width, cam.height, r.image.means());
    image.write_pfm(&out)?;
    if job.config.ppm.unwrap_or(false) {
        image.write_ppm(&out.with_extension("ppm"))?;
    }
    if let (Some(dir), Some(fields)) = (snapshot_dir, r.engine.fields()) {
        fs::create_dir_all(dir).io_context(dir)?;
        for (name, store) in
            [("lo", &fields.lo), ("lo_minus_e", &fields.lo_minus_e), ("continuation", &fields.continuation)]
        {
            write_file(&dir.join(format!("{name}.field")), &snapshot::write_field(store))?;
        }
        write_file(&dir.join("models.bin"), &snapshot::write_models(&fields.models))?;
    }
    let spp = r.frames * job.spp_per_frame;
    let sidecar = Sidecar {
        format: SIDECAR_FORMAT.into(),
        command: "render".into(),
        job: replay_config(job, &text, spp),
        seed: job.seed,
        frames: r.frames,
        warmup_frames: job.estimator.warmup_frames,
        spp: spp as u64,
        wall_ms: ms(r.wall),
        threads: pool.current_num_threads(),
        deterministic: job.deterministic,
        scene_hash: fnv1a(&text),
        image: file_name(&out),
        variance: None,
        rmse: reference.map(|reference| rmse(&image.pixels, &reference.pixels).unwrap_or(0.0)),
        version: env!("CARGO_PKG_VERSION").into(),
    };
    sidecar.write(&sidecar_path(&out))?;
    Ok(sidecar)
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

/// Path of the per-pixel variance image next to a reference.
pub fn variance_path(reference: &Path) -> PathBuf {
    reference.with_extension("var.pfm")
}

/// Brute-force PT+NEE reference. An existing reference with the same
/// scene, resolution, sample count and seed is reused untouched; the
/// second value reports whether that happened.
pub fn reference(job: &Job) -> Result<(Sidecar, bool), Error> {
    let Budget::Spp(spp) = job.budget else {
        return Err(Error::Config("reference needs an spp budget".into()));
    };
    let (scene, text) = job.load_scene()?;
    let out = job.out("reference.pfm");
    let var = variance_path(&out);
    let side = sidecar_path(&out);
    let cam = scene.camera();
    if out.exists() && var.exists() && side.exists() {
        if let Ok(s) = Sidecar::read(&side) {
            let same = s.command == "reference"
                && s.scene_hash == fnv1a(&text)
                && s.spp == spp as u64
                && s.seed == job.seed
                && (s.job.max_depth, s.job.russian_roulette) == (job.config.max_depth, job.config.russian_roulette)
                && Image::read_pfm(&out).is_ok_and(|i| (i.width, i.height) == (cam.width, cam.height));
            if same {
                return Ok((s, true));
            }
        }
    }
    let pool = driver::thread_pool(job.threads)?;
    let r = driver::reference(&scene, job.path, spp, job.seed, &pool);
    Image::new(cam.width, cam.height, r.mean).write_pfm(&out)?;
    Image::new(cam.width, cam.height, r.variance).write_pfm(&var)?;
    let mut config = replay_config(job, &text, spp);
    config.estimator = Some(EstimatorKind::PtNee.name().into());
    let sidecar = Sidecar {
        format: SIDECAR_FORMAT.into(),
        command: "reference".into(),
        job: config,
        seed: job.seed,
        frames: spp,
        warmup_frames: 0,
        spp: spp as u64,
        wall_ms: ms(r.wall),
        threads: pool.current_num_threads(),
        deterministic: true,
        scene_hash: fnv1a(&text),
        image: file_name(&out),
        variance: Some(file_name(&var)),
        rmse: None,
        version: env!("CARGO_PKG_VERSION").into(),
    };
    sidecar.write(&side)?;
    Ok((sidecar, false))
}

/// RMSE of two PFM files; writes `a - b` to `diff` when given.
pub fn compare_files(a: &Path, b: &Path, diff: Option<&Path>) -> Result<f64, Error> {
    let (e, d) = compare(&Image::read_pfm(a)?, &Image::read_pfm(b)?)?;
    if let Some(p) = diff {
        d.write_pfm(p)?;
    }
    Ok(e)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceRow {
    pub estimator: EstimatorKind,
    pub seed: u64,
    pub frame: u32,
    pub wall_ms: f64,
    pub rmse: f64,
}

/// `base` with a different estimator kind.
pub fn with_kind(base: &EstimatorConfig, kind: EstimatorKind) -> EstimatorConfig {
    EstimatorConfig { kind, learn: kind.uses_fields(), ..*base }
}

/// RMSE against the job's reference after each checkpoint frame for every
/// estimator and seed. Wall time includes warm-up and excludes the RMSE
/// evaluations.
pub fn convergence(
    job: &Job,
    estimators: &[EstimatorKind],
    seeds: &[u64],
    checkpoints: &[u32],
) -> Result<Vec<ConvergenceRow>, Error> {
    let (scene, _) = job.load_scene()?;
    let path = job.config.reference.as_ref().ok_or_else(|| Error::Reference("no reference given".into()))?;
    let reference = load_reference(path, &scene)?;
    let mut checks: Vec<u32> = checkpoints.iter().copied().filter(|&c| c > 0).collect();
    checks.sort_unstable();
    checks.dedup();
    let Some(&last) = checks.last() else {
        return Err(Error::Config("at least one positive checkpoint is required".into()));
    };
    let pool = driver::thread_pool(job.threads)?;
    let mut rows = Vec::new();
    for &kind in estimators {
        for &seed in seeds {
            let engine = Engine::new(&scene, with_kind(&job.estimator, kind), job.path);
            let mut spent = Duration::ZERO;
            let budget = Budget::Spp(last * job.spp_per_frame);
            driver::render(&scene, engine, seed, job.spp_per_frame, budget, mode(job), &pool, |p| {
                if checks.binary_search(&p.frame).is_ok() {
                    let t = std::time::Instant::now();
                    let e = rmse(&p.image.means(), &reference.pixels).unwrap_or(0.0);
                    rows.push(ConvergenceRow {
                        estimator: kind,
                        seed,
                        frame: p.frame,
                        wall_ms: ms(p.elapsed.saturating_sub(spent)),
                        rmse: e,
                    });
                    spent += t.elapsed();
                }
            });
        }
    }
    Ok(rows)
}

pub fn convergence_csv(rows: &[ConvergenceRow]) -> String {
    let mut s = String::from(CSV_HEADER);
    for r in rows {
        let _ = writeln!(s, "{},{},{},{:.3},{}", r.estimator, r.seed, r.frame, r.wall_ms, r.rmse);
    }
    s
}
