use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pstf::commands;
use pstf::config::JobConfig;
use pstf::core::estimators::EstimatorKind;
use pstf::Error;

/// Path tracer with progressive spatio-temporal filtering of the light field.
#[derive(Parser)]
#[command(name = "pstf", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render an image and its metadata sidecar.
    Render {
        #[command(flatten)]
        job: JobArgs,
        /// Also write a tone-mapped PPM next to the PFM.
        #[arg(long)]
        ppm: bool,
        /// Directory for binary field and model snapshots after the run.
        #[arg(long)]
        snapshot: Option<PathBuf>,
    },
    /// Brute-force PT+NEE reference with a per-pixel variance image.
    Reference {
        #[command(flatten)]
        job: JobArgs,
    },
    /// RMSE between two PFM images over all channels.
    Compare {
        a: PathBuf,
        b: PathBuf,
        /// Write the signed difference a - b as a PFM.
        #[arg(long)]
        diff: Option<PathBuf>,
    },
    /// RMSE-versus-time CSV for several estimators and seeds.
    Convergence {
        #[command(flatten)]
        job: JobArgs,
        /// Comma-separated estimator names.
        #[arg(long, value_delimiter = ',', default_value = "pt-nee")]
        estimators: Vec<String>,
        /// Comma-separated seeds; defaults to --seed.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        /// Comma-separated frame counts after warm-up.
        #[arg(long, value_delimiter = ',', required = true)]
        checkpoints: Vec<u32>,
    },
}

#[derive(Args)]
struct JobArgs {
    /// TOML job file or JSON sidecar; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    scene: Option<PathBuf>,
    /// pt, pt-nee, is, cv, is-cv or b.
    #[arg(long)]
    estimator: Option<String>,
    /// grid, kdtree or gmm.
    #[arg(long)]
    model: Option<String>,
    /// Samples per pixel after warm-up.
    #[arg(long, conflicts_with = "seconds")]
    spp: Option<u32>,
    /// Time budget in seconds, warm-up included.
    #[arg(long)]
    seconds: Option<f64>,
    #[arg(long)]
    spp_per_frame: Option<u32>,
    /// Warm-up frames rendered before accumulation starts.
    #[arg(long)]
    warmup: Option<u32>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output image (PFM) or CSV for `convergence`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Result independent of the worker count.
    #[arg(long)]
    deterministic: bool,
    #[arg(long)]
    threads: Option<usize>,
    /// Override the camera resolution, as WIDTHxHEIGHT.
    #[arg(long, value_parser = parse_resolution)]
    resolution: Option<[u32; 2]>,
    #[arg(long)]
    max_depth: Option<u32>,
    /// Enable or disable Russian roulette (default on).
    #[arg(long)]
    russian_roulette: Option<bool>,
}

fn parse_resolution(s: &str) -> Result<[u32; 2], String> {
    let (w, h) = s.split_once(['x', 'X']).ok_or("expected WIDTHxHEIGHT")?;
    let p = |v: &str| v.trim().parse::<u32>().map_err(|e| e.to_string());
    Ok([p(w)?, p(h)?])
}

impl JobArgs {
    fn load(self, ppm: bool) -> Result<JobConfig, Error> {
        let base = match &self.config {
            Some(p) => JobConfig::load(p)?,
            None => JobConfig::default(),
        };
        Ok(base.merge(JobConfig {
            scene: self.scene,
            scene_text: None,
            estimator: self.estimator,
            model: self.model,
            spp: self.spp,
            seconds: self.seconds,
            spp_per_frame: self.spp_per_frame,
            warmup: self.warmup,
            beta: self.beta,
            gamma: self.gamma,
            seed: self.seed,
            out: self.out,
            reference: self.reference,
            deterministic: self.deterministic.then_some(true),
            threads: self.threads,
            resolution: self.resolution,
            ppm: ppm.then_some(true),
            max_depth: self.max_depth,
            russian_roulette: self.russian_roulette,
        }))
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Render { job, ppm, snapshot } => {
            let job = job.load(ppm)?.resolve()?;
            let s = commands::render(&job, snapshot.as_deref())?;
            print!("{} frames, {} spp, {:.1} ms, {} threads", s.frames, s.spp, s.wall_ms, s.threads);
            match s.rmse {
                Some(e) => println!(", rmse {e}"),
                None => println!(),
            }
        }
        Command::Reference { job } => {
            let job = job.load(false)?.resolve()?;
            let (s, cached) = commands::reference(&job)?;
            if cached {
                println!("reference up to date: {}", s.image);
            } else {
                println!("{} spp, {:.1} ms, {} threads", s.spp, s.wall_ms, s.threads);
            }
        }
        Command::Compare { a, b, diff } => {
            println!("{}", commands::compare_files(&a, &b, diff.as_deref())?);
        }
        Command::Convergence { job, estimators, seeds, checkpoints } => {
            let mut config = job.load(false)?;
            // The CSV goes to --out; the renders themselves write nothing.
            let out = config.out.take().unwrap_or_else(|| PathBuf::from("convergence.csv"));
            if config.spp.is_none() && config.seconds.is_none() {
                config.spp = Some(config.spp_per_frame.unwrap_or(1));
            }
            let job = config.resolve()?;
            let kinds = estimators
                .iter()
                .map(|e| e.parse::<EstimatorKind>().map_err(|_| Error::Config(format!("unknown estimator `{e}`"))))
                .collect::<Result<Vec<_>, _>>()?;
            let seeds = if seeds.is_empty() { vec![job.seed] } else { seeds };
            let rows = commands::convergence(&job, &kinds, &seeds, &checkpoints)?;
            pstf::image::write_file(&out, commands::convergence_csv(&rows).as_bytes())?;
            println!("{} rows written to {}", rows.len(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("pstf: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
