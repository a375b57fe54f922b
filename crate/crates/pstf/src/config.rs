//! Job settings from flags, TOML files or sidecars.

use std::fs;
use std::path::{Path, PathBuf};

use pstf_core::directional::ModelParams;
use pstf_core::estimators::{parse_model_kind, EstimatorConfig, EstimatorKind};
use pstf_core::pathtracer::PathConfig;
use pstf_core::scene::Scene;
use serde::{Deserialize, Serialize};

use crate::error::{Error, IoContext};
use crate::scene_format::parse_scene;
use crate::sidecar::Sidecar;

/// Every setting a job can take. Keys match the long command-line flags;
/// unset keys fall back to defaults in [`JobConfig::resolve`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct JobConfig {
    pub scene: Option<PathBuf>,
    /// Scene text used instead of reading `scene`; sidecars carry it.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scene_text: Option<String>,
    pub estimator: Option<String>,
    pub model: Option<String>,
    pub spp: Option<u32>,
    pub seconds: Option<f64>,
    pub spp_per_frame: Option<u32>,
    pub warmup: Option<u32>,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub reference: Option<PathBuf>,
    pub deterministic: Option<bool>,
    pub threads: Option<usize>,
    pub resolution: Option<[u32; 2]>,
    pub ppm: Option<bool>,
    pub max_depth: Option<u32>,
    pub russian_roulette: Option<bool>,
}

impl JobConfig {
    /// Reads a TOML job file, or the `job` table of a JSON sidecar.
    pub fn load(path: &Path) -> Result<JobConfig, Error> {
        let text = fs::read_to_string(path).io_context(path)?;
        let bad = |reason: String| Error::Format { path: path.to_path_buf(), reason };
        if path.extension().is_some_and(|e| e == "json") {
            let sidecar: Sidecar = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
            Ok(sidecar.job)
        } else {
            toml::from_str(&text).map_err(|e| bad(e.to_string()))
        }
    }

    /// Values set in `over` replace those in `self`. A budget in `over`
    /// replaces both budget keys.
    pub fn merge(mut self, over: JobConfig) -> JobConfig {
        macro_rules! take {
            ($($f:ident),*) => { $( if over.$f.is_some() { self.$f = over.$f; } )* };
        }
        if over.spp.is_some() || over.seconds.is_some() {
            self.spp = None;
            self.seconds = None;
        }
        if over.scene.is_some() {
            self.scene_text = None;
        }
        take!(
            scene,
            scene_text,
            estimator,
            model,
            spp,
            seconds,
            spp_per_frame,
            warmup,
            beta,
            gamma,
            seed,
            out,
            reference,
            deterministic,
            threads,
            resolution,
            ppm,
            max_depth,
            russian_roulette
        );
        self
    }

    pub fn resolve(&self) -> Result<Job, Error> {
        let cfg = |m: &str| Error::Config(m.to_string());
        let estimator: EstimatorKind = match &self.estimator {
            Some(s) => s.parse().map_err(|_| cfg(&format!("unknown estimator `{s}`")))?,
            None => EstimatorKind::PtNee,
        };
        let model = match &self.model {
            Some(s) => parse_model_kind(s).map_err(|_| cfg(&format!("unknown model `{s}`")))?,
            None => ModelParams::default().kind,
        };
        let budget = match (self.spp, self.seconds) {
            (Some(_), Some(_)) => return Err(cfg("set either spp or seconds, not both")),
            (Some(0), None) => return Err(cfg("spp must be positive")),
            (Some(n), None) => Budget::Spp(n),
            (None, Some(t)) if t > 0.0 && t.is_finite() => Budget::Seconds(t),
            (None, Some(_)) => return Err(cfg("seconds must be positive")),
            (None, None) => return Err(cfg("a budget is required: spp or seconds")),
        };
        let spp_per_frame = self.spp_per_frame.unwrap_or(1);
        if spp_per_frame == 0 {
            return Err(cfg("spp-per-frame must be positive"));
        }
        if let Budget::Spp(n) = budget {
            if n % spp_per_frame != 0 {
                return Err(cfg("spp must be a multiple of spp-per-frame"));
            }
        }
        let mut estimator_config = EstimatorConfig::new(estimator);
        estimator_config.model = ModelParams::with_kind(model);
        estimator_config.warmup_frames = self.warmup.unwrap_or(0);
        if let Some(b) = self.beta {
            estimator_config.beta = b;
        }
        if let Some(g) = self.gamma {
            estimator_config.gamma = g;
        }
        estimator_config.validate().map_err(cfg)?;
        if self.threads == Some(0) {
            return Err(cfg("threads must be positive"));
        }
        if let Some([w, h]) = self.resolution {
            if w == 0 || h == 0 {
                return Err(cfg("resolution must be at least 1x1"));
            }
        }
        if self.scene.is_none() && self.scene_text.is_none() {
            return Err(cfg("no scene given"));
        }
        let mut path = PathConfig::default();
        if let Some(d) = self.max_depth {
            if d == 0 {
                return Err(cfg("max-depth must be positive"));
            }
            path.max_depth = d;
        }
        if let Some(rr) = self.russian_roulette {
            path.russian_roulette = rr;
        }
        Ok(Job {
            config: self.clone(),
            estimator: estimator_config,
            path,
            budget,
            spp_per_frame,
            seed: self.seed.unwrap_or(1),
            deterministic: self.deterministic.unwrap_or(false),
            threads: self.threads,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Budget {
    /// Samples per pixel after warm-up.
    Spp(u32),
    Seconds(f64),
}

/// A validated job.
#[derive(Clone, Debug)]
pub struct Job {
    pub config: JobConfig,
    pub estimator: EstimatorConfig,
    pub path: PathConfig,
    pub budget: Budget,
    pub spp_per_frame: u32,
    pub seed: u64,
    pub deterministic: bool,
    pub threads: Option<usize>,
}

impl Job {
    /// Scene text, from the inline copy or the file.
    pub fn scene_text(&self) -> Result<String, Error> {
        match (&self.config.scene_text, &self.config.scene) {
            (Some(t), _) => Ok(t.clone()),
            (None, Some(p)) => fs::read_to_string(p).io_context(p),
            (None, None) => Err(Error::Config("no scene given".into())),
        }
    }

    /// Parses the scene and applies the resolution override.
    pub fn load_scene(&self) -> Result<(Scene, String), Error> {
        let text = self.scene_text()?;
        let path = self.config.scene.clone().unwrap_or_else(|| PathBuf::from("<inline>"));
        let scene = parse_scene(&text).map_err(|error| Error::Scene { path, error })?;
        let scene = match self.config.resolution {
            Some([w, h]) => scene.with_resolution(w, h),
            None => scene,
        };
        Ok((scene, text))
    }

    pub fn out(&self, default: &str) -> PathBuf {
        self.config.out.clone().unwrap_or_else(|| PathBuf::from(default))
    }
}
