//! JSON metadata written next to every image.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::JobConfig;
use crate::error::{Error, IoContext};
use crate::image::write_file;

pub const SIDECAR_FORMAT: &str = "pstf-sidecar/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub format: String,
    pub command: String,
    /// Settings that reproduce the image; the scene text is inlined and the
    /// budget is the sample count actually rendered.
    pub job: JobConfig,
    pub seed: u64,
    pub frames: u32,
    pub warmup_frames: u32,
    pub spp: u64,
    pub wall_ms: f64,
    pub threads: usize,
    pub deterministic: bool,
    /// FNV-1a hash of the scene text.
    pub scene_hash: String,
    pub image: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variance: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rmse: Option<f64>,
    pub version: String,
}

impl Sidecar {
    pub fn read(path: &Path) -> Result<Sidecar, Error> {
        let text = fs::read_to_string(path).io_context(path)?;
        let s: Sidecar = serde_json::from_str(&text)
            .map_err(|e| Error::Format { path: path.to_path_buf(), reason: e.to_string() })?;
        if s.format != SIDECAR_FORMAT {
            return Err(Error::Format { path: path.to_path_buf(), reason: format!("unknown format `{}`", s.format) });
        }
        Ok(s)
    }

    pub fn write(&self, path: &Path) -> Result<(), Error> {
        let mut text = serde_json::to_string_pretty(self).expect("sidecar serializes");
        text.push('\n');
        write_file(path, text.as_bytes())
    }
}

/// `image.pfm` -> `image.json`.
pub fn sidecar_path(image: &Path) -> PathBuf {
    image.with_extension("json")
}

pub fn fnv1a(text: &str) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in text.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{h:016x}")
}
