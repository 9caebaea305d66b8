//! Output persistence: hash-keyed filenames so results from different
//! configurations never collide, every artifact embedding its config hash
//! and the unit system.

use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::json;

pub const UNIT_SYSTEM: &str =
    "natural units: mass = coulomb coupling = 1; times in 1/omega units of the chain";

pub struct OutputSink {
    dir: PathBuf,
    hash: String,
    written: Vec<PathBuf>,
}

impl OutputSink {
    pub fn new(dir: &str, hash: &str) -> Result<Self> {
        let dir = PathBuf::from(dir);
        fs::create_dir_all(&dir)
            .with_context(|| format!("cannot create output directory {}", dir.display()))?;
        Ok(Self { dir, hash: hash.to_string(), written: Vec::new() })
    }

    fn path(&self, stem: &str, ext: &str) -> PathBuf {
        self.dir.join(format!("{stem}_{}.{ext}", self.hash))
    }

    /// Write a JSON report wrapped with provenance fields.
    pub fn write_json<T: Serialize>(&mut self, stem: &str, payload: &T) -> Result<PathBuf> {
        let wrapped = json!({
            "config_hash": self.hash,
            "unit_system": UNIT_SYSTEM,
            "report": payload,
        });
        let path = self.path(stem, "json");
        fs::write(&path, serde_json::to_string_pretty(&wrapped)?)
            .with_context(|| format!("cannot write {}", path.display()))?;
        self.written.push(path.clone());
        Ok(path)
    }

    pub fn write_text(&mut self, stem: &str, ext: &str, body: &str) -> Result<PathBuf> {
        let path = self.path(stem, ext);
        fs::write(&path, body).with_context(|| format!("cannot write {}", path.display()))?;
        self.written.push(path.clone());
        Ok(path)
    }

    /// Stream writer for trajectory dumps.
    pub fn create_file(&mut self, stem: &str, ext: &str) -> Result<(fs::File, PathBuf)> {
        let path = self.path(stem, ext);
        let file =
            fs::File::create(&path).with_context(|| format!("cannot create {}", path.display()))?;
        self.written.push(path.clone());
        Ok((file, path))
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }
}

pub fn announce(paths: &[PathBuf]) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}
