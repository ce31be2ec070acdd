//! Run directories, manifests and exit-code mapping.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ctbench::image::{write_gray_png, write_image};
use ctbench::{Error, ErrorClass, Image};
use serde::{Deserialize, Serialize};

use crate::args::Command;

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug)]
pub enum CliError {
    Core(Error),
    Usage(String),
    Data(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Usage(m) | CliError::Data(m) => f.write_str(m),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl CliError {
    /// 1 usage, 2 data, 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Core(e) => match e.class() {
                ErrorClass::Usage => 1,
                ErrorClass::Data => 2,
                ErrorClass::Numerical => 3,
            },
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Core(Error::Io { path: path.to_path_buf(), source: e })
}

pub fn absolute(p: &Path) -> CliResult<PathBuf> {
    std::path::absolute(p).map_err(|e| io_err(p, e))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// The invocation with every default materialized; replayable.
    pub invocation: Command,
    /// Resolved configuration objects (geometry, training, suite, ...).
    pub resolved: BTreeMap<String, serde_json::Value>,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<PathBuf>,
    /// Relative to the manifest's directory.
    pub outputs: Vec<PathBuf>,
    pub threads: usize,
    pub deterministic: bool,
    pub duration_s: f64,
}

impl RunManifest {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Core(Error::Sidecar { path: path.to_path_buf(), msg: e.to_string() }))
    }
}

/// Collects outputs, inputs and seeds while a command runs.
pub struct Run {
    pub dir: PathBuf,
    manifest_path: PathBuf,
    started: Instant,
    outputs: Vec<PathBuf>,
    inputs: Vec<PathBuf>,
    seeds: BTreeMap<String, u64>,
    resolved: BTreeMap<String, serde_json::Value>,
}

impl Run {
    /// A run whose outputs live in directory `dir`.
    pub fn in_dir(dir: &Path) -> CliResult<Self> {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        Ok(Self::new(dir.to_path_buf(), dir.join(MANIFEST_NAME)))
    }

    /// A run producing the single file `file`; the manifest sits beside it
    /// as `<stem>.manifest.json`.
    pub fn for_file(file: &Path) -> CliResult<Self> {
        let dir = file.parent().filter(|d| !d.as_os_str().is_empty()).map(Path::to_path_buf).unwrap_or_else(|| ".".into());
        std::fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        let stem = file.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
        let manifest = dir.join(format!("{stem}.manifest.json"));
        Ok(Self::new(dir, manifest))
    }

    fn new(dir: PathBuf, manifest_path: PathBuf) -> Self {
        Self {
            dir,
            manifest_path,
            started: Instant::now(),
            outputs: Vec::new(),
            inputs: Vec::new(),
            seeds: BTreeMap::new(),
            resolved: BTreeMap::new(),
        }
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.dir.join(rel)
    }

    pub fn input(&mut self, p: &Path) {
        if !self.inputs.iter().any(|q| q == p) {
            self.inputs.push(p.to_path_buf());
        }
    }

    pub fn seed(&mut self, name: &str, seed: u64) {
        self.seeds.insert(name.into(), seed);
    }

    pub fn resolve<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<()> {
        self.resolved.insert(name.into(), serde_json::to_value(value)?);
        Ok(())
    }

    /// Records an output written by other means, relative to the run dir.
    pub fn record(&mut self, rel: impl Into<PathBuf>) {
        self.outputs.push(rel.into());
    }

    pub fn image(&mut self, rel: &str, img: &Image) -> CliResult<()> {
        write_image(self.path(rel), img)?;
        self.record_raster(rel);
        Ok(())
    }

    pub fn record_raster(&mut self, rel: &str) {
        self.record(format!("{rel}.f32"));
        self.record(format!("{rel}.json"));
    }

    pub fn text(&mut self, rel: &str, text: &str) -> CliResult<()> {
        let p = self.path(rel);
        if let Some(d) = p.parent() {
            std::fs::create_dir_all(d).map_err(|e| io_err(d, e))?;
        }
        std::fs::write(&p, text).map_err(|e| io_err(&p, e))?;
        self.record(rel);
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, rel: &str, value: &T) -> CliResult<()> {
        let text = serde_json::to_string_pretty(value)?;
        self.text(rel, &(text + "\n"))
    }

    pub fn gray_png(&mut self, rel: &str, w: usize, h: usize, pixels: &[u8]) -> CliResult<()> {
        write_gray_png(self.path(rel), w, h, pixels)?;
        self.record(rel);
        Ok(())
    }

    pub fn finish(self, invocation: &Command, deterministic: bool) -> CliResult<RunManifest> {
        let mut outputs = self.outputs;
        outputs.sort();
        outputs.dedup();
        let manifest = RunManifest {
            tool: "ctbench".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: invocation.name().into(),
            invocation: invocation.clone(),
            resolved: self.resolved,
            seeds: self.seeds,
            inputs: self.inputs,
            outputs,
            threads: rayon::current_num_threads(),
            deterministic,
            duration_s: self.started.elapsed().as_secs_f64(),
        };
        let text = serde_json::to_string_pretty(&manifest)? + "\n";
        std::fs::write(&self.manifest_path, text).map_err(|e| io_err(&self.manifest_path, e))?;
        Ok(manifest)
    }
}
