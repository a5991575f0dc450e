use std::path::{Path, PathBuf};

use anyhow::Context;
use chrono::{DateTime, Utc};
use firewatch_core::Execution;
use serde::Serialize;

use crate::manifest::{InputDigest, RunManifest};
use crate::Failure;

pub const MANIFEST_FILE: &str = "run_manifest.json";

/// The output directory. Files are only ever created through [`OutDir::file`],
/// which keeps them inside it and lists them in the manifest.
#[derive(Debug)]
pub struct OutDir {
    root: PathBuf,
    written: Vec<String>,
}

impl OutDir {
    fn create(root: &Path) -> anyhow::Result<Self> {
        std::fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        Ok(Self {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Path for `name`, a plain relative path under the root.
    pub fn file(&mut self, name: &str) -> PathBuf {
        assert!(
            Path::new(name).components().all(|c| matches!(c, std::path::Component::Normal(_))),
            "output name {name:?} escapes the output directory"
        );
        if !self.written.iter().any(|w| w == name) {
            self.written.push(name.to_string());
        }
        self.root.join(name)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> anyhow::Result<()> {
        let path = self.file(name);
        let mut body = serde_json::to_string_pretty(value)?;
        body.push('\n');
        std::fs::write(&path, body).with_context(|| format!("writing {}", path.display()))
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> anyhow::Result<()> {
        let path = self.file(name);
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    }
}

/// Bookkeeping for one invocation.
#[derive(Debug)]
pub struct Run {
    command: String,
    argv: Vec<String>,
    started_at: DateTime<Utc>,
    seed: Option<u64>,
    config_file: Option<PathBuf>,
    inputs: Vec<InputDigest>,
    out: Option<OutDir>,
}

impl Run {
    pub fn new(command: &str, argv: Vec<String>) -> Self {
        Self {
            command: command.to_string(),
            argv,
            started_at: Utc::now(),
            seed: None,
            config_file: None,
            inputs: Vec::new(),
            out: None,
        }
    }

    pub(crate) fn config_file(&mut self, path: &Path) {
        self.config_file = Some(path.to_path_buf());
    }

    pub fn seed(&mut self, seed: u64) {
        self.seed = Some(seed);
    }

    /// Records an input file; a missing or unreadable file is a data error.
    pub fn input(&mut self, path: &Path) -> Result<(), Failure> {
        let digest = InputDigest::of(path).with_context(|| format!("reading {}", path.display()))?;
        self.inputs.push(digest);
        Ok(())
    }

    pub fn create_out(&mut self, root: &Path) -> Result<&mut OutDir, Failure> {
        self.out = Some(OutDir::create(root)?);
        Ok(self.out.as_mut().unwrap())
    }

    pub fn out(&mut self) -> &mut OutDir {
        self.out.as_mut().expect("create_out is called before writing")
    }

    /// Writes the run manifest when there is an output directory.
    pub(crate) fn finish(self, exit_code: i32, error: Option<String>) -> anyhow::Result<()> {
        let Some(mut out) = self.out else { return Ok(()) };
        let config_file = match &self.config_file {
            Some(p) => Some(InputDigest::of(p)?),
            None => None,
        };
        let manifest = RunManifest {
            tool: "firewatch".to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: self.command,
            argv: self.argv,
            seed: self.seed,
            config_file,
            inputs: self.inputs,
            outputs: out.written.clone(),
            parallel: Execution::available().is_parallel(),
            started_at: self.started_at,
            finished_at: Utc::now(),
            exit_code,
            error,
        };
        out.write_json(MANIFEST_FILE, &manifest)
    }
}
