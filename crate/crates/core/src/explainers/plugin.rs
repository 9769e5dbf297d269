//! Subprocess protocol for external explainers.
//!
//! The executable is called as `exe MODEL_DIR INPUT_DIR OUTPUT_DIR`.
//! `INPUT_DIR` holds `meta.json` and `sample_%06d.grid`; the plug-in must
//! write one `attr_%06d.grid` per sample into `OUTPUT_DIR` and exit 0.

use std::fs::File;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::dataset::{attribution_file_name, sample_file_name, write_json};
use crate::error::{Error, Result};
use crate::foundation::{read_grid_file, write_grid_file, Grid};

pub const META_FILE: &str = "meta.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PluginMeta {
    pub count: usize,
    pub height: usize,
    pub width: usize,
    pub dataset_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalSpec {
    pub executable: PathBuf,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
}

fn default_timeout() -> f64 {
    600.0
}

/// Directories used for one plug-in invocation.
#[derive(Debug, Clone)]
pub struct PluginDirs {
    pub input: PathBuf,
    pub output: PathBuf,
    pub log: PathBuf,
}

impl PluginDirs {
    pub fn under(root: &Path) -> Self {
        PluginDirs { input: root.join("input"), output: root.join("output"), log: root.join("plugin.log") }
    }
}

/// Writes the inputs, runs the plug-in under its deadline and reads back one
/// attribution per sample.
pub fn run_external_explainer(
    spec: &ExternalSpec,
    model_dir: &Path,
    samples: &[Grid],
    dataset_id: &str,
    dirs: &PluginDirs,
) -> Result<Vec<Grid>> {
    let first = samples.first().ok_or_else(|| Error::Protocol("no samples to explain".into()))?;
    let (height, width) = first.dims();
    for d in [&dirs.input, &dirs.output] {
        if d.exists() {
            std::fs::remove_dir_all(d).map_err(|e| Error::io(format!("clear {}", d.display()), e))?;
        }
        std::fs::create_dir_all(d).map_err(|e| Error::io(format!("create {}", d.display()), e))?;
    }
    for (i, x) in samples.iter().enumerate() {
        write_grid_file(x, &dirs.input.join(sample_file_name(i)))?;
    }
    let meta = PluginMeta { count: samples.len(), height, width, dataset_id: dataset_id.to_string() };
    write_json(&dirs.input.join(META_FILE), &meta)?;

    if !(spec.timeout_secs.is_finite() && spec.timeout_secs > 0.0) {
        return Err(Error::Config(format!("plug-in timeout must be positive, got {}", spec.timeout_secs)));
    }
    let log = File::create(&dirs.log).map_err(|e| Error::io(format!("create {}", dirs.log.display()), e))?;
    let log_out = log.try_clone().map_err(|e| Error::io("duplicate log handle", e))?;
    let mut child = Command::new(&spec.executable)
        .arg(model_dir)
        .arg(&dirs.input)
        .arg(&dirs.output)
        .stdin(Stdio::null())
        .stdout(Stdio::from(log_out))
        .stderr(Stdio::from(log))
        .spawn()
        .map_err(|e| Error::ExplainerFailed { status: "spawn failed".into(), stderr: format!("{}: {e}", spec.executable.display()) })?;

    let deadline = Instant::now() + Duration::from_secs_f64(spec.timeout_secs);
    let status = loop {
        match child.try_wait().map_err(|e| Error::io("wait for plug-in", e))? {
            Some(status) => break status,
            None if Instant::now() >= deadline => {
                let _ = child.kill();
                let _ = child.wait();
                return Err(Error::Timeout(spec.timeout_secs));
            }
            None => std::thread::sleep(Duration::from_millis(5)),
        }
    };
    if !status.success() {
        return Err(Error::ExplainerFailed { status: status.to_string(), stderr: log_tail(&dirs.log) });
    }

    (0..samples.len())
        .map(|i| {
            let path = dirs.output.join(attribution_file_name(i));
            if !path.is_file() {
                return Err(Error::Protocol(format!("plug-in wrote no {}", attribution_file_name(i))));
            }
            let grid = read_grid_file(&path).map_err(|e| Error::Protocol(e.to_string()))?;
            if grid.dims() != (height, width) {
                return Err(Error::Protocol(format!(
                    "{} is {}x{} but the sample is {height}x{width}",
                    attribution_file_name(i),
                    grid.height(),
                    grid.width()
                )));
            }
            Ok(grid)
        })
        .collect()
}

fn log_tail(path: &Path) -> String {
    let text = std::fs::read_to_string(path).unwrap_or_default();
    let start = text.len().saturating_sub(4000);
    let start = (start..text.len()).find(|&i| text.is_char_boundary(i)).unwrap_or(text.len());
    text[start..].trim().to_string()
}
