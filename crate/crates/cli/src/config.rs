//! Task, model and training-config resolution, and run directories.
//!
//! Training settings are layered: built-in defaults, then `--config`, then
//! `--set key=value` overrides, then dedicated flags such as `--seed`.

use std::path::{Path, PathBuf};

use homotopy_gym::ppo::TrainConfig;
use homotopy_gym::rigid_body::{parse_model, ArticulatedModel, DEFAULT_MODEL_TOML};
use homotopy_gym::tasks::{parse_task, MotionTask, BUILTIN_TASKS};
use homotopy_gym::Error;
use serde::Serialize;

use crate::{invalid, Failure, VERSION};

/// Loads a task and returns its source text for the run snapshot.
pub fn load_task(name_or_path: &str) -> Result<(MotionTask, String), Failure> {
    if let Some((_, text)) = BUILTIN_TASKS.iter().find(|(n, _)| *n == name_or_path) {
        return Ok((parse_task(text, &format!("{name_or_path} (bundled)"))?, text.to_string()));
    }
    // unknown names get the bundled-task listing from the library
    let task = MotionTask::load(name_or_path)?;
    let text = std::fs::read_to_string(name_or_path)?;
    Ok((task, text))
}

pub fn load_model(path: Option<&Path>) -> Result<(ArticulatedModel, String), Failure> {
    match path {
        None => Ok((parse_model(DEFAULT_MODEL_TOML, "bundled quadruped")?, DEFAULT_MODEL_TOML.to_string())),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Failure::from(Error::config(p.display().to_string(), e.to_string())))?;
            Ok((parse_model(&text, &p.display().to_string())?, text))
        }
    }
}

fn parse_override(item: &str) -> Result<(String, toml::Value), Failure> {
    let (key, raw) = item.split_once('=').ok_or_else(|| invalid(format!("override {item:?} is not KEY=VALUE")))?;
    let key = key.trim().to_string();
    let raw = raw.trim();
    // bare words are strings, everything else is a TOML literal
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    Ok((key, value))
}

pub fn resolve_train_config(file: Option<&Path>, overrides: &[String]) -> Result<TrainConfig, Failure> {
    let mut table = toml::Table::try_from(TrainConfig::default()).map_err(|e| invalid(e.to_string()))?;
    if let Some(p) = file {
        let name = p.display().to_string();
        let text = std::fs::read_to_string(p).map_err(|e| Failure::from(Error::config(&name, e.to_string())))?;
        let from_file: toml::Table =
            toml::from_str(&text).map_err(|e| Failure::from(Error::config(&name, e.to_string())))?;
        table.extend(from_file);
    }
    for o in overrides {
        let (k, v) = parse_override(o)?;
        table.insert(k, v);
    }
    table
        .try_into()
        .map_err(|e: toml::de::Error| Failure::from(Error::config("training config", e.message().to_string())))
}

pub struct RunDir(PathBuf);

#[derive(Serialize)]
struct RunInfo<'a> {
    command: &'a str,
    version: &'a str,
    seed: u64,
    task: &'a str,
    checkpoint: Option<String>,
}

#[derive(Serialize)]
struct Snapshot<'a> {
    run: RunInfo<'a>,
    train: &'a TrainConfig,
}

impl RunDir {
    /// Creates `path`, refusing to reuse a directory that has content.
    pub fn create(path: &Path) -> Result<Self, Failure> {
        if path.exists() {
            let used = std::fs::read_dir(path)?.next().is_some();
            if used {
                return Err(invalid(format!("output directory {} already has content", path.display())));
            }
        } else {
            std::fs::create_dir_all(path)?;
        }
        Ok(RunDir(path.to_path_buf()))
    }

    pub fn path(&self) -> &Path {
        &self.0
    }

    /// Everything needed to repeat the run: resolved settings, version,
    /// seed, and copies of the task and model files.
    pub fn write_snapshot(
        &self,
        command: &str,
        cfg: &TrainConfig,
        task_name: &str,
        task_text: &str,
        model_text: &str,
        checkpoint: Option<&Path>,
    ) -> Result<(), Failure> {
        let snap = Snapshot {
            run: RunInfo {
                command,
                version: VERSION,
                seed: cfg.seed,
                task: task_name,
                checkpoint: checkpoint.map(|p| p.display().to_string()),
            },
            train: cfg,
        };
        let text = toml::to_string(&snap).map_err(|e| invalid(e.to_string()))?;
        std::fs::write(self.0.join("run.toml"), text)?;
        std::fs::write(self.0.join("task.toml"), task_text)?;
        std::fs::write(self.0.join("model.toml"), model_text)?;
        Ok(())
    }
}
