//! Declarative pipeline configuration: one TOML file, unknown keys rejected,
//! all referenced paths checked at startup. The only environment variable
//! that changes behavior is the judge/rephrase credential named in
//! `api_key_env`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::boxlang::ParseMode;
use crate::eval::EndpointConfig;
use crate::lift::LiftParams;

use super::PipelineError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalTask {
    Detection,
    Grounding,
    Qa,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputsConfig {
    /// COCO-style annotation JSON consumed by `lift`.
    pub annotations: Option<PathBuf>,
    /// Directory of per-image depth rasters (`<stem>.pfm` or `<stem>.png`).
    pub depth_dir: Option<PathBuf>,
    /// Directory of per-annotation binary PNG masks (`<annotation_id>.png`).
    pub mask_dir: Option<PathBuf>,
    /// Repository JSONL consumed by `qagen` and referenced by `eval`.
    pub repo: Option<PathBuf>,
    /// Dataset tag recorded in provenance.
    pub dataset: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub task: Option<EvalTask>,
    pub predictions: Option<PathBuf>,
    pub references: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    /// Worker threads; 0 means one per core. Outputs are byte-identical at
    /// any worker count.
    pub workers: usize,
    pub parse_mode: ParseMode,
    pub lift: LiftParams,
    /// Optional question-text overrides for the builtin template catalog.
    pub template_catalog: Option<PathBuf>,
    pub judge: Option<EndpointConfig>,
    pub rephrase: Option<EndpointConfig>,
    pub inputs: InputsConfig,
    pub eval: EvalConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 0,
            workers: 0,
            parse_mode: ParseMode::Strict,
            lift: LiftParams::default(),
            template_catalog: None,
            judge: None,
            rephrase: None,
            inputs: InputsConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Input(format!("cannot read {}: {e}", path.display())))?;
        let config: Config = toml::from_str(&text)
            .map_err(|e| PipelineError::Input(format!("bad config {}: {e}", path.display())))?;
        config.lift.validate().map_err(|e| {
            PipelineError::Input(format!("bad lift params in {}: {e}", path.display()))
        })?;
        config.check_paths()?;
        Ok(config)
    }

    fn check_paths(&self) -> Result<(), PipelineError> {
        let entries = [
            ("inputs.annotations", &self.inputs.annotations),
            ("inputs.depth_dir", &self.inputs.depth_dir),
            ("inputs.mask_dir", &self.inputs.mask_dir),
            ("inputs.repo", &self.inputs.repo),
            ("template_catalog", &self.template_catalog),
            ("eval.predictions", &self.eval.predictions),
            ("eval.references", &self.eval.references),
        ];
        for (name, path) in entries {
            if let Some(p) = path {
                if !p.exists() {
                    return Err(PipelineError::Input(format!(
                        "{name} path {} does not exist",
                        p.display()
                    )));
                }
            }
        }
        Ok(())
    }

    fn require(opt: &Option<PathBuf>, name: &str, command: &str) -> Result<PathBuf, PipelineError> {
        opt.clone().ok_or_else(|| {
            PipelineError::Input(format!("`{command}` requires {name} in the config"))
        })
    }

    pub fn annotations_for_lift(&self) -> Result<PathBuf, PipelineError> {
        Self::require(&self.inputs.annotations, "inputs.annotations", "lift")
    }

    pub fn depth_dir_for_lift(&self) -> Result<PathBuf, PipelineError> {
        Self::require(&self.inputs.depth_dir, "inputs.depth_dir", "lift")
    }

    pub fn repo_for_qagen(&self) -> Result<PathBuf, PipelineError> {
        Self::require(&self.inputs.repo, "inputs.repo", "qagen")
    }
}
