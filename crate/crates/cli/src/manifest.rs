use std::path::{Path, PathBuf};

use doa_core::control::Variant;

use crate::config::{ExperimentConfig, DEFAULT_EXPERIMENT};
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Tune,
    Evaluate,
    Compare,
    Replay,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Tune => "tune",
            Command::Evaluate => "evaluate",
            Command::Compare => "compare",
            Command::Replay => "replay",
        }
    }
}

/// One invocation of the tool.
#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub command: Command,
    /// `None` selects the built-in default experiment.
    pub config_path: Option<PathBuf>,
    pub output_dir: PathBuf,
    /// Replaces `[woa] seed`.
    pub seed: Option<u64>,
    pub variant: Option<Variant>,
    pub controllers: Vec<PathBuf>,
}

impl RunManifest {
    pub fn new(command: Command, output_dir: impl Into<PathBuf>) -> Self {
        Self {
            command,
            config_path: None,
            output_dir: output_dir.into(),
            seed: None,
            variant: None,
            controllers: Vec::new(),
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        let want = match self.command {
            Command::Tune | Command::Replay => 0,
            Command::Evaluate => 1,
            Command::Compare => 2,
        };
        if self.controllers.len() != want {
            return Err(CliError::Usage(format!(
                "{} takes {want} --controller file(s), got {}",
                self.command.name(),
                self.controllers.len()
            )));
        }
        if self.command == Command::Tune && self.variant.is_none() {
            return Err(CliError::Usage("tune needs --variant".into()));
        }
        if let Some(p) = &self.config_path {
            require_file(p)?;
        }
        for p in &self.controllers {
            require_file(p)?;
        }
        if self.output_dir.exists() && !self.output_dir.is_dir() {
            return Err(CliError::Usage(format!("{} is not a directory", self.output_dir.display())));
        }
        if self.command == Command::Replay && !self.output_dir.is_dir() {
            return Err(CliError::Usage(format!("{} does not exist", self.output_dir.display())));
        }
        Ok(())
    }

    /// The experiment, with the seed override applied.
    pub fn experiment(&self) -> CliResult<ExperimentConfig> {
        let mut exp = match &self.config_path {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::parse(DEFAULT_EXPERIMENT, Path::new("<built-in experiment>"))?,
        };
        if let Some(seed) = self.seed {
            exp.woa.seed = seed;
        }
        Ok(exp)
    }
}

fn require_file(p: &Path) -> CliResult<()> {
    if p.is_file() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("{} does not exist", p.display())))
    }
}
