//! Run configuration: line-oriented `key = value` files with CLI-style
//! overrides. Defaults match the reference experiment constants; unknown
//! keys and out-of-range values are rejected with the offending key named.

use std::path::{Path, PathBuf};

use crate::agent_dqn::Hyperparams;
use crate::baseline::BaselineParams;
use crate::error::{io_err, Error, Result};
use crate::grid_env::EnvOpts;

/// Which method(s) an experiment runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MethodSel {
    Dqn,
    Supervised,
    Both,
}

impl MethodSel {
    pub fn includes_dqn(self) -> bool {
        matches!(self, MethodSel::Dqn | MethodSel::Both)
    }

    pub fn includes_supervised(self) -> bool {
        matches!(self, MethodSel::Supervised | MethodSel::Both)
    }
}

/// Fully-resolved experiment configuration.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub gamma: f64,
    pub eps_init: f64,
    pub eps_decay: f64,
    pub eps_min: f64,
    pub lr: f64,
    pub batch: usize,
    pub steps_per_episode: usize,
    pub episodes: usize,
    pub memory: usize,
    pub seed: u64,
    pub per_step_eps_decay: bool,

    pub baseline_epochs: usize,
    pub baseline_lr: f64,
    pub baseline_batch: usize,

    pub block_size: usize,
    pub scale: usize,
    pub overlap_threshold: usize,
    pub window: usize,

    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
    pub method: MethodSel,
}

impl Default for RunConfig {
    fn default() -> Self {
        let hp = Hyperparams::default();
        let bp = BaselineParams::default();
        RunConfig {
            gamma: hp.gamma,
            eps_init: hp.eps_init,
            eps_decay: hp.eps_decay,
            eps_min: hp.eps_min,
            lr: hp.lr,
            batch: hp.batch,
            steps_per_episode: hp.steps_per_episode,
            episodes: hp.episodes,
            memory: hp.memory,
            seed: hp.seed,
            per_step_eps_decay: false,
            baseline_epochs: bp.epochs,
            baseline_lr: bp.lr,
            baseline_batch: bp.batch,
            block_size: 60,
            scale: 1,
            overlap_threshold: 1,
            window: 20,
            data_dir: PathBuf::from("data"),
            out_dir: PathBuf::from("out"),
            method: MethodSel::Both,
        }
    }
}

impl RunConfig {
    /// Parse a config file, then apply `(key, value)` overrides in order
    /// (e.g. from CLI flags, which take precedence over the file).
    pub fn load(path: Option<&Path>, overrides: &[(String, String)]) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        if let Some(path) = path {
            let text = std::fs::read_to_string(path).map_err(io_err(path))?;
            for (ln, raw) in text.lines().enumerate() {
                let line = raw.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let Some((key, value)) = line.split_once('=') else {
                    return Err(Error::Config(format!(
                        "{}:{}: expected `key = value`, got `{raw}`",
                        path.display(),
                        ln + 1
                    )));
                };
                cfg.apply(key.trim(), value.trim()).map_err(|e| {
                    Error::Config(format!("{}:{}: {e}", path.display(), ln + 1))
                })?;
            }
        }
        for (key, value) in overrides {
            cfg.apply(key, value)
                .map_err(|e| Error::Config(format!("flag --{key}: {e}")))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Set one field from its string form. Unknown keys are rejected.
    pub fn apply(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let bad = |what: &str| format!("cannot parse `{value}` as {what} for key `{key}`");
        match key {
            "gamma" => self.gamma = value.parse().map_err(|_| bad("a real"))?,
            "eps_init" => self.eps_init = value.parse().map_err(|_| bad("a real"))?,
            "eps_decay" => self.eps_decay = value.parse().map_err(|_| bad("a real"))?,
            "eps_min" => self.eps_min = value.parse().map_err(|_| bad("a real"))?,
            "lr" => self.lr = value.parse().map_err(|_| bad("a real"))?,
            "batch" => self.batch = value.parse().map_err(|_| bad("an integer"))?,
            "steps_per_episode" => {
                self.steps_per_episode = value.parse().map_err(|_| bad("an integer"))?
            }
            "episodes" => self.episodes = value.parse().map_err(|_| bad("an integer"))?,
            "memory" => self.memory = value.parse().map_err(|_| bad("an integer"))?,
            "seed" => self.seed = value.parse().map_err(|_| bad("an integer"))?,
            "per_step_eps_decay" => {
                self.per_step_eps_decay = value.parse().map_err(|_| bad("a bool"))?
            }
            "baseline_epochs" => {
                self.baseline_epochs = value.parse().map_err(|_| bad("an integer"))?
            }
            "baseline_lr" => self.baseline_lr = value.parse().map_err(|_| bad("a real"))?,
            "baseline_batch" => {
                self.baseline_batch = value.parse().map_err(|_| bad("an integer"))?
            }
            "block_size" => self.block_size = value.parse().map_err(|_| bad("an integer"))?,
            "scale" => self.scale = value.parse().map_err(|_| bad("an integer"))?,
            "overlap_threshold" => {
                self.overlap_threshold = value.parse().map_err(|_| bad("an integer"))?
            }
            "window" => self.window = value.parse().map_err(|_| bad("an integer"))?,
            "data_dir" | "data" => self.data_dir = PathBuf::from(value),
            "out_dir" | "out" => self.out_dir = PathBuf::from(value),
            "method" => {
                self.method = match value {
                    "dqn" => MethodSel::Dqn,
                    "supervised" => MethodSel::Supervised,
                    "both" => MethodSel::Both,
                    _ => return Err(format!(
                        "key `method` must be one of dqn|supervised|both, got `{value}`"
                    )),
                }
            }
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.hyperparams().validate()?;
        let range = |ok: bool, key: &str, why: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::Config(format!("key `{key}` out of range: {why}")))
            }
        };
        range(self.scale >= 1, "scale", "must be >= 1")?;
        range(self.block_size >= 1, "block_size", "must be >= 1")?;
        range(
            self.block_size % self.scale == 0,
            "scale",
            "must divide block_size",
        )?;
        range(self.overlap_threshold >= 1, "overlap_threshold", "must be >= 1")?;
        range(self.window >= 2, "window", "must be >= 2")?;
        range(self.baseline_epochs >= 1, "baseline_epochs", "must be >= 1")?;
        range(self.baseline_batch >= 1, "baseline_batch", "must be >= 1")?;
        range(self.baseline_lr > 0.0, "baseline_lr", "must be positive")?;
        Ok(())
    }

    pub fn hyperparams(&self) -> Hyperparams {
        Hyperparams {
            gamma: self.gamma,
            eps_init: self.eps_init,
            eps_decay: self.eps_decay,
            eps_min: self.eps_min,
            lr: self.lr,
            batch: self.batch,
            steps_per_episode: self.steps_per_episode,
            episodes: self.episodes,
            memory: self.memory,
            seed: self.seed,
            per_step_eps_decay: self.per_step_eps_decay,
        }
    }

    pub fn baseline_params(&self) -> BaselineParams {
        BaselineParams {
            epochs: self.baseline_epochs,
            lr: self.baseline_lr,
            batch: self.baseline_batch,
            seed: self.seed,
        }
    }

    pub fn env_opts(&self) -> EnvOpts {
        EnvOpts {
            overlap_threshold: self.overlap_threshold,
            scale: self.scale,
        }
    }

    /// Canonical `key = value` rendering (stable field order), echoed into
    /// reports so runs are self-describing.
    pub fn render(&self) -> String {
        format!(
            "gamma = {}\neps_init = {}\neps_decay = {}\neps_min = {}\nlr = {}\nbatch = {}\n\
             steps_per_episode = {}\nepisodes = {}\nmemory = {}\nseed = {}\nper_step_eps_decay = {}\n\
             baseline_epochs = {}\nbaseline_lr = {}\nbaseline_batch = {}\nblock_size = {}\nscale = {}\n\
             overlap_threshold = {}\nwindow = {}\ndata_dir = {}\nout_dir = {}\nmethod = {}\n",
            self.gamma,
            self.eps_init,
            self.eps_decay,
            self.eps_min,
            self.lr,
            self.batch,
            self.steps_per_episode,
            self.episodes,
            self.memory,
            self.seed,
            self.per_step_eps_decay,
            self.baseline_epochs,
            self.baseline_lr,
            self.baseline_batch,
            self.block_size,
            self.scale,
            self.overlap_threshold,
            self.window,
            self.data_dir.display(),
            self.out_dir.display(),
            match self.method {
                MethodSel::Dqn => "dqn",
                MethodSel::Supervised => "supervised",
                MethodSel::Both => "both",
            },
        )
    }
}
