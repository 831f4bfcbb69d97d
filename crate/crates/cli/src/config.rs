//! Run configuration.
//!
//! A config file holds one `key = value` pair per line. Blank lines and
//! lines starting with `#` are ignored. Keys containing a dot are run
//! metadata written by [`crate::manifest`] and are skipped here, so a
//! manifest can be passed back in as a config file. Later assignments win;
//! command-line flags are applied after the file.
//!
//! | key                 | default       | used by                          |
//! |---------------------|---------------|----------------------------------|
//! | `seed`              | 0             | everything                       |
//! | `input`             |               | preprocess (check-in file)       |
//! | `delimiter`         | `,`           | preprocess                       |
//! | `min_daily_visits`  | 9             | preprocess                       |
//! | `utc_offset_hours`  | 0             | preprocess                       |
//! | `split`             | `7:1:2`       | preprocess, synth                |
//! | `synth_locations`   | 100           | synth                            |
//! | `synth_users`       | 50            | synth                            |
//! | `synth_days`        | 10            | synth                            |
//! | `synth_kernel`      | `nearest:4`   | synth (`uniform`, `identity`)    |
//! | `synth_stay_prob`   | 0.7           | synth                            |
//! | `synth_grid_cols`   | 10            | synth                            |
//! | `data`              |               | dataset directory                |
//! | `graphs`            |               | graph directory                  |
//! | `checkpoint`        |               | generate                         |
//! | `init`              |               | train (skip generator pretraining) |
//! | `real`, `generated` |               | evaluate                         |
//! | `locations`         |               | evaluate                         |
//! | `grid_cell`         | 0.01          | evaluate visit grids, in degrees |
//! | `reports`           |               | report: `name=path;name=path`    |
//! | `k`                 | 20            | build-graphs, ablate             |
//! | `graph_mode`        | `weighted`    | build-graphs                     |
//! | `hidden`            | 32            | embedding and GRU width          |
//! | `layers`            | 1             | attention layers (1 or 2)        |
//! | `heads`             | 1             | attention heads (1, 2 or 4)      |
//! | `channels`          | `stg,sdg,ttg` | graph channels                   |
//! | `edge_mode`         | `vanilla`     | how the model reads edge weights |
//! | `beta`              | 1             | dwell damping                    |
//! | `dwell`             | true          | dwell head on or off             |
//! | `dropout`           | 0.6           | pretraining dropout              |
//! | `epochs`            | 50            | adversarial epochs               |
//! | `pretrain_epochs`   | 20            | generator likelihood epochs      |
//! | `d_pretrain_epochs` | 5             | discriminator pretraining epochs |
//! | `batch`             | 32            |                                  |
//! | `lr`                | 0.01          |                                  |
//! | `optimizer`         | `adam`        | `adam` or `sgd`                  |
//! | `rollouts`          | 16            | completions per reward           |
//! | `g_steps`, `d_steps`| 1, 1          | updates per adversarial epoch    |
//! | `val_samples`       | 200           | trajectories per validation pass |
//! | `baseline`          | true          | moving-average reward baseline   |
//! | `baseline_decay`    | 0.9           |                                  |
//! | `count`             | 100           | generate, markov, ablate         |
//! | `day`               | `2012-04-02`  | date stamped on generated output |
//! | `suite`             | `all`         | ablate                           |

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::NaiveDate;
use mobsim_core::mobdata::{KernelSpec, SynthConfig};
use mobsim_core::tensor::optim::OptimizerKind;
use mobsim_core::{Channel, DiscriminatorConfig, EdgeMode, GeneratorConfig, TrainConfig, SLOTS_PER_DAY};

use crate::CliError;

/// Which ablation variants to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    /// Base, each channel dropped, the other edge mode, no dwell.
    All,
    Channels,
    Edge,
    Dwell,
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Suite::All => "all",
            Suite::Channels => "channels",
            Suite::Edge => "edge",
            Suite::Dwell => "dwell",
        })
    }
}

impl FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "all" => Ok(Suite::All),
            "channels" => Ok(Suite::Channels),
            "edge" => Ok(Suite::Edge),
            "dwell" => Ok(Suite::Dwell),
            other => Err(format!("unknown suite `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,

    pub input: Option<PathBuf>,
    pub delimiter: char,
    pub min_daily_visits: usize,
    pub utc_offset_hours: i64,
    pub split: (u32, u32, u32),

    pub synth_locations: usize,
    pub synth_users: usize,
    pub synth_days: usize,
    pub synth_kernel: String,
    pub synth_stay_prob: f64,
    pub synth_grid_cols: usize,

    pub data: Option<PathBuf>,
    pub graphs: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub init: Option<PathBuf>,
    pub real: Option<PathBuf>,
    pub generated: Option<PathBuf>,
    pub locations: Option<PathBuf>,
    pub reports: Vec<(String, PathBuf)>,
    pub grid_cell: f64,

    pub k: usize,
    pub graph_mode: EdgeMode,

    pub hidden: usize,
    pub layers: usize,
    pub heads: usize,
    pub channels: Vec<Channel>,
    pub edge_mode: EdgeMode,
    pub beta: f64,
    pub dwell: bool,
    pub dropout: f64,

    pub epochs: usize,
    pub pretrain_epochs: usize,
    pub d_pretrain_epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub optimizer: OptimizerKind,
    pub rollouts: usize,
    pub g_steps: usize,
    pub d_steps: usize,
    pub val_samples: usize,
    pub baseline: bool,
    pub baseline_decay: f64,

    pub count: usize,
    pub day: NaiveDate,
    pub suite: Suite,
}

impl Default for RunConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        let model = GeneratorConfig::new(2);
        let synth = SynthConfig::default();
        Self {
            seed: 0,
            input: None,
            delimiter: ',',
            min_daily_visits: 9,
            utc_offset_hours: 0,
            split: (7, 1, 2),
            synth_locations: synth.locations,
            synth_users: synth.users,
            synth_days: synth.days,
            synth_kernel: "nearest:4".into(),
            synth_stay_prob: synth.stay_prob,
            synth_grid_cols: synth.grid_cols,
            data: None,
            graphs: None,
            checkpoint: None,
            init: None,
            real: None,
            generated: None,
            locations: None,
            reports: Vec::new(),
            grid_cell: 0.01,
            k: 20,
            graph_mode: EdgeMode::Weighted,
            hidden: model.hidden_dim,
            layers: model.layers,
            heads: model.heads,
            channels: model.channels,
            edge_mode: model.edge_mode,
            beta: model.beta,
            dwell: model.dwell,
            dropout: model.dropout,
            epochs: train.epochs,
            pretrain_epochs: train.pretrain_epochs,
            d_pretrain_epochs: train.d_pretrain_epochs,
            batch: train.batch_size,
            lr: train.lr,
            optimizer: train.optimizer,
            rollouts: train.rollouts,
            g_steps: train.g_steps,
            d_steps: train.d_steps,
            val_samples: train.val_samples,
            baseline: train.baseline,
            baseline_decay: train.baseline_decay,
            count: 100,
            day: synth.first_day,
            suite: Suite::All,
        }
    }
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T, CliError> {
    v.parse()
        .map_err(|_| CliError::Validation(format!("{key}: cannot parse `{v}`")))
}

fn parse_with<T>(key: &str, v: &str, f: impl FnOnce(&str) -> Result<T, String>) -> Result<T, CliError> {
    f(v).map_err(|e| CliError::Validation(format!("{key}: {e}")))
}

fn path(v: &str) -> Option<PathBuf> {
    (!v.is_empty()).then(|| PathBuf::from(v))
}

fn show_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

fn parse_channels(v: &str) -> Result<Vec<Channel>, String> {
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(str::parse).collect()
}

fn parse_reports(v: &str) -> Result<Vec<(String, PathBuf)>, String> {
    v.split(';')
        .filter(|p| !p.trim().is_empty())
        .map(|p| match p.split_once('=') {
            Some((name, file)) if !name.trim().is_empty() && !file.trim().is_empty() => {
                Ok((name.trim().to_string(), PathBuf::from(file.trim())))
            }
            _ => Err(format!("expected name=path, got `{p}`")),
        })
        .collect()
}

fn parse_split(v: &str) -> Result<(u32, u32, u32), String> {
    let parts: Vec<u32> = v
        .split(':')
        .map(|p| p.trim().parse().map_err(|_| format!("bad ratio `{p}`")))
        .collect::<Result<_, _>>()?;
    match parts[..] {
        [a, b, c] => Ok((a, b, c)),
        _ => Err(format!("expected three ratios a:b:c, got `{v}`")),
    }
}

fn parse_delimiter(v: &str) -> Result<char, String> {
    let v = if v == "\\t" { "\t" } else { v };
    let mut chars = v.chars();
    match (chars.next(), chars.next()) {
        (Some(c), None) if c != '\n' && c != '\r' => Ok(c),
        _ => Err(format!("delimiter must be one character, got `{v}`")),
    }
}

impl RunConfig {
    /// Defaults, then `file` if given, then `overrides` in order.
    pub fn load(file: Option<&Path>, overrides: &[(&str, String)]) -> Result<Self, CliError> {
        let mut cfg = Self::default();
        if let Some(file) = file {
            let text = std::fs::read_to_string(file)
                .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", file.display())))?;
            cfg.apply_text(&text)?;
        }
        for (k, v) in overrides {
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<(), CliError> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Validation(format!("config line {}: expected key = value", i + 1)))?;
            let k = k.trim();
            if k.contains('.') {
                continue;
            }
            self.set(k, v.trim())?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<(), CliError> {
        match key {
            "seed" => self.seed = parse(key, v)?,
            "input" => self.input = path(v),
            "delimiter" => self.delimiter = parse_with(key, v, parse_delimiter)?,
            "min_daily_visits" => self.min_daily_visits = parse(key, v)?,
            "utc_offset_hours" => self.utc_offset_hours = parse(key, v)?,
            "split" => self.split = parse_with(key, v, parse_split)?,
            "synth_locations" => self.synth_locations = parse(key, v)?,
            "synth_users" => self.synth_users = parse(key, v)?,
            "synth_days" => self.synth_days = parse(key, v)?,
            "synth_kernel" => self.synth_kernel = v.to_string(),
            "synth_stay_prob" => self.synth_stay_prob = parse(key, v)?,
            "synth_grid_cols" => self.synth_grid_cols = parse(key, v)?,
            "data" => self.data = path(v),
            "graphs" => self.graphs = path(v),
            "checkpoint" => self.checkpoint = path(v),
            "init" => self.init = path(v),
            "real" => self.real = path(v),
            "generated" => self.generated = path(v),
            "locations" => self.locations = path(v),
            "reports" => self.reports = parse_with(key, v, parse_reports)?,
            "grid_cell" => self.grid_cell = parse(key, v)?,
            "k" => self.k = parse(key, v)?,
            "graph_mode" => self.graph_mode = parse_with(key, v, str::parse)?,
            "hidden" => self.hidden = parse(key, v)?,
            "layers" => self.layers = parse(key, v)?,
            "heads" => self.heads = parse(key, v)?,
            "channels" => self.channels = parse_with(key, v, parse_channels)?,
            "edge_mode" => self.edge_mode = parse_with(key, v, str::parse)?,
            "beta" => self.beta = parse(key, v)?,
            "dwell" => self.dwell = parse(key, v)?,
            "dropout" => self.dropout = parse(key, v)?,
            "epochs" => self.epochs = parse(key, v)?,
            "pretrain_epochs" => self.pretrain_epochs = parse(key, v)?,
            "d_pretrain_epochs" => self.d_pretrain_epochs = parse(key, v)?,
            "batch" => self.batch = parse(key, v)?,
            "lr" => self.lr = parse(key, v)?,
            "optimizer" => self.optimizer = parse_with(key, v, str::parse)?,
            "rollouts" => self.rollouts = parse(key, v)?,
            "g_steps" => self.g_steps = parse(key, v)?,
            "d_steps" => self.d_steps = parse(key, v)?,
            "val_samples" => self.val_samples = parse(key, v)?,
            "baseline" => self.baseline = parse(key, v)?,
            "baseline_decay" => self.baseline_decay = parse(key, v)?,
            "count" => self.count = parse(key, v)?,
            "day" => {
                self.day = NaiveDate::parse_from_str(v, "%Y-%m-%d")
                    .map_err(|e| CliError::Validation(format!("day: {e}")))?
            }
            "suite" => self.suite = parse_with(key, v, str::parse)?,
            other => return Err(CliError::Validation(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Every key with its current value, in documentation order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let channels: Vec<&str> = self.channels.iter().map(|c| c.name()).collect();
        let (a, b, c) = self.split;
        let reports: Vec<String> = self
            .reports
            .iter()
            .map(|(n, p)| format!("{n}={}", p.display()))
            .collect();
        let reports = reports.join(";");
        let delimiter = if self.delimiter == '\t' { "\\t".to_string() } else { self.delimiter.to_string() };
        vec![
            ("seed", self.seed.to_string()),
            ("input", show_path(&self.input)),
            ("delimiter", delimiter),
            ("min_daily_visits", self.min_daily_visits.to_string()),
            ("utc_offset_hours", self.utc_offset_hours.to_string()),
            ("split", format!("{a}:{b}:{c}")),
            ("synth_locations", self.synth_locations.to_string()),
            ("synth_users", self.synth_users.to_string()),
            ("synth_days", self.synth_days.to_string()),
            ("synth_kernel", self.synth_kernel.clone()),
            ("synth_stay_prob", format!("{:?}", self.synth_stay_prob)),
            ("synth_grid_cols", self.synth_grid_cols.to_string()),
            ("data", show_path(&self.data)),
            ("graphs", show_path(&self.graphs)),
            ("checkpoint", show_path(&self.checkpoint)),
            ("init", show_path(&self.init)),
            ("real", show_path(&self.real)),
            ("generated", show_path(&self.generated)),
            ("locations", show_path(&self.locations)),
            ("reports", reports),
            ("grid_cell", format!("{:?}", self.grid_cell)),
            ("k", self.k.to_string()),
            ("graph_mode", self.graph_mode.to_string()),
            ("hidden", self.hidden.to_string()),
            ("layers", self.layers.to_string()),
            ("heads", self.heads.to_string()),
            ("channels", channels.join(",")),
            ("edge_mode", self.edge_mode.to_string()),
            ("beta", format!("{:?}", self.beta)),
            ("dwell", self.dwell.to_string()),
            ("dropout", format!("{:?}", self.dropout)),
            ("epochs", self.epochs.to_string()),
            ("pretrain_epochs", self.pretrain_epochs.to_string()),
            ("d_pretrain_epochs", self.d_pretrain_epochs.to_string()),
            ("batch", self.batch.to_string()),
            ("lr", format!("{:?}", self.lr)),
            ("optimizer", self.optimizer.to_string()),
            ("rollouts", self.rollouts.to_string()),
            ("g_steps", self.g_steps.to_string()),
            ("d_steps", self.d_steps.to_string()),
            ("val_samples", self.val_samples.to_string()),
            ("baseline", self.baseline.to_string()),
            ("baseline_decay", format!("{:?}", self.baseline_decay)),
            ("count", self.count.to_string()),
            ("day", self.day.format("%Y-%m-%d").to_string()),
            ("suite", self.suite.to_string()),
        ]
    }

    pub fn to_text(&self) -> String {
        self.entries()
            .into_iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }

    pub fn generator_config(&self, num_locations: usize) -> GeneratorConfig {
        GeneratorConfig {
            num_locations,
            embed_dim: self.hidden,
            hidden_dim: self.hidden,
            layers: self.layers,
            heads: self.heads,
            channels: self.channels.clone(),
            edge_mode: self.edge_mode,
            beta: self.beta,
            dwell: self.dwell,
            dropout: self.dropout,
        }
    }

    pub fn discriminator_config(&self, num_locations: usize) -> DiscriminatorConfig {
        DiscriminatorConfig {
            num_locations,
            embed_dim: self.hidden,
            hidden_dim: self.hidden,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            pretrain_epochs: self.pretrain_epochs,
            d_pretrain_epochs: self.d_pretrain_epochs,
            batch_size: self.batch,
            lr: self.lr,
            optimizer: self.optimizer,
            rollouts: self.rollouts,
            g_steps: self.g_steps,
            d_steps: self.d_steps,
            val_samples: self.val_samples,
            baseline: self.baseline,
            baseline_decay: self.baseline_decay,
            seq_len: SLOTS_PER_DAY,
            seed: self.seed,
        }
    }

    pub fn synth_config(&self) -> Result<SynthConfig, CliError> {
        let kernel: KernelSpec = self
            .synth_kernel
            .parse()
            .map_err(|e| CliError::Validation(format!("synth_kernel: {e}")))?;
        Ok(SynthConfig {
            locations: self.synth_locations,
            users: self.synth_users,
            days: self.synth_days,
            kernel,
            stay_prob: self.synth_stay_prob,
            seed: self.seed,
            grid_cols: self.synth_grid_cols,
            ..SynthConfig::default()
        })
    }

    /// Checks every option that can be judged without reading data.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Validation(m));
        self.generator_config(2)
            .validate()
            .map_err(|e| CliError::Validation(e.to_string()))?;
        self.train_config()
            .validate()
            .map_err(|e| CliError::Validation(e.to_string()))?;
        self.synth_config()?;
        let (a, b, c) = self.split;
        if a == 0 || b == 0 || c == 0 {
            return bad("split ratios must be positive".into());
        }
        if self.k == 0 {
            return bad("k must be positive".into());
        }
        if self.count == 0 {
            return bad("count must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.synth_stay_prob) {
            return bad(format!("synth_stay_prob {} outside [0, 1]", self.synth_stay_prob));
        }
        if !(self.grid_cell > 0.0 && self.grid_cell.is_finite()) {
            return bad("grid_cell must be positive".into());
        }
        if !(-24..=24).contains(&self.utc_offset_hours) {
            return bad("utc_offset_hours must lie in [-24, 24]".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_documented_settings() {
        let c = RunConfig::default();
        assert_eq!((c.hidden, c.epochs, c.batch, c.lr, c.dropout), (32, 50, 32, 0.01, 0.6));
        assert_eq!((c.layers, c.heads, c.beta, c.k, c.rollouts), (1, 1, 1.0, 20, 16));
        assert_eq!(c.channels, Channel::ALL.to_vec());
        assert!(c.validate().is_ok());
    }

    #[test]
    fn text_round_trip() {
        let mut c = RunConfig::default();
        c.set("channels", "ttg").unwrap();
        c.set("delimiter", "\\t").unwrap();
        c.set("lr", "0.1").unwrap();
        c.set("data", "some/dir").unwrap();
        c.set("reports", "a=x/r.txt;b=y/r.txt").unwrap();
        let mut back = RunConfig::default();
        back.apply_text(&c.to_text()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("run.cfg");
        std::fs::write(&file, "# comment\nepochs = 7\nlr=0.5\n").unwrap();
        let c = RunConfig::load(Some(&file), &[("epochs", "3".into())]).unwrap();
        assert_eq!((c.epochs, c.lr), (3, 0.5));
    }

    #[test]
    fn dotted_keys_are_skipped() {
        let mut c = RunConfig::default();
        c.apply_text("run.command=generate\ndigest.x=abc\nseed=4\n").unwrap();
        assert_eq!(c.seed, 4);
    }

    #[test]
    fn empty_channels_fail_validation() {
        let mut c = RunConfig::default();
        c.set("channels", "").unwrap();
        assert!(matches!(c.validate(), Err(CliError::Validation(_))));
    }

    #[test]
    fn unknown_key_is_rejected() {
        assert!(RunConfig::default().set("epoch", "3").is_err());
    }

    #[test]
    fn bad_values_are_rejected() {
        let mut c = RunConfig::default();
        assert!(c.set("heads", "two").is_err());
        assert!(c.set("split", "7:1").is_err());
        c.set("heads", "3").unwrap();
        assert!(c.validate().is_err());
    }
}
