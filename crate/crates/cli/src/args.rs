//! Command-line flags. Every flag maps onto a [`RunConfig`] key and is
//! applied after the config file, so flags win.
//!
//! [`RunConfig`]: crate::config::RunConfig

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

type Pairs = Vec<(&'static str, String)>;

macro_rules! push_flags {
    ($out:ident, $s:ident: $($field:ident => $key:literal),* $(,)?) => {
        $(if let Some(v) = &$s.$field {
            $out.push(($key, v.clone()));
        })*
    };
}

#[derive(Debug, Parser)]
#[command(name = "mobsim", version, about = "Graph-augmented adversarial simulation of daily mobility trajectories")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// `key = value` config file; a run manifest also works.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Master seed.
    #[arg(long)]
    pub seed: Option<String>,
}

impl Common {
    fn push(&self, out: &mut Pairs) {
        push_flags!(out, self: seed => "seed");
    }
}

#[derive(Debug, Args)]
pub struct SplitFlag {
    /// Train:valid:test ratios.
    #[arg(long)]
    pub split: Option<String>,
}

#[derive(Debug, Args)]
pub struct DataArg {
    /// Dataset directory written by `preprocess` or `synth`.
    #[arg(long)]
    pub data: Option<String>,
}

#[derive(Debug, Args)]
pub struct GraphsArg {
    /// Graph directory written by `build-graphs`.
    #[arg(long)]
    pub graphs: Option<String>,
}

#[derive(Debug, Args)]
pub struct ModelFlags {
    #[arg(long)]
    pub hidden: Option<String>,
    #[arg(long)]
    pub layers: Option<String>,
    #[arg(long)]
    pub heads: Option<String>,
    /// Comma-separated subset of stg,sdg,ttg.
    #[arg(long)]
    pub channels: Option<String>,
    /// vanilla or weighted.
    #[arg(long)]
    pub edge_mode: Option<String>,
    #[arg(long)]
    pub beta: Option<String>,
    /// Disable the dwell head.
    #[arg(long)]
    pub no_dwell: bool,
    #[arg(long)]
    pub dropout: Option<String>,
}

impl ModelFlags {
    fn push(&self, out: &mut Pairs) {
        push_flags!(out, self:
            hidden => "hidden", layers => "layers", heads => "heads", channels => "channels",
            edge_mode => "edge_mode", beta => "beta", dropout => "dropout");
        if self.no_dwell {
            out.push(("dwell", "false".into()));
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainFlags {
    /// Adversarial epochs.
    #[arg(long)]
    pub epochs: Option<String>,
    #[arg(long)]
    pub pretrain_epochs: Option<String>,
    #[arg(long)]
    pub d_pretrain_epochs: Option<String>,
    #[arg(long)]
    pub batch: Option<String>,
    #[arg(long)]
    pub lr: Option<String>,
    /// adam or sgd.
    #[arg(long)]
    pub optimizer: Option<String>,
    #[arg(long)]
    pub rollouts: Option<String>,
    #[arg(long)]
    pub g_steps: Option<String>,
    #[arg(long)]
    pub d_steps: Option<String>,
    #[arg(long)]
    pub val_samples: Option<String>,
    /// Disable the moving-average reward baseline.
    #[arg(long)]
    pub no_baseline: bool,
    #[arg(long)]
    pub baseline_decay: Option<String>,
}

impl TrainFlags {
    fn push(&self, out: &mut Pairs) {
        push_flags!(out, self:
            epochs => "epochs", pretrain_epochs => "pretrain_epochs",
            d_pretrain_epochs => "d_pretrain_epochs", batch => "batch", lr => "lr",
            optimizer => "optimizer", rollouts => "rollouts", g_steps => "g_steps",
            d_steps => "d_steps", val_samples => "val_samples", baseline_decay => "baseline_decay");
        if self.no_baseline {
            out.push(("baseline", "false".into()));
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Turn a check-in file into hourly train/valid/test trajectories.
    Preprocess {
        #[command(flatten)]
        common: Common,
        /// Check-in records: user,location,lat,lon,timestamp.
        #[arg(long)]
        input: Option<String>,
        #[arg(long)]
        delimiter: Option<String>,
        /// Keep user-days with at least this many raw records.
        #[arg(long)]
        min_daily_visits: Option<String>,
        #[arg(long)]
        utc_offset_hours: Option<String>,
        #[command(flatten)]
        split: SplitFlag,
        /// Output directory.
        #[arg(long, visible_alias = "output")]
        out: PathBuf,
    },
    /// Generate a planted-pattern dataset.
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n_locations: Option<String>,
        #[arg(long)]
        users: Option<String>,
        #[arg(long)]
        days: Option<String>,
        /// uniform, identity or nearest:M.
        #[arg(long)]
        kernel: Option<String>,
        #[arg(long)]
        stay_prob: Option<String>,
        #[arg(long)]
        grid_cols: Option<String>,
        #[command(flatten)]
        split: SplitFlag,
        #[arg(long, visible_alias = "output")]
        out: PathBuf,
    },
    /// Build the STG, SDG and TTG edge lists from the training split.
    BuildGraphs {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArg,
        #[arg(long)]
        k: Option<String>,
        /// Edge mode written to the files: weighted or vanilla.
        #[arg(long)]
        mode: Option<String>,
        #[arg(long, visible_alias = "out-dir")]
        out: PathBuf,
    },
    /// Maximum-likelihood pretraining of the generator.
    Pretrain {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArg,
        #[command(flatten)]
        graphs: GraphsArg,
        #[command(flatten)]
        model: ModelFlags,
        #[command(flatten)]
        train: TrainFlags,
        #[arg(long, visible_alias = "output")]
        out: PathBuf,
    },
    /// Pretraining followed by adversarial training.
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArg,
        #[command(flatten)]
        graphs: GraphsArg,
        /// Start from this generator checkpoint instead of pretraining.
        #[arg(long)]
        init: Option<String>,
        #[command(flatten)]
        model: ModelFlags,
        #[command(flatten)]
        train: TrainFlags,
        #[arg(long, visible_alias = "output")]
        out: PathBuf,
    },
    /// Sample trajectories from a generator checkpoint.
    Generate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<String>,
        #[command(flatten)]
        graphs: GraphsArg,
        #[arg(long)]
        count: Option<String>,
        /// Date written on every generated trajectory.
        #[arg(long)]
        day: Option<String>,
        /// Output trajectory file.
        #[arg(long, visible_alias = "output")]
        out: PathBuf,
    },
    /// Score generated trajectories against real ones.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        real: Option<String>,
        #[arg(long)]
        generated: Option<String>,
        /// Location table.
        #[arg(long)]
        locations: Option<String>,
        /// Visit-grid cell size in degrees.
        #[arg(long)]
        grid_cell: Option<String>,
        /// Output report file.
        #[arg(long, visible_alias = "output")]
        out: PathBuf,
    },
    /// Sample trajectories from a first-order Markov chain fitted to the training split.
    Markov {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArg,
        #[arg(long)]
        count: Option<String>,
        #[arg(long)]
        day: Option<String>,
        #[arg(long, visible_alias = "output")]
        out: PathBuf,
    },
    /// Tabulate several evaluation reports side by side.
    Report {
        #[command(flatten)]
        common: Common,
        /// NAME=REPORT, repeatable.
        #[arg(long = "input")]
        inputs: Vec<String>,
        #[arg(long, visible_alias = "output")]
        out: PathBuf,
    },
    /// Train and score the base model and its ablated variants.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArg,
        /// Reuse these graphs instead of building them from the training split.
        #[command(flatten)]
        graphs: GraphsArg,
        /// all, channels, edge or dwell.
        #[arg(long)]
        suite: Option<String>,
        /// Generated trajectories per variant.
        #[arg(long)]
        count: Option<String>,
        #[arg(long)]
        k: Option<String>,
        #[command(flatten)]
        model: ModelFlags,
        #[command(flatten)]
        train: TrainFlags,
        #[arg(long, visible_alias = "output")]
        out: PathBuf,
    },
    /// Re-run the command recorded in a manifest.
    Rerun {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, visible_alias = "output")]
        out: PathBuf,
        /// Fail unless every output matches the recorded digest.
        #[arg(long)]
        verify: bool,
    },
}

/// A parsed invocation of one of the config-driven commands.
#[derive(Debug)]
pub struct Invocation {
    pub command: &'static str,
    pub config: Option<PathBuf>,
    pub overrides: Pairs,
    pub out: PathBuf,
}

impl Command {
    /// `None` for `rerun`, which carries its configuration in the manifest.
    pub fn invocation(self) -> Option<Invocation> {
        let mut o = Pairs::new();
        let (command, common, out) = match self {
            Command::Preprocess { common, input, delimiter, min_daily_visits, utc_offset_hours, split, out } => {
                push_flags!(o, split: split => "split");
                let f = (input, delimiter, min_daily_visits, utc_offset_hours);
                for (key, v) in [("input", f.0), ("delimiter", f.1), ("min_daily_visits", f.2), ("utc_offset_hours", f.3)] {
                    if let Some(v) = v {
                        o.push((key, v));
                    }
                }
                ("preprocess", common, out)
            }
            Command::Synth { common, n_locations, users, days, kernel, stay_prob, grid_cols, split, out } => {
                push_flags!(o, split: split => "split");
                for (key, v) in [
                    ("synth_locations", n_locations),
                    ("synth_users", users),
                    ("synth_days", days),
                    ("synth_kernel", kernel),
                    ("synth_stay_prob", stay_prob),
                    ("synth_grid_cols", grid_cols),
                ] {
                    if let Some(v) = v {
                        o.push((key, v));
                    }
                }
                ("synth", common, out)
            }
            Command::BuildGraphs { common, data, k, mode, out } => {
                push_flags!(o, data: data => "data");
                for (key, v) in [("k", k), ("graph_mode", mode)] {
                    if let Some(v) = v {
                        o.push((key, v));
                    }
                }
                ("build-graphs", common, out)
            }
            Command::Pretrain { common, data, graphs, model, train, out } => {
                push_flags!(o, data: data => "data");
                push_flags!(o, graphs: graphs => "graphs");
                model.push(&mut o);
                train.push(&mut o);
                ("pretrain", common, out)
            }
            Command::Train { common, data, graphs, init, model, train, out } => {
                push_flags!(o, data: data => "data");
                push_flags!(o, graphs: graphs => "graphs");
                if let Some(v) = init {
                    o.push(("init", v));
                }
                model.push(&mut o);
                train.push(&mut o);
                ("train", common, out)
            }
            Command::Generate { common, checkpoint, graphs, count, day, out } => {
                push_flags!(o, graphs: graphs => "graphs");
                for (key, v) in [("checkpoint", checkpoint), ("count", count), ("day", day)] {
                    if let Some(v) = v {
                        o.push((key, v));
                    }
                }
                ("generate", common, out)
            }
            Command::Evaluate { common, real, generated, locations, grid_cell, out } => {
                for (key, v) in [("real", real), ("generated", generated), ("locations", locations), ("grid_cell", grid_cell)] {
                    if let Some(v) = v {
                        o.push((key, v));
                    }
                }
                ("evaluate", common, out)
            }
            Command::Markov { common, data, count, day, out } => {
                push_flags!(o, data: data => "data");
                for (key, v) in [("count", count), ("day", day)] {
                    if let Some(v) = v {
                        o.push((key, v));
                    }
                }
                ("markov", common, out)
            }
            Command::Report { common, inputs, out } => {
                if !inputs.is_empty() {
                    o.push(("reports", inputs.join(";")));
                }
                ("report", common, out)
            }
            Command::Ablate { common, data, graphs, suite, count, k, model, train, out } => {
                push_flags!(o, data: data => "data");
                push_flags!(o, graphs: graphs => "graphs");
                for (key, v) in [("suite", suite), ("count", count), ("k", k)] {
                    if let Some(v) = v {
                        o.push((key, v));
                    }
                }
                model.push(&mut o);
                train.push(&mut o);
                ("ablate", common, out)
            }
            Command::Rerun { .. } => return None,
        };
        let mut overrides = Pairs::new();
        common.push(&mut overrides);
        overrides.extend(o);
        Some(Invocation {
            command,
            config: common.config,
            overrides,
            out,
        })
    }
}
