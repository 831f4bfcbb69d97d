//! The workflows behind each command.
//!
//! Dataset directory layout (`preprocess`, `synth`):
//!
//! | file               | contents                                  |
//! |--------------------|-------------------------------------------|
//! | `trajectories.txt` | every kept trajectory                     |
//! | `train.txt`, `valid.txt`, `test.txt` | the 7:1:2 split (by default) |
//! | `locations.txt`    | `dense_id,lat,lon`                        |
//! | `id_map.txt`       | `original_id,dense_id`                    |
//! | `truth.txt`        | `synth` only: `stay_prob=` then kernel rows |
//!
//! Graph directory layout (`build-graphs`): `stg.edges`, `sdg.edges`,
//! `ttg.edges`. Training directories hold `generator.ckpt`, `train.log`
//! and, after adversarial training, `discriminator.ckpt`.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use mobsim_core::discriminator::Discriminator;
use mobsim_core::generator::Generator;
use mobsim_core::metrics::{evaluate, read_report_values, visit_grid, write_visit_grid, MarkovBaseline, METRIC_NAMES};
use mobsim_core::mobdata::{self, io as dio, LatLon, Trajectory};
use mobsim_core::stgraphs::{self, LocationGraph};
use mobsim_core::trainer::{self, ValidationSet};
use mobsim_core::{rng, SLOTS_PER_DAY};

use crate::ablation;
use crate::config::RunConfig;
use crate::manifest::{sha256_file, Manifest};
use crate::CliError;

pub const TRAJECTORIES: &str = "trajectories.txt";
pub const TRAIN: &str = "train.txt";
pub const VALID: &str = "valid.txt";
pub const TEST: &str = "test.txt";
pub const LOCATIONS: &str = "locations.txt";
pub const ID_MAP: &str = "id_map.txt";
pub const TRUTH: &str = "truth.txt";
pub const GENERATOR: &str = "generator.ckpt";
pub const DISCRIMINATOR: &str = "discriminator.ckpt";
pub const TRAIN_LOG: &str = "train.log";
pub const MANIFEST: &str = "manifest.txt";

pub fn graph_file(channel: stgraphs::Channel) -> String {
    format!("{channel}.edges")
}

/// Output bookkeeping for one command: where files go, what was read and
/// what was written.
pub struct Run {
    manifest: Manifest,
    /// Directory outputs are written into.
    base: PathBuf,
    /// Set for single-file commands: the main output's file name.
    main: Option<String>,
    read: Vec<PathBuf>,
}

impl Run {
    pub fn dir(command: &str, cfg: &RunConfig, out: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
        Ok(Self {
            manifest: Manifest::new(command, cfg),
            base: out.to_path_buf(),
            main: None,
            read: Vec::new(),
        })
    }

    pub fn file(command: &str, cfg: &RunConfig, out: &Path) -> Result<Self, CliError> {
        let name = out
            .file_name()
            .ok_or_else(|| CliError::Validation(format!("--out {} is not a file path", out.display())))?
            .to_string_lossy()
            .into_owned();
        let base = out.parent().map(Path::to_path_buf).unwrap_or_default();
        if !base.as_os_str().is_empty() {
            fs::create_dir_all(&base).map_err(|e| CliError::io(&base, e))?;
        }
        Ok(Self {
            manifest: Manifest::new(command, cfg),
            base,
            main: Some(name),
            read: Vec::new(),
        })
    }

    /// Records `path` as an input and returns it.
    pub fn input(&mut self, path: &Path) -> Result<PathBuf, CliError> {
        let digest = sha256_file(path)?;
        self.manifest.inputs.push((path.display().to_string(), digest));
        self.read.push(fs::canonicalize(path).map_err(|e| CliError::io(path, e))?);
        Ok(path.to_path_buf())
    }

    pub fn open(&mut self, path: &Path) -> Result<BufReader<File>, CliError> {
        let p = self.input(path)?;
        Ok(BufReader::new(File::open(&p).map_err(|e| CliError::io(&p, e))?))
    }

    pub fn main_name(&self) -> &str {
        self.main.as_deref().unwrap_or("")
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.base.join(name)
    }

    /// Writes the output `name` (relative to the output location) and
    /// records its digest. Refuses to overwrite anything read by this run.
    pub fn write<F>(&mut self, name: &str, f: F) -> Result<PathBuf, CliError>
    where
        F: FnOnce(&mut BufWriter<File>) -> Result<(), CliError>,
    {
        let path = self.path(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        if let Ok(existing) = fs::canonicalize(&path) {
            if self.read.contains(&existing) {
                return Err(CliError::Validation(format!(
                    "output {} would overwrite an input",
                    path.display()
                )));
            }
        }
        let mut w = BufWriter::new(File::create(&path).map_err(|e| CliError::io(&path, e))?);
        f(&mut w)?;
        w.flush().map_err(|e| CliError::io(&path, e))?;
        drop(w);
        self.manifest.outputs.push((name.to_string(), sha256_file(&path)?));
        Ok(path)
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> Result<PathBuf, CliError> {
        let p = self.path(name);
        self.write(name, |w| w.write_all(text.as_bytes()).map_err(|e| CliError::io(&p, e)))
    }

    pub fn write_trajectories(&mut self, name: &str, trajs: &[Trajectory]) -> Result<PathBuf, CliError> {
        self.write(name, |w| Ok(dio::write_trajectories(w, trajs)?))
    }

    /// Writes the manifest and returns its path.
    pub fn finish(self) -> Result<PathBuf, CliError> {
        let path = match &self.main {
            Some(name) => self.base.join(format!("{name}.manifest")),
            None => self.base.join(MANIFEST),
        };
        fs::write(&path, self.manifest.to_text()).map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }
}

pub fn require<'a>(value: &'a Option<PathBuf>, key: &str) -> Result<&'a Path, CliError> {
    value.as_deref().ok_or_else(|| {
        CliError::Validation(format!("missing --{key} (or `{key}` in the config)"))
    })
}

fn read_trajectories(run: &mut Run, path: &Path) -> Result<Vec<Trajectory>, CliError> {
    Ok(dio::read_trajectories(run.open(path)?)?)
}

fn read_locations(run: &mut Run, path: &Path) -> Result<Vec<LatLon>, CliError> {
    Ok(dio::read_locations(run.open(path)?)?)
}

/// A dataset directory's splits and location table.
#[derive(Debug, Clone)]
pub struct DataDir {
    pub train: Vec<Trajectory>,
    pub valid: Vec<Trajectory>,
    pub test: Vec<Trajectory>,
    pub locations: Vec<LatLon>,
}

pub fn load_data(run: &mut Run, dir: &Path) -> Result<DataDir, CliError> {
    let locations = read_locations(run, &dir.join(LOCATIONS))?;
    let mut load = |name: &str| -> Result<Vec<Trajectory>, CliError> {
        let t = read_trajectories(run, &dir.join(name))?;
        mobdata::validate_trajectories(&t, locations.len(), SLOTS_PER_DAY)?;
        if t.is_empty() {
            return Err(CliError::Runtime(format!("{} is empty", dir.join(name).display())));
        }
        Ok(t)
    };
    let (train, valid, test) = (load(TRAIN)?, load(VALID)?, load(TEST)?);
    Ok(DataDir {
        train,
        valid,
        test,
        locations,
    })
}

pub fn load_graphs(run: &mut Run, dir: &Path, channels: &[stgraphs::Channel]) -> Result<Vec<LocationGraph>, CliError> {
    channels
        .iter()
        .map(|&ch| {
            let g = stgraphs::read_edge_list(run.open(&dir.join(graph_file(ch)))?)?;
            if g.channel != ch {
                return Err(CliError::Runtime(format!("{} holds a {} graph", graph_file(ch), g.channel)));
            }
            Ok(g)
        })
        .collect()
}

pub fn write_graphs(run: &mut Run, prefix: &str, graphs: &[LocationGraph]) -> Result<(), CliError> {
    for g in graphs {
        run.write(&format!("{prefix}{}", graph_file(g.channel)), |w| Ok(stgraphs::write_edge_list(w, g)?))?;
    }
    Ok(())
}

fn write_dataset(run: &mut Run, all: &[Trajectory], split: &mobdata::Split, locations: &[LatLon]) -> Result<(), CliError> {
    run.write_trajectories(TRAJECTORIES, all)?;
    run.write_trajectories(TRAIN, &split.train)?;
    run.write_trajectories(VALID, &split.valid)?;
    run.write_trajectories(TEST, &split.test)?;
    run.write(LOCATIONS, |w| Ok(dio::write_locations(w, locations)?))?;
    Ok(())
}

fn split_summary(split: &mobdata::Split) -> String {
    format!("train={} valid={} test={}", split.train.len(), split.valid.len(), split.test.len())
}

/// Commands that write a single output file rather than a directory.
pub const FILE_COMMANDS: [&str; 4] = ["generate", "evaluate", "markov", "report"];

/// Where `command` writes its manifest when run with `--out out`.
pub fn manifest_path(command: &str, out: &Path) -> PathBuf {
    if FILE_COMMANDS.contains(&command) {
        PathBuf::from(format!("{}.manifest", out.display()))
    } else {
        out.join(MANIFEST)
    }
}

/// Runs `command` under `cfg`, writing to `out`, and returns a one-line
/// summary.
pub fn execute(command: &str, cfg: &RunConfig, out: &Path) -> Result<String, CliError> {
    match command {
        "preprocess" => preprocess(cfg, out),
        "synth" => synth(cfg, out),
        "build-graphs" => build_graphs(cfg, out),
        "pretrain" => pretrain(cfg, out),
        "train" => train(cfg, out),
        "generate" => generate(cfg, out),
        "evaluate" => evaluate_cmd(cfg, out),
        "markov" => markov(cfg, out),
        "report" => report(cfg, out),
        "ablate" => ablation::ablate(cfg, out),
        other => Err(CliError::Validation(format!("unknown command `{other}`"))),
    }
}

/// Re-runs a manifest's command with its recorded configuration.
pub fn rerun(manifest: &Path, out: &Path, verify: bool) -> Result<String, CliError> {
    let m = Manifest::read(manifest)?;
    m.config.validate()?;
    let changed = m.changed_inputs()?;
    if !changed.is_empty() {
        return Err(CliError::Runtime(format!("inputs changed since the recorded run: {}", changed.join(", "))));
    }
    let summary = execute(&m.command, &m.config, out)?;
    if verify {
        let fresh = Manifest::read(&manifest_path(&m.command, out))?;
        let digests = |m: &Manifest| m.outputs.iter().map(|(_, d)| d.clone()).collect::<Vec<_>>();
        if digests(&fresh) != digests(&m) {
            return Err(CliError::Runtime("re-run outputs differ from the recorded digests".into()));
        }
        return Ok(format!("{summary}\nverified: outputs match {}", manifest.display()));
    }
    Ok(summary)
}

fn preprocess(cfg: &RunConfig, out: &Path) -> Result<String, CliError> {
    let input = require(&cfg.input, "input")?.to_path_buf();
    let mut run = Run::dir("preprocess", cfg, out)?;
    let parsed = mobdata::parse_checkins(run.open(&input)?, cfg.delimiter)?;
    let disc = mobdata::discretize(&parsed.records, SLOTS_PER_DAY, cfg.utc_offset_hours * 3600)?;
    let days = disc.trajectories.len();
    let kept = mobdata::filter_min_visits(disc.trajectories, &disc.raw_counts, cfg.min_daily_visits);
    if kept.is_empty() {
        return Err(CliError::Runtime(format!(
            "no user-day has at least {} records ({} user-days seen)",
            cfg.min_daily_visits, days
        )));
    }
    let split = mobdata::split(&kept, cfg.split, cfg.seed)?;
    write_dataset(&mut run, &kept, &split, &parsed.locations)?;
    run.write(ID_MAP, |w| Ok(dio::write_id_map(w, &parsed.original_ids)?))?;
    run.finish()?;
    Ok(format!(
        "preprocess: records={} locations={} user_days={} kept={} {}",
        parsed.records.len(),
        parsed.locations.len(),
        days,
        kept.len(),
        split_summary(&split)
    ))
}

fn synth(cfg: &RunConfig, out: &Path) -> Result<String, CliError> {
    let s = mobdata::synth_generate(&cfg.synth_config()?)?;
    let mut run = Run::dir("synth", cfg, out)?;
    let trajs = &s.dataset.trajectories;
    let split = mobdata::split(trajs, cfg.split, cfg.seed)?;
    write_dataset(&mut run, trajs, &split, &s.dataset.locations)?;
    let ids: Vec<String> = (0..s.dataset.locations.len()).map(|i| format!("loc{i}")).collect();
    run.write(ID_MAP, |w| Ok(dio::write_id_map(w, &ids)?))?;
    let mut truth = format!("stay_prob={:?}\n", s.truth.stay_prob);
    for row in &s.truth.kernel {
        let cells: Vec<String> = row.iter().map(|p| format!("{p:?}")).collect();
        truth += &cells.join(" ");
        truth.push('\n');
    }
    run.write_text(TRUTH, &truth)?;
    run.finish()?;
    Ok(format!("synth: locations={} trajectories={} {}", s.dataset.locations.len(), trajs.len(), split_summary(&split)))
}

fn build_graphs(cfg: &RunConfig, out: &Path) -> Result<String, CliError> {
    let data = require(&cfg.data, "data")?.to_path_buf();
    let mut run = Run::dir("build-graphs", cfg, out)?;
    let locations = read_locations(&mut run, &data.join(LOCATIONS))?;
    let train = read_trajectories(&mut run, &data.join(TRAIN))?;
    mobdata::validate_trajectories(&train, locations.len(), SLOTS_PER_DAY)?;
    let graphs: Vec<LocationGraph> = stgraphs::build_all(&train, &locations, cfg.k, SLOTS_PER_DAY)?
        .into_iter()
        .map(|g| g.with_mode(cfg.graph_mode))
        .collect();
    write_graphs(&mut run, "", &graphs)?;
    run.finish()?;
    let counts: Vec<String> = graphs.iter().map(|g| format!("{}={}", g.channel, g.edges.len())).collect();
    Ok(format!("build-graphs: edges {}", counts.join(" ")))
}

/// A trained generator with its discriminator and training log lines.
pub struct Fitted {
    pub generator: Generator,
    pub discriminator: Option<Discriminator>,
    pub best_epoch: Option<usize>,
    pub log: Vec<String>,
}

/// Likelihood pretraining from a fresh initialization.
pub fn fit_pretrain(cfg: &RunConfig, data: &DataDir, graphs: &[LocationGraph]) -> Result<Fitted, CliError> {
    let tc = cfg.train_config();
    let mut gen = Generator::new(
        cfg.generator_config(data.locations.len()),
        &mut rng::stream(cfg.seed, "generator-init", 0),
    )?;
    let ctx = gen.prepare(graphs)?;
    let mut log = Vec::new();
    trainer::pretrain_generator(&mut gen, &ctx, &data.train, &tc, &mut |e| log.push(e.to_string()))?;
    Ok(Fitted {
        generator: gen,
        discriminator: None,
        best_epoch: None,
        log,
    })
}

/// Discriminator pretraining and adversarial training of `fitted`.
pub fn fit_adversarial(cfg: &RunConfig, data: &DataDir, graphs: &[LocationGraph], mut fitted: Fitted) -> Result<Fitted, CliError> {
    let tc = cfg.train_config();
    let gen = &mut fitted.generator;
    let ctx = gen.prepare(graphs)?;
    let mut disc = Discriminator::new(
        cfg.discriminator_config(data.locations.len()),
        &mut rng::stream(cfg.seed, "discriminator-init", 0),
    )?;
    let d_pre = trainer::pretrain_discriminator(&mut disc, gen, &ctx, &data.train, &tc)?;
    for (i, obj) in d_pre.iter().enumerate() {
        fitted.log.push(format!("phase=d-pretrain epoch={} d_objective={obj:?}", i + 1));
    }
    let val = ValidationSet {
        valid: &data.valid,
        locations: &data.locations,
    };
    let log = &mut fitted.log;
    let outcome = trainer::adversarial_train(gen, &mut disc, &ctx, &data.train, val, &tc, &mut |e| log.push(e.to_string()))?;
    fitted.log.push(format!("phase=select best_epoch={}", outcome.best_epoch));
    fitted.discriminator = Some(disc);
    fitted.best_epoch = Some(outcome.best_epoch);
    Ok(fitted)
}

pub fn write_fitted(run: &mut Run, prefix: &str, fitted: &Fitted) -> Result<(), CliError> {
    run.write(&format!("{prefix}{GENERATOR}"), |w| Ok(fitted.generator.write_checkpoint(w)?))?;
    if let Some(d) = &fitted.discriminator {
        run.write(&format!("{prefix}{DISCRIMINATOR}"), |w| Ok(d.write_checkpoint(w)?))?;
    }
    let mut text = fitted.log.join("\n");
    text.push('\n');
    run.write_text(&format!("{prefix}{TRAIN_LOG}"), &text)?;
    Ok(())
}

fn pretrain(cfg: &RunConfig, out: &Path) -> Result<String, CliError> {
    let data_dir = require(&cfg.data, "data")?.to_path_buf();
    let graph_dir = require(&cfg.graphs, "graphs")?.to_path_buf();
    let mut run = Run::dir("pretrain", cfg, out)?;
    let data = load_data(&mut run, &data_dir)?;
    let graphs = load_graphs(&mut run, &graph_dir, &cfg.channels)?;
    let fitted = fit_pretrain(cfg, &data, &graphs)?;
    write_fitted(&mut run, "", &fitted)?;
    run.finish()?;
    Ok(format!("pretrain: {}", fitted.log.last().map_or("", String::as_str)))
}

fn train(cfg: &RunConfig, out: &Path) -> Result<String, CliError> {
    let data_dir = require(&cfg.data, "data")?.to_path_buf();
    let graph_dir = require(&cfg.graphs, "graphs")?.to_path_buf();
    let mut run = Run::dir("train", cfg, out)?;
    let data = load_data(&mut run, &data_dir)?;
    let init = match &cfg.init {
        Some(path) => {
            let gen = Generator::read_checkpoint(run.open(path)?)?;
            if gen.config().num_locations != data.locations.len() {
                return Err(CliError::Runtime(format!(
                    "checkpoint has {} locations, dataset has {}",
                    gen.config().num_locations,
                    data.locations.len()
                )));
            }
            Some(gen)
        }
        None => None,
    };
    let channels = init.as_ref().map_or(cfg.channels.clone(), |g| g.config().channels.clone());
    let graphs = load_graphs(&mut run, &graph_dir, &channels)?;
    let fitted = match init {
        Some(generator) => Fitted {
            generator,
            discriminator: None,
            best_epoch: None,
            log: vec!["phase=init".to_string()],
        },
        None => fit_pretrain(cfg, &data, &graphs)?,
    };
    let fitted = fit_adversarial(cfg, &data, &graphs, fitted)?;
    write_fitted(&mut run, "", &fitted)?;
    run.finish()?;
    Ok(format!("train: {}", fitted.log.last().map_or("", String::as_str)))
}

/// `count` trajectories sampled with the `sample` stream of `seed`.
pub fn sample(gen: &Generator, graphs: &[LocationGraph], cfg: &RunConfig) -> Result<Vec<Trajectory>, CliError> {
    let ctx = gen.prepare(graphs)?;
    let table = gen.table(&ctx)?;
    let samples = trainer::sample_batch(gen, &table, cfg.count, SLOTS_PER_DAY, cfg.seed, "sample")?;
    Ok(trainer::to_trajectories(&samples, cfg.day))
}

fn generate(cfg: &RunConfig, out: &Path) -> Result<String, CliError> {
    let ckpt = require(&cfg.checkpoint, "checkpoint")?.to_path_buf();
    let graph_dir = require(&cfg.graphs, "graphs")?.to_path_buf();
    let mut run = Run::file("generate", cfg, out)?;
    let gen = Generator::read_checkpoint(run.open(&ckpt)?)?;
    let graphs = load_graphs(&mut run, &graph_dir, &gen.config().channels.clone())?;
    let trajs = sample(&gen, &graphs, cfg)?;
    let name = run.main_name().to_string();
    run.write_trajectories(&name, &trajs)?;
    run.finish()?;
    Ok(format!("generate: {} trajectories", trajs.len()))
}

fn evaluate_cmd(cfg: &RunConfig, out: &Path) -> Result<String, CliError> {
    let real_p = require(&cfg.real, "real")?.to_path_buf();
    let gen_p = require(&cfg.generated, "generated")?.to_path_buf();
    let loc_p = require(&cfg.locations, "locations")?.to_path_buf();
    let mut run = Run::file("evaluate", cfg, out)?;
    let real = read_trajectories(&mut run, &real_p)?;
    let generated = read_trajectories(&mut run, &gen_p)?;
    let locations = read_locations(&mut run, &loc_p)?;
    let report = evaluate(&real, &generated, &locations)?;
    let name = run.main_name().to_string();
    run.write(&name, |w| Ok(report.write_to(w)?))?;
    for (side, trajs) in [("real", &real), ("generated", &generated)] {
        let grid = visit_grid(trajs, &locations, cfg.grid_cell)?;
        run.write(&format!("{name}.{side}.grid"), |w| Ok(write_visit_grid(w, &grid)?))?;
    }
    run.finish()?;
    let values: Vec<String> = report.values().iter().map(|(n, v)| format!("{n}={v:.4}")).collect();
    Ok(format!("evaluate: {}", values.join(" ")))
}

fn markov(cfg: &RunConfig, out: &Path) -> Result<String, CliError> {
    let data = require(&cfg.data, "data")?.to_path_buf();
    let mut run = Run::file("markov", cfg, out)?;
    let locations = read_locations(&mut run, &data.join(LOCATIONS))?;
    let train = read_trajectories(&mut run, &data.join(TRAIN))?;
    let model = MarkovBaseline::fit(&train, locations.len())?;
    let template = Trajectory::new("template", cfg.day, Vec::new());
    let trajs = model.generate(cfg.count, SLOTS_PER_DAY, cfg.seed, &template);
    let name = run.main_name().to_string();
    run.write_trajectories(&name, &trajs)?;
    run.finish()?;
    Ok(format!("markov: {} trajectories", trajs.len()))
}

/// One row per named run: the six JSD values and their mean.
pub fn format_table(rows: &[(String, [f64; 6])]) -> String {
    let width = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max("variant".len());
    let mut s = format!("{:<width$}", "variant");
    for m in METRIC_NAMES.iter().chain(["mean"].iter()) {
        s += &format!(" {m:>9}");
    }
    s.push('\n');
    for (name, v) in rows {
        s += &format!("{name:<width$}");
        for x in v {
            s += &format!(" {x:>9.4}");
        }
        s += &format!(" {:>9.4}\n", v.iter().sum::<f64>() / 6.0);
    }
    s
}

fn report(cfg: &RunConfig, out: &Path) -> Result<String, CliError> {
    if cfg.reports.is_empty() {
        return Err(CliError::Validation("report needs at least one --input NAME=REPORT".into()));
    }
    let mut run = Run::file("report", cfg, out)?;
    let mut rows = Vec::new();
    for (name, path) in &cfg.reports {
        let values = read_report_values(run.open(path)?)?;
        rows.push((name.clone(), METRIC_NAMES.map(|m| values[m])));
    }
    let table = format_table(&rows);
    let main = run.main_name().to_string();
    run.write_text(&main, &table)?;
    run.finish()?;
    Ok(table.trim_end().to_string())
}
