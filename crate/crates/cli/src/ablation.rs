//! Ablation suites: the base model against variants that drop one graph
//! channel, switch the edge mode or remove the dwell head. Every variant
//! runs under the same seed, so variants differ only in the ablated part.
//!
//! Output directory: `graphs/` (when built here), one directory per
//! variant holding its checkpoints, `train.log`, `generated.txt` and
//! `report.txt` (scored against the test split), and `table.txt`.

use std::path::Path;

use mobsim_core::metrics::evaluate;
use mobsim_core::stgraphs::{self, Channel, EdgeMode, LocationGraph};
use mobsim_core::SLOTS_PER_DAY;

use crate::commands::{
    fit_adversarial, fit_pretrain, format_table, load_data, load_graphs, require, sample, write_fitted, write_graphs, Run,
};
use crate::config::{RunConfig, Suite};
use crate::CliError;

pub const TABLE: &str = "table.txt";

/// Named variant configurations for `base.suite`, base first.
pub fn variants(base: &RunConfig) -> Vec<(String, RunConfig)> {
    let mut out = vec![("base".to_string(), base.clone())];
    let suite = base.suite;
    if matches!(suite, Suite::All | Suite::Channels) {
        for ch in Channel::ALL {
            if base.channels.contains(&ch) && base.channels.len() > 1 {
                let mut c = base.clone();
                c.channels.retain(|&x| x != ch);
                out.push((format!("drop-{ch}"), c));
            }
        }
    }
    if matches!(suite, Suite::All | Suite::Edge) {
        let mut c = base.clone();
        c.edge_mode = match base.edge_mode {
            EdgeMode::Vanilla => EdgeMode::Weighted,
            EdgeMode::Weighted => EdgeMode::Vanilla,
        };
        out.push((c.edge_mode.to_string(), c));
    }
    if matches!(suite, Suite::All | Suite::Dwell) && base.dwell {
        let mut c = base.clone();
        c.dwell = false;
        out.push(("no-dwell".to_string(), c));
    }
    out
}

pub fn ablate(cfg: &RunConfig, out: &Path) -> Result<String, CliError> {
    let data_dir = require(&cfg.data, "data")?.to_path_buf();
    let mut run = Run::dir("ablate", cfg, out)?;
    let data = load_data(&mut run, &data_dir)?;
    let graphs: Vec<LocationGraph> = match &cfg.graphs {
        Some(dir) => load_graphs(&mut run, dir, &cfg.channels)?,
        None => {
            let built: Vec<LocationGraph> = stgraphs::build_all(&data.train, &data.locations, cfg.k, SLOTS_PER_DAY)?
                .into_iter()
                .map(|g| g.with_mode(cfg.graph_mode))
                .collect();
            write_graphs(&mut run, "graphs/", &built)?;
            built
        }
    };
    let mut rows = Vec::new();
    for (name, vcfg) in variants(cfg) {
        vcfg.validate()?;
        let fitted = fit_adversarial(&vcfg, &data, &graphs, fit_pretrain(&vcfg, &data, &graphs)?)?;
        let generated = sample(&fitted.generator, &graphs, &vcfg)?;
        let report = evaluate(&data.test, &generated, &data.locations)?;
        write_fitted(&mut run, &format!("{name}/"), &fitted)?;
        run.write_trajectories(&format!("{name}/generated.txt"), &generated)?;
        run.write(&format!("{name}/report.txt"), |w| Ok(report.write_to(w)?))?;
        rows.push((name, report.values().map(|(_, v)| v)));
    }
    let table = format_table(&rows);
    run.write_text(TABLE, &table)?;
    run.finish()?;
    Ok(table.trim_end().to_string())
}
