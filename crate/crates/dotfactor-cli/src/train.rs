use std::fs;
use std::path::Path;

use anyhow::Context;
use dotfactor::synthdata::load_dataset;
use dotfactor::trainer::{fit, TrainConfig};

use crate::{require_file, VariantArg};

#[allow(clippy::too_many_arguments)]
pub fn run(
    data: &Path,
    out: &Path,
    config: Option<&Path>,
    seed: Option<u64>,
    lambda: Option<f32>,
    gamma: Option<f32>,
    variant: Option<VariantArg>,
    epochs: Option<usize>,
) -> anyhow::Result<()> {
    require_file(&data.join("grid.json"), "dataset")?;
    let mut cfg: TrainConfig = match config {
        Some(path) => {
            require_file(path, "config")?;
            serde_json::from_str(&fs::read_to_string(path)?).context("parsing train config")?
        }
        None => TrainConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(l) = lambda {
        cfg.model.lambda = l;
    }
    if let Some(g) = gamma {
        cfg.model.gamma = g;
    }
    if let Some(v) = variant {
        cfg.model.variant = v.into();
    }
    if let Some(e) = epochs {
        cfg.epochs = e;
    }

    let dataset = load_dataset(data).context("loading dataset")?;
    fs::create_dir_all(out)?;
    fs::write(out.join("config.json"), serde_json::to_string_pretty(&cfg)?)?;

    let (_, report) = fit(&cfg, &dataset, Some(out)).context("training")?;
    let last = report.log.last();
    println!(
        "finished after {} epochs: stop={:?} active_set={} kl_z={:.4} elbo={:.4}",
        report.log.len(),
        report.stop_reason,
        report.final_active,
        report.final_kl_z,
        last.map(|r| r.loss_elbo).unwrap_or(f64::NAN),
    );
    println!("checkpoint: {}", out.join("checkpoint").display());
    Ok(())
}
