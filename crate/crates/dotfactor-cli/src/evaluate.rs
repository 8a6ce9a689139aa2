use std::fs;
use std::path::Path;

use anyhow::Context;
use dotfactor::dotvae::load_checkpoint;
use dotfactor::metrics::{evaluate, MetricReport, ProtocolConfig, Summary};
use dotfactor::synthdata::load_dataset;

use crate::{require_file, worker_cap, UsageError};

pub fn parse_seeds(raw: &str) -> anyhow::Result<Vec<u64>> {
    let seeds: Result<Vec<u64>, _> = raw.split(',').map(|s| s.trim().parse::<u64>()).collect();
    match seeds {
        Ok(v) if !v.is_empty() => Ok(v),
        _ => Err(UsageError(format!("bad seed list {raw:?}")).into()),
    }
}

fn merge_summaries(parts: &[MetricReport], pick: impl Fn(&MetricReport) -> &Summary) -> Summary {
    let values: Vec<f64> = parts.iter().flat_map(|r| pick(r).values.clone()).collect();
    let n = values.len().max(1) as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Summary { mean, std: var.sqrt(), values }
}

pub fn run(
    checkpoint: &Path,
    data: &Path,
    out: &Path,
    seeds_raw: &str,
    votes: usize,
    batch: usize,
) -> anyhow::Result<()> {
    require_file(&checkpoint.join("model.json"), "checkpoint")?;
    require_file(&data.join("grid.json"), "dataset")?;
    let seeds = parse_seeds(seeds_raw)?;
    let (model, _) = load_checkpoint(checkpoint).context("loading checkpoint")?;
    let dataset = load_dataset(data).context("loading dataset")?;
    let protocol = ProtocolConfig { votes, batch, ..ProtocolConfig::default() };

    // seeds are independent; fan out across up to DOTFACTOR_THREADS workers
    let workers = worker_cap().min(seeds.len()).max(1);
    let per_seed: Vec<MetricReport> = if workers <= 1 || seeds.len() == 1 {
        seeds
            .iter()
            .map(|&s| evaluate(&model, &dataset, &protocol, &[s]))
            .collect::<Result<_, _>>()?
    } else {
        let mut results: Vec<Option<anyhow::Result<MetricReport>>> =
            (0..seeds.len()).map(|_| None).collect();
        std::thread::scope(|scope| {
            let mut pending: Vec<(usize, u64)> = seeds.iter().copied().enumerate().collect();
            while !pending.is_empty() {
                let take = pending.len().min(workers);
                let chunk: Vec<(usize, u64)> = pending.drain(..take).collect();
                let handles: Vec<_> = chunk
                    .into_iter()
                    .map(|(idx, seed)| {
                        let model = &model;
                        let dataset = &dataset;
                        let protocol = &protocol;
                        (
                            idx,
                            scope.spawn(move || {
                                evaluate(model, dataset, protocol, &[seed]).map_err(Into::into)
                            }),
                        )
                    })
                    .collect();
                for (idx, handle) in handles {
                    results[idx] = Some(handle.join().expect("metric worker panicked"));
                }
            }
        });
        results
            .into_iter()
            .map(|r| r.expect("all seeds scheduled"))
            .collect::<Result<_, _>>()?
    };

    let merged = MetricReport {
        factorvae: merge_summaries(&per_seed, |r| &r.factorvae),
        dci_d: merge_summaries(&per_seed, |r| &r.dci_d),
        dci_c: merge_summaries(&per_seed, |r| &r.dci_c),
        dci_i: merge_summaries(&per_seed, |r| &r.dci_i),
        mig: merge_summaries(&per_seed, |r| &r.mig),
        betavae: merge_summaries(&per_seed, |r| &r.betavae),
        modularity: merge_summaries(&per_seed, |r| &r.modularity),
        explicitness: merge_summaries(&per_seed, |r| &r.explicitness),
        mi_matrix: per_seed[0].mi_matrix.clone(),
        factor_entropies: per_seed[0].factor_entropies.clone(),
        seeds,
        protocol,
    };

    fs::create_dir_all(out)?;
    let path = out.join("report.json");
    fs::write(&path, serde_json::to_string_pretty(&merged)?)?;
    println!("{}", crate::report::render_table(&[("report".to_string(), merged)]));
    println!("wrote {}", path.display());
    Ok(())
}
