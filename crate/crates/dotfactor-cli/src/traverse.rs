use std::fs;
use std::path::Path;

use anyhow::Context;
use dotfactor::dotvae::load_checkpoint;
use dotfactor::synthdata::load_dataset;
use dotfactor::traversal::{pgm_bytes, render_traversal, traversal_values, TraversalError};

use crate::{require_file, UsageError};

fn parse_list(raw: &str, what: &str) -> anyhow::Result<Vec<usize>> {
    raw.split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| UsageError(format!("bad {what} {s:?}")).into())
        })
        .collect()
}

pub fn run(
    checkpoint: &Path,
    data: &Path,
    out: &Path,
    images_raw: &str,
    dims_raw: &str,
    points: usize,
    range: f32,
) -> anyhow::Result<()> {
    require_file(&checkpoint.join("model.json"), "checkpoint")?;
    require_file(&data.join("grid.json"), "dataset")?;
    if points < 2 {
        return Err(UsageError("need at least 2 traversal points".into()).into());
    }
    let (model, _) = load_checkpoint(checkpoint).context("loading checkpoint")?;
    let ds = load_dataset(data).context("loading dataset")?;
    let images = parse_list(images_raw, "image index")?;
    let dims: Vec<usize> = if dims_raw == "all" {
        (0..model.latent_c()).collect()
    } else {
        parse_list(dims_raw, "dim")?
    };
    let values = traversal_values(points, range);

    fs::create_dir_all(out)?;
    for &idx in &images {
        let grid = match render_traversal(&model, &ds, idx, &dims, &values) {
            Ok(grid) => grid,
            Err(TraversalError::BadRequest(msg)) => return Err(UsageError(msg).into()),
            Err(other) => return Err(other.into()),
        };
        let path = out.join(format!("traversal_{idx}.pgm"));
        fs::write(&path, pgm_bytes(grid.width, grid.height, &grid.pixels))?;
        println!("wrote {} ({}x{})", path.display(), grid.width, grid.height);
    }
    Ok(())
}
