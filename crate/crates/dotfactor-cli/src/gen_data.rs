use std::path::Path;

use anyhow::Context;
use dotfactor::synthdata::{generate_dsprites_mini, generate_shapes3d_mini, save_dataset};

use crate::{DatasetKind, UsageError};

fn parse_cards(raw: &str) -> anyhow::Result<Vec<usize>> {
    raw.split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| UsageError(format!("bad cardinality {s:?}")).into())
        })
        .collect()
}

pub fn run(
    kind: DatasetKind,
    out: &Path,
    resolution: usize,
    cards: Option<&str>,
    orientation: usize,
    _seed: u64,
    force: bool,
) -> anyhow::Result<()> {
    if out.exists() && out.read_dir().map(|mut d| d.next().is_some()).unwrap_or(false) && !force {
        return Err(UsageError(format!(
            "output directory {} is not empty (use --force to overwrite)",
            out.display()
        ))
        .into());
    }
    let ds = match kind {
        DatasetKind::DspritesMini => {
            let cards = match cards {
                Some(raw) => parse_cards(raw)?,
                None => vec![3, 4, 8, 8],
            };
            generate_dsprites_mini(resolution, &cards, orientation)
                .context("generating dsprites-mini")?
        }
        DatasetKind::Shapes3dMini => {
            let cards = match cards {
                Some(raw) => parse_cards(raw)?,
                None => vec![4, 4, 4, 2, 3],
            };
            generate_shapes3d_mini(resolution, &cards).context("generating shapes3d-mini")?
        }
    };
    save_dataset(out, &ds).context("writing dataset")?;
    println!(
        "wrote {} items ({} factors, {}x{}) to {}",
        ds.num_items(),
        ds.grid.num_factors(),
        ds.grid.resolution,
        ds.grid.resolution,
        out.display()
    );
    Ok(())
}
