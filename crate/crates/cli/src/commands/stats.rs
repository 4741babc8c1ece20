//! Dataset statistics.

use anyhow::{Context, Result};
use relpred_core::datatools::dataset_stats;

use crate::StatsArgs;

pub fn run(args: StatsArgs) -> Result<()> {
    let dataset = super::load_dataset(&args.data, false)?;
    println!("dataset={}", args.data.display());
    println!("hop={}", args.hop);
    for (name, queries) in [("valid", &dataset.valid), ("test", &dataset.test)] {
        if queries.is_empty() {
            continue;
        }
        let stats = dataset_stats(&dataset.graph, queries, args.hop, args.max_nodes)
            .context("computing statistics")?;
        println!("[{name}]");
        let mut buf = Vec::new();
        stats.write(&mut buf)?;
        print!("{}", String::from_utf8_lossy(&buf));
    }
    if dataset.valid.is_empty() && dataset.test.is_empty() {
        let stats = dataset_stats(&dataset.graph, &[], args.hop, args.max_nodes)
            .context("computing statistics")?;
        let mut buf = Vec::new();
        stats.write(&mut buf)?;
        print!("{}", String::from_utf8_lossy(&buf));
    }
    Ok(())
}
