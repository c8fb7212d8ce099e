//! Run an experiment from an inline JSON config and print the CSV output.
use std::collections::BTreeMap;
use switchsim::experiment::{self, ExperimentConfig};

fn main() -> switchsim::Result<()> {
    let cfg = ExperimentConfig::from_json(serde_json::json!({
        "medium": { "d_b": 5.0, "L_over_zb": 2.0 },
        "task": { "kind": "sweep-db", "d_b_values": [1.0, 5.0], "l_over_zb_values": [1.0, 2.0] },
        "seed": 3
    }))?;
    println!("config sha256 {}", cfg.hash());
    for table in experiment::run(&cfg)? {
        print!("{}", table.to_csv(&BTreeMap::new())?);
    }
    Ok(())
}
