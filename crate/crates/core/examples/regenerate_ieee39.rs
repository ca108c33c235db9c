//! Rewrites `data/ieee39_kron.json` from the published IEEE-39 data.
//!
//! ```text
//! cargo run -p cascade-core --example regenerate_ieee39
//! ```

use cascade_core::ieee39::{reduced_case, ReductionParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let file = reduced_case(&ReductionParams::default())?;
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/data/ieee39_kron.json");
    std::fs::write(path, serde_json::to_string_pretty(&file)? + "\n")?;
    println!("wrote {path}: {} buses, {} lines", file.buses.len(), file.lines.len());
    Ok(())
}
