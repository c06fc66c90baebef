//! `critical-lengths`: enumerate the critical length set up to a bound.

use std::fmt::Write as _;

use kdvstab::observability::enumerate_critical;

use crate::config::{Format, RunConfig};
use crate::output::{to_json_bytes, write_atomic};
use crate::CliError;

pub fn run(config: &RunConfig, bound: f64) -> Result<(), CliError> {
    if !bound.is_finite() || bound <= 0.0 {
        return Err(CliError::Usage(format!(
            "bound must be positive, got {bound}"
        )));
    }
    let set = enumerate_critical(bound)?;

    // One stdout line per generating pair; lengths with several generators
    // repeat the value.
    for entry in &set.entries {
        for &(k, l) in &entry.pairs {
            println!("{}, k={k}, l={l}", entry.value);
        }
    }

    let artifact = match config.format {
        Format::Csv => {
            let mut text = String::from("value,k,l\n");
            for entry in &set.entries {
                for &(k, l) in &entry.pairs {
                    writeln!(text, "{},{k},{l}", entry.value).expect("string write");
                }
            }
            let path = config.output_dir.join("critical_lengths.csv");
            write_atomic(&path, text.as_bytes())?;
            path
        }
        Format::Json => {
            let path = config.output_dir.join("critical_lengths.json");
            write_atomic(&path, &to_json_bytes(&set))?;
            path
        }
    };
    println!(
        "critical-lengths: {} distinct values below {bound} -> {}",
        set.entries.len(),
        artifact.display()
    );
    Ok(())
}
