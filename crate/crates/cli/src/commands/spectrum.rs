//! `spectrum`: scan the scalar eigenvalue problem and write the mode table.

use std::fmt::Write as _;

use serde::Serialize;

use kdvstab::modal_spectrum::scan_eigenvalues;

use crate::config::{Format, RunConfig};
use crate::output::{to_json_bytes, write_atomic};
use crate::CliError;

#[derive(Serialize)]
struct SpectrumRow {
    n: i32,
    lambda: f64,
    r1_re: f64,
    r1_im: f64,
    r2_re: f64,
    r2_im: f64,
    r3_re: f64,
    r3_im: f64,
    a1_abs: f64,
    vp0_re: f64,
    vp0_im: f64,
    #[serde(rename = "vpL_re")]
    vpl_re: f64,
    #[serde(rename = "vpL_im")]
    vpl_im: f64,
    residual: f64,
}

/// For `spectrum` the mode count names the number of scalar rows directly
/// (elsewhere it is the system dimension, two lifted modes per row).
pub fn run(config: &RunConfig) -> Result<(), CliError> {
    let modes = scan_eigenvalues(config.length, config.n_modes)?;
    let rows: Vec<SpectrumRow> = modes
        .iter()
        .map(|m| SpectrumRow {
            n: m.n,
            lambda: m.lambda,
            r1_re: m.roots[0].re,
            r1_im: m.roots[0].im,
            r2_re: m.roots[1].re,
            r2_im: m.roots[1].im,
            r3_re: m.roots[2].re,
            r3_im: m.roots[2].im,
            a1_abs: m.coeffs[0].norm(),
            vp0_re: m.trace_vp0.re,
            vp0_im: m.trace_vp0.im,
            vpl_re: m.trace_vpL.re,
            vpl_im: m.trace_vpL.im,
            residual: m.residual,
        })
        .collect();

    let artifact = match config.format {
        Format::Csv => {
            let mut text = String::from(
                "n,lambda,r1_re,r1_im,r2_re,r2_im,r3_re,r3_im,a1_abs,\
                 vp0_re,vp0_im,vpL_re,vpL_im,residual\n",
            );
            for r in &rows {
                writeln!(
                    text,
                    "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                    r.n,
                    r.lambda,
                    r.r1_re,
                    r.r1_im,
                    r.r2_re,
                    r.r2_im,
                    r.r3_re,
                    r.r3_im,
                    r.a1_abs,
                    r.vp0_re,
                    r.vp0_im,
                    r.vpl_re,
                    r.vpl_im,
                    r.residual
                )
                .expect("string write");
            }
            let path = config.output_dir.join("spectrum.csv");
            write_atomic(&path, text.as_bytes())?;
            path
        }
        Format::Json => {
            let path = config.output_dir.join("spectrum.json");
            write_atomic(&path, &to_json_bytes(&rows))?;
            path
        }
    };

    let worst = rows.iter().map(|r| r.residual).fold(0.0f64, f64::max);
    println!(
        "spectrum: {} modes at L={} (worst residual {worst:.3e}) -> {}",
        rows.len(),
        config.length,
        artifact.display()
    );
    Ok(())
}
