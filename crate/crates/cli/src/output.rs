//! File emission: atomic writes, the per-run manifest, and a minimal
//! self-contained SVG line plot.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::RunConfig;
use crate::CliError;

/// Write `bytes` to `path` atomically: a temporary file in the same
/// directory is written, flushed, and renamed over the target, so readers
/// never observe a partial artifact.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
    let file_name = path
        .file_name()
        .ok_or_else(|| CliError::Usage(format!("not a file path: {}", path.display())))?;
    let tmp: PathBuf = dir.join(format!(".{}.tmp-{}", file_name.to_string_lossy(), std::process::id()));
    std::fs::write(&tmp, bytes)
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", tmp.display())))?;
    std::fs::rename(&tmp, path)
        .map_err(|e| CliError::Io(format!("cannot rename into {}: {e}", path.display())))?;
    Ok(())
}

/// Serialize a value as pretty JSON with a trailing newline.
pub fn to_json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut text = serde_json::to_string_pretty(value).expect("JSON serialization");
    text.push('\n');
    text.into_bytes()
}

#[derive(Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    tool_version: &'a str,
    config: &'a RunConfig,
    wall_time_seconds: f64,
}

/// Write `run_manifest.json` capturing the resolved config, tool version,
/// and wall time. The wall time makes this the one artifact exempt from
/// byte-level rerun determinism.
pub fn write_manifest(
    config: &RunConfig,
    command: &str,
    started: std::time::Instant,
) -> Result<(), CliError> {
    let manifest = RunManifest {
        command,
        tool_version: env!("CARGO_PKG_VERSION"),
        config,
        wall_time_seconds: started.elapsed().as_secs_f64(),
    };
    write_atomic(
        &config.output_dir.join("run_manifest.json"),
        &to_json_bytes(&manifest),
    )
}

/// One labelled curve for [`svg_line_plot`].
pub struct Curve<'a> {
    pub label: &'a str,
    pub color: &'a str,
    pub points: Vec<(f64, f64)>,
}

/// Minimal self-contained SVG line plot: axes, tick labels at the corners,
/// one polyline per curve, and a legend. No external dependencies; the
/// output is a single UTF-8 file for quick inspection.
pub fn svg_line_plot(title: &str, x_label: &str, curves: &[Curve]) -> String {
    const W: f64 = 840.0;
    const H: f64 = 520.0;
    const ML: f64 = 70.0; // margins: left, right, top, bottom
    const MR: f64 = 20.0;
    const MT: f64 = 40.0;
    const MB: f64 = 50.0;

    let finite = |v: f64| v.is_finite();
    let mut x_min = f64::INFINITY;
    let mut x_max = f64::NEG_INFINITY;
    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    for c in curves {
        for &(x, y) in &c.points {
            if finite(x) && finite(y) {
                x_min = x_min.min(x);
                x_max = x_max.max(x);
                y_min = y_min.min(y);
                y_max = y_max.max(y);
            }
        }
    }
    if !x_min.is_finite() || x_max <= x_min {
        x_min = 0.0;
        x_max = 1.0;
    }
    if !y_min.is_finite() || y_max <= y_min {
        y_min -= 0.5;
        y_max = y_min + 1.0;
    }
    let sx = (W - ML - MR) / (x_max - x_min);
    let sy = (H - MT - MB) / (y_max - y_min);
    let px = |x: f64| ML + (x - x_min) * sx;
    let py = |y: f64| H - MB - (y - y_min) * sy;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {W} {H}\" \
         font-family=\"monospace\" font-size=\"13\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">{}</text>\n",
        W / 2.0,
        title
    ));
    // Axes.
    svg.push_str(&format!(
        "<line x1=\"{ML}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        H - MB,
        W - MR,
        H - MB
    ));
    svg.push_str(&format!(
        "<line x1=\"{ML}\" y1=\"{MT}\" x2=\"{ML}\" y2=\"{}\" stroke=\"black\"/>\n",
        H - MB
    ));
    // Corner tick labels.
    svg.push_str(&format!(
        "<text x=\"{ML}\" y=\"{}\" text-anchor=\"middle\">{x_min:.3}</text>\n",
        H - MB + 20.0
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{x_max:.3}</text>\n",
        W - MR,
        H - MB + 20.0
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{y_min:.3}</text>\n",
        ML - 8.0,
        H - MB
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{y_max:.3}</text>\n",
        ML - 8.0,
        MT + 5.0
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{x_label}</text>\n",
        (ML + W - MR) / 2.0,
        H - 12.0
    ));
    // Curves and legend.
    for (i, c) in curves.iter().enumerate() {
        let pts: Vec<String> = c
            .points
            .iter()
            .filter(|(x, y)| finite(*x) && finite(*y))
            .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            c.color,
            pts.join(" ")
        ));
        let ly = MT + 16.0 * i as f64;
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{ly}\" x2=\"{}\" y2=\"{ly}\" stroke=\"{}\" stroke-width=\"3\"/>\n",
            W - MR - 150.0,
            W - MR - 120.0,
            c.color
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\">{}</text>\n",
            W - MR - 112.0,
            ly + 4.0,
            c.label
        ));
    }
    svg.push_str("</svg>\n");
    svg
}
