//! Spectrum CSV and flow record files.

use std::fmt::Write as _;
use std::path::Path;

use crate::eigen::SpectrumSample;
use crate::error::Result;
use crate::flow::FlowResult;
use crate::lattice::DOMAIN_WEIGHT;

/// Fixed float format: 12 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.11e}")
}

/// Eigenvalues written for a sample: all of them, or the domain states when
/// the sample carries weights.
pub fn written_eigenvalues(s: &SpectrumSample) -> Vec<f64> {
    let mut v: Vec<f64> =
        s.eigenvalues.iter().enumerate().filter(|(i, _)| s.weight(*i) >= DOMAIN_WEIGHT).map(|(_, x)| *x).collect();
    v.sort_by(f64::total_cmp);
    v
}

/// `t, eig_1..eig_K` per sample, rows padded to the widest one. A comment
/// line records the backend and the window.
pub fn spectrum_csv(samples: &[SpectrumSample], backend: &str, resolution: usize) -> String {
    let rows: Vec<(f64, Vec<f64>)> = samples.iter().map(|s| (s.t, written_eigenvalues(s))).collect();
    let width = rows.iter().map(|r| r.1.len()).max().unwrap_or(0);
    let lambda = samples.iter().map(|s| s.window).fold(f64::INFINITY, f64::min);
    let scale = samples.first().map(|s| s.meta.energy_scale).unwrap_or(1.0);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# backend={backend} resolution={resolution} lambda={} energy_scale={}",
        fmt_f64(if lambda.is_finite() { lambda } else { 0.0 }),
        fmt_f64(scale)
    );
    out.push('t');
    for k in 1..=width {
        let _ = write!(out, ",eig_{k}");
    }
    out.push('\n');
    for (t, v) in rows {
        out.push_str(&fmt_f64(t));
        for k in 0..width {
            out.push(',');
            if let Some(x) = v.get(k) {
                out.push_str(&fmt_f64(*x));
            }
        }
        out.push('\n');
    }
    out
}

pub fn write_spectrum_csv(path: &Path, samples: &[SpectrumSample], backend: &str, resolution: usize) -> Result<()> {
    std::fs::write(path, spectrum_csv(samples, backend, resolution))?;
    Ok(())
}

pub fn write_flow_record(path: &Path, r: &FlowResult) -> Result<()> {
    let mut text = serde_json::to_string_pretty(r)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_flow_record(path: &Path) -> Result<FlowResult> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

/// Largest entrywise difference between the endpoint spectra, in units of
/// the sample energy scale. Both lists are cut to their common size around
/// zero first, since window edges are set per sample.
pub fn endpoint_defect(a: &SpectrumSample, b: &SpectrumSample) -> f64 {
    let pick = |s: &SpectrumSample, n: usize| {
        let mut v = written_eigenvalues(s);
        v.sort_by(|x, y| x.abs().total_cmp(&y.abs()));
        v.truncate(n);
        v.sort_by(f64::total_cmp);
        v
    };
    let n = written_eigenvalues(a).len().min(written_eigenvalues(b).len());
    let scale = a.meta.energy_scale.max(f64::MIN_POSITIVE);
    pick(a, n).iter().zip(pick(b, n)).map(|(x, y)| (x - y).abs() * scale).fold(0.0, f64::max)
}
