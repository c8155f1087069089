//! Sweep value lists.

use anyhow::{bail, Context, Result};

/// Rounds away binary noise from grid arithmetic (`0.1 * 3`).
fn tidy(v: f64) -> f64 {
    (v * 1e9).round() / 1e9
}

/// Parses `start:stop:step` (stop included when it lies on the grid) or a
/// comma-separated list.
pub fn parse_values(spec: &str) -> Result<Vec<f64>> {
    let spec = spec.trim();
    if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        let [start, stop, step] = parts[..] else {
            bail!("range `{spec}` must be start:stop:step");
        };
        let parse = |s: &str| s.trim().parse::<f64>().with_context(|| format!("bad number `{s}` in `{spec}`"));
        let (start, stop, step) = (parse(start)?, parse(stop)?, parse(step)?);
        if !(step > 0.0) || !start.is_finite() || !stop.is_finite() {
            bail!("range `{spec}` needs a positive step and finite bounds");
        }
        if stop < start {
            bail!("range `{spec}` has stop below start");
        }
        let n = ((stop - start) / step + 1e-9).floor() as usize;
        return Ok((0..=n).map(|i| tidy(start + i as f64 * step)).collect());
    }
    let values = spec
        .split(',')
        .map(|s| s.trim().parse::<f64>().with_context(|| format!("bad number `{s}` in `{spec}`")))
        .collect::<Result<Vec<_>>>()?;
    if values.is_empty() {
        bail!("no values given");
    }
    Ok(values)
}
