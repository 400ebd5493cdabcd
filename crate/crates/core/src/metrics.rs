//! Comparison metrics: accuracy at convergence, iteration- and time-based
//! convergence speed, and the empirical convergence-rate estimator q.

use crate::error::{Error, Result};
use crate::solvers::ConvergenceTrace;
use crate::tensor::{DenseTensor3, RealVector};

/// Abscissa for the convergence-speed fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpeedMode {
    IterationBased,
    TimeBased,
}

/// Ordinate transform for the convergence-speed fit. The reported speeds fit
/// a line through log10(error) by default; the raw ordinate is exposed for
/// comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Ordinate {
    #[default]
    Log10,
    Raw,
}

/// Accuracy 100 (1 - ln|residual| / ln|target| * [residual > 1]).
///
/// Requires |target| > 1 so the log ratio is well defined; a residual norm
/// at or below 1 switches the indicator off and scores exactly 100.
pub fn accuracy(target: &DenseTensor3, approx: &DenseTensor3) -> Result<f64> {
    let residual = target.distance(approx)?;
    accuracy_from_norms(target.norm(), residual)
}

/// Accuracy from the two norms it depends on; lets benchmark records be
/// recomputed without the tensors.
pub fn accuracy_from_norms(target_norm: f64, residual_norm: f64) -> Result<f64> {
    if !(target_norm > 1.0) {
        return Err(Error::Metric(format!(
            "accuracy needs a target norm above 1, got {target_norm}"
        )));
    }
    if residual_norm <= 1.0 {
        return Ok(100.0);
    }
    Ok(100.0 * (1.0 - residual_norm.ln() / target_norm.ln()))
}

/// Absolute slope of the ordinary least-squares line through the error curve
/// against iteration index or elapsed seconds.
pub fn convergence_speed(trace: &ConvergenceTrace, mode: SpeedMode) -> Result<f64> {
    convergence_speed_with(trace, mode, Ordinate::Log10)
}

/// As [`convergence_speed`] with an explicit ordinate transform.
pub fn convergence_speed_with(
    trace: &ConvergenceTrace,
    mode: SpeedMode,
    ordinate: Ordinate,
) -> Result<f64> {
    if trace.records.len() < 2 {
        return Err(Error::Metric(format!(
            "convergence speed needs at least 2 records, got {}",
            trace.records.len()
        )));
    }
    let xs: Vec<f64> = trace
        .records
        .iter()
        .map(|r| match mode {
            SpeedMode::IterationBased => r.iter as f64,
            SpeedMode::TimeBased => r.elapsed_s,
        })
        .collect();
    let ys: Vec<f64> = trace
        .records
        .iter()
        .map(|r| match ordinate {
            Ordinate::Log10 => {
                if r.error > 0.0 && r.error.is_finite() {
                    Ok(r.error.log10())
                } else {
                    Err(Error::Metric(format!(
                        "log ordinate needs positive finite errors, got {}",
                        r.error
                    )))
                }
            }
            Ordinate::Raw => Ok(r.error),
        })
        .collect::<Result<_>>()?;

    let n = xs.len() as f64;
    let x_mean = xs.iter().sum::<f64>() / n;
    let y_mean = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        sxy += (x - x_mean) * (y - y_mean);
        sxx += (x - x_mean) * (x - x_mean);
    }
    if sxx == 0.0 {
        return Err(Error::Metric("degenerate abscissa: all x identical".into()));
    }
    Ok((sxy / sxx).abs())
}

/// Empirical convergence rate
/// q = log(|x_{n+1} - x_n| / |x_n - x_{n-1}|)
///   / log(|x_n - x_{n-1}| / |x_{n-1} - x_{n-2}|)
/// from four consecutive scalar iterates around index n.
pub fn convergence_rate_q(values: &[f64], n: usize) -> Result<f64> {
    if n < 2 || n + 1 >= values.len() {
        return Err(Error::Metric(format!(
            "rate estimate needs iterates n-2..n+1; n = {n} with {} values",
            values.len()
        )));
    }
    let d1 = (values[n - 1] - values[n - 2]).abs();
    let d2 = (values[n] - values[n - 1]).abs();
    let d3 = (values[n + 1] - values[n]).abs();
    rate_from_differences(d1, d2, d3)
}

/// Vector-iterate variant of [`convergence_rate_q`] on difference norms.
pub fn convergence_rate_q_vectors(iterates: &[RealVector], n: usize) -> Result<f64> {
    if n < 2 || n + 1 >= iterates.len() {
        return Err(Error::Metric(format!(
            "rate estimate needs iterates n-2..n+1; n = {n} with {} iterates",
            iterates.len()
        )));
    }
    let d1 = iterates[n - 1].sub(&iterates[n - 2]).norm();
    let d2 = iterates[n].sub(&iterates[n - 1]).norm();
    let d3 = iterates[n + 1].sub(&iterates[n]).norm();
    rate_from_differences(d1, d2, d3)
}

fn rate_from_differences(d1: f64, d2: f64, d3: f64) -> Result<f64> {
    if d1 == 0.0 || d2 == 0.0 || d3 == 0.0 {
        return Err(Error::Metric(
            "rate undefined: consecutive iterates repeat".into(),
        ));
    }
    let denom = (d2 / d1).ln();
    if denom == 0.0 {
        return Err(Error::Metric(
            "rate undefined: equal consecutive differences".into(),
        ));
    }
    Ok((d3 / d2).ln() / denom)
}
