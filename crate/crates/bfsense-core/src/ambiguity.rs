//! Ambiguity-function evaluation over delay and Doppler.
//!
//! The ambiguity value at (τ, f_d) is |Σ_t a(t)·conj(b(t−τ))·e^{j2πf_d t}|²
//! with τ snapped to integer chip lags — a discrete matched-filter
//! range-Doppler map. Same-sequence grids are auto ambiguity functions
//! (AAF), distinct sequences give the cross ambiguity function (CAF).
//! Doppler is evaluated by direct summation so arbitrary (small) axes are
//! exact; grids restricted to a delay/Doppler zone of interest carry the
//! low/zero-ambiguity-zone metrics.

use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::sequences::ChipSequence;

#[derive(Debug, Error, PartialEq)]
pub enum AmbiguityError {
    #[error("axis is empty")]
    AxisEmpty,
    #[error("axis values must be strictly increasing and finite")]
    AxisNotIncreasing,
    #[error("delay {0} s outside ±max sequence duration")]
    DelayOutOfRange(f64),
    #[error("doppler {0} Hz outside ±chip_rate/2")]
    DopplerOutOfRange(f64),
    #[error("two delay axis entries snap to the same chip lag")]
    DelayCollision,
    #[error("chip rate mismatch: {0} Hz vs {1} Hz")]
    ChipRateMismatch(f64, f64),
    #[error("doppler axis has no f_d = 0 entry")]
    ZeroDopplerAbsent,
    #[error("requested zone contains no grid bins")]
    EmptyZone,
}

/// Sampled |ambiguity|² surface with its axes.
#[derive(Debug, Clone)]
pub struct AfGrid {
    /// Row-major values indexed by (delay_bin, doppler_bin).
    values: Vec<f64>,
    delay_axis_s: Vec<f64>,
    doppler_axis_hz: Vec<f64>,
}

impl AfGrid {
    pub fn delay_axis_s(&self) -> &[f64] {
        &self.delay_axis_s
    }

    pub fn doppler_axis_hz(&self) -> &[f64] {
        &self.doppler_axis_hz
    }

    pub fn value(&self, delay_bin: usize, doppler_bin: usize) -> f64 {
        self.values[delay_bin * self.doppler_axis_hz.len() + doppler_bin]
    }

    pub fn n_delay(&self) -> usize {
        self.delay_axis_s.len()
    }

    pub fn n_doppler(&self) -> usize {
        self.doppler_axis_hz.len()
    }

    /// Bin indices of (τ=0, f_d=0) when both axes contain exact zeros.
    pub fn origin(&self) -> Option<(usize, usize)> {
        let d = self.delay_axis_s.iter().position(|&v| v == 0.0)?;
        let f = self.doppler_axis_hz.iter().position(|&v| v == 0.0)?;
        Some((d, f))
    }

    /// Global maximum value.
    pub fn peak(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }

    /// Write `delay_s,doppler_hz,value` triples, one bin per line.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "delay_s,doppler_hz,value")?;
        for (i, &tau) in self.delay_axis_s.iter().enumerate() {
            for (j, &fd) in self.doppler_axis_hz.iter().enumerate() {
                writeln!(w, "{},{},{}", tau, fd, self.value(i, j))?;
            }
        }
        Ok(())
    }
}

/// Metrics of a grid restricted to a delay/Doppler zone of interest.
#[derive(Debug, Clone, PartialEq)]
pub struct LazMetrics {
    /// Value at the origin bin (global zone max when the grid has no
    /// origin, e.g. a CAF grid sampled away from zero).
    pub peak: f64,
    /// Maximum over the zone excluding the zero-delay column. A local AF
    /// is flat along Doppler, so the whole τ = 0 ridge belongs to the
    /// mainlobe rather than to the sidelobes.
    pub max_auto_sidelobe: f64,
    /// Maximum over the whole zone including the origin (the CAF reading).
    pub max_cross: f64,
    /// (max delay s, max doppler Hz) the metrics were computed over.
    pub zone: (f64, f64),
}

fn validate_axis(axis: &[f64]) -> Result<(), AmbiguityError> {
    if axis.is_empty() {
        return Err(AmbiguityError::AxisEmpty);
    }
    if axis.iter().any(|v| !v.is_finite()) || axis.windows(2).any(|w| w[0] >= w[1]) {
        return Err(AmbiguityError::AxisNotIncreasing);
    }
    Ok(())
}

/// Evaluate the ambiguity surface of `a` against `b` on the given axes.
///
/// Delays are snapped to integer chip lags and must stay within the
/// sequence durations; Doppler values must stay within ±chip_rate/2.
pub fn ambiguity(
    a: &ChipSequence,
    b: &ChipSequence,
    delays_s: &[f64],
    dopplers_hz: &[f64],
) -> Result<AfGrid, AmbiguityError> {
    if a.chip_rate_hz() != b.chip_rate_hz() {
        return Err(AmbiguityError::ChipRateMismatch(a.chip_rate_hz(), b.chip_rate_hz()));
    }
    validate_axis(delays_s)?;
    validate_axis(dopplers_hz)?;
    let rate = a.chip_rate_hz();
    let max_dur = a.duration_s().max(b.duration_s());
    for &fd in dopplers_hz {
        if fd.abs() > rate / 2.0 {
            return Err(AmbiguityError::DopplerOutOfRange(fd));
        }
    }
    let mut lags = Vec::with_capacity(delays_s.len());
    let mut snapped = Vec::with_capacity(delays_s.len());
    for &tau in delays_s {
        if tau.abs() > max_dur {
            return Err(AmbiguityError::DelayOutOfRange(tau));
        }
        let lag = (tau * rate).round() as isize;
        lags.push(lag);
        snapped.push(lag as f64 / rate);
    }
    if lags.windows(2).any(|w| w[0] >= w[1]) {
        return Err(AmbiguityError::DelayCollision);
    }

    let (sa, sb) = (a.chips(), b.chips());
    let (n, m) = (sa.len() as isize, sb.len() as isize);
    let n_dop = dopplers_hz.len();
    let mut values = vec![0.0; lags.len() * n_dop];
    values
        .par_chunks_mut(n_dop)
        .zip(lags.par_iter())
        .for_each(|(row, &k)| {
            let lo = k.max(0);
            let hi = n.min(m + k);
            for (j, &fd) in dopplers_hz.iter().enumerate() {
                let mut acc = Complex64::new(0.0, 0.0);
                for t in lo..hi {
                    let phase = 2.0 * std::f64::consts::PI * fd * t as f64 / rate;
                    acc += sa[t as usize]
                        * sb[(t - k) as usize].conj()
                        * Complex64::new(phase.cos(), phase.sin());
                }
                row[j] = acc.norm_sqr();
            }
        });

    Ok(AfGrid { values, delay_axis_s: snapped, doppler_axis_hz: dopplers_hz.to_vec() })
}

/// Zone-restricted metrics: peak at the origin, largest sidelobe outside
/// the zero-delay ridge, and the global zone maximum (the CAF reading).
pub fn laz_metrics(
    grid: &AfGrid,
    max_delay_s: f64,
    max_doppler_hz: f64,
) -> Result<LazMetrics, AmbiguityError> {
    let origin = grid.origin();
    let mut peak = f64::NEG_INFINITY;
    let mut sidelobe = 0.0_f64;
    let mut cross = 0.0_f64;
    let mut any = false;
    for (i, &tau) in grid.delay_axis_s().iter().enumerate() {
        if tau.abs() > max_delay_s {
            continue;
        }
        for (j, &fd) in grid.doppler_axis_hz().iter().enumerate() {
            if fd.abs() > max_doppler_hz {
                continue;
            }
            any = true;
            let v = grid.value(i, j);
            cross = cross.max(v);
            if origin == Some((i, j)) {
                peak = v;
            } else if tau != 0.0 || origin.is_none() {
                sidelobe = sidelobe.max(v);
            }
        }
    }
    if !any {
        return Err(AmbiguityError::EmptyZone);
    }
    if !peak.is_finite() {
        peak = cross;
    }
    Ok(LazMetrics {
        peak,
        max_auto_sidelobe: sidelobe,
        max_cross: cross,
        zone: (max_delay_s, max_doppler_hz),
    })
}

/// The f_d = 0 row of the grid; equals |aperiodic cross-correlation|² at
/// the matching chip lags.
pub fn zero_doppler_cut(grid: &AfGrid) -> Result<Vec<f64>, AmbiguityError> {
    let j = grid
        .doppler_axis_hz()
        .iter()
        .position(|&v| v == 0.0)
        .ok_or(AmbiguityError::ZeroDopplerAbsent)?;
    Ok((0..grid.n_delay()).map(|i| grid.value(i, j)).collect())
}

/// All-lag delay axis for correlating `a` against `b` (every chip lag).
pub fn full_delay_axis(a: &ChipSequence, b: &ChipSequence) -> Vec<f64> {
    let rate = a.chip_rate_hz();
    let lo = -(b.len() as isize - 1);
    let hi = a.len() as isize - 1;
    (lo..=hi).map(|k| k as f64 / rate).collect()
}

/// Symmetric linear Doppler axis with `n` points over ±max (n odd keeps a
/// zero bin).
pub fn doppler_axis(max_hz: f64, n: usize) -> Vec<f64> {
    let n = n.max(1);
    if n == 1 {
        return vec![0.0];
    }
    (0..n).map(|i| -max_hz + 2.0 * max_hz * i as f64 / (n - 1) as f64).collect()
}
