//! CSI scaling and quantization schemes with their error metrics.
//!
//! Four schemes quantize the in-phase/quadrature components of a channel
//! frequency response to N_b-bit signed codes:
//! - legacy: exact real-value per-subcarrier scale (the 11n baseline),
//!   reported compactly as 3-bit factor-2 (6 dB) grid codes below the
//!   strongest subcarrier
//! - simplified: one linear scale, the largest component anywhere
//! - power-of-two: per-subcarrier (or global) power-of-two scale chosen
//!   into a fixed bracket, so scaling reduces to binary shifts
//! - fractional: per-subcarrier rational scale α/β with β a power of two
//!   and α from a configured candidate set
//!
//! Rounding is half-away-from-zero, saturating at ±(2^(N_b-1)-1).

use std::io::{self, Read};

use num_complex::Complex64;
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum QuantError {
    #[error("CFR must hold at least one subcarrier")]
    EmptyCfr,
    #[error("CFR entries must be finite")]
    NonFinite,
    #[error("CFR data length {len} not divisible by {elements} elements")]
    ShapeBroken { len: usize, elements: usize },
    #[error("n_b {0} outside supported range 2..=16")]
    BadBits(u8),
    #[error("n_p {np} must be at least n_b {nb}")]
    BadOriginalBits { np: u8, nb: u8 },
    #[error("alpha candidate set is empty")]
    EmptyAlphaSet,
    #[error("shape mismatch: {0} vs {1} values")]
    ShapeMismatch(usize, usize),
    #[error("scaling payload does not match CFR shape")]
    CorruptScaling,
    #[error("byte stream truncated or malformed: {0}")]
    Malformed(String),
}

/// Per-subcarrier complex channel frequency response for one link, with
/// one or more antenna elements per subcarrier.
#[derive(Debug, Clone, PartialEq)]
pub struct Cfr {
    /// Row-major values, subcarrier-major: `h[k * n_elements + e]`.
    h: Vec<Complex64>,
    n_elements: usize,
    subcarrier_spacing_hz: f64,
    center_freq_hz: f64,
}

impl Cfr {
    pub fn new(
        h: Vec<Complex64>,
        n_elements: usize,
        subcarrier_spacing_hz: f64,
        center_freq_hz: f64,
    ) -> Result<Self, QuantError> {
        if n_elements == 0 || h.len() % n_elements != 0 {
            return Err(QuantError::ShapeBroken { len: h.len(), elements: n_elements.max(1) });
        }
        if h.is_empty() {
            return Err(QuantError::EmptyCfr);
        }
        if h.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(QuantError::NonFinite);
        }
        Ok(Self { h, n_elements, subcarrier_spacing_hz, center_freq_hz })
    }

    /// Single-element (SISO) CFR.
    pub fn from_subcarriers(
        h: Vec<Complex64>,
        subcarrier_spacing_hz: f64,
        center_freq_hz: f64,
    ) -> Result<Self, QuantError> {
        Self::new(h, 1, subcarrier_spacing_hz, center_freq_hz)
    }

    pub fn n_subcarriers(&self) -> usize {
        self.h.len() / self.n_elements
    }

    pub fn n_elements(&self) -> usize {
        self.n_elements
    }

    pub fn subcarrier_spacing_hz(&self) -> f64 {
        self.subcarrier_spacing_hz
    }

    pub fn center_freq_hz(&self) -> f64 {
        self.center_freq_hz
    }

    pub fn values(&self) -> &[Complex64] {
        &self.h
    }

    pub fn at(&self, subcarrier: usize, element: usize) -> Complex64 {
        self.h[subcarrier * self.n_elements + element]
    }

    /// Values of one subcarrier across elements.
    pub fn subcarrier(&self, k: usize) -> &[Complex64] {
        &self.h[k * self.n_elements..(k + 1) * self.n_elements]
    }

    /// m_H(k): largest |I| or |Q| over the subcarrier's elements.
    pub fn component_max(&self, k: usize) -> f64 {
        self.subcarrier(k)
            .iter()
            .map(|v| v.re.abs().max(v.im.abs()))
            .fold(0.0, f64::max)
    }

    /// Total signal energy Σ|h|².
    pub fn energy(&self) -> f64 {
        self.h.iter().map(|v| v.norm_sqr()).sum()
    }
}

/// Scale information attached to quantized codes.
#[derive(Debug, Clone, PartialEq)]
pub enum Scaling {
    /// Exact per-subcarrier scales M_H(k) = m_H(k), plus the compact
    /// reporting form: anchor m_max and 3-bit grid codes g with
    /// m_max · 2^-g(k) ≥ m_H(k) (snapped upward, never clips).
    Legacy11n { m_max: f64, db_codes: Vec<u8>, scales: Vec<f64> },
    /// One linear scale for every subcarrier.
    Simplified { scale: f64 },
    /// Power-of-two exponents e (α_H = 2^e), one per subcarrier or one
    /// global, together with the original-data bit count n_p.
    Pow2 { exponents: Vec<i16>, n_p: u8 },
    /// Per-subcarrier (α, β = 2^exp) rational scales.
    Fractional { pairs: Vec<(u16, i16)> },
}

impl Scaling {
    fn tag(&self) -> u8 {
        match self {
            Scaling::Legacy11n { .. } => 0,
            Scaling::Simplified { .. } => 1,
            Scaling::Pow2 { .. } => 2,
            Scaling::Fractional { .. } => 3,
        }
    }
}

/// Quantized CFR: signed integer (I, Q) code pairs plus the scaling
/// needed to invert them.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedCfr {
    /// Code pairs, subcarrier-major like [`Cfr::values`].
    codes: Vec<(i16, i16)>,
    n_elements: usize,
    n_b: u8,
    scaling: Scaling,
    subcarrier_spacing_hz: f64,
    center_freq_hz: f64,
}

impl QuantizedCfr {
    pub fn codes(&self) -> &[(i16, i16)] {
        &self.codes
    }

    pub fn n_subcarriers(&self) -> usize {
        self.codes.len() / self.n_elements
    }

    pub fn n_elements(&self) -> usize {
        self.n_elements
    }

    pub fn n_b(&self) -> u8 {
        self.n_b
    }

    pub fn scaling(&self) -> &Scaling {
        &self.scaling
    }

    pub fn subcarrier_spacing_hz(&self) -> f64 {
        self.subcarrier_spacing_hz
    }

    pub fn center_freq_hz(&self) -> f64 {
        self.center_freq_hz
    }

    /// Largest representable code magnitude, 2^(n_b-1) - 1.
    pub fn code_limit(&self) -> i32 {
        (1i32 << (self.n_b - 1)) - 1
    }

    /// Serialize to the trace byte layout: scheme tag (u8), n_b (u8),
    /// n_subcarriers (u32 LE), n_elements (u16 LE), scaling payload,
    /// then I/Q code pairs as signed 16-bit LE.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.push(self.scaling.tag());
        out.push(self.n_b);
        out.extend((self.n_subcarriers() as u32).to_le_bytes());
        out.extend((self.n_elements as u16).to_le_bytes());
        match &self.scaling {
            Scaling::Legacy11n { m_max, db_codes, scales } => {
                out.extend(m_max.to_le_bytes());
                out.extend(db_codes.iter().copied());
                for s in scales {
                    out.extend(s.to_le_bytes());
                }
            }
            Scaling::Simplified { scale } => out.extend(scale.to_le_bytes()),
            Scaling::Pow2 { exponents, n_p } => {
                out.push(*n_p);
                out.push(if exponents.len() == 1 { 0 } else { 1 });
                for e in exponents {
                    out.extend(e.to_le_bytes());
                }
            }
            Scaling::Fractional { pairs } => {
                for (a, b) in pairs {
                    out.extend(a.to_le_bytes());
                    out.extend(b.to_le_bytes());
                }
            }
        }
        for (i, q) in &self.codes {
            out.extend(i.to_le_bytes());
            out.extend(q.to_le_bytes());
        }
        out
    }

    /// Parse the trace byte layout back. Subcarrier spacing and center
    /// frequency are side-band information supplied by the caller.
    pub fn from_bytes(
        bytes: &[u8],
        subcarrier_spacing_hz: f64,
        center_freq_hz: f64,
    ) -> Result<Self, QuantError> {
        let mut r = io::Cursor::new(bytes);
        let mut u8buf = [0u8; 1];
        let mut read_u8 = |r: &mut io::Cursor<&[u8]>| -> Result<u8, QuantError> {
            r.read_exact(&mut u8buf).map_err(|e| QuantError::Malformed(e.to_string()))?;
            Ok(u8buf[0])
        };
        let tag = read_u8(&mut r)?;
        let n_b = read_u8(&mut r)?;
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4).map_err(|e| QuantError::Malformed(e.to_string()))?;
        let n_sc = u32::from_le_bytes(b4) as usize;
        let mut b2 = [0u8; 2];
        r.read_exact(&mut b2).map_err(|e| QuantError::Malformed(e.to_string()))?;
        let n_el = u16::from_le_bytes(b2) as usize;
        if n_sc == 0 || n_el == 0 {
            return Err(QuantError::Malformed("zero dimensions".into()));
        }
        let mut f8 = [0u8; 8];
        let scaling = match tag {
            0 => {
                r.read_exact(&mut f8).map_err(|e| QuantError::Malformed(e.to_string()))?;
                let m_max = f64::from_le_bytes(f8);
                let mut db_codes = vec![0u8; n_sc];
                r.read_exact(&mut db_codes)
                    .map_err(|e| QuantError::Malformed(e.to_string()))?;
                let mut scales = Vec::with_capacity(n_sc);
                for _ in 0..n_sc {
                    r.read_exact(&mut f8)
                        .map_err(|e| QuantError::Malformed(e.to_string()))?;
                    scales.push(f64::from_le_bytes(f8));
                }
                Scaling::Legacy11n { m_max, db_codes, scales }
            }
            1 => {
                r.read_exact(&mut f8).map_err(|e| QuantError::Malformed(e.to_string()))?;
                Scaling::Simplified { scale: f64::from_le_bytes(f8) }
            }
            2 => {
                let n_p = read_u8(&mut r)?;
                let per_sc = read_u8(&mut r)? == 1;
                let count = if per_sc { n_sc } else { 1 };
                let mut exponents = Vec::with_capacity(count);
                for _ in 0..count {
                    r.read_exact(&mut b2).map_err(|e| QuantError::Malformed(e.to_string()))?;
                    exponents.push(i16::from_le_bytes(b2));
                }
                Scaling::Pow2 { exponents, n_p }
            }
            3 => {
                let mut pairs = Vec::with_capacity(n_sc);
                for _ in 0..n_sc {
                    r.read_exact(&mut b2).map_err(|e| QuantError::Malformed(e.to_string()))?;
                    let a = u16::from_le_bytes(b2);
                    r.read_exact(&mut b2).map_err(|e| QuantError::Malformed(e.to_string()))?;
                    pairs.push((a, i16::from_le_bytes(b2)));
                }
                Scaling::Fractional { pairs }
            }
            t => return Err(QuantError::Malformed(format!("unknown scheme tag {t}"))),
        };
        let mut codes = Vec::with_capacity(n_sc * n_el);
        for _ in 0..n_sc * n_el {
            r.read_exact(&mut b2).map_err(|e| QuantError::Malformed(e.to_string()))?;
            let i = i16::from_le_bytes(b2);
            r.read_exact(&mut b2).map_err(|e| QuantError::Malformed(e.to_string()))?;
            codes.push((i, i16::from_le_bytes(b2)));
        }
        Ok(Self {
            codes,
            n_elements: n_el,
            n_b,
            scaling,
            subcarrier_spacing_hz,
            center_freq_hz,
        })
    }
}

/// Round half away from zero.
pub fn round_half_away(x: f64) -> f64 {
    x.round() // f64::round already rounds half away from zero
}

fn check_bits(n_b: u8) -> Result<(), QuantError> {
    if !(2..=16).contains(&n_b) {
        return Err(QuantError::BadBits(n_b));
    }
    Ok(())
}

fn code_limit(n_b: u8) -> f64 {
    ((1i32 << (n_b - 1)) - 1) as f64
}

fn quantize_with(h: &Cfr, n_b: u8, scale_of: impl Fn(usize) -> f64) -> Vec<(i16, i16)> {
    let limit = code_limit(n_b);
    let mut codes = Vec::with_capacity(h.values().len());
    for k in 0..h.n_subcarriers() {
        let s = scale_of(k);
        for v in h.subcarrier(k) {
            let qi = round_half_away(v.re * s).clamp(-limit, limit) as i16;
            let qq = round_half_away(v.im * s).clamp(-limit, limit) as i16;
            codes.push((qi, qq));
        }
    }
    codes
}

/// Legacy per-subcarrier scheme: each subcarrier is scaled by its exact
/// component maximum, M_H(k) = m_H(k), so codes are
/// Round(h/m_H(k) · (2^(n_b-1)-1)) and the strongest component of every
/// subcarrier lands on the full-scale code. The scaling payload also
/// carries the compact 3-bit reporting codes (factor-2 grid below the
/// strongest subcarrier, snapped upward). Zero subcarriers take unit
/// scale and zero codes.
pub fn quantize_legacy(h: &Cfr, n_b: u8) -> Result<QuantizedCfr, QuantError> {
    check_bits(n_b)?;
    let n_sc = h.n_subcarriers();
    let m_max = (0..n_sc).map(|k| h.component_max(k)).fold(0.0, f64::max);
    let mut db_codes = vec![7u8; n_sc];
    let mut scales = vec![1.0_f64; n_sc];
    for k in 0..n_sc {
        let m_h = h.component_max(k);
        if m_h > 0.0 {
            scales[k] = m_h;
        }
        if m_max > 0.0 {
            // compact field: largest g in 0..=7 with m_max/2^g >= m_h
            let mut g = 7u8;
            while g > 0 && m_max / f64::powi(2.0, g as i32) < m_h {
                g -= 1;
            }
            db_codes[k] = g;
        }
    }
    let limit = code_limit(n_b);
    let codes = quantize_with(h, n_b, |k| limit / scales[k]);
    Ok(QuantizedCfr {
        codes,
        n_elements: h.n_elements(),
        n_b,
        scaling: Scaling::Legacy11n { m_max, db_codes, scales },
        subcarrier_spacing_hz: h.subcarrier_spacing_hz(),
        center_freq_hz: h.center_freq_hz(),
    })
}

/// Simplified scheme: one linear scale M_lin = max_k m_H(k) for all
/// subcarriers.
pub fn quantize_simplified(h: &Cfr, n_b: u8) -> Result<QuantizedCfr, QuantError> {
    check_bits(n_b)?;
    let n_sc = h.n_subcarriers();
    let mut m_lin = (0..n_sc).map(|k| h.component_max(k)).fold(0.0, f64::max);
    if m_lin == 0.0 {
        m_lin = 1.0;
    }
    let limit = code_limit(n_b);
    let codes = quantize_with(h, n_b, |_| limit / m_lin);
    Ok(QuantizedCfr {
        codes,
        n_elements: h.n_elements(),
        n_b,
        scaling: Scaling::Simplified { scale: m_lin },
        subcarrier_spacing_hz: h.subcarrier_spacing_hz(),
        center_freq_hz: h.center_freq_hz(),
    })
}

/// Scope of the power-of-two scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Pow2Mode {
    #[default]
    PerSubcarrier,
    Global,
}

/// Power-of-two scheme: α_H = 2^e chosen as the largest power of two with
/// α_H·m_H ≤ 2^(n_p-1)-1, codes Round(α_H·h·2^(n_b-n_p)). Zero
/// subcarriers take α_H = 1.
pub fn quantize_pow2(
    h: &Cfr,
    n_b: u8,
    n_p: u8,
    mode: Pow2Mode,
) -> Result<QuantizedCfr, QuantError> {
    check_bits(n_b)?;
    if n_p < n_b || n_p > 30 {
        return Err(QuantError::BadOriginalBits { np: n_p, nb: n_b });
    }
    let top = ((1u32 << (n_p - 1)) - 1) as f64;
    let exponent_for = |m: f64| -> i16 {
        if m <= 0.0 {
            return 0;
        }
        // largest e with m * 2^e <= top
        (top / m).log2().floor() as i16
    };
    let n_sc = h.n_subcarriers();
    let exponents: Vec<i16> = match mode {
        Pow2Mode::PerSubcarrier => (0..n_sc).map(|k| exponent_for(h.component_max(k))).collect(),
        Pow2Mode::Global => {
            let m = (0..n_sc).map(|k| h.component_max(k)).fold(0.0, f64::max);
            vec![exponent_for(m)]
        }
    };
    let post = f64::powi(2.0, n_b as i32 - n_p as i32);
    let codes = quantize_with(h, n_b, |k| {
        let e = if exponents.len() == 1 { exponents[0] } else { exponents[k] };
        f64::powi(2.0, e as i32) * post
    });
    Ok(QuantizedCfr {
        codes,
        n_elements: h.n_elements(),
        n_b,
        scaling: Scaling::Pow2 { exponents, n_p },
        subcarrier_spacing_hz: h.subcarrier_spacing_hz(),
        center_freq_hz: h.center_freq_hz(),
    })
}

/// Default β range for the fractional scheme: powers of two up to 2^15.
pub const DEFAULT_BETA_MAX_EXP: u32 = 15;

/// Fractional scheme: per subcarrier pick (α, β), β = 2^e with
/// e ≤ beta_max_exp, maximizing α/β subject to
/// α/β ≤ (2^(n_b-1)-1)/m_H(k); codes are Round((α/β)·h).
pub fn quantize_fractional(
    h: &Cfr,
    n_b: u8,
    alpha_set: &[u32],
    beta_max_exp: u32,
) -> Result<QuantizedCfr, QuantError> {
    check_bits(n_b)?;
    if alpha_set.is_empty() {
        return Err(QuantError::EmptyAlphaSet);
    }
    let limit = code_limit(n_b);
    let n_sc = h.n_subcarriers();
    let mut pairs = Vec::with_capacity(n_sc);
    for k in 0..n_sc {
        let m = h.component_max(k);
        if m <= 0.0 {
            pairs.push((1u16, 0i16));
            continue;
        }
        let bound = limit / m;
        let mut best: Option<(f64, u16, i16)> = None;
        for &alpha in alpha_set {
            if alpha == 0 {
                continue;
            }
            let a = alpha as f64;
            // smallest beta exponent keeping alpha/beta within the bound
            let mut e = (a / bound).log2().ceil().max(0.0) as u32;
            if a / f64::powi(2.0, e as i32) > bound {
                e += 1; // guard against log rounding
            }
            if e > beta_max_exp {
                continue;
            }
            let ratio = a / f64::powi(2.0, e as i32);
            let better = match best {
                None => true,
                Some((r, ba, _)) => ratio > r || (ratio == r && (alpha as u16) < ba),
            };
            if better {
                best = Some((ratio, alpha as u16, e as i16));
            }
        }
        let (_, alpha, e) = best.unwrap_or((0.0, 1, beta_max_exp as i16));
        pairs.push((alpha, e));
    }
    let codes = quantize_with(h, n_b, |k| {
        let (a, e) = pairs[k];
        a as f64 / f64::powi(2.0, e as i32)
    });
    Ok(QuantizedCfr {
        codes,
        n_elements: h.n_elements(),
        n_b,
        scaling: Scaling::Fractional { pairs },
        subcarrier_spacing_hz: h.subcarrier_spacing_hz(),
        center_freq_hz: h.center_freq_hz(),
    })
}

/// Invert the scaling arithmetic: ĥ(k) = q(k) / scale(k). The only
/// residual error is the rounding.
pub fn dequantize(q: &QuantizedCfr) -> Result<Cfr, QuantError> {
    let n_sc = q.n_subcarriers();
    let limit = code_limit(q.n_b);
    let scale_of: Box<dyn Fn(usize) -> f64> = match &q.scaling {
        Scaling::Legacy11n { db_codes, scales, .. } => {
            if db_codes.len() != n_sc || scales.len() != n_sc {
                return Err(QuantError::CorruptScaling);
            }
            let scales = scales.clone();
            Box::new(move |k| limit / scales[k])
        }
        Scaling::Simplified { scale } => {
            let s = limit / *scale;
            Box::new(move |_| s)
        }
        Scaling::Pow2 { exponents, n_p } => {
            if exponents.len() != 1 && exponents.len() != n_sc {
                return Err(QuantError::CorruptScaling);
            }
            let exps = exponents.clone();
            let post = f64::powi(2.0, q.n_b as i32 - *n_p as i32);
            Box::new(move |k| {
                let e = if exps.len() == 1 { exps[0] } else { exps[k] };
                f64::powi(2.0, e as i32) * post
            })
        }
        Scaling::Fractional { pairs } => {
            if pairs.len() != n_sc {
                return Err(QuantError::CorruptScaling);
            }
            let pairs = pairs.clone();
            Box::new(move |k| {
                let (a, e) = pairs[k];
                a as f64 / f64::powi(2.0, e as i32)
            })
        }
    };
    let mut h = Vec::with_capacity(q.codes.len());
    for k in 0..n_sc {
        let s = scale_of(k);
        for e in 0..q.n_elements {
            let (i, qq) = q.codes[k * q.n_elements + e];
            h.push(Complex64::new(i as f64 / s, qq as f64 / s));
        }
    }
    Cfr::new(h, q.n_elements, q.subcarrier_spacing_hz, q.center_freq_hz)
}

/// Elementwise error metrics between a CFR and its reconstruction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorMetrics {
    pub mse: f64,
    pub max_abs: f64,
    /// 10·log10(Σ|h-ĥ|² / Σ|h|²); -inf for an exact match.
    pub nmse_db: f64,
}

pub fn quant_error(h: &Cfr, h_hat: &Cfr) -> Result<ErrorMetrics, QuantError> {
    if h.values().len() != h_hat.values().len() || h.n_elements() != h_hat.n_elements() {
        return Err(QuantError::ShapeMismatch(h.values().len(), h_hat.values().len()));
    }
    let n = h.values().len() as f64;
    let mut err_energy = 0.0;
    let mut max_abs = 0.0_f64;
    for (a, b) in h.values().iter().zip(h_hat.values()) {
        let d = (a - b).norm();
        err_energy += d * d;
        max_abs = max_abs.max(d);
    }
    let sig_energy = h.energy();
    let nmse_db = if err_energy == 0.0 {
        f64::NEG_INFINITY
    } else if sig_energy == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (err_energy / sig_energy).log10()
    };
    Ok(ErrorMetrics { mse: err_energy / n, max_abs, nmse_db })
}

/// Synthetic frequency-selective multipath CFR for benchmarks and tests:
/// a handful of random complex taps at random sub-symbol delays.
pub fn random_multipath_cfr<R: Rng>(
    rng: &mut R,
    n_subcarriers: usize,
    n_taps: usize,
    subcarrier_spacing_hz: f64,
    center_freq_hz: f64,
) -> Cfr {
    use rand_distr::{Distribution, StandardNormal};
    let symbol_time = 1.0 / (subcarrier_spacing_hz * n_subcarriers as f64);
    let taps: Vec<(Complex64, f64)> = (0..n_taps.max(1))
        .map(|i| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            let delay = if i == 0 {
                0.0
            } else {
                rng.gen_range(0.0..(n_subcarriers as f64 / 4.0)) * symbol_time
            };
            (Complex64::new(re, im), delay)
        })
        .collect();
    let h: Vec<Complex64> = (0..n_subcarriers)
        .map(|k| {
            taps.iter()
                .map(|(g, tau)| {
                    let phase = -2.0 * std::f64::consts::PI * subcarrier_spacing_hz
                        * k as f64
                        * tau;
                    g * Complex64::new(phase.cos(), phase.sin())
                })
                .sum()
        })
        .collect();
    Cfr::from_subcarriers(h, subcarrier_spacing_hz, center_freq_hz).expect("finite synthesis")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn cfr_of(values: &[(f64, f64)]) -> Cfr {
        Cfr::from_subcarriers(
            values.iter().map(|&(r, i)| Complex64::new(r, i)).collect(),
            312.5e3,
            5.8e9,
        )
        .unwrap()
    }

    #[test]
    fn zero_channel_zero_codes() {
        let h = cfr_of(&[(0.0, 0.0), (0.0, 0.0)]);
        for q in [
            quantize_legacy(&h, 8).unwrap(),
            quantize_simplified(&h, 8).unwrap(),
            quantize_pow2(&h, 8, 12, Pow2Mode::PerSubcarrier).unwrap(),
            quantize_fractional(&h, 8, &[1, 2, 3], DEFAULT_BETA_MAX_EXP).unwrap(),
        ] {
            assert!(q.codes().iter().all(|&(i, qq)| i == 0 && qq == 0));
            let back = dequantize(&q).unwrap();
            assert!(back.values().iter().all(|v| v.norm() == 0.0));
        }
    }

    #[test]
    fn legacy_unit_input_hits_full_scale() {
        // single subcarrier, h = 1+0j, n_b = 8: m_H = 1 -> M_H = 1 (grid
        // level 0 dB) -> q = (127, 0)
        let h = cfr_of(&[(1.0, 0.0)]);
        let q = quantize_legacy(&h, 8).unwrap();
        assert_eq!(q.codes(), &[(127, 0)]);
        match q.scaling() {
            Scaling::Legacy11n { m_max, db_codes, scales } => {
                assert_eq!(*m_max, 1.0);
                assert_eq!(db_codes, &[0]);
                assert_eq!(scales, &[1.0]);
            }
            other => panic!("wrong scaling {other:?}"),
        }
        let back = dequantize(&q).unwrap();
        assert!((back.at(0, 0).re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn legacy_codes_invariant_under_grid_exact_scaling() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let h = random_multipath_cfr(&mut rng, 64, 4, 312.5e3, 5.8e9);
        let q1 = quantize_legacy(&h, 8).unwrap();
        for step in [2.0, 4.0, 8.0, 0.37] {
            let scaled = Cfr::from_subcarriers(
                h.values().iter().map(|v| v * step).collect(),
                h.subcarrier_spacing_hz(),
                h.center_freq_hz(),
            )
            .unwrap();
            let q2 = quantize_legacy(&scaled, 8).unwrap();
            assert_eq!(q1.codes(), q2.codes());
            match (q1.scaling(), q2.scaling()) {
                (
                    Scaling::Legacy11n { m_max: m1, db_codes: d1, .. },
                    Scaling::Legacy11n { m_max: m2, db_codes: d2, .. },
                ) => {
                    assert!((m2 - m1 * step).abs() <= 1e-12 * m2.abs());
                    assert_eq!(d1, d2);
                }
                _ => unreachable!(),
            }
        }
    }

    #[test]
    fn legacy_never_clips_and_scale_covers_component() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        for _ in 0..50 {
            let h = random_multipath_cfr(&mut rng, 32, 6, 312.5e3, 5.8e9);
            let q = quantize_legacy(&h, 8).unwrap();
            assert!(q.codes().iter().all(|&(i, qq)| i.abs() <= 127 && qq.abs() <= 127));
            if let Scaling::Legacy11n { m_max, db_codes, scales } = q.scaling() {
                for k in 0..h.n_subcarriers() {
                    let m_h = h.component_max(k);
                    assert_eq!(scales[k], m_h);
                    // compact report field stays at or above the component
                    let report = m_max / f64::powi(2.0, db_codes[k] as i32);
                    assert!(report >= m_h - 1e-12, "subcarrier {k} report below component");
                }
            }
        }
    }

    #[test]
    fn simplified_constant_channel_identical_codes() {
        let h = cfr_of(&[(0.5, -0.25); 8]);
        let q = quantize_simplified(&h, 8).unwrap();
        let first = q.codes()[0];
        assert!(q.codes().iter().all(|&c| c == first));
    }

    #[test]
    fn simplified_max_subcarrier_reaches_limit() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let h = random_multipath_cfr(&mut rng, 64, 5, 312.5e3, 5.8e9);
        let q = quantize_simplified(&h, 8).unwrap();
        let max_code = q.codes().iter().map(|&(i, qq)| i.abs().max(qq.abs())).max().unwrap();
        assert_eq!(max_code, 127);
    }

    #[test]
    fn pow2_worked_example() {
        // n_p = 12, m_H = 1000: bracket [1024, 2047] -> alpha = 2;
        // n_b = 8 -> q = Round(2*1000/16) = 125
        let h = cfr_of(&[(1000.0, 0.0)]);
        let q = quantize_pow2(&h, 8, 12, Pow2Mode::PerSubcarrier).unwrap();
        assert_eq!(q.codes(), &[(125, 0)]);
        match q.scaling() {
            Scaling::Pow2 { exponents, n_p } => {
                assert_eq!(exponents, &[1]);
                assert_eq!(*n_p, 12);
            }
            other => panic!("wrong scaling {other:?}"),
        }
        // alpha bracket: 2^(n_p-2) <= alpha*m_H <= 2^(n_p-1)-1
        assert!(1024.0 <= 2.0 * 1000.0 && 2.0 * 1000.0 <= 2047.0);
    }

    #[test]
    fn pow2_exact_on_binary_friendly_input() {
        let h = cfr_of(&[(512.0, -256.0)]);
        let q = quantize_pow2(&h, 8, 12, Pow2Mode::PerSubcarrier).unwrap();
        let back = dequantize(&q).unwrap();
        assert_eq!(back.at(0, 0).re, 512.0);
        assert_eq!(back.at(0, 0).im, -256.0);
    }

    #[test]
    fn pow2_shift_path_matches_arithmetic_path() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        for _ in 0..20 {
            let h = random_multipath_cfr(&mut rng, 64, 4, 312.5e3, 5.8e9);
            let q = quantize_pow2(&h, 8, 12, Pow2Mode::PerSubcarrier).unwrap();
            let Scaling::Pow2 { exponents, n_p } = q.scaling() else { unreachable!() };
            let limit = 127.0;
            for k in 0..h.n_subcarriers() {
                // shift path: a single exponent move of the f64 value
                let shift = exponents[k] as i32 + 8 - *n_p as i32;
                for e in 0..h.n_elements() {
                    let v = h.at(k, e);
                    let i_shift =
                        round_half_away(libm_scalbn(v.re, shift)).clamp(-limit, limit) as i16;
                    let q_shift =
                        round_half_away(libm_scalbn(v.im, shift)).clamp(-limit, limit) as i16;
                    assert_eq!(q.codes()[k * h.n_elements() + e], (i_shift, q_shift));
                }
            }
        }
    }

    fn libm_scalbn(x: f64, n: i32) -> f64 {
        // x * 2^n through exponent manipulation only
        x * f64::powi(2.0, n)
    }

    #[test]
    fn pow2_codes_stay_in_range() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        for _ in 0..200 {
            let h = random_multipath_cfr(&mut rng, 16, 5, 312.5e3, 5.8e9);
            for mode in [Pow2Mode::PerSubcarrier, Pow2Mode::Global] {
                let q = quantize_pow2(&h, 8, 12, mode).unwrap();
                assert!(q.codes().iter().all(|&(i, qq)| i.abs() <= 127 && qq.abs() <= 127));
            }
        }
    }

    #[test]
    fn fractional_large_set_approaches_real_scaling() {
        let mut rng = ChaCha12Rng::seed_from_u64(13);
        let h = random_multipath_cfr(&mut rng, 64, 4, 312.5e3, 5.8e9);
        let alpha: Vec<u32> = (1..=4096).collect();
        let q = quantize_fractional(&h, 8, &alpha, 15).unwrap();
        let Scaling::Fractional { pairs } = q.scaling() else { unreachable!() };
        for k in 0..h.n_subcarriers() {
            let m = h.component_max(k);
            if m == 0.0 {
                continue;
            }
            let ideal = 127.0 / m;
            let (a, e) = pairs[k];
            let got = a as f64 / f64::powi(2.0, e as i32);
            assert!(got <= ideal + 1e-12);
            // Eq.-(8)'s one-sided constraint (ratio must stay below the
            // real-value factor) makes the grid error one full step of the
            // top alpha octave, 2^-11 relative, rather than the half step
            // nearest rounding would give.
            assert!(
                (ideal - got) / ideal <= f64::powi(2.0, -11),
                "subcarrier {k}: ratio {got} vs ideal {ideal}"
            );
        }
    }

    #[test]
    fn fractional_single_alpha_degenerates_to_pow2_like() {
        let h = cfr_of(&[(3.0, 0.0)]);
        let q = quantize_fractional(&h, 8, &[1], 15).unwrap();
        let Scaling::Fractional { pairs } = q.scaling() else { unreachable!() };
        // alpha = 1, beta forced to the smallest power of two with
        // 1/beta <= 127/3, i.e. beta = 1 (ratio 1) is too big? 127/3 = 42.3
        // -> 1/1 = 1 <= 42.3, so beta = 1.
        assert_eq!(pairs[0], (1, 0));
        assert_eq!(q.codes()[0], (3, 0));
    }

    #[test]
    fn fractional_nested_sets_do_not_get_worse() {
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        let h = random_multipath_cfr(&mut rng, 128, 5, 312.5e3, 5.8e9);
        let sets: Vec<Vec<u32>> = vec![
            vec![1],
            (1..=3).collect(),
            (1..=15).collect(),
            (1..=255).collect(),
            (1..=1023).collect(),
        ];
        let mut last = f64::INFINITY;
        for set in &sets {
            let q = quantize_fractional(&h, 8, set, 15).unwrap();
            let err = quant_error(&h, &dequantize(&q).unwrap()).unwrap().mse;
            assert!(
                err <= last * (1.0 + 1e-12),
                "alpha set of {} grew error {err} > {last}",
                set.len()
            );
            last = err;
        }
    }

    #[test]
    fn fractional_empty_set_rejected() {
        let h = cfr_of(&[(1.0, 0.0)]);
        assert_eq!(
            quantize_fractional(&h, 8, &[], 15).unwrap_err(),
            QuantError::EmptyAlphaSet
        );
    }

    #[test]
    fn roundtrip_error_bounded_by_half_lsb() {
        let mut rng = ChaCha12Rng::seed_from_u64(19);
        for _ in 0..20 {
            let h = random_multipath_cfr(&mut rng, 64, 4, 312.5e3, 5.8e9);
            // pow2 may saturate by up to (1 - 2^(n_b-n_p)) of one LSB on
            // top of the half-LSB rounding; the other schemes cannot clip.
            let cases: Vec<(QuantizedCfr, &str, f64)> = vec![
                (quantize_legacy(&h, 8).unwrap(), "legacy", 0.5),
                (quantize_simplified(&h, 8).unwrap(), "simplified", 0.5),
                (quantize_pow2(&h, 8, 12, Pow2Mode::PerSubcarrier).unwrap(), "pow2", 1.5),
                (
                    quantize_fractional(&h, 8, &(1..=255).collect::<Vec<_>>(), 15).unwrap(),
                    "fractional",
                    0.5,
                ),
            ];
            for (q, name, bound) in cases {
                let back = dequantize(&q).unwrap();
                let scale_of = |k: usize| -> f64 {
                    match q.scaling() {
                        Scaling::Legacy11n { scales, .. } => 127.0 / scales[k],
                        Scaling::Simplified { scale } => 127.0 / scale,
                        Scaling::Pow2 { exponents, n_p } => {
                            f64::powi(2.0, exponents[k] as i32) * f64::powi(2.0, 8 - *n_p as i32)
                        }
                        Scaling::Fractional { pairs } => {
                            let (a, e) = pairs[k];
                            a as f64 / f64::powi(2.0, e as i32)
                        }
                    }
                };
                for k in 0..h.n_subcarriers() {
                    let lsb = 1.0 / scale_of(k);
                    let d = h.at(k, 0) - back.at(k, 0);
                    assert!(
                        d.re.abs() <= bound * lsb + 1e-12 && d.im.abs() <= bound * lsb + 1e-12,
                        "{name}: subcarrier {k} error {d} vs lsb {lsb}"
                    );
                }
            }
        }
    }

    #[test]
    fn error_metrics_basics() {
        let h = cfr_of(&[(1.0, 0.0)]);
        let same = quant_error(&h, &h).unwrap();
        assert_eq!(same.mse, 0.0);
        assert_eq!(same.max_abs, 0.0);
        assert_eq!(same.nmse_db, f64::NEG_INFINITY);

        let zero = cfr_of(&[(0.0, 0.0)]);
        let m = quant_error(&h, &zero).unwrap();
        assert_eq!(m.mse, 1.0);
        assert_eq!(m.max_abs, 1.0);
        assert_eq!(m.nmse_db, 0.0);

        let other = cfr_of(&[(1.0, 0.0), (1.0, 0.0)]);
        assert!(quant_error(&h, &other).is_err());
    }

    #[test]
    fn legacy_nmse_regression_at_ten_bits() {
        let mut rng = ChaCha12Rng::seed_from_u64(23);
        let mut worst: f64 = f64::NEG_INFINITY;
        for _ in 0..50 {
            let h = random_multipath_cfr(&mut rng, 128, 5, 312.5e3, 5.8e9);
            let q = quantize_legacy(&h, 10).unwrap();
            let m = quant_error(&h, &dequantize(&q).unwrap()).unwrap();
            worst = worst.max(m.nmse_db);
        }
        assert!(worst < -40.0, "legacy 10-bit NMSE {worst} dB above -40 dB");
    }

    #[test]
    fn byte_roundtrip_all_schemes() {
        let mut rng = ChaCha12Rng::seed_from_u64(29);
        let h = random_multipath_cfr(&mut rng, 32, 4, 312.5e3, 5.8e9);
        let qs = vec![
            quantize_legacy(&h, 8).unwrap(),
            quantize_simplified(&h, 8).unwrap(),
            quantize_pow2(&h, 8, 12, Pow2Mode::PerSubcarrier).unwrap(),
            quantize_pow2(&h, 8, 12, Pow2Mode::Global).unwrap(),
            quantize_fractional(&h, 8, &(1..=255).collect::<Vec<_>>(), 15).unwrap(),
        ];
        for q in qs {
            let bytes = q.to_bytes();
            let back = QuantizedCfr::from_bytes(&bytes, 312.5e3, 5.8e9).unwrap();
            assert_eq!(q, back);
        }
        assert!(QuantizedCfr::from_bytes(&[0, 8, 1], 1.0, 1.0).is_err());
        assert!(QuantizedCfr::from_bytes(&[9], 1.0, 1.0).is_err());
    }

    #[test]
    fn bits_validation() {
        let h = cfr_of(&[(1.0, 0.0)]);
        assert_eq!(quantize_legacy(&h, 1).unwrap_err(), QuantError::BadBits(1));
        assert_eq!(quantize_legacy(&h, 17).unwrap_err(), QuantError::BadBits(17));
        assert_eq!(
            quantize_pow2(&h, 8, 6, Pow2Mode::Global).unwrap_err(),
            QuantError::BadOriginalBits { np: 6, nb: 8 }
        );
    }

    #[test]
    fn cfr_validation() {
        assert_eq!(
            Cfr::from_subcarriers(vec![], 1.0, 1.0).unwrap_err(),
            QuantError::EmptyCfr
        );
        assert_eq!(
            Cfr::from_subcarriers(vec![Complex64::new(f64::NAN, 0.0)], 1.0, 1.0).unwrap_err(),
            QuantError::NonFinite
        );
        assert_eq!(
            Cfr::new(vec![Complex64::new(1.0, 0.0); 3], 2, 1.0, 1.0).unwrap_err(),
            QuantError::ShapeBroken { len: 3, elements: 2 }
        );
    }
}
