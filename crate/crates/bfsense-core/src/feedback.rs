//! Sensing feedback types and codecs.
//!
//! Covers the measurement-report payloads a sensing receiver can return:
//! full CSI (quantized CFR), partial CSI (amplitude-only / phase-only),
//! truncated CIR, frequency-domain differential quantization, the
//! range-Doppler(-angle) map, extracted target parameters, and the
//! masked-TRN measurement obfuscation pair.
//!
//! CFR↔CIR transforms use the unitary (symmetric 1/√N) convention so
//! Parseval holds verbatim.

use std::io::{self, Read, Write};

use num_complex::Complex64;
use rustfft::FftPlanner;
use thiserror::Error;

use crate::quantization::{dequantize, quantize_simplified, Cfr, QuantError, QuantizedCfr};
use crate::sequences::ChipSequence;

/// Propagation speed used throughout the reference arithmetic (the
/// worked values in the source material round c to 3e8 m/s).
pub const SPEED_OF_LIGHT: f64 = 3.0e8;

#[derive(Debug, Error, PartialEq)]
pub enum FeedbackError {
    #[error(transparent)]
    Quant(#[from] QuantError),
    #[error("truncation length {l} invalid for {n} taps")]
    BadTruncation { l: usize, n: usize },
    #[error("differential bit width {diff} exceeds first-subcarrier width {first}")]
    BadDiffWidths { first: u8, diff: u8 },
    #[error("burst needs at least 2 instances, got {0}")]
    BurstTooShort(usize),
    #[error("instance spacing is not uniform")]
    NonUniformSpacing,
    #[error("burst instances have mismatched shapes")]
    BurstShapeMismatch,
    #[error("threshold must be positive")]
    BadThreshold,
    #[error("CFR length {cfr} does not match training sequence length {trn}")]
    MaskLengthMismatch { cfr: usize, trn: usize },
    #[error("byte stream truncated or malformed: {0}")]
    Malformed(String),
}

/// Channel impulse response: complex taps per delay bin (times antenna
/// elements), tap spacing 1/bandwidth.
#[derive(Debug, Clone, PartialEq)]
pub struct Cir {
    /// Tap-major values: `taps[t * n_elements + e]`.
    taps: Vec<Complex64>,
    n_elements: usize,
    tap_spacing_s: f64,
    center_freq_hz: f64,
}

impl Cir {
    pub fn new(
        taps: Vec<Complex64>,
        n_elements: usize,
        tap_spacing_s: f64,
        center_freq_hz: f64,
    ) -> Self {
        assert!(n_elements > 0 && taps.len() % n_elements == 0);
        Self { taps, n_elements, tap_spacing_s, center_freq_hz }
    }

    pub fn taps(&self) -> &[Complex64] {
        &self.taps
    }

    pub fn n_taps(&self) -> usize {
        self.taps.len() / self.n_elements
    }

    pub fn n_elements(&self) -> usize {
        self.n_elements
    }

    pub fn tap_spacing_s(&self) -> f64 {
        self.tap_spacing_s
    }

    pub fn center_freq_hz(&self) -> f64 {
        self.center_freq_hz
    }

    pub fn at(&self, tap: usize, element: usize) -> Complex64 {
        self.taps[tap * self.n_elements + element]
    }

    /// Power-delay profile: |tap|² summed over elements.
    pub fn power_profile(&self) -> Vec<f64> {
        (0..self.n_taps())
            .map(|t| (0..self.n_elements).map(|e| self.at(t, e).norm_sqr()).sum())
            .collect()
    }

    pub fn energy(&self) -> f64 {
        self.taps.iter().map(|v| v.norm_sqr()).sum()
    }
}

fn unitary_transform(data: &mut [Complex64], inverse: bool) {
    let n = data.len();
    let mut planner = FftPlanner::new();
    let fft = if inverse {
        planner.plan_fft_inverse(n)
    } else {
        planner.plan_fft_forward(n)
    };
    fft.process(data);
    let scale = 1.0 / (n as f64).sqrt();
    for v in data.iter_mut() {
        *v *= scale;
    }
}

/// Unitary inverse DFT across subcarriers: CFR → CIR. Roundtrip with
/// [`cir_to_cfr`] is the identity up to floating-point noise.
pub fn cfr_to_cir(h: &Cfr) -> Cir {
    let n = h.n_subcarriers();
    let n_el = h.n_elements();
    let mut taps = vec![Complex64::new(0.0, 0.0); n * n_el];
    let mut col = vec![Complex64::new(0.0, 0.0); n];
    for e in 0..n_el {
        for k in 0..n {
            col[k] = h.at(k, e);
        }
        unitary_transform(&mut col, true);
        for t in 0..n {
            taps[t * n_el + e] = col[t];
        }
    }
    let bandwidth = h.subcarrier_spacing_hz() * n as f64;
    Cir::new(taps, n_el, 1.0 / bandwidth, h.center_freq_hz())
}

/// Unitary forward DFT across taps: CIR → CFR.
pub fn cir_to_cfr(cir: &Cir) -> Cfr {
    let n = cir.n_taps();
    let n_el = cir.n_elements();
    let mut h = vec![Complex64::new(0.0, 0.0); n * n_el];
    let mut col = vec![Complex64::new(0.0, 0.0); n];
    for e in 0..n_el {
        for t in 0..n {
            col[t] = cir.at(t, e);
        }
        unitary_transform(&mut col, false);
        for k in 0..n {
            h[k * n_el + e] = col[k];
        }
    }
    let spacing = 1.0 / (cir.tap_spacing_s() * n as f64);
    Cfr::new(h, n_el, spacing, cir.center_freq_hz()).expect("transform preserves finiteness")
}

/// Amplitude-only or phase-only CSI.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsiPart {
    Amplitude,
    Phase,
}

/// Quantized partial CSI: one code per value. Amplitude codes are
/// Round(|h|/scale·L); phase codes Round(arg(h)/π·L).
#[derive(Debug, Clone, PartialEq)]
pub struct PartialCsi {
    pub part: CsiPart,
    pub n_b: u8,
    pub scale: f64,
    pub codes: Vec<i16>,
    pub n_elements: usize,
    pub subcarrier_spacing_hz: f64,
    pub center_freq_hz: f64,
}

/// Frequency-domain differential codes: the first subcarrier at full
/// width, every following subcarrier as the difference against the
/// *dequantized* previous one at reduced width. Encoder and decoder track
/// the same state, so the reconstruction error never accumulates.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffQuant {
    pub n_b_first: u8,
    pub n_b_diff: u8,
    /// Shared quantization step of both stages.
    pub lsb: f64,
    pub n_elements: usize,
    /// Full-width codes of subcarrier 0, one pair per element.
    pub first: Vec<(i16, i16)>,
    /// Reduced-width differential codes, subcarrier-major.
    pub diffs: Vec<(i16, i16)>,
    /// Set when any differential overflowed and was saturated.
    pub saturated: bool,
    pub subcarrier_spacing_hz: f64,
    pub center_freq_hz: f64,
}

/// Range-Doppler(-angle) power map with axes.
#[derive(Debug, Clone, PartialEq)]
pub struct RdaMap {
    /// Values indexed `[range][doppler][angle]`, angle dimension 1 when no
    /// steering grid was supplied.
    values: Vec<f64>,
    range_axis_m: Vec<f64>,
    doppler_axis_hz: Vec<f64>,
    angle_axis_deg: Vec<f64>,
    center_freq_hz: f64,
}

impl RdaMap {
    pub fn range_axis_m(&self) -> &[f64] {
        &self.range_axis_m
    }

    pub fn doppler_axis_hz(&self) -> &[f64] {
        &self.doppler_axis_hz
    }

    pub fn angle_axis_deg(&self) -> &[f64] {
        &self.angle_axis_deg
    }

    pub fn center_freq_hz(&self) -> f64 {
        self.center_freq_hz
    }

    pub fn value(&self, r: usize, d: usize, a: usize) -> f64 {
        let (nd, na) = (self.doppler_axis_hz.len(), self.angle_axis_deg.len());
        self.values[(r * nd + d) * na + a]
    }

    pub fn peak(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }

    /// `range_m,doppler_hz,angle_deg,value` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "range_m,doppler_hz,angle_deg,value")?;
        for (r, &rm) in self.range_axis_m.iter().enumerate() {
            for (d, &fd) in self.doppler_axis_hz.iter().enumerate() {
                for (a, &az) in self.angle_axis_deg.iter().enumerate() {
                    writeln!(w, "{},{},{},{}", rm, fd, az, self.value(r, d, a))?;
                }
            }
        }
        Ok(())
    }
}

/// One extracted target.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetEstimate {
    pub range_m: f64,
    pub velocity_mps: f64,
    pub azimuth_deg: Option<f64>,
    pub elevation_deg: Option<f64>,
    pub power: f64,
}

/// Doppler window applied across burst instances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DopplerWindow {
    #[default]
    Rectangular,
    Hann,
}

/// Measurement-report payload body.
#[derive(Debug, Clone, PartialEq)]
pub enum FeedbackKind {
    FullCsi(QuantizedCfr),
    PartialCsi(PartialCsi),
    Tcir {
        /// Quantized first-L taps (simplified scaler), stored as one
        /// "subcarrier" per tap.
        codes: QuantizedCfr,
        /// Tap count of the untruncated CIR.
        n_full: u32,
        tap_spacing_s: f64,
    },
    DiffQuant(DiffQuant),
    RdaMap(RdaMap),
    TargetParams(Vec<TargetEstimate>),
    /// CSI variation value for threshold-based reporting.
    CsiVariation(f64),
}

impl FeedbackKind {
    pub fn tag(&self) -> u8 {
        match self {
            FeedbackKind::FullCsi(_) => 0,
            FeedbackKind::PartialCsi(_) => 1,
            FeedbackKind::Tcir { .. } => 2,
            FeedbackKind::DiffQuant(_) => 3,
            FeedbackKind::RdaMap(_) => 4,
            FeedbackKind::TargetParams(_) => 5,
            FeedbackKind::CsiVariation(_) => 6,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            FeedbackKind::FullCsi(_) => "full-csi",
            FeedbackKind::PartialCsi(_) => "partial-csi",
            FeedbackKind::Tcir { .. } => "tcir",
            FeedbackKind::DiffQuant(_) => "diff-quant",
            FeedbackKind::RdaMap(_) => "rda-map",
            FeedbackKind::TargetParams(_) => "target-params",
            FeedbackKind::CsiVariation(_) => "csi-variation",
        }
    }
}

/// A measurement report: payload plus the setup/instance it belongs to.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackPayload {
    pub kind: FeedbackKind,
    pub setup_id: u32,
    pub instance_id: u32,
}

/// Quantize the first `l` taps of the CIR of `h` with the simplified
/// scaler.
pub fn encode_tcir(h: &Cfr, l: usize, n_b: u8) -> Result<FeedbackKind, FeedbackError> {
    let cir = cfr_to_cir(h);
    let n = cir.n_taps();
    if l == 0 || l > n {
        return Err(FeedbackError::BadTruncation { l, n });
    }
    let head = Cfr::new(
        cir.taps()[..l * cir.n_elements()].to_vec(),
        cir.n_elements(),
        h.subcarrier_spacing_hz(),
        h.center_freq_hz(),
    )?;
    let codes = quantize_simplified(&head, n_b)?;
    Ok(FeedbackKind::Tcir { codes, n_full: n as u32, tap_spacing_s: cir.tap_spacing_s() })
}

/// Reconstruct a full-length CIR from a TCIR payload (discarded taps are
/// zero).
pub fn decode_tcir(kind: &FeedbackKind) -> Result<Cir, FeedbackError> {
    let FeedbackKind::Tcir { codes, n_full, tap_spacing_s } = kind else {
        return Err(FeedbackError::Malformed("not a TCIR payload".into()));
    };
    let head = dequantize(codes)?;
    let n_el = head.n_elements();
    let mut taps = head.values().to_vec();
    taps.resize(*n_full as usize * n_el, Complex64::new(0.0, 0.0));
    Ok(Cir::new(taps, n_el, *tap_spacing_s, head.center_freq_hz()))
}

/// Number of leading CIR taps needed to cover `max_range_m` of (two-way)
/// propagation at the CIR's tap spacing.
pub fn tcir_taps_for_range(max_range_m: f64, tap_spacing_s: f64) -> usize {
    let taps = 2.0 * max_range_m / SPEED_OF_LIGHT / tap_spacing_s;
    // tolerate float noise at exact-integer boundaries
    (taps - 1e-9 * taps.max(1.0)).ceil() as usize
}

/// Encode amplitude-only or phase-only CSI at n_b bits.
pub fn encode_partial(h: &Cfr, n_b: u8, part: CsiPart) -> Result<PartialCsi, FeedbackError> {
    if !(2..=16).contains(&n_b) {
        return Err(FeedbackError::Quant(QuantError::BadBits(n_b)));
    }
    let limit = ((1i32 << (n_b - 1)) - 1) as f64;
    let (scale, codes): (f64, Vec<i16>) = match part {
        CsiPart::Amplitude => {
            let mut a = h.values().iter().map(|v| v.norm()).fold(0.0, f64::max);
            if a == 0.0 {
                a = 1.0;
            }
            (a, h.values().iter().map(|v| (v.norm() / a * limit).round() as i16).collect())
        }
        CsiPart::Phase => (
            std::f64::consts::PI,
            h.values()
                .iter()
                .map(|v| {
                    let code = (v.arg() / std::f64::consts::PI * limit).round();
                    code.clamp(-limit, limit) as i16
                })
                .collect(),
        ),
    };
    Ok(PartialCsi {
        part,
        n_b,
        scale,
        codes,
        n_elements: h.n_elements(),
        subcarrier_spacing_hz: h.subcarrier_spacing_hz(),
        center_freq_hz: h.center_freq_hz(),
    })
}

/// Recombine an amplitude-only and a phase-only encoding of the same CFR.
pub fn compose_partial(amp: &PartialCsi, phase: &PartialCsi) -> Result<Cfr, FeedbackError> {
    if amp.part != CsiPart::Amplitude
        || phase.part != CsiPart::Phase
        || amp.codes.len() != phase.codes.len()
    {
        return Err(FeedbackError::Malformed("amplitude/phase payload mismatch".into()));
    }
    let la = ((1i32 << (amp.n_b - 1)) - 1) as f64;
    let lp = ((1i32 << (phase.n_b - 1)) - 1) as f64;
    let values = amp
        .codes
        .iter()
        .zip(&phase.codes)
        .map(|(&a, &p)| {
            Complex64::from_polar(a as f64 / la * amp.scale, p as f64 / lp * phase.scale)
        })
        .collect();
    Ok(Cfr::new(
        values,
        amp.n_elements,
        amp.subcarrier_spacing_hz,
        amp.center_freq_hz,
    )?)
}

/// Differential encoder; see [`DiffQuant`].
pub fn encode_diff(h: &Cfr, n_b_first: u8, n_b_diff: u8) -> Result<DiffQuant, FeedbackError> {
    if !(2..=16).contains(&n_b_first) || !(2..=16).contains(&n_b_diff) {
        return Err(FeedbackError::Quant(QuantError::BadBits(n_b_first.max(n_b_diff))));
    }
    if n_b_diff > n_b_first {
        return Err(FeedbackError::BadDiffWidths { first: n_b_first, diff: n_b_diff });
    }
    let n_el = h.n_elements();
    let n_sc = h.n_subcarriers();
    let limit_first = ((1i32 << (n_b_first - 1)) - 1) as f64;
    let limit_diff = ((1i32 << (n_b_diff - 1)) - 1) as f64;
    let m0 = h.component_max(0);
    let lsb = if m0 > 0.0 { m0 / limit_first } else { 1.0 };
    let mut first = Vec::with_capacity(n_el);
    let mut state = Vec::with_capacity(n_el);
    for e in 0..n_el {
        let v = h.at(0, e);
        let qi = (v.re / lsb).round().clamp(-limit_first, limit_first) as i16;
        let qq = (v.im / lsb).round().clamp(-limit_first, limit_first) as i16;
        first.push((qi, qq));
        state.push(Complex64::new(qi as f64 * lsb, qq as f64 * lsb));
    }
    let mut diffs = Vec::with_capacity((n_sc - 1) * n_el);
    let mut saturated = false;
    for k in 1..n_sc {
        for (e, st) in state.iter_mut().enumerate() {
            let d = h.at(k, e) - *st;
            let mut qi = (d.re / lsb).round();
            let mut qq = (d.im / lsb).round();
            if qi.abs() > limit_diff || qq.abs() > limit_diff {
                saturated = true;
                qi = qi.clamp(-limit_diff, limit_diff);
                qq = qq.clamp(-limit_diff, limit_diff);
            }
            diffs.push((qi as i16, qq as i16));
            *st += Complex64::new(qi * lsb, qq * lsb);
        }
    }
    Ok(DiffQuant {
        n_b_first,
        n_b_diff,
        lsb,
        n_elements: n_el,
        first,
        diffs,
        saturated,
        subcarrier_spacing_hz: h.subcarrier_spacing_hz(),
        center_freq_hz: h.center_freq_hz(),
    })
}

/// Differential decoder: cumulative addition from the first-subcarrier
/// codes, matching the encoder state exactly.
pub fn decode_diff(d: &DiffQuant) -> Result<Cfr, FeedbackError> {
    let n_el = d.n_elements;
    if d.first.len() != n_el || d.diffs.len() % n_el != 0 {
        return Err(FeedbackError::Malformed("differential payload shape".into()));
    }
    let n_sc = 1 + d.diffs.len() / n_el;
    let mut values = Vec::with_capacity(n_sc * n_el);
    let mut state: Vec<Complex64> = d
        .first
        .iter()
        .map(|&(i, q)| Complex64::new(i as f64 * d.lsb, q as f64 * d.lsb))
        .collect();
    values.extend(state.iter().copied());
    for k in 1..n_sc {
        for (e, st) in state.iter_mut().enumerate() {
            let (i, q) = d.diffs[(k - 1) * n_el + e];
            *st += Complex64::new(i as f64 * d.lsb, q as f64 * d.lsb);
            values.push(*st);
        }
    }
    Ok(Cfr::new(values, n_el, d.subcarrier_spacing_hz, d.center_freq_hz)?)
}

/// Build a range-Doppler(-angle) map from a burst of CIRs sampled at the
/// given instants (uniform spacing required). Doppler is a DFT across
/// instances at every tap; ranges are monostatic (tap·spacing·c/2).
pub fn build_rda_map(
    burst: &[Cir],
    instants_s: &[f64],
    window: DopplerWindow,
    steering_deg: Option<&[f64]>,
) -> Result<RdaMap, FeedbackError> {
    if burst.len() < 2 {
        return Err(FeedbackError::BurstTooShort(burst.len()));
    }
    if instants_s.len() != burst.len() {
        return Err(FeedbackError::BurstShapeMismatch);
    }
    let first = &burst[0];
    if burst
        .iter()
        .any(|c| c.n_taps() != first.n_taps() || c.n_elements() != first.n_elements())
    {
        return Err(FeedbackError::BurstShapeMismatch);
    }
    let dt = instants_s[1] - instants_s[0];
    if dt <= 0.0 {
        return Err(FeedbackError::NonUniformSpacing);
    }
    for w in instants_s.windows(2) {
        if ((w[1] - w[0]) - dt).abs() > 1e-9 * dt {
            return Err(FeedbackError::NonUniformSpacing);
        }
    }
    let n_inst = burst.len();
    let n_taps = first.n_taps();
    let n_el = first.n_elements();
    let win: Vec<f64> = match window {
        DopplerWindow::Rectangular => vec![1.0; n_inst],
        DopplerWindow::Hann => (0..n_inst)
            .map(|i| {
                let x = std::f64::consts::PI * i as f64 / (n_inst - 1) as f64;
                x.sin() * x.sin()
            })
            .collect(),
    };
    // fftshifted Doppler bins, ascending
    let bin_hz = 1.0 / (n_inst as f64 * dt);
    let doppler_axis: Vec<f64> =
        (0..n_inst).map(|i| (i as isize - (n_inst / 2) as isize) as f64 * bin_hz).collect();
    let range_axis: Vec<f64> = (0..n_taps)
        .map(|t| t as f64 * first.tap_spacing_s() * SPEED_OF_LIGHT / 2.0)
        .collect();
    let angles: Vec<f64> = match steering_deg {
        Some(grid) if n_el > 1 => grid.to_vec(),
        _ => vec![0.0],
    };
    let n_ang = angles.len();
    let mut values = vec![0.0; n_taps * n_inst * n_ang];
    for t in 0..n_taps {
        for (d, &fd) in doppler_axis.iter().enumerate() {
            for (a, &ang) in angles.iter().enumerate() {
                let mut acc = Complex64::new(0.0, 0.0);
                for (i, cir) in burst.iter().enumerate() {
                    // steer across elements (half-wavelength array), then
                    // correlate the slow-time phase
                    let mut v = Complex64::new(0.0, 0.0);
                    for e in 0..n_el {
                        let steer = if n_el > 1 {
                            let ph = -std::f64::consts::PI
                                * e as f64
                                * ang.to_radians().sin();
                            Complex64::new(ph.cos(), ph.sin())
                        } else {
                            Complex64::new(1.0, 0.0)
                        };
                        v += cir.at(t, e) * steer.conj();
                    }
                    let ph = -2.0 * std::f64::consts::PI * fd * instants_s[i];
                    acc += v * win[i] * Complex64::new(ph.cos(), ph.sin());
                }
                values[(t * n_inst + d) * n_ang + a] = acc.norm_sqr();
            }
        }
    }
    Ok(RdaMap {
        values,
        range_axis_m: range_axis,
        doppler_axis_hz: doppler_axis,
        angle_axis_deg: angles,
        center_freq_hz: first.center_freq_hz(),
    })
}

/// Strict local maxima of the map above `threshold`, returned
/// peak-power-sorted. Velocity is monostatic: v = f_d·c/(2f_c).
pub fn extract_targets(
    map: &RdaMap,
    threshold: f64,
) -> Result<Vec<TargetEstimate>, FeedbackError> {
    if threshold <= 0.0 {
        return Err(FeedbackError::BadThreshold);
    }
    let (nr, nd, na) =
        (map.range_axis_m.len(), map.doppler_axis_hz.len(), map.angle_axis_deg.len());
    let mut found = Vec::new();
    for r in 0..nr {
        for d in 0..nd {
            // collapse the angle axis at this cell
            let (best_a, power) = (0..na)
                .map(|a| (a, map.value(r, d, a)))
                .max_by(|x, y| x.1.total_cmp(&y.1))
                .unwrap();
            if power < threshold {
                continue;
            }
            let mut is_peak = true;
            'nb: for dr in -1i64..=1 {
                for dd in -1i64..=1 {
                    if dr == 0 && dd == 0 {
                        continue;
                    }
                    let (rr, dd2) = (r as i64 + dr, d as i64 + dd);
                    if rr < 0 || rr >= nr as i64 || dd2 < 0 || dd2 >= nd as i64 {
                        continue;
                    }
                    let neigh = (0..na)
                        .map(|a| map.value(rr as usize, dd2 as usize, a))
                        .fold(0.0, f64::max);
                    if neigh >= power {
                        is_peak = false;
                        break 'nb;
                    }
                }
            }
            if is_peak {
                let fd = map.doppler_axis_hz[d];
                found.push(TargetEstimate {
                    range_m: map.range_axis_m[r],
                    velocity_mps: fd * SPEED_OF_LIGHT / (2.0 * map.center_freq_hz),
                    azimuth_deg: if na > 1 { Some(map.angle_axis_deg[best_a]) } else { None },
                    elevation_deg: None,
                    power,
                });
            }
        }
    }
    found.sort_by(|a, b| b.power.total_cmp(&a.power));
    Ok(found)
}

/// Per-bin unit-magnitude phase mask derived from a key.
fn keyed_mask(len: usize, key: u64) -> Vec<Complex64> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(key);
    (0..len)
        .map(|_| {
            let theta: f64 = rng.gen_range(0.0..2.0 * std::f64::consts::PI);
            Complex64::new(theta.cos(), theta.sin())
        })
        .collect()
}

/// Mask a training sequence: multiply its spectrum by a keyed
/// unit-magnitude phase mask and return the masked time-domain sequence
/// (TRN1). A receiver estimating against the unmasked TRN2 sees
/// H·mask instead of H.
pub fn mask_trn(trn2: &ChipSequence, key: u64) -> ChipSequence {
    let mut spec: Vec<Complex64> = trn2.chips().to_vec();
    unitary_transform(&mut spec, false);
    for (s, m) in spec.iter_mut().zip(keyed_mask(trn2.len(), key)) {
        *s *= m;
    }
    unitary_transform(&mut spec, true);
    ChipSequence::new(spec, trn2.chip_rate_hz()).expect("length preserved")
}

/// Per-bin mask implied by a (TRN1, TRN2) pair: the spectral ratio where
/// TRN2 has energy, 1 elsewhere.
pub fn mask_between(trn1: &ChipSequence, trn2: &ChipSequence) -> Vec<Complex64> {
    let mut s1: Vec<Complex64> = trn1.chips().to_vec();
    let mut s2: Vec<Complex64> = trn2.chips().to_vec();
    unitary_transform(&mut s1, false);
    unitary_transform(&mut s2, false);
    let floor = s2.iter().map(|v| v.norm()).fold(0.0_f64, f64::max) * 1e-9;
    s1.iter()
        .zip(&s2)
        .map(|(a, b)| if b.norm() > floor { a / b } else { Complex64::new(1.0, 0.0) })
        .collect()
}

/// The false measurement a responder obtains when the initiator sent TRN1
/// but the responder estimates with TRN2: H·mask per subcarrier.
pub fn apply_mask_distortion(
    h: &Cfr,
    trn1: &ChipSequence,
    trn2: &ChipSequence,
) -> Result<Cfr, FeedbackError> {
    let mask = mask_between(trn1, trn2);
    if h.n_subcarriers() != mask.len() {
        return Err(FeedbackError::MaskLengthMismatch { cfr: h.n_subcarriers(), trn: mask.len() });
    }
    let n_el = h.n_elements();
    let values = h
        .values()
        .iter()
        .enumerate()
        .map(|(i, v)| v * mask[i / n_el])
        .collect();
    Ok(Cfr::new(values, n_el, h.subcarrier_spacing_hz(), h.center_freq_hz())?)
}

/// Correct a false measurement back to the actual channel: divide out the
/// (TRN1, TRN2) mask. Exact to numerical tolerance when the right TRN1 is
/// supplied; a wrong key leaves the measurement scrambled.
pub fn unmask_measurement(
    h_false: &Cfr,
    trn1: &ChipSequence,
    trn2: &ChipSequence,
) -> Result<Cfr, FeedbackError> {
    let mask = mask_between(trn1, trn2);
    if h_false.n_subcarriers() != mask.len() {
        return Err(FeedbackError::MaskLengthMismatch {
            cfr: h_false.n_subcarriers(),
            trn: mask.len(),
        });
    }
    let n_el = h_false.n_elements();
    let values = h_false
        .values()
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let m = mask[i / n_el];
            if m.norm() > 0.0 {
                v / m
            } else {
                *v
            }
        })
        .collect();
    Ok(Cfr::new(values, n_el, h_false.subcarrier_spacing_hz(), h_false.center_freq_hz())?)
}

// ---------------------------------------------------------------------
// trace byte format
// ---------------------------------------------------------------------

fn put_f64(out: &mut Vec<u8>, v: f64) {
    out.extend(v.to_le_bytes());
}

fn q_spacing(q: &QuantizedCfr) -> f64 {
    q.subcarrier_spacing_hz()
}

fn q_center(q: &QuantizedCfr) -> f64 {
    q.center_freq_hz()
}

struct Reader<'a>(io::Cursor<&'a [u8]>);

impl<'a> Reader<'a> {
    fn new(b: &'a [u8]) -> Self {
        Self(io::Cursor::new(b))
    }

    fn bytes(&mut self, n: usize) -> Result<Vec<u8>, FeedbackError> {
        let mut v = vec![0u8; n];
        self.0
            .read_exact(&mut v)
            .map_err(|e| FeedbackError::Malformed(e.to_string()))?;
        Ok(v)
    }

    fn u8(&mut self) -> Result<u8, FeedbackError> {
        Ok(self.bytes(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, FeedbackError> {
        Ok(u16::from_le_bytes(self.bytes(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, FeedbackError> {
        Ok(u32::from_le_bytes(self.bytes(4)?.try_into().unwrap()))
    }

    fn i16(&mut self) -> Result<i16, FeedbackError> {
        Ok(i16::from_le_bytes(self.bytes(2)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, FeedbackError> {
        Ok(f64::from_le_bytes(self.bytes(8)?.try_into().unwrap()))
    }
}

impl FeedbackPayload {
    /// Serialize as tag byte + setup/instance ids + scheme-specific body.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = vec![self.kind.tag()];
        out.extend(self.setup_id.to_le_bytes());
        out.extend(self.instance_id.to_le_bytes());
        match &self.kind {
            FeedbackKind::FullCsi(q) => {
                put_f64(&mut out, q_spacing(q));
                put_f64(&mut out, q_center(q));
                out.extend(q.to_bytes());
            }
            FeedbackKind::PartialCsi(p) => {
                out.push(match p.part {
                    CsiPart::Amplitude => 0,
                    CsiPart::Phase => 1,
                });
                out.push(p.n_b);
                out.extend((p.codes.len() as u32).to_le_bytes());
                out.extend((p.n_elements as u16).to_le_bytes());
                put_f64(&mut out, p.scale);
                put_f64(&mut out, p.subcarrier_spacing_hz);
                put_f64(&mut out, p.center_freq_hz);
                for c in &p.codes {
                    out.extend(c.to_le_bytes());
                }
            }
            FeedbackKind::Tcir { codes, n_full, tap_spacing_s } => {
                out.extend(n_full.to_le_bytes());
                put_f64(&mut out, *tap_spacing_s);
                put_f64(&mut out, q_spacing(codes));
                put_f64(&mut out, q_center(codes));
                out.extend(codes.to_bytes());
            }
            FeedbackKind::DiffQuant(d) => {
                out.push(d.n_b_first);
                out.push(d.n_b_diff);
                out.extend((d.n_elements as u16).to_le_bytes());
                out.extend(((d.diffs.len() / d.n_elements + 1) as u32).to_le_bytes());
                put_f64(&mut out, d.lsb);
                out.push(d.saturated as u8);
                put_f64(&mut out, d.subcarrier_spacing_hz);
                put_f64(&mut out, d.center_freq_hz);
                for &(i, q) in d.first.iter().chain(&d.diffs) {
                    out.extend(i.to_le_bytes());
                    out.extend(q.to_le_bytes());
                }
            }
            FeedbackKind::RdaMap(m) => {
                out.extend((m.range_axis_m.len() as u32).to_le_bytes());
                out.extend((m.doppler_axis_hz.len() as u32).to_le_bytes());
                out.extend((m.angle_axis_deg.len() as u32).to_le_bytes());
                put_f64(&mut out, m.center_freq_hz);
                for v in m.range_axis_m.iter().chain(&m.doppler_axis_hz).chain(&m.angle_axis_deg)
                {
                    put_f64(&mut out, *v);
                }
                for v in &m.values {
                    put_f64(&mut out, *v);
                }
            }
            FeedbackKind::TargetParams(ts) => {
                out.extend((ts.len() as u32).to_le_bytes());
                for t in ts {
                    put_f64(&mut out, t.range_m);
                    put_f64(&mut out, t.velocity_mps);
                    out.push(t.azimuth_deg.is_some() as u8);
                    put_f64(&mut out, t.azimuth_deg.unwrap_or(0.0));
                    out.push(t.elevation_deg.is_some() as u8);
                    put_f64(&mut out, t.elevation_deg.unwrap_or(0.0));
                    put_f64(&mut out, t.power);
                }
            }
            FeedbackKind::CsiVariation(v) => put_f64(&mut out, *v),
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, FeedbackError> {
        let mut r = Reader::new(bytes);
        let tag = r.u8()?;
        let setup_id = r.u32()?;
        let instance_id = r.u32()?;
        let kind = match tag {
            0 => {
                let spacing = r.f64()?;
                let center = r.f64()?;
                let rest = r.bytes(bytes.len() - 25)?;
                FeedbackKind::FullCsi(
                    QuantizedCfr::from_bytes(&rest, spacing, center)
                        .map_err(|e| FeedbackError::Malformed(e.to_string()))?,
                )
            }
            1 => {
                let part = if r.u8()? == 0 { CsiPart::Amplitude } else { CsiPart::Phase };
                let n_b = r.u8()?;
                let n = r.u32()? as usize;
                let n_elements = r.u16()? as usize;
                let scale = r.f64()?;
                let subcarrier_spacing_hz = r.f64()?;
                let center_freq_hz = r.f64()?;
                let mut codes = Vec::with_capacity(n);
                for _ in 0..n {
                    codes.push(r.i16()?);
                }
                FeedbackKind::PartialCsi(PartialCsi {
                    part,
                    n_b,
                    scale,
                    codes,
                    n_elements,
                    subcarrier_spacing_hz,
                    center_freq_hz,
                })
            }
            2 => {
                let n_full = r.u32()?;
                let tap_spacing_s = r.f64()?;
                let spacing = r.f64()?;
                let center = r.f64()?;
                let rest = r.bytes(bytes.len() - 37)?;
                let codes = QuantizedCfr::from_bytes(&rest, spacing, center)
                    .map_err(|e| FeedbackError::Malformed(e.to_string()))?;
                FeedbackKind::Tcir { codes, n_full, tap_spacing_s }
            }
            3 => {
                let n_b_first = r.u8()?;
                let n_b_diff = r.u8()?;
                let n_elements = r.u16()? as usize;
                let n_sc = r.u32()? as usize;
                let lsb = r.f64()?;
                let saturated = r.u8()? != 0;
                let subcarrier_spacing_hz = r.f64()?;
                let center_freq_hz = r.f64()?;
                let mut first = Vec::with_capacity(n_elements);
                for _ in 0..n_elements {
                    first.push((r.i16()?, r.i16()?));
                }
                let mut diffs = Vec::with_capacity((n_sc - 1) * n_elements);
                for _ in 0..(n_sc - 1) * n_elements {
                    diffs.push((r.i16()?, r.i16()?));
                }
                FeedbackKind::DiffQuant(DiffQuant {
                    n_b_first,
                    n_b_diff,
                    lsb,
                    n_elements,
                    first,
                    diffs,
                    saturated,
                    subcarrier_spacing_hz,
                    center_freq_hz,
                })
            }
            4 => {
                let nr = r.u32()? as usize;
                let nd = r.u32()? as usize;
                let na = r.u32()? as usize;
                let center_freq_hz = r.f64()?;
                let mut axis = |n: usize| -> Result<Vec<f64>, FeedbackError> {
                    (0..n).map(|_| r.f64()).collect()
                };
                let range_axis_m = axis(nr)?;
                let doppler_axis_hz = axis(nd)?;
                let angle_axis_deg = axis(na)?;
                let values = axis(nr * nd * na)?;
                FeedbackKind::RdaMap(RdaMap {
                    values,
                    range_axis_m,
                    doppler_axis_hz,
                    angle_axis_deg,
                    center_freq_hz,
                })
            }
            5 => {
                let n = r.u32()? as usize;
                let mut ts = Vec::with_capacity(n);
                for _ in 0..n {
                    let range_m = r.f64()?;
                    let velocity_mps = r.f64()?;
                    let has_az = r.u8()? != 0;
                    let az = r.f64()?;
                    let has_el = r.u8()? != 0;
                    let el = r.f64()?;
                    let power = r.f64()?;
                    ts.push(TargetEstimate {
                        range_m,
                        velocity_mps,
                        azimuth_deg: has_az.then_some(az),
                        elevation_deg: has_el.then_some(el),
                        power,
                    });
                }
                FeedbackKind::TargetParams(ts)
            }
            6 => FeedbackKind::CsiVariation(r.f64()?),
            t => return Err(FeedbackError::Malformed(format!("unknown payload tag {t}"))),
        };
        Ok(Self { kind, setup_id, instance_id })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantization::random_multipath_cfr;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn flat_cfr(n: usize) -> Cfr {
        Cfr::from_subcarriers(vec![Complex64::new(1.0, 0.0); n], 312.5e3, 5.8e9).unwrap()
    }

    fn naive_forward_dft(taps: &[Complex64]) -> Vec<Complex64> {
        let n = taps.len();
        (0..n)
            .map(|k| {
                let mut acc = Complex64::new(0.0, 0.0);
                for (t, v) in taps.iter().enumerate() {
                    let ph = -2.0 * std::f64::consts::PI * (k * t) as f64 / n as f64;
                    acc += v * Complex64::new(ph.cos(), ph.sin());
                }
                acc / (n as f64).sqrt()
            })
            .collect()
    }

    #[test]
    fn flat_cfr_gives_delta_at_tap_zero() {
        let h = flat_cfr(64);
        let cir = cfr_to_cir(&h);
        assert!((cir.at(0, 0).re - 8.0).abs() < 1e-9); // sqrt(64)
        for t in 1..64 {
            assert!(cir.at(t, 0).norm() < 1e-9, "tap {t} should be empty");
        }
    }

    #[test]
    fn linear_phase_shifts_the_delta() {
        let n = 64;
        let d = 5;
        let h: Vec<Complex64> = (0..n)
            .map(|k| {
                let ph = -2.0 * std::f64::consts::PI * (k * d) as f64 / n as f64;
                Complex64::new(ph.cos(), ph.sin())
            })
            .collect();
        let cfr = Cfr::from_subcarriers(h, 312.5e3, 5.8e9).unwrap();
        let cir = cfr_to_cir(&cfr);
        let peak = (0..n).max_by(|&a, &b| cir.at(a, 0).norm().total_cmp(&cir.at(b, 0).norm()));
        assert_eq!(peak, Some(d));
    }

    #[test]
    fn roundtrip_matches_forward_oracle() {
        let mut rng = ChaCha12Rng::seed_from_u64(31);
        let h = random_multipath_cfr(&mut rng, 128, 5, 312.5e3, 5.8e9);
        let cir = cfr_to_cir(&h);
        // independent naive forward transform recovers the input
        let forward = naive_forward_dft(cir.taps());
        for (a, b) in forward.iter().zip(h.values()) {
            assert!((a - b).norm() < 1e-9);
        }
        let back = cir_to_cfr(&cir);
        for (a, b) in back.values().iter().zip(h.values()) {
            assert!((a - b).norm() < 1e-9);
        }
        assert_eq!(back.subcarrier_spacing_hz(), h.subcarrier_spacing_hz());
    }

    #[test]
    fn parseval_energy_identity() {
        let mut rng = ChaCha12Rng::seed_from_u64(37);
        let h = random_multipath_cfr(&mut rng, 256, 6, 312.5e3, 5.8e9);
        let cir = cfr_to_cir(&h);
        let rel = (cir.energy() - h.energy()).abs() / h.energy();
        assert!(rel < 1e-12, "unitary transform must preserve energy");
    }

    #[test]
    fn tcir_keeps_single_path_energy() {
        // single path at sub-tap delay: almost all energy in tap 0
        let n = 256;
        let tau = 0.25e-9; // deep sub-tap: 0.02 of the 12.5 ns tap spacing
        let spacing = 312.5e3;
        let h: Vec<Complex64> = (0..n)
            .map(|k| {
                let ph = -2.0 * std::f64::consts::PI * spacing * k as f64 * tau;
                Complex64::new(ph.cos(), ph.sin())
            })
            .collect();
        let cfr = Cfr::from_subcarriers(h, spacing, 5.8e9).unwrap();
        let cir = cfr_to_cir(&cfr);
        let profile = cir.power_profile();
        let total: f64 = profile.iter().sum();
        let head: f64 = profile[..4].iter().sum();
        assert!(head / total > 0.99, "first taps carry {}", head / total);
    }

    #[test]
    fn tcir_full_length_is_lossless_up_to_quantization() {
        let mut rng = ChaCha12Rng::seed_from_u64(41);
        let h = random_multipath_cfr(&mut rng, 64, 4, 312.5e3, 5.8e9);
        let kind = encode_tcir(&h, 64, 14).unwrap();
        let cir = decode_tcir(&kind).unwrap();
        let back = cir_to_cfr(&cir);
        let m = crate::quantization::quant_error(&h, &back).unwrap();
        assert!(m.nmse_db < -60.0, "14-bit full-length TCIR NMSE {}", m.nmse_db);
    }

    #[test]
    fn tcir_tap_budget_for_indoor_range() {
        // 30 m maximum range at 160 MHz: ceil(2*30/c / (1/160e6)) = 32
        assert_eq!(tcir_taps_for_range(30.0, 1.0 / 160e6), 32);
    }

    #[test]
    fn tcir_truncation_error_equals_tail_energy() {
        let mut rng = ChaCha12Rng::seed_from_u64(43);
        let h = random_multipath_cfr(&mut rng, 128, 6, 312.5e3, 5.8e9);
        let cir = cfr_to_cir(&h);
        let l = 16;
        let mut head = cir.taps().to_vec();
        for v in head.iter_mut().skip(l) {
            *v = Complex64::new(0.0, 0.0);
        }
        let truncated = Cir::new(head, 1, cir.tap_spacing_s(), cir.center_freq_hz());
        let back = cir_to_cfr(&truncated);
        let err_energy: f64 = h
            .values()
            .iter()
            .zip(back.values())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum();
        let tail_energy: f64 = cir.power_profile()[l..].iter().sum();
        assert!((err_energy - tail_energy).abs() <= 1e-9 * tail_energy);
    }

    #[test]
    fn tcir_validation() {
        let h = flat_cfr(16);
        assert!(matches!(
            encode_tcir(&h, 0, 8),
            Err(FeedbackError::BadTruncation { l: 0, n: 16 })
        ));
        assert!(matches!(
            encode_tcir(&h, 17, 8),
            Err(FeedbackError::BadTruncation { l: 17, n: 16 })
        ));
    }

    #[test]
    fn diff_constant_cfr_all_zero_diffs() {
        let h = flat_cfr(64);
        let d = encode_diff(&h, 10, 4).unwrap();
        assert!(d.diffs.iter().all(|&(i, q)| i == 0 && q == 0));
        assert!(!d.saturated);
        let back = decode_diff(&d).unwrap();
        let m = crate::quantization::quant_error(&h, &back).unwrap();
        assert!(m.max_abs <= d.lsb);
    }

    #[test]
    fn diff_smooth_channel_shrinks_with_spacing() {
        // single path: differential magnitude scales with subcarrier
        // spacing (phase step per subcarrier)
        let tau = 50e-9;
        let make = |spacing: f64| {
            let h: Vec<Complex64> = (0..128)
                .map(|k| {
                    let ph = -2.0 * std::f64::consts::PI * spacing * k as f64 * tau;
                    Complex64::new(ph.cos(), ph.sin())
                })
                .collect();
            Cfr::from_subcarriers(h, spacing, 5.8e9).unwrap()
        };
        let wide = encode_diff(&make(312.5e3), 10, 8).unwrap();
        let narrow = encode_diff(&make(78.125e3), 10, 8).unwrap();
        let max_abs = |d: &DiffQuant| {
            d.diffs.iter().map(|&(i, q)| i.abs().max(q.abs())).max().unwrap()
        };
        assert!(
            max_abs(&narrow) < max_abs(&wide),
            "narrow spacing {} vs wide {}",
            max_abs(&narrow),
            max_abs(&wide)
        );
    }

    #[test]
    fn diff_reconstruction_error_does_not_grow() {
        let mut rng = ChaCha12Rng::seed_from_u64(47);
        // smooth-ish channel over 4096 subcarriers
        let n = 4096;
        let h: Vec<Complex64> = {
            let taps: Vec<(Complex64, f64)> = (0..4)
                .map(|i| {
                    (
                        Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
                        i as f64 * 5e-9,
                    )
                })
                .collect();
            (0..n)
                .map(|k| {
                    taps.iter()
                        .map(|(g, tau)| {
                            let ph = -2.0 * std::f64::consts::PI * 78.125e3 * k as f64 * tau;
                            g * Complex64::new(ph.cos(), ph.sin())
                        })
                        .sum()
                })
                .collect()
        };
        let cfr = Cfr::from_subcarriers(h, 78.125e3, 5.8e9).unwrap();
        let d = encode_diff(&cfr, 12, 8).unwrap();
        assert!(!d.saturated);
        let back = decode_diff(&d).unwrap();
        let err_at = |k: usize| (cfr.at(k, 0) - back.at(k, 0)).norm();
        let bound = d.lsb; // half an LSB on I and Q each
        for k in 0..n {
            assert!(err_at(k) <= bound, "error at subcarrier {k}: {} vs {bound}", err_at(k));
        }
        assert!(err_at(n - 1) <= err_at(1) + d.lsb, "no growth across the band");
    }

    #[test]
    fn diff_overflow_saturates_and_flags() {
        // first subcarrier tiny, later ones huge: diffs overflow 3 bits
        let mut h = vec![Complex64::new(0.01, 0.0); 8];
        for (i, v) in h.iter_mut().enumerate().skip(1) {
            *v = Complex64::new(10.0 * i as f64, 0.0);
        }
        let cfr = Cfr::from_subcarriers(h, 312.5e3, 5.8e9).unwrap();
        let d = encode_diff(&cfr, 8, 3).unwrap();
        assert!(d.saturated);
        assert!(d.diffs.iter().all(|&(i, q)| i.abs() <= 3 && q.abs() <= 3));
    }

    #[test]
    fn diff_width_validation() {
        let h = flat_cfr(4);
        assert!(matches!(
            encode_diff(&h, 6, 8),
            Err(FeedbackError::BadDiffWidths { first: 6, diff: 8 })
        ));
    }

    #[test]
    fn partial_compose_reproduces_codes_within_polar_bound() {
        let mut rng = ChaCha12Rng::seed_from_u64(53);
        let h = random_multipath_cfr(&mut rng, 64, 4, 312.5e3, 5.8e9);
        let amp = encode_partial(&h, 8, CsiPart::Amplitude).unwrap();
        let ph = encode_partial(&h, 8, CsiPart::Phase).unwrap();
        let composed = compose_partial(&amp, &ph).unwrap();
        // compare rectangular full-CSI codes of the original and of the
        // composed reconstruction: polar rounding perturbs a value by at
        // most (1+pi)/2 rectangular LSBs, so codes agree within 3
        let q1 = quantize_simplified(&h, 8).unwrap();
        let q2 = quantize_simplified(&composed, 8).unwrap();
        let mut max_dev = 0i32;
        for (&(a1, b1), &(a2, b2)) in q1.codes().iter().zip(q2.codes()) {
            max_dev = max_dev
                .max((a1 as i32 - a2 as i32).abs())
                .max((b1 as i32 - b2 as i32).abs());
        }
        assert!(max_dev <= 3, "polar/rect code deviation {max_dev}");
    }

    #[test]
    fn rda_map_static_target_at_zero_doppler() {
        let n_taps = 32;
        let tap = 7;
        let mut taps = vec![Complex64::new(0.0, 0.0); n_taps];
        taps[tap] = Complex64::new(1.0, 0.0);
        let cir = Cir::new(taps, 1, 1.0 / 160e6, 60e9);
        let burst: Vec<Cir> = (0..16).map(|_| cir.clone()).collect();
        let instants: Vec<f64> = (0..16).map(|i| i as f64 * 1e-4).collect();
        let map = build_rda_map(&burst, &instants, DopplerWindow::Rectangular, None).unwrap();
        let targets = extract_targets(&map, map.peak() * 0.5).unwrap();
        assert_eq!(targets.len(), 1);
        let expect_range = tap as f64 / 160e6 * SPEED_OF_LIGHT / 2.0;
        assert!((targets[0].range_m - expect_range).abs() < 1e-9);
        assert_eq!(targets[0].velocity_mps, 0.0);
    }

    #[test]
    fn rda_map_doppler_bin_at_two_way_shift() {
        // 5 m/s at 60 GHz monostatic: f_d = 2 f_c v / c = 2000.7 Hz;
        // 100 us intervals, 50 instances -> 200 Hz bins, peak in bin
        // nearest 2000 Hz
        let f_c = 60e9;
        let v = 5.0;
        let fd = 2.0 * f_c * v / SPEED_OF_LIGHT;
        let n_inst = 50;
        let dt = 1e-4;
        let tap = 3;
        let burst: Vec<Cir> = (0..n_inst)
            .map(|i| {
                let mut taps = vec![Complex64::new(0.0, 0.0); 16];
                let ph = 2.0 * std::f64::consts::PI * fd * (i as f64 * dt);
                taps[tap] = Complex64::new(ph.cos(), ph.sin());
                Cir::new(taps, 1, 1.0 / 160e6, f_c)
            })
            .collect();
        let instants: Vec<f64> = (0..n_inst).map(|i| i as f64 * dt).collect();
        let map = build_rda_map(&burst, &instants, DopplerWindow::Rectangular, None).unwrap();
        let targets = extract_targets(&map, map.peak() * 0.5).unwrap();
        assert_eq!(targets.len(), 1);
        let bin = 1.0 / (n_inst as f64 * dt);
        assert!((targets[0].velocity_mps - v).abs() <= bin * SPEED_OF_LIGHT / (2.0 * f_c));
    }

    #[test]
    fn rda_map_validation() {
        let cir = Cir::new(vec![Complex64::new(1.0, 0.0); 4], 1, 1e-8, 60e9);
        assert!(matches!(
            build_rda_map(&[cir.clone()], &[0.0], DopplerWindow::Rectangular, None),
            Err(FeedbackError::BurstTooShort(1))
        ));
        assert!(matches!(
            build_rda_map(
                &[cir.clone(), cir.clone(), cir.clone()],
                &[0.0, 1e-4, 3e-4],
                DopplerWindow::Rectangular,
                None
            ),
            Err(FeedbackError::NonUniformSpacing)
        ));
    }

    #[test]
    fn extract_targets_threshold_and_separation() {
        let n_taps = 32;
        let mk = |taps_idx: &[usize]| {
            let burst: Vec<Cir> = (0..8)
                .map(|_| {
                    let mut taps = vec![Complex64::new(0.0, 0.0); n_taps];
                    for &t in taps_idx {
                        taps[t] = Complex64::new(1.0, 0.0);
                    }
                    Cir::new(taps, 1, 1.0 / 160e6, 60e9)
                })
                .collect();
            let instants: Vec<f64> = (0..8).map(|i| i as f64 * 1e-4).collect();
            build_rda_map(&burst, &instants, DopplerWindow::Rectangular, None).unwrap()
        };
        let two = mk(&[5, 9]);
        let targets = extract_targets(&two, two.peak() * 0.4).unwrap();
        assert_eq!(targets.len(), 2);
        let empty = mk(&[5]);
        let none = extract_targets(&empty, empty.peak() * 2.0).unwrap();
        assert!(none.is_empty());
        assert!(matches!(
            extract_targets(&two, 0.0),
            Err(FeedbackError::BadThreshold)
        ));
    }

    #[test]
    fn mask_identity_key_preserves_channel() {
        let trn2 = crate::sequences::build_ce(crate::sequences::CeVariant::Ce0);
        let h = Cfr::from_subcarriers(
            (0..1024).map(|k| Complex64::new(1.0 + (k as f64 * 0.01).sin(), 0.2)).collect(),
            312.5e3,
            60e9,
        )
        .unwrap();
        // trn1 == trn2: the implied mask is all-ones
        let h_false = apply_mask_distortion(&h, &trn2, &trn2).unwrap();
        for (a, b) in h_false.values().iter().zip(h.values()) {
            assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn mask_roundtrip_recovers_channel() {
        let mut rng = ChaCha12Rng::seed_from_u64(59);
        let trn2 = crate::sequences::build_ce(crate::sequences::CeVariant::Ce0);
        let trn1 = mask_trn(&trn2, 0xfeed);
        let h = Cfr::from_subcarriers(
            (0..1024)
                .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect(),
            312.5e3,
            60e9,
        )
        .unwrap();
        let h_false = apply_mask_distortion(&h, &trn1, &trn2).unwrap();
        // responder-visible measurement differs markedly
        let distorted: f64 = h_false
            .values()
            .iter()
            .zip(h.values())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            / h.energy();
        assert!(distorted > 0.5, "mask should scramble the measurement ({distorted})");
        let recovered = unmask_measurement(&h_false, &trn1, &trn2).unwrap();
        for (a, b) in recovered.values().iter().zip(h.values()) {
            assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn mask_wrong_key_recovers_nothing() {
        let mut rng = ChaCha12Rng::seed_from_u64(61);
        let trn2 = crate::sequences::build_ce(crate::sequences::CeVariant::Ce0);
        let trn1 = mask_trn(&trn2, 0xfeed);
        let wrong = mask_trn(&trn2, 0xbeef);
        let h = Cfr::from_subcarriers(
            (0..1024)
                .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect(),
            312.5e3,
            60e9,
        )
        .unwrap();
        let h_false = apply_mask_distortion(&h, &trn1, &trn2).unwrap();
        let bad = unmask_measurement(&h_false, &wrong, &trn2).unwrap();
        let err: f64 = bad
            .values()
            .iter()
            .zip(h.values())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            / h.energy();
        assert!(err > 0.5, "wrong key must not recover the channel (err {err})");
    }

    #[test]
    fn mask_length_mismatch_rejected() {
        let trn2 = crate::sequences::build_ce(crate::sequences::CeVariant::Ce0);
        let h = flat_cfr(64);
        assert!(matches!(
            unmask_measurement(&h, &trn2, &trn2),
            Err(FeedbackError::MaskLengthMismatch { cfr: 64, trn: 1024 })
        ));
    }

    #[test]
    fn payload_byte_roundtrip() {
        let mut rng = ChaCha12Rng::seed_from_u64(67);
        let h = random_multipath_cfr(&mut rng, 32, 4, 312.5e3, 5.8e9);
        let cir = cfr_to_cir(&h);
        let burst: Vec<Cir> = (0..4).map(|_| cir.clone()).collect();
        let instants: Vec<f64> = (0..4).map(|i| i as f64 * 1e-4).collect();
        let map = build_rda_map(&burst, &instants, DopplerWindow::Hann, None).unwrap();
        let targets = extract_targets(&map, map.peak() * 0.5).unwrap();
        let payloads = vec![
            FeedbackKind::FullCsi(quantize_simplified(&h, 8).unwrap()),
            FeedbackKind::PartialCsi(encode_partial(&h, 8, CsiPart::Amplitude).unwrap()),
            FeedbackKind::PartialCsi(encode_partial(&h, 8, CsiPart::Phase).unwrap()),
            encode_tcir(&h, 8, 8).unwrap(),
            FeedbackKind::DiffQuant(encode_diff(&h, 10, 6).unwrap()),
            FeedbackKind::RdaMap(map),
            FeedbackKind::TargetParams(targets),
            FeedbackKind::CsiVariation(0.25),
        ];
        for (i, kind) in payloads.into_iter().enumerate() {
            let p = FeedbackPayload { kind, setup_id: 3, instance_id: i as u32 };
            let bytes = p.to_bytes();
            let back = FeedbackPayload::from_bytes(&bytes).unwrap();
            assert_eq!(p, back, "payload {i}");
        }
        assert!(FeedbackPayload::from_bytes(&[42]).is_err());
    }
}
