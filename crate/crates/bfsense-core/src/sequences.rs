//! Golay complementary pairs and the composite sensing sequences built
//! from them.
//!
//! Provides:
//! - recursive Golay complementary pair generation for lengths 2^n (n ≤ 16)
//! - the CE0/CE1 channel-estimation sequences (eight sign-weighted
//!   128-chip Golay blocks, 1024 chips total)
//! - the eight multi-static Sync sequences driven by the 8×8 sign matrix,
//!   one row per station
//! - exact aperiodic auto/cross correlation, plus the TRN-unit-gated
//!   complementary correlation used to score the Sync set
//!
//! Correlations of ±1 sequences are exact: every intermediate value is an
//! integer well inside the f64 mantissa.

use std::io::Write;
use std::sync::OnceLock;

use num_complex::Complex64;
use thiserror::Error;

/// Chip rate the composite CE/Sync sequences are tagged with (20 MHz, the
/// bandwidth the reference ambiguity plots use). Retag with
/// [`ChipSequence::with_chip_rate`] for other bands.
pub const DEFAULT_CHIP_RATE_HZ: f64 = 20e6;

/// Length of one Golay block inside the CE/Sync composites.
pub const SYNC_BLOCK_LEN: usize = 128;

/// Number of blocks in a CE/Sync composite (8 × 128 = 1024 chips).
pub const SYNC_BLOCK_COUNT: usize = 8;

/// Which of the eight Sync blocks carry the Gi sequence (the rest carry Gj).
/// Selected by constrained search so the gated within-group
/// cross-correlations vanish exactly while cross-group values stay low
/// but nonzero.
pub const SYNC_BLOCK_PATTERN: [bool; 8] = [true, true, true, true, false, false, false, false];

/// Largest gated cross-correlation magnitude between the first-four and
/// last-four Sync sequences (regression constant; the peak is 1024).
pub const SYNC_CROSS_GROUP_MAX: i64 = 208;

/// Errors from sequence construction and correlation.
#[derive(Debug, Error, PartialEq)]
pub enum SequenceError {
    #[error("seed vectors have length {got}, expected n_exp = {expected}")]
    SeedLength { expected: usize, got: usize },
    #[error("delay exponents are not a permutation of 0..{0}")]
    NotPermutation(usize),
    #[error("seed weights must be +1 or -1")]
    BadWeight,
    #[error("n_exp must be in 1..=16, got {0}")]
    OrderOutOfRange(usize),
    #[error("sync row {0} out of range 1..=8")]
    SyncRowOutOfRange(u8),
    #[error("empty chip sequence")]
    Empty,
    #[error("chip rate mismatch: {0} Hz vs {1} Hz")]
    ChipRateMismatch(f64, f64),
    #[error("length {len} not divisible into {block}-chip blocks")]
    BlockMismatch { len: usize, block: usize },
}

/// A finite sequence of complex chips with a chip rate. Binary
/// constructions hold ±1 with zero imaginary part.
#[derive(Debug, Clone, PartialEq)]
pub struct ChipSequence {
    chips: Vec<Complex64>,
    chip_rate_hz: f64,
}

impl ChipSequence {
    pub fn new(chips: Vec<Complex64>, chip_rate_hz: f64) -> Result<Self, SequenceError> {
        if chips.is_empty() {
            return Err(SequenceError::Empty);
        }
        Ok(Self { chips, chip_rate_hz })
    }

    /// Build from ±1 integers.
    pub fn from_pm1(chips: &[i64], chip_rate_hz: f64) -> Result<Self, SequenceError> {
        Self::new(
            chips.iter().map(|&c| Complex64::new(c as f64, 0.0)).collect(),
            chip_rate_hz,
        )
    }

    pub fn chips(&self) -> &[Complex64] {
        &self.chips
    }

    pub fn len(&self) -> usize {
        self.chips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chips.is_empty()
    }

    pub fn chip_rate_hz(&self) -> f64 {
        self.chip_rate_hz
    }

    /// Sequence duration in seconds.
    pub fn duration_s(&self) -> f64 {
        self.chips.len() as f64 / self.chip_rate_hz
    }

    /// Sum of squared chip magnitudes.
    pub fn energy(&self) -> f64 {
        self.chips.iter().map(|c| c.norm_sqr()).sum()
    }

    /// True when every chip is exactly +1 or -1 (real).
    pub fn is_binary(&self) -> bool {
        self.chips
            .iter()
            .all(|c| c.im == 0.0 && (c.re == 1.0 || c.re == -1.0))
    }

    pub fn with_chip_rate(mut self, chip_rate_hz: f64) -> Self {
        self.chip_rate_hz = chip_rate_hz;
        self
    }

    /// Write as CSV, one chip per line with `real,imag` columns.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "real,imag")?;
        for c in &self.chips {
            writeln!(w, "{},{}", c.re, c.im)?;
        }
        Ok(())
    }
}

/// Seed of the recursive Golay pair construction: per-stage delay
/// exponents (a permutation of 0..n-1, the stage delay is 2^d) and ±1
/// weights.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GolaySeed {
    delay_exponents: Vec<u32>,
    weights: Vec<i8>,
}

impl GolaySeed {
    pub fn new(delay_exponents: Vec<u32>, weights: Vec<i8>) -> Result<Self, SequenceError> {
        let n = delay_exponents.len();
        if weights.len() != n {
            return Err(SequenceError::SeedLength { expected: n, got: weights.len() });
        }
        let mut seen = vec![false; n];
        for &d in &delay_exponents {
            if (d as usize) >= n || seen[d as usize] {
                return Err(SequenceError::NotPermutation(n));
            }
            seen[d as usize] = true;
        }
        if weights.iter().any(|&w| w != 1 && w != -1) {
            return Err(SequenceError::BadWeight);
        }
        Ok(Self { delay_exponents, weights })
    }

    pub fn order(&self) -> usize {
        self.delay_exponents.len()
    }

    pub fn delay_exponents(&self) -> &[u32] {
        &self.delay_exponents
    }

    pub fn weights(&self) -> &[i8] {
        &self.weights
    }

    /// Recorded seed of the first 128-chip base pair (Ga7/Gb7).
    pub fn stream7() -> Self {
        Self::new((0..7).collect(), vec![1; 7]).expect("valid constant seed")
    }

    /// Recorded seed of the second 128-chip base pair (Ga8/Gb8). The only
    /// seed in the family whose pair is cross-complementary with the
    /// stream-7 pair: C_{a7,a8}(k) + C_{b7,b8}(k) = 0 at every lag, which
    /// the Sync set needs for its within-group zeros.
    pub fn stream8() -> Self {
        Self::new((0..7).collect(), vec![-1, 1, 1, 1, 1, 1, 1]).expect("valid constant seed")
    }
}

/// The 8×8 ±1 coefficient matrix driving the Sync sequences. Rows come in
/// identical consecutive pairs (1=2, 3=4, 5=6, 7=8); distinct rows are
/// mutually orthogonal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyncMatrix {
    m: [[i8; 8]; 8],
}

pub const SYNC_MATRIX: SyncMatrix = SyncMatrix {
    m: [
        [1, -1, 1, -1, 1, 1, 1, 1],
        [1, -1, 1, -1, 1, 1, 1, 1],
        [1, 1, -1, -1, 1, -1, -1, 1],
        [1, 1, -1, -1, 1, -1, -1, 1],
        [-1, 1, -1, 1, 1, 1, 1, 1],
        [-1, 1, -1, 1, 1, 1, 1, 1],
        [1, -1, -1, 1, -1, -1, 1, 1],
        [1, -1, -1, 1, -1, -1, 1, 1],
    ],
};

impl SyncMatrix {
    /// Entry for station row `r` (1-based) and block column `c` (1-based).
    pub fn entry(&self, r: usize, c: usize) -> i8 {
        self.m[r - 1][c - 1]
    }

    pub fn rows(&self) -> &[[i8; 8]; 8] {
        &self.m
    }
}

fn golay_pair_i64(n_exp: usize, seed: &GolaySeed) -> Result<(Vec<i64>, Vec<i64>), SequenceError> {
    if !(1..=16).contains(&n_exp) {
        return Err(SequenceError::OrderOutOfRange(n_exp));
    }
    if seed.order() != n_exp {
        return Err(SequenceError::SeedLength { expected: n_exp, got: seed.order() });
    }
    let len = 1usize << n_exp;
    let mut a = vec![0i64; len];
    let mut b = vec![0i64; len];
    a[0] = 1;
    b[0] = 1;
    for k in 0..n_exp {
        let d = 1usize << seed.delay_exponents[k];
        let w = seed.weights[k] as i64;
        let mut na = vec![0i64; len];
        let mut nb = vec![0i64; len];
        for t in 0..len {
            let delayed = if t >= d { b[t - d] } else { 0 };
            na[t] = a[t] + w * delayed;
            nb[t] = a[t] - w * delayed;
        }
        a = na;
        b = nb;
    }
    Ok((a, b))
}

/// Construct a Golay complementary pair of length 2^n_exp from a seed.
///
/// The pair satisfies autocorr(Ga) + autocorr(Gb) = 2·2^n_exp at lag 0 and
/// exactly 0 at every other lag, for every valid seed.
pub fn golay_pair(
    n_exp: usize,
    seed: &GolaySeed,
) -> Result<(ChipSequence, ChipSequence), SequenceError> {
    let (a, b) = golay_pair_i64(n_exp, seed)?;
    Ok((
        ChipSequence::from_pm1(&a, DEFAULT_CHIP_RATE_HZ)?,
        ChipSequence::from_pm1(&b, DEFAULT_CHIP_RATE_HZ)?,
    ))
}

type PairI64 = (Vec<i64>, Vec<i64>);

fn base_pairs() -> &'static (PairI64, PairI64) {
    static PAIRS: OnceLock<(PairI64, PairI64)> = OnceLock::new();
    PAIRS.get_or_init(|| {
        let p7 = golay_pair_i64(7, &GolaySeed::stream7()).expect("constant seed");
        let p8 = golay_pair_i64(7, &GolaySeed::stream8()).expect("constant seed");
        (p7, p8)
    })
}

/// Channel-estimation sequence variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CeVariant {
    Ce0,
    Ce1,
}

/// Build CE0 = [Ga7, -Gb7, Ga7, -Gb7, Ga7, Gb7, Ga7, Gb7] or the CE1
/// analogue on the stream-8 pair. 1024 chips.
pub fn build_ce(variant: CeVariant) -> ChipSequence {
    let (p7, p8) = base_pairs();
    let (ga, gb) = match variant {
        CeVariant::Ce0 => (&p7.0, &p7.1),
        CeVariant::Ce1 => (&p8.0, &p8.1),
    };
    let signs_on_b = [-1i64, -1, 1, 1];
    let mut chips = Vec::with_capacity(1024);
    for &sign in &signs_on_b {
        chips.extend(ga.iter().copied());
        chips.extend(gb.iter().map(|&c| sign * c));
    }
    ChipSequence::from_pm1(&chips, DEFAULT_CHIP_RATE_HZ).expect("constant construction")
}

/// Build the Sync sequence for station row `r` (1..=8): eight 128-chip
/// Golay blocks, block c signed by the matrix entry M(r,c), the first four
/// blocks carrying Gi and the last four Gj per [`SYNC_BLOCK_PATTERN`].
///
/// Rows 1..4 take (Gi, Gj) = (Ga, Gb) of their stream pair, rows 5..8 swap
/// the roles. Odd rows use the stream-7 pair, even rows stream-8.
pub fn build_sync(r: u8) -> Result<ChipSequence, SequenceError> {
    if !(1..=8).contains(&r) {
        return Err(SequenceError::SyncRowOutOfRange(r));
    }
    let (p7, p8) = base_pairs();
    let pair = if r % 2 == 1 { p7 } else { p8 };
    let (gi, gj) = if r <= 4 { (&pair.0, &pair.1) } else { (&pair.1, &pair.0) };
    let mut chips = Vec::with_capacity(SYNC_BLOCK_LEN * SYNC_BLOCK_COUNT);
    for c in 0..SYNC_BLOCK_COUNT {
        let block = if SYNC_BLOCK_PATTERN[c] { gi } else { gj };
        let sign = SYNC_MATRIX.entry(r as usize, c + 1) as i64;
        chips.extend(block.iter().map(|&x| sign * x));
    }
    ChipSequence::from_pm1(&chips, DEFAULT_CHIP_RATE_HZ)
}

/// Aperiodic cross-correlation C(k) = Σ_n a(n)·conj(b(n-k)) at all lags
/// k = -(len(b)-1) ..= len(a)-1. Conjugate-symmetric when a = b. Exact for
/// ±1 inputs.
pub fn aperiodic_xcorr(
    a: &ChipSequence,
    b: &ChipSequence,
) -> Result<Vec<Complex64>, SequenceError> {
    if a.is_empty() || b.is_empty() {
        return Err(SequenceError::Empty);
    }
    if a.chip_rate_hz != b.chip_rate_hz {
        return Err(SequenceError::ChipRateMismatch(a.chip_rate_hz, b.chip_rate_hz));
    }
    Ok(xcorr_slices(a.chips(), b.chips()))
}

pub(crate) fn xcorr_slices(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    let (n, m) = (a.len(), b.len());
    let mut out = vec![Complex64::new(0.0, 0.0); n + m - 1];
    for (i, slot) in out.iter_mut().enumerate() {
        let k = i as isize - (m as isize - 1);
        let lo = k.max(0) as usize;
        let hi = n.min((m as isize + k).max(0) as usize);
        let mut acc = Complex64::new(0.0, 0.0);
        for (t, &av) in a.iter().enumerate().take(hi).skip(lo) {
            acc += av * b[(t as isize - k) as usize].conj();
        }
        *slot = acc;
    }
    out
}

/// TRN-unit-gated complementary correlation: split both sequences into
/// `block_len`-chip blocks, correlate block c of `a` against block c of
/// `b`, and sum across blocks at equal intra-block lag. This is how a
/// Golay-structured field is consumed by a block-gated receiver, and it is
/// the metric under which the Sync set meets its correlation targets.
///
/// Returns 2·block_len - 1 lags (-(block_len-1) ..= block_len-1).
pub fn gated_xcorr(
    a: &ChipSequence,
    b: &ChipSequence,
    block_len: usize,
) -> Result<Vec<Complex64>, SequenceError> {
    if a.is_empty() || b.is_empty() || block_len == 0 {
        return Err(SequenceError::Empty);
    }
    if a.chip_rate_hz != b.chip_rate_hz {
        return Err(SequenceError::ChipRateMismatch(a.chip_rate_hz, b.chip_rate_hz));
    }
    if a.len() != b.len() || a.len() % block_len != 0 {
        return Err(SequenceError::BlockMismatch { len: a.len(), block: block_len });
    }
    let mut acc = vec![Complex64::new(0.0, 0.0); 2 * block_len - 1];
    for blk in 0..(a.len() / block_len) {
        let sa = &a.chips()[blk * block_len..(blk + 1) * block_len];
        let sb = &b.chips()[blk * block_len..(blk + 1) * block_len];
        for (slot, v) in acc.iter_mut().zip(xcorr_slices(sa, sb)) {
            *slot += v;
        }
    }
    Ok(acc)
}

/// Concatenated Sync fields of a multistatic sensing PPDU, one
/// 1024-chip field per assigned matrix row, in slot order.
pub fn multistatic_sync_field(rows: &[u8]) -> Result<ChipSequence, SequenceError> {
    if rows.is_empty() {
        return Err(SequenceError::Empty);
    }
    let mut chips = Vec::with_capacity(rows.len() * 1024);
    for &r in rows {
        chips.extend_from_slice(build_sync(r)?.chips());
    }
    ChipSequence::new(chips, DEFAULT_CHIP_RATE_HZ)
}

/// Gated correlation peak of each 1024-chip slot of `field` against the
/// Sync row `r`: the slot carrying row r reads exactly 1024, same-group
/// slots read 0.
pub fn locate_sync_slot(field: &ChipSequence, r: u8) -> Result<Vec<f64>, SequenceError> {
    let own = build_sync(r)?;
    let n_slots = field.len() / 1024;
    let mut peaks = Vec::with_capacity(n_slots);
    for slot in 0..n_slots {
        let seg = ChipSequence::new(
            field.chips()[slot * 1024..(slot + 1) * 1024].to_vec(),
            field.chip_rate_hz(),
        )?;
        let g = gated_xcorr(&seg, &own, SYNC_BLOCK_LEN)?;
        peaks.push(g.iter().map(|v| v.norm()).fold(0.0, f64::max));
    }
    Ok(peaks)
}

/// 8×8 correlation summary of the Sync set under the gated metric:
/// diagonal entries are the maximum autocorrelation sidelobe magnitude,
/// off-diagonal entries the maximum cross-correlation magnitude. All
/// values are exact integers (the peak, not listed, is 1024).
pub fn sync_correlation_summary() -> Result<[[i64; 8]; 8], SequenceError> {
    let syncs: Vec<ChipSequence> = (1..=8).map(build_sync).collect::<Result<_, _>>()?;
    let mut out = [[0i64; 8]; 8];
    for (i, si) in syncs.iter().enumerate() {
        for (j, sj) in syncs.iter().enumerate() {
            let g = gated_xcorr(si, sj, SYNC_BLOCK_LEN)?;
            let mid = g.len() / 2;
            let max = g
                .iter()
                .enumerate()
                .filter(|&(idx, _)| i != j || idx != mid)
                .map(|(_, v)| v.norm())
                .fold(0.0_f64, f64::max);
            out[i][j] = max.round() as i64;
        }
    }
    Ok(out)
}
