//! Hybrid indoor channel: deterministic single-bounce rays from a scene
//! plus autoregressive target-unrelated clutter.
//!
//! A scene is a shoebox room with static scatterers, moving point targets
//! and station placements. For each TX-RX pair the channel frequency
//! response sums the line-of-sight ray (when TX ≠ RX), one bounce off
//! every target and scatterer, and a set of AR(1) clutter taps that stand
//! in for everything the ray model does not capture. Everything is
//! deterministic under the scene seed.

use std::collections::HashMap;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::feedback::SPEED_OF_LIGHT;
use crate::quantization::Cfr;

#[derive(Debug, Error, PartialEq)]
pub enum ChannelError {
    #[error("unknown STA id '{0}'")]
    UnknownSta(String),
    #[error("band: subcarrier spacing must be positive")]
    BadBand,
    #[error("clutter AR coefficient must be in [0, 1)")]
    BadClutter,
    #[error("position {0:?} outside the room")]
    OutsideRoom([f64; 3]),
    #[error("no such propagation path: {0}")]
    MissingPath(String),
}

/// Antenna model of a station (azimuth-plane pattern).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Antenna {
    Isotropic,
    /// Cosine-power mainlobe with a -20 dB floor.
    Directional { boresight_deg: f64, beamwidth_deg: f64 },
}

impl Antenna {
    /// Amplitude gain toward an azimuth direction (degrees).
    pub fn amplitude_gain(&self, toward_deg: f64) -> f64 {
        match *self {
            Antenna::Isotropic => 1.0,
            Antenna::Directional { boresight_deg, beamwidth_deg } => {
                let delta = (toward_deg - boresight_deg).to_radians();
                let half = (beamwidth_deg.to_radians() / 2.0).max(1e-6);
                // exponent solving cos^p(half) = 1/2 (half-power at the
                // beam edges)
                let p = (0.5_f64).ln() / half.cos().max(1e-12).ln();
                let c = delta.cos();
                let power_gain = if c <= 0.0 { 0.01 } else { c.powf(p).max(0.01) };
                power_gain.sqrt()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scatterer {
    pub position: [f64; 3],
    /// Radar-cross-section-like reflectivity in m².
    pub reflectivity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub position: [f64; 3],
    pub velocity: [f64; 3],
    pub rcs_sqm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaPlacement {
    pub id: String,
    pub position: [f64; 3],
    #[serde(default = "default_antenna")]
    pub antenna: Antenna,
}

fn default_antenna() -> Antenna {
    Antenna::Isotropic
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClutterSpec {
    /// AR(1) coefficient ρ, in [0, 1).
    pub ar_coefficient: f64,
    /// Stationary per-tap power.
    pub power: f64,
    #[serde(default = "default_clutter_taps")]
    pub taps: usize,
}

fn default_clutter_taps() -> usize {
    8
}

impl Default for ClutterSpec {
    fn default() -> Self {
        Self { ar_coefficient: 0.9, power: 0.0, taps: 8 }
    }
}

/// Static description of a scene (the serializable part).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    /// Axis-aligned room dimensions in metres; positions live in
    /// [0, room[i]].
    pub room: [f64; 3],
    #[serde(default)]
    pub static_scatterers: Vec<Scatterer>,
    #[serde(default)]
    pub targets: Vec<Target>,
    pub stas: Vec<StaPlacement>,
    #[serde(default)]
    pub clutter: ClutterSpec,
    pub noise_floor_dbm: f64,
    pub seed: u64,
}

/// Band profile: center frequency, bandwidth, subcarrier count, SIFS.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandConfig {
    pub center_freq_hz: f64,
    pub bandwidth_hz: f64,
    pub n_subcarriers: usize,
    pub sifs_s: f64,
}

impl BandConfig {
    pub fn new(
        center_freq_hz: f64,
        bandwidth_hz: f64,
        n_subcarriers: usize,
        sifs_s: f64,
    ) -> Result<Self, ChannelError> {
        let cfg = Self { center_freq_hz, bandwidth_hz, n_subcarriers, sifs_s };
        if n_subcarriers == 0 || cfg.subcarrier_spacing_hz() <= 0.0 {
            return Err(ChannelError::BadBand);
        }
        Ok(cfg)
    }

    /// Sub-7 GHz profile: 5.8 GHz, 160 MHz, 256 subcarriers, 16 µs SIFS.
    pub fn sub7() -> Self {
        Self { center_freq_hz: 5.8e9, bandwidth_hz: 160e6, n_subcarriers: 256, sifs_s: 16e-6 }
    }

    /// 60 GHz profile: 1.76 GHz bandwidth, 512 subcarriers, 3 µs SIFS.
    pub fn dmg() -> Self {
        Self { center_freq_hz: 60e9, bandwidth_hz: 1.76e9, n_subcarriers: 512, sifs_s: 3e-6 }
    }

    pub fn subcarrier_spacing_hz(&self) -> f64 {
        self.bandwidth_hz / self.n_subcarriers as f64
    }

    pub fn wavelength_m(&self) -> f64 {
        SPEED_OF_LIGHT / self.center_freq_hz
    }
}

#[derive(Debug, Clone)]
struct ClutterTap {
    delay_s: f64,
    value: Complex64,
}

#[derive(Debug, Clone)]
struct ClutterState {
    taps: Vec<ClutterTap>,
    rng: ChaCha12Rng,
}

/// Which propagation path a link budget refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathKind {
    Los,
    /// Bounce off `targets[i]`.
    TargetEcho(usize),
}

/// A scene with evolving target positions and clutter state.
#[derive(Debug, Clone)]
pub struct Scene {
    spec: SceneSpec,
    target_state: Vec<Target>,
    clutter: HashMap<(String, String), ClutterState>,
    time_s: f64,
}

fn cn(rng: &mut ChaCha12Rng, var: f64) -> Complex64 {
    let s = (var / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re * s, im * s)
}

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

fn azimuth_deg(from: [f64; 3], to: [f64; 3]) -> f64 {
    (to[1] - from[1]).atan2(to[0] - from[0]).to_degrees()
}

impl Scene {
    pub fn new(spec: SceneSpec) -> Result<Self, ChannelError> {
        if !(0.0..1.0).contains(&spec.clutter.ar_coefficient) {
            return Err(ChannelError::BadClutter);
        }
        let inside = |p: [f64; 3]| {
            p.iter().zip(&spec.room).all(|(&x, &dim)| x >= 0.0 && x <= dim)
        };
        for p in spec
            .stas
            .iter()
            .map(|s| s.position)
            .chain(spec.targets.iter().map(|t| t.position))
            .chain(spec.static_scatterers.iter().map(|s| s.position))
        {
            if !inside(p) {
                return Err(ChannelError::OutsideRoom(p));
            }
        }
        // clutter taps per unordered STA pair (including tx == rx), all
        // materialized up front so evolution is query-order independent
        let max_delay = 2.0 * (spec.room.iter().map(|d| d * d).sum::<f64>()).sqrt()
            / SPEED_OF_LIGHT;
        let mut clutter = HashMap::new();
        for (i, a) in spec.stas.iter().enumerate() {
            for b in spec.stas.iter().skip(i) {
                let key = pair_key(&a.id, &b.id);
                let mut rng = ChaCha12Rng::seed_from_u64(
                    spec.seed ^ hash_pair(&key.0, &key.1) ^ 0xc1a7_7e12,
                );
                let taps = (0..spec.clutter.taps)
                    .map(|_| ClutterTap {
                        delay_s: rng.gen_range(0.0..max_delay.max(1e-9)),
                        value: cn(&mut rng, spec.clutter.power),
                    })
                    .collect();
                clutter.insert(key, ClutterState { taps, rng });
            }
        }
        let target_state = spec.targets.clone();
        Ok(Self { spec, target_state, clutter, time_s: 0.0 })
    }

    pub fn spec(&self) -> &SceneSpec {
        &self.spec
    }

    pub fn time_s(&self) -> f64 {
        self.time_s
    }

    /// Current target states (positions updated by [`Scene::advance`]).
    pub fn targets(&self) -> &[Target] {
        &self.target_state
    }

    pub fn sta(&self, id: &str) -> Result<&StaPlacement, ChannelError> {
        self.spec
            .stas
            .iter()
            .find(|s| s.id == id)
            .ok_or_else(|| ChannelError::UnknownSta(id.to_string()))
    }

    fn target_position_at(&self, idx: usize, t: f64) -> [f64; 3] {
        let tg = &self.target_state[idx];
        let dt = t - self.time_s;
        [
            tg.position[0] + tg.velocity[0] * dt,
            tg.position[1] + tg.velocity[1] * dt,
            tg.position[2] + tg.velocity[2] * dt,
        ]
    }

    /// Deterministic single-bounce rays for a link at time `t`:
    /// (delay s, complex amplitude factor already including antenna
    /// gains). Time only extrapolates target motion; call
    /// [`Scene::advance`] to commit motion and evolve clutter.
    fn rays(
        &self,
        band: &BandConfig,
        tx: &StaPlacement,
        rx: &StaPlacement,
        t: f64,
    ) -> Vec<(f64, f64)> {
        let lambda = band.wavelength_m();
        let mut rays = Vec::new();
        if tx.id != rx.id {
            let d = dist(tx.position, rx.position).max(1e-3);
            let g = tx.antenna.amplitude_gain(azimuth_deg(tx.position, rx.position))
                * rx.antenna.amplitude_gain(azimuth_deg(rx.position, tx.position));
            rays.push((d / SPEED_OF_LIGHT, lambda / (4.0 * std::f64::consts::PI * d) * g));
        }
        let bounce = |obj: [f64; 3], sigma: f64| -> (f64, f64) {
            let d1 = dist(tx.position, obj).max(1e-3);
            let d2 = dist(obj, rx.position).max(1e-3);
            let g = tx.antenna.amplitude_gain(azimuth_deg(tx.position, obj))
                * rx.antenna.amplitude_gain(azimuth_deg(rx.position, obj));
            // order the distance product so swapping tx and rx is
            // bit-identical
            let (da, db) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
            let four_pi = 4.0 * std::f64::consts::PI;
            let amp = lambda * sigma.sqrt() / (four_pi.powf(1.5) * da * db) * g;
            ((d1 + d2) / SPEED_OF_LIGHT, amp)
        };
        for i in 0..self.target_state.len() {
            let pos = self.target_position_at(i, t);
            rays.push(bounce(pos, self.target_state[i].rcs_sqm));
        }
        for sc in &self.spec.static_scatterers {
            rays.push(bounce(sc.position, sc.reflectivity));
        }
        rays
    }

    /// Channel frequency response of the (tx, rx) link at time `t`.
    /// Monostatic links (tx == rx) carry echoes only. Subcarrier k sits at
    /// center + (k - N/2)·spacing.
    pub fn cfr_at(
        &self,
        band: &BandConfig,
        tx_id: &str,
        rx_id: &str,
        t: f64,
    ) -> Result<Cfr, ChannelError> {
        let tx = self.sta(tx_id)?;
        let rx = self.sta(rx_id)?;
        let rays = self.rays(band, tx, rx, t);
        let clutter = self
            .clutter
            .get(&pair_key(tx_id, rx_id))
            .map(|c| c.taps.as_slice())
            .unwrap_or(&[]);
        let n = band.n_subcarriers;
        let spacing = band.subcarrier_spacing_hz();
        let fc = band.center_freq_hz;
        let h: Vec<Complex64> = (0..n)
            .map(|k| {
                let f_off = (k as f64 - n as f64 / 2.0) * spacing;
                let mut acc = Complex64::new(0.0, 0.0);
                for &(tau, amp) in &rays {
                    // carrier phase at fc plus baseband rotation
                    let phase = -2.0 * std::f64::consts::PI * (fc + f_off) * tau;
                    acc += amp * Complex64::new(phase.cos(), phase.sin());
                }
                for tap in clutter {
                    let phase = -2.0 * std::f64::consts::PI * f_off * tap.delay_s;
                    acc += tap.value * Complex64::new(phase.cos(), phase.sin());
                }
                acc
            })
            .collect();
        Ok(Cfr::from_subcarriers(h, spacing, fc).expect("finite synthesis"))
    }

    /// Advance scene time: integrate target motion with elastic wall
    /// reflections and evolve the clutter one AR(1) step. `dt = 0` is the
    /// identity.
    pub fn advance(&mut self, dt: f64) {
        if dt == 0.0 {
            return;
        }
        for tg in &mut self.target_state {
            for ax in 0..3 {
                let mut x = tg.position[ax] + tg.velocity[ax] * dt;
                let dim = self.spec.room[ax];
                // fold the coordinate back into the box, flipping the
                // velocity once per wall crossing
                loop {
                    if x < 0.0 {
                        x = -x;
                        tg.velocity[ax] = -tg.velocity[ax];
                    } else if x > dim {
                        x = 2.0 * dim - x;
                        tg.velocity[ax] = -tg.velocity[ax];
                    } else {
                        break;
                    }
                }
                tg.position[ax] = x;
            }
        }
        let rho = self.spec.clutter.ar_coefficient;
        let power = self.spec.clutter.power;
        for state in self.clutter.values_mut() {
            for tap in &mut state.taps {
                let innov = cn(&mut state.rng, power);
                tap.value = rho * tap.value + (1.0 - rho * rho).sqrt() * innov;
            }
        }
        self.time_s += dt;
    }

    /// Link budget of one path in dB relative to the scene noise floor.
    pub fn snr_at(
        &self,
        band: &BandConfig,
        tx_id: &str,
        rx_id: &str,
        tx_power_dbm: f64,
        path: PathKind,
    ) -> Result<f64, ChannelError> {
        let tx = self.sta(tx_id)?;
        let rx = self.sta(rx_id)?;
        let lambda = band.wavelength_m();
        let rx_dbm = match path {
            PathKind::Los => {
                if tx_id == rx_id {
                    return Err(ChannelError::MissingPath(
                        "LOS undefined for a monostatic link".into(),
                    ));
                }
                let d = dist(tx.position, rx.position).max(1e-3);
                let g = tx.antenna.amplitude_gain(azimuth_deg(tx.position, rx.position))
                    * rx.antenna.amplitude_gain(azimuth_deg(rx.position, tx.position));
                let amp = lambda / (4.0 * std::f64::consts::PI * d) * g;
                tx_power_dbm + 20.0 * amp.log10()
            }
            PathKind::TargetEcho(i) => {
                if i >= self.target_state.len() {
                    return Err(ChannelError::MissingPath(format!("no target {i}")));
                }
                let pos = self.target_position_at(i, self.time_s);
                let d1 = dist(tx.position, pos).max(1e-3);
                let d2 = dist(pos, rx.position).max(1e-3);
                let g = tx.antenna.amplitude_gain(azimuth_deg(tx.position, pos))
                    * rx.antenna.amplitude_gain(azimuth_deg(rx.position, pos));
                let four_pi = 4.0 * std::f64::consts::PI;
                let amp = lambda * self.target_state[i].rcs_sqm.sqrt()
                    / (four_pi.powf(1.5) * d1 * d2)
                    * g;
                tx_power_dbm + 20.0 * amp.log10()
            }
        };
        Ok(rx_dbm - self.spec.noise_floor_dbm)
    }
}

fn pair_key(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

fn hash_pair(a: &str, b: &str) -> u64 {
    // stable FNV-1a over both ids
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in a.bytes().chain([0u8]).chain(b.bytes()) {
        h ^= byte as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feedback::cfr_to_cir;

    fn base_spec() -> SceneSpec {
        SceneSpec {
            room: [6.0, 4.0, 3.0],
            static_scatterers: vec![],
            targets: vec![],
            stas: vec![
                StaPlacement { id: "ap".into(), position: [0.5, 2.0, 1.5], antenna: Antenna::Isotropic },
                StaPlacement { id: "sta1".into(), position: [4.5, 2.0, 1.5], antenna: Antenna::Isotropic },
            ],
            clutter: ClutterSpec { ar_coefficient: 0.9, power: 0.0, taps: 8 },
            noise_floor_dbm: -95.0,
            seed: 7,
        }
    }

    #[test]
    fn los_delay_lands_on_expected_tap() {
        let scene = Scene::new(base_spec()).unwrap();
        let band = BandConfig::sub7();
        let h = scene.cfr_at(&band, "ap", "sta1", 0.0).unwrap();
        let cir = cfr_to_cir(&h);
        let d = 4.0; // metres between ap and sta1
        let expected_tap =
            (d / SPEED_OF_LIGHT / cir.tap_spacing_s()).round() as usize;
        let peak = (0..cir.n_taps())
            .max_by(|&a, &b| cir.at(a, 0).norm().total_cmp(&cir.at(b, 0).norm()))
            .unwrap();
        assert_eq!(peak, expected_tap);
    }

    #[test]
    fn monostatic_echo_at_round_trip_delay() {
        let mut spec = base_spec();
        spec.targets = vec![Target { position: [3.5, 2.0, 1.5], velocity: [0.0; 3], rcs_sqm: 1.0 }];
        let scene = Scene::new(spec).unwrap();
        let band = BandConfig::sub7();
        let h = scene.cfr_at(&band, "ap", "ap", 0.0).unwrap();
        let cir = cfr_to_cir(&h);
        let r = 3.0;
        let expected_tap =
            (2.0 * r / SPEED_OF_LIGHT / cir.tap_spacing_s()).round() as usize;
        let peak = (0..cir.n_taps())
            .max_by(|&a, &b| cir.at(a, 0).norm().total_cmp(&cir.at(b, 0).norm()))
            .unwrap();
        assert_eq!(peak, expected_tap);
    }

    #[test]
    fn doppler_phase_progression_matches_two_way_rate() {
        let mut spec = base_spec();
        // radial motion toward the monostatic sensor
        spec.targets =
            vec![Target { position: [3.5, 2.0, 1.5], velocity: [-0.5, 0.0, 0.0], rcs_sqm: 1.0 }];
        let scene = Scene::new(spec).unwrap();
        let band = BandConfig::sub7();
        let dt = 1e-3;
        let h0 = scene.cfr_at(&band, "ap", "ap", 0.0).unwrap();
        let h1 = scene.cfr_at(&band, "ap", "ap", dt).unwrap();
        let c0 = cfr_to_cir(&h0);
        let c1 = cfr_to_cir(&h1);
        let peak = (0..c0.n_taps())
            .max_by(|&a, &b| c0.at(a, 0).norm().total_cmp(&c0.at(b, 0).norm()))
            .unwrap();
        let dphi = (c1.at(peak, 0) * c0.at(peak, 0).conj()).arg();
        // approaching target: delay shrinks, phase advances at
        // 2π·f_c·2v/c per second
        let expect = 2.0 * std::f64::consts::PI * band.center_freq_hz * 2.0 * 0.5
            / SPEED_OF_LIGHT
            * dt;
        let rel = (dphi - expect).abs() / expect;
        assert!(rel < 0.01, "phase step {dphi} vs {expect} (rel {rel})");
    }

    #[test]
    fn advance_moves_and_reflects() {
        let mut spec = base_spec();
        spec.targets =
            vec![Target { position: [5.0, 2.0, 1.5], velocity: [2.0, 0.0, 0.0], rcs_sqm: 1.0 }];
        let mut scene = Scene::new(spec).unwrap();
        let before = scene.targets()[0];
        scene.advance(0.0);
        assert_eq!(scene.targets()[0], before);
        scene.advance(0.25);
        assert!((scene.targets()[0].position[0] - 5.5).abs() < 1e-12);
        // crossing the 6 m wall reflects elastically
        scene.advance(0.5);
        let tg = scene.targets()[0];
        assert!((tg.position[0] - 5.5).abs() < 1e-12);
        assert_eq!(tg.velocity[0], -2.0);
        assert!(tg.position[0] >= 0.0 && tg.position[0] <= 6.0);
    }

    #[test]
    fn determinism_and_reciprocity() {
        let mut spec = base_spec();
        spec.clutter.power = 1e-8;
        spec.targets =
            vec![Target { position: [2.0, 1.0, 1.0], velocity: [0.3, 0.1, 0.0], rcs_sqm: 0.5 }];
        let band = BandConfig::sub7();
        let mut s1 = Scene::new(spec.clone()).unwrap();
        let mut s2 = Scene::new(spec).unwrap();
        for step in 0..5 {
            let t = step as f64 * 1e-3;
            let a = s1.cfr_at(&band, "ap", "sta1", t).unwrap();
            let b = s2.cfr_at(&band, "ap", "sta1", t).unwrap();
            assert_eq!(a.values(), b.values(), "bit-identical under same seed");
            let fwd = s1.cfr_at(&band, "ap", "sta1", t).unwrap();
            let rev = s1.cfr_at(&band, "sta1", "ap", t).unwrap();
            assert_eq!(fwd.values(), rev.values(), "reciprocity");
            s1.advance(1e-3);
            s2.advance(1e-3);
        }
    }

    #[test]
    fn clutter_lag_one_autocorrelation_near_rho() {
        let mut spec = base_spec();
        spec.clutter = ClutterSpec { ar_coefficient: 0.8, power: 1.0, taps: 4 };
        let mut scene = Scene::new(spec).unwrap();
        let steps = 10_000usize;
        let mut prev: Option<Vec<Complex64>> = None;
        let mut num = Complex64::new(0.0, 0.0);
        let mut den = 0.0;
        for _ in 0..steps {
            let taps: Vec<Complex64> = scene
                .clutter
                .get(&pair_key("ap", "sta1"))
                .unwrap()
                .taps
                .iter()
                .map(|t| t.value)
                .collect();
            if let Some(p) = prev {
                for (a, b) in taps.iter().zip(&p) {
                    num += a * b.conj();
                    den += b.norm_sqr();
                }
            }
            prev = Some(taps);
            scene.advance(1e-3);
        }
        let rho_hat = (num / den).re;
        // 3 sigma of the lag-1 estimator over 4*steps samples
        let sigma = ((1.0 - 0.8f64 * 0.8) / (4.0 * steps as f64)).sqrt();
        assert!(
            (rho_hat - 0.8).abs() < 3.0 * sigma.max(0.01),
            "lag-1 autocorrelation {rho_hat} too far from 0.8"
        );
    }

    #[test]
    fn snr_follows_radar_and_friis_exponents() {
        let mut spec = base_spec();
        spec.room = [40.0, 8.0, 3.0];
        spec.stas[1].position = [10.5, 2.0, 1.5]; // 10 m LOS
        spec.targets = vec![
            Target { position: [5.5, 2.0, 1.5], velocity: [0.0; 3], rcs_sqm: 1.0 },
            Target { position: [10.5, 2.0, 1.5], velocity: [0.0; 3], rcs_sqm: 1.0 },
        ];
        let scene = Scene::new(spec).unwrap();
        let band = BandConfig::sub7();
        // doubling monostatic range: -12 dB
        let near = scene.snr_at(&band, "ap", "ap", 20.0, PathKind::TargetEcho(0)).unwrap();
        let far = scene.snr_at(&band, "ap", "ap", 20.0, PathKind::TargetEcho(1)).unwrap();
        assert!((near - far - 12.041).abs() < 0.05, "echo falloff {}", near - far);
        // doubling LOS range: -6 dB
        let mut spec2 = base_spec();
        spec2.room = [40.0, 8.0, 3.0];
        spec2.stas[1].position = [5.5, 2.0, 1.5];
        let s_near = Scene::new(spec2.clone()).unwrap();
        spec2.stas[1].position = [10.5, 2.0, 1.5];
        let s_far = Scene::new(spec2).unwrap();
        let l_near = s_near.snr_at(&band, "ap", "sta1", 20.0, PathKind::Los).unwrap();
        let l_far = s_far.snr_at(&band, "ap", "sta1", 20.0, PathKind::Los).unwrap();
        assert!((l_near - l_far - 6.02).abs() < 0.05, "LOS falloff {}", l_near - l_far);
    }

    #[test]
    fn presence_detection_budget_sits_at_threshold() {
        // DMG monostatic sensor with a 1 m² person at 12 m lands inside
        // the conventional 10-13 dB detection window
        let spec = SceneSpec {
            room: [20.0, 6.0, 3.0],
            static_scatterers: vec![],
            targets: vec![Target {
                position: [12.5, 2.0, 1.5],
                velocity: [0.0; 3],
                rcs_sqm: 1.0,
            }],
            stas: vec![StaPlacement {
                id: "ap".into(),
                position: [0.5, 2.0, 1.5],
                antenna: Antenna::Directional { boresight_deg: 0.0, beamwidth_deg: 30.0 },
            }],
            clutter: ClutterSpec::default(),
            noise_floor_dbm: -104.0,
            seed: 1,
        };
        let scene = Scene::new(spec).unwrap();
        let band = BandConfig::dmg();
        let snr = scene.snr_at(&band, "ap", "ap", 30.0, PathKind::TargetEcho(0)).unwrap();
        assert!((10.0..=13.0).contains(&snr), "12 m echo SNR {snr} outside 10-13 dB");
    }

    #[test]
    fn validation_errors() {
        let mut spec = base_spec();
        spec.clutter.ar_coefficient = 1.0;
        assert_eq!(Scene::new(spec).unwrap_err(), ChannelError::BadClutter);

        let mut spec = base_spec();
        spec.targets =
            vec![Target { position: [7.0, 2.0, 1.5], velocity: [0.0; 3], rcs_sqm: 1.0 }];
        assert!(matches!(Scene::new(spec), Err(ChannelError::OutsideRoom(_))));

        let scene = Scene::new(base_spec()).unwrap();
        let band = BandConfig::sub7();
        assert_eq!(
            scene.cfr_at(&band, "ap", "nope", 0.0).unwrap_err(),
            ChannelError::UnknownSta("nope".into())
        );
        assert!(matches!(
            scene.snr_at(&band, "ap", "ap", 20.0, PathKind::Los),
            Err(ChannelError::MissingPath(_))
        ));
        assert!(matches!(
            scene.snr_at(&band, "ap", "sta1", 20.0, PathKind::TargetEcho(0)),
            Err(ChannelError::MissingPath(_))
        ));
        assert!(BandConfig::new(5.8e9, 0.0, 64, 16e-6).is_err());
    }

    #[test]
    fn directional_antenna_shapes_the_gain() {
        let ant = Antenna::Directional { boresight_deg: 0.0, beamwidth_deg: 30.0 };
        assert!((ant.amplitude_gain(0.0) - 1.0).abs() < 1e-12);
        let edge = ant.amplitude_gain(15.0);
        assert!((edge * edge - 0.5).abs() < 1e-9, "half power at the beam edge");
        let back = ant.amplitude_gain(180.0);
        assert!((back * back - 0.01).abs() < 1e-12, "-20 dB floor behind");
    }
}
