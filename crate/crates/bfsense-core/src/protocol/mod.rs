//! Discrete-event engine for the sensing MAC procedures.
//!
//! Covers the session/measurement-setup lifecycle, trigger-based and
//! non-trigger-based measurement instances, threshold-based reporting,
//! sensing by proxy, and the six DMG sensing types. Frame exchanges are
//! strictly sequential with SIFS spacing; every run is deterministic
//! under the scenario seed, and every run leaves a line-oriented trace.

pub mod engine;
pub mod frames;

pub use engine::{
    DmgMode, InstanceOutcome, MeasurementAttrs, PassiveDirection, ReportTiming, Simulator,
    SimulatorConfig,
};
pub use frames::{Dest, Event, Frame, FrameKind, NdpDirection, Trace, TraceRecord};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::ChannelError;
use crate::quantization::Cfr;

#[derive(Debug, Error, PartialEq)]
pub enum ProtocolError {
    #[error("unknown STA '{0}'")]
    UnknownSta(String),
    #[error("{0} lacks the required sensing capability")]
    CapabilityMismatch(String),
    #[error("session for {0} already exists")]
    DuplicateSession(String),
    #[error("no session keyed by {0}")]
    UnknownSession(String),
    #[error("session {0} is terminated")]
    SessionTerminated(String),
    #[error("setup {0} does not exist in this session")]
    UnknownSetup(u32),
    #[error("setup {0} is terminated")]
    SetupTerminated(u32),
    #[error("{0} must be an AP for this procedure")]
    NotAnAp(String),
    #[error("{0} must be a non-AP STA for this procedure")]
    NotAClient(String),
    #[error("instance phases invalid: {0}")]
    BadPhases(String),
    #[error("multistatic sensing supports at most 8 responders, got {0}")]
    TooManyResponders(usize),
    #[error("threshold reporting requires an initiator that transmits")]
    InitiatorNotTransmitter,
    #[error("setup has no responders with the required role")]
    NoQualifiedResponder,
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

/// Association state of a STA: associated STAs carry an AID, unassociated
/// ones a UID.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StaIdentifier {
    Aid(u16),
    Uid(u16),
}

impl std::fmt::Display for StaIdentifier {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StaIdentifier::Aid(n) => write!(f, "aid{n}"),
            StaIdentifier::Uid(n) => write!(f, "uid{n}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Capabilities {
    #[serde(default)]
    pub wlan_sensing: bool,
    #[serde(default)]
    pub dmg_sensing: bool,
    #[serde(default)]
    pub passive_sensing_support: bool,
}

impl Default for Capabilities {
    fn default() -> Self {
        Self { wlan_sensing: true, dmg_sensing: false, passive_sensing_support: false }
    }
}

/// A sensing-capable station.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sta {
    pub id: String,
    pub mac_addr: String,
    pub identifier: StaIdentifier,
    #[serde(default)]
    pub is_ap: bool,
    #[serde(default)]
    pub capabilities: Capabilities,
}

/// Sensing roles a responder holds within one measurement setup. A STA
/// may hold several roles at once.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RoleSet {
    #[serde(default)]
    pub transmitter: bool,
    #[serde(default)]
    pub receiver: bool,
}

impl RoleSet {
    pub fn receiver() -> Self {
        Self { transmitter: false, receiver: true }
    }

    pub fn transmitter() -> Self {
        Self { transmitter: true, receiver: false }
    }

    pub fn both() -> Self {
        Self { transmitter: true, receiver: true }
    }
}

/// Unique key of a live session: responder MAC plus AID/UID.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct SessionKey {
    pub mac_addr: String,
    pub identifier: StaIdentifier,
}

impl std::fmt::Display for SessionKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}", self.mac_addr, self.identifier)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SessionState {
    Active,
    Terminated,
}

/// Feedback type negotiated for a setup.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReportType {
    FullCsi { n_b: u8 },
    PartialAmplitude { n_b: u8 },
    PartialPhase { n_b: u8 },
    Tcir { taps: usize, n_b: u8 },
    DiffQuant { n_b_first: u8, n_b_diff: u8 },
}

impl Default for ReportType {
    fn default() -> Self {
        ReportType::FullCsi { n_b: 8 }
    }
}

/// Burst timing negotiated for a setup.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BurstSchedule {
    pub intra_burst_interval_s: f64,
    pub inter_burst_interval_s: f64,
    pub instances_per_burst: u32,
}

impl Default for BurstSchedule {
    fn default() -> Self {
        Self {
            intra_burst_interval_s: 10e-3,
            inter_burst_interval_s: 100e-3,
            instances_per_burst: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SetupState {
    Active,
    Terminated,
}

/// Operational attributes agreed for one Measurement Setup ID.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSetup {
    pub setup_id: u32,
    /// Responders in negotiated order with their roles.
    pub responders: Vec<(String, RoleSet)>,
    pub initiator_roles: RoleSet,
    pub report_type: ReportType,
    pub report_timing: engine::ReportTiming,
    /// Per-responder CSI-variation thresholds (threshold reporting only).
    pub thresholds: Vec<(String, f64)>,
    pub burst: BurstSchedule,
    /// Fixed-AWV TRN subfields (synchronization and channel estimation).
    pub trn_p: u32,
    /// AWV-sweep TRN subfields.
    pub trn_m: u32,
    pub dmg_sectors: u16,
    pub passive_direction: engine::PassiveDirection,
    pub coordination: engine::Coordination,
    pub state: SetupState,
    pub next_instance_id: u32,
}

/// One initiator/responder agreement with its measurement setups.
#[derive(Debug, Clone, PartialEq)]
pub struct SensingSession {
    pub key: SessionKey,
    pub initiator: String,
    pub responder: String,
    pub state: SessionState,
    pub setups: Vec<MeasurementSetup>,
}

impl SensingSession {
    pub fn setup(&self, setup_id: u32) -> Result<&MeasurementSetup, ProtocolError> {
        let s = self
            .setups
            .iter()
            .find(|s| s.setup_id == setup_id)
            .ok_or(ProtocolError::UnknownSetup(setup_id))?;
        if s.state == SetupState::Terminated {
            return Err(ProtocolError::SetupTerminated(setup_id));
        }
        Ok(s)
    }

    pub fn setup_mut(&mut self, setup_id: u32) -> Result<&mut MeasurementSetup, ProtocolError> {
        let s = self
            .setups
            .iter_mut()
            .find(|s| s.setup_id == setup_id)
            .ok_or(ProtocolError::UnknownSetup(setup_id))?;
        if s.state == SetupState::Terminated {
            return Err(ProtocolError::SetupTerminated(setup_id));
        }
        Ok(s)
    }
}

/// Quantified difference between two CSI snapshots: one minus the
/// normalized correlation magnitude, scale- and phase-invariant, in
/// [0, 1]. Zero-norm inputs count as fully changed.
pub fn csi_variation(prev: &Cfr, cur: &Cfr) -> f64 {
    if prev.values().len() != cur.values().len() {
        return 1.0;
    }
    let mut inner = Complex64::new(0.0, 0.0);
    let mut np = 0.0;
    let mut nc = 0.0;
    for (a, b) in prev.values().iter().zip(cur.values()) {
        inner += a.conj() * b;
        np += a.norm_sqr();
        nc += b.norm_sqr();
    }
    if np == 0.0 || nc == 0.0 {
        return 1.0;
    }
    (1.0 - inner.norm() / (np.sqrt() * nc.sqrt())).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfr(values: Vec<Complex64>) -> Cfr {
        Cfr::from_subcarriers(values, 312.5e3, 5.8e9).unwrap()
    }

    #[test]
    fn csi_variation_basics() {
        let a = cfr(vec![Complex64::new(1.0, 0.5), Complex64::new(-0.3, 0.2)]);
        assert!(csi_variation(&a, &a) < 1e-12);
        // complex scaling is invisible
        let scaled = cfr(a.values().iter().map(|v| v * Complex64::new(0.0, 2.5)).collect());
        assert!(csi_variation(&a, &scaled) < 1e-12);
        // orthogonal snapshots are fully changed
        let u = cfr(vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)]);
        let v = cfr(vec![Complex64::new(0.0, 0.0), Complex64::new(0.0, 1.0)]);
        assert_eq!(csi_variation(&u, &v), 1.0);
        // zero-norm input counts as fully changed
        let z = cfr(vec![Complex64::new(0.0, 0.0); 2]);
        assert_eq!(csi_variation(&z, &a), 1.0);
    }
}
