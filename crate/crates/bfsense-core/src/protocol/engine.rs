//! The sensing simulator: session bookkeeping, instance runners, and the
//! medium/airtime model.
//!
//! Frames within one exchange follow each other at exactly one SIFS; an
//! instance starts wherever the orchestrator places the clock. Everything
//! is deterministic under the scenario seed: the only randomness is the
//! optional frame-loss model, which draws from its own substream.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use super::frames::{Dest, Event, Frame, FrameKind, NdpDirection, Trace, TraceRecord};
use super::{
    csi_variation, BurstSchedule, MeasurementSetup, ProtocolError, ReportType, RoleSet,
    SensingSession, SessionKey, SessionState, SetupState, Sta,
};
use crate::channel::{BandConfig, PathKind, Scene};
use crate::feedback::{
    encode_diff, encode_partial, encode_tcir, CsiPart, FeedbackKind, FeedbackPayload,
};
use crate::quantization::{quantize_legacy, Cfr};

/// When measurement reports are delivered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportTiming {
    #[default]
    Immediate,
    Delayed,
}

/// Downlink (beacon-based) or uplink (A-BFT SSW) passive sensing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PassiveDirection {
    #[default]
    Downlink,
    Uplink,
}

/// Coordinated-monostatic scheduling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coordination {
    #[default]
    Sequential,
    Simultaneous,
}

/// DMG sensing type of an instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DmgMode {
    Monostatic,
    Bistatic,
    Multistatic,
    CoordMonostatic,
    CoordBistatic,
    Passive,
}

/// Phases of a trigger-based instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TbPhase {
    Polling,
    TfSounding,
    NdpaSounding,
    Reporting,
}

/// Operational attributes handed to `setup_measurement`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementAttrs {
    pub responders: Vec<(String, RoleSet)>,
    #[serde(default)]
    pub initiator_roles: RoleSet,
    #[serde(default)]
    pub report_type: ReportType,
    #[serde(default)]
    pub report_timing: ReportTiming,
    #[serde(default)]
    pub thresholds: Vec<(String, f64)>,
    #[serde(default)]
    pub burst: BurstSchedule,
    #[serde(default = "default_trn_p")]
    pub trn_p: u32,
    #[serde(default = "default_trn_m")]
    pub trn_m: u32,
    #[serde(default = "default_sectors")]
    pub dmg_sectors: u16,
    #[serde(default)]
    pub passive_direction: PassiveDirection,
    #[serde(default)]
    pub coordination: Coordination,
}

fn default_trn_p() -> u32 {
    4
}

fn default_trn_m() -> u32 {
    16
}

fn default_sectors() -> u16 {
    8
}

impl Default for MeasurementAttrs {
    fn default() -> Self {
        Self {
            responders: Vec::new(),
            initiator_roles: RoleSet::transmitter(),
            report_type: ReportType::default(),
            report_timing: ReportTiming::default(),
            thresholds: Vec::new(),
            burst: BurstSchedule::default(),
            trn_p: default_trn_p(),
            trn_m: default_trn_m(),
            dmg_sectors: default_sectors(),
            passive_direction: PassiveDirection::default(),
            coordination: Coordination::default(),
        }
    }
}

/// Frame-loss model: logistic in SNR, disabled by default.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    #[serde(default)]
    pub enabled: bool,
    /// SNR with 50% loss probability.
    #[serde(default = "default_loss_mid")]
    pub snr_mid_db: f64,
    #[serde(default = "default_loss_slope")]
    pub slope_db: f64,
}

fn default_loss_mid() -> f64 {
    0.0
}

fn default_loss_slope() -> f64 {
    2.0
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { enabled: false, snr_mid_db: default_loss_mid(), slope_db: default_loss_slope() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatorConfig {
    pub band: BandConfig,
    /// PHY preamble airtime per frame.
    #[serde(default = "default_preamble_us")]
    pub preamble_us: f64,
    /// Payload bit rate for the airtime model.
    #[serde(default = "default_phy_rate")]
    pub phy_rate_bps: f64,
    #[serde(default = "default_tx_power")]
    pub tx_power_dbm: f64,
    #[serde(default)]
    pub loss: LossConfig,
    pub seed: u64,
}

fn default_preamble_us() -> f64 {
    20.0
}

fn default_phy_rate() -> f64 {
    24e6
}

fn default_tx_power() -> f64 {
    20.0
}

/// One captured channel measurement with its provenance.
#[derive(Debug, Clone)]
pub struct MeasurementRecord {
    pub time_ns: u64,
    pub rx: String,
    pub tx: String,
    pub setup_id: u32,
    pub instance_id: u32,
    pub kind: &'static str,
    pub sounding_ref: usize,
    pub cfr: Cfr,
}

/// What one instance run produced.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct InstanceOutcome {
    pub instance_id: u32,
    /// Responders that answered polling (TB) or took part (others).
    pub participants: Vec<String>,
    /// (rx, tx) pairs that captured measurements.
    pub measured: Vec<(String, String)>,
    /// Responders that sent a measurement report.
    pub reporters: Vec<String>,
    pub aborted: bool,
}

#[derive(Debug, Clone, Default)]
struct ResponderMemory {
    /// Last captured CFR (instance id, sounding trace ref, measurement).
    last: Option<(u32, usize, Cfr)>,
    /// Payloads awaiting a delayed report.
    pending_delayed: Vec<FeedbackPayload>,
}

/// Deterministic single-run simulator over one scene and band.
pub struct Simulator {
    scene: Scene,
    cfg: SimulatorConfig,
    stas: Vec<Sta>,
    availability: BTreeMap<String, bool>,
    sessions: Vec<SensingSession>,
    clock_ns: u64,
    last_frame_end_ns: Option<u64>,
    trace: Trace,
    loss_rng: ChaCha12Rng,
    memory: BTreeMap<(usize, u32, String), ResponderMemory>,
    measurements: Vec<MeasurementRecord>,
}

impl Simulator {
    pub fn new(
        scene: Scene,
        stas: Vec<Sta>,
        cfg: SimulatorConfig,
    ) -> Result<Self, ProtocolError> {
        for sta in &stas {
            scene.sta(&sta.id)?;
        }
        let loss_rng = ChaCha12Rng::seed_from_u64(cfg.seed ^ 0x1055_1055_1055_1055);
        let availability = stas.iter().map(|s| (s.id.clone(), true)).collect();
        Ok(Self {
            scene,
            cfg,
            stas,
            availability,
            sessions: Vec::new(),
            clock_ns: 0,
            last_frame_end_ns: None,
            trace: Trace::default(),
            loss_rng,
            memory: BTreeMap::new(),
            measurements: Vec::new(),
        })
    }

    pub fn trace(&self) -> &Trace {
        &self.trace
    }

    pub fn measurements(&self) -> &[MeasurementRecord] {
        &self.measurements
    }

    pub fn scene(&self) -> &Scene {
        &self.scene
    }

    pub fn scene_mut(&mut self) -> &mut Scene {
        &mut self.scene
    }

    pub fn band(&self) -> &BandConfig {
        &self.cfg.band
    }

    pub fn clock_ns(&self) -> u64 {
        self.clock_ns
    }

    pub fn sta(&self, id: &str) -> Result<&Sta, ProtocolError> {
        self.stas
            .iter()
            .find(|s| s.id == id)
            .ok_or_else(|| ProtocolError::UnknownSta(id.to_string()))
    }

    /// Mark a STA as (un)available for polling.
    pub fn set_available(&mut self, id: &str, available: bool) {
        self.availability.insert(id.to_string(), available);
    }

    /// Place the clock for the next exchange (e.g. a burst slot). Never
    /// moves time backwards.
    pub fn begin_exchange_at(&mut self, t_ns: u64) {
        self.clock_ns = self.clock_ns.max(t_ns);
        self.last_frame_end_ns = None;
    }

    fn sifs_ns(&self) -> u64 {
        (self.cfg.band.sifs_s * 1e9).round() as u64
    }

    fn frame_duration_ns(&self, kind: &FrameKind) -> u64 {
        let preamble = (self.cfg.preamble_us * 1000.0).round() as u64;
        let bits = kind.payload_bits();
        let payload = ((bits as f64) * 1e9 / self.cfg.phy_rate_bps).ceil() as u64;
        preamble + payload
    }

    /// Put a frame on the medium one SIFS after the previous frame (or at
    /// the current clock when starting an exchange). Returns its trace
    /// index.
    fn send(&mut self, src: &str, dst: Dest, kind: FrameKind) -> usize {
        let duration_ns = self.frame_duration_ns(&kind);
        let tx_time_ns = match self.last_frame_end_ns {
            Some(end) => end + self.sifs_ns(),
            None => self.clock_ns,
        };
        self.last_frame_end_ns = Some(tx_time_ns + duration_ns);
        self.clock_ns = tx_time_ns + duration_ns;
        self.trace.push(TraceRecord {
            time_ns: tx_time_ns,
            event: Event::Frame(Frame {
                kind,
                src: src.to_string(),
                dst,
                tx_time_ns,
                duration_ns,
            }),
        })
    }

    /// Loss-model coin flip for one (src → dst) delivery. Ideal medium
    /// when the model is disabled.
    fn delivered(&mut self, src: &str, dst: &str, frame_kind: &'static str) -> bool {
        if !self.cfg.loss.enabled {
            return true;
        }
        let snr = self
            .scene
            .snr_at(&self.cfg.band, src, dst, self.cfg.tx_power_dbm, PathKind::Los)
            .unwrap_or(50.0);
        let p_loss = 1.0 / (1.0 + ((snr - self.cfg.loss.snr_mid_db) / self.cfg.loss.slope_db).exp());
        let lost = self.loss_rng.gen::<f64>() < p_loss;
        if lost {
            self.trace.push(TraceRecord {
                time_ns: self.clock_ns,
                event: Event::FrameLost { dst: dst.to_string(), frame_kind },
            });
        }
        !lost
    }

    /// Capture a channel measurement at the end of the sounding frame.
    fn measure(
        &mut self,
        rx: &str,
        tx: &str,
        setup_id: u32,
        instance_id: u32,
        kind: &'static str,
        sounding_ref: usize,
    ) -> Result<Cfr, ProtocolError> {
        let t_ns = self.clock_ns;
        let cfr = self.scene.cfr_at(&self.cfg.band, tx, rx, t_ns as f64 * 1e-9)?;
        self.trace.push(TraceRecord {
            time_ns: t_ns,
            event: Event::Measurement {
                rx: rx.to_string(),
                tx: tx.to_string(),
                setup_id,
                instance_id,
                kind,
                sounding_ref,
            },
        });
        self.measurements.push(MeasurementRecord {
            time_ns: t_ns,
            rx: rx.to_string(),
            tx: tx.to_string(),
            setup_id,
            instance_id,
            kind,
            sounding_ref,
            cfr: cfr.clone(),
        });
        Ok(cfr)
    }

    fn state_event(&mut self, sta: &str, entity: String, state: &str) {
        self.trace.push(TraceRecord {
            time_ns: self.clock_ns,
            event: Event::State { sta: sta.to_string(), entity, state: state.to_string() },
        });
    }

    // -----------------------------------------------------------------
    // session and setup lifecycle
    // -----------------------------------------------------------------

    fn session_index(&self, key: &SessionKey) -> Result<usize, ProtocolError> {
        self.sessions
            .iter()
            .position(|s| &s.key == key)
            .ok_or_else(|| ProtocolError::UnknownSession(key.to_string()))
    }

    fn active_session(&self, key: &SessionKey) -> Result<&SensingSession, ProtocolError> {
        let s = &self.sessions[self.session_index(key)?];
        if s.state == SessionState::Terminated {
            return Err(ProtocolError::SessionTerminated(key.to_string()));
        }
        Ok(s)
    }

    pub fn session(&self, key: &SessionKey) -> Option<&SensingSession> {
        self.sessions.iter().find(|s| &s.key == key)
    }

    /// Exchange capabilities and establish a session keyed by the
    /// responder's MAC and AID/UID.
    pub fn setup_session(
        &mut self,
        initiator: &str,
        responder: &str,
    ) -> Result<SessionKey, ProtocolError> {
        let init = self.sta(initiator)?.clone();
        let resp = self.sta(responder)?.clone();
        let key = SessionKey { mac_addr: resp.mac_addr.clone(), identifier: resp.identifier };
        self.send(initiator, Dest::Sta(responder.into()), FrameKind::SessionSetupReq);
        let capable = (init.capabilities.wlan_sensing && resp.capabilities.wlan_sensing)
            || (init.capabilities.dmg_sensing && resp.capabilities.dmg_sensing);
        let duplicate = self
            .sessions
            .iter()
            .any(|s| s.key == key && s.state == SessionState::Active);
        let accepted = capable && !duplicate;
        self.send(
            responder,
            Dest::Sta(initiator.into()),
            FrameKind::SessionSetupResp { accepted, session: key.to_string() },
        );
        if !capable {
            return Err(ProtocolError::CapabilityMismatch(responder.into()));
        }
        if duplicate {
            return Err(ProtocolError::DuplicateSession(key.to_string()));
        }
        self.state_event(initiator, format!("session:{key}"), "active");
        self.sessions.push(SensingSession {
            key: key.clone(),
            initiator: initiator.to_string(),
            responder: responder.to_string(),
            state: SessionState::Active,
            setups: Vec::new(),
        });
        Ok(key)
    }

    /// Agree on a new set of operational attributes under a session. The
    /// new setup id is max(existing) + 1 within that session.
    pub fn setup_measurement(
        &mut self,
        key: &SessionKey,
        attrs: MeasurementAttrs,
    ) -> Result<u32, ProtocolError> {
        let idx = self.session_index(key)?;
        if self.sessions[idx].state == SessionState::Terminated {
            return Err(ProtocolError::SessionTerminated(key.to_string()));
        }
        for (resp, _) in &attrs.responders {
            self.sta(resp)?;
        }
        let initiator = self.sessions[idx].initiator.clone();
        let responder = self.sessions[idx].responder.clone();
        let setup_id =
            self.sessions[idx].setups.iter().map(|s| s.setup_id).max().unwrap_or(0) + 1;
        self.send(&initiator, Dest::Sta(responder.clone()), FrameKind::MeasSetupReq { setup_id });
        self.send(
            &responder,
            Dest::Sta(initiator.clone()),
            FrameKind::MeasSetupResp { setup_id, accepted: true },
        );
        self.state_event(&initiator, format!("setup:{key}/{setup_id}"), "active");
        let responders = if attrs.responders.is_empty() {
            vec![(responder, RoleSet::receiver())]
        } else {
            attrs.responders
        };
        self.sessions[idx].setups.push(MeasurementSetup {
            setup_id,
            responders,
            initiator_roles: attrs.initiator_roles,
            report_type: attrs.report_type,
            report_timing: attrs.report_timing,
            thresholds: attrs.thresholds,
            burst: attrs.burst,
            trn_p: attrs.trn_p,
            trn_m: attrs.trn_m,
            dmg_sectors: attrs.dmg_sectors,
            passive_direction: attrs.passive_direction,
            coordination: attrs.coordination,
            state: SetupState::Active,
            next_instance_id: 1,
        });
        Ok(setup_id)
    }

    /// Terminate one measurement setup (idempotent; a repeat only leaves
    /// a no-op trace record).
    pub fn terminate_setup(
        &mut self,
        key: &SessionKey,
        setup_id: u32,
    ) -> Result<(), ProtocolError> {
        let idx = self.session_index(key)?;
        let initiator = self.sessions[idx].initiator.clone();
        let responder = self.sessions[idx].responder.clone();
        let setup = self.sessions[idx]
            .setups
            .iter_mut()
            .find(|s| s.setup_id == setup_id)
            .ok_or(ProtocolError::UnknownSetup(setup_id))?;
        if setup.state == SetupState::Terminated {
            self.state_event(&initiator, format!("setup:{key}/{setup_id}"), "already-terminated");
            return Ok(());
        }
        setup.state = SetupState::Terminated;
        self.send(&initiator, Dest::Sta(responder), FrameKind::TerminateSetup { setup_id });
        self.state_event(&initiator, format!("setup:{key}/{setup_id}"), "terminated");
        Ok(())
    }

    /// Terminate a session and every setup under it (idempotent).
    pub fn terminate_session(&mut self, key: &SessionKey) -> Result<(), ProtocolError> {
        let idx = self.session_index(key)?;
        let initiator = self.sessions[idx].initiator.clone();
        let responder = self.sessions[idx].responder.clone();
        if self.sessions[idx].state == SessionState::Terminated {
            self.state_event(&initiator, format!("session:{key}"), "already-terminated");
            return Ok(());
        }
        for sid in
            self.sessions[idx].setups.iter().map(|s| s.setup_id).collect::<Vec<_>>()
        {
            let setup =
                self.sessions[idx].setups.iter_mut().find(|s| s.setup_id == sid).unwrap();
            if setup.state == SetupState::Active {
                setup.state = SetupState::Terminated;
                self.state_event(&initiator, format!("setup:{key}/{sid}"), "terminated");
            }
        }
        self.sessions[idx].state = SessionState::Terminated;
        self.send(&initiator, Dest::Sta(responder), FrameKind::TerminateSession);
        self.state_event(&initiator, format!("session:{key}"), "terminated");
        Ok(())
    }

    // -----------------------------------------------------------------
    // measurement payload plumbing
    // -----------------------------------------------------------------

    fn build_payload(
        &self,
        report_type: ReportType,
        cfr: &Cfr,
        setup_id: u32,
        instance_id: u32,
    ) -> FeedbackPayload {
        let kind = match report_type {
            ReportType::FullCsi { n_b } => {
                FeedbackKind::FullCsi(quantize_legacy(cfr, n_b).expect("valid bits"))
            }
            ReportType::PartialAmplitude { n_b } => FeedbackKind::PartialCsi(
                encode_partial(cfr, n_b, CsiPart::Amplitude).expect("valid bits"),
            ),
            ReportType::PartialPhase { n_b } => FeedbackKind::PartialCsi(
                encode_partial(cfr, n_b, CsiPart::Phase).expect("valid bits"),
            ),
            ReportType::Tcir { taps, n_b } => {
                encode_tcir(cfr, taps.min(cfr.n_subcarriers()), n_b).expect("valid truncation")
            }
            ReportType::DiffQuant { n_b_first, n_b_diff } => FeedbackKind::DiffQuant(
                encode_diff(cfr, n_b_first, n_b_diff).expect("valid widths"),
            ),
        };
        FeedbackPayload { kind, setup_id, instance_id }
    }

    fn remember(
        &mut self,
        session_idx: usize,
        setup_id: u32,
        responder: &str,
        instance_id: u32,
        sounding_ref: usize,
        cfr: Cfr,
    ) {
        let mem = self
            .memory
            .entry((session_idx, setup_id, responder.to_string()))
            .or_default();
        mem.last = Some((instance_id, sounding_ref, cfr));
    }

    fn queue_delayed(
        &mut self,
        session_idx: usize,
        setup_id: u32,
        responder: &str,
        payload: FeedbackPayload,
    ) {
        self.memory
            .entry((session_idx, setup_id, responder.to_string()))
            .or_default()
            .pending_delayed
            .push(payload);
    }

    /// All delayed payloads pending for `responder` across the setups of
    /// this session (batched into a single report). Payloads queued by
    /// the instance currently running stay queued: a delayed report in
    /// instance n carries instance n-1 (and anything older).
    fn drain_delayed(
        &mut self,
        session_idx: usize,
        responder: &str,
        current_setup: u32,
        current_instance: u32,
    ) -> Vec<FeedbackPayload> {
        let mut out = Vec::new();
        for ((s_idx, _, resp), mem) in self.memory.iter_mut() {
            if *s_idx == session_idx && resp == responder {
                let (ready, keep) = mem.pending_delayed.drain(..).partition(|p| {
                    p.setup_id != current_setup || p.instance_id < current_instance
                });
                out.extend::<Vec<_>>(ready);
                mem.pending_delayed = keep;
            }
        }
        out
    }

    // -----------------------------------------------------------------
    // trigger-based instances
    // -----------------------------------------------------------------

    fn validate_tb_phases(phases: &[TbPhase]) -> Result<(), ProtocolError> {
        if phases.is_empty() {
            return Err(ProtocolError::BadPhases("no phases requested".into()));
        }
        for (i, p) in phases.iter().enumerate() {
            if phases[i + 1..].contains(p) {
                return Err(ProtocolError::BadPhases(format!("{p:?} repeated")));
            }
        }
        let has_sounding = phases
            .iter()
            .any(|p| matches!(p, TbPhase::TfSounding | TbPhase::NdpaSounding));
        if has_sounding && phases.first() != Some(&TbPhase::Polling) {
            return Err(ProtocolError::BadPhases(
                "polling must come before any sounding".into(),
            ));
        }
        if let Some(pos) = phases.iter().position(|p| *p == TbPhase::Reporting) {
            if pos != phases.len() - 1 {
                return Err(ProtocolError::BadPhases("reporting must be last".into()));
            }
        }
        Ok(())
    }

    /// Run one trigger-based sensing measurement instance with the given
    /// subset of phases.
    pub fn run_tb_instance(
        &mut self,
        key: &SessionKey,
        setup_id: u32,
        phases: &[TbPhase],
    ) -> Result<InstanceOutcome, ProtocolError> {
        Self::validate_tb_phases(phases)?;
        let session_idx = self.session_index(key)?;
        self.active_session(key)?;
        let initiator = self.sessions[session_idx].initiator.clone();
        if !self.sta(&initiator)?.is_ap {
            return Err(ProtocolError::NotAnAp(initiator));
        }
        let setup = self.sessions[session_idx].setup_mut(setup_id)?;
        let instance_id = setup.next_instance_id;
        setup.next_instance_id += 1;
        let responders = setup.responders.clone();
        let report_type = setup.report_type;
        let report_timing = setup.report_timing;
        for (resp, _) in &responders {
            if self.sta(resp)?.is_ap {
                return Err(ProtocolError::NotAClient(resp.clone()));
            }
        }

        let mut outcome = InstanceOutcome { instance_id, ..Default::default() };
        let mut participants: Vec<(String, RoleSet)> = Vec::new();

        for phase in phases {
            match phase {
                TbPhase::Polling => {
                    self.send(
                        &initiator,
                        Dest::Broadcast,
                        FrameKind::Poll { setup_id, instance_id },
                    );
                    for (resp, roles) in &responders {
                        if self.availability.get(resp).copied().unwrap_or(true)
                            && self.delivered(&initiator, resp, "poll")
                        {
                            self.send(resp, Dest::Sta(resp.clone()), FrameKind::PollResp);
                            participants.push((resp.clone(), *roles));
                        }
                    }
                    outcome.participants =
                        participants.iter().map(|(id, _)| id.clone()).collect();
                }
                TbPhase::TfSounding => {
                    let transmitters: Vec<String> = participants
                        .iter()
                        .filter(|(_, r)| r.transmitter)
                        .map(|(id, _)| id.clone())
                        .collect();
                    if transmitters.is_empty() {
                        continue; // phase present only with a qualifying responder
                    }
                    self.send(
                        &initiator,
                        Dest::Broadcast,
                        FrameKind::SensingSoundingTrigger {
                            setup_id,
                            instance_id,
                            targets: transmitters.clone(),
                        },
                    );
                    for tx in &transmitters {
                        let ndp_ref = self.send(
                            tx,
                            Dest::Sta(initiator.clone()),
                            FrameKind::Ndp { direction: NdpDirection::R2i, minimal: false },
                        );
                        self.measure(&initiator, tx, setup_id, instance_id, "r2i-ndp", ndp_ref)?;
                        outcome.measured.push((initiator.clone(), tx.clone()));
                    }
                }
                TbPhase::NdpaSounding => {
                    let receivers: Vec<String> = participants
                        .iter()
                        .filter(|(_, r)| r.receiver)
                        .map(|(id, _)| id.clone())
                        .collect();
                    if receivers.is_empty() {
                        continue;
                    }
                    self.send(
                        &initiator,
                        Dest::Broadcast,
                        FrameKind::SensingNdpa {
                            setup_id,
                            instance_id,
                            targets: receivers.clone(),
                        },
                    );
                    let ndp_ref = self.send(
                        &initiator,
                        Dest::Broadcast,
                        FrameKind::Ndp { direction: NdpDirection::I2r, minimal: false },
                    );
                    for rx in &receivers {
                        let cfr = self
                            .measure(rx, &initiator, setup_id, instance_id, "i2r-ndp", ndp_ref)?;
                        outcome.measured.push((rx.clone(), initiator.clone()));
                        self.remember(session_idx, setup_id, rx, instance_id, ndp_ref, cfr.clone());
                        if report_timing == ReportTiming::Delayed {
                            let payload =
                                self.build_payload(report_type, &cfr, setup_id, instance_id);
                            self.queue_delayed(session_idx, setup_id, rx, payload);
                        }
                    }
                }
                TbPhase::Reporting => {
                    let receivers: Vec<String> = participants
                        .iter()
                        .filter(|(_, r)| r.receiver)
                        .map(|(id, _)| id.clone())
                        .collect();
                    if receivers.is_empty() {
                        continue;
                    }
                    self.send(
                        &initiator,
                        Dest::Broadcast,
                        FrameKind::ReportTrigger {
                            setup_id,
                            instance_id,
                            targets: receivers.clone(),
                        },
                    );
                    for rx in &receivers {
                        let payloads = match report_timing {
                            ReportTiming::Immediate => {
                                let mem = self
                                    .memory
                                    .get(&(session_idx, setup_id, rx.clone()))
                                    .and_then(|m| m.last.as_ref());
                                match mem {
                                    Some((inst, _, cfr)) if *inst == instance_id => {
                                        vec![self.build_payload(
                                            report_type,
                                            &cfr.clone(),
                                            setup_id,
                                            instance_id,
                                        )]
                                    }
                                    _ => Vec::new(),
                                }
                            }
                            ReportTiming::Delayed => {
                                self.drain_delayed(session_idx, rx, setup_id, instance_id)
                            }
                        };
                        if payloads.is_empty() {
                            continue;
                        }
                        self.send(
                            rx,
                            Dest::Sta(initiator.clone()),
                            FrameKind::Report { payloads },
                        );
                        outcome.reporters.push(rx.clone());
                    }
                }
            }
        }
        Ok(outcome)
    }

    /// Threshold-based reporting instance: polling, downlink sounding,
    /// a CSI-variation subphase, then measurement reports only from the
    /// responders whose variation meets their own threshold.
    pub fn run_threshold_reporting(
        &mut self,
        key: &SessionKey,
        setup_id: u32,
    ) -> Result<InstanceOutcome, ProtocolError> {
        let session_idx = self.session_index(key)?;
        self.active_session(key)?;
        let initiator = self.sessions[session_idx].initiator.clone();
        if !self.sta(&initiator)?.is_ap {
            return Err(ProtocolError::NotAnAp(initiator));
        }
        let setup = self.sessions[session_idx].setup_mut(setup_id)?;
        if !setup.initiator_roles.transmitter {
            return Err(ProtocolError::InitiatorNotTransmitter);
        }
        let instance_id = setup.next_instance_id;
        setup.next_instance_id += 1;
        let responders = setup.responders.clone();
        let report_type = setup.report_type;
        let thresholds = setup.thresholds.clone();

        let mut outcome = InstanceOutcome { instance_id, ..Default::default() };

        // polling
        self.send(&initiator, Dest::Broadcast, FrameKind::Poll { setup_id, instance_id });
        let mut participants = Vec::new();
        for (resp, roles) in &responders {
            if roles.receiver && self.availability.get(resp).copied().unwrap_or(true) {
                self.send(resp, Dest::Sta(resp.clone()), FrameKind::PollResp);
                participants.push(resp.clone());
            }
        }
        outcome.participants = participants.clone();
        if participants.is_empty() {
            return Ok(outcome);
        }

        // downlink sounding
        self.send(
            &initiator,
            Dest::Broadcast,
            FrameKind::SensingNdpa { setup_id, instance_id, targets: participants.clone() },
        );
        let ndp_ref = self.send(
            &initiator,
            Dest::Broadcast,
            FrameKind::Ndp { direction: NdpDirection::I2r, minimal: false },
        );
        let mut variations: Vec<(String, f64, Cfr)> = Vec::new();
        for rx in &participants {
            let cfr = self.measure(rx, &initiator, setup_id, instance_id, "i2r-ndp", ndp_ref)?;
            outcome.measured.push((rx.clone(), initiator.clone()));
            let prev = self
                .memory
                .get(&(session_idx, setup_id, rx.clone()))
                .and_then(|m| m.last.as_ref());
            // a responder with no previous measurement always reports
            let variation = match prev {
                Some((_, _, prev_cfr)) => csi_variation(prev_cfr, &cfr),
                None => f64::INFINITY,
            };
            variations.push((rx.clone(), variation, cfr.clone()));
            self.remember(session_idx, setup_id, rx, instance_id, ndp_ref, cfr);
        }

        // CSI variation reporting subphase
        self.send(
            &initiator,
            Dest::Broadcast,
            FrameKind::ReportTrigger { setup_id, instance_id, targets: participants.clone() },
        );
        for (rx, variation, _) in &variations {
            self.send(
                rx,
                Dest::Sta(initiator.clone()),
                FrameKind::CsiVariationReport { value: *variation },
            );
        }

        // measurement reporting subphase: responders at or above their
        // own threshold
        let reporting: Vec<(String, Cfr)> = variations
            .iter()
            .filter(|(rx, variation, _)| {
                let threshold = thresholds
                    .iter()
                    .find(|(id, _)| id == rx)
                    .map(|(_, t)| *t)
                    .unwrap_or(0.0);
                *variation >= threshold
            })
            .map(|(rx, _, cfr)| (rx.clone(), cfr.clone()))
            .collect();
        if !reporting.is_empty() {
            self.send(
                &initiator,
                Dest::Broadcast,
                FrameKind::ReportTrigger {
                    setup_id,
                    instance_id,
                    targets: reporting.iter().map(|(id, _)| id.clone()).collect(),
                },
            );
            for (rx, cfr) in &reporting {
                let payload = self.build_payload(report_type, cfr, setup_id, instance_id);
                self.send(
                    rx,
                    Dest::Sta(initiator.clone()),
                    FrameKind::Report { payloads: vec![payload] },
                );
                outcome.reporters.push(rx.clone());
            }
        }
        Ok(outcome)
    }

    /// Non-trigger-based instance: a non-AP initiator sounds with an AP
    /// responder.
    pub fn run_non_tb_instance(
        &mut self,
        key: &SessionKey,
        setup_id: u32,
    ) -> Result<InstanceOutcome, ProtocolError> {
        let session_idx = self.session_index(key)?;
        self.active_session(key)?;
        let initiator = self.sessions[session_idx].initiator.clone();
        let responder = self.sessions[session_idx].responder.clone();
        if self.sta(&initiator)?.is_ap {
            return Err(ProtocolError::NotAClient(initiator));
        }
        if !self.sta(&responder)?.is_ap {
            return Err(ProtocolError::NotAnAp(responder));
        }
        let setup = self.sessions[session_idx].setup_mut(setup_id)?;
        let instance_id = setup.next_instance_id;
        setup.next_instance_id += 1;
        let roles = setup.initiator_roles;
        let report_type = setup.report_type;

        let mut outcome = InstanceOutcome { instance_id, ..Default::default() };
        outcome.participants = vec![responder.clone()];

        self.send(
            &initiator,
            Dest::Sta(responder.clone()),
            FrameKind::SensingNdpa { setup_id, instance_id, targets: vec![responder.clone()] },
        );
        if !self.delivered(&initiator, &responder, "ndpa") {
            // responder never saw the announcement: no R2I follows
            outcome.aborted = true;
            return Ok(outcome);
        }
        // I2R NDP (minimum length when the initiator only receives)
        let i2r_minimal = !roles.transmitter;
        let i2r_ref = self.send(
            &initiator,
            Dest::Sta(responder.clone()),
            FrameKind::Ndp { direction: NdpDirection::I2r, minimal: i2r_minimal },
        );
        if roles.transmitter {
            self.measure(&responder, &initiator, setup_id, instance_id, "i2r-ndp", i2r_ref)?;
            outcome.measured.push((responder.clone(), initiator.clone()));
        }
        // R2I NDP (minimum-length acknowledgment when the initiator only
        // transmits)
        let r2i_minimal = !roles.receiver;
        let r2i_ref = self.send(
            &responder,
            Dest::Sta(initiator.clone()),
            FrameKind::Ndp { direction: NdpDirection::R2i, minimal: r2i_minimal },
        );
        if roles.receiver {
            self.measure(&initiator, &responder, setup_id, instance_id, "r2i-ndp", r2i_ref)?;
            outcome.measured.push((initiator.clone(), responder.clone()));
        }
        // feedback for the I2R sounding follows the R2I NDP when the
        // initiator both transmits and receives
        if roles.transmitter && roles.receiver {
            let cfr = self
                .measurements
                .iter()
                .rev()
                .find(|m| m.rx == responder && m.instance_id == instance_id)
                .map(|m| m.cfr.clone())
                .expect("responder measured the I2R NDP");
            let payload = self.build_payload(report_type, &cfr, setup_id, instance_id);
            self.send(
                &responder,
                Dest::Sta(initiator.clone()),
                FrameKind::Report { payloads: vec![payload] },
            );
            outcome.reporters.push(responder.clone());
        }
        Ok(outcome)
    }

    /// Sensing by proxy: a non-AP STA asks an AP to run a sensing
    /// procedure with `targets` and deliver the results back.
    pub fn run_sbp(
        &mut self,
        sbp_initiator: &str,
        proxy_ap: &str,
        targets: &[String],
        attrs: MeasurementAttrs,
    ) -> Result<InstanceOutcome, ProtocolError> {
        if self.sta(sbp_initiator)?.is_ap {
            return Err(ProtocolError::NotAClient(sbp_initiator.into()));
        }
        let proxy = self.sta(proxy_ap)?.clone();
        if !proxy.is_ap {
            return Err(ProtocolError::NotAnAp(proxy_ap.into()));
        }
        self.send(
            sbp_initiator,
            Dest::Sta(proxy_ap.into()),
            FrameKind::SbpReq { targets: targets.to_vec() },
        );
        let accepted = proxy.capabilities.wlan_sensing;
        self.send(
            proxy_ap,
            Dest::Sta(sbp_initiator.into()),
            FrameKind::SbpResp { accepted },
        );
        if !accepted {
            return Ok(InstanceOutcome { aborted: true, ..Default::default() });
        }
        // the proxy runs a WLAN sensing procedure with the targets (the
        // SBP initiator may be among them to widen the sensing area)
        let first = targets.first().ok_or(ProtocolError::NoQualifiedResponder)?;
        let key = self.setup_session(proxy_ap, first)?;
        let responders: Vec<(String, RoleSet)> =
            targets.iter().map(|t| (t.clone(), RoleSet::receiver())).collect();
        let setup_id = self.setup_measurement(
            &key,
            MeasurementAttrs { responders, ..attrs },
        )?;
        let mut outcome = self.run_tb_instance(
            &key,
            setup_id,
            &[TbPhase::Polling, TbPhase::NdpaSounding, TbPhase::Reporting],
        )?;
        // forward everything the targets reported to the SBP initiator
        let session_idx = self.session_index(&key)?;
        let mut payloads = Vec::new();
        for rx in outcome.reporters.clone() {
            if let Some(mem) = self.memory.get(&(session_idx, setup_id, rx.clone())) {
                if let Some((inst, _, cfr)) = &mem.last {
                    payloads.push(self.build_payload(
                        self.sessions[session_idx].setup(setup_id)?.report_type,
                        &cfr.clone(),
                        setup_id,
                        *inst,
                    ));
                }
            }
        }
        if !payloads.is_empty() {
            self.send(proxy_ap, Dest::Sta(sbp_initiator.into()), FrameKind::Report { payloads });
            outcome.reporters.push(proxy_ap.to_string());
        }
        Ok(outcome)
    }

    /// One DMG sensing instance of the given type.
    pub fn run_dmg_instance(
        &mut self,
        key: &SessionKey,
        setup_id: u32,
        mode: DmgMode,
    ) -> Result<InstanceOutcome, ProtocolError> {
        let session_idx = self.session_index(key)?;
        self.active_session(key)?;
        let initiator = self.sessions[session_idx].initiator.clone();
        if !self.sta(&initiator)?.capabilities.dmg_sensing {
            return Err(ProtocolError::CapabilityMismatch(initiator));
        }
        let setup = self.sessions[session_idx].setup_mut(setup_id)?;
        let instance_id = setup.next_instance_id;
        setup.next_instance_id += 1;
        let responders = setup.responders.clone();
        let report_type = setup.report_type;
        let initiator_roles = setup.initiator_roles;
        let attrs_trn_p = setup.trn_p;
        let attrs_trn_m = setup.trn_m;
        let n_sectors = setup.dmg_sectors;
        let coordination = setup.coordination;

        for (resp, _) in &responders {
            if !self.sta(resp)?.capabilities.dmg_sensing && mode != DmgMode::Passive {
                return Err(ProtocolError::CapabilityMismatch(resp.clone()));
            }
        }

        let mut outcome = InstanceOutcome { instance_id, ..Default::default() };
        outcome.participants = responders.iter().map(|(id, _)| id.clone()).collect();

        match mode {
            DmgMode::Monostatic => {
                let ppdu_ref = self.send(
                    &initiator,
                    Dest::Sta(initiator.clone()),
                    FrameKind::SensingPpdu { trn_units: attrs_trn_m },
                );
                // everyone else drops the PPDU at the MAC
                let others: Vec<String> = self
                    .stas
                    .iter()
                    .map(|s| s.id.clone())
                    .filter(|id| *id != initiator)
                    .collect();
                for sta in others {
                    self.trace.push(TraceRecord {
                        time_ns: self.clock_ns,
                        event: Event::MacDiscard { sta, frame_kind: "sensing-ppdu" },
                    });
                }
                self.measure(
                    &initiator,
                    &initiator,
                    setup_id,
                    instance_id,
                    "monostatic",
                    ppdu_ref,
                )?;
                outcome.measured.push((initiator.clone(), initiator.clone()));
            }
            DmgMode::Bistatic => {
                let responder = responders
                    .first()
                    .map(|(id, _)| id.clone())
                    .ok_or(ProtocolError::NoQualifiedResponder)?;
                if initiator_roles.transmitter {
                    let brp_ref = self.send(
                        &initiator,
                        Dest::Sta(responder.clone()),
                        FrameKind::BrpTx {
                            trn_p: attrs_trn_p,
                            trn_m: attrs_trn_m,
                            dmg_sensing: true,
                        },
                    );
                    let cfr = self
                        .measure(&responder, &initiator, setup_id, instance_id, "trn", brp_ref)?;
                    outcome.measured.push((responder.clone(), initiator.clone()));
                    let payload = self.build_payload(report_type, &cfr, setup_id, instance_id);
                    self.send(
                        &responder,
                        Dest::Sta(initiator.clone()),
                        FrameKind::BrpReport { payload },
                    );
                    outcome.reporters.push(responder);
                } else {
                    // receive-initiator: the responder transmits the TRN,
                    // the initiator measures; no reporting phase
                    self.send(
                        &initiator,
                        Dest::Sta(responder.clone()),
                        FrameKind::BrpTx { trn_p: 0, trn_m: 0, dmg_sensing: true },
                    );
                    let brp_ref = self.send(
                        &responder,
                        Dest::Sta(initiator.clone()),
                        FrameKind::BrpTx {
                            trn_p: attrs_trn_p,
                            trn_m: attrs_trn_m,
                            dmg_sensing: true,
                        },
                    );
                    self.measure(&initiator, &responder, setup_id, instance_id, "trn", brp_ref)?;
                    outcome.measured.push((initiator.clone(), responder));
                }
            }
            DmgMode::Multistatic => {
                if responders.len() > 8 {
                    return Err(ProtocolError::TooManyResponders(responders.len()));
                }
                if responders.is_empty() {
                    return Err(ProtocolError::NoQualifiedResponder);
                }
                // initiation handshake activates each responder
                for (resp, _) in &responders {
                    self.send(
                        &initiator,
                        Dest::Sta(resp.clone()),
                        FrameKind::Poll { setup_id, instance_id },
                    );
                    self.send(resp, Dest::Sta(initiator.clone()), FrameKind::PollResp);
                }
                let sync_assignments: Vec<(String, u8)> = responders
                    .iter()
                    .enumerate()
                    .map(|(i, (id, _))| (id.clone(), (i + 1) as u8))
                    .collect();
                // sync fields padded to a whole number of 640-chip TRN
                // units
                let sync_chips = 1024 * sync_assignments.len() as u32;
                let unit = 640;
                let pad_chips = (unit - (sync_chips % unit)) % unit;
                let ppdu_ref = self.send(
                    &initiator,
                    Dest::Broadcast,
                    FrameKind::MultiStaticPpdu {
                        sync_assignments: sync_assignments.clone(),
                        trn_units: attrs_trn_m,
                        pad_chips,
                    },
                );
                for (resp, _) in &responders {
                    let cfr = self.measure(
                        resp,
                        &initiator,
                        setup_id,
                        instance_id,
                        "multistatic-sync",
                        ppdu_ref,
                    )?;
                    outcome.measured.push((resp.clone(), initiator.clone()));
                    self.remember(session_idx, setup_id, resp, instance_id, ppdu_ref, cfr);
                }
                // reporting: poll each responder in the predefined order
                for (resp, _) in &responders {
                    self.send(
                        &initiator,
                        Dest::Sta(resp.clone()),
                        FrameKind::ReportTrigger {
                            setup_id,
                            instance_id,
                            targets: vec![resp.clone()],
                        },
                    );
                    let cfr = self
                        .memory
                        .get(&(session_idx, setup_id, resp.clone()))
                        .and_then(|m| m.last.as_ref())
                        .map(|(_, _, c)| c.clone())
                        .expect("responder measured the PPDU");
                    let payload = self.build_payload(report_type, &cfr, setup_id, instance_id);
                    self.send(
                        resp,
                        Dest::Sta(initiator.clone()),
                        FrameKind::Report { payloads: vec![payload] },
                    );
                    outcome.reporters.push(resp.clone());
                }
            }
            DmgMode::CoordMonostatic => {
                if responders.is_empty() {
                    return Err(ProtocolError::NoQualifiedResponder);
                }
                // scheduling and control during initiation
                for (resp, _) in &responders {
                    self.send(
                        &initiator,
                        Dest::Sta(resp.clone()),
                        FrameKind::Poll { setup_id, instance_id },
                    );
                    self.send(resp, Dest::Sta(initiator.clone()), FrameKind::PollResp);
                }
                match coordination {
                    Coordination::Sequential => {
                        for (resp, _) in &responders {
                            let ppdu_ref = self.send(
                                resp,
                                Dest::Sta(resp.clone()),
                                FrameKind::SensingPpdu { trn_units: attrs_trn_m },
                            );
                            self.measure(
                                resp,
                                resp,
                                setup_id,
                                instance_id,
                                "monostatic",
                                ppdu_ref,
                            )?;
                            outcome.measured.push((resp.clone(), resp.clone()));
                        }
                    }
                    Coordination::Simultaneous => {
                        // each STA uses only its own clock, so the
                        // soundings can overlap in time
                        let start = match self.last_frame_end_ns {
                            Some(end) => end + self.sifs_ns(),
                            None => self.clock_ns,
                        };
                        let mut latest_end = start;
                        let mut refs = Vec::new();
                        for (resp, _) in &responders {
                            let kind = FrameKind::SensingPpdu { trn_units: attrs_trn_m };
                            let duration_ns = self.frame_duration_ns(&kind);
                            latest_end = latest_end.max(start + duration_ns);
                            let idx = self.trace.push(TraceRecord {
                                time_ns: start,
                                event: Event::Frame(Frame {
                                    kind,
                                    src: resp.clone(),
                                    dst: Dest::Sta(resp.clone()),
                                    tx_time_ns: start,
                                    duration_ns,
                                }),
                            });
                            refs.push((resp.clone(), idx));
                        }
                        self.clock_ns = latest_end;
                        self.last_frame_end_ns = Some(latest_end);
                        for (resp, ppdu_ref) in refs {
                            self.measure(
                                &resp,
                                &resp,
                                setup_id,
                                instance_id,
                                "monostatic",
                                ppdu_ref,
                            )?;
                            outcome.measured.push((resp.clone(), resp.clone()));
                        }
                    }
                }
            }
            DmgMode::CoordBistatic => {
                if responders.is_empty() {
                    return Err(ProtocolError::NoQualifiedResponder);
                }
                for (resp, _) in &responders {
                    self.send(
                        &initiator,
                        Dest::Sta(resp.clone()),
                        FrameKind::Poll { setup_id, instance_id },
                    );
                    self.send(resp, Dest::Sta(initiator.clone()), FrameKind::PollResp);
                }
                // sequential bistatic soundings, one responder at a time
                for (resp, _) in &responders {
                    let brp_ref = self.send(
                        &initiator,
                        Dest::Sta(resp.clone()),
                        FrameKind::BrpTx {
                            trn_p: attrs_trn_p,
                            trn_m: attrs_trn_m,
                            dmg_sensing: true,
                        },
                    );
                    let cfr =
                        self.measure(resp, &initiator, setup_id, instance_id, "trn", brp_ref)?;
                    outcome.measured.push((resp.clone(), initiator.clone()));
                    let payload = self.build_payload(report_type, &cfr, setup_id, instance_id);
                    self.send(
                        resp,
                        Dest::Sta(initiator.clone()),
                        FrameKind::BrpReport { payload },
                    );
                    outcome.reporters.push(resp.clone());
                }
            }
            DmgMode::Passive => {
                // downlink: the AP's sector beacons double as sensing
                // illumination; the interested STA asks for directions
                // and the AP location afterwards
                let ap = if self.sta(&initiator)?.is_ap {
                    initiator.clone()
                } else {
                    responders
                        .iter()
                        .map(|(id, _)| id.clone())
                        .find(|id| self.sta(id).map(|s| s.is_ap).unwrap_or(false))
                        .ok_or(ProtocolError::NoQualifiedResponder)?
                };
                if !self.sta(&ap)?.capabilities.passive_sensing_support {
                    return Err(ProtocolError::CapabilityMismatch(ap));
                }
                let listener = if ap == initiator {
                    responders
                        .first()
                        .map(|(id, _)| id.clone())
                        .ok_or(ProtocolError::NoQualifiedResponder)?
                } else {
                    initiator.clone()
                };
                let ap_pos = self.scene.sta(&ap)?.position;
                let directions: Vec<f64> =
                    (0..n_sectors).map(|s| 360.0 * s as f64 / n_sectors as f64).collect();
                for sector in 0..n_sectors {
                    let beacon_ref = self.send(
                        &ap,
                        Dest::Broadcast,
                        FrameKind::Beacon { sector_id: sector },
                    );
                    self.measure(
                        &listener,
                        &ap,
                        setup_id,
                        instance_id,
                        "beacon",
                        beacon_ref,
                    )?;
                    outcome.measured.push((listener.clone(), ap.clone()));
                }
                self.send(&listener, Dest::Sta(ap.clone()), FrameKind::InfoReq);
                self.send(
                    &ap,
                    Dest::Sta(listener.clone()),
                    FrameKind::InfoResp { directions_deg: directions, location_m: ap_pos },
                );
            }
        }
        Ok(outcome)
    }

    /// Uplink passive sensing: the AP measures the stations' A-BFT sector
    /// sweep and then asks them for directions and location.
    pub fn run_passive_uplink(
        &mut self,
        key: &SessionKey,
        setup_id: u32,
    ) -> Result<InstanceOutcome, ProtocolError> {
        let session_idx = self.session_index(key)?;
        self.active_session(key)?;
        let initiator = self.sessions[session_idx].initiator.clone();
        if !self.sta(&initiator)?.is_ap {
            return Err(ProtocolError::NotAnAp(initiator));
        }
        if !self.sta(&initiator)?.capabilities.passive_sensing_support {
            return Err(ProtocolError::CapabilityMismatch(initiator));
        }
        let setup = self.sessions[session_idx].setup_mut(setup_id)?;
        let instance_id = setup.next_instance_id;
        setup.next_instance_id += 1;
        let responders = setup.responders.clone();
        let n_sectors = 4u16;
        let mut outcome = InstanceOutcome { instance_id, ..Default::default() };
        outcome.participants = responders.iter().map(|(id, _)| id.clone()).collect();
        for (resp, _) in &responders {
            for sector in 0..n_sectors {
                let ssw_ref =
                    self.send(resp, Dest::Broadcast, FrameKind::Ssw { sector_id: sector });
                self.measure(&initiator, resp, setup_id, instance_id, "ssw", ssw_ref)?;
                outcome.measured.push((initiator.clone(), resp.clone()));
            }
            let pos = self.scene.sta(resp)?.position;
            self.send(&initiator, Dest::Sta(resp.clone()), FrameKind::InfoReq);
            self.send(
                resp,
                Dest::Sta(initiator.clone()),
                FrameKind::InfoResp {
                    directions_deg: (0..n_sectors)
                        .map(|s| 360.0 * s as f64 / n_sectors as f64)
                        .collect(),
                    location_m: pos,
                },
            );
        }
        Ok(outcome)
    }
}
