//! MAC-level sensing frames and the trace they leave behind.
//!
//! The trace is line-oriented text, one event per line:
//! `time_us | src→dst | kind | fields...` — this exact format is the
//! golden-trace test contract.

use std::fmt::Write as FmtWrite;
use std::io::{self, Write};

use crate::feedback::FeedbackPayload;

/// Frame destination.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Dest {
    Sta(String),
    Broadcast,
}

impl std::fmt::Display for Dest {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Dest::Sta(id) => write!(f, "{id}"),
            Dest::Broadcast => write!(f, "*"),
        }
    }
}

/// NDP direction within an instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NdpDirection {
    I2r,
    R2i,
}

/// Every sensing frame kind the simulator can put on the medium.
#[derive(Debug, Clone, PartialEq)]
pub enum FrameKind {
    SessionSetupReq,
    SessionSetupResp { accepted: bool, session: String },
    MeasSetupReq { setup_id: u32 },
    MeasSetupResp { setup_id: u32, accepted: bool },
    Poll { setup_id: u32, instance_id: u32 },
    /// CTS-to-self answer to polling.
    PollResp,
    SensingSoundingTrigger { setup_id: u32, instance_id: u32, targets: Vec<String> },
    SensingNdpa { setup_id: u32, instance_id: u32, targets: Vec<String> },
    Ndp { direction: NdpDirection, minimal: bool },
    ReportTrigger { setup_id: u32, instance_id: u32, targets: Vec<String> },
    Report { payloads: Vec<FeedbackPayload> },
    CsiVariationReport { value: f64 },
    BrpTx { trn_p: u32, trn_m: u32, dmg_sensing: bool },
    BrpReport { payload: FeedbackPayload },
    MultiStaticPpdu { sync_assignments: Vec<(String, u8)>, trn_units: u32, pad_chips: u32 },
    /// Monostatic sensing PPDU (self-addressed).
    SensingPpdu { trn_units: u32 },
    Beacon { sector_id: u16 },
    Ssw { sector_id: u16 },
    InfoReq,
    InfoResp { directions_deg: Vec<f64>, location_m: [f64; 3] },
    SbpReq { targets: Vec<String> },
    SbpResp { accepted: bool },
    TerminateSetup { setup_id: u32 },
    TerminateSession,
}

impl FrameKind {
    pub fn name(&self) -> &'static str {
        match self {
            FrameKind::SessionSetupReq => "session-setup-req",
            FrameKind::SessionSetupResp { .. } => "session-setup-resp",
            FrameKind::MeasSetupReq { .. } => "meas-setup-req",
            FrameKind::MeasSetupResp { .. } => "meas-setup-resp",
            FrameKind::Poll { .. } => "poll",
            FrameKind::PollResp => "poll-resp",
            FrameKind::SensingSoundingTrigger { .. } => "sounding-trigger",
            FrameKind::SensingNdpa { .. } => "ndpa",
            FrameKind::Ndp { .. } => "ndp",
            FrameKind::ReportTrigger { .. } => "report-trigger",
            FrameKind::Report { .. } => "report",
            FrameKind::CsiVariationReport { .. } => "csi-variation-report",
            FrameKind::BrpTx { .. } => "brp-tx",
            FrameKind::BrpReport { .. } => "brp-report",
            FrameKind::MultiStaticPpdu { .. } => "multistatic-ppdu",
            FrameKind::SensingPpdu { .. } => "sensing-ppdu",
            FrameKind::Beacon { .. } => "beacon",
            FrameKind::Ssw { .. } => "ssw",
            FrameKind::InfoReq => "info-req",
            FrameKind::InfoResp { .. } => "info-resp",
            FrameKind::SbpReq { .. } => "sbp-req",
            FrameKind::SbpResp { .. } => "sbp-resp",
            FrameKind::TerminateSetup { .. } => "terminate-setup",
            FrameKind::TerminateSession => "terminate-session",
        }
    }

    /// Abstract payload size driving the airtime model.
    pub fn payload_bits(&self) -> u64 {
        match self {
            FrameKind::SessionSetupReq | FrameKind::SessionSetupResp { .. } => 256,
            FrameKind::MeasSetupReq { .. } | FrameKind::MeasSetupResp { .. } => 320,
            FrameKind::Poll { .. } => 160,
            FrameKind::PollResp => 112,
            FrameKind::SensingSoundingTrigger { targets, .. } => 160 + 16 * targets.len() as u64,
            FrameKind::SensingNdpa { targets, .. } => 160 + 32 * targets.len() as u64,
            FrameKind::Ndp { .. } => 0, // preamble only
            FrameKind::ReportTrigger { targets, .. } => 160 + 16 * targets.len() as u64,
            FrameKind::Report { payloads } => {
                288 + payloads.iter().map(|p| p.to_bytes().len() as u64 * 8).sum::<u64>()
            }
            FrameKind::CsiVariationReport { .. } => 192,
            FrameKind::BrpTx { trn_p, trn_m, .. } => {
                512 + (trn_p + trn_m) as u64 * 128
            }
            FrameKind::BrpReport { payload } => 288 + payload.to_bytes().len() as u64 * 8,
            FrameKind::MultiStaticPpdu { sync_assignments, trn_units, pad_chips } => {
                sync_assignments.len() as u64 * 1024 + *pad_chips as u64 + *trn_units as u64 * 512
            }
            FrameKind::SensingPpdu { trn_units } => 256 + *trn_units as u64 * 512,
            FrameKind::Beacon { .. } => 448,
            FrameKind::Ssw { .. } => 192,
            FrameKind::InfoReq => 160,
            FrameKind::InfoResp { directions_deg, .. } => 256 + 32 * directions_deg.len() as u64,
            FrameKind::SbpReq { targets } => 224 + 16 * targets.len() as u64,
            FrameKind::SbpResp { .. } => 160,
            FrameKind::TerminateSetup { .. } | FrameKind::TerminateSession => 160,
        }
    }

    fn fields(&self) -> String {
        let mut s = String::new();
        let list = |ids: &[String]| ids.join(",");
        match self {
            FrameKind::SessionSetupReq => {}
            FrameKind::SessionSetupResp { accepted, session } => {
                let _ = write!(s, "accepted={} session={}", *accepted as u8, session);
            }
            FrameKind::MeasSetupReq { setup_id } | FrameKind::MeasSetupResp { setup_id, accepted: _ } => {
                let _ = write!(s, "setup={setup_id}");
                if let FrameKind::MeasSetupResp { accepted, .. } = self {
                    let _ = write!(s, " accepted={}", *accepted as u8);
                }
            }
            FrameKind::Poll { setup_id, instance_id } => {
                let _ = write!(s, "setup={setup_id} instance={instance_id}");
            }
            FrameKind::PollResp => {
                let _ = write!(s, "cts-to-self");
            }
            FrameKind::SensingSoundingTrigger { setup_id, instance_id, targets }
            | FrameKind::SensingNdpa { setup_id, instance_id, targets }
            | FrameKind::ReportTrigger { setup_id, instance_id, targets } => {
                let _ = write!(
                    s,
                    "setup={setup_id} instance={instance_id} targets={}",
                    list(targets)
                );
            }
            FrameKind::Ndp { direction, minimal } => {
                let dir = match direction {
                    NdpDirection::I2r => "i2r",
                    NdpDirection::R2i => "r2i",
                };
                let _ = write!(s, "dir={dir} min={}", *minimal as u8);
            }
            FrameKind::Report { payloads } => {
                let setups: Vec<String> =
                    payloads.iter().map(|p| p.setup_id.to_string()).collect();
                let insts: Vec<String> =
                    payloads.iter().map(|p| p.instance_id.to_string()).collect();
                let kinds: Vec<String> =
                    payloads.iter().map(|p| p.kind.kind_name().to_string()).collect();
                let bytes: usize = payloads.iter().map(|p| p.to_bytes().len()).sum();
                let _ = write!(
                    s,
                    "setups={} instances={} kinds={} bytes={bytes}",
                    setups.join(","),
                    insts.join(","),
                    kinds.join(",")
                );
            }
            FrameKind::CsiVariationReport { value } => {
                let _ = write!(s, "variation={value:.6}");
            }
            FrameKind::BrpTx { trn_p, trn_m, dmg_sensing } => {
                let _ = write!(s, "trn_p={trn_p} trn_m={trn_m} dmg_sensing={}", *dmg_sensing as u8);
            }
            FrameKind::BrpReport { payload } => {
                let _ = write!(
                    s,
                    "setup={} instance={} kind={} bytes={}",
                    payload.setup_id,
                    payload.instance_id,
                    payload.kind.kind_name(),
                    payload.to_bytes().len()
                );
            }
            FrameKind::MultiStaticPpdu { sync_assignments, trn_units, pad_chips } => {
                let syncs: Vec<String> =
                    sync_assignments.iter().map(|(id, r)| format!("{id}:r{r}")).collect();
                let _ = write!(s, "syncs={} pad={pad_chips} trn_units={trn_units}", syncs.join(","));
            }
            FrameKind::SensingPpdu { trn_units } => {
                let _ = write!(s, "trn_units={trn_units}");
            }
            FrameKind::Beacon { sector_id } | FrameKind::Ssw { sector_id } => {
                let _ = write!(s, "sector={sector_id}");
            }
            FrameKind::InfoReq => {}
            FrameKind::InfoResp { directions_deg, location_m } => {
                let dirs: Vec<String> =
                    directions_deg.iter().map(|d| format!("{d:.1}")).collect();
                let _ = write!(
                    s,
                    "directions={} location={:.2},{:.2},{:.2}",
                    dirs.join(","),
                    location_m[0],
                    location_m[1],
                    location_m[2]
                );
            }
            FrameKind::SbpReq { targets } => {
                let _ = write!(s, "targets={}", list(targets));
            }
            FrameKind::SbpResp { accepted } => {
                let _ = write!(s, "accepted={}", *accepted as u8);
            }
            FrameKind::TerminateSetup { setup_id } => {
                let _ = write!(s, "setup={setup_id}");
            }
            FrameKind::TerminateSession => {}
        }
        s
    }
}

/// A frame on the medium with its transmit time and airtime.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub kind: FrameKind,
    pub src: String,
    pub dst: Dest,
    pub tx_time_ns: u64,
    pub duration_ns: u64,
}

/// Non-frame things a trace records.
#[derive(Debug, Clone, PartialEq)]
pub enum Event {
    Frame(Frame),
    /// A receiver captured a channel measurement from a sounding frame.
    Measurement {
        rx: String,
        tx: String,
        setup_id: u32,
        instance_id: u32,
        kind: &'static str,
        /// Trace index of the sounding frame the measurement came from.
        sounding_ref: usize,
    },
    /// Lifecycle change of a session or measurement setup.
    State { sta: String, entity: String, state: String },
    /// A frame not addressed to this STA was dropped at the MAC.
    MacDiscard { sta: String, frame_kind: &'static str },
    /// A frame was lost on the medium (loss model).
    FrameLost { dst: String, frame_kind: &'static str },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub time_ns: u64,
    pub event: Event,
}

/// Exact microsecond formatting: integer when whole, up to three
/// fractional digits otherwise.
pub fn format_time_us(time_ns: u64) -> String {
    let us = time_ns / 1000;
    let frac = time_ns % 1000;
    if frac == 0 {
        format!("{us}")
    } else {
        let mut s = format!("{us}.{frac:03}");
        while s.ends_with('0') {
            s.pop();
        }
        s
    }
}

impl TraceRecord {
    pub fn to_line(&self) -> String {
        let t = format_time_us(self.time_ns);
        match &self.event {
            Event::Frame(f) => format!(
                "{t} | {}→{} | {} | dur_us={} {}",
                f.src,
                f.dst,
                f.kind.name(),
                format_time_us(f.duration_ns),
                f.kind.fields()
            )
            .trim_end()
            .to_string(),
            Event::Measurement { rx, tx, setup_id, instance_id, kind, sounding_ref } => {
                format!(
                    "{t} | {rx}→{rx} | measure | kind={kind} tx={tx} setup={setup_id} instance={instance_id} ref={sounding_ref}"
                )
            }
            Event::State { sta, entity, state } => {
                format!("{t} | {sta}→{sta} | state | entity={entity} state={state}")
            }
            Event::MacDiscard { sta, frame_kind } => {
                format!("{t} | {sta}→{sta} | mac-discard | frame={frame_kind}")
            }
            Event::FrameLost { dst, frame_kind } => {
                format!("{t} | medium→{dst} | frame-lost | frame={frame_kind}")
            }
        }
    }
}

/// Ordered event record of one simulation run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    records: Vec<TraceRecord>,
}

impl Trace {
    pub fn push(&mut self, rec: TraceRecord) -> usize {
        debug_assert!(
            self.records.last().map_or(true, |last| last.time_ns <= rec.time_ns),
            "trace times must be nondecreasing"
        );
        self.records.push(rec);
        self.records.len() - 1
    }

    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Frames only, in order.
    pub fn frames(&self) -> impl DoubleEndedIterator<Item = &Frame> {
        self.records.iter().filter_map(|r| match &r.event {
            Event::Frame(f) => Some(f),
            _ => None,
        })
    }

    pub fn write_text<W: Write>(&self, mut w: W) -> io::Result<()> {
        for rec in &self.records {
            writeln!(w, "{}", rec.to_line())?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write_text(&mut buf).expect("write to vec");
        String::from_utf8(buf).expect("trace lines are utf-8")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn time_formatting() {
        assert_eq!(format_time_us(0), "0");
        assert_eq!(format_time_us(16_000), "16");
        assert_eq!(format_time_us(16_500), "16.5");
        assert_eq!(format_time_us(16_050), "16.05");
        assert_eq!(format_time_us(16_005), "16.005");
        assert_eq!(format_time_us(1_234_567), "1234.567");
    }

    #[test]
    fn trace_lines_follow_contract() {
        let mut trace = Trace::default();
        trace.push(TraceRecord {
            time_ns: 0,
            event: Event::Frame(Frame {
                kind: FrameKind::Poll { setup_id: 1, instance_id: 2 },
                src: "ap".into(),
                dst: Dest::Broadcast,
                tx_time_ns: 0,
                duration_ns: 28_000,
            }),
        });
        trace.push(TraceRecord {
            time_ns: 44_000,
            event: Event::Measurement {
                rx: "sta1".into(),
                tx: "ap".into(),
                setup_id: 1,
                instance_id: 2,
                kind: "i2r-ndp",
                sounding_ref: 0,
            },
        });
        let text = trace.to_text();
        assert_eq!(
            text,
            "0 | ap→* | poll | dur_us=28 setup=1 instance=2\n\
             44 | sta1→sta1 | measure | kind=i2r-ndp tx=ap setup=1 instance=2 ref=0\n"
        );
    }

    #[test]
    fn ndp_is_preamble_only() {
        assert_eq!(
            FrameKind::Ndp { direction: NdpDirection::I2r, minimal: false }.payload_bits(),
            0
        );
    }
}
