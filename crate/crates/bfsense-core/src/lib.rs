//! IEEE 802.11bf WLAN sensing simulator and signal-processing library.
//!
//! `bfsense_core` implements the measurement side of 802.11bf sensing:
//! Golay/CE/Sync waveform construction and correlation analysis, ambiguity
//! functions, CSI quantization and feedback codecs, a hybrid ray + clutter
//! indoor channel, a discrete-event engine for the sensing MAC procedures
//! (TB, non-TB, SBP, DMG), and accuracy evaluation over synthetic scenes.

pub mod ambiguity;
pub mod channel;
pub mod config;
pub mod evaluation;
pub mod feedback;
pub mod protocol;
pub mod quantization;
pub mod sequences;
