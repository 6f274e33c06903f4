//! OFDM baseband: tone energization, channels, detection, excision and the
//! two link-level experiments.

mod channel;
mod detect;
pub mod fec;
mod link;
mod ofdm;
mod uplink;

pub use channel::{apply_channel, ChannelKind, ChannelProfile, JakesTap, Tap, TapFading, PEDB_TAPS};
pub use detect::{detect_tones, detect_tones_with, excise_tones, Combining, DetectedTone, ToneDetection};
pub use link::{link_csv, run_sts_link, LinkConfig, LinkPoint, LinkScheme};
pub use ofdm::{modulate_sts, papr_db, OfdmConfig, OfdmModem, PhyError, ResourceGrid};
pub use uplink::{crossing_snr, run_uplink_impact, snr_penalty_db, UplinkConfig, UplinkCurves, UplinkPoint};
