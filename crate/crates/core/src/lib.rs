//! Single-tone signaling for femtocell interference management.
//!
//! Exact prime-field code construction lives in [`gf`] and [`stscode`]; the
//! floating-point DSP and beamforming code is generic over [`Real`] with
//! `f64` aliases exported here.

// `!(x > 0)` is used on purpose so NaN fails the check; index loops mirror
// the matrix notation.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod coord;
pub mod gf;
pub mod icrm;
pub mod netsim;
pub mod phy;
pub mod rng;
pub mod scalar;
pub mod stscode;

pub use gf::{FieldElement, FieldSpec, GfError, GfMatrix};
pub use icrm::{hash_bs_id, HashSalt, Icrm, IcrmProfile};
pub use scalar::Real;
pub use stscode::{CodeError, Codeword, DecodeResult, DecodeStatus, ObservedTones, StsCode, SymbolVector};

pub type Beamformer64 = coord::Beamformer<f64>;
pub type LeakageChannel64 = coord::LeakageChannel<f64>;
pub type ResourceGrid64 = phy::ResourceGrid<f64>;
pub type ToneDetection64 = phy::ToneDetection<f64>;
pub type OfdmModem64 = phy::OfdmModem<f64>;
pub type Beamformer32 = coord::Beamformer<f32>;
pub type ResourceGrid32 = phy::ResourceGrid<f32>;
