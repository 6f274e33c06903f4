//! Femtocell cluster simulation.
//!
//! A 5x5 block of apartments, each hosting a femto base station with some
//! probability. Every active cell serves one user per resource; users are
//! tied to their own apartment's base station (restricted access). Each
//! subframe, users whose last SINR fell below a threshold broadcast an ICRM
//! over STS; every base station runs the tone detector and multi-signal
//! decoder on what it hears and, one subframe later, applies its scheme
//! using only the ICRMs it decoded.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use num_complex::Complex;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coord::{
    estimate_channel_from_sts, onoff_decide, priority_weight, slnr_beamformer, Action, Beamformer, LeakageChannel,
};
use crate::gf::FieldSpec;
use crate::icrm::{hash_bs_id, HashSalt, Icrm, IcrmProfile};
use crate::phy::{detect_tones, ResourceGrid};
use crate::scalar::db_to_linear;
use crate::stscode::StsCode;

type C = Complex<f64>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetError {
    #[error("distance must be positive, got {0}")]
    Distance(f64),
    #[error("invalid configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    None,
    #[serde(rename = "onoff")]
    OnOff,
    Slnr,
    PrioritizedSlnr,
    IdealBfUncoordinated,
}

impl Scheme {
    pub const ALL: [Scheme; 5] = [
        Scheme::None,
        Scheme::OnOff,
        Scheme::Slnr,
        Scheme::PrioritizedSlnr,
        Scheme::IdealBfUncoordinated,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::None => "none",
            Scheme::OnOff => "onoff",
            Scheme::Slnr => "slnr",
            Scheme::PrioritizedSlnr => "prioritized_slnr",
            Scheme::IdealBfUncoordinated => "ideal_bf_uncoordinated",
        }
    }

    fn uses_icrm(self) -> bool {
        matches!(self, Scheme::OnOff | Scheme::Slnr | Scheme::PrioritizedSlnr)
    }
}

impl std::str::FromStr for Scheme {
    type Err = NetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scheme::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| NetError::Config(format!("unknown scheme `{s}`")))
    }
}

/// Noise term the SLNR beam is computed with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlnrNoise {
    /// Thermal noise at the served user.
    Noise,
    /// The served user's interference plus noise from its last report.
    InterferencePlusNoise,
}

/// Where a base station's victim channels come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelKnowledge {
    /// Estimated from the received STS tones.
    Sts,
    /// The true channel of every decoded requester.
    Perfect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub grid_size: usize,
    pub apartment_m: f64,
    pub deployment_ratio: f64,
    pub carrier_ghz: f64,
    pub bs_antennas: usize,
    pub bs_tx_dbm: f64,
    pub noise_psd_dbm_hz: f64,
    pub bs_noise_figure_db: f64,
    pub ue_noise_figure_db: f64,
    pub ue_tx_dbm: f64,
    pub ue_antennas: usize,
    pub subcarriers: usize,
    pub subcarrier_spacing_hz: f64,
    /// ICRM width: 8 (GF(509)) or 9 (GF(1021), needs 1024 subcarriers).
    pub sts_bits: u32,
    pub code_length: usize,
    /// Channels are frozen within a drop; a drop spans far less than the
    /// coherence time at this speed.
    pub fading_kmh: f64,
    pub resources: usize,
    pub hold_subframes: u32,
    pub subframes: usize,
    pub warmup_subframes: usize,
    pub wall_loss_db: f64,
    pub min_distance_m: f64,
    pub icrm_sinr_threshold_db: f64,
    pub sts_energy_fraction: f64,
    pub detection_tau: f64,
    pub max_tones: usize,
    pub theta: Option<usize>,
    /// Base traffic classes are drawn uniformly from `0..priority_classes`.
    pub priority_classes: u8,
    /// Priority rises by one per this many consecutive starved subframes.
    pub aging_subframes: usize,
    pub slnr_noise: SlnrNoise,
    pub channel_knowledge: ChannelKnowledge,
    /// Deliver every ICRM to every other base station without the PHY.
    pub ideal_signaling: bool,
    /// Own-cell uplink data under the STS tones at each base station.
    pub sts_background: bool,
    pub schemes: Vec<Scheme>,
    pub drops: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            grid_size: 5,
            apartment_m: 10.0,
            deployment_ratio: 0.5,
            carrier_ghz: 2.0,
            bs_antennas: 2,
            bs_tx_dbm: 23.0,
            noise_psd_dbm_hz: -174.0,
            bs_noise_figure_db: 6.0,
            ue_noise_figure_db: 10.0,
            ue_tx_dbm: 23.0,
            ue_antennas: 1,
            subcarriers: 512,
            subcarrier_spacing_hz: 15e3,
            sts_bits: 8,
            code_length: 11,
            fading_kmh: 3.0,
            resources: 4,
            hold_subframes: 1,
            subframes: 20,
            warmup_subframes: 2,
            wall_loss_db: 5.0,
            min_distance_m: 1.0,
            icrm_sinr_threshold_db: 5.0,
            sts_energy_fraction: 1.0,
            detection_tau: 8.0,
            max_tones: 16,
            theta: None,
            priority_classes: 4,
            aging_subframes: 2,
            slnr_noise: SlnrNoise::InterferencePlusNoise,
            channel_knowledge: ChannelKnowledge::Sts,
            ideal_signaling: false,
            sts_background: true,
            schemes: Scheme::ALL.to_vec(),
            drops: 200,
        }
    }
}

impl SimConfig {
    pub fn profile(&self) -> Result<IcrmProfile, NetError> {
        let p = match self.sts_bits {
            8 => IcrmProfile::CANONICAL,
            9 => IcrmProfile::WIDE,
            b => return Err(NetError::Config(format!("sts_bits must be 8 or 9, got {b}"))),
        };
        if p.subcarriers > self.subcarriers {
            return Err(NetError::Config(format!(
                "sts_bits={} needs {} subcarriers",
                self.sts_bits, p.subcarriers
            )));
        }
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), NetError> {
        let bad = |m: String| Err(NetError::Config(m));
        if self.grid_size == 0 || self.apartment_m <= 0.0 {
            return bad("grid_size and apartment_m must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.deployment_ratio) {
            return bad("deployment_ratio must lie in [0, 1]".into());
        }
        if self.bs_antennas == 0 || self.ue_antennas != 1 {
            return bad("need bs_antennas >= 1 and ue_antennas = 1".into());
        }
        let profile = self.profile()?;
        if self.resources == 0 || self.resources > 1 << profile.resource_bits {
            return bad(format!("resources must be in 1..={}", 1 << profile.resource_bits));
        }
        if !self.subcarriers.is_multiple_of(self.resources) {
            return bad("subcarriers must split evenly into resources".into());
        }
        if self.hold_subframes == 0 || self.subframes <= self.warmup_subframes || self.aging_subframes == 0 {
            return bad("need hold_subframes >= 1, aging_subframes >= 1, subframes > warmup_subframes".into());
        }
        if self.priority_classes == 0 || self.priority_classes > 8 {
            return bad("priority_classes must be in 1..=8".into());
        }
        if !(0.0..=1.0).contains(&self.sts_energy_fraction) || self.detection_tau <= 1.0 {
            return bad("need sts_energy_fraction in [0, 1] and detection_tau > 1".into());
        }
        if self.min_distance_m <= 0.0 || self.drops == 0 || self.schemes.is_empty() {
            return bad("min_distance_m, drops and schemes must be positive / non-empty".into());
        }
        if let Some(t) = self.theta {
            if t == 0 || t > self.code_length {
                return bad("theta must be in 1..=code_length".into());
            }
        }
        Ok(())
    }

    fn bandwidth_hz(&self) -> f64 {
        self.subcarriers as f64 * self.subcarrier_spacing_hz
    }

    /// Thermal noise at a user over one resource, mW.
    pub fn ue_noise_mw(&self) -> f64 {
        dbm_to_mw(
            self.noise_psd_dbm_hz
                + 10.0 * (self.bandwidth_hz() / self.resources as f64).log10()
                + self.ue_noise_figure_db,
        )
    }

    /// Per-sample (and per-bin) thermal noise at a base station, mW.
    pub fn bs_noise_mw(&self) -> f64 {
        dbm_to_mw(self.noise_psd_dbm_hz + 10.0 * self.bandwidth_hz().log10() + self.bs_noise_figure_db)
    }

    /// Downlink transmit power per resource, mW.
    pub fn bs_power_per_resource_mw(&self) -> f64 {
        dbm_to_mw(self.bs_tx_dbm) / self.resources as f64
    }
}

pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

/// Indoor path loss `38.46 + 20 log10 d + 5 dB` per wall (dB).
pub fn pathloss_db(distance_m: f64, walls: u32) -> Result<f64, NetError> {
    pathloss_db_with(distance_m, walls, 5.0)
}

pub fn pathloss_db_with(distance_m: f64, walls: u32, wall_loss_db: f64) -> Result<f64, NetError> {
    if !(distance_m > 0.0) {
        return Err(NetError::Distance(distance_m));
    }
    Ok(38.46 + 20.0 * distance_m.log10() + wall_loss_db * walls as f64)
}

/// Apartment walls crossed on the straight line between two points.
pub fn walls_between(a: (f64, f64), b: (f64, f64), apartment_m: f64) -> u32 {
    let cell = |x: f64| (x / apartment_m).floor() as i64;
    ((cell(a.0) - cell(b.0)).abs() + (cell(a.1) - cell(b.1)).abs()) as u32
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserSite {
    pub position: (f64, f64),
    pub base_priority: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    /// Apartment index, row-major; doubles as the base station id.
    pub apartment: usize,
    pub bs_position: (f64, f64),
    /// User `r` is scheduled on resource `r`.
    pub users: Vec<UserSite>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub cells: Vec<Cell>,
}

impl Topology {
    pub fn active(&self) -> usize {
        self.cells.len()
    }
}

/// Draws active apartments, base station and user positions, and base
/// traffic classes.
pub fn generate_topology(cfg: &SimConfig, seed: u64) -> Topology {
    let mut rng = crate::rng::stream(seed, &[0x7090]);
    let mut cells = Vec::new();
    for apt in 0..cfg.grid_size * cfg.grid_size {
        if !rng.random_bool(cfg.deployment_ratio) {
            continue;
        }
        let (row, col) = (apt / cfg.grid_size, apt % cfg.grid_size);
        let place = |rng: &mut rand_chacha::ChaCha8Rng| {
            (
                (col as f64 + rng.random::<f64>()) * cfg.apartment_m,
                (row as f64 + rng.random::<f64>()) * cfg.apartment_m,
            )
        };
        let bs_position = place(&mut rng);
        let users = (0..cfg.resources)
            .map(|_| UserSite {
                position: place(&mut rng),
                base_priority: rng.random_range(0..cfg.priority_classes),
            })
            .collect();
        cells.push(Cell {
            apartment: apt,
            bs_position,
            users,
        });
    }
    Topology { cells }
}

/// Link budget of one resource: per-user received power from each cell
/// (transmit power times path gain) and the small-scale channel rows.
#[derive(Debug, Clone)]
pub struct DownlinkLinks {
    /// `rx_power[u][k]`, mW at unit beam gain.
    pub rx_power: Vec<Vec<f64>>,
    /// `channel[u][k]`, length `bs_antennas`.
    pub channel: Vec<Vec<Vec<C>>>,
    /// Serving cell of each user.
    pub serving: Vec<usize>,
    pub noise: f64,
}

/// Per-user SINR `P|h_kk v_k|^2 / (N + sum_i P|h_ki v_i|^2)`; `None` beams
/// are switched-off cells and contribute nothing.
pub fn evaluate_downlink_sinr(links: &DownlinkLinks, beams: &[Option<Beamformer<f64>>]) -> Vec<f64> {
    evaluate_downlink(links, beams)
        .into_iter()
        .map(|(s, i)| s / i)
        .collect()
}

/// `(signal, interference + noise)` per user.
fn evaluate_downlink(links: &DownlinkLinks, beams: &[Option<Beamformer<f64>>]) -> Vec<(f64, f64)> {
    let gain = |u: usize, k: usize| -> f64 {
        beams[k].as_ref().map_or(0.0, |v| {
            let y: C = links.channel[u][k].iter().zip(v.as_slice()).map(|(h, w)| h * w).sum();
            links.rx_power[u][k] * y.norm_sqr()
        })
    };
    (0..links.serving.len())
        .map(|u| {
            let own = links.serving[u];
            let interference: f64 = (0..beams.len()).filter(|&k| k != own).map(|k| gain(u, k)).sum();
            (gain(u, own), links.noise + interference)
        })
        .collect()
}

/// ICRM delivery counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Delivery {
    pub sent: u64,
    /// Sent ICRMs decoded by the sender's strongest interfering base station.
    pub decoded_by_dominant: u64,
    pub erased_at_dominant: u64,
    /// Decoded ICRMs that no user sent in that subframe.
    pub false_accepts: u64,
    /// Decoded foreign ICRMs, summed over base stations.
    pub decoded_total: u64,
    /// Decoded ICRMs whose victim channel could not be estimated.
    pub estimate_unavailable: u64,
}

impl Delivery {
    fn add(&mut self, o: &Delivery) {
        self.sent += o.sent;
        self.decoded_by_dominant += o.decoded_by_dominant;
        self.erased_at_dominant += o.erased_at_dominant;
        self.false_accepts += o.false_accepts;
        self.decoded_total += o.decoded_total;
        self.estimate_unavailable += o.estimate_unavailable;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserOutcome {
    pub cell: usize,
    pub resource: usize,
    /// Mean `log2(1 + SINR)` over the measured subframes.
    pub rate: f64,
    pub sinr_db: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DropResult {
    pub scheme: Scheme,
    pub users: Vec<UserOutcome>,
    pub delivery: Delivery,
    /// `(subframe, cell, resource)` of every switched-off transmission.
    pub off_events: Vec<(usize, usize, usize)>,
}

/// Everything about a drop that does not depend on the scheme.
struct World<'a> {
    cfg: &'a SimConfig,
    topo: &'a Topology,
    code: StsCode,
    profile: IcrmProfile,
    /// Path gain `[user][cell]`, linear.
    path_gain: Vec<Vec<f64>>,
    /// `[user][cell][resource]` channel vectors.
    fading: Vec<Vec<Vec<Vec<C>>>>,
    serving: Vec<usize>,
    resource: Vec<usize>,
    seed: u64,
}

/// A foreign ICRM as decoded at one base station.
#[derive(Debug, Clone)]
struct Heard {
    icrm: Icrm,
    /// Downlink leakage row toward the requester on its resource, in units
    /// of square-root path gain.
    row: Option<Vec<C>>,
}

fn cn1<R: Rng + ?Sized>(rng: &mut R) -> C {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

impl<'a> World<'a> {
    fn new(cfg: &'a SimConfig, topo: &'a Topology, seed: u64) -> Result<Self, NetError> {
        cfg.validate()?;
        let profile = cfg.profile()?;
        let field = FieldSpec::new(profile.modulus).map_err(|e| NetError::Config(e.to_string()))?;
        let code = StsCode::new(field, cfg.code_length, 1).map_err(|e| NetError::Config(e.to_string()))?;
        let mut rng = crate::rng::stream(seed, &[0xFAD]);
        let n_users = topo.cells.len() * cfg.resources;
        let mut path_gain = vec![vec![0.0; topo.cells.len()]; n_users];
        let mut serving = Vec::with_capacity(n_users);
        let mut resource = Vec::with_capacity(n_users);
        for (k, cell) in topo.cells.iter().enumerate() {
            for (r, user) in cell.users.iter().enumerate() {
                let u = k * cfg.resources + r;
                serving.push(k);
                resource.push(r);
                for (b, other) in topo.cells.iter().enumerate() {
                    let d = dist(user.position, other.bs_position).max(cfg.min_distance_m);
                    let walls = walls_between(user.position, other.bs_position, cfg.apartment_m);
                    path_gain[u][b] = db_to_linear(-pathloss_db_with(d, walls, cfg.wall_loss_db)?);
                }
            }
        }
        let fading = (0..n_users)
            .map(|_| {
                (0..topo.cells.len())
                    .map(|_| {
                        (0..cfg.resources)
                            .map(|_| (0..cfg.bs_antennas).map(|_| cn1(&mut rng)).collect())
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            cfg,
            topo,
            code,
            profile,
            path_gain,
            fading,
            serving,
            resource,
            seed,
        })
    }

    fn links(&self, r: usize) -> DownlinkLinks {
        let p = self.cfg.bs_power_per_resource_mw();
        let users: Vec<usize> = (0..self.serving.len()).filter(|&u| self.resource[u] == r).collect();
        DownlinkLinks {
            rx_power: users
                .iter()
                .map(|&u| self.path_gain[u].iter().map(|g| g * p).collect())
                .collect(),
            channel: users
                .iter()
                .map(|&u| self.fading[u].iter().map(|h| h[r].clone()).collect())
                .collect(),
            serving: users.iter().map(|&u| self.serving[u]).collect(),
            noise: self.cfg.ue_noise_mw(),
        }
    }

    fn user(&self, k: usize, r: usize) -> usize {
        k * self.cfg.resources + r
    }

    fn priority(&self, u: usize, age: usize) -> u8 {
        let base = self.topo.cells[self.serving[u]].users[self.resource[u]].base_priority as usize;
        (base + age / self.cfg.aging_subframes).min(7) as u8
    }

    fn icrm_of(&self, u: usize, priority: u8, frame: usize) -> Icrm {
        let bs_id = self.topo.cells[self.serving[u]].apartment as u32;
        let hashed = hash_bs_id(
            bs_id,
            HashSalt {
                frame_number: frame as u32,
            },
            self.profile.hash_bits,
        )
        .expect("apartment ids are below 512");
        Icrm {
            resource_id: self.resource[u] as u8,
            priority,
            hashed_bs_id: hashed as u16,
        }
    }

    fn tones(&self, message: u64) -> Vec<usize> {
        let u = self.code.message_to_symbols(message).expect("message fits the code");
        self.code.encode(&u).values().into_iter().map(|v| v as usize).collect()
    }

    /// Runs one uplink signaling round: `senders` broadcast, every base
    /// station listens. Returns the foreign ICRMs heard by each cell.
    fn signal(&self, frame: usize, senders: &[(usize, Icrm)], delivery: &mut Delivery) -> Vec<Vec<Heard>> {
        let cfg = self.cfg;
        let n_cells = self.topo.cells.len();
        let messages: Vec<u64> = senders
            .iter()
            .map(|(_, m)| m.pack(&self.profile).expect("fields in range"))
            .collect();
        for k in 0..n_cells {
            let mut seen = vec![false; cfg.resources];
            for (u, m) in senders {
                if self.serving[*u] == k {
                    assert!(!seen[m.resource_id as usize], "two ICRMs for one resource in a cell");
                    seen[m.resource_id as usize] = true;
                }
            }
        }
        delivery.sent += senders.len() as u64;
        let s = cfg.subcarriers;
        let band = s / cfg.resources;
        let tx_amp = (s as f64 * dbm_to_mw(cfg.ue_tx_dbm) * cfg.sts_energy_fraction).sqrt();
        let all_tones: Vec<Vec<usize>> = messages.iter().map(|&m| self.tones(m)).collect();
        let theta = cfg.theta.unwrap_or(self.code.default_threshold());

        let heard: Vec<Vec<Heard>> = (0..n_cells)
            .map(|b| {
                let own: Vec<u64> = senders
                    .iter()
                    .zip(&messages)
                    .filter(|((u, _), _)| self.serving[*u] == b)
                    .map(|(_, &m)| m)
                    .collect();
                if cfg.ideal_signaling {
                    return senders
                        .iter()
                        .filter(|(u, _)| self.serving[*u] != b)
                        .map(|&(u, icrm)| Heard {
                            icrm,
                            row: Some(self.true_row(u, b)),
                        })
                        .collect();
                }
                let mut rng = crate::rng::stream(self.seed, &[0x575, frame as u64, b as u64]);
                let grids = self.received_grids(b, senders, &all_tones, tx_amp, band, &mut rng);
                let det = detect_tones(&grids, cfg.detection_tau, cfg.max_tones);
                let result = self
                    .code
                    .decode_multi(&det.indices(), theta, 0)
                    .expect("dimensions fixed by the code");
                result
                    .entries
                    .iter()
                    .filter_map(|e| {
                        let m = self.code.symbols_to_message(&e.symbols).ok()?;
                        if own.contains(&m) {
                            return None;
                        }
                        let Ok(icrm) = Icrm::unpack(m, &self.profile) else {
                            delivery.false_accepts += 1;
                            return None;
                        };
                        if !messages.contains(&m) {
                            delivery.false_accepts += 1;
                        }
                        if icrm.resource_id as usize >= cfg.resources {
                            return None;
                        }
                        let row = match cfg.channel_knowledge {
                            ChannelKnowledge::Sts => {
                                let tones = self.tones(m);
                                estimate_channel_from_sts(&det, &tones, tx_amp, s, cfg.resources)
                                    .swap_remove(icrm.resource_id as usize)
                            }
                            ChannelKnowledge::Perfect => senders
                                .iter()
                                .zip(&messages)
                                .find(|(_, &mm)| mm == m)
                                .map(|((u, _), _)| self.true_row(*u, b)),
                        };
                        Some(Heard { icrm, row })
                    })
                    .collect()
            })
            .collect();

        for (i, (u, _)) in senders.iter().enumerate() {
            let own = self.serving[*u];
            let dominant = (0..n_cells)
                .filter(|&b| b != own)
                .max_by(|&a, &b| self.path_gain[*u][a].total_cmp(&self.path_gain[*u][b]));
            if let Some(d) = dominant {
                let icrm = senders[i].1;
                if heard[d].iter().any(|h| h.icrm == icrm) {
                    delivery.decoded_by_dominant += 1;
                } else {
                    delivery.erased_at_dominant += 1;
                }
            }
        }
        for h in heard.iter().flatten() {
            delivery.decoded_total += 1;
            if h.row.is_none() {
                delivery.estimate_unavailable += 1;
            }
        }
        heard
    }

    fn true_row(&self, u: usize, b: usize) -> Vec<C> {
        let g = self.path_gain[u][b].sqrt();
        self.fading[u][b][self.resource[u]].iter().map(|h| h * g).collect()
    }

    /// Frequency-domain received STS symbols at base station `b`, one grid
    /// per antenna: the senders' tones through their per-band channels on
    /// top of the own cell's uplink data and thermal noise.
    fn received_grids<R: Rng>(
        &self,
        b: usize,
        senders: &[(usize, Icrm)],
        tones: &[Vec<usize>],
        tx_amp: f64,
        band: usize,
        rng: &mut R,
    ) -> Vec<ResourceGrid<f64>> {
        let cfg = self.cfg;
        let (s, n) = (cfg.subcarriers, cfg.code_length);
        let noise = cfg.bs_noise_mw();
        let data_amp = (cfg.resources as f64 * dbm_to_mw(cfg.ue_tx_dbm)).sqrt();
        (0..cfg.bs_antennas)
            .map(|a| {
                let mut g = ResourceGrid::zeros(n, s);
                for sym in 0..n {
                    for k in 0..s {
                        let mut y = cn1(rng) * noise.sqrt();
                        if cfg.sts_background {
                            let r = k / band;
                            let u = self.user(b, r);
                            let q = C::new(
                                if rng.random() { 1.0 } else { -1.0 },
                                if rng.random() { 1.0 } else { -1.0 },
                            ) * std::f64::consts::FRAC_1_SQRT_2;
                            y += self.fading[u][b][r][a] * (self.path_gain[u][b].sqrt() * data_amp) * q;
                        }
                        g.set(sym, k, y);
                    }
                }
                for ((u, _), c) in senders.iter().zip(tones) {
                    let amp = tx_amp * self.path_gain[*u][b].sqrt();
                    for (sym, &k) in c.iter().enumerate() {
                        g.add(sym, k, self.fading[*u][b][k / band][a] * amp);
                    }
                }
                g
            })
            .collect()
    }
}

fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
}

/// Simulates one drop under `scheme`.
pub fn run_drop(topo: &Topology, scheme: Scheme, cfg: &SimConfig, seed: u64) -> Result<DropResult, NetError> {
    let w = World::new(cfg, topo, seed)?;
    let n_cells = topo.cells.len();
    let n_users = n_cells * cfg.resources;
    let links: Vec<DownlinkLinks> = (0..cfg.resources).map(|r| w.links(r)).collect();
    let threshold = db_to_linear(cfg.icrm_sinr_threshold_db);
    let p_res = cfg.bs_power_per_resource_mw();

    let default_beam = |k: usize, r: usize| -> Beamformer<f64> {
        match scheme {
            Scheme::None | Scheme::OnOff => Beamformer::uniform(cfg.bs_antennas),
            _ => Beamformer::matched_filter(&w.fading[w.user(k, r)][k][r])
                .unwrap_or_else(|| Beamformer::uniform(cfg.bs_antennas)),
        }
    };

    // state carried across subframes
    let mut age = vec![0usize; n_users];
    let mut last: Vec<(f64, f64)> = {
        let mut out = vec![(0.0, 1.0); n_users];
        for (r, l) in links.iter().enumerate() {
            let beams: Vec<_> = (0..n_cells).map(|k| Some(default_beam(k, r))).collect();
            for (k, v) in evaluate_downlink(l, &beams).into_iter().enumerate() {
                out[w.user(k, r)] = v;
            }
        }
        out
    };
    let mut pending: Vec<Vec<Heard>> = vec![Vec::new(); n_cells];
    let mut off_until = vec![vec![0usize; cfg.resources]; n_cells];
    let mut decision_rng = crate::rng::stream(seed, &[0xC011]);
    let mut delivery = Delivery::default();
    let mut rate_sum = vec![0.0; n_users];
    let mut sinr_trace = vec![Vec::with_capacity(cfg.subframes); n_users];
    let mut off_events = Vec::new();

    for t in 0..cfg.subframes {
        for (r, l) in links.iter().enumerate() {
            let beams: Vec<Option<Beamformer<f64>>> = (0..n_cells)
                .map(|k| {
                    let u = w.user(k, r);
                    let requests: Vec<&Heard> =
                        pending[k].iter().filter(|h| h.icrm.resource_id as usize == r).collect();
                    match scheme {
                        Scheme::None | Scheme::IdealBfUncoordinated => Some(default_beam(k, r)),
                        Scheme::OnOff => {
                            if off_until[k][r] > t {
                                return None;
                            }
                            if requests.is_empty() {
                                return Some(default_beam(k, r));
                            }
                            let comp: Vec<u8> = requests.iter().map(|h| h.icrm.priority).collect();
                            let d = onoff_decide(w.priority(u, age[u]), &comp, cfg.hold_subframes, &mut decision_rng)
                                .expect("valid priorities");
                            match d.action {
                                Action::On => Some(default_beam(k, r)),
                                Action::Off => {
                                    off_until[k][r] = t + d.hold_subframes as usize;
                                    None
                                }
                            }
                        }
                        Scheme::Slnr | Scheme::PrioritizedSlnr => {
                            let usable: Vec<&Heard> = requests.into_iter().filter(|h| h.row.is_some()).collect();
                            if usable.is_empty() {
                                return Some(default_beam(k, r));
                            }
                            let scale = p_res.sqrt();
                            let rows = usable
                                .iter()
                                .map(|h| h.row.as_ref().expect("filtered").iter().map(|z| z * scale).collect())
                                .collect();
                            let leak = LeakageChannel::new(cfg.bs_antennas, rows).expect("row length");
                            let weights: Vec<f64> = usable
                                .iter()
                                .map(|h| match scheme {
                                    Scheme::PrioritizedSlnr => priority_weight(h.icrm.priority).expect("3-bit"),
                                    _ => 1.0,
                                })
                                .collect();
                            let own_g = (p_res * w.path_gain[u][k]).sqrt();
                            let h_kk: Vec<C> = w.fading[u][k][r].iter().map(|z| z * own_g).collect();
                            let sigma2 = match cfg.slnr_noise {
                                SlnrNoise::Noise => cfg.ue_noise_mw(),
                                SlnrNoise::InterferencePlusNoise => last[u].1,
                            };
                            Some(slnr_beamformer(&h_kk, &leak, &weights, sigma2).unwrap_or_else(|_| default_beam(k, r)))
                        }
                    }
                })
                .collect();
            for (k, b) in beams.iter().enumerate() {
                if b.is_none() {
                    off_events.push((t, k, r));
                }
            }
            for (k, v) in evaluate_downlink(l, &beams).into_iter().enumerate() {
                let u = w.user(k, r);
                last[u] = v;
            }
        }

        let mut senders = Vec::new();
        for u in 0..n_users {
            let sinr = last[u].0 / last[u].1;
            sinr_trace[u].push(10.0 * sinr.log10());
            if t >= cfg.warmup_subframes {
                rate_sum[u] += (1.0 + sinr).log2();
            }
            if sinr < threshold {
                age[u] += 1;
                senders.push((u, w.icrm_of(u, w.priority(u, age[u]), t)));
            } else {
                age[u] = 0;
            }
        }
        pending = if scheme.uses_icrm() && !senders.is_empty() {
            w.signal(t, &senders, &mut delivery)
        } else {
            vec![Vec::new(); n_cells]
        };
    }

    let measured = (cfg.subframes - cfg.warmup_subframes) as f64;
    let users = (0..n_users)
        .map(|u| UserOutcome {
            cell: w.serving[u],
            resource: w.resource[u],
            rate: rate_sum[u] / measured,
            sinr_db: std::mem::take(&mut sinr_trace[u]),
        })
        .collect();
    Ok(DropResult {
        scheme,
        users,
        delivery,
        off_events,
    })
}

/// Seed of drop `d` under a master seed.
pub fn drop_seed(master_seed: u64, drop: usize) -> u64 {
    crate::rng::derive_seed(master_seed, &[drop as u64])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateSample {
    pub scheme: Scheme,
    pub drop: usize,
    pub user: usize,
    pub resource: usize,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeSummary {
    pub scheme: Scheme,
    pub users: usize,
    pub mean_rate: f64,
    pub percentiles: Vec<(f64, f64)>,
    pub delivery: Delivery,
    pub off_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloResult {
    pub samples: Vec<RateSample>,
    pub summaries: Vec<SchemeSummary>,
    pub mean_active_cells: f64,
}

pub const REPORTED_PERCENTILES: [f64; 11] = [1.0, 5.0, 10.0, 20.0, 30.0, 50.0, 70.0, 80.0, 90.0, 95.0, 99.0];

/// Nearest-rank percentile of `sorted` (ascending), `p` in (0, 100].
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Empirical CDF as `(rate, F(rate))` steps.
pub fn empirical_cdf(samples: &[f64]) -> Vec<(f64, f64)> {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (i, x) in s.into_iter().enumerate() {
        match out.last_mut() {
            Some(last) if last.0 == x => last.1 = (i + 1) as f64 / n,
            _ => out.push((x, (i + 1) as f64 / n)),
        }
    }
    out
}

/// Runs `cfg.drops` drops of every scheme in `cfg.schemes`. Drops run in
/// parallel and are reduced in drop order, so the result does not depend on
/// the thread count.
pub fn monte_carlo(cfg: &SimConfig, master_seed: u64) -> Result<MonteCarloResult, NetError> {
    cfg.validate()?;
    let per_drop: Vec<Result<(usize, Vec<DropResult>), NetError>> = (0..cfg.drops)
        .into_par_iter()
        .map(|d| {
            let seed = drop_seed(master_seed, d);
            let topo = generate_topology(cfg, seed);
            let results = cfg
                .schemes
                .iter()
                .map(|&s| run_drop(&topo, s, cfg, seed))
                .collect::<Result<Vec<_>, _>>()?;
            Ok((topo.active(), results))
        })
        .collect();
    let per_drop = per_drop.into_iter().collect::<Result<Vec<_>, _>>()?;

    let mut samples = Vec::new();
    let mut by_scheme: BTreeMap<usize, (Vec<f64>, Delivery, usize, usize)> = BTreeMap::new();
    let mut active = 0usize;
    for (d, (n_active, results)) in per_drop.iter().enumerate() {
        active += n_active;
        for (si, res) in results.iter().enumerate() {
            let entry = by_scheme
                .entry(si)
                .or_insert_with(|| (Vec::new(), Delivery::default(), 0, 0));
            for (u, o) in res.users.iter().enumerate() {
                samples.push(RateSample {
                    scheme: res.scheme,
                    drop: d,
                    user: u,
                    resource: o.resource,
                    rate: o.rate,
                });
                entry.0.push(o.rate);
            }
            entry.1.add(&res.delivery);
            entry.2 += res.off_events.len();
            entry.3 += res.users.len() * cfg.subframes;
        }
    }
    let summaries = by_scheme
        .into_iter()
        .map(|(si, (mut rates, delivery, offs, slots))| {
            rates.sort_by(f64::total_cmp);
            let percentiles = if rates.is_empty() {
                Vec::new()
            } else {
                REPORTED_PERCENTILES
                    .iter()
                    .map(|&p| (p, percentile(&rates, p)))
                    .collect()
            };
            SchemeSummary {
                scheme: cfg.schemes[si],
                users: rates.len(),
                mean_rate: if rates.is_empty() {
                    0.0
                } else {
                    rates.iter().sum::<f64>() / rates.len() as f64
                },
                percentiles,
                delivery,
                off_fraction: if slots == 0 { 0.0 } else { offs as f64 / slots as f64 },
            }
        })
        .collect();
    Ok(MonteCarloResult {
        samples,
        summaries,
        mean_active_cells: active as f64 / cfg.drops as f64,
    })
}

impl MonteCarloResult {
    pub fn summary(&self, scheme: Scheme) -> Option<&SchemeSummary> {
        self.summaries.iter().find(|s| s.scheme == scheme)
    }

    pub fn percentile(&self, scheme: Scheme, p: f64) -> Option<f64> {
        let mut r: Vec<f64> = self
            .samples
            .iter()
            .filter(|s| s.scheme == scheme)
            .map(|s| s.rate)
            .collect();
        if r.is_empty() {
            return None;
        }
        r.sort_by(f64::total_cmp);
        Some(percentile(&r, p))
    }

    /// `scheme,drop,user,resource,rate`
    pub fn rates_csv(&self) -> String {
        let mut out = String::from("scheme,drop,user,resource,rate\n");
        for s in &self.samples {
            writeln!(
                out,
                "{},{},{},{},{}",
                s.scheme.name(),
                s.drop,
                s.user,
                s.resource,
                s.rate
            )
            .expect("string write");
        }
        out
    }

    /// `scheme,percentile,rate`
    pub fn percentiles_csv(&self) -> String {
        let mut out = String::from("scheme,percentile,rate\n");
        for s in &self.summaries {
            for (p, r) in &s.percentiles {
                writeln!(out, "{},{},{}", s.scheme.name(), p, r).expect("string write");
            }
        }
        out
    }
}
