//! Uplink data decoding in the presence of overlaid STS tones.
//!
//! One packet fills a subframe of 16QAM bins protected by the rate-1/2
//! convolutional code. STS users add tones on the non-reserved symbols; the
//! receiver energy-detects them, zeroes those bins and hands the lost bits
//! to the Viterbi decoder as erasures. The baseline receives the same data
//! and noise with no STS and no detection.

use num_complex::Complex;
use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::channel::cn;
use super::detect::{detect_tones, excise_tones, ToneDetection};
use super::fec::{conv_encode, qam16_demap, qam16_map, viterbi_decode, Interleaver, SoftBit, TAIL};
use super::ofdm::{OfdmConfig, PhyError, ResourceGrid};
use crate::gf::FieldSpec;
use crate::scalar::db_to_linear;
use crate::stscode::StsCode;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UplinkConfig {
    pub ofdm: OfdmConfig,
    pub modulus: u64,
    pub code_length: usize,
    /// STS user counts to evaluate; users are nested (the first `n` of one draw).
    pub sts_counts: Vec<usize>,
    /// Per-bin data SNR at the receive antenna.
    pub snr_db: Vec<f64>,
    pub trials: usize,
    /// Per-sample energy of one STS signal relative to the data signal.
    pub sts_to_data_db: f64,
    pub tau: f64,
    /// Detector cap per symbol; the receiver does not know the user count.
    pub max_tones: usize,
    pub interleaver_mult: usize,
    pub target_per: f64,
}

impl Default for UplinkConfig {
    fn default() -> Self {
        Self {
            ofdm: OfdmConfig::default(),
            modulus: 509,
            code_length: 11,
            sts_counts: vec![0, 10, 20, 30],
            snr_db: (0..=16).map(|i| 10.5 + 0.25 * i as f64).collect(),
            trials: 200,
            sts_to_data_db: -10.0,
            tau: 8.0,
            max_tones: 60,
            interleaver_mult: 1031,
            target_per: 0.1,
        }
    }
}

impl UplinkConfig {
    fn validate(&self) -> Result<StsCode, PhyError> {
        self.ofdm.validate()?;
        let bad = |m: &str| Err(PhyError::Config(m.into()));
        let field = FieldSpec::new(self.modulus).map_err(|e| PhyError::Config(format!("modulus: {e}")))?;
        if self.modulus as usize > self.ofdm.subcarriers || self.code_length > self.ofdm.sts_symbols() {
            return bad("STS code does not fit the grid");
        }
        let code = StsCode::new(field, self.code_length, 1).map_err(|e| PhyError::Config(format!("code: {e}")))?;
        if self.sts_counts.iter().any(|&n| n as u64 > self.modulus - 1) {
            return bad("sts_counts entries must not exceed p-1");
        }
        if self.snr_db.is_empty() || self.trials == 0 || self.sts_counts.is_empty() {
            return bad("snr_db, sts_counts and trials must be non-empty");
        }
        if self.tau <= 1.0 {
            return bad("tau must exceed 1");
        }
        let bits = self.coded_bits();
        if !bits.is_multiple_of(2) || bits / 2 <= TAIL {
            return bad("subframe too small for the code");
        }
        if gcd(bits, self.interleaver_mult) != 1 {
            return bad("interleaver_mult must be coprime with the coded length");
        }
        if !(self.target_per > 0.0 && self.target_per < 1.0) {
            return bad("target_per must lie in (0, 1)");
        }
        Ok(code)
    }

    fn coded_bits(&self) -> usize {
        4 * self.ofdm.subcarriers * self.ofdm.symbols_per_subframe
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UplinkPoint {
    /// `no_sts` or `sts_excised`.
    pub scheme: String,
    pub n_sts: usize,
    pub snr_db: f64,
    pub per: f64,
    /// Fraction of data bins zeroed by excision.
    pub excised_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UplinkCurves {
    pub points: Vec<UplinkPoint>,
    /// `(n_sts, SNR gap at the target PER)`; `None` when a curve never crosses.
    pub penalties: Vec<(usize, Option<f64>)>,
}

impl UplinkCurves {
    pub fn curve(&self, scheme: &str, n_sts: usize) -> Vec<(f64, f64)> {
        self.points
            .iter()
            .filter(|p| p.scheme == scheme && p.n_sts == n_sts)
            .map(|p| (p.snr_db, p.per))
            .collect()
    }

    pub fn penalty(&self, n_sts: usize) -> Option<f64> {
        self.penalties.iter().find(|p| p.0 == n_sts).and_then(|p| p.1)
    }
}

impl UplinkCurves {
    /// `x_value,metric,value,scheme,n_antennas,n_sts,seed`.
    pub fn curves_csv(&self, seed: u64) -> String {
        let mut out = String::from("x_value,metric,value,scheme,n_antennas,n_sts,seed\n");
        for p in &self.points {
            out += &format!("{},per,{},{},1,{},{seed}\n", p.snr_db, p.per, p.scheme, p.n_sts);
            out += &format!(
                "{},excised_fraction,{},{},1,{},{seed}\n",
                p.snr_db, p.excised_fraction, p.scheme, p.n_sts
            );
        }
        out
    }

    /// `n_sts,snr_penalty_db,seed`; the penalty is blank when undefined.
    pub fn penalty_csv(&self, seed: u64) -> String {
        let mut out = String::from("n_sts,snr_penalty_db,seed\n");
        for (n, d) in &self.penalties {
            let d = d.map(|d| d.to_string()).unwrap_or_default();
            out += &format!("{n},{d},{seed}\n");
        }
        out
    }
}

/// SNR at which a PER curve (sorted by SNR) first falls to `target`,
/// interpolating `log10 PER` linearly. Zero PER is floored at `floor`.
pub fn crossing_snr(curve: &[(f64, f64)], target: f64, floor: f64) -> Option<f64> {
    let lg = |p: f64| p.max(floor).log10();
    if curve.first()?.1 <= target {
        return Some(curve[0].0);
    }
    curve.windows(2).find(|w| w[0].1 > target && w[1].1 <= target).map(|w| {
        let (x0, y0, x1, y1) = (w[0].0, lg(w[0].1), w[1].0, lg(w[1].1));
        x0 + (lg(target) - y0) * (x1 - x0) / (y1 - y0)
    })
}

/// Horizontal gap between two PER curves at `target`.
pub fn snr_penalty_db(reference: &[(f64, f64)], impaired: &[(f64, f64)], target: f64, floor: f64) -> Option<f64> {
    Some(crossing_snr(impaired, target, floor)? - crossing_snr(reference, target, floor)?)
}

struct Packet {
    info: Vec<bool>,
    symbols: Vec<Complex<f64>>,
    noise: Vec<Complex<f64>>,
    // per STS user: tone index per STS symbol and a unit phasor per symbol
    sts: Vec<(Vec<usize>, Vec<Complex<f64>>)>,
}

fn draw_packet<R: Rng>(cfg: &UplinkConfig, code: &StsCode, il: &Interleaver, rng: &mut R) -> Packet {
    let n_info = cfg.coded_bits() / 2 - TAIL;
    let info: Vec<bool> = (0..n_info).map(|_| rng.random()).collect();
    let coded = il.interleave(&conv_encode(&info));
    let symbols = qam16_map::<f64>(&coded);
    let noise = (0..symbols.len()).map(|_| cn::<f64, _>(1.0, rng)).collect();
    let users = cfg.sts_counts.iter().copied().max().unwrap_or(0);
    let tau = std::f64::consts::TAU;
    let sts = sample(rng, (cfg.modulus - 1) as usize, users)
        .into_iter()
        .map(|i| {
            let u = i as u64 + 1;
            let tones = code
                .encode(&code.symbols(&[u]).expect("u < p"))
                .values()
                .into_iter()
                .map(|v| v as usize)
                .collect();
            let phases = (0..cfg.code_length)
                .map(|_| Complex::from_polar(1.0, tau * rng.random::<f64>()))
                .collect();
            (tones, phases)
        })
        .collect();
    Packet {
        info,
        symbols,
        noise,
        sts,
    }
}

/// Demaps, deinterleaves and decodes; bins listed in `erased` become erasures.
fn decode_packet(
    grid: &ResourceGrid<f64>,
    erased: Option<&ToneDetection<f64>>,
    il: &Interleaver,
    info: &[bool],
) -> bool {
    let s = grid.subcarriers();
    let mut bits: Vec<SoftBit> = Vec::with_capacity(4 * grid.symbols() * s);
    for sym in 0..grid.symbols() {
        for k in 0..s {
            let lost = erased.is_some_and(|d| d.find(sym, k).is_some());
            if lost {
                bits.extend([None; 4]);
            } else {
                bits.extend(qam16_demap(grid.get(sym, k)).map(Some));
            }
        }
    }
    viterbi_decode(&il.deinterleave(&bits)) == info
}

/// Packet error rate versus SNR without STS and with `n` STS overlays plus
/// excision, for every `n` in `sts_counts`.
pub fn run_uplink_impact(cfg: &UplinkConfig, seed: u64) -> Result<UplinkCurves, PhyError> {
    let code = cfg.validate()?;
    let il = Interleaver::new(cfg.coded_bits(), cfg.interleaver_mult);
    let (s, n_sym, first) = (
        cfg.ofdm.subcarriers,
        cfg.ofdm.symbols_per_subframe,
        cfg.ofdm.reserved_symbols,
    );
    let tone_amp = (s as f64 * db_to_linear(cfg.sts_to_data_db)).sqrt();
    let n_snr = cfg.snr_db.len();
    let n_curves = 1 + cfg.sts_counts.len();

    // (packet failures, excised bins) per (curve, snr)
    let totals = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = crate::rng::stream(seed, &[trial as u64]);
            let pkt = draw_packet(cfg, &code, &il, &mut rng);
            let mut acc = vec![(0u64, 0u64); n_curves * n_snr];
            for (si, &snr_db) in cfg.snr_db.iter().enumerate() {
                let sigma = db_to_linear(-snr_db).sqrt();
                let mut rx = ResourceGrid::zeros(n_sym, s);
                for sym in 0..n_sym {
                    for k in 0..s {
                        let i = sym * s + k;
                        rx.set(sym, k, pkt.symbols[i] + pkt.noise[i] * sigma);
                    }
                }
                if !decode_packet(&rx, None, &il, &pkt.info) {
                    acc[si].0 += 1;
                }
                for (ci, &n_sts) in cfg.sts_counts.iter().enumerate() {
                    let mut with = rx.clone();
                    for (tones, phases) in &pkt.sts[..n_sts] {
                        for (n, (&k, &ph)) in tones.iter().zip(phases).enumerate() {
                            with.add(first + n, k, ph * tone_amp);
                        }
                    }
                    let mut sts_part = ResourceGrid::zeros(cfg.code_length, s);
                    for n in 0..cfg.code_length {
                        sts_part.row_mut(n).copy_from_slice(with.row(first + n));
                    }
                    let det = detect_tones(&[sts_part], cfg.tau, cfg.max_tones);
                    let mut full = det.clone();
                    full.symbols = (0..n_sym)
                        .map(|sym| {
                            if sym >= first && sym < first + cfg.code_length {
                                det.symbols[sym - first].clone()
                            } else {
                                Vec::new()
                            }
                        })
                        .collect();
                    let cleaned = excise_tones(&with, &full);
                    let cell = &mut acc[(1 + ci) * n_snr + si];
                    cell.1 += full.total() as u64;
                    if !decode_packet(&cleaned, Some(&full), &il, &pkt.info) {
                        cell.0 += 1;
                    }
                }
            }
            acc
        })
        .reduce(
            || vec![(0, 0); n_curves * n_snr],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    x.0 += y.0;
                    x.1 += y.1;
                }
                a
            },
        );

    let trials = cfg.trials as f64;
    let bins = trials * (n_sym * s) as f64;
    let mut points = Vec::with_capacity(n_curves * n_snr);
    for (si, &snr_db) in cfg.snr_db.iter().enumerate() {
        points.push(UplinkPoint {
            scheme: "no_sts".into(),
            n_sts: 0,
            snr_db,
            per: totals[si].0 as f64 / trials,
            excised_fraction: 0.0,
        });
    }
    for (ci, &n_sts) in cfg.sts_counts.iter().enumerate() {
        for (si, &snr_db) in cfg.snr_db.iter().enumerate() {
            let (f, e) = totals[(1 + ci) * n_snr + si];
            points.push(UplinkPoint {
                scheme: "sts_excised".into(),
                n_sts,
                snr_db,
                per: f as f64 / trials,
                excised_fraction: e as f64 / bins,
            });
        }
    }
    let mut curves = UplinkCurves {
        points,
        penalties: Vec::new(),
    };
    let floor = 0.5 / trials;
    let reference = sorted(curves.curve("no_sts", 0));
    curves.penalties = cfg
        .sts_counts
        .iter()
        .map(|&n| {
            let c = sorted(curves.curve("sts_excised", n));
            (n, snr_penalty_db(&reference, &c, cfg.target_per, floor))
        })
        .collect();
    Ok(curves)
}

fn sorted(mut c: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    c.sort_by(|a, b| a.0.total_cmp(&b.0));
    c
}
