//! Multi-signal STS link simulation.
//!
//! Works on the frequency-domain equivalent of the OFDM chain: with block
//! fading and all delays inside the cyclic prefix, each subcarrier sees
//! `Y[k] = H(k) X[k] + W[k]` exactly (checked against the time-domain chain
//! in the channel tests). A trial draws the users, channels and background
//! once and replays them at every SIR point and antenna count, so the curves
//! share their randomness.

use num_complex::Complex;
use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::channel::{cn, ChannelProfile, TapFading};
use super::detect::{detect_tones_with, Combining};
use super::ofdm::{OfdmConfig, PhyError, ResourceGrid};
use crate::gf::FieldSpec;
use crate::scalar::db_to_linear;
use crate::stscode::StsCode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkScheme {
    /// Unit-gain channels with random phase.
    Awgn,
    /// Pedestrian B multipath with Jakes fading.
    #[serde(rename = "pedb")]
    PedB,
}

impl LinkScheme {
    pub fn name(self) -> &'static str {
        match self {
            LinkScheme::Awgn => "awgn",
            LinkScheme::PedB => "pedb",
        }
    }

    fn profile(self, speed_kmh: f64) -> ChannelProfile {
        match self {
            LinkScheme::Awgn => ChannelProfile::awgn(0.0),
            LinkScheme::PedB => ChannelProfile::pedb(speed_kmh, 0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkConfig {
    pub ofdm: OfdmConfig,
    pub modulus: u64,
    pub code_length: usize,
    /// Simultaneous STS signals.
    pub signals: usize,
    pub sir_db: Vec<f64>,
    pub antennas: Vec<usize>,
    pub schemes: Vec<LinkScheme>,
    pub trials: usize,
    pub speed_kmh: f64,
    /// Detection threshold over the per-symbol median power.
    pub tau: f64,
    /// Defaults to twice the number of signals.
    pub max_tones: Option<usize>,
    /// Defaults to `ceil((N + 1) / 2)`.
    pub theta: Option<usize>,
    pub offset_window: u64,
    /// Interferer-to-thermal-noise ratio inside the unit-power background.
    pub inr_db: f64,
    pub combining: Combining,
}

impl Default for LinkConfig {
    fn default() -> Self {
        Self {
            ofdm: OfdmConfig::default(),
            modulus: 509,
            code_length: 11,
            signals: 30,
            sir_db: (0..=10).map(|i| -30.0 + 2.0 * i as f64).collect(),
            antennas: vec![1, 2, 4],
            schemes: vec![LinkScheme::Awgn, LinkScheme::PedB],
            trials: 2000,
            speed_kmh: 3.0,
            tau: 8.0,
            max_tones: None,
            theta: None,
            offset_window: 0,
            inr_db: 10.0,
            combining: Combining::Union,
        }
    }
}

impl LinkConfig {
    pub fn validate(&self) -> Result<StsCode, PhyError> {
        self.ofdm.validate()?;
        let bad = |m: &str| Err(PhyError::Config(m.into()));
        let field = FieldSpec::new(self.modulus).map_err(|e| PhyError::Config(format!("modulus: {e}")))?;
        if self.modulus as usize > self.ofdm.subcarriers {
            return bad("modulus must not exceed the subcarrier count");
        }
        if self.code_length > self.ofdm.sts_symbols() {
            return bad("code_length exceeds the STS symbols of a subframe");
        }
        let code = StsCode::new(field, self.code_length, 1).map_err(|e| PhyError::Config(format!("code: {e}")))?;
        if self.signals == 0 || self.signals as u64 > self.modulus - 1 {
            return bad("signals must be in 1..=p-1");
        }
        if self.antennas.is_empty() || self.antennas.contains(&0) {
            return bad("antennas must be a non-empty list of positive counts");
        }
        if self.schemes.is_empty() || self.sir_db.is_empty() || self.trials == 0 {
            return bad("schemes, sir_db and trials must be non-empty");
        }
        if self.tau <= 1.0 {
            return bad("tau must exceed 1");
        }
        let theta = self.theta.unwrap_or(code.default_threshold());
        if theta < 1 || theta > self.code_length {
            return bad("theta must lie in 1..=code_length");
        }
        Ok(code)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkPoint {
    pub scheme: LinkScheme,
    pub n_antennas: usize,
    pub sir_db: f64,
    /// Transmitted signals not recovered, per transmitted signal.
    pub erasure_rate: f64,
    /// Accepted signals that were never sent, per transmitted signal.
    pub error_rate: f64,
}

/// `x_value,metric,value,scheme,n_antennas,seed`, one row per point and
/// metric.
pub fn link_csv(points: &[LinkPoint], seed: u64) -> String {
    let mut out = String::from("x_value,metric,value,scheme,n_antennas,seed\n");
    for p in points {
        for (metric, v) in [("erasure_rate", p.erasure_rate), ("error_rate", p.error_rate)] {
            out += &format!(
                "{},{metric},{v},{},{},{seed}\n",
                p.sir_db,
                p.scheme.name(),
                p.n_antennas
            );
        }
    }
    out
}

struct Trial {
    messages: Vec<u64>,
    tones: Vec<Vec<usize>>,
    // gains[a][g][n]
    gains: Vec<Vec<Vec<Complex<f64>>>>,
    background: Vec<ResourceGrid<f64>>,
}

fn draw_trial<R: Rng>(
    code: &StsCode,
    cfg: &LinkConfig,
    scheme: LinkScheme,
    n_ant: usize,
    rng: &mut R,
    planner: &mut FftPlanner<f64>,
) -> Trial {
    let s = cfg.ofdm.subcarriers;
    let n = cfg.code_length;
    let p = cfg.modulus;
    let messages: Vec<u64> = sample(rng, (p - 1) as usize, cfg.signals)
        .into_iter()
        .map(|i| i as u64 + 1)
        .collect();
    let tones: Vec<Vec<usize>> = messages
        .iter()
        .map(|&u| {
            code.encode(&code.symbols(&[u]).expect("u < p"))
                .values()
                .into_iter()
                .map(|v| v as usize)
                .collect()
        })
        .collect();
    let prof = scheme.profile(cfg.speed_kmh);
    let t_sym = cfg.ofdm.symbol_duration();
    let t_of = |sym: usize| (cfg.ofdm.reserved_symbols + sym) as f64 * t_sym;
    let tau = std::f64::consts::TAU;
    let gains = (0..n_ant)
        .map(|_| {
            tones
                .iter()
                .map(|c| {
                    let fading = TapFading::draw(&prof, &cfg.ofdm, rng);
                    let rot = Complex::from_polar(1.0, tau * rng.random::<f64>());
                    (0..n).map(|sym| rot * fading.response(t_of(sym), c[sym], s)).collect()
                })
                .collect()
        })
        .collect();
    let inr = db_to_linear(cfg.inr_db);
    let (p_int, p_noise) = (inr / (1.0 + inr), 1.0 / (1.0 + inr));
    let fft = planner.plan_fft_forward(s);
    let background = (0..n_ant)
        .map(|_| {
            let fading = TapFading::draw(&prof, &cfg.ofdm, rng);
            let mut grid = ResourceGrid::zeros(n, s);
            let mut h = vec![Complex::new(0.0, 0.0); s];
            for sym in 0..n {
                h.iter_mut().for_each(|z| *z = Complex::new(0.0, 0.0));
                for (d, g) in fading.gains_at(t_of(sym)) {
                    h[d % s] += g;
                }
                fft.process(&mut h);
                let amp = (p_int / 2.0).sqrt();
                for (k, hk) in h.iter().enumerate() {
                    let q = Complex::new(
                        if rng.random() { amp } else { -amp },
                        if rng.random() { amp } else { -amp },
                    );
                    grid.set(sym, k, hk * q + cn::<f64, _>(p_noise, rng));
                }
            }
            grid
        })
        .collect();
    Trial {
        messages,
        tones,
        gains,
        background,
    }
}

/// Erasure and error rates of `signals` simultaneous `(N, 1)` STS signals at
/// every (scheme, antenna count, SIR) point.
///
/// SIR is the per-sample energy of one STS signal over the background
/// (interferer data through its own channel plus noise); one STS symbol
/// therefore puts `S * SIR` on its tone bin against a unit-power background.
pub fn run_sts_link(cfg: &LinkConfig, seed: u64) -> Result<Vec<LinkPoint>, PhyError> {
    let code = cfg.validate()?;
    let theta = cfg.theta.unwrap_or(code.default_threshold());
    let max_tones = cfg.max_tones.unwrap_or(2 * cfg.signals);
    let max_ant = *cfg.antennas.iter().max().expect("validated");
    let s = cfg.ofdm.subcarriers as f64;
    let amps: Vec<f64> = cfg.sir_db.iter().map(|&x| (s * db_to_linear(x)).sqrt()).collect();
    let n_points = cfg.antennas.len() * amps.len();
    let n_cells = cfg.schemes.len() * n_points;

    let counts = (0..cfg.trials)
        .into_par_iter()
        .map_init(FftPlanner::new, |planner, trial| {
            let mut acc = vec![(0u64, 0u64); n_cells];
            for (si, &scheme) in cfg.schemes.iter().enumerate() {
                let mut rng = crate::rng::stream(seed, &[trial as u64, si as u64]);
                let t = draw_trial(&code, cfg, scheme, max_ant, &mut rng, planner);
                for (ai, &n_ant) in cfg.antennas.iter().enumerate() {
                    for (pi, &amp) in amps.iter().enumerate() {
                        let grids: Vec<ResourceGrid<f64>> = (0..n_ant)
                            .map(|a| {
                                let mut g = t.background[a].clone();
                                for (gi, c) in t.tones.iter().enumerate() {
                                    for (sym, &k) in c.iter().enumerate() {
                                        g.add(sym, k, t.gains[a][gi][sym] * amp);
                                    }
                                }
                                g
                            })
                            .collect();
                        let det = detect_tones_with(&grids, cfg.tau, max_tones, cfg.combining);
                        let result = code
                            .decode_multi(&det.indices(), theta, cfg.offset_window)
                            .expect("validated dimensions");
                        let found: Vec<u64> = result.entries.iter().map(|e| e.symbols.values()[0]).collect();
                        let erasures = t.messages.iter().filter(|m| !found.contains(m)).count();
                        let errors = found.iter().filter(|f| !t.messages.contains(f)).count();
                        let cell = &mut acc[si * n_points + ai * amps.len() + pi];
                        cell.0 += erasures as u64;
                        cell.1 += errors as u64;
                    }
                }
            }
            acc
        })
        .reduce(
            || vec![(0, 0); n_cells],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    x.0 += y.0;
                    x.1 += y.1;
                }
                a
            },
        );

    let denom = (cfg.trials * cfg.signals) as f64;
    let mut out = Vec::with_capacity(n_cells);
    for (si, &scheme) in cfg.schemes.iter().enumerate() {
        for (ai, &n_antennas) in cfg.antennas.iter().enumerate() {
            for (pi, &sir_db) in cfg.sir_db.iter().enumerate() {
                let (e, r) = counts[si * n_points + ai * amps.len() + pi];
                out.push(LinkPoint {
                    scheme,
                    n_antennas,
                    sir_db,
                    erasure_rate: e as f64 / denom,
                    error_rate: r as f64 / denom,
                });
            }
        }
    }
    Ok(out)
}
