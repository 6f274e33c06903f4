use num_complex::Complex;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::ofdm::OfdmConfig;
use crate::scalar::Real;

/// ITU pedestrian B: (delay ns, mean power dB).
pub const PEDB_TAPS: [(f64, f64); 6] = [
    (0.0, 0.0),
    (200.0, -0.9),
    (800.0, -4.9),
    (1200.0, -8.0),
    (2300.0, -7.8),
    (3700.0, -23.9),
];

const SINUSOIDS: usize = 16;
const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelKind {
    Awgn,
    FlatRayleigh,
    #[serde(rename = "pedb")]
    PedB,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tap {
    pub delay_ns: f64,
    pub power_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelProfile {
    pub kind: ChannelKind,
    pub taps: Vec<Tap>,
    pub speed_kmh: f64,
    /// Per-sample complex noise variance.
    pub noise_variance: f64,
}

impl ChannelProfile {
    pub fn awgn(noise_variance: f64) -> Self {
        Self {
            kind: ChannelKind::Awgn,
            taps: vec![Tap {
                delay_ns: 0.0,
                power_db: 0.0,
            }],
            speed_kmh: 0.0,
            noise_variance,
        }
    }

    pub fn flat_rayleigh(speed_kmh: f64, noise_variance: f64) -> Self {
        Self {
            kind: ChannelKind::FlatRayleigh,
            ..Self::awgn(noise_variance)
        }
        .with_speed(speed_kmh)
    }

    pub fn pedb(speed_kmh: f64, noise_variance: f64) -> Self {
        Self {
            kind: ChannelKind::PedB,
            taps: PEDB_TAPS
                .iter()
                .map(|&(delay_ns, power_db)| Tap { delay_ns, power_db })
                .collect(),
            speed_kmh,
            noise_variance,
        }
    }

    fn with_speed(mut self, speed_kmh: f64) -> Self {
        self.speed_kmh = speed_kmh;
        self
    }

    pub fn doppler_hz(&self, cfg: &OfdmConfig) -> f64 {
        self.speed_kmh / 3.6 / SPEED_OF_LIGHT * cfg.carrier_freq
    }

    /// Taps rounded to whole samples and normalized to unit total power;
    /// taps landing on the same sample are merged.
    pub fn sampled_taps(&self, cfg: &OfdmConfig) -> Vec<(usize, f64)> {
        let mut out: Vec<(usize, f64)> = Vec::new();
        for t in &self.taps {
            let d = (t.delay_ns * 1e-9 * cfg.sample_rate).round() as usize;
            let p = 10f64.powf(t.power_db / 10.0);
            match out.iter_mut().find(|(dd, _)| *dd == d) {
                Some(slot) => slot.1 += p,
                None => out.push((d, p)),
            }
        }
        let total: f64 = out.iter().map(|t| t.1).sum();
        out.iter_mut().for_each(|t| t.1 /= total);
        out.sort_by_key(|t| t.0);
        out
    }

    pub fn max_delay_samples(&self, cfg: &OfdmConfig) -> usize {
        self.sampled_taps(cfg).last().map_or(0, |t| t.0)
    }
}

/// One Rayleigh tap as a sum of sinusoids with random arrival angles.
#[derive(Debug, Clone)]
pub struct JakesTap {
    amp: f64,
    freqs: [f64; SINUSOIDS],
    phases: [f64; SINUSOIDS],
}

impl JakesTap {
    pub fn draw<R: Rng + ?Sized>(power: f64, doppler_hz: f64, rng: &mut R) -> Self {
        let tau = std::f64::consts::TAU;
        let mut freqs = [0.0; SINUSOIDS];
        let mut phases = [0.0; SINUSOIDS];
        for m in 0..SINUSOIDS {
            freqs[m] = doppler_hz * (tau * rng.random::<f64>()).cos();
            phases[m] = tau * rng.random::<f64>();
        }
        Self {
            amp: (power / SINUSOIDS as f64).sqrt(),
            freqs,
            phases,
        }
    }

    pub fn gain(&self, t: f64) -> Complex<f64> {
        let tau = std::f64::consts::TAU;
        let sum = self
            .freqs
            .iter()
            .zip(&self.phases)
            .fold(Complex::new(0.0, 0.0), |acc, (&f, &ph)| {
                acc + Complex::from_polar(1.0, tau * f * t + ph)
            });
        sum * self.amp
    }
}

/// A drawn realization of a channel profile: a gain process per sampled tap.
#[derive(Debug, Clone)]
pub enum TapFading {
    Static(Vec<(usize, Complex<f64>)>),
    Rayleigh(Vec<(usize, JakesTap)>),
}

impl TapFading {
    pub fn draw<R: Rng + ?Sized>(prof: &ChannelProfile, cfg: &OfdmConfig, rng: &mut R) -> Self {
        match prof.kind {
            ChannelKind::Awgn => TapFading::Static(vec![(0, Complex::new(1.0, 0.0))]),
            ChannelKind::FlatRayleigh => TapFading::Rayleigh(vec![(0, JakesTap::draw(1.0, prof.doppler_hz(cfg), rng))]),
            ChannelKind::PedB => {
                let fd = prof.doppler_hz(cfg);
                TapFading::Rayleigh(
                    prof.sampled_taps(cfg)
                        .into_iter()
                        .map(|(d, p)| (d, JakesTap::draw(p, fd, rng)))
                        .collect(),
                )
            }
        }
    }

    /// Tap gains frozen at time `t` seconds.
    pub fn gains_at(&self, t: f64) -> Vec<(usize, Complex<f64>)> {
        match self {
            TapFading::Static(g) => g.clone(),
            TapFading::Rayleigh(taps) => taps.iter().map(|(d, j)| (*d, j.gain(t))).collect(),
        }
    }

    /// `H(k) = sum_l g_l exp(-j 2 pi k d_l / S)` at time `t`.
    pub fn response(&self, t: f64, k: usize, subcarriers: usize) -> Complex<f64> {
        let tau = std::f64::consts::TAU;
        self.gains_at(t).iter().fold(Complex::new(0.0, 0.0), |acc, &(d, g)| {
            let phase = -tau * ((k * d) % subcarriers) as f64 / subcarriers as f64;
            acc + g * Complex::from_polar(1.0, phase)
        })
    }
}

/// Circularly symmetric complex Gaussian with variance `var`.
pub(crate) fn cn<T: Real, R: Rng + ?Sized>(var: f64, rng: &mut R) -> Complex<T> {
    let s = (var / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex::new(T::lit(re * s), T::lit(im * s))
}

/// Passes CP-prefixed OFDM samples through a block-fading tapped delay line
/// (gains frozen per OFDM symbol), delays by `time_offset` samples, rotates
/// by `freq_offset` subcarrier spacings and adds noise.
pub fn apply_channel<T: Real>(
    signal: &[Complex<T>],
    prof: &ChannelProfile,
    cfg: &OfdmConfig,
    time_offset: usize,
    freq_offset: f64,
    seed: u64,
) -> Vec<Complex<T>> {
    let mut rng = crate::rng::stream(seed, &[0xC4A7]);
    let fading = TapFading::draw(prof, cfg, &mut rng);
    apply_fading(
        signal,
        &fading,
        prof.noise_variance,
        cfg,
        time_offset,
        freq_offset,
        &mut rng,
    )
}

pub(crate) fn apply_fading<T: Real, R: Rng + ?Sized>(
    signal: &[Complex<T>],
    fading: &TapFading,
    noise_variance: f64,
    cfg: &OfdmConfig,
    time_offset: usize,
    freq_offset: f64,
    rng: &mut R,
) -> Vec<Complex<T>> {
    let sym_len = cfg.symbol_len();
    let n_sym = signal.len().div_ceil(sym_len);
    let gains: Vec<Vec<(usize, Complex<T>)>> = (0..n_sym)
        .map(|s| {
            fading
                .gains_at(s as f64 * cfg.symbol_duration())
                .into_iter()
                .map(|(d, g)| (d + time_offset, Complex::new(T::lit(g.re), T::lit(g.im))))
                .collect()
        })
        .collect();
    let tau = std::f64::consts::TAU;
    (0..signal.len())
        .map(|t| {
            let mut y = gains[t / sym_len]
                .iter()
                .filter(|(d, _)| *d <= t)
                .fold(Complex::default(), |acc, &(d, g)| acc + g * signal[t - d]);
            if freq_offset != 0.0 {
                let ph = tau * freq_offset * t as f64 / cfg.subcarriers as f64;
                y *= Complex::new(T::lit(ph.cos()), T::lit(ph.sin()));
            }
            if noise_variance > 0.0 {
                y += cn(noise_variance, rng);
            }
            y
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phy::ofdm::{OfdmModem, ResourceGrid};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn pedb_taps_round_to_expected_samples() {
        let cfg = OfdmConfig::default();
        let taps = ChannelProfile::pedb(3.0, 0.0).sampled_taps(&cfg);
        let delays: Vec<usize> = taps.iter().map(|t| t.0).collect();
        assert_eq!(delays, vec![0, 2, 6, 9, 18, 28]);
        let total: f64 = taps.iter().map(|t| t.1).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(28 <= cfg.cp_len);
    }

    #[test]
    fn doppler_at_pedestrian_speed() {
        let fd = ChannelProfile::pedb(3.0, 0.0).doppler_hz(&OfdmConfig::default());
        assert!((fd - 5.559).abs() < 1e-3);
    }

    #[test]
    fn awgn_without_noise_is_identity() {
        let cfg = OfdmConfig::default();
        let x: Vec<Complex<f64>> = (0..cfg.symbol_len() * 2)
            .map(|i| Complex::new(i as f64, -1.0))
            .collect();
        let y = apply_channel(&x, &ChannelProfile::awgn(0.0), &cfg, 0, 0.0, 1);
        assert_eq!(x, y);
    }

    #[test]
    fn jakes_tap_has_requested_mean_power() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 20_000;
        let p: f64 = (0..n)
            .map(|_| JakesTap::draw(0.3, 5.0, &mut rng).gain(0.01).norm_sqr())
            .sum::<f64>()
            / n as f64;
        assert!((p - 0.3).abs() < 0.015, "{p}");
    }

    #[test]
    fn slow_fading_barely_moves_within_a_subframe() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cfg = OfdmConfig::default();
        let fd = ChannelProfile::pedb(3.0, 0.0).doppler_hz(&cfg);
        let tap = JakesTap::draw(1.0, fd, &mut rng);
        let d = (tap.gain(0.0) - tap.gain(1e-3)).norm();
        assert!(d < 0.1, "{d}");
    }

    /// With delays inside the cyclic prefix, block fading acts per subcarrier
    /// as `Y[k] = H(k) X[k] exp(-j 2 pi k tau / S)`.
    #[test]
    fn time_domain_chain_matches_frequency_model() {
        let cfg = OfdmConfig::default();
        let modem = OfdmModem::<f64>::new(cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let prof = ChannelProfile::pedb(3.0, 0.0);
        let fading = TapFading::draw(&prof, &cfg, &mut rng);
        let mut grid = ResourceGrid::zeros(3, cfg.subcarriers);
        for s in 0..3 {
            for k in 0..cfg.subcarriers {
                grid.set(s, k, cn(1.0, &mut rng));
            }
        }
        let x = modem.modulate(&grid);
        let offset = 5;
        let y = apply_fading(&x, &fading, 0.0, &cfg, offset, 0.0, &mut rng);
        let rx = modem.demodulate(&y, 3).unwrap();
        let tau = std::f64::consts::TAU;
        for s in 0..3 {
            let t = s as f64 * cfg.symbol_duration();
            for k in (0..cfg.subcarriers).step_by(7) {
                let h = fading.response(t, k, cfg.subcarriers)
                    * Complex::from_polar(1.0, -tau * (k * offset) as f64 / cfg.subcarriers as f64);
                let err = (rx.get(s, k) - h * grid.get(s, k)).norm();
                assert!(err < 1e-9, "symbol {s} bin {k}: {err}");
            }
        }
    }

    #[test]
    fn integer_frequency_offset_rotates_bins() {
        let cfg = OfdmConfig::default();
        let modem = OfdmModem::<f64>::new(cfg);
        let mut grid = ResourceGrid::zeros(2, cfg.subcarriers);
        grid.set(0, 40, Complex::new(3.0, 0.0));
        grid.set(1, 511, Complex::new(3.0, 0.0));
        let y = apply_channel(&modem.modulate(&grid), &ChannelProfile::awgn(0.0), &cfg, 0, 2.0, 9);
        let rx = modem.demodulate(&y, 2).unwrap();
        assert!((rx.get(0, 42).norm() - 3.0).abs() < 1e-9);
        assert!((rx.get(1, 1).norm() - 3.0).abs() < 1e-9);
    }

    #[test]
    fn noise_has_requested_variance() {
        let cfg = OfdmConfig::default();
        let x = vec![Complex::<f64>::default(); 50_000];
        let y = apply_channel(&x, &ChannelProfile::awgn(0.25), &cfg, 0, 0.0, 3);
        let v = y.iter().map(|z| z.norm_sqr()).sum::<f64>() / y.len() as f64;
        assert!((v - 0.25).abs() < 0.01, "{v}");
    }

    #[test]
    fn profile_json_roundtrip() {
        let p = ChannelProfile::pedb(3.0, 0.1);
        let s = serde_json::to_string(&p).unwrap();
        assert!(s.contains("\"pedb\""));
        assert_eq!(serde_json::from_str::<ChannelProfile>(&s).unwrap(), p);
    }
}
