use std::sync::Arc;

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{norm2, Real};
use crate::stscode::Codeword;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PhyError {
    #[error("tone index {index} outside the {subcarriers}-subcarrier grid")]
    ToneIndex { index: u64, subcarriers: usize },
    #[error("energy fraction {0} outside [0, 1]")]
    EnergyFraction(f64),
    #[error("signal has zero power")]
    ZeroSignal,
    #[error("expected {expected} samples, got {got}")]
    Length { expected: usize, got: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OfdmConfig {
    pub subcarriers: usize,
    pub cp_len: usize,
    pub symbols_per_subframe: usize,
    /// Leading control symbols that carry no STS.
    pub reserved_symbols: usize,
    pub sample_rate: f64,
    pub carrier_freq: f64,
}

impl Default for OfdmConfig {
    fn default() -> Self {
        Self {
            subcarriers: 512,
            cp_len: 36,
            symbols_per_subframe: 14,
            reserved_symbols: 3,
            sample_rate: 7.68e6,
            carrier_freq: 2.0e9,
        }
    }
}

impl OfdmConfig {
    pub fn symbol_len(&self) -> usize {
        self.subcarriers + self.cp_len
    }

    pub fn symbol_duration(&self) -> f64 {
        self.symbol_len() as f64 / self.sample_rate
    }

    pub fn sts_symbols(&self) -> usize {
        self.symbols_per_subframe - self.reserved_symbols
    }

    pub fn validate(&self) -> Result<(), PhyError> {
        if self.subcarriers < 2 {
            return Err(PhyError::Config("subcarriers must be at least 2".into()));
        }
        if self.reserved_symbols >= self.symbols_per_subframe {
            return Err(PhyError::Config("reserved_symbols must leave room for STS".into()));
        }
        if !(self.sample_rate > 0.0 && self.carrier_freq > 0.0) {
            return Err(PhyError::Config("sample_rate and carrier_freq must be positive".into()));
        }
        Ok(())
    }
}

/// Complex amplitude per (OFDM symbol, subcarrier).
#[derive(Debug, Clone, PartialEq)]
pub struct ResourceGrid<T> {
    symbols: usize,
    subcarriers: usize,
    data: Vec<Complex<T>>,
}

impl<T: Real> ResourceGrid<T> {
    pub fn zeros(symbols: usize, subcarriers: usize) -> Self {
        Self {
            symbols,
            subcarriers,
            data: vec![Complex::default(); symbols * subcarriers],
        }
    }

    pub fn symbols(&self) -> usize {
        self.symbols
    }

    pub fn subcarriers(&self) -> usize {
        self.subcarriers
    }

    pub fn get(&self, symbol: usize, k: usize) -> Complex<T> {
        self.data[symbol * self.subcarriers + k]
    }

    pub fn set(&mut self, symbol: usize, k: usize, v: Complex<T>) {
        self.data[symbol * self.subcarriers + k] = v;
    }

    pub fn add(&mut self, symbol: usize, k: usize, v: Complex<T>) {
        self.data[symbol * self.subcarriers + k] += v;
    }

    pub fn row(&self, symbol: usize) -> &[Complex<T>] {
        &self.data[symbol * self.subcarriers..(symbol + 1) * self.subcarriers]
    }

    pub fn row_mut(&mut self, symbol: usize) -> &mut [Complex<T>] {
        &mut self.data[symbol * self.subcarriers..(symbol + 1) * self.subcarriers]
    }

    pub fn symbol_energy(&self, symbol: usize) -> T {
        self.row(symbol).iter().map(|&z| norm2(z)).sum()
    }

    pub fn energy(&self) -> T {
        self.data.iter().map(|&z| norm2(z)).sum()
    }
}

/// Unitary DFT modem with cyclic prefix.
pub struct OfdmModem<T: Real> {
    cfg: OfdmConfig,
    fft: Arc<dyn Fft<T>>,
    ifft: Arc<dyn Fft<T>>,
    scale: T,
}

impl<T: Real> OfdmModem<T> {
    pub fn new(cfg: OfdmConfig) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            fft: planner.plan_fft_forward(cfg.subcarriers),
            ifft: planner.plan_fft_inverse(cfg.subcarriers),
            scale: T::one() / T::lit(cfg.subcarriers as f64).sqrt(),
            cfg,
        }
    }

    pub fn config(&self) -> &OfdmConfig {
        &self.cfg
    }

    /// Frequency grid to CP-prefixed time samples.
    pub fn modulate(&self, grid: &ResourceGrid<T>) -> Vec<Complex<T>> {
        let (s, cp) = (self.cfg.subcarriers, self.cfg.cp_len);
        assert_eq!(grid.subcarriers(), s, "grid width");
        let mut out = Vec::with_capacity(grid.symbols() * (s + cp));
        let mut buf = vec![Complex::default(); s];
        for sym in 0..grid.symbols() {
            buf.copy_from_slice(grid.row(sym));
            self.ifft.process(&mut buf);
            buf.iter_mut().for_each(|z| *z *= self.scale);
            out.extend_from_slice(&buf[s - cp..]);
            out.extend_from_slice(&buf);
        }
        out
    }

    /// Strips the CP of each symbol and returns the frequency grid.
    pub fn demodulate(&self, samples: &[Complex<T>], symbols: usize) -> Result<ResourceGrid<T>, PhyError> {
        let (s, cp) = (self.cfg.subcarriers, self.cfg.cp_len);
        let need = symbols * (s + cp);
        if samples.len() < need {
            return Err(PhyError::Length {
                expected: need,
                got: samples.len(),
            });
        }
        let mut grid = ResourceGrid::zeros(symbols, s);
        for sym in 0..symbols {
            let start = sym * (s + cp) + cp;
            let row = grid.row_mut(sym);
            row.copy_from_slice(&samples[start..start + s]);
            self.fft.process(row);
            row.iter_mut().for_each(|z| *z *= self.scale);
        }
        Ok(grid)
    }

    /// In-place forward transform of one symbol's samples.
    pub fn fft_in_place(&self, buf: &mut [Complex<T>]) {
        self.fft.process(buf);
        buf.iter_mut().for_each(|z| *z *= self.scale);
    }
}

/// One unmodulated tone per codeword symbol with energy
/// `energy_fraction * S` (the energy of a full data symbol at unit power per
/// subcarrier).
pub fn modulate_sts<T: Real>(
    c: &Codeword,
    energy_fraction: f64,
    cfg: &OfdmConfig,
) -> Result<ResourceGrid<T>, PhyError> {
    if !(0.0..=1.0).contains(&energy_fraction) {
        return Err(PhyError::EnergyFraction(energy_fraction));
    }
    let mut grid = ResourceGrid::zeros(c.len(), cfg.subcarriers);
    let amp = T::lit((energy_fraction * cfg.subcarriers as f64).sqrt());
    for (n, e) in c.as_slice().iter().enumerate() {
        let idx = e.value();
        if idx as usize >= cfg.subcarriers {
            return Err(PhyError::ToneIndex {
                index: idx,
                subcarriers: cfg.subcarriers,
            });
        }
        grid.set(n, idx as usize, Complex::new(amp, T::zero()));
    }
    Ok(grid)
}

/// Peak-to-average power of the time-domain waveform, CP excluded, in dB.
pub fn papr_db<T: Real>(grid: &ResourceGrid<T>, modem: &OfdmModem<T>) -> Result<f64, PhyError> {
    let cfg = modem.config();
    let samples = modem.modulate(grid);
    let (s, cp) = (cfg.subcarriers, cfg.cp_len);
    let mut peak = 0.0f64;
    let mut total = 0.0f64;
    let mut count = 0usize;
    for sym in 0..grid.symbols() {
        for z in &samples[sym * (s + cp) + cp..(sym + 1) * (s + cp)] {
            let p = norm2(*z).as_f64();
            peak = peak.max(p);
            total += p;
            count += 1;
        }
    }
    if total <= 0.0 {
        return Err(PhyError::ZeroSignal);
    }
    Ok(10.0 * (peak / (total / count as f64)).log10())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gf::FieldSpec;
    use crate::stscode::StsCode;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small() -> OfdmConfig {
        OfdmConfig {
            subcarriers: 64,
            cp_len: 8,
            ..OfdmConfig::default()
        }
    }

    #[test]
    fn sts_grid_has_one_tone_per_symbol() {
        let code = StsCode::with_beta(
            FieldSpec::new(17).unwrap(),
            4,
            1,
            FieldSpec::new(17).unwrap().element(4).unwrap(),
        )
        .unwrap();
        let c = code.encode(&code.symbols(&[3]).unwrap());
        let grid: ResourceGrid<f64> = modulate_sts(&c, 1.0, &small()).unwrap();
        for (n, &k) in [3usize, 12, 14, 5].iter().enumerate() {
            let nonzero: Vec<usize> = (0..64).filter(|&i| grid.get(n, i) != Complex::default()).collect();
            assert_eq!(nonzero, vec![k]);
            assert!((grid.symbol_energy(n) - 64.0).abs() < 1e-12);
        }
        let silent: ResourceGrid<f64> = modulate_sts(&c, 0.0, &small()).unwrap();
        assert_eq!(silent.energy(), 0.0);
        assert!(modulate_sts::<f64>(&c, 1.5, &small()).is_err());
    }

    #[test]
    fn out_of_grid_tone_is_rejected() {
        let f = FieldSpec::new(509).unwrap();
        let code = StsCode::new(f, 11, 1).unwrap();
        let c = code.encode(&code.symbols(&[100]).unwrap());
        assert!(matches!(
            modulate_sts::<f64>(&c, 1.0, &small()),
            Err(PhyError::ToneIndex { .. })
        ));
    }

    #[test]
    fn parseval_and_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = OfdmConfig::default();
        let modem = OfdmModem::<f64>::new(cfg);
        let mut grid = ResourceGrid::zeros(3, cfg.subcarriers);
        for sym in 0..3 {
            for k in 0..cfg.subcarriers {
                grid.set(
                    sym,
                    k,
                    Complex::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5),
                );
            }
        }
        let x = modem.modulate(&grid);
        let body: f64 = (0..3)
            .flat_map(|s| x[s * cfg.symbol_len() + cfg.cp_len..(s + 1) * cfg.symbol_len()].iter())
            .map(|z| z.norm_sqr())
            .sum();
        assert!((body / grid.energy() - 1.0).abs() < 1e-9);
        let back = modem.demodulate(&x, 3).unwrap();
        for (a, b) in back.data.iter().zip(&grid.data) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn papr_examples() {
        let cfg = small();
        let modem = OfdmModem::<f64>::new(cfg);
        let mut one = ResourceGrid::zeros(1, 64);
        one.set(0, 5, Complex::new(1.0, 0.0));
        assert!(papr_db(&one, &modem).unwrap().abs() < 1e-9);
        let mut two = ResourceGrid::zeros(1, 64);
        two.set(0, 5, Complex::new(1.0, 0.0));
        two.set(0, 9, Complex::new(1.0, 0.0));
        assert!((papr_db(&two, &modem).unwrap() - 10.0 * 2f64.log10()).abs() < 1e-9);
        assert_eq!(
            papr_db(&ResourceGrid::<f64>::zeros(1, 64), &modem),
            Err(PhyError::ZeroSignal)
        );
    }

    #[test]
    fn random_qpsk_symbols_have_high_papr() {
        let cfg = OfdmConfig::default();
        let modem = OfdmModem::<f64>::new(cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let trials = 10_000;
        let mut above = 0;
        let mut grid = ResourceGrid::zeros(1, cfg.subcarriers);
        for _ in 0..trials {
            for k in 0..cfg.subcarriers {
                let re = if rng.random() { 1.0 } else { -1.0 };
                let im = if rng.random() { 1.0 } else { -1.0 };
                grid.set(0, k, Complex::new(re, im));
            }
            if papr_db(&grid, &modem).unwrap() > 5.0 {
                above += 1;
            }
        }
        assert!(above as f64 / trials as f64 >= 0.99, "{above}");
    }

    #[test]
    fn single_precision_modem() {
        let modem = OfdmModem::<f32>::new(small());
        let mut g = ResourceGrid::<f32>::zeros(1, 64);
        g.set(0, 7, Complex::new(1.0, 0.0));
        assert!(papr_db(&g, &modem).unwrap().abs() < 1e-4);
    }
}
