use num_complex::Complex;
use serde::{Deserialize, Serialize};

use super::ofdm::ResourceGrid;
use crate::scalar::{norm2, Real};
use crate::stscode::ObservedTones;

/// Bins below this fraction of the strongest bin are never reported; it only
/// matters for noise-free grids where the median is FFT round-off.
const RELATIVE_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct DetectedTone<T> {
    pub index: usize,
    /// Power summed over receive antennas.
    pub power: T,
    pub amplitudes: Vec<Complex<T>>,
}

/// Detected tones of each OFDM symbol, sorted by subcarrier index.
#[derive(Debug, Clone, PartialEq)]
pub struct ToneDetection<T> {
    pub symbols: Vec<Vec<DetectedTone<T>>>,
}

impl<T: Real> ToneDetection<T> {
    pub fn indices(&self) -> Vec<Vec<u64>> {
        self.symbols
            .iter()
            .map(|s| s.iter().map(|t| t.index as u64).collect())
            .collect()
    }

    pub fn observed(&self) -> ObservedTones {
        ObservedTones::Sets(self.indices())
    }

    pub fn total(&self) -> usize {
        self.symbols.iter().map(Vec::len).sum()
    }

    pub fn find(&self, symbol: usize, index: usize) -> Option<&DetectedTone<T>> {
        let s = &self.symbols[symbol];
        s.binary_search_by_key(&index, |t| t.index).ok().map(|i| &s[i])
    }
}

/// How receive antennas are combined before thresholding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Combining {
    /// Threshold each antenna against its own median and keep the union.
    #[default]
    Union,
    /// Threshold the antenna-summed power against its median.
    PowerSum,
}

/// Energy detector with per-antenna union combining; see [`detect_tones_with`].
pub fn detect_tones<T: Real>(grids: &[ResourceGrid<T>], tau: f64, max_tones: usize) -> ToneDetection<T> {
    detect_tones_with(grids, tau, max_tones, Combining::Union)
}

/// Energy detector on per-antenna received grids.
///
/// A bin is a tone when its power exceeds `tau` times the median power of
/// its symbol, judged per antenna (union) or on the antenna sum. When more
/// than `max_tones` bins qualify, the strongest by summed power are kept.
pub fn detect_tones_with<T: Real>(
    grids: &[ResourceGrid<T>],
    tau: f64,
    max_tones: usize,
    combining: Combining,
) -> ToneDetection<T> {
    assert!(!grids.is_empty(), "at least one antenna");
    assert!(tau > 1.0, "threshold factor must exceed 1");
    let (n_sym, s) = (grids[0].symbols(), grids[0].subcarriers());
    assert!(grids.iter().all(|g| g.symbols() == n_sym && g.subcarriers() == s));
    let tau = T::lit(tau);
    let mut total = vec![T::zero(); s];
    let mut single = vec![T::zero(); s];
    let mut scratch = vec![T::zero(); s];
    let mut hit = vec![false; s];
    let symbols = (0..n_sym)
        .map(|sym| {
            total.iter_mut().for_each(|p| *p = T::zero());
            hit.iter_mut().for_each(|h| *h = false);
            for g in grids {
                for ((p, q), &z) in total.iter_mut().zip(single.iter_mut()).zip(g.row(sym)) {
                    *q = norm2(z);
                    *p += *q;
                }
                if combining == Combining::Union {
                    mark(&single, tau, &mut scratch, &mut hit);
                }
            }
            if combining == Combining::PowerSum {
                mark(&total, tau, &mut scratch, &mut hit);
            }
            let mut hits: Vec<usize> = (0..s).filter(|&k| hit[k]).collect();
            if hits.len() > max_tones {
                hits.sort_by(|&a, &b| total[b].partial_cmp(&total[a]).expect("finite").then(a.cmp(&b)));
                hits.truncate(max_tones);
                hits.sort_unstable();
            }
            hits.into_iter()
                .map(|k| DetectedTone {
                    index: k,
                    power: total[k],
                    amplitudes: grids.iter().map(|g| g.get(sym, k)).collect(),
                })
                .collect()
        })
        .collect();
    ToneDetection { symbols }
}

fn mark<T: Real>(power: &[T], tau: T, scratch: &mut [T], hit: &mut [bool]) {
    scratch.copy_from_slice(power);
    let mid = power.len() / 2;
    let (_, median, _) = scratch.select_nth_unstable_by(mid, |a, b| a.partial_cmp(b).expect("finite power"));
    let peak = power.iter().copied().fold(T::zero(), T::max);
    let threshold = (tau * *median).max(T::lit(RELATIVE_FLOOR) * peak);
    for (h, &p) in hit.iter_mut().zip(power) {
        *h |= p > threshold;
    }
}

/// Zeroes every detected bin.
pub fn excise_tones<T: Real>(grid: &ResourceGrid<T>, det: &ToneDetection<T>) -> ResourceGrid<T> {
    let mut out = grid.clone();
    for (sym, tones) in det.symbols.iter().enumerate() {
        for t in tones {
            out.set(sym, t.index, Complex::default());
        }
    }
    out
}
