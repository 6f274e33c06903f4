//! Interference-management decisions: ON/OFF power control, SLNR transmit
//! beams, and channel estimates taken from received STS tones.

use num_complex::Complex;
use rand::Rng;
use serde::ser::SerializeSeq;
use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::phy::ToneDetection;
use crate::scalar::{norm2, vec_norm2, Real};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CoordError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("priority level {0} outside 0..=7")]
    Priority(u8),
    #[error("leakage covariance is singular")]
    Singular,
    #[error("beamformer does not have unit norm")]
    NotUnitNorm,
    #[error("hold period must be at least one subframe")]
    Hold,
}

pub const MAX_PRIORITY: u8 = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OnOffDecision {
    pub action: Action,
    pub hold_subframes: u32,
}

/// Yield the resource to any higher-priority requester, keep it against
/// lower ones, and toss a fair coin on a tie.
pub fn onoff_decide<R: Rng + ?Sized>(
    own_priority: u8,
    competitors: &[u8],
    hold_subframes: u32,
    rng: &mut R,
) -> Result<OnOffDecision, CoordError> {
    if hold_subframes == 0 {
        return Err(CoordError::Hold);
    }
    if let Some(&bad) = std::iter::once(&own_priority)
        .chain(competitors)
        .find(|&&p| p > MAX_PRIORITY)
    {
        return Err(CoordError::Priority(bad));
    }
    let action = match competitors.iter().max() {
        None => Action::On,
        Some(&top) if own_priority > top => Action::On,
        Some(&top) if own_priority < top => Action::Off,
        Some(_) => {
            if rng.random_bool(0.5) {
                Action::On
            } else {
                Action::Off
            }
        }
    };
    Ok(OnOffDecision { action, hold_subframes })
}

/// Leakage weight for a 3-bit priority level: `(level + 1) / 8`.
pub fn priority_weight<T: Real>(level: u8) -> Result<T, CoordError> {
    if level > MAX_PRIORITY {
        return Err(CoordError::Priority(level));
    }
    Ok(T::lit((level as f64 + 1.0) / 8.0))
}

/// Stacked victim rows `h_ik` (received signal at victim `i` is `h_ik v`).
#[derive(Debug, Clone, PartialEq)]
pub struct LeakageChannel<T> {
    antennas: usize,
    rows: Vec<Vec<Complex<T>>>,
}

impl<T: Real> LeakageChannel<T> {
    pub fn new(antennas: usize, rows: Vec<Vec<Complex<T>>>) -> Result<Self, CoordError> {
        if let Some(r) = rows.iter().find(|r| r.len() != antennas) {
            return Err(CoordError::Dimension {
                expected: antennas,
                got: r.len(),
            });
        }
        Ok(Self { antennas, rows })
    }

    pub fn empty(antennas: usize) -> Self {
        Self {
            antennas,
            rows: Vec::new(),
        }
    }

    pub fn antennas(&self) -> usize {
        self.antennas
    }

    pub fn victims(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[Vec<Complex<T>>] {
        &self.rows
    }
}

/// Unit-norm transmit beam.
#[derive(Debug, Clone, PartialEq)]
pub struct Beamformer<T> {
    v: Vec<Complex<T>>,
}

impl<T: Real> Beamformer<T> {
    /// Normalizes `v`; `None` for the zero vector.
    pub fn from_vec(v: Vec<Complex<T>>) -> Option<Self> {
        let n = vec_norm2(&v).sqrt();
        if !(n > T::zero()) || !n.is_finite() {
            return None;
        }
        Some(Self {
            v: v.into_iter().map(|z| z / n).collect(),
        })
    }

    /// Equal-power beam `1/sqrt(Nt)` on every antenna.
    pub fn uniform(antennas: usize) -> Self {
        let a = T::one() / T::lit(antennas as f64).sqrt();
        Self {
            v: vec![Complex::new(a, T::zero()); antennas],
        }
    }

    /// `h^H / |h|`.
    pub fn matched_filter(h: &[Complex<T>]) -> Option<Self> {
        Self::from_vec(h.iter().map(|z| z.conj()).collect()).map(Self::canonical)
    }

    pub fn as_slice(&self) -> &[Complex<T>] {
        &self.v
    }

    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }

    /// Rotates so the first non-negligible entry is real and positive.
    fn canonical(mut self) -> Self {
        let tol = T::lit(1e-12);
        if let Some(first) = self.v.iter().find(|z| z.norm() > tol) {
            let rot = first.conj() / first.norm();
            self.v.iter_mut().for_each(|z| *z *= rot);
        }
        self
    }

    /// Angle between the beams' lines, `acos |<a, b>|`.
    pub fn angle_to(&self, other: &Self) -> T {
        let ip = self
            .v
            .iter()
            .zip(&other.v)
            .fold(Complex::new(T::zero(), T::zero()), |acc, (a, b)| acc + a.conj() * b);
        ip.norm().min(T::one()).acos()
    }
}

/// JSON form: interleaved `[re0, im0, re1, im1, ...]`.
impl<T: Real + Serialize> Serialize for Beamformer<T> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(2 * self.v.len()))?;
        for z in &self.v {
            seq.serialize_element(&z.re)?;
            seq.serialize_element(&z.im)?;
        }
        seq.end()
    }
}

#[inline]
fn apply<T: Real>(h: &[Complex<T>], v: &[Complex<T>]) -> Complex<T> {
    h.iter()
        .zip(v)
        .fold(Complex::new(T::zero(), T::zero()), |acc, (&a, &b)| acc + a * b)
}

/// Signal-to-leakage-plus-noise ratio `|h v|^2 / (s2 + sum |p_i h_i v|^2)`.
pub fn slnr<T: Real>(
    v: &Beamformer<T>,
    h_kk: &[Complex<T>],
    leak: &LeakageChannel<T>,
    weights: &[T],
    sigma2: T,
) -> Result<T, CoordError> {
    check_dims(h_kk, leak, weights)?;
    if v.len() != h_kk.len() {
        return Err(CoordError::Dimension {
            expected: h_kk.len(),
            got: v.len(),
        });
    }
    Ok(slnr_unchecked(v.as_slice(), h_kk, leak, weights, sigma2))
}

pub(crate) fn slnr_unchecked<T: Real>(
    v: &[Complex<T>],
    h_kk: &[Complex<T>],
    leak: &LeakageChannel<T>,
    weights: &[T],
    sigma2: T,
) -> T {
    let leakage: T = leak
        .rows
        .iter()
        .zip(weights)
        .map(|(h, &p)| p * p * norm2(apply(h, v)))
        .sum();
    norm2(apply(h_kk, v)) / (sigma2 + leakage)
}

fn check_dims<T: Real>(h_kk: &[Complex<T>], leak: &LeakageChannel<T>, weights: &[T]) -> Result<(), CoordError> {
    if h_kk.len() != leak.antennas {
        return Err(CoordError::Dimension {
            expected: leak.antennas,
            got: h_kk.len(),
        });
    }
    if weights.len() != leak.victims() {
        return Err(CoordError::Dimension {
            expected: leak.victims(),
            got: weights.len(),
        });
    }
    Ok(())
}

/// SLNR-maximizing beam `v ∝ (s2 I + (PH)^H PH)^-1 h_kk^H`.
///
/// The numerator of the Rayleigh quotient has rank one, so its dominant
/// generalized eigenvector is this closed form. The phase is canonicalized
/// (first nonzero entry real positive).
pub fn slnr_beamformer<T: Real>(
    h_kk: &[Complex<T>],
    leak: &LeakageChannel<T>,
    weights: &[T],
    sigma2: T,
) -> Result<Beamformer<T>, CoordError> {
    check_dims(h_kk, leak, weights)?;
    let n = h_kk.len();
    let mut a = vec![vec![Complex::new(T::zero(), T::zero()); n]; n];
    for (r, row) in a.iter_mut().enumerate() {
        row[r] = Complex::new(sigma2, T::zero());
    }
    for (h, &p) in leak.rows.iter().zip(weights) {
        let p2 = p * p;
        for r in 0..n {
            for c in 0..n {
                a[r][c] += h[r].conj() * h[c] * p2;
            }
        }
    }
    let rhs: Vec<Complex<T>> = h_kk.iter().map(|z| z.conj()).collect();
    let x = solve_complex(a, rhs)?;
    Beamformer::from_vec(x)
        .map(Beamformer::canonical)
        .ok_or(CoordError::Singular)
}

/// Gaussian elimination with partial pivoting.
pub fn solve_complex<T: Real>(
    mut a: Vec<Vec<Complex<T>>>,
    mut b: Vec<Complex<T>>,
) -> Result<Vec<Complex<T>>, CoordError> {
    let n = b.len();
    let scale = a
        .iter()
        .flat_map(|r| r.iter())
        .map(|z| z.norm())
        .fold(T::zero(), T::max);
    let tol = T::epsilon() * T::lit(64.0 * n as f64) * scale;
    if !(scale > T::zero()) {
        return Err(CoordError::Singular);
    }
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].norm().partial_cmp(&a[j][col].norm()).expect("finite"))
            .expect("non-empty range");
        if !(a[piv][col].norm() > tol) {
            return Err(CoordError::Singular);
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            if f == Complex::new(T::zero(), T::zero()) {
                continue;
            }
            for c in col..n {
                let t = a[col][c];
                a[r][c] -= f * t;
            }
            let t = b[col];
            b[r] -= f * t;
        }
    }
    let mut x = vec![Complex::new(T::zero(), T::zero()); n];
    for r in (0..n).rev() {
        let s = (r + 1..n).fold(b[r], |acc, c| acc - a[r][c] * x[c]);
        x[r] = s / a[r][r];
    }
    Ok(x)
}

/// Per-antenna gain seen at one received STS tone.
#[derive(Debug, Clone, PartialEq)]
pub struct ToneGain<T> {
    pub symbol: usize,
    pub subcarrier: usize,
    pub gains: Vec<Complex<T>>,
}

/// Gains at the decoded codeword's tone positions: received amplitude over
/// the known transmit amplitude. Symbols where the tone was not detected are
/// skipped.
pub fn tone_gains<T: Real>(det: &ToneDetection<T>, tones: &[usize], tx_amplitude: T) -> Vec<ToneGain<T>> {
    tones
        .iter()
        .enumerate()
        .filter(|&(sym, _)| sym < det.symbols.len())
        .filter_map(|(sym, &k)| {
            det.find(sym, k).map(|t| ToneGain {
                symbol: sym,
                subcarrier: k,
                gains: t.amplitudes.iter().map(|&a| a / tx_amplitude).collect(),
            })
        })
        .collect()
}

/// Uplink channel per resource sub-band, estimated from one user's STS tones.
///
/// The `subcarriers` are split into `resources` equal contiguous bands; each
/// band's estimate averages the tone gains that fall inside it, `None` when
/// no tone landed there. By reciprocity the uplink vector `g_ki` is also the
/// downlink leakage row `h_ik`.
pub fn estimate_channel_from_sts<T: Real>(
    det: &ToneDetection<T>,
    tones: &[usize],
    tx_amplitude: T,
    subcarriers: usize,
    resources: usize,
) -> Vec<Option<Vec<Complex<T>>>> {
    let band = subcarriers.div_ceil(resources);
    let mut sums: Vec<Option<(Vec<Complex<T>>, usize)>> = vec![None; resources];
    for tg in tone_gains(det, tones, tx_amplitude) {
        let r = (tg.subcarrier / band).min(resources - 1);
        match &mut sums[r] {
            Some((acc, count)) => {
                acc.iter_mut().zip(&tg.gains).for_each(|(a, g)| *a += g);
                *count += 1;
            }
            slot @ None => *slot = Some((tg.gains, 1)),
        }
    }
    sums.into_iter()
        .map(|s| s.map(|(acc, count)| acc.into_iter().map(|z| z / T::lit(count as f64)).collect()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phy::{detect_tones, modulate_sts, OfdmConfig, OfdmModem};
    use crate::{FieldSpec, StsCode};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    type C = Complex<f64>;

    fn c(re: f64, im: f64) -> C {
        Complex::new(re, im)
    }

    fn randn_vec(n: usize, rng: &mut ChaCha8Rng) -> Vec<C> {
        (0..n)
            .map(|_| {
                let re: f64 = StandardNormal.sample(rng);
                let im: f64 = StandardNormal.sample(rng);
                c(re, im) * std::f64::consts::FRAC_1_SQRT_2
            })
            .collect()
    }

    fn random_unit(n: usize, rng: &mut ChaCha8Rng) -> Beamformer<f64> {
        Beamformer::from_vec(randn_vec(n, rng)).unwrap()
    }

    #[test]
    fn onoff_rule_table() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = |own, comp: &[u8], rng: &mut ChaCha8Rng| onoff_decide(own, comp, 1, rng).unwrap().action;
        assert_eq!(d(3, &[5, 2], &mut rng), Action::Off);
        assert_eq!(d(7, &[], &mut rng), Action::On);
        assert_eq!(d(6, &[5, 2], &mut rng), Action::On);
        assert_eq!(d(0, &[0, 1], &mut rng), Action::Off);
        assert!(onoff_decide(8, &[], 1, &mut rng).is_err());
        assert!(onoff_decide(1, &[9], 1, &mut rng).is_err());
        assert!(onoff_decide(1, &[], 0, &mut rng).is_err());
        assert_eq!(onoff_decide(1, &[], 3, &mut rng).unwrap().hold_subframes, 3);
    }

    #[test]
    fn onoff_tie_is_a_fair_coin() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let on = (0..10_000)
            .filter(|_| onoff_decide(4, &[4], 1, &mut rng).unwrap().action == Action::On)
            .count();
        assert!((on as f64 / 1e4 - 0.5).abs() <= 0.02, "{on}");
    }

    #[test]
    fn weights() {
        assert_eq!(priority_weight::<f64>(0).unwrap(), 0.125);
        assert_eq!(priority_weight::<f64>(7).unwrap(), 1.0);
        assert!(priority_weight::<f64>(8).is_err());
    }

    #[test]
    fn slnr_examples() {
        let v = Beamformer::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0)]).unwrap();
        let s = slnr(&v, &[c(1.0, 0.0), c(0.0, 0.0)], &LeakageChannel::empty(2), &[], 1.0).unwrap();
        assert_eq!(s, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let h = randn_vec(3, &mut rng);
            let rows: Vec<Vec<C>> = (0..2).map(|_| randn_vec(3, &mut rng)).collect();
            let leak = LeakageChannel::new(3, rows.clone()).unwrap();
            let v = random_unit(3, &mut rng);
            let direct = {
                let num: f64 = h.iter().zip(v.as_slice()).map(|(a, b)| a * b).sum::<C>().norm_sqr();
                let den: f64 = 0.5
                    + rows
                        .iter()
                        .map(|r| r.iter().zip(v.as_slice()).map(|(a, b)| a * b).sum::<C>().norm_sqr())
                        .sum::<f64>();
                num / den
            };
            let got = slnr(&v, &h, &leak, &[1.0, 1.0], 0.5).unwrap();
            assert!((got - direct).abs() < 1e-12 * direct.max(1.0));
            let t = 2.5;
            let scaled = slnr(&v, &h, &leak, &[t, t], 0.0).unwrap();
            let base = slnr(&v, &h, &leak, &[1.0, 1.0], 0.0).unwrap();
            assert!((scaled * t * t / base - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn dimension_errors() {
        let leak = LeakageChannel::<f64>::empty(2);
        assert!(slnr_beamformer(&[c(1.0, 0.0)], &leak, &[], 1.0).is_err());
        let leak = LeakageChannel::new(2, vec![vec![c(1.0, 0.0), c(0.0, 0.0)]]).unwrap();
        assert!(slnr_beamformer(&[c(1.0, 0.0), c(0.0, 1.0)], &leak, &[], 1.0).is_err());
        assert!(LeakageChannel::new(2, vec![vec![c(1.0, 0.0)]]).is_err());
    }

    #[test]
    fn no_victims_gives_matched_filter() {
        let h = vec![c(0.3, -1.0), c(2.0, 0.5)];
        let v = slnr_beamformer(&h, &LeakageChannel::empty(2), &[], 1.0).unwrap();
        let mf = Beamformer::matched_filter(&h).unwrap();
        for (a, b) in v.as_slice().iter().zip(mf.as_slice()) {
            assert!((a - b).norm() < 1e-12);
        }
        assert!(v.as_slice()[0].im.abs() < 1e-15 && v.as_slice()[0].re > 0.0);
    }

    #[test]
    fn nulls_a_single_victim() {
        let h = [c(1.0, 0.0), c(1.0, 0.0)];
        let leak = LeakageChannel::new(2, vec![vec![c(1.0, 0.0), c(-1.0, 0.0)]]).unwrap();
        let v = slnr_beamformer(&h, &leak, &[1.0], 1e-9).unwrap();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert!((v.as_slice()[0] - c(r, 0.0)).norm() < 1e-8);
        assert!((v.as_slice()[1] - c(r, 0.0)).norm() < 1e-8);
        assert!(slnr_beamformer(&h, &leak, &[1.0], 0.0).is_err());
    }

    #[test]
    fn beam_beats_random_directions() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for &nt in &[2usize, 4] {
            for _ in 0..20 {
                let h = randn_vec(nt, &mut rng);
                let rows = (0..2).map(|_| randn_vec(nt, &mut rng)).collect();
                let leak = LeakageChannel::new(nt, rows).unwrap();
                let w = [0.5, 1.0];
                let best = slnr_beamformer(&h, &leak, &w, 0.1).unwrap();
                assert!((vec_norm2(best.as_slice()) - 1.0).abs() < 1e-12);
                let s_best = slnr(&best, &h, &leak, &w, 0.1).unwrap();
                for _ in 0..10_000 {
                    let v = random_unit(nt, &mut rng);
                    assert!(slnr(&v, &h, &leak, &w, 0.1).unwrap() <= s_best + 1e-9);
                }
            }
        }
    }

    #[test]
    fn large_noise_tends_to_matched_filter() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let h = randn_vec(4, &mut rng);
            let rows: Vec<Vec<C>> = (0..3).map(|_| randn_vec(4, &mut rng)).collect();
            let hnorm: f64 = rows.iter().map(|r| vec_norm2(r)).sum();
            let leak = LeakageChannel::new(4, rows).unwrap();
            let v = slnr_beamformer(&h, &leak, &[1.0, 1.0, 1.0], 1e6 * hnorm).unwrap();
            let mf = Beamformer::matched_filter(&h).unwrap();
            assert!(v.angle_to(&mf) < 1e-3);
        }
    }

    /// Raising one victim's weight never raises its leakage relative to the
    /// desired signal. (Absolute leakage can rise when the beam also turns
    /// toward a stronger own-signal direction.)
    #[test]
    fn priority_protects_the_victim() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..2000 {
            let nt = if rng.random_bool(0.5) { 2 } else { 4 };
            let h = randn_vec(nt, &mut rng);
            let nv = rng.random_range(1..=3);
            let rows: Vec<Vec<C>> = (0..nv).map(|_| randn_vec(nt, &mut rng)).collect();
            let leak = LeakageChannel::new(nt, rows.clone()).unwrap();
            let mut w: Vec<f64> = (0..nv)
                .map(|_| priority_weight(rng.random_range(0..=6)).unwrap())
                .collect();
            let i = rng.random_range(0..nv);
            let ratio = |v: &Beamformer<f64>| norm2(apply(&rows[i], v.as_slice())) / norm2(apply(&h, v.as_slice()));
            let before = ratio(&slnr_beamformer(&h, &leak, &w, 0.3).unwrap());
            w[i] += 0.125;
            let after = ratio(&slnr_beamformer(&h, &leak, &w, 0.3).unwrap());
            assert!(after <= before * (1.0 + 1e-9), "{before} -> {after}");
        }
    }

    #[test]
    fn beamformer_json_is_interleaved() {
        let v = Beamformer::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0)]).unwrap();
        assert_eq!(serde_json::to_string(&v).unwrap(), "[1.0,0.0,0.0,0.0]");
    }

    #[test]
    fn single_precision_beam() {
        let h = [Complex::new(1.0f32, 0.0), Complex::new(1.0, 0.0)];
        let leak = LeakageChannel::new(2, vec![vec![Complex::new(1.0f32, 0.0), Complex::new(-1.0, 0.0)]]).unwrap();
        let v = slnr_beamformer(&h, &leak, &[1.0f32], 1e-3).unwrap();
        assert!((v.as_slice()[0].re - v.as_slice()[1].re).abs() < 1e-4);
    }

    fn static_taps(x: &[C], taps: &[(usize, C)]) -> Vec<C> {
        (0..x.len())
            .map(|t| taps.iter().filter(|(d, _)| *d <= t).map(|&(d, g)| g * x[t - d]).sum())
            .collect()
    }

    fn sts_setup() -> (OfdmConfig, StsCode, Vec<usize>, f64) {
        let cfg = OfdmConfig::default();
        let code = StsCode::new(FieldSpec::new(509).unwrap(), 11, 1).unwrap();
        let tones: Vec<usize> = code
            .encode(&code.symbols(&[123]).unwrap())
            .values()
            .into_iter()
            .map(|v| v as usize)
            .collect();
        let amp = (cfg.subcarriers as f64).sqrt();
        (cfg, code, tones, amp)
    }

    #[test]
    fn flat_channel_estimates_are_exact() {
        let (cfg, code, tones, amp) = sts_setup();
        let g = c(0.6, -0.8);
        let cw = code.encode(&code.symbols(&[123]).unwrap());
        let mut grid = modulate_sts::<f64>(&cw, 1.0, &cfg).unwrap();
        for sym in 0..11 {
            grid.row_mut(sym).iter_mut().for_each(|z| *z *= g);
        }
        let det = detect_tones(&[grid], 8.0, 4);
        for tg in tone_gains(&det, &tones, amp) {
            assert!((tg.gains[0] - g).norm() < 1e-12);
        }
        let est = estimate_channel_from_sts(&det, &tones, amp, cfg.subcarriers, 4);
        for e in est.iter().flatten() {
            assert!((e[0] - g).norm() < 1e-12);
        }
    }

    #[test]
    fn two_tap_channel_matches_its_frequency_response() {
        let (cfg, code, tones, amp) = sts_setup();
        let modem = OfdmModem::<f64>::new(cfg);
        let taps = [(0usize, c(0.8, 0.1)), (5usize, c(-0.3, 0.4))];
        let cw = code.encode(&code.symbols(&[123]).unwrap());
        let tx = modem.modulate(&modulate_sts::<f64>(&cw, 1.0, &cfg).unwrap());
        let rx = static_taps(&tx, &taps);
        let det = detect_tones(&[modem.demodulate(&rx, 11).unwrap()], 8.0, 4);
        let gains = tone_gains(&det, &tones, amp);
        assert_eq!(gains.len(), 11);
        for tg in gains {
            let k = tg.subcarrier as f64;
            let h: C = taps
                .iter()
                .map(|&(d, g)| g * Complex::from_polar(1.0, -std::f64::consts::TAU * k * d as f64 / 512.0))
                .sum();
            assert!((tg.gains[0] - h).norm() < 1e-6);
        }
    }

    #[test]
    fn estimation_error_falls_with_snr() {
        let (cfg, code, tones, amp) = sts_setup();
        let cw = code.encode(&code.symbols(&[123]).unwrap());
        let clean = modulate_sts::<f64>(&cw, 1.0, &cfg).unwrap();
        let g = c(0.5, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut mses = Vec::new();
        for noise in [10.0f64, 1.0, 0.1] {
            let mut err = 0.0;
            let mut n = 0;
            for _ in 0..200 {
                let mut grid = clean.clone();
                for sym in 0..11 {
                    for z in grid.row_mut(sym).iter_mut() {
                        *z = *z * g + randn_vec(1, &mut rng)[0] * noise.sqrt();
                    }
                }
                let det = detect_tones(&[grid], 8.0, 4);
                for e in estimate_channel_from_sts(&det, &tones, amp, cfg.subcarriers, 4)
                    .iter()
                    .flatten()
                {
                    err += (e[0] - g).norm_sqr();
                    n += 1;
                }
            }
            mses.push(err / n as f64);
        }
        assert!(mses[0] > mses[1] && mses[1] > mses[2], "{mses:?}");
    }

    #[test]
    fn empty_band_is_unavailable() {
        let det = ToneDetection::<f64> { symbols: vec![vec![]] };
        let est = estimate_channel_from_sts(&det, &[5], 1.0, 512, 4);
        assert!(est.iter().all(Option::is_none));
    }
}
