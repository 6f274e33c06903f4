//! Data-link coding for the uplink experiment: rate-1/2 K=7 convolutional
//! code (133/171 octal), hard-decision Viterbi with erasures, a
//! multiplicative bit interleaver and Gray-mapped 16QAM.

use num_complex::Complex;

use crate::scalar::Real;

pub const CONSTRAINT: usize = 7;
pub const TAIL: usize = CONSTRAINT - 1;
const STATES: usize = 1 << TAIL;
const G0: u32 = 0o133;
const G1: u32 = 0o171;

/// Received hard bit; `None` marks an erasure.
pub type SoftBit = Option<bool>;

fn outputs(state: usize, bit: usize) -> (bool, bool) {
    let reg = ((bit << TAIL) | state) as u32;
    ((reg & G0).count_ones() & 1 == 1, (reg & G1).count_ones() & 1 == 1)
}

/// Encodes `info` followed by a zero tail; output length `2 (len + 6)`.
pub fn conv_encode(info: &[bool]) -> Vec<bool> {
    let mut state = 0usize;
    let mut out = Vec::with_capacity(2 * (info.len() + TAIL));
    for &b in info.iter().chain(std::iter::repeat_n(&false, TAIL)) {
        let (a, c) = outputs(state, b as usize);
        out.push(a);
        out.push(c);
        state = ((b as usize) << (TAIL - 1)) | (state >> 1);
    }
    out
}

/// Maximum-likelihood hard-decision decoding of a zero-terminated stream.
/// Erased bits contribute nothing to any branch metric.
pub fn viterbi_decode(rx: &[SoftBit]) -> Vec<bool> {
    assert!(rx.len().is_multiple_of(2), "rate-1/2 stream");
    let steps = rx.len() / 2;
    let table: Vec<[(bool, bool); 2]> = (0..STATES).map(|s| [outputs(s, 0), outputs(s, 1)]).collect();
    let mut metric = vec![u32::MAX / 2; STATES];
    metric[0] = 0;
    let mut next = vec![0u32; STATES];
    let mut survivors: Vec<u64> = Vec::with_capacity(steps);
    let cost = |want: bool, got: SoftBit| -> u32 { got.map_or(0, |g| (g != want) as u32) };
    for step in 0..steps {
        let (r0, r1) = (rx[2 * step], rx[2 * step + 1]);
        let mut choice = 0u64;
        for ns in 0..STATES {
            let bit = ns >> (TAIL - 1);
            let base = (ns << 1) & (STATES - 1);
            let mut best = u32::MAX;
            let mut pick = 0;
            for x in 0..2 {
                let s = base | x;
                let (a, c) = table[s][bit];
                let m = metric[s] + cost(a, r0) + cost(c, r1);
                if m < best {
                    best = m;
                    pick = x;
                }
            }
            next[ns] = best;
            choice |= (pick as u64) << ns;
        }
        std::mem::swap(&mut metric, &mut next);
        survivors.push(choice);
    }
    let mut state = 0usize;
    let mut bits = vec![false; steps];
    for step in (0..steps).rev() {
        bits[step] = state >> (TAIL - 1) == 1;
        let x = (survivors[step] >> state & 1) as usize;
        state = ((state << 1) & (STATES - 1)) | x;
    }
    bits.truncate(steps.saturating_sub(TAIL));
    bits
}

/// Bit permutation `i -> (i * mult) mod len`.
#[derive(Debug, Clone)]
pub struct Interleaver {
    perm: Vec<usize>,
}

impl Interleaver {
    pub fn new(len: usize, mult: usize) -> Self {
        assert!(gcd(len, mult) == 1, "multiplier must be coprime with the length");
        Self {
            perm: (0..len).map(|i| i * mult % len).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    pub fn interleave<B: Copy + Default>(&self, x: &[B]) -> Vec<B> {
        let mut out = vec![B::default(); x.len()];
        for (i, &p) in self.perm.iter().enumerate() {
            out[p] = x[i];
        }
        out
    }

    pub fn deinterleave<B: Copy + Default>(&self, y: &[B]) -> Vec<B> {
        self.perm.iter().map(|&p| y[p]).collect()
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Gray mapping per axis: 00 -> -3, 01 -> -1, 11 -> +1, 10 -> +3, scaled to
/// unit average symbol power.
pub fn qam16_map<T: Real>(bits: &[bool]) -> Vec<Complex<T>> {
    assert!(bits.len().is_multiple_of(4), "16QAM takes 4 bits per symbol");
    let level = |hi: bool, lo: bool| -> f64 {
        match (hi, lo) {
            (false, false) => -3.0,
            (false, true) => -1.0,
            (true, true) => 1.0,
            (true, false) => 3.0,
        }
    };
    let scale = 1.0 / 10f64.sqrt();
    bits.chunks_exact(4)
        .map(|b| Complex::new(T::lit(level(b[0], b[1]) * scale), T::lit(level(b[2], b[3]) * scale)))
        .collect()
}

pub fn qam16_demap<T: Real>(z: Complex<T>) -> [bool; 4] {
    let edge = T::lit(2.0 / 10f64.sqrt());
    let axis = |x: T| (x > T::zero(), x.abs() < edge);
    let (a, b) = axis(z.re);
    let (c, d) = axis(z.im);
    [a, b, c, d]
}
