//! The single-tone-signaling code.
//!
//! A message is split into `K` information symbols over GF(p), padded as
//! `(0, u_1..u_K, 0, ..., 0)` and multiplied by the `N x N` Vandermonde matrix
//! `Z[n][m] = beta^(n*m)`. Each code symbol is the subcarrier index energized in
//! one OFDM symbol. The leading zero makes every uniformly shifted codeword
//! invalid, and the shift itself reappears as the first element of `Z^-1 c`.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::gf::{add_mod, inv_mod, mul_mod, FieldElement, FieldSpec, GfError, GfMatrix};

/// Largest `D^K` that the enumerating routines will walk.
pub const ENUMERATION_LIMIT: u128 = 1_000_000;

const INTERP_CACHE_MAX_N: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodeError {
    #[error(transparent)]
    Field(#[from] GfError),
    #[error("invalid code parameters: {0}")]
    Parameters(String),
    #[error("message {message} is outside the valid range {min}..={max}")]
    MessageOutOfRange { message: u64, min: u64, max: u64 },
    #[error("message space GF({p})^{k} does not fit in 64 bits")]
    MessageSpaceTooLarge { p: u64, k: usize },
    #[error("expected {expected} symbols, got {got}")]
    Length { expected: usize, got: usize },
    #[error("the all-zero symbol vector carries no tones")]
    Silent,
    #[error("vector is not a uniformly shifted codeword")]
    NotShiftedCodeword,
    #[error("acceptance threshold {theta} must lie in {min}..={max}")]
    Threshold { theta: usize, min: usize, max: usize },
    #[error("enumeration over {size} codewords exceeds the limit {ENUMERATION_LIMIT}")]
    EnumerationTooLarge { size: u128 },
}

/// Information symbols `u_1..u_K`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SymbolVector(Vec<FieldElement>);

impl SymbolVector {
    pub fn as_slice(&self) -> &[FieldElement] {
        &self.0
    }

    pub fn values(&self) -> Vec<u64> {
        self.0.iter().map(FieldElement::value).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(FieldElement::is_zero)
    }
}

impl Serialize for SymbolVector {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.values().serialize(s)
    }
}

/// One tone index per OFDM symbol.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Codeword(Vec<FieldElement>);

impl Codeword {
    pub fn as_slice(&self) -> &[FieldElement] {
        &self.0
    }

    pub fn values(&self) -> Vec<u64> {
        self.0.iter().map(FieldElement::value).collect()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Adds `delta` to every symbol in the field.
    pub fn shifted(&self, delta: FieldElement) -> Codeword {
        Codeword(self.0.iter().map(|&c| c + delta).collect())
    }
}

impl Serialize for Codeword {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.values().serialize(s)
    }
}

/// Receiver-side observations, one entry per OFDM symbol.
///
/// The single form holds one tone index or `None` (erasure) per symbol; the
/// set form holds every detected index. Indices are raw subcarrier numbers and
/// may exceed `p - 1` on grids wider than the field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ObservedTones {
    Single(Vec<Option<u64>>),
    Sets(Vec<Vec<u64>>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecodeStatus {
    Decoded,
    Erasure,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DecodedSignal {
    pub symbols: SymbolVector,
    /// Number of OFDM symbols whose observation matched the codeword.
    pub score: usize,
    /// Subcarrier offset under which the match was found.
    pub offset: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DecodeResult {
    pub status: DecodeStatus,
    pub entries: Vec<DecodedSignal>,
}

impl DecodeResult {
    fn erasure() -> Self {
        Self {
            status: DecodeStatus::Erasure,
            entries: Vec::new(),
        }
    }
}

/// An `(N, K)` STS code over GF(p).
#[derive(Clone)]
pub struct StsCode {
    field: FieldSpec,
    n: usize,
    k: usize,
    beta: FieldElement,
    z: GfMatrix,
    z_inv: GfMatrix,
    // gen[i * k + j] = beta^(i * (j + 1)); coefficient of u_{j+1} in c_i
    gen: Vec<u64>,
    interp: Option<Vec<OnceLock<Vec<u64>>>>,
}

impl fmt::Debug for StsCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StsCode")
            .field("field", &self.field)
            .field("n", &self.n)
            .field("k", &self.k)
            .field("beta", &self.beta.value())
            .finish()
    }
}

impl StsCode {
    /// Builds the code with the smallest evaluation generator of order `>= n`.
    pub fn new(field: FieldSpec, n: usize, k: usize) -> Result<Self, CodeError> {
        let beta = field.element_of_order_at_least(n as u64)?;
        Self::with_beta(field, n, k, beta)
    }

    pub fn with_beta(field: FieldSpec, n: usize, k: usize, beta: FieldElement) -> Result<Self, CodeError> {
        if beta.field() != field {
            return Err(GfError::FieldMismatch(field.modulus(), beta.field().modulus()).into());
        }
        if n < 2 {
            return Err(CodeError::Parameters(format!("block length {n} must be at least 2")));
        }
        if k < 1 || k >= n {
            return Err(CodeError::Parameters(format!("need 1 <= K < N, got K={k}, N={n}")));
        }
        if beta.order() < n as u64 {
            return Err(CodeError::Parameters(format!(
                "beta={} has order {} < N={n}",
                beta.value(),
                beta.order()
            )));
        }
        let z = GfMatrix::vandermonde(beta, n);
        let z_inv = z.inverse()?;
        let p = field.modulus();
        let mut gen = vec![0; n * k];
        for i in 0..n {
            for j in 0..k {
                gen[i * k + j] = z.raw(i, j + 1);
            }
        }
        let interp = (n <= INTERP_CACHE_MAX_N).then(|| (0..1usize << n).map(|_| OnceLock::new()).collect());
        debug_assert!(p > 1);
        Ok(Self {
            field,
            n,
            k,
            beta,
            z,
            z_inv,
            gen,
            interp,
        })
    }

    pub fn field(&self) -> FieldSpec {
        self.field
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn beta(&self) -> FieldElement {
        self.beta
    }

    pub fn z(&self) -> &GfMatrix {
        &self.z
    }

    pub fn z_inv(&self) -> &GfMatrix {
        &self.z_inv
    }

    /// Default multi-signal acceptance threshold, `ceil((N + 1) / 2)`.
    pub fn default_threshold(&self) -> usize {
        (self.n + 2) / 2
    }

    fn message_space(&self) -> Result<u64, CodeError> {
        let p = self.field.modulus();
        p.checked_pow(self.k as u32)
            .ok_or(CodeError::MessageSpaceTooLarge { p, k: self.k })
    }

    /// Inclusive range of representable messages.
    ///
    /// With `K = 1` message `m` maps to `u_1 = m + 1`, so `0..=p-2`. For larger
    /// `K` the plain base-p digits are used and only `m = 0` (the silent
    /// all-zero codeword) is excluded.
    pub fn message_range(&self) -> Result<(u64, u64), CodeError> {
        let space = self.message_space()?;
        if self.k == 1 {
            Ok((0, space - 2))
        } else {
            Ok((1, space - 1))
        }
    }

    pub fn symbols(&self, values: &[u64]) -> Result<SymbolVector, CodeError> {
        if values.len() != self.k {
            return Err(CodeError::Length {
                expected: self.k,
                got: values.len(),
            });
        }
        let u = values
            .iter()
            .map(|&v| self.field.element(v))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(SymbolVector(u))
    }

    pub fn codeword(&self, values: &[u64]) -> Result<Codeword, CodeError> {
        if values.len() != self.n {
            return Err(CodeError::Length {
                expected: self.n,
                got: values.len(),
            });
        }
        let c = values
            .iter()
            .map(|&v| self.field.element(v))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Codeword(c))
    }

    pub fn message_to_symbols(&self, m: u64) -> Result<SymbolVector, CodeError> {
        let (min, max) = self.message_range()?;
        if m < min || m > max {
            return Err(CodeError::MessageOutOfRange { message: m, min, max });
        }
        let p = self.field.modulus();
        let mut rest = if self.k == 1 { m + 1 } else { m };
        let mut u = Vec::with_capacity(self.k);
        for _ in 0..self.k {
            u.push(self.field.element(rest % p)?);
            rest /= p;
        }
        Ok(SymbolVector(u))
    }

    pub fn symbols_to_message(&self, u: &SymbolVector) -> Result<u64, CodeError> {
        if u.0.len() != self.k {
            return Err(CodeError::Length {
                expected: self.k,
                got: u.0.len(),
            });
        }
        if u.is_zero() {
            return Err(CodeError::Silent);
        }
        let p = self.field.modulus();
        let m = u.0.iter().rev().fold(0u64, |acc, e| acc * p + e.value());
        Ok(if self.k == 1 { m - 1 } else { m })
    }

    pub fn encode(&self, u: &SymbolVector) -> Codeword {
        assert_eq!(u.0.len(), self.k, "symbol vector length");
        let raw: Vec<u64> = u.values();
        Codeword(
            self.encode_raw(&raw)
                .into_iter()
                .map(|v| self.field.element(v).expect("reduced"))
                .collect(),
        )
    }

    fn encode_raw(&self, u: &[u64]) -> Vec<u64> {
        let p = self.field.modulus();
        (0..self.n)
            .map(|i| {
                let row = &self.gen[i * self.k..(i + 1) * self.k];
                row.iter()
                    .zip(u)
                    .fold(0, |acc, (&g, &x)| add_mod(acc, mul_mod(g, x, p), p))
            })
            .collect()
    }

    #[inline]
    fn code_symbol(&self, u: &[u64], i: usize) -> u64 {
        let p = self.field.modulus();
        let row = &self.gen[i * self.k..(i + 1) * self.k];
        row.iter()
            .zip(u)
            .fold(0, |acc, (&g, &x)| add_mod(acc, mul_mod(g, x, p), p))
    }

    /// `Z^-1 c`.
    pub fn inverse_transform(&self, c: &Codeword) -> Vec<FieldElement> {
        self.z_inv
            .mul_vec(&c.0)
            .expect("codeword length and field match the code")
    }

    /// True iff `Z^-1 c` has the form `(0, u, 0, ..., 0)`.
    pub fn is_valid_codeword(&self, c: &Codeword) -> bool {
        if c.0.len() != self.n || c.0.iter().any(|e| e.field() != self.field) {
            return false;
        }
        let t = self.inverse_transform(c);
        t[0].is_zero() && t[self.k + 1..].iter().all(FieldElement::is_zero)
    }

    /// Recovers the uniform shift of a shifted codeword from the first element
    /// of its inverse transform.
    pub fn detect_offset(&self, c: &Codeword) -> Result<FieldElement, CodeError> {
        if c.0.len() != self.n {
            return Err(CodeError::Length {
                expected: self.n,
                got: c.0.len(),
            });
        }
        let t = self.inverse_transform(c);
        let delta = t[0];
        if !self.is_valid_codeword(&c.shifted(-delta)) {
            return Err(CodeError::NotShiftedCodeword);
        }
        Ok(delta)
    }

    /// Returns the information symbols encoded in a valid codeword.
    pub fn extract_symbols(&self, c: &Codeword) -> Option<SymbolVector> {
        if !self.is_valid_codeword(c) {
            return None;
        }
        let t = self.inverse_transform(c);
        Some(SymbolVector(t[1..=self.k].to_vec()))
    }

    /// Inverse of the `K x K` generator restricted to the positions in `mask`.
    fn interpolator(&self, mask: usize) -> Vec<u64> {
        match &self.interp {
            Some(cache) => cache[mask].get_or_init(|| self.build_interpolator(mask)).clone(),
            None => self.build_interpolator(mask),
        }
    }

    fn with_interpolator<R>(&self, mask: usize, f: impl FnOnce(&[u64]) -> R) -> R {
        match &self.interp {
            Some(cache) => f(cache[mask].get_or_init(|| self.build_interpolator(mask))),
            None => f(&self.build_interpolator(mask)),
        }
    }

    fn build_interpolator(&self, mask: usize) -> Vec<u64> {
        let rows: Vec<usize> = (0..self.n).filter(|i| mask >> i & 1 == 1).collect();
        debug_assert_eq!(rows.len(), self.k);
        let p = self.field.modulus();
        let sub: Vec<Vec<FieldElement>> = rows
            .iter()
            .map(|&i| {
                self.gen[i * self.k..(i + 1) * self.k]
                    .iter()
                    .map(|&v| self.field.element(v).expect("reduced"))
                    .collect()
            })
            .collect();
        let inv = GfMatrix::from_rows(self.field, &sub)
            .and_then(|m| m.inverse())
            .expect("distinct nonzero nodes give an invertible submatrix");
        let mut out = vec![0; self.k * self.k];
        for r in 0..self.k {
            for c in 0..self.k {
                out[r * self.k + c] = inv.raw(r, c) % p;
            }
        }
        out
    }

    /// Information symbols of the unique codeword taking `values` at the
    /// positions of `positions` (length `K`).
    fn interpolate(&self, positions: &[usize], values: &[u64], out: &mut [u64]) {
        let mask = positions.iter().fold(0usize, |m, &i| m | 1 << i);
        let p = self.field.modulus();
        let k = self.k;
        self.with_interpolator(mask, |inv| {
            for r in 0..k {
                out[r] = inv[r * k..(r + 1) * k]
                    .iter()
                    .zip(values)
                    .fold(0, |acc, (&a, &v)| add_mod(acc, mul_mod(a, v, p), p));
            }
        });
    }

    /// Single-signal maximum-match decoding with erasures.
    ///
    /// Picks the nonzero codeword agreeing with the most observations; a
    /// non-unique maximum is reported as an erasure. Every codeword with at
    /// least `K` agreements is reached by interpolating through `K` of its
    /// matched positions, and a best score below `K` always ties, so the
    /// result equals an exhaustive argmax over all `p^K - 1` candidates.
    ///
    /// `offset_window` additionally hypothesizes subcarrier shifts
    /// `-w..=w` of the whole observation.
    pub fn decode_single(&self, obs: &[Option<u64>], offset_window: u64) -> Result<DecodeResult, CodeError> {
        if obs.len() != self.n {
            return Err(CodeError::Length {
                expected: self.n,
                got: obs.len(),
            });
        }
        let w = offset_window as i64;
        let mut best_score = 0;
        let mut winners: Vec<(Vec<u64>, i64)> = Vec::new();
        for delta in -w..=w {
            let values: Vec<Option<u64>> = obs.iter().map(|o| o.and_then(|v| self.unshift(v, delta))).collect();
            let Some((score, cands)) = self.best_single(&values) else {
                continue;
            };
            if score > best_score {
                best_score = score;
                winners.clear();
            }
            if score == best_score {
                winners.extend(cands.into_iter().map(|u| (u, delta)));
            }
        }
        if best_score < self.k || winners.len() != 1 {
            return Ok(DecodeResult::erasure());
        }
        let (u, offset) = winners.pop().expect("one winner");
        Ok(DecodeResult {
            status: DecodeStatus::Decoded,
            entries: vec![DecodedSignal {
                symbols: self.symbols(&u)?,
                score: best_score,
                offset,
            }],
        })
    }

    #[inline]
    fn unshift(&self, index: u64, delta: i64) -> Option<u64> {
        let v = index as i64 - delta;
        (v >= 0 && (v as u64) < self.field.modulus()).then_some(v as u64)
    }

    /// Best score and all candidates attaining it.
    fn best_single(&self, values: &[Option<u64>]) -> Option<(usize, Vec<Vec<u64>>)> {
        let usable: Vec<usize> = (0..self.n).filter(|&i| values[i].is_some()).collect();
        if usable.len() < self.k {
            return None;
        }
        let mut best = 0;
        let mut winners: Vec<Vec<u64>> = Vec::new();
        let mut u = vec![0; self.k];
        let mut picked = vec![0; self.k];
        for_each_subset(&usable, self.k, |positions| {
            for (slot, &i) in positions.iter().enumerate() {
                picked[slot] = values[i].expect("usable");
            }
            self.interpolate(positions, &picked, &mut u);
            if u.iter().all(|&x| x == 0) {
                return;
            }
            let score = usable
                .iter()
                .filter(|&&i| values[i] == Some(self.code_symbol(&u, i)))
                .count();
            if score > best {
                best = score;
                winners.clear();
            }
            if score == best && !winners.contains(&u) {
                winners.push(u.clone());
            }
        });
        (!winners.is_empty()).then_some((best, winners))
    }

    /// Multi-signal threshold decoding.
    ///
    /// Returns every nonzero codeword (under every hypothesized offset in
    /// `-w..=w`) whose tones appear in at least `theta` of the per-symbol
    /// sets. Requires `K <= theta <= N`; candidates are generated by
    /// interpolating through one tone from each of `K` symbols, which reaches
    /// every codeword scoring `>= K`.
    pub fn decode_multi(&self, sets: &[Vec<u64>], theta: usize, offset_window: u64) -> Result<DecodeResult, CodeError> {
        if sets.len() != self.n {
            return Err(CodeError::Length {
                expected: self.n,
                got: sets.len(),
            });
        }
        if theta < self.k || theta > self.n {
            return Err(CodeError::Threshold {
                theta,
                min: self.k,
                max: self.n,
            });
        }
        let w = offset_window as i64;
        let mut accepted: HashMap<Vec<u64>, (usize, i64)> = HashMap::new();
        for delta in -w..=w {
            let shifted: Vec<Vec<u64>> = sets
                .iter()
                .map(|s| {
                    let mut v: Vec<u64> = s.iter().filter_map(|&i| self.unshift(i, delta)).collect();
                    v.sort_unstable();
                    v.dedup();
                    v
                })
                .collect();
            for (u, score) in self.threshold_candidates(&shifted, theta) {
                let better = match accepted.get(&u) {
                    None => true,
                    Some(&(s, d)) => score > s || (score == s && delta.abs() < d.abs()),
                };
                if better {
                    accepted.insert(u, (score, delta));
                }
            }
        }
        if accepted.is_empty() {
            return Ok(DecodeResult::erasure());
        }
        let mut entries: Vec<DecodedSignal> = accepted
            .into_iter()
            .map(|(u, (score, offset))| DecodedSignal {
                symbols: self.symbols(&u).expect("interpolated symbols are reduced"),
                score,
                offset,
            })
            .collect();
        entries.sort_by(|a, b| {
            b.score
                .cmp(&a.score)
                .then_with(|| a.symbols.values().cmp(&b.symbols.values()))
                .then_with(|| a.offset.cmp(&b.offset))
        });
        Ok(DecodeResult {
            status: DecodeStatus::Decoded,
            entries,
        })
    }

    fn threshold_candidates(&self, sets: &[Vec<u64>], theta: usize) -> Vec<(Vec<u64>, usize)> {
        let nonempty: Vec<usize> = (0..self.n).filter(|&i| !sets[i].is_empty()).collect();
        if nonempty.len() < theta {
            return Vec::new();
        }
        let p = self.field.modulus() as u128;
        let mut seen: HashSet<u128> = HashSet::new();
        let mut out = Vec::new();
        let mut u = vec![0; self.k];
        let mut picked = vec![0; self.k];
        for_each_subset(&nonempty, self.k, |positions| {
            let choices: Vec<&[u64]> = positions.iter().map(|&i| sets[i].as_slice()).collect();
            for_each_product(&choices, &mut picked, |picked| {
                self.interpolate(positions, picked, &mut u);
                if u.iter().all(|&x| x == 0) {
                    return;
                }
                let key = u.iter().rev().fold(0u128, |acc, &x| acc * p + x as u128);
                if !seen.insert(key) {
                    return;
                }
                let score = nonempty
                    .iter()
                    .filter(|&&i| sets[i].binary_search(&self.code_symbol(&u, i)).is_ok())
                    .count();
                if score >= theta {
                    out.push((u.clone(), score));
                }
            });
        });
        out
    }

    /// Minimum Hamming weight over all nonzero codewords by direct enumeration.
    pub fn min_distance_bruteforce(&self) -> Result<usize, CodeError> {
        let p = self.field.modulus();
        let size = (p as u128).checked_pow(self.k as u32).unwrap_or(u128::MAX);
        if size > ENUMERATION_LIMIT {
            return Err(CodeError::EnumerationTooLarge { size });
        }
        let mut u = vec![0u64; self.k];
        let mut best = self.n;
        while increment(&mut u, p) {
            let weight = (0..self.n).filter(|&i| self.code_symbol(&u, i) != 0).count();
            best = best.min(weight);
        }
        Ok(best)
    }

    /// Minimum distance as `N - max{|T| : rank(G_T) < K}` over all position
    /// subsets `T`: a nonzero codeword vanishing on `T` exists exactly when the
    /// generator rows at `T` do not span.
    pub fn min_distance_by_subset_rank(&self) -> Result<usize, CodeError> {
        if self.n > 24 {
            return Err(CodeError::EnumerationTooLarge { size: 1u128 << self.n });
        }
        let mut max_zeros = 0;
        for mask in 0usize..1 << self.n {
            let t = mask.count_ones() as usize;
            if t <= max_zeros {
                continue;
            }
            let rows: Vec<Vec<FieldElement>> = (0..self.n)
                .filter(|i| mask >> i & 1 == 1)
                .map(|i| {
                    self.gen[i * self.k..(i + 1) * self.k]
                        .iter()
                        .map(|&v| self.field.element(v).expect("reduced"))
                        .collect()
                })
                .collect();
            let rank = GfMatrix::from_rows(self.field, &rows)?.rank();
            if rank < self.k {
                max_zeros = t;
            }
        }
        Ok(self.n - max_zeros)
    }

    /// All nonzero symbol vectors in lexicographic little-endian order.
    pub fn all_symbols(&self) -> Result<Vec<SymbolVector>, CodeError> {
        let p = self.field.modulus();
        let size = (p as u128).checked_pow(self.k as u32).unwrap_or(u128::MAX);
        if size > ENUMERATION_LIMIT {
            return Err(CodeError::EnumerationTooLarge { size });
        }
        let mut u = vec![0u64; self.k];
        let mut out = Vec::with_capacity(size as usize - 1);
        while increment(&mut u, p) {
            out.push(self.symbols(&u)?);
        }
        Ok(out)
    }

    /// Exposes the cached interpolator for diagnostics.
    #[doc(hidden)]
    pub fn interpolator_for(&self, positions: &[usize]) -> Vec<u64> {
        self.interpolator(positions.iter().fold(0, |m, &i| m | 1 << i))
    }

    /// `u * beta^-(i)` style inversion used by K = 1 callers.
    pub fn symbol_from_tone(&self, position: usize, tone: u64) -> Option<u64> {
        if self.k != 1 || tone >= self.field.modulus() {
            return None;
        }
        let g = self.gen[position];
        Some(mul_mod(tone, inv_mod(g, self.field.modulus()), self.field.modulus()))
    }
}

/// Little-endian mixed-radix increment; false once the counter wraps to zero.
fn increment(u: &mut [u64], p: u64) -> bool {
    for x in u.iter_mut() {
        *x += 1;
        if *x < p {
            return true;
        }
        *x = 0;
    }
    false
}

fn for_each_subset(items: &[usize], k: usize, mut f: impl FnMut(&[usize])) {
    fn rec(items: &[usize], k: usize, start: usize, cur: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
        if cur.len() == k {
            f(cur);
            return;
        }
        let need = k - cur.len();
        for i in start..=items.len() - need {
            cur.push(items[i]);
            rec(items, k, i + 1, cur, f);
            cur.pop();
        }
    }
    if k > items.len() {
        return;
    }
    let mut cur = Vec::with_capacity(k);
    rec(items, k, 0, &mut cur, &mut f);
}

fn for_each_product(choices: &[&[u64]], buf: &mut [u64], mut f: impl FnMut(&[u64])) {
    if choices.iter().any(|c| c.is_empty()) {
        return;
    }
    let mut idx = vec![0usize; choices.len()];
    loop {
        for (slot, (c, &i)) in choices.iter().zip(&idx).enumerate() {
            buf[slot] = c[i];
        }
        f(buf);
        let mut pos = 0;
        loop {
            if pos == idx.len() {
                return;
            }
            idx[pos] += 1;
            if idx[pos] < choices[pos].len() {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gf(p: u64) -> FieldSpec {
        FieldSpec::new(p).unwrap()
    }

    fn desk() -> StsCode {
        let f = gf(17);
        StsCode::with_beta(f, 4, 1, f.element(4).unwrap()).unwrap()
    }

    /// Exhaustive argmax with ties reported as erasure; the reference the
    /// interpolating decoder must agree with.
    fn oracle_single(code: &StsCode, obs: &[Option<u64>]) -> Option<(Vec<u64>, usize)> {
        let mut best = 0;
        let mut winners = Vec::new();
        for u in code.all_symbols().unwrap() {
            let c = code.encode(&u).values();
            let score = obs.iter().zip(&c).filter(|(o, c)| **o == Some(**c)).count();
            if score > best {
                best = score;
                winners.clear();
            }
            if score == best {
                winners.push(u.values());
            }
        }
        (winners.len() == 1).then(|| (winners.pop().unwrap(), best))
    }

    #[test]
    fn parameters_are_validated() {
        let f = gf(17);
        assert!(StsCode::new(f, 4, 0).is_err());
        assert!(StsCode::new(f, 4, 4).is_err());
        assert!(StsCode::new(f, 1, 1).is_err());
        assert!(StsCode::new(f, 17, 1).is_err());
        assert!(StsCode::with_beta(f, 8, 1, f.element(4).unwrap()).is_err());
        let code = StsCode::new(f, 4, 1).unwrap();
        assert_eq!(code.beta().value(), 2);
    }

    #[test]
    fn z_structure() {
        let code = StsCode::new(gf(509), 11, 1).unwrap();
        let z = code.z();
        for i in 0..11 {
            assert_eq!(z.get(i, 0).value(), 1);
        }
        assert_eq!(z.mul(code.z_inv()).unwrap(), GfMatrix::identity(gf(509), 11));
    }

    #[test]
    fn message_mapping_examples() {
        let wide = StsCode::new(gf(1021), 11, 2).unwrap();
        // m = u_2 * D + u_1 with D = p
        let u = wide.message_to_symbols(1021 + 5).unwrap();
        assert_eq!(u.values(), vec![5, 1]);
        assert_eq!(wide.symbols_to_message(&u).unwrap(), 1026);
        let u = wide.message_to_symbols(5 * 1021 + 10).unwrap();
        assert_eq!(u.values(), vec![10, 5]);

        let k1 = StsCode::new(gf(509), 11, 1).unwrap();
        assert_eq!(k1.message_to_symbols(0).unwrap().values(), vec![1]);
        assert_eq!(k1.symbols_to_message(&k1.symbols(&[1]).unwrap()).unwrap(), 0);
        assert!(k1.message_to_symbols(508).is_err());
        assert_eq!(k1.message_range().unwrap(), (0, 507));
        assert!(wide.message_to_symbols(0).is_err());
    }

    #[test]
    fn digits_match_radix_32_example() {
        // D = 32, K = 2: 37 = 1 * 32 + 5 and 170 = 5 * 32 + 10
        let digits = |m: u64| vec![m % 32, m / 32];
        assert_eq!(digits(37), vec![5, 1]);
        assert_eq!(digits(170), vec![10, 5]);
    }

    #[test]
    fn message_roundtrip_exhaustive() {
        for (p, n, k) in [(17, 4, 1), (17, 5, 2), (13, 6, 3)] {
            let code = StsCode::new(gf(p), n, k).unwrap();
            let (lo, hi) = code.message_range().unwrap();
            for m in lo..=hi {
                let u = code.message_to_symbols(m).unwrap();
                assert!(!u.is_zero());
                assert_eq!(code.symbols_to_message(&u).unwrap(), m);
            }
        }
    }

    #[test]
    fn encode_examples() {
        let code = desk();
        let c = code.encode(&code.symbols(&[3]).unwrap());
        assert_eq!(c.values(), vec![3, 12, 14, 5]);
        let c7 = code.encode(&code.symbols(&[7]).unwrap());
        assert_eq!(c7.values(), vec![7, 11, 10, 6]);
        // direct evaluation c_n = u * 4^(n-1)
        for (i, v) in c.values().iter().enumerate() {
            assert_eq!(*v, 3 * 4u64.pow(i as u32) % 17);
        }
        assert!(code.inverse_transform(&c)[0].is_zero());
    }

    #[test]
    fn encode_matches_z_times_padded_vector() {
        let f = gf(17);
        let code = StsCode::new(f, 6, 2).unwrap();
        for u in code.all_symbols().unwrap().into_iter().take(50) {
            let mut padded = vec![f.zero(); 6];
            padded[1..3].copy_from_slice(u.as_slice());
            let c = code.z().mul_vec(&padded).unwrap();
            assert_eq!(code.encode(&u).as_slice(), &c[..]);
        }
    }

    #[test]
    fn validity_examples() {
        let code = desk();
        assert!(code.is_valid_codeword(&code.codeword(&[3, 12, 14, 5]).unwrap()));
        let shifted = code.codeword(&[5, 14, 16, 7]).unwrap();
        assert!(!code.is_valid_codeword(&shifted));
        assert_eq!(code.inverse_transform(&shifted)[0].value(), 2);
        assert!(code.is_valid_codeword(&code.codeword(&[0, 0, 0, 0]).unwrap()));
    }

    #[test]
    fn offset_examples() {
        let code = desk();
        let f = code.field();
        let c = code.codeword(&[3, 12, 14, 5]).unwrap();
        assert_eq!(code.detect_offset(&c).unwrap().value(), 0);
        let shifted = code.codeword(&[5, 14, 16, 7]).unwrap();
        assert_eq!(code.detect_offset(&shifted).unwrap().value(), 2);
        // N^-1 * sum(c') = 13 * 42 mod 17
        assert_eq!(f.element(4).unwrap().inv().unwrap().value(), 13);
        assert_eq!((13 * (5 + 14 + 16 + 7)) % 17, 2);
        let by16 = c.shifted(f.element(16).unwrap());
        assert_eq!(code.detect_offset(&by16).unwrap().value(), 16);
        let junk = code.codeword(&[1, 0, 0, 0]).unwrap();
        assert_eq!(code.detect_offset(&junk), Err(CodeError::NotShiftedCodeword));
    }

    #[test]
    fn decode_single_examples() {
        let code = desk();
        let r = code.decode_single(&[Some(3), Some(12), Some(9), Some(5)], 0).unwrap();
        assert_eq!(r.status, DecodeStatus::Decoded);
        assert_eq!(r.entries[0].symbols.values(), vec![3]);
        assert_eq!(r.entries[0].score, 3);
        // runner-up oracle: every other candidate scores at most 1
        for u in 1..17u64 {
            if u == 3 {
                continue;
            }
            let c = code.encode(&code.symbols(&[u]).unwrap()).values();
            let s = [3, 12, 9, 5].iter().zip(&c).filter(|(a, b)| a == b).count();
            assert!(s <= 1);
        }
        let r = code.decode_single(&[Some(3), None, Some(14), None], 0).unwrap();
        assert_eq!(r.entries[0].symbols.values(), vec![3]);
        assert_eq!(r.entries[0].score, 2);
        let r = code.decode_single(&[Some(7), Some(11), Some(10), Some(6)], 0).unwrap();
        assert_eq!(r.entries[0].score, 4);
        assert_eq!(r.entries[0].offset, 0);
    }

    #[test]
    fn decode_single_ties_are_erasures() {
        let code = desk();
        // codewords of u=3 and u=7 each matched once
        let r = code.decode_single(&[Some(3), Some(11), None, None], 0).unwrap();
        assert_eq!(r.status, DecodeStatus::Erasure);
        let r = code.decode_single(&[None; 4], 0).unwrap();
        assert_eq!(r.status, DecodeStatus::Erasure);
        assert!(code.decode_single(&[None; 3], 0).is_err());
    }

    #[test]
    fn decode_single_recovers_offset() {
        let code = StsCode::new(gf(509), 11, 1).unwrap();
        let c = code.encode(&code.symbols(&[77]).unwrap()).values();
        let obs: Vec<Option<u64>> = c.iter().map(|&v| Some(v + 2)).collect();
        let r = code.decode_single(&obs, 3).unwrap();
        assert_eq!(r.entries[0].symbols.values(), vec![77]);
        assert_eq!(r.entries[0].offset, 2);
        assert_eq!(r.entries[0].score, 11);
    }

    #[test]
    fn decode_single_matches_exhaustive_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for (n, k) in [(4, 1), (5, 2), (6, 3), (6, 2)] {
            let code = StsCode::new(gf(17), n, k).unwrap();
            for _ in 0..400 {
                let obs: Vec<Option<u64>> = (0..n)
                    .map(|_| (rng.random_bool(0.8)).then(|| rng.random_range(0..17)))
                    .collect();
                // bias toward near-codewords half of the time
                let obs = if rng.random_bool(0.5) {
                    let u = code.all_symbols().unwrap()[rng.random_range(0..16)].clone();
                    let c = code.encode(&u).values();
                    obs.iter()
                        .zip(c)
                        .map(|(o, c)| if rng.random_bool(0.7) { Some(c) } else { *o })
                        .collect()
                } else {
                    obs
                };
                let got = code.decode_single(&obs, 0).unwrap();
                let want = oracle_single(&code, &obs);
                match want {
                    Some((u, score)) => {
                        assert_eq!(got.status, DecodeStatus::Decoded, "{obs:?}");
                        assert_eq!(got.entries[0].symbols.values(), u);
                        assert_eq!(got.entries[0].score, score);
                    }
                    None => assert_eq!(got.status, DecodeStatus::Erasure, "{obs:?}"),
                }
            }
        }
    }

    fn sets(v: &[&[u64]]) -> Vec<Vec<u64>> {
        v.iter().map(|s| s.to_vec()).collect()
    }

    #[test]
    fn decode_multi_examples() {
        let code = desk();
        let obs = sets(&[&[3, 7], &[12, 11], &[14, 10], &[5, 6]]);
        let r = code.decode_multi(&obs, 3, 0).unwrap();
        let found: Vec<_> = r.entries.iter().map(|e| e.symbols.values()[0]).collect();
        assert_eq!(found, vec![3, 7]);

        let obs = sets(&[&[3, 7], &[12], &[14, 10], &[5, 6]]);
        let r = code.decode_multi(&obs, 3, 0).unwrap();
        let found: Vec<_> = r.entries.iter().map(|e| (e.symbols.values()[0], e.score)).collect();
        assert_eq!(found, vec![(3, 4), (7, 3)]);

        let r = code.decode_multi(&sets(&[&[], &[], &[], &[]]), 3, 0).unwrap();
        assert_eq!(r.status, DecodeStatus::Erasure);
    }

    #[test]
    fn decode_multi_matches_exhaustive_sweep() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let code = StsCode::new(gf(17), 6, 2).unwrap();
        let all = code.all_symbols().unwrap();
        for _ in 0..50 {
            let obs: Vec<Vec<u64>> = (0..6)
                .map(|_| {
                    let mut s: Vec<u64> = (0..rng.random_range(0..5)).map(|_| rng.random_range(0..17)).collect();
                    s.sort();
                    s.dedup();
                    s
                })
                .collect();
            for theta in 2..=6 {
                let got: HashSet<Vec<u64>> = code
                    .decode_multi(&obs, theta, 0)
                    .unwrap()
                    .entries
                    .into_iter()
                    .map(|e| e.symbols.values())
                    .collect();
                let want: HashSet<Vec<u64>> = all
                    .iter()
                    .filter(|u| {
                        let c = code.encode(u).values();
                        c.iter().zip(&obs).filter(|(c, s)| s.contains(c)).count() >= theta
                    })
                    .map(|u| u.values())
                    .collect();
                assert_eq!(got, want);
            }
        }
    }

    #[test]
    fn decode_multi_threshold_bounds() {
        let code = StsCode::new(gf(17), 6, 2).unwrap();
        let obs = vec![vec![]; 6];
        assert!(code.decode_multi(&obs, 1, 0).is_err());
        assert!(code.decode_multi(&obs, 7, 0).is_err());
        assert_eq!(code.default_threshold(), 4);
        assert_eq!(StsCode::new(gf(509), 11, 1).unwrap().default_threshold(), 6);
    }

    #[test]
    fn decode_multi_with_offsets() {
        let code = StsCode::new(gf(509), 11, 1).unwrap();
        let c1 = code.encode(&code.symbols(&[10]).unwrap()).values();
        let c2 = code.encode(&code.symbols(&[200]).unwrap()).values();
        let obs: Vec<Vec<u64>> = c1
            .iter()
            .zip(&c2)
            .map(|(&a, &b)| vec![a + 1, b.wrapping_sub(0)])
            .collect();
        let r = code.decode_multi(&obs, 6, 3).unwrap();
        let found: Vec<_> = r.entries.iter().map(|e| (e.symbols.values()[0], e.offset)).collect();
        assert_eq!(found, vec![(10, 1), (200, 0)]);
    }

    #[test]
    fn min_distance_examples() {
        let f = gf(17);
        let code = desk();
        assert_eq!(code.min_distance_bruteforce().unwrap(), 4);
        let code = StsCode::new(f, 8, 3).unwrap();
        assert_eq!(code.min_distance_bruteforce().unwrap(), 6);
        let code = StsCode::new(f, 5, 4).unwrap();
        assert_eq!(code.min_distance_bruteforce().unwrap(), 2);
        assert_eq!(code.min_distance_by_subset_rank().unwrap(), 2);
        let big = StsCode::new(f, 10, 6).unwrap();
        assert!(matches!(
            big.min_distance_bruteforce(),
            Err(CodeError::EnumerationTooLarge { .. })
        ));
    }

    #[test]
    fn distance_methods_agree() {
        for p in [13u64, 17] {
            for n in 2..=8 {
                for k in 1..n.min(4) {
                    let code = StsCode::new(gf(p), n, k).unwrap();
                    assert_eq!(
                        code.min_distance_bruteforce().unwrap(),
                        code.min_distance_by_subset_rank().unwrap()
                    );
                }
            }
        }
    }

    #[test]
    fn k1_codewords_never_share_a_tone_position() {
        let code = StsCode::new(gf(17), 6, 1).unwrap();
        let cws: Vec<Vec<u64>> = (1..17)
            .map(|u| code.encode(&code.symbols(&[u]).unwrap()).values())
            .collect();
        for a in 0..cws.len() {
            for b in a + 1..cws.len() {
                for i in 0..6 {
                    assert_ne!(cws[a][i], cws[b][i]);
                }
            }
        }
    }

    #[test]
    fn observed_tones_json_forms() {
        let single: ObservedTones = serde_json::from_str("[3, null, 14, 5]").unwrap();
        assert_eq!(single, ObservedTones::Single(vec![Some(3), None, Some(14), Some(5)]));
        let multi: ObservedTones = serde_json::from_str("[[3, 7], [12], []]").unwrap();
        assert_eq!(multi, ObservedTones::Sets(vec![vec![3, 7], vec![12], vec![]]));
        let code = desk();
        let c = code.encode(&code.symbols(&[3]).unwrap());
        assert_eq!(serde_json::to_string(&c).unwrap(), "[3,12,14,5]");
    }

    #[test]
    fn symbol_from_tone_inverts_k1_encoding() {
        let code = StsCode::new(gf(509), 11, 1).unwrap();
        let c = code.encode(&code.symbols(&[123]).unwrap()).values();
        for (i, &t) in c.iter().enumerate() {
            assert_eq!(code.symbol_from_tone(i, t), Some(123));
        }
    }

    proptest! {
        #[test]
        fn shift_is_detected(u in 1u64..509, delta in 1u64..509) {
            let code = StsCode::new(gf(509), 11, 1).unwrap();
            let c = code.encode(&code.symbols(&[u]).unwrap());
            let s = c.shifted(code.field().element(delta).unwrap());
            prop_assert!(!code.is_valid_codeword(&s));
            prop_assert_eq!(code.detect_offset(&s).unwrap().value(), delta);
        }

        #[test]
        fn extract_inverts_encode(a in 0u64..17, b in 0u64..17, c in 0u64..17) {
            let code = StsCode::new(gf(17), 6, 3).unwrap();
            let u = code.symbols(&[a, b, c]).unwrap();
            prop_assert_eq!(code.extract_symbols(&code.encode(&u)), Some(u));
        }
    }
}
