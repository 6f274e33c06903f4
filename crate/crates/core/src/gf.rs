//! Prime-field arithmetic GF(p).
//!
//! Elements carry their modulus so that mixing fields is caught at the call
//! site. The checked operations (`try_add`, `try_mul`, ...) return
//! [`GfError::FieldMismatch`]; the `std::ops` impls panic instead and are meant
//! for code that has already established both operands share a field.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GfError {
    #[error("modulus {0} is not prime")]
    NotPrime(u64),
    #[error("value {value} is out of range for GF({modulus})")]
    OutOfRange { value: u64, modulus: u64 },
    #[error("operands belong to different fields: GF({0}) and GF({1})")]
    FieldMismatch(u64, u64),
    #[error("zero has no multiplicative inverse")]
    ZeroInverse,
    #[error("no element of order >= {wanted} exists in GF({modulus})")]
    OrderUnavailable { wanted: u64, modulus: u64 },
    #[error("matrix is singular")]
    Singular,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
}

/// A prime field GF(p).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u64", into = "u64")]
pub struct FieldSpec {
    modulus: u64,
}

impl TryFrom<u64> for FieldSpec {
    type Error = GfError;
    fn try_from(p: u64) -> Result<Self, GfError> {
        FieldSpec::new(p)
    }
}

impl From<FieldSpec> for u64 {
    fn from(f: FieldSpec) -> u64 {
        f.modulus
    }
}

impl FieldSpec {
    pub fn new(p: u64) -> Result<Self, GfError> {
        if !is_prime(p) {
            return Err(GfError::NotPrime(p));
        }
        Ok(Self { modulus: p })
    }

    pub fn modulus(&self) -> u64 {
        self.modulus
    }

    pub fn element(&self, value: u64) -> Result<FieldElement, GfError> {
        if value >= self.modulus {
            return Err(GfError::OutOfRange {
                value,
                modulus: self.modulus,
            });
        }
        Ok(FieldElement {
            value,
            modulus: self.modulus,
        })
    }

    /// Maps an arbitrary integer into the field by reduction.
    pub fn reduce(&self, value: i128) -> FieldElement {
        let m = self.modulus as i128;
        FieldElement {
            value: value.rem_euclid(m) as u64,
            modulus: self.modulus,
        }
    }

    pub fn zero(&self) -> FieldElement {
        FieldElement {
            value: 0,
            modulus: self.modulus,
        }
    }

    pub fn one(&self) -> FieldElement {
        FieldElement {
            value: 1 % self.modulus,
            modulus: self.modulus,
        }
    }

    pub fn elements(&self) -> impl Iterator<Item = FieldElement> + '_ {
        (0..self.modulus).map(move |value| FieldElement {
            value,
            modulus: self.modulus,
        })
    }

    /// Smallest element whose multiplicative order is at least `n`.
    ///
    /// The powers `beta^0 .. beta^(n-1)` of the returned element are pairwise
    /// distinct, which is all the Vandermonde construction needs.
    pub fn element_of_order_at_least(&self, n: u64) -> Result<FieldElement, GfError> {
        if n == 0 || n > self.modulus - 1 {
            return Err(GfError::OrderUnavailable {
                wanted: n,
                modulus: self.modulus,
            });
        }
        let factors = prime_factors(self.modulus - 1);
        for value in 1..self.modulus {
            let e = FieldElement {
                value,
                modulus: self.modulus,
            };
            if order_with_factors(e, self.modulus - 1, &factors) >= n {
                return Ok(e);
            }
        }
        Err(GfError::OrderUnavailable {
            wanted: n,
            modulus: self.modulus,
        })
    }
}

impl fmt::Display for FieldSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GF({})", self.modulus)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FieldElement {
    value: u64,
    modulus: u64,
}

impl FieldElement {
    pub fn value(&self) -> u64 {
        self.value
    }

    pub fn field(&self) -> FieldSpec {
        FieldSpec { modulus: self.modulus }
    }

    pub fn is_zero(&self) -> bool {
        self.value == 0
    }

    fn check(&self, other: &FieldElement) -> Result<(), GfError> {
        if self.modulus != other.modulus {
            return Err(GfError::FieldMismatch(self.modulus, other.modulus));
        }
        Ok(())
    }

    pub fn try_add(self, other: FieldElement) -> Result<FieldElement, GfError> {
        self.check(&other)?;
        Ok(self.with(add_mod(self.value, other.value, self.modulus)))
    }

    pub fn try_sub(self, other: FieldElement) -> Result<FieldElement, GfError> {
        self.check(&other)?;
        Ok(self.with(sub_mod(self.value, other.value, self.modulus)))
    }

    pub fn try_mul(self, other: FieldElement) -> Result<FieldElement, GfError> {
        self.check(&other)?;
        Ok(self.with(mul_mod(self.value, other.value, self.modulus)))
    }

    pub fn inv(self) -> Result<FieldElement, GfError> {
        if self.value == 0 {
            return Err(GfError::ZeroInverse);
        }
        // Fermat: a^(p-2) = a^-1
        Ok(self.pow(self.modulus - 2))
    }

    pub fn pow(self, mut e: u64) -> FieldElement {
        let mut base = self.value;
        let mut acc = 1 % self.modulus;
        while e > 0 {
            if e & 1 == 1 {
                acc = mul_mod(acc, base, self.modulus);
            }
            base = mul_mod(base, base, self.modulus);
            e >>= 1;
        }
        self.with(acc)
    }

    /// Multiplicative order; zero has no order and reports 0.
    pub fn order(self) -> u64 {
        if self.value == 0 {
            return 0;
        }
        let group = self.modulus - 1;
        order_with_factors(self, group, &prime_factors(group))
    }

    fn with(&self, value: u64) -> FieldElement {
        FieldElement {
            value,
            modulus: self.modulus,
        }
    }
}

impl fmt::Display for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value)
    }
}

impl Add for FieldElement {
    type Output = FieldElement;
    fn add(self, rhs: FieldElement) -> FieldElement {
        self.try_add(rhs).expect("field mismatch in addition")
    }
}

impl Sub for FieldElement {
    type Output = FieldElement;
    fn sub(self, rhs: FieldElement) -> FieldElement {
        self.try_sub(rhs).expect("field mismatch in subtraction")
    }
}

impl Mul for FieldElement {
    type Output = FieldElement;
    fn mul(self, rhs: FieldElement) -> FieldElement {
        self.try_mul(rhs).expect("field mismatch in multiplication")
    }
}

impl Neg for FieldElement {
    type Output = FieldElement;
    fn neg(self) -> FieldElement {
        self.with(sub_mod(0, self.value, self.modulus))
    }
}

#[inline]
pub(crate) fn add_mod(a: u64, b: u64, m: u64) -> u64 {
    let s = a as u128 + b as u128;
    (s % m as u128) as u64
}

#[inline]
pub(crate) fn sub_mod(a: u64, b: u64, m: u64) -> u64 {
    if a >= b {
        a - b
    } else {
        m - (b - a)
    }
}

#[inline]
pub(crate) fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    if m <= u32::MAX as u64 {
        a * b % m
    } else {
        ((a as u128 * b as u128) % m as u128) as u64
    }
}

pub(crate) fn pow_mod(mut base: u64, mut e: u64, m: u64) -> u64 {
    let mut acc = 1 % m;
    base %= m;
    while e > 0 {
        if e & 1 == 1 {
            acc = mul_mod(acc, base, m);
        }
        base = mul_mod(base, base, m);
        e >>= 1;
    }
    acc
}

pub(crate) fn inv_mod(a: u64, m: u64) -> u64 {
    pow_mod(a, m - 2, m)
}

/// Deterministic Miller-Rabin, exact for all `u64`.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    const SMALL: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    for p in SMALL {
        if n.is_multiple_of(p) {
            return n == p;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d.is_multiple_of(2) {
        d /= 2;
        s += 1;
    }
    'witness: for a in SMALL {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

fn prime_factors(mut n: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut f = 2;
    while f * f <= n {
        if n.is_multiple_of(f) {
            out.push(f);
            while n.is_multiple_of(f) {
                n /= f;
            }
        }
        f += 1;
    }
    if n > 1 {
        out.push(n);
    }
    out
}

fn order_with_factors(e: FieldElement, group: u64, factors: &[u64]) -> u64 {
    let mut ord = group;
    for &q in factors {
        while ord.is_multiple_of(q) && pow_mod(e.value, ord / q, e.modulus) == 1 {
            ord /= q;
        }
    }
    ord
}

/// Dense square or rectangular matrix over a prime field, stored row-major as
/// reduced residues.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GfMatrix {
    field: FieldSpec,
    rows: usize,
    cols: usize,
    data: Vec<u64>,
}

impl GfMatrix {
    pub fn zeros(field: FieldSpec, rows: usize, cols: usize) -> Self {
        Self {
            field,
            rows,
            cols,
            data: vec![0; rows * cols],
        }
    }

    pub fn identity(field: FieldSpec, n: usize) -> Self {
        let mut m = Self::zeros(field, n, n);
        for i in 0..n {
            m.data[i * n + i] = 1 % field.modulus;
        }
        m
    }

    pub fn from_rows(field: FieldSpec, rows: &[Vec<FieldElement>]) -> Result<Self, GfError> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(GfError::Dimension {
                    expected: c,
                    got: row.len(),
                });
            }
            for e in row {
                if e.modulus != field.modulus {
                    return Err(GfError::FieldMismatch(field.modulus, e.modulus));
                }
                data.push(e.value);
            }
        }
        Ok(Self {
            field,
            rows: r,
            cols: c,
            data,
        })
    }

    /// `V[i][j] = beta^(i*j)` for `0 <= i, j < n`.
    pub fn vandermonde(beta: FieldElement, n: usize) -> Self {
        let field = beta.field();
        let p = field.modulus;
        let mut m = Self::zeros(field, n, n);
        for i in 0..n {
            let node = pow_mod(beta.value, i as u64, p);
            let mut acc = 1 % p;
            for j in 0..n {
                m.data[i * n + j] = acc;
                acc = mul_mod(acc, node, p);
            }
        }
        m
    }

    pub fn field(&self) -> FieldSpec {
        self.field
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> FieldElement {
        FieldElement {
            value: self.data[r * self.cols + c],
            modulus: self.field.modulus,
        }
    }

    pub(crate) fn raw(&self, r: usize, c: usize) -> u64 {
        self.data[r * self.cols + c]
    }

    pub fn mul_vec(&self, x: &[FieldElement]) -> Result<Vec<FieldElement>, GfError> {
        if x.len() != self.cols {
            return Err(GfError::Dimension {
                expected: self.cols,
                got: x.len(),
            });
        }
        let p = self.field.modulus;
        for e in x {
            if e.modulus != p {
                return Err(GfError::FieldMismatch(p, e.modulus));
            }
        }
        Ok((0..self.rows)
            .map(|r| {
                let row = &self.data[r * self.cols..(r + 1) * self.cols];
                let v = row
                    .iter()
                    .zip(x)
                    .fold(0, |acc, (&a, b)| add_mod(acc, mul_mod(a, b.value, p), p));
                FieldElement { value: v, modulus: p }
            })
            .collect())
    }

    pub fn mul(&self, other: &GfMatrix) -> Result<GfMatrix, GfError> {
        if self.cols != other.rows {
            return Err(GfError::Dimension {
                expected: self.cols,
                got: other.rows,
            });
        }
        let p = self.field.modulus;
        let mut out = GfMatrix::zeros(self.field, self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.raw(i, k);
                if a == 0 {
                    continue;
                }
                for j in 0..other.cols {
                    let idx = i * other.cols + j;
                    out.data[idx] = add_mod(out.data[idx], mul_mod(a, other.raw(k, j), p), p);
                }
            }
        }
        Ok(out)
    }

    /// Rank by row reduction.
    pub fn rank(&self) -> usize {
        let mut work = self.data.clone();
        row_reduce(&mut work, self.rows, self.cols, self.field.modulus)
    }

    pub fn inverse(&self) -> Result<GfMatrix, GfError> {
        if self.rows != self.cols {
            return Err(GfError::Dimension {
                expected: self.rows,
                got: self.cols,
            });
        }
        let n = self.rows;
        let p = self.field.modulus;
        // augmented [A | I]
        let w = 2 * n;
        let mut aug = vec![0u64; n * w];
        for r in 0..n {
            aug[r * w..r * w + n].copy_from_slice(&self.data[r * n..(r + 1) * n]);
            aug[r * w + n + r] = 1 % p;
        }
        eliminate(&mut aug, n, w, n, p)?;
        let mut out = GfMatrix::zeros(self.field, n, n);
        for r in 0..n {
            out.data[r * n..(r + 1) * n].copy_from_slice(&aug[r * w + n..(r + 1) * w]);
        }
        Ok(out)
    }
}

/// Gauss-Jordan on the first `pivots` columns; fails if any is rank deficient.
fn eliminate(a: &mut [u64], rows: usize, cols: usize, pivots: usize, p: u64) -> Result<(), GfError> {
    for col in 0..pivots {
        let pivot = (col..rows).find(|&r| a[r * cols + col] != 0).ok_or(GfError::Singular)?;
        if pivot != col {
            for j in 0..cols {
                a.swap(pivot * cols + j, col * cols + j);
            }
        }
        let inv = inv_mod(a[col * cols + col], p);
        for j in 0..cols {
            a[col * cols + j] = mul_mod(a[col * cols + j], inv, p);
        }
        for r in 0..rows {
            if r == col {
                continue;
            }
            let factor = a[r * cols + col];
            if factor == 0 {
                continue;
            }
            for j in 0..cols {
                let sub = mul_mod(factor, a[col * cols + j], p);
                a[r * cols + j] = sub_mod(a[r * cols + j], sub, p);
            }
        }
    }
    Ok(())
}

fn row_reduce(a: &mut [u64], rows: usize, cols: usize, p: u64) -> usize {
    let mut rank = 0;
    for col in 0..cols {
        if rank == rows {
            break;
        }
        let Some(pivot) = (rank..rows).find(|&r| a[r * cols + col] != 0) else {
            continue;
        };
        for j in 0..cols {
            a.swap(pivot * cols + j, rank * cols + j);
        }
        let inv = inv_mod(a[rank * cols + col], p);
        for r in rank + 1..rows {
            let factor = mul_mod(a[r * cols + col], inv, p);
            if factor == 0 {
                continue;
            }
            for j in col..cols {
                let sub = mul_mod(factor, a[rank * cols + j], p);
                a[r * cols + j] = sub_mod(a[r * cols + j], sub, p);
            }
        }
        rank += 1;
    }
    rank
}

/// Solves `A x = b` by Gaussian elimination over GF(p).
pub fn solve_linear(a: &GfMatrix, b: &[FieldElement]) -> Result<Vec<FieldElement>, GfError> {
    let n = a.rows;
    if a.cols != n {
        return Err(GfError::Dimension {
            expected: n,
            got: a.cols,
        });
    }
    if b.len() != n {
        return Err(GfError::Dimension {
            expected: n,
            got: b.len(),
        });
    }
    let p = a.field.modulus;
    let w = n + 1;
    let mut aug = vec![0u64; n * w];
    for r in 0..n {
        if b[r].modulus != p {
            return Err(GfError::FieldMismatch(p, b[r].modulus));
        }
        aug[r * w..r * w + n].copy_from_slice(&a.data[r * n..(r + 1) * n]);
        aug[r * w + n] = b[r].value;
    }
    eliminate(&mut aug, n, w, n, p)?;
    Ok((0..n)
        .map(|r| FieldElement {
            value: aug[r * w + n],
            modulus: p,
        })
        .collect())
}
