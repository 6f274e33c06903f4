//! Interference coordination request messages.
//!
//! Layout, most significant first: `resource_id | priority | hashed_bs_id`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gf::FieldSpec;
use crate::stscode::{CodeError, StsCode};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IcrmError {
    #[error("{field} = {value} does not fit in {bits} bits")]
    FieldRange { field: &'static str, value: u64, bits: u32 },
    #[error("message {0} does not fit the profile width")]
    MessageRange(u64),
    #[error("base station id {0} is not below 512")]
    BsId(u32),
    #[error(transparent)]
    Code(#[from] CodeError),
}

/// Bit widths and the STS code that carries the message.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IcrmProfile {
    pub resource_bits: u32,
    pub priority_bits: u32,
    pub hash_bits: u32,
    /// Field modulus of the `(11, 1)` carrier code.
    pub modulus: u64,
    /// OFDM subcarriers the tones are drawn from.
    pub subcarriers: usize,
}

impl IcrmProfile {
    /// 8-bit message over GF(509) on a 512-subcarrier grid.
    pub const CANONICAL: IcrmProfile = IcrmProfile {
        resource_bits: 2,
        priority_bits: 3,
        hash_bits: 3,
        modulus: 509,
        subcarriers: 512,
    };

    /// 9-bit message over GF(1021) on a 1024-subcarrier grid.
    pub const WIDE: IcrmProfile = IcrmProfile {
        resource_bits: 2,
        priority_bits: 3,
        hash_bits: 4,
        modulus: 1021,
        subcarriers: 1024,
    };

    pub fn width(&self) -> u32 {
        self.resource_bits + self.priority_bits + self.hash_bits
    }

    pub fn code(&self, n: usize) -> Result<StsCode, CodeError> {
        StsCode::new(FieldSpec::new(self.modulus)?, n, 1)
    }
}

impl Default for IcrmProfile {
    fn default() -> Self {
        Self::CANONICAL
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Icrm {
    pub resource_id: u8,
    pub priority: u8,
    pub hashed_bs_id: u16,
}

fn check(field: &'static str, value: u64, bits: u32) -> Result<(), IcrmError> {
    if value >> bits != 0 {
        return Err(IcrmError::FieldRange { field, value, bits });
    }
    Ok(())
}

impl Icrm {
    pub fn pack(&self, profile: &IcrmProfile) -> Result<u64, IcrmError> {
        check("resource_id", self.resource_id as u64, profile.resource_bits)?;
        check("priority", self.priority as u64, profile.priority_bits)?;
        check("hashed_bs_id", self.hashed_bs_id as u64, profile.hash_bits)?;
        Ok(
            ((self.resource_id as u64) << (profile.priority_bits + profile.hash_bits))
                | ((self.priority as u64) << profile.hash_bits)
                | self.hashed_bs_id as u64,
        )
    }

    pub fn unpack(m: u64, profile: &IcrmProfile) -> Result<Self, IcrmError> {
        if m >> profile.width() != 0 {
            return Err(IcrmError::MessageRange(m));
        }
        let mask = |bits: u32| (1u64 << bits) - 1;
        Ok(Icrm {
            resource_id: (m >> (profile.priority_bits + profile.hash_bits) & mask(profile.resource_bits)) as u8,
            priority: (m >> profile.hash_bits & mask(profile.priority_bits)) as u8,
            hashed_bs_id: (m & mask(profile.hash_bits)) as u16,
        })
    }
}

/// Salt that makes the BS-id hash change from frame to frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HashSalt {
    pub frame_number: u32,
}

/// Multiplicative mix of `(bs_id, frame)` folded by XOR down to `out_bits`.
pub fn hash_bs_id(bs_id: u32, salt: HashSalt, out_bits: u32) -> Result<u32, IcrmError> {
    if bs_id >= 512 {
        return Err(IcrmError::BsId(bs_id));
    }
    assert!((1..=32).contains(&out_bits), "out_bits must be in 1..=32");
    let mixed = bs_id
        .wrapping_mul(2_654_435_761)
        .wrapping_add(salt.frame_number.wrapping_mul(40_503));
    if out_bits == 32 {
        return Ok(mixed);
    }
    let mask = (1u32 << out_bits) - 1;
    let mut folded = 0;
    let mut rest = mixed;
    while rest != 0 {
        folded ^= rest & mask;
        rest >>= out_bits;
    }
    Ok(folded)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pack_examples() {
        let p = IcrmProfile::CANONICAL;
        let zero = Icrm {
            resource_id: 0,
            priority: 0,
            hashed_bs_id: 0,
        };
        assert_eq!(zero.pack(&p).unwrap(), 0);
        let ones = Icrm {
            resource_id: 3,
            priority: 7,
            hashed_bs_id: 7,
        };
        assert_eq!(ones.pack(&p).unwrap(), 255);
        let mixed = Icrm {
            resource_id: 2,
            priority: 5,
            hashed_bs_id: 1,
        };
        assert_eq!(mixed.pack(&p).unwrap(), 0b10_101_001);
        assert_eq!(Icrm::unpack(0b10_101_001, &p).unwrap(), mixed);
    }

    #[test]
    fn pack_unpack_bijection() {
        for p in [IcrmProfile::CANONICAL, IcrmProfile::WIDE] {
            for m in 0..1u64 << p.width() {
                let icrm = Icrm::unpack(m, &p).unwrap();
                assert_eq!(icrm.pack(&p).unwrap(), m);
            }
            assert!(Icrm::unpack(1 << p.width(), &p).is_err());
        }
    }

    #[test]
    fn out_of_range_fields() {
        let p = IcrmProfile::CANONICAL;
        let bad = Icrm {
            resource_id: 4,
            priority: 0,
            hashed_bs_id: 0,
        };
        assert!(matches!(
            bad.pack(&p),
            Err(IcrmError::FieldRange {
                field: "resource_id",
                ..
            })
        ));
        let bad = Icrm {
            resource_id: 0,
            priority: 0,
            hashed_bs_id: 8,
        };
        assert!(bad.pack(&p).is_err());
    }

    #[test]
    fn every_message_fits_its_code() {
        for p in [IcrmProfile::CANONICAL, IcrmProfile::WIDE] {
            let code = p.code(11).unwrap();
            let (_, max) = code.message_range().unwrap();
            assert!((1u64 << p.width()) - 1 <= max);
            assert!(p.modulus as usize <= p.subcarriers);
        }
    }

    #[test]
    fn hash_is_deterministic_and_in_range() {
        let salt = HashSalt { frame_number: 77 };
        for bits in [3, 4] {
            for id in 0..512 {
                let h = hash_bs_id(id, salt, bits).unwrap();
                assert_eq!(h, hash_bs_id(id, salt, bits).unwrap());
                assert!(h < 1 << bits);
            }
        }
        assert!(hash_bs_id(512, salt, 3).is_err());
    }

    #[test]
    fn hash_is_roughly_uniform() {
        // chi-squared over all ids and 64 frames; 7 dof, 0.999 quantile ~ 24.3
        let buckets = 8usize;
        let mut counts = vec![0u64; buckets];
        for frame in 0..64 {
            for id in 0..512 {
                counts[hash_bs_id(id, HashSalt { frame_number: frame }, 3).unwrap() as usize] += 1;
            }
        }
        let total: u64 = counts.iter().sum();
        let expected = total as f64 / buckets as f64;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        assert!(chi2 < 24.3, "chi2 = {chi2}, counts = {counts:?}");
    }

    #[test]
    fn collisions_follow_birthday_expectation() {
        // Colliding pairs among n ids in b buckets: C(n, 2) / b on average.
        let (n, bits) = (512u64, 4u32);
        let b = 1u64 << bits;
        let expected = (n * (n - 1) / 2) as f64 / b as f64;
        let mut mean = 0.0;
        let frames = 32;
        for frame in 0..frames {
            let mut counts = vec![0u64; b as usize];
            for id in 0..n as u32 {
                counts[hash_bs_id(id, HashSalt { frame_number: frame }, bits).unwrap() as usize] += 1;
            }
            mean += counts.iter().map(|&c| c * c.saturating_sub(1) / 2).sum::<u64>() as f64;
        }
        mean /= frames as f64;
        assert!((mean / expected - 1.0).abs() < 0.05, "mean {mean}, expected {expected}");
    }

    #[test]
    fn salt_changes_the_hash() {
        let changed = (0..512)
            .filter(|&id| {
                hash_bs_id(id, HashSalt { frame_number: 1 }, 4).unwrap()
                    != hash_bs_id(id, HashSalt { frame_number: 2 }, 4).unwrap()
            })
            .count();
        assert!(changed > 256);
    }

    #[test]
    fn json_has_named_fields() {
        let icrm = Icrm {
            resource_id: 1,
            priority: 6,
            hashed_bs_id: 2,
        };
        let s = serde_json::to_string(&icrm).unwrap();
        assert_eq!(s, r#"{"resource_id":1,"priority":6,"hashed_bs_id":2}"#);
    }
}
