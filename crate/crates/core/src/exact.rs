//! Exact phase arithmetic.
//!
//! Frequencies are rational numbers `p/q` with big-integer parts, and base
//! points are `f64` values, which are exact dyadic rationals. Phases of the
//! form `{k·x}` and `{m·k·α}` are reduced modulo 1 exactly before any
//! rounding happens, so large multipliers never destroy the low-order bits.

use num_bigint::{BigInt, Sign};
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

/// Largest |frequency| accepted by the fast `i128` phase path.
pub const MAX_FREQUENCY: i128 = 1_i128 << 120;

/// Converts `num/den` to the nearest-ish `f64`, keeping relative accuracy
/// even when both operands exceed the `f64` range.
pub fn big_ratio_to_f64(num: &BigInt, den: &BigInt) -> f64 {
    if num.is_zero() {
        return 0.0;
    }
    assert!(!den.is_zero(), "zero denominator");
    let neg = (num.sign() == Sign::Minus) ^ (den.sign() == Sign::Minus);
    let (mn, en) = mantissa_exp(&num.abs());
    let (md, ed) = mantissa_exp(&den.abs());
    let v = (mn / md) * pow2(en - ed);
    if neg {
        -v
    } else {
        v
    }
}

/// `f64` value of a big integer; saturates at infinity.
pub fn big_to_f64(v: &BigInt) -> f64 {
    big_ratio_to_f64(v, &BigInt::one())
}

fn mantissa_exp(v: &BigInt) -> (f64, i64) {
    let bits = v.bits() as i64;
    if bits <= 64 {
        (v.to_u64().unwrap() as f64, 0)
    } else {
        let sh = bits - 64;
        ((v >> (sh as usize)).to_u64().unwrap() as f64, sh)
    }
}

fn pow2(e: i64) -> f64 {
    if e > 1023 {
        f64::INFINITY
    } else if e < -1074 {
        0.0
    } else if e < -1022 {
        2f64.powi(-1022) * 2f64.powi((e + 1022) as i32)
    } else {
        2f64.powi(e as i32)
    }
}

/// Splits a finite non-negative `f64` into `(m, e)` with `x = m·2^e`.
fn decompose(x: f64) -> (u64, i32) {
    let bits = x.to_bits();
    let exp = ((bits >> 52) & 0x7ff) as i32;
    let frac = bits & ((1u64 << 52) - 1);
    if exp == 0 {
        (frac, -1074)
    } else {
        (frac | (1u64 << 52), exp - 1075)
    }
}

/// Exact `{k·x}` for an integer `k` and a point `x ∈ [0, 1)`; the only
/// rounding is the final conversion of the exact residue to `f64`.
pub fn frac_mul(k: i128, x: f64) -> f64 {
    debug_assert!((0.0..1.0).contains(&x), "x = {x} outside [0,1)");
    if k == 0 || x == 0.0 {
        return 0.0;
    }
    let (m, e) = decompose(x);
    if e >= 0 {
        return 0.0;
    }
    let sh = (-e) as u32;
    let r = if sh < 128 {
        let prod = (k as u128).wrapping_mul(m as u128);
        let mask = (1u128 << sh) - 1;
        (prod & mask) as f64 * pow2(-(sh as i64))
    } else {
        let prod = BigInt::from(k) * BigInt::from(m);
        let modulus = BigInt::one() << (sh as usize);
        big_ratio_to_f64(&prod.mod_floor(&modulus), &modulus)
    };
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// [`frac_mul`] for integers of any size.
pub fn frac_mul_big(k: &BigInt, x: f64) -> f64 {
    if let Some(v) = k.to_i128() {
        return frac_mul(v, x);
    }
    if x == 0.0 {
        return 0.0;
    }
    let (m, e) = decompose(x);
    if e >= 0 {
        return 0.0;
    }
    let modulus = BigInt::one() << ((-e) as usize);
    let r = big_ratio_to_f64(&(k * BigInt::from(m)).mod_floor(&modulus), &modulus);
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// Reduces an arbitrary real to `[0, 1)`.
pub fn wrap01(x: f64) -> f64 {
    let r = x - x.floor();
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// Distance from `x` to the nearest integer.
pub fn circle_norm(x: f64) -> f64 {
    let r = wrap01(x);
    r.min(1.0 - r)
}

/// A rotation number stored as the exact reduced fraction `num/den ∈ [0,1)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rotation {
    #[serde(with = "crate::serde_util::big_dec")]
    num: BigInt,
    #[serde(with = "crate::serde_util::big_dec")]
    den: BigInt,
}

impl Rotation {
    pub fn new(num: BigInt, den: BigInt) -> Self {
        assert!(den.is_positive(), "denominator must be positive");
        let num = num.mod_floor(&den);
        let g = num.gcd(&den);
        let (num, den) = if g.is_zero() || g.is_one() {
            (num, den)
        } else {
            (&num / &g, &den / &g)
        };
        Rotation { num, den }
    }

    pub fn num(&self) -> &BigInt {
        &self.num
    }

    pub fn den(&self) -> &BigInt {
        &self.den
    }

    pub fn to_f64(&self) -> f64 {
        big_ratio_to_f64(&self.num, &self.den)
    }

    /// The inverse rotation `1 − num/den`.
    pub fn inverse(&self) -> Rotation {
        Rotation::new(-self.num.clone(), self.den.clone())
    }

    /// Exact residue `(k·num) mod den ∈ [0, den)`.
    pub fn residue(&self, k: &BigInt) -> BigInt {
        (k * &self.num).mod_floor(&self.den)
    }

    /// `{k·α}` rounded once.
    pub fn frac(&self, k: &BigInt) -> f64 {
        big_ratio_to_f64(&self.residue(k), &self.den)
    }

    /// `‖k·α‖` rounded once; exact zero when `k·α` is an integer.
    pub fn circle_distance(&self, k: &BigInt) -> f64 {
        let r = self.residue(k);
        let other = &self.den - &r;
        big_ratio_to_f64(r.min(other).as_ref_big(), &self.den)
    }

    /// Translates `x ∈ [0,1)` by `k` steps of the rotation.
    pub fn translate(&self, x: f64, k: &BigInt) -> f64 {
        wrap01(x + self.frac(k))
    }
}

trait AsRefBig {
    fn as_ref_big(&self) -> &BigInt;
}

impl AsRefBig for BigInt {
    fn as_ref_big(&self) -> &BigInt {
        self
    }
}

/// Residue of a rational phase `r/den` represented exactly.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Phase {
    pub residue: BigInt,
    pub den: BigInt,
}

impl Phase {
    pub fn is_zero(&self) -> bool {
        self.residue.is_zero()
    }

    /// Value in `[0,1)`.
    pub fn value(&self) -> f64 {
        big_ratio_to_f64(&self.residue, &self.den)
    }

    /// `sin(π·value)`, accurate in relative terms near both 0 and 1.
    pub fn sin_pi(&self) -> f64 {
        let other = &self.den - &self.residue;
        let near = if other < self.residue {
            other
        } else {
            self.residue.clone()
        };
        (std::f64::consts::PI * big_ratio_to_f64(&near, &self.den)).sin()
    }
}

/// Neumaier compensated summation.
#[derive(Clone, Copy, Debug, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratio_keeps_relative_accuracy_for_huge_operands() {
        let den = BigInt::from(3u32) << 2000usize;
        let num = BigInt::from(1u32) << 1999usize;
        assert!((big_ratio_to_f64(&num, &den) - 1.0 / 6.0).abs() < 1e-16);
        assert_eq!(big_ratio_to_f64(&BigInt::from(-1), &BigInt::from(4)), -0.25);
    }

    #[test]
    fn frac_mul_matches_exact_rational() {
        let x = 0.123_456_789_012_345_67_f64;
        let k: i128 = 98_765_432_123_456_789;
        // exact reference via big integers
        let (m, e) = decompose(x);
        let modulus = BigInt::one() << ((-e) as usize);
        let exact = (BigInt::from(k) * BigInt::from(m)).mod_floor(&modulus);
        let want = big_ratio_to_f64(&exact, &modulus);
        assert_eq!(frac_mul(k, x), want);
        assert_eq!(frac_mul(-1, 0.25), 0.75);
        assert_eq!(frac_mul(3, 0.5), 0.5);
    }

    #[test]
    fn rotation_residues_and_distances() {
        let r = Rotation::new(BigInt::from(7), BigInt::from(10));
        assert_eq!(r.residue(&BigInt::from(3)), BigInt::from(1));
        assert!((r.circle_distance(&BigInt::from(3)) - 0.1).abs() < 1e-17);
        assert_eq!(r.circle_distance(&BigInt::from(10)), 0.0);
        assert!((r.inverse().to_f64() - 0.3).abs() < 1e-16);
    }

    #[test]
    fn kahan_beats_naive() {
        let mut k = KahanSum::default();
        k.add(1.0);
        for _ in 0..10 {
            k.add(1e-16);
        }
        assert!((k.value() - (1.0 + 1e-15)).abs() < 1e-17);
    }
}
