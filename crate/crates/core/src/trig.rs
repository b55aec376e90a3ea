//! Real trigonometric polynomials with integer frequencies.
//!
//! A polynomial is stored as `c₀ + 2·Re Σ_{k>0} cₖ e^{2πikx}`, so the
//! negative half of the spectrum is implied by conjugate symmetry.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use num_bigint::BigInt;
use num_complex::Complex64;
use num_traits::{ToPrimitive, Zero};
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{frac_mul, Rotation, MAX_FREQUENCY};
use crate::birkhoff::geometric_sum;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrigPolynomial {
    pub constant: f64,
    /// Positive frequencies in increasing order.
    #[serde(with = "terms_serde")]
    pub terms: Vec<(i128, Complex64)>,
}

fn cis_turns(t: f64) -> Complex64 {
    let (s, c) = (TAU * t).sin_cos();
    Complex64::new(c, s)
}

impl TrigPolynomial {
    pub fn constant(c: f64) -> Self {
        TrigPolynomial {
            constant: c,
            terms: Vec::new(),
        }
    }

    /// `amplitude·cos(2πqx)`.
    pub fn cosine(q: i128, amplitude: f64) -> Result<Self> {
        Self::from_terms(0.0, vec![(q, Complex64::new(amplitude / 2.0, 0.0))])
    }

    /// Builds from `(k, cₖ)` pairs with `k > 0`; repeated frequencies add.
    pub fn from_terms(constant: f64, terms: Vec<(i128, Complex64)>) -> Result<Self> {
        let mut map: BTreeMap<i128, Complex64> = BTreeMap::new();
        for (k, c) in terms {
            if k <= 0 {
                return Err(Error::InvalidInput(format!("frequency {k} must be positive")));
            }
            if k > MAX_FREQUENCY {
                return Err(Error::FrequencyOverflow(k.to_string()));
            }
            *map.entry(k).or_insert(Complex64::zero()) += c;
        }
        Ok(TrigPolynomial {
            constant,
            terms: map.into_iter().filter(|(_, c)| !c.is_zero()).collect(),
        })
    }

    pub fn is_constant(&self) -> bool {
        self.terms.is_empty()
    }

    /// One past the largest frequency present.
    pub fn degree_bound(&self) -> i128 {
        self.terms.last().map_or(1, |t| t.0 + 1)
    }

    /// Coefficient `cₖ` for any integer `k`.
    pub fn coefficient(&self, k: i128) -> Complex64 {
        if k == 0 {
            return Complex64::new(self.constant, 0.0);
        }
        let c = self
            .terms
            .binary_search_by_key(&k.abs(), |t| t.0)
            .map_or(Complex64::zero(), |i| self.terms[i].1);
        if k < 0 {
            c.conj()
        } else {
            c
        }
    }

    pub fn add(&self, other: &TrigPolynomial) -> TrigPolynomial {
        let mut all = self.terms.clone();
        all.extend_from_slice(&other.terms);
        let mut p = TrigPolynomial::from_terms(self.constant + other.constant, all)
            .expect("frequencies already validated");
        p.terms.retain(|t| !t.1.is_zero());
        p
    }

    pub fn scale(&self, s: f64) -> TrigPolynomial {
        TrigPolynomial {
            constant: self.constant * s,
            terms: self.terms.iter().map(|&(k, c)| (k, c * s)).collect(),
        }
    }

    /// `p(q·x)` as a polynomial in `x`.
    pub fn dilate(&self, q: i128) -> Result<TrigPolynomial> {
        if q <= 0 {
            return Err(Error::InvalidInput("dilation must be positive".into()));
        }
        let mut terms = Vec::with_capacity(self.terms.len());
        for &(k, c) in &self.terms {
            let kq = k
                .checked_mul(q)
                .filter(|v| *v <= MAX_FREQUENCY)
                .ok_or_else(|| Error::FrequencyOverflow(format!("{k}·{q}")))?;
            terms.push((kq, c));
        }
        Ok(TrigPolynomial {
            constant: self.constant,
            terms,
        })
    }

    /// `d/dx`: each coefficient picks up `i2πk`; the constant drops.
    pub fn derivative(&self) -> TrigPolynomial {
        TrigPolynomial {
            constant: 0.0,
            terms: self
                .terms
                .iter()
                .map(|&(k, c)| (k, c * Complex64::new(0.0, TAU * k as f64)))
                .collect(),
        }
    }

    pub fn nth_derivative(&self, r: u32) -> TrigPolynomial {
        (0..r).fold(self.clone(), |p, _| p.derivative())
    }

    /// `Σ|cₖ|` over the full two-sided spectrum; bounds the sup norm.
    pub fn l1_norm(&self) -> f64 {
        self.constant.abs() + 2.0 * self.terms.iter().map(|t| t.1.norm()).sum::<f64>()
    }

    /// Evaluates at `x ∈ [0,1)` with exact phase reduction.
    ///
    /// Runs of equally spaced frequencies are advanced by multiplication,
    /// re-anchored to an exact phase every 32 terms.
    pub fn eval(&self, x: f64) -> f64 {
        let mut acc = 0.0;
        let mut comp = 0.0;
        let mut prev: Option<(i128, Complex64)> = None;
        let mut step: Option<(i128, Complex64)> = None;
        let mut since_anchor = 0;
        for &(k, c) in &self.terms {
            let e = match (prev, step) {
                (Some((pk, pe)), Some((d, de))) if k - pk == d && since_anchor < 32 => {
                    since_anchor += 1;
                    pe * de
                }
                (Some((pk, _)), _) => {
                    let d = k - pk;
                    step = Some((d, cis_turns(frac_mul(d, x))));
                    since_anchor = 0;
                    cis_turns(frac_mul(k, x))
                }
                _ => cis_turns(frac_mul(k, x)),
            };
            prev = Some((k, e));
            let v = c.re * e.re - c.im * e.im;
            let t = acc + v;
            if acc.abs() >= v.abs() {
                comp += (acc - t) + v;
            } else {
                comp += (v - t) + acc;
            }
            acc = t;
        }
        self.constant + 2.0 * (acc + comp)
    }

    /// Absolute sum of the evaluated terms, the scale of rounding error.
    pub fn eval_magnitude(&self) -> f64 {
        self.l1_norm()
    }

    /// Values on the grid `x = (j + shift)/g`, `j < g`, via one inverse FFT.
    ///
    /// Frequencies fold modulo `g`; the exact phase `{k·shift/g}` is applied
    /// per coefficient before folding, so any integer frequency is allowed.
    pub fn eval_grid(&self, g: usize, shift: f64) -> Vec<f64> {
        let mut buf = vec![Complex64::zero(); g];
        let gi = g as i128;
        for &(k, c) in &self.terms {
            let ph = if shift == 0.0 {
                Complex64::new(1.0, 0.0)
            } else {
                // {k·shift/g} with k reduced first keeps the product exact
                // enough: shift/g carries the remaining fraction
                let kr = k.rem_euclid(gi);
                let whole = (k - kr) / gi;
                let t = frac_mul(whole, crate::exact::wrap01(shift)) + kr as f64 * shift / g as f64;
                cis_turns(t)
            };
            buf[(k.rem_euclid(gi)) as usize] += c * ph;
        }
        let mut planner = FftPlanner::<f64>::new();
        let fft = planner.plan_fft_inverse(g);
        fft.process(&mut buf);
        buf.iter().map(|z| self.constant + 2.0 * z.re).collect()
    }

    /// `p(x + mα)` as a polynomial, with exact phases.
    pub fn translate(&self, rot: &Rotation, m: &BigInt) -> TrigPolynomial {
        TrigPolynomial {
            constant: self.constant,
            terms: self
                .terms
                .iter()
                .map(|&(k, c)| (k, c * cis_turns(rot.frac(&(m * BigInt::from(k))))))
                .collect(),
        }
    }

    /// The Birkhoff transform `S_m p(x) = Σ_{l<m} p(x + lα)` as a polynomial.
    pub fn birkhoff(&self, rot: &Rotation, m: &BigInt) -> TrigPolynomial {
        let mf = m.to_f64().unwrap_or(f64::INFINITY);
        TrigPolynomial {
            constant: self.constant * mf,
            terms: self
                .terms
                .iter()
                .map(|&(k, c)| (k, c * geometric_sum(m, &BigInt::from(k), rot).value))
                .filter(|t| !t.1.is_zero())
                .collect(),
        }
    }
}

mod terms_serde {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(terms: &[(i128, Complex64)], s: S) -> std::result::Result<S::Ok, S::Error> {
        let v: Vec<(String, [String; 2])> = terms
            .iter()
            .map(|(k, c)| (k.to_string(), [format!("{:e}", c.re), format!("{:e}", c.im)]))
            .collect();
        v.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<(i128, Complex64)>, D::Error> {
        let v: Vec<(String, [String; 2])> = Vec::deserialize(d)?;
        v.into_iter()
            .map(|(k, [re, im])| {
                let k: i128 = k.parse().map_err(serde::de::Error::custom)?;
                let re: f64 = re.parse().map_err(serde::de::Error::custom)?;
                let im: f64 = im.parse().map_err(serde::de::Error::custom)?;
                Ok((k, Complex64::new(re, im)))
            })
            .collect()
    }
}

/// Truncates a 1-periodic function to `|k| < degree` from `sample_count`
/// equispaced samples.
///
/// Returns the polynomial and a sup-norm bound for the discarded part: the
/// sum of computed coefficient magnitudes from `degree` to the Nyquist
/// index, with the last octave's decay extrapolated geometrically.
pub fn fourier_truncate<F: Fn(f64) -> f64>(f: F, degree: usize, sample_count: usize) -> Result<(TrigPolynomial, f64)> {
    if degree < 1 {
        return Err(Error::InvalidInput("degree must be >= 1".into()));
    }
    if sample_count < 4 * degree {
        return Err(Error::DegreeTooLarge {
            degree: degree.to_string(),
            samples: sample_count,
        });
    }
    let m = sample_count;
    let mut buf: Vec<Complex64> = (0..m).map(|j| Complex64::new(f(j as f64 / m as f64), 0.0)).collect();
    let mut planner = FftPlanner::<f64>::new();
    planner.plan_fft_forward(m).process(&mut buf);
    let inv = 1.0 / m as f64;
    let coef = |k: usize| buf[k] * inv;
    let constant = coef(0).re;
    let terms: Vec<(i128, Complex64)> = (1..degree).map(|k| (k as i128, coef(k))).filter(|t| !t.1.is_zero()).collect();
    let nyq = m / 2;
    let tail: f64 = (degree..nyq).map(|k| coef(k).norm()).sum::<f64>() * 2.0;
    // geometric extrapolation beyond Nyquist from the decay over the last octave
    let hi = (nyq / 2..nyq).map(|k| coef(k).norm()).sum::<f64>();
    let lo = (nyq / 4..nyq / 2).map(|k| coef(k).norm()).sum::<f64>();
    let extra = if lo > 0.0 && hi < lo {
        let r = hi / lo;
        2.0 * hi * r / (1.0 - r)
    } else {
        2.0 * hi
    };
    Ok((TrigPolynomial { constant, terms }, tail + extra))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cosine_layer_coefficients() {
        let p = TrigPolynomial::cosine(5, 0.3).unwrap();
        assert_eq!(p.coefficient(5), Complex64::new(0.15, 0.0));
        assert_eq!(p.coefficient(-5), Complex64::new(0.15, 0.0));
        assert_eq!(p.coefficient(0).re, 0.0);
        assert!((p.l1_norm() - 0.3).abs() < 1e-16);
        assert!((p.eval(0.0) - 0.3).abs() < 1e-16);
    }

    #[test]
    fn truncating_a_cosine_recovers_it() {
        let (p, err) = fourier_truncate(|x| (TAU * 3.0 * x).cos(), 8, 64).unwrap();
        assert!((p.coefficient(3).re - 0.5).abs() < 1e-15);
        assert!(p.terms.iter().filter(|t| t.0 != 3).all(|t| t.1.norm() < 1e-15));
        assert!(err < 1e-14);
        let (c, _) = fourier_truncate(|_| 1.0, 4, 16).unwrap();
        assert!((c.constant - 1.0).abs() < 1e-15);
        assert!(c.terms.iter().all(|t| t.1.norm() < 1e-16));
        assert!(fourier_truncate(|_| 1.0, 4, 15).is_err());
    }

    #[test]
    fn grid_evaluation_matches_pointwise() {
        let p = TrigPolynomial::from_terms(
            0.2,
            vec![(3, Complex64::new(0.1, -0.2)), (70, Complex64::new(0.05, 0.01)), (1_000_003, Complex64::new(0.0, 0.3))],
        )
        .unwrap();
        let g = 64;
        for shift in [0.0, 0.37] {
            let v = p.eval_grid(g, shift);
            for (j, vj) in v.iter().enumerate() {
                let x = (j as f64 + shift) / g as f64;
                assert!((vj - p.eval(x)).abs() < 1e-9, "j={j} shift={shift}");
            }
        }
    }

    #[test]
    fn serde_round_trip() {
        let p = TrigPolynomial::from_terms(0.0, vec![(7, Complex64::new(1.0 / 3.0, -2e-300))]).unwrap();
        let s = serde_json::to_string(&p).unwrap();
        let back: TrigPolynomial = serde_json::from_str(&s).unwrap();
        assert_eq!(p, back);
    }

    proptest! {
        #[test]
        fn derivative_matches_centered_differences(
            coeffs in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..6),
            x in 0.01f64..0.99,
        ) {
            let terms = coeffs.iter().enumerate().map(|(i, &(a, b))| ((i + 1) as i128, Complex64::new(a, b))).collect();
            let p = TrigPolynomial::from_terms(0.0, terms).unwrap();
            let d = p.derivative();
            let h = 1e-4;
            let fd = (p.eval(x + h) - p.eval(x - h)) / (2.0 * h);
            // third derivative bound Σ|c|(2πk)³ times h²/6
            let c3: f64 = p.terms.iter().map(|t| 2.0 * t.1.norm() * (TAU * t.0 as f64).powi(3)).sum();
            prop_assert!((fd - d.eval(x)).abs() <= c3 * h * h / 6.0 + 1e-9);
        }
    }
}
