//! Continued fractions built from explicit partial-quotient lists.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{big_ratio_to_f64, Rotation};
use crate::serde_util::{big_dec, big_dec_vec};

/// Partial quotients `a₀, a₁, …`; `a₀ ≥ 0` and `aᵢ ≥ 1` for `i ≥ 1`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "QuotientList", into = "QuotientList")]
pub struct PartialQuotients {
    a: Vec<BigInt>,
}

/// Wire form of [`PartialQuotients`], checked on the way in.
#[derive(Serialize, Deserialize)]
struct QuotientList(#[serde(with = "big_dec_vec")] Vec<BigInt>);

impl TryFrom<QuotientList> for PartialQuotients {
    type Error = Error;

    fn try_from(v: QuotientList) -> Result<Self> {
        PartialQuotients::new(v.0)
    }
}

impl From<PartialQuotients> for QuotientList {
    fn from(v: PartialQuotients) -> Self {
        QuotientList(v.a)
    }
}

impl PartialQuotients {
    pub fn new(a: Vec<BigInt>) -> Result<Self> {
        if a.is_empty() {
            return Err(Error::InvalidInput("empty quotient list".into()));
        }
        if a[0].is_negative() {
            return Err(Error::InvalidInput("a0 must be non-negative".into()));
        }
        if let Some(i) = a.iter().skip(1).position(|v| !v.is_positive()) {
            return Err(Error::InvalidInput(format!("a{} must be >= 1", i + 1)));
        }
        Ok(PartialQuotients { a })
    }

    pub fn from_u64(a: &[u64]) -> Result<Self> {
        Self::new(a.iter().map(|&v| BigInt::from(v)).collect())
    }

    pub fn as_slice(&self) -> &[BigInt] {
        &self.a
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    /// Exact value of the finite continued fraction, evaluated from the tail.
    pub fn value(&self) -> BigRational {
        let mut it = self.a.iter().rev();
        let mut v = BigRational::from_integer(it.next().unwrap().clone());
        for ai in it {
            v = BigRational::from_integer(ai.clone()) + v.recip();
        }
        v
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Convergent {
    pub n: usize,
    #[serde(with = "big_dec")]
    pub p: BigInt,
    #[serde(with = "big_dec")]
    pub q: BigInt,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvergentTable {
    pub rows: Vec<Convergent>,
}

pub fn convergents(a: &PartialQuotients) -> ConvergentTable {
    let a = a.as_slice();
    let mut rows = Vec::with_capacity(a.len());
    let (mut p2, mut q2) = (BigInt::zero(), BigInt::one());
    let (mut p1, mut q1) = (BigInt::one(), BigInt::zero());
    for (n, an) in a.iter().enumerate() {
        let p = an * &p1 + &p2;
        let q = an * &q1 + &q2;
        rows.push(Convergent {
            n,
            p: p.clone(),
            q: q.clone(),
        });
        p2 = std::mem::replace(&mut p1, p);
        q2 = std::mem::replace(&mut q1, q);
    }
    ConvergentTable { rows }
}

impl ConvergentTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn q(&self, n: usize) -> &BigInt {
        &self.rows[n].q
    }

    pub fn p(&self, n: usize) -> &BigInt {
        &self.rows[n].p
    }

    pub fn last(&self) -> &Convergent {
        self.rows.last().unwrap()
    }

    pub fn value(&self) -> BigRational {
        let c = self.last();
        BigRational::new(c.p.clone(), c.q.clone())
    }

    /// `p_{n-1} q_n - p_n q_{n-1}` for `n ≥ 1`.
    pub fn determinant(&self, n: usize) -> BigInt {
        &self.rows[n - 1].p * &self.rows[n].q - &self.rows[n].p * &self.rows[n - 1].q
    }
}

/// The bracket `1/(qₙ(qₙ+qₙ₊₁)) ≤ (−1)ⁿ(α − pₙ/qₙ) ≤ 1/(qₙqₙ₊₁)`.
pub fn two_sided_error(table: &ConvergentTable, n: usize) -> Result<(BigRational, BigRational)> {
    if n + 1 >= table.len() {
        return Err(Error::OutOfRange {
            index: n + 1,
            len: table.len(),
        });
    }
    let qn = table.q(n);
    let qn1 = table.q(n + 1);
    let lower = BigRational::new(BigInt::one(), qn * (qn + qn1));
    let upper = BigRational::new(BigInt::one(), qn * qn1);
    Ok((lower, upper))
}

/// Checks the bracket exactly against the full value of the table.
pub fn sandwich_holds(table: &ConvergentTable, n: usize) -> Result<bool> {
    let (lo, hi) = two_sided_error(table, n)?;
    let alpha = table.value();
    let approx = BigRational::new(table.p(n).clone(), table.q(n).clone());
    let mut diff = alpha - approx;
    if n % 2 == 1 {
        diff = -diff;
    }
    // the last quotient being 1 allows equality at the tail
    Ok(lo <= diff && diff <= hi)
}

/// Exact `‖x‖` for a rational.
pub fn rational_circle_norm(x: &BigRational) -> BigRational {
    let f = x - x.floor();
    let g = BigRational::one() - &f;
    if f < g {
        f
    } else {
        g
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BestApproxReport {
    pub checked_levels: usize,
    pub checked_k: u64,
    pub violations: Vec<(usize, u64)>,
    pub smallest_margin: f64,
}

/// Verifies `‖q_{n−1}α‖ < ‖kα‖` for every `k < qₙ`, `k ≠ q_{n−1}`, `k ≤ k_max`.
///
/// The check runs against the exact rational of the table, so the only
/// levels considered are those followed by at least one more convergent.
pub fn best_approx_check(table: &ConvergentTable, k_max: u64) -> Result<BestApproxReport> {
    let qmax = table.last().q.clone();
    if BigInt::from(k_max) > qmax {
        return Err(Error::Precondition(format!(
            "k_max {k_max} exceeds largest denominator {qmax}"
        )));
    }
    let c = table.last();
    let rot = Rotation::new(c.p.clone(), c.q.clone());
    let den = rot.den().clone();
    let dist = |k: u64| -> BigInt {
        let r = rot.residue(&BigInt::from(k));
        let o = &den - &r;
        r.min(o)
    };
    let mut report = BestApproxReport {
        smallest_margin: f64::INFINITY,
        ..Default::default()
    };
    for n in 1..table.len().saturating_sub(1) {
        let qprev = table.q(n - 1).clone();
        let qn = table.q(n);
        let Some(qp) = qprev.to_u64() else { break };
        if qp > k_max {
            break;
        }
        let upper = qn.to_u64().map_or(k_max, |v| v.saturating_sub(1).min(k_max));
        let base = dist(qp);
        report.checked_levels += 1;
        for k in 1..=upper {
            if k == qp {
                continue;
            }
            report.checked_k += 1;
            let d = dist(k);
            if d <= base {
                report.violations.push((n, k));
            } else {
                let m = big_ratio_to_f64(&(d - &base), &den);
                report.smallest_margin = report.smallest_margin.min(m);
            }
        }
    }
    Ok(report)
}

/// `‖kα‖` for the exact rational surrogate, with its error bound (the
/// rounding of one division, relative 2⁻⁵³).
pub fn circle_distance(k: &BigInt, alpha: &Rotation) -> (f64, f64) {
    let v = alpha.circle_distance(k);
    (v, v * f64::EPSILON)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GrowthSchedule {
    /// `⌈e^{q⁵}⌉`; only evaluable for tiny `q`.
    PaperLiteral,
    /// `q³`
    Cubic,
    /// `q^k`
    Power { k: u32 },
    /// `⌈e^q⌉`, refused once it would exceed `2^cap_bits`.
    ExpMild { cap_bits: u64 },
}

impl GrowthSchedule {
    pub fn parse(spec: &str) -> Result<Self> {
        let (name, arg) = match spec.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (spec, None),
        };
        let bad = || Error::InvalidInput(format!("bad schedule spec `{spec}`"));
        match (name, arg) {
            ("paper-literal", None) => Ok(Self::PaperLiteral),
            ("cubic", None) => Ok(Self::Cubic),
            ("power", Some(a)) => {
                let k: u32 = a.parse().map_err(|_| bad())?;
                if k < 2 {
                    return Err(bad());
                }
                Ok(Self::Power { k })
            }
            ("exp-mild", None) => Ok(Self::ExpMild { cap_bits: 4096 }),
            ("exp-mild", Some(a)) => Ok(Self::ExpMild {
                cap_bits: a.parse().map_err(|_| bad())?,
            }),
            _ => Err(bad()),
        }
    }

    pub fn name(&self) -> String {
        match self {
            Self::PaperLiteral => "paper-literal".into(),
            Self::Cubic => "cubic".into(),
            Self::Power { k } => format!("power:{k}"),
            Self::ExpMild { cap_bits } => format!("exp-mild:{cap_bits}"),
        }
    }

    /// Minimum admissible next denominator after `q`.
    pub fn next_min(&self, q: &BigInt, budget_bits: u64) -> Result<BigInt> {
        let overflow = |bits: u64| Error::ScheduleOverflow {
            bits,
            budget: budget_bits,
        };
        match self {
            Self::Cubic => Self::checked_pow(q, 3, budget_bits),
            Self::Power { k } => Self::checked_pow(q, *k, budget_bits),
            Self::PaperLiteral => {
                let qf = q.to_f64().unwrap_or(f64::INFINITY);
                let exponent = qf.powi(5);
                exp_ceil(exponent, budget_bits).ok_or_else(|| overflow(bits_of_exp(exponent)))
            }
            Self::ExpMild { cap_bits } => {
                let qf = q.to_f64().unwrap_or(f64::INFINITY);
                let cap = (*cap_bits).min(budget_bits);
                exp_ceil(qf, cap).ok_or_else(|| overflow(bits_of_exp(qf)))
            }
        }
    }

    fn checked_pow(q: &BigInt, k: u32, budget_bits: u64) -> Result<BigInt> {
        let bits = q.bits() * k as u64;
        if bits > budget_bits {
            return Err(Error::ScheduleOverflow {
                bits,
                budget: budget_bits,
            });
        }
        Ok(num_traits::pow(q.clone(), k as usize))
    }
}

fn bits_of_exp(x: f64) -> u64 {
    (x / std::f64::consts::LN_2).ceil().min(u64::MAX as f64) as u64
}

/// `⌈e^x⌉` as a big integer, `None` above `2^budget_bits`.
///
/// The result is exact to about 50 significant bits; the ceiling is taken
/// after rounding the mantissa up, so the returned value never falls below
/// the true `e^x`.
fn exp_ceil(x: f64, budget_bits: u64) -> Option<BigInt> {
    let bits = bits_of_exp(x);
    if !x.is_finite() || bits > budget_bits {
        return None;
    }
    if x < 700.0 {
        let v = x.exp();
        let up = v * (1.0 + 4.0 * f64::EPSILON);
        return Some(BigInt::from(up.ceil() as u128).max(BigInt::one()));
    }
    let e2 = x / std::f64::consts::LN_2;
    let whole = e2.floor();
    let frac = e2 - whole;
    let mant = 2f64.powf(frac) * (1.0 + 1e-12);
    let m = (mant * 2f64.powi(52)).ceil() as u64;
    Some(BigInt::from(m) << (whole as usize).saturating_sub(52))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyPair {
    pub alpha: PartialQuotients,
    pub alpha_table: ConvergentTable,
    pub alpha_prime: PartialQuotients,
    pub alpha_prime_table: ConvergentTable,
    pub schedule: GrowthSchedule,
    /// Table row of `q_1`, `q'_1`; level `j` lives at `offset + j - 1`.
    pub alpha_offset: usize,
    pub alpha_prime_offset: usize,
    pub levels: usize,
    pub value_precision_bits: u64,
}

impl FrequencyPair {
    /// Denominator `q_j` for level `j ≥ 1`; `j = levels + 1` is the tail.
    pub fn q(&self, j: usize) -> &BigInt {
        self.alpha_table.q(self.alpha_offset + j - 1)
    }

    pub fn q_prime(&self, j: usize) -> &BigInt {
        self.alpha_prime_table.q(self.alpha_prime_offset + j - 1)
    }

    pub fn rotation(&self) -> Rotation {
        let c = self.alpha_table.last();
        Rotation::new(c.p.clone(), c.q.clone())
    }

    pub fn rotation_prime(&self) -> Rotation {
        let c = self.alpha_prime_table.last();
        Rotation::new(c.p.clone(), c.q.clone())
    }

    /// Recurrence time `tⱼ = qⱼq′ⱼ`.
    pub fn recurrence_time(&self, j: usize) -> BigInt {
        self.q(j) * self.q_prime(j)
    }

    /// Re-checks the interlacing inequalities with exact integers.
    pub fn interlacing_holds(&self, budget_bits: u64) -> Result<bool> {
        for j in 1..=self.levels {
            let gq = self.schedule.next_min(self.q(j), budget_bits)?;
            if self.q_prime(j) < &gq {
                return Ok(false);
            }
            let gqp = self.schedule.next_min(self.q_prime(j), budget_bits)?;
            if self.q(j + 1) < &gqp {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

/// Extends both quotient lists greedily so that `q'ⱼ ≥ g(qⱼ)` and
/// `qⱼ₊₁ ≥ g(q'ⱼ)` for `j = 1..=levels`, plus one tail level.
///
/// `q_1` is the last denominator of the `alpha` seeds; the `alpha_prime`
/// seeds only fix the start of the second expansion.
pub fn design_pair(
    schedule: &GrowthSchedule,
    levels: usize,
    seeds: (&PartialQuotients, &PartialQuotients),
    budget_bits: u64,
) -> Result<FrequencyPair> {
    if levels == 0 {
        return Err(Error::InvalidInput("levels must be >= 1".into()));
    }
    let mut a = seeds.0.as_slice().to_vec();
    let mut b = seeds.1.as_slice().to_vec();
    let ta = convergents(seeds.0);
    let tb = convergents(seeds.1);
    let (mut qa1, mut qa0) = (ta.last().q.clone(), prev_q(&ta));
    let (mut qb1, mut qb0) = (tb.last().q.clone(), prev_q(&tb));
    let alpha_offset = a.len() - 1;
    // one quotient appended to the alpha' list gives q'_1
    let alpha_prime_offset = b.len();
    let append = |list: &mut Vec<BigInt>, q1: &mut BigInt, q0: &mut BigInt, target: &BigInt| {
        let an = target.div_ceil(q1).max(BigInt::one());
        let next = &an * &*q1 + &*q0;
        list.push(an);
        *q0 = std::mem::replace(q1, next);
    };
    for _ in 0..=levels {
        let g = schedule.next_min(&qa1, budget_bits)?;
        append(&mut b, &mut qb1, &mut qb0, &g);
        let g = schedule.next_min(&qb1, budget_bits)?;
        append(&mut a, &mut qa1, &mut qa0, &g);
    }
    let alpha = PartialQuotients::new(a)?;
    let alpha_prime = PartialQuotients::new(b)?;
    let alpha_table = convergents(&alpha);
    let alpha_prime_table = convergents(&alpha_prime);
    let value_precision_bits = alpha_table.last().q.bits().max(alpha_prime_table.last().q.bits()) * 2;
    Ok(FrequencyPair {
        alpha,
        alpha_table,
        alpha_prime,
        alpha_prime_table,
        schedule: schedule.clone(),
        alpha_offset,
        alpha_prime_offset,
        levels,
        value_precision_bits,
    })
}

fn prev_q(t: &ConvergentTable) -> BigInt {
    if t.len() >= 2 {
        t.q(t.len() - 2).clone()
    } else {
        BigInt::zero()
    }
}
