//! Birkhoff sums over the translation `R_{α,α′}` in closed form and by
//! direct summation.

use std::f64::consts::PI;

use num_bigint::BigInt;
use num_complex::Complex64;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ceiling::CeilingFunction;
use crate::cfrac::FrequencyPair;
use crate::error::{Error, Result};
use crate::exact::{big_ratio_to_f64, big_to_f64, wrap01, KahanSum, Phase, Rotation};
use crate::serde_util::{big_dec, f64_dec};
use crate::tolerance::ToleranceSchema;
use crate::trig::TrigPolynomial;

/// The pair of rotations `(α, α′)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Translation {
    pub alpha: Rotation,
    pub alpha_prime: Rotation,
}

impl Translation {
    pub fn from_pair(pair: &FrequencyPair) -> Self {
        Translation {
            alpha: pair.rotation(),
            alpha_prime: pair.rotation_prime(),
        }
    }

    pub fn inverse(&self) -> Self {
        Translation {
            alpha: self.alpha.inverse(),
            alpha_prime: self.alpha_prime.inverse(),
        }
    }

    /// `z + k(α, α′)`.
    pub fn apply(&self, x: f64, y: f64, k: &BigInt) -> (f64, f64) {
        (self.alpha.translate(x, k), self.alpha_prime.translate(y, k))
    }

    pub fn rotation(&self, axis: Axis) -> &Rotation {
        match axis {
            Axis::X => &self.alpha,
            Axis::Y => &self.alpha_prime,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
}

impl std::str::FromStr for Axis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "x" => Ok(Axis::X),
            "y" => Ok(Axis::Y),
            _ => Err(Error::InvalidInput(format!("axis `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum GeometricMethod {
    Resonant,
    Closed,
}

/// `Y(m,k) = Σ_{l<m} e^{2πi·lkα}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometricFactor {
    pub value: Complex64,
    pub error_bound: f64,
    pub method: GeometricMethod,
}

/// Closed form `e^{iπ(sₘ−s₁)}·sin(πsₘ)/sin(πs₁)` with `s₁ = {kα}` and
/// `sₘ = {mkα}` taken from exact residues. Both sines are relative-accurate,
/// so near-resonant factors need no special handling.
pub fn geometric_sum(m: &BigInt, k: &BigInt, rot: &Rotation) -> GeometricFactor {
    let mf = big_to_f64(m);
    if m.is_zero() {
        return GeometricFactor {
            value: Complex64::zero(),
            error_bound: 0.0,
            method: GeometricMethod::Closed,
        };
    }
    let den = rot.den();
    let r1 = rot.residue(k);
    if r1.is_zero() {
        return GeometricFactor {
            value: Complex64::new(mf, 0.0),
            error_bound: mf * f64::EPSILON,
            method: GeometricMethod::Resonant,
        };
    }
    let s1 = Phase {
        residue: r1.clone(),
        den: den.clone(),
    };
    let sin1 = s1.sin_pi();
    let rm = (m * &r1).mod_floor(den);
    let sm = Phase {
        residue: rm,
        den: den.clone(),
    };
    let mag = sm.sin_pi() / sin1;
    let ang = PI * (sm.value() - s1.value());
    let mut value = Complex64::from_polar(mag, ang);
    if value.norm() > mf {
        value *= mf / value.norm();
    }
    GeometricFactor {
        value,
        error_bound: 16.0 * f64::EPSILON * value.norm().max(1.0),
        method: GeometricMethod::Closed,
    }
}

/// A Birkhoff sum of a one-variable polynomial along one axis.
#[derive(Clone, Debug)]
pub struct BirkhoffQuery<'a> {
    pub poly: &'a TrigPolynomial,
    pub axis: Axis,
    pub m: BigInt,
    pub x: f64,
    pub y: f64,
}

impl BirkhoffQuery<'_> {
    fn coord(&self) -> f64 {
        match self.axis {
            Axis::X => self.x,
            Axis::Y => self.y,
        }
    }
}

/// `S_m f` and `S_m f′` at the query point.
pub fn birkhoff_closed(q: &BirkhoffQuery, tr: &Translation) -> Result<(f64, f64)> {
    if q.m.is_negative() {
        return Err(Error::InvalidInput("m must be non-negative".into()));
    }
    let s = q.poly.birkhoff(tr.rotation(q.axis), &q.m);
    let c = q.coord();
    Ok((s.eval(c), s.derivative().eval(c)))
}

/// Term-by-term `Σ_{l<m} f(z + lα)`, with orbit residues accumulated
/// exactly and compared against a fresh reduction every `stride_check`
/// steps.
pub fn birkhoff_direct(q: &BirkhoffQuery, tr: &Translation, budget: u64, stride_check: u64) -> Result<f64> {
    let m = q
        .m
        .to_u64()
        .filter(|v| *v <= budget)
        .ok_or_else(|| Error::Budget(format!("m = {} exceeds direct budget {budget}", q.m)))?;
    let rot = tr.rotation(q.axis);
    let den = rot.den();
    let step = rot.num();
    let c = q.coord();
    let mut r = BigInt::zero();
    let mut acc = KahanSum::default();
    for l in 0..m {
        if stride_check > 0 && l % stride_check == 0 {
            debug_assert_eq!(r, rot.residue(&BigInt::from(l)));
        }
        let pt = wrap01(c + big_ratio_to_f64(&r, den));
        acc.add(q.poly.eval(pt));
        r += step;
        if &r >= den {
            r -= den;
        }
    }
    Ok(acc.value())
}

/// `S_m(φ − 1) = S_m X + S_m Y` as two polynomials.
#[derive(Clone, Debug)]
pub struct CeilingBirkhoff {
    pub m: BigInt,
    pub x: TrigPolynomial,
    pub y: TrigPolynomial,
}

impl CeilingBirkhoff {
    pub fn new(ceiling: &CeilingFunction, tr: &Translation, m: &BigInt) -> Self {
        CeilingBirkhoff {
            m: m.clone(),
            x: ceiling.x_total.birkhoff(&tr.alpha, m),
            y: ceiling.y_total.birkhoff(&tr.alpha_prime, m),
        }
    }

    /// `S_mφ(x,y) − m`.
    pub fn deviation(&self, x: f64, y: f64) -> f64 {
        self.x.eval(x) + self.y.eval(y)
    }

    /// Scale of rounding error in [`Self::deviation`].
    pub fn magnitude(&self) -> f64 {
        self.x.l1_norm() + self.y.l1_norm()
    }
}

/// Direct `S_m(φ − 1)(z)`.
pub fn ceiling_deviation_direct(ceiling: &CeilingFunction, tr: &Translation, x: f64, y: f64, m: u64) -> f64 {
    let (mut rx, mut ry) = (BigInt::zero(), BigInt::zero());
    let (dx, dy) = (tr.alpha.den(), tr.alpha_prime.den());
    let mut acc = KahanSum::default();
    for _ in 0..m {
        let px = wrap01(x + big_ratio_to_f64(&rx, dx));
        let py = wrap01(y + big_ratio_to_f64(&ry, dy));
        acc.add(ceiling.x_total.eval(px));
        acc.add(ceiling.y_total.eval(py));
        rx += tr.alpha.num();
        if &rx >= dx {
            rx -= dx;
        }
        ry += tr.alpha_prime.num();
        if &ry >= dy {
            ry -= dy;
        }
    }
    acc.value()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StretchEntry {
    pub x: f64,
    pub y: f64,
    /// `{qₙx}` or `{q′ₙy}`.
    pub u: f64,
    pub good: bool,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StretchProfile {
    pub level: usize,
    pub n: u32,
    pub axis: Axis,
    #[serde(with = "big_dec")]
    pub m: BigInt,
    pub in_window: bool,
    #[serde(with = "f64_dec")]
    pub window_lo: f64,
    #[serde(with = "f64_dec")]
    pub window_hi: f64,
    pub entries: Vec<StretchEntry>,
    /// Fraction of good-set entries at or above threshold; `None` when the
    /// good set misses the grid.
    pub pass_fraction: Option<f64>,
}

/// Good set of the stretch estimate in the rescaled coordinate.
///
/// Along `x`: `|u − j/4| > 3/n` for all `j`. Along `y`: `u ∈ [3/n, ½ − 2/n]
/// ∪ [½ + 3/n, 1 − 2/n]`.
pub fn in_good_set(axis: Axis, n: u32, u: f64) -> bool {
    let n = n as f64;
    match axis {
        Axis::X => (0..=4).all(|j| (u - j as f64 / 4.0).abs() > 3.0 / n),
        Axis::Y => (3.0 / n..=0.5 - 2.0 / n).contains(&u) || (0.5 + 3.0 / n..=1.0 - 2.0 / n).contains(&u),
    }
}

/// `|D S_m φ|` on a grid of the level-`j` axis variable, against
/// `m·A(q)·q/n`.
pub fn stretch_profile(
    ceiling: &CeilingFunction,
    pair: &FrequencyPair,
    tr: &Translation,
    level: usize,
    m: &BigInt,
    axis: Axis,
    grid: usize,
    tol: &ToleranceSchema,
) -> Result<StretchProfile> {
    if level == 0 || level > ceiling.levels() {
        return Err(Error::Level(format!("level {level} not built")));
    }
    let n = ceiling.x_layers[level - 1].n;
    let amp = &ceiling.amplitude;
    let (q, lo_arg, hi_arg) = match axis {
        Axis::X => (pair.q(level), pair.q(level), pair.q_prime(level)),
        Axis::Y => (pair.q_prime(level), pair.q_prime(level), pair.q(level + 1)),
    };
    let window_lo = tol.window_c1 * (-2.0 * amp.ln_amplitude(lo_arg)).exp();
    let window_hi = tol.window_c2 * (-2.0 * amp.ln_amplitude(hi_arg)).exp();
    let mf = big_to_f64(m);
    let in_window = m.is_positive() && mf >= window_lo && mf <= window_hi;
    let qf = big_to_f64(q);
    let threshold = mf * amp.amplitude(q) * qf / n as f64;
    let deriv = match axis {
        Axis::X => ceiling.x_total.derivative().birkhoff(&tr.alpha, m),
        Axis::Y => ceiling.y_total.derivative().birkhoff(&tr.alpha_prime, m),
    };
    let qi = q.to_i128().ok_or_else(|| Error::FrequencyOverflow(q.to_string()))?;
    let entries: Vec<StretchEntry> = (0..grid)
        .into_par_iter()
        .map(|i| {
            let u = (i as f64 + 0.125) / grid as f64;
            let c = u / qf;
            let u_exact = crate::exact::frac_mul(qi, c);
            let value = deriv.eval(c).abs();
            let good = in_good_set(axis, n, u_exact);
            let (x, y) = match axis {
                Axis::X => (c, 0.0),
                Axis::Y => (0.0, c),
            };
            StretchEntry {
                x,
                y,
                u: u_exact,
                good,
                value,
                threshold,
                pass: in_window && value >= threshold,
            }
        })
        .collect();
    let good: Vec<&StretchEntry> = entries.iter().filter(|e| e.good).collect();
    let pass_fraction = if good.is_empty() {
        None
    } else {
        Some(good.iter().filter(|e| e.pass).count() as f64 / good.len() as f64)
    };
    Ok(StretchProfile {
        level,
        n,
        axis,
        m: m.clone(),
        in_window,
        window_lo,
        window_hi,
        entries,
        pass_fraction,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecurrencePoint {
    pub x: f64,
    pub y: f64,
    pub deviation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecurrenceReport {
    pub level: usize,
    pub n: u32,
    #[serde(with = "big_dec")]
    pub t: BigInt,
    #[serde(with = "f64_dec")]
    pub tolerance: f64,
    #[serde(with = "f64_dec")]
    pub floor: f64,
    #[serde(with = "f64_dec")]
    pub max_deviation: f64,
    pub worst: RecurrencePoint,
    /// Extremes of `S_t X` over the x-grid and `S_t Y` over the y-grid.
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    /// Where on the y-grid the two extremes of `S_t Y` sit.
    pub y_at: (f64, f64),
    /// Largest `|closed − direct|` on the checked subset, when `t` is small
    /// enough to sum term by term.
    pub direct_max_diff: Option<f64>,
    pub direct_points: usize,
    pub pass: bool,
    pub x_grid: Vec<f64>,
    pub x_values: Vec<f64>,
}

/// One row of a report's CSV sidecar.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub x: f64,
    pub y: f64,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl StretchProfile {
    /// Good-set entries only; the threshold says nothing elsewhere.
    pub fn grid_rows(&self) -> Vec<GridRow> {
        self.entries
            .iter()
            .filter(|e| e.good)
            .map(|e| GridRow {
                x: e.x,
                y: e.y,
                value: e.value,
                threshold: e.threshold,
                pass: e.pass,
            })
            .collect()
    }
}

impl RecurrenceReport {
    /// For each x on the grid, the worst `y` and `|S_tφ(x, y) − t|` there.
    pub fn grid_rows(&self) -> Vec<GridRow> {
        let limit = self.tolerance.max(self.floor);
        self.x_grid
            .iter()
            .zip(&self.x_values)
            .map(|(&x, &v)| {
                let (lo, hi) = ((v + self.y_range.0).abs(), (v + self.y_range.1).abs());
                let (value, y) = if hi >= lo { (hi, self.y_at.1) } else { (lo, self.y_at.0) };
                GridRow {
                    x,
                    y,
                    value,
                    threshold: limit,
                    pass: value <= limit,
                }
            })
            .collect()
    }
}

/// Grid of base points with `1/n² ≤ {qx} ≤ 1/n − 1/n²`, spread over
/// `periods` of the `q` lattice.
pub fn c_set_grid(q: &BigInt, n: u32, per_period: usize, periods: usize) -> Vec<f64> {
    let n = n as f64;
    let (lo, hi) = (1.0 / (n * n), 1.0 / n - 1.0 / (n * n));
    let qf = big_to_f64(q);
    let qu = q.to_u64().unwrap_or(u64::MAX);
    let periods = (periods as u64).min(qu).max(1);
    let mut out = Vec::with_capacity(per_period * periods as usize);
    for p in 0..periods {
        let base = (p * (qu / periods)) as f64;
        for i in 0..per_period {
            let u = lo + (hi - lo) * (i as f64 + 0.5) / per_period as f64;
            out.push((base + u) / qf);
        }
    }
    out
}

/// `|S_tφ − t|` for `t = qⱼq′ⱼ` over `Cₙ × 𝕋`.
pub fn recurrence_estimate(
    ceiling: &CeilingFunction,
    pair: &FrequencyPair,
    tr: &Translation,
    level: usize,
    grid: usize,
    tol: &ToleranceSchema,
    direct_budget: u64,
) -> Result<RecurrenceReport> {
    if level == 0 || level > ceiling.levels().max(pair.levels) {
        return Err(Error::Level(format!("level {level} not built")));
    }
    let n = ceiling.n0 + level as u32 - 1;
    let t = pair.recurrence_time(level);
    let sb = CeilingBirkhoff::new(ceiling, tr, &t);
    let xs = c_set_grid(pair.q(level), n, grid, 16);
    let x_values: Vec<f64> = xs.par_iter().map(|&x| sb.x.eval(x)).collect();
    let y_values = sb.y.eval_grid(grid, 0.5);
    let fold = |v: &[f64]| {
        v.iter().enumerate().fold((f64::INFINITY, 0usize, f64::NEG_INFINITY, 0usize), |acc, (i, &val)| {
            let (mut lo, mut li, mut hi, mut hj) = acc;
            if val < lo {
                lo = val;
                li = i;
            }
            if val > hi {
                hi = val;
                hj = i;
            }
            (lo, li, hi, hj)
        })
    };
    let (xlo, xli, xhi, xhi_i) = fold(&x_values);
    let (ylo, yli, yhi, yhi_i) = fold(&y_values);
    let ygrid = |j: usize| (j as f64 + 0.5) / grid as f64;
    let (max_deviation, worst) = if (xhi + yhi).abs() >= (xlo + ylo).abs() {
        ((xhi + yhi).abs(), (xs[xhi_i], ygrid(yhi_i)))
    } else {
        ((xlo + ylo).abs(), (xs[xli], ygrid(yli)))
    };
    let tolerance = ceiling.amplitude.analog(&t, 0.5);
    let floor = tol.floor(sb.magnitude());
    let mut direct_max_diff = None;
    let mut direct_points = 0;
    if let Some(tu) = t.to_u64().filter(|v| *v <= direct_budget) {
        let pts: Vec<(f64, f64)> = (0..16)
            .map(|i| (xs[(i * xs.len()) / 16], ygrid((i * 7919) % grid)))
            .chain(std::iter::once(worst))
            .collect();
        direct_points = pts.len();
        let d = pts
            .par_iter()
            .map(|&(x, y)| (ceiling_deviation_direct(ceiling, tr, x, y, tu) - sb.deviation(x, y)).abs())
            .reduce(|| 0.0, f64::max);
        direct_max_diff = Some(d);
    }
    Ok(RecurrenceReport {
        level,
        n,
        t,
        tolerance,
        floor,
        max_deviation,
        worst: RecurrencePoint {
            x: worst.0,
            y: worst.1,
            deviation: max_deviation,
        },
        x_range: (xlo, xhi),
        y_range: (ylo, yhi),
        y_at: (ygrid(yli), ygrid(yhi_i)),
        direct_max_diff,
        direct_points,
        pass: max_deviation <= tolerance.max(floor),
        x_grid: xs,
        x_values,
    })
}

/// `‖S_{qₙ} e^{2πikx}‖` against `2πk·qₙ/qₙ₊₁` for `1 ≤ k < qₙ`.
pub fn convergent_smallness(rot: &Rotation, qn: &BigInt, qn1: &BigInt, k: &BigInt) -> (f64, f64) {
    let g = geometric_sum(qn, k, rot).value.norm();
    let bound = 2.0 * PI * big_to_f64(k) * big_ratio_to_f64(qn, qn1);
    (g, bound)
}

impl Default for Translation {
    fn default() -> Self {
        Translation {
            alpha: Rotation::new(BigInt::zero(), BigInt::one()),
            alpha_prime: Rotation::new(BigInt::zero(), BigInt::one()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cfrac::{convergents, PartialQuotients};
    use proptest::prelude::*;

    fn golden(len: usize) -> Rotation {
        let a: Vec<u64> = std::iter::once(0).chain(std::iter::repeat(1).take(len)).collect();
        let t = convergents(&PartialQuotients::from_u64(&a).unwrap());
        Rotation::new(t.last().p.clone(), t.last().q.clone())
    }

    fn direct_geometric(m: u64, k: i64, rot: &Rotation) -> Complex64 {
        (0..m)
            .map(|l| {
                let t = rot.frac(&(BigInt::from(l) * BigInt::from(k)));
                Complex64::from_polar(1.0, 2.0 * PI * t)
            })
            .sum()
    }

    #[test]
    fn geometric_trivial_cases() {
        let quarter = Rotation::new(BigInt::one(), BigInt::from(4));
        let g = geometric_sum(&BigInt::from(2), &BigInt::one(), &quarter).value;
        assert!((g - Complex64::new(1.0, 1.0)).norm() < 1e-15);
        let g = geometric_sum(&BigInt::from(12345), &BigInt::from(8), &quarter);
        assert_eq!(g.value, Complex64::new(12345.0, 0.0));
        assert_eq!(geometric_sum(&BigInt::zero(), &BigInt::from(3), &quarter).value, Complex64::zero());
    }

    #[test]
    fn geometric_matches_direct_on_golden_rotation() {
        let rot = golden(60);
        for k in [1i64, 2, 13, 89, 377, 999] {
            let g = geometric_sum(&BigInt::from(1000), &BigInt::from(k), &rot).value;
            let d = direct_geometric(1000, k, &rot);
            assert!((g - d).norm() < 1e-10, "k={k}");
        }
    }

    #[test]
    fn near_resonance_uses_exact_phases() {
        // kα = 1/10⁹ exactly: the closed form denominator is ~6e-9
        let rot = Rotation::new(BigInt::one(), BigInt::from(1_000_000_000u64));
        let g = geometric_sum(&BigInt::from(5000), &BigInt::one(), &rot);
        assert_eq!(g.method, GeometricMethod::Closed);
        let d = direct_geometric(5000, 1, &rot);
        assert!((g.value - d).norm() < 1e-9);
        assert!(g.value.norm() <= 5000.0);
        // a denominator below every f64 spacing near 1 still resolves
        let tiny = Rotation::new(BigInt::one(), BigInt::from(10u8).pow(60));
        let g = geometric_sum(&BigInt::from(777), &BigInt::one(), &tiny).value;
        assert!((g.re - 777.0).abs() < 1e-9 && g.im.abs() < 1e-40);
    }

    #[test]
    fn convergent_denominators_give_small_sums() {
        let a: Vec<u64> = vec![0, 3, 7, 15, 1, 292, 1, 1, 1, 2, 1, 3];
        let t = convergents(&PartialQuotients::from_u64(&a).unwrap());
        let rot = Rotation::new(t.last().p.clone(), t.last().q.clone());
        for n in 2..t.len() - 1 {
            let qn = t.q(n);
            for k in 1..qn.to_u64().unwrap().min(50) {
                let (g, b) = convergent_smallness(&rot, qn, t.q(n + 1), &BigInt::from(k));
                assert!(g <= b * (1.0 + 1e-12), "n={n} k={k} g={g} b={b}");
            }
        }
    }

    #[test]
    fn closed_and_direct_agree_for_constants_and_single_steps() {
        let tr = Translation {
            alpha: golden(40),
            alpha_prime: golden(30),
        };
        let one = TrigPolynomial::constant(1.0);
        let q = BirkhoffQuery {
            poly: &one,
            axis: Axis::X,
            m: BigInt::from(77),
            x: 0.3,
            y: 0.1,
        };
        assert_eq!(birkhoff_closed(&q, &tr).unwrap().0, 77.0);
        assert_eq!(birkhoff_direct(&q, &tr, 1000, 10).unwrap(), 77.0);
        let p = TrigPolynomial::cosine(3, 0.7).unwrap();
        let q1 = BirkhoffQuery {
            poly: &p,
            axis: Axis::Y,
            m: BigInt::one(),
            x: 0.0,
            y: 0.41,
        };
        assert!((birkhoff_closed(&q1, &tr).unwrap().0 - p.eval(0.41)).abs() < 1e-15);
        let q0 = BirkhoffQuery { m: BigInt::zero(), ..q1.clone() };
        assert_eq!(birkhoff_closed(&q0, &tr).unwrap(), (0.0, 0.0));
        let big = BirkhoffQuery { m: BigInt::from(10_000_001u64), ..q1 };
        assert!(matches!(birkhoff_direct(&big, &tr, 10_000_000, 0), Err(Error::Budget(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn geometric_factor_bounded_by_m(m in 1u64..100_000, k in 1i64..1_000_000) {
            let rot = golden(50);
            let g = geometric_sum(&BigInt::from(m), &BigInt::from(k), &rot);
            prop_assert!(g.value.norm() <= m as f64);
        }

        #[test]
        fn cocycle_identity(m1 in 0u64..3000, m2 in 0u64..3000, x in 0.0f64..1.0, k in 1i128..200) {
            let tr = Translation { alpha: golden(45), alpha_prime: golden(35) };
            let p = TrigPolynomial::from_terms(0.0, vec![(k, Complex64::new(0.3, -0.1)), (k + 5, Complex64::new(0.05, 0.2))]).unwrap();
            let s = |m: u64, x: f64| p.birkhoff(&tr.alpha, &BigInt::from(m)).eval(x);
            let shifted = tr.alpha.translate(x, &BigInt::from(m1));
            let lhs = s(m1 + m2, x);
            let rhs = s(m1, x) + s(m2, shifted);
            prop_assert!((lhs - rhs).abs() < 1e-8);
        }
    }
}
