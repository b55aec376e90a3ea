//! The special flow over `R_{α,α′}` under a ceiling `φ`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::birkhoff::{ceiling_deviation_direct, CeilingBirkhoff, Translation};
use crate::ceiling::CeilingFunction;
use crate::error::{Error, Result};
use crate::exact::{circle_norm, wrap01};
use crate::serde_util::big_dec;

/// Fiber counts up to this size are summed term by term.
const DIRECT_LIMIT: u64 = 64;
/// Longest local walk before another Newton correction.
const SCAN_LIMIT: usize = 64;
const AMBIGUITY: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowPoint {
    pub x: f64,
    pub y: f64,
    pub s: f64,
}

impl FlowPoint {
    /// Reduces `x, y` mod 1 and moves `s` into `[0, φ(x,y))`.
    pub fn canonical(map: &FlowMap, x: f64, y: f64, s: f64) -> Result<FlowPoint> {
        if !(x.is_finite() && y.is_finite() && s.is_finite()) {
            return Err(Error::InvalidInput("non-finite flow point".into()));
        }
        let p = FlowPoint {
            x: wrap01(x),
            y: wrap01(y),
            s: 0.0,
        };
        if s >= 0.0 {
            Ok(map.advance(&p, s)?.point)
        } else {
            Ok(map.advance_back(&p, -s)?.point)
        }
    }

    pub fn base(x: f64, y: f64) -> FlowPoint {
        FlowPoint {
            x: wrap01(x),
            y: wrap01(y),
            s: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Advance {
    pub point: FlowPoint,
    /// Number of fibers crossed; negative for backward motion.
    pub fibers: BigInt,
    /// The landing height is within rounding noise of a fiber end.
    pub ambiguous: bool,
}

/// `T^t` together with a cache of closed-form Birkhoff sums keyed by
/// direction and length.
#[derive(Debug)]
pub struct FlowMap {
    pub translation: Translation,
    pub ceiling: CeilingFunction,
    inverse: Translation,
    cache: Mutex<HashMap<(bool, BigInt), Arc<CeilingBirkhoff>>>,
}

impl Clone for FlowMap {
    fn clone(&self) -> Self {
        FlowMap::new(self.translation.clone(), self.ceiling.clone())
    }
}

impl FlowMap {
    pub fn new(translation: Translation, ceiling: CeilingFunction) -> FlowMap {
        FlowMap {
            inverse: translation.inverse(),
            translation,
            ceiling,
            cache: Mutex::new(HashMap::new()),
        }
    }

    /// Suspension under `φ ≡ 1`.
    pub fn unit(translation: Translation) -> FlowMap {
        FlowMap::new(translation, CeilingFunction::unit())
    }

    pub fn phi(&self, x: f64, y: f64) -> f64 {
        self.ceiling.eval(x, y)
    }

    fn tr(&self, forward: bool) -> &Translation {
        if forward {
            &self.translation
        } else {
            &self.inverse
        }
    }

    fn sums(&self, forward: bool, m: &BigInt) -> Arc<CeilingBirkhoff> {
        let key = (forward, m.clone());
        if let Some(v) = self.cache.lock().unwrap().get(&key) {
            return v.clone();
        }
        let v = Arc::new(CeilingBirkhoff::new(&self.ceiling, self.tr(forward), m));
        self.cache.lock().unwrap().insert(key, v.clone());
        v
    }

    /// `S_mφ(z) − m` along the chosen direction.
    fn deviation(&self, forward: bool, x: f64, y: f64, m: &BigInt) -> f64 {
        if self.ceiling.is_unit() || m.is_zero() {
            return 0.0;
        }
        match m.to_u64() {
            Some(k) if k <= DIRECT_LIMIT => ceiling_deviation_direct(&self.ceiling, self.tr(forward), x, y, k),
            _ => self.sums(forward, m).deviation(x, y),
        }
    }

    fn phi_at(&self, forward: bool, x: f64, y: f64, j: &BigInt) -> f64 {
        let (px, py) = self.tr(forward).apply(x, y, j);
        self.phi(px, py)
    }

    /// Largest `m ≥ 0` with `S_mφ(z) ≤ T + rem` along `forward`, and the
    /// slack `T + rem − S_mφ(z)`.
    fn solve(&self, forward: bool, x: f64, y: f64, t: &BigInt, rem: f64) -> Result<(BigInt, f64, f64)> {
        // g(m) = S_mφ − T − rem = (m − T) − rem + dev(m)
        let g = |m: &BigInt| -> f64 {
            let d = (m - t).to_f64().unwrap_or(f64::INFINITY);
            d - rem + self.deviation(forward, x, y, m)
        };
        let mut m = t + BigInt::from(rem.floor() as i64);
        if m.is_negative() {
            m = BigInt::zero();
        }
        for _ in 0..16 {
            let mut gm = g(&m);
            if !gm.is_finite() {
                return Err(Error::PrecisionInsufficient("fiber count diverged".into()));
            }
            let step = gm.round();
            if step.abs() > SCAN_LIMIT as f64 / 2.0 {
                m -= BigInt::from(step as i128);
                if m.is_negative() {
                    m = BigInt::zero();
                }
                continue;
            }
            let mut walked = 0;
            // walk down while S_m exceeds the target
            while gm > 0.0 && m.is_positive() && walked < SCAN_LIMIT {
                m -= 1;
                gm -= self.phi_at(forward, x, y, &m);
                walked += 1;
            }
            if gm > 0.0 {
                if m.is_zero() {
                    return Err(Error::Precondition("negative flow time".into()));
                }
                continue;
            }
            // walk up while the next fiber still fits
            loop {
                let next = self.phi_at(forward, x, y, &m);
                if gm + next > 0.0 {
                    return Ok((m, -gm, next));
                }
                if walked >= SCAN_LIMIT {
                    break;
                }
                gm += next;
                m += 1;
                walked += 1;
            }
        }
        Err(Error::PrecisionInsufficient("fiber count did not settle".into()))
    }

    /// Whether the landing point sits within rounding noise of a fiber end;
    /// `scale` is the size of the quantities the slack was computed from.
    fn ambiguous(&self, slack: f64, fiber: f64, scale: f64) -> bool {
        let eps = AMBIGUITY * scale.abs().max(1.0);
        slack < eps || fiber - slack < eps
    }

    /// `N(t, s, z)`, failing when the crossing cannot be resolved.
    pub fn fiber_count(&self, t: f64, p: &FlowPoint) -> Result<BigInt> {
        let a = self.advance(p, t)?;
        if a.ambiguous {
            return Err(Error::PrecisionInsufficient(format!(
                "fiber boundary within noise at t = {t}"
            )));
        }
        Ok(a.fibers)
    }

    /// `T^t p` for real `t`; negative `t` runs backwards.
    pub fn advance(&self, p: &FlowPoint, t: f64) -> Result<Advance> {
        if !t.is_finite() {
            return Err(Error::InvalidInput("non-finite time".into()));
        }
        if t < 0.0 {
            return self.advance_back(p, -t);
        }
        let whole = t.floor();
        self.advance_split(p, &big_from_f64(whole), t - whole)
    }

    /// `T^{T+τ} p` for an integer part `T ≥ 0` and `τ ∈ [0, 1)`.
    pub fn advance_split(&self, p: &FlowPoint, t: &BigInt, tau: f64) -> Result<Advance> {
        if t.is_negative() || !(0.0..1.0).contains(&tau) {
            return Err(Error::Precondition("advance needs T ≥ 0 and τ ∈ [0, 1)".into()));
        }
        let (m, slack, fiber) = self.solve(true, p.x, p.y, t, tau + p.s)?;
        let (x, y) = self.translation.apply(p.x, p.y, &m);
        // the integer part is exact; rounding enters through the remainder
        // and the deviation sum
        let scale = (tau + p.s).max(self.deviation_magnitude(t));
        Ok(Advance {
            point: FlowPoint { x, y, s: slack },
            ambiguous: self.ambiguous(slack, fiber, scale),
            fibers: m,
        })
    }

    /// `T^{−t} p` for `t ≥ 0`: the smallest `N` with
    /// `s − t + Σ_{j=1..N} φ(z − jα) ≥ 0`.
    pub fn advance_back(&self, p: &FlowPoint, t: f64) -> Result<Advance> {
        if !(t >= 0.0) {
            return Err(Error::Precondition("advance_back needs t ≥ 0".into()));
        }
        if t <= p.s {
            return Ok(Advance {
                point: FlowPoint { s: p.s - t, ..*p },
                fibers: BigInt::zero(),
                ambiguous: false,
            });
        }
        // sums over z − α, z − 2α, … start at R⁻¹z
        let (bx, by) = self.inverse.apply(p.x, p.y, &BigInt::one());
        let need = t - p.s;
        let whole = need.floor();
        let frac = need - whole;
        // largest m with S_m(R⁻¹z) ≤ need is one short of the fiber we land in
        let (m, slack, fiber) = self.solve(false, bx, by, &big_from_f64(whole), frac)?;
        // the (m+1)-th fiber overshoots `need` by fiber − slack, unless the
        // m-th one ends exactly on it
        let (n, s) = if slack > 0.0 { (&m + 1, fiber - slack) } else { (m, 0.0) };
        let (x, y) = self.inverse.apply(p.x, p.y, &n);
        Ok(Advance {
            point: FlowPoint { x, y, s },
            ambiguous: self.ambiguous(slack, fiber, t),
            fibers: -n,
        })
    }

    /// Representative of `p` moved `k ∈ {−1, 0, 1}` fibers along the
    /// identification `(z, s + φ(z)) ~ (Rz, s)`.
    fn shifted(&self, p: &FlowPoint, k: i32) -> FlowPoint {
        match k {
            0 => *p,
            1 => {
                let (x, y) = self.translation.apply(p.x, p.y, &BigInt::one());
                FlowPoint {
                    x,
                    y,
                    s: p.s - self.phi(p.x, p.y),
                }
            }
            -1 => {
                let (x, y) = self.inverse.apply(p.x, p.y, &BigInt::one());
                FlowPoint {
                    x,
                    y,
                    s: p.s + self.phi(x, y),
                }
            }
            _ => unreachable!(),
        }
    }

    /// Distance on `M_φ`: Euclidean in `(x, y, s)` with circle distances on
    /// the base, minimized over neighbouring fiber representatives.
    pub fn quotient_distance(&self, p: &FlowPoint, q: &FlowPoint) -> f64 {
        let mut best = f64::INFINITY;
        for kp in -1..=1 {
            let a = self.shifted(p, kp);
            for kq in -1..=1 {
                let b = self.shifted(q, kq);
                best = best.min(euclid(&a, &b));
            }
        }
        best
    }

    /// Rounding scale of `S_tφ(z) − t` as returned by the solver.
    pub fn deviation_magnitude(&self, t: &BigInt) -> f64 {
        if self.ceiling.is_unit() || t.is_zero() {
            return 0.0;
        }
        match t.to_u64() {
            Some(k) if k <= DIRECT_LIMIT => k as f64 * self.ceiling.sup_deviation(),
            _ => self.sums(true, t).magnitude(),
        }
    }

    /// `d(p, T^t p)` for integer `t`.
    ///
    /// When the orbit returns to the same fiber index the distance is
    /// assembled from `‖tα‖`, `‖tα′‖` and `S_tφ(z) − t` directly, so that
    /// drifts far below the resolution of the coordinates are not lost.
    pub fn return_distance(&self, p: &FlowPoint, t: &BigInt) -> Result<ReturnDistance> {
        if t.is_negative() {
            return Err(Error::Precondition("return time must be non-negative".into()));
        }
        let dev = self.deviation(true, p.x, p.y, t);
        let (x, y) = self.translation.apply(p.x, p.y, t);
        let s = p.s - dev;
        if s >= 0.0 && s < self.phi(x, y) {
            let dx = self.translation.alpha.circle_distance(t);
            let dy = self.translation.alpha_prime.circle_distance(t);
            let eps = AMBIGUITY * self.deviation_magnitude(t).max(1.0);
            return Ok(ReturnDistance {
                distance: (dx * dx + dy * dy + dev * dev).sqrt(),
                deviation: dev,
                ambiguous: s < eps || self.phi(x, y) - s < eps,
            });
        }
        let a = self.advance_split(p, t, 0.0)?;
        Ok(ReturnDistance {
            distance: self.quotient_distance(p, &a.point),
            deviation: dev,
            ambiguous: a.ambiguous,
        })
    }

    /// `d(p, T^t p)` at each `t`, flagged against `radius(t)`.
    pub fn orbit_recurrences<F: Fn(&BigInt) -> f64>(
        &self,
        p: &FlowPoint,
        times: &[BigInt],
        radius: F,
    ) -> Result<Vec<RecurrenceWitness>> {
        if times.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Precondition("times must be sorted".into()));
        }
        times
            .iter()
            .map(|t| {
                let d = self.return_distance(p, t)?;
                let r = radius(t);
                Ok(RecurrenceWitness {
                    t: t.clone(),
                    distance: d.distance,
                    radius: r,
                    witness: d.distance <= r,
                    ambiguous: d.ambiguous,
                })
            })
            .collect()
    }
}

fn euclid(a: &FlowPoint, b: &FlowPoint) -> f64 {
    let dx = circle_norm(a.x - b.x);
    let dy = circle_norm(a.y - b.y);
    (dx * dx + dy * dy + (a.s - b.s).powi(2)).sqrt()
}

fn big_from_f64(v: f64) -> BigInt {
    if v.abs() < 9.0e15 {
        BigInt::from(v as i64)
    } else {
        num_traits::FromPrimitive::from_f64(v).unwrap_or_default()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReturnDistance {
    pub distance: f64,
    /// `S_tφ(z) − t`.
    pub deviation: f64,
    pub ambiguous: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecurrenceWitness {
    #[serde(with = "big_dec")]
    pub t: BigInt,
    pub distance: f64,
    pub radius: f64,
    pub witness: bool,
    pub ambiguous: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingMode {
    /// Normalized product of Haar on the base and Lebesgue on the fiber.
    Haar,
    /// Haar on the base, fiber height uniform on `[0, φ(z))`.
    Base,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeasureSampler {
    pub seed: u64,
    pub mode: SamplingMode,
}

impl MeasureSampler {
    pub fn sample_points(&self, count: usize, map: &FlowMap) -> Result<Vec<FlowPoint>> {
        if count == 0 {
            return Err(Error::Precondition("sample count must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let top = map.ceiling.max_bound();
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            let x: f64 = rng.gen();
            let y: f64 = rng.gen();
            let phi = map.phi(x, y);
            match self.mode {
                SamplingMode::Base => {
                    let s = rng.gen::<f64>() * phi;
                    out.push(FlowPoint { x, y, s });
                }
                SamplingMode::Haar => {
                    // uniform in the region under the graph
                    let s = rng.gen::<f64>() * top;
                    if s < phi {
                        out.push(FlowPoint { x, y, s });
                    }
                }
            }
        }
        Ok(out)
    }

    /// Like [`sample_points`](Self::sample_points), keeping only points whose
    /// base satisfies `keep`. Gives up after `max_draws` candidates.
    pub fn sample_where(
        &self,
        count: usize,
        map: &FlowMap,
        keep: impl Fn(f64, f64) -> bool,
        max_draws: usize,
    ) -> Result<Vec<FlowPoint>> {
        let mut out = Vec::with_capacity(count);
        let mut drawn = 0;
        let mut batch = 0u64;
        while out.len() < count {
            if drawn >= max_draws {
                return Err(Error::Budget(format!("{} of {count} conditioned samples after {drawn} draws", out.len())));
            }
            let s = MeasureSampler {
                seed: self.seed.wrapping_add(batch.wrapping_mul(0x9e37_79b9)),
                mode: self.mode,
            };
            let pts = s.sample_points(count.max(64), map)?;
            drawn += pts.len();
            out.extend(pts.into_iter().filter(|p| keep(p.x, p.y)).take(count - out.len()));
            batch += 1;
        }
        Ok(out)
    }
}
