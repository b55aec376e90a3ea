//! The ceiling function `φ = 1 + Σ X̃ₙ(x) + Yₙ(y)`.

pub mod bundle;
pub mod kernel;
pub mod props;

use std::sync::Arc;

use num_bigint::BigInt;
use num_complex::Complex64;
use num_traits::{One, ToPrimitive};
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::cfrac::FrequencyPair;
use crate::error::{Error, Result};
use crate::exact::{frac_mul, MAX_FREQUENCY};
use crate::serde_util::{big_dec, f64_dec};
use crate::tolerance::{AmplitudeSchedule, ToleranceSchema};
use crate::trig::TrigPolynomial;

pub use kernel::{BumpKernel, StepProfile};

/// `θₙ, Uₙ, Vₙ, Wₙ` of one level in physical coordinates.
#[derive(Clone, Debug)]
pub struct StepLayer {
    pub n: u32,
    pub q: BigInt,
    pub profile: Arc<StepProfile>,
}

pub fn build_step_layer(n: u32, q: &BigInt, quad_tol: f64) -> Result<StepLayer> {
    if q < &BigInt::one() {
        return Err(Error::InvalidInput("q must be positive".into()));
    }
    Ok(StepLayer {
        n,
        q: q.clone(),
        profile: Arc::new(StepProfile::new(n, quad_tol)?),
    })
}

impl StepLayer {
    fn qf(&self) -> f64 {
        self.q.to_f64().unwrap()
    }

    pub fn theta_n(&self, x: f64) -> f64 {
        self.profile.theta_n(self.qf() * x)
    }

    pub fn u_n(&self, x: f64) -> f64 {
        self.profile.u_n(self.qf() * x) / self.qf()
    }

    pub fn v_n(&self, x: f64) -> f64 {
        self.profile.v_n(self.qf() * x) / self.qf()
    }

    /// `Wₙ(x)`, supported in `[0, 1/qₙ]`.
    pub fn w_n(&self, x: f64) -> f64 {
        let u = self.qf() * x;
        if !(0.0..=1.0).contains(&u) {
            return 0.0;
        }
        self.profile.w_n(u) / self.qf()
    }

    pub fn w_n_prime(&self, x: f64) -> f64 {
        let u = self.qf() * x;
        if !(0.0..=1.0).contains(&u) {
            return 0.0;
        }
        self.profile.w_n_prime(u)
    }
}

/// `X̂ₙ(x) = scale·Σ_k Wₙ(x + k/qₙ)`, which reduces to
/// `(scale/qₙ)·w({qₙx})` for the rescaled profile `w`.
#[derive(Clone, Debug)]
pub struct XHat {
    pub layer: StepLayer,
    pub scale: f64,
    q: i128,
}

pub fn build_xhat(layer: &StepLayer, scale: f64) -> Result<XHat> {
    if !(scale > 0.0) {
        return Err(Error::InvalidInput("scale must be positive".into()));
    }
    let q = layer
        .q
        .to_i128()
        .filter(|v| *v <= MAX_FREQUENCY)
        .ok_or_else(|| Error::FrequencyOverflow(layer.q.to_string()))?;
    Ok(XHat {
        layer: layer.clone(),
        scale,
        q,
    })
}

impl XHat {
    /// Amplitude `A = scale/qₙ` multiplying the unit profile.
    pub fn amplitude(&self) -> f64 {
        self.scale / self.q as f64
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.amplitude() * self.layer.profile.w_n(frac_mul(self.q, x))
    }

    pub fn derivative(&self, x: f64) -> f64 {
        self.scale * self.layer.profile.w_n_prime(frac_mul(self.q, x))
    }
}

/// Forward DFT coefficients `ĉ_k`, `0 ≤ k < m`, of `m` equispaced samples.
pub fn dft_coefficients<F: Fn(f64) -> f64>(f: F, m: usize) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = (0..m).map(|j| Complex64::new(f(j as f64 / m as f64), 0.0)).collect();
    FftPlanner::<f64>::new().plan_fft_forward(m).process(&mut buf);
    let inv = 1.0 / m as f64;
    buf.iter_mut().for_each(|c| *c *= inv);
    buf
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct XLayer {
    pub level: usize,
    pub n: u32,
    #[serde(with = "big_dec")]
    pub q: BigInt,
    #[serde(with = "f64_dec")]
    pub amplitude: f64,
    /// Highest kept harmonic of the unit profile (frequency `J·qₙ`).
    pub harmonics: usize,
    /// Sup-norm bounds of `X̃ₙ − X̂ₙ` and of its first three derivatives.
    pub truncation: [f64; 4],
    /// Truncated unit profile in `u = {qₙx}`.
    pub profile: TrigPolynomial,
    /// `X̃ₙ` itself.
    pub poly: TrigPolynomial,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct YLayer {
    pub level: usize,
    #[serde(with = "big_dec")]
    pub q_prime: BigInt,
    #[serde(with = "f64_dec")]
    pub amplitude: f64,
    pub poly: TrigPolynomial,
}

/// `amplitude·cos(2πq′y)`.
pub fn build_y_layer(level: usize, q_prime: &BigInt, amplitude: f64) -> Result<YLayer> {
    if !(amplitude >= 0.0) {
        return Err(Error::InvalidInput("amplitude must be non-negative".into()));
    }
    let q = q_prime
        .to_i128()
        .filter(|v| *v <= MAX_FREQUENCY)
        .ok_or_else(|| Error::FrequencyOverflow(q_prime.to_string()))?;
    let poly = if amplitude == 0.0 {
        TrigPolynomial::default()
    } else {
        TrigPolynomial::cosine(q, amplitude)?
    };
    Ok(YLayer {
        level,
        q_prime: q_prime.clone(),
        amplitude,
        poly,
    })
}

/// The unmodified cosine layer `A(qₙ)cos(2πqₙx)`, kept for comparisons.
pub fn unmodified_x_layer(q: &BigInt, amplitude: f64) -> Result<TrigPolynomial> {
    Ok(build_y_layer(0, q, amplitude)?.poly)
}

/// Truncates `X̂ₙ` at `|k| < degree_bound` (physical frequencies), capped by
/// the harmonic budget of the tolerance schema.
pub fn build_x_layer(level: usize, xhat: &XHat, degree_bound: &BigInt, tol: &ToleranceSchema) -> Result<XLayer> {
    let q = xhat.q;
    let qb = BigInt::from(q);
    // largest j with j·q < degree_bound
    let jmax_exact = (degree_bound - BigInt::one()) / &qb;
    let j = jmax_exact
        .to_usize()
        .unwrap_or(usize::MAX)
        .min(tol.harmonic_budget);
    if j == 0 {
        return Err(Error::DegreeTooLarge {
            degree: degree_bound.to_string(),
            samples: 0,
        });
    }
    let samples = (tol.oversample * (j + 1)).next_power_of_two();
    let profile = xhat.layer.profile.clone();
    let coef = dft_coefficients(|u| profile.w_n(u), samples);
    let a = xhat.amplitude();
    let unit = TrigPolynomial::from_terms(
        0.0,
        (1..=j).map(|k| (k as i128, coef[k])).filter(|t| t.1.norm() > 0.0).collect(),
    )?;
    let poly = unit.dilate(q)?.scale(a);
    let nyq = samples / 2;
    let mut truncation = [0.0; 4];
    let qf = q as f64;
    for (r, slot) in truncation.iter_mut().enumerate() {
        let term = |k: usize| 2.0 * coef[k].norm() * (std::f64::consts::TAU * k as f64 * qf).powi(r as i32);
        let tail: f64 = (j + 1..nyq).map(term).sum();
        let hi: f64 = (nyq / 2..nyq).map(term).sum();
        let lo: f64 = (nyq / 4..nyq / 2).map(term).sum();
        let extra = if lo > 0.0 && hi < lo { hi * (hi / lo) / (1.0 - hi / lo) } else { hi };
        *slot = a * (tail + extra);
    }
    Ok(XLayer {
        level,
        n: xhat.layer.n,
        q: qb,
        amplitude: a,
        harmonics: j,
        truncation,
        profile: unit,
        poly,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CeilingFunction {
    pub n0: u32,
    pub amplitude: AmplitudeSchedule,
    pub x_layers: Vec<XLayer>,
    pub y_layers: Vec<YLayer>,
    /// `Σ X̃ₙ` and `Σ Yₙ` merged into single polynomials.
    pub x_total: TrigPolynomial,
    pub y_total: TrigPolynomial,
    #[serde(with = "f64_dec")]
    pub positivity_margin: f64,
}

/// Sums aligned layers and checks `1 − Σ sup|layer| > 0`.
pub fn assemble_ceiling(
    x_layers: Vec<XLayer>,
    y_layers: Vec<YLayer>,
    n0: u32,
    amplitude: AmplitudeSchedule,
) -> Result<CeilingFunction> {
    if x_layers.len() != y_layers.len() {
        return Err(Error::InvalidInput("layer lists are not aligned".into()));
    }
    let mut x_total = TrigPolynomial::default();
    let mut y_total = TrigPolynomial::default();
    let mut sup = 0.0;
    for (x, y) in x_layers.iter().zip(&y_layers) {
        if x.poly.constant != 0.0 || y.poly.constant != 0.0 {
            return Err(Error::InvalidInput("layers must have zero mean".into()));
        }
        x_total = x_total.add(&x.poly);
        y_total = y_total.add(&y.poly);
        sup += x.poly.l1_norm() + y.poly.l1_norm();
    }
    let margin = 1.0 - sup;
    if !(margin > 0.0) {
        return Err(Error::Positivity(margin));
    }
    Ok(CeilingFunction {
        n0,
        amplitude,
        x_layers,
        y_layers,
        x_total,
        y_total,
        positivity_margin: margin,
    })
}

impl CeilingFunction {
    /// `φ ≡ 1`.
    pub fn unit() -> Self {
        assemble_ceiling(Vec::new(), Vec::new(), 17, AmplitudeSchedule::Poly { power: 4 }).unwrap()
    }

    /// `1 + Σ Yₙ` only.
    pub fn y_only(&self) -> Self {
        let mut c = self.clone();
        c.x_layers.clear();
        c.x_total = TrigPolynomial::default();
        c.positivity_margin = 1.0 - c.y_total.l1_norm();
        c
    }

    pub fn levels(&self) -> usize {
        self.x_layers.len()
    }

    pub fn is_unit(&self) -> bool {
        self.x_total.is_constant() && self.y_total.is_constant()
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        1.0 + self.x_total.eval(x) + self.y_total.eval(y)
    }

    /// `∂φ/∂x`, `∂φ/∂y`.
    pub fn gradient(&self, x: f64, y: f64) -> (f64, f64) {
        (self.x_total.derivative().eval(x), self.y_total.derivative().eval(y))
    }

    pub fn sup_deviation(&self) -> f64 {
        self.x_total.l1_norm() + self.y_total.l1_norm()
    }

    pub fn min_bound(&self) -> f64 {
        1.0 - self.sup_deviation()
    }

    pub fn max_bound(&self) -> f64 {
        1.0 + self.sup_deviation()
    }
}

/// Options for [`build_ceiling`].
#[derive(Clone, Debug)]
pub struct BuildOptions {
    pub levels: usize,
    pub n0: u32,
    pub amplitude: AmplitudeSchedule,
    pub tol: ToleranceSchema,
}

/// Builds every level of the ceiling for a designed frequency pair.
///
/// Level `j` uses `nⱼ = n₀ + j − 1`, `qⱼ`, `q′ⱼ`, and truncates `X̂ⱼ` at
/// physical degree `qⱼ₊₁`.
pub fn build_ceiling(pair: &FrequencyPair, opts: &BuildOptions) -> Result<CeilingFunction> {
    if opts.levels == 0 || opts.levels > pair.levels {
        return Err(Error::Level(format!(
            "requested {} levels, pair has {}",
            opts.levels, pair.levels
        )));
    }
    if opts.n0 < 17 {
        return Err(Error::PlateauEmpty(opts.n0));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for j in 1..=opts.levels {
        let n = opts.n0 + (j as u32) - 1;
        let q = pair.q(j);
        let layer = build_step_layer(n, q, opts.tol.quad_tol)?;
        let a = opts.amplitude.amplitude(q);
        let scale = a * q.to_f64().unwrap();
        let xhat = build_xhat(&layer, scale.max(f64::MIN_POSITIVE))?;
        xs.push(build_x_layer(j, &xhat, pair.q(j + 1), &opts.tol)?);
        ys.push(build_y_layer(j, pair.q_prime(j), opts.amplitude.amplitude(pair.q_prime(j)))?);
    }
    assemble_ceiling(xs, ys, opts.n0, opts.amplitude.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cfrac::{design_pair, GrowthSchedule, PartialQuotients};

    fn small_pair() -> FrequencyPair {
        design_pair(
            &GrowthSchedule::Cubic,
            2,
            (
                &PartialQuotients::from_u64(&[0, 4]).unwrap(),
                &PartialQuotients::from_u64(&[0, 1]).unwrap(),
            ),
            1 << 14,
        )
        .unwrap()
    }

    #[test]
    fn step_layer_physical_coordinates() {
        let q = BigInt::from(7);
        let l = build_step_layer(17, &q, 1e-14).unwrap();
        let n = 17.0;
        assert_eq!(l.theta_n(2.0 / (n * 7.0)), 1.0);
        assert_eq!(l.w_n(1.0 / (2.0 * n * 7.0)), 0.0);
        assert!(build_step_layer(12, &q, 1e-14).is_err());
        let (v, _) = kernel::adaptive_simpson(&|x| l.w_n(x), 0.0, 1.0 / 7.0, 1e-14, 40).unwrap();
        assert!(v.abs() < 1e-13);
    }

    #[test]
    fn xhat_plateau_derivative_and_zero_zone() {
        let q = BigInt::from(5);
        let l = build_step_layer(17, &q, 1e-14).unwrap();
        let x = build_xhat(&l, 0.01 * 5.0).unwrap();
        let n = 17.0;
        // {5x} = 0.125 is inside [2/n, 1/4 − 2/n]
        let pt = 0.125 / 5.0;
        assert!((x.derivative(pt) - 0.05).abs() < 1e-12);
        assert_eq!(x.eval(0.5 / (n * 5.0)), 0.0);
        let mean: f64 = (0..4096).map(|i| x.eval(i as f64 / 4096.0)).sum::<f64>() / 4096.0;
        assert!(mean.abs() < 1e-15);
    }

    #[test]
    fn truncation_matches_untruncated_profile() {
        let pair = small_pair();
        let q = pair.q(1);
        let l = build_step_layer(17, q, 1e-14).unwrap();
        let a = 1.0 / 256.0;
        let xh = build_xhat(&l, a * 4.0).unwrap();
        let tol = ToleranceSchema::default();
        let xl = build_x_layer(1, &xh, pair.q(2), &tol).unwrap();
        assert_eq!(xl.poly.constant, 0.0);
        let deg = xl.poly.degree_bound() as usize;
        let grid = 4 * deg;
        let mut worst: f64 = 0.0;
        for i in (0..grid).step_by(7) {
            let x = i as f64 / grid as f64;
            worst = worst.max((xl.poly.eval(x) - xh.eval(x)).abs());
        }
        assert!(worst < 1e-15, "worst {worst}");
        assert!(xl.truncation[0] < 1e-15);
    }

    #[test]
    fn assemble_checks_positivity() {
        let c = assemble_ceiling(vec![], vec![], 17, AmplitudeSchedule::Poly { power: 4 }).unwrap();
        assert_eq!(c.eval(0.3, 0.7), 1.0);
        let y = build_y_layer(1, &BigInt::from(3), 0.3).unwrap();
        assert_eq!(y.poly.coefficient(3).re, 0.15);
        let yb = build_y_layer(1, &BigInt::from(3), 1.2).unwrap();
        let x0 = XLayer {
            level: 1,
            n: 17,
            q: BigInt::from(2),
            amplitude: 0.0,
            harmonics: 1,
            truncation: [0.0; 4],
            profile: TrigPolynomial::default(),
            poly: TrigPolynomial::default(),
        };
        let ok = assemble_ceiling(vec![x0.clone()], vec![y], 17, AmplitudeSchedule::Poly { power: 4 }).unwrap();
        assert!((ok.positivity_margin - 0.7).abs() < 1e-15);
        assert!(matches!(
            assemble_ceiling(vec![x0], vec![yb], 17, AmplitudeSchedule::Poly { power: 4 }),
            Err(Error::Positivity(_))
        ));
    }

    #[test]
    fn full_build_is_positive_and_mean_zero() {
        let pair = small_pair();
        let opts = BuildOptions {
            levels: 2,
            n0: 17,
            amplitude: AmplitudeSchedule::Poly { power: 4 },
            tol: ToleranceSchema::default(),
        };
        let c = build_ceiling(&pair, &opts).unwrap();
        assert!(c.positivity_margin > 0.99);
        assert!(c.x_layers.iter().all(|l| l.poly.constant == 0.0));
        let grid = c.x_total.eval_grid(1 << 14, 0.0);
        let min = grid.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(1.0 + min - c.y_total.l1_norm() >= c.min_bound() - 1e-15);
    }
}
