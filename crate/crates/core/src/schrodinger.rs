//! Potentials sampled along flow orbits and the spectral diagnostics of the
//! associated discrete Schrödinger operators.

use std::f64::consts::TAU;

use num_bigint::BigInt;
use num_traits::One;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{FlowMap, FlowPoint};

/// Terms in the lacunary series.
pub const LACUNARY_TERMS: u32 = 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ObservableKind {
    Constant { value: f64 },
    /// `cos(2πx)` on the base, constant along fibers.
    CosX,
    /// Smooth: `h(z) = cos 2πx + cos 2πy` interpolated along the fiber
    /// from `h(z)` to `h(Rz)`, plus `cos(2πσ)` with `σ = s/φ(z)`.
    Smooth,
    /// Same fiber interpolation of `w(x) + w(y)` with the lacunary
    /// `w(x) = Σ 2^{−kβ} cos(2π 2^k x)`, `k < 20`.
    Lacunary { beta: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observable {
    pub kind: ObservableKind,
    pub beta: f64,
    /// Declared Hölder constant.
    pub holder_constant: f64,
    pub description: String,
}

fn lacunary(beta: f64, x: f64) -> f64 {
    (0..LACUNARY_TERMS)
        .map(|k| 2f64.powf(-(k as f64) * beta) * (TAU * crate::exact::frac_mul(1i128 << k, x)).cos())
        .sum()
}

impl Observable {
    pub fn constant(value: f64) -> Observable {
        Observable {
            kind: ObservableKind::Constant { value },
            beta: 1.0,
            holder_constant: 0.0,
            description: format!("constant {value}"),
        }
    }

    pub fn cos_x() -> Observable {
        Observable {
            kind: ObservableKind::CosX,
            beta: 1.0,
            holder_constant: TAU,
            description: "cos(2πx)".into(),
        }
    }

    /// The smooth observable with a Lipschitz constant derived from the
    /// ceiling's bounds.
    pub fn smooth(map: &FlowMap) -> Observable {
        let c = &map.ceiling;
        let grad = c.x_total.derivative().l1_norm() + c.y_total.derivative().l1_norm();
        let dsigma = (1.0 + grad * map.ceiling.max_bound()) / c.min_bound();
        Observable {
            kind: ObservableKind::Smooth,
            beta: 1.0,
            holder_constant: 2.0 * TAU + (4.0 + TAU) * dsigma,
            description: "fiber interpolation of cos(2πx)+cos(2πy) plus cos(2πs/φ)".into(),
        }
    }

    /// The lacunary observable; its constant follows the usual split of the
    /// series at `2^k ≈ 1/d`.
    pub fn lacunary(map: &FlowMap, beta: f64) -> Observable {
        let r = 2f64.powf(-beta);
        let s = 2f64.powf(1.0 - beta);
        let w = TAU / (s - 1.0) * s + 2.0 / (1.0 - r);
        let sup = 2.0 / (1.0 - r);
        let c = &map.ceiling;
        let grad = c.x_total.derivative().l1_norm() + c.y_total.derivative().l1_norm();
        let dsigma = (1.0 + grad * c.max_bound()) / c.min_bound();
        Observable {
            kind: ObservableKind::Lacunary { beta },
            beta,
            holder_constant: 2.0 * w + (2.0 * sup + TAU) * dsigma,
            description: format!("lacunary series, beta = {beta}, {LACUNARY_TERMS} terms"),
        }
    }

    pub fn eval(&self, map: &FlowMap, p: &FlowPoint) -> f64 {
        let fiber = |h: &dyn Fn(f64, f64) -> f64| {
            let phi = map.phi(p.x, p.y);
            let sigma = (p.s / phi).clamp(0.0, 1.0);
            let (nx, ny) = map.translation.apply(p.x, p.y, &BigInt::one());
            (1.0 - sigma) * h(p.x, p.y) + sigma * h(nx, ny) + (TAU * sigma).cos()
        };
        match &self.kind {
            ObservableKind::Constant { value } => *value,
            ObservableKind::CosX => (TAU * p.x).cos(),
            ObservableKind::Smooth => fiber(&|x, y| (TAU * x).cos() + (TAU * y).cos()),
            ObservableKind::Lacunary { beta } => fiber(&|x, y| lacunary(*beta, x) + lacunary(*beta, y)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolderCheck {
    pub declared: f64,
    /// Largest `|V(p) − V(q)| / d(p,q)^β` seen.
    pub observed: f64,
    pub pairs: usize,
    pub violated: bool,
    /// Declared constant, or the observed one inflated by 1.1 on violation.
    pub constant: f64,
}

/// Random point pairs at distances `10^{-1}` to `10^{-6}`.
fn nearby_pairs(map: &FlowMap, pairs: usize, seed: u64) -> Result<Vec<(FlowPoint, FlowPoint)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(pairs);
    while out.len() < pairs {
        let x: f64 = rng.gen();
        let y: f64 = rng.gen();
        let phi = map.phi(x, y);
        let p = FlowPoint {
            x,
            y,
            s: rng.gen::<f64>() * phi,
        };
        let scale = 10f64.powf(-rng.gen_range(1.0..6.0));
        let d = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let q = FlowPoint::canonical(map, x + scale * d[0], y + scale * d[1], p.s + scale * d[2])?;
        if map.quotient_distance(&p, &q) > 0.0 {
            out.push((p, q));
        }
    }
    Ok(out)
}

pub fn holder_check(map: &FlowMap, obs: &Observable, pairs: usize, seed: u64) -> Result<HolderCheck> {
    let mut observed: f64 = 0.0;
    for (p, q) in nearby_pairs(map, pairs, seed)? {
        let d = map.quotient_distance(&p, &q);
        let dv = (obs.eval(map, &p) - obs.eval(map, &q)).abs();
        observed = observed.max(dv / d.powf(obs.beta));
    }
    let violated = observed > obs.holder_constant;
    Ok(HolderCheck {
        declared: obs.holder_constant,
        observed,
        pairs,
        violated,
        constant: if violated { 1.1 * observed } else { obs.holder_constant },
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialTrace {
    pub origin: FlowPoint,
    pub window: usize,
    /// `V(T^n ξ)` for `n = −W..=W`.
    pub samples: Vec<f64>,
    /// Steps whose fiber crossing was within rounding noise.
    pub ambiguous_steps: usize,
    pub provenance: String,
}

impl PotentialTrace {
    /// A trace from explicit values, centred so that `values[w]` is `V(0)`.
    pub fn from_values(values: Vec<f64>, provenance: &str) -> Result<PotentialTrace> {
        if values.len() % 2 == 0 || values.len() < 3 {
            return Err(Error::InvalidInput("trace needs an odd length of at least 3".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("trace values must be finite".into()));
        }
        Ok(PotentialTrace {
            origin: FlowPoint::base(0.0, 0.0),
            window: values.len() / 2,
            samples: values,
            ambiguous_steps: 0,
            provenance: provenance.into(),
        })
    }

    /// `V(n)` for `|n| ≤ W`.
    pub fn at(&self, n: i64) -> f64 {
        self.samples[(n + self.window as i64) as usize]
    }

    /// The sub-window `|n| ≤ w`.
    pub fn restrict(&self, w: usize) -> Result<PotentialTrace> {
        if w > self.window || w == 0 {
            return Err(Error::OutOfRange {
                index: w,
                len: self.window,
            });
        }
        let lo = self.window - w;
        Ok(PotentialTrace {
            window: w,
            samples: self.samples[lo..=lo + 2 * w].to_vec(),
            ..self.clone()
        })
    }

    pub fn mean_and_std(&self) -> (f64, f64) {
        let n = self.samples.len() as f64;
        let mean = self.samples.iter().sum::<f64>() / n;
        let var = self.samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        (mean, var.sqrt())
    }
}

/// `V(T^n ξ)` for `|n| ≤ W`, stepping by unit time in both directions.
pub fn sample_potential(map: &FlowMap, obs: &Observable, p: &FlowPoint, w: usize) -> Result<PotentialTrace> {
    if w == 0 {
        return Err(Error::Precondition("window must be at least 1".into()));
    }
    let mut fwd = Vec::with_capacity(w);
    let mut back = Vec::with_capacity(w);
    let mut ambiguous = 0;
    let mut cur = *p;
    for _ in 0..w {
        let a = map.advance(&cur, 1.0)?;
        ambiguous += a.ambiguous as usize;
        cur = a.point;
        fwd.push(obs.eval(map, &cur));
    }
    cur = *p;
    for _ in 0..w {
        let a = map.advance_back(&cur, 1.0)?;
        ambiguous += a.ambiguous as usize;
        cur = a.point;
        back.push(obs.eval(map, &cur));
    }
    let mut samples: Vec<f64> = back.into_iter().rev().collect();
    samples.push(obs.eval(map, p));
    samples.extend(fwd);
    Ok(PotentialTrace {
        origin: *p,
        window: w,
        samples,
        ambiguous_steps: ambiguous,
        provenance: obs.description.clone(),
    })
}

/// `n^{−min(k, cap)}` where `n` is the candidate's position counted from 2.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GordonThreshold {
    pub cap: u32,
}

impl Default for GordonThreshold {
    fn default() -> Self {
        GordonThreshold { cap: 20 }
    }
}

impl GordonThreshold {
    pub fn threshold(&self, position: usize, k: usize) -> f64 {
        let n = (position + 2) as f64;
        n.powi(-(k.min(self.cap as usize) as i32))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GordonEntry {
    /// Index in the threshold rule.
    pub index: usize,
    pub k: usize,
    pub defect: f64,
    pub threshold: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GordonReport {
    pub entries: Vec<GordonEntry>,
}

/// `max_{1≤l≤k} |V(l) − V(l ± k)|`.
pub fn gordon_defect(trace: &PotentialTrace, k: usize) -> Result<f64> {
    if k == 0 || 2 * k > trace.window {
        return Err(Error::OutOfRange {
            index: k,
            len: trace.window / 2,
        });
    }
    let k = k as i64;
    Ok((1..=k).fold(0.0f64, |m, l| {
        let v = trace.at(l);
        m.max((v - trace.at(l + k)).abs()).max((v - trace.at(l - k)).abs())
    }))
}

pub fn gordon_check(trace: &PotentialTrace, candidates: &[usize], rule: &GordonThreshold) -> Result<GordonReport> {
    let entries = candidates
        .iter()
        .enumerate()
        .map(|(i, &k)| {
            let defect = gordon_defect(trace, k)?;
            let threshold = rule.threshold(i, k);
            Ok(GordonEntry {
                index: i + 2,
                k,
                defect,
                threshold,
                pass: defect <= threshold,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GordonReport { entries })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LipschitzReport {
    /// Largest observed stretch inflated by 1.2.
    pub constant: f64,
    pub observed: f64,
    /// Counts of `log10` stretch ratios in unit bins starting at 10^{-1}.
    pub histogram: Vec<usize>,
}

/// Empirical Lipschitz constant of the time-one map.
pub fn lipschitz_estimate(map: &FlowMap, samples: usize, seed: u64) -> Result<LipschitzReport> {
    if samples < 100 {
        return Err(Error::Precondition("need at least 100 samples".into()));
    }
    let mut observed: f64 = 0.0;
    let mut histogram = vec![0usize; 8];
    for (p, q) in nearby_pairs(map, samples, seed)? {
        let d0 = map.quotient_distance(&p, &q);
        let tp = map.advance(&p, 1.0)?.point;
        let tq = map.advance(&q, 1.0)?.point;
        let r = map.quotient_distance(&tp, &tq) / d0;
        observed = observed.max(r);
        let bin = ((r.log10() + 1.0).floor().max(0.0) as usize).min(histogram.len() - 1);
        histogram[bin] += 1;
    }
    Ok(LipschitzReport {
        constant: 1.2 * observed,
        observed,
        histogram,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Unit eigenvectors, `eigenvectors[i]` belonging to `eigenvalues[i]`.
    pub eigenvectors: Vec<Vec<f64>>,
}

/// Eigenpairs of the symmetric tridiagonal matrix with the given diagonal
/// and off-diagonal (`off.len() + 1 == diag.len()`), by implicit QL.
pub fn tridiagonal_eigen(diag: &[f64], off: &[f64]) -> Result<Spectrum> {
    let n = diag.len();
    if n == 0 || off.len() + 1 != n {
        return Err(Error::InvalidInput("tridiagonal shape mismatch".into()));
    }
    let mut d = diag.to_vec();
    let mut e = off.to_vec();
    e.push(0.0);
    // z[i][k]: component i of eigenvector k
    let mut z = vec![vec![0.0; n]; n];
    for (i, row) in z.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                return Err(Error::PrecisionInsufficient("QL iteration did not converge".into()));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut i = m;
            let mut underflow = false;
            while i > l {
                i -= 1;
                let mut f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                for row in z.iter_mut() {
                    f = row[i + 1];
                    row[i + 1] = s * row[i] + c * f;
                    row[i] = c * row[i] - s * f;
                }
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].total_cmp(&d[b]));
    let eigenvalues = order.iter().map(|&k| d[k]).collect();
    let eigenvectors = order
        .iter()
        .map(|&k| {
            let v: Vec<f64> = z.iter().map(|row| row[k]).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.into_iter().map(|x| x / norm).collect()
        })
        .collect();
    Ok(Spectrum {
        eigenvalues,
        eigenvectors,
    })
}

/// Dirichlet truncation to `|n| ≤ N` of `u(n+1) + u(n−1) + V(n)u(n)`.
pub fn truncated_spectrum(trace: &PotentialTrace, n: usize) -> Result<Spectrum> {
    if n > trace.window {
        return Err(Error::OutOfRange {
            index: n,
            len: trace.window,
        });
    }
    let lo = trace.window - n;
    let diag = &trace.samples[lo..=lo + 2 * n];
    tridiagonal_eigen(diag, &vec![1.0; 2 * n])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Localization {
    pub ipr: f64,
    /// Minus the fitted slope of the upper envelope of `ln|u|` against the
    /// distance from the peak.
    pub decay_rate: f64,
    pub center: usize,
    /// Mass within 10% of either edge.
    pub edge_mass: f64,
}

pub fn localization_metrics(vectors: &[Vec<f64>]) -> Result<Vec<Localization>> {
    vectors.iter().map(|u| localization(u)).collect()
}

pub fn localization(u: &[f64]) -> Result<Localization> {
    let n = u.len();
    let norm2: f64 = u.iter().map(|x| x * x).sum();
    if n == 0 || !(norm2 > 0.0) {
        return Err(Error::Precondition("vector must be non-zero".into()));
    }
    let ipr = u.iter().map(|x| x.powi(4)).sum::<f64>() / (norm2 * norm2);
    let center = (0..n).max_by(|&a, &b| u[a].abs().total_cmp(&u[b].abs())).unwrap();
    let logs: Vec<f64> = u.iter().map(|x| (x.abs() / norm2.sqrt()).max(1e-300).ln()).collect();
    // envelope: largest ln|u| at distance ≥ d on each side
    let mut pts: Vec<(f64, f64)> = Vec::new();
    let mut env = f64::NEG_INFINITY;
    for i in (center + 1..n).rev() {
        env = env.max(logs[i]);
        pts.push(((i - center) as f64, env));
    }
    env = f64::NEG_INFINITY;
    for i in 0..center {
        env = env.max(logs[i]);
        pts.push(((center - i) as f64, env));
    }
    let decay_rate = if pts.len() >= 2 {
        let m = pts.len() as f64;
        let (sx, sy) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
        let (mx, my) = (sx / m, sy / m);
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        if sxx > 0.0 {
            -sxy / sxx
        } else {
            0.0
        }
    } else {
        0.0
    };
    let edge = (n / 10).max(1);
    let edge_mass = (u[..edge].iter().chain(&u[n - edge..]).map(|x| x * x).sum::<f64>() / norm2).min(1.0);
    Ok(Localization {
        ipr,
        decay_rate,
        center,
        edge_mass,
    })
}

/// A 2×2 matrix times `e^{ln_scale}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaledMatrix {
    pub m: [[f64; 2]; 2],
    pub ln_scale: f64,
}

impl ScaledMatrix {
    pub fn identity() -> Self {
        ScaledMatrix {
            m: [[1.0, 0.0], [0.0, 1.0]],
            ln_scale: 0.0,
        }
    }

    /// `a · self`.
    fn left_mul(&mut self, a: [[f64; 2]; 2]) {
        let m = self.m;
        self.m = [
            [a[0][0] * m[0][0] + a[0][1] * m[1][0], a[0][0] * m[0][1] + a[0][1] * m[1][1]],
            [a[1][0] * m[0][0] + a[1][1] * m[1][0], a[1][0] * m[0][1] + a[1][1] * m[1][1]],
        ];
        let big = self.m.iter().flatten().fold(0.0f64, |x, v| x.max(v.abs()));
        if big > 1e100 {
            self.m.iter_mut().flatten().for_each(|v| *v /= big);
            self.ln_scale += big.ln();
        }
    }

    /// `ln‖self·v‖` for the Euclidean norm.
    pub fn ln_apply_norm(&self, v: [f64; 2]) -> f64 {
        let w = self.apply(v);
        w[0].hypot(w[1]).ln() + self.ln_scale
    }

    pub fn apply(&self, v: [f64; 2]) -> [f64; 2] {
        [
            self.m[0][0] * v[0] + self.m[0][1] * v[1],
            self.m[1][0] * v[0] + self.m[1][1] * v[1],
        ]
    }

    pub fn trace(&self) -> f64 {
        (self.m[0][0] + self.m[1][1]) * self.ln_scale.exp()
    }

    pub fn det(&self) -> f64 {
        (self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]) * (2.0 * self.ln_scale).exp()
    }
}

/// Transfer matrices of `u(n+1) + u(n−1) + V(n)u(n) = E u(n)` along a trace.
#[derive(Clone, Debug)]
pub struct TransferCocycle<'a> {
    pub trace: &'a PotentialTrace,
    pub energy: f64,
}

impl TransferCocycle<'_> {
    /// `A_E(n)`, mapping `(u(n), u(n−1))` to `(u(n+1), u(n))`.
    pub fn matrix(&self, n: i64) -> [[f64; 2]; 2] {
        [[self.energy - self.trace.at(n), -1.0], [1.0, 0.0]]
    }

    pub fn inverse_matrix(&self, n: i64) -> [[f64; 2]; 2] {
        [[0.0, 1.0], [-1.0, self.energy - self.trace.at(n)]]
    }

    /// `A(hi)···A(lo)`.
    pub fn forward(&self, lo: i64, hi: i64) -> ScaledMatrix {
        let mut acc = ScaledMatrix::identity();
        for n in lo..=hi {
            acc.left_mul(self.matrix(n));
        }
        acc
    }

    /// `A(lo)⁻¹···A(hi)⁻¹`, carrying `(u(hi+1), u(hi))` back to
    /// `(u(lo), u(lo−1))`.
    pub fn backward(&self, lo: i64, hi: i64) -> ScaledMatrix {
        let mut acc = ScaledMatrix::identity();
        for n in (lo..=hi).rev() {
            acc.left_mul(self.inverse_matrix(n));
        }
        acc
    }

    /// Largest `|det A(n) − 1|` over the trace.
    pub fn max_det_defect(&self) -> f64 {
        let w = self.trace.window as i64;
        (-w..=w)
            .map(|n| {
                let a = self.matrix(n);
                (a[0][0] * a[1][1] - a[0][1] * a[1][0] - 1.0).abs()
            })
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockBound {
    pub energy: f64,
    pub k: usize,
    /// `ln‖T_kΦ‖`, `ln‖T_{2k}Φ‖`, `ln‖T_{−k}Φ‖` with `‖Φ‖ = 1`.
    pub ln_norms: [f64; 3],
    pub satisfied: bool,
    /// `‖T_{2k}Φ − tr(T_k)T_kΦ + Φ‖`; zero for an exactly periodic block.
    pub cayley_hamilton_residual: f64,
    /// Whether the two-case argument from `T² − tr(T)·T + I = 0` certifies
    /// the same bound.
    pub cayley_hamilton_bound: bool,
}

/// The three-block Gordon bound at energy `E` for unit initial data `Φ`.
pub fn gordon_block_bound(trace: &PotentialTrace, energy: f64, k: usize, phi: [f64; 2]) -> Result<BlockBound> {
    if k == 0 || 2 * k > trace.window {
        return Err(Error::OutOfRange {
            index: k,
            len: trace.window / 2,
        });
    }
    let norm = phi[0].hypot(phi[1]);
    if !(norm > 0.0) {
        return Err(Error::InvalidInput("initial data must be non-zero".into()));
    }
    let phi = [phi[0] / norm, phi[1] / norm];
    let co = TransferCocycle { trace, energy };
    let k = k as i64;
    let tk = co.forward(1, k);
    let t2k = co.forward(1, 2 * k);
    let tmk = co.backward(-k + 1, 0);
    let ln_norms = [tk.ln_apply_norm(phi), t2k.ln_apply_norm(phi), tmk.ln_apply_norm(phi)];
    let satisfied = ln_norms.iter().cloned().fold(f64::NEG_INFINITY, f64::max) >= 0.5f64.ln();

    let cayley = if tk.ln_scale == 0.0 && t2k.ln_scale == 0.0 && tmk.ln_scale == 0.0 {
        let tr = tk.trace();
        let a = tk.apply(phi);
        let b = t2k.apply(phi);
        let c = tmk.apply(phi);
        let residual = (b[0] - tr * a[0] + phi[0]).hypot(b[1] - tr * a[1] + phi[1]);
        let (na, nb, nc) = (a[0].hypot(a[1]), b[0].hypot(b[1]), c[0].hypot(c[1]));
        // |tr| ≤ 1: Φ = tr·TΦ − T²Φ; otherwise TΦ + T⁻¹Φ = tr·Φ
        let bound = if tr.abs() <= 1.0 {
            na + nb >= 1.0 - 1e-9
        } else {
            na + nc >= tr.abs() * (1.0 - 1e-9)
        };
        let certified = bound && na.max(nb).max(nc) >= 0.5 * (1.0 - 1e-9);
        (residual, certified)
    } else {
        // growth beyond 1e100 already exceeds the bound
        (f64::NAN, true)
    };
    Ok(BlockBound {
        energy,
        k: k as usize,
        ln_norms,
        satisfied,
        cayley_hamilton_residual: cayley.0,
        cayley_hamilton_bound: cayley.1,
    })
}

/// Default size of a block-bound energy scan.
pub const ENERGY_GRID: usize = 201;

/// `count` equispaced energies over `[min V − 2, max V + 2]`.
pub fn energy_grid(trace: &PotentialTrace, count: usize) -> Vec<f64> {
    let lo = trace.samples.iter().cloned().fold(f64::INFINITY, f64::min) - 2.0;
    let hi = trace.samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 2.0;
    if count <= 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..count).map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64).collect()
}

/// i.i.d. uniform samples with the given mean and standard deviation.
pub fn iid_trace(window: usize, mean: f64, std: f64, seed: u64) -> PotentialTrace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = 3f64.sqrt() * std;
    let values = (0..2 * window + 1).map(|_| mean + rng.gen_range(-half..=half)).collect();
    PotentialTrace {
        origin: FlowPoint::base(0.0, 0.0),
        window,
        samples: values,
        ambiguous_steps: 0,
        provenance: format!("iid uniform seed {seed}"),
    }
}

/// Periodic extension of `block` over `|n| ≤ W`, with `V(0) = block[0]`.
pub fn periodic_trace(block: &[f64], window: usize) -> Result<PotentialTrace> {
    if block.is_empty() {
        return Err(Error::InvalidInput("empty period".into()));
    }
    let k = block.len() as i64;
    let w = window as i64;
    let values = (-w..=w).map(|n| block[n.rem_euclid(k) as usize]).collect();
    PotentialTrace::from_values(values, "periodic")
}
