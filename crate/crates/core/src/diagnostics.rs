//! Statistical experiments on the flow: recurrence census, correlation decay
//! and the localization contrast.

use std::f64::consts::TAU;

use num_bigint::BigInt;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::cfrac::FrequencyPair;
use crate::error::{Error, Result};
use crate::exact::{frac_mul_big, KahanSum};
use crate::flow::{FlowMap, MeasureSampler, SamplingMode};
use crate::schrodinger::{
    gordon_defect, iid_trace, localization_metrics, sample_potential, truncated_spectrum, Observable, PotentialTrace,
};
use crate::serde_util::big_dec;
use crate::tolerance::ToleranceSchema;
use crate::trig::TrigPolynomial;
use crate::exact::Rotation;
use num_complex::Complex64;

/// `1/n² ≤ {q x} ≤ 1/n − 1/n²`.
pub fn in_c_set(q: &BigInt, n: u32, x: f64) -> bool {
    let u = frac_mul_big(q, x);
    let n = n as f64;
    u >= 1.0 / (n * n) && u <= 1.0 / n - 1.0 / (n * n)
}

pub fn c_set_measure(n: u32) -> f64 {
    let n = n as f64;
    (1.0 / n - 2.0 / (n * n)).max(0.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CSetStat {
    pub label: String,
    pub n: u32,
    #[serde(with = "big_dec")]
    pub q: BigInt,
    pub exact: f64,
    pub empirical: f64,
    /// `√(p(1−p)/N)` at the exact `p`.
    pub stderr: f64,
    pub within_3_stderr: bool,
}

fn c_stat(label: String, q: &BigInt, n: u32, xs: &[f64]) -> CSetStat {
    let exact = c_set_measure(n);
    let hits = xs.iter().filter(|&&x| in_c_set(q, n, x)).count();
    let empirical = hits as f64 / xs.len() as f64;
    let stderr = (exact * (1.0 - exact) / xs.len() as f64).sqrt();
    CSetStat {
        label,
        n,
        q: q.clone(),
        exact,
        empirical,
        stderr,
        within_3_stderr: (empirical - exact).abs() <= 3.0 * stderr,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CensusSample {
    pub id: usize,
    pub x: f64,
    pub y: f64,
    pub s: f64,
    /// Membership in the level sets `Cₙ`, one flag per level.
    pub in_c: Vec<bool>,
    pub distances: Vec<f64>,
    pub radii: Vec<f64>,
    /// `ln(−ln d)/ln t` per level, when `0 < d < 1`.
    pub alpha_hat: Vec<Option<f64>>,
    pub witness: bool,
    pub ambiguous: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecurrenceCensus {
    #[serde(with = "crate::serde_util::big_dec_vec")]
    pub times: Vec<BigInt>,
    pub samples: Vec<CensusSample>,
    /// `Cₙ` for each built level, `n` the level's profile index.
    pub level_sets: Vec<CSetStat>,
    /// `Cₙ` at the requested literal indices, using the `n`-th convergent
    /// of `α`.
    pub index_sets: Vec<CSetStat>,
    pub union_fraction: f64,
    /// `1 − Π(1 − |Cₙ|)` under independence.
    pub union_prediction: f64,
    pub union_stderr: f64,
    pub witness_fraction: f64,
    pub witness_stderr: f64,
    /// Witness fraction per level.
    pub level_witness: Vec<f64>,
}

/// `‖tα‖ + ‖tα′‖ + 2·max(A(t)^{1/2}, floor)`.
pub fn census_radius(map: &FlowMap, t: &BigInt, tol: &ToleranceSchema) -> f64 {
    let tr = &map.translation;
    let r1 = map.ceiling.amplitude.analog(t, 0.5);
    let floor = tol.floor(map.deviation_magnitude(t));
    tr.alpha.circle_distance(t) + tr.alpha_prime.circle_distance(t) + 2.0 * r1.max(floor)
}

pub fn recurrence_census(
    map: &FlowMap,
    pair: &FrequencyPair,
    sampler: &MeasureSampler,
    levels: usize,
    samples: usize,
    index_sets: &[u32],
    tol: &ToleranceSchema,
) -> Result<RecurrenceCensus> {
    if samples < 100 {
        return Err(Error::Precondition("census needs at least 100 samples".into()));
    }
    if levels == 0 || levels > pair.levels {
        return Err(Error::Level(format!("census over {levels} levels")));
    }
    let n0 = map.ceiling.n0;
    let times: Vec<BigInt> = (1..=levels).map(|j| pair.recurrence_time(j)).collect();
    let radii: Vec<f64> = times.iter().map(|t| census_radius(map, t, tol)).collect();
    // warm the Birkhoff cache before the parallel loop
    for t in &times {
        map.deviation_magnitude(t);
    }
    let points = sampler.sample_points(samples, map)?;
    let rows: Vec<CensusSample> = points
        .par_iter()
        .enumerate()
        .map(|(id, p)| {
            let mut distances = Vec::with_capacity(levels);
            let mut alpha_hat = Vec::with_capacity(levels);
            let mut ambiguous = false;
            let mut witness = false;
            for (t, r) in times.iter().zip(&radii) {
                let d = map.return_distance(p, t)?;
                ambiguous |= d.ambiguous;
                witness |= d.distance <= *r;
                let lt = crate::tolerance::ln_big(t);
                alpha_hat.push((d.distance > 0.0 && d.distance < 1.0 && lt > 0.0).then(|| (-d.distance.ln()).ln() / lt));
                distances.push(d.distance);
            }
            let in_c = (1..=levels).map(|j| in_c_set(pair.q(j), n0 + j as u32 - 1, p.x)).collect();
            Ok(CensusSample {
                id,
                x: p.x,
                y: p.y,
                s: p.s,
                in_c,
                distances,
                radii: radii.clone(),
                alpha_hat,
                witness,
                ambiguous,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let xs: Vec<f64> = rows.iter().map(|r| r.x).collect();
    let level_sets: Vec<CSetStat> = (1..=levels)
        .map(|j| c_stat(format!("level {j}"), pair.q(j), n0 + j as u32 - 1, &xs))
        .collect();
    let mut idx = Vec::new();
    for &n in index_sets {
        if (n as usize) < pair.alpha_table.len() {
            idx.push(c_stat(format!("index {n}"), pair.alpha_table.q(n as usize), n, &xs));
        } else {
            return Err(Error::OutOfRange {
                index: n as usize,
                len: pair.alpha_table.len(),
            });
        }
    }
    let m = rows.len() as f64;
    let union_fraction = rows.iter().filter(|r| r.in_c.iter().any(|&b| b)).count() as f64 / m;
    let union_prediction = 1.0 - level_sets.iter().map(|c| 1.0 - c.exact).product::<f64>();
    let witness_fraction = rows.iter().filter(|r| r.witness).count() as f64 / m;
    let level_witness = (0..levels)
        .map(|j| rows.iter().filter(|r| r.distances[j] <= r.radii[j]).count() as f64 / m)
        .collect();
    Ok(RecurrenceCensus {
        times,
        samples: rows,
        level_sets,
        index_sets: idx,
        union_fraction,
        union_prediction,
        union_stderr: (union_prediction * (1.0 - union_prediction) / m).sqrt(),
        witness_fraction,
        witness_stderr: (witness_fraction * (1.0 - witness_fraction) / m).sqrt(),
        level_witness,
    })
}

/// Functions of the fiber phase `σ = s/φ(z)` and the base point.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FiberObservable {
    /// `1`.
    One,
    /// `cos(2πσ)`.
    CosFiber,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationSeries {
    pub observable: FiberObservable,
    pub grid: (usize, usize),
    pub times: Vec<u64>,
    pub values: Vec<f64>,
    /// Values on the doubled grid.
    pub refined: Vec<f64>,
    pub converged: bool,
    /// Largest fiber offset needed at any cell.
    pub max_offset: usize,
}

/// Integer times spread geometrically over `[1, t_max]`.
pub fn log_times(count: usize, t_max: u64) -> Vec<u64> {
    let mut out: Vec<u64> = (0..count)
        .map(|i| {
            let e = (t_max as f64).ln() * i as f64 / (count.max(2) - 1) as f64;
            e.exp().round() as u64
        })
        .collect();
    out.dedup();
    out
}

/// `∫_l^h cos(ωs − c) ds`.
fn cos_integral(omega: f64, c: f64, l: f64, h: f64) -> f64 {
    let half = 0.5 * omega * (h - l);
    let sinc = if half.abs() < 1e-8 { 1.0 - half * half / 6.0 } else { half.sin() / half };
    (h - l) * (0.5 * omega * (h + l) - c).cos() * sinc
}

/// `∫_l^h f((s − a)/φₖ)·g(s/φ₀) ds` for the fiber observables.
fn fiber_piece(obs: FiberObservable, a: f64, phik: f64, phi0: f64, l: f64, h: f64) -> f64 {
    match obs {
        FiberObservable::One => h - l,
        FiberObservable::CosFiber => {
            let (w1, w0) = (TAU / phik, TAU / phi0);
            let c = w1 * a;
            0.5 * (cos_integral(w1 + w0, c, l, h) + cos_integral(w1 - w0, c, l, h))
        }
    }
}

fn fiber_mean(obs: FiberObservable, phi0: f64) -> f64 {
    match obs {
        FiberObservable::One => phi0,
        FiberObservable::CosFiber => 0.0,
    }
}

/// `e(kα)` for every frequency of `p`.
fn unit_steps(p: &TrigPolynomial, rot: &Rotation) -> Vec<Complex64> {
    p.terms
        .iter()
        .map(|&(k, _)| Complex64::from_polar(1.0, TAU * rot.frac(&BigInt::from(k))))
        .collect()
}

/// Largest fiber offset the correlation kernel will tabulate.
pub const MAX_REACH: i64 = 4096;

struct FiberWindow {
    lo: i64,
    reach: i64,
    start_x: TrigPolynomial,
    start_y: TrigPolynomial,
}

fn fiber_window(map: &FlowMap, t: u64) -> Result<FiberWindow> {
    let c = &map.ceiling;
    let tr = &map.translation;
    // |S_tφ − t| ≤ t·Σ sup|layer|
    let dev = t as f64 * c.sup_deviation();
    let reach = ((dev + c.max_bound()) / c.min_bound()).ceil() as i64 + 1;
    if reach > MAX_REACH {
        return Err(Error::Budget(format!("correlation at t = {t} needs {reach} fiber offsets")));
    }
    let lo = (-reach).max(-(t as i64));
    let first = BigInt::from(t as i64 + lo);
    Ok(FiberWindow {
        lo,
        reach,
        start_x: c.x_total.birkhoff(&tr.alpha, &first),
        start_y: c.y_total.birkhoff(&tr.alpha_prime, &first),
    })
}

fn correlation_on_grid(
    map: &FlowMap,
    obs: FiberObservable,
    t: u64,
    win: &FiberWindow,
    gx: usize,
    gy: usize,
) -> Result<(f64, usize)> {
    let c = &map.ceiling;
    let tr = &map.translation;
    let (lo, reach) = (win.lo, win.reach);
    let first = BigInt::from(t as i64 + lo);
    // a_o(z) = S_{t+o}φ(z) − t = ax[o](x) + ay[o](y), o = lo ..= reach + 1
    let mut cx: Vec<f64> = win.start_x.eval_grid(gx, 0.0);
    let mut cy: Vec<f64> = win.start_y.eval_grid(gy, 0.0);
    let mut ax = Vec::with_capacity((reach + 2 - lo) as usize);
    let mut ay = Vec::with_capacity((reach + 2 - lo) as usize);
    // φ(z + mα) for consecutive m: exact phases at the start, then one
    // exact unit step per offset
    let mut xs = c.x_total.translate(&tr.alpha, &first);
    let mut ys = c.y_total.translate(&tr.alpha_prime, &first);
    let xstep = unit_steps(&c.x_total, &tr.alpha);
    let ystep = unit_steps(&c.y_total, &tr.alpha_prime);
    for o in lo..=reach + 1 {
        ax.push(cx.iter().map(|v| v + o as f64).collect::<Vec<f64>>());
        ay.push(cy.clone());
        let px = xs.eval_grid(gx, 0.0);
        let py = ys.eval_grid(gy, 0.0);
        cx.iter_mut().zip(&px).for_each(|(a, b)| *a += b);
        cy.iter_mut().zip(&py).for_each(|(a, b)| *a += b);
        xs.terms.iter_mut().zip(&xstep).for_each(|(t, s)| t.1 *= s);
        ys.terms.iter_mut().zip(&ystep).for_each(|(t, s)| t.1 *= s);
    }
    let px0 = c.x_total.eval_grid(gx, 0.0);
    let py0 = c.y_total.eval_grid(gy, 0.0);
    let n = ax.len();
    let rows: Vec<Result<(f64, f64, f64, usize)>> = (0..gx)
        .into_par_iter()
        .map(|i| {
            let mut num = KahanSum::default();
            let mut mass = KahanSum::default();
            let mut mean = KahanSum::default();
            let mut used = 0usize;
            for j in 0..gy {
                let phi0 = 1.0 + px0[i] + py0[j];
                let a = |k: usize| ax[k][i] + ay[k][j];
                if a(0) > 0.0 || a(n - 1) < phi0 {
                    return Err(Error::Budget(format!("fiber window too short at t = {t}")));
                }
                // last k with a(k) ≤ 0
                let (mut l, mut h) = (0usize, n - 1);
                while h - l > 1 {
                    let mid = (l + h) / 2;
                    if a(mid) <= 0.0 {
                        l = mid;
                    } else {
                        h = mid;
                    }
                }
                let mut cell = 0.0;
                let mut k = l;
                while k + 1 < n && a(k) < phi0 {
                    let (ak, ak1) = (a(k), a(k + 1));
                    let (p, q) = (ak.max(0.0), ak1.min(phi0));
                    if q > p {
                        cell += fiber_piece(obs, ak, ak1 - ak, phi0, p, q);
                        used = used.max((lo + k as i64).unsigned_abs() as usize);
                    }
                    k += 1;
                }
                num.add(cell);
                mass.add(phi0);
                mean.add(fiber_mean(obs, phi0));
            }
            Ok((num.value(), mass.value(), mean.value(), used))
        })
        .collect();
    let mut num = KahanSum::default();
    let mut mass = KahanSum::default();
    let mut mean = KahanSum::default();
    let mut max_off = 0;
    for r in rows {
        let (n, m, e, u) = r?;
        num.add(n);
        mass.add(m);
        mean.add(e);
        max_off = max_off.max(u);
    }
    let (num, mass, mean) = (num.value(), mass.value(), mean.value());
    let ef = mean / mass;
    Ok(((num / mass - ef * ef).abs(), max_off))
}

/// `|∫ f∘T^t·f dμ − (∫ f dμ)²|` for a fiber observable under the invariant
/// measure `dz ds / ∫φ`, with the fiber integral done exactly per cell.
pub fn correlation_decay(
    map: &FlowMap,
    obs: FiberObservable,
    times: &[u64],
    grid: (usize, usize),
    tol: &ToleranceSchema,
) -> Result<CorrelationSeries> {
    let (gx, gy) = grid;
    if gx < 8 || gy < 2 {
        return Err(Error::Precondition("grid too coarse".into()));
    }
    let mut values = Vec::with_capacity(times.len());
    let mut refined = Vec::with_capacity(times.len());
    let mut max_offset = 0;
    for &t in times {
        let win = fiber_window(map, t)?;
        let (v, o) = correlation_on_grid(map, obs, t, &win, gx, gy)?;
        let (r, o2) = correlation_on_grid(map, obs, t, &win, 2 * gx, 2 * gy)?;
        values.push(v);
        refined.push(r);
        max_offset = max_offset.max(o).max(o2);
    }
    let converged = values
        .iter()
        .zip(&refined)
        .all(|(a, b)| (a - b).abs() <= tol.refine_tol * b.abs().max(0.01));
    Ok(CorrelationSeries {
        observable: obs,
        grid,
        times: times.to_vec(),
        values,
        refined,
        converged,
        max_offset,
    })
}

/// Ranks starting at 1, ties sharing their average rank.
pub fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation; zero when either side is constant.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    if va == 0.0 || vb == 0.0 {
        0.0
    } else {
        cov / (va * vb).sqrt()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankSum {
    /// Mann–Whitney `U` of the first sample.
    pub u: f64,
    pub z: f64,
    /// Two-sided normal-approximation p-value.
    pub p_value: f64,
}

pub fn rank_sum(a: &[f64], b: &[f64]) -> RankSum {
    let (n1, n2) = (a.len() as f64, b.len() as f64);
    let all: Vec<f64> = a.iter().chain(b).copied().collect();
    let r = ranks(&all);
    let r1: f64 = r[..a.len()].iter().sum();
    let u = r1 - n1 * (n1 + 1.0) / 2.0;
    let mu = n1 * n2 / 2.0;
    // tie correction
    let n = n1 + n2;
    let mut sorted = all.clone();
    sorted.sort_by(f64::total_cmp);
    let mut ties = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let c = (j - i + 1) as f64;
        ties += c * c * c - c;
        i = j + 1;
    }
    let var = n1 * n2 / 12.0 * ((n + 1.0) - ties / (n * (n - 1.0)));
    let z = if var > 0.0 { (u - mu) / var.sqrt() } else { 0.0 };
    let p_value = 2.0 * (1.0 - Normal::standard().cdf(z.abs()));
    RankSum { u, z, p_value: p_value.min(1.0) }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quartiles {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
}

pub fn quartiles(v: &[f64]) -> Quartiles {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let at = |p: f64| {
        if s.is_empty() {
            return f64::NAN;
        }
        let x = p * (s.len() - 1) as f64;
        let (i, f) = (x.floor() as usize, x.fract());
        if i + 1 < s.len() {
            s[i] * (1.0 - f) + s[i + 1] * f
        } else {
            s[i]
        }
    };
    Quartiles {
        q1: at(0.25),
        median: at(0.5),
        q3: at(0.75),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopulationSummary {
    pub ipr: Quartiles,
    pub decay_rate: Quartiles,
    /// Per-trace median IPR.
    pub trace_ipr: Vec<f64>,
    /// Same, restricted to eigenvectors with edge mass below 10⁻³.
    pub trace_ipr_interior: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContrastReport {
    pub size: usize,
    pub structured: PopulationSummary,
    pub control: PopulationSummary,
    /// Rank-sum of per-trace median IPR, structured against control.
    pub ipr_rank_sum: RankSum,
    pub decay_rank_sum: RankSum,
    pub structured_le_control: bool,
}

fn summarize(traces: &[PotentialTrace], half: usize) -> Result<(PopulationSummary, Vec<f64>)> {
    let per: Vec<(f64, f64, f64)> = traces
        .par_iter()
        .map(|t| {
            let spec = truncated_spectrum(t, half)?;
            let m = localization_metrics(&spec.eigenvectors)?;
            let ipr: Vec<f64> = m.iter().map(|l| l.ipr).collect();
            let inner: Vec<f64> = m.iter().filter(|l| l.edge_mass < 1e-3).map(|l| l.ipr).collect();
            let dec: Vec<f64> = m.iter().map(|l| l.decay_rate).collect();
            Ok((quartiles(&ipr).median, quartiles(&inner).median, quartiles(&dec).median))
        })
        .collect::<Result<Vec<_>>>()?;
    let ipr: Vec<f64> = per.iter().map(|p| p.0).collect();
    let inner: Vec<f64> = per.iter().map(|p| p.1).collect();
    let dec: Vec<f64> = per.iter().map(|p| p.2).collect();
    Ok((
        PopulationSummary {
            ipr: quartiles(&ipr),
            decay_rate: quartiles(&dec),
            trace_ipr: ipr,
            trace_ipr_interior: inner,
        },
        dec,
    ))
}

/// Structured traces along sampled orbits against i.i.d. controls matched
/// in mean and variance.
pub fn localization_contrast(
    map: &FlowMap,
    obs: &Observable,
    samples: usize,
    size: usize,
    seed: u64,
    variance_factor: f64,
) -> Result<ContrastReport> {
    if samples < 20 || size < 200 {
        return Err(Error::Precondition("contrast needs samples >= 20 and size >= 200".into()));
    }
    let half = size / 2;
    let sampler = MeasureSampler {
        seed,
        mode: SamplingMode::Haar,
    };
    let points = sampler.sample_points(samples, map)?;
    let structured: Vec<PotentialTrace> = points
        .par_iter()
        .map(|p| sample_potential(map, obs, p, half))
        .collect::<Result<Vec<_>>>()?;
    let controls: Vec<PotentialTrace> = structured
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let (mean, std) = t.mean_and_std();
            iid_trace(half, mean, std * variance_factor.sqrt(), seed.wrapping_add(1000 + i as u64))
        })
        .collect();
    let (s, sdec) = summarize(&structured, half)?;
    let (c, cdec) = summarize(&controls, half)?;
    Ok(ContrastReport {
        size: 2 * half + 1,
        ipr_rank_sum: rank_sum(&s.trace_ipr, &c.trace_ipr),
        decay_rank_sum: rank_sum(&sdec, &cdec),
        structured_le_control: s.ipr.median <= c.ipr.median,
        structured: s,
        control: c,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GordonContrast {
    pub k: usize,
    pub c_level: Option<usize>,
    pub structured: Vec<f64>,
    pub control: Vec<f64>,
    pub structured_median: f64,
    pub control_median: f64,
    /// `control_median / structured_median`.
    pub ratio: f64,
}

/// Gordon defects at period `k` along sampled orbits against matched i.i.d.
/// controls. With `c_level = Some(j)` the structured base points are drawn
/// from `Cₙ × 𝕋` of level `j`, where the return at `qⱼq′ⱼ` happens.
pub fn gordon_contrast(
    map: &FlowMap,
    pair: &FrequencyPair,
    obs: &Observable,
    samples: usize,
    k: usize,
    c_level: Option<usize>,
    seed: u64,
) -> Result<GordonContrast> {
    let sampler = MeasureSampler {
        seed,
        mode: SamplingMode::Haar,
    };
    let points = match c_level {
        None => sampler.sample_points(samples, map)?,
        Some(j) => {
            if j == 0 || j > pair.levels {
                return Err(Error::Level(format!("no level {j}")));
            }
            let q = pair.q(j).clone();
            let n = map.ceiling.n0 + j as u32 - 1;
            sampler.sample_where(samples, map, |x, _| in_c_set(&q, n, x), 1_000_000)?
        }
    };
    let rows: Vec<(f64, f64)> = points
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let t = sample_potential(map, obs, p, 2 * k)?;
            let (mean, std) = t.mean_and_std();
            let c = iid_trace(2 * k, mean, std, seed.wrapping_add(5000 + i as u64));
            Ok((gordon_defect(&t, k)?, gordon_defect(&c, k)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let structured: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let control: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let sm = quartiles(&structured).median;
    let cm = quartiles(&control).median;
    Ok(GordonContrast {
        k,
        c_level,
        structured,
        control,
        structured_median: sm,
        control_median: cm,
        ratio: cm / sm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::ToPrimitive;

    #[test]
    fn spearman_basics() {
        let t = [1.0, 2.0, 3.0, 4.0];
        assert!((spearman(&t, &[4.0, 3.0, 2.0, 1.0]) + 1.0).abs() < 1e-15);
        assert_eq!(spearman(&t, &[0.5; 4]), 0.0);
        assert_eq!(ranks(&[3.0, 1.0, 3.0]), vec![2.5, 1.0, 2.5]);
    }

    #[test]
    fn rank_sum_detects_shift() {
        let a: Vec<f64> = (0..30).map(|i| i as f64).collect();
        let b: Vec<f64> = (0..30).map(|i| i as f64 + 100.0).collect();
        assert!(rank_sum(&a, &b).p_value < 1e-6);
        assert!(rank_sum(&a, &a).p_value > 0.99);
    }

    #[test]
    fn fiber_piece_matches_quadrature() {
        let (a, pk, p0, l, h) = (0.3, 1.1, 0.9, 0.35, 0.8);
        let n = 20000;
        let dx = (h - l) / n as f64;
        let num: f64 = (0..n)
            .map(|i| {
                let s = l + (i as f64 + 0.5) * dx;
                (TAU * (s - a) / pk).cos() * (TAU * s / p0).cos() * dx
            })
            .sum();
        assert!((fiber_piece(FiberObservable::CosFiber, a, pk, p0, l, h) - num).abs() < 1e-8);
    }

    #[test]
    fn c_set_lengths() {
        assert_eq!(c_set_measure(2), 0.0);
        assert!((c_set_measure(3) - 1.0 / 9.0).abs() < 1e-15);
        assert!(in_c_set(&BigInt::from(1), 3, 0.2));
        let huge: BigInt = BigInt::from(3u8).pow(90) * 2u8 + 1u8;
        let x = 0.3;
        let exact = (num_rational::BigRational::from_float(x).unwrap() * num_rational::BigRational::from_integer(huge.clone())).fract();
        assert!((frac_mul_big(&huge, x) - exact.to_f64().unwrap()).abs() < 1e-15);
        assert!(!in_c_set(&BigInt::from(1), 3, 0.25));
    }
}
