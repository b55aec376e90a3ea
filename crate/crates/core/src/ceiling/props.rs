//! Checks of the six layer properties at the configured scale.

use std::f64::consts::PI;

use num_bigint::BigInt;
use num_traits::ToPrimitive;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::CeilingFunction;
use crate::birkhoff::Translation;
use crate::cfrac::FrequencyPair;
use crate::error::{Error, Result};
use crate::exact::{big_to_f64, Phase};
use crate::serde_util::{big_dec, f64_dec};
use crate::tolerance::ToleranceSchema;
use crate::trig::TrigPolynomial;

/// Largest FFT grid used for a single sup search.
const MAX_GRID: usize = 1 << 22;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropertyEntry {
    pub property: u8,
    /// Derivative order for property (2).
    pub order: Option<u32>,
    #[serde(with = "f64_dec")]
    pub measured: f64,
    #[serde(with = "f64_dec")]
    pub bound: f64,
    #[serde(with = "f64_dec")]
    pub floor: f64,
    /// Positive when the property holds; `inf` for vacuous checks.
    #[serde(with = "f64_dec")]
    pub margin: f64,
    pub pass: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelReport {
    pub level: usize,
    pub n: u32,
    #[serde(with = "big_dec")]
    pub q: BigInt,
    #[serde(with = "big_dec")]
    pub q_prime: BigInt,
    #[serde(with = "f64_dec")]
    pub amplitude: f64,
    pub entries: Vec<PropertyEntry>,
    /// `‖X̃ − X̂‖_{C^r}` bounds against `A(qq′)^{5/4}` and `A(qq′)`.
    pub truncation: [f64; 4],
    #[serde(with = "f64_dec")]
    pub truncation_tolerance: f64,
    #[serde(with = "f64_dec")]
    pub smallness_tolerance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prop36Report {
    pub levels: Vec<LevelReport>,
    pub all_pass: bool,
}

impl Prop36Report {
    /// Whether every entry of property `p` passes.
    pub fn property_passes(&self, p: u8) -> bool {
        self.levels
            .iter()
            .flat_map(|l| &l.entries)
            .filter(|e| e.property == p)
            .all(|e| e.pass)
    }

    pub fn entries(&self, p: u8) -> impl Iterator<Item = (&LevelReport, &PropertyEntry)> {
        self.levels
            .iter()
            .flat_map(|l| l.entries.iter().map(move |e| (l, e)))
            .filter(move |(_, e)| e.property == p)
    }
}

fn upper(property: u8, order: Option<u32>, measured: f64, bound: f64, floor: f64, detail: String) -> PropertyEntry {
    let limit = bound.max(floor);
    PropertyEntry {
        property,
        order,
        measured,
        bound,
        floor,
        margin: limit - measured,
        pass: measured <= limit,
        detail,
    }
}

fn grid_size(per_period: usize, periods: usize) -> usize {
    (per_period * periods).next_power_of_two().min(MAX_GRID)
}

/// Runs properties (1)–(6) for every built level.
pub fn verify_properties(
    ceiling: &CeilingFunction,
    pair: &FrequencyPair,
    tol: &ToleranceSchema,
    seed: u64,
) -> Result<Prop36Report> {
    if ceiling.levels() == 0 {
        return Err(Error::Level("ceiling has no layers".into()));
    }
    if ceiling.levels() > pair.levels {
        return Err(Error::Level("ceiling has more levels than the pair".into()));
    }
    let tr = Translation::from_pair(pair);
    let amp = &ceiling.amplitude;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut levels = Vec::new();
    for (idx, layer) in ceiling.x_layers.iter().enumerate() {
        let j = idx + 1;
        if &layer.q != pair.q(j) {
            return Err(Error::Level(format!("layer {j} built for a different pair")));
        }
        let n = layer.n;
        let nf = n as f64;
        let q = pair.q(j);
        let qp = pair.q_prime(j);
        let qf = big_to_f64(q);
        let a = layer.amplitude;
        let qqp = q * qp;
        let small_tol = amp.analog(&qqp, 1.0);
        let trunc_tol = amp.analog(&qqp, 1.25);
        let mut entries = Vec::new();

        entries.push(PropertyEntry {
            property: 1,
            order: None,
            measured: layer.poly.constant.abs(),
            bound: 0.0,
            floor: 0.0,
            margin: -layer.poly.constant.abs(),
            pass: layer.poly.constant == 0.0,
            detail: "zero-frequency coefficient".into(),
        });

        // unit profile on its own period; physical derivatives pick up q per order
        let per = tol.grid_per_period;
        let g = grid_size(per, layer.harmonics.max(1));
        let h = 1.0 / g as f64;
        let derivs: Vec<TrigPolynomial> = (0..=4).map(|r| layer.profile.nth_derivative(r)).collect();
        let grids: Vec<Vec<f64>> = derivs[..4].iter().map(|p| p.eval_grid(g, 0.0)).collect();
        let l1: Vec<f64> = derivs.iter().map(|p| p.l1_norm()).collect();

        // (2) C^r norms
        let c2_bound = amp.analog(q, 0.5);
        let mut cr_grid: f64 = 0.0;
        let mut cr_l1: f64 = 0.0;
        for r in 0..=3u32 {
            let scale = a * qf.powi(r as i32);
            let sup = grids[r as usize].iter().fold(0.0f64, |m, v| m.max(v.abs())) * scale;
            let inflated = sup + 0.5 * h * l1[r as usize + 1] * scale;
            cr_grid = cr_grid.max(sup);
            cr_l1 = cr_l1.max(l1[r as usize] * scale);
            let floor = tol.floor(l1[r as usize] * scale);
            entries.push(upper(
                2,
                Some(r),
                cr_grid,
                c2_bound,
                floor,
                format!("grid sup with Lipschitz inflation {inflated:e}; coefficient l1 bound {cr_l1:e}"),
            ));
        }

        // (3) smallness on {q x} ≤ 1/n
        let zone: f64 = (0..g)
            .filter(|&i| (i as f64) * h <= 1.0 / nf)
            .map(|i| grids[0][i].abs())
            .fold(0.0, f64::max)
            * a;
        let inflated = zone + 0.5 * h * l1[1] * a;
        entries.push(upper(
            3,
            None,
            zone,
            small_tol,
            tol.floor(l1[0] * a),
            format!(
                "grid sup over {{q x}} <= 1/n; Lipschitz-inflated {inflated:e}; truncation bound {:e}",
                layer.truncation[0]
            ),
        ));

        // (4) plateau derivative
        let thr = qf * a;
        let intervals = [
            (2.0 / nf, 0.25 - 2.0 / nf, 1.0),
            (0.25 + 2.0 / nf, 0.5 - 2.0 / nf, -1.0),
            (0.5 + 2.0 / nf, 0.75 - 2.0 / nf, -1.0),
            (0.75 + 2.0 / nf, 1.0 - 2.0 / nf, 1.0),
        ];
        let mut worst = f64::INFINITY;
        for &(lo, hi, sign) in &intervals {
            for i in 0..g {
                let u = i as f64 * h;
                if u >= lo && u <= hi {
                    worst = worst.min(sign * grids[1][i] * a * qf);
                }
            }
            // interval endpoints
            for u in [lo, hi] {
                worst = worst.min(sign * derivs[1].eval(u) * a * qf);
            }
        }
        let allowance = layer.truncation[1] + tol.floor(l1[1] * a * qf);
        let need = thr - allowance;
        entries.push(PropertyEntry {
            property: 4,
            order: None,
            measured: worst,
            bound: thr,
            floor: allowance,
            margin: worst - need,
            pass: worst >= need,
            detail: "signed grid inf of X' on the four plateau intervals".into(),
        });

        // (5) and (6) on the sum of lower layers
        let lower: Vec<&TrigPolynomial> = ceiling.x_layers[..idx].iter().map(|l| &l.poly).collect();
        if lower.is_empty() {
            entries.push(PropertyEntry {
                property: 5,
                order: None,
                measured: 0.0,
                bound: small_tol,
                floor: 0.0,
                margin: f64::INFINITY,
                pass: true,
                detail: "empty lower sum".into(),
            });
            entries.push(PropertyEntry {
                property: 6,
                order: None,
                measured: 0.0,
                bound: qf,
                floor: 0.0,
                margin: f64::INFINITY,
                pass: true,
                detail: "empty lower sum".into(),
            });
        } else {
            let p = lower.iter().fold(TrigPolynomial::default(), |acc, l| acc.add(l));
            let s = p.birkhoff(&tr.alpha, q);
            let top = s.degree_bound().to_usize().unwrap_or(MAX_GRID);
            let gs = grid_size(per, top);
            let sup = s.eval_grid(gs, 0.0).iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let hat_sum: f64 = ceiling.x_layers[..idx]
                .iter()
                .map(|l| l.amplitude * l.profile.l1_norm())
                .sum();
            let chain = 4.0 * PI * qf.powi(3) / big_to_f64(pair.q(j + 1)) * hat_sum;
            entries.push(upper(
                5,
                None,
                sup,
                small_tol,
                tol.floor(s.l1_norm()),
                format!(
                    "grid sup on {gs} points; coefficient l1 bound {:e}; proof-chain bound {chain:e}",
                    s.l1_norm()
                ),
            ));

            let dp = p.derivative();
            // sup over all m: |S_m e(kx)| ≤ 1/|sin(πkα)|
            let certified: f64 = dp
                .terms
                .iter()
                .map(|&(k, c)| {
                    let ph = Phase {
                        residue: tr.alpha.residue(&BigInt::from(k)),
                        den: tr.alpha.den().clone(),
                    };
                    2.0 * c.norm() / ph.sin_pi()
                })
                .sum();
            let mut sampled: f64 = 0.0;
            let hi = big_to_f64(pair.q(j + 1)).ln();
            for i in 0..tol.sampled_m {
                let m = if i == 0 {
                    q.clone()
                } else {
                    let e: f64 = rng.gen_range(0.0..hi);
                    BigInt::from(e.exp().floor().max(1.0) as u128)
                };
                sampled = sampled.max(dp.birkhoff(&tr.alpha, &m).l1_norm());
            }
            entries.push(upper(
                6,
                None,
                certified,
                qf,
                tol.floor(dp.l1_norm()),
                format!("bound over all m; largest coefficient l1 over {} sampled m {sampled:e}", tol.sampled_m),
            ));
        }

        levels.push(LevelReport {
            level: j,
            n,
            q: q.clone(),
            q_prime: qp.clone(),
            amplitude: a,
            entries,
            truncation: layer.truncation,
            truncation_tolerance: trunc_tol,
            smallness_tolerance: small_tol,
        });
    }
    let all_pass = levels.iter().all(|l| l.entries.iter().all(|e| e.pass));
    Ok(Prop36Report { levels, all_pass })
}
