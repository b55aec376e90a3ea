//! Amplitude schedules and the scaled tolerances derived from them.
//!
//! Every bound of the form `e^{−c·f}` in the construction is restated as
//! `A(f)^c`, where `A` is the amplitude schedule applied to the same
//! argument; the literal schedule reproduces the original bounds exactly.

use num_bigint::BigInt;
use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::big_to_f64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AmplitudeSchedule {
    /// `e^{−q⁴}`
    PaperLiteral,
    /// `q^{−power}`
    Poly { power: u32 },
    /// `max(e^{−q}, floor)`
    ExpMild { floor: f64 },
}

impl AmplitudeSchedule {
    pub fn parse(spec: &str) -> Result<Self> {
        let bad = || Error::InvalidInput(format!("bad amplitude spec `{spec}`"));
        match spec.split_once(':') {
            None => match spec {
                "paper-literal" => Ok(Self::PaperLiteral),
                "poly" => Ok(Self::Poly { power: 4 }),
                "exp-mild" => Ok(Self::ExpMild { floor: 1e-300 }),
                _ => Err(bad()),
            },
            Some(("poly", p)) => Ok(Self::Poly {
                power: p.parse().map_err(|_| bad())?,
            }),
            Some(("exp-mild", f)) => Ok(Self::ExpMild {
                floor: f.parse().map_err(|_| bad())?,
            }),
            _ => Err(bad()),
        }
    }

    pub fn name(&self) -> String {
        match self {
            Self::PaperLiteral => "paper-literal".into(),
            Self::Poly { power } if *power == 4 => "poly".into(),
            Self::Poly { power } => format!("poly:{power}"),
            Self::ExpMild { floor } => format!("exp-mild:{floor:e}"),
        }
    }

    /// `ln A(q)`; finite for every positive `q`.
    pub fn ln_amplitude(&self, q: &BigInt) -> f64 {
        let lnq = ln_big(q);
        match self {
            Self::PaperLiteral => -(4.0 * lnq).exp(),
            Self::Poly { power } => -(*power as f64) * lnq,
            Self::ExpMild { floor } => (-big_to_f64(q)).max(floor.ln()),
        }
    }

    pub fn amplitude(&self, q: &BigInt) -> f64 {
        self.ln_amplitude(q).exp()
    }

    /// Analogue of `e^{−c·(arg)⁴}`: `A(arg)^c`.
    pub fn analog(&self, arg: &BigInt, c: f64) -> f64 {
        (c * self.ln_amplitude(arg)).exp()
    }
}

/// Natural log of a positive big integer.
pub fn ln_big(q: &BigInt) -> f64 {
    let bits = q.bits();
    if bits <= 1000 {
        q.to_f64().unwrap().ln()
    } else {
        let sh = bits - 64;
        (q >> sh as usize).to_f64().unwrap().ln() + sh as f64 * std::f64::consts::LN_2
    }
}

/// Explicit numeric knobs shared by the verification stages.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToleranceSchema {
    /// Multiplier on `u·Σ|terms|` below which a double-precision result is
    /// indistinguishable from zero.
    pub kappa: f64,
    /// Kernel primitive quadrature tolerance.
    pub quad_tol: f64,
    /// Highest harmonic kept in a profile truncation.
    pub harmonic_budget: usize,
    /// Samples per kept harmonic in the truncation DFT.
    pub oversample: usize,
    /// Stretch window constants `[c₁/A(q)², c₂/A(q′)²]`.
    pub window_c1: f64,
    pub window_c2: f64,
    /// Grid points per shortest period in sup/inf searches.
    pub grid_per_period: usize,
    /// Number of `m` values sampled for the derivative Birkhoff bound.
    pub sampled_m: usize,
    /// Cap on the Gordon exponent.
    pub gordon_k_cap: u32,
    /// Relative disagreement allowed between grid and refined grid.
    pub refine_tol: f64,
}

impl Default for ToleranceSchema {
    fn default() -> Self {
        ToleranceSchema {
            kappa: 256.0,
            quad_tol: 1e-14,
            harmonic_budget: 2048,
            oversample: 8,
            window_c1: 0.5,
            window_c2: 2.0,
            grid_per_period: 64,
            sampled_m: 64,
            gordon_k_cap: 20,
            refine_tol: 0.05,
        }
    }
}

impl ToleranceSchema {
    /// The arithmetic floor for a sum whose terms add to `magnitude`.
    pub fn floor(&self, magnitude: f64) -> f64 {
        self.kappa * f64::EPSILON * magnitude
    }

    pub fn validate(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.kappa >= 1.0) {
            v.push("tolerances.kappa must be >= 1".into());
        }
        if !(self.quad_tol > 0.0 && self.quad_tol < 1e-6) {
            v.push("tolerances.quad_tol must lie in (0, 1e-6)".into());
        }
        if self.harmonic_budget < 16 {
            v.push("tolerances.harmonic_budget must be >= 16".into());
        }
        if self.oversample < 4 {
            v.push("tolerances.oversample must be >= 4".into());
        }
        if !(self.window_c1 > 0.0 && self.window_c2 > self.window_c1) {
            v.push("tolerances.window_c1/window_c2 must satisfy 0 < c1 < c2".into());
        }
        if self.grid_per_period < 4 {
            v.push("tolerances.grid_per_period must be >= 4".into());
        }
        if self.sampled_m == 0 {
            v.push("tolerances.sampled_m must be >= 1".into());
        }
        if self.gordon_k_cap == 0 {
            v.push("tolerances.gordon_k_cap must be >= 1".into());
        }
        if !(self.refine_tol > 0.0) {
            v.push("tolerances.refine_tol must be positive".into());
        }
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn poly_amplitude_is_inverse_fourth_power() {
        let a = AmplitudeSchedule::parse("poly").unwrap();
        assert!((a.amplitude(&BigInt::from(4)) - 1.0 / 256.0).abs() < 1e-18);
        assert!((a.analog(&BigInt::from(260), 0.5) - 1.0 / 67600.0).abs() < 1e-18);
        let big = BigInt::from(10).pow(400);
        assert!((a.ln_amplitude(&big) + 1600.0 * 10f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn literal_amplitude_underflows_gracefully() {
        let a = AmplitudeSchedule::PaperLiteral;
        assert!((a.ln_amplitude(&BigInt::from(2)) + 16.0).abs() < 1e-12);
        assert_eq!(a.amplitude(&BigInt::from(100)), 0.0);
    }

    #[test]
    fn parse_names() {
        for s in ["poly", "poly:3", "paper-literal"] {
            assert_eq!(AmplitudeSchedule::parse(s).unwrap().name(), s);
        }
        assert!(AmplitudeSchedule::parse("poly:x").is_err());
        assert!(ToleranceSchema::default().validate().is_empty());
    }
}
