//! Smooth step `θ` and the plateau profile built from it.
//!
//! Everything here is expressed in the rescaled coordinate `u = {qₙx}`, so a
//! layer profile does not depend on `qₙ`; the physical derivative picks up a
//! factor `qₙ` per order.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// `θ(x) = e^{−1/x} / (e^{−1/x} + e^{−1/(1−x)})` on `(0,1)`, 0 below, 1 above.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BumpKernel;

impl BumpKernel {
    pub const MAX_ORDER: usize = 3;

    pub fn eval(&self, x: f64) -> f64 {
        self.derivatives(x)[0]
    }

    /// `[θ, θ′, θ″, θ‴]` at `x`.
    pub fn derivatives(&self, x: f64) -> [f64; 4] {
        if x <= 0.0 {
            return [0.0; 4];
        }
        if x >= 1.0 {
            return [1.0, 0.0, 0.0, 0.0];
        }
        let y = 1.0 - x;
        let l = 1.0 / y - 1.0 / x;
        let l1 = 1.0 / (y * y) + 1.0 / (x * x);
        let l2 = 2.0 / (y * y * y) - 2.0 / (x * x * x);
        let l3 = 6.0 / (y * y * y * y) + 6.0 / (x * x * x * x);
        // logistic with both tails computed without cancellation
        let (s, t) = if l >= 0.0 {
            let e = (-l).exp();
            (1.0 / (1.0 + e), e / (1.0 + e))
        } else {
            let e = l.exp();
            (e / (1.0 + e), 1.0 / (1.0 + e))
        };
        let st = s * t;
        if st == 0.0 {
            return [s, 0.0, 0.0, 0.0];
        }
        let d1 = st * l1;
        let d2 = st * ((t - s) * l1 * l1 + l2);
        let d3 = st * ((1.0 - 6.0 * st) * l1 * l1 * l1 + 3.0 * (t - s) * l1 * l2 + l3);
        [s, d1, d2, d3]
    }

    /// `Θ(y) = ∫₀^y θ`, exact outside `(0,1)`.
    pub fn primitive(&self, y: f64, table: &PrimitiveTable) -> f64 {
        if y <= 0.0 {
            0.0
        } else if y >= 1.0 {
            0.5 + (y - 1.0)
        } else {
            table.eval(y)
        }
    }
}

/// `Θ` on `[0,1]` from composite adaptive Simpson between `K` nodes, plus
/// one short adaptive integral from the nearest node below.
#[derive(Clone, Debug)]
pub struct PrimitiveTable {
    nodes: Vec<f64>,
    tol: f64,
    pub error_bound: f64,
}

impl PrimitiveTable {
    pub fn new(tol: f64) -> Result<Self> {
        const K: usize = 256;
        let k = BumpKernel;
        let f = |x: f64| k.eval(x);
        let mut nodes = Vec::with_capacity(K + 1);
        nodes.push(0.0);
        let mut acc = 0.0;
        let mut err = 0.0;
        for i in 0..K {
            let (a, b) = (i as f64 / K as f64, (i + 1) as f64 / K as f64);
            let (v, e) = adaptive_simpson(&f, a, b, tol, 60)?;
            acc += v;
            err += e;
            nodes.push(acc);
        }
        if (acc - 0.5).abs() > 64.0 * tol.max(f64::EPSILON) {
            return Err(Error::Quadrature((acc - 0.5).abs()));
        }
        Ok(PrimitiveTable {
            nodes,
            tol,
            error_bound: err,
        })
    }

    fn eval(&self, y: f64) -> f64 {
        let k = (self.nodes.len() - 1) as f64;
        let i = ((y * k).floor() as usize).min(self.nodes.len() - 2);
        let a = i as f64 / k;
        let kern = BumpKernel;
        let f = |x: f64| kern.eval(x);
        let (v, _) = adaptive_simpson(&f, a, y, self.tol, 60).expect("kernel quadrature");
        self.nodes[i] + v
    }
}

/// Adaptive Simpson with Richardson correction; returns value and the
/// accumulated error estimate.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    tol: f64,
    max_depth: u32,
) -> Result<(f64, f64)> {
    if b <= a {
        return Ok((0.0, 0.0));
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let mut err = 0.0;
    let v = simpson_rec(f, a, b, fa, fm, fb, whole, tol, max_depth, &mut err)?;
    Ok((v, err))
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
    err: &mut f64,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol {
        *err += delta.abs() / 15.0;
        return Ok(left + right + delta / 15.0);
    }
    if depth == 0 {
        return Err(Error::Quadrature(delta.abs()));
    }
    let l = simpson_rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1, err)?;
    let r = simpson_rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1, err)?;
    Ok(l + r)
}

/// The plateau shape of level `n`: `θₙ`, its primitive `Uₙ`, and the
/// derived `Vₙ`, `Wₙ`, all in the rescaled coordinate `u`.
#[derive(Clone, Debug)]
pub struct StepProfile {
    pub n: u32,
    table: PrimitiveTable,
}

impl StepProfile {
    pub fn new(n: u32, quad_tol: f64) -> Result<Self> {
        if n < 17 {
            return Err(Error::PlateauEmpty(n));
        }
        Ok(StepProfile {
            n,
            table: PrimitiveTable::new(quad_tol)?,
        })
    }

    pub fn quadrature_error(&self) -> f64 {
        self.table.error_bound
    }

    fn nf(&self) -> f64 {
        self.n as f64
    }

    /// `θₙ(u) = θ(nu − 1) − θ(nu − n/4 + 2)`.
    pub fn theta_n(&self, u: f64) -> f64 {
        let n = self.nf();
        BumpKernel.eval(n * u - 1.0) - BumpKernel.eval(n * u - n / 4.0 + 2.0)
    }

    /// Derivatives `[θₙ, θₙ′, θₙ″, θₙ‴]` with respect to `u`.
    pub fn theta_n_derivatives(&self, u: f64) -> [f64; 4] {
        let n = self.nf();
        let a = BumpKernel.derivatives(n * u - 1.0);
        let b = BumpKernel.derivatives(n * u - n / 4.0 + 2.0);
        let mut out = [0.0; 4];
        let mut scale = 1.0;
        for r in 0..4 {
            out[r] = scale * (a[r] - b[r]);
            scale *= n;
        }
        out
    }

    /// `Uₙ(u) = ∫_{−∞}^u θₙ`.
    pub fn u_n(&self, u: f64) -> f64 {
        let n = self.nf();
        let k = BumpKernel;
        (k.primitive(n * u - 1.0, &self.table) - k.primitive(n * u - n / 4.0 + 2.0, &self.table)) / n
    }

    /// `Vₙ(u) = Uₙ(u) − Uₙ(u − ¼)`.
    pub fn v_n(&self, u: f64) -> f64 {
        self.u_n(u) - self.u_n(u - 0.25)
    }

    /// `Wₙ(u) = Vₙ(u) − Vₙ(u − ½)`, supported in `[0,1]`.
    pub fn w_n(&self, u: f64) -> f64 {
        let n = self.nf();
        if u <= 1.0 / n || u >= 1.0 - 1.0 / n || (u - 0.5).abs() <= 1.0 / n {
            return 0.0;
        }
        self.v_n(u) - self.v_n(u - 0.5)
    }

    /// `Wₙ′(u)`, closed form in `θ`.
    pub fn w_n_prime(&self, u: f64) -> f64 {
        self.theta_n(u) - self.theta_n(u - 0.25) - self.theta_n(u - 0.5) + self.theta_n(u - 0.75)
    }

    /// `[Wₙ′, Wₙ″, Wₙ‴]` with respect to `u`.
    pub fn w_n_higher(&self, u: f64) -> [f64; 3] {
        let mut out = [0.0; 3];
        for (shift, sign) in [(0.0, 1.0), (0.25, -1.0), (0.5, -1.0), (0.75, 1.0)] {
            let d = self.theta_n_derivatives(u - shift);
            for r in 0..3 {
                out[r] += sign * d[r];
            }
        }
        out
    }

    /// `Jₙ = [2/n, ¼ − 2/n]` in `u` units.
    pub fn plateau(&self) -> (f64, f64) {
        (2.0 / self.nf(), 0.25 - 2.0 / self.nf())
    }

    /// Zero set of `Wₙ` on `[0,1]` as intervals.
    pub fn zero_zones(&self) -> [(f64, f64); 3] {
        let e = 1.0 / self.nf();
        [(0.0, e), (0.5 - e, 0.5 + e), (1.0 - e, 1.0)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_limits_and_symmetry() {
        let k = BumpKernel;
        assert_eq!(k.eval(-0.3), 0.0);
        assert_eq!(k.eval(1.7), 1.0);
        for i in 1..100 {
            let x = i as f64 / 100.0;
            assert!((k.eval(x) + k.eval(1.0 - x) - 1.0).abs() < 1e-15);
            assert!((0.0..=1.0).contains(&k.eval(x)));
        }
        let d = k.derivatives(1e-3);
        assert!(d.iter().all(|v| v.abs() < 1e-300 || v.is_finite()));
    }

    #[test]
    fn kernel_derivatives_match_finite_differences() {
        let k = BumpKernel;
        let h = 1e-5;
        for &x in &[0.1, 0.3, 0.5, 0.62, 0.9] {
            let d = k.derivatives(x);
            for r in 0..3 {
                let fd = (k.derivatives(x + h)[r] - k.derivatives(x - h)[r]) / (2.0 * h);
                assert!((fd - d[r + 1]).abs() < 1e-5 * (1.0 + d[r + 1].abs()), "x={x} r={r}");
            }
        }
    }

    #[test]
    fn primitive_integrates_to_half() {
        let t = PrimitiveTable::new(1e-14).unwrap();
        let k = BumpKernel;
        assert!((k.primitive(1.0, &t) - 0.5).abs() < 1e-15);
        // θ(1−x) = 1 − θ(x) gives Θ(1−y) = ½ − y + Θ(y)
        for i in 1..20 {
            let y = i as f64 / 20.0;
            let lhs = k.primitive(1.0 - y, &t);
            let rhs = 0.5 - y + k.primitive(y, &t);
            assert!((lhs - rhs).abs() < 1e-14, "y={y}");
        }
    }

    #[test]
    fn profile_structure() {
        let p = StepProfile::new(17, 1e-14).unwrap();
        let n = 17.0;
        assert_eq!(p.theta_n(2.0 / n), 1.0);
        assert_eq!(p.w_n(1.0 / (2.0 * n)), 0.0);
        let (a, b) = p.plateau();
        for i in 0..=20 {
            let u = a + (b - a) * i as f64 / 20.0;
            assert!((p.w_n_prime(u) - 1.0).abs() < 1e-10);
            assert!((p.w_n_prime(u + 0.25) + 1.0).abs() < 1e-10);
            assert!((p.w_n_prime(u + 0.5) + 1.0).abs() < 1e-10);
            assert!((p.w_n_prime(u + 0.75) - 1.0).abs() < 1e-10);
        }
        assert!(StepProfile::new(16, 1e-14).is_err());
    }

    #[test]
    fn profile_primitive_matches_derivative() {
        let p = StepProfile::new(18, 1e-14).unwrap();
        let h = 1e-6;
        for i in 1..50 {
            let u = i as f64 / 50.0 + 0.003;
            let fd = (p.w_n(u + h) - p.w_n(u - h)) / (2.0 * h);
            assert!((fd - p.w_n_prime(u)).abs() < 1e-6, "u={u}");
        }
    }

    #[test]
    fn profile_has_zero_mean() {
        let p = StepProfile::new(17, 1e-14).unwrap();
        let (v, _) = adaptive_simpson(&|u| p.w_n(u), 0.0, 1.0, 1e-13, 40).unwrap();
        assert!(v.abs() < 1e-12);
    }
}
