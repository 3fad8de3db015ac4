//! Laplace transforms in dimension one, used as ground truth for the
//! simulator.
//!
//! For `f(x) = e^{-λx}` the generator acts as
//! `Lf(x) = e^{-λx} (x ψ(λ) - F(λ))` with branching mechanism
//! `ψ(λ) = cλ² - bλ + ∫(e^{-λz} - 1 + λ(1∧z)) μ(dz)` and immigration
//! mechanism `F(λ) = βλ + ∫(1 - e^{-λz}) ν(dz)`. Hence
//! `E[e^{-λX(t)}] = exp(-x v(t) - ∫_0^t F(v(s)) ds)` with `∂_t v = -ψ(v)`,
//! `v(0) = λ`.

use serde::Serialize;

use crate::params::AdmissibleParams;
use crate::{Error, Result};

/// Closed-form Laplace transform of `dX = (β + bX)dt + √(2cX) dW`.
pub fn laplace_cir(c: f64, beta: f64, b: f64, x0: f64, t: f64, lambda: f64) -> Result<f64> {
    if !(c > 0.0) || !(lambda >= 0.0) || !(t > 0.0) || !(beta >= 0.0) || !(x0 >= 0.0) {
        return Err(Error::OutOfRange(format!(
            "laplace_cir needs c>0, beta≥0, x0≥0, t>0, lambda≥0; got c={c}, beta={beta}, x0={x0}, t={t}, lambda={lambda}"
        )));
    }
    // (e^{bt} - 1)/b, continuous at b = 0
    let growth = if b == 0.0 { t } else { (b * t).exp_m1() / b };
    let denom = 1.0 + c * lambda * growth;
    let v = lambda * (b * t).exp() / denom;
    let phi = beta / c * denom.ln();
    Ok((-x0 * v - phi).exp())
}

/// `e^{-y} - 1 + y` without cancellation for small `y`.
fn exp_remainder(y: f64) -> f64 {
    if y.abs() < 1e-3 {
        y * y * (0.5 - y * (1.0 / 6.0 - y * (1.0 / 24.0 - y / 120.0)))
    } else {
        (-y).exp_m1() + y
    }
}

fn require_1d(p: &AdmissibleParams) -> Result<()> {
    p.check_dims()?;
    if p.dim() != 1 {
        return Err(Error::DimensionMismatch(format!("the Riccati oracle is one-dimensional, got d={}", p.dim())));
    }
    Ok(())
}

/// Branching mechanism `ψ(λ)` of a one-dimensional tuple.
pub fn branching_mechanism(p: &AdmissibleParams, lambda: f64) -> Result<f64> {
    let jumps = p.mu[0]
        .radial_integral(
            |z| {
                if z <= 1.0 {
                    exp_remainder(lambda * z)
                } else {
                    (-lambda * z).exp() - 1.0 + lambda
                }
            },
            0.0,
            f64::INFINITY,
        )?
        .value()
        .ok_or_else(|| Error::DivergentMoment("branching mechanism integral diverges".into()))?;
    Ok(p.c[0] * lambda * lambda - p.b[0][0] * lambda + jumps)
}

/// Immigration mechanism `F(λ)` of a one-dimensional tuple.
pub fn immigration_mechanism(p: &AdmissibleParams, lambda: f64) -> Result<f64> {
    let jumps = p
        .nu
        .radial_integral(|z| -(-lambda * z).exp_m1(), 0.0, f64::INFINITY)?
        .value()
        .ok_or_else(|| Error::DivergentMoment("immigration mechanism integral diverges".into()))?;
    Ok(p.beta[0] * lambda + jumps)
}

#[derive(Debug, Clone, Serialize)]
pub struct RiccatiSolution {
    pub lambda0: f64,
    pub grid: Vec<f64>,
    pub v: Vec<f64>,
    /// `∫_0^t F(v(s)) ds` on the grid.
    pub immigration_integral: Vec<f64>,
    /// Accumulated local error estimate of the embedded pair.
    pub error_estimate: f64,
}

impl RiccatiSolution {
    pub fn laplace(&self, x0: f64) -> f64 {
        let n = self.v.len() - 1;
        (-x0 * self.v[n] - self.immigration_integral[n]).exp()
    }
}

// Dormand–Prince 5(4) tableau
const DP_A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const DP_B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const DP_B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Integrates `v' = -ψ(v)`, `Φ' = F(v)` from `v(0) = λ` up to `t`.
pub fn solve_riccati_1d(p: &AdmissibleParams, t: f64, lambda: f64, tol: f64) -> Result<RiccatiSolution> {
    require_1d(p)?;
    if !(t > 0.0) || !(lambda >= 0.0) || !(tol > 0.0) {
        return Err(Error::OutOfRange(format!("t={t}, lambda={lambda}, tol={tol}")));
    }
    let rhs = |y: [f64; 2]| -> Result<[f64; 2]> {
        let v = y[0].max(0.0);
        Ok([-branching_mechanism(p, v)?, immigration_mechanism(p, v)?])
    };
    let mut grid = vec![0.0];
    let mut vs = vec![lambda];
    let mut phis = vec![0.0];
    let mut y = [lambda, 0.0];
    let mut s = 0.0;
    let mut h = (t / 100.0).min(0.01);
    let mut err_total = 0.0;
    let mut k = [[0.0f64; 2]; 7];
    k[0] = rhs(y)?;
    for _ in 0..1_000_000 {
        if s >= t {
            return Ok(RiccatiSolution {
                lambda0: lambda,
                grid,
                v: vs,
                immigration_integral: phis,
                error_estimate: err_total,
            });
        }
        h = h.min(t - s);
        for stage in 1..7 {
            let mut ys = y;
            for (prev, a) in DP_A[stage].iter().enumerate().take(stage) {
                ys[0] += h * a * k[prev][0];
                ys[1] += h * a * k[prev][1];
            }
            k[stage] = rhs(ys)?;
        }
        let mut y5 = y;
        let mut err = [0.0; 2];
        for st in 0..7 {
            for c in 0..2 {
                y5[c] += h * DP_B5[st] * k[st][c];
                err[c] += h * (DP_B5[st] - DP_B4[st]) * k[st][c];
            }
        }
        let scale = |c: usize| tol * (1.0 + y[c].abs().max(y5[c].abs()));
        let ratio = (err[0] / scale(0)).abs().max((err[1] / scale(1)).abs());
        if !ratio.is_finite() {
            return Err(Error::OdeFailure(format!("non-finite step at s={s}")));
        }
        if ratio <= 1.0 {
            s += h;
            y = y5;
            k[0] = k[6];
            err_total += err[0].abs().max(err[1].abs());
            grid.push(s);
            vs.push(y[0].max(0.0));
            phis.push(y[1]);
        }
        let factor = if ratio == 0.0 { 5.0 } else { (0.9 * ratio.powf(-0.2)).clamp(0.2, 5.0) };
        h *= factor;
        if h < 1e-14 * t.max(1.0) {
            return Err(Error::OdeFailure(format!("step size underflow at s={s}")));
        }
    }
    Err(Error::OdeFailure("too many steps".into()))
}

/// `E[e^{-λX(t)} | X(0) = x0]` from the numeric Riccati equation.
pub fn laplace_cbi_1d(p: &AdmissibleParams, x0: f64, t: f64, lambda: f64, tol: f64) -> Result<f64> {
    if !(x0 >= 0.0) {
        return Err(Error::OutOfRange(format!("x0={x0}")));
    }
    Ok(solve_riccati_1d(p, t, lambda, tol)?.laplace(x0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy::{LevyMeasureSpec, RadialLaw};

    fn cir() -> AdmissibleParams {
        AdmissibleParams::new(vec![1.0], vec![1.0], vec![vec![-1.0]])
    }

    #[test]
    fn cir_normalisation_and_continuity() {
        assert_eq!(laplace_cir(1.0, 1.0, -1.0, 1.0, 1.0, 0.0).unwrap(), 1.0);
        let v = laplace_cir(1.0, 1.0, -1.0, 1.0, 1e-8, 1.0).unwrap();
        assert!((v - (-1.0f64).exp()).abs() < 1e-6);
        assert!(laplace_cir(0.0, 1.0, -1.0, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn riccati_reproduces_cir() {
        for &lambda in &[0.5, 1.0, 2.0] {
            let closed = laplace_cir(1.0, 1.0, -1.0, 1.0, 1.0, lambda).unwrap();
            let ode = laplace_cbi_1d(&cir(), 1.0, 1.0, lambda, 1e-11).unwrap();
            assert!((closed - ode).abs() < 1e-8, "lambda={lambda}: {closed} vs {ode}");
        }
    }

    #[test]
    fn compound_poisson_immigration() {
        let p = AdmissibleParams::new(vec![0.0], vec![1.0], vec![vec![0.0]])
            .with_nu(LevyMeasureSpec::atoms([(2.0, vec![0.7])]));
        let (x0, t, l): (f64, f64, f64) = (0.3, 1.0, 1.3);
        let expected = (-l * (x0 + t)).exp() * (2.0 * t * ((-l * 0.7f64).exp() - 1.0)).exp();
        let got = laplace_cbi_1d(&p, x0, t, l, 1e-11).unwrap();
        assert!((got - expected).abs() < 1e-9);
    }

    #[test]
    fn exponential_jumps_match_closed_mechanism() {
        let law = RadialLaw::Exponential { mean: 0.5 };
        let p = AdmissibleParams::new(vec![0.0], vec![0.0], vec![vec![0.0]])
            .with_nu(LevyMeasureSpec::compound_poisson(3.0, vec![1.0], law));
        let l = 1.7;
        let closed = 3.0 * (1.0 - 1.0 / (1.0 + 0.5 * l));
        assert!((immigration_mechanism(&p, l).unwrap() - closed).abs() < 1e-10);
    }
}
