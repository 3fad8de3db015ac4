//! Admissible parameter tuples `(c, β, B, ν, μ)`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::levy::{LevyMeasureSpec, Region};
use crate::quad::Integral;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissibleParams {
    pub c: Vec<f64>,
    pub beta: Vec<f64>,
    #[serde(rename = "B", alias = "b")]
    pub b: Vec<Vec<f64>>,
    #[serde(default)]
    pub nu: LevyMeasureSpec,
    pub mu: Vec<LevyMeasureSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub condition: String,
    pub message: String,
    pub value: Integral,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub violations: Vec<Violation>,
    pub integrals: BTreeMap<String, Integral>,
}

impl AdmissibleParams {
    /// Parameters without jumps.
    pub fn new(c: Vec<f64>, beta: Vec<f64>, b: Vec<Vec<f64>>) -> Self {
        let d = c.len();
        AdmissibleParams { c, beta, b, nu: LevyMeasureSpec::Zero, mu: vec![LevyMeasureSpec::Zero; d] }
    }

    pub fn with_nu(mut self, nu: LevyMeasureSpec) -> Self {
        self.nu = nu;
        self
    }

    pub fn with_mu(mut self, j: usize, mu: LevyMeasureSpec) -> Self {
        self.mu[j] = mu;
        self
    }

    pub fn dim(&self) -> usize {
        self.c.len()
    }

    pub fn check_dims(&self) -> Result<()> {
        let d = self.dim();
        if d == 0 {
            return Err(Error::DimensionMismatch("dimension zero".into()));
        }
        if self.beta.len() != d {
            return Err(Error::DimensionMismatch(format!("|c| = {d} but |beta| = {}", self.beta.len())));
        }
        if self.b.len() != d || self.b.iter().any(|row| row.len() != d) {
            return Err(Error::DimensionMismatch(format!("B is not {d}x{d}")));
        }
        if self.mu.len() != d {
            return Err(Error::DimensionMismatch(format!("|c| = {d} but |mu| = {}", self.mu.len())));
        }
        self.nu.check_dims(d)?;
        for m in &self.mu {
            m.check_dims(d)?;
        }
        Ok(())
    }

    /// Validates the tuple against the admissibility conditions.
    pub fn validate(&self) -> Result<ValidationReport> {
        self.check_dims()?;
        let d = self.dim();
        let mut violations = Vec::new();
        let mut integrals = BTreeMap::new();
        let mut flag = |cond: &str, message: String, value: Integral| {
            violations.push(Violation { condition: cond.into(), message, value });
        };

        for (i, &ci) in self.c.iter().enumerate() {
            if !(ci >= 0.0 && ci.is_finite()) {
                flag("i", format!("c_{} must be a nonnegative real", i + 1), Integral::Finite(ci));
            }
        }
        for (i, &bi) in self.beta.iter().enumerate() {
            if !(bi >= 0.0 && bi.is_finite()) {
                flag("ii", format!("beta_{} must be a nonnegative real", i + 1), Integral::Finite(bi));
            }
        }
        for i in 0..d {
            for j in 0..d {
                let v = self.b[i][j];
                if !v.is_finite() {
                    flag("iii", format!("B[{}][{}] is not finite", i + 1, j + 1), Integral::Finite(v));
                } else if i != j && v < 0.0 {
                    flag("iii", format!("off-diagonal B[{}][{}] is negative", i + 1, j + 1), Integral::Finite(v));
                }
            }
        }

        if let Err(e) = self.nu.check(d) {
            flag("iv", format!("nu: {e}"), Integral::Finite(f64::NAN));
        } else {
            let small = self.nu.moment(1.0, Region::Ball(1.0))?;
            let big = self.nu.mass(Region::Outside(1.0))?;
            integrals.insert("nu: int_{|z|<=1} |z|".to_string(), small);
            integrals.insert("nu: mass(|z|>1)".to_string(), big);
            if !small.is_finite() {
                flag("iv", "nu: int_{|z|<=1} |z| nu(dz) diverges".into(), small);
            }
            if !big.is_finite() {
                flag("iv", "nu: nu(|z|>1) is infinite".into(), big);
            }
        }

        for (i, m) in self.mu.iter().enumerate() {
            let k = i + 1;
            if let Err(e) = m.check(d) {
                flag("vi", format!("mu_{k}: {e}"), Integral::Finite(f64::NAN));
                continue;
            }
            let small = m.moment(2.0, Region::Ball(1.0))?;
            let big = m.moment(1.0, Region::Outside(1.0))?;
            integrals.insert(format!("mu_{k}: int_{{|z|<=1}} |z|^2"), small);
            integrals.insert(format!("mu_{k}: int_{{|z|>1}} |z|"), big);
            if !small.is_finite() {
                flag("vi", format!("mu_{k}: int_{{|z|<=1}} |z|^2 mu_{k}(dz) diverges"), small);
            }
            if !big.is_finite() {
                flag("vi", format!("mu_{k}: int_{{|z|>1}} |z| mu_{k}(dz) diverges"), big);
            }
            let cross = m.coordinate_first_moments(d, 0.0, 1.0)?;
            for (j, v) in cross.into_iter().enumerate() {
                if j == i {
                    continue;
                }
                integrals.insert(format!("mu_{k}: int_{{|z|<=1}} z_{}", j + 1), v);
                if !v.is_finite() {
                    flag("vi", format!("mu_{k}: int_{{|z|<=1}} z_{} mu_{k}(dz) diverges", j + 1), v);
                }
            }
        }

        Ok(ValidationReport { ok: violations.is_empty(), violations, integrals })
    }

    /// Drift matrix of the jump-diffusion representation.
    pub fn effective_drift(&self) -> Result<Vec<Vec<f64>>> {
        self.check_dims()?;
        let d = self.dim();
        let mut out = self.b.clone();
        for j in 0..d {
            let small = self.mu[j].coordinate_first_moments(d, 0.0, 1.0)?;
            for (i, row) in out.iter_mut().enumerate() {
                if i == j {
                    let big = self.mu[j].mass(Region::Outside(1.0))?.value().ok_or_else(|| {
                        Error::DivergentMoment(format!("mu_{}(|z|>1) is infinite", j + 1))
                    })?;
                    row[j] -= big;
                } else {
                    row[j] += small[i].value().ok_or_else(|| {
                        Error::DivergentMoment(format!("int_{{|z|<=1}} z_{} mu_{}(dz) diverges", i + 1, j + 1))
                    })?;
                }
            }
        }
        Ok(out)
    }

    pub(crate) fn require_valid(&self) -> Result<()> {
        let r = self.validate()?;
        if r.ok {
            Ok(())
        } else {
            let msgs: Vec<String> =
                r.violations.iter().map(|v| format!("({}) {}", v.condition, v.message)).collect();
            Err(Error::InvalidParams(msgs.join("; ")))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_dim() -> AdmissibleParams {
        AdmissibleParams::new(vec![1.0, 0.0], vec![1.0, 1.0], vec![vec![-1.0, 0.5], vec![0.2, -1.0]])
    }

    #[test]
    fn trivial_tuple_is_admissible() {
        assert!(two_dim().validate().unwrap().ok);
    }

    #[test]
    fn negative_off_diagonal_is_flagged() {
        let mut p = two_dim();
        p.b[0][1] = -0.5;
        let r = p.validate().unwrap();
        assert!(!r.ok);
        assert_eq!(r.violations.len(), 1);
        assert_eq!(r.violations[0].condition, "iii");
    }

    #[test]
    fn heavy_tailed_branching_is_flagged() {
        let p = AdmissibleParams::new(vec![0.0], vec![0.0], vec![vec![0.0]])
            .with_mu(0, LevyMeasureSpec::per_coordinate_stable(0, 0.5, false));
        let r = p.validate().unwrap();
        assert!(!r.ok);
        assert!(r.violations.iter().all(|v| v.condition == "vi"));
        let small = r.integrals["mu_1: int_{|z|<=1} |z|^2"].value().unwrap();
        assert!((small - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(r.integrals["mu_1: int_{|z|>1} |z|"], Integral::Divergent);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let mut p = two_dim();
        p.beta.pop();
        assert!(matches!(p.validate(), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn effective_drift_examples() {
        let p = AdmissibleParams::new(vec![0.0], vec![0.0], vec![vec![-0.3]])
            .with_mu(0, LevyMeasureSpec::atoms([(2.0, vec![2.0])]));
        assert!((p.effective_drift().unwrap()[0][0] - (-2.3)).abs() < 1e-15);

        let p = AdmissibleParams::new(vec![0.0; 2], vec![0.0; 2], vec![vec![-1.0, 0.0], vec![0.0, -1.0]])
            .with_mu(1, LevyMeasureSpec::atoms([(2.0, vec![0.5, 0.0])]));
        let bt = p.effective_drift().unwrap();
        assert!((bt[0][1] - 1.0).abs() < 1e-15);

        let p = two_dim();
        assert_eq!(p.effective_drift().unwrap(), p.b);
    }
}
