//! Lévy measures on the nonnegative orthant.
//!
//! A [`LevyMeasureSpec`] is a finite sum of analytically known building
//! blocks. Every block can be integrated against radial test functions,
//! restricted to a radial [`Region`] and sampled once that restriction has
//! finite mass.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::params::AdmissibleParams;
use crate::quad::{self, Integral};
use crate::{Error, Result};

fn one() -> f64 {
    1.0
}

/// Law of the jump radius of a compound Poisson block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum RadialLaw {
    Exponential { mean: f64 },
    /// Density `shape·scale^shape·r^{-shape-1}` on `[scale, ∞)`.
    Pareto { shape: f64, scale: f64 },
}

impl RadialLaw {
    fn check(&self) -> Result<()> {
        let ok = match *self {
            RadialLaw::Exponential { mean } => mean > 0.0 && mean.is_finite(),
            RadialLaw::Pareto { shape, scale } => {
                shape > 0.0 && scale > 0.0 && shape.is_finite() && scale.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParams(format!("bad radial law {self:?}")))
        }
    }

    fn support_start(&self) -> f64 {
        match *self {
            RadialLaw::Exponential { .. } => 0.0,
            RadialLaw::Pareto { scale, .. } => scale,
        }
    }

    pub fn pdf(&self, r: f64) -> f64 {
        match *self {
            RadialLaw::Exponential { mean } => {
                if r < 0.0 {
                    0.0
                } else {
                    (-r / mean).exp() / mean
                }
            }
            RadialLaw::Pareto { shape, scale } => {
                if r < scale {
                    0.0
                } else {
                    shape * scale.powf(shape) * r.powf(-shape - 1.0)
                }
            }
        }
    }

    /// `P(R > r)`.
    pub fn survival(&self, r: f64) -> f64 {
        match *self {
            RadialLaw::Exponential { mean } => (-r.max(0.0) / mean).exp(),
            RadialLaw::Pareto { shape, scale } => {
                if r <= scale {
                    1.0
                } else {
                    (scale / r).powf(shape)
                }
            }
        }
    }

    fn prob(&self, lo: f64, hi: f64) -> f64 {
        if hi <= lo {
            return 0.0;
        }
        (self.survival(lo) - self.survival(hi)).max(0.0)
    }

    /// Inverse CDF of the law restricted to `(lo, hi]`, `u ∈ [0, 1)`.
    fn quantile_restricted(&self, lo: f64, hi: f64, u: f64) -> f64 {
        match *self {
            RadialLaw::Exponential { mean } => {
                let a = (-lo / mean).exp();
                let b = if hi.is_infinite() { 0.0 } else { (-hi / mean).exp() };
                -mean * (a - u * (a - b)).ln()
            }
            RadialLaw::Pareto { shape, scale } => {
                let lo = lo.max(scale);
                let a = lo.powf(-shape);
                let b = if hi.is_infinite() { 0.0 } else { hi.powf(-shape) };
                (a - u * (a - b)).powf(-1.0 / shape)
            }
        }
    }

    /// `E[R^p; lo < R ≤ hi]`.
    fn power_moment(&self, p: f64, lo: f64, hi: f64) -> Result<Integral> {
        match *self {
            RadialLaw::Pareto { shape, scale } => {
                let lo = lo.max(scale);
                Ok(power_integral(p - shape - 1.0, lo, hi).scale(shape * scale.powf(shape)))
            }
            RadialLaw::Exponential { .. } => {
                quad::integrate_range(|r| r.powf(p) * self.pdf(r), lo, hi)
            }
        }
    }

    /// `∫_{(lo,hi]} (1 - cos(k r)) P(dr)`.
    fn one_minus_cos(&self, k: f64, lo: f64, hi: f64) -> Result<f64> {
        let k = k.abs();
        let lo = lo.max(self.support_start());
        if k == 0.0 || hi <= lo {
            return Ok(0.0);
        }
        if let (RadialLaw::Exponential { mean }, true, true) = (*self, lo == 0.0, hi.is_infinite()) {
            return Ok(1.0 - 1.0 / (1.0 + (k * mean).powi(2)));
        }
        let step = PI / k;
        let mut acc = 0.0;
        let mut a = lo;
        for _ in 0..2_000_000 {
            let b = (a + step).min(hi);
            acc += quad::integrate(|r| (1.0 - (k * r).cos()) * self.pdf(r), a, b)?;
            a = b;
            if a >= hi {
                return Ok(acc);
            }
            // tail bound for a decreasing density: |∫_a^∞ cos(kr) f| ≤ 2 f(a) / k
            if hi.is_infinite() && 2.0 * self.pdf(a) / k <= 1e-13 {
                return Ok(acc + self.survival(a));
            }
        }
        Err(Error::QuadratureFailure(format!(
            "oscillatory integral of {self:?} at k={k} did not terminate"
        )))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub mass: f64,
    pub z: Vec<f64>,
}

/// Lévy measure on the nonnegative orthant.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LevyMeasureSpec {
    #[default]
    Zero,
    /// `scale · 1_{z_j>0} dz_j / z_j^{1+α} ⊗ ∏_{k≠j} δ_0(dz_k)`, optionally restricted to `z_j ≤ 1`.
    PerCoordinateStable {
        coord: usize,
        alpha: f64,
        truncated: bool,
        #[serde(default = "one")]
        scale: f64,
    },
    /// `scale · 1_{z ∈ R_+^d, |z| ≤ 1} dz / |z|^{d+α}`.
    TruncatedIsotropicStableCone {
        dim: usize,
        alpha: f64,
        #[serde(default = "one")]
        scale: f64,
    },
    /// `rate ·` law of `R·u`, with `u` the normalised `direction`.
    CompoundPoisson {
        rate: f64,
        direction: Vec<f64>,
        #[serde(flatten)]
        law: RadialLaw,
    },
    FiniteAtoms { atoms: Vec<Atom> },
    Sum { terms: Vec<LevyMeasureSpec> },
}

/// Radial region `lo < |z| ≤ hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    /// `|z| ≤ r`
    Ball(f64),
    /// `|z| > r`
    Outside(f64),
    Shell { lo: f64, hi: f64 },
    Orthant,
}

impl Region {
    pub fn bounds(&self) -> (f64, f64) {
        match *self {
            Region::Ball(r) => (0.0, r),
            Region::Outside(r) => (r, f64::INFINITY),
            Region::Shell { lo, hi } => (lo, hi),
            Region::Orthant => (0.0, f64::INFINITY),
        }
    }

    pub fn contains(&self, norm: f64) -> bool {
        let (lo, hi) = self.bounds();
        norm > lo && norm <= hi
    }

    fn check(&self) -> Result<()> {
        let (lo, hi) = self.bounds();
        if lo >= 0.0 && hi > 0.0 && !lo.is_nan() && !hi.is_nan() && lo <= hi {
            Ok(())
        } else {
            Err(Error::OutOfRange(format!("bad region {self:?}")))
        }
    }
}

/// `∫_a^b ρ^q dρ` with divergence detection at `0` and `∞`.
pub(crate) fn power_integral(q: f64, a: f64, b: f64) -> Integral {
    if b <= a {
        return Integral::Finite(0.0);
    }
    let e = q + 1.0;
    if e.abs() < 1e-14 {
        if a == 0.0 || b.is_infinite() {
            return Integral::Divergent;
        }
        return Integral::Finite((b / a).ln());
    }
    if (a == 0.0 && e < 0.0) || (b.is_infinite() && e > 0.0) {
        return Integral::Divergent;
    }
    let hi = if b.is_infinite() { 0.0 } else { b.powf(e) };
    let lo = if a == 0.0 { 0.0 } else { a.powf(e) };
    Integral::Finite((hi - lo) / e)
}

/// `∫_{S^{d-1} ∩ R_+^d} ∏ θ_i^{k_i} dσ(θ)`.
pub fn orthant_angular_moment(exponents: &[u32]) -> f64 {
    let d = exponents.len() as f64;
    let num: f64 = exponents.iter().map(|&k| gamma((k as f64 + 1.0) / 2.0)).product();
    let total: f64 = exponents.iter().map(|&k| k as f64).sum();
    2.0 * num / gamma((total + d) / 2.0) / 2f64.powi(exponents.len() as i32)
}

/// Surface measure of the unit sphere inside the orthant.
pub fn orthant_sphere_area(dim: usize) -> f64 {
    orthant_angular_moment(&vec![0; dim])
}

/// `G_α(K) = ∫_0^K (1 - cos u) u^{-1-α} du`, tabulated over oscillation chunks.
#[derive(Debug, Clone)]
pub struct StableCosKernel {
    alpha: f64,
    total: f64,
    cumulative: Vec<f64>,
}

const KERNEL_SERIES_CUT: f64 = 0.5;
const KERNEL_ASYMPTOTIC: f64 = 200.0;

impl StableCosKernel {
    pub fn new(alpha: f64) -> Result<Self> {
        let total = if (alpha - 1.0).abs() < 1e-12 {
            PI / 2.0
        } else {
            gamma(1.0 - alpha) * (PI * alpha / 2.0).cos() / alpha
        };
        let mut cumulative = vec![Self::series(alpha, KERNEL_SERIES_CUT)];
        let mut a = KERNEL_SERIES_CUT;
        while a < KERNEL_ASYMPTOTIC {
            let b = a + PI;
            let piece = quad::integrate(|u| (1.0 - u.cos()) * u.powf(-1.0 - alpha), a, b)?;
            cumulative.push(cumulative.last().unwrap() + piece);
            a = b;
        }
        Ok(StableCosKernel { alpha, total, cumulative })
    }

    fn series(alpha: f64, k: f64) -> f64 {
        let mut acc = 0.0;
        let mut fact = 1.0;
        for n in 1..20 {
            let m = 2 * n;
            fact *= ((m - 1) * m) as f64;
            let sign = if n % 2 == 1 { 1.0 } else { -1.0 };
            acc += sign * k.powf(m as f64 - alpha) / (fact * (m as f64 - alpha));
        }
        acc
    }

    /// `∫_0^∞ (1 - cos u) u^{-1-α} du`.
    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn eval(&self, k: f64) -> Result<f64> {
        let k = k.abs();
        if k <= KERNEL_SERIES_CUT {
            return Ok(Self::series(self.alpha, k));
        }
        if k.is_infinite() {
            return Ok(self.total);
        }
        if k >= KERNEL_ASYMPTOTIC {
            let a = self.alpha;
            let b = 1.0 + a;
            let (s, c) = k.sin_cos();
            let jc = -s * k.powf(-b) + b * c * k.powf(-b - 1.0) + b * (b + 1.0) * s * k.powf(-b - 2.0)
                - b * (b + 1.0) * (b + 2.0) * c * k.powf(-b - 3.0);
            let tail = k.powf(-a) / a - jc;
            return Ok(self.total - tail);
        }
        let idx = ((k - KERNEL_SERIES_CUT) / PI).floor() as usize;
        let start = KERNEL_SERIES_CUT + idx as f64 * PI;
        let partial = quad::integrate(|u| (1.0 - u.cos()) * u.powf(-1.0 - self.alpha), start, k)?;
        Ok(self.cumulative[idx] + partial)
    }

    /// `∫_{(a,b]} (1 - cos(kρ)) ρ^{-1-α} dρ`.
    pub fn shell(&self, k: f64, a: f64, b: f64) -> Result<f64> {
        let k = k.abs();
        if k == 0.0 || b <= a {
            return Ok(0.0);
        }
        let upper = if b.is_infinite() { self.total } else { self.eval(k * b)? };
        let lower = if a == 0.0 { 0.0 } else { self.eval(k * a)? };
        Ok(k.powf(self.alpha) * (upper - lower))
    }
}

/// Tensor Gauss–Legendre rule on the positive-orthant patch of the unit sphere.
pub fn orthant_sphere_rule(dim: usize, nodes_per_angle: usize) -> Vec<(Vec<f64>, f64)> {
    if dim == 1 {
        return vec![(vec![1.0], 1.0)];
    }
    let (x, w) = quad::gauss_legendre(nodes_per_angle);
    let half = PI / 4.0;
    let angles: Vec<(f64, f64)> = x.iter().zip(&w).map(|(x, w)| (half * (x + 1.0), half * w)).collect();
    let n_angles = dim - 1;
    let mut out = Vec::with_capacity(nodes_per_angle.pow(n_angles as u32));
    let mut idx = vec![0usize; n_angles];
    loop {
        let mut theta = vec![0.0; dim];
        let mut weight = 1.0;
        let mut sin_prod = 1.0;
        for (k, &i) in idx.iter().enumerate() {
            let (phi, wphi) = angles[i];
            theta[k] = sin_prod * phi.cos();
            weight *= wphi * phi.sin().powi((n_angles - 1 - k) as i32);
            sin_prod *= phi.sin();
        }
        theta[dim - 1] = sin_prod;
        out.push((theta, weight));
        let mut k = 0;
        loop {
            if k == n_angles {
                return out;
            }
            idx[k] += 1;
            if idx[k] < nodes_per_angle {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

fn norm(z: &[f64]) -> f64 {
    z.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn unit(direction: &[f64]) -> Vec<f64> {
    let n = norm(direction);
    direction.iter().map(|v| v / n).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl LevyMeasureSpec {
    pub fn per_coordinate_stable(coord: usize, alpha: f64, truncated: bool) -> Self {
        LevyMeasureSpec::PerCoordinateStable { coord, alpha, truncated, scale: 1.0 }
    }

    pub fn cone(dim: usize, alpha: f64) -> Self {
        LevyMeasureSpec::TruncatedIsotropicStableCone { dim, alpha, scale: 1.0 }
    }

    pub fn atoms(atoms: impl IntoIterator<Item = (f64, Vec<f64>)>) -> Self {
        LevyMeasureSpec::FiniteAtoms {
            atoms: atoms.into_iter().map(|(mass, z)| Atom { mass, z }).collect(),
        }
    }

    pub fn compound_poisson(rate: f64, direction: Vec<f64>, law: RadialLaw) -> Self {
        LevyMeasureSpec::CompoundPoisson { rate, direction, law }
    }

    /// Flattened sum; `Zero` terms are dropped.
    pub fn sum(terms: impl IntoIterator<Item = LevyMeasureSpec>) -> Self {
        let mut flat = Vec::new();
        for t in terms {
            t.collect_leaves(&mut flat);
        }
        match flat.len() {
            0 => LevyMeasureSpec::Zero,
            1 => flat.pop().unwrap(),
            _ => LevyMeasureSpec::Sum { terms: flat },
        }
    }

    fn collect_leaves(self, out: &mut Vec<LevyMeasureSpec>) {
        match self {
            LevyMeasureSpec::Zero => {}
            LevyMeasureSpec::Sum { terms } => terms.into_iter().for_each(|t| t.collect_leaves(out)),
            leaf => out.push(leaf),
        }
    }

    /// Leaf blocks, with nested sums flattened.
    pub fn leaves(&self) -> Vec<&LevyMeasureSpec> {
        fn walk<'a>(s: &'a LevyMeasureSpec, out: &mut Vec<&'a LevyMeasureSpec>) {
            match s {
                LevyMeasureSpec::Zero => {}
                LevyMeasureSpec::Sum { terms } => terms.iter().for_each(|t| walk(t, out)),
                leaf => out.push(leaf),
            }
        }
        let mut out = Vec::new();
        walk(self, &mut out);
        out
    }

    pub fn is_zero(&self) -> bool {
        self.leaves().is_empty()
    }

    /// The same measure multiplied by `factor > 0`.
    pub fn scaled(&self, factor: f64) -> Self {
        match self {
            LevyMeasureSpec::Zero => LevyMeasureSpec::Zero,
            LevyMeasureSpec::PerCoordinateStable { coord, alpha, truncated, scale } => {
                LevyMeasureSpec::PerCoordinateStable {
                    coord: *coord,
                    alpha: *alpha,
                    truncated: *truncated,
                    scale: scale * factor,
                }
            }
            LevyMeasureSpec::TruncatedIsotropicStableCone { dim, alpha, scale } => {
                LevyMeasureSpec::TruncatedIsotropicStableCone { dim: *dim, alpha: *alpha, scale: scale * factor }
            }
            LevyMeasureSpec::CompoundPoisson { rate, direction, law } => LevyMeasureSpec::CompoundPoisson {
                rate: rate * factor,
                direction: direction.clone(),
                law: *law,
            },
            LevyMeasureSpec::FiniteAtoms { atoms } => LevyMeasureSpec::FiniteAtoms {
                atoms: atoms.iter().map(|a| Atom { mass: a.mass * factor, z: a.z.clone() }).collect(),
            },
            LevyMeasureSpec::Sum { terms } => LevyMeasureSpec::Sum {
                terms: terms.iter().map(|t| t.scaled(factor)).collect(),
            },
        }
    }

    /// Reports only dimension inconsistencies.
    pub fn check_dims(&self, dim: usize) -> Result<()> {
        for leaf in self.leaves() {
            if let Err(e @ Error::DimensionMismatch(_)) = leaf.check(dim) {
                return Err(e);
            }
        }
        Ok(())
    }

    /// Checks parameter ranges and that the measure lives on `R_+^dim`.
    pub fn check(&self, dim: usize) -> Result<()> {
        for leaf in self.leaves() {
            match leaf {
                LevyMeasureSpec::PerCoordinateStable { coord, alpha, scale, .. } => {
                    if *coord >= dim {
                        return Err(Error::DimensionMismatch(format!(
                            "stable block on coordinate {coord} in dimension {dim}"
                        )));
                    }
                    if !(*alpha > 0.0 && *alpha < 2.0) || !(*scale > 0.0 && scale.is_finite()) {
                        return Err(Error::InvalidParams(format!("bad stable block {leaf:?}")));
                    }
                }
                LevyMeasureSpec::TruncatedIsotropicStableCone { dim: cd, alpha, scale } => {
                    if *cd != dim {
                        return Err(Error::DimensionMismatch(format!("cone of dimension {cd} in dimension {dim}")));
                    }
                    if !(*alpha > 0.0 && *alpha < 2.0) || !(*scale > 0.0 && scale.is_finite()) {
                        return Err(Error::InvalidParams(format!("bad cone block {leaf:?}")));
                    }
                }
                LevyMeasureSpec::CompoundPoisson { rate, direction, law } => {
                    if direction.len() != dim {
                        return Err(Error::DimensionMismatch(format!(
                            "jump direction of length {} in dimension {dim}",
                            direction.len()
                        )));
                    }
                    if !(*rate >= 0.0 && rate.is_finite())
                        || direction.iter().any(|v| !(*v >= 0.0) || !v.is_finite())
                        || norm(direction) == 0.0
                    {
                        return Err(Error::InvalidParams(format!("bad compound Poisson block {leaf:?}")));
                    }
                    law.check()?;
                }
                LevyMeasureSpec::FiniteAtoms { atoms } => {
                    for a in atoms {
                        if a.z.len() != dim {
                            return Err(Error::DimensionMismatch(format!(
                                "atom of length {} in dimension {dim}",
                                a.z.len()
                            )));
                        }
                        if !(a.mass > 0.0 && a.mass.is_finite()) || a.z.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
                            return Err(Error::InvalidParams(format!("bad atom {a:?}")));
                        }
                        if norm(&a.z) == 0.0 {
                            return Err(Error::InvalidParams("atom at the origin".into()));
                        }
                    }
                }
                LevyMeasureSpec::Zero | LevyMeasureSpec::Sum { .. } => unreachable!(),
            }
        }
        Ok(())
    }

    /// `∫_{region} |z|^p spec(dz)`; closed forms except for exponential radial laws.
    pub fn moment(&self, p: f64, region: Region) -> Result<Integral> {
        if !(p >= 0.0) {
            return Err(Error::OutOfRange(format!("moment exponent {p}")));
        }
        region.check()?;
        let (lo, hi) = region.bounds();
        let mut total = Integral::Finite(0.0);
        for leaf in self.leaves() {
            let part = match leaf {
                LevyMeasureSpec::PerCoordinateStable { alpha, truncated, scale, .. } => {
                    let top = if *truncated { hi.min(1.0) } else { hi };
                    power_integral(p - 1.0 - alpha, lo, top).scale(*scale)
                }
                LevyMeasureSpec::TruncatedIsotropicStableCone { dim, alpha, scale } => {
                    power_integral(p - 1.0 - alpha, lo, hi.min(1.0)).scale(scale * orthant_sphere_area(*dim))
                }
                LevyMeasureSpec::CompoundPoisson { rate, law, .. } => law.power_moment(p, lo, hi)?.scale(*rate),
                LevyMeasureSpec::FiniteAtoms { atoms } => Integral::Finite(
                    atoms
                        .iter()
                        .filter(|a| region.contains(norm(&a.z)))
                        .map(|a| a.mass * norm(&a.z).powf(p))
                        .sum(),
                ),
                _ => unreachable!(),
            };
            total = total.add(part);
        }
        Ok(total)
    }

    /// Mass of the restriction to `region`.
    pub fn mass(&self, region: Region) -> Result<Integral> {
        self.moment(0.0, region)
    }

    /// `∫_{lo<|z|≤hi} f(|z|) spec(dz)` by quadrature of the radial density.
    pub fn radial_integral<F: Fn(f64) -> f64>(&self, f: F, lo: f64, hi: f64) -> Result<Integral> {
        let mut total = Integral::Finite(0.0);
        for leaf in self.leaves() {
            let part = match leaf {
                LevyMeasureSpec::PerCoordinateStable { alpha, truncated, scale, .. } => {
                    let top = if *truncated { hi.min(1.0) } else { hi };
                    quad::integrate_range(|r| f(r) * r.powf(-1.0 - alpha), lo, top)?.scale(*scale)
                }
                LevyMeasureSpec::TruncatedIsotropicStableCone { dim, alpha, scale } => {
                    quad::integrate_range(|r| f(r) * r.powf(-1.0 - alpha), lo, hi.min(1.0))?
                        .scale(scale * orthant_sphere_area(*dim))
                }
                LevyMeasureSpec::CompoundPoisson { rate, law, .. } => {
                    let lo = lo.max(law.support_start());
                    quad::integrate_range(|r| f(r) * law.pdf(r), lo, hi)?.scale(*rate)
                }
                LevyMeasureSpec::FiniteAtoms { atoms } => Integral::Finite(
                    atoms
                        .iter()
                        .filter(|a| {
                            let n = norm(&a.z);
                            n > lo && n <= hi
                        })
                        .map(|a| a.mass * f(norm(&a.z)))
                        .sum(),
                ),
                _ => unreachable!(),
            };
            total = total.add(part);
        }
        Ok(total)
    }

    /// Per-coordinate `∫_{lo<|z|≤hi} z_i spec(dz)`, each possibly divergent.
    pub fn coordinate_first_moments(&self, dim: usize, lo: f64, hi: f64) -> Result<Vec<Integral>> {
        let mut out = vec![Integral::Finite(0.0); dim];
        for leaf in self.leaves() {
            match leaf {
                LevyMeasureSpec::PerCoordinateStable { coord, alpha, truncated, scale } => {
                    let top = if *truncated { hi.min(1.0) } else { hi };
                    out[*coord] = out[*coord].add(power_integral(-alpha, lo, top).scale(*scale));
                }
                LevyMeasureSpec::TruncatedIsotropicStableCone { dim: d, alpha, scale } => {
                    let radial = power_integral(-alpha, lo, hi.min(1.0));
                    for (i, o) in out.iter_mut().enumerate() {
                        let mut e = vec![0u32; *d];
                        e[i] = 1;
                        *o = o.add(radial.scale(scale * orthant_angular_moment(&e)));
                    }
                }
                LevyMeasureSpec::CompoundPoisson { rate, direction, law } => {
                    let m = law.power_moment(1.0, lo, hi)?;
                    for (o, u) in out.iter_mut().zip(unit(direction)) {
                        if u > 0.0 {
                            *o = o.add(m.scale(rate * u));
                        }
                    }
                }
                LevyMeasureSpec::FiniteAtoms { atoms } => {
                    for a in atoms {
                        let n = norm(&a.z);
                        if n > lo && n <= hi {
                            for (o, z) in out.iter_mut().zip(&a.z) {
                                *o = o.add(Integral::Finite(a.mass * z));
                            }
                        }
                    }
                }
                _ => unreachable!(),
            }
        }
        Ok(out)
    }

    /// Componentwise `∫_{lo<|z|≤hi} z spec(dz)`.
    pub fn first_moment(&self, dim: usize, lo: f64, hi: f64) -> Result<Vec<f64>> {
        self.coordinate_first_moments(dim, lo, hi)?
            .into_iter()
            .map(|m| {
                m.value()
                    .ok_or_else(|| Error::DivergentMoment(format!("first moment of {self:?} on ({lo}, {hi}]")))
            })
            .collect()
    }

    /// `∫_{lo<|z|≤hi} z zᵀ spec(dz)`.
    pub fn second_moment_matrix(&self, dim: usize, lo: f64, hi: f64) -> Result<Vec<Vec<f64>>> {
        let mut out = vec![vec![0.0; dim]; dim];
        let divergent = || Error::DivergentMoment(format!("second moment of {self:?} on ({lo}, {hi}]"));
        for leaf in self.leaves() {
            match leaf {
                LevyMeasureSpec::PerCoordinateStable { coord, alpha, truncated, scale } => {
                    let top = if *truncated { hi.min(1.0) } else { hi };
                    out[*coord][*coord] += scale * power_integral(1.0 - alpha, lo, top).value().ok_or_else(divergent)?;
                }
                LevyMeasureSpec::TruncatedIsotropicStableCone { dim: d, alpha, scale } => {
                    let radial = power_integral(1.0 - alpha, lo, hi.min(1.0)).value().ok_or_else(divergent)?;
                    for i in 0..*d {
                        for k in 0..*d {
                            let mut e = vec![0u32; *d];
                            e[i] += 1;
                            e[k] += 1;
                            out[i][k] += scale * radial * orthant_angular_moment(&e);
                        }
                    }
                }
                LevyMeasureSpec::CompoundPoisson { rate, direction, law } => {
                    let m = law.power_moment(2.0, lo, hi)?.value().ok_or_else(divergent)?;
                    let u = unit(direction);
                    for i in 0..dim {
                        for k in 0..dim {
                            out[i][k] += rate * m * u[i] * u[k];
                        }
                    }
                }
                LevyMeasureSpec::FiniteAtoms { atoms } => {
                    for a in atoms {
                        let n = norm(&a.z);
                        if n > lo && n <= hi {
                            for i in 0..dim {
                                for k in 0..dim {
                                    out[i][k] += a.mass * a.z[i] * a.z[k];
                                }
                            }
                        }
                    }
                }
                _ => unreachable!(),
            }
        }
        Ok(out)
    }

    /// `∫_{lo<|z|≤hi} (1 - cos(λ·z)) spec(dz)`.
    pub fn one_minus_cos(&self, lambda: &[f64], lo: f64, hi: f64) -> Result<f64> {
        let mut acc = 0.0;
        for leaf in self.leaves() {
            acc += match leaf {
                LevyMeasureSpec::PerCoordinateStable { coord, alpha, truncated, scale } => {
                    let top = if *truncated { hi.min(1.0) } else { hi };
                    let k = lambda[*coord];
                    if k == 0.0 || top <= lo {
                        0.0
                    } else {
                        scale * StableCosKernel::new(*alpha)?.shell(k, lo, top)?
                    }
                }
                LevyMeasureSpec::TruncatedIsotropicStableCone { dim, alpha, scale } => {
                    let top = hi.min(1.0);
                    if top <= lo || lambda.iter().all(|v| *v == 0.0) {
                        0.0
                    } else {
                        let kernel = StableCosKernel::new(*alpha)?;
                        let n = match dim {
                            1 => 1,
                            2 => 96,
                            3 => 32,
                            _ => 14,
                        };
                        let mut s = 0.0;
                        for (theta, w) in orthant_sphere_rule(*dim, n) {
                            s += w * kernel.shell(dot(lambda, &theta), lo, top)?;
                        }
                        scale * s
                    }
                }
                LevyMeasureSpec::CompoundPoisson { rate, direction, law } => {
                    rate * law.one_minus_cos(dot(lambda, &unit(direction)), lo, hi)?
                }
                LevyMeasureSpec::FiniteAtoms { atoms } => atoms
                    .iter()
                    .filter(|a| {
                        let n = norm(&a.z);
                        n > lo && n <= hi
                    })
                    .map(|a| a.mass * (1.0 - dot(lambda, &a.z).cos()))
                    .sum(),
                _ => unreachable!(),
            };
        }
        Ok(acc)
    }
}

/// Componentwise first moment over the shell `δ < |z| ≤ r` (`δ = 0` allowed).
pub fn small_jump_drift(spec: &LevyMeasureSpec, dim: usize, delta: f64, r: f64) -> Result<Vec<f64>> {
    if !(delta >= 0.0 && delta < r) {
        return Err(Error::OutOfRange(format!("need 0 ≤ δ < r, got δ={delta}, r={r}")));
    }
    spec.first_moment(dim, delta, r)
}

/// Real part of the frozen-noise symbol `Ψ_x(λ)`.
pub fn symbol_re(p: &AdmissibleParams, x: &[f64], lambda: &[f64]) -> Result<f64> {
    let d = p.dim();
    if x.len() != d || lambda.len() != d {
        return Err(Error::DimensionMismatch(format!(
            "state of length {} and frequency of length {} in dimension {d}",
            x.len(),
            lambda.len()
        )));
    }
    let mut acc = 0.0;
    for j in 0..d {
        let xj = x[j].max(0.0);
        acc += 2.0 * p.c[j] * xj * lambda[j] * lambda[j];
    }
    acc += p.nu.one_minus_cos(lambda, 0.0, f64::INFINITY)?;
    for j in 0..d {
        let xj = x[j].max(0.0);
        if xj > 0.0 {
            acc += xj * p.mu[j].one_minus_cos(lambda, 0.0, 1.0)?;
        }
    }
    Ok(acc.max(0.0))
}

/// Sample of a Poisson law; inversion for small means.
pub fn sample_poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if !(mean > 0.0) {
        return 0;
    }
    if mean < 30.0 {
        let mut p = (-mean).exp();
        let mut cdf = p;
        let u: f64 = rng.random();
        let mut k = 0u64;
        while u > cdf && k < 1000 {
            k += 1;
            p *= mean / k as f64;
            cdf += p;
        }
        return k;
    }
    Poisson::new(mean).map(|d| d.sample(rng) as u64).unwrap_or(0)
}

#[derive(Debug, Clone)]
enum Component {
    Axis { coord: usize, alpha: f64, a_pow: f64, b_pow: f64 },
    Cone { alpha: f64, a_pow: f64, b_pow: f64 },
    Radial { law: RadialLaw, direction: Vec<f64>, lo: f64, hi: f64 },
    Point { z: Vec<f64> },
}

fn power_quantile(alpha: f64, a_pow: f64, b_pow: f64, u: f64) -> f64 {
    (a_pow - u * (a_pow - b_pow)).powf(-1.0 / alpha)
}

/// Sampler for the normalised restriction of a spec to a region of finite mass.
#[derive(Debug, Clone)]
pub struct RegionSampler {
    dim: usize,
    region: Region,
    total_mass: f64,
    cumulative: Vec<f64>,
    components: Vec<Component>,
}

impl RegionSampler {
    pub fn new(spec: &LevyMeasureSpec, dim: usize, region: Region) -> Result<Self> {
        region.check()?;
        let (lo, hi) = region.bounds();
        let mut cumulative = Vec::new();
        let mut components = Vec::new();
        let mut total = 0.0;
        let mut push = |mass: f64, c: Component, total: &mut f64| {
            if mass > 0.0 {
                *total += mass;
                cumulative.push(*total);
                components.push(c);
            }
        };
        for leaf in spec.leaves() {
            match leaf {
                LevyMeasureSpec::PerCoordinateStable { coord, alpha, truncated, scale } => {
                    let top = if *truncated { hi.min(1.0) } else { hi };
                    if top <= lo {
                        continue;
                    }
                    let mass = power_integral(-1.0 - alpha, lo, top)
                        .value()
                        .ok_or_else(|| Error::InfiniteMass(format!("{leaf:?} on {region:?}")))?;
                    let b_pow = if top.is_infinite() { 0.0 } else { top.powf(-alpha) };
                    push(
                        scale * mass,
                        Component::Axis { coord: *coord, alpha: *alpha, a_pow: lo.powf(-alpha), b_pow },
                        &mut total,
                    );
                }
                LevyMeasureSpec::TruncatedIsotropicStableCone { dim: d, alpha, scale } => {
                    let top = hi.min(1.0);
                    if top <= lo {
                        continue;
                    }
                    let mass = power_integral(-1.0 - alpha, lo, top)
                        .value()
                        .ok_or_else(|| Error::InfiniteMass(format!("{leaf:?} on {region:?}")))?;
                    push(
                        scale * mass * orthant_sphere_area(*d),
                        Component::Cone { alpha: *alpha, a_pow: lo.powf(-alpha), b_pow: top.powf(-alpha) },
                        &mut total,
                    );
                }
                LevyMeasureSpec::CompoundPoisson { rate, direction, law } => {
                    push(
                        rate * law.prob(lo, hi),
                        Component::Radial { law: *law, direction: unit(direction), lo, hi },
                        &mut total,
                    );
                }
                LevyMeasureSpec::FiniteAtoms { atoms } => {
                    for a in atoms {
                        if region.contains(norm(&a.z)) {
                            push(a.mass, Component::Point { z: a.z.clone() }, &mut total);
                        }
                    }
                }
                _ => unreachable!(),
            }
        }
        Ok(RegionSampler { dim, region, total_mass: total, cumulative, components })
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    pub fn region(&self) -> Region {
        self.region
    }

    /// Adds one jump drawn from the normalised restriction to `acc`.
    pub fn add_jump<R: Rng + ?Sized>(&self, rng: &mut R, acc: &mut [f64]) {
        let target = rng.random::<f64>() * self.total_mass;
        let idx = self.cumulative.partition_point(|c| *c <= target).min(self.components.len() - 1);
        match &self.components[idx] {
            Component::Axis { coord, alpha, a_pow, b_pow } => {
                acc[*coord] += power_quantile(*alpha, *a_pow, *b_pow, rng.random());
            }
            Component::Cone { alpha, a_pow, b_pow } => {
                let r = power_quantile(*alpha, *a_pow, *b_pow, rng.random());
                let mut dir = [0.0f64; 8];
                let dir = if self.dim <= 8 { &mut dir[..self.dim] } else { unreachable!("dimension above 8") };
                let mut n2 = 0.0;
                while n2 == 0.0 {
                    n2 = 0.0;
                    for v in dir.iter_mut() {
                        let g: f64 = StandardNormal.sample(rng);
                        *v = g.abs();
                        n2 += g * g;
                    }
                }
                let s = r / n2.sqrt();
                for (a, v) in acc.iter_mut().zip(dir.iter()) {
                    *a += s * v;
                }
            }
            Component::Radial { law, direction, lo, hi } => {
                let r = law.quantile_restricted(*lo, *hi, rng.random());
                for (a, u) in acc.iter_mut().zip(direction) {
                    *a += r * u;
                }
            }
            Component::Point { z } => {
                for (a, v) in acc.iter_mut().zip(z) {
                    *a += v;
                }
            }
        }
    }

    pub fn sample_jump<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut z = vec![0.0; self.dim];
        self.add_jump(rng, &mut z);
        z
    }

    /// Number of events in a step of length `dt` at intensity `scale · mass`.
    pub fn sample_count<R: Rng + ?Sized>(&self, intensity_scale: f64, dt: f64, rng: &mut R) -> u64 {
        sample_poisson(intensity_scale * self.total_mass * dt, rng)
    }

    pub fn sample_batch<R: Rng + ?Sized>(&self, intensity_scale: f64, dt: f64, rng: &mut R) -> JumpBatch {
        let n = self.sample_count(intensity_scale, dt, rng);
        let mut events: Vec<(f64, Vec<f64>)> =
            (0..n).map(|_| (rng.random::<f64>() * dt, self.sample_jump(rng))).collect();
        events.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (times, sizes) = events.into_iter().unzip();
        JumpBatch { times, sizes, region: self.region }
    }
}

/// Jumps falling into one step, with times relative to the step start.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JumpBatch {
    pub times: Vec<f64>,
    pub sizes: Vec<Vec<f64>>,
    pub region: Region,
}

/// Poisson events of `intensity_scale · spec|_region` over a step of length `dt`.
pub fn sample_jumps<R: Rng + ?Sized>(
    spec: &LevyMeasureSpec,
    dim: usize,
    region: Region,
    intensity_scale: f64,
    dt: f64,
    rng: &mut R,
) -> Result<JumpBatch> {
    if !(intensity_scale >= 0.0) || !(dt >= 0.0) {
        return Err(Error::OutOfRange(format!("intensity {intensity_scale}, dt {dt}")));
    }
    if intensity_scale == 0.0 || dt == 0.0 {
        return Ok(JumpBatch { times: vec![], sizes: vec![], region });
    }
    Ok(RegionSampler::new(spec, dim, region)?.sample_batch(intensity_scale, dt, rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{PathKey, Source};

    #[test]
    fn stable_moment_examples() {
        let s = LevyMeasureSpec::per_coordinate_stable(0, 0.5, true);
        let m = s.moment(1.0, Region::Ball(1.0)).unwrap().value().unwrap();
        assert!((m - 2.0).abs() < 1e-12);
        let u = LevyMeasureSpec::per_coordinate_stable(0, 1.5, false);
        let m = u.moment(1.0, Region::Outside(1.0)).unwrap().value().unwrap();
        assert!((m - 2.0).abs() < 1e-12);
        assert_eq!(u.moment(1.6, Region::Outside(1.0)).unwrap(), Integral::Divergent);
        // the quadrature route agrees on both verdicts
        assert_eq!(u.radial_integral(|r| r.powf(1.6), 1.0, f64::INFINITY).unwrap(), Integral::Divergent);
        let q = u.radial_integral(|r| r, 1.0, f64::INFINITY).unwrap().value().unwrap();
        assert!((q - 2.0).abs() < 1e-8);
    }

    #[test]
    fn atom_moment_example() {
        let s = LevyMeasureSpec::atoms([(2.0, vec![2.0, 0.0])]);
        let m = s.moment(1.5, Region::Outside(1.0)).unwrap().value().unwrap();
        assert!((m - 2.0 * 2f64.powf(1.5)).abs() < 1e-12);
        assert!((m - 5.6569).abs() < 1e-4);
    }

    #[test]
    fn orthant_sphere_rule_matches_closed_forms() {
        for d in 2..=4 {
            let rule = orthant_sphere_rule(d, 12);
            let area: f64 = rule.iter().map(|(_, w)| w).sum();
            assert!((area - orthant_sphere_area(d)).abs() < 1e-10, "d={d}");
            let first: f64 = rule.iter().map(|(t, w)| w * t[0]).sum();
            let mut e = vec![0; d];
            e[0] = 1;
            assert!((first - orthant_angular_moment(&e)).abs() < 1e-10);
        }
        assert!((orthant_sphere_area(2) - PI / 2.0).abs() < 1e-14);
        assert!((orthant_sphere_area(3) - PI / 2.0).abs() < 1e-14);
    }

    #[test]
    fn cone_moments_match_radial_quadrature() {
        let s = LevyMeasureSpec::cone(3, 0.7);
        let closed = s.moment(2.0, Region::Ball(0.5)).unwrap().value().unwrap();
        let numeric = s.radial_integral(|r| r * r, 0.0, 0.5).unwrap().value().unwrap();
        assert!((closed - numeric).abs() < 1e-8 * closed);
        let mass = s.mass(Region::Shell { lo: 0.1, hi: 1.0 }).unwrap().value().unwrap();
        let expected = orthant_sphere_area(3) * (0.1f64.powf(-0.7) - 1.0) / 0.7;
        assert!((mass - expected).abs() < 1e-12);
        assert_eq!(s.mass(Region::Ball(1.0)).unwrap(), Integral::Divergent);
    }

    #[test]
    fn kernel_is_continuous_at_the_asymptotic_switch() {
        for &alpha in &[0.3, 0.9, 1.0, 1.5, 1.9] {
            let k = StableCosKernel::new(alpha).unwrap();
            let below = k.eval(KERNEL_ASYMPTOTIC - 1e-9).unwrap();
            let above = k.eval(KERNEL_ASYMPTOTIC + 1e-9).unwrap();
            assert!((below - above).abs() < 1e-9, "alpha={alpha}: {below} vs {above}");
            let direct = quad::integrate_from_zero(|u| 2.0 * (0.5 * u).sin().powi(2) * u.powf(-1.0 - alpha), 3.0)
                .unwrap()
                .value()
                .unwrap();
            assert!((k.eval(3.0).unwrap() - direct).abs() < 1e-8);
        }
    }

    #[test]
    fn small_jump_drift_examples() {
        let s = LevyMeasureSpec::per_coordinate_stable(0, 0.5, true);
        let v = small_jump_drift(&s, 2, 0.0, 1.0).unwrap();
        assert!((v[0] - 2.0).abs() < 1e-12 && v[1] == 0.0);
        let a = LevyMeasureSpec::atoms([(3.0, vec![0.2, 0.1])]);
        let v = small_jump_drift(&a, 2, 0.1, 1.0).unwrap();
        assert!((v[0] - 0.6).abs() < 1e-12 && (v[1] - 0.3).abs() < 1e-12);
        assert!(small_jump_drift(&s, 2, 1.0, 0.5).is_err());
    }

    #[test]
    fn zero_intensity_gives_empty_batch() {
        let s = LevyMeasureSpec::atoms([(3.0, vec![1.0])]);
        let mut rng = PathKey::new(0, 0).stream(0, Source::Auxiliary(0));
        let b = sample_jumps(&s, 1, Region::Orthant, 0.0, 1.0, &mut rng).unwrap();
        assert!(b.times.is_empty() && b.sizes.is_empty());
    }

    #[test]
    fn infinite_mass_is_reported() {
        let s = LevyMeasureSpec::per_coordinate_stable(0, 1.5, true);
        let mut rng = PathKey::new(0, 0).stream(0, Source::Auxiliary(0));
        assert!(matches!(
            sample_jumps(&s, 1, Region::Ball(1.0), 1.0, 1.0, &mut rng),
            Err(Error::InfiniteMass(_))
        ));
    }

    #[test]
    fn batch_times_sorted_and_sizes_in_region() {
        let s = LevyMeasureSpec::sum([
            LevyMeasureSpec::cone(2, 0.5),
            LevyMeasureSpec::per_coordinate_stable(1, 1.2, false),
        ]);
        let region = Region::Shell { lo: 0.1, hi: 1.0 };
        let mut rng = PathKey::new(3, 0).stream(0, Source::Auxiliary(0));
        let b = sample_jumps(&s, 2, region, 5.0, 1.0, &mut rng).unwrap();
        assert!(!b.times.is_empty());
        assert!(b.times.windows(2).all(|w| w[0] <= w[1]));
        assert!(b.times.iter().all(|t| *t >= 0.0 && *t <= 1.0));
        assert!(b.sizes.iter().all(|z| region.contains(norm(z)) && z.iter().all(|v| *v >= 0.0)));
    }

    #[test]
    fn symbol_of_exponential_law_matches_closed_form() {
        let law = RadialLaw::Exponential { mean: 0.7 };
        let s = LevyMeasureSpec::compound_poisson(2.0, vec![1.0], law);
        let closed = s.one_minus_cos(&[3.0], 0.0, f64::INFINITY).unwrap();
        // chunked quadrature route on a split range
        let a = s.one_minus_cos(&[3.0], 0.0, 2.0).unwrap();
        let b = s.one_minus_cos(&[3.0], 2.0, f64::INFINITY).unwrap();
        assert!((closed - (a + b)).abs() < 1e-9, "{closed} vs {}", a + b);
    }
}
