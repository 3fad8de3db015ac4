//! One-dimensional quadrature.
//!
//! Finite intervals use globally adaptive Gauss–Kronrod (7/15). Integrals
//! reaching the origin or infinity are cut into decade shells; the remainder
//! beyond the last shell is extrapolated from the geometric ratio of the last
//! shell contributions, and a non-contracting ratio is reported as divergence.

use serde::{Serialize, Serializer};

use crate::{Error, Result};

/// Lower hard split for integrals touching the origin.
pub const ORIGIN_SPLIT: f64 = 1e-8;
/// Extrapolated remainders beyond this size are declared divergent.
pub const DIVERGENCE_THRESHOLD: f64 = 1e6;

/// The value of an integral that may diverge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Integral {
    Finite(f64),
    Divergent,
}

impl Integral {
    pub fn is_finite(&self) -> bool {
        matches!(self, Integral::Finite(_))
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            Integral::Finite(v) => Some(*v),
            Integral::Divergent => None,
        }
    }

    #[allow(clippy::should_implement_trait)]
    pub fn add(self, other: Integral) -> Integral {
        match (self, other) {
            (Integral::Finite(a), Integral::Finite(b)) => Integral::Finite(a + b),
            _ => Integral::Divergent,
        }
    }

    pub fn scale(self, factor: f64) -> Integral {
        match self {
            Integral::Finite(v) => Integral::Finite(v * factor),
            Integral::Divergent if factor == 0.0 => Integral::Finite(0.0),
            Integral::Divergent => Integral::Divergent,
        }
    }
}

impl std::iter::Sum for Integral {
    fn sum<I: Iterator<Item = Integral>>(iter: I) -> Self {
        iter.fold(Integral::Finite(0.0), Integral::add)
    }
}

impl Serialize for Integral {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Integral::Finite(v) => s.serialize_f64(*v),
            Integral::Divergent => s.serialize_str("divergent"),
        }
    }
}

#[allow(clippy::excessive_precision)]
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
#[allow(clippy::excessive_precision)]
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
#[allow(clippy::excessive_precision)]
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let s = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

/// Result of a converged finite-interval quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quad {
    pub value: f64,
    pub abs_error: f64,
}

const MAX_SUBINTERVALS: usize = 4000;

/// Globally adaptive Gauss–Kronrod on `[a, b]`.
pub fn adaptive<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> Result<Quad> {
    if a == b {
        return Ok(Quad { value: 0.0, abs_error: 0.0 });
    }
    let mut parts = vec![(a, b, gk15(&f, a, b))];
    loop {
        let value: f64 = parts.iter().map(|p| p.2 .0).sum();
        let err: f64 = parts.iter().map(|p| p.2 .1).sum();
        if !value.is_finite() || !err.is_finite() {
            return Err(Error::QuadratureFailure(format!(
                "non-finite integrand on [{a}, {b}]"
            )));
        }
        if err <= abs_tol.max(rel_tol * value.abs()) {
            return Ok(Quad { value, abs_error: err });
        }
        if parts.len() >= MAX_SUBINTERVALS {
            return Err(Error::QuadratureFailure(format!(
                "no convergence on [{a}, {b}]: estimate {value}, error {err}"
            )));
        }
        let (idx, _) = parts
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .2 .1.total_cmp(&y.1 .2 .1))
            .expect("non-empty");
        let (lo, hi, _) = parts.swap_remove(idx);
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return Err(Error::QuadratureFailure(format!(
                "interval [{lo}, {hi}] cannot be split further"
            )));
        }
        parts.push((lo, mid, gk15(&f, lo, mid)));
        parts.push((mid, hi, gk15(&f, mid, hi)));
    }
}

/// Default tolerance used by the measure integrals.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> Result<f64> {
    Ok(adaptive(f, a, b, 1e-12, 1e-11)?.value)
}

fn extrapolate_shells(shells: &[f64]) -> Option<Integral> {
    let n = shells.len();
    if n < 4 {
        return None;
    }
    let last = shells[n - 1];
    let total: f64 = shells.iter().sum();
    if last.abs() <= 1e-16 * total.abs().max(1e-300) || last == 0.0 {
        return Some(Integral::Finite(0.0));
    }
    let r1 = shells[n - 1] / shells[n - 2];
    let r2 = shells[n - 2] / shells[n - 3];
    let r3 = shells[n - 3] / shells[n - 4];
    let stable = (r1 - r2).abs() <= 1e-3 * r1.abs().max(1e-3) && (r2 - r3).abs() <= 1e-2 * r2.abs().max(1e-3);
    if !stable {
        return None;
    }
    if !(r1.is_finite()) || r1 >= 0.999 || r1 <= 0.0 {
        return Some(Integral::Divergent);
    }
    let rem = last * r1 / (1.0 - r1);
    if rem.abs() > DIVERGENCE_THRESHOLD {
        return Some(Integral::Divergent);
    }
    Some(Integral::Finite(rem))
}

const MAX_SHELLS: usize = 60;

/// `∫_a^∞ f`, `a > 0`, over decade shells with geometric tail extrapolation.
pub fn integrate_to_infinity<F: Fn(f64) -> f64>(f: F, a: f64) -> Result<Integral> {
    debug_assert!(a > 0.0);
    let mut shells = Vec::new();
    let mut lo = a;
    for _ in 0..MAX_SHELLS {
        let hi = lo * 10.0;
        shells.push(integrate(&f, lo, hi)?);
        lo = hi;
        let sum: f64 = shells.iter().sum();
        if sum.abs() > DIVERGENCE_THRESHOLD * 1e6 {
            return Ok(Integral::Divergent);
        }
        if let Some(rem) = extrapolate_shells(&shells) {
            return Ok(match rem {
                Integral::Finite(r) => Integral::Finite(sum + r),
                Integral::Divergent => Integral::Divergent,
            });
        }
    }
    Ok(Integral::Divergent)
}

/// `∫_0^b f`, `b > 0`. Decade shells down to the hard split at
/// [`ORIGIN_SPLIT`], then extrapolation of the remainder.
pub fn integrate_from_zero<F: Fn(f64) -> f64>(f: F, b: f64) -> Result<Integral> {
    debug_assert!(b > 0.0);
    let mut shells = Vec::new();
    let mut hi = b;
    for _ in 0..MAX_SHELLS {
        let lo = hi / 10.0;
        shells.push(integrate(&f, lo, hi)?);
        hi = lo;
        let sum: f64 = shells.iter().sum();
        if sum.abs() > DIVERGENCE_THRESHOLD * 1e6 {
            return Ok(Integral::Divergent);
        }
        if hi <= ORIGIN_SPLIT || shells.len() >= 4 {
            if let Some(rem) = extrapolate_shells(&shells) {
                if hi > ORIGIN_SPLIT && matches!(rem, Integral::Finite(_)) {
                    // keep refining until the hard split is reached
                    continue;
                }
                return Ok(match rem {
                    Integral::Finite(r) => Integral::Finite(sum + r),
                    Integral::Divergent => Integral::Divergent,
                });
            }
        }
    }
    Ok(Integral::Divergent)
}

/// `∫_lo^hi f` where `lo` may be 0 and `hi` may be infinite.
pub fn integrate_range<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64) -> Result<Integral> {
    if hi <= lo {
        return Ok(Integral::Finite(0.0));
    }
    match (lo == 0.0, hi.is_infinite()) {
        (false, false) => Ok(Integral::Finite(integrate(&f, lo, hi)?)),
        (true, false) => integrate_from_zero(&f, hi),
        (false, true) => integrate_to_infinity(&f, lo),
        (true, true) => Ok(integrate_from_zero(&f, 1.0)?.add(integrate_to_infinity(&f, 1.0)?)),
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else if n == 1 { x } else { p1 };
            let pn1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pn1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}
