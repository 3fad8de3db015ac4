//! Smoothing certificates and the hypothesis checks of the density
//! theorems, including the Hölder ledger that yields the approximation
//! rates `κ_i`.
//!
//! Index sets are 0-based throughout.

use serde::{Deserialize, Serialize};

use crate::levy::{LevyMeasureSpec, Region};
use crate::params::AdmissibleParams;
use crate::quad::Integral;
use crate::stats;
use crate::{Error, Result};

const FIT_LO: f64 = 1e2;
const FIT_HI: f64 = 1e4;
const FIT_POINTS: usize = 40;
const EXPONENT_TOL: f64 = 0.05;
const GUARD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertificateSource {
    /// Diffusion or a one-dimensional branching part with a power-law symbol in every coordinate.
    BranchingSymbol,
    /// Immigration symbol with a power law of order below one.
    ImmigrationSymbol,
    /// Every diffusion-free coordinate branches by an untruncated one-sided stable law with `α ∈ (1, 2)`.
    StableBranching,
    /// A branching measure containing the truncated isotropic stable cone with `α < 1`.
    ConeBranching,
    UserAsserted,
}

/// Log–log fit of a symbol over a frequency band.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SymbolCheck {
    pub label: String,
    pub band: (f64, f64),
    pub exponent: f64,
    pub target: f64,
    /// `min` and `max` of `symbol / |λ|^target` over the band.
    pub lower_constant: f64,
    pub upper_constant: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SmoothingCertificate {
    /// 0-based; serialized 1-based.
    #[serde(rename = "I", serialize_with = "one_based")]
    pub index_set: Vec<usize>,
    pub alpha: Vec<f64>,
    pub source: CertificateSource,
    pub symbol_checks: Vec<SymbolCheck>,
}

fn one_based<S: serde::Serializer>(idx: &[usize], s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(idx.iter().map(|i| i + 1))
}

impl SmoothingCertificate {
    pub fn user_asserted(index_set: Vec<usize>, alpha: Vec<f64>) -> Result<Self> {
        if let Some(a) = alpha.iter().find(|a| !(**a > 0.0 && **a <= 2.0)) {
            return Err(Error::OutOfRange(format!("alpha={a} outside (0, 2]")));
        }
        if let Some(j) = index_set.iter().find(|j| **j >= alpha.len()) {
            return Err(Error::DimensionMismatch(format!("index {j} outside 0..{}", alpha.len())));
        }
        let mut index_set = index_set;
        index_set.sort_unstable();
        index_set.dedup();
        Ok(SmoothingCertificate { index_set, alpha, source: CertificateSource::UserAsserted, symbol_checks: Vec::new() })
    }

    pub fn dim(&self) -> usize {
        self.alpha.len()
    }
}

fn fit_symbol<F: FnMut(f64) -> Result<f64>>(label: String, target: f64, mut symbol: F) -> Result<SymbolCheck> {
    let lambdas = stats::log_space(FIT_LO, FIT_HI, FIT_POINTS);
    let mut logx = Vec::with_capacity(FIT_POINTS);
    let mut logy = Vec::with_capacity(FIT_POINTS);
    let mut lower = f64::INFINITY;
    let mut upper: f64 = 0.0;
    for &l in &lambdas {
        let s = symbol(l)?;
        if !s.is_finite() {
            return Err(Error::QuadratureFailure(format!("{label}: symbol not finite at λ={l}")));
        }
        let c = s / l.powf(target);
        lower = lower.min(c);
        upper = upper.max(c);
        if s > 0.0 {
            logx.push(l.ln());
            logy.push(s.ln());
        }
    }
    let exponent = if logx.len() >= 2 { stats::linear_fit(&logx, &logy)?.slope } else { 0.0 };
    let pass = lower > 0.0 && upper.is_finite() && (exponent - target).abs() <= EXPONENT_TOL;
    Ok(SymbolCheck { label, band: (FIT_LO, FIT_HI), exponent, target, lower_constant: lower, upper_constant: upper, pass })
}

fn on_axis(leaf: &LevyMeasureSpec, j: usize) -> bool {
    let axis = |z: &[f64]| z.iter().enumerate().all(|(k, v)| k == j || *v == 0.0);
    match leaf {
        LevyMeasureSpec::PerCoordinateStable { coord, .. } => *coord == j,
        LevyMeasureSpec::CompoundPoisson { direction, .. } => axis(direction),
        LevyMeasureSpec::FiniteAtoms { atoms } => atoms.iter().all(|a| axis(&a.z)),
        _ => false,
    }
}

/// The part of `μ_j` living on the `j`-th axis.
fn axis_part(m: &LevyMeasureSpec, j: usize) -> LevyMeasureSpec {
    LevyMeasureSpec::sum(m.leaves().into_iter().filter(|l| on_axis(l, j)).cloned())
}

fn stable_index(m: &LevyMeasureSpec) -> Option<f64> {
    m.leaves()
        .into_iter()
        .filter_map(|l| match l {
            LevyMeasureSpec::PerCoordinateStable { alpha, .. }
            | LevyMeasureSpec::TruncatedIsotropicStableCone { alpha, .. } => Some(*alpha),
            _ => None,
        })
        .fold(None, |acc: Option<f64>, a| Some(acc.map_or(a, |b| b.max(a))))
}

fn branching_route(p: &AdmissibleParams) -> Result<Option<SmoothingCertificate>> {
    let d = p.dim();
    let mut alpha = Vec::with_capacity(d);
    let mut checks = Vec::new();
    let mut pure_stable = true;
    let mut any_jump_coord = false;
    for j in 0..d {
        if p.c[j] > 0.0 {
            alpha.push(2.0);
            continue;
        }
        any_jump_coord = true;
        let part = axis_part(&p.mu[j], j);
        let Some(target) = stable_index(&part) else {
            return Ok(None);
        };
        if !(target > 0.0 && target < 2.0) {
            return Ok(None);
        }
        let mut e = vec![0.0; d];
        let check = fit_symbol(format!("mu_{}: axis {}", j + 1, j + 1), target, |l| {
            e[j] = l;
            part.one_minus_cos(&e, 0.0, 1.0)
        })?;
        let ok = check.pass;
        checks.push(check);
        if !ok {
            return Ok(None);
        }
        alpha.push(target);
        let exact = matches!(
            p.mu[j].leaves().as_slice(),
            [LevyMeasureSpec::PerCoordinateStable { coord, alpha, truncated: false, scale }]
                if *coord == j && *scale == 1.0 && *alpha > 1.0 && *alpha < 2.0
        );
        pure_stable &= exact;
    }
    let source = if any_jump_coord && pure_stable {
        CertificateSource::StableBranching
    } else {
        CertificateSource::BranchingSymbol
    };
    Ok(Some(SmoothingCertificate { index_set: (0..d).collect(), alpha, source, symbol_checks: checks }))
}

fn immigration_route(p: &AdmissibleParams) -> Result<Option<SmoothingCertificate>> {
    let d = p.dim();
    let Some(target) = stable_index(&p.nu) else {
        return Ok(None);
    };
    if !(target > 0.0 && target < 1.0) {
        return Ok(None);
    }
    let mut dirs: Vec<(String, Vec<f64>)> = (0..d)
        .map(|k| {
            let mut e = vec![0.0; d];
            e[k] = 1.0;
            (format!("nu: axis {}", k + 1), e)
        })
        .collect();
    if d > 1 {
        dirs.push(("nu: diagonal".into(), vec![1.0 / (d as f64).sqrt(); d]));
    }
    let mut checks = Vec::new();
    for (label, dir) in dirs {
        let check = fit_symbol(label, target, |l| {
            let lam: Vec<f64> = dir.iter().map(|v| v * l).collect();
            p.nu.one_minus_cos(&lam, 0.0, f64::INFINITY)
        })?;
        let ok = check.pass;
        checks.push(check);
        if !ok {
            return Ok(None);
        }
    }
    Ok(Some(SmoothingCertificate {
        index_set: Vec::new(),
        alpha: vec![target; d],
        source: CertificateSource::ImmigrationSymbol,
        symbol_checks: checks,
    }))
}

fn cone_route(p: &AdmissibleParams) -> Option<SmoothingCertificate> {
    let d = p.dim();
    for (j, m) in p.mu.iter().enumerate() {
        for leaf in m.leaves() {
            if let LevyMeasureSpec::TruncatedIsotropicStableCone { alpha, .. } = leaf {
                if *alpha > 0.0 && *alpha < 1.0 {
                    return Some(SmoothingCertificate {
                        index_set: vec![j],
                        alpha: vec![*alpha; d],
                        source: CertificateSource::ConeBranching,
                        symbol_checks: Vec::new(),
                    });
                }
            }
        }
    }
    None
}

/// Derives a smoothing certificate from the structure of `p`, if one of the
/// known routes applies.
pub fn certify(p: &AdmissibleParams) -> Result<Option<SmoothingCertificate>> {
    p.require_valid()?;
    if let Some(c) = branching_route(p)? {
        return Ok(Some(c));
    }
    if let Some(c) = immigration_route(p)? {
        return Ok(Some(c));
    }
    Ok(cone_route(p))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Theorem {
    /// Diffusion allowed, smoothing on the whole orthant interior, `α_i > 4/3`.
    General,
    /// No diffusion, a common small-jump exponent `γ₀`.
    NoDiffusion,
    /// No diffusion, branching along the coordinate axes with per-coordinate `γ₀^i`.
    AxisAligned,
}

/// Hölder data of one coefficient acting on coordinate `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientExponents {
    /// Coupling set; empty exactly when the coefficient is constant.
    pub coupling: Vec<usize>,
    pub theta: f64,
    /// Integrability exponent (fixed to 2 for the diffusion, unused for the drift).
    pub gamma: f64,
    /// Whether the coefficient is not identically zero.
    pub nonzero: bool,
}

impl CoefficientExponents {
    fn new(coupling: Vec<usize>, theta: f64, gamma: f64, nonzero: bool) -> Self {
        CoefficientExponents { coupling, theta, gamma, nonzero }
    }

    pub fn is_constant(&self) -> bool {
        self.coupling.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoordinateLedger {
    pub b: CoefficientExponents,
    pub sigma: CoefficientExponents,
    /// Compensated small jumps.
    pub sigma0: CoefficientExponents,
    /// Finite-variation jumps.
    pub sigma1: CoefficientExponents,
    /// Big jumps.
    pub sigma2: CoefficientExponents,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoelderLedger {
    pub coordinates: Vec<CoordinateLedger>,
}

impl HoelderLedger {
    pub fn dim(&self) -> usize {
        self.coordinates.len()
    }

    pub fn check(&self) -> Result<()> {
        let d = self.dim();
        for (i, c) in self.coordinates.iter().enumerate() {
            let all = [&c.b, &c.sigma, &c.sigma0, &c.sigma1, &c.sigma2];
            for e in all {
                if !(0.0..=1.0).contains(&e.theta) {
                    return Err(Error::OutOfRange(format!("theta={} of coordinate {} outside [0, 1]", e.theta, i + 1)));
                }
                if e.coupling.iter().any(|j| *j >= d) {
                    return Err(Error::DimensionMismatch(format!("coupling index out of range for coordinate {}", i + 1)));
                }
            }
            let g0 = c.sigma0.gamma;
            if !(g0 > 1.0 && g0 <= 2.0) {
                return Err(Error::OutOfRange(format!("gamma(sigma0)={g0} outside (1, 2]")));
            }
            if !(c.sigma1.gamma > 0.0 && c.sigma1.gamma <= 1.0) {
                return Err(Error::OutOfRange(format!("gamma(sigma1)={} outside (0, 1]", c.sigma1.gamma)));
            }
            if !(c.sigma2.gamma > 0.0 && c.sigma2.gamma <= g0) {
                return Err(Error::OutOfRange(format!("gamma(sigma2)={} outside (0, {g0}]", c.sigma2.gamma)));
            }
        }
        Ok(())
    }
}

fn broadcast(v: &[f64], d: usize, name: &str) -> Result<Vec<f64>> {
    match v.len() {
        1 => Ok(vec![v[0]; d]),
        n if n == d => Ok(v.to_vec()),
        n => Err(Error::DimensionMismatch(format!("{name} has {n} entries, expected 1 or {d}"))),
    }
}

/// Ledger instantiations for the three settings. `gamma0` is ignored for
/// [`Theorem::General`]; both slices may hold one shared value.
pub fn ledger_preset(theorem: Theorem, dim: usize, gamma0: &[f64], tau: &[f64]) -> Result<HoelderLedger> {
    if dim == 0 {
        return Err(Error::DimensionMismatch("dimension zero".into()));
    }
    let g0 = match theorem {
        Theorem::General => vec![2.0; dim],
        _ => broadcast(gamma0, dim, "gamma0")?,
    };
    let tau = broadcast(tau, dim, "tau")?;
    for i in 0..dim {
        if !(g0[i] > 1.0 && g0[i] <= 2.0) {
            return Err(Error::OutOfRange(format!("gamma0={} outside (1, 2]", g0[i])));
        }
        if !(tau[i] >= 0.0 && tau[i] < g0[i] - 1.0) {
            return Err(Error::OutOfRange(format!("tau={} outside [0, gamma0 - 1)", tau[i])));
        }
    }
    let all: Vec<usize> = (0..dim).collect();
    let coordinates = (0..dim)
        .map(|i| {
            let own = match theorem {
                Theorem::AxisAligned => vec![i],
                _ => all.clone(),
            };
            let sigma = match theorem {
                Theorem::General => CoefficientExponents::new(vec![i], 0.5, 2.0, true),
                _ => CoefficientExponents::new(Vec::new(), 1.0, 2.0, false),
            };
            CoordinateLedger {
                b: CoefficientExponents::new(all.clone(), 1.0, 1.0, true),
                sigma,
                sigma0: CoefficientExponents::new(own.clone(), 1.0 / g0[i], g0[i], true),
                sigma1: CoefficientExponents::new(Vec::new(), 1.0, 1.0, true),
                sigma2: CoefficientExponents::new(own, 1.0 / (1.0 + tau[i]), 1.0 + tau[i], true),
            }
        })
        .collect();
    Ok(HoelderLedger { coordinates })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoordinateKappa {
    pub gamma: f64,
    pub gamma_lower: f64,
    pub gamma_upper: f64,
    pub kappa_b: f64,
    pub kappa_sigma: f64,
    pub kappa_sigma0: f64,
    pub kappa_sigma1: f64,
    pub kappa_sigma2: f64,
    pub kappa: f64,
    pub coupling_ok: bool,
    /// `κ_i α_i > 1`, when an `α` was supplied.
    pub rate_ok: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KappaReport {
    pub coordinates: Vec<CoordinateKappa>,
}

impl KappaReport {
    pub fn kappas(&self) -> Vec<f64> {
        self.coordinates.iter().map(|c| c.kappa).collect()
    }

    pub fn coupling_ok(&self) -> bool {
        self.coordinates.iter().all(|c| c.coupling_ok)
    }

    pub fn rate_ok(&self) -> Option<bool> {
        self.coordinates.iter().map(|c| c.rate_ok).collect::<Option<Vec<_>>>().map(|v| v.iter().all(|b| *b))
    }
}

fn gammas(c: &CoordinateLedger) -> (f64, f64) {
    let vals: Vec<f64> = [
        (c.sigma.nonzero, 2.0),
        (c.sigma0.nonzero, c.sigma0.gamma),
        (c.sigma1.nonzero, c.sigma1.gamma),
        (c.sigma2.nonzero, c.sigma2.gamma),
    ]
    .iter()
    .filter(|(nz, _)| *nz)
    .map(|(_, g)| *g)
    .collect();
    let hi = vals.iter().cloned().fold(0.0, f64::max);
    let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    (hi, lo)
}

/// The rates `κ_i`, the coupling condition and, with `alpha`, `κ_i α_i > 1`.
pub fn kappa(ledger: &HoelderLedger, alpha: Option<&[f64]>) -> Result<KappaReport> {
    ledger.check()?;
    let d = ledger.dim();
    if let Some(a) = alpha {
        if a.len() != d {
            return Err(Error::DimensionMismatch(format!("alpha of length {} for a ledger of dimension {d}", a.len())));
        }
    }
    let g: Vec<(f64, f64)> = ledger.coordinates.iter().map(gammas).collect();
    let coordinates = ledger
        .coordinates
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let coefs = [&c.b, &c.sigma, &c.sigma0, &c.sigma1, &c.sigma2];
            let upper = coefs
                .iter()
                .flat_map(|e| e.coupling.iter())
                .map(|&j| g[j].0)
                .fold(0.0, f64::max);
            let term = |e: &CoefficientExponents, base: f64| {
                if e.is_constant() {
                    f64::INFINITY
                } else {
                    base + e.theta / upper
                }
            };
            let kappa_b = term(&c.b, 1.0);
            let kappa_sigma = term(&c.sigma, 0.5);
            let kappa_sigma0 = term(&c.sigma0, 1.0 / c.sigma0.gamma);
            let kappa_sigma1 = term(&c.sigma1, 1.0 / c.sigma1.gamma);
            let kappa_sigma2 = term(&c.sigma2, 1.0 / c.sigma2.gamma);
            let kappa = kappa_b.min(kappa_sigma).min(kappa_sigma0).min(kappa_sigma1).min(kappa_sigma2);
            let coupling_ok = (0..d).all(|j| {
                let weight = |e: &CoefficientExponents, v: f64| if e.coupling.contains(&j) { v } else { 0.0 };
                let m = weight(&c.b, c.b.theta)
                    .max(weight(&c.sigma, 2.0 * c.sigma.theta))
                    .max(weight(&c.sigma0, c.sigma0.theta * c.sigma0.gamma))
                    .max(weight(&c.sigma1, c.sigma1.theta * c.sigma1.gamma))
                    .max(weight(&c.sigma2, c.sigma2.theta * c.sigma2.gamma));
                m <= g[j].1 + GUARD
            });
            let rate_ok = alpha.map(|a| kappa * a[i] - 1.0 > GUARD);
            CoordinateKappa {
                gamma: g[i].0,
                gamma_lower: g[i].1,
                gamma_upper: upper,
                kappa_b,
                kappa_sigma,
                kappa_sigma0,
                kappa_sigma1,
                kappa_sigma2,
                kappa,
                coupling_ok,
                rate_ok,
            }
        })
        .collect();
    Ok(KappaReport { coordinates })
}

/// Moment exponents supplied by the user; missing ones are inferred.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TheoremInputs {
    #[serde(default)]
    pub gamma0: Option<Vec<f64>>,
    #[serde(default)]
    pub tau: Option<Vec<f64>>,
    /// `E|X(0)|^{1+τ} < ∞`, attested by the caller.
    #[serde(default = "yes")]
    pub initial_moment_finite: bool,
}

fn yes() -> bool {
    true
}

impl TheoremInputs {
    pub fn inferred() -> Self {
        TheoremInputs { gamma0: None, tau: None, initial_moment_finite: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Hypothesis {
    pub name: String,
    pub required: String,
    pub actual: String,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoremReport {
    pub theorem: Theorem,
    pub hypotheses: Vec<Hypothesis>,
    pub overall: bool,
    pub gamma0: Vec<f64>,
    pub tau: Vec<f64>,
    pub certificate: SmoothingCertificate,
    pub kappa: Option<KappaReport>,
    /// With `I = ∅` from the immigration route, `P[X_i(t) = 0 for i ∉ I] = 0` follows.
    pub boundary_null: bool,
}

fn item(name: &str, required: impl Into<String>, actual: impl Into<String>, pass: bool) -> Hypothesis {
    Hypothesis { name: name.into(), required: required.into(), actual: actual.into(), pass }
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x}")).collect();
    format!("[{}]", parts.join(", "))
}

fn tail_moment(m: &LevyMeasureSpec, order: f64) -> Result<Integral> {
    m.moment(order, Region::Outside(1.0))
}

fn small_moment(m: &LevyMeasureSpec, order: f64) -> Result<Integral> {
    m.moment(order, Region::Ball(1.0))
}

/// Values `k/100` in `(lo, hi)`, or in `[lo, hi]` when the bound is inclusive.
fn grid(lo: f64, hi: f64, lo_incl: bool, hi_incl: bool) -> Vec<f64> {
    (0..=200)
        .map(|k| k as f64 / 100.0)
        .filter(|v| (if lo_incl { *v >= lo - GUARD } else { *v > lo + GUARD }) && (if hi_incl { *v <= hi + GUARD } else { *v < hi - GUARD }))
        .collect()
}

struct Exponents {
    gamma0: f64,
    tau: Option<f64>,
}

/// Smallest feasible `γ₀` on the grid that admits a feasible `τ`, and the
/// largest such `τ`.
fn infer_exponents<S, T>(small_ok: S, tail_ok: T, allow_zero_tau: bool, gamma0: Option<f64>, tau: Option<f64>) -> Result<Option<Exponents>>
where
    S: Fn(f64) -> Result<bool>,
    T: Fn(f64) -> Result<bool>,
{
    let g_candidates = match gamma0 {
        Some(g) => vec![g],
        None => grid(1.0, 2.0, false, true),
    };
    for g in g_candidates {
        if !small_ok(g)? {
            continue;
        }
        let t = match tau {
            Some(t) => Some(t),
            None => {
                let mut best = None;
                for t in grid(0.0, g - 1.0, false, false).into_iter().rev() {
                    if tail_ok(t)? {
                        best = Some(t);
                        break;
                    }
                }
                if best.is_none() && allow_zero_tau && tail_ok(0.0)? {
                    best = Some(0.0);
                }
                best
            }
        };
        if t.is_some() || gamma0.is_some() {
            return Ok(Some(Exponents { gamma0: g, tau: t }));
        }
    }
    Ok(None)
}

fn first(v: &Option<Vec<f64>>) -> Option<f64> {
    v.as_ref().and_then(|v| v.first().copied())
}

/// Checks the hypotheses of `theorem` for `p` under certificate `cert`.
pub fn check_theorem(
    p: &AdmissibleParams,
    cert: Option<&SmoothingCertificate>,
    theorem: Theorem,
    inputs: &TheoremInputs,
) -> Result<TheoremReport> {
    let cert = cert.ok_or(Error::MissingCertificate)?;
    p.check_dims()?;
    let d = p.dim();
    if cert.dim() != d {
        return Err(Error::DimensionMismatch(format!("certificate of dimension {} for parameters of dimension {d}", cert.dim())));
    }
    let mut items = Vec::new();
    let validation = p.validate()?;
    items.push(item("admissible parameters", "conditions hold", if validation.ok { "ok" } else { "violated" }, validation.ok));
    let alpha = &cert.alpha;
    let in_i = |j: usize| cert.index_set.contains(&j);
    let empty_i = cert.index_set.is_empty();

    let (gamma0, tau): (Vec<f64>, Vec<f64>) = match theorem {
        Theorem::General => {
            let all = cert.index_set.len() == d;
            items.push(item("certificate index set", "I = {1..d}", format!("{:?}", cert.index_set.iter().map(|j| j + 1).collect::<Vec<_>>()), all));
            let ok = alpha.iter().all(|a| *a > 4.0 / 3.0);
            items.push(item("alpha threshold", "alpha_i > 4/3", fmt_vec(alpha), ok));
            let tail_ok = |t: f64| -> Result<bool> {
                let mut s = tail_moment(&p.nu, 1.0 + t)?;
                for m in &p.mu {
                    s = s.add(tail_moment(m, 1.0 + t)?);
                }
                Ok(s.is_finite())
            };
            let tau = match first(&inputs.tau) {
                Some(t) => Some(t),
                None => {
                    let mut best = None;
                    for t in grid(0.0, 1.0, false, false).into_iter().rev() {
                        if tail_ok(t)? {
                            best = Some(t);
                            break;
                        }
                    }
                    best
                }
            };
            match tau {
                Some(t) => {
                    let range = t > 0.0 && t < 1.0;
                    items.push(item("tau range", "tau in (0, 1)", format!("{t}"), range));
                    let fin = tail_ok(t)?;
                    items.push(item("big-jump moment", "sum_j int_{|z|>1} |z|^{1+tau} mu_j + int_{|z|>1} |z|^{1+tau} nu < inf", if fin { "finite" } else { "divergent" }, fin));
                }
                None => items.push(item("big-jump moment", "some tau in (0, 1) with finite moments of order 1+tau", "none on the 0.01 grid", false)),
            }
            (vec![2.0; d], tau.into_iter().collect())
        }
        Theorem::NoDiffusion => {
            let c0 = p.c.iter().all(|c| *c == 0.0);
            items.push(item("no diffusion", "c = 0", fmt_vec(&p.c), c0));
            let ok = alpha.iter().all(|a| *a > 0.0 && *a < 2.0);
            items.push(item("alpha range", "alpha_i in (0, 2)", fmt_vec(alpha), ok));
            let small_ok = |g: f64| -> Result<bool> {
                let mut s = Integral::Finite(0.0);
                for m in &p.mu {
                    s = s.add(small_moment(m, g)?);
                }
                Ok(s.is_finite())
            };
            let tail_ok = |t: f64| -> Result<bool> {
                let mut s = tail_moment(&p.nu, 1.0 + t)?;
                for m in &p.mu {
                    s = s.add(tail_moment(m, 1.0 + t)?);
                }
                Ok(s.is_finite())
            };
            let ex = infer_exponents(small_ok, tail_ok, empty_i, first(&inputs.gamma0), first(&inputs.tau))?;
            match ex {
                Some(Exponents { gamma0: g, tau }) => {
                    items.push(item("gamma0 range", "gamma0 in (1, 2]", format!("{g}"), g > 1.0 && g <= 2.0));
                    let sm = small_ok(g)?;
                    items.push(item("small-jump moment", "sum_j int_{|z|<=1} |z|^gamma0 mu_j < inf", if sm { "finite" } else { "divergent" }, sm));
                    match tau {
                        Some(t) => {
                            let range = (t > 0.0 || (t == 0.0 && empty_i)) && t < g - 1.0;
                            let req = if empty_i { "tau in [0, gamma0 - 1)" } else { "tau in (0, gamma0 - 1)" };
                            items.push(item("tau range", req, format!("{t}"), range));
                            let fin = tail_ok(t)?;
                            items.push(item("big-jump moment", "sum_j int_{|z|>1} |z|^{1+tau} mu_j + int_{|z|>1} |z|^{1+tau} nu < inf", if fin { "finite" } else { "divergent" }, fin));
                        }
                        None => items.push(item("big-jump moment", "a feasible tau", "none on the 0.01 grid", false)),
                    }
                    let thr = g * g / (1.0 + g);
                    let ok = alpha.iter().all(|a| *a > thr);
                    items.push(item("alpha threshold", format!("alpha_i > gamma0^2/(1+gamma0) = {thr}"), fmt_vec(alpha), ok));
                    (vec![g], tau.into_iter().collect())
                }
                None => {
                    items.push(item("small-jump moment", "some gamma0 in (1, 2] with a feasible tau", "none on the 0.01 grid", false));
                    (Vec::new(), Vec::new())
                }
            }
        }
        Theorem::AxisAligned => {
            let c0 = p.c.iter().all(|c| *c == 0.0);
            items.push(item("no diffusion", "c = 0", fmt_vec(&p.c), c0));
            let aligned = p.mu.iter().enumerate().all(|(k, m)| m.leaves().iter().all(|l| on_axis(l, k)));
            items.push(item("axis-aligned branching", "mu_k lives on the k-th axis", if aligned { "yes" } else { "no" }, aligned));
            let ok = alpha.iter().all(|a| *a > 0.0 && *a < 2.0);
            items.push(item("alpha range", "alpha_i in (0, 2)", fmt_vec(alpha), ok));
            let g_in = inputs.gamma0.as_ref().map(|v| broadcast(v, d, "gamma0")).transpose()?;
            let t_in = inputs.tau.as_ref().map(|v| broadcast(v, d, "tau")).transpose()?;
            let mut gs = Vec::with_capacity(d);
            let mut ts = Vec::with_capacity(d);
            let mut feasible = true;
            for j in 0..d {
                let m = &p.mu[j];
                let small_ok = |g: f64| -> Result<bool> { Ok(small_moment(m, g)?.is_finite()) };
                let tail_ok = |t: f64| -> Result<bool> {
                    Ok(tail_moment(m, 1.0 + t)?.add(tail_moment(&p.nu, 1.0 + t)?).is_finite())
                };
                let ex = infer_exponents(
                    small_ok,
                    tail_ok,
                    empty_i,
                    g_in.as_ref().map(|v| v[j]),
                    t_in.as_ref().map(|v| v[j]),
                )?;
                match ex {
                    Some(Exponents { gamma0: g, tau: Some(t) }) => {
                        let range = g > 1.0 && g <= 2.0 && (t > 0.0 || (t == 0.0 && empty_i)) && t < g - 1.0;
                        let fin = small_ok(g)? && tail_ok(t)?;
                        items.push(item(
                            &format!("moments of mu_{}", j + 1),
                            "gamma0^j in (1, 2], tau_j in (0, gamma0^j - 1), finite moments",
                            format!("gamma0={g}, tau={t}, {}", if fin { "finite" } else { "divergent" }),
                            range && fin,
                        ));
                        gs.push(g);
                        ts.push(t);
                    }
                    _ => {
                        items.push(item(&format!("moments of mu_{}", j + 1), "feasible gamma0^j and tau_j", "none on the 0.01 grid", false));
                        feasible = false;
                    }
                }
            }
            if feasible {
                let gstar = gs.iter().cloned().fold(0.0, f64::max);
                let ok = (0..d).all(|i| alpha[i] > gstar / (1.0 + gstar) * gs[i]);
                items.push(item("alpha threshold", format!("alpha_i > gamma*/(1+gamma*) gamma0^i, gamma* = {gstar}"), fmt_vec(alpha), ok));
                (gs, ts)
            } else {
                (Vec::new(), Vec::new())
            }
        }
    };

    if theorem != Theorem::General {
        let bad: Vec<usize> = (0..d).filter(|&j| in_i(j) && alpha[j] < 1.0).collect();
        items.push(item("alpha on I", "alpha_j >= 1 for j in I", fmt_vec(alpha), bad.is_empty()));
    }
    let tau_max = tau.iter().cloned().fold(0.0, f64::max);
    items.push(item(
        "initial moment",
        format!("E|X(0)|^{{1+tau}} < inf with tau = {tau_max} (attested)"),
        if inputs.initial_moment_finite { "attested" } else { "not attested" },
        inputs.initial_moment_finite,
    ));

    let complete = match theorem {
        Theorem::General => tau.len() == 1,
        _ => !gamma0.is_empty() && tau.len() == gamma0.len(),
    };
    let kappa_report = if complete {
        match ledger_preset(theorem, d, &gamma0, &tau) {
            Ok(ledger) => Some(kappa(&ledger, Some(alpha))?),
            Err(_) => None,
        }
    } else {
        None
    };
    match &kappa_report {
        Some(k) => {
            let coupling = k.coupling_ok();
            items.push(item("coupling condition", "weighted exponents <= gamma_{*,j}", if coupling { "holds" } else { "fails" }, coupling));
            let rate = k.rate_ok().unwrap_or(false);
            items.push(item("rate condition", "kappa_i alpha_i > 1", fmt_vec(&k.kappas()), rate));
        }
        None => items.push(item("rate condition", "kappa_i alpha_i > 1", "ledger unavailable", false)),
    }
    let overall = items.iter().all(|h| h.pass);
    let boundary_null = overall
        && theorem == Theorem::NoDiffusion
        && empty_i
        && cert.source == CertificateSource::ImmigrationSymbol;
    Ok(TheoremReport {
        theorem,
        hypotheses: items,
        overall,
        gamma0,
        tau,
        certificate: cert.clone(),
        kappa: kappa_report,
        boundary_null,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy::RadialLaw;

    fn stable_pair(a1: f64, a2: f64, c: f64) -> AdmissibleParams {
        AdmissibleParams::new(vec![c, c], vec![1.0, 1.0], vec![vec![-1.0, 0.5], vec![0.2, -1.0]])
            .with_mu(0, LevyMeasureSpec::per_coordinate_stable(0, a1, false))
            .with_mu(1, LevyMeasureSpec::per_coordinate_stable(1, a2, false))
    }

    #[test]
    fn diffusion_certificate() {
        let p = AdmissibleParams::new(vec![1.0, 1.0], vec![0.0; 2], vec![vec![-1.0, 0.0], vec![0.0, -1.0]]);
        let c = certify(&p).unwrap().unwrap();
        assert_eq!(c.index_set, vec![0, 1]);
        assert_eq!(c.alpha, vec![2.0, 2.0]);
        assert_eq!(c.source, CertificateSource::BranchingSymbol);
    }

    #[test]
    fn immigration_cone_certificate() {
        let p = AdmissibleParams::new(vec![0.0, 0.0], vec![0.0; 2], vec![vec![-1.0, 0.0], vec![0.0, -1.0]])
            .with_nu(LevyMeasureSpec::cone(2, 0.5));
        let c = certify(&p).unwrap().unwrap();
        assert!(c.index_set.is_empty());
        assert_eq!(c.alpha, vec![0.5, 0.5]);
        assert_eq!(c.source, CertificateSource::ImmigrationSymbol);
    }

    #[test]
    fn bounded_symbol_has_no_certificate() {
        let law = RadialLaw::Exponential { mean: 1.0 };
        let p = AdmissibleParams::new(vec![0.0], vec![0.0], vec![vec![-1.0]])
            .with_mu(0, LevyMeasureSpec::compound_poisson(1.0, vec![1.0], law))
            .with_nu(LevyMeasureSpec::atoms([(1.0, vec![0.5])]));
        assert!(certify(&p).unwrap().is_none());
    }

    #[test]
    fn stable_branching_is_recognised() {
        let c = certify(&stable_pair(1.5, 1.6, 0.0)).unwrap().unwrap();
        assert_eq!(c.source, CertificateSource::StableBranching);
        assert_eq!(c.alpha, vec![1.5, 1.6]);
        assert!(c.symbol_checks.iter().all(|s| s.pass));
    }

    #[test]
    fn preset_kappas() {
        let k = kappa(&ledger_preset(Theorem::General, 3, &[], &[0.5]).unwrap(), None).unwrap();
        assert!(k.kappas().iter().all(|v| *v == 0.75));
        assert!(k.coupling_ok());
        let k = kappa(&ledger_preset(Theorem::NoDiffusion, 2, &[1.5], &[0.2]).unwrap(), None).unwrap();
        assert!(k.kappas().iter().all(|v| (v - 10.0 / 9.0).abs() < 1e-15));
        let k = kappa(&ledger_preset(Theorem::AxisAligned, 2, &[1.2, 1.8], &[0.1, 0.1]).unwrap(), None).unwrap();
        let ks = k.kappas();
        assert!((ks[0] - (1.0 / 1.2) * (1.0 + 1.0 / 1.8)).abs() < 1e-15);
        assert!((ks[1] - (1.0 / 1.8) * (1.0 + 1.0 / 1.8)).abs() < 1e-15);
    }

    #[test]
    fn preset_ledger_shapes() {
        let l = ledger_preset(Theorem::General, 2, &[], &[0.3]).unwrap();
        let c = &l.coordinates[1];
        assert_eq!(c.sigma.coupling, vec![1]);
        assert_eq!(c.sigma.theta, 0.5);
        assert_eq!(c.sigma0.gamma, 2.0);
        assert!((c.sigma2.gamma - 1.3).abs() < 1e-15);
        assert_eq!(c.b.coupling, vec![0, 1]);
        let l = ledger_preset(Theorem::NoDiffusion, 1, &[1.5], &[0.0]).unwrap();
        assert!((l.coordinates[0].sigma0.theta - 2.0 / 3.0).abs() < 1e-15);
        let l = ledger_preset(Theorem::AxisAligned, 3, &[1.5, 1.6, 1.7], &[0.1]).unwrap();
        assert_eq!(l.coordinates[2].sigma0.coupling, vec![2]);
        assert!(ledger_preset(Theorem::NoDiffusion, 1, &[2.5], &[0.0]).is_err());
    }

    #[test]
    fn general_theorem_passes_with_diffusion() {
        let p = stable_pair(1.5, 1.6, 0.5);
        let c = certify(&p).unwrap().unwrap();
        let r = check_theorem(&p, Some(&c), Theorem::General, &TheoremInputs::inferred()).unwrap();
        assert!(r.overall, "{:#?}", r.hypotheses);
    }

    #[test]
    fn no_diffusion_threshold() {
        let p = stable_pair(1.2, 1.9, 0.0);
        let c = certify(&p).unwrap().unwrap();
        let r = check_theorem(&p, Some(&c), Theorem::NoDiffusion, &TheoremInputs::inferred()).unwrap();
        assert!(!r.overall);
        let thr = r.hypotheses.iter().find(|h| h.name == "alpha threshold").unwrap();
        assert!(!thr.pass);

        let c = SmoothingCertificate::user_asserted(Vec::new(), vec![0.95, 0.95]).unwrap();
        let p = AdmissibleParams::new(vec![0.0, 0.0], vec![0.0; 2], vec![vec![-1.0, 0.0], vec![0.0, -1.0]]);
        let inputs = TheoremInputs { gamma0: Some(vec![1.5]), tau: Some(vec![0.0]), initial_moment_finite: true };
        let r = check_theorem(&p, Some(&c), Theorem::NoDiffusion, &inputs).unwrap();
        assert!(r.overall, "{:#?}", r.hypotheses);
    }

    #[test]
    fn missing_certificate() {
        let p = stable_pair(1.5, 1.6, 0.0);
        assert!(matches!(
            check_theorem(&p, None, Theorem::General, &TheoremInputs::inferred()),
            Err(Error::MissingCertificate)
        ));
    }
}
