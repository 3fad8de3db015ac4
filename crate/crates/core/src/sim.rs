//! Full-truncation Euler simulation of the CBI jump-diffusion.
//!
//! Per step of length `h` a path moves by
//!
//! * drift `(β + B̃X + ∫_{|z|≤δ} z ν(dz)) h`,
//! * diffusion `√(2 c_k X_k⁺) ΔW_k`,
//! * immigration jumps from `ν` on `|z| > δ`,
//! * for each `j`, branching jumps from `μ_j` on `δ < |z| ≤ 1` thinned at
//!   intensity `X_j⁺` minus their compensator, plus uncompensated jumps on
//!   `|z| > 1` at the same intensity,
//! * optionally a Gaussian stand-in for the compensated jumps below `δ`
//!   with covariance `X_j⁺ h ∫_{|z|≤δ} z zᵀ μ_j(dz)`,
//!
//! and is then projected onto the orthant.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::levy::{sample_poisson, LevyMeasureSpec, Region, RegionSampler};
use crate::params::AdmissibleParams;
use crate::rng::{CounterRng, PathKey, Source};
use crate::stats::{self, LinearFit, MeanEstimate};
use crate::{Error, Result};

/// Largest supported dimension.
pub const MAX_DIM: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmallJumps {
    /// Jumps below the cutoff are omitted together with their compensator.
    Drop,
    /// Jumps below the cutoff are replaced by a matching Gaussian increment.
    #[default]
    Gaussian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeConfig {
    pub dt: f64,
    pub delta: f64,
    pub n_paths: usize,
    pub seed: u64,
    #[serde(default)]
    pub record_skeleton: bool,
    /// Record every k-th step in the skeleton.
    #[serde(default = "default_every")]
    pub skeleton_every: usize,
    #[serde(default)]
    pub small_jumps: SmallJumps,
}

fn default_every() -> usize {
    1
}

impl SchemeConfig {
    pub fn new(dt: f64, delta: f64, n_paths: usize, seed: u64) -> Self {
        SchemeConfig {
            dt,
            delta,
            n_paths,
            seed,
            record_skeleton: false,
            skeleton_every: 1,
            small_jumps: SmallJumps::Gaussian,
        }
    }

    pub fn check(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt <= 1.0) {
            return Err(Error::InvalidParams(format!("dt must lie in (0, 1], got {}", self.dt)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidParams(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        if self.n_paths == 0 {
            return Err(Error::InvalidParams("n_paths must be positive".into()));
        }
        if self.skeleton_every == 0 {
            return Err(Error::InvalidParams("skeleton_every must be positive".into()));
        }
        Ok(())
    }
}

pub type InitialSampler = Arc<dyn Fn(&mut CounterRng) -> Vec<f64> + Send + Sync>;

/// Law of `X(0)`.
#[derive(Clone)]
pub enum InitialState {
    Point(Vec<f64>),
    Sampler(InitialSampler),
}

impl fmt::Debug for InitialState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitialState::Point(x) => f.debug_tuple("Point").field(x).finish(),
            InitialState::Sampler(_) => f.write_str("Sampler(..)"),
        }
    }
}

impl From<Vec<f64>> for InitialState {
    fn from(x: Vec<f64>) -> Self {
        InitialState::Point(x)
    }
}

impl InitialState {
    fn draw(&self, key: &PathKey, d: usize) -> Result<Vec<f64>> {
        let x = match self {
            InitialState::Point(x) => x.clone(),
            InitialState::Sampler(f) => f(&mut key.stream(0, Source::InitialState)),
        };
        if x.len() != d {
            return Err(Error::DimensionMismatch(format!("initial state of length {} in dimension {d}", x.len())));
        }
        if x.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidParams(format!("initial state {x:?} is not in the orthant")));
        }
        Ok(x)
    }
}

/// Neglected or replaced compensator pieces.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BiasReport {
    pub small_jumps: SmallJumps,
    /// Immigration below the cutoff is added as exact drift, so nothing is left over.
    pub immigration_residual: Vec<f64>,
    /// `t ∫_{|z|≤δ} z ν(dz)`, the part moved into the drift.
    pub immigration_small_drift: Vec<f64>,
    /// `∫_{|z|≤δ} |z|² μ_j(dz)`, per `j`.
    pub branching_small_variance: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Skeleton {
    pub times: Vec<f64>,
    /// `states[path][k]` is the state at `times[k]`.
    pub states: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathEnsemble {
    pub dim: usize,
    pub t: f64,
    pub seed: u64,
    pub path_ids: Vec<u64>,
    pub terminal: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub skeleton: Option<Skeleton>,
    pub bias_report: BiasReport,
}

impl PathEnsemble {
    pub fn len(&self) -> usize {
        self.terminal.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terminal.is_empty()
    }

    /// Terminal states as CSV: `path,weight,x_1..x_d`.
    pub fn write_terminal_csv<W: Write>(&self, mut w: W) -> Result<()> {
        write!(w, "path,weight")?;
        for i in 1..=self.dim {
            write!(w, ",x_{i}")?;
        }
        writeln!(w)?;
        for ((id, x), wt) in self.path_ids.iter().zip(&self.terminal).zip(&self.weights) {
            write!(w, "{id},{wt}")?;
            for v in x {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// Skeleton as CSV: `time,path,x_1..x_d`.
    pub fn write_skeleton_csv<W: Write>(&self, mut w: W) -> Result<()> {
        write!(w, "time,path")?;
        for i in 1..=self.dim {
            write!(w, ",x_{i}")?;
        }
        writeln!(w)?;
        if let Some(sk) = &self.skeleton {
            for (id, states) in self.path_ids.iter().zip(&sk.states) {
                for (time, x) in sk.times.iter().zip(states) {
                    write!(w, "{time},{id}")?;
                    for v in x {
                        write!(w, ",{v}")?;
                    }
                    writeln!(w)?;
                }
            }
        }
        Ok(())
    }
}

/// Lower-triangular factor of a positive semidefinite matrix; degenerate
/// directions get a zero column.
fn cholesky_psd(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    let scale = (0..n).map(|i| a[i][i].abs()).fold(0.0, f64::max);
    for j in 0..n {
        let mut s = a[j][j];
        for k in 0..j {
            s -= l[j][k] * l[j][k];
        }
        if s <= 1e-14 * scale {
            continue;
        }
        let ljj = s.sqrt();
        l[j][j] = ljj;
        for i in j + 1..n {
            let mut s = a[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            l[i][j] = s / ljj;
        }
    }
    l
}

fn nonzero_sampler(spec: &LevyMeasureSpec, d: usize, region: Region) -> Result<Option<RegionSampler>> {
    let s = RegionSampler::new(spec, d, region)?;
    Ok(if s.total_mass() > 0.0 { Some(s) } else { None })
}

/// Precomputed per-parameter quantities shared by all paths.
#[derive(Debug, Clone)]
pub(crate) struct Engine {
    d: usize,
    bt: Vec<Vec<f64>>,
    beta: Vec<f64>,
    sqrt2c: Vec<f64>,
    nu_small_drift: Vec<f64>,
    nu_big: Option<RegionSampler>,
    shell: Vec<Option<RegionSampler>>,
    shell_comp: Vec<Vec<f64>>,
    big: Vec<Option<RegionSampler>>,
    small_chol: Vec<Option<Vec<Vec<f64>>>>,
    bias: BiasReport,
}

impl Engine {
    pub(crate) fn new(p: &AdmissibleParams, delta: f64, small_jumps: SmallJumps) -> Result<Self> {
        p.require_valid()?;
        let d = p.dim();
        if d > MAX_DIM {
            return Err(Error::InvalidParams(format!("dimension {d} exceeds the supported maximum {MAX_DIM}")));
        }
        let bt = p.effective_drift()?;
        let nu_small_drift = p.nu.first_moment(d, 0.0, delta)?;
        let nu_big = nonzero_sampler(&p.nu, d, Region::Outside(delta))?;
        let mut shell = Vec::with_capacity(d);
        let mut shell_comp = Vec::with_capacity(d);
        let mut big = Vec::with_capacity(d);
        let mut small_chol = Vec::with_capacity(d);
        let mut small_var = Vec::with_capacity(d);
        for m in &p.mu {
            shell.push(nonzero_sampler(m, d, Region::Shell { lo: delta, hi: 1.0 })?);
            shell_comp.push(m.first_moment(d, delta, 1.0)?);
            big.push(nonzero_sampler(m, d, Region::Outside(1.0))?);
            let var = m.moment(2.0, Region::Ball(delta))?.value().ok_or_else(|| {
                Error::DivergentMoment("second moment of a branching measure near the origin".into())
            })?;
            small_var.push(var);
            let chol = if small_jumps == SmallJumps::Gaussian && var > 0.0 {
                Some(cholesky_psd(&m.second_moment_matrix(d, 0.0, delta)?))
            } else {
                None
            };
            small_chol.push(chol);
        }
        let bias = BiasReport {
            small_jumps,
            immigration_residual: vec![0.0; d],
            immigration_small_drift: nu_small_drift.clone(),
            branching_small_variance: small_var,
        };
        Ok(Engine {
            d,
            bt,
            beta: p.beta.clone(),
            sqrt2c: p.c.iter().map(|c| (2.0 * c).sqrt()).collect(),
            nu_small_drift,
            nu_big,
            shell,
            shell_comp,
            big,
            small_chol,
            bias,
        })
    }

    /// `β + B̃x`.
    fn drift(&self, x: &[f64], out: &mut [f64]) {
        for i in 0..self.d {
            let mut v = self.beta[i];
            for j in 0..self.d {
                v += self.bt[i][j] * x[j];
            }
            out[i] = v;
        }
    }

    fn add_gaussian<R: Rng + ?Sized>(chol: &[Vec<f64>], scale: f64, rng: &mut R, out: &mut [f64]) {
        let d = chol.len();
        let mut g = [0.0f64; MAX_DIM];
        for v in g.iter_mut().take(d) {
            *v = StandardNormal.sample(rng);
        }
        for i in 0..d {
            let mut s = 0.0;
            for k in 0..=i {
                s += chol[i][k] * g[k];
            }
            out[i] += scale * s;
        }
    }

    /// One Euler step of length `h` from the projected state `x`.
    fn step(&self, x: &mut [f64], h: f64, key: &PathKey, n: u64) {
        let d = self.d;
        let mut dx = [0.0f64; MAX_DIM];
        self.drift(x, &mut dx);
        for i in 0..d {
            dx[i] = (dx[i] + self.nu_small_drift[i]) * h;
        }
        if self.sqrt2c.iter().any(|c| *c > 0.0) {
            let mut rng = key.stream(n, Source::Brownian);
            for k in 0..d {
                if self.sqrt2c[k] > 0.0 {
                    let g: f64 = StandardNormal.sample(&mut rng);
                    dx[k] += self.sqrt2c[k] * (x[k] * h).sqrt() * g;
                }
            }
        }
        if let Some(s) = &self.nu_big {
            let mut rng = key.stream(n, Source::Immigration);
            for _ in 0..s.sample_count(1.0, h, &mut rng) {
                s.add_jump(&mut rng, &mut dx[..d]);
            }
        }
        for j in 0..d {
            let xj = x[j];
            if xj <= 0.0 {
                continue;
            }
            if let Some(s) = &self.shell[j] {
                let mut rng = key.stream(n, Source::BranchingShell(j as u32));
                for _ in 0..s.sample_count(xj, h, &mut rng) {
                    s.add_jump(&mut rng, &mut dx[..d]);
                }
                for i in 0..d {
                    dx[i] -= xj * self.shell_comp[j][i] * h;
                }
            }
            if let Some(s) = &self.big[j] {
                let mut rng = key.stream(n, Source::BranchingBig(j as u32));
                for _ in 0..s.sample_count(xj, h, &mut rng) {
                    s.add_jump(&mut rng, &mut dx[..d]);
                }
            }
        }
        if self.small_chol.iter().any(Option::is_some) {
            let mut rng = key.stream(n, Source::SmallJumpGaussian);
            for j in 0..d {
                if let Some(chol) = &self.small_chol[j] {
                    if x[j] > 0.0 {
                        Self::add_gaussian(chol, (x[j] * h).sqrt(), &mut rng, &mut dx[..d]);
                    }
                }
            }
        }
        for i in 0..d {
            x[i] = (x[i] + dx[i]).max(0.0);
        }
    }
}

/// Step grid for horizon `t`: the number of steps and the length of step `n`.
fn step_count(t: f64, dt: f64) -> u64 {
    let r = t / dt;
    let n = r.round();
    if (r - n).abs() < 1e-9 * r.max(1.0) {
        n.max(1.0) as u64
    } else {
        r.ceil() as u64
    }
}

fn step_len(t: f64, dt: f64, n: u64, steps: u64) -> f64 {
    if n + 1 == steps {
        (t - dt * n as f64).max(0.0).min(dt).max(if steps == 1 { t } else { 0.0 })
    } else {
        dt
    }
}

/// Runs one path; `record` lists step indices (after that many steps) to keep.
fn run_path(
    engine: &Engine,
    x0: &InitialState,
    seed: u64,
    path: u64,
    t: f64,
    dt: f64,
    record: &[u64],
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let key = PathKey::new(seed, path);
    let mut x = x0.draw(&key, engine.d)?;
    let steps = step_count(t, dt);
    let mut rec = Vec::with_capacity(record.len());
    let mut next = 0;
    while next < record.len() && record[next] == 0 {
        rec.push(x.clone());
        next += 1;
    }
    for n in 0..steps {
        let h = step_len(t, dt, n, steps);
        engine.step(&mut x, h, &key, n);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState { step: n, path });
        }
        while next < record.len() && record[next] == n + 1 {
            rec.push(x.clone());
            next += 1;
        }
    }
    Ok((x, rec))
}

/// Simulates `cfg.n_paths` independent paths up to time `t`.
pub fn simulate(p: &AdmissibleParams, x0: &InitialState, t: f64, cfg: &SchemeConfig) -> Result<PathEnsemble> {
    cfg.check()?;
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidParams(format!("horizon must be positive, got {t}")));
    }
    let engine = Engine::new(p, cfg.delta, cfg.small_jumps)?;
    let steps = step_count(t, cfg.dt);
    let record: Vec<u64> = if cfg.record_skeleton {
        let mut r: Vec<u64> = (0..=steps).step_by(cfg.skeleton_every).collect();
        if *r.last().unwrap() != steps {
            r.push(steps);
        }
        r
    } else {
        Vec::new()
    };
    let results: Vec<(Vec<f64>, Vec<Vec<f64>>)> = (0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|i| run_path(&engine, x0, cfg.seed, i, t, cfg.dt, &record))
        .collect::<Result<_>>()?;
    let (terminal, recs): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let skeleton = cfg.record_skeleton.then(|| Skeleton {
        times: record.iter().map(|&n| (n as f64 * cfg.dt).min(t)).collect(),
        states: recs,
    });
    let mut bias = engine.bias.clone();
    for v in bias.immigration_small_drift.iter_mut() {
        *v *= t;
    }
    Ok(PathEnsemble {
        dim: engine.d,
        t,
        seed: cfg.seed,
        path_ids: (0..cfg.n_paths as u64).collect(),
        weights: vec![1.0; cfg.n_paths],
        terminal,
        skeleton,
        bias_report: bias,
    })
}

/// Monte Carlo estimate of `E[e^{-λ·X(t)}]` with its standard error.
pub fn laplace_estimate(ens: &PathEnsemble, lambda: &[f64]) -> MeanEstimate {
    let vals: Vec<f64> = ens
        .terminal
        .iter()
        .map(|x| (-x.iter().zip(lambda).map(|(a, b)| a * b).sum::<f64>()).exp())
        .collect();
    stats::mean_stderr(&vals)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoordinateSlope {
    pub coordinate: usize,
    pub fit: LinearFit,
    pub bootstrap_stderr: f64,
    pub expected: f64,
    pub tolerance: f64,
    pub pass: bool,
    /// Mean of `|ΔX_i|^η` per lag.
    pub moments: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeHolderReport {
    pub eta: f64,
    pub t: f64,
    pub lags: Vec<f64>,
    pub n_paths: usize,
    pub coordinates: Vec<CoordinateSlope>,
}

fn bootstrap_slope(samples: &[Vec<f64>], logx: &[f64], reps: usize, seed: u64) -> f64 {
    let n = samples[0].len();
    let mut rng = PathKey::new(seed, u64::MAX).stream(0, Source::Auxiliary(7));
    stats::bootstrap_stderr(n, reps, &mut rng, |idx| {
        let y: Vec<f64> = samples
            .iter()
            .map(|col| (idx.iter().map(|&k| col[k]).sum::<f64>() / n as f64).ln())
            .collect();
        stats::linear_fit(logx, &y).map(|f| f.slope).unwrap_or(f64::NAN)
    })
}

/// Regression slope of `log E|X_i(t) - X_i(t-s)|^η` against `log s`.
///
/// `gamma[i]` and `gamma_star[i]` are the ledger exponents `γ_i`, `γ_{*,i}`;
/// the pass flag compares the slope with `η/γ_i - tolerance`.
#[allow(clippy::too_many_arguments)]
pub fn time_holder_estimate(
    p: &AdmissibleParams,
    x0: &InitialState,
    t: f64,
    eta: f64,
    lags: &[f64],
    cfg: &SchemeConfig,
    gamma: &[f64],
    gamma_star: &[f64],
    tolerance: f64,
) -> Result<TimeHolderReport> {
    cfg.check()?;
    let d = p.dim();
    if gamma.len() != d || gamma_star.len() != d {
        return Err(Error::DimensionMismatch("ledger exponents must have one entry per coordinate".into()));
    }
    for i in 0..d {
        if !(eta > 0.0 && eta <= gamma_star[i] + 1e-12) {
            return Err(Error::OutOfRange(format!("eta={eta} outside (0, gamma_*={}]", gamma_star[i])));
        }
    }
    if lags.len() < 2 {
        return Err(Error::OutOfRange("need at least two lags".into()));
    }
    let steps = step_count(t, cfg.dt);
    let mut record = Vec::with_capacity(lags.len() + 1);
    for &s in lags {
        let k = (s / cfg.dt).round();
        if !(s > 0.0 && s < t) || ((k * cfg.dt - s).abs() > 1e-9 * s) {
            return Err(Error::OutOfRange(format!("lag {s} is not a positive multiple of dt below t")));
        }
        record.push(steps - k as u64);
    }
    let mut order: Vec<usize> = (0..lags.len()).collect();
    order.sort_by_key(|&k| record[k]);
    let mut sorted: Vec<u64> = order.iter().map(|&k| record[k]).collect();
    sorted.push(steps);
    let engine = Engine::new(p, cfg.delta, cfg.small_jumps)?;
    let runs: Vec<(Vec<f64>, Vec<Vec<f64>>)> = (0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|i| run_path(&engine, x0, cfg.seed, i, t, cfg.dt, &sorted))
        .collect::<Result<_>>()?;
    let logx: Vec<f64> = lags.iter().map(|s| s.ln()).collect();
    let mut coordinates = Vec::with_capacity(d);
    for i in 0..d {
        // samples[lag][path]
        let mut samples = vec![Vec::with_capacity(runs.len()); lags.len()];
        for (_, rec) in &runs {
            let end = rec[rec.len() - 1][i];
            for (pos, &k) in order.iter().enumerate() {
                samples[k].push((end - rec[pos][i]).abs().powf(eta));
            }
        }
        let moments: Vec<f64> = samples.iter().map(|c| c.iter().sum::<f64>() / c.len() as f64).collect();
        if moments.iter().any(|m| !(*m > 0.0)) {
            return Err(Error::DegenerateSample(format!("coordinate {} does not move over some lag", i + 1)));
        }
        let logy: Vec<f64> = moments.iter().map(|m| m.ln()).collect();
        let fit = stats::linear_fit(&logx, &logy)?;
        let se = bootstrap_slope(&samples, &logx, 200, cfg.seed ^ (i as u64 + 1));
        if se > tolerance {
            return Err(Error::InsufficientPaths(format!(
                "bootstrap standard error {se:.4} of coordinate {} exceeds tolerance {tolerance}",
                i + 1
            )));
        }
        let expected = eta / gamma[i];
        coordinates.push(CoordinateSlope {
            coordinate: i + 1,
            pass: fit.slope >= expected - tolerance,
            fit,
            bootstrap_stderr: se,
            expected,
            tolerance,
            moments,
        });
    }
    Ok(TimeHolderReport { eta, t, lags: lags.to_vec(), n_paths: cfg.n_paths, coordinates })
}

/// Jump event of a Poisson random measure on `window × R_+^d × [0, R]`.
#[derive(Debug, Clone)]
struct MarkedEvent {
    u: f64,
    r: f64,
    z: Vec<f64>,
}

fn marked_events<R: Rng + ?Sized>(s: &RegionSampler, eps: f64, r_lo: f64, r_hi: f64, rng: &mut R) -> Vec<MarkedEvent> {
    let n = sample_poisson(s.total_mass() * (r_hi - r_lo) * eps, rng);
    let mut ev: Vec<MarkedEvent> = (0..n)
        .map(|_| MarkedEvent {
            u: rng.random::<f64>() * eps,
            r: r_lo + rng.random::<f64>() * (r_hi - r_lo),
            z: s.sample_jump(rng),
        })
        .collect();
    ev.sort_by(|a, b| a.u.total_cmp(&b.u));
    ev
}

/// Events of one branching source, extended in `r` on demand.
struct ThinnedSource<'a> {
    sampler: &'a RegionSampler,
    bands: Vec<(Vec<MarkedEvent>, usize)>,
    r_max: f64,
    kind: u32,
    j: u32,
}

impl<'a> ThinnedSource<'a> {
    fn new(sampler: &'a RegionSampler, eps: f64, r_max: f64, key: &PathKey, level: u64, kind: u32, j: u32) -> Self {
        let mut rng = key.stream(level, Source::Auxiliary(Self::source_id(kind, j, 0)));
        let ev = marked_events(sampler, eps, 0.0, r_max, &mut rng);
        ThinnedSource { sampler, bands: vec![(ev, 0)], r_max, kind, j }
    }

    fn source_id(kind: u32, j: u32, band: u32) -> u32 {
        0x100 + (kind * MAX_DIM as u32 + j) * 64 + band
    }

    /// Makes sure the bands cover `r ≤ level_needed`.
    fn cover(&mut self, needed: f64, eps: f64, now: f64, key: &PathKey, level: u64) {
        while self.r_max < needed {
            let band = self.bands.len() as u32;
            let hi = 2.0 * self.r_max.max(needed);
            let mut rng = key.stream(level, Source::Auxiliary(Self::source_id(self.kind, self.j, band.min(63))));
            let ev = marked_events(self.sampler, eps, self.r_max, hi, &mut rng);
            let cursor = ev.partition_point(|e| e.u < now);
            self.bands.push((ev, cursor));
            self.r_max = hi;
        }
    }

    /// Adds jumps with time in `[a, b)` and mark `r ≤ level` to `acc`.
    fn fire(&mut self, a: f64, b: f64, level: f64, acc: &mut [f64]) {
        for (ev, cursor) in self.bands.iter_mut() {
            while *cursor < ev.len() && ev[*cursor].u < b {
                let e = &ev[*cursor];
                if e.u >= a && e.r <= level {
                    for (x, z) in acc.iter_mut().zip(&e.z) {
                        *x += z;
                    }
                }
                *cursor += 1;
            }
        }
    }

    /// Sum of all jumps with mark `r ≤ level`.
    fn total(&self, level: f64, acc: &mut [f64]) {
        for (ev, _) in &self.bands {
            for e in ev.iter().filter(|e| e.r <= level) {
                for (x, z) in acc.iter_mut().zip(&e.z) {
                    *x += z;
                }
            }
        }
    }
}

/// Result of one frozen-coefficient window.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OneStepSample {
    /// Frozen drift and big jumps.
    pub u: Vec<f64>,
    /// Frozen diffusion, compensated small jumps and immigration jumps.
    pub v: Vec<f64>,
    /// `U^ε + V^ε`.
    pub approx: Vec<f64>,
    /// Fine Euler path at the window end, driven by the same noise.
    pub exact: Vec<f64>,
}

/// Frozen-coefficient approximation over `[s, s+ε]` started from `x_prev = X(s)`.
///
/// The reference path is a fine full-truncation Euler path with step
/// `fine_dt` driven by the same Brownian increments and Poisson random
/// measures as the approximation.
#[allow(clippy::too_many_arguments)]
pub fn euler_one_step_approx(
    p: &AdmissibleParams,
    x_prev: &[f64],
    eps: f64,
    fine_dt: f64,
    delta: f64,
    small_jumps: SmallJumps,
    key: &PathKey,
    level: u64,
) -> Result<OneStepSample> {
    let engine = Engine::new(p, delta, small_jumps)?;
    one_step_with(&engine, x_prev, eps, fine_dt, key, level)
}

fn one_step_with(
    engine: &Engine,
    x_prev: &[f64],
    eps: f64,
    fine_dt: f64,
    key: &PathKey,
    level: u64,
) -> Result<OneStepSample> {
    let d = engine.d;
    if x_prev.len() != d {
        return Err(Error::DimensionMismatch(format!("state of length {} in dimension {d}", x_prev.len())));
    }
    if !(eps > 0.0 && eps <= 1.0) || !(fine_dt > 0.0) {
        return Err(Error::InvalidParams(format!("need eps in (0, 1] and fine_dt > 0, got {eps}, {fine_dt}")));
    }
    let xs: Vec<f64> = x_prev.iter().map(|v| v.max(0.0)).collect();
    let n_fine = ((eps / fine_dt).round() as u64).max(1);
    let h = eps / n_fine as f64;

    let mut dw = vec![[0.0f64; MAX_DIM]; n_fine as usize];
    if engine.sqrt2c.iter().any(|c| *c > 0.0) {
        let mut rng = key.stream(level, Source::Brownian);
        for step in dw.iter_mut() {
            for v in step.iter_mut().take(d) {
                let g: f64 = StandardNormal.sample(&mut rng);
                *v = g * h.sqrt();
            }
        }
    }
    // standard normals for the Gaussian small-jump stand-in, per (step, j)
    let gauss = engine.small_chol.iter().any(Option::is_some);
    let mut gn = Vec::new();
    if gauss {
        let mut rng = key.stream(level, Source::SmallJumpGaussian);
        gn = (0..n_fine as usize * d * d).map(|_| StandardNormal.sample(&mut rng)).collect::<Vec<f64>>();
    }
    let nu_events = match &engine.nu_big {
        Some(s) => {
            let mut rng = key.stream(level, Source::Immigration);
            marked_events(s, eps, 0.0, 1.0, &mut rng)
        }
        None => Vec::new(),
    };
    let r0 = 2.0 * xs.iter().cloned().fold(0.0, f64::max) + 1.0;
    let mut shells: Vec<Option<ThinnedSource>> = (0..d)
        .map(|j| engine.shell[j].as_ref().map(|s| ThinnedSource::new(s, eps, r0, key, level, 0, j as u32)))
        .collect();
    let mut bigs: Vec<Option<ThinnedSource>> = (0..d)
        .map(|j| engine.big[j].as_ref().map(|s| ThinnedSource::new(s, eps, r0, key, level, 1, j as u32)))
        .collect();

    // fine reference path
    let mut x = xs.clone();
    let mut nu_cursor = 0;
    for k in 0..n_fine as usize {
        let a = k as f64 * h;
        let b = if k + 1 == n_fine as usize { eps * (1.0 + 1e-12) } else { (k + 1) as f64 * h };
        let mut dx = [0.0f64; MAX_DIM];
        engine.drift(&x, &mut dx);
        for i in 0..d {
            dx[i] = (dx[i] + engine.nu_small_drift[i]) * h;
            dx[i] += engine.sqrt2c[i] * x[i].sqrt() * dw[k][i];
        }
        while nu_cursor < nu_events.len() && nu_events[nu_cursor].u < b {
            for (v, z) in dx.iter_mut().zip(&nu_events[nu_cursor].z) {
                *v += z;
            }
            nu_cursor += 1;
        }
        for j in 0..d {
            let xj = x[j];
            if let Some(src) = shells[j].as_mut() {
                src.cover(xj, eps, a, key, level);
                src.fire(a, b, xj, &mut dx[..d]);
                for i in 0..d {
                    dx[i] -= xj * engine.shell_comp[j][i] * h;
                }
            }
            if let Some(src) = bigs[j].as_mut() {
                src.cover(xj, eps, a, key, level);
                src.fire(a, b, xj, &mut dx[..d]);
            }
            if let Some(chol) = &engine.small_chol[j] {
                if xj > 0.0 {
                    let base = (k * d + j) * d;
                    let g = &gn[base..base + d];
                    let sc = (xj * h).sqrt();
                    for i in 0..d {
                        let mut s = 0.0;
                        for m in 0..=i {
                            s += chol[i][m] * g[m];
                        }
                        dx[i] += sc * s;
                    }
                }
            }
        }
        for i in 0..d {
            x[i] = (x[i] + dx[i]).max(0.0);
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState { step: k as u64, path: level });
        }
    }

    // frozen approximation
    let mut bx = vec![0.0; d];
    engine.drift(&xs, &mut bx);
    let mut u: Vec<f64> = (0..d).map(|i| xs[i] + eps * bx[i]).collect();
    let mut v = vec![0.0; d];
    for i in 0..d {
        let w: f64 = dw.iter().map(|s| s[i]).sum();
        v[i] += engine.sqrt2c[i] * xs[i].sqrt() * w + eps * engine.nu_small_drift[i];
    }
    for e in &nu_events {
        for (vi, z) in v.iter_mut().zip(&e.z) {
            *vi += z;
        }
    }
    for j in 0..d {
        let xj = xs[j];
        if let Some(src) = &shells[j] {
            src.total(xj, &mut v);
            for i in 0..d {
                v[i] -= xj * engine.shell_comp[j][i] * eps;
            }
        }
        if let Some(src) = &bigs[j] {
            src.total(xj, &mut u);
        }
        if let Some(chol) = &engine.small_chol[j] {
            if xj > 0.0 {
                let sc = (xj * h).sqrt();
                for k in 0..n_fine as usize {
                    let base = (k * d + j) * d;
                    let g = &gn[base..base + d];
                    for i in 0..d {
                        let mut s = 0.0;
                        for m in 0..=i {
                            s += chol[i][m] * g[m];
                        }
                        v[i] += sc * s;
                    }
                }
            }
        }
    }
    let approx = u.iter().zip(&v).map(|(a, b)| a + b).collect();
    Ok(OneStepSample { u, v, approx, exact: x })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OneStepRateReport {
    pub base_time: f64,
    pub eps: Vec<f64>,
    pub fine_dt: f64,
    pub n_paths: usize,
    /// `errors[i][k]` estimates `E|X_i - X_i^ε|` at `eps[k]`.
    pub errors: Vec<Vec<MeanEstimate>>,
    pub fits: Vec<LinearFit>,
    pub expected: Vec<f64>,
    pub tolerance: f64,
    pub pass: bool,
}

/// Regression of `log E|X_i(s+ε) - X_i^ε(s+ε)|` on `log ε`, with `X(s)`
/// simulated by the standard scheme and shared across all `ε`.
#[allow(clippy::too_many_arguments)]
pub fn one_step_rate(
    p: &AdmissibleParams,
    x0: &InitialState,
    base_time: f64,
    eps_grid: &[f64],
    fine_dt: f64,
    cfg: &SchemeConfig,
    kappa: &[f64],
    tolerance: f64,
) -> Result<OneStepRateReport> {
    cfg.check()?;
    let d = p.dim();
    if kappa.len() != d {
        return Err(Error::DimensionMismatch("one kappa per coordinate".into()));
    }
    if eps_grid.len() < 2 {
        return Err(Error::OutOfRange("need at least two window lengths".into()));
    }
    let engine = Engine::new(p, cfg.delta, cfg.small_jumps)?;
    let window_seed = cfg.seed ^ 0xA5A5_5A5A_DEAD_BEEF;
    let diffs: Vec<Vec<Vec<f64>>> = (0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|i| -> Result<Vec<Vec<f64>>> {
            let (xs, _) = run_path(&engine, x0, cfg.seed, i, base_time, cfg.dt, &[])?;
            let key = PathKey::new(window_seed, i);
            eps_grid
                .iter()
                .enumerate()
                .map(|(k, &eps)| {
                    let s = one_step_with(&engine, &xs, eps, fine_dt, &key, k as u64)?;
                    Ok(s.exact.iter().zip(&s.approx).map(|(a, b)| (a - b).abs()).collect())
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let logx: Vec<f64> = eps_grid.iter().map(|e| e.ln()).collect();
    let mut errors = Vec::with_capacity(d);
    let mut fits = Vec::with_capacity(d);
    for i in 0..d {
        let per_eps: Vec<MeanEstimate> = (0..eps_grid.len())
            .map(|k| stats::mean_stderr(&diffs.iter().map(|path| path[k][i]).collect::<Vec<_>>()))
            .collect();
        if per_eps.iter().any(|m| !(m.mean > 0.0)) {
            return Err(Error::DegenerateSample(format!("coordinate {} has zero approximation error", i + 1)));
        }
        let logy: Vec<f64> = per_eps.iter().map(|m| m.mean.ln()).collect();
        fits.push(stats::linear_fit(&logx, &logy)?);
        errors.push(per_eps);
    }
    let pass = fits.iter().zip(kappa).all(|(f, k)| f.slope >= k - tolerance);
    Ok(OneStepRateReport {
        base_time,
        eps: eps_grid.to_vec(),
        fine_dt,
        n_paths: cfg.n_paths,
        errors,
        fits,
        expected: kappa.to_vec(),
        tolerance,
        pass,
    })
}

/// Total branching jump counts over `[0, t]` with intensities frozen at
/// `x_frozen`, one entry per trial and coordinate `j`: `counts[j][trial]`.
pub fn frozen_jump_counts(
    p: &AdmissibleParams,
    x_frozen: &[f64],
    t: f64,
    cfg: &SchemeConfig,
) -> Result<Vec<Vec<u64>>> {
    cfg.check()?;
    let engine = Engine::new(p, cfg.delta, cfg.small_jumps)?;
    let d = engine.d;
    if x_frozen.len() != d {
        return Err(Error::DimensionMismatch("frozen state length".into()));
    }
    let steps = step_count(t, cfg.dt);
    let per_trial: Vec<Vec<u64>> = (0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let key = PathKey::new(cfg.seed, i);
            let mut counts = vec![0u64; d];
            for n in 0..steps {
                let h = step_len(t, cfg.dt, n, steps);
                for j in 0..d {
                    let xj = x_frozen[j].max(0.0);
                    if let Some(s) = &engine.shell[j] {
                        let mut rng = key.stream(n, Source::BranchingShell(j as u32));
                        counts[j] += s.sample_count(xj, h, &mut rng);
                    }
                    if let Some(s) = &engine.big[j] {
                        let mut rng = key.stream(n, Source::BranchingBig(j as u32));
                        counts[j] += s.sample_count(xj, h, &mut rng);
                    }
                }
            }
            counts
        })
        .collect();
    Ok((0..d).map(|j| per_trial.iter().map(|c| c[j]).collect()).collect())
}

/// Monte Carlo moments `E|∫_s^t ∫ z Ñ(du, dz)|^η` of a compensated Poisson
/// integral over windows of the given lengths; `m` must be finite.
pub fn compensated_poisson_moments(
    m: &LevyMeasureSpec,
    dim: usize,
    lengths: &[f64],
    eta: f64,
    n: usize,
    seed: u64,
) -> Result<Vec<MeanEstimate>> {
    m.check(dim)?;
    let sampler = RegionSampler::new(m, dim, Region::Orthant)?;
    let mean = m.first_moment(dim, 0.0, f64::INFINITY)?;
    lengths
        .iter()
        .enumerate()
        .map(|(k, &len)| {
            let vals: Vec<f64> = (0..n as u64)
                .into_par_iter()
                .map(|i| {
                    let mut rng = PathKey::new(seed, i).stream(k as u64, Source::Auxiliary(0));
                    let mut acc = vec![0.0; dim];
                    for _ in 0..sampler.sample_count(1.0, len, &mut rng) {
                        sampler.add_jump(&mut rng, &mut acc);
                    }
                    acc.iter().zip(&mean).map(|(a, b)| (a - len * b).powi(2)).sum::<f64>().sqrt().powf(eta)
                })
                .collect();
            Ok(stats::mean_stderr(&vals))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn immigration_only() -> AdmissibleParams {
        AdmissibleParams::new(vec![0.0], vec![1.0], vec![vec![0.0]])
            .with_nu(LevyMeasureSpec::atoms([(2.0, vec![0.7])]))
    }

    #[test]
    fn step_grid_handles_remainders() {
        assert_eq!(step_count(1.0, 1e-3), 1000);
        assert_eq!(step_count(1.0, 0.3), 4);
        let total: f64 = (0..4).map(|n| step_len(1.0, 0.3, n, 4)).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn origin_is_absorbing_without_immigration() {
        let p = AdmissibleParams::new(vec![1.0], vec![0.0], vec![vec![-1.0]])
            .with_mu(0, LevyMeasureSpec::per_coordinate_stable(0, 1.5, false));
        let cfg = SchemeConfig::new(0.01, 0.05, 50, 1);
        let ens = simulate(&p, &vec![0.0].into(), 1.0, &cfg).unwrap();
        assert!(ens.terminal.iter().all(|x| x[0] == 0.0));
    }

    #[test]
    fn skeleton_has_expected_shape() {
        let mut cfg = SchemeConfig::new(0.1, 0.05, 3, 2);
        cfg.record_skeleton = true;
        let ens = simulate(&immigration_only(), &vec![0.0].into(), 1.0, &cfg).unwrap();
        let sk = ens.skeleton.as_ref().unwrap();
        assert_eq!(sk.times.len(), 11);
        assert_eq!(sk.states.len(), 3);
        assert_eq!(sk.states[0][10], ens.terminal[0]);
        let mut buf = Vec::new();
        ens.write_skeleton_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("time,path,x_1\n"));
        assert_eq!(text.lines().count(), 1 + 33);
    }

    #[test]
    fn frozen_window_is_exact_for_constant_coefficients() {
        let p = AdmissibleParams::new(vec![0.0], vec![1.3], vec![vec![0.0]]);
        let key = PathKey::new(5, 0);
        let s = euler_one_step_approx(&p, &[0.4], 0.25, 1.0 / 512.0, 0.05, SmallJumps::Gaussian, &key, 0).unwrap();
        assert!((s.exact[0] - s.approx[0]).abs() < 1e-12);
        assert!((s.exact[0] - (0.4 + 1.3 * 0.25)).abs() < 1e-12);
    }

    #[test]
    fn cholesky_of_rank_one() {
        let l = cholesky_psd(&[vec![4.0, 0.0], vec![0.0, 0.0]]);
        assert_eq!(l, vec![vec![2.0, 0.0], vec![0.0, 0.0]]);
    }
}
