//! Weighted density estimates of the terminal law and their empirical
//! anisotropic Besov norms.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Anisotropy {
    pub a: Vec<f64>,
    pub mean_alpha: f64,
}

/// Harmonic-mean anisotropy: `1/ᾱ = mean(1/α_i)`, `a_i = ᾱ/α_i`.
pub fn anisotropy_from_alphas(alpha: &[f64]) -> Result<Anisotropy> {
    if alpha.is_empty() {
        return Err(Error::OutOfRange("empty alpha vector".into()));
    }
    if let Some(bad) = alpha.iter().find(|a| !(**a > 0.0 && **a <= 2.0)) {
        return Err(Error::OutOfRange(format!("alpha={bad} outside (0, 2]")));
    }
    let d = alpha.len() as f64;
    let inv: f64 = alpha.iter().map(|a| 1.0 / a).sum();
    let mean_alpha = d / inv;
    Ok(Anisotropy { a: alpha.iter().map(|al| mean_alpha / al).collect(), mean_alpha })
}

/// `min_{j∈I} x_j^{1/α_j}` on the orthant, zero outside; indices are 0-based.
pub fn rho(index: &[usize], alpha: &[f64], x: &[f64]) -> f64 {
    if x.iter().any(|v| *v < 0.0) {
        return 0.0;
    }
    if index.is_empty() {
        return 1.0;
    }
    index.iter().map(|&j| x[j].powf(1.0 / alpha[j])).fold(f64::INFINITY, f64::min)
}

/// Cell-centred tensor grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Grid {
    pub lo: Vec<f64>,
    pub spacing: Vec<f64>,
    pub cells: Vec<usize>,
}

impl Grid {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, cells: Vec<usize>) -> Result<Self> {
        if lo.len() != hi.len() || lo.len() != cells.len() || lo.is_empty() {
            return Err(Error::DimensionMismatch("grid bounds and cell counts differ in length".into()));
        }
        for k in 0..lo.len() {
            if !(hi[k] > lo[k]) || cells[k] == 0 {
                return Err(Error::OutOfRange(format!("empty grid axis {}", k + 1)));
            }
        }
        let spacing = (0..lo.len()).map(|k| (hi[k] - lo[k]) / cells[k] as f64).collect();
        Ok(Grid { lo, spacing, cells })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn len(&self) -> usize {
        self.cells.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    pub fn center(&self, axis: usize, i: usize) -> f64 {
        self.lo[axis] + (i as f64 + 0.5) * self.spacing[axis]
    }

    fn strides(&self) -> Vec<usize> {
        let d = self.dim();
        let mut s = vec![1; d];
        for k in (0..d.saturating_sub(1)).rev() {
            s[k] = s[k + 1] * self.cells[k + 1];
        }
        s
    }

    fn unravel(&self, mut flat: usize, out: &mut [usize]) {
        for k in (0..self.dim()).rev() {
            out[k] = flat % self.cells[k];
            flat /= self.cells[k];
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityEstimate {
    pub grid: Grid,
    /// Row-major values, last axis fastest.
    pub values: Vec<f64>,
    /// Kernel bandwidths; empty for analytic grid functions.
    pub bandwidths: Vec<f64>,
    /// Riemann sum of `values`.
    pub total_mass: f64,
    /// `Σ weights / n`, the mass the estimate should carry.
    pub target_mass: f64,
}

impl DensityEstimate {
    /// Samples an analytic function at the cell centres.
    pub fn from_fn<F: Fn(&[f64]) -> f64 + Sync>(grid: Grid, f: F) -> Self {
        let d = grid.dim();
        let values: Vec<f64> = (0..grid.len())
            .into_par_iter()
            .map(|flat| {
                let mut idx = vec![0; d];
                grid.unravel(flat, &mut idx);
                let x: Vec<f64> = (0..d).map(|k| grid.center(k, idx[k])).collect();
                f(&x)
            })
            .collect();
        let total_mass = values.iter().sum::<f64>() * grid.cell_volume();
        DensityEstimate { grid, values, bandwidths: Vec::new(), total_mass, target_mass: total_mass }
    }

    /// Riemann sum over cells whose centre satisfies `keep`.
    pub fn mass_where<F: Fn(&[f64]) -> bool>(&self, keep: F) -> f64 {
        let d = self.grid.dim();
        let mut idx = vec![0; d];
        let mut x = vec![0.0; d];
        let mut s = 0.0;
        for (flat, v) in self.values.iter().enumerate() {
            self.grid.unravel(flat, &mut idx);
            for k in 0..d {
                x[k] = self.grid.center(k, idx[k]);
            }
            if keep(&x) {
                s += v;
            }
        }
        s * self.grid.cell_volume()
    }

    /// Rows `x_1..x_d,value`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let d = self.grid.dim();
        for k in 1..=d {
            write!(w, "x_{k},")?;
        }
        writeln!(w, "value")?;
        let mut idx = vec![0; d];
        for (flat, v) in self.values.iter().enumerate() {
            self.grid.unravel(flat, &mut idx);
            for k in 0..d {
                write!(w, "{},", self.grid.center(k, idx[k]))?;
            }
            writeln!(w, "{v}")?;
        }
        Ok(())
    }
}

/// Default number of cells per axis.
pub fn default_cells(dim: usize) -> usize {
    match dim {
        1 => 1024,
        2 => 256,
        3 => 64,
        _ => 20,
    }
}

/// Per-coordinate `n^{-1/(d+4)}` times `min(sd, IQR/1.349)`.
pub fn silverman_bandwidths(points: &[Vec<f64>]) -> Vec<f64> {
    let n = points.len() as f64;
    let d = points.first().map_or(0, Vec::len);
    (0..d)
        .map(|k| {
            let mut col: Vec<f64> = points.iter().map(|p| p[k]).collect();
            let m = col.iter().sum::<f64>() / n;
            let sd = (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt();
            col.sort_by(f64::total_cmp);
            let iqr = quantile_sorted(&col, 0.75) - quantile_sorted(&col, 0.25);
            let spread = if iqr > 0.0 { sd.min(iqr / 1.349) } else { sd };
            spread * n.powf(-1.0 / (d as f64 + 4.0))
        })
        .collect()
}

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let j = (i + 1).min(sorted.len() - 1);
    sorted[i] + (pos - i as f64) * (sorted[j] - sorted[i])
}

const KDE_PAD: f64 = 5.0;
/// Sample fraction left outside the grid on each side of each axis.
const KDE_TAIL: f64 = 1e-3;

/// Binned product-Gaussian estimate of `q(dx) = E[w 1_{dx}(X)]`.
///
/// The grid covers the central sample quantiles plus a kernel margin. Axes
/// whose samples are all nonnegative start at 0 and are reflected there, so
/// no mass leaks out of the orthant.
pub fn weighted_kde(
    points: &[Vec<f64>],
    weights: &[f64],
    bandwidths: Option<&[f64]>,
    cells: Option<usize>,
) -> Result<DensityEstimate> {
    let n = points.len();
    if n != weights.len() {
        return Err(Error::DimensionMismatch(format!("{n} points but {} weights", weights.len())));
    }
    if n < 100 {
        return Err(Error::InsufficientPaths(format!("density estimation needs at least 100 samples, got {n}")));
    }
    let d = points[0].len();
    if d == 0 || points.iter().any(|p| p.len() != d) {
        return Err(Error::DimensionMismatch("ragged sample".into()));
    }
    if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
        return Err(Error::OutOfRange("weights must be finite and nonnegative".into()));
    }
    let total_w: f64 = weights.iter().sum();
    if total_w <= 0.0 {
        return Err(Error::DegenerateSample("all weights vanish".into()));
    }
    let support: Vec<Vec<f64>> =
        points.iter().zip(weights).filter(|(_, w)| **w > 0.0).map(|(p, _)| p.clone()).collect();
    let bw: Vec<f64> = match bandwidths {
        Some(b) => {
            if b.len() != d {
                return Err(Error::DimensionMismatch("one bandwidth per coordinate".into()));
            }
            if b.iter().any(|v| !(*v > 0.0)) {
                return Err(Error::OutOfRange("bandwidths must be positive".into()));
            }
            b.to_vec()
        }
        None => {
            let b = silverman_bandwidths(&support);
            if b.iter().any(|v| !(*v > 0.0)) {
                return Err(Error::DegenerateSample("weighted sample has zero spread; supply bandwidths".into()));
            }
            b
        }
    };
    let m = cells.unwrap_or_else(|| default_cells(d));
    let mut lo = vec![0.0; d];
    let mut hi = vec![0.0; d];
    let mut reflect = vec![false; d];
    for k in 0..d {
        let mut col: Vec<f64> = support.iter().map(|p| p[k]).collect();
        col.sort_by(f64::total_cmp);
        reflect[k] = col[0] >= 0.0;
        lo[k] = if reflect[k] { 0.0 } else { quantile_sorted(&col, KDE_TAIL) - KDE_PAD * bw[k] };
        hi[k] = quantile_sorted(&col, 1.0 - KDE_TAIL) + KDE_PAD * bw[k];
    }
    let grid = Grid::new(lo, hi, vec![m; d])?;
    let strides = grid.strides();

    // linear binning onto cell centres
    let mut binned = vec![0.0; grid.len()];
    for (p, &w) in points.iter().zip(weights) {
        if w == 0.0 {
            continue;
        }
        let mut base = vec![0isize; d];
        let mut frac = vec![0.0; d];
        for k in 0..d {
            let u = (p[k] - grid.lo[k]) / grid.spacing[k] - 0.5;
            let f = u.floor();
            base[k] = f as isize;
            frac[k] = u - f;
        }
        for corner in 0..(1usize << d) {
            let mut wt = w;
            let mut flat = 0usize;
            let mut inside = true;
            for k in 0..d {
                let up = (corner >> k) & 1 == 1;
                let mut i = base[k] + up as isize;
                if i < 0 && reflect[k] {
                    i = -1 - i;
                }
                if i < 0 || i >= m as isize {
                    inside = false;
                    break;
                }
                wt *= if up { frac[k] } else { 1.0 - frac[k] };
                flat += i as usize * strides[k];
            }
            if inside {
                binned[flat] += wt;
            }
        }
    }

    // separable Gaussian smoothing, axis by axis
    let mut cur = binned;
    for k in 0..d {
        let h = grid.spacing[k];
        let half = ((KDE_PAD * bw[k] / h).ceil() as isize).max(1);
        let mut kern: Vec<f64> = (-half..=half).map(|o| (-0.5 * (o as f64 * h / bw[k]).powi(2)).exp()).collect();
        let ks: f64 = kern.iter().sum();
        for v in kern.iter_mut() {
            *v /= ks * h;
        }
        let stride = strides[k];
        let len = m;
        let block = stride * len;
        let mirror = reflect[k];
        let mut next = vec![0.0; cur.len()];
        next.par_chunks_mut(block).zip(cur.par_chunks(block)).for_each(|(out, inp)| {
            for inner in 0..stride {
                for i in 0..len as isize {
                    let v = inp[i as usize * stride + inner];
                    if v == 0.0 {
                        continue;
                    }
                    for o in -half..=half {
                        let mut j = i + o;
                        if j < 0 && mirror {
                            j = -1 - j;
                        }
                        if j >= 0 && j < len as isize {
                            out[j as usize * stride + inner] += v * kern[(o + half) as usize];
                        }
                    }
                }
            }
        });
        cur = next;
    }
    let nf = n as f64;
    for v in cur.iter_mut() {
        *v = (*v / nf).max(0.0);
    }
    let total_mass = cur.iter().sum::<f64>() * grid.cell_volume();
    Ok(DensityEstimate { grid, values: cur, bandwidths: bw, total_mass, target_mass: total_w / nf })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BesovReport {
    pub lambda: f64,
    pub a: Anisotropy,
    pub l1_norm: f64,
    pub h_grid: Vec<f64>,
    /// `modulus[k][m] = |h_m|^{-λ/a_k} ‖Δ_{h_m e_k} f‖_{L1}`.
    pub modulus: Vec<Vec<f64>>,
    pub norm_value: f64,
    pub stabilized: bool,
    /// Per axis, the modulus at the smallest `|h|` over that at the next one.
    pub small_h_ratio: Vec<f64>,
}

impl BesovReport {
    /// Rows `coordinate,h,modulus`.
    pub fn write_modulus_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "coordinate,h,modulus")?;
        for (k, col) in self.modulus.iter().enumerate() {
            for (h, v) in self.h_grid.iter().zip(col) {
                writeln!(w, "{},{h},{v}", k + 1)?;
            }
        }
        Ok(())
    }
}

/// `{±2^{-m} : m = 0..=depth}`, ordered by decreasing `|h|`.
pub fn dyadic_h_grid(depth: u32) -> Vec<f64> {
    (0..=depth).flat_map(|m| {
        let h = 2f64.powi(-(m as i32));
        [h, -h]
    }).collect()
}

/// Drops the steps that the grid cannot resolve.
pub fn resolvable_h_grid(h_grid: &[f64], grid: &Grid) -> Vec<f64> {
    let coarsest = grid.spacing.iter().cloned().fold(0.0, f64::max);
    h_grid.iter().cloned().filter(|h| h.abs() >= coarsest * (1.0 - 1e-12)).collect()
}

/// `‖f(· + h e_k) - f‖_{L1}` with zero padding and linear interpolation for
/// fractional shifts.
fn shift_l1(f: &DensityEstimate, k: usize, h: f64) -> f64 {
    let g = &f.grid;
    let strides = g.strides();
    let stride = strides[k];
    let len = g.cells[k] as isize;
    let s = h / g.spacing[k];
    let m = s.floor() as isize;
    let r = s - m as f64;
    let block = stride * g.cells[k];
    let extra = m.abs() + 2;
    let sum: f64 = f
        .values
        .par_chunks(block)
        .map(|line_block| {
            let at = |i: isize, inner: usize| -> f64 {
                if i < 0 || i >= len {
                    0.0
                } else {
                    line_block[i as usize * stride + inner]
                }
            };
            let mut acc = 0.0;
            for inner in 0..stride {
                for i in -extra..len + extra {
                    let shifted = if r == 0.0 {
                        at(i + m, inner)
                    } else {
                        (1.0 - r) * at(i + m, inner) + r * at(i + m + 1, inner)
                    };
                    acc += (shifted - at(i, inner)).abs();
                }
            }
            acc
        })
        .sum();
    sum * g.cell_volume()
}

/// Empirical `B^{λ,a}_{1,∞}` norm: `‖f‖_{L1} + Σ_k max_h |h|^{-λ/a_k} ‖Δ_{he_k} f‖_{L1}`.
pub fn besov_norm(f: &DensityEstimate, lambda: f64, a: &Anisotropy, h_grid: &[f64]) -> Result<BesovReport> {
    let d = f.grid.dim();
    if a.a.len() != d {
        return Err(Error::DimensionMismatch(format!("anisotropy of length {} in dimension {d}", a.a.len())));
    }
    for ak in &a.a {
        let e = lambda / ak;
        if !(e > 0.0 && e < 1.0) {
            return Err(Error::OutOfRange(format!("lambda/a_k = {e} outside (0, 1)")));
        }
    }
    if h_grid.is_empty() {
        return Err(Error::OutOfRange("empty h grid".into()));
    }
    for &h in h_grid {
        if !(h.abs() <= 1.0) || h == 0.0 {
            return Err(Error::OutOfRange(format!("h={h} outside [-1, 1] \\ {{0}}")));
        }
        for k in 0..d {
            if h.abs() < f.grid.spacing[k] * (1.0 - 1e-12) {
                return Err(Error::GridTooCoarse(format!(
                    "|h|={} is below the spacing {} of axis {}",
                    h.abs(),
                    f.grid.spacing[k],
                    k + 1
                )));
            }
        }
    }
    let l1_norm = f.values.iter().map(|v| v.abs()).sum::<f64>() * f.grid.cell_volume();
    let mut modulus = Vec::with_capacity(d);
    let mut small_h_ratio = Vec::with_capacity(d);
    let mut levels: Vec<f64> = h_grid.iter().map(|h| h.abs()).collect();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    for k in 0..d {
        let col: Vec<f64> =
            h_grid.iter().map(|&h| h.abs().powf(-lambda / a.a[k]) * shift_l1(f, k, h)).collect();
        let level_max = |lev: f64| {
            h_grid.iter().zip(&col).filter(|(h, _)| h.abs() == lev).map(|(_, v)| *v).fold(0.0, f64::max)
        };
        let ratio = if levels.len() >= 2 {
            let (m0, m1) = (level_max(levels[0]), level_max(levels[1]));
            if m1 > 0.0 {
                m0 / m1
            } else if m0 == 0.0 {
                1.0
            } else {
                f64::INFINITY
            }
        } else {
            f64::NAN
        };
        small_h_ratio.push(ratio);
        modulus.push(col);
    }
    let norm_value = l1_norm + modulus.iter().map(|c| c.iter().cloned().fold(0.0, f64::max)).sum::<f64>();
    let stabilized = small_h_ratio.iter().all(|r| *r <= 1.05);
    Ok(BesovReport {
        lambda,
        a: a.clone(),
        l1_norm,
        h_grid: h_grid.to_vec(),
        modulus,
        norm_value,
        stabilized,
        small_h_ratio,
    })
}

/// `λ` values scanned when none is given.
pub const DEFAULT_LAMBDAS: [f64; 3] = [0.05, 0.1, 0.2];
