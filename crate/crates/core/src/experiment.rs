//! Config-driven experiments writing CSV and JSON artifacts.
//!
//! A config is a TOML document with the tables `[params]`, `[sim]`,
//! `[analysis]`, `[checks]` and `[oracle]`; only `[params]` is mandatory.
//! Index sets in configs are 1-based.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::density::{self, DensityEstimate};
use crate::params::AdmissibleParams;
use crate::sim::{self, InitialState, SchemeConfig, SmallJumps};
use crate::smoothing::{self, SmoothingCertificate, Theorem, TheoremInputs};
use crate::{oracle, stats, Error, Result, ARTIFACT_VERSION};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_paths")]
    pub n_paths: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_t")]
    pub t: f64,
    pub x0: Vec<f64>,
    #[serde(default)]
    pub small_jumps: SmallJumps,
    #[serde(default)]
    pub record_skeleton: bool,
    #[serde(default = "default_every")]
    pub skeleton_every: usize,
}

fn default_dt() -> f64 {
    1e-2
}
fn default_delta() -> f64 {
    0.05
}
fn default_paths() -> usize {
    10_000
}
fn default_t() -> f64 {
    1.0
}
fn default_every() -> usize {
    1
}

/// `"auto"` or an explicit value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AutoOr<T> {
    Keyword(String),
    Value(T),
}

impl<T: Clone> AutoOr<T> {
    fn resolve(&self, field: &str, keyword: &str) -> Result<Option<T>> {
        match self {
            AutoOr::Value(v) => Ok(Some(v.clone())),
            AutoOr::Keyword(k) if k == keyword => Ok(None),
            AutoOr::Keyword(k) => Err(Error::InvalidParams(format!("{field}: expected \"{keyword}\" or a value, got \"{k}\""))),
        }
    }
}

fn auto<T>() -> AutoOr<T> {
    AutoOr::Keyword("auto".into())
}

fn infer<T>() -> AutoOr<T> {
    AutoOr::Keyword("infer".into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSection {
    /// 1-based index set, or `"auto"` for the certificate's.
    #[serde(rename = "I", default = "auto")]
    pub index_set: AutoOr<Vec<usize>>,
    /// Smoothing indices, or `"auto"` for the certificate's.
    #[serde(default = "auto")]
    pub alpha: AutoOr<Vec<f64>>,
    #[serde(default = "default_lambdas")]
    pub lambda: Vec<f64>,
    #[serde(default = "default_depth")]
    pub h_depth: u32,
    #[serde(default)]
    pub bandwidth: Option<Vec<f64>>,
    #[serde(default)]
    pub cells: Option<usize>,
}

fn default_lambdas() -> Vec<f64> {
    density::DEFAULT_LAMBDAS.to_vec()
}
fn default_depth() -> u32 {
    10
}

impl Default for AnalysisSection {
    fn default() -> Self {
        AnalysisSection {
            index_set: auto(),
            alpha: auto(),
            lambda: default_lambdas(),
            h_depth: default_depth(),
            bandwidth: None,
            cells: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChecksSection {
    pub theorem: Theorem,
    #[serde(default = "infer")]
    pub gamma0: AutoOr<Vec<f64>>,
    #[serde(default = "infer")]
    pub tau: AutoOr<Vec<f64>>,
    #[serde(default = "yes")]
    pub initial_moment_finite: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSection {
    #[serde(default = "default_oracle_lambdas")]
    pub lambda: Vec<f64>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_z")]
    pub max_z: f64,
}

fn default_oracle_lambdas() -> Vec<f64> {
    vec![0.5, 1.0, 2.0]
}
fn default_tol() -> f64 {
    1e-10
}
fn default_z() -> f64 {
    3.0
}

impl Default for OracleSection {
    fn default() -> Self {
        OracleSection { lambda: default_oracle_lambdas(), tol: default_tol(), max_z: default_z() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub params: AdmissibleParams,
    #[serde(default)]
    pub sim: Option<SimSection>,
    #[serde(default)]
    pub analysis: AnalysisSection,
    #[serde(default)]
    pub checks: Option<ChecksSection>,
    #[serde(default)]
    pub oracle: OracleSection,
}

impl ExperimentConfig {
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::ConfigParse { path: origin.into(), message: e.to_string() })?;
        cfg.params.check_dims().map_err(|e| Error::ConfigParse { path: origin.into(), message: format!("params: {e}") })?;
        if let Some(s) = &cfg.sim {
            if s.x0.len() != cfg.params.dim() {
                return Err(Error::ConfigParse {
                    path: origin.into(),
                    message: format!("sim.x0: expected {} entries, got {}", cfg.params.dim(), s.x0.len()),
                });
            }
        }
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::ConfigParse {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn sim(&self) -> Result<&SimSection> {
        self.sim.as_ref().ok_or_else(|| Error::InvalidParams("the config has no [sim] table".into()))
    }

    pub fn scheme(&self) -> Result<SchemeConfig> {
        let s = self.sim()?;
        Ok(SchemeConfig {
            dt: s.dt,
            delta: s.delta,
            n_paths: s.n_paths,
            seed: s.seed,
            record_skeleton: s.record_skeleton,
            skeleton_every: s.skeleton_every,
            small_jumps: s.small_jumps,
        })
    }

    /// Certificate from `[analysis]` if both `I` and `alpha` are explicit, else derived.
    pub fn certificate(&self) -> Result<Option<SmoothingCertificate>> {
        let idx = self.analysis.index_set.resolve("analysis.I", "auto")?;
        let alpha = self.analysis.alpha.resolve("analysis.alpha", "auto")?;
        match (idx, alpha) {
            (Some(i), Some(a)) => {
                let zero_based = one_to_zero(&i, self.params.dim())?;
                Ok(Some(SmoothingCertificate::user_asserted(zero_based, a)?))
            }
            _ => smoothing::certify(&self.params),
        }
    }

    pub fn theorem_inputs(&self) -> Result<Option<(Theorem, TheoremInputs)>> {
        let Some(c) = &self.checks else { return Ok(None) };
        Ok(Some((
            c.theorem,
            TheoremInputs {
                gamma0: c.gamma0.resolve("checks.gamma0", "infer")?,
                tau: c.tau.resolve("checks.tau", "infer")?,
                initial_moment_finite: c.initial_moment_finite,
            },
        )))
    }
}

fn one_to_zero(idx: &[usize], d: usize) -> Result<Vec<usize>> {
    idx.iter()
        .map(|&i| {
            if i == 0 || i > d {
                Err(Error::InvalidParams(format!("analysis.I: index {i} outside 1..={d}")))
            } else {
                Ok(i - 1)
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Validate,
    Certify,
    Check,
    Simulate,
    Density,
    OracleCompare,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::Certify => "certify",
            Command::Check => "check",
            Command::Simulate => "simulate",
            Command::Density => "density",
            Command::OracleCompare => "oracle-compare",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub paths: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    /// 0 on success, 2 when a check, validation or certification fails.
    pub exit_code: i32,
    pub artifacts: Vec<PathBuf>,
    pub summary: String,
}

fn write_json(path: &Path, cfg: &ExperimentConfig, command: Command, result: serde_json::Value) -> Result<()> {
    let doc = json!({
        "version": ARTIFACT_VERSION,
        "command": command.name(),
        "config": cfg,
        "result": result,
    });
    let text = serde_json::to_string_pretty(&doc).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

fn to_value<T: Serialize>(v: &T) -> Result<serde_json::Value> {
    serde_json::to_value(v).map_err(|e| Error::Io(std::io::Error::other(e)))
}

/// Terminal-state ensemble for the `[sim]` table.
pub fn simulate_config(cfg: &ExperimentConfig) -> Result<sim::PathEnsemble> {
    let s = cfg.sim()?;
    sim::simulate(&cfg.params, &InitialState::Point(s.x0.clone()), s.t, &cfg.scheme()?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityAnalysis {
    pub index_set: Vec<usize>,
    pub alpha: Vec<f64>,
    pub weighted: DensityEstimate,
    pub reports: Vec<density::BesovReport>,
    /// Unweighted estimate's mass on `Γ(I)` over its total mass, counting
    /// samples on the boundary of `Γ(I)` as mass outside.
    pub gamma_mass_fraction: f64,
}

/// `ρ_I`-weighted estimate of the terminal law and its Besov reports.
pub fn density_analysis(cfg: &ExperimentConfig, ens: &sim::PathEnsemble) -> Result<DensityAnalysis> {
    let d = cfg.params.dim();
    let idx = cfg.analysis.index_set.resolve("analysis.I", "auto")?;
    let alpha = cfg.analysis.alpha.resolve("analysis.alpha", "auto")?;
    let (index_set, alpha) = match (idx, alpha) {
        (Some(i), Some(a)) => (one_to_zero(&i, d)?, a),
        (i, a) => {
            let cert = smoothing::certify(&cfg.params)?.ok_or(Error::MissingCertificate)?;
            let i = match i {
                Some(i) => one_to_zero(&i, d)?,
                None => cert.index_set,
            };
            (i, a.unwrap_or(cert.alpha))
        }
    };
    let aniso = density::anisotropy_from_alphas(&alpha)?;
    let weights: Vec<f64> = ens.terminal.iter().map(|x| density::rho(&index_set, &alpha, x)).collect();
    let bw = cfg.analysis.bandwidth.as_deref();
    let weighted = density::weighted_kde(&ens.terminal, &weights, bw, cfg.analysis.cells)?;
    let hs = density::resolvable_h_grid(&density::dyadic_h_grid(cfg.analysis.h_depth), &weighted.grid);
    let reports = cfg
        .analysis
        .lambda
        .iter()
        .map(|&l| density::besov_norm(&weighted, l, &aniso, &hs))
        .collect::<Result<Vec<_>>>()?;
    // samples on the boundary of Γ(I) are atoms there, not smoothed mass
    let in_gamma = |x: &[f64]| index_set.iter().all(|&j| x[j] > 0.0) && x.iter().all(|v| *v >= 0.0);
    let interior: Vec<f64> = ens.terminal.iter().map(|x| if in_gamma(x) { 1.0 } else { 0.0 }).collect();
    let atoms = (ens.len() as f64 - interior.iter().sum::<f64>()) / ens.len() as f64;
    let plain = density::weighted_kde(&ens.terminal, &interior, bw, cfg.analysis.cells)?;
    let inside = plain.mass_where(|x| in_gamma(x));
    Ok(DensityAnalysis { index_set, alpha, weighted, reports, gamma_mass_fraction: inside / (plain.total_mass + atoms) })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleRow {
    pub lambda: f64,
    pub mc: f64,
    pub stderr: f64,
    pub oracle: f64,
    pub z: f64,
}

/// Monte Carlo Laplace transform against the one-dimensional oracle.
pub fn oracle_compare(cfg: &ExperimentConfig, ens: &sim::PathEnsemble) -> Result<Vec<OracleRow>> {
    let p = &cfg.params;
    if p.dim() != 1 {
        return Err(Error::DimensionMismatch("oracle comparison needs a one-dimensional config".into()));
    }
    let s = cfg.sim()?;
    let jumps = !p.nu.is_zero() || !p.mu[0].is_zero();
    cfg.oracle
        .lambda
        .iter()
        .map(|&l| {
            let mc = sim::laplace_estimate(ens, &[l]);
            let exact = if !jumps && p.c[0] > 0.0 {
                oracle::laplace_cir(p.c[0], p.beta[0], p.b[0][0], s.x0[0], s.t, l)?
            } else {
                oracle::laplace_cbi_1d(p, s.x0[0], s.t, l, cfg.oracle.tol)?
            };
            let z = if mc.stderr > 0.0 { (mc.mean - exact) / mc.stderr } else if mc.mean == exact { 0.0 } else { f64::INFINITY };
            Ok(OracleRow { lambda: l, mc: mc.mean, stderr: mc.stderr, oracle: exact, z })
        })
        .collect()
}

/// Runs `command` on the config at `config_path`, writing artifacts to `out`.
pub fn run(command: Command, config_path: &Path, out: &Path, overrides: &Overrides) -> Result<RunOutcome> {
    let mut cfg = ExperimentConfig::from_path(config_path)?;
    if let Some(sim) = cfg.sim.as_mut() {
        if let Some(seed) = overrides.seed {
            sim.seed = seed;
        }
        if let Some(n) = overrides.paths {
            sim.n_paths = n;
        }
    }
    fs::create_dir_all(out)?;
    let mut artifacts = Vec::new();
    let (exit_code, summary) = match command {
        Command::Validate => {
            let r = cfg.params.validate()?;
            let path = out.join("validation.json");
            write_json(&path, &cfg, command, to_value(&r)?)?;
            artifacts.push(path);
            let msg = if r.ok {
                "parameters are admissible".to_string()
            } else {
                let v: Vec<String> = r.violations.iter().map(|v| format!("({}) {}", v.condition, v.message)).collect();
                format!("parameters violate: {}", v.join("; "))
            };
            (if r.ok { 0 } else { 2 }, msg)
        }
        Command::Certify => {
            let cert = smoothing::certify(&cfg.params)?;
            let path = out.join("certificate.json");
            write_json(&path, &cfg, command, json!({ "certified": cert.is_some(), "certificate": to_value(&cert)? }))?;
            artifacts.push(path);
            match cert {
                Some(c) => (0, format!("certificate from {:?}: I={:?}, alpha={:?}", c.source, plus_one(&c.index_set), c.alpha)),
                None => (2, "no smoothing certificate".to_string()),
            }
        }
        Command::Check => {
            let (theorem, inputs) = cfg
                .theorem_inputs()?
                .ok_or_else(|| Error::ConfigParse { path: config_path.display().to_string(), message: "missing [checks] table".into() })?;
            let cert = cfg.certificate()?;
            let path = out.join("theorem_report.json");
            match smoothing::check_theorem(&cfg.params, cert.as_ref(), theorem, &inputs) {
                Ok(r) => {
                    write_json(&path, &cfg, command, to_value(&r)?)?;
                    artifacts.push(path);
                    let failed: Vec<&str> = r.hypotheses.iter().filter(|h| !h.pass).map(|h| h.name.as_str()).collect();
                    if r.overall {
                        (0, format!("{theorem:?}: all hypotheses hold"))
                    } else {
                        (2, format!("{theorem:?}: failed {}", failed.join(", ")))
                    }
                }
                Err(Error::MissingCertificate) => {
                    write_json(&path, &cfg, command, json!({ "theorem": theorem, "overall": false, "error": "missing smoothing certificate" }))?;
                    artifacts.push(path);
                    (2, "no smoothing certificate".to_string())
                }
                Err(e) => return Err(e),
            }
        }
        Command::Simulate => {
            let ens = simulate_config(&cfg)?;
            let path = out.join("terminal.csv");
            ens.write_terminal_csv(BufWriter::new(fs::File::create(&path)?))?;
            artifacts.push(path);
            if ens.skeleton.is_some() {
                let path = out.join("skeleton.csv");
                ens.write_skeleton_csv(BufWriter::new(fs::File::create(&path)?))?;
                artifacts.push(path);
            }
            let means: Vec<stats::MeanEstimate> = (0..ens.dim)
                .map(|i| stats::mean_stderr(&ens.terminal.iter().map(|x| x[i]).collect::<Vec<_>>()))
                .collect();
            let path = out.join("simulate.json");
            write_json(
                &path,
                &cfg,
                command,
                json!({ "n_paths": ens.len(), "t": ens.t, "seed": ens.seed, "mean": means, "bias_report": ens.bias_report }),
            )?;
            artifacts.push(path);
            let m: Vec<String> = means.iter().map(|m| format!("{:.6} ± {:.6}", m.mean, m.stderr)).collect();
            (0, format!("simulated {} paths; E[X(t)] = {}", ens.len(), m.join(", ")))
        }
        Command::Density => {
            let ens = simulate_config(&cfg)?;
            let a = density_analysis(&cfg, &ens)?;
            let path = out.join("density.csv");
            a.weighted.write_csv(BufWriter::new(fs::File::create(&path)?))?;
            artifacts.push(path);
            for r in &a.reports {
                let path = out.join(format!("modulus_lambda_{}.csv", r.lambda));
                r.write_modulus_csv(BufWriter::new(fs::File::create(&path)?))?;
                artifacts.push(path);
            }
            let path = out.join("besov.json");
            write_json(
                &path,
                &cfg,
                command,
                json!({
                    "I": plus_one(&a.index_set),
                    "alpha": a.alpha,
                    "bandwidths": a.weighted.bandwidths,
                    "total_mass": a.weighted.total_mass,
                    "target_mass": a.weighted.target_mass,
                    "gamma_mass_fraction": a.gamma_mass_fraction,
                    "reports": a.reports,
                }),
            )?;
            artifacts.push(path);
            let norms: Vec<String> = a
                .reports
                .iter()
                .map(|r| format!("lambda={}: {:.4}{}", r.lambda, r.norm_value, if r.stabilized { "" } else { " (not stabilized)" }))
                .collect();
            (0, format!("weighted density mass {:.4}; {}", a.weighted.total_mass, norms.join(", ")))
        }
        Command::OracleCompare => {
            let ens = simulate_config(&cfg)?;
            let rows = oracle_compare(&cfg, &ens)?;
            let path = out.join("oracle_compare.csv");
            let mut text = String::from("lambda,mc,stderr,oracle,z\n");
            for r in &rows {
                text.push_str(&format!("{},{},{},{},{}\n", r.lambda, r.mc, r.stderr, r.oracle, r.z));
            }
            fs::write(&path, text)?;
            artifacts.push(path);
            let path = out.join("oracle_compare.json");
            write_json(&path, &cfg, command, to_value(&rows)?)?;
            artifacts.push(path);
            let worst = rows.iter().map(|r| r.z.abs()).fold(0.0, f64::max);
            let ok = worst <= cfg.oracle.max_z;
            (if ok { 0 } else { 2 }, format!("max |z| = {worst:.3} over {} frequencies", rows.len()))
        }
    };
    Ok(RunOutcome { exit_code, artifacts, summary })
}

fn plus_one(idx: &[usize]) -> Vec<usize> {
    idx.iter().map(|i| i + 1).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const CIR: &str = r#"
[params]
c = [1.0]
beta = [1.0]
B = [[-1.0]]
mu = [{ kind = "zero" }]

[sim]
dt = 0.01
n_paths = 200
seed = 3
x0 = [1.0]
"#;

    #[test]
    fn parses_minimal_config() {
        let cfg = ExperimentConfig::parse(CIR, "inline").unwrap();
        assert_eq!(cfg.params.dim(), 1);
        assert_eq!(cfg.sim().unwrap().t, 1.0);
        assert_eq!(cfg.analysis.lambda, vec![0.05, 0.1, 0.2]);
    }

    #[test]
    fn parse_errors_name_the_origin() {
        let bad = CIR.replace("beta = [1.0]", "beta = \"x\"");
        match ExperimentConfig::parse(&bad, "cfg.toml") {
            Err(Error::ConfigParse { path, message }) => {
                assert_eq!(path, "cfg.toml");
                assert!(message.contains("beta"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn wrong_x0_length_is_rejected() {
        let bad = CIR.replace("x0 = [1.0]", "x0 = [1.0, 2.0]");
        assert!(matches!(ExperimentConfig::parse(&bad, "c"), Err(Error::ConfigParse { .. })));
    }
}
