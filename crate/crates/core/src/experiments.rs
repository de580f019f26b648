//! Configuration-driven experiment runner behind the `mixlap` binary.
//!
//! A run reads a TOML file, validates it, executes one experiment kind and
//! writes `report.json` (with the resolved configuration embedded) plus CSV
//! tables to the output directory. Outputs depend only on the configuration
//! and the seed.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::certificates::{
    certify_elliptic, decay_barrier, default_grid, threshold_pc0, Certificate, CertifyOptions,
    WeightRegime,
};
use crate::coefficients::CoefficientModel;
use crate::dirichlet::{wmp_check, DirichletProblem, Grading, RadialGrid};
use crate::error::{MixlapError, Result};
use crate::exhaustion::{exhaustion_experiment, ExhaustionSetup};
use crate::parabolic::{lambda_certificate, zero_uniqueness_check, ParabolicStepper, DEFAULT_DT};
use crate::radial::{
    fraclap_quadrature, OperatorParams, QuadratureConfig, WeightFractionalLaplacian, WeightSpec,
};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Certify,
    Sweep,
    Exhaustion,
    Parabolic,
    OracleCompare,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Certify => "certify",
            ExperimentKind::Sweep => "sweep",
            ExperimentKind::Exhaustion => "exhaustion",
            ExperimentKind::Parabolic => "parabolic",
            ExperimentKind::OracleCompare => "oracle_compare",
        }
    }

    fn section(self) -> &'static str {
        self.name()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorSection {
    pub dim: usize,
    pub s: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeName {
    LowerBound,
    UpperBound,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientSection {
    pub alpha: f64,
    #[serde(default = "one")]
    pub density_constant: f64,
    #[serde(default = "one")]
    pub potential_floor: f64,
    #[serde(default = "lower")]
    pub mode: ModeName,
    pub r0: Option<f64>,
}

fn one() -> f64 {
    1.0
}
fn lower() -> ModeName {
    ModeName::LowerBound
}
fn yes() -> bool {
    true
}

impl CoefficientSection {
    pub fn model(&self) -> Result<CoefficientModel> {
        self.model_with_floor(self.potential_floor)
    }

    fn model_with_floor(&self, c0: f64) -> Result<CoefficientModel> {
        match self.mode {
            ModeName::LowerBound => {
                CoefficientModel::lower_bound(self.alpha, self.density_constant, c0)
            }
            ModeName::UpperBound => CoefficientModel::upper_bound(
                self.alpha,
                self.density_constant,
                c0,
                self.r0.ok_or_else(|| {
                    MixlapError::Config("coefficients.r0 is required in upper_bound mode".into())
                })?,
            ),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertifySection {
    pub regime: String,
    pub beta: f64,
    #[serde(default = "one")]
    pub p: f64,
    /// When set, `c0` (or `λ`) is this multiple of the threshold instead of
    /// `coefficients.potential_floor`.
    pub threshold_factor: Option<f64>,
    /// Certify `𝓛ψ <= λρψ` instead of the elliptic inequality.
    #[serde(default)]
    pub parabolic: bool,
    pub lambda: Option<f64>,
    #[serde(default = "yes")]
    pub required: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    #[serde(default = "one")]
    pub p: f64,
    #[serde(default = "sweep_factor")]
    pub threshold_factor: f64,
    #[serde(default)]
    pub required: bool,
}

fn sweep_factor() -> f64 {
    1.1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExhaustionSection {
    pub radii: Vec<f64>,
    pub etas: Vec<f64>,
    #[serde(default = "default_nodes")]
    pub nodes: usize,
    /// Grading power; `1` (default) is a uniform mesh.
    #[serde(default = "one")]
    pub grading: f64,
    pub observation_radius: Option<f64>,
    /// Randomized maximum-principle trials on the smallest ball.
    #[serde(default)]
    pub wmp_trials: usize,
}

fn default_nodes() -> usize {
    2000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParabolicSection {
    pub radius: f64,
    #[serde(default = "parabolic_nodes")]
    pub nodes: usize,
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub steps: usize,
    #[serde(default)]
    pub eta: f64,
    /// Initial datum `ψ_β`; `None` starts from zero.
    pub initial_beta: Option<f64>,
    #[serde(default)]
    pub perturbation: f64,
    #[serde(default)]
    pub snapshot_every: usize,
}

fn parabolic_nodes() -> usize {
    400
}
fn default_dt() -> f64 {
    DEFAULT_DT
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSection {
    #[serde(default = "oracle_dims")]
    pub dims: Vec<usize>,
    #[serde(default = "oracle_s")]
    pub s_values: Vec<f64>,
    #[serde(default = "oracle_r_max")]
    pub r_max: f64,
    #[serde(default = "oracle_r_step")]
    pub r_step: f64,
    #[serde(default = "oracle_tol")]
    pub tolerance: f64,
}

fn oracle_dims() -> Vec<usize> {
    vec![2, 3, 4]
}
fn oracle_s() -> Vec<f64> {
    vec![0.25, 0.5, 0.75]
}
fn oracle_r_max() -> f64 {
    20.0
}
fn oracle_r_step() -> f64 {
    0.5
}
fn oracle_tol() -> f64 {
    1e-5
}

impl Default for OracleSection {
    fn default() -> Self {
        Self {
            dims: oracle_dims(),
            s_values: oracle_s(),
            r_max: oracle_r_max(),
            r_step: oracle_r_step(),
            tolerance: oracle_tol(),
        }
    }
}

/// The whole configuration file. Sections irrelevant to the chosen kind may
/// be present and are ignored.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: Option<u32>,
    pub kind: Option<ExperimentKind>,
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub workers: Option<usize>,
    pub operator: Option<OperatorSection>,
    pub coefficients: Option<CoefficientSection>,
    pub certify: Option<CertifySection>,
    pub sweep: Option<SweepSection>,
    pub exhaustion: Option<ExhaustionSection>,
    pub parabolic: Option<ParabolicSection>,
    pub oracle_compare: Option<OracleSection>,
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub kind: Option<ExperimentKind>,
    pub output_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| MixlapError::Config(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| match e {
            MixlapError::Config(msg) => MixlapError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Apply overrides and fill defaults; the result is what gets embedded in reports.
    pub fn resolve(mut self, overrides: &Overrides) -> Result<Self> {
        if let (Some(file), Some(cli)) = (self.kind, overrides.kind) {
            if file != cli {
                return Err(MixlapError::Config(format!(
                    "kind `{}` on the command line conflicts with kind `{}` in the file",
                    cli.name(),
                    file.name()
                )));
            }
        }
        self.kind = overrides.kind.or(self.kind);
        self.output_dir = overrides
            .output_dir
            .clone()
            .or(self.output_dir)
            .or(Some(PathBuf::from("out")));
        self.seed = overrides.seed.or(self.seed).or(Some(0));
        self.workers = overrides.workers.or(self.workers);
        if self.kind == Some(ExperimentKind::OracleCompare) && self.oracle_compare.is_none() {
            self.oracle_compare = Some(OracleSection::default());
        }
        self.validate()?;
        Ok(self)
    }

    /// Report every missing key at once, then check value ranges.
    pub fn validate(&self) -> Result<()> {
        let mut missing = Vec::new();
        if self.schema_version.is_none() {
            missing.push("schema_version");
        }
        let kind = match self.kind {
            Some(k) => Some(k),
            None => {
                missing.push("kind");
                None
            }
        };
        let needs_model = !matches!(kind, Some(ExperimentKind::OracleCompare) | None);
        if needs_model || kind.is_none() {
            if self.operator.is_none() {
                missing.push("operator");
            }
            if self.coefficients.is_none() {
                missing.push("coefficients");
            }
        }
        if let Some(k) = kind {
            let present = match k {
                ExperimentKind::Certify => self.certify.is_some(),
                ExperimentKind::Sweep => self.sweep.is_some(),
                ExperimentKind::Exhaustion => self.exhaustion.is_some(),
                ExperimentKind::Parabolic => self.parabolic.is_some(),
                ExperimentKind::OracleCompare => true,
            };
            if !present {
                missing.push(k.section());
            }
        }
        if !missing.is_empty() {
            return Err(MixlapError::Config(format!(
                "missing required keys: {}",
                missing.join(", ")
            )));
        }
        if let Some(v) = self.schema_version {
            if v != SCHEMA_VERSION {
                return Err(MixlapError::Config(format!(
                    "schema_version = {v} is not supported (expected {SCHEMA_VERSION})"
                )));
            }
        }
        if self.workers == Some(0) {
            return Err(MixlapError::Config("workers must be at least 1".into()));
        }
        if let Some(op) = &self.operator {
            OperatorParams::new(op.dim, op.s)
                .map_err(|e| MixlapError::Config(format!("operator: {e}")))?;
        }
        if let Some(c) = &self.coefficients {
            c.model()
                .map_err(|e| MixlapError::Config(format!("coefficients: {e}")))?;
        }
        match kind {
            Some(ExperimentKind::Certify) => {
                let c = self.certify.as_ref().expect("checked above");
                WeightRegime::from_tag(&c.regime)
                    .map_err(|e| MixlapError::Config(format!("certify.regime: {e}")))?;
                if c.parabolic && c.lambda.is_none() && c.threshold_factor.is_none() {
                    return Err(MixlapError::Config(
                        "certify: parabolic certificates need `lambda` or `threshold_factor`"
                            .into(),
                    ));
                }
            }
            Some(ExperimentKind::Sweep) => {
                let sw = self.sweep.as_ref().expect("checked above");
                if sw.alphas.is_empty() || sw.betas.is_empty() {
                    return Err(MixlapError::Config(
                        "sweep: alphas and betas must be non-empty".into(),
                    ));
                }
            }
            Some(ExperimentKind::Exhaustion) => {
                let ex = self.exhaustion.as_ref().expect("checked above");
                if ex.grading < 1.0 {
                    return Err(MixlapError::Config(
                        "exhaustion.grading must be >= 1".into(),
                    ));
                }
                if ex.nodes > 8000 {
                    return Err(MixlapError::Config(
                        "exhaustion.nodes is capped at 8000".into(),
                    ));
                }
            }
            Some(ExperimentKind::Parabolic) => {
                let pa = self.parabolic.as_ref().expect("checked above");
                if !(pa.dt > 0.0) || pa.steps == 0 {
                    return Err(MixlapError::Config(
                        "parabolic: dt and steps must be positive".into(),
                    ));
                }
            }
            _ => {}
        }
        Ok(())
    }

    fn params(&self) -> Result<OperatorParams> {
        let op = self
            .operator
            .ok_or_else(|| MixlapError::Config("missing operator section".into()))?;
        OperatorParams::new(op.dim, op.s)
    }

    fn coefficient_section(&self) -> Result<CoefficientSection> {
        self.coefficients
            .ok_or_else(|| MixlapError::Config("missing coefficients section".into()))
    }
}

/// What a run wrote and whether every required check passed.
#[derive(Clone, Debug, PartialEq)]
pub struct RunOutcome {
    pub files: Vec<PathBuf>,
    pub required_failures: Vec<String>,
}

impl RunOutcome {
    pub fn success(&self) -> bool {
        self.required_failures.is_empty()
    }
}

/// Write `contents` to `path` through a temporary sibling and a rename.
fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

struct Artifacts {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Artifacts {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.dir.join(name);
        write_atomic(&path, contents)?;
        self.files.push(path);
        Ok(())
    }

    fn report(&mut self, config: &ExperimentConfig, result: serde_json::Value) -> Result<()> {
        let doc = json!({
            "schema_version": SCHEMA_VERSION,
            "kind": config.kind.map(ExperimentKind::name),
            "config": config,
            "result": result,
        });
        let text =
            serde_json::to_string_pretty(&doc).map_err(|e| MixlapError::Config(e.to_string()))?;
        self.write("report.json", &(text + "\n"))
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<serde_json::Value> {
    serde_json::to_value(value).map_err(|e| MixlapError::Config(format!("serialization: {e}")))
}

/// Resolve, dispatch and write artifacts. Uses a dedicated thread pool when
/// `workers` is set.
pub fn run(config: ExperimentConfig, overrides: &Overrides) -> Result<RunOutcome> {
    let config = config.resolve(overrides)?;
    match config.workers {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .map_err(|e| MixlapError::Config(format!("thread pool: {e}")))?
            .install(|| dispatch(&config)),
        None => dispatch(&config),
    }
}

fn dispatch(config: &ExperimentConfig) -> Result<RunOutcome> {
    let dir = config
        .output_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("out"));
    let mut out = Artifacts::new(&dir)?;
    let failures = match config.kind.expect("resolved") {
        ExperimentKind::Certify => run_certify(config, &mut out)?,
        ExperimentKind::Sweep => run_sweep(config, &mut out)?,
        ExperimentKind::Exhaustion => run_exhaustion(config, &mut out)?,
        ExperimentKind::Parabolic => run_parabolic(config, &mut out)?,
        ExperimentKind::OracleCompare => run_oracle(config, &mut out)?,
    };
    Ok(RunOutcome {
        files: out.files,
        required_failures: failures,
    })
}

fn margins_csv(cert: &Certificate) -> String {
    let mut s = String::from("r,margin\n");
    for (r, m) in cert.grid.iter().zip(&cert.margins) {
        s.push_str(&format!("{r:.17e},{m:.17e}\n"));
    }
    s
}

/// Certificate with `c0` (or `λ`) resolved from `threshold_factor` when given.
pub fn certificate_from_section(
    params: &OperatorParams,
    coeff: &CoefficientSection,
    section: &CertifySection,
) -> Result<Certificate> {
    let regime = WeightRegime::from_tag(&section.regime)?;
    let options = CertifyOptions::default();
    let threshold = match section.threshold_factor {
        Some(_) => {
            let closed = WeightFractionalLaplacian::calibrate(
                params,
                WeightSpec::new(section.beta)?,
                &options.quadrature,
            )?;
            Some(threshold_pc0(regime, &closed, &coeff.model_with_floor(1.0)?, None)?.value)
        }
        None => None,
    };
    if section.parabolic {
        let lambda = match (section.lambda, section.threshold_factor, threshold) {
            (Some(l), _, _) => l,
            (None, Some(f), Some(t)) => f * t,
            _ => return Err(MixlapError::Config("certify: missing lambda".into())),
        };
        lambda_certificate(
            regime,
            params,
            section.beta,
            &coeff.model()?,
            lambda,
            &options,
        )
    } else {
        let c0 = match (section.threshold_factor, threshold) {
            (Some(f), Some(t)) => f * t / section.p,
            _ => coeff.potential_floor,
        };
        certify_elliptic(
            regime,
            params,
            section.beta,
            section.p,
            &coeff.model_with_floor(c0)?,
            &options,
        )
    }
}

fn run_certify(config: &ExperimentConfig, out: &mut Artifacts) -> Result<Vec<String>> {
    let params = config.params()?;
    let section = config.certify.clone().expect("validated");
    let cert = certificate_from_section(&params, &config.coefficient_section()?, &section)?;
    out.write("margins.csv", &margins_csv(&cert))?;
    out.report(config, to_json(&cert)?)?;
    Ok(if section.required && !cert.passed() {
        vec![format!(
            "certificate for regime {} failed",
            cert.regime.tag()
        )]
    } else {
        Vec::new()
    })
}

/// Outcome of one `(α, β)` sweep cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CellVerdict {
    UniquenessPass,
    UniquenessFail,
    NonuniquenessBarrierPass,
    NonuniquenessBarrierFail,
    NotCovered,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepCell {
    pub alpha: f64,
    pub beta: f64,
    pub regime: WeightRegime,
    pub preconditions_hold: bool,
    pub threshold: Option<f64>,
    pub max_margin: Option<f64>,
    pub barrier_scale: Option<f64>,
    pub verdict: CellVerdict,
}

/// Classify one `(α, β)` pair: a uniqueness certificate at
/// `threshold_factor` times the threshold when the hypotheses of a regime
/// hold, otherwise the power-law barrier when `α > 2s`.
pub fn sweep_cell(
    params: &OperatorParams,
    coeff: &CoefficientSection,
    alpha: f64,
    beta: f64,
    p: f64,
    threshold_factor: f64,
) -> Result<SweepCell> {
    let regime = WeightRegime::of_beta(params, beta);
    let preconditions_hold = regime
        .precondition_violations(params, beta, alpha)
        .is_empty();
    let section = CoefficientSection { alpha, ..*coeff };
    let quad = QuadratureConfig::default();
    let mut cell = SweepCell {
        alpha,
        beta,
        regime,
        preconditions_hold,
        threshold: None,
        max_margin: None,
        barrier_scale: None,
        verdict: CellVerdict::NotCovered,
    };
    if preconditions_hold {
        let closed = WeightFractionalLaplacian::calibrate(params, WeightSpec::new(beta)?, &quad)?;
        let t = threshold_pc0(regime, &closed, &section.model_with_floor(1.0)?, None)?;
        let c0 = threshold_factor * t.value / p;
        let options = CertifyOptions {
            grid: Some(default_grid(t.r_eps.max(1.0))),
            ..Default::default()
        };
        let cert = certify_elliptic(
            regime,
            params,
            beta,
            p,
            &section.model_with_floor(c0)?,
            &options,
        )?;
        cell.threshold = Some(t.value);
        cell.max_margin = Some(cert.max_margin());
        cell.verdict = if cert.passed() {
            CellVerdict::UniquenessPass
        } else {
            CellVerdict::UniquenessFail
        };
    } else if alpha > 2.0 * params.s() && params.dim() > 2 {
        let r0 = section.r0.unwrap_or(1.0);
        let barrier = decay_barrier(params, alpha, section.density_constant, r0, 1.0, &quad)?;
        cell.barrier_scale = Some(barrier.scale);
        cell.verdict = if barrier.passed() {
            CellVerdict::NonuniquenessBarrierPass
        } else {
            CellVerdict::NonuniquenessBarrierFail
        };
    }
    Ok(cell)
}

fn run_sweep(config: &ExperimentConfig, out: &mut Artifacts) -> Result<Vec<String>> {
    let params = config.params()?;
    let coeff = config.coefficient_section()?;
    let sw = config.sweep.clone().expect("validated");
    let pairs: Vec<(usize, f64, f64)> = sw
        .alphas
        .iter()
        .flat_map(|&a| sw.betas.iter().map(move |&b| (a, b)))
        .enumerate()
        .map(|(i, (a, b))| (i, a, b))
        .collect();
    let cell_dir = out.dir.join("cells");
    fs::create_dir_all(&cell_dir)?;
    let cells = pairs
        .par_iter()
        .map(|&(i, a, b)| -> Result<SweepCell> {
            let cell = sweep_cell(&params, &coeff, a, b, sw.p, sw.threshold_factor)?;
            let text = serde_json::to_string_pretty(&cell)
                .map_err(|e| MixlapError::Config(e.to_string()))?;
            write_atomic(&cell_dir.join(format!("cell_{i:04}.json")), &(text + "\n"))?;
            Ok(cell)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut csv = String::from("alpha,beta,regime,preconditions,verdict\n");
    for c in &cells {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            c.alpha,
            c.beta,
            c.regime.tag(),
            c.preconditions_hold,
            serde_json::to_value(c.verdict)
                .ok()
                .and_then(|v| v.as_str().map(String::from))
                .unwrap_or_default()
        ));
    }
    out.files
        .extend((0..cells.len()).map(|i| cell_dir.join(format!("cell_{i:04}.json"))));
    out.write("regime_map.csv", &csv)?;
    out.report(
        config,
        json!({ "frontier_alpha": 2.0 * params.s(), "cells": to_json(&cells)? }),
    )?;
    let failures = cells
        .iter()
        .filter(|c| sw.required && c.verdict == CellVerdict::UniquenessFail)
        .map(|c| {
            format!(
                "uniqueness certificate failed at alpha = {}, beta = {}",
                c.alpha, c.beta
            )
        })
        .collect();
    Ok(failures)
}

fn run_exhaustion(config: &ExperimentConfig, out: &mut Artifacts) -> Result<Vec<String>> {
    let params = config.params()?;
    let coeff = config.coefficient_section()?.model()?;
    let ex = config.exhaustion.clone().expect("validated");
    let grading = if ex.grading == 1.0 {
        Grading::Uniform
    } else {
        Grading::Graded { power: ex.grading }
    };
    let setup = ExhaustionSetup {
        params,
        radii: ex.radii.clone(),
        etas: ex.etas.clone(),
        nodes: ex.nodes,
        grading,
        observation_radius: ex.observation_radius,
    };
    let report = exhaustion_experiment(&setup, &coeff)?;
    let wmp = if ex.wmp_trials > 0 {
        let grid = RadialGrid::new(ex.radii[0], ex.nodes, grading)?;
        let problem = DirichletProblem::new(params, coeff.clone(), 0.0, grid);
        Some(wmp_check(
            &problem,
            ex.wmp_trials,
            config.seed.unwrap_or(0),
        )?)
    } else {
        None
    };
    out.write("center_values.csv", &report.to_csv())?;
    let mut window = String::from("n,eta,r,u\n");
    for s in &report.solves {
        for (r, u) in s.window_radii.iter().zip(&s.window_values) {
            window.push_str(&format!("{},{},{r:.17e},{u:.17e}\n", s.radius, s.eta));
        }
    }
    out.write("window.csv", &window)?;
    out.report(
        config,
        json!({ "exhaustion": to_json(&report)?, "wmp": to_json(&wmp)? }),
    )?;
    Ok(match &wmp {
        Some(w) if !w.passed => vec!["maximum-principle trials failed".into()],
        _ => Vec::new(),
    })
}

fn run_parabolic(config: &ExperimentConfig, out: &mut Artifacts) -> Result<Vec<String>> {
    let params = config.params()?;
    let coeff = config.coefficient_section()?.model()?;
    let pa = config.parabolic.clone().expect("validated");
    let grid = RadialGrid::uniform(pa.radius, pa.nodes)?;
    let problem = DirichletProblem::new(params, coeff, pa.eta, grid);
    let stepper = ParabolicStepper::new(&problem, pa.dt)?;
    let initial: Vec<f64> = match pa.initial_beta {
        Some(b) => stepper.sample(&WeightSpec::new(b)?.profile()),
        None => vec![0.0; stepper.radii().len()],
    }
    .into_iter()
    .map(|u| u + pa.perturbation)
    .collect();
    let trace = stepper.run(initial, pa.steps, pa.snapshot_every)?;
    let zero = if pa.initial_beta.is_none() && pa.eta == 0.0 {
        Some(zero_uniqueness_check(
            &problem,
            pa.dt,
            pa.steps,
            pa.perturbation,
        )?)
    } else {
        None
    };
    out.write("snapshots.csv", &trace.to_csv())?;
    let mut norms = String::from("step,max_abs,max_deviation\n");
    for (k, (a, d)) in trace.max_abs.iter().zip(&trace.max_deviation).enumerate() {
        norms.push_str(&format!("{k},{a:.17e},{d:.17e}\n"));
    }
    out.write("norms.csv", &norms)?;
    let contracts = trace.contracts(1e-14);
    out.report(
        config,
        json!({
            "steps": pa.steps,
            "final_max_abs": trace.max_abs.last(),
            "contracts": contracts,
            "zero_data": to_json(&zero)?,
        }),
    )?;
    Ok(match &zero {
        Some(z) if !z.passed => vec!["zero-data run left the tolerance".into()],
        _ => Vec::new(),
    })
}

/// One point of the closed-form versus quadrature comparison.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct OraclePoint {
    pub dim: usize,
    pub s: f64,
    pub beta: f64,
    pub r: f64,
    pub closed: f64,
    pub quadrature: f64,
    pub relative_error: f64,
}

/// The `β` values `N-2s-0.1, N-1, N, N+0.2`, keeping the positive ones.
pub fn oracle_betas(dim: usize, s: f64) -> Vec<f64> {
    let n = dim as f64;
    [n - 2.0 * s - 0.1, n - 1.0, n, n + 0.2]
        .into_iter()
        .filter(|&b| b > 0.0)
        .collect()
}

/// Closed form against quadrature on `ψ_β` over the `(N, s, β)` lattice.
pub fn oracle_lattice(section: &OracleSection) -> Result<Vec<OraclePoint>> {
    let quad = QuadratureConfig::default();
    let steps = (section.r_max / section.r_step).round() as usize;
    let radii: Vec<f64> = (0..=steps).map(|k| k as f64 * section.r_step).collect();
    let cases: Vec<(usize, f64, f64)> = section
        .dims
        .iter()
        .flat_map(|&n| section.s_values.iter().map(move |&s| (n, s)))
        .flat_map(|(n, s)| oracle_betas(n, s).into_iter().map(move |b| (n, s, b)))
        .collect();
    let per_case = cases
        .par_iter()
        .map(|&(n, s, beta)| -> Result<Vec<OraclePoint>> {
            let params = OperatorParams::new(n, s)?;
            let weight = WeightSpec::new(beta)?;
            let closed = WeightFractionalLaplacian::calibrate(&params, weight, &quad)?;
            let profile = weight.profile();
            radii
                .iter()
                .map(|&r| {
                    let c = closed.eval(r)?;
                    let q = fraclap_quadrature(&params, &profile, r, &quad)?;
                    Ok(OraclePoint {
                        dim: n,
                        s,
                        beta,
                        r,
                        closed: c,
                        quadrature: q,
                        relative_error: (c - q).abs() / q.abs(),
                    })
                })
                .collect()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_case.into_iter().flatten().collect())
}

fn run_oracle(config: &ExperimentConfig, out: &mut Artifacts) -> Result<Vec<String>> {
    let section = config.oracle_compare.clone().unwrap_or_default();
    let points = oracle_lattice(&section)?;
    let mut csv = String::from("N,s,beta,r,closed,quadrature,relative_error\n");
    for p in &points {
        csv.push_str(&format!(
            "{},{},{},{},{:.17e},{:.17e},{:.6e}\n",
            p.dim, p.s, p.beta, p.r, p.closed, p.quadrature, p.relative_error
        ));
    }
    out.write("oracle.csv", &csv)?;
    let worst = points.iter().map(|p| p.relative_error).fold(0.0, f64::max);
    let passed = worst <= section.tolerance;
    out.report(
        config,
        json!({ "points": points.len(), "max_relative_error": worst, "passed": passed }),
    )?;
    Ok(if passed {
        Vec::new()
    } else {
        vec![format!("oracle mismatch {worst:e}")]
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_lists_required_keys() {
        let err = ExperimentConfig::from_toml_str("")
            .unwrap()
            .validate()
            .unwrap_err();
        let msg = err.to_string();
        for key in ["schema_version", "kind", "operator", "coefficients"] {
            assert!(msg.contains(key), "{msg}");
        }
    }

    #[test]
    fn unknown_keys_are_rejected_with_location() {
        let err = ExperimentConfig::from_toml_str(
            "schema_version = 1\n[operator]\ndim = 3\ns = 0.25\nsigma = 1\n",
        )
        .unwrap_err()
        .to_string();
        assert!(err.contains("sigma") && err.contains("line 5"), "{err}");
    }

    #[test]
    fn command_line_overrides_file() {
        let text =
            "schema_version = 1\nkind = \"certify\"\nseed = 3\n[operator]\ndim = 4\ns = 0.25\n\
                    [coefficients]\nalpha = 1.0\n[certify]\nregime = \"i\"\nbeta = 1.0\n";
        let cfg = ExperimentConfig::from_toml_str(text).unwrap();
        let over = Overrides {
            seed: Some(9),
            workers: Some(2),
            ..Default::default()
        };
        let r = cfg.clone().resolve(&over).unwrap();
        assert_eq!((r.seed, r.workers), (Some(9), Some(2)));
        let clash = Overrides {
            kind: Some(ExperimentKind::Sweep),
            ..Default::default()
        };
        assert!(cfg.resolve(&clash).is_err());
    }

    #[test]
    fn sweep_cell_verdicts() {
        let params = OperatorParams::new(3, 0.25).unwrap();
        let coeff = CoefficientSection {
            alpha: 0.0,
            density_constant: 1.0,
            potential_floor: 1.0,
            mode: ModeName::LowerBound,
            r0: None,
        };
        let unique = sweep_cell(&params, &coeff, 1.0, 2.4, 1.0, 1.1).unwrap();
        assert_eq!(unique.verdict, CellVerdict::UniquenessPass);
        let barrier = sweep_cell(&params, &coeff, 1.0, 2.75, 1.0, 1.1).unwrap();
        assert_eq!(barrier.verdict, CellVerdict::NonuniquenessBarrierPass);
        let none = sweep_cell(&params, &coeff, 0.4, 3.6, 1.0, 1.1).unwrap();
        assert_eq!(none.verdict, CellVerdict::NotCovered);
    }
}
