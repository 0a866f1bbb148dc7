//! Experiment configuration, the end-to-end comparison of `N(P)` with
//! `S sigma_inf P^{n - dR}`, and diagnostic bundles.

use serde::{Deserialize, Serialize};

use crate::aux::{dominance_survey, sample_betas, weyl_inequality_check, DominanceReport, WeylInequalitySample};
use crate::densities::{euler_product, q_sum_series, KPolicy, SeriesEstimate};
use crate::error::{Error, Result};
use crate::exp_sums::{
    count_via_orthogonality, major_arc_approximation_check, major_arcs, repulsion_diagnostic, ApproximationResidual,
    OrthogonalityRoute, QuadratureSpec, RepulsionReport,
};
use crate::forms::{BoxRegion, FormSystem, SystemDocument};
use crate::lattice::{count, count_naive, CountMethod, CountRecord, CountRequest};
use crate::numeric::fit_line;
use crate::pencil::{analyze, PencilConfig, PencilReport};
use crate::singular_integral::{sigma_infty_measure, sigma_infty_oscillatory, IntegralEstimate, MeasureSpec, OscillatorySpec};

pub const REPORT_SCHEMA: &str = "hlcount.report/1";

/// Where the system comes from: inline, or a path to a system document.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SystemSource {
    Path { path: String },
    Inline(SystemDocument),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Diagnostic {
    Repulsion,
    WeylInequality,
    MajorArcApproximation,
    ExponentFit,
    Orthogonality,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticSettings {
    /// Scale `P` of the exponential-sum diagnostics; the first scheduled `P` when absent.
    pub scale: Option<f64>,
    /// Cancellation exponent; `(n - sigma_R) / 4` from the pencil when absent.
    pub cancellation: Option<f64>,
    pub epsilon: f64,
    pub random_samples: usize,
    pub theta: f64,
    pub aux_schedule: Vec<u64>,
    pub betas: usize,
    pub approximation_scales: Vec<f64>,
}

impl Default for DiagnosticSettings {
    fn default() -> Self {
        DiagnosticSettings {
            scale: None,
            cancellation: None,
            epsilon: 1e-3,
            random_samples: 64,
            theta: 1.0,
            aux_schedule: vec![5, 10, 20],
            betas: 50,
            approximation_scales: vec![20.0, 40.0, 80.0],
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemSource,
    /// Overrides the box of the system document; `[-1, 1]^n` when both are absent.
    #[serde(default, rename = "box")]
    pub region: Option<BoxRegion>,
    #[serde(default)]
    pub schedule: Vec<f64>,
    #[serde(default = "default_count_method")]
    pub count_method: CountMethod,
    #[serde(default = "default_prime_bound")]
    pub prime_bound: u64,
    #[serde(default)]
    pub k_policy: KPolicy,
    #[serde(default = "default_q_max")]
    pub q_max: u64,
    #[serde(default)]
    pub measure: MeasureSpec,
    /// Oscillatory validation of `sigma_inf` when `R <= 2`.
    #[serde(default)]
    pub oscillatory: Option<OscillatorySpec>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Largest accepted relative error at the last scheduled `P`.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default)]
    pub diagnostics: Vec<Diagnostic>,
    #[serde(default)]
    pub diagnostic_settings: DiagnosticSettings,
    #[serde(default)]
    pub budget: Option<u64>,
}

fn default_count_method() -> CountMethod {
    CountMethod::Auto
}
fn default_prime_bound() -> u64 {
    50
}
fn default_q_max() -> u64 {
    200
}
fn default_delta() -> f64 {
    0.2
}
fn default_tolerance() -> f64 {
    0.15
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Malformed(format!("experiment config: {e}")))
    }

    /// A configuration with defaults for everything but the system and schedule.
    pub fn new(system: SystemDocument, schedule: Vec<f64>) -> Self {
        ExperimentConfig {
            system: SystemSource::Inline(system),
            region: None,
            schedule,
            count_method: default_count_method(),
            prime_bound: default_prime_bound(),
            k_policy: KPolicy::default(),
            q_max: default_q_max(),
            measure: MeasureSpec::default(),
            oscillatory: None,
            seed: Some(0),
            delta: default_delta(),
            tolerance: default_tolerance(),
            diagnostics: Vec::new(),
            diagnostic_settings: DiagnosticSettings::default(),
            budget: None,
        }
    }

    fn randomized(&self) -> bool {
        !self.schedule.is_empty() || !self.diagnostics.is_empty()
    }

    /// Checks for a randomized run: the schedule, the tolerance and the seed.
    pub fn validate(&self) -> Result<()> {
        self.validate_schedule()?;
        if self.randomized() && self.seed.is_none() {
            return Err(Error::InvalidParameter("a seed is required for the randomized stages".into()));
        }
        Ok(())
    }

    pub fn validate_schedule(&self) -> Result<()> {
        if self.schedule.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter("the P schedule must be strictly increasing".into()));
        }
        if self.schedule.iter().any(|&p| !(p >= 1.0 && p.is_finite())) {
            return Err(Error::InvalidParameter("every scheduled P must be at least 1".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidParameter("the tolerance must be positive".into()));
        }
        Ok(())
    }

    /// The system, and the box: explicit override, then the document's, then `[-1, 1]^n`.
    pub fn resolve(&self) -> Result<(FormSystem, BoxRegion)> {
        let doc = match &self.system {
            SystemSource::Inline(doc) => doc.clone(),
            SystemSource::Path { path } => SystemDocument::from_json(&std::fs::read_to_string(path)?)?,
        };
        let system = doc.to_system()?;
        let region = self
            .region
            .clone()
            .or(doc.region.clone())
            .unwrap_or_else(|| BoxRegion::symmetric(system.vars()));
        region.check_dim(system.vars())?;
        Ok((system, region))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct AsymptoticRow {
    #[serde(rename = "P")]
    pub scale: f64,
    pub count: u64,
    pub method: CountMethod,
    pub prediction: f64,
    pub relative_error: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct OracleRow {
    #[serde(rename = "P")]
    pub scale: f64,
    pub fast: u64,
    pub naive: u64,
    pub equal: bool,
}

/// Outcome of the oscillatory validation of `sigma_inf`.
#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum Validation {
    Agrees { estimate: IntegralEstimate },
    Disagrees { estimate: IntegralEstimate },
    Failed { reason: String },
    Skipped { reason: String },
}

#[derive(Clone, Debug, Serialize)]
pub struct ExponentRecord {
    pub slope: f64,
    pub intercept: f64,
    /// `n - dR`.
    pub expected: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Verdicts {
    pub within_tolerance: bool,
    pub oracle_rows_agree: bool,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct Environment {
    pub package: &'static str,
    pub version: &'static str,
    pub budget: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct AsymptoticReport {
    pub schema: &'static str,
    pub system: SystemDocument,
    pub seed: u64,
    pub tolerance: f64,
    pub counts: Vec<CountRecord>,
    pub oracle: Vec<OracleRow>,
    pub series_euler: SeriesEstimate,
    pub series_q_sum: SeriesEstimate,
    /// `|q-sum - Euler| / Euler`.
    pub series_agreement: f64,
    pub sigma_infty: IntegralEstimate,
    pub sigma_infty_validation: Validation,
    pub pencil: Option<PencilReport>,
    pub rows: Vec<AsymptoticRow>,
    pub exponent: Option<ExponentRecord>,
    pub verdicts: Verdicts,
    pub environment: Environment,
}

impl AsymptoticReport {
    /// Rows rebuilt from the stored counts and estimates.
    pub fn recompute_rows(&self) -> Vec<AsymptoticRow> {
        let exponent = self.system.n.unwrap_or(0) as f64
            - (self.system.d.unwrap_or(0) as usize * self.system.r.unwrap_or(0)) as f64;
        build_rows(&self.counts, self.series_euler.value * self.sigma_infty.value, exponent)
    }

    /// CSV projection of the per-P table.
    pub fn csv(&self) -> String {
        let mut out = String::from("P,N,method,prediction,relative_error\n");
        for r in &self.rows {
            let method = serde_json::to_value(r.method).expect("enum serializes");
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.scale,
                r.count,
                method.as_str().unwrap_or(""),
                r.prediction,
                r.relative_error
            ));
        }
        out
    }
}

fn build_rows(counts: &[CountRecord], constant: f64, exponent: f64) -> Vec<AsymptoticRow> {
    counts
        .iter()
        .map(|c| {
            let prediction = constant * c.scale.powf(exponent);
            AsymptoticRow {
                scale: c.scale,
                count: c.count,
                method: c.method,
                prediction,
                relative_error: (c.count as f64 - prediction).abs() / prediction,
            }
        })
        .collect()
}

/// Counts on the schedule, both singular series estimates, `sigma_inf`, the
/// pencil report and the comparison table.
pub fn run_verify_asymptotic(config: &ExperimentConfig, budget: u64) -> Result<AsymptoticReport> {
    config.validate()?;
    if config.schedule.is_empty() {
        return Err(Error::InvalidParameter("the P schedule is empty".into()));
    }
    let (system, region) = config.resolve()?;
    let seed = config.seed.expect("validated");
    let n = system.vars();
    let exponent = n as f64 - (system.degree() as usize * system.len()) as f64;

    let mut counts = Vec::with_capacity(config.schedule.len());
    for &p in &config.schedule {
        let req = CountRequest::new(&system, &region, p).with_method(config.count_method);
        counts.push(count(&req, budget)?);
    }
    let first = &counts[0];
    let naive = count_naive(&CountRequest::new(&system, &region, first.scale), budget)?;
    let oracle = vec![OracleRow {
        scale: first.scale,
        fast: first.count,
        naive,
        equal: naive == first.count,
    }];

    let series_euler = euler_product(&system, config.prime_bound, config.k_policy, budget)?;
    let series_q_sum = q_sum_series(&system, config.q_max, budget)?;
    let series_agreement = (series_q_sum.value - series_euler.value).abs() / series_euler.value.abs();

    let measure = MeasureSpec {
        seed,
        ..config.measure.clone()
    };
    let sigma_infty = sigma_infty_measure(&system, &region, &measure, budget)?;
    let sigma_infty_validation = match &config.oscillatory {
        None => Validation::Skipped {
            reason: "not requested".into(),
        },
        Some(_) if system.len() > 2 => Validation::Skipped {
            reason: "R > 2".into(),
        },
        Some(spec) => match sigma_infty_oscillatory(&system, &region, spec, budget) {
            Ok(estimate) => {
                if (estimate.value - sigma_infty.value).abs() <= estimate.error_bar + sigma_infty.error_bar {
                    Validation::Agrees { estimate }
                } else {
                    Validation::Disagrees { estimate }
                }
            }
            Err(e @ (Error::NoDecay(_) | Error::Numerical(_))) => Validation::Failed { reason: e.to_string() },
            Err(e) => return Err(e),
        },
    };

    let pencil = if system.is_independent() {
        Some(analyze(&system, &PencilConfig::default(), budget)?)
    } else {
        None
    };

    let rows = build_rows(&counts, series_euler.value * sigma_infty.value, exponent);
    let exponent_fit = if counts.len() >= 2 {
        let xs: Vec<f64> = counts.iter().map(|c| c.scale.ln()).collect();
        let ys: Vec<f64> = counts.iter().map(|c| (c.count.max(1) as f64).ln()).collect();
        fit_line(&xs, &ys).map(|f| ExponentRecord {
            slope: f.slope,
            intercept: f.intercept,
            expected: exponent,
        })
    } else {
        None
    };
    let within_tolerance = rows.last().is_some_and(|r| r.relative_error <= config.tolerance);
    let oracle_rows_agree = oracle.iter().all(|o| o.equal);
    Ok(AsymptoticReport {
        schema: REPORT_SCHEMA,
        system: SystemDocument::from_system(&system, Some(&region)),
        seed,
        tolerance: config.tolerance,
        counts,
        oracle,
        series_euler,
        series_q_sum,
        series_agreement,
        sigma_infty,
        sigma_infty_validation,
        pencil,
        rows,
        exponent: exponent_fit,
        verdicts: Verdicts {
            within_tolerance,
            oracle_rows_agree,
            pass: within_tolerance && oracle_rows_agree,
        },
        environment: Environment {
            package: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            budget,
        },
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct OrthogonalityRow {
    #[serde(rename = "P")]
    pub scale: f64,
    pub orthogonality: u64,
    pub naive: u64,
    pub moduli: Vec<u64>,
    pub equal: bool,
}

#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "snake_case", tag = "diagnostic")]
pub enum DiagnosticRecord {
    Repulsion(RepulsionReport),
    WeylInequality { samples: Vec<WeylInequalitySample> },
    MajorArcApproximation { residuals: Vec<ApproximationResidual> },
    ExponentFit(DominanceReport),
    Orthogonality(OrthogonalityRow),
}

#[derive(Clone, Debug, Serialize)]
pub struct DiagnosticBundle {
    pub schema: &'static str,
    pub seed: Option<u64>,
    pub settings: DiagnosticSettings,
    pub records: Vec<DiagnosticRecord>,
}

/// One record per selected diagnostic, in the order selected.
pub fn run_diagnostics(config: &ExperimentConfig, budget: u64) -> Result<DiagnosticBundle> {
    config.validate()?;
    let settings = config.diagnostic_settings.clone();
    let mut records = Vec::new();
    if config.diagnostics.is_empty() {
        return Ok(DiagnosticBundle {
            schema: REPORT_SCHEMA,
            seed: config.seed,
            settings,
            records,
        });
    }
    let (system, region) = config.resolve()?;
    let seed = config.seed.expect("validated");
    let scale = settings
        .scale
        .or(config.schedule.first().copied())
        .ok_or_else(|| Error::InvalidParameter("no scale P for the diagnostics".into()))?;
    let pencil = if system.degree() == 2 && system.is_independent() {
        Some(analyze(&system, &PencilConfig::default(), budget)?)
    } else {
        None
    };
    let cancellation = settings
        .cancellation
        .or_else(|| pencil.as_ref().and_then(|p| p.cancellation).map(|c| c.from_sigma[0]))
        .unwrap_or((system.vars() as f64 - system.len() as f64 + 1.0) / 4.0);
    let r = system.len();
    for diagnostic in &config.diagnostics {
        let record = match diagnostic {
            Diagnostic::Repulsion => DiagnosticRecord::Repulsion(repulsion_diagnostic(
                &system,
                scale,
                &region,
                cancellation,
                settings.epsilon,
                settings.random_samples,
                seed,
                budget,
            )?),
            Diagnostic::WeylInequality => {
                let betas = sample_betas(r, 4, seed);
                let mut samples = Vec::new();
                for (i, beta) in betas.iter().enumerate() {
                    let alpha: Vec<f64> = (0..r).map(|j| ((i * r + j) as f64 * 0.618_033_988_749_895).fract()).collect();
                    let small: Vec<f64> = beta.iter().map(|b| b / scale).collect();
                    samples.push(weyl_inequality_check(
                        &system,
                        &alpha,
                        &small,
                        scale,
                        settings.theta,
                        settings.epsilon,
                        &region,
                        budget,
                    )?);
                }
                DiagnosticRecord::WeylInequality { samples }
            }
            Diagnostic::MajorArcApproximation => {
                let mut residuals = Vec::new();
                for &p in &settings.approximation_scales {
                    let arcs = major_arcs(p, config.delta, system.degree(), r)?;
                    let radius = arcs.radius;
                    for center in arcs.centers.iter().filter(|c| c.q > 1 || c.a.iter().all(|&a| a == 0)) {
                        let a: Vec<i64> = center.a.iter().map(|&v| v as i64).collect();
                        let alpha = vec![0.5 * radius; r];
                        residuals.push(major_arc_approximation_check(
                            &system,
                            center.q,
                            &a,
                            &alpha,
                            p,
                            &region,
                            &QuadratureSpec::default(),
                            budget,
                        )?);
                    }
                }
                DiagnosticRecord::MajorArcApproximation { residuals }
            }
            Diagnostic::ExponentFit => {
                let betas = sample_betas(r, settings.betas, seed);
                let sigma = pencil.as_ref().and_then(|p| p.sigma_r).map(|s| (s, r));
                DiagnosticRecord::ExponentFit(dominance_survey(
                    &system,
                    &betas,
                    &settings.aux_schedule,
                    sigma,
                    seed,
                    budget,
                )?)
            }
            Diagnostic::Orthogonality => {
                let p = config.schedule.first().copied().unwrap_or(scale);
                let orth = count_via_orthogonality(&system, p, &region, None, OrthogonalityRoute::Auto, budget)?;
                let naive = count_naive(&CountRequest::new(&system, &region, p), budget)?;
                DiagnosticRecord::Orthogonality(OrthogonalityRow {
                    scale: p,
                    orthogonality: orth.count,
                    naive,
                    moduli: orth.moduli,
                    equal: orth.count == naive,
                })
            }
        };
        records.push(record);
    }
    Ok(DiagnosticBundle {
        schema: REPORT_SCHEMA,
        seed: config.seed,
        settings,
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const BUDGET: u64 = 1 << 34;

    fn cone_config(schedule: Vec<f64>) -> ExperimentConfig {
        let doc = SystemDocument::from_json(r#"{"forms": ["x1^2 + x2^2 - x3^2"]}"#).unwrap();
        let mut c = ExperimentConfig::new(doc, schedule);
        c.prime_bound = 13;
        c.q_max = 40;
        c.measure.samples = 1 << 14;
        c
    }

    #[test]
    fn config_validation() {
        assert!(cone_config(vec![10.0, 5.0]).validate().is_err());
        assert!(cone_config(vec![5.0, 5.0]).validate().is_err());
        let mut c = cone_config(vec![5.0]);
        c.seed = None;
        assert!(c.validate().is_err());
        assert!(ExperimentConfig::from_json(r#"{"system": {"forms": ["x1^2"]}, "schedule": [1], "bogus": 1}"#).is_err());
        let parsed = ExperimentConfig::from_json(
            r#"{"system": {"forms": ["x1^2 - x2^2"]}, "schedule": [2, 4], "seed": 3, "k_policy": {"policy": "fixed", "k": 2}}"#,
        )
        .unwrap();
        assert!(parsed.validate().is_ok());
        assert_eq!(parsed.resolve().unwrap().1, BoxRegion::symmetric(2));
    }

    #[test]
    fn cone_report() {
        let report = run_verify_asymptotic(&cone_config(vec![5.0, 10.0, 20.0, 40.0]), BUDGET).unwrap();
        assert_eq!(report.counts[0].count, 57);
        assert!(report.oracle[0].equal);
        assert_eq!(report.rows.len(), 4);
        let again = report.recompute_rows();
        for (a, b) in report.rows.iter().zip(&again) {
            assert_eq!(a.relative_error, b.relative_error);
        }
        assert!(report.csv().starts_with("P,N,method,prediction,relative_error\n5,57,"));
        assert_eq!(report.exponent.as_ref().unwrap().expected, 1.0);
    }

    #[test]
    fn reports_are_deterministic() {
        let c = cone_config(vec![5.0, 10.0]);
        let a = serde_json::to_string(&run_verify_asymptotic(&c, BUDGET).unwrap()).unwrap();
        let b = serde_json::to_string(&run_verify_asymptotic(&c, BUDGET).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn diagnostics_bundle() {
        let empty = run_diagnostics(&cone_config(vec![5.0]), BUDGET).unwrap();
        assert!(empty.records.is_empty());
        let mut c = cone_config(vec![5.0]);
        c.diagnostics = vec![Diagnostic::Orthogonality, Diagnostic::Repulsion];
        c.diagnostic_settings.random_samples = 8;
        let bundle = run_diagnostics(&c, BUDGET).unwrap();
        match &bundle.records[0] {
            DiagnosticRecord::Orthogonality(row) => {
                assert_eq!((row.orthogonality, row.naive), (57, 57));
            }
            other => panic!("unexpected record {other:?}"),
        }
        let again = run_diagnostics(&c, BUDGET).unwrap();
        assert_eq!(serde_json::to_string(&bundle).unwrap(), serde_json::to_string(&again).unwrap());
    }
}
