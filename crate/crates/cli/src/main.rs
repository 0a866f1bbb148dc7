use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use hlcount_core::aux::{aux_count, ellipsoid_bound, exponent_fit};
use hlcount_core::densities::{euler_product, q_sum_series};
use hlcount_core::exp_sums::major_arcs;
use hlcount_core::harness::{run_diagnostics, run_verify_asymptotic, ExperimentConfig, REPORT_SCHEMA};
use hlcount_core::lattice::{count, CountRequest, DEFAULT_BUDGET};
use hlcount_core::pencil::{analyze, PencilConfig};
use hlcount_core::singular_integral::{sigma_infty_measure, sigma_infty_oscillatory, OscillatorySpec};
use hlcount_core::Error;

const BUDGET_ENV: &str = "HLCOUNT_BUDGET";

#[derive(Parser, Debug)]
#[command(name = "hlcount", version, about = "Counts zeros of systems of forms and compares with the circle-method prediction")]
struct Cli {
    /// Experiment configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Work budget; falls back to the config, then HLCOUNT_BUDGET.
    #[arg(long, global = true)]
    budget: Option<u64>,
    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// N(P) for every P of the schedule.
    Count,
    /// Singular series by Euler product and by the q-sum.
    Series,
    /// Singular integral by the measure method, optionally checked by the oscillatory one.
    Integral {
        #[arg(long)]
        oscillatory: bool,
    },
    /// Pencil ranks and hypothesis checks.
    Pencil,
    /// Auxiliary counts of the combination beta . F.
    Aux {
        /// Comma-separated beta; the first axis vector when absent.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        beta: Vec<f64>,
        /// Comma-separated box sizes B.
        #[arg(long, value_delimiter = ',', default_values_t = vec![5u64, 10, 20])]
        b: Vec<u64>,
    },
    /// Major-arc centers and radius.
    Arcs {
        /// Scale P; the first scheduled P when absent.
        #[arg(long)]
        p: Option<f64>,
    },
    /// End-to-end comparison of N(P) with the prediction.
    Verify,
    /// Runs the configured diagnostics.
    Diagnose,
}

enum Failure {
    Usage(String),
    Hard(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_validation() || matches!(e, Error::Io(_)) {
            Failure::Usage(e.to_string())
        } else {
            Failure::Hard(e.to_string())
        }
    }
}

struct Output {
    json: Value,
    csv: Option<String>,
    pass: bool,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, Failure> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Failure::Usage("--config PATH is required".into()))?;
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    let mut config = ExperimentConfig::from_json(&text)?;
    if let Some(seed) = cli.seed {
        config.seed = Some(seed);
    }
    if let Some(seed) = config.seed {
        config.measure.seed = seed;
    }
    if let hlcount_core::harness::SystemSource::Path { path: rel } = &config.system {
        let base = path.parent().map(|p| p.join(rel)).unwrap_or_else(|| PathBuf::from(rel));
        if !std::path::Path::new(rel).is_absolute() && base.exists() {
            config.system = hlcount_core::harness::SystemSource::Path {
                path: base.to_string_lossy().into_owned(),
            };
        }
    }
    Ok(config)
}

fn resolve_budget(cli: &Cli, config: &ExperimentConfig) -> Result<u64, Failure> {
    if let Some(b) = cli.budget.or(config.budget) {
        return Ok(b);
    }
    match std::env::var(BUDGET_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Failure::Usage(format!("{BUDGET_ENV}={v} is not an integer"))),
        Err(_) => Ok(DEFAULT_BUDGET),
    }
}

fn need_seed(config: &ExperimentConfig) -> Result<u64, Failure> {
    config
        .seed
        .ok_or_else(|| Failure::Usage("a seed is required (--seed N or \"seed\" in the config)".into()))
}

fn envelope(command: &str, config: &ExperimentConfig, budget: u64, result: Value) -> Value {
    json!({
        "schema": REPORT_SCHEMA,
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "budget": budget,
        "config": config,
        "result": result,
    })
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report types serialize")
}

fn execute(cli: &Cli) -> Result<Output, Failure> {
    let mut config = load_config(cli)?;
    let budget = resolve_budget(cli, &config)?;
    config.budget = Some(budget);
    config.validate_schedule()?;
    let (system, region) = config.resolve()?;
    config.region = Some(region.clone());
    let mut csv = None;
    let mut pass = true;
    let (name, result) = match &cli.command {
        Command::Count => {
            if config.schedule.is_empty() {
                return Err(Failure::Usage("the schedule is empty".into()));
            }
            let mut records = Vec::new();
            let mut table = String::from("P,N,method\n");
            for &p in &config.schedule {
                let rec = count(&CountRequest::new(&system, &region, p).with_method(config.count_method), budget)?;
                let method = to_value(&rec.method);
                table.push_str(&format!("{},{},{}\n", rec.scale, rec.count, method.as_str().unwrap_or("")));
                records.push(rec);
            }
            csv = Some(table);
            ("count", to_value(&records))
        }
        Command::Series => {
            let euler = euler_product(&system, config.prime_bound, config.k_policy, budget)?;
            let qsum = q_sum_series(&system, config.q_max, budget)?;
            let agreement = (qsum.value - euler.value).abs() / euler.value.abs();
            ("series", json!({ "euler_product": euler, "q_sum": qsum, "relative_difference": agreement }))
        }
        Command::Integral { oscillatory } => {
            need_seed(&config)?;
            let measure = sigma_infty_measure(&system, &region, &config.measure, budget)?;
            let osc = if *oscillatory {
                let spec = config.oscillatory.clone().unwrap_or_else(OscillatorySpec::default);
                Some(match sigma_infty_oscillatory(&system, &region, &spec, budget) {
                    Ok(est) => to_value(&est),
                    Err(e @ (Error::NoDecay(_) | Error::Numerical(_))) => json!({ "failed": e.to_string() }),
                    Err(e) => return Err(e.into()),
                })
            } else {
                None
            };
            ("integral", json!({ "measure": measure, "oscillatory": osc }))
        }
        Command::Pencil => ("pencil", to_value(&analyze(&system, &PencilConfig::default(), budget)?)),
        Command::Aux { beta, b } => {
            let beta = if beta.is_empty() {
                let mut e = vec![0.0; system.len()];
                e[0] = 1.0;
                e
            } else {
                beta.clone()
            };
            let f = system.combine(&beta)?;
            let mut records = Vec::new();
            let mut bounds = Vec::new();
            for &bb in b {
                records.push(aux_count(&f, bb, budget)?);
                if system.degree() == 2 {
                    bounds.push(ellipsoid_bound(&system, &beta, bb)?);
                }
            }
            let fit = if records.len() >= 3 { Some(exponent_fit(&records, None)?) } else { None };
            let mut table = String::from("B,count\n");
            for r in &records {
                table.push_str(&format!("{},{}\n", r.b, r.count));
            }
            csv = Some(table);
            ("aux", json!({ "beta": beta, "records": records, "ellipsoid_bounds": bounds, "fit": fit }))
        }
        Command::Arcs { p } => {
            let p = p
                .or(config.schedule.first().copied())
                .ok_or_else(|| Failure::Usage("--p or a schedule is required".into()))?;
            ("arcs", to_value(&major_arcs(p, config.delta, system.degree(), system.len())?))
        }
        Command::Verify => {
            need_seed(&config)?;
            let report = run_verify_asymptotic(&config, budget)?;
            pass = report.verdicts.pass;
            csv = Some(report.csv());
            ("verify", to_value(&report))
        }
        Command::Diagnose => {
            let bundle = run_diagnostics(&config, budget)?;
            ("diagnose", to_value(&bundle))
        }
    };
    Ok(Output {
        json: envelope(name, &config, budget, result),
        csv,
        pass,
    })
}

fn emit(cli: &Cli, text: &str) -> Result<(), Failure> {
    match &cli.out {
        Some(path) => std::fs::write(path, text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display()))),
        None => {
            use std::io::Write;
            match std::io::stdout().lock().write_all(text.as_bytes()) {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Failure::Hard(e.to_string())),
                _ => Ok(()),
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    let outcome = execute(&cli).and_then(|out| {
        let text = match cli.format {
            Format::Json => {
                let mut s = serde_json::to_string_pretty(&out.json).expect("json");
                s.push('\n');
                s
            }
            Format::Csv => out
                .csv
                .clone()
                .ok_or_else(|| Failure::Usage("this subcommand has no CSV projection".into()))?,
        };
        emit(&cli, &text)?;
        Ok(out.pass)
    });
    match outcome {
        Ok(true) => ExitCode::from(0),
        Ok(false) => {
            log::warn!("tolerance check failed");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Hard(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}
