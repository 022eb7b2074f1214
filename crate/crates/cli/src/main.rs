use std::fs;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use cnrr::coupling::{couple_to_h, StepConfig};
use cnrr::experiments::{
    estimate_coefficients, label_summary, run_experiment, theory_summary, ExperimentConfig,
    ExperimentKind, Report, Table,
};
use cnrr::oracle::{
    count_graphs, enumerate_graphs, mckay_asymptotic_count, DEFAULT_ENUMERATION_CAP,
};
use cnrr::sampler::{sample_conditional, sample_stream, worker_rng, ChainConfig};
use cnrr::{DegreeSequence, Error, LabelledGraph, RegularityParams};

#[derive(Parser)]
#[command(name = "cnrr", version, about = "Common neighbours in dense random regular graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct GraphArgs {
    #[arg(long)]
    n: usize,
    #[arg(long, conflicts_with = "lambda")]
    d: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
}

impl GraphArgs {
    fn params(&self) -> cnrr::Result<RegularityParams> {
        match (self.d, self.lambda) {
            (Some(d), _) => RegularityParams::new(self.n, d),
            (None, Some(l)) => RegularityParams::from_lambda(self.n, l),
            (None, None) => Err(Error::InvalidArgument("give --d or --lambda".into())),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SampleFormat {
    /// CSV of per-graph statistics.
    Stats,
    /// One edge-list file per graph in the output directory.
    Edges,
}

#[derive(Clone, Copy, ValueEnum)]
enum Experiment {
    Gumbel,
    LocalLimit,
    Coupling,
}

#[derive(Subcommand)]
enum Command {
    /// Centring and scaling constants as JSON.
    Theory {
        #[command(flatten)]
        graph: GraphArgs,
    },
    /// Number of labelled d-regular graphs on n vertices.
    Enumerate {
        #[command(flatten)]
        graph: GraphArgs,
    },
    /// Exact probabilities against the closed-form formulas, as CSV.
    Validate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Draw graphs from the switch chain.
    Sample {
        #[command(flatten)]
        graph: GraphArgs,
        #[arg(long, default_value_t = 100)]
        samples: usize,
        #[arg(long)]
        burn_in: Option<u64>,
        #[arg(long)]
        thinning: Option<u64>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = SampleFormat::Stats)]
        format: SampleFormat,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Chained switching couplings from X_ij = h-start to h-target, as CSV.
    Couple {
        #[command(flatten)]
        graph: GraphArgs,
        #[arg(long, default_value_t = 0)]
        i: usize,
        #[arg(long, default_value_t = 1)]
        j: usize,
        #[arg(long)]
        h_start: Option<u32>,
        #[arg(long)]
        h_target: u32,
        #[arg(long, default_value_t = 10)]
        runs: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        burn_in: Option<u64>,
        /// Start every run from this edge-list graph instead of sampling.
        #[arg(long, conflicts_with = "h_start")]
        from: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Extremal-independence coefficients as JSON.
    Coefficients {
        #[command(flatten)]
        graph: GraphArgs,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        x: f64,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        xprime: f64,
        #[arg(long, default_value_t = 2000)]
        samples: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        burn_in: Option<u64>,
        #[arg(long, default_value_t = 8)]
        chains: usize,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo experiment; writes a JSON report and, with --out, a CSV
    /// of its records next to it.
    Experiment {
        #[arg(value_enum)]
        kind: Experiment,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        d: Option<usize>,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        burn_in: Option<u64>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Any error that stops a command; reported with exit code 2.
struct Failure(String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(e.to_string())
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure(e.to_string())
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

/// Writes to `out`, or stdout when absent.
fn emit(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(p) => fs::write(p, text)?,
        None => io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn json<T: serde::Serialize>(value: &T) -> Result<String, Failure> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Failure(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn csv(table: &Table) -> Result<String, Failure> {
    let mut buf = Vec::new();
    table.write_csv(&mut buf)?;
    Ok(String::from_utf8(buf).expect("CSV is UTF-8"))
}

fn chain_config(params: &RegularityParams, seed: u64, burn_in: Option<u64>, thinning: Option<u64>) -> ChainConfig {
    let mut cfg = ChainConfig::new(params, seed);
    if let Some(b) = burn_in {
        cfg.burn_in = b;
    }
    if let Some(t) = thinning {
        cfg.thinning = t;
    }
    cfg
}

fn report_checks(report: &Report) {
    for c in &report.checks {
        log::info!(
            "{} {}: {} {} {}",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.relation,
            c.tolerance
        );
    }
}

fn run(command: Command) -> Result<bool, Failure> {
    match command {
        Command::Theory { graph } => {
            let summary = theory_summary(&graph.params()?)?;
            emit(None, &json(&summary)?)?;
            Ok(true)
        }
        Command::Enumerate { graph } => {
            let params = graph.params()?;
            let ds = DegreeSequence::regular(params.n, params.d)?;
            let (count, method) = if params.n <= DEFAULT_ENUMERATION_CAP {
                (enumerate_graphs(&ds, |_| {})?.count, "enumeration")
            } else {
                (count_graphs(&ds), "counting")
            };
            let mckay = mckay_asymptotic_count(&ds)?;
            let value = serde_json::json!({
                "n": params.n,
                "d": params.d,
                "count": count.to_string(),
                "method": method,
                "mckay_estimate": mckay,
            });
            emit(None, &json(&value)?)?;
            Ok(true)
        }
        Command::Validate {
            config,
            seed,
            workers,
            out,
        } => {
            let mut cfg = match config {
                Some(p) => load_config(&p, ExperimentKind::OracleValidation)?,
                None => ExperimentConfig::defaults(ExperimentKind::OracleValidation),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(w) = workers {
                cfg.workers = w;
            }
            let report = run_experiment(&cfg)?;
            report_checks(&report);
            emit(out.as_deref(), &csv(&report.records)?)?;
            Ok(report.passed)
        }
        Command::Sample {
            graph,
            samples,
            burn_in,
            thinning,
            seed,
            format,
            out,
        } => {
            let params = graph.params()?;
            let cfg = chain_config(&params, seed, burn_in, thinning);
            match format {
                SampleFormat::Stats => {
                    let mut rows = Vec::with_capacity(samples);
                    sample_stream(&params, &cfg, 0, samples, |g| {
                        let prof = g.common_neighbour_profile().expect("regular graph");
                        rows.push(format!("{},{},{},{}", rows.len(), prof.x_max, prof.x_min, prof.get(0, 1)));
                    })?;
                    let mut text = String::from("# schema_version: 1\nsample,x_max,x_min,x_01\n");
                    for r in rows {
                        text.push_str(&r);
                        text.push('\n');
                    }
                    emit(out.as_deref(), &text)?;
                }
                SampleFormat::Edges => {
                    let dir = out.ok_or_else(|| Failure("--format edges needs --out DIR".into()))?;
                    fs::create_dir_all(&dir)?;
                    let mut k = 0;
                    let mut failure = None;
                    sample_stream(&params, &cfg, 0, samples, |g| {
                        let written = g
                            .to_edge_list()
                            .map_err(Failure::from)
                            .and_then(|t| Ok(fs::write(dir.join(format!("graph_{k:05}.txt")), t)?));
                        if let Err(e) = written {
                            failure.get_or_insert(e);
                        }
                        k += 1;
                    })?;
                    if let Some(e) = failure {
                        return Err(e);
                    }
                }
            }
            Ok(true)
        }
        Command::Couple {
            graph,
            i,
            j,
            h_start,
            h_target,
            runs,
            seed,
            burn_in,
            from,
            out,
        } => {
            let (params, start) = match from {
                Some(path) => {
                    let (g, d) = LabelledGraph::from_edge_list(BufReader::new(fs::File::open(path)?))?;
                    (RegularityParams::new(g.n(), d)?, Some(g))
                }
                None => (graph.params()?, None),
            };
            let step = StepConfig::for_params(&params);
            let mut text =
                String::from("# schema_version: 1\nrun,steps,max_vertex_diff,fallbacks,w_label_histogram_summary\n");
            let mut clean = true;
            for r in 0..runs {
                let mut rng = worker_rng(seed, r as u64);
                let g = match (&start, h_start) {
                    (Some(g), _) => g.clone(),
                    (None, Some(h)) => {
                        let cfg = chain_config(&params, seed.wrapping_add(r as u64), burn_in, None);
                        sample_conditional(&params, i, j, h, &cfg)?
                    }
                    (None, None) => {
                        let cfg = chain_config(&params, seed.wrapping_add(r as u64), burn_in, None);
                        cnrr::sampler::sample_uniform(&params, &cfg)?
                    }
                };
                let run = couple_to_h(&params, &g, i, j, h_target, &step, &mut rng)?;
                let d = run.report;
                clean &= !d.degree_violation;
                text.push_str(&format!(
                    "{r},{},{},{},{}\n",
                    d.steps,
                    d.max_vertex_diff,
                    d.fallbacks,
                    label_summary(&d.labels)
                ));
            }
            emit(out.as_deref(), &text)?;
            Ok(clean)
        }
        Command::Coefficients {
            graph,
            x,
            xprime,
            samples,
            seed,
            burn_in,
            chains,
            workers,
            out,
        } => {
            let params = graph.params()?;
            let cfg = chain_config(&params, seed, burn_in, None);
            let r = estimate_coefficients(&params, x, xprime, &cfg, chains, samples, workers)?;
            emit(out.as_deref(), &json(&r)?)?;
            Ok(true)
        }
        Command::Experiment {
            kind,
            config,
            n,
            d,
            lambda,
            seed,
            samples,
            burn_in,
            workers,
            out,
        } => {
            let kind = match kind {
                Experiment::Gumbel => ExperimentKind::Gumbel,
                Experiment::LocalLimit => ExperimentKind::LocalLimit,
                Experiment::Coupling => ExperimentKind::Coupling,
            };
            let mut cfg = match config {
                Some(p) => load_config(&p, kind)?,
                None => ExperimentConfig::defaults(kind),
            };
            if let Some(n) = n {
                cfg.n = n;
            }
            if d.is_some() {
                cfg.d = d;
                cfg.lambda = None;
            } else if lambda.is_some() {
                cfg.lambda = lambda;
                cfg.d = None;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(s) = samples {
                cfg.samples = s;
            }
            if burn_in.is_some() {
                cfg.burn_in = burn_in;
            }
            if let Some(w) = workers {
                cfg.workers = w;
            }
            if out.is_some() {
                cfg.out = out.clone();
            }
            let report = run_experiment(&cfg)?;
            report_checks(&report);
            emit(out.as_deref(), &report.to_json()?)?;
            if let Some(p) = out {
                fs::write(p.with_extension("csv"), csv(&report.records)?)?;
            }
            Ok(report.passed)
        }
    }
}

fn load_config(path: &Path, kind: ExperimentKind) -> Result<ExperimentConfig, Failure> {
    let cfg = ExperimentConfig::from_json(&fs::read_to_string(path)?)?;
    if cfg.experiment != kind {
        return Err(Failure(format!(
            "config {} is for {}, not {}",
            path.display(),
            cfg.experiment.as_str(),
            kind.as_str()
        )));
    }
    Ok(cfg)
}
