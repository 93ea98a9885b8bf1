use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use symreg_core::data::DEFAULT_ETAS;
use symreg_core::pipeline::{self, ArtifactKind, Knob, PipelineError, RunConfig};
use symreg_core::PostfixTemplate;

/// Symbolic regression with a learned template prior: GP bootstrap, prior
/// training, constrained sampling, coefficient fitting and selection.
#[derive(Parser, Debug)]
#[command(name = "symreg", version)]
struct Cli {
    #[command(flatten)]
    global: Global,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// TOML run configuration; missing fields take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Global seed (overrides the config file).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,

    /// Target benchmark name.
    #[arg(long, global = true)]
    benchmark: Option<String>,

    #[arg(long, global = true)]
    max_complexity: Option<usize>,

    /// Any config field as `section.field=value`, e.g. `sampler.top_k=5`.
    /// Repeatable; applied after the other flags.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Evolve templates on the corpus benchmarks and write the corpus.
    Bootstrap,
    /// Train the prior on the corpus; writes the checkpoint and loss log.
    TrainPrior,
    /// Sample and filter a candidate pool for the target benchmark.
    Search,
    /// Fit every pool candidate and select the final equation.
    Fit,
    /// All stages end to end.
    Run,
    /// Evaluate the selected equation on noise-perturbed test inputs.
    NoiseSweep {
        /// Noise levels (default 0, 0.1, ..., 1.0).
        #[arg(long, value_delimiter = ',')]
        etas: Option<Vec<f64>>,
        /// Exit with code 4 if R² rises or ln(MSE) falls beyond the jitter.
        #[arg(long)]
        assert_monotone: bool,
    },
    /// Re-run search and fit for each value of one sampler setting.
    Sweep {
        #[arg(long)]
        knob: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        /// Benchmarks to average over (default: the target).
        #[arg(long, value_delimiter = ',')]
        benchmarks: Vec<String>,
    },
    /// Gradient fitting vs hill-climbing at matched evaluation budget.
    AblateCoeff {
        /// Postfix template, e.g. "COF x0 mul COF x1 mul sin add".
        #[arg(long)]
        template: String,
        /// Paired seeds.
        #[arg(long, default_value_t = 10)]
        pairs: usize,
    },
    /// Median evaluation time of each selected equation on its test split.
    Timing {
        /// Results files (default: the configured one).
        #[arg(long)]
        results: Vec<PathBuf>,
        #[arg(long, default_value_t = 20)]
        repeats: usize,
    },
    /// Re-check an artifact file.
    Validate {
        path: PathBuf,
        /// corpus, checkpoint, pool, results or manifest (default: detect).
        #[arg(long)]
        kind: Option<String>,
    },
}

fn load_config(g: &Global) -> Result<RunConfig, PipelineError> {
    let mut cfg = match &g.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    if let Some(dir) = &g.out_dir {
        cfg.out_dir = dir.clone();
    }
    if let Some(b) = &g.benchmark {
        cfg.benchmark = b.clone();
    }
    if let Some(c) = g.max_complexity {
        cfg.max_complexity = c;
    }
    for o in &g.overrides {
        cfg.set_override(o)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn execute(cli: &Cli) -> anyhow::Result<()> {
    let cfg = load_config(&cli.global)?;
    if let Some(jobs) = cli.global.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .context("configuring the worker pool")?;
    }
    match &cli.command {
        Command::Bootstrap => {
            let s = pipeline::bootstrap(&cfg)?;
            println!("corpus: {} templates from {} datasets", s.templates, s.datasets);
        }
        Command::TrainPrior => {
            let s = pipeline::train_prior(&cfg)?;
            println!(
                "prior: {} parameters, train CE {:.4} -> {:.4}, held-out CE {:?} -> {:?}",
                s.num_parameters,
                s.report.initial_train_ce,
                s.report.final_train_ce(),
                s.report.initial_heldout_ce,
                s.report.final_heldout_ce()
            );
        }
        Command::Search => {
            let s = pipeline::search(&cfg)?;
            println!("pool: {}", s.pool.stats);
        }
        Command::Fit => report_fit(&pipeline::fit(&cfg)?),
        Command::Run => {
            let s = pipeline::run(&cfg)?;
            println!("corpus: {} templates", s.bootstrap.templates);
            println!("prior: held-out CE {:?} -> {:?}", s.train.report.initial_heldout_ce, s.train.report.final_heldout_ce());
            println!("pool: {}", s.search.pool.stats);
            report_fit(&s.fit);
        }
        Command::NoiseSweep { etas, assert_monotone } => {
            let etas = etas.clone().unwrap_or_else(|| DEFAULT_ETAS.to_vec());
            let r = pipeline::noise_sweep(&cfg, &etas, *assert_monotone)?;
            println!("eta,ln_mse,r2,pearson");
            for row in &r.rows {
                println!("{},{},{},{}", row.eta, row.ln_mse, row.r2, row.pearson.map_or(String::new(), |p| p.to_string()));
            }
            for v in &r.violations {
                log::warn!("{v}");
            }
        }
        Command::Sweep { knob, values, benchmarks } => {
            let knob: Knob = knob.parse()?;
            let t = pipeline::sweep(&cfg, knob, values, benchmarks)?;
            println!("{knob},mean_r2,mean_pearson,ok_cells");
            for m in &t.means {
                let f = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
                println!("{},{},{},{}", m.value, f(m.r2), f(m.pearson), m.ok_cells);
            }
        }
        Command::AblateCoeff { template, pairs } => {
            let template = PostfixTemplate::parse(template, &cfg.vocab()).map_err(|e| PipelineError::Config(e.to_string()))?;
            let r = pipeline::ablate_coeff(&cfg, &template, *pairs)?;
            println!("gradient lower train MSE in {}/{} pairs", r.gradient_wins, r.rows.len());
            println!(
                "mean test R2: gradient {:?}, hill-climb {:?}",
                r.gradient_mean_test_r2, r.hill_climb_mean_test_r2
            );
        }
        Command::Timing { results, repeats } => {
            for row in pipeline::timing(&cfg, results, *repeats)? {
                println!("{}\t{}\t{:.3e} s", row.dataset, row.tokens, row.median_seconds);
            }
        }
        Command::Validate { path, kind } => {
            let kind: Option<ArtifactKind> = kind.as_deref().map(str::parse).transpose()?;
            let report = pipeline::validate(path, kind, &cfg)?;
            println!("{} {}: {} records checked, {} problems", report.kind, path.display(), report.checked, report.problems.len());
            for p in &report.problems {
                println!("  {p}");
            }
            report.into_result()?;
        }
    }
    Ok(())
}

fn report_fit(s: &pipeline::FitSummary) {
    let eq = &s.selected;
    println!("dataset: {}", s.dataset);
    println!("selected: {} (complexity {})", symreg_core::expr::render_infix(&eq.template, Some(&eq.w)), eq.complexity);
    if let Some(m) = &eq.test {
        println!("test: mse {:.6e} r2 {:.6} pearson {:?}", m.mse, m.r2, m.pearson);
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.downcast_ref::<PipelineError>().map_or(3, PipelineError::exit_code);
            ExitCode::from(code as u8)
        }
    }
}
