use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cgid::checkpoint::load_checkpoint;
use cgid::compare::compare_runs;
use cgid::config::{resolve_config, to_toml};
use cgid::corpus_io::export_corpus;
use cgid::report::read_structured;
use cgid::run::{execute_run, load_corpus, RunOptions};
use cgid::sweep::{default_workers, run_sweep, sweep_entries, WORKERS_ENV};
use cgid::CliError;
use cgid_core::cluster::estimate_num_classes;
use cgid_core::experiment::{prepare_split, Method, RunConfig};
use cgid_core::numeric::Encoder;
use cgid_core::plrd::{train_ind_stage, JointModel};
use cgid_core::rng::{derive_seed, tag};
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Continual generalized intent discovery experiments.
#[derive(Parser)]
#[command(name = "cgid", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Starting preset (reference, desk-banking-like). Default: the file's
    /// `preset` key, else "reference".
    #[arg(long)]
    preset: Option<String>,
    /// TOML config layered over the preset.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override one field by dotted path, e.g. `--set data.ood_ratio=0.4`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig, CliError> {
        resolve_config(self.preset.as_deref(), self.config.as_deref(), &self.overrides)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment (in-domain stage, then every unlabeled stage).
    Run {
        #[command(flatten)]
        config: ConfigArgs,
        /// Output directory for reports, dumps and the checkpoint.
        #[arg(long, short, default_value = "cgid-out")]
        out: PathBuf,
        /// Continue from a checkpoint written by an earlier run.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Skip the per-stage feature dumps.
        #[arg(long)]
        no_dumps: bool,
        /// Print the resolved configuration and exit.
        #[arg(long)]
        print_config: bool,
    },
    /// Run every combination of methods, ratios and seeds.
    Sweep {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, short, default_value = "cgid-sweep")]
        out: PathBuf,
        /// Seeds as a list (`0,1,2`) or a half-open range (`0..5`).
        #[arg(long, default_value = "0..5")]
        seeds: String,
        /// Comma-separated methods; default all.
        #[arg(long, value_delimiter = ',')]
        methods: Vec<String>,
        /// Comma-separated ratios; default the configured ratio.
        #[arg(long, value_delimiter = ',')]
        ratios: Vec<f64>,
        /// Concurrent runs; default from CGID_WORKERS or the core count.
        #[arg(long, env = WORKERS_ENV)]
        workers: Option<usize>,
    },
    /// Compare structured reports by per-seed medians of the last stage.
    Compare {
        /// `report.jsonl` files or run directories.
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        /// Method the deltas are taken against; default the first report's.
        #[arg(long)]
        reference: Option<String>,
    },
    /// Estimate the class count of every unlabeled stage.
    EstimateK {
        #[command(flatten)]
        config: ConfigArgs,
        /// Features to cluster.
        #[arg(long, value_enum, default_value_t = Extractor::Raw)]
        extractor: Extractor,
        /// Initial cluster count; default from `k.k_prime` or the factor.
        #[arg(long)]
        k_prime: Option<usize>,
    },
    /// Write the configured corpus in the embedding text format.
    ExportCorpus {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, short)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Extractor {
    /// The corpus features themselves.
    Raw,
    /// The encoder after in-domain training.
    Ind,
}

fn parse_seeds(s: &str) -> Result<Vec<u64>, CliError> {
    let bad = || CliError::Config(format!("seeds: cannot parse {s:?}"));
    if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| bad())?;
        let b: u64 = b.trim().parse().map_err(|_| bad())?;
        return Ok((a..b).collect());
    }
    s.split(',').map(|x| x.trim().parse().map_err(|_| bad())).collect()
}

fn report_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join(cgid::report::STRUCTURED_FILE)
    } else {
        p.to_path_buf()
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run {
            config,
            out,
            resume,
            no_dumps,
            print_config,
        } => {
            let (config, checkpoint) = match resume {
                Some(path) => {
                    let ck = load_checkpoint(&path)?;
                    (ck.config.clone(), Some(ck))
                }
                None => (config.resolve()?, None),
            };
            if print_config {
                print!("{}", to_toml(&config));
                return Ok(());
            }
            let output = execute_run(
                &config,
                &out,
                checkpoint,
                RunOptions {
                    feature_dumps: !no_dumps,
                },
            )?;
            for line in &output.log {
                log::info!("{line}");
            }
            if let Some(last) = output.reports.last() {
                println!(
                    "{} stage {}: A_ALL {:.4} F_ALL {} -> {}",
                    last.method,
                    last.stage,
                    last.metrics.a_all,
                    last.metrics.f_all.map_or("-".into(), |f| format!("{f:.4}")),
                    out.display()
                );
            }
        }
        Command::Sweep {
            config,
            out,
            seeds,
            methods,
            ratios,
            workers,
        } => {
            let base = config.resolve()?;
            let methods = if methods.is_empty() {
                Method::ALL.to_vec()
            } else {
                methods
                    .iter()
                    .map(|m| Method::parse(m).ok_or_else(|| CliError::Config(format!("methods: unknown method {m:?}"))))
                    .collect::<Result<_, _>>()?
            };
            let ratios = if ratios.is_empty() { vec![base.data.ood_ratio] } else { ratios };
            let entries = sweep_entries(&methods, &ratios, &parse_seeds(&seeds)?);
            let outcomes = run_sweep(&base, &entries, &out, workers.unwrap_or_else(default_workers));
            let mut failed = None;
            for o in outcomes {
                match o.result {
                    Ok(()) => println!("ok     {}", o.dir.display()),
                    Err(e) => {
                        println!("FAILED {}: {e}", o.dir.display());
                        failed.get_or_insert(e);
                    }
                }
            }
            if let Some(e) = failed {
                return Err(e);
            }
        }
        Command::Compare { reports, reference } => {
            let loaded = reports
                .iter()
                .map(|p| read_structured(&report_path(p)))
                .collect::<Result<Vec<_>, _>>()?;
            print!("{}", compare_runs(&loaded, reference.as_deref())?.render());
        }
        Command::EstimateK {
            config,
            extractor,
            k_prime,
        } => {
            let config = config.resolve()?;
            let corpus = load_corpus(&config)?;
            let split = prepare_split(&config, &corpus)?;
            let encoder = match extractor {
                Extractor::Raw => None,
                Extractor::Ind => {
                    let seed = config.seed;
                    let enc = Encoder::new(&config.encoder_config(split.input_dim()), derive_seed(seed, &[tag::INIT]))?;
                    let mut model = JointModel::new(enc);
                    model.expand_classifier(split.ind.num_classes, derive_seed(seed, &[tag::HEAD, 0]))?;
                    train_ind_stage(&mut model, &split.ind, &config.ind_schedule(), derive_seed(seed, &[tag::IND]))?;
                    Some(model.encoder)
                }
            };
            for stage in &split.ood {
                let t = stage.stage;
                let truth = split.stage_sizes()[t];
                let kp = k_prime
                    .or(config.k.k_prime)
                    .unwrap_or_else(|| (config.k.k_prime_factor * truth as f64).round().max(1.0) as usize)
                    .min(stage.train.rows());
                let features = match &encoder {
                    Some(e) => e.features(&stage.train)?,
                    None => stage.train.clone(),
                };
                let est = estimate_num_classes(&features, kp, derive_seed(config.seed, &[tag::ESTIMATE, t as u64]))?;
                println!("stage {t}: estimated K = {} (true {truth}, K' = {kp}, threshold {:.2})", est.k, est.threshold);
            }
        }
        Command::ExportCorpus { config, out } => {
            let config = config.resolve()?;
            let corpus = load_corpus(&config)?;
            export_corpus(&corpus, &out)?;
            println!("{} samples, {} classes -> {}", corpus.len(), corpus.num_classes(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
