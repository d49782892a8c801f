use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::error;

use domshift_cli::config::{ConfigArgs, CACHE_DIR_ENV};
use domshift_cli::fetch::{fetch_catalog, FetchOptions, DEFAULT_ENDPOINT};
use domshift_cli::pipeline::{run_pipeline, Stages, MANIFEST_FILE};
use domshift_cli::synth_world::{write_world, WorldSpec};
use domshift_cli::CliError;
use domshift_core::metadata::Origin;

#[derive(Parser)]
#[command(name = "domshift", version, about = "Quantify domain shift between dermoscopic datasets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Download archive metadata into a catalog CSV
    Fetch {
        #[arg(long, default_value = DEFAULT_ENDPOINT)]
        endpoint: String,
        /// Query filter KEY=VALUE (repeatable)
        #[arg(long = "filter")]
        filters: Vec<String>,
        /// Origin assigned to every record (HAM, BCN, MSK, ...)
        #[arg(long)]
        origin: Option<String>,
        #[arg(long, default_value_t = 100)]
        page_size: usize,
        #[arg(long, default_value_t = 4)]
        retries: u32,
        #[arg(long, env = CACHE_DIR_ENV, default_value = ".domshift-cache")]
        cache_dir: PathBuf,
        #[arg(long, short = 'o')]
        out: PathBuf,
    },
    /// Group the catalogs and split the source dataset
    Group(ConfigArgs),
    /// Image statistics and box-plot summaries
    Stats(ConfigArgs),
    /// Bootstrap JSD and cosine divergence against the source
    Divergence(ConfigArgs),
    /// Divergence over several bootstrap sample sizes
    Sweep(ConfigArgs),
    /// t-SNE projection of the embeddings
    Tsne(ConfigArgs),
    /// AUROC and performance drops from prediction files
    Metrics(ConfigArgs),
    /// Divergence, metrics and their correlation matrices
    Correlate(ConfigArgs),
    /// Write a synthetic archive with a ready-to-run config
    Synth {
        #[arg(long, short = 'o')]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        min_total: Option<usize>,
    },
    /// Every stage
    Run(ConfigArgs),
}

fn parse_filter(raw: &str) -> Result<(String, String), CliError> {
    raw.split_once('=')
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .ok_or_else(|| CliError::Usage(format!("filter `{raw}` is not KEY=VALUE")))
}

fn stages_for(command: &Command) -> Stages {
    let none = Stages::default();
    match command {
        Command::Group(_) => Stages { group_report: true, ..none },
        Command::Stats(_) => Stages { stats: true, ..none },
        Command::Divergence(_) => Stages { divergence: true, ..none },
        Command::Sweep(_) => Stages { sweep: true, ..none },
        Command::Tsne(_) => Stages { tsne: true, ..none },
        Command::Metrics(_) => Stages { metrics: true, ..none },
        Command::Correlate(_) => Stages {
            divergence: true,
            metrics: true,
            correlate: true,
            ..none
        },
        _ => Stages::all(),
    }
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Fetch {
            endpoint,
            filters,
            origin,
            page_size,
            retries,
            cache_dir,
            out,
        } => {
            let mut opts = FetchOptions::new(endpoint, cache_dir);
            opts.filter = filters.iter().map(|f| parse_filter(f)).collect::<Result<_, _>>()?;
            opts.origin = origin.as_deref().map(Origin::parse);
            opts.page_size = page_size;
            opts.retries = retries;
            let s = fetch_catalog(&opts, &out)?;
            println!(
                "{} records from {} pages ({} cached) -> {}",
                s.records,
                s.pages,
                s.cached_pages,
                out.display()
            );
            Ok(())
        }
        Command::Synth { out, seed, min_total } => {
            let mut spec = WorldSpec {
                seed,
                ..WorldSpec::default()
            };
            if let Some(m) = min_total {
                spec.min_total = m;
            }
            let world = write_world(&spec, &out)?;
            println!(
                "{} images, {} prediction files -> {}",
                world.images,
                world.prediction_files,
                out.join("config.toml").display()
            );
            Ok(())
        }
        Command::Group(ref args)
        | Command::Stats(ref args)
        | Command::Divergence(ref args)
        | Command::Sweep(ref args)
        | Command::Tsne(ref args)
        | Command::Metrics(ref args)
        | Command::Correlate(ref args)
        | Command::Run(ref args) => {
            let cfg = args.resolve()?;
            let stages = stages_for(&command).without_skipped(&cfg);
            match run_pipeline(&cfg, stages) {
                Ok(m) => {
                    for a in &m.artifacts {
                        println!("{}  {}", a.sha256, cfg.output_dir.join(&a.path).display());
                    }
                    println!("manifest: {}", cfg.output_dir.join(MANIFEST_FILE).display());
                    Ok(())
                }
                Err(f) => Err(f.error),
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
