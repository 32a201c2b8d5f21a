use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use chainscope::config::PipelineConfig;
use chainscope::data::{Address, ExplorerClient, ExplorerConfig, UreqTransport};
use chainscope::features::FeatureConfig;
use chainscope::pipeline::{run_pipeline, Stage};
use chainscope::segment::GranularityKind;
use chainscope::synthetic;

const EXIT_CONFIG: u8 = 2;
const EXIT_STAGE: u8 = 3;

#[derive(Parser)]
#[command(name = "chainscope", version, about = "Suspect contract detection over Ethereum activity")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load and validate the dataset.
    Ingest(RunArgs),
    /// Expand labelled contracts through their creation graph.
    Graph(RunArgs),
    /// Group contracts by source hash.
    Dedup(RunArgs),
    /// Normalise findings and compute severity scores.
    Score(RunArgs),
    /// Extract per-segment feature vectors.
    Features(RunArgs),
    /// Cluster each segment and pick the target cluster.
    Cluster(RunArgs),
    /// Flag suspects and compute probabilities.
    Suspects(RunArgs),
    /// Write the summary tables.
    Report(RunArgs),
    /// Run every stage.
    Run(RunArgs),
    /// Download an address's transactions into a dataset directory.
    Fetch {
        address: Address,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the synthetic fixture dataset.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Key=value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset directory; overrides the config.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Output directory; overrides the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Restrict to these granularities (1day, 3day, 1month, all).
    #[arg(long = "granularity", value_delimiter = ',')]
    granularities: Vec<GranularityKind>,
    /// Restrict to these feature configs (tx, tx+sev).
    #[arg(long = "feature-config", value_delimiter = ',')]
    feature_configs: Vec<FeatureConfig>,
    #[arg(long)]
    seed: Option<u64>,
}

impl RunArgs {
    fn resolve(self) -> Result<PipelineConfig, String> {
        let mut cfg = match (&self.config, &self.dataset) {
            (Some(p), _) => PipelineConfig::load(p).map_err(|e| e.to_string())?,
            (None, Some(d)) => PipelineConfig::new(d, d.join("out")),
            (None, None) => return Err("either --config or --dataset is required".into()),
        };
        if let Some(d) = self.dataset {
            cfg.dataset = d;
        }
        if let Some(o) = self.out {
            cfg.out = o;
        }
        if !self.granularities.is_empty() {
            cfg.granularities.retain(|g| self.granularities.contains(&g.kind));
        }
        if !self.feature_configs.is_empty() {
            cfg.feature_configs = self.feature_configs;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        cfg.validate().map_err(|e| e.to_string())
    }
}

fn run(args: RunArgs, until: Stage) -> ExitCode {
    let cfg = match args.resolve() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    match run_pipeline(&cfg, until) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_STAGE)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Ingest(a) => run(a, Stage::Ingest),
        Command::Graph(a) => run(a, Stage::Graph),
        Command::Dedup(a) => run(a, Stage::Dedup),
        Command::Score(a) => run(a, Stage::Score),
        Command::Features(a) => run(a, Stage::Features),
        Command::Cluster(a) => run(a, Stage::Cluster),
        Command::Suspects(a) => run(a, Stage::Suspects),
        Command::Report(a) | Command::Run(a) => run(a, Stage::Report),
        Command::Fetch { address, out } => {
            let cfg = match ExplorerConfig::from_env() {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(EXIT_CONFIG);
                }
            };
            let transport = UreqTransport::new(std::time::Duration::from_secs(30));
            let result = ExplorerClient::new(transport, cfg).and_then(|mut c| c.fetch_into(&address, &out));
            match result {
                Ok(s) => {
                    println!("{} external, {} internal rows in {} requests", s.external_rows, s.internal_rows, s.requests);
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(EXIT_STAGE)
                }
            }
        }
        Command::Synth { out, seed } => {
            let (ds, _) = synthetic::generate(seed);
            match synthetic::write_dataset(&ds, &out) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("error: {}: {e}", out.display());
                    ExitCode::from(EXIT_STAGE)
                }
            }
        }
    }
}
