//! Market-analysis CLI: every pipeline stage as a subcommand, plus a
//! config-driven `run` orchestrator that writes a content-hashed manifest.

mod commands;
mod context;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use veblen::embeddings::DEFAULT_SAMPLE_SIZE;
use veblen::graph::{PerturbMode, PerturbWeighting};
use veblen::ingest::DEFAULT_MAX_SUPPLY_FILTER;
use veblen::model::Category;
use veblen::stats::{CategoryFilter, Predictor, DEFAULT_BIN_COUNT, DEFAULT_CENSOR_FRACTION};

use crate::context::Ctx;

#[derive(Parser)]
#[command(
    name = "veblen",
    version,
    about = "Analytics for bandwagon and snob effects in NFT markets: ingestion, \
             rarity, embeddings, ownership graphs, GCN floor-price models, price \
             statistics, and an equilibrium simulator"
)]
struct Cli {
    /// Global seed; stage-level seeds are derived from it
    #[arg(long, global = true, env = "VEBLEN_SEED")]
    seed: Option<u64>,

    /// Directory for artifacts and the run manifest [default: out]
    #[arg(long, global = true, env = "VEBLEN_OUT")]
    out: Option<PathBuf>,

    /// Worker threads for data-parallel work; 0 uses every core
    #[arg(long, global = true, env = "VEBLEN_THREADS", default_value_t = 0)]
    threads: usize,

    /// Log filter: error, warn, info, debug, or trace
    #[arg(long, global = true, env = "VEBLEN_LOG_LEVEL", default_value = "info")]
    log_level: String,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load and validate a snapshot directory, recording it for later stages
    Ingest {
        /// Snapshot directory holding collections.jsonl, holdings.csv,
        /// traits.jsonl, transactions.jsonl, and embeddings
        #[arg(long)]
        source: PathBuf,
        /// Drop collections whose total supply exceeds this
        #[arg(long, default_value_t = DEFAULT_MAX_SUPPLY_FILTER)]
        max_supply_filter: u64,
    },
    /// Fetch a snapshot from a paginated JSON endpoint and record it
    Fetch {
        /// Base URL serving /collections, /holdings, /traits,
        /// /transactions, and /embeddings pages
        #[arg(long)]
        url: String,
        /// Drop collections whose total supply exceeds this
        #[arg(long, default_value_t = DEFAULT_MAX_SUPPLY_FILTER)]
        max_supply_filter: u64,
    },
    /// Check a snapshot directory against the referential-integrity rules
    Validate {
        #[arg(long)]
        source: PathBuf,
    },
    /// Trait-rarity rankings
    #[command(subcommand)]
    Rarity(RarityCmd),
    /// Collection centroids and visual distinctiveness
    #[command(subcommand)]
    Embeddings(EmbeddingsCmd),
    /// Wallet-collection ownership graph utilities
    #[command(subcommand)]
    Graph(GraphCmd),
    /// Floor-price GCN training, prediction, and edge experiments
    #[command(subcommand)]
    Gcn(GcnCmd),
    /// Price statistics over an ingested snapshot
    #[command(subcommand)]
    Stats(StatsCmd),
    /// Conspicuous-consumption equilibrium model
    #[command(subcommand)]
    Sim(SimCmd),
    /// Synthetic markets with planted, recoverable effects
    #[command(subcommand)]
    Synth(SynthCmd),
    /// Run configured stages in dependency order
    Run {
        /// TOML run config; every key can be overridden by a VEBLEN_*
        /// environment variable (nested keys join with __)
        #[arg(long)]
        config: Option<PathBuf>,
        /// Stages to run, overriding the config file: any of ingest,
        /// rarity, embeddings, graph, gcn, stats, sim
        #[arg(long, value_delimiter = ',')]
        stages: Vec<String>,
    },
}

#[derive(Subcommand)]
enum RarityCmd {
    /// Rank one collection's tokens by trait rarity
    Rank {
        #[arg(long)]
        collection: String,
        /// Snapshot directory; defaults to the last ingested snapshot
        /// under --out
        #[arg(long)]
        source: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum EmbeddingsCmd {
    /// Subsampled mean embedding of one collection
    Centroid {
        #[arg(long)]
        collection: String,
        /// Tokens sampled for the centroid estimate
        #[arg(long, default_value_t = DEFAULT_SAMPLE_SIZE)]
        sample_size: usize,
        #[arg(long)]
        source: Option<PathBuf>,
    },
    /// Distance of every token from its collection centroid
    Distinctiveness {
        #[arg(long)]
        collection: String,
        #[arg(long, default_value_t = DEFAULT_SAMPLE_SIZE)]
        sample_size: usize,
        #[arg(long)]
        source: Option<PathBuf>,
    },
    /// Centroid estimation error as the sample size grows
    Stability {
        #[arg(long)]
        collection: String,
        /// Sample sizes to probe
        #[arg(long, value_delimiter = ',', default_value = "5,10,20,50,100,200")]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long)]
        source: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum GraphCmd {
    /// Build the bipartite ownership graph and report its shape
    Build {
        #[arg(long)]
        source: Option<PathBuf>,
    },
    /// Per-wallet wealth, affinity, and importance
    Metrics {
        #[arg(long)]
        source: Option<PathBuf>,
    },
    /// Sample overlapping training subgraphs
    Split {
        #[arg(long, default_value_t = 50)]
        count: usize,
        /// Seed wallets drawn per subgraph
        #[arg(long, default_value_t = 75)]
        wallet_seeds: usize,
        /// Cap on collections kept per subgraph
        #[arg(long, default_value_t = 1500)]
        collection_cap: usize,
        #[arg(long)]
        source: Option<PathBuf>,
    },
    /// Sample weighted edge additions or deletions for one collection
    Perturb {
        #[arg(long)]
        collection: String,
        #[arg(long, value_enum)]
        mode: EdgeMode,
        #[arg(long, value_enum, default_value = "uniform")]
        weighting: EdgeWeighting,
        #[arg(long, default_value_t = 100)]
        edges: usize,
        #[arg(long)]
        source: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum GcnCmd {
    /// Train on subgraph samples and checkpoint the best validation epoch
    Train {
        /// TOML or JSON file with epochs, batch_size, learning_rate,
        /// train_fraction, val_fraction, subgraph settings, and seed
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Predict floor-price percentiles for every collection
    Predict {
        /// Model checkpoint [default: <out>/gcn/model.bin]
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Collection-centroid JSON for embedding-feature checkpoints;
        /// defaults to the embeddings stage artifact under --out
        #[arg(long)]
        centroids: Option<PathBuf>,
        #[arg(long)]
        source: Option<PathBuf>,
    },
    /// Distribution of prediction deltas under repeated edge perturbation
    PerturbExperiment {
        #[arg(long)]
        collection: String,
        #[arg(long, value_enum)]
        mode: EdgeMode,
        #[arg(long, value_enum, default_value = "uniform")]
        weighting: EdgeWeighting,
        #[arg(long, default_value_t = 100)]
        edges: usize,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        /// Model checkpoint [default: <out>/gcn/model.bin]
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        centroids: Option<PathBuf>,
        #[arg(long)]
        source: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum StatsCmd {
    /// Per-collection price correlation census with a headline share
    Census {
        #[arg(long, value_enum, default_value = "rarity")]
        predictor: PredictorArg,
        #[arg(long, value_enum, default_value = "all")]
        category: CategoryArg,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long)]
        source: Option<PathBuf>,
    },
    /// Rarity vs distinctiveness: which explains more price variance
    CompareR2 {
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long)]
        source: Option<PathBuf>,
    },
    /// Pooled rarity-price fit under multiplicative, additive, and plain
    /// normalizations
    FixedEffect {
        #[arg(long)]
        source: Option<PathBuf>,
    },
    /// Mean price ratio by rarity-quantile bin, per collection
    Bins {
        #[arg(long, default_value_t = DEFAULT_BIN_COUNT)]
        bins: usize,
        #[arg(long)]
        source: Option<PathBuf>,
    },
    /// Pooled rarity-price correlation before and after dropping the
    /// rarest tokens
    Censored {
        #[arg(long, default_value_t = DEFAULT_CENSOR_FRACTION)]
        fraction: f64,
        #[arg(long)]
        source: Option<PathBuf>,
    },
    /// Flag rapid same-token trade loops among few wallets
    Wash {
        #[arg(long, default_value_t = 24)]
        window_hours: i64,
        /// Flag windows whose trades involve at most this many wallets
        #[arg(long, default_value_t = 2)]
        max_wallets: usize,
        #[arg(long, default_value_t = 4)]
        min_trades: usize,
        #[arg(long)]
        source: Option<PathBuf>,
    },
    /// Pick high-volume, wash-clean collections for close reading
    SelectCaseStudies {
        #[arg(long, default_value_t = 2)]
        top_n: usize,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long)]
        source: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum SimCmd {
    /// Solve for the equilibrium visible-consumption profile
    Equilibrium {
        /// TOML or JSON file with z_min, z_max, points, tol, max_iters,
        /// damping, probe_mass, probe_level, and a [params] table
        #[arg(long)]
        params: Option<PathBuf>,
    },
    /// Best-response shift after adding visible-consumption mass
    Probe {
        #[arg(long)]
        params: Option<PathBuf>,
        /// Population mass injected into the social terms
        #[arg(long)]
        mass: Option<f64>,
        /// Visible-consumption level of the injected mass
        #[arg(long)]
        level: Option<f64>,
    },
    /// Evaluate the utility-family assumptions on the default grids
    CheckAssumptions {
        #[arg(long)]
        params: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum SynthCmd {
    /// Generate a market with planted effects and its ground-truth record
    Generate {
        /// TOML or JSON file of generator settings; its seed field is
        /// honored here (unlike `run`, which derives every stage seed
        /// from the global one)
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EdgeMode {
    Add,
    Delete,
}

impl From<EdgeMode> for PerturbMode {
    fn from(mode: EdgeMode) -> PerturbMode {
        match mode {
            EdgeMode::Add => PerturbMode::Add,
            EdgeMode::Delete => PerturbMode::Delete,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EdgeWeighting {
    Uniform,
    Wealth,
    Affinity,
    Importance,
}

impl From<EdgeWeighting> for PerturbWeighting {
    fn from(weighting: EdgeWeighting) -> PerturbWeighting {
        match weighting {
            EdgeWeighting::Uniform => PerturbWeighting::Uniform,
            EdgeWeighting::Wealth => PerturbWeighting::Wealth,
            EdgeWeighting::Affinity => PerturbWeighting::Affinity,
            EdgeWeighting::Importance => PerturbWeighting::Importance,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PredictorArg {
    Rarity,
    Distinctiveness,
}

impl From<PredictorArg> for Predictor {
    fn from(arg: PredictorArg) -> Predictor {
        match arg {
            PredictorArg::Rarity => Predictor::RarityRank,
            PredictorArg::Distinctiveness => Predictor::VisualDistinctiveness,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CategoryArg {
    All,
    Pfp,
    Art,
    Gaming,
    Collectibles,
    Photography,
    Uncategorized,
    Other,
}

impl From<CategoryArg> for CategoryFilter {
    fn from(arg: CategoryArg) -> CategoryFilter {
        match arg {
            CategoryArg::All => CategoryFilter::All,
            CategoryArg::Pfp => CategoryFilter::Only(Category::Pfp),
            CategoryArg::Art => CategoryFilter::Only(Category::Art),
            CategoryArg::Gaming => CategoryFilter::Only(Category::Gaming),
            CategoryArg::Collectibles => CategoryFilter::Only(Category::Collectibles),
            CategoryArg::Photography => CategoryFilter::Only(Category::Photography),
            CategoryArg::Uncategorized => CategoryFilter::Only(Category::Uncategorized),
            CategoryArg::Other => CategoryFilter::Only(Category::Other),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(
        env_logger::Env::default().default_filter_or(&cli.log_level),
    )
    .format_timestamp(None)
    .init();
    if cli.threads > 0 {
        if let Err(err) = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
        {
            eprintln!("error: could not size the thread pool: {err}");
            return ExitCode::FAILURE;
        }
    }
    let ctx = Ctx::new(cli.seed, cli.out);
    match dispatch(cli.command, &ctx) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command, ctx: &Ctx) -> Result<ExitCode, context::CliError> {
    match command {
        Command::Ingest {
            source,
            max_supply_filter,
        } => commands::data::ingest(ctx, &source, max_supply_filter),
        Command::Fetch {
            url,
            max_supply_filter,
        } => commands::data::fetch(ctx, &url, max_supply_filter),
        Command::Validate { source } => commands::data::validate(ctx, &source),
        Command::Rarity(RarityCmd::Rank { collection, source }) => {
            commands::features::rarity_rank(ctx, &collection, source.as_deref())
        }
        Command::Embeddings(cmd) => match cmd {
            EmbeddingsCmd::Centroid {
                collection,
                sample_size,
                source,
            } => commands::features::centroid(ctx, &collection, sample_size, source.as_deref()),
            EmbeddingsCmd::Distinctiveness {
                collection,
                sample_size,
                source,
            } => commands::features::distinctiveness(
                ctx,
                &collection,
                sample_size,
                source.as_deref(),
            ),
            EmbeddingsCmd::Stability {
                collection,
                sizes,
                trials,
                source,
            } => commands::features::stability(ctx, &collection, &sizes, trials, source.as_deref()),
        },
        Command::Graph(cmd) => match cmd {
            GraphCmd::Build { source } => commands::graph::build(ctx, source.as_deref()),
            GraphCmd::Metrics { source } => commands::graph::metrics(ctx, source.as_deref()),
            GraphCmd::Split {
                count,
                wallet_seeds,
                collection_cap,
                source,
            } => commands::graph::split(ctx, count, wallet_seeds, collection_cap, source.as_deref()),
            GraphCmd::Perturb {
                collection,
                mode,
                weighting,
                edges,
                source,
            } => commands::graph::perturb(
                ctx,
                &collection,
                mode.into(),
                weighting.into(),
                edges,
                source.as_deref(),
            ),
        },
        Command::Gcn(cmd) => match cmd {
            GcnCmd::Train { config } => commands::gcn::train(ctx, config.as_deref()),
            GcnCmd::Predict {
                checkpoint,
                centroids,
                source,
            } => commands::gcn::predict(
                ctx,
                checkpoint.as_deref(),
                centroids.as_deref(),
                source.as_deref(),
            ),
            GcnCmd::PerturbExperiment {
                collection,
                mode,
                weighting,
                edges,
                samples,
                checkpoint,
                centroids,
                source,
            } => commands::gcn::perturb_experiment(
                ctx,
                &collection,
                mode.into(),
                weighting.into(),
                edges,
                samples,
                checkpoint.as_deref(),
                centroids.as_deref(),
                source.as_deref(),
            ),
        },
        Command::Stats(cmd) => match cmd {
            StatsCmd::Census {
                predictor,
                category,
                alpha,
                source,
            } => commands::stats::census(
                ctx,
                predictor.into(),
                category.into(),
                alpha,
                source.as_deref(),
            ),
            StatsCmd::CompareR2 { alpha, source } => {
                commands::stats::compare_r2(ctx, alpha, source.as_deref())
            }
            StatsCmd::FixedEffect { source } => {
                commands::stats::fixed_effect(ctx, source.as_deref())
            }
            StatsCmd::Bins { bins, source } => commands::stats::bins(ctx, bins, source.as_deref()),
            StatsCmd::Censored { fraction, source } => {
                commands::stats::censored(ctx, fraction, source.as_deref())
            }
            StatsCmd::Wash {
                window_hours,
                max_wallets,
                min_trades,
                source,
            } => commands::stats::wash(
                ctx,
                window_hours,
                max_wallets,
                min_trades,
                source.as_deref(),
            ),
            StatsCmd::SelectCaseStudies {
                top_n,
                alpha,
                source,
            } => commands::stats::select_case_studies(ctx, top_n, alpha, source.as_deref()),
        },
        Command::Sim(cmd) => match cmd {
            SimCmd::Equilibrium { params } => commands::sim::equilibrium(ctx, params.as_deref()),
            SimCmd::Probe {
                params,
                mass,
                level,
            } => commands::sim::probe(ctx, params.as_deref(), mass, level),
            SimCmd::CheckAssumptions { params } => {
                commands::sim::check_assumptions(ctx, params.as_deref())
            }
        },
        Command::Synth(SynthCmd::Generate { config }) => {
            commands::data::synth_generate(ctx, config.as_deref())
        }
        Command::Run { config, stages } => commands::data::run(ctx, config.as_deref(), &stages),
    }
}
