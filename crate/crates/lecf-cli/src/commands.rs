//! The `lecf` subcommands. Every command is deterministic given its flags
//! and inputs, writes its fully-resolved configuration next to its outputs,
//! and never mutates its input files.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use lecf_core::eval::{
    compare_snapshots, drop_train_edges, evaluate_rankings, joint_transform_probe, ProbeConfig,
    ProbeMode, ProbeReport,
};
use lecf_core::graph::{self, GraphBundle, Split};
use lecf_core::hsam::GammaMode;
use lecf_core::lecf::AblationFlags;
use lecf_core::model::{
    build_attention, final_embeddings, train, train_on_graphs, Graphs, ModelParams, TrainConfig,
};

use crate::dataio;
use crate::error::{CliError, CliResult};
use crate::formats::{self, MetricRecord};

#[derive(Debug, Parser)]
#[command(
    name = "lecf",
    version,
    about = "Hyperbolic knowledge-graph-enhanced recommender: preprocessing, training, evaluation and robustness probes"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ingest raw TSV files into a preprocessed bundle.
    Preprocess(PreprocessArgs),
    /// Train a model on a preprocessed bundle.
    Train(TrainArgs),
    /// Rank and score a trained checkpoint on one split.
    Evaluate(EvaluateArgs),
    /// Lorentz-transformation and edge-sparsity robustness probes.
    Probe(ProbeArgs),
    /// Degree-distribution statistics of a bundle.
    Stats(StatsArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaModeArg {
    Unit,
    Time,
}

impl From<GammaModeArg> for GammaMode {
    fn from(a: GammaModeArg) -> Self {
        match a {
            GammaModeArg::Unit => GammaMode::Unit,
            GammaModeArg::Time => GammaMode::Time,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationArg {
    None,
    #[value(name = "no_sparse_attention")]
    NoSparseAttention,
    #[value(name = "no_s1")]
    NoS1,
    #[value(name = "no_s2")]
    NoS2,
    #[value(name = "break_equivariance")]
    BreakEquivariance,
}

impl From<AblationArg> for AblationFlags {
    fn from(a: AblationArg) -> Self {
        let mut f = AblationFlags::default();
        match a {
            AblationArg::None => {}
            AblationArg::NoSparseAttention => f.no_sparse_attention = true,
            AblationArg::NoS1 => f.no_s1 = true,
            AblationArg::NoS2 => f.no_s2 = true,
            AblationArg::BreakEquivariance => f.break_equivariance = true,
        }
        f
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeArg {
    Joint,
    #[value(name = "test_only")]
    TestOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitArg {
    Train,
    Valid,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Valid => Split::Valid,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct PreprocessArgs {
    /// Interactions TSV: user<TAB>item<TAB>rating.
    #[arg(long)]
    pub interactions: PathBuf,
    /// KG triples TSV: head<TAB>relation<TAB>tail.
    #[arg(long)]
    pub triples: PathBuf,
    /// Item-entity match TSV: item<TAB>entity.
    #[arg(long)]
    pub item_map: PathBuf,
    /// Keep interactions with rating >= threshold.
    #[arg(long, default_value_t = dataio::DEFAULT_THRESHOLD)]
    pub threshold: f64,
    /// Remove entities occurring fewer times than this across both graphs.
    #[arg(long, default_value_t = dataio::DEFAULT_MIN_COUNT)]
    pub min_count: usize,
    /// Keep KG triples within this many hops of matched item entities.
    #[arg(long, default_value_t = dataio::DEFAULT_KHOP)]
    pub khop: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 64)]
    pub dim: usize,
    /// KG aggregation layers.
    #[arg(long, default_value_t = 2)]
    pub l1: usize,
    /// Collaborative-filtering layers.
    #[arg(long, default_value_t = 3)]
    pub l2: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    /// Loss regularization weight.
    #[arg(long, default_value_t = 1e-5)]
    pub lambda: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub weight_decay: f64,
    #[arg(long, default_value_t = 0.1)]
    pub margin: f64,
    #[arg(long, default_value_t = 500)]
    pub epochs: usize,
    #[arg(long, default_value_t = 10)]
    pub patience: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Sparse-attention neighbor budget.
    #[arg(long, default_value_t = 16)]
    pub t: usize,
    #[arg(long, value_enum, default_value_t = GammaModeArg::Unit)]
    pub gamma_mode: GammaModeArg,
    #[arg(long, value_enum, default_value_t = AblationArg::None)]
    pub ablation: AblationArg,
    #[arg(long, default_value_t = 1.0)]
    pub curvature: f64,
    /// Std-dev of spatial coordinates at initialization.
    #[arg(long, default_value_t = 0.01)]
    pub init_sigma: f64,
}

impl TrainArgs {
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            dim: self.dim,
            l1: self.l1,
            l2: self.l2,
            lr: self.lr,
            lambda: self.lambda,
            weight_decay: self.weight_decay,
            margin: self.margin,
            epochs: self.epochs,
            patience: self.patience,
            seed: self.seed,
            t: self.t,
            gamma_mode: self.gamma_mode.into(),
            ablation: self.ablation.into(),
            curvature: self.curvature,
            init_sigma: self.init_sigma,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    pub split: SplitArg,
    /// Ranking cutoffs.
    #[arg(long, value_delimiter = ',', default_values_t = [10usize, 20])]
    pub k: Vec<usize>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ProbeArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Hyperbolic boost angle.
    #[arg(long, default_value_t = 0.0)]
    pub alpha: f64,
    /// Rotation angle on the first two space dimensions.
    #[arg(long, default_value_t = 0.0)]
    pub beta: f64,
    /// Edge-drop ratio; > 0 switches to the sparsity probe (retrains).
    #[arg(long, default_value_t = 0.0)]
    pub pe: f64,
    #[arg(long, value_enum, default_value_t = ModeArg::Joint)]
    pub mode: ModeArg,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, value_delimiter = ',', default_values_t = [10usize, 20])]
    pub k: Vec<usize>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct StatsArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Preprocess(args) => run_preprocess(&args),
        Command::Train(args) => run_train(&args),
        Command::Evaluate(args) => run_evaluate(&args),
        Command::Probe(args) => run_probe(&args),
        Command::Stats(args) => run_stats(&args),
    }
}

fn prepare_out_dir<A: Serialize>(out_dir: &Path, command: &str, args: &A) -> CliResult<()> {
    std::fs::create_dir_all(out_dir)
        .map_err(|e| CliError::Data(format!("cannot create {}: {e}", out_dir.display())))?;
    #[derive(Serialize)]
    struct Resolved<'a, A> {
        command: &'a str,
        #[serde(flatten)]
        args: &'a A,
    }
    formats::write_json(&out_dir.join("run-config.json"), &Resolved { command, args })
}

pub fn run_preprocess(args: &PreprocessArgs) -> CliResult<()> {
    let bundle = dataio::preprocess(
        &args.interactions,
        &args.triples,
        &args.item_map,
        args.threshold,
        args.min_count,
        args.khop,
        args.seed,
    )?;
    prepare_out_dir(&args.out_dir, "preprocess", args)?;
    formats::write_bundle(&args.out_dir.join("bundle.json"), &bundle)?;
    let stats = bundle.stats();
    formats::write_json(&args.out_dir.join("stats.json"), &stats)?;
    println!("users         {}", stats.users);
    println!("items         {}", stats.items);
    println!("interactions  {}", stats.interactions);
    println!("entities      {}", stats.entities);
    println!("relations     {}", stats.relations);
    println!("kg triples    {}", stats.kg_triples);
    Ok(())
}

fn eval_records(
    user_embeds: &[lecf_core::manifold::HPoint],
    item_embeds: &[lecf_core::manifold::HPoint],
    exclude: &[Vec<u32>],
    relevant: &[Vec<u32>],
    ks: &[usize],
    curvature: lecf_core::manifold::Curvature,
    split: &str,
    seed: u64,
) -> Vec<MetricRecord> {
    let eval = evaluate_rankings(user_embeds, item_embeds, exclude, relevant, ks, curvature);
    let mut records = Vec::new();
    for &(k, v) in &eval.recall {
        records.push(MetricRecord::new("recall", Some(k), v, split, seed));
    }
    for &(k, v) in &eval.ndcg {
        records.push(MetricRecord::new("ndcg", Some(k), v, split, seed));
    }
    records
}

fn print_records(records: &[MetricRecord]) {
    for r in records {
        match r.k {
            Some(k) => println!("{}@{k} ({}) = {:.6}", r.metric, r.split, r.value),
            None => println!("{} ({}) = {:.6}", r.metric, r.split, r.value),
        }
    }
}

pub fn run_train(args: &TrainArgs) -> CliResult<()> {
    let bundle = formats::read_bundle(&args.bundle)?;
    let config = args.train_config();
    config.validate()?;
    let (params, history) = train(&config, &bundle)?;
    prepare_out_dir(&args.out_dir, "train", args)?;
    formats::write_checkpoint(&args.out_dir.join("checkpoint.json"), &config, bundle.stats(), &params)?;
    formats::write_json(&args.out_dir.join("history.json"), &history)?;

    let graphs = Graphs::from_bundle(&bundle);
    let tables = build_attention(&params, &graphs, &config, 0)?;
    let (x_u, x_i) = final_embeddings(&params, &graphs, &tables, &config)?;
    let records = eval_records(
        &x_u,
        &x_i,
        &graphs.train_items,
        &bundle.user_items(Split::Valid),
        &[10, 20],
        config.curv(),
        "valid",
        config.seed,
    );
    formats::write_json(&args.out_dir.join("metrics.json"), &records)?;
    println!("trained {} epochs", history.len());
    print_records(&records);
    Ok(())
}

pub fn run_evaluate(args: &EvaluateArgs) -> CliResult<()> {
    let bundle = formats::read_bundle(&args.bundle)?;
    let ckpt = formats::read_checkpoint(&args.checkpoint, Some(&bundle.stats()))?;
    if args.k.is_empty() {
        return Err(CliError::Usage("at least one ranking cutoff K is required".into()));
    }
    let split: Split = args.split.into();
    let graphs = Graphs::from_bundle(&bundle);
    let tables = build_attention(&ckpt.params, &graphs, &ckpt.config, 0)?;
    let (x_u, x_i) = final_embeddings(&ckpt.params, &graphs, &tables, &ckpt.config)?;
    // evaluating the training split itself must not mask the train items
    let no_exclusion = vec![Vec::new(); graphs.num_users];
    let exclude = if split == Split::Train { &no_exclusion } else { &graphs.train_items };
    let split_name = match split {
        Split::Train => "train",
        Split::Valid => "valid",
        Split::Test => "test",
    };
    let records = eval_records(
        &x_u,
        &x_i,
        exclude,
        &bundle.user_items(split),
        &args.k,
        ckpt.config.curv(),
        split_name,
        ckpt.config.seed,
    );
    prepare_out_dir(&args.out_dir, "evaluate", args)?;
    formats::write_json(&args.out_dir.join("metrics.json"), &records)?;
    print_records(&records);
    Ok(())
}

/// Transform only the initial embeddings of items with test interactions and
/// re-run the forward pass; the report compares scores and rankings against
/// the untouched model.
pub fn test_only_probe(
    params: &ModelParams,
    config: &TrainConfig,
    bundle: &GraphBundle,
    probe: &ProbeConfig,
    ks: &[usize],
) -> CliResult<ProbeReport> {
    let graphs = Graphs::from_bundle(bundle);
    let tables = build_attention(params, &graphs, config, 0)?;
    let (base_u, base_i) = final_embeddings(params, &graphs, &tables, config)?;

    let map = probe.transform(config.dim)?;
    let mut moved = params.clone();
    let test_items = bundle.user_items(Split::Test);
    let mut is_test = vec![false; graphs.num_items];
    for items in &test_items {
        for &i in items {
            is_test[i as usize] = true;
        }
    }
    for (i, flagged) in is_test.iter().enumerate() {
        if *flagged {
            moved.item_embeds[i] = map.apply(&moved.item_embeds[i])?;
        }
    }
    let moved_tables = build_attention(&moved, &graphs, config, 0)?;
    let (probe_u, probe_i) = final_embeddings(&moved, &graphs, &moved_tables, config)?;
    Ok(compare_snapshots(
        &base_u,
        &base_i,
        &probe_u,
        &probe_i,
        &graphs.train_items,
        &test_items,
        ks,
        config.curv(),
    )?)
}

fn probe_records(report: &ProbeReport, args: &ProbeArgs, mode: &str) -> Vec<MetricRecord> {
    let mut records = Vec::new();
    let mut push = |metric: &str, k: Option<usize>, value: f64| {
        let mut r = MetricRecord::new(metric, k, value, "test", args.seed);
        r.alpha = Some(args.alpha);
        r.beta = Some(args.beta);
        r.mode = Some(mode.to_owned());
        records.push(r);
    };
    push("mean_abs_score_delta", None, report.mean_abs_score_delta);
    push("max_abs_score_delta", None, report.max_abs_score_delta);
    push("rankings_identical", None, if report.rankings_identical { 1.0 } else { 0.0 });
    for &(k, v) in &report.recall_delta {
        push("recall_delta", Some(k), v);
    }
    for &(k, v) in &report.ndcg_delta {
        push("ndcg_delta", Some(k), v);
    }
    records
}

pub fn run_probe(args: &ProbeArgs) -> CliResult<()> {
    let bundle = formats::read_bundle(&args.bundle)?;
    let ckpt = formats::read_checkpoint(&args.checkpoint, Some(&bundle.stats()))?;
    let mode = match args.mode {
        ModeArg::Joint => ProbeMode::Joint,
        ModeArg::TestOnly => ProbeMode::TestOnly,
    };
    let probe = ProbeConfig { alpha: args.alpha, beta: args.beta, p_e: args.pe, mode };
    probe.validate()?;
    prepare_out_dir(&args.out_dir, "probe", args)?;

    if args.pe > 0.0 {
        // sparsity probe: drop edges, retrain from scratch, evaluate on test
        let base_train = bundle.user_items(Split::Train);
        let thinned = drop_train_edges(&base_train, args.pe, args.seed);
        let kept: usize = thinned.iter().map(|v| v.len()).sum();
        let graphs = Graphs::from_parts(&bundle, thinned);
        let (params, _history) = train_on_graphs(&ckpt.config, &graphs, &bundle)?;
        let tables = build_attention(&params, &graphs, &ckpt.config, 0)?;
        let (x_u, x_i) = final_embeddings(&params, &graphs, &tables, &ckpt.config)?;
        let mut records = eval_records(
            &x_u,
            &x_i,
            &graphs.train_items,
            &bundle.user_items(Split::Test),
            &args.k,
            ckpt.config.curv(),
            "test",
            args.seed,
        );
        for r in &mut records {
            r.p_e = Some(args.pe);
        }
        formats::write_json(&args.out_dir.join("metrics.json"), &records)?;
        println!("sparsity probe: kept {kept} training edges (p_e = {})", args.pe);
        print_records(&records);
        return Ok(());
    }

    let report = match mode {
        ProbeMode::Joint => {
            let graphs = Graphs::from_bundle(&bundle);
            let tables = build_attention(&ckpt.params, &graphs, &ckpt.config, 0)?;
            let (x_u, x_i) = final_embeddings(&ckpt.params, &graphs, &tables, &ckpt.config)?;
            joint_transform_probe(
                &x_u,
                &x_i,
                &graphs.train_items,
                &bundle.user_items(Split::Test),
                &probe,
                &args.k,
                ckpt.config.curv(),
            )?
        }
        ProbeMode::TestOnly => {
            test_only_probe(&ckpt.params, &ckpt.config, &bundle, &probe, &args.k)?
        }
    };
    let mode_name = match mode {
        ProbeMode::Joint => "joint",
        ProbeMode::TestOnly => "test_only",
    };
    formats::write_json(&args.out_dir.join("probe.json"), &report)?;
    let records = probe_records(&report, args, mode_name);
    formats::write_json(&args.out_dir.join("metrics.json"), &records)?;
    println!(
        "{mode_name} probe (alpha {}, beta {}): mean |score delta| {:.3e}, rankings identical: {}",
        args.alpha, args.beta, report.mean_abs_score_delta, report.rankings_identical
    );
    Ok(())
}

pub fn run_stats(args: &StatsArgs) -> CliResult<()> {
    let bundle = formats::read_bundle(&args.bundle)?;
    let (interaction, kg) = graph::degree_stats(&bundle);
    prepare_out_dir(&args.out_dir, "stats", args)?;
    #[derive(Serialize)]
    struct DegreeStats {
        interaction: Vec<(usize, usize)>,
        kg: Vec<(usize, usize)>,
    }
    formats::write_json(
        &args.out_dir.join("degree-stats.json"),
        &DegreeStats { interaction: interaction.clone(), kg: kg.clone() },
    )?;
    println!("interaction-graph degree histogram (degree: nodes):");
    for (d, c) in &interaction {
        println!("  {d}: {c}");
    }
    println!("kg degree histogram (degree: nodes):");
    for (d, c) in &kg {
        println!("  {d}: {c}");
    }
    Ok(())
}
