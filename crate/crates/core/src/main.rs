use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use negcov::error::{Error, Result};
use negcov::example::{self, ScanParams};
use negcov::losses::LossKind;
use negcov::sweep::{self, Normalization, SweepConfig};
use negcov::theory::{self, PriorSpec};
use negcov::train::{self, corpus, SyntheticSpec, TrainConfig};

#[derive(Parser)]
#[command(name = "negcov", version, about = "Negative sampling: collision/coverage theory, worked example and trainer")]
struct Cli {
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tabulate tau, alpha and optimal k.
    Theory(TheoryArgs),
    /// Scan the paired-class example and report crossings.
    Example(ExampleArgs),
    /// Run the bound verification suites.
    Verify(VerifyArgs),
    /// Train one representation and evaluate it.
    Train(TrainArgs),
    /// Run a (N, k, B) grid from a config file, or summarize a sweep.csv.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct TheoryArgs {
    /// Class counts, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    n: Vec<usize>,
    /// `a..b` (inclusive) or a comma-separated list.
    #[arg(long)]
    k: String,
    /// uniform | zipf:<s> | p1,p2,...
    #[arg(long, default_value = "uniform")]
    prior: String,
    #[arg(long, default_value = "hinge")]
    loss: String,
    #[arg(long, default_value = "theory.csv")]
    out: PathBuf,
    /// Also write alpha times the growth-rate families (uniform prior).
    #[arg(long)]
    growth_out: Option<PathBuf>,
}

#[derive(Args)]
struct ExampleArgs {
    #[arg(long, default_value_t = 40)]
    n: usize,
    #[arg(long, default_value_t = 0.35)]
    epsilon: f64,
    #[arg(long, default_value_t = 600)]
    k_max: usize,
    #[arg(long, default_value_t = 1_000_000)]
    samples: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "hinge")]
    loss: String,
    #[arg(long, default_value = "figure2.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = theory::SUITE_INSTANCES)]
    instances: usize,
    #[arg(long, default_value_t = theory::SUITE_SEED)]
    seed: u64,
    #[arg(long, default_value_t = 10_000)]
    coupon_trials: u64,
}

#[derive(Args)]
struct TrainArgs {
    /// `<class>\t<tokens>` corpus; a synthetic corpus is generated otherwise.
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long, default_value_t = corpus::DEFAULT_MIN_COUNT)]
    min_count: usize,
    #[arg(long, default_value_t = 10)]
    n: usize,
    #[arg(long, default_value_t = 200)]
    sentences_per_class: usize,
    #[arg(long, default_value_t = 4)]
    tokens_per_sentence: usize,
    #[arg(long, default_value_t = 1000)]
    vocab_per_class: usize,
    #[arg(long, default_value_t = 20)]
    shared_vocab: usize,
    #[arg(long, default_value_t = 100)]
    b: usize,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long)]
    collision_free: bool,
    /// Reference hyperparameters (768-dimensional embeddings).
    #[arg(long)]
    paper_nlp: bool,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    nce_epochs: Option<usize>,
    #[arg(long)]
    head_epochs: Option<usize>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, required_unless_present = "from_csv")]
    config: Option<PathBuf>,
    #[arg(long, default_value = "sweep.csv")]
    out: PathBuf,
    /// Summarize an existing sweep.csv instead of running.
    #[arg(long, conflicts_with = "config")]
    from_csv: Option<PathBuf>,
    #[arg(long)]
    summary_out: Option<PathBuf>,
    /// none | local | global
    #[arg(long, default_value = "local")]
    normalize: String,
    #[arg(long, default_value_t = sweep::DEFAULT_SHADE_THRESHOLD)]
    threshold: f64,
}

fn parse_k_range(s: &str) -> Result<Vec<usize>> {
    let bad = || Error::InvalidArgument(format!("bad k range `{s}`"));
    let ks: Vec<usize> = if let Some((a, b)) = s.split_once("..") {
        let a: usize = a.trim().parse().map_err(|_| bad())?;
        let b: usize = b.trim().parse().map_err(|_| bad())?;
        (a..=b).collect()
    } else {
        s.split(',')
            .map(|x| x.trim().parse().map_err(|_| bad()))
            .collect::<Result<_>>()?
    };
    if ks.is_empty() || ks.contains(&0) {
        return Err(Error::InvalidArgument(format!("k range `{s}` must be non-empty with k ≥ 1")));
    }
    Ok(ks)
}

fn cmd_theory(a: &TheoryArgs) -> Result<()> {
    let ks = parse_k_range(&a.k)?;
    let prior: PriorSpec = a.prior.parse()?;
    let kind: LossKind = a.loss.parse()?;
    if a.n.iter().any(|&n| n < 2) {
        return Err(Error::InvalidArgument("every N must be at least 2".into()));
    }
    let rows = theory::theory_rows(&a.n, &ks, &prior, kind)?;
    theory::write_theory_csv(&a.out, &rows)?;
    for r in rows.iter().filter(|r| r.argmin) {
        println!(
            "N={}: argmin_k alpha = {} (alpha = {:.6e}); predicted {:.3} (transfer), {:.3} (refined)",
            r.n, r.k, r.alpha_ceiled, r.opt_k_transfer, r.opt_k_refined
        );
    }
    if let Some(p) = &a.growth_out {
        for &n in &a.n {
            theory::write_growth_csv(&p.with_extension(format!("N{n}.csv")), n, &ks)?;
        }
    }
    println!("wrote {}", a.out.display());
    Ok(())
}

fn cmd_example(a: &ExampleArgs) -> Result<()> {
    let p = ScanParams {
        num_classes: a.n,
        epsilon: a.epsilon,
        k_max: a.k_max,
        samples: a.samples,
        seed: a.seed,
        kind: a.loss.parse()?,
    };
    let rows = example::emit_figure2_data(&p, &a.out)?;
    let scan = example::crossings_from_rows(&rows);
    println!("wrote {} ({} k values)", a.out.display(), rows.len());
    println!("confident crossings of L(f1) - L(f2): {}", scan.crossings.len());
    for (lo, hi) in &scan.crossings {
        println!("  sign change between k = {lo} and k = {hi}");
    }
    let unresolved = scan.unresolved();
    if !unresolved.is_empty() {
        println!("unresolved (|diff| <= 3 sigma) at k = {unresolved:?}");
    }
    Ok(())
}

fn cmd_verify(a: &VerifyArgs) -> Result<bool> {
    let rows = theory::run_verification_suite(a.instances, a.seed)?;
    let t_fail = rows.iter().filter(|r| !r.transfer.holds).count();
    let r_fail = rows.iter().filter(|r| !r.refined.holds).count();
    println!("transfer bound: {} / {} hold", rows.len() - t_fail, rows.len());
    println!("refined bound:  {} / {} hold", rows.len() - r_fail, rows.len());
    let mut ok = t_fail == 0 && r_fail == 0;
    let cases: [(&str, Vec<f64>); 3] = [
        ("uniform n=3", vec![1.0 / 3.0; 3]),
        ("uniform n=10", vec![0.1; 10]),
        ("skewed (0.5, 0.25, 0.25)", vec![0.5, 0.25, 0.25]),
    ];
    for (i, (label, p)) in cases.iter().enumerate() {
        let c = theory::coupon_collector_check(p, a.coupon_trials, a.seed.wrapping_add(i as u64))?;
        println!(
            "coupon collector {label}: mean {:.4} +- {:.4}, bound {:.4}: {}",
            c.empirical_mean,
            c.stderr,
            c.bound,
            if c.holds { "holds" } else { "VIOLATED" }
        );
        ok &= c.holds;
    }
    Ok(ok)
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let data = match &a.corpus {
        Some(p) => corpus::load_corpus(p, a.min_count, a.seed)?,
        None => corpus::generate_synthetic_corpus(&SyntheticSpec {
            num_classes: a.n,
            sentences_per_class: a.sentences_per_class,
            tokens_per_sentence: a.tokens_per_sentence,
            vocab_per_class: a.vocab_per_class,
            shared_vocab: a.shared_vocab,
            seed: a.seed,
        })?,
    };
    let mut cfg = if a.paper_nlp {
        TrainConfig::paper_nlp(a.b, a.k)?
    } else {
        TrainConfig::new(a.b, a.k)?
    };
    cfg.collision_free = a.collision_free;
    cfg.seed = a.seed;
    if let Some(d) = a.dim {
        cfg.embedding_dim = d;
    }
    if let Some(e) = a.nce_epochs {
        cfg.nce_epochs = e;
    }
    if let Some(e) = a.head_epochs {
        cfg.head_epochs = e;
    }
    if let Some(t) = a.temperature {
        cfg.temperature = t;
    }
    cfg.validate()?;
    let r = train::run(&data, &cfg)?;
    println!("mean classifier accuracy: {:.4}", r.mean_classifier_accuracy);
    println!("linear head accuracy:     {:.4} (epoch {})", r.linear_head_accuracy, r.head_selection_epoch);
    println!("final NCE loss:           {:.6}", r.final_nce_loss);
    println!("skipped batches:          {}", r.skipped_batches);
    Ok(())
}

fn cmd_sweep(a: &SweepArgs, workers: usize) -> Result<()> {
    let norm: Normalization = a.normalize.parse()?;
    let summary = if let Some(src) = &a.from_csv {
        sweep::summarize_file(src, norm, a.threshold)?
    } else {
        let cfg = SweepConfig::load(a.config.as_ref().expect("clap enforces config"))?;
        let records = sweep::run_sweep(&cfg, workers)?;
        sweep::write_sweep_csv(&a.out, &records)?;
        let failed = records.iter().filter(|r| r.status() == "error").count();
        let infeasible = records.iter().filter(|r| r.status() == "infeasible").count();
        println!(
            "wrote {}: {} records ({} infeasible, {} failed)",
            a.out.display(),
            records.len(),
            infeasible,
            failed
        );
        sweep::summarize(&records, norm, a.threshold)
    };
    for r in &summary {
        println!(
            "N={:<5} B={:<5} k={:<5} cf={} runs={} mean_acc={:.4} head_acc={:.4} norm={:.4}{}",
            r.n,
            r.b,
            r.k,
            r.collision_free as u8,
            r.runs,
            r.mean_acc,
            r.head_acc,
            r.normalized,
            if r.shaded { " *" } else { "" }
        );
    }
    if let Some(p) = &a.summary_out {
        negcov::csvio::write_atomic(p, &sweep::summary_csv(&summary))?;
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. } => 1,
        Error::InvalidArgument(_)
        | Error::Parse { .. }
        | Error::NotFound(_)
        | Error::DegenerateInput(_)
        | Error::BudgetExceeded { .. }
        | Error::AllBatchesSkipped { .. } => 2,
        Error::InvalidValue(_) => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.workers > 0 {
        // Only fails if a global pool already exists, which cannot happen here.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.workers).build_global();
    }
    let result = match &cli.cmd {
        Command::Theory(a) => cmd_theory(a),
        Command::Example(a) => cmd_example(a),
        Command::Verify(a) => cmd_verify(a).and_then(|ok| {
            if ok {
                Ok(())
            } else {
                Err(Error::InvalidValue("a verified bound was violated".into()))
            }
        }),
        Command::Train(a) => cmd_train(a),
        Command::Sweep(a) => cmd_sweep(a, cli.workers),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
