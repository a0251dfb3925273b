//! `raikit` command line.
//!
//! Exit codes: 0 on success, 1 on a usage error, 2 when the data or a
//! module contract rejects the request.

mod config;
mod io;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use raikit::dataset::{
    fig2_fixture, gen_synthetic, poison_label_flip, poisoned_fig2_fixture, table1_fixture,
    FlipStrategy,
};
use raikit::fairbatch::make_fairbatch_sampler;
use raikit::frtrain::{train_frtrain_with_mask, FRConfig};
use raikit::metrics::{accuracy, demographic_parity, FairnessReport};
use raikit::mlclean::{mlclean_pipeline, CleanConfig};
use raikit::model::{
    classify, fit_threshold_fair, fit_threshold_max_accuracy, train_sgd, train_vanilla, Model,
};
use raikit::plotdata::{PlotKind, Trace};
use raikit::slicefinder::{default_plant, find_problematic, gen_planted, second_plant, Strategy};
use raikit::slicetuner::{gen_slice_pool, plan_acquisition, run_baseline, Baseline, PoolProvider};

use config::RunConfig;

#[derive(Parser)]
#[command(
    name = "raikit",
    version,
    about = "Fairness- and robustness-aware training toolkit"
)]
struct Cli {
    /// Seed for every randomized step. Overrides `seed` in the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// JSON file with optional sections: seed, gen_data, pool, train,
    /// fairbatch, frtrain, tune, find_slices, clean.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Primary output file. Secondary artifacts are written next to it.
    /// Without it the primary artifact goes to stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset (CSV plus `<stem>.schema.json`).
    GenData {
        #[arg(long, value_enum, default_value_t = DataKind::Synthetic)]
        kind: DataKind,
        /// Row count for `planted`.
        #[arg(long, default_value_t = 3000)]
        rows: usize,
    },
    /// Flip a fraction of labels; flipped positions go to `<stem>.flips.json`.
    Poison {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        rate: f64,
        /// Only flip labels inside this group.
        #[arg(long)]
        group: Option<String>,
    },
    /// Fairness report of predictions (or a model) on a dataset.
    Metrics {
        #[command(flatten)]
        data: DataArgs,
        /// CSV with a single 0/1 prediction column.
        #[arg(long, conflicts_with = "model", required_unless_present = "model")]
        predictions: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Train a classifier and save it as JSON.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_enum, default_value_t = Method::Vanilla)]
        method: Method,
        /// Clean validation set (frtrain).
        #[arg(long)]
        validation: Option<PathBuf>,
        /// JSON list of flipped positions, used only for frtrain diagnostics.
        #[arg(long)]
        flips: Option<PathBuf>,
    },
    /// Plan slice-wise data acquisition on a simulated slice pool.
    Tune {
        #[arg(long, default_value_t = 400.0)]
        budget: f64,
        #[arg(long, value_enum, default_value_t = TuneMethod::Planner)]
        method: TuneMethod,
    },
    /// Search for problematic slices of a trained model.
    FindSlices {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_enum, default_value_t = StrategyArg::Lattice)]
        strategy: StrategyArg,
        /// Print a text table instead of JSON.
        #[arg(long)]
        table: bool,
    },
    /// Sanitize, resolve entities, and reweigh for demographic parity.
    Clean {
        #[command(flatten)]
        data: DataArgs,
        /// Rule preset used when the config has no `clean` section.
        #[arg(long, value_enum, default_value_t = Preset::People)]
        preset: Preset,
    },
    /// The threshold example on the ten-point fixture.
    DemoFig2,
    /// The six-person cleaning example.
    DemoTable1,
}

#[derive(Args)]
struct DataArgs {
    /// Dataset CSV.
    #[arg(long)]
    data: PathBuf,
    /// Schema JSON; defaults to `<stem>.schema.json` next to the CSV.
    #[arg(long)]
    schema: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum DataKind {
    Synthetic,
    Fig2,
    PoisonedFig2,
    Table1,
    Planted,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    Vanilla,
    Fairbatch,
    Frtrain,
}

#[derive(Clone, Copy, ValueEnum)]
enum TuneMethod {
    Planner,
    Uniform,
    Waterfilling,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Lattice,
    Tree,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    People,
    Default,
}

/// Failure classes mapped onto exit codes.
enum Failure {
    Usage(String),
    Data(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Data(e)
    }
}

impl From<raikit::Error> for Failure {
    fn from(e: raikit::Error) -> Self {
        Failure::Data(e.into())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

struct Ctx {
    cfg: RunConfig,
    seed: Option<u64>,
    out: Option<PathBuf>,
}

impl Ctx {
    fn seed(&self) -> std::result::Result<u64, Failure> {
        self.seed.ok_or_else(|| {
            Failure::Usage(
                "this command is randomized; pass --seed or set `seed` in the config".into(),
            )
        })
    }

    /// Writes the primary artifact to `--out`, or stdout.
    fn emit(&self, text: &str) -> Result<()> {
        match &self.out {
            Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
            None => {
                print!("{text}");
                Ok(())
            }
        }
    }

    fn sibling(&self, suffix: &str) -> Option<PathBuf> {
        self.out.as_deref().map(|p| io::sibling(p, suffix))
    }
}

fn run(cli: Cli) -> std::result::Result<(), Failure> {
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    // Siblings share the primary artifact's directory.
    if let Some(dir) = cli
        .out
        .as_deref()
        .and_then(Path::parent)
        .filter(|d| !d.as_os_str().is_empty())
    {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let ctx = Ctx {
        seed: cli.seed.or(cfg.seed),
        cfg,
        out: cli.out,
    };
    match cli.command {
        Command::GenData { kind, rows } => gen_data(&ctx, kind, rows),
        Command::Poison { data, rate, group } => poison(&ctx, &data, rate, group),
        Command::Metrics {
            data,
            predictions,
            model,
        } => metrics(&ctx, &data, predictions.as_deref(), model.as_deref()),
        Command::Train {
            data,
            method,
            validation,
            flips,
        } => train(&ctx, &data, method, validation.as_deref(), flips.as_deref()),
        Command::Tune { budget, method } => tune(&ctx, budget, method),
        Command::FindSlices {
            data,
            model,
            strategy,
            table,
        } => find_slices(&ctx, &data, &model, strategy, table),
        Command::Clean { data, preset } => clean(&ctx, &data, preset),
        Command::DemoFig2 => demo_fig2(&ctx),
        Command::DemoTable1 => demo_table1(&ctx),
    }
}

fn gen_data(ctx: &Ctx, kind: DataKind, rows: usize) -> std::result::Result<(), Failure> {
    let d = match kind {
        DataKind::Synthetic => gen_synthetic(&ctx.cfg.gen_data_params(), ctx.seed()?)?,
        DataKind::Planted => gen_planted(rows, &[default_plant(), second_plant()], ctx.seed()?)?,
        DataKind::Fig2 => fig2_fixture(),
        DataKind::PoisonedFig2 => poisoned_fig2_fixture(),
        DataKind::Table1 => table1_fixture(),
    };
    io::emit_dataset(ctx.out.as_deref(), &d)?;
    Ok(())
}

fn poison(
    ctx: &Ctx,
    data: &DataArgs,
    rate: f64,
    group: Option<String>,
) -> std::result::Result<(), Failure> {
    let seed = ctx.seed()?;
    let d = io::load_dataset(data)?;
    let strategy = group.map_or(FlipStrategy::Uniform, FlipStrategy::TargetedGroup);
    let (poisoned, flips) = poison_label_flip(&d, rate, seed, &strategy)?;
    io::emit_dataset(ctx.out.as_deref(), &poisoned)?;
    if let Some(p) = ctx.sibling("flips.json") {
        io::write_json(&p, &flips)?;
    }
    Ok(())
}

fn metrics(
    ctx: &Ctx,
    data: &DataArgs,
    predictions: Option<&Path>,
    model: Option<&Path>,
) -> std::result::Result<(), Failure> {
    let d = io::load_dataset(data)?;
    let preds = match (predictions, model) {
        (Some(p), _) => io::read_predictions(p)?,
        (None, Some(m)) => classify(&load_model(m)?, &d, 0.5)?,
        (None, None) => return Err(Failure::Usage("pass --predictions or --model".into())),
    };
    let report = FairnessReport::compute(&preds, &d)?;
    ctx.emit(&format!("{}\n", report.to_json()))?;
    Ok(())
}

fn load_model(p: &Path) -> Result<Model> {
    Model::load(p).with_context(|| format!("loading model {}", p.display()))
}

fn train(
    ctx: &Ctx,
    data: &DataArgs,
    method: Method,
    validation: Option<&Path>,
    flips: Option<&Path>,
) -> std::result::Result<(), Failure> {
    let seed = ctx.seed()?;
    if method != Method::Frtrain && (validation.is_some() || flips.is_some()) {
        return Err(Failure::Usage(
            "--validation and --flips only apply to --method frtrain".into(),
        ));
    }
    let d = io::load_dataset(data)?;
    let mut tc = ctx.cfg.train.clone().unwrap_or_default();
    tc.seed = seed;
    let model = match method {
        Method::Vanilla => train_vanilla(&d, &tc)?,
        Method::Fairbatch => {
            let fcfg = ctx.cfg.fairbatch.clone().unwrap_or_default();
            let mut sampler = make_fairbatch_sampler(&d, &fcfg, seed)?;
            let model = train_sgd(&d, &tc, &mut sampler)?;
            if let Some(p) = ctx.sibling("lambda.csv") {
                io::write_plot(
                    &p,
                    Trace::Lambda(sampler.trajectory()),
                    PlotKind::LambdaPath,
                )?;
            }
            model
        }
        Method::Frtrain => {
            let Some(vpath) = validation else {
                return Err(Failure::Usage("--method frtrain needs --validation".into()));
            };
            let v = io::load_dataset(&DataArgs {
                data: vpath.to_path_buf(),
                schema: data.schema.clone(),
            })?;
            let mask: Option<Vec<usize>> = flips.map(io::read_json).transpose()?;
            let mut fcfg: FRConfig = ctx.cfg.frtrain.clone().unwrap_or_default();
            if let Some(t) = &ctx.cfg.train {
                fcfg.train = t.clone();
            }
            fcfg.train.seed = seed;
            let (model, diag) = train_frtrain_with_mask(&d, &v, &fcfg, mask.as_deref())?;
            if let Some(p) = ctx.sibling("diagnostics.csv") {
                let f = std::fs::File::create(&p)
                    .with_context(|| format!("creating {}", p.display()))?;
                diag.write_csv(f)?;
            }
            model
        }
    };
    let json = serde_json::to_string_pretty(&model).context("serializing model")?;
    ctx.emit(&format!("{json}\n"))?;
    if ctx.out.is_some() {
        let preds = classify(&model, &d, 0.5)?;
        println!("{}", FairnessReport::compute(&preds, &d)?.to_json());
    }
    Ok(())
}

fn tune(ctx: &Ctx, budget: f64, method: TuneMethod) -> std::result::Result<(), Failure> {
    let seed = ctx.seed()?;
    let sim = gen_slice_pool(&ctx.cfg.pool_params(), seed)?;
    let mut pcfg = ctx.cfg.tune.clone().unwrap_or_default();
    pcfg.seed = seed;
    pcfg.train.seed = seed;
    let mut provider = PoolProvider::new(&sim.pool, &sim.slices)?;
    let outcome = match method {
        TuneMethod::Planner => plan_acquisition(
            &sim.train,
            &sim.validation,
            &sim.slices,
            budget,
            &pcfg,
            &mut provider,
        )?,
        TuneMethod::Uniform | TuneMethod::Waterfilling => {
            let kind = if matches!(method, TuneMethod::Uniform) {
                Baseline::Uniform
            } else {
                Baseline::Waterfilling
            };
            run_baseline(
                kind,
                &sim.train,
                &sim.validation,
                &sim.slices,
                budget,
                &pcfg,
                &mut provider,
            )?
        }
    };
    ctx.emit(&format!("{}\n", outcome.trace.to_json()))?;
    if let Some(p) = ctx.sibling("curves.csv") {
        io::write_plot(&p, Trace::Plan(&outcome.trace), PlotKind::LearningCurve)?;
    }
    Ok(())
}

fn find_slices(
    ctx: &Ctx,
    data: &DataArgs,
    model: &Path,
    strategy: StrategyArg,
    table: bool,
) -> std::result::Result<(), Failure> {
    let d = io::load_dataset(data)?;
    let m = load_model(model)?;
    let scfg = ctx.cfg.find_slices.clone().unwrap_or_default();
    let strategy = match strategy {
        StrategyArg::Lattice => Strategy::Lattice,
        StrategyArg::Tree => Strategy::Tree,
    };
    let report = find_problematic(&d, &m, &scfg, strategy)?;
    if table {
        ctx.emit(&report.table())?;
    } else {
        ctx.emit(&format!("{}\n", report.to_json()))?;
    }
    Ok(())
}

fn clean(ctx: &Ctx, data: &DataArgs, preset: Preset) -> std::result::Result<(), Failure> {
    let d = io::load_dataset(data)?;
    let ccfg = ctx.cfg.clean.clone().unwrap_or_else(|| match preset {
        Preset::People => CleanConfig::people(),
        Preset::Default => CleanConfig::default(),
    });
    let (cleaned, report) = mlclean_pipeline(&d, &ccfg)?;
    match ctx.out.as_deref() {
        Some(p) => {
            io::emit_dataset(Some(p), &cleaned)?;
            std::fs::write(
                io::sibling(p, "report.json"),
                format!("{}\n", report.to_json()),
            )
            .context("writing cleaning report")?;
        }
        None => println!("{}", report.to_json()),
    }
    Ok(())
}

fn demo_fig2(ctx: &Ctx) -> std::result::Result<(), Failure> {
    let clean = fig2_fixture();
    let poisoned = poisoned_fig2_fixture();
    let eval = |c: &raikit::model::ThresholdClassifier, d| -> Result<(f64, f64)> {
        let preds = c.classify(d)?;
        Ok((accuracy(&preds, d, false)?, demographic_parity(&preds, d)?))
    };
    let best = fit_threshold_max_accuracy(&clean, "X")?;
    let fair = fit_threshold_fair(&clean, "X", 1.0)?;
    let fair_poisoned = fit_threshold_fair(&poisoned, "X", 1.0)?;
    let rows = [
        ("max-accuracy threshold, clean data", eval(&best, &clean)?),
        ("fair threshold, clean data", eval(&fair, &clean)?),
        (
            "fair threshold fit on poisoned data, evaluated on clean data",
            eval(&fair_poisoned, &clean)?,
        ),
    ];
    let mut text = String::new();
    for (name, (acc, dp)) in rows {
        text.push_str(&format!("{name}: accuracy {acc:.1}, DP {dp:.1}\n"));
    }
    ctx.emit(&text)?;
    Ok(())
}

fn demo_table1(ctx: &Ctx) -> std::result::Result<(), Failure> {
    let d = table1_fixture();
    let (cleaned, report) = mlclean_pipeline(&d, &CleanConfig::people())?;
    let mut t = String::new();
    let ids = |v: &[String]| v.join(", ");
    t.push_str(&format!(
        "input: {}\n",
        ids(&d
            .examples()
            .iter()
            .map(|e| e.id.clone())
            .collect::<Vec<_>>())
    ));
    for (k, c) in report.clusters.iter().enumerate() {
        t.push_str(&format!("cluster {k}: {}\n", ids(c)));
    }
    for x in &report.dropped {
        t.push_str(&format!("dropped {}: {}\n", x.id, x.reason));
    }
    for m in &report.merges {
        t.push_str(&format!(
            "merged {} -> {} (weight {})\n",
            ids(&m.inputs),
            m.merged_id,
            m.weight
        ));
    }
    for b in &report.blocked {
        t.push_str(&format!("not merged {}: {}\n", ids(&b.ids), b.reason));
    }
    if let Some(r) = &report.reweigh {
        for f in &r.factors {
            t.push_str(&format!(
                "reweigh (Z={}, Y={}): x{:.2}\n",
                f.group, f.label, f.factor
            ));
        }
        for (g, rate) in &r.rates_before {
            t.push_str(&format!("rate before {g}: {rate:.2}\n"));
        }
        for (g, rate) in &r.rates_after {
            t.push_str(&format!("rate after {g}: {rate:.2}\n"));
        }
    }
    for e in cleaned.examples() {
        t.push_str(&format!("final {} weight {}\n", e.id, e.weight));
    }
    ctx.emit(&t)?;
    Ok(())
}
