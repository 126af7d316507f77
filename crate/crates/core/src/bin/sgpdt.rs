use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use sgpdt::bench::{format_suite_table, run_suite, run_trial, RunConfig, Variant};
use sgpdt::data::{
    gen_uball5d, load_csv, load_csv_features, write_csv, Dataset, SplitSpec, TargetColumn,
    UBALL5D_DEFAULT_N,
};
use sgpdt::error::{Error, Result};
use sgpdt::expr::EvalCounter;
use sgpdt::FinalModel;

#[derive(Parser)]
#[command(name = "sgpdt", about = "Symbolic regression by residual-chained GP runs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single trial on a CSV dataset.
    Run(RunArgs),
    /// Run a multi-trial suite described by a spec file.
    Suite(SuiteArgs),
    /// Generate a synthetic benchmark dataset as CSV.
    Gen(GenArgs),
    /// Predict with a saved model on new feature rows.
    Predict(PredictArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Input CSV (optional single header row).
    #[arg(long)]
    data: PathBuf,
    /// Target column, by header name or zero-based index.
    #[arg(long)]
    target: String,
    #[arg(long, value_enum, default_value = "sgpdt")]
    variant: Variant,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1000)]
    pop: usize,
    #[arg(long = "next", default_value_t = 20)]
    n_ext: usize,
    #[arg(long = "nint", default_value_t = 50)]
    n_int: usize,
    #[arg(long, default_value_t = 4)]
    tournament: usize,
    #[arg(long, default_value_t = 20)]
    window: usize,
    #[arg(long = "test-frac", default_value_t = 0.25)]
    test_frac: f64,
    #[arg(long = "val-frac", default_value_t = 0.10)]
    val_frac: f64,
    /// Trial report JSON output path.
    #[arg(long)]
    out: PathBuf,
    /// Optional per-generation trace CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Optional final model JSON.
    #[arg(long)]
    model: Option<PathBuf>,
}

#[derive(Args)]
struct SuiteArgs {
    /// Suite spec JSON (datasets plus config overrides).
    #[arg(long)]
    spec: PathBuf,
    #[arg(long, default_value_t = 50)]
    trials: usize,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Aggregate results JSON output path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GenArgs {
    /// Generator name (currently: uball5d).
    dataset: String,
    #[arg(long, default_value_t = UBALL5D_DEFAULT_N)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    /// Model JSON produced by `sgpdt run --model`.
    #[arg(long)]
    model: PathBuf,
    /// Feature CSV; every column is a feature, in training order.
    #[arg(long)]
    data: PathBuf,
    /// Output CSV of predictions.
    #[arg(long)]
    out: PathBuf,
}

/// Suite spec file schema.
#[derive(Deserialize)]
struct SuiteSpec {
    datasets: Vec<DatasetSpec>,
    #[serde(default)]
    config: RunConfig,
}

#[derive(Deserialize)]
struct DatasetSpec {
    name: String,
    #[serde(default)]
    csv: Option<PathBuf>,
    #[serde(default)]
    target: Option<String>,
    #[serde(default)]
    generate: Option<GenerateSpec>,
}

#[derive(Deserialize)]
struct GenerateSpec {
    kind: String,
    n: usize,
    #[serde(default)]
    seed: u64,
}

fn write_file(path: &PathBuf, content: &str) -> Result<()> {
    fs::write(path, content)
        .map_err(|e| Error::data(format!("cannot write {}: {e}", path.display())))
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let data = load_csv(&args.data, &TargetColumn::from_arg(&args.target))?;
    let cfg = RunConfig {
        variant: args.variant,
        pop_size: args.pop,
        n_ext: args.n_ext,
        n_int: args.n_int,
        tournament_k: args.tournament,
        rolling_window: args.window,
        seed: args.seed,
        split: SplitSpec {
            test_fraction: args.test_frac,
            val_fraction_of_train: args.val_frac,
        },
        ..RunConfig::default()
    };
    let output = run_trial(&data, &cfg)?;

    let mut report_json =
        serde_json::to_string_pretty(&output.report).expect("report serializes");
    report_json.push('\n');
    write_file(&args.out, &report_json)?;

    if let Some(path) = &args.trace {
        let mut csv = String::from("index,ext_iter,int_iter,train_fitness,val_mse,smoothed_val_mse\n");
        for (idx, model) in output.chain.models.iter().enumerate() {
            csv.push_str(&format!(
                "{},{},{},{},{},{}\n",
                idx,
                model.ext_iter,
                model.int_iter,
                model.train_fitness,
                output.trace.val_mse[idx],
                output.trace.smoothed_val_mse[idx]
            ));
        }
        write_file(path, &csv)?;
    }
    if let Some(path) = &args.model {
        let mut json = output.model.to_json();
        json.push('\n');
        write_file(path, &json)?;
    }
    eprintln!(
        "{}: test RMSE {:.6}, {} node ops, model size {}",
        data.name, output.report.test_rmse, output.report.node_ops, output.report.final_model_size
    );
    Ok(())
}

fn load_suite_dataset(spec: &DatasetSpec) -> Result<Dataset> {
    match (&spec.csv, &spec.generate) {
        (Some(path), None) => {
            let target = spec.target.as_deref().ok_or_else(|| {
                Error::config(format!("dataset '{}' needs a target column", spec.name))
            })?;
            let mut data = load_csv(path, &TargetColumn::from_arg(target))?;
            data.name = spec.name.clone();
            Ok(data)
        }
        (None, Some(generate)) => {
            if generate.kind != "uball5d" {
                return Err(Error::config(format!(
                    "unknown generator '{}' for dataset '{}'",
                    generate.kind, spec.name
                )));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(generate.seed);
            let mut data = gen_uball5d(generate.n, &mut rng);
            data.name = spec.name.clone();
            Ok(data)
        }
        _ => Err(Error::config(format!(
            "dataset '{}' must specify exactly one of 'csv' or 'generate'",
            spec.name
        ))),
    }
}

fn cmd_suite(args: SuiteArgs) -> Result<()> {
    let text = fs::read_to_string(&args.spec)
        .map_err(|e| Error::config(format!("cannot read {}: {e}", args.spec.display())))?;
    let spec: SuiteSpec = serde_json::from_str(&text)
        .map_err(|e| Error::config(format!("invalid suite spec: {e}")))?;
    let datasets = spec
        .datasets
        .iter()
        .map(load_suite_dataset)
        .collect::<Result<Vec<_>>>()?;
    let report = run_suite(&datasets, &spec.config, args.trials, args.jobs)?;
    let mut json = serde_json::to_string_pretty(&report).expect("suite report serializes");
    json.push('\n');
    write_file(&args.out, &json)?;
    print!("{}", format_suite_table(&report));
    Ok(())
}

fn cmd_gen(args: GenArgs) -> Result<()> {
    if args.dataset != "uball5d" {
        return Err(Error::config(format!(
            "unknown generator '{}' (available: uball5d)",
            args.dataset
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let data = gen_uball5d(args.n, &mut rng);
    write_csv(&data, &args.out)?;
    eprintln!("wrote {} rows to {}", data.n(), args.out.display());
    Ok(())
}

fn cmd_predict(args: PredictArgs) -> Result<()> {
    let text = fs::read_to_string(&args.model)
        .map_err(|e| Error::data(format!("cannot read {}: {e}", args.model.display())))?;
    let model = FinalModel::from_json(&text)?;
    let features = load_csv_features(&args.data)?;
    let counter = EvalCounter::new();
    let preds = model.predict(&features, &counter)?;
    let mut csv = String::from("prediction\n");
    for p in preds {
        csv.push_str(&format!("{p}\n"));
    }
    write_file(&args.out, &csv)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Suite(args) => cmd_suite(args),
        Command::Gen(args) => cmd_gen(args),
        Command::Predict(args) => cmd_predict(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
