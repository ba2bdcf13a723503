use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use crpnn::bench::{run_bench, BenchProtocol};
use crpnn::datagen::{
    gen_random_polynomial, make_dataset, sample_sine_trajectory, uniform_inputs, Dataset,
};
use crpnn::training::{loss_mse, train_with, BatchSize, TrainConfig};
use crpnn::{expand_to_spectrum, CrpnnModel, Error, Matrix, NetworkSpec, Variant};

#[derive(Debug, Parser)]
#[command(
    name = "crpnn",
    version,
    about = "Polynomial neural networks with readable relation spectra"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a random polynomial target and a dataset sampled from it.
    Gen(GenArgs),
    /// Train a network on a dataset CSV.
    Train(TrainArgs),
    /// Evaluate a saved model on a dataset CSV.
    Eval(EvalArgs),
    /// Expand a saved model into its relation spectrum CSV.
    Spectrum(SpectrumArgs),
    /// Time forward passes and training epochs of both structures.
    Bench(BenchArgs),
    /// Train variants over a range of orders and seeds and tabulate final MSE.
    Compare(CompareArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum VariantArg {
    Crpnn1,
    Crpnn2,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Crpnn1 => Variant::Crpnn1,
            VariantArg::Crpnn2 => Variant::Crpnn2,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum InputKind {
    /// The five-sine trajectory over [t-start, t-end] (first n rows, n <= 5).
    Sine,
    /// Uniform in [-1, 1].
    Uniform,
}

#[derive(Debug, Args)]
struct GenArgs {
    /// Number of input variables.
    #[arg(long)]
    n: usize,
    /// Maximum total degree of the target polynomial.
    #[arg(long, default_value_t = 14)]
    degree: usize,
    /// Number of distinct monomials (items) in the target.
    #[arg(long)]
    items: usize,
    #[arg(long, default_value_t = -1.0, allow_negative_numbers = true)]
    coeff_low: f64,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    coeff_high: f64,
    /// Seed; falls back to $CRPNN_SEED, then 0.
    #[arg(long, env = "CRPNN_SEED", default_value_t = 0)]
    seed: u64,
    /// Target polynomial file (spectrum CSV).
    #[arg(long)]
    out: PathBuf,
    /// Dataset CSV sampled from the target.
    #[arg(long)]
    data_out: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    #[arg(long, value_enum, default_value_t = InputKind::Sine)]
    inputs: InputKind,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    t_start: f64,
    #[arg(long, default_value_t = 7.0, allow_negative_numbers = true)]
    t_end: f64,
}

#[derive(Debug, Args)]
struct TrainingFlags {
    /// Training epochs.
    #[arg(long, default_value_t = 2000)]
    epochs: usize,
    /// Learning rate.
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
    /// Minibatch size; full batch when omitted.
    #[arg(long)]
    batch_size: Option<usize>,
    /// Multiply the learning rate by this factor after every epoch.
    #[arg(long)]
    lr_decay: Option<f64>,
    /// Initial weights are uniform in (-scale, scale); default 1/sqrt(n+1).
    #[arg(long)]
    init_scale: Option<f64>,
}

impl TrainingFlags {
    fn config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.lr,
            epochs: self.epochs,
            batch_size: self.batch_size.map_or(BatchSize::Full, BatchSize::Fixed),
            seed,
            lr_decay: self.lr_decay,
        }
    }
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long, value_enum)]
    variant: VariantArg,
    /// Network order (maximum polynomial degree).
    #[arg(long)]
    order: usize,
    /// Dataset CSV.
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    training: TrainingFlags,
    /// Seed for initialization and shuffling; falls back to $CRPNN_SEED, then 0.
    #[arg(long, env = "CRPNN_SEED", default_value_t = 0)]
    seed: u64,
    /// Trained model (JSON).
    #[arg(long, default_value = "model.json")]
    model_out: PathBuf,
    /// Per-epoch metrics CSV (`epoch,mse`).
    #[arg(long)]
    metrics_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Per-sample predictions CSV (`t_index,actual,predicted`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SpectrumArgs {
    #[arg(long)]
    model: PathBuf,
    /// Spectrum CSV.
    #[arg(long)]
    out: PathBuf,
    /// Also print the polynomial of every output.
    #[arg(long)]
    print: bool,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Variants to time.
    #[arg(
        long,
        value_enum,
        value_delimiter = ',',
        default_value = "crpnn1,crpnn2"
    )]
    variants: Vec<VariantArg>,
    #[arg(long, default_value_t = 5)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    m: usize,
    #[arg(long, default_value_t = 14)]
    order: usize,
    #[arg(long, default_value_t = 5000)]
    samples: usize,
    #[arg(long, default_value_t = 1000)]
    forward_reps: usize,
    #[arg(long, default_value_t = 1000)]
    epochs: usize,
    #[arg(long, default_value_t = 10)]
    runs: usize,
    /// Learning rate of the timed epochs.
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, env = "CRPNN_SEED", default_value_t = 0)]
    seed: u64,
    /// Report file (JSON); printed to standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CompareArgs {
    /// Dataset CSV.
    #[arg(long)]
    data: PathBuf,
    #[arg(
        long,
        value_enum,
        value_delimiter = ',',
        default_value = "crpnn1,crpnn2"
    )]
    variants: Vec<VariantArg>,
    /// Orders as a range `7-14` or a list `7,10,14`.
    #[arg(long, default_value = "7-14", value_parser = parse_orders)]
    orders: Orders,
    /// Number of seeds per (variant, order); seeds run from --seed upward.
    #[arg(long, default_value_t = 10)]
    seeds: u64,
    #[arg(long, env = "CRPNN_SEED", default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    training: TrainingFlags,
    /// Results table (`variant,order,seed,final_mse,seconds`).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone)]
struct Orders(Vec<usize>);

fn parse_orders(s: &str) -> Result<Orders, String> {
    let bad = || format!("invalid order list {s:?}; use `7-14` or `7,10,14`");
    let orders: Vec<usize> = if let Some((a, b)) = s.split_once('-') {
        let (a, b): (usize, usize) = (
            a.trim().parse().map_err(|_| bad())?,
            b.trim().parse().map_err(|_| bad())?,
        );
        if a > b {
            return Err(bad());
        }
        (a..=b).collect()
    } else {
        s.split(',')
            .map(|p| p.trim().parse().map_err(|_| bad()))
            .collect::<Result<_, _>>()?
    };
    if orders.is_empty() || orders.contains(&0) {
        return Err(bad());
    }
    Ok(Orders(orders))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

/// Wraps an error with the file it came from.
#[derive(Debug)]
struct FileError {
    path: PathBuf,
    source: Error,
}

impl std::fmt::Display for FileError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.path.display(), self.source)
    }
}

enum CliError {
    File(FileError),
    Other(Error),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::File(e) => e.fmt(f),
            CliError::Other(e) => e.fmt(f),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Other(e)
    }
}

fn at(path: &Path) -> impl FnOnce(Error) -> CliError + '_ {
    move |source| {
        CliError::File(FileError {
            path: path.to_owned(),
            source,
        })
    }
}

fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| at(path)(e.into()))
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| at(path)(e.into()))
}

fn load_dataset(path: &Path) -> Result<Dataset, CliError> {
    Dataset::from_csv(&read(path)?).map_err(at(path))
}

fn load_model(path: &Path) -> Result<CrpnnModel, CliError> {
    let bytes = read(path)?;
    let text =
        String::from_utf8(bytes).map_err(|_| at(path)(Error::Document("not UTF-8".into())))?;
    CrpnnModel::load_model(&text).map_err(at(path))
}

fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Gen(a) => gen(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval(a),
        Command::Spectrum(a) => spectrum(a),
        Command::Bench(a) => bench(a),
        Command::Compare(a) => compare(a),
    }
}

fn gen(a: GenArgs) -> Result<(), CliError> {
    let target = gen_random_polynomial(a.n, a.degree, a.items, a.coeff_low, a.coeff_high, a.seed)?;
    write(&a.out, &target.spectrum.to_csv())?;
    if let Some(path) = &a.data_out {
        let inputs = match a.inputs {
            InputKind::Sine => {
                if a.n > 5 {
                    return Err(Error::InvalidArgument(format!(
                        "the sine trajectory defines 5 inputs, n = {}; use --inputs uniform",
                        a.n
                    ))
                    .into());
                }
                let all = sample_sine_trajectory(a.samples, a.t_start, a.t_end)?;
                Matrix::from_fn(a.n, a.samples, |r, k| all.get(r, k))
            }
            InputKind::Uniform => uniform_inputs(a.n, a.samples, a.seed),
        };
        let data = make_dataset(&target.spectrum, &inputs)?;
        write(path, &data.to_csv())?;
    }
    Ok(())
}

fn train_cmd(a: TrainArgs) -> Result<(), CliError> {
    let data = load_dataset(&a.data)?;
    let spec = NetworkSpec::new(a.variant.into(), data.n(), data.m(), a.order)?;
    let model = CrpnnModel::init_weights(spec, a.seed, a.training.init_scale)?;
    let config = a.training.config(a.seed);

    let mut metrics = match &a.metrics_out {
        Some(path) => {
            let file = fs::File::create(path).map_err(|e| at(path)(e.into()))?;
            let mut w = BufWriter::new(file);
            writeln!(w, "epoch,mse").map_err(Error::from)?;
            Some(w)
        }
        None => None,
    };
    let result = train_with(model, &data, &config, |epoch, mse| {
        if let Some(w) = metrics.as_mut() {
            writeln!(w, "{epoch},{mse:?}")?;
        }
        Ok(())
    });
    if let Some(mut w) = metrics {
        w.flush().map_err(Error::from)?;
    }
    let (model, record) = result?;
    write(&a.model_out, &model.save_model())?;
    println!(
        "final_mse={:?} epochs={}",
        record.final_mse, record.epochs_run
    );
    Ok(())
}

fn eval(a: EvalArgs) -> Result<(), CliError> {
    let model = load_model(&a.model)?;
    let data = load_dataset(&a.data)?;
    let predictions = model.predict_batch(data.inputs())?;
    let mse = loss_mse(&predictions, data.targets())?;
    if let Some(path) = &a.out {
        let m = data.m();
        let mut out = String::from("t_index");
        if m == 1 {
            out.push_str(",actual,predicted");
        } else {
            for i in 1..=m {
                out.push_str(&format!(",actual_{i},predicted_{i}"));
            }
        }
        out.push('\n');
        for k in 0..data.len() {
            out.push_str(&k.to_string());
            for i in 0..m {
                out.push_str(&format!(
                    ",{:?},{:?}",
                    data.targets().get(i, k),
                    predictions.get(i, k)
                ));
            }
            out.push('\n');
        }
        write(path, &out)?;
    }
    println!("mse={mse:?}");
    Ok(())
}

fn spectrum(a: SpectrumArgs) -> Result<(), CliError> {
    let model = load_model(&a.model)?;
    let s = expand_to_spectrum(&model)?;
    write(&a.out, &s.to_csv())?;
    if a.print {
        for i in 0..s.m() {
            println!("y{} = {}", i + 1, s.render(i));
        }
    }
    Ok(())
}

fn bench(a: BenchArgs) -> Result<(), CliError> {
    let protocol = BenchProtocol {
        variants: a.variants.into_iter().map(Variant::from).collect(),
        n: a.n,
        m: a.m,
        order: a.order,
        samples: a.samples,
        forward_reps: a.forward_reps,
        epochs: a.epochs,
        runs: a.runs,
        seed: a.seed,
        learning_rate: a.lr,
    };
    let report = run_bench(&protocol)?;
    let json = report.to_json();
    match &a.out {
        Some(path) => write(path, &json)?,
        None => print!("{json}"),
    }
    Ok(())
}

fn compare(a: CompareArgs) -> Result<(), CliError> {
    let data = load_dataset(&a.data)?;
    let mut cells = Vec::new();
    for &v in &a.variants {
        let variant = Variant::from(v);
        for &order in &a.orders.0 {
            // Validate every topology before spending time training.
            NetworkSpec::new(variant, data.n(), data.m(), order)?;
            for seed in a.seed..a.seed + a.seeds {
                cells.push((variant, order, seed));
            }
        }
    }
    let rows: Vec<Result<String, Error>> = cells
        .par_iter()
        .map(|&(variant, order, seed)| {
            let spec = NetworkSpec::new(variant, data.n(), data.m(), order)?;
            let model = CrpnnModel::init_weights(spec, seed, a.training.init_scale)?;
            let start = std::time::Instant::now();
            let mse = match crpnn::train(model, &data, &a.training.config(seed)) {
                Ok((_, record)) => record.final_mse,
                Err(Error::Diverged { .. } | Error::Overflow { .. }) => f64::INFINITY,
                Err(e) => return Err(e),
            };
            let seconds = start.elapsed().as_secs_f64();
            Ok(format!("{variant},{order},{seed},{mse:?},{seconds:?}\n"))
        })
        .collect();
    let mut out = String::from("variant,order,seed,final_mse,seconds\n");
    for row in rows {
        out.push_str(&row?);
    }
    write(&a.out, &out)
}
