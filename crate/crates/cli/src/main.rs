use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use apkseq::bench::{bench_predict, BenchRecord, DEFAULT_LENGTHS};
use apkseq::engine::{encode_weights, load_weights, quantize_weights, Architecture, Label, ModelWeights, PredictMode};
use apkseq::features::{
    assemble_filtered_sequence, encode_and_fit, format_ids, remove_repetitive, FeatureKind, FitMode, LookupTable,
    DEFAULT_MAX_LEN,
};
use apkseq::scan::{extract_apk, Detector, ScanReport};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

#[derive(Parser)]
#[command(name = "apkseq", version, about = "Sequence-based Android malware scanner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Dictionary and lookup-table tools.
    #[command(subcommand)]
    Dict(DictCommand),
    /// Print the tokens extracted from an APK.
    Extract(ExtractArgs),
    /// Classify APKs; one JSON record per APK on stdout.
    Scan(ScanArgs),
    /// Benchmarks.
    #[command(subcommand)]
    Bench(BenchCommand),
    /// Convert a model to 16-bit storage with a fixed input length.
    Quantize(QuantizeArgs),
    /// Write a model with seeded random weights.
    InitModel(InitModelArgs),
}

#[derive(Subcommand)]
enum DictCommand {
    /// Validate dictionaries and write the id table.
    Build {
        #[arg(long)]
        dicts: PathBuf,
        /// Output file; stdout if omitted.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Show dictionary sizes and id ranges, or look up ids and tokens.
    Inspect {
        #[arg(long)]
        dicts: PathBuf,
        #[arg(long)]
        id: Vec<u32>,
        #[arg(long)]
        token: Vec<String>,
    },
}

#[derive(Args)]
struct ExtractArgs {
    apk: PathBuf,
    /// Print the encoded id sequence instead of raw tokens.
    #[arg(long)]
    dicts: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_MAX_LEN)]
    max_len: usize,
    /// Prefix the id line with a class label (0 benign, 1 malicious).
    #[arg(long, requires = "dicts", value_parser = clap::value_parser!(u8).range(0..=1))]
    label: Option<u8>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Dynamic,
    Fixed,
}

impl From<Mode> for PredictMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Dynamic => PredictMode::Dynamic,
            Mode::Fixed => PredictMode::Fixed,
        }
    }
}

#[derive(Args)]
struct ScanArgs {
    #[arg(required = true)]
    apks: Vec<PathBuf>,
    #[arg(long)]
    dicts: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_enum, default_value = "dynamic")]
    mode: Mode,
    /// Length limit for dynamic mode; fixed mode uses the model's length.
    #[arg(long, default_value_t = DEFAULT_MAX_LEN)]
    max_len: usize,
    /// APKs scanned in parallel.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Subcommand)]
enum BenchCommand {
    /// Time forward passes on random sequences; CSV on stdout.
    Predict(BenchArgs),
}

#[derive(Args)]
struct BenchArgs {
    /// Model file; a seeded random model is used if omitted.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Vocabulary of the random model.
    #[arg(long, default_value_t = 2875, conflicts_with = "model")]
    vocab: usize,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_LENGTHS)]
    lengths: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    trials: usize,
    /// Also time a 16-bit fixed-length copy of the model.
    #[arg(long)]
    compare_fixed: bool,
    #[arg(long, default_value_t = DEFAULT_MAX_LEN)]
    fixed_length: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct QuantizeArgs {
    input: PathBuf,
    output: PathBuf,
    #[arg(long)]
    length: usize,
}

#[derive(Args)]
struct InitModelArgs {
    output: PathBuf,
    /// Size the vocabulary to match these dictionaries.
    #[arg(long, conflicts_with = "vocab")]
    dicts: Option<PathBuf>,
    #[arg(long)]
    vocab: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Weights are drawn uniformly from [-scale, scale].
    #[arg(long, default_value_t = 0.1)]
    scale: f32,
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("reading {}", path.display()))
}

fn load_table(dir: &Path) -> Result<LookupTable> {
    LookupTable::load_dir(dir).with_context(|| format!("loading dictionaries from {}", dir.display()))
}

fn load_model(path: &Path) -> Result<ModelWeights> {
    load_weights(&read(path)?).with_context(|| format!("loading model {}", path.display()))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn dict(cmd: DictCommand) -> Result<ExitCode> {
    match cmd {
        DictCommand::Build { dicts, out } => {
            let table = load_table(&dicts)?;
            match out {
                Some(path) => write_file(&path, table.dump().as_bytes())?,
                None => io::stdout().write_all(table.dump().as_bytes())?,
            }
            eprintln!("vocabulary size {}", table.vocab_size());
        }
        DictCommand::Inspect { dicts, id, token } => {
            let table = load_table(&dicts)?;
            for kind in FeatureKind::ALL {
                let r = table.id_range(kind);
                println!("{kind}\t{}\t{}..={}", table.dictionary(kind).len(), r.start(), r.end());
            }
            println!("vocab_size\t{}", table.vocab_size());
            for i in id {
                match table.decode(i) {
                    Some(f) => println!("{i}\t{f}"),
                    None => println!("{i}\t-"),
                }
            }
            for t in token {
                let hits: Vec<String> = FeatureKind::ALL
                    .iter()
                    .filter_map(|&k| table.id(k, &t).map(|i| format!("{i}\t{k}")))
                    .collect();
                if hits.is_empty() {
                    println!("-\t{t}");
                }
                for h in hits {
                    println!("{h}\t{t}");
                }
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn extract(args: ExtractArgs) -> Result<ExitCode> {
    let features = extract_apk(&read(&args.apk)?)?;
    for (entry, w) in &features.warnings {
        log::warn!("{entry}: method {} skipped at pc {}: {}", w.method_idx, w.pc, w.error);
    }
    let mut out = io::stdout().lock();
    match args.dicts {
        None => {
            out.write_all(features.manifest.dump().as_bytes())?;
            for t in &features.code {
                writeln!(out, "{t}")?;
            }
        }
        Some(dir) => {
            let table = load_table(&dir)?;
            let seq = remove_repetitive(&assemble_filtered_sequence(&features.manifest, &features.code, &table));
            let encoded = encode_and_fit(&seq, &table, args.max_len, FitMode::TruncateOnly)?;
            writeln!(out, "{}", format_ids(&encoded.ids, args.label))?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn scan(args: ScanArgs) -> Result<ExitCode> {
    let table = load_table(&args.dicts)?;
    let weights = load_model(&args.model)?;
    let detector = Detector::new(table, weights, args.mode.into(), args.max_len)?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(args.jobs.max(1)).build()?;
    let results: Vec<(String, Result<ScanReport>)> = pool.install(|| {
        args.apks
            .par_iter()
            .map(|path| {
                let name = path.display().to_string();
                let report = read(path).and_then(|bytes| Ok(detector.scan(&name, &bytes)?));
                (name, report)
            })
            .collect()
    });

    let mut out = io::stdout().lock();
    let (mut errors, mut malicious) = (0, 0);
    for (name, result) in results {
        match result {
            Ok(report) => {
                writeln!(out, "{}", serde_json::to_string(&report)?)?;
                eprintln!(
                    "{name}: {} (p_malicious = {:.4}, {} tokens)",
                    report.verdict, report.probabilities[1], report.seq_len_used
                );
                malicious += (report.verdict == Label::Malicious) as usize;
            }
            Err(e) => {
                errors += 1;
                eprintln!("{name}: error: {e:#}");
            }
        }
    }
    Ok(ExitCode::from(if errors > 0 {
        2
    } else if malicious > 0 {
        1
    } else {
        0
    }))
}

fn bench(cmd: BenchCommand) -> Result<ExitCode> {
    let BenchCommand::Predict(args) = cmd;
    let model = match &args.model {
        Some(path) => load_model(path)?,
        None => ModelWeights::random(Architecture::STANDARD, args.vocab, args.seed, 0.1),
    };
    let mut records = Vec::new();
    if model.fixed_length.is_some() {
        records.extend(bench_predict(
            &model,
            PredictMode::Fixed,
            "fixed",
            &args.lengths,
            args.trials,
            args.seed,
        )?);
    } else {
        records.extend(bench_predict(
            &model,
            PredictMode::Dynamic,
            "dynamic",
            &args.lengths,
            args.trials,
            args.seed,
        )?);
        if args.compare_fixed {
            let q = quantize_weights(&model, args.fixed_length)?;
            let label = format!("fixed{}", args.fixed_length);
            records.extend(bench_predict(
                &q,
                PredictMode::Fixed,
                &label,
                &args.lengths,
                args.trials,
                args.seed,
            )?);
        }
    }
    let mut out = io::stdout().lock();
    writeln!(out, "{}", BenchRecord::CSV_HEADER)?;
    for r in &records {
        writeln!(out, "{}", r.to_csv())?;
    }
    Ok(ExitCode::SUCCESS)
}

fn quantize(args: QuantizeArgs) -> Result<ExitCode> {
    let input = read(&args.input)?;
    let model = load_weights(&input).with_context(|| format!("loading model {}", args.input.display()))?;
    let q = quantize_weights(&model, args.length)?;
    let bytes = encode_weights(&q);
    write_file(&args.output, &bytes)?;
    eprintln!(
        "{} bytes -> {} bytes ({:.1}%), fixed length {}",
        input.len(),
        bytes.len(),
        100.0 * bytes.len() as f64 / input.len() as f64,
        args.length
    );
    Ok(ExitCode::SUCCESS)
}

fn init_model(args: InitModelArgs) -> Result<ExitCode> {
    let vocab = match (&args.dicts, args.vocab) {
        (Some(dir), _) => load_table(dir)?.vocab_size(),
        (None, Some(v)) => v,
        (None, None) => bail!("either --dicts or --vocab is required"),
    };
    if vocab < 2 {
        bail!("vocabulary must have at least 2 ids");
    }
    let w = ModelWeights::random(Architecture::STANDARD, vocab, args.seed, args.scale);
    write_file(&args.output, &encode_weights(&w))?;
    eprintln!("wrote {} parameters, vocabulary {vocab}", w.parameter_count());
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Dict(c) => dict(c),
        Command::Extract(a) => extract(a),
        Command::Scan(a) => scan(a),
        Command::Bench(c) => bench(c),
        Command::Quantize(a) => quantize(a),
        Command::InitModel(a) => init_model(a),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        ExitCode::from(2)
    })
}
