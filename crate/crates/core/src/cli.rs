//! The `a3t` command line.
//!
//! Exit codes: 0 on success, 2 for configuration problems (bad flags, spec or resource
//! errors), 3 for data problems (unreadable datasets, checkpoints or inputs).

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::abstraction::abstract_space;
use crate::attack::{hotflip_beam, DEFAULT_SPACE_BUDGET};
use crate::data::{load_dataset, load_embeddings, Dataset};
use crate::dsl::{load_spec_file, Alphabet, ResourceTables, TransformSpec};
use crate::error::{Error, Result};
use crate::eval::{certify, run_report, Certificate, EvalConfig};
use crate::nn::{load_model, save_model, ArchConfig, Model};
use crate::perturb::{count_distinct, count_plans, enumerate_space, sample_sequential_with};
use crate::train::{parse_assignment, train, training_vocabulary, LambdaSchedule, Mode, TrainConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "a3t", version, about = "Perturbation spaces, abstraction and robust training for text classifiers")]
pub struct Cli {
    /// Perturbation spec file (TOML).
    #[arg(long, global = true)]
    pub spec: Option<PathBuf>,
    /// Directory of extra resources: `*.tsv` tables and `*.txt` classes, named by file stem.
    #[arg(long, global = true)]
    pub resources: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; 0 lets the runtime decide.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    /// Only consider matches ending within the first N tokens.
    #[arg(long, global = true)]
    pub prefix_len: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print every string of the perturbation space, one per line.
    Enumerate {
        #[arg(long)]
        input: String,
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Count match plans and, for small spaces, distinct strings.
    Count {
        #[arg(long)]
        input: String,
        #[arg(long, default_value_t = 100_000)]
        distinct_limit: usize,
    },
    /// Draw strings by applying each rule in turn with a uniformly chosen plan.
    Sample {
        #[arg(long)]
        input: String,
        #[arg(long, default_value_t = 10)]
        samples: usize,
    },
    /// Print the embedding-space interval box of the perturbation space.
    Abstract {
        #[arg(long)]
        input: String,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Certify each example by interval bounds, falling back to enumeration.
    Certify {
        #[command(flatten)]
        target: Target,
        #[arg(long, default_value_t = DEFAULT_SPACE_BUDGET)]
        budget: usize,
    },
    /// Run the beam attack on each example.
    Attack {
        #[command(flatten)]
        target: Target,
        #[arg(long, default_value_t = 10)]
        beam_k: usize,
    },
    /// Train a model and write its checkpoint.
    Train(TrainArgs),
    /// Normal, beam-attack and exhaustive accuracy with per-example verdicts.
    Eval {
        #[command(flatten)]
        target: Target,
        #[arg(long, default_value_t = 10)]
        beam_k: usize,
        #[arg(long, default_value_t = DEFAULT_SPACE_BUDGET)]
        budget: usize,
        /// Write the machine-readable report (JSON) here.
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct Target {
    #[arg(long)]
    pub model: PathBuf,
    /// `label<TAB>text` file.
    #[arg(long)]
    pub data: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub val: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "a3t-hotflip")]
    pub mode: Mode,
    /// Rule assignment such as `SwapPair=aug,SubAdj=abs`; unlisted rules keep the default.
    #[arg(long, default_value = "")]
    pub split: String,
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    /// Final λ.
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    /// Fraction of the epochs over which λ ramps up from 0.
    #[arg(long, default_value_t = 0.5)]
    pub lambda_warm: f64,
    #[arg(long, default_value_t = 2)]
    pub augment_k: usize,
    #[arg(long, default_value_t = 2)]
    pub beam_k: usize,
    #[arg(long, default_value_t = 5)]
    pub patience: usize,
    /// Write the per-epoch log here as well as to standard output.
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    pub classes: usize,
    #[arg(long, default_value_t = 64)]
    pub max_len: usize,
    #[arg(long, default_value_t = 32)]
    pub embed_dim: usize,
    #[arg(long, default_value_t = 16)]
    pub kernels: usize,
    #[arg(long, default_value_t = 5)]
    pub width: usize,
    #[arg(long, default_value_t = 5)]
    pub pool: usize,
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Vec<usize>,
    /// Pre-trained embeddings (`token v1 v2 ...` per line); kept frozen.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
}

/// Parses `args` (including the program name), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build() {
        Ok(pool) => pool,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let stdout = std::io::stdout();
    match pool.install(|| execute(&cli, &mut stdout.lock())) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(error: &Error) -> i32 {
    if error.is_config_error() {
        EXIT_CONFIG
    } else {
        EXIT_DATA
    }
}

/// Anything that goes wrong while reading the spec or its resources is a configuration
/// error, including unreadable files.
fn as_config(e: Error) -> Error {
    if e.is_config_error() {
        e
    } else {
        Error::Config(e.to_string())
    }
}

fn load_spec(cli: &Cli) -> Result<TransformSpec> {
    let path = cli
        .spec
        .as_ref()
        .ok_or_else(|| Error::Config("this command needs --spec".into()))?;
    let mut resources = ResourceTables::shipped();
    if let Some(dir) = &cli.resources {
        resources.load_dir(dir).map_err(as_config)?;
    }
    let (spec, _) = load_spec_file(path, &resources).map_err(as_config)?;
    Ok(match cli.prefix_len {
        Some(n) => spec.with_prefix_len(Some(n)),
        None => spec,
    })
}

fn write_io(out: &mut dyn Write, text: std::fmt::Arguments<'_>) -> Result<()> {
    out.write_fmt(text).map_err(|e| Error::io("<stdout>", e))
}

macro_rules! say {
    ($out:expr, $($arg:tt)*) => {
        write_io($out, format_args!("{}\n", format_args!($($arg)*)))
    };
}

fn load_target(target: &Target, alphabet: Alphabet) -> Result<(Model, Dataset)> {
    let model = load_model(&target.model, None)?;
    if model.alphabet != alphabet {
        return Err(Error::Config(format!(
            "model works on {} tokens, spec on {}",
            model.alphabet.as_str(),
            alphabet.as_str()
        )));
    }
    let data = load_dataset(&target.data, alphabet, model.classes, model.max_len)?;
    Ok((model, data))
}

pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    let spec = load_spec(cli)?;
    let alphabet = spec.alphabet();
    match &cli.command {
        Command::Enumerate { input, limit } => {
            let x = alphabet.tokenize(input);
            for z in enumerate_space(&spec, &x, *limit) {
                say!(out, "{}", z.to_text(alphabet))?;
            }
        }
        Command::Count { input, distinct_limit } => {
            let x = alphabet.tokenize(input);
            say!(out, "plans\t{}", count_plans(&spec, &x)?)?;
            match count_distinct(&spec, &x, *distinct_limit) {
                Some(n) => say!(out, "distinct\t{n}")?,
                None => say!(out, "distinct\t>{distinct_limit}")?,
            }
        }
        Command::Sample { input, samples } => {
            let x = alphabet.tokenize(input);
            let mut rng = ChaCha8Rng::seed_from_u64(cli.seed);
            for _ in 0..*samples {
                say!(out, "{}", sample_sequential_with(&spec, &x, &mut rng).to_text(alphabet))?;
            }
        }
        Command::Abstract { input, model, json } => {
            let model = load_model(model, None)?;
            let x = alphabet.tokenize(input);
            let b = abstract_space(&spec, &x, &model.vocab, &model.embedding)?;
            if *json {
                let value = serde_json::json!({
                    "tokens": x.iter().collect::<Vec<_>>(),
                    "dim": b.dim,
                    "lower": (0..b.positions).map(|p| &b.lower[p * b.dim..(p + 1) * b.dim]).collect::<Vec<_>>(),
                    "upper": (0..b.positions).map(|p| &b.upper[p * b.dim..(p + 1) * b.dim]).collect::<Vec<_>>(),
                });
                say!(out, "{value}")?;
            } else {
                for p in 0..b.positions {
                    let cells: Vec<String> = (0..b.dim)
                        .map(|k| format!("[{:.6}, {:.6}]", b.lower_at(p, k), b.upper_at(p, k)))
                        .collect();
                    say!(out, "{p}\t{}\t{}", x[p], cells.join(" "))?;
                }
            }
        }
        Command::Certify { target, budget } => {
            let (model, data) = load_target(target, alphabet)?;
            let mut certified = 0;
            for (i, e) in data.iter().enumerate() {
                let c = certify(&model, &spec, &e.tokens, e.label, *budget)?;
                let text = e.tokens.to_text(alphabet);
                match &c {
                    Certificate::Refuted { witness } => {
                        say!(out, "{i}\t{c}\t{text}\t{}", witness.to_text(alphabet))?
                    }
                    Certificate::Certified => {
                        certified += 1;
                        say!(out, "{i}\t{c}\t{text}")?
                    }
                    Certificate::Unknown => say!(out, "{i}\t{c}\t{text}")?,
                }
            }
            say!(out, "certified\t{certified}/{}", data.len())?;
        }
        Command::Attack { target, beam_k } => {
            let (model, data) = load_target(target, alphabet)?;
            let mut survived = 0;
            say!(out, "index\tlabel\tflipped\tloss_before\tloss_after\toriginal\tworst")?;
            for (i, e) in data.iter().enumerate() {
                let r = hotflip_beam(&model, &spec, &e.tokens, e.label, *beam_k)?;
                let flipped = model.predict(&e.tokens) != e.label
                    || r.candidates.iter().any(|c| model.predict(&c.tokens) != e.label);
                if !flipped {
                    survived += 1;
                }
                say!(
                    out,
                    "{i}\t{}\t{flipped}\t{:.6}\t{:.6}\t{}\t{}",
                    e.label,
                    model.loss(&e.tokens, e.label),
                    r.worst().loss,
                    e.tokens.to_text(alphabet),
                    r.worst().tokens.to_text(alphabet)
                )?;
            }
            say!(out, "hotflip_accuracy\t{:.4}", survived as f64 / data.len() as f64)?;
        }
        Command::Train(args) => run_train(cli, spec, args, out)?,
        Command::Eval {
            target,
            beam_k,
            budget,
            report,
        } => {
            let (model, data) = load_target(target, alphabet)?;
            let config = EvalConfig {
                beam_k: *beam_k,
                space_budget: *budget,
                seed: cli.seed,
                ..EvalConfig::default()
            };
            let r = run_report(&model, &spec, &data, &config)?;
            write_io(out, format_args!("{}", r.table()))?;
            if let Some(path) = report {
                write_file(path, &r.to_json())?;
            }
        }
    }
    Ok(())
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn run_train(cli: &Cli, spec: TransformSpec, args: &TrainArgs, out: &mut dyn Write) -> Result<()> {
    let alphabet = spec.alphabet();
    let train_set = load_dataset(&args.data, alphabet, args.classes, args.max_len)?;
    let val_set = load_dataset(&args.val, alphabet, args.classes, args.max_len)?;

    let mut config = TrainConfig::new(args.mode, spec);
    config.assignment = parse_assignment(&config.spec, &args.split)?;
    config.epochs = args.epochs;
    config.batch_size = args.batch;
    config.lr = args.lr;
    config.lambda = LambdaSchedule {
        start: 0.0,
        end: args.lambda,
        warm_fraction: args.lambda_warm,
    };
    config.augment_k = args.augment_k;
    config.beam_k = args.beam_k;
    config.seed = cli.seed;
    config.patience = args.patience;
    config.validate()?;

    let arch = ArchConfig {
        embed_dim: args.embed_dim,
        kernels: args.kernels,
        width: args.width,
        pool: args.pool,
        hidden: args.hidden.clone(),
    };
    let vocab = training_vocabulary(&config.spec, [&train_set, &val_set]);
    let model = match &args.embeddings {
        Some(path) => {
            let table = load_embeddings(path, &vocab, cli.seed)?;
            let arch = ArchConfig {
                embed_dim: table.dim(),
                ..arch
            };
            Model::with_embedding(&arch, alphabet, vocab, table, args.classes, args.max_len, cli.seed)?
        }
        None => Model::new(&arch, alphabet, vocab, args.classes, args.max_len, cli.seed)?,
    };

    let outcome = train(&config, model, &train_set, &val_set)?;
    let log = outcome.log_lines();
    write_io(out, format_args!("{log}"))?;
    if let Some(path) = &args.log {
        write_file(path, &log)?;
    }
    save_model(&outcome.model, &args.out)?;
    say!(out, "best_epoch\t{}", outcome.best_epoch)?;
    Ok(())
}
