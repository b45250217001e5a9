/// Stdout writes that tolerate a closed pipe.
macro_rules! out {
    ($($t:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout(), $($t)*);
    }};
}

macro_rules! out_raw {
    ($($t:tt)*) => {{
        use std::io::Write as _;
        let _ = write!(std::io::stdout(), $($t)*);
    }};
}

mod commands;
mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Hierarchical multitask CTC speech recognition toolkit.
///
/// Exit status is 0 on success, 1 for usage errors and 2 for data or
/// contract errors. Failures print one line to stderr:
/// `error kind=<kind> reason=<text>`.
#[derive(Debug, Parser)]
#[command(name = "hctc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Learn, apply and invert BPE subword segmentations.
    #[command(subcommand)]
    Bpe(BpeCommand),
    /// Convert feature matrices between text and binary form.
    #[command(subcommand)]
    Features(FeaturesCommand),
    /// Generate a seeded synthetic corpus.
    #[command(subcommand)]
    Synth(SynthCommand),
    /// Train an acoustic model; writes a checkpoint and a run manifest.
    Train(TrainArgs),
    /// Language models over a model head's unit inventory.
    #[command(subcommand)]
    Lm(LmCommand),
    /// Decode feature files into a hypothesis transcript file.
    Decode(DecodeArgs),
    /// Score a hypothesis file against references (pooled WER or CER).
    Score(ScoreArgs),
    /// Print the contents of model files.
    #[command(subcommand)]
    Inspect(InspectCommand),
}

#[derive(Debug, Subcommand)]
enum BpeCommand {
    /// Learn a merge table from a text corpus.
    Learn(BpeLearnArgs),
    /// Segment text into subword units (`co@ ld`).
    Apply(BpeApplyArgs),
    /// Join subword units back into words.
    Invert(BpeInvertArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TextFormat {
    /// One sentence per line.
    Text,
    /// `utt_id<TAB>text` per line; ids are kept.
    Transcripts,
}

#[derive(Debug, Args)]
struct BpeLearnArgs {
    /// Corpus file.
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, value_enum, default_value_t = TextFormat::Text)]
    format: TextFormat,
    /// Merge operations to learn. Learning stops early when no pair occurs
    /// twice, and pairs whose result is already a unit are skipped.
    #[arg(long, default_value_t = 300)]
    ops: usize,
    /// Output merge table (`left right` per line, in order).
    #[arg(long)]
    out: PathBuf,
    /// Also write the unit inventory: blank, both marked and unmarked forms
    /// of every character, then one unit per merge.
    #[arg(long)]
    inventory: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BpeApplyArgs {
    #[arg(long)]
    merges: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = TextFormat::Text)]
    format: TextFormat,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BpeInvertArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = TextFormat::Text)]
    format: TextFormat,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum FeaturesCommand {
    /// Convert one feature matrix. Text form has one frame per line; binary
    /// form is the `.feat` layout (16-byte header, time-major f32).
    Convert(FeaturesConvertArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FeatureForm {
    Text,
    Binary,
}

#[derive(Debug, Args)]
struct FeaturesConvertArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Form to write; the input is read in the other form.
    #[arg(long, value_enum, default_value_t = FeatureForm::Binary)]
    to: FeatureForm,
}

#[derive(Debug, Subcommand)]
enum SynthCommand {
    /// Write `<out>/feats/*.feat`, `<out>/train.txt` and `<out>/test.txt`.
    Generate(SynthArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    /// Training utterances (ids come first).
    #[arg(long, default_value_t = 300)]
    train: usize,
    /// Test utterances, drawn after the training ones from the same source.
    #[arg(long, default_value_t = 50)]
    test: usize,
    /// TOML file with generator settings (alphabet, feature_dim,
    /// frames_per_symbol, noise, lexicon_size, ...); defaults otherwise:
    /// 8 symbols, 12 dimensions, 2-3 frames per symbol, noise 0.1.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Overrides the spec's seed. Generation uses ChaCha8 seeded with it.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Topology {
    Stl,
    Bmtl,
    Hmtl,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Directory holding `<utt_id>.feat` files.
    #[arg(long)]
    features: PathBuf,
    /// Training transcripts (`utt_id<TAB>text`); unit inventories are built
    /// from these.
    #[arg(long)]
    transcripts: PathBuf,
    /// Output directory; receives `model.hctc` and
    /// `model.hctc.manifest.json`.
    #[arg(long)]
    out: PathBuf,
    /// TOML run configuration (`[model]`, `[training]`, `[decode]` tables).
    /// Flags below override it; anything unset keeps the defaults shown.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Topology. HMTL taps head k after cascade layer k; BMTL puts every
    /// head on the shared encoder; STL takes exactly one head. [default: hmtl]
    #[arg(long, value_enum)]
    topology: Option<Topology>,
    /// Comma-separated unit sets, fine to coarse: `char`, `s300`, `s1k`,
    /// `bpe-20`, ... [default: char,s300,s1k,s10k]
    #[arg(long, value_delimiter = ',')]
    heads: Option<Vec<String>>,
    /// Shared BiLSTM layers. [default: 2]
    #[arg(long)]
    shared_layers: Option<usize>,
    /// Cells per direction in trunk BiLSTMs. [default: 320]
    #[arg(long)]
    hidden: Option<usize>,
    /// Projection width between shared layers; 0 disables it. [default: 340]
    #[arg(long)]
    projection: Option<usize>,
    /// Cells per direction in each head BiLSTM. [default: 320]
    #[arg(long)]
    head_hidden: Option<usize>,
    /// Comma-separated per-head loss weights; zero detaches a head.
    /// [default: 1 for every head]
    #[arg(long, value_delimiter = ',')]
    weights: Option<Vec<f64>>,
    /// Training epochs. [default: 10]
    #[arg(long)]
    epochs: Option<usize>,
    /// Utterances per update; batches group similar lengths. [default: 8]
    #[arg(long)]
    batch_size: Option<usize>,
    /// SGD learning rate on the batch-mean loss. [default: 0.01]
    #[arg(long)]
    lr: Option<f64>,
    /// Global gradient norm clip; 0 disables clipping. [default: 5]
    #[arg(long)]
    clip: Option<f64>,
    /// Frames stacked per model frame. [default: 3]
    #[arg(long)]
    subsample: Option<usize>,
    /// Train on phase 0 only instead of all `subsample` stacking phases.
    /// [default: all phases]
    #[arg(long)]
    no_augment: bool,
    /// Seeds initialisation and batch order. [default: 0]
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for per-utterance gradients; results are identical
    /// for any value. [default: 1]
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum LmCommand {
    /// Train an LM on transcripts encoded with one head's units.
    Train(LmTrainArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum LmKind {
    /// Add-alpha smoothed n-gram.
    Ngram,
    /// Stacked LSTM over one-hot units.
    Recurrent,
}

#[derive(Debug, Args)]
struct LmTrainArgs {
    /// Acoustic model whose head inventory the LM must match.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Head name; the last (coarsest) head when absent.
    #[arg(long)]
    head: Option<String>,
    #[arg(long)]
    transcripts: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = LmKind::Ngram)]
    backend: LmKind,
    /// N-gram order.
    #[arg(long, default_value_t = 3)]
    order: usize,
    /// N-gram add-alpha constant.
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    /// Recurrent LM: cells per layer.
    #[arg(long, default_value_t = 256)]
    hidden: usize,
    /// Recurrent LM: LSTM layers.
    #[arg(long, default_value_t = 2)]
    layers: usize,
    /// Recurrent LM: sentence-level SGD steps.
    #[arg(long, default_value_t = 1000)]
    steps: usize,
    /// Recurrent LM: learning rate (gradient norm clipped at 5).
    #[arg(long, default_value_t = 0.1)]
    lr: f64,
    /// Recurrent LM: initialisation seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Lowercase transcripts before encoding.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    lowercase: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DecodeMode {
    /// Best path, then collapse repeats and drop blanks.
    Greedy,
    /// Prefix beam search with shallow LM fusion.
    Fusion,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Scoring {
    /// LM factor paid once per emitted unit.
    PerEmission,
    /// LM factor paid on every non-blank frame, repeats included.
    PerFrame,
}

#[derive(Debug, Args)]
struct DecodeArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Directory of `.feat` files.
    #[arg(long)]
    features: PathBuf,
    /// Transcript file naming the utterances to decode (text is ignored);
    /// every `.feat` file in the directory, in id order, when absent.
    #[arg(long)]
    transcripts: Option<PathBuf>,
    /// Hypothesis file (`utt_id<TAB>text`); a manifest is written beside it.
    #[arg(long)]
    out: PathBuf,
    /// Head name; the last (coarsest) head when absent.
    #[arg(long)]
    head: Option<String>,
    #[arg(long, value_enum, default_value_t = DecodeMode::Greedy)]
    mode: DecodeMode,
    /// LM file for fusion; without one only the insertion bonus applies.
    #[arg(long)]
    lm: Option<PathBuf>,
    /// Prefixes kept per frame.
    #[arg(long, default_value_t = 40)]
    beam: usize,
    /// Insertion bonus multiplied in per scored non-blank frame.
    #[arg(long, default_value_t = 1.5)]
    bonus: f64,
    /// Exponent on the LM probability.
    #[arg(long, default_value_t = 1.0)]
    lm_weight: f64,
    /// Which frames pay the LM factor.
    #[arg(long, value_enum, default_value_t = Scoring::PerEmission)]
    scoring: Scoring,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Unit {
    /// Whitespace-separated words.
    Word,
    /// Characters, whitespace ignored.
    Char,
}

#[derive(Debug, Args)]
struct ScoreArgs {
    /// Reference transcripts.
    #[arg(long)]
    reference: PathBuf,
    /// Hypothesis transcripts with the same utterance ids.
    #[arg(long)]
    hypothesis: PathBuf,
    #[arg(long, value_enum, default_value_t = Unit::Word)]
    unit: Unit,
    /// Also write the `key=value` report here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum InspectCommand {
    /// Topology, heads, inventory sizes and parameter count of a checkpoint.
    Checkpoint { path: PathBuf },
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Data(String),
    Lib(hctc::Error),
}

impl CliError {
    fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Data(format!("{}: {e}", path.display()))
    }

    fn kind(&self) -> &'static str {
        use hctc::Error as E;
        match self {
            CliError::Usage(_) => "usage",
            CliError::Data(_) => "data",
            CliError::Lib(e) => match e {
                E::Contract(_) => "contract",
                E::OracleInvalid(_) | E::OracleTooLarge { .. } => "oracle",
                E::UnknownSymbol { .. } => "unknown-symbol",
                E::EmptyCorpus => "empty-corpus",
                E::InfeasibleTarget { .. } => "infeasible-target",
                E::InvalidPosterior { .. } => "invalid-posterior",
                E::Config(_) => "config",
                E::EmptyBatch => "empty-batch",
                E::Parse { .. } => "parse",
                E::Alignment { .. } => "alignment",
                E::InventoryMismatch(_) => "inventory-mismatch",
                E::Io(_) => "io",
            },
        }
    }

    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            _ => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) => f.write_str(m),
            CliError::Lib(e) => write!(f, "{e}"),
        }
    }
}

impl From<hctc::Error> for CliError {
    fn from(e: hctc::Error) -> Self {
        CliError::Lib(e)
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            eprintln!(
                "error kind=usage reason={}",
                one_line(first.trim_start_matches("error: "))
            );
            return ExitCode::from(1);
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!(
                "error kind={} reason={}",
                e.kind(),
                one_line(&e.to_string())
            );
            ExitCode::from(e.code())
        }
    }
}
