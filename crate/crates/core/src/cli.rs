//! The `syncdialog` command line.
//!
//! Every subcommand reads and checks all of its inputs before it writes
//! anything. Exit status is 0 on success, 2 for invalid input or
//! configuration and 3 for failures while running; failures also print one
//! JSON object on stderr.

use std::ffi::OsString;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{read_corpus, write_records, write_sequences, DialogueRecord};
use crate::interaction::{
    continue_dialogue, simulate_interaction, Diagnostics, GenerationConfig, InteractionConfig,
    InteractionError, InteractionTranscript, OverflowPolicy, UserSource,
};
use crate::metrics::{
    correlation_report, median, record_events, report_csv_row, CorrelationReport, DialogueEvents,
    VadConfig, REPORT_CSV_HEADER,
};
use crate::predictor::{score, FormatMeta, NgramModel, Predictor, SamplerConfig};
use crate::synth::{corpus_stats, generate_corpus, generate_stage2_corpus, CorpusStats, DialogueStyle, StatsConfig};
use crate::tokens::{flatten, DedupDialogue, Token, Vocab};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Validation(_) => "validation",
            CliError::Runtime(_) => "runtime",
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Validation(m) | CliError::Runtime(m) => m,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::json!({
            "error": self.kind(),
            "message": self.message(),
            "exit_code": self.exit_code(),
        })
        .to_string()
    }
}

fn invalid(msg: impl std::fmt::Display) -> CliError {
    CliError::Validation(msg.to_string())
}

fn runtime(msg: impl std::fmt::Display) -> CliError {
    CliError::Runtime(msg.to_string())
}

type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "syncdialog", version, about = "Chunk-synchronous two-speaker token dialogues")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every subcommand. Format flags left unset are taken from
/// the inputs (style file, corpus or model), falling back to 40 ms frames,
/// 160 ms chunks, 501 units and silence unit 0.
#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, global = true)]
    pub frame_ms: Option<u32>,
    #[arg(long, global = true)]
    pub chunk_ms: Option<u32>,
    #[arg(long, global = true)]
    pub vocab: Option<u32>,
    /// Repeat to mark several units as silence.
    #[arg(long = "silence-token", global = true)]
    pub silence_token: Vec<Token>,
    /// Primary output file.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dual-channel corpus.
    Synth(SynthArgs),
    /// Train an n-gram model on a corpus.
    Train(TrainArgs),
    /// Continue prompts, generating both channels.
    Continue(ContinueArgs),
    /// Simulate the model talking to a user under latency.
    Interact(InteractArgs),
    /// Turn-taking correlation, perplexity or corpus statistics.
    Eval(EvalArgs),
    /// Tabulate eval outputs as CSV.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// TOML style file; built-in defaults when absent.
    #[arg(long)]
    pub style: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    pub count: usize,
    #[arg(long, default_value_t = 60_000)]
    pub duration_ms: u64,
    /// Turn-based dialogues with no overlap or backchannels.
    #[arg(long)]
    pub stage2: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub order: usize,
    #[arg(long, default_value_t = 0.1)]
    pub alpha: f64,
    /// Fall back to the longest seen context suffix for unseen contexts.
    #[arg(long)]
    pub backoff: bool,
    /// Also dump the flattened training sequences here.
    #[arg(long)]
    pub sequences: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolicyArg {
    Truncate,
    Error,
}

impl From<PolicyArg> for OverflowPolicy {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::Truncate => OverflowPolicy::Truncate,
            PolicyArg::Error => OverflowPolicy::Error,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct DecodeArgs {
    #[arg(long, default_value_t = 1.0)]
    pub temperature: f64,
    #[arg(long)]
    pub top_k: Option<usize>,
    /// Same as `--top-k 1`.
    #[arg(long)]
    pub greedy: bool,
    #[arg(long, value_enum, default_value_t = PolicyArg::Truncate)]
    pub overflow: PolicyArg,
}

impl DecodeArgs {
    fn sampler(&self, seed: u64) -> SamplerConfig {
        SamplerConfig {
            temperature: self.temperature,
            top_k: if self.greedy { Some(1) } else { self.top_k },
            seed,
        }
    }
}

#[derive(Debug, Args)]
pub struct ContinueArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Corpus whose dialogues supply the prompts.
    #[arg(long)]
    pub prompts: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    pub prompt_ms: u64,
    #[arg(long, default_value_t = 30_000)]
    pub continue_ms: u64,
    #[command(flatten)]
    pub decode: DecodeArgs,
    /// JSON Lines file of per-dialogue generation records.
    #[arg(long)]
    pub transcript: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InteractArgs {
    /// The agent's model (channel 0).
    #[arg(long)]
    pub model: PathBuf,
    /// The user's model; without it the user replays channel 1 of the
    /// prompts corpus.
    #[arg(long)]
    pub user_model: Option<PathBuf>,
    #[arg(long)]
    pub prompts: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    pub prompt_ms: u64,
    #[arg(long, default_value_t = 30_000)]
    pub continue_ms: u64,
    #[arg(long, default_value_t = 1)]
    pub latency: usize,
    #[command(flatten)]
    pub decode: DecodeArgs,
    #[arg(long)]
    pub record_contexts: bool,
    /// JSON Lines file of interaction transcripts.
    #[arg(long)]
    pub transcript: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EvalMode {
    Turns,
    Ppl,
    Stats,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, value_enum)]
    pub mode: EvalMode,
    #[arg(long)]
    pub generated: PathBuf,
    /// Ground truth paired by dialogue id (turns mode).
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// Reference model (ppl mode).
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Leading span excluded from scoring and event extraction.
    #[arg(long, default_value_t = 0)]
    pub prompt_ms: u64,
    #[arg(long, default_value_t = 0)]
    pub min_voiced_ms: u64,
    #[arg(long, default_value_t = 0)]
    pub bridge_ms: u64,
    #[arg(long, default_value_t = 200)]
    pub ipu_gap_ms: u64,
    /// Shuffle each continuation's tokens before scoring (ppl mode).
    #[arg(long)]
    pub shuffle: bool,
    #[arg(long, default_value = "model")]
    pub label: String,
    #[arg(long, default_value = "dataset")]
    pub dataset: String,
    /// Also write the turns CSV row here.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Eval outputs, one CSV row each, in the given order.
    #[arg(long, num_args = 1.., required = true)]
    pub inputs: Vec<PathBuf>,
}

/// Output of `eval`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum EvalOutput {
    Turns {
        model: String,
        dataset: String,
        report: CorrelationReport,
        generated: Vec<DialogueEvents>,
        reference: Vec<DialogueEvents>,
    },
    Ppl {
        model: String,
        dataset: String,
        median: f64,
        dialogues: Vec<DialoguePerplexity>,
    },
    Stats {
        model: String,
        dataset: String,
        stats: CorpusStats,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialoguePerplexity {
    pub id: String,
    pub perplexity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuationRecord {
    pub id: String,
    pub prompt_chunks: usize,
    pub diagnostics: Diagnostics,
    pub dialogue: DedupDialogue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub id: String,
    #[serde(flatten)]
    pub transcript: InteractionTranscript,
}

pub const PPL_CSV_HEADER: &str = "model,dataset,median_ppl,dialogues";

/// Parse `args` (program name first), run, and return the exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            if e.use_stderr() {
                let err = invalid(e.to_string().trim_end());
                eprintln!("{}", err.to_json());
                return err.exit_code();
            }
            print!("{e}");
            return EXIT_OK;
        }
    };
    match run(&cli) {
        Ok(()) => EXIT_OK,
        Err(err) => {
            eprintln!("{}", err.to_json());
            err.exit_code()
        }
    }
}

pub fn run(cli: &Cli) -> CliResult<()> {
    let g = &cli.global;
    match &cli.command {
        Command::Synth(a) => cmd_synth(g, a),
        Command::Train(a) => cmd_train(g, a),
        Command::Continue(a) => cmd_continue(g, a),
        Command::Interact(a) => cmd_interact(g, a),
        Command::Eval(a) => cmd_eval(g, a),
        Command::Report(a) => cmd_report(g, a),
    }
}

/// Per-dialogue sampler seed.
pub fn dialogue_seed(seed: u64, index: usize) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ (index as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn out_path(g: &GlobalArgs) -> CliResult<&Path> {
    let p = g.out.as_deref().ok_or_else(|| invalid("--out is required"))?;
    check_writable(p)?;
    Ok(p)
}

fn check_writable(p: &Path) -> CliResult<()> {
    let parent = match p.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    if !parent.is_dir() {
        return Err(invalid(format!("output directory {} does not exist", parent.display())));
    }
    if p.is_dir() {
        return Err(invalid(format!("output path {} is a directory", p.display())));
    }
    Ok(())
}

fn check_input(p: &Path) -> CliResult<()> {
    if p.is_file() {
        Ok(())
    } else {
        Err(invalid(format!("input file {} does not exist", p.display())))
    }
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<fs::File>) -> std::io::Result<()>) -> CliResult<()> {
    let file = fs::File::create(path).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
    let mut w = BufWriter::new(file);
    f(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| runtime(format!("{}: {e}", path.display())))
}

fn write_json_lines<T: Serialize>(path: &Path, items: &[T]) -> CliResult<()> {
    write_file(path, |w| {
        for item in items {
            serde_json::to_writer(&mut *w, item)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    })
}

fn load_corpus(path: &Path) -> CliResult<Vec<DialogueRecord>> {
    check_input(path)?;
    read_corpus(path).map_err(invalid)
}

fn load_model(path: &Path) -> CliResult<NgramModel> {
    check_input(path)?;
    NgramModel::load(path).map_err(invalid)
}

/// The vocabulary shared by every record, checked against explicit flags.
fn corpus_vocab(g: &GlobalArgs, records: &[DialogueRecord], what: &str) -> CliResult<Vocab> {
    let mut found: Option<Vocab> = None;
    for rec in records {
        let v = rec.vocab().map_err(invalid)?;
        match &found {
            None => found = Some(v),
            Some(f) if *f != v => {
                return Err(invalid(format!("{what}: dialogue {} uses a different token format", rec.id)))
            }
            _ => {}
        }
    }
    let vocab = match found {
        Some(v) => v,
        None => flag_vocab(g, None)?,
    };
    check_flags(g, &vocab, what)?;
    Ok(vocab)
}

fn flag_vocab(g: &GlobalArgs, base: Option<&Vocab>) -> CliResult<Vocab> {
    let def = Vocab::default();
    let base = base.unwrap_or(&def);
    let silence = if g.silence_token.is_empty() {
        base.silence_tokens().to_vec()
    } else {
        g.silence_token.clone()
    };
    Vocab::new(
        g.vocab.unwrap_or(base.size()),
        g.frame_ms.unwrap_or(base.frame_ms()),
        silence,
    )
    .map_err(invalid)
}

fn check_flags(g: &GlobalArgs, vocab: &Vocab, what: &str) -> CliResult<()> {
    if flag_vocab(g, Some(vocab))? != *vocab {
        return Err(invalid(format!(
            "{what} uses {} units, {} ms frames, silence {:?}, which conflicts with the flags",
            vocab.size(),
            vocab.frame_ms(),
            vocab.silence_tokens()
        )));
    }
    Ok(())
}

fn chunk_ms(g: &GlobalArgs, vocab: &Vocab, model_meta: Option<&FormatMeta>) -> CliResult<u32> {
    let chunk = match (g.chunk_ms, model_meta) {
        (Some(c), Some(m)) if c != m.chunk_ms => {
            return Err(invalid(format!(
                "--chunk-ms {c} differs from the model's {} ms chunks",
                m.chunk_ms
            )))
        }
        (Some(c), _) => c,
        (None, Some(m)) => m.chunk_ms,
        (None, None) => 160,
    };
    vocab.frames_per_chunk(chunk).map_err(invalid)?;
    Ok(chunk)
}

fn check_model(model: &NgramModel, vocab: &Vocab, what: &str) -> CliResult<()> {
    if model.vocab_ext() != vocab.extended_size() {
        return Err(invalid(format!(
            "{what} covers {} ids but the corpus needs {}",
            model.vocab_ext(),
            vocab.extended_size()
        )));
    }
    if let Some(meta) = model.meta() {
        if meta.vocab != *vocab {
            return Err(invalid(format!("{what} was trained on a different token format")));
        }
    }
    Ok(())
}

fn ms_to_chunks(ms: u64, chunk: u32, flag: &str) -> CliResult<usize> {
    if !ms.is_multiple_of(chunk as u64) {
        return Err(invalid(format!("{flag} {ms} is not a multiple of the {chunk} ms chunk")));
    }
    Ok((ms / chunk as u64) as usize)
}

fn cmd_synth(g: &GlobalArgs, a: &SynthArgs) -> CliResult<()> {
    let mut style = match &a.style {
        Some(p) => {
            check_input(p)?;
            DialogueStyle::from_file(p).map_err(invalid)?
        }
        None => DialogueStyle::default(),
    };
    if let Some(v) = g.vocab {
        style.vocab = v;
    }
    if let Some(f) = g.frame_ms {
        style.frame_ms = f;
    }
    match g.silence_token.as_slice() {
        [] => {}
        [t] => style.silence_token = *t,
        _ => return Err(invalid("synth takes a single --silence-token")),
    }
    style.validate().map_err(invalid)?;
    if let Some(c) = g.chunk_ms {
        style.vocab().map_err(invalid)?.frames_per_chunk(c).map_err(invalid)?;
    }
    if !a.duration_ms.is_multiple_of(style.frame_ms as u64) {
        return Err(invalid(format!(
            "duration {} ms is not a multiple of the {} ms frame",
            a.duration_ms, style.frame_ms
        )));
    }
    let out = out_path(g)?;

    let corpus = if a.stage2 {
        generate_stage2_corpus(&style, a.count, a.duration_ms, g.seed)
    } else {
        generate_corpus(&style, a.count, a.duration_ms, g.seed)
    }
    .map_err(runtime)?;
    write_file(out, |w| write_records(w, &corpus.records))
}

/// Flattened sequences of a corpus at `chunk_ms`.
pub fn corpus_sequences(records: &[DialogueRecord], chunk_ms: u32) -> Result<Vec<Vec<Token>>, String> {
    records
        .par_iter()
        .map(|r| r.dedup(chunk_ms).map(|d| flatten(&d)).map_err(|e| format!("{}: {e}", r.id)))
        .collect()
}

fn cmd_train(g: &GlobalArgs, a: &TrainArgs) -> CliResult<()> {
    let records = load_corpus(&a.corpus)?;
    if records.is_empty() {
        return Err(invalid("training corpus is empty"));
    }
    let vocab = corpus_vocab(g, &records, "training corpus")?;
    let chunk = chunk_ms(g, &vocab, None)?;
    NgramModel::new(a.order, a.alpha, vocab.extended_size()).map_err(invalid)?;
    let out = out_path(g)?;
    if let Some(p) = &a.sequences {
        check_writable(p)?;
    }

    let seqs = corpus_sequences(&records, chunk).map_err(runtime)?;
    let model = if a.backoff {
        NgramModel::train_backoff(&seqs, vocab.extended_size(), a.order, a.alpha)
    } else {
        NgramModel::train(&seqs, vocab.extended_size(), a.order, a.alpha)
    }
    .map_err(runtime)?
        .with_meta(FormatMeta { vocab, chunk_ms: chunk });
    if let Some(p) = &a.sequences {
        write_file(p, |w| write_sequences(w, &seqs))?;
    }
    write_file(out, |w| w.write_all(model.to_json_string().as_bytes()))
}

struct Prompts {
    vocab: Vocab,
    chunk_ms: u32,
    prompt_chunks: usize,
    new_chunks: usize,
    /// Full dialogues, deduplicated at `chunk_ms`.
    dialogues: Vec<(String, DedupDialogue)>,
}

fn load_prompts(
    g: &GlobalArgs,
    path: &Path,
    model: &NgramModel,
    prompt_ms: u64,
    continue_ms: u64,
    need_full: bool,
) -> CliResult<Prompts> {
    let records = load_corpus(path)?;
    let vocab = corpus_vocab(g, &records, "prompt corpus")?;
    check_model(model, &vocab, "model")?;
    let chunk = chunk_ms(g, &vocab, model.meta())?;
    let prompt_chunks = ms_to_chunks(prompt_ms, chunk, "--prompt-ms")?;
    let new_chunks = ms_to_chunks(continue_ms, chunk, "--continue-ms")?;
    if new_chunks == 0 {
        return Err(invalid("--continue-ms must cover at least one chunk"));
    }
    let fpc = vocab.frames_per_chunk(chunk).map_err(invalid)?;
    let need = if need_full { prompt_chunks + new_chunks } else { prompt_chunks };
    let mut dialogues = Vec::with_capacity(records.len());
    for rec in &records {
        if rec.num_frames() < need * fpc {
            return Err(invalid(format!(
                "dialogue {} has {} frames, {} are required",
                rec.id,
                rec.num_frames(),
                need * fpc
            )));
        }
        dialogues.push((rec.id.clone(), rec.dedup(chunk).map_err(invalid)?));
    }
    Ok(Prompts {
        vocab,
        chunk_ms: chunk,
        prompt_chunks,
        new_chunks,
        dialogues,
    })
}

fn interaction_error(e: InteractionError) -> CliError {
    match e {
        InteractionError::InvalidConfig(_) | InteractionError::SourceExhausted { .. } => invalid(e),
        _ => runtime(e),
    }
}

fn cmd_continue(g: &GlobalArgs, a: &ContinueArgs) -> CliResult<()> {
    let model = load_model(&a.model)?;
    let p = load_prompts(g, &a.prompts, &model, a.prompt_ms, a.continue_ms, false)?;
    a.decode.sampler(g.seed).validate(model.vocab_ext()).map_err(invalid)?;
    let out = out_path(g)?;
    if let Some(t) = &a.transcript {
        check_writable(t)?;
    }

    let results = p
        .dialogues
        .par_iter()
        .enumerate()
        .map(|(i, (id, d))| {
            let cfg = GenerationConfig {
                sampler: a.decode.sampler(dialogue_seed(g.seed, i)),
                overflow_policy: a.decode.overflow.into(),
            };
            let gen = continue_dialogue(&model, &d.prefix(p.prompt_chunks), p.new_chunks, &cfg)
                .map_err(|e| (id.clone(), e))?;
            let rec = DialogueRecord::from_dedup(id.clone(), &gen.dialogue)
                .map_err(|e| (id.clone(), e.into()))?;
            Ok((
                rec,
                ContinuationRecord {
                    id: id.clone(),
                    prompt_chunks: gen.prompt_chunks,
                    diagnostics: gen.diagnostics,
                    dialogue: gen.dialogue,
                },
            ))
        })
        .collect::<Result<Vec<_>, (String, InteractionError)>>()
        .map_err(|(id, e)| {
            let err = interaction_error(e);
            runtime(format!("dialogue {id}: {}", err.message()))
        })?;
    let (records, transcripts): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    if let Some(t) = &a.transcript {
        write_json_lines(t, &transcripts)?;
    }
    write_file(out, |w| write_records(w, &records))
}

fn cmd_interact(g: &GlobalArgs, a: &InteractArgs) -> CliResult<()> {
    let model = load_model(&a.model)?;
    let user_model = a.user_model.as_deref().map(load_model).transpose()?;
    let p = load_prompts(g, &a.prompts, &model, a.prompt_ms, a.continue_ms, user_model.is_none())?;
    if let Some(um) = &user_model {
        check_model(um, &p.vocab, "user model")?;
        if let Some(meta) = um.meta() {
            if meta.chunk_ms != p.chunk_ms {
                return Err(invalid(format!(
                    "user model uses {} ms chunks, the agent {} ms",
                    meta.chunk_ms, p.chunk_ms
                )));
            }
        }
    }
    let sampler = a.decode.sampler(g.seed);
    sampler.validate(model.vocab_ext()).map_err(invalid)?;
    let out = out_path(g)?;
    if let Some(t) = &a.transcript {
        check_writable(t)?;
    }

    let results = p
        .dialogues
        .par_iter()
        .enumerate()
        .map(|(i, (id, d))| {
            let cfg = InteractionConfig {
                chunk_ms: p.chunk_ms,
                latency_chunks: a.latency,
                max_chunks: p.new_chunks,
                sampler: SamplerConfig {
                    seed: dialogue_seed(g.seed, i),
                    ..sampler
                },
                overflow_policy: a.decode.overflow.into(),
                record_contexts: a.record_contexts,
            };
            let user = match &user_model {
                Some(m) => UserSource::Model(m),
                None => UserSource::scripted_from(d),
            };
            let tr = simulate_interaction(&model, user, &d.prefix(p.prompt_chunks), &cfg)
                .map_err(|e| (id.clone(), e))?;
            let rec = DialogueRecord::from_dedup(id.clone(), &tr.dialogue)
                .map_err(|e| (id.clone(), e.into()))?;
            Ok((
                rec,
                TranscriptRecord {
                    id: id.clone(),
                    transcript: tr,
                },
            ))
        })
        .collect::<Result<Vec<_>, (String, InteractionError)>>()
        .map_err(|(id, e)| {
            let err = interaction_error(e);
            runtime(format!("dialogue {id}: {}", err.message()))
        })?;
    let (records, transcripts): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    if let Some(t) = &a.transcript {
        write_json_lines(t, &transcripts)?;
    }
    write_file(out, |w| write_records(w, &records))
}

/// Drop the first `frames` frames of every record.
pub fn skip_frames(records: &[DialogueRecord], frames: usize) -> Vec<DialogueRecord> {
    records
        .iter()
        .map(|r| {
            let mut r = r.clone();
            for ch in r.channels.iter_mut() {
                ch.drain(..frames.min(ch.len()));
            }
            r
        })
        .collect()
}

fn check_multiple(ms: u64, frame_ms: u32, flag: &str) -> CliResult<()> {
    if !ms.is_multiple_of(frame_ms as u64) {
        return Err(invalid(format!("{flag} {ms} is not a multiple of the {frame_ms} ms frame")));
    }
    Ok(())
}

fn cmd_eval(g: &GlobalArgs, a: &EvalArgs) -> CliResult<()> {
    let generated = load_corpus(&a.generated)?;
    let vocab = corpus_vocab(g, &generated, "generated corpus")?;
    for (ms, flag) in [
        (a.prompt_ms, "--prompt-ms"),
        (a.min_voiced_ms, "--min-voiced-ms"),
        (a.bridge_ms, "--bridge-ms"),
    ] {
        check_multiple(ms, vocab.frame_ms(), flag)?;
    }
    let vad_cfg = VadConfig {
        min_voiced_ms: a.min_voiced_ms,
        bridge_ms: a.bridge_ms,
    };
    let skip = (a.prompt_ms / vocab.frame_ms() as u64) as usize;

    let output = match a.mode {
        EvalMode::Turns => {
            let ref_path = a.reference.as_deref().ok_or_else(|| invalid("turns mode needs --reference"))?;
            let reference = load_corpus(ref_path)?;
            let ref_vocab = corpus_vocab(g, &reference, "reference corpus")?;
            if ref_vocab != vocab {
                return Err(invalid("generated and reference corpora use different token formats"));
            }
            let out = out_path(g)?;
            if let Some(c) = &a.csv {
                check_writable(c)?;
            }
            let events = |recs: &[DialogueRecord]| -> Vec<DialogueEvents> {
                skip_frames(recs, skip)
                    .par_iter()
                    .map(|r| record_events(r, &vad_cfg, a.ipu_gap_ms))
                    .collect()
            };
            let gen_events = events(&generated);
            let ref_events = events(&reference);
            let report = correlation_report(&gen_events, &ref_events).map_err(invalid)?;
            if let Some(c) = &a.csv {
                let row = report_csv_row(&a.label, &a.dataset, &report);
                write_file(c, |w| writeln!(w, "{REPORT_CSV_HEADER}\n{row}"))?;
            }
            (
                out,
                EvalOutput::Turns {
                    model: a.label.clone(),
                    dataset: a.dataset.clone(),
                    report,
                    generated: gen_events,
                    reference: ref_events,
                },
            )
        }
        EvalMode::Ppl => {
            let model_path = a.model.as_deref().ok_or_else(|| invalid("ppl mode needs --model"))?;
            let model = load_model(model_path)?;
            check_model(&model, &vocab, "reference model")?;
            let chunk = chunk_ms(g, &vocab, model.meta())?;
            let prompt_chunks = ms_to_chunks(a.prompt_ms, chunk, "--prompt-ms")?;
            if generated.is_empty() {
                return Err(invalid("generated corpus is empty"));
            }
            let out = out_path(g)?;
            let dialogues = generated
                .par_iter()
                .enumerate()
                .map(|(i, rec)| {
                    let d = rec.dedup(chunk).map_err(|e| format!("{}: {e}", rec.id))?;
                    let wire = flatten(&d);
                    let split = d.prefix(prompt_chunks).wire_len().min(wire.len());
                    let (prefix, cont) = wire.split_at(split);
                    let mut cont = cont.to_vec();
                    if a.shuffle {
                        cont.shuffle(&mut ChaCha8Rng::seed_from_u64(dialogue_seed(g.seed, i)));
                    }
                    let perplexity = score(&model, prefix, &cont)
                        .perplexity()
                        .ok_or_else(|| format!("{}: nothing to score after the prompt", rec.id))?;
                    Ok(DialoguePerplexity {
                        id: rec.id.clone(),
                        perplexity,
                    })
                })
                .collect::<Result<Vec<_>, String>>()
                .map_err(runtime)?;
            let values: Vec<f64> = dialogues.iter().map(|d| d.perplexity).collect();
            (
                out,
                EvalOutput::Ppl {
                    model: a.label.clone(),
                    dataset: a.dataset.clone(),
                    median: median(&values).expect("non-empty"),
                    dialogues,
                },
            )
        }
        EvalMode::Stats => {
            let chunk = chunk_ms(g, &vocab, None)?;
            if generated.is_empty() {
                return Err(invalid("corpus is empty"));
            }
            let out = out_path(g)?;
            let cfg = StatsConfig {
                vad: vad_cfg,
                ipu_gap_ms: a.ipu_gap_ms,
                chunk_ms: chunk,
            };
            let stats = corpus_stats(&skip_frames(&generated, skip), &cfg).map_err(runtime)?;
            (
                out,
                EvalOutput::Stats {
                    model: a.label.clone(),
                    dataset: a.dataset.clone(),
                    stats,
                },
            )
        }
    };
    let (out, output) = output;
    let text = serde_json::to_string_pretty(&output).map_err(runtime)?;
    write_file(out, |w| writeln!(w, "{text}"))
}

fn fmt4(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.4}")).unwrap_or_default()
}

fn cmd_report(g: &GlobalArgs, a: &ReportArgs) -> CliResult<()> {
    let mut evals = Vec::with_capacity(a.inputs.len());
    for p in &a.inputs {
        check_input(p)?;
        let text = fs::read_to_string(p).map_err(|e| invalid(format!("{}: {e}", p.display())))?;
        let e: EvalOutput =
            serde_json::from_str(&text).map_err(|e| invalid(format!("{}: {e}", p.display())))?;
        evals.push(e);
    }
    let out = out_path(g)?;
    let mut lines = Vec::with_capacity(evals.len() + 1);
    match &evals[0] {
        EvalOutput::Turns { .. } => lines.push(REPORT_CSV_HEADER.to_string()),
        EvalOutput::Ppl { .. } => lines.push(PPL_CSV_HEADER.to_string()),
        EvalOutput::Stats { .. } => lines.push("model,dataset,ipu_mean,pause_mean,fto_mean,speech_dedup_ratio".into()),
    }
    for (e, p) in evals.iter().zip(&a.inputs) {
        let row = match (e, &evals[0]) {
            (EvalOutput::Turns { model, dataset, report, .. }, EvalOutput::Turns { .. }) => {
                report_csv_row(model, dataset, report)
            }
            (EvalOutput::Ppl { model, dataset, median, dialogues }, EvalOutput::Ppl { .. }) => {
                format!("{model},{dataset},{median:.4},{}", dialogues.len())
            }
            (EvalOutput::Stats { model, dataset, stats }, EvalOutput::Stats { .. }) => format!(
                "{model},{dataset},{},{},{},{:.4}",
                fmt4(stats.ipu.map(|s| s.mean)),
                fmt4(stats.pause.map(|s| s.mean)),
                fmt4(stats.fto.map(|s| s.mean)),
                stats.speech_dedup_ratio
            ),
            _ => return Err(invalid(format!("{} is a different kind of eval output", p.display()))),
        };
        lines.push(row);
    }
    write_file(out, |w| {
        for l in &lines {
            writeln!(w, "{l}")?;
        }
        Ok(())
    })
}
