use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use seqsum::decoding::{beam_sweep, decode_corpus, tune_min_length, DecodeConfig};
use seqsum::model::{
    evaluate_perplexity, load_checkpoint, save_checkpoint, Batch, Checkpoint, ModelConfig, OptimizerConfig,
    Seq2SeqParams, Trainer,
};
use seqsum::objectives::{derive_seed, ObjectiveConfig, PretrainExample, Rng, SpanParams};
use seqsum::pipeline::{
    batch_of_examples, batch_of_pairs, corpus_pieces, encode_document, encode_pairs, gen_synthetic, ingest,
    make_pretrain_data, run_experiment, EpochSampler, ObjectiveChoice, RunConfig, SummaryPair, SummaryStyle,
    SyntheticSpec,
};
use seqsum::reorder::{corpus_reorder_stat, lead3, AlignScore};
use seqsum::rouge::{score_corpus, EvalProtocol, RougeVariant};
use seqsum::text::{read_jsonl_file, segment_sentences, train_bpe, truncate, write_jsonl_file, RawDocument, Vocabulary};

#[derive(Parser)]
#[command(name = "seqsum", version, about = "Summarization pre-training toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Normalize raw text files or JSONL into {"id","text"} JSONL.
    Ingest(IngestArgs),
    /// Generate a template-grammar corpus of document/summary pairs.
    GenSynthetic(GenSyntheticArgs),
    /// Learn a byte-level BPE vocabulary.
    TrainBpe(TrainBpeArgs),
    /// Build pre-training examples from a corpus.
    MakePretrainData(MakePretrainDataArgs),
    /// Pre-train a model on pre-training examples.
    Pretrain(PretrainArgs),
    /// Fine-tune a checkpoint on document/summary pairs.
    Finetune(FinetuneArgs),
    /// Beam-search summaries for documents.
    Decode(DecodeArgs),
    /// Score candidate/reference pairs.
    Rouge(RougeArgs),
    /// Fraction of pairs whose summary reorders document content.
    AnalyzeReorder(AnalyzeReorderArgs),
    /// First three sentences of each document.
    Lead3(Lead3Args),
    /// ROUGE-L for a range of beam sizes.
    BeamSweep(BeamSweepArgs),
    /// Pick the minimum decode length by validation ROUGE-L.
    TuneMinLen(TuneMinLenArgs),
    /// Pre-train, fine-tune, decode and score in one run.
    RunExperiment(RunExperimentArgs),
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn read_config<T: DeserializeOwned + Default>(path: &Option<PathBuf>) -> Result<T> {
    path.as_deref().map(read_json).unwrap_or_else(|| Ok(T::default()))
}

fn read_records<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    read_jsonl_file(path).with_context(|| format!("reading {}", path.display()))
}

fn write_records<T: Serialize>(records: &[T], path: &Path) -> Result<()> {
    write_jsonl_file(records, path).with_context(|| format!("writing {}", path.display()))
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn load_vocab(path: &Path) -> Result<Vocabulary> {
    Vocabulary::load(path).with_context(|| format!("loading vocabulary {}", path.display()))
}

fn load_params(path: &Path) -> Result<Checkpoint<f32>> {
    load_checkpoint(path).with_context(|| format!("loading checkpoint {}", path.display()))
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

#[derive(Args)]
struct IngestArgs {
    /// JSONL file, plain-text file, or directory of text files.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Also write the stats report here (it is always printed).
    #[arg(long)]
    stats: Option<PathBuf>,
}

fn cmd_ingest(a: IngestArgs) -> Result<()> {
    let (docs, stats) = ingest(&a.input).with_context(|| format!("ingesting {}", a.input.display()))?;
    write_records(&docs, &a.output)?;
    if let Some(p) = &a.stats {
        std::fs::write(p, serde_json::to_vec_pretty(&stats)?)?;
    }
    print_json(&stats)
}

#[derive(Clone, Copy, ValueEnum)]
enum StyleArg {
    Lead,
    Random,
}

#[derive(Args)]
struct GenSyntheticArgs {
    #[arg(long)]
    seed: u64,
    /// Pairs as {"id","document","summary"} JSONL.
    #[arg(long)]
    output: PathBuf,
    /// Documents alone as {"id","text"} JSONL.
    #[arg(long)]
    docs_output: Option<PathBuf>,
    /// SyntheticSpec JSON; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n_docs: Option<usize>,
    #[arg(long)]
    min_sentences: Option<usize>,
    #[arg(long)]
    max_sentences: Option<usize>,
    #[arg(long)]
    summary_sentences: Option<usize>,
    #[arg(long, value_enum)]
    summary_style: Option<StyleArg>,
    #[arg(long)]
    reorder_fraction: Option<f64>,
}

fn cmd_gen_synthetic(a: GenSyntheticArgs) -> Result<()> {
    let mut spec: SyntheticSpec = read_config(&a.config)?;
    set(&mut spec.n_docs, a.n_docs);
    set(&mut spec.min_sentences, a.min_sentences);
    set(&mut spec.max_sentences, a.max_sentences);
    set(&mut spec.summary_sentences, a.summary_sentences);
    set(&mut spec.reorder_fraction, a.reorder_fraction);
    set(
        &mut spec.summary_style,
        a.summary_style.map(|s| match s {
            StyleArg::Lead => SummaryStyle::Lead,
            StyleArg::Random => SummaryStyle::Random,
        }),
    );
    let corpus = gen_synthetic(&spec, a.seed).map_err(anyhow::Error::msg)?;
    write_records(&corpus.pairs, &a.output)?;
    if let Some(p) = &a.docs_output {
        write_records(&corpus.documents(), p)?;
    }
    print_json(&serde_json::json!({
        "seed": a.seed,
        "n_docs": corpus.pairs.len(),
        "n_reordered": corpus.reordered.iter().filter(|&&r| r).count(),
    }))
}

#[derive(Args)]
struct TrainBpeArgs {
    /// {"id","text"} JSONL.
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value_t = 1000)]
    vocab_size: usize,
    #[arg(long)]
    output: PathBuf,
}

fn cmd_train_bpe(a: TrainBpeArgs) -> Result<()> {
    let docs: Vec<RawDocument> = read_records(&a.corpus)?;
    let vocab = train_bpe(&docs, a.vocab_size)?;
    vocab.save(&a.output)?;
    print_json(&serde_json::json!({ "vocab_size": vocab.len() }))
}

#[derive(Args)]
struct MakePretrainDataArgs {
    /// {"id","text"} JSONL.
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    #[arg(long, default_value = "sr")]
    objective: ObjectiveChoice,
    #[arg(long)]
    seed: u64,
    /// ObjectiveConfig JSON; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    span_min: Option<usize>,
    #[arg(long)]
    span_max: Option<usize>,
    /// Target length limit, also the NSG target length.
    #[arg(long)]
    target_len: Option<usize>,
    /// Piece length in tokens; whole documents when absent.
    #[arg(long)]
    piece_len: Option<usize>,
    #[arg(long)]
    output: PathBuf,
}

fn cmd_make_pretrain_data(a: MakePretrainDataArgs) -> Result<()> {
    let mut cfg: ObjectiveConfig = read_config(&a.config)?;
    cfg.span = SpanParams {
        min_len: a.span_min.unwrap_or(cfg.span.min_len),
        max_len: a.span_max.unwrap_or(cfg.span.max_len),
    };
    if let Some(t) = a.target_len {
        cfg.max_target_len = t;
        cfg.nsg_target_len = t;
    }
    cfg.validate()?;
    let vocab = load_vocab(&a.vocab)?;
    let docs: Vec<RawDocument> = read_records(&a.corpus)?;
    let pieces = corpus_pieces(&vocab, &docs, a.piece_len, cfg.nsg_target_len);
    let (examples, skipped) = make_pretrain_data(&pieces, a.objective, vocab.len(), &cfg, a.seed);
    if skipped > 0 {
        log::warn!("{skipped} of {} pieces skipped: objective infeasible", pieces.len());
    }
    write_records(&examples, &a.output)?;
    print_json(&serde_json::json!({
        "seed": a.seed,
        "n_pieces": pieces.len(),
        "n_examples": examples.len(),
        "skipped": skipped,
    }))
}

/// Training settings file shared by `pretrain` and `finetune`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
struct TrainFile {
    model: Option<ModelConfig>,
    optimizer: Option<OptimizerConfig>,
    steps: Option<u64>,
    batch_size: Option<usize>,
    eval_every: Option<u64>,
}

#[derive(Args)]
struct TrainFlags {
    #[arg(long)]
    seed: u64,
    /// TrainFile JSON ({"model","optimizer","steps","batch_size","eval_every"}).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    eval_every: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

struct TrainSettings {
    file: TrainFile,
    steps: u64,
    batch_size: usize,
    eval_every: u64,
}

impl TrainFlags {
    fn settings(&self) -> Result<TrainSettings> {
        let file: TrainFile = read_config(&self.config)?;
        let s = TrainSettings {
            steps: self.steps.or(file.steps).unwrap_or(1000),
            batch_size: self.batch_size.or(file.batch_size).unwrap_or(16),
            eval_every: self.eval_every.or(file.eval_every).unwrap_or(250),
            file,
        };
        if s.batch_size == 0 || s.eval_every == 0 {
            bail!("batch size and eval interval must be at least 1");
        }
        Ok(s)
    }
}

#[derive(Serialize)]
struct Point {
    step: u64,
    train_loss: f64,
    valid_ppl: Option<f64>,
}

#[derive(Serialize)]
struct TrainReport {
    seed: u64,
    steps: u64,
    total_steps: u64,
    curve: Vec<Point>,
}

fn train_loop(
    trainer: &mut Trainer<f32>,
    s: &TrainSettings,
    seed: u64,
    valid: &[Batch],
    mut next: impl FnMut() -> Batch,
) -> Result<TrainReport> {
    let mut curve = Vec::new();
    let mut sum = 0.0;
    let mut count = 0;
    for step in 1..=s.steps {
        sum += trainer.step(&next())? as f64;
        count += 1;
        if step % s.eval_every == 0 || step == s.steps {
            let ppl = if valid.is_empty() {
                None
            } else {
                Some(evaluate_perplexity(&trainer.params, valid)?)
            };
            let loss = sum / count as f64;
            log::info!("step {step}: loss {loss:.4} valid ppl {ppl:?}");
            curve.push(Point { step: trainer.steps_taken(), train_loss: loss, valid_ppl: ppl });
            sum = 0.0;
            count = 0;
        }
    }
    Ok(TrainReport {
        seed,
        steps: s.steps,
        total_steps: trainer.steps_taken(),
        curve,
    })
}

fn save_trainer(trainer: &Trainer<f32>, path: &Path) -> Result<()> {
    let ckpt = Checkpoint {
        params: trainer.params.clone(),
        optimizer: Some(trainer.opt.clone()),
        rng: Some(trainer.rng.state()),
    };
    save_checkpoint(path, &ckpt).with_context(|| format!("writing {}", path.display()))
}

#[derive(Args)]
struct PretrainArgs {
    /// PretrainExample JSONL from make-pretrain-data.
    #[arg(long)]
    data: PathBuf,
    /// Held-out examples for perplexity.
    #[arg(long)]
    valid: Option<PathBuf>,
    /// Sets the model vocabulary size.
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// Continue from a checkpoint with its optimizer and RNG state. The
    /// data order continues where the earlier run (with the same seed)
    /// stopped.
    #[arg(long)]
    resume: Option<PathBuf>,
    #[command(flatten)]
    train: TrainFlags,
}

fn cmd_pretrain(a: PretrainArgs) -> Result<()> {
    let s = a.train.settings()?;
    let examples: Vec<PretrainExample> = read_records(&a.data)?;
    if examples.is_empty() {
        bail!("{} has no examples", a.data.display());
    }
    let mut trainer = match &a.resume {
        Some(path) => {
            let ckpt = load_params(path)?;
            let (Some(opt), Some(rng)) = (ckpt.optimizer, ckpt.rng) else {
                bail!("{} has no optimizer or RNG state to resume from", path.display());
            };
            Trainer { params: ckpt.params, opt, rng: Rng::from_state(rng) }
        }
        None => {
            let mut model = s.file.model.clone().unwrap_or_default();
            if let Some(v) = &a.vocab {
                model.vocab_size = load_vocab(v)?.len();
            }
            let opt = s.file.optimizer.unwrap_or_else(OptimizerConfig::desk_pretrain);
            Trainer::new(&model, opt, a.train.seed)?
        }
    };
    let (max_source, max_target) = seq_limits(&trainer.params.config);
    let examples = clip_examples(examples, max_source, max_target);
    let valid: Vec<Batch> = match &a.valid {
        Some(p) => clip_examples(read_records(p)?, max_source, max_target)
            .chunks(s.batch_size)
            .map(batch_of_examples)
            .collect(),
        None => Vec::new(),
    };
    let mut sampler = EpochSampler::new(examples.len(), s.batch_size, derive_seed(a.train.seed, "order"));
    for _ in 0..trainer.steps_taken() {
        sampler.next_indices();
    }
    let report = train_loop(&mut trainer, &s, a.train.seed, &valid, || {
        let picked: Vec<PretrainExample> = sampler.next_indices().into_iter().map(|i| examples[i].clone()).collect();
        batch_of_examples(&picked)
    })?;
    save_trainer(&trainer, &a.train.out)?;
    print_json(&report)
}

/// Truncates examples that exceed the model's position table.
fn clip_examples(mut examples: Vec<PretrainExample>, max_source: usize, max_target: usize) -> Vec<PretrainExample> {
    let mut clipped = 0;
    for e in &mut examples {
        if e.input.len() > max_source || e.target.len() > max_target {
            clipped += 1;
            e.input = truncate(&e.input, max_source);
            e.target = truncate(&e.target, max_target);
        }
    }
    if clipped > 0 {
        log::warn!("{clipped} examples truncated to {max_source}/{max_target} tokens");
    }
    examples
}

fn seq_limits(config: &ModelConfig) -> (usize, usize) {
    (
        seqsum::text::PIECE_LEN.min(config.max_positions),
        seqsum::text::TARGET_LEN.min(config.max_positions - 1),
    )
}

fn pair_tuples(pairs: &[SummaryPair]) -> Vec<(&str, &str)> {
    pairs.iter().map(|p| (p.document.as_str(), p.summary.as_str())).collect()
}

#[derive(Args)]
struct FinetuneArgs {
    #[arg(long)]
    ckpt: PathBuf,
    /// {"id","document","summary"} JSONL.
    #[arg(long)]
    pairs: PathBuf,
    #[arg(long)]
    valid: Option<PathBuf>,
    #[arg(long)]
    vocab: PathBuf,
    #[command(flatten)]
    train: TrainFlags,
}

fn cmd_finetune(a: FinetuneArgs) -> Result<()> {
    let s = a.train.settings()?;
    let vocab = load_vocab(&a.vocab)?;
    let params = load_params(&a.ckpt)?.params;
    if params.config.vocab_size != vocab.len() {
        bail!("checkpoint vocabulary {} differs from {}", params.config.vocab_size, vocab.len());
    }
    let (max_source, max_target) = seq_limits(&params.config);
    let pairs = encode_pairs(&vocab, &pair_tuples(&read_records(&a.pairs)?), max_source, max_target);
    if pairs.is_empty() {
        bail!("{} has no pairs", a.pairs.display());
    }
    let valid: Vec<Batch> = match &a.valid {
        Some(p) => {
            let v = encode_pairs(&vocab, &pair_tuples(&read_records(p)?), max_source, max_target);
            let idx: Vec<usize> = (0..v.len()).collect();
            idx.chunks(s.batch_size).map(|ix| batch_of_pairs(&v, ix)).collect()
        }
        None => Vec::new(),
    };
    let opt = s.file.optimizer.unwrap_or_else(OptimizerConfig::desk_finetune);
    let mut trainer = Trainer::from_params(params, opt, a.train.seed);
    let mut sampler = EpochSampler::new(pairs.len(), s.batch_size, derive_seed(a.train.seed, "order"));
    let report = train_loop(&mut trainer, &s, a.train.seed, &valid, || {
        batch_of_pairs(&pairs, &sampler.next_indices())
    })?;
    save_trainer(&trainer, &a.train.out)?;
    print_json(&report)
}

#[derive(Args)]
struct DecodeFlags {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    /// DecodeConfig JSON; flags below override it.
    #[arg(long)]
    decode_config: Option<PathBuf>,
    #[arg(long)]
    beam: Option<usize>,
    #[arg(long)]
    min_len: Option<usize>,
    #[arg(long)]
    max_len: Option<usize>,
    /// Forbid repeated subword trigrams (on by default).
    #[arg(long, overrides_with = "no_block_trigrams")]
    block_trigrams: bool,
    #[arg(long)]
    no_block_trigrams: bool,
}

struct Decoder {
    params: Seq2SeqParams<f32>,
    vocab: Vocabulary,
    cfg: DecodeConfig,
}

impl DecodeFlags {
    fn load(&self) -> Result<Decoder> {
        let mut cfg: DecodeConfig = read_config(&self.decode_config)?;
        set(&mut cfg.beam_size, self.beam);
        set(&mut cfg.min_len, self.min_len);
        set(&mut cfg.max_len, self.max_len);
        if self.block_trigrams {
            cfg.block_repeated_trigrams = true;
        }
        if self.no_block_trigrams {
            cfg.block_repeated_trigrams = false;
        }
        cfg.validate()?;
        let vocab = load_vocab(&self.vocab)?;
        let params = load_params(&self.ckpt)?.params;
        if params.config.vocab_size != vocab.len() {
            bail!("checkpoint vocabulary {} differs from {}", params.config.vocab_size, vocab.len());
        }
        Ok(Decoder { params, vocab, cfg })
    }
}

impl Decoder {
    fn sources<'a>(&self, docs: impl Iterator<Item = &'a str>) -> Vec<Vec<u32>> {
        let (max_source, _) = seq_limits(&self.params.config);
        docs.map(|d| encode_document(&self.vocab, d, max_source)).collect()
    }

    fn pairs<'a>(&self, pairs: &'a [SummaryPair]) -> Vec<(Vec<u32>, &'a str)> {
        let sources = self.sources(pairs.iter().map(|p| p.document.as_str()));
        sources.into_iter().zip(pairs.iter().map(|p| p.summary.as_str())).collect()
    }
}

/// A document under any of the common field names.
#[derive(Deserialize)]
struct DocRecord {
    id: String,
    #[serde(alias = "document", alias = "article")]
    text: String,
}

#[derive(Serialize)]
struct Decoded {
    id: String,
    summary: String,
    log_prob: f64,
}

#[derive(Args)]
struct DecodeArgs {
    /// Documents as {"id","text"} (or "document"/"article") JSONL.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[command(flatten)]
    decode: DecodeFlags,
}

fn cmd_decode(a: DecodeArgs) -> Result<()> {
    let d = a.decode.load()?;
    let docs: Vec<DocRecord> = read_records(&a.input)?;
    let sources = d.sources(docs.iter().map(|r| r.text.as_str()));
    let hyps = decode_corpus(&d.params, &sources, &d.cfg)?;
    let out = docs
        .into_iter()
        .zip(hyps)
        .map(|(r, h)| {
            Ok(Decoded {
                id: r.id,
                summary: d.vocab.decode(h.content())?.trim().to_string(),
                log_prob: h.log_prob,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    write_records(&out, &a.output)
}

#[derive(Deserialize)]
struct RougeRecord {
    candidate: String,
    reference: String,
}

#[derive(Args)]
struct RougeArgs {
    /// {"candidate","reference"} JSONL.
    #[arg(long)]
    pairs: PathBuf,
    #[arg(long, default_value = "rl")]
    variant: RougeVariant,
    #[arg(long, default_value = "f1")]
    protocol: EvalProtocol,
}

fn cmd_rouge(a: RougeArgs) -> Result<()> {
    let records: Vec<RougeRecord> = read_records(&a.pairs)?;
    let pairs: Vec<(&str, &str)> = records.iter().map(|r| (r.candidate.as_str(), r.reference.as_str())).collect();
    print_json(&score_corpus(&pairs, a.variant, a.protocol)?)
}

#[derive(Clone, Copy, ValueEnum)]
enum AlignArg {
    Rouge2F1,
    BigramOverlap,
}

#[derive(Deserialize)]
struct ReorderRecord {
    #[serde(alias = "text", alias = "article")]
    document: String,
    #[serde(alias = "reference", alias = "highlights")]
    summary: String,
}

#[derive(Args)]
struct AnalyzeReorderArgs {
    /// {"document","summary"} JSONL ("reference" is accepted for the summary).
    #[arg(long)]
    pairs: PathBuf,
    #[arg(long, value_enum, default_value = "rouge2-f1")]
    align: AlignArg,
}

fn cmd_analyze_reorder(a: AnalyzeReorderArgs) -> Result<()> {
    let records: Vec<ReorderRecord> = read_records(&a.pairs)?;
    let pairs: Vec<(&str, &str)> = records.iter().map(|r| (r.document.as_str(), r.summary.as_str())).collect();
    let score = match a.align {
        AlignArg::Rouge2F1 => AlignScore::Rouge2F1,
        AlignArg::BigramOverlap => AlignScore::BigramOverlap,
    };
    print_json(&corpus_reorder_stat(&pairs, score)?)
}

#[derive(Args)]
struct Lead3Args {
    #[arg(long)]
    docs: PathBuf,
    #[arg(long)]
    output: PathBuf,
}

fn cmd_lead3(a: Lead3Args) -> Result<()> {
    let docs: Vec<DocRecord> = read_records(&a.docs)?;
    let out: Vec<BTreeMap<&str, String>> = docs
        .into_iter()
        .map(|d| BTreeMap::from([("id", d.id), ("summary", lead3(&segment_sentences(&d.text)))]))
        .collect();
    write_records(&out, &a.output)
}

fn parse_beams(s: &str) -> Result<Vec<usize>, String> {
    let bad = || format!("expected `lo-hi` or a comma list, got `{s}`");
    if let Some((lo, hi)) = s.split_once('-') {
        let lo: usize = lo.trim().parse().map_err(|_| bad())?;
        let hi: usize = hi.trim().parse().map_err(|_| bad())?;
        return Ok((lo..=hi).collect());
    }
    s.split(',').map(|b| b.trim().parse().map_err(|_| bad())).collect()
}

#[derive(Args)]
struct BeamSweepArgs {
    /// {"id","document","summary"} JSONL.
    #[arg(long)]
    pairs: PathBuf,
    #[arg(long, default_value = "1-10", value_parser = parse_beams)]
    beams: std::vec::Vec<usize>,
    #[command(flatten)]
    decode: DecodeFlags,
}

fn cmd_beam_sweep(a: BeamSweepArgs) -> Result<()> {
    let d = a.decode.load()?;
    let records: Vec<SummaryPair> = read_records(&a.pairs)?;
    let rows = beam_sweep(&d.params, &d.vocab, &d.pairs(&records), &a.beams, &d.cfg)?;
    print_json(&rows)
}

#[derive(Args)]
struct TuneMinLenArgs {
    /// {"id","document","summary"} JSONL.
    #[arg(long)]
    pairs: PathBuf,
    #[arg(long, default_value_t = 30)]
    lo: usize,
    #[arg(long, default_value_t = 80)]
    hi: usize,
    #[arg(long, default_value_t = 5)]
    step: usize,
    #[command(flatten)]
    decode: DecodeFlags,
}

fn cmd_tune_min_len(a: TuneMinLenArgs) -> Result<()> {
    let d = a.decode.load()?;
    let records: Vec<SummaryPair> = read_records(&a.pairs)?;
    let t = tune_min_length(&d.params, &d.vocab, &d.pairs(&records), a.lo, a.hi, a.step, &d.cfg)?;
    print_json(&t)
}

#[derive(Args)]
struct RunExperimentArgs {
    /// RunConfig JSON; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    objective: Option<ObjectiveChoice>,
    #[arg(long)]
    vocab_size: Option<usize>,
    #[arg(long)]
    pretrain_steps: Option<u64>,
    #[arg(long)]
    finetune_steps: Option<u64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    beam: Option<usize>,
    #[arg(long)]
    min_len: Option<usize>,
    #[arg(long)]
    max_len: Option<usize>,
    #[arg(long)]
    protocol: Option<EvalProtocol>,
}

fn cmd_run_experiment(a: RunExperimentArgs) -> Result<()> {
    let mut cfg: RunConfig = read_config(&a.config)?;
    cfg.seed = a.seed;
    set(&mut cfg.objective, a.objective);
    set(&mut cfg.vocab_size, a.vocab_size);
    set(&mut cfg.pretrain.steps, a.pretrain_steps);
    set(&mut cfg.finetune.steps, a.finetune_steps);
    if let Some(b) = a.batch_size {
        cfg.pretrain.batch_size = b;
        cfg.finetune.batch_size = b;
    }
    set(&mut cfg.decode.beam_size, a.beam);
    set(&mut cfg.decode.min_len, a.min_len);
    set(&mut cfg.decode.max_len, a.max_len);
    set(&mut cfg.protocol, a.protocol);
    let manifest = run_experiment(&cfg, &a.out)?;
    print_json(&serde_json::json!({
        "seed": manifest.seed,
        "config_hash": manifest.config_hash,
        "manifest": a.out.join("manifest.json"),
        "rouge": manifest.metrics.rouge,
    }))
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Ingest(a) => cmd_ingest(a),
        Command::GenSynthetic(a) => cmd_gen_synthetic(a),
        Command::TrainBpe(a) => cmd_train_bpe(a),
        Command::MakePretrainData(a) => cmd_make_pretrain_data(a),
        Command::Pretrain(a) => cmd_pretrain(a),
        Command::Finetune(a) => cmd_finetune(a),
        Command::Decode(a) => cmd_decode(a),
        Command::Rouge(a) => cmd_rouge(a),
        Command::AnalyzeReorder(a) => cmd_analyze_reorder(a),
        Command::Lead3(a) => cmd_lead3(a),
        Command::BeamSweep(a) => cmd_beam_sweep(a),
        Command::TuneMinLen(a) => cmd_tune_min_len(a),
        Command::RunExperiment(a) => cmd_run_experiment(a),
    }
}
