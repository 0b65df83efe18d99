//! Pre-train, fine-tune, decode and score in one run, with a manifest.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::data::{
    batch_of_examples, batch_of_pairs, corpus_pieces, encode_pairs, make_pretrain_data, EpochSampler,
    ObjectiveChoice, PretrainStream,
};
use super::synthetic::{gen_synthetic, SyntheticSpec};
use super::SummaryPair;
use crate::decoding::{decode_corpus, tune_min_length, DecodeConfig, MinLenTuning};
use crate::model::{
    evaluate_perplexity, save_checkpoint, Batch, Checkpoint, ModelConfig, OptimizerConfig, Seq2SeqParams,
    Trainer,
};
use crate::objectives::{derive_seed, ObjectiveConfig};
use crate::reorder::lead3;
use crate::rouge::{score_corpus, EvalProtocol, RougeVariant};
use crate::text::{read_jsonl_file, segment_sentences, train_bpe, write_jsonl_file, RawDocument, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Config,
    Data,
    Vocab,
    Pretrain,
    Finetune,
    Decode,
    Score,
    Output,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("unit variant");
        write!(f, "{}", s.as_str().unwrap_or("?"))
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{stage} stage: {message}")]
pub struct PipelineError {
    pub stage: Stage,
    pub message: String,
}

pub trait StageContext<T> {
    fn stage(self, stage: Stage) -> Result<T, PipelineError>;
}

impl<T, E: fmt::Display> StageContext<T> for Result<T, E> {
    fn stage(self, stage: Stage) -> Result<T, PipelineError> {
        self.map_err(|e| PipelineError {
            stage,
            message: e.to_string(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum DataConfig {
    /// Generated corpus, split into train / validation / test by count.
    Synthetic {
        spec: SyntheticSpec,
        n_valid: usize,
        n_test: usize,
    },
    /// User-supplied JSONL. Pre-training uses `corpus` (`{"id","text"}`)
    /// when given, otherwise the training documents.
    Files {
        corpus: Option<PathBuf>,
        train: PathBuf,
        valid: PathBuf,
        test: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageConfig {
    pub steps: u64,
    pub batch_size: usize,
    /// Validation perplexity every this many steps (and at start and end).
    pub eval_every: u64,
    pub optimizer: OptimizerConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MinLenRange {
    pub lo: usize,
    pub hi: usize,
    pub step: usize,
}

impl Default for MinLenRange {
    fn default() -> Self {
        Self { lo: 30, hi: 80, step: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub data: DataConfig,
    /// BPE vocabulary target; the model uses the size actually learned.
    pub vocab_size: usize,
    pub model: ModelConfig,
    pub objective: ObjectiveChoice,
    pub objectives: ObjectiveConfig,
    /// Piece length in tokens; `None` keeps whole documents.
    pub piece_len: Option<usize>,
    pub pretrain: StageConfig,
    pub finetune: StageConfig,
    pub decode: DecodeConfig,
    /// Tune `min_len` on validation pairs before decoding the test set.
    pub tune_min_len: Option<MinLenRange>,
    pub protocol: EvalProtocol,
    /// Cap on validation examples / pairs used for perplexity and tuning.
    pub max_valid: usize,
    /// Also score the model before any training.
    pub untrained_baseline: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            data: DataConfig::Synthetic {
                spec: SyntheticSpec::default(),
                n_valid: 100,
                n_test: 100,
            },
            vocab_size: 1000,
            model: ModelConfig::default(),
            objective: ObjectiveChoice::Sr,
            objectives: ObjectiveConfig::default(),
            piece_len: None,
            pretrain: StageConfig {
                steps: 1000,
                batch_size: 16,
                eval_every: 250,
                optimizer: OptimizerConfig::desk_pretrain(),
            },
            finetune: StageConfig {
                steps: 500,
                batch_size: 16,
                eval_every: 250,
                optimizer: OptimizerConfig::desk_finetune(),
            },
            decode: DecodeConfig {
                max_len: 64,
                ..Default::default()
            },
            tune_min_len: None,
            protocol: EvalProtocol::FullLengthF1,
            max_valid: 200,
            untrained_baseline: true,
        }
    }
}

impl RunConfig {
    pub fn hash(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("config serializes"))
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        self.model.validate().stage(Stage::Config)?;
        self.objectives.validate().stage(Stage::Config)?;
        self.decode.validate().stage(Stage::Config)?;
        for s in [&self.pretrain, &self.finetune] {
            if s.batch_size == 0 || s.eval_every == 0 {
                return Err(PipelineError {
                    stage: Stage::Config,
                    message: "batch_size and eval_every must be at least 1".into(),
                });
            }
        }
        match &self.data {
            DataConfig::Synthetic { spec, n_valid, n_test } => {
                spec.validate().stage(Stage::Config)?;
                if n_valid + n_test >= spec.n_docs || *n_valid == 0 || *n_test == 0 {
                    return Err(PipelineError {
                        stage: Stage::Config,
                        message: "need 1 <= n_valid, 1 <= n_test and n_valid + n_test < n_docs".into(),
                    });
                }
            }
            DataConfig::Files { corpus, train, valid, test } => {
                for p in corpus.iter().chain([train, valid, test]) {
                    if !p.is_file() {
                        return Err(PipelineError {
                            stage: Stage::Config,
                            message: format!("{} is not a readable file", p.display()),
                        });
                    }
                }
            }
        }
        Ok(())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn file_hash(path: &Path) -> Result<String, std::io::Error> {
    Ok(sha256_hex(&std::fs::read(path)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub step: u64,
    /// Mean training loss since the previous point (absent at step 0).
    pub train_loss: Option<f64>,
    pub valid_ppl: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub steps: u64,
    pub initial_valid_ppl: f64,
    pub final_valid_ppl: f64,
    pub curve: Vec<CurvePoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemScore {
    pub system: String,
    pub variant: RougeVariant,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub seed: u64,
    pub config_hash: String,
    pub vocab_size: usize,
    pub pretrain_pieces: usize,
    pub pretrain: StageReport,
    /// Objective drawn per pre-training batch.
    pub objective_draws: BTreeMap<String, usize>,
    pub finetune: StageReport,
    pub min_len_tuning: Option<MinLenTuning>,
    pub min_len: usize,
    pub protocol: EvalProtocol,
    pub n_test: usize,
    pub rouge: Vec<SystemScore>,
}

impl Metrics {
    /// Headline score (F1 or recall per protocol) of one system and variant.
    pub fn score(&self, system: &str, variant: RougeVariant) -> Option<f64> {
        self.rouge
            .iter()
            .find(|s| s.system == system && s.variant == variant)
            .map(|s| match self.protocol {
                EvalProtocol::FullLengthF1 => s.f1,
                EvalProtocol::LimitedLengthRecall => s.recall,
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub config_hash: String,
    pub config: RunConfig,
    /// SHA-256 of every input, keyed by role.
    pub inputs: BTreeMap<String, String>,
    /// SHA-256 of every output file, keyed by file name.
    pub outputs: BTreeMap<String, String>,
    pub metrics: Metrics,
}

struct Data {
    pretrain_docs: Vec<RawDocument>,
    train: Vec<SummaryPair>,
    valid: Vec<SummaryPair>,
    test: Vec<SummaryPair>,
    inputs: BTreeMap<String, String>,
}

fn load_data(cfg: &RunConfig) -> Result<Data, PipelineError> {
    match &cfg.data {
        DataConfig::Synthetic { spec, n_valid, n_test } => {
            let corpus = gen_synthetic(spec, cfg.seed).stage(Stage::Data)?;
            let mut bytes = Vec::new();
            crate::text::write_jsonl(&corpus.pairs, &mut bytes).stage(Stage::Data)?;
            let mut pairs = corpus.pairs;
            let test = pairs.split_off(pairs.len() - n_test);
            let valid = pairs.split_off(pairs.len() - n_valid);
            let pretrain_docs = pairs
                .iter()
                .map(|p| RawDocument::new(p.id.clone(), p.document.clone()))
                .collect();
            Ok(Data {
                pretrain_docs,
                train: pairs,
                valid,
                test,
                inputs: BTreeMap::from([("synthetic".to_string(), sha256_hex(&bytes))]),
            })
        }
        DataConfig::Files { corpus, train, valid, test } => {
            let mut inputs = BTreeMap::new();
            let mut read = |role: &str, path: &Path| -> Result<Vec<SummaryPair>, PipelineError> {
                inputs.insert(role.to_string(), file_hash(path).stage(Stage::Data)?);
                read_jsonl_file(path).stage(Stage::Data)
            };
            let train = read("train", train)?;
            let valid = read("valid", valid)?;
            let test = read("test", test)?;
            let pretrain_docs = match corpus {
                Some(path) => {
                    inputs.insert("corpus".into(), file_hash(path).stage(Stage::Data)?);
                    read_jsonl_file(path).stage(Stage::Data)?
                }
                None => train
                    .iter()
                    .map(|p| RawDocument::new(p.id.clone(), p.document.clone()))
                    .collect(),
            };
            if train.is_empty() || valid.is_empty() || test.is_empty() || pretrain_docs.is_empty() {
                return Err(PipelineError {
                    stage: Stage::Data,
                    message: "train, valid, test and pre-training corpus must be non-empty".into(),
                });
            }
            Ok(Data { pretrain_docs, train, valid, test, inputs })
        }
    }
}

fn chunk_batches<T>(items: &[T], size: usize, make: impl Fn(&[T]) -> Batch) -> Vec<Batch> {
    items.chunks(size).map(make).collect()
}

fn train_stage(
    trainer: &mut Trainer<f32>,
    cfg: &StageConfig,
    valid: &[Batch],
    stage: Stage,
    mut next_batch: impl FnMut() -> Batch,
) -> Result<StageReport, PipelineError> {
    let initial = evaluate_perplexity(&trainer.params, valid).stage(stage)?;
    let mut curve = vec![CurvePoint { step: 0, train_loss: None, valid_ppl: initial }];
    let (mut sum, mut count) = (0.0, 0u64);
    for step in 1..=cfg.steps {
        let batch = next_batch();
        sum += trainer.step(&batch).stage(stage)? as f64;
        count += 1;
        if step % cfg.eval_every == 0 || step == cfg.steps {
            let ppl = evaluate_perplexity(&trainer.params, valid).stage(stage)?;
            log::info!("{stage} step {step}: train loss {:.4}, valid ppl {ppl:.3}", sum / count as f64);
            curve.push(CurvePoint { step, train_loss: Some(sum / count as f64), valid_ppl: ppl });
            (sum, count) = (0.0, 0);
        }
    }
    Ok(StageReport {
        steps: cfg.steps,
        initial_valid_ppl: initial,
        final_valid_ppl: curve.last().expect("non-empty").valid_ppl,
        curve,
    })
}

fn score_system(
    name: &str,
    outputs: &[String],
    refs: &[SummaryPair],
    protocol: EvalProtocol,
) -> Result<Vec<SystemScore>, PipelineError> {
    let pairs: Vec<(&str, &str)> = outputs.iter().zip(refs).map(|(o, r)| (o.as_str(), r.summary.as_str())).collect();
    [RougeVariant::R1, RougeVariant::R2, RougeVariant::Rl]
        .into_iter()
        .map(|variant| {
            let s = score_corpus(&pairs, variant, protocol).stage(Stage::Score)?;
            Ok(SystemScore {
                system: name.to_string(),
                variant,
                precision: s.precision,
                recall: s.recall,
                f1: s.f1,
            })
        })
        .collect()
}

fn decode_texts(
    params: &Seq2SeqParams<f32>,
    vocab: &Vocabulary,
    sources: &[Vec<u32>],
    cfg: &DecodeConfig,
) -> Result<(Vec<String>, Vec<f64>), PipelineError> {
    let hyps = decode_corpus(params, sources, cfg).stage(Stage::Decode)?;
    let texts = hyps
        .iter()
        .map(|h| Ok(vocab.decode(h.content()).stage(Stage::Decode)?.trim().to_string()))
        .collect::<Result<_, PipelineError>>()?;
    Ok((texts, hyps.iter().map(|h| h.log_prob).collect()))
}

#[derive(Serialize)]
struct DecodedRecord<'a> {
    id: &'a str,
    summary: &'a str,
    log_prob: f64,
    seed: u64,
    config_hash: &'a str,
}

/// Runs every stage and writes `vocab.txt`, `pretrain.ckpt`,
/// `finetune.ckpt`, `decoded.jsonl`, `metrics.json` and `manifest.json` into
/// `out_dir`. Identical configs give identical metrics.
pub fn run_experiment(cfg: &RunConfig, out_dir: &Path) -> Result<Manifest, PipelineError> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir).stage(Stage::Output)?;
    let config_hash = cfg.hash();
    let data = load_data(cfg)?;

    let vocab = train_bpe(&data.pretrain_docs, cfg.vocab_size).stage(Stage::Vocab)?;
    vocab.save(&out_dir.join("vocab.txt")).stage(Stage::Output)?;
    let model_cfg = ModelConfig { vocab_size: vocab.len(), ..cfg.model.clone() };
    let max_source = cfg.objectives.max_input_len.min(model_cfg.max_positions);
    let max_target = cfg.objectives.max_target_len.min(model_cfg.max_positions - 1);
    let obj_cfg = ObjectiveConfig {
        max_input_len: max_source,
        max_target_len: max_target,
        ..cfg.objectives
    };

    // Pre-training.
    let following = obj_cfg.nsg_target_len;
    let pieces = corpus_pieces(&vocab, &data.pretrain_docs, cfg.piece_len, following);
    let valid_docs: Vec<RawDocument> = data
        .valid
        .iter()
        .take(cfg.max_valid)
        .map(|p| RawDocument::new(p.id.clone(), p.document.clone()))
        .collect();
    let valid_pieces = corpus_pieces(&vocab, &valid_docs, cfg.piece_len, following);
    let (valid_examples, _) = make_pretrain_data(
        &valid_pieces,
        cfg.objective,
        vocab.len(),
        &obj_cfg,
        derive_seed(cfg.seed, "valid"),
    );
    if valid_examples.is_empty() {
        return Err(PipelineError {
            stage: Stage::Pretrain,
            message: "no validation pieces support the objective".into(),
        });
    }
    let pre_valid = chunk_batches(&valid_examples, cfg.pretrain.batch_size, batch_of_examples);
    let mut stream = PretrainStream::new(
        &pieces,
        cfg.objective,
        vocab.len(),
        obj_cfg,
        cfg.pretrain.batch_size,
        derive_seed(cfg.seed, "pretrain-data"),
    )
    .ok_or_else(|| PipelineError {
        stage: Stage::Pretrain,
        message: "no pre-training pieces support the objective".into(),
    })?;
    let mut trainer: Trainer<f32> =
        Trainer::new(&model_cfg, cfg.pretrain.optimizer, cfg.seed).stage(Stage::Pretrain)?;
    let untrained = trainer.params.clone();
    let pretrain = train_stage(&mut trainer, &cfg.pretrain, &pre_valid, Stage::Pretrain, || {
        batch_of_examples(&stream.next_batch().1)
    })?;
    let objective_draws = stream.draws.iter().map(|(o, n)| (o.name().to_string(), *n)).collect();
    let ckpt = Checkpoint {
        params: trainer.params.clone(),
        optimizer: Some(trainer.opt.clone()),
        rng: Some(trainer.rng.state()),
    };
    save_checkpoint(&out_dir.join("pretrain.ckpt"), &ckpt).stage(Stage::Output)?;

    // Fine-tuning.
    let as_tuples = |ps: &[SummaryPair]| -> Vec<(String, String)> {
        ps.iter().map(|p| (p.document.clone(), p.summary.clone())).collect()
    };
    let train_pairs = encode_pairs(&vocab, &as_tuples(&data.train), max_source, max_target);
    let valid_slice = &data.valid[..data.valid.len().min(cfg.max_valid)];
    let valid_pairs = encode_pairs(&vocab, &as_tuples(valid_slice), max_source, max_target);
    let valid_idx: Vec<usize> = (0..valid_pairs.len()).collect();
    let fine_valid = chunk_batches(&valid_idx, cfg.finetune.batch_size, |ix| batch_of_pairs(&valid_pairs, ix));
    let mut fine = Trainer::from_params(trainer.params, cfg.finetune.optimizer, derive_seed(cfg.seed, "finetune"));
    let mut sampler = EpochSampler::new(train_pairs.len(), cfg.finetune.batch_size, derive_seed(cfg.seed, "finetune-order"));
    let finetune = train_stage(&mut fine, &cfg.finetune, &fine_valid, Stage::Finetune, || {
        batch_of_pairs(&train_pairs, &sampler.next_indices())
    })?;
    let ckpt = Checkpoint {
        params: fine.params.clone(),
        optimizer: Some(fine.opt.clone()),
        rng: Some(fine.rng.state()),
    };
    save_checkpoint(&out_dir.join("finetune.ckpt"), &ckpt).stage(Stage::Output)?;

    // Decoding.
    let mut decode_cfg = cfg.decode.clone();
    let min_len_tuning = match cfg.tune_min_len {
        Some(r) => {
            let pairs: Vec<(&[u32], &str)> = valid_pairs
                .iter()
                .zip(valid_slice)
                .map(|((s, _), p)| (&s[..], p.summary.as_str()))
                .collect();
            let t = tune_min_length(&fine.params, &vocab, &pairs, r.lo, r.hi, r.step, &decode_cfg)
                .stage(Stage::Decode)?;
            decode_cfg.min_len = t.best_min_len;
            decode_cfg.max_len = decode_cfg.max_len.max(t.best_min_len);
            Some(t)
        }
        None => None,
    };
    let test_sources: Vec<Vec<u32>> = encode_pairs(&vocab, &as_tuples(&data.test), max_source, max_target)
        .into_iter()
        .map(|(s, _)| s)
        .collect();
    let (texts, log_probs) = decode_texts(&fine.params, &vocab, &test_sources, &decode_cfg)?;
    let records: Vec<DecodedRecord> = data
        .test
        .iter()
        .zip(&texts)
        .zip(&log_probs)
        .map(|((p, t), &lp)| DecodedRecord {
            id: &p.id,
            summary: t,
            log_prob: lp,
            seed: cfg.seed,
            config_hash: &config_hash,
        })
        .collect();
    write_jsonl_file(&records, &out_dir.join("decoded.jsonl")).stage(Stage::Output)?;

    // Scoring.
    let mut rouge = score_system("model", &texts, &data.test, cfg.protocol)?;
    let leads: Vec<String> = data.test.iter().map(|p| lead3(&segment_sentences(&p.document))).collect();
    rouge.extend(score_system("lead3", &leads, &data.test, cfg.protocol)?);
    if cfg.untrained_baseline {
        let (texts, _) = decode_texts(&untrained, &vocab, &test_sources, &decode_cfg)?;
        rouge.extend(score_system("untrained", &texts, &data.test, cfg.protocol)?);
    }

    let metrics = Metrics {
        seed: cfg.seed,
        config_hash: config_hash.clone(),
        vocab_size: vocab.len(),
        pretrain_pieces: stream.n_pieces(),
        pretrain,
        objective_draws,
        finetune,
        min_len_tuning,
        min_len: decode_cfg.min_len,
        protocol: cfg.protocol,
        n_test: data.test.len(),
        rouge,
    };
    let metrics_path = out_dir.join("metrics.json");
    std::fs::write(&metrics_path, serde_json::to_vec_pretty(&metrics).stage(Stage::Output)?).stage(Stage::Output)?;
    let mut outputs = BTreeMap::new();
    for name in ["vocab.txt", "pretrain.ckpt", "finetune.ckpt", "decoded.jsonl", "metrics.json"] {
        outputs.insert(name.to_string(), file_hash(&out_dir.join(name)).stage(Stage::Output)?);
    }
    let manifest = Manifest {
        seed: cfg.seed,
        config_hash,
        config: cfg.clone(),
        inputs: data.inputs,
        outputs,
        metrics,
    };
    std::fs::write(
        out_dir.join("manifest.json"),
        serde_json::to_vec_pretty(&manifest).stage(Stage::Output)?,
    )
    .stage(Stage::Output)?;
    Ok(manifest)
}
