use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use safediff_core::denoiser::{
    smoothed, Checkpoint, Denoiser, DenoiserError, OracleDenoiser, Trainer,
    UniformDenoiser,
};
use safediff_core::grammar::{check, parse, MolGraph, TokenId, TokenTable};
use safediff_core::guidance::GuidanceParams;
use safediff_core::io::{read_corpus, tokenize_corpus, write_atomic};
use safediff_core::metrics::{score_molecule, set_metrics_from_scores, MoleculeScore};
use safediff_core::optimizer::{
    auc_topk, optimize as run_optimizer, score_seeds, CompositionOracle, HeteroRingOracle, Mode,
    OptimizerError, PropertyOracle, SeedSet, SimilarityOracle,
};
use safediff_core::sampler::{generate as sample, stream_rng, LengthModel, SamplerError};
use safediff_core::tasks::{preserves_template, task_template, Task};

use crate::config::RunConfig;
use crate::error::{runtime, CliError};

fn read_lines(path: &Path, what: &str) -> Result<Vec<String>, CliError> {
    if !path.is_file() {
        return Err(CliError::Usage(format!("{what} not found: {}", path.display())));
    }
    let lines = read_corpus(path).map_err(|e| CliError::Usage(format!("cannot read {what} {}: {e}", path.display())))?;
    if lines.is_empty() {
        return Err(CliError::Usage(format!("{what} {} has no sequences", path.display())));
    }
    Ok(lines)
}

fn read_tokens(path: &Path, what: &str) -> Result<Vec<Vec<TokenId>>, CliError> {
    tokenize_corpus(&read_lines(path, what)?)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn ensure_out_dir(cfg: &RunConfig) -> Result<(), CliError> {
    std::fs::create_dir_all(&cfg.out_dir)
        .map_err(|e| runtime(format!("cannot create {}: {e}", cfg.out_dir.display())))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    write_atomic(path, bytes).map_err(|e| runtime(format!("cannot write {}: {e}", path.display())))
}

fn write_json(path: &Path, v: &impl Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(v).map_err(runtime)?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    let mut text = String::new();
    for r in rows {
        text.push_str(&serde_json::to_string(r).map_err(runtime)?);
        text.push('\n');
    }
    write_file(path, text.as_bytes())
}

/// Git-style object hash: SHA-256 over `blob <len>\0` followed by the content.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    let mut out = String::from("sha256:");
    for b in h.finalize().iter() {
        let _ = write!(out, "{b:02x}");
    }
    out
}

fn write_manifest(
    cfg: &RunConfig,
    command: &str,
    checkpoint: Option<&Path>,
    outputs: &[PathBuf],
) -> Result<(), CliError> {
    let ckpt = match checkpoint {
        Some(p) => {
            let bytes = std::fs::read(p).map_err(|e| runtime(format!("{}: {e}", p.display())))?;
            json!({ "path": p, "hash": content_hash(&bytes) })
        }
        None => Value::Null,
    };
    let manifest = json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "seed": cfg.seed,
        "config": cfg,
        "checkpoint": ckpt,
        "outputs": outputs,
    });
    write_json(&cfg.out_dir.join("manifest.json"), &manifest)
}

// ------------------------------------------------------------------ train

pub fn train(cfg: &RunConfig) -> Result<(), CliError> {
    let corpus_path = cfg
        .corpus
        .as_deref()
        .ok_or_else(|| CliError::Usage("train needs `corpus`".into()))?;
    let corpus = read_tokens(corpus_path, "corpus")?;
    ensure_out_dir(cfg)?;
    let mut trainer = Trainer::new(&corpus, cfg.model(), cfg.train()).map_err(|e| match e {
        DenoiserError::Precondition(_) | DenoiserError::InvalidCorpus(_) | DenoiserError::EmptyCorpus => {
            CliError::Usage(e.to_string())
        }
        other => runtime(other),
    })?;
    let total = cfg.steps;
    while trainer.steps_done() < total {
        let loss = trainer.step().map_err(runtime)?;
        let done = trainer.steps_done();
        if done % 250 == 0 || done == total {
            eprintln!("step {done}/{total} loss {loss:.4}");
        }
    }
    let ckpt_path = cfg.checkpoint.clone().unwrap_or_else(|| cfg.out_dir.join("model.ckpt"));
    trainer.checkpoint().save(&ckpt_path).map_err(runtime)?;

    let losses = trainer.losses();
    let smooth = smoothed(losses, 50);
    let mut csv = String::from("step,loss,smoothed\n");
    for (i, (l, s)) in losses.iter().zip(&smooth).enumerate() {
        let _ = writeln!(csv, "{},{l},{s}", i + 1);
    }
    let loss_path = cfg.out_dir.join("loss.csv");
    write_file(&loss_path, csv.as_bytes())?;
    write_manifest(cfg, "train", Some(&ckpt_path), &[ckpt_path.clone(), loss_path])?;
    eprintln!("wrote {}", ckpt_path.display());
    Ok(())
}

// ------------------------------------------------------------------ shared

struct Model {
    denoiser: Box<dyn Denoiser>,
    max_len: usize,
    checkpoint: Option<PathBuf>,
    /// Sequences behind an oracle denoiser, used for length models when no corpus is given.
    corpus: Option<Vec<Vec<TokenId>>>,
}

fn load_model(cfg: &RunConfig, required: bool) -> Result<Model, CliError> {
    if let Some(p) = &cfg.oracle_corpus {
        let seqs = read_tokens(p, "oracle corpus")?;
        let d = OracleDenoiser::uniform(seqs.clone()).map_err(|e| CliError::Usage(e.to_string()))?;
        return Ok(Model {
            denoiser: Box::new(d),
            max_len: cfg.max_len,
            checkpoint: None,
            corpus: Some(seqs),
        });
    }
    match &cfg.checkpoint {
        Some(p) => {
            if !p.is_file() {
                return Err(CliError::Usage(format!("checkpoint not found: {}", p.display())));
            }
            let model = Checkpoint::load(p)
                .and_then(|c| c.to_model())
                .map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
            Ok(Model {
                max_len: model.config.max_len,
                denoiser: Box::new(model),
                checkpoint: Some(p.clone()),
                corpus: None,
            })
        }
        None if !required => Ok(Model {
            denoiser: Box::new(UniformDenoiser),
            max_len: cfg.max_len,
            checkpoint: None,
            corpus: None,
        }),
        None => Err(CliError::Usage(
            "a `checkpoint` or `oracle_corpus` is needed to run the denoiser".into(),
        )),
    }
}

fn length_corpus(cfg: &RunConfig, model: &Model) -> Result<Vec<Vec<TokenId>>, CliError> {
    if let Some(p) = &cfg.corpus {
        return read_tokens(p, "corpus");
    }
    model.corpus.clone().ok_or_else(|| {
        CliError::Usage("length models need `corpus` (or `oracle_corpus`)".into())
    })
}

fn usage_or_runtime(e: SamplerError) -> CliError {
    match e {
        SamplerError::InvalidParams(_) | SamplerError::EmptyHistogram | SamplerError::Guidance(_) => {
            CliError::Usage(e.to_string())
        }
        other => runtime(other),
    }
}

fn per_run_guidance(cfg: &RunConfig, i: u64) -> Option<GuidanceParams> {
    let g = cfg.guidance();
    g.is_active().then(|| GuidanceParams {
        seed: stream_rng(g.seed, i).gen(),
        ..g
    })
}

// ------------------------------------------------------------------ generate

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenerateRecord {
    pub index: usize,
    pub task: String,
    pub template: String,
    pub sequence: String,
    pub valid: bool,
    pub canonical: Option<String>,
    pub qed: Option<f64>,
    pub sa: Option<f64>,
    pub preserved: bool,
    pub calls: usize,
}

pub fn generate(cfg: &RunConfig) -> Result<(), CliError> {
    let task: Task = cfg.task.parse().map_err(|_| {
        CliError::Usage(format!("generate runs fragment-constrained tasks, not {:?}", cfg.task))
    })?;
    let model = load_model(cfg, true)?;
    let corpus = length_corpus(cfg, &model)?;
    let lengths = if task == Task::Denovo {
        LengthModel::from_corpus(&corpus, model.max_len)
    } else {
        LengthModel::fragment_spans(&corpus)
    }
    .map_err(usage_or_runtime)?;
    // surface template errors once, before the batch
    task_template(task, &cfg.inputs, &lengths, model.max_len, &mut ChaCha8Rng::seed_from_u64(cfg.seed))
        .map_err(|e| CliError::Usage(e.to_string()))?;
    ensure_out_dir(cfg)?;

    let table = TokenTable::standard();
    let params = cfg.sampler();
    let records: Vec<GenerateRecord> = (0..cfg.num_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(params.seed, i as u64);
            let template = task_template(task, &cfg.inputs, &lengths, model.max_len, &mut rng)
                .map_err(|e| CliError::Usage(e.to_string()))?;
            let g = per_run_guidance(cfg, i as u64);
            let out = sample(model.denoiser.as_ref(), &template, &params, g.as_ref(), &mut rng)
                .map_err(usage_or_runtime)?;
            let sequence = table.detokenize(&out.ids);
            let score = score_molecule(&sequence);
            Ok(GenerateRecord {
                index: i,
                task: task.name().into(),
                template: table.detokenize(&template.ids),
                preserved: preserves_template(&template, &out.ids),
                sequence,
                valid: score.valid,
                canonical: score.canonical,
                qed: score.qed,
                sa: score.sa,
                calls: out.calls,
            })
        })
        .collect::<Result<_, CliError>>()?;

    let scores: Vec<MoleculeScore> = records.iter().map(record_score).collect();
    let metrics = set_metrics_from_scores(&scores);
    let results = cfg.out_dir.join("results.jsonl");
    let metrics_path = cfg.out_dir.join("metrics.json");
    write_jsonl(&results, &records)?;
    write_json(
        &metrics_path,
        &json!({
            "task": task.name(),
            "metrics": metrics,
            "constraint_preserved": records.iter().filter(|r| r.preserved).count(),
            "denoiser_calls": records.iter().map(|r| r.calls).sum::<usize>(),
        }),
    )?;
    let mut outputs = vec![results, metrics_path];
    if cfg.csv {
        let p = cfg.out_dir.join("molecules.csv");
        write_file(&p, scores_csv(&scores).as_bytes())?;
        outputs.push(p);
    }
    write_manifest(cfg, "generate", model.checkpoint.as_deref(), &outputs)?;
    println!("{}", serde_json::to_string(&metrics).map_err(runtime)?);
    Ok(())
}

fn record_score(r: &GenerateRecord) -> MoleculeScore {
    MoleculeScore {
        molecule: r.sequence.clone(),
        valid: r.valid,
        canonical: r.canonical.clone(),
        qed: r.qed,
        sa: r.sa,
    }
}

fn scores_csv(scores: &[MoleculeScore]) -> String {
    let opt = |x: Option<f64>| x.map(|v| format!("{v:.6}")).unwrap_or_default();
    let mut csv = String::from("molecule,valid,canonical,qed,sa\n");
    for s in scores {
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            s.molecule,
            s.valid,
            s.canonical.as_deref().unwrap_or(""),
            opt(s.qed),
            opt(s.sa)
        );
    }
    csv
}

// ------------------------------------------------------------------ optimize

fn build_oracle(cfg: &RunConfig) -> Result<Box<dyn PropertyOracle>, CliError> {
    Ok(match cfg.oracle.as_str() {
        "composition" => Box::new(CompositionOracle::new(cfg.target_composition)),
        "similarity" => Box::new(
            SimilarityOracle::parse(&cfg.target_molecule)
                .map_err(|e| CliError::Usage(format!("target_molecule: {e}")))?,
        ),
        _ => Box::new(HeteroRingOracle),
    })
}

fn parse_molecules(lines: &[String]) -> Vec<MolGraph> {
    lines.iter().filter_map(|s| parse(s, true).ok()).collect()
}

pub fn optimize(cfg: &RunConfig) -> Result<(), CliError> {
    let lead = match cfg.task.as_str() {
        "hit" | "denovo" => false,
        "lead" => true,
        other => {
            return Err(CliError::Usage(format!("optimize runs task hit or lead, not {other:?}")))
        }
    };
    let mode = cfg.mode();
    if mode == Mode::GptStyleRemaskExcluded {
        return Err(CliError::Usage(format!("mode {} needs an autoregressive model, which this tool does not have", mode.name())));
    }
    let model = load_model(cfg, mode != Mode::AttachOnly)?;
    let oracle = build_oracle(cfg)?;
    let corpus_lines = match &cfg.corpus {
        Some(p) => Some(read_lines(p, "corpus")?),
        None => None,
    };
    let (seeds, span_source) = if lead {
        let s = cfg
            .lead_molecule
            .as_deref()
            .ok_or_else(|| CliError::Usage("task lead needs `lead_molecule`".into()))?;
        let g = parse(s, true).map_err(|e| CliError::Usage(format!("lead_molecule: {e}")))?;
        let score = oracle.score(&g).clamp(0.0, 1.0);
        let mut spans = vec![s.to_string()];
        spans.extend(corpus_lines.clone().unwrap_or_default());
        (SeedSet::Lead { molecule: g, score }, spans)
    } else {
        let lines = corpus_lines
            .clone()
            .ok_or_else(|| CliError::Usage("task hit needs `corpus`".into()))?;
        let graphs = parse_molecules(&lines);
        if graphs.is_empty() {
            return Err(CliError::Usage("corpus has no valid molecules".into()));
        }
        (SeedSet::Corpus(score_seeds(oracle.as_ref(), &graphs)), lines)
    };
    let span_ids = tokenize_corpus(&span_source).map_err(CliError::Usage)?;
    let p_len = LengthModel::fragment_spans(&span_ids).map_err(usage_or_runtime)?;
    ensure_out_dir(cfg)?;

    let opt_cfg = cfg.optimizer();
    let result = run_optimizer(model.denoiser.as_ref(), oracle.as_ref(), &opt_cfg, &seeds, &p_len)
        .map_err(|e| match e {
            OptimizerError::InvalidConfig(_) | OptimizerError::Unsupported(_) | OptimizerError::EmptyVocabulary => {
                CliError::Usage(e.to_string())
            }
            other => runtime(other),
        })?;

    let results = cfg.out_dir.join("results.jsonl");
    write_jsonl(&results, &result.records)?;
    let auc = |k| auc_topk(&result.history, k, cfg.budget);
    let summary = json!({
        "task": if lead { "lead" } else { "hit" },
        "mode": mode.name(),
        "oracle": cfg.oracle,
        "budget": cfg.budget,
        "oracle_calls": result.history.len(),
        "budget_exhausted": result.budget_exhausted,
        "generations": result.records.len(),
        "valid_fraction": result.records.iter().filter(|r| r.valid).count() as f64
            / result.records.len().max(1) as f64,
        "auc_top1": auc(1),
        "auc_top10": auc(10),
        "auc_top100": auc(100),
        "best": result.best.as_ref().map(|(m, y)| json!({ "molecule": m, "score": y })),
        "vocab_size": result.vocab_size,
    });
    let summary_path = cfg.out_dir.join("summary.json");
    write_json(&summary_path, &summary)?;
    write_manifest(cfg, "optimize", model.checkpoint.as_deref(), &[results, summary_path])?;
    println!("{}", serde_json::to_string(&summary).map_err(runtime)?);
    Ok(())
}

// ------------------------------------------------------------------ eval

/// Reads molecules from plain lines, or from the `sequence` field of a JSON-lines file.
fn read_molecules(path: &Path) -> Result<Vec<String>, CliError> {
    let lines = read_lines(path, "molecules file")?;
    if !lines[0].starts_with('{') {
        return Ok(lines);
    }
    lines
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let v: Value = serde_json::from_str(l)
                .map_err(|e| CliError::Usage(format!("{} line {}: {e}", path.display(), i + 1)))?;
            v.get("sequence")
                .and_then(Value::as_str)
                .map(String::from)
                .ok_or_else(|| CliError::Usage(format!("{} line {}: no `sequence`", path.display(), i + 1)))
        })
        .collect()
}

pub fn eval(cfg: &RunConfig) -> Result<(), CliError> {
    let path = cfg
        .molecules
        .as_deref()
        .ok_or_else(|| CliError::Usage("eval needs `molecules`".into()))?;
    let mols = read_molecules(path)?;
    ensure_out_dir(cfg)?;
    let scores: Vec<MoleculeScore> = mols.par_iter().map(|s| score_molecule(s)).collect();
    let metrics = set_metrics_from_scores(&scores);
    let metrics_path = cfg.out_dir.join("metrics.json");
    write_json(&metrics_path, &metrics)?;
    let mut outputs = vec![metrics_path];
    if cfg.csv {
        let p = cfg.out_dir.join("molecules.csv");
        write_file(&p, scores_csv(&scores).as_bytes())?;
        outputs.push(p);
    }
    write_manifest(cfg, "eval", None, &outputs)?;
    println!("{}", serde_json::to_string(&metrics).map_err(runtime)?);
    Ok(())
}

// ------------------------------------------------------------------ selftest

fn selftest_checks() -> Vec<(&'static str, bool, String)> {
    use safediff_core::denoiser::{grad_check, pad_corpus, ModelConfig, TinyDenoiser, TrainBatch};
    use safediff_core::diffusion::NoiseSchedule;
    use safediff_core::grammar::canonicalize;
    use safediff_core::sampler::{generate_standard, histogram, total_variation, Template};
    use safediff_core::tasks::synthetic_corpus;

    let mut out = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let lines = synthetic_corpus(100, &mut rng);

    let round_trip = lines.iter().all(|s| {
        let g = parse(s, true).expect("synthetic molecules parse");
        let again = safediff_core::grammar::serialize(&g)
            .ok()
            .and_then(|t| parse(&t, true).ok());
        again.is_some_and(|h| canonicalize(&h).ok() == canonicalize(&g).ok())
    });
    out.push(("grammar round trip", round_trip, format!("{} molecules", lines.len())));

    let table = TokenTable::standard();
    let seqs: Vec<Vec<TokenId>> = ["CCO", "CNC", "OCO", "CCN"].iter().map(|s| table.tokenize(s).unwrap()).collect();
    let oracle = OracleDenoiser::uniform(seqs).expect("non-empty");
    let target: BTreeMap<_, _> = oracle.sequence_distribution().into_iter().collect();
    let samples: Vec<Vec<TokenId>> = (0..4000u64)
        .into_par_iter()
        .map(|i| {
            let mut r = stream_rng(1, i);
            generate_standard(&oracle, &Template::fully_masked(3), &NoiseSchedule::default(), 48, &mut r)
                .expect("oracle handles length 3")
                .ids
        })
        .collect();
    let tv = total_variation(&histogram(&samples), &target);
    out.push(("oracle sampling", tv <= 0.05, format!("TV {tv:.4}")));

    let corpus = pad_corpus(&tokenize_corpus(&lines).expect("tokenizes"), 64);
    let small = ModelConfig {
        d_model: 16,
        heads: 2,
        hidden: 24,
        max_len: 64,
        t_bins: 8,
    };
    let model = TinyDenoiser::new(small, &mut rng);
    let batch = TrainBatch::sample(&corpus, 4, &NoiseSchedule::default(), &mut rng);
    let gc = grad_check(&model, &batch, 1e-5, 40, &mut rng).expect("valid inputs");
    out.push(("gradient check", gc.max_rel_error <= 1e-4, format!("max rel error {:.2e}", gc.max_rel_error)));

    let valid = lines.iter().all(|s| check(s).0.valid);
    out.push(("synthetic corpus validity", valid, format!("{} molecules", lines.len())));
    out
}

pub fn selftest(_cfg: &RunConfig) -> Result<(), CliError> {
    let checks = selftest_checks();
    let mut failed = 0;
    for (name, ok, detail) in &checks {
        println!("{} {name}: {detail}", if *ok { "PASS" } else { "FAIL" });
        failed += usize::from(!ok);
    }
    if failed > 0 {
        return Err(CliError::Runtime(format!("{failed} self-test check(s) failed")));
    }
    Ok(())
}
