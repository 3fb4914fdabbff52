//! Fragment-vocabulary optimization: attach two vocabulary fragments,
//! remask part of the result, regenerate it with the sampler, score it, and
//! feed its fragments back into the vocabulary.

mod oracle;
mod vocab;

use std::collections::BTreeSet;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::denoiser::{Denoiser, DenoiserError};
use crate::grammar::{
    attach_graph, canonicalize, check_ids, fragment_spans, parse_ids, remask_serialization,
    GrammarError, MolGraph, TokenId, TokenTable, MASK_ID,
};
use crate::guidance::GuidanceParams;
use crate::metrics::{fingerprint, pseudo_qed, pseudo_sa, tanimoto_similarity};
use crate::sampler::{generate, LengthModel, SamplerError, SamplerParams, Template};

pub use oracle::{
    auc_topk, BudgetedOracle, CompositionOracle, Evaluation, HeteroRingOracle, PropertyOracle,
    SimilarityOracle,
};
pub use vocab::{build_vocab, FragmentVocab, VocabEntry};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimizerError {
    #[error("no molecule decomposed into an open fragment")]
    EmptyVocabulary,
    #[error("oracle budget exhausted")]
    BudgetExhausted,
    #[error("mode {0} is not supported")]
    Unsupported(String),
    #[error("invalid optimizer configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Grammar(#[from] GrammarError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    AttachOnly,
    TokenRemask,
    /// Autoregressive-model remasking arm; there is no autoregressive model here.
    GptStyleRemaskExcluded,
    FragmentRemask,
    FragmentRemaskMcg,
}

impl Mode {
    pub const ALL: [Mode; 5] = [
        Mode::AttachOnly,
        Mode::TokenRemask,
        Mode::GptStyleRemaskExcluded,
        Mode::FragmentRemask,
        Mode::FragmentRemaskMcg,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Mode::AttachOnly => "attach_only",
            Mode::TokenRemask => "token_remask",
            Mode::GptStyleRemaskExcluded => "gpt_style_remask_excluded",
            Mode::FragmentRemask => "fragment_remask",
            Mode::FragmentRemaskMcg => "fragment_remask_mcg",
        }
    }

    pub fn parse(s: &str) -> Option<Mode> {
        Self::ALL.into_iter().find(|m| m.name() == s)
    }
}

/// Acceptance test for lead optimization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeadConstraints {
    pub delta: f64,
    pub qed_min: f64,
    pub sa_max: f64,
}

impl Default for LeadConstraints {
    fn default() -> Self {
        Self {
            delta: 0.4,
            qed_min: 0.6,
            sa_max: 4.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    /// Vocabulary capacity; `None` is unbounded.
    pub v: Option<usize>,
    /// Number of generations.
    pub g: usize,
    /// Generations scored straight from attachment; defaults to `g / 10`.
    pub warmup: Option<usize>,
    pub budget: usize,
    pub mode: Mode,
    pub sampler: SamplerParams,
    pub guidance: GuidanceParams,
    pub lead: Option<LeadConstraints>,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            v: Some(100),
            g: 1000,
            warmup: None,
            budget: 1000,
            mode: Mode::FragmentRemask,
            sampler: SamplerParams::default(),
            guidance: GuidanceParams::default(),
            lead: None,
            seed: 0,
        }
    }
}

impl OptimizerConfig {
    pub fn warmup_count(&self) -> usize {
        self.warmup.unwrap_or(self.g / 10)
    }

    pub fn validate(&self) -> Result<(), OptimizerError> {
        if self.warmup_count() > self.g {
            return Err(OptimizerError::InvalidConfig("warmup exceeds G".into()));
        }
        if self.budget == 0 {
            return Err(OptimizerError::InvalidConfig("budget must be positive".into()));
        }
        if self.v == Some(0) {
            return Err(OptimizerError::InvalidConfig("V must be positive".into()));
        }
        self.sampler.validate()?;
        self.guidance
            .validate()
            .map_err(|e| OptimizerError::InvalidConfig(e.to_string()))?;
        if self.mode == Mode::GptStyleRemaskExcluded {
            return Err(OptimizerError::Unsupported(self.mode.name().into()));
        }
        Ok(())
    }
}

/// A fragment-remasked template and the span it replaced in the
/// fragment-delimited serialization.
#[derive(Debug, Clone, PartialEq)]
pub struct Remasked {
    pub template: Template,
    pub span: (usize, usize),
    pub chunk: usize,
}

/// Re-serializes `x_init` with every fragment in its own `.`-block, replaces
/// one uniformly chosen block by a mask chunk whose length is drawn from `p_len`.
pub fn fragment_remask<R: Rng + ?Sized>(
    x_init: &[TokenId],
    p_len: &LengthModel,
    rng: &mut R,
) -> Result<Remasked, OptimizerError> {
    let g = parse_ids(x_init, false)?;
    let ser = remask_serialization(&g)?;
    let spans = fragment_spans(&ser);
    let (a, b) = spans[rng.gen_range(0..spans.len())];
    let m = p_len.sample(rng);
    let mut ids = ser[..a].to_vec();
    ids.extend(std::iter::repeat_n(MASK_ID, m));
    ids.extend_from_slice(&ser[b..]);
    Ok(Remasked {
        template: Template::new(ids),
        span: (a, b),
        chunk: m,
    })
}

/// Masks `k` uniformly chosen positions.
pub fn token_remask<R: Rng + ?Sized>(x_init: &[TokenId], k: usize, rng: &mut R) -> Template {
    let k = k.min(x_init.len());
    let mut ids = x_init.to_vec();
    for i in sample(rng, x_init.len(), k) {
        ids[i] = MASK_ID;
    }
    Template::new(ids)
}

/// One line of the results file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub iter: usize,
    pub sequence: String,
    pub canonical: Option<String>,
    pub valid: bool,
    pub score: f64,
    pub parents: Vec<String>,
    pub remasked_span: Option<(usize, usize)>,
    pub oracle_calls_used: usize,
    /// Whether this record consumed an oracle call.
    pub fresh: bool,
}

/// Where the initial vocabulary comes from.
#[derive(Debug, Clone)]
pub enum SeedSet {
    /// Scored molecules for hit generation.
    Corpus(Vec<(MolGraph, f64)>),
    /// One scored seed molecule for lead optimization.
    Lead { molecule: MolGraph, score: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub records: Vec<RunRecord>,
    pub history: Vec<f64>,
    pub best: Option<(String, f64)>,
    pub budget_exhausted: bool,
    pub vocab_size: usize,
}

impl RunResult {
    pub fn auc(&self, k: usize, budget: usize) -> f64 {
        auc_topk(&self.history, k, budget)
    }
}

fn is_lead(g: &MolGraph, seed_fp: &crate::metrics::Fingerprint, c: &LeadConstraints) -> bool {
    pseudo_qed(g) >= c.qed_min
        && pseudo_sa(g) <= c.sa_max
        && tanimoto_similarity(&fingerprint(g), seed_fp) >= c.delta
}

/// Runs the optimization loop for `config.g` generations or until the
/// oracle budget is spent.
///
/// Each generation attaches two vocabulary fragments (open leftovers are
/// capped). During warmup, and always in attach-only mode, the attached
/// molecule is the candidate; otherwise it is remasked and regenerated.
/// Invalid candidates are recorded with score 0 and no oracle call. Valid
/// ones are scored (repeats hit the cache for free) and decomposed into the
/// vocabulary; in lead mode only candidates meeting the lead constraints are.
pub fn optimize<D: Denoiser + ?Sized>(
    denoiser: &D,
    oracle: &dyn PropertyOracle,
    config: &OptimizerConfig,
    seeds: &SeedSet,
    p_len: &LengthModel,
) -> Result<RunResult, OptimizerError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let table = TokenTable::standard();
    let (mut vocab, lead) = match seeds {
        SeedSet::Corpus(c) => (build_vocab(c, config.v, &mut rng)?, None),
        SeedSet::Lead { molecule, score } => {
            let v = build_vocab(&[(molecule.clone(), *score)], None, &mut rng)?;
            let c = config.lead.unwrap_or_default();
            (v, Some((fingerprint(molecule), c)))
        }
    };
    let mut budgeted = BudgetedOracle::new(oracle, config.budget);
    let mut records = Vec::new();
    let mut best: Option<(String, f64)> = None;
    let warmup = config.warmup_count();
    let mut exhausted = false;

    for iter in 0..config.g {
        let (f1, f2) = vocab.draw_pair(&mut rng).ok_or(OptimizerError::EmptyVocabulary)?;
        let parents = vec![f1.fragment.canonical_key.clone(), f2.fragment.canonical_key.clone()];
        let (mut joined, _) = attach_graph(&f1.fragment, &f2.fragment, &mut rng)?;
        joined.cap_attachments();
        let x_init = remask_serialization(&joined)?;

        let (x_new, span) = if iter < warmup || config.mode == Mode::AttachOnly {
            (x_init, None)
        } else {
            let (template, span) = match config.mode {
                Mode::TokenRemask => {
                    let k = p_len.sample(&mut rng);
                    (token_remask(&x_init, k, &mut rng), None)
                }
                _ => {
                    let r = fragment_remask(&x_init, p_len, &mut rng)?;
                    (r.template, Some(r.span))
                }
            };
            let guidance = (config.mode == Mode::FragmentRemaskMcg).then(|| GuidanceParams {
                seed: rng.gen(),
                ..config.guidance
            });
            match generate(denoiser, &template, &config.sampler, guidance.as_ref(), &mut rng) {
                Ok(gen) => (gen.ids, span),
                // sequences the denoiser cannot handle count as invalid output
                Err(SamplerError::Denoiser(
                    DenoiserError::LengthExceeded { .. } | DenoiserError::LengthMismatch(_),
                )) => (template.ids, span),
                Err(e) => return Err(e.into()),
            }
        };

        let sequence = table.detokenize(&x_new);
        let (report, graph) = check_ids(&x_new);
        let mut record = RunRecord {
            iter,
            sequence,
            canonical: None,
            valid: false,
            score: 0.0,
            parents,
            remasked_span: span,
            oracle_calls_used: budgeted.calls(),
            fresh: false,
        };
        if let (true, Some(g)) = (report.valid, graph) {
            let key = canonicalize(&g)?;
            match budgeted.evaluate(&key, &g) {
                Evaluation::Exhausted => {
                    exhausted = true;
                    break;
                }
                Evaluation::Cached(y) => {
                    record.score = y;
                }
                Evaluation::Fresh(y) => {
                    record.score = y;
                    record.fresh = true;
                    if best.as_ref().is_none_or(|(_, b)| y > *b) {
                        best = Some((key.clone(), y));
                    }
                    let admit = match &lead {
                        Some((fp, c)) => is_lead(&g, fp, c),
                        None => true,
                    };
                    if admit {
                        vocab.add_molecule(&g, y, &mut rng)?;
                    }
                }
            }
            record.valid = true;
            record.canonical = Some(key);
            record.oracle_calls_used = budgeted.calls();
        }
        records.push(record);
        if budgeted.exhausted() {
            exhausted = true;
            break;
        }
    }

    Ok(RunResult {
        records,
        history: budgeted.history().to_vec(),
        best,
        budget_exhausted: exhausted,
        vocab_size: vocab.len(),
    })
}

/// Scores molecules with the raw oracle, outside any budget.
pub fn score_seeds(oracle: &dyn PropertyOracle, molecules: &[MolGraph]) -> Vec<(MolGraph, f64)> {
    molecules
        .iter()
        .map(|g| (g.clone(), oracle.score(g).clamp(0.0, 1.0)))
        .collect()
}

/// Distinct canonical keys of the fragments a vocabulary could ever attach.
pub fn vocab_keys(v: &FragmentVocab) -> BTreeSet<String> {
    v.entries().map(|(k, _)| k.clone()).collect()
}
