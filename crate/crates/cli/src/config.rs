use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use safediff_core::denoiser::{ModelConfig, TrainConfig};
use safediff_core::guidance::GuidanceParams;
use safediff_core::optimizer::{LeadConstraints, Mode, OptimizerConfig};
use safediff_core::sampler::SamplerParams;

use crate::error::CliError;

/// Flat run configuration. Every key is optional; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub corpus: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    /// Use the exact-posterior denoiser over this corpus instead of a checkpoint.
    pub oracle_corpus: Option<PathBuf>,
    pub out_dir: PathBuf,

    /// denovo, linker, motif_extension, scaffold_decoration, superstructure, hit or lead.
    pub task: String,
    /// Molecule strings the fragment-constrained tasks start from.
    pub inputs: Vec<String>,
    pub num_samples: usize,
    pub csv: bool,

    #[serde(rename = "N")]
    pub n: usize,
    pub tau: f64,
    pub r: f64,
    pub seed: u64,
    pub w: f64,
    pub gamma: f64,

    #[serde(rename = "V")]
    pub v: Option<usize>,
    #[serde(rename = "G")]
    pub g: usize,
    pub warmup: Option<usize>,
    pub budget: usize,
    pub mode: String,
    pub delta: f64,
    pub qed_min: f64,
    pub sa_max: f64,
    /// composition, similarity or hetero_ring.
    pub oracle: String,
    /// Element counts `[C, N, O, F]` for the composition oracle.
    pub target_composition: [usize; 4],
    /// Reference molecule for the similarity oracle.
    pub target_molecule: String,
    pub lead_molecule: Option<String>,

    pub steps: usize,
    pub batch: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub clip: f64,
    pub d_model: usize,
    pub heads: usize,
    pub hidden: usize,
    pub max_len: usize,
    pub t_bins: usize,

    /// Molecules file for `eval`: plain lines or a results JSON-lines file.
    pub molecules: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let s = SamplerParams::default();
        let g = GuidanceParams::default();
        let o = OptimizerConfig::default();
        let lead = LeadConstraints::default();
        let t = TrainConfig::default();
        let m = ModelConfig::default();
        Self {
            corpus: None,
            checkpoint: None,
            oracle_corpus: None,
            out_dir: PathBuf::from("out"),
            task: "denovo".into(),
            inputs: Vec::new(),
            num_samples: 100,
            csv: false,
            n: s.n,
            tau: s.tau,
            r: s.r,
            seed: 0,
            w: g.w,
            gamma: g.gamma,
            v: o.v,
            g: o.g,
            warmup: None,
            budget: o.budget,
            mode: o.mode.name().into(),
            delta: lead.delta,
            qed_min: lead.qed_min,
            sa_max: lead.sa_max,
            oracle: "composition".into(),
            target_composition: [10, 2, 2, 0],
            target_molecule: "C1CCNCC1CCOC".into(),
            lead_molecule: None,
            steps: t.steps,
            batch: t.batch,
            lr: t.lr,
            weight_decay: t.weight_decay,
            clip: t.clip,
            d_model: m.d_model,
            heads: m.heads,
            hidden: m.hidden,
            max_len: m.max_len,
            t_bins: m.t_bins,
            molecules: None,
        }
    }
}

pub const TASKS: [&str; 7] = [
    "denovo",
    "linker",
    "motif_extension",
    "scaffold_decoration",
    "superstructure",
    "hit",
    "lead",
];

pub const ORACLES: [&str; 3] = ["composition", "similarity", "hetero_ring"];

/// Overrides applied on top of the config file, in order; later ones win.
#[derive(Debug, Default, Clone)]
pub struct Overrides(pub Vec<(String, Value)>);

impl Overrides {
    /// Parses `key=value`; the value is read as JSON when it parses, else as a string.
    pub fn push_assignment(&mut self, s: &str) -> Result<(), CliError> {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--set expects key=value, got {s:?}")))?;
        let value = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
        self.0.push((k.trim().to_string(), value));
        Ok(())
    }

    pub fn push(&mut self, key: &str, value: Value) {
        self.0.push((key.to_string(), value));
    }
}

pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<RunConfig, CliError> {
    let mut doc = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", p.display())))?;
            match serde_json::from_str::<Value>(&text) {
                Ok(Value::Object(m)) => m,
                Ok(_) => return Err(CliError::Usage(format!("{}: config must be a JSON object", p.display()))),
                Err(e) => return Err(CliError::Usage(format!("{}: {e}", p.display()))),
            }
        }
        None => Map::new(),
    };
    for (k, v) in &overrides.0 {
        doc.insert(k.clone(), v.clone());
    }
    let cfg: RunConfig = serde_json::from_value(Value::Object(doc))
        .map_err(|e| CliError::Usage(format!("invalid config: {e}")))?;
    cfg.validate()?;
    Ok(cfg)
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), CliError> {
    if cond {
        Ok(())
    } else {
        Err(CliError::Usage(msg()))
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        check(TASKS.contains(&self.task.as_str()), || {
            format!("task {:?} is not one of {}", self.task, TASKS.join(", "))
        })?;
        check(ORACLES.contains(&self.oracle.as_str()), || {
            format!("oracle {:?} is not one of {}", self.oracle, ORACLES.join(", "))
        })?;
        check(Mode::parse(&self.mode).is_some(), || format!("unknown mode {:?}", self.mode))?;
        check(self.n >= 1, || "N must be at least 1".into())?;
        check(self.tau > 0.0 && self.tau.is_finite(), || format!("tau={} must be positive", self.tau))?;
        check(self.r >= 0.0 && self.r.is_finite(), || format!("r={} must be non-negative", self.r))?;
        check(self.w.is_finite(), || "w must be finite".into())?;
        check((0.0..=1.0).contains(&self.gamma), || format!("gamma={} outside [0, 1]", self.gamma))?;
        check(self.v != Some(0), || "V must be positive (or null for unbounded)".into())?;
        check(self.g >= 1, || "G must be at least 1".into())?;
        check(self.warmup.is_none_or(|w| w <= self.g), || "warmup exceeds G".into())?;
        check(self.budget >= 1, || "budget must be positive".into())?;
        check((0.0..=1.0).contains(&self.delta), || format!("delta={} outside [0, 1]", self.delta))?;
        check((0.0..=1.0).contains(&self.qed_min), || "qed_min outside [0, 1]".into())?;
        check((1.0..=10.0).contains(&self.sa_max), || "sa_max outside [1, 10]".into())?;
        check(self.num_samples >= 1, || "num_samples must be positive".into())?;
        check(self.batch >= 1, || "batch must be positive".into())?;
        check(self.lr >= 0.0 && self.lr.is_finite(), || "lr must be non-negative".into())?;
        check(self.weight_decay >= 0.0, || "weight_decay must be non-negative".into())?;
        check(self.clip >= 0.0, || "clip must be non-negative".into())?;
        check(self.heads >= 1 && self.d_model.is_multiple_of(self.heads), || {
            format!("d_model={} must be a positive multiple of heads={}", self.d_model, self.heads)
        })?;
        check(self.hidden >= 1 && self.t_bins >= 1, || "hidden and t_bins must be positive".into())?;
        check((2..=512).contains(&self.max_len), || "max_len must lie in [2, 512]".into())?;
        Ok(())
    }

    pub fn sampler(&self) -> SamplerParams {
        SamplerParams {
            n: self.n,
            tau: self.tau,
            r: self.r,
            seed: self.seed,
        }
    }

    pub fn guidance(&self) -> GuidanceParams {
        GuidanceParams {
            w: self.w,
            gamma: self.gamma,
            seed: self.seed ^ 0x9e37_79b9_7f4a_7c15,
        }
    }

    pub fn mode(&self) -> Mode {
        Mode::parse(&self.mode).expect("validated")
    }

    pub fn model(&self) -> ModelConfig {
        ModelConfig {
            d_model: self.d_model,
            heads: self.heads,
            hidden: self.hidden,
            max_len: self.max_len,
            t_bins: self.t_bins,
        }
    }

    pub fn train(&self) -> TrainConfig {
        TrainConfig {
            steps: self.steps,
            batch: self.batch,
            lr: self.lr,
            seed: self.seed,
            weight_decay: self.weight_decay,
            clip: self.clip,
            ..TrainConfig::default()
        }
    }

    pub fn optimizer(&self) -> OptimizerConfig {
        OptimizerConfig {
            v: if self.task == "lead" { None } else { self.v },
            g: self.g,
            warmup: self.warmup,
            budget: self.budget,
            mode: self.mode(),
            sampler: self.sampler(),
            guidance: self.guidance(),
            lead: (self.task == "lead").then_some(LeadConstraints {
                delta: self.delta,
                qed_min: self.qed_min,
                sa_max: self.sa_max,
            }),
            seed: self.seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        RunConfig::default().validate().unwrap();
        assert_eq!(RunConfig::default().sampler(), SamplerParams::default());
    }

    #[test]
    fn overrides_win_and_unknown_keys_fail() {
        let mut o = Overrides::default();
        o.push_assignment("tau=0.7").unwrap();
        o.push_assignment("mode=token_remask").unwrap();
        o.push_assignment("V=null").unwrap();
        let c = load(None, &o).unwrap();
        assert_eq!(c.tau, 0.7);
        assert_eq!(c.mode(), Mode::TokenRemask);
        assert_eq!(c.v, None);
        o.push_assignment("temperature=1").unwrap();
        assert!(matches!(load(None, &o), Err(CliError::Usage(_))));
    }

    #[test]
    fn ranges_are_checked() {
        for bad in ["gamma=1.5", "N=0", "tau=0", "task=\"nope\"", "heads=3", "delta=2"] {
            let mut o = Overrides::default();
            o.push_assignment(bad).unwrap();
            assert!(load(None, &o).is_err(), "{bad}");
        }
    }
}
