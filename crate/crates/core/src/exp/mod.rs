//! Experiment runner: per-seed study jobs, metric persistence, summaries
//! with confidence intervals and figures.

pub mod plot;
pub mod records;
pub mod stats;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use records::{lookup, read_jsonl, read_summary_csv, summarize, write_jsonl, write_summary_csv, MetricRecord, SummaryRow};
pub use stats::{aggregate, gap_closed, gap_reduction, Aggregate};

use crate::cae::{evaluate_confounded, train_confounded, CaeConfig, ConfoundedAlgo};
use crate::causal::selftest;
use crate::envcore::split_seed;
use crate::envs::cartpole::shortcut_action;
use crate::envs::{make_env, OfflineEnv, OfflineEnvSpec, SpuriousMode, CONFOUNDED_ENVS};
use crate::explain::{run_explain, ExplainConfig, FEATURE_NAMES};
use crate::pace::{run_pace, PaceConfig};
use crate::rl::{evaluate, train_ppo, FeatureMask, PpoConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExpError {
    #[error("config error: {0}")]
    Config(String),
    #[error("run failed: {0}")]
    Run(String),
    #[error("io error: {0}")]
    Io(String),
    #[error("undefined metric: {0}")]
    Undefined(String),
}

impl ExpError {
    /// Process exit code: 2 for configuration problems, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Study {
    #[serde(rename = "a")]
    A,
    #[serde(rename = "b")]
    B,
    #[serde(rename = "c")]
    C,
    #[serde(rename = "e")]
    E,
    #[serde(rename = "causal-core")]
    CausalCore,
}

impl Study {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::A => "a",
            Self::B => "b",
            Self::C => "c",
            Self::E => "e",
            Self::CausalCore => "causal-core",
        }
    }
}

impl std::str::FromStr for Study {
    type Err = ExpError;

    fn from_str(s: &str) -> Result<Self, ExpError> {
        let s = s.to_ascii_lowercase();
        match s.strip_prefix("study-").unwrap_or(&s) {
            "a" => Ok(Self::A),
            "b" => Ok(Self::B),
            "c" => Ok(Self::C),
            "e" => Ok(Self::E),
            "causal-core" => Ok(Self::CausalCore),
            other => Err(ExpError::Config(format!("unknown study {other:?}; expected a, b, c, e or causal-core"))),
        }
    }
}

/// Everything a study run needs. Loaded from JSON; absent fields take the
/// defaults below, and CLI flags override file values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub study: Study,
    /// Study-specific environment; `None` runs the study's default set.
    pub env: Option<String>,
    /// Restrict to one algorithm; `None` runs all of the study's algorithms.
    pub algo: Option<String>,
    pub seeds: Vec<u64>,
    /// Training budget override for studies A, B and E.
    pub total_steps: Option<usize>,
    /// Greedy evaluation episodes; `None` means 20 for study A and 200 for B.
    pub eval_episodes: Option<usize>,
    /// Study C sweep; the default strength is always included.
    pub strengths: Vec<f64>,
    pub selftest_rollouts: usize,
    pub ppo: PpoConfig,
    pub cae: CaeConfig,
    pub pace: PaceConfig,
    pub explain: ExplainConfig,
    pub out_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            study: Study::A,
            env: None,
            algo: None,
            seeds: vec![0, 1, 2],
            total_steps: None,
            eval_episodes: None,
            strengths: vec![0.2, 0.4, 0.6, 0.8],
            selftest_rollouts: selftest::DEFAULT_ROLLOUTS,
            ppo: PpoConfig::default(),
            cae: CaeConfig::default(),
            pace: PaceConfig::default(),
            explain: ExplainConfig::default(),
            out_dir: None,
        }
    }
}

const STUDY_A_ALGOS: [&str; 2] = ["causal", "standard"];
const STUDY_B_ALGOS: [&str; 4] = ["standard", "cae", "oracle", "frozen"];
const STUDY_C_ALGOS: [&str; 3] = ["pace-bc", "pace-greedy", "standard"];
/// Seed offset for evaluation episodes, far from the training episodes.
const EVAL_STREAM: u64 = 1 << 40;

impl RunConfig {
    pub fn new(study: Study) -> Self {
        Self { study, ..Self::default() }
    }

    pub fn from_json(text: &str) -> Result<Self, ExpError> {
        serde_json::from_str(text).map_err(|e| ExpError::Config(format!("config: {e}")))
    }

    pub fn from_file(path: &Path) -> Result<Self, ExpError> {
        let text = fs::read_to_string(path).map_err(|e| ExpError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Environments this run covers, by their canonical names.
    pub fn envs(&self) -> Result<Vec<String>, ExpError> {
        let env = self.env.as_deref().map(str::to_ascii_lowercase);
        let bad = |e: &str| ExpError::Config(format!("environment {e:?} is not part of study {}", self.study.as_str()));
        match self.study {
            Study::A => {
                let e = env.unwrap_or_else(|| "standard".into());
                let variant = e.strip_prefix("cartpole-spurious:").unwrap_or(&e).to_string();
                if !["standard", "longpole", "heavypole"].contains(&variant.as_str()) {
                    return Err(bad(&e));
                }
                Ok(vec![format!("cartpole-spurious:{variant}")])
            }
            Study::B => match env {
                None => Ok(vec!["confounded-bandit".into(), "confounded-bandit-hard".into()]),
                Some(e) if CONFOUNDED_ENVS.contains(&e.as_str()) => Ok(vec![e]),
                Some(e) => Err(bad(&e)),
            },
            Study::C => match env {
                None => Ok(OfflineEnv::ALL.iter().map(|e| e.as_str().to_string()).collect()),
                Some(e) => Ok(vec![e.parse::<OfflineEnv>().map_err(|_| bad(&e))?.as_str().to_string()]),
            },
            Study::E => match env.as_deref() {
                None | Some("cartpole") | Some("cartpole:standard") => Ok(vec!["cartpole:standard".into()]),
                Some(e) => Err(bad(e)),
            },
            Study::CausalCore => match env.as_deref() {
                None | Some("fixtures") => Ok(vec!["fixtures".into()]),
                Some(e) => Err(bad(e)),
            },
        }
    }

    /// Algorithms this run covers.
    pub fn algos(&self) -> Result<Vec<String>, ExpError> {
        let all: &[&str] = match self.study {
            Study::A => &STUDY_A_ALGOS,
            Study::B => &STUDY_B_ALGOS[..3],
            Study::C => &STUDY_C_ALGOS,
            Study::E => &["scm"],
            Study::CausalCore => &["selftest"],
        };
        let allowed: &[&str] = if self.study == Study::B { &STUDY_B_ALGOS } else { all };
        match &self.algo {
            None => Ok(all.iter().map(|s| s.to_string()).collect()),
            Some(a) if allowed.contains(&a.as_str()) => Ok(vec![a.clone()]),
            Some(a) => Err(ExpError::Config(format!("algorithm {a:?} is not part of study {}; expected one of {allowed:?}", self.study.as_str()))),
        }
    }

    pub fn validate(&self) -> Result<(), ExpError> {
        if self.seeds.is_empty() {
            return Err(ExpError::Config("seeds must be non-empty".into()));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(ExpError::Config("seeds must be distinct".into()));
        }
        self.envs()?;
        self.algos()?;
        match (self.study, self.total_steps) {
            (_, Some(0)) => return Err(ExpError::Config("total_steps must be positive".into())),
            (Study::C | Study::CausalCore, Some(_)) => {
                return Err(ExpError::Config(format!("study {} has no step budget", self.study.as_str())))
            }
            _ => {}
        }
        if self.eval_episodes == Some(0) {
            return Err(ExpError::Config("eval_episodes must be positive".into()));
        }
        if self.strengths.iter().any(|s| !(0.0..=1.0).contains(s)) {
            return Err(ExpError::Config("strengths must lie in [0, 1]".into()));
        }
        if self.selftest_rollouts == 0 {
            return Err(ExpError::Config("selftest_rollouts must be positive".into()));
        }
        self.resolved_ppo().validate().map_err(|e| ExpError::Config(e.to_string()))?;
        self.resolved_cae().ppo.validate().map_err(|e| ExpError::Config(e.to_string()))
    }

    /// Acceptance runs use between three and five seeds.
    pub fn validate_acceptance(&self) -> Result<(), ExpError> {
        self.validate()?;
        if !(3..=5).contains(&self.seeds.len()) {
            return Err(ExpError::Config(format!("acceptance runs need 3 to 5 seeds, got {}", self.seeds.len())));
        }
        Ok(())
    }

    fn resolved_ppo(&self) -> PpoConfig {
        let mut c = self.ppo.clone();
        if let (Study::A, Some(n)) = (self.study, self.total_steps) {
            c.total_steps = n;
        }
        c
    }

    fn resolved_cae(&self) -> CaeConfig {
        let mut c = self.cae.clone();
        if let (Study::B, Some(n)) = (self.study, self.total_steps) {
            c.ppo.total_steps = n;
        }
        c
    }

    fn resolved_explain(&self) -> ExplainConfig {
        let mut c = self.explain.clone();
        if let (Study::E, Some(n)) = (self.study, self.total_steps) {
            c.a2c.total_steps = n;
        }
        c
    }

    fn study_strengths(&self) -> Vec<f64> {
        let mut s = self.strengths.clone();
        s.push(OfflineEnvSpec::new(OfflineEnv::Dosage).confounding_strength);
        s.sort_by(f64::total_cmp);
        s.dedup();
        s
    }
}

/// One unit of parallel work.
#[derive(Debug, Clone, PartialEq)]
struct Job {
    env: String,
    algo: String,
    seed: u64,
    strength: Option<f64>,
}

fn jobs(cfg: &RunConfig) -> Result<Vec<Job>, ExpError> {
    let (envs, algos) = (cfg.envs()?, cfg.algos()?);
    let mut out = Vec::new();
    let job = |env: &str, algo: &str, seed, strength| Job { env: env.into(), algo: algo.into(), seed, strength };
    match cfg.study {
        Study::C => {
            // One PACE run produces every head, so jobs are per strength.
            for s in cfg.study_strengths() {
                for env in &envs {
                    for &seed in &cfg.seeds {
                        out.push(job(env, "pace", seed, Some(s)));
                    }
                }
            }
        }
        Study::CausalCore => out.push(job(&envs[0], "selftest", 0, None)),
        _ => {
            for env in &envs {
                for algo in &algos {
                    for &seed in &cfg.seeds {
                        out.push(job(env, algo, seed, None));
                    }
                }
            }
        }
    }
    Ok(out)
}

fn run_err(e: impl std::fmt::Display) -> ExpError {
    ExpError::Run(e.to_string())
}

fn run_job(cfg: &RunConfig, job: &Job) -> Result<Vec<MetricRecord>, ExpError> {
    let study = cfg.study.as_str();
    let rec = |algo: &str, step: usize, metric: &str, value: f64| MetricRecord::new(study, &job.env, algo, job.seed, step, metric, value);
    let mut out = Vec::new();
    match cfg.study {
        Study::A => {
            let ppo = cfg.resolved_ppo();
            let mask = if job.algo == "causal" { FeatureMask::core() } else { FeatureMask::all(12) };
            let mut env = make_env(&job.env, SpuriousMode::Id).map_err(run_err)?;
            let run = train_ppo(env.as_mut(), &ppo, &mask, job.seed).map_err(run_err)?;
            for p in &run.curve {
                out.push(rec(&job.algo, p.step, "train_return", p.mean_return)?);
            }
            let episodes = cfg.eval_episodes.unwrap_or(20);
            let eval_seed = split_seed(job.seed, EVAL_STREAM);
            let id = evaluate(env.as_mut(), &run.model, &mask, episodes, ppo.max_episode_steps, eval_seed).map_err(run_err)?;
            let mut ood_env = make_env(&job.env, SpuriousMode::Ood).map_err(run_err)?;
            let ood = evaluate(ood_env.as_mut(), &run.model, &mask, episodes, ppo.max_episode_steps, eval_seed).map_err(run_err)?;
            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            out.push(rec(&job.algo, ppo.total_steps, "id_return", mean(&id))?);
            out.push(rec(&job.algo, ppo.total_steps, "ood_return", mean(&ood))?);
            let agreement = shortcut_agreement(env.as_mut(), &run.model, &mask, episodes, eval_seed, ppo.max_episode_steps)?;
            out.push(rec(&job.algo, ppo.total_steps, "shortcut_agreement", agreement)?);
        }
        Study::B => {
            let cae = cfg.resolved_cae();
            let algo: ConfoundedAlgo = job.algo.parse().map_err(|e| ExpError::Config(format!("{e}")))?;
            let mut env = make_env(&job.env, SpuriousMode::Id).map_err(run_err)?;
            let run = train_confounded(env.as_mut(), &cae, algo, job.seed).map_err(run_err)?;
            for p in &run.curve {
                out.push(rec(&job.algo, p.step, "train_score", p.mean_return)?);
            }
            let hint = match job.env.as_str() {
                "confounded-frozenlake" => 16,
                "confounded-blackjack" => 3,
                _ => 0,
            };
            let episodes = cfg.eval_episodes.unwrap_or(200);
            let eval = evaluate_confounded(env.as_mut(), &run, episodes, split_seed(job.seed, EVAL_STREAM), hint).map_err(run_err)?;
            let step = cae.ppo.total_steps;
            out.push(rec(&job.algo, step, "score", eval.mean_score())?);
            out.push(rec(&job.algo, step, "single_hint_accuracy", eval.single_hint_accuracy)?);
            if let Some(acc) = eval.classifier_accuracy {
                out.push(rec(&job.algo, step, "classifier_accuracy", acc)?);
            }
        }
        Study::C => {
            let env: OfflineEnv = job.env.parse().map_err(|e| ExpError::Config(format!("{e}")))?;
            let strength = job.strength.expect("study C jobs carry a strength");
            let result = run_pace(&OfflineEnvSpec::new(env).with_strength(strength), &cfg.pace, job.seed).map_err(run_err)?;
            let keep = cfg.algos()?;
            for h in result.heads.iter().filter(|h| keep.contains(&h.algo)) {
                out.push(rec(&h.algo, 0, "true_value", h.true_value)?.with_strength(strength));
                out.push(rec(&h.algo, 0, "ope_estimate", h.ope_estimate)?.with_strength(strength));
                out.push(rec(&h.algo, 0, "ope_abs_error", h.ope_abs_error)?.with_strength(strength));
            }
            out.push(rec("behavior", 0, "logged_reward", result.behavior_value)?.with_strength(strength));
        }
        Study::E => {
            let ex = cfg.resolved_explain();
            let r = run_explain(&ex, job.seed).map_err(run_err)?;
            let step = ex.a2c.total_steps;
            for (name, v) in FEATURE_NAMES.iter().zip(&r.importances) {
                out.push(rec("scm", step, &format!("importance_{name}"), *v)?);
            }
            for (i, v) in r.dynamics_r_per_dim.iter().enumerate() {
                out.push(rec("scm", step, &format!("dynamics_r_{}", FEATURE_NAMES[i]), *v)?);
            }
            for (metric, v) in [
                ("dynamics_r", r.dynamics_r),
                ("stability_causal", r.stability_causal),
                ("stability_random", r.stability_random),
                ("one_step_error", r.one_step_error),
                ("open_loop_error", r.open_loop_error),
                ("factual_error", r.factual_error),
                ("counterfactual_error", r.counterfactual_error),
                ("a2c_final_return", r.a2c_final_return),
            ] {
                out.push(rec("scm", step, metric, v)?);
            }
        }
        Study::CausalCore => {
            let checks = selftest::run_with(cfg.selftest_rollouts);
            for c in &checks {
                out.push(rec("selftest", 0, &c.name, f64::from(u8::from(c.passed)))?);
            }
            if let Some(failed) = checks.iter().find(|c| !c.passed) {
                return Err(ExpError::Run(format!("self-test check {} failed: {}", failed.name, failed.detail)));
            }
        }
    }
    Ok(out)
}

/// Fraction of greedy ID steps whose action equals the heuristic shortcut
/// the spurious block encodes.
fn shortcut_agreement(
    env: &mut dyn crate::envcore::Environment,
    model: &crate::rl::ActorCritic,
    mask: &FeatureMask,
    episodes: usize,
    seed: u64,
    max_steps: usize,
) -> Result<f64, ExpError> {
    let (mut hits, mut total) = (0usize, 0usize);
    for ep in 0..episodes {
        let mut obs = env.reset(split_seed(seed, ep as u64));
        for _ in 0..max_steps {
            let a = model.greedy(&mask.apply(&obs)).map_err(run_err)?;
            hits += usize::from(a == shortcut_action(&obs[..4]));
            total += 1;
            let step = env.step(a).map_err(run_err)?;
            if step.done {
                break;
            }
            obs = step.observation;
        }
    }
    Ok(hits as f64 / total.max(1) as f64)
}

fn derived_row(study: &str, env: &str, strength: Option<f64>, metric: &str, value: f64, inputs: &[&SummaryRow]) -> SummaryRow {
    SummaryRow {
        study: study.to_string(),
        env: env.to_string(),
        algo: "derived".into(),
        strength,
        metric: metric.to_string(),
        n: inputs.iter().map(|r| r.n).min().unwrap_or(0),
        mean: value,
        ci95: None,
        partial: inputs.iter().any(|r| r.partial),
    }
}

/// Headline percentages and ratios computed from summary means, so they
/// can be recomputed by hand from `summary.csv`.
pub fn derived_metrics(study: Study, rows: &[SummaryRow]) -> Vec<SummaryRow> {
    let s = study.as_str();
    let mut envs: Vec<(String, Option<f64>)> = rows.iter().map(|r| (r.env.clone(), r.strength)).collect();
    envs.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.unwrap_or(-1.0).total_cmp(&b.1.unwrap_or(-1.0))));
    envs.dedup();
    let mut out = Vec::new();
    for (env, strength) in envs {
        let get = |algo: &str, metric: &str| lookup(rows, &env, algo, strength, metric);
        match study {
            Study::A => {
                if let (Some(ic), Some(oc), Some(is), Some(os)) =
                    (get("causal", "id_return"), get("causal", "ood_return"), get("standard", "id_return"), get("standard", "ood_return"))
                {
                    if let Ok(g) = gap_reduction(ic.mean, oc.mean, is.mean, os.mean) {
                        out.push(derived_row(s, &env, None, "gap_reduction_pct", g, &[ic, oc, is, os]));
                    }
                }
                if let (Some(is), Some(os)) = (get("standard", "id_return"), get("standard", "ood_return")) {
                    out.push(derived_row(s, &env, None, "standard_ood_over_id", os.mean / is.mean, &[is, os]));
                }
                if let (Some(ic), Some(oc)) = (get("causal", "id_return"), get("causal", "ood_return")) {
                    out.push(derived_row(s, &env, None, "causal_gap_pct_of_id", 100.0 * (ic.mean - oc.mean).abs() / ic.mean, &[ic, oc]));
                }
            }
            Study::B => {
                if let (Some(st), Some(or), Some(ca)) = (get("standard", "score"), get("oracle", "score"), get("cae", "score")) {
                    if let Ok(g) = gap_closed(st.mean, or.mean, ca.mean) {
                        out.push(derived_row(s, &env, None, "gap_closed_pct", g, &[st, or, ca]));
                    }
                }
            }
            Study::C => {
                let heads = [get("pace-bc", "true_value"), get("pace-greedy", "true_value")];
                let best = heads.iter().flatten().max_by(|a, b| a.mean.total_cmp(&b.mean));
                if let (Some(best), Some(st)) = (best, get("standard", "true_value")) {
                    out.push(derived_row(s, &env, strength, "causal_minus_standard", best.mean - st.mean, &[best, st]));
                    out.push(derived_row(s, &env, strength, "improvement_pct", 100.0 * (best.mean - st.mean) / st.mean, &[best, st]));
                }
            }
            Study::E => {
                if let (Some(c), Some(r)) = (get("scm", "stability_causal"), get("scm", "stability_random")) {
                    out.push(derived_row(s, &env, None, "stability_reduction_pct", 100.0 * (1.0 - c.mean / r.mean), &[c, r]));
                }
                let imp: Vec<&SummaryRow> = FEATURE_NAMES.iter().filter_map(|f| get("scm", &format!("importance_{f}"))).collect();
                if imp.len() == FEATURE_NAMES.len() {
                    let top = (0..imp.len()).max_by(|&a, &b| imp[a].mean.total_cmp(&imp[b].mean)).unwrap_or(0);
                    out.push(derived_row(s, &env, None, "top_feature_index", top as f64, &imp));
                }
            }
            Study::CausalCore => {}
        }
    }
    out
}

/// Result of a study run.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyOutput {
    pub records: Vec<MetricRecord>,
    pub summary: Vec<SummaryRow>,
    /// `(job label, error)` for every failed job.
    pub failures: Vec<(String, String)>,
    pub wall_times: Vec<(String, f64)>,
}

impl StudyOutput {
    pub fn is_partial(&self) -> bool {
        !self.failures.is_empty()
    }

    pub fn row(&self, env: &str, algo: &str, strength: Option<f64>, metric: &str) -> Option<&SummaryRow> {
        lookup(&self.summary, env, algo, strength, metric)
    }
}

fn job_label(j: &Job) -> String {
    match j.strength {
        Some(s) => format!("{}/{}/strength={s}/seed={}", j.env, j.algo, j.seed),
        None => format!("{}/{}/seed={}", j.env, j.algo, j.seed),
    }
}

/// Run every `(env, algo, seed)` job, in parallel where threads allow, and
/// summarize. Failed jobs are reported, not fatal; the affected summary
/// rows are marked partial. Writes files when `out_dir` is set.
pub fn run_study(cfg: &RunConfig) -> Result<StudyOutput, ExpError> {
    cfg.validate()?;
    let jobs = jobs(cfg)?;
    let results: Vec<(Result<Vec<MetricRecord>, ExpError>, f64)> = jobs
        .par_iter()
        .map(|j| {
            let start = Instant::now();
            let r = run_job(cfg, j);
            (r, start.elapsed().as_secs_f64())
        })
        .collect();
    let mut records = Vec::new();
    let mut failures = Vec::new();
    let mut wall_times = Vec::new();
    for (job, (result, secs)) in jobs.iter().zip(results) {
        wall_times.push((job_label(job), secs));
        match result {
            Ok(r) => records.extend(r),
            Err(e) => failures.push((job_label(job), e.to_string())),
        }
    }
    let expected = if cfg.study == Study::CausalCore { 1 } else { cfg.seeds.len() };
    let mut summary = if records.is_empty() { Vec::new() } else { summarize(&records, expected)? };
    summary.extend(derived_metrics(cfg.study, &summary));
    let out = StudyOutput { records, summary, failures, wall_times };
    if let Some(dir) = &cfg.out_dir {
        write_outputs(cfg, &out, dir)?;
    }
    Ok(out)
}

fn io(e: std::io::Error) -> ExpError {
    ExpError::Io(e.to_string())
}

/// `config.json`, `metrics.jsonl`, `summary.csv`, `timings.jsonl`,
/// `failures.txt` (when any) and the figures.
pub fn write_outputs(cfg: &RunConfig, out: &StudyOutput, dir: &Path) -> Result<(), ExpError> {
    fs::create_dir_all(dir).map_err(io)?;
    fs::write(dir.join("config.json"), cfg.to_json()).map_err(io)?;
    let mut buf = Vec::new();
    write_jsonl(&mut buf, &out.records)?;
    fs::write(dir.join("metrics.jsonl"), buf).map_err(io)?;
    let mut buf = Vec::new();
    write_summary_csv(&mut buf, &out.summary)?;
    fs::write(dir.join("summary.csv"), buf).map_err(io)?;
    let timings: String = out
        .wall_times
        .iter()
        .map(|(job, secs)| serde_json::json!({ "job": job, "wall_time": secs }).to_string() + "\n")
        .collect();
    fs::write(dir.join("timings.jsonl"), timings).map_err(io)?;
    let failures = dir.join("failures.txt");
    if out.failures.is_empty() {
        if failures.exists() {
            fs::remove_file(&failures).map_err(io)?;
        }
    } else {
        let text: String = out.failures.iter().map(|(j, e)| format!("{j}: {e}\n")).collect();
        fs::write(failures, text).map_err(io)?;
    }
    if !out.records.is_empty() {
        for (name, svg) in figures(cfg.study, out)? {
            fs::write(dir.join(name), svg).map_err(io)?;
        }
    }
    Ok(())
}

fn bars(out: &StudyOutput, metrics: &[&str], by_strength: bool) -> Vec<(String, Vec<(String, f64, f64)>)> {
    let mut groups: Vec<(String, Vec<(String, f64, f64)>)> = Vec::new();
    for r in out.summary.iter().filter(|r| r.algo != "derived" && metrics.contains(&r.metric.as_str())) {
        let group = match (by_strength, r.strength) {
            (true, Some(s)) => format!("{} @{s}", r.env),
            _ => format!("{} {}", r.env, r.metric),
        };
        let bar = (r.algo.clone(), r.mean, r.ci95.unwrap_or(0.0));
        match groups.iter_mut().find(|g| g.0 == group) {
            Some(g) => g.1.push(bar),
            None => groups.push((group, vec![bar])),
        }
    }
    groups
}

/// Learning curves and final-comparison bar charts for one study.
pub fn figures(study: Study, out: &StudyOutput) -> Result<Vec<(String, String)>, ExpError> {
    let mut figs = Vec::new();
    match study {
        Study::A => {
            figs.push(("learning_curves.svg".into(), plot::line_chart("Study A training return", "environment steps", "mean episode return", &plot::curve_series(&out.records, "train_return")?)));
            figs.push(("final_returns.svg".into(), plot::bar_chart("Study A greedy returns", "return", &bars(out, &["id_return", "ood_return"], false))));
        }
        Study::B => {
            figs.push(("learning_curves.svg".into(), plot::line_chart("Study B training score", "environment steps", "score", &plot::curve_series(&out.records, "train_score")?)));
            figs.push(("final_scores.svg".into(), plot::bar_chart("Study B evaluation score", "score", &bars(out, &["score"], false))));
        }
        Study::C => {
            figs.push(("true_values.svg".into(), plot::bar_chart("Study C policy value by confounding strength", "true value", &bars(out, &["true_value"], true))));
            figs.push(("ope_error.svg".into(), plot::bar_chart("Study C OPE absolute error", "|OPE - truth|", &bars(out, &["ope_abs_error"], true))));
        }
        Study::E => {
            let names: Vec<String> = FEATURE_NAMES.iter().map(|f| format!("importance_{f}")).collect();
            let refs: Vec<&str> = names.iter().map(String::as_str).collect();
            figs.push(("attribution.svg".into(), plot::bar_chart("Study E feature attribution", "normalized importance", &bars(out, &refs, false))));
            figs.push(("stability.svg".into(), plot::bar_chart("Study E attribution variance", "variance", &bars(out, &["stability_causal", "stability_random"], false))));
        }
        Study::CausalCore => {
            figs.push(("selftest.svg".into(), plot::plot_records(&out.records)?));
        }
    }
    Ok(figs)
}
