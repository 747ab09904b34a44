//! Experiment drivers.
//!
//! Each `run_*` function reads its inputs, writes fixed-name outputs under
//! the configured directory and finishes with a manifest. The computation
//! itself lives in the matching function without the `run_` prefix, which
//! takes already-loaded models and sentences and touches no files.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use straighten_core::corpus::Sentence;
use straighten_core::generation::{build_experiment3_pairs, GenerationSpec, Strategy};
use straighten_core::geometry::{
    corpus_average_curvature, corpus_average_delta, curvature_profile, random_trajectory_baseline,
    sentence_curvature_of, top_drop_selection, word_reduce, LayerStats, WordReduce,
};
use straighten_core::model::Logits;
use straighten_core::stats::{mean_std, paired_t, pearson};
use straighten_core::{Component, CurvatureProfile, DegeneratePolicy, Model, ModelConfig, NgramModel, TokenSequence, Vocabulary};

use crate::checkpoint::{load_model, resolve};
use crate::error::{Error, Result};
use crate::formats::{
    load_ngram, read_corpus, write_csv, write_json, write_jsonl, CorrelationRow, PairRecord, ProfileRow, SurprisalRow,
    CORRELATION_CSV, PAIRS_JSONL, PROFILE_CSV, SUMMARY_JSON, SURPRISAL_CSV,
};
use crate::manifest::{sha256_file, FileHash, Manifest};
use crate::vocab::{gpt2_vocabulary, load_vocabulary};

pub const ABLATION_CSV: &str = "ablation.csv";
pub const BASELINE_CSV: &str = "baseline.csv";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelSpec {
    /// Directory, `.safetensors` file, or name under the cache directory.
    Checkpoint { path: String },
    /// Random initialization of a published architecture.
    Untrained { preset: String, seed: u64 },
}

impl ModelSpec {
    pub fn label(&self) -> String {
        match self {
            ModelSpec::Checkpoint { path } => {
                let p = Path::new(path);
                let stem = if p.extension().is_some_and(|e| e == "safetensors") {
                    p.parent().and_then(Path::file_name).or_else(|| p.file_stem())
                } else {
                    p.file_name()
                };
                stem.map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| path.clone())
            }
            ModelSpec::Untrained { preset, seed } => format!("untrained-{preset}-seed{seed}"),
        }
    }

    pub fn load(&self) -> Result<LoadedModel> {
        let label = self.label();
        match self {
            ModelSpec::Checkpoint { path } => {
                let model = load_model(path)?;
                let (weights, _) = resolve(path)?;
                Ok(LoadedModel { label, model, hash: sha256_file(&weights)? })
            }
            ModelSpec::Untrained { preset, seed } => {
                let config = ModelConfig::preset(preset)
                    .ok_or_else(|| Error::Config(format!("unknown architecture preset {preset:?}")))?;
                Ok(LoadedModel { label, model: Model::random_init(config, *seed)?, hash: format!("untrained:{preset}:{seed}") })
            }
        }
    }
}

pub struct LoadedModel {
    pub label: String,
    pub model: Model,
    /// Checkpoint sha256, or `untrained:<preset>:<seed>`.
    pub hash: String,
}

impl LoadedModel {
    fn file_hash(&self) -> FileHash {
        FileHash { path: self.label.clone(), sha256: self.hash.clone() }
    }
}

/// Unit over which trajectories are built.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Reduce {
    #[default]
    Token,
    Mean,
    Last,
}

impl Reduce {
    fn word_mode(self) -> Option<WordReduce> {
        match self {
            Reduce::Token => None,
            Reduce::Mean => Some(WordReduce::Mean),
            Reduce::Last => Some(WordReduce::Last),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Reduce::Token => "token",
            Reduce::Mean => "mean",
            Reduce::Last => "last",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptureOptions {
    /// Position in the capture list that Δ-curvature is measured against.
    pub reference_layer: usize,
    /// Appends the final layer-norm output, labeled `n_layers + 1`.
    pub include_final_norm: bool,
    pub reduce: Reduce,
    /// Skip angles touching degenerate steps instead of rejecting the sentence.
    pub skip_degenerate: bool,
}

impl Default for CaptureOptions {
    fn default() -> Self {
        Self { reference_layer: 0, include_final_norm: false, reduce: Reduce::Token, skip_degenerate: false }
    }
}

impl CaptureOptions {
    fn policy(&self) -> DegeneratePolicy {
        if self.skip_degenerate {
            DegeneratePolicy::Skip
        } else {
            DegeneratePolicy::Error
        }
    }

    pub fn layer_labels(&self, config: &ModelConfig) -> Vec<usize> {
        let last = if self.include_final_norm { config.n_layers + 1 } else { config.n_layers };
        (0..=last).collect()
    }
}

/// Settings shared by every experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub models: Vec<ModelSpec>,
    pub corpus: Option<PathBuf>,
    pub limit: Option<usize>,
    pub out: PathBuf,
    pub capture: CaptureOptions,
    pub seed: u64,
    /// Directory holding `vocab.json` and `merges.txt`; the bundled GPT-2
    /// files when absent.
    pub vocab: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(model: ModelSpec, corpus: Option<PathBuf>, out: PathBuf) -> Self {
        Self { models: vec![model], corpus, limit: None, out, capture: CaptureOptions::default(), seed: 0, vocab: None }
    }

    pub fn vocabulary(&self) -> Result<Vocabulary> {
        match &self.vocab {
            Some(dir) => load_vocabulary(&dir.join("vocab.json"), &dir.join("merges.txt")),
            None => Ok(gpt2_vocabulary()),
        }
    }

    pub fn sentences(&self) -> Result<(Vec<Sentence>, FileHash)> {
        let path = self.corpus.as_ref().ok_or_else(|| Error::Config("a corpus path is required".into()))?;
        let mut sentences = read_corpus(path)?;
        if let Some(limit) = self.limit {
            sentences.truncate(limit);
        }
        if sentences.is_empty() {
            return Err(Error::Config(format!("{}: no sentences", path.display())));
        }
        Ok((sentences, FileHash { path: path.display().to_string(), sha256: sha256_file(path)? }))
    }

    fn single_model(&self) -> Result<&ModelSpec> {
        match self.models.as_slice() {
            [m] => Ok(m),
            other => Err(Error::Config(format!("expected one model, got {}", other.len()))),
        }
    }

    fn manifest(&self, command: &str, params: &impl Serialize) -> Result<Manifest> {
        #[derive(Serialize)]
        struct Full<'a, P> {
            common: &'a ExperimentConfig,
            params: &'a P,
        }
        Manifest::new(command, &Full { common: self, params }, self.seed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcludedSentence {
    pub sentence_id: String,
    pub reason: String,
}

/// A sentence with its tokenization.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub id: String,
    pub text: String,
    pub tokens: TokenSequence,
}

/// Tokenizes sentences, excluding those that do not fit the context window.
pub fn prepare(vocab: &Vocabulary, sentences: &[Sentence], context_window: usize) -> (Vec<Prepared>, Vec<ExcludedSentence>) {
    let mut kept = Vec::new();
    let mut excluded = Vec::new();
    for s in sentences {
        let tokens = vocab.encode(&s.text);
        if tokens.len() > context_window {
            excluded.push(ExcludedSentence {
                sentence_id: s.id.clone(),
                reason: format!("{} tokens exceed the context window of {context_window}", tokens.len()),
            });
        } else {
            kept.push(Prepared { id: s.id.clone(), text: s.text.clone(), tokens });
        }
    }
    (kept, excluded)
}

/// Curvature profile of one sentence across capture points.
pub fn sentence_profile(model: &Model, tokens: &TokenSequence, opts: &CaptureOptions) -> straighten_core::Result<CurvatureProfile> {
    let hs = model.forward_with(&tokens.ids, Logits::None)?;
    let mut trajectories = hs.capture_points;
    if opts.include_final_norm {
        trajectories.push(hs.final_norm);
    }
    if let Some(mode) = opts.reduce.word_mode() {
        trajectories = trajectories
            .iter()
            .map(|t| word_reduce(t, &tokens.word_spans, mode))
            .collect::<straighten_core::Result<_>>()?;
    }
    curvature_profile(&trajectories, opts.reference_layer, opts.policy())
}

/// Profiles for a corpus, in input order. Failing sentences are excluded
/// with the reason logged.
#[derive(Debug, Clone)]
pub struct ProfileSet {
    pub ids: Vec<String>,
    pub profiles: Vec<CurvatureProfile>,
    pub excluded: Vec<ExcludedSentence>,
    pub layers: Vec<usize>,
}

impl ProfileSet {
    pub fn rows(&self) -> impl Iterator<Item = ProfileRow> + '_ {
        self.ids.iter().zip(&self.profiles).flat_map(move |(id, p)| {
            self.layers.iter().enumerate().map(move |(i, &layer)| ProfileRow {
                sentence_id: id.clone(),
                layer,
                curvature_deg: p.per_layer_curvature[i],
                delta_deg: p.per_layer_delta[i],
            })
        })
    }

    pub fn skipped_angles(&self) -> usize {
        self.profiles.iter().map(|p| p.skipped_angles).sum()
    }
}

pub fn profile_corpus(model: &Model, sentences: &[Prepared], opts: &CaptureOptions) -> ProfileSet {
    let results: Vec<_> = sentences.par_iter().map(|s| sentence_profile(model, &s.tokens, opts)).collect();
    let mut set = ProfileSet { ids: Vec::new(), profiles: Vec::new(), excluded: Vec::new(), layers: opts.layer_labels(model.config()) };
    for (s, r) in sentences.iter().zip(results) {
        match r {
            Ok(p) => {
                set.ids.push(s.id.clone());
                set.profiles.push(p);
            }
            Err(e) => {
                log::warn!("sentence {} excluded: {e}", s.id);
                set.excluded.push(ExcludedSentence { sentence_id: s.id.clone(), reason: e.to_string() });
            }
        }
    }
    set
}

/// Corpus statistics per capture point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSummary {
    pub layers: Vec<usize>,
    pub count: usize,
    pub mean_curvature: Vec<f64>,
    pub std_curvature: Vec<f64>,
    pub mean_delta: Vec<f64>,
    pub std_delta: Vec<f64>,
    /// Label of the capture point with the most negative mean Δ-curvature.
    pub min_delta_layer: usize,
    pub min_delta: f64,
}

impl LayerSummary {
    pub fn from_profiles(layers: &[usize], profiles: &[CurvatureProfile]) -> Result<Self> {
        let c: LayerStats = corpus_average_curvature(profiles)?;
        let d: LayerStats = corpus_average_delta(profiles)?;
        let (i, min) = d.min_mean();
        Ok(Self {
            layers: layers.to_vec(),
            count: d.count,
            mean_curvature: c.mean,
            std_curvature: c.std,
            mean_delta: d.mean,
            std_delta: d.std,
            min_delta_layer: layers[i],
            min_delta: min,
        })
    }

    /// Minimum mean Δ-curvature restricted to capture points `0..=last`.
    pub fn min_delta_through(&self, last: usize) -> (usize, f64) {
        self.layers
            .iter()
            .zip(&self.mean_delta)
            .filter(|(l, _)| **l <= last)
            .fold((0, f64::INFINITY), |best, (&l, &v)| if v < best.1 { (l, v) } else { best })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopDrop {
    pub n: usize,
    pub sentence_ids: Vec<String>,
    pub mean_delta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exp1Summary {
    pub model: String,
    pub parameter_count: usize,
    pub n_layers: usize,
    pub capture: CaptureOptions,
    pub sentences: usize,
    pub excluded: Vec<ExcludedSentence>,
    pub skipped_angles: usize,
    pub layers: LayerSummary,
    pub top_drop: TopDrop,
}

pub fn experiment1(model: &LoadedModel, sentences: &[Prepared], opts: &CaptureOptions, top_n: usize) -> Result<(ProfileSet, Exp1Summary)> {
    let set = profile_corpus(&model.model, sentences, opts);
    let layers = LayerSummary::from_profiles(&set.layers, &set.profiles)?;
    let top = top_drop_selection(&set.profiles, top_n);
    let top_profiles: Vec<CurvatureProfile> = top.iter().map(|&i| set.profiles[i].clone()).collect();
    let top_drop = TopDrop {
        n: top.len(),
        sentence_ids: top.iter().map(|&i| set.ids[i].clone()).collect(),
        mean_delta: if top_profiles.is_empty() { Vec::new() } else { corpus_average_delta(&top_profiles)?.mean },
    };
    let config = model.model.config();
    let summary = Exp1Summary {
        model: model.label.clone(),
        parameter_count: config.parameter_count(),
        n_layers: config.n_layers,
        capture: *opts,
        sentences: set.profiles.len(),
        excluded: set.excluded.clone(),
        skipped_angles: set.skipped_angles(),
        layers,
        top_drop,
    };
    Ok((set, summary))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exp1Params {
    pub top_n: usize,
}

pub fn run_experiment1(cfg: &ExperimentConfig, params: &Exp1Params) -> Result<Exp1Summary> {
    let manifest = cfg.manifest("exp1", params)?;
    let model = cfg.single_model()?.load()?;
    let (sentences, corpus_hash) = cfg.sentences()?;
    let vocab = cfg.vocabulary()?;
    let (prepared, mut excluded) = prepare(&vocab, &sentences, model.model.config().context_window);
    let (set, mut summary) = experiment1(&model, &prepared, &cfg.capture, params.top_n)?;
    excluded.append(&mut summary.excluded);
    summary.excluded = excluded;
    write_csv(&cfg.out.join(PROFILE_CSV), set.rows())?;
    write_json(&cfg.out.join(SUMMARY_JSON), &summary)?;
    let mut manifest = manifest;
    manifest.models.push(model.file_hash());
    manifest.corpus = Some(corpus_hash);
    manifest.finish(&cfg.out, &[PROFILE_CSV, SUMMARY_JSON])?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeRow {
    pub model: String,
    pub parameter_count: usize,
    pub n_layers: usize,
    pub sentences: usize,
    pub min_delta: f64,
    pub min_delta_layer: usize,
    pub mean_delta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exp2Summary {
    pub capture: CaptureOptions,
    pub rows: Vec<SizeRow>,
}

/// Per-model layerwise Δ-curvature on the same sentences.
pub fn experiment2(
    models: &[LoadedModel],
    vocab: &Vocabulary,
    sentences: &[Sentence],
    opts: &CaptureOptions,
) -> Result<(Vec<ProfileSet>, Exp2Summary)> {
    let mut sets = Vec::new();
    let mut rows = Vec::new();
    for m in models {
        let (prepared, _) = prepare(vocab, sentences, m.model.config().context_window);
        let set = profile_corpus(&m.model, &prepared, opts);
        let s = LayerSummary::from_profiles(&set.layers, &set.profiles)?;
        rows.push(SizeRow {
            model: m.label.clone(),
            parameter_count: m.model.config().parameter_count(),
            n_layers: m.model.config().n_layers,
            sentences: s.count,
            min_delta: s.min_delta,
            min_delta_layer: s.min_delta_layer,
            mean_delta: s.mean_delta,
        });
        sets.push(set);
    }
    Ok((sets, Exp2Summary { capture: *opts, rows }))
}

fn safe_dir_name(label: &str) -> String {
    label.chars().map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' }).collect()
}

pub fn run_experiment2(cfg: &ExperimentConfig) -> Result<Exp2Summary> {
    if cfg.models.is_empty() {
        return Err(Error::Config("experiment 2 needs at least one model".into()));
    }
    let mut manifest = cfg.manifest("exp2", &())?;
    let mut models = Vec::new();
    let mut failures = Vec::new();
    for spec in &cfg.models {
        match spec.load() {
            Ok(m) => models.push(m),
            Err(e) => failures.push(format!("{}: {e}", spec.label())),
        }
    }
    if !failures.is_empty() {
        return Err(Error::Config(format!("model loading failed:\n  {}", failures.join("\n  "))));
    }
    let (sentences, corpus_hash) = cfg.sentences()?;
    let vocab = cfg.vocabulary()?;
    let (sets, summary) = experiment2(&models, &vocab, &sentences, &cfg.capture)?;
    let mut outputs = vec![SUMMARY_JSON.to_string()];
    for (m, set) in models.iter().zip(&sets) {
        let rel = format!("{}/{PROFILE_CSV}", safe_dir_name(&m.label));
        write_csv(&cfg.out.join(&rel), set.rows())?;
        outputs.push(rel);
        manifest.models.push(m.file_hash());
    }
    write_json(&cfg.out.join(SUMMARY_JSON), &summary)?;
    manifest.corpus = Some(corpus_hash);
    let names: Vec<&str> = outputs.iter().map(String::as_str).collect();
    manifest.finish(&cfg.out, &names)?;
    Ok(summary)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum StrategySpec {
    Greedy,
    Beam { width: usize },
    TopK { k: usize, seed: u64 },
}

impl From<StrategySpec> for Strategy {
    fn from(s: StrategySpec) -> Self {
        match s {
            StrategySpec::Greedy => Strategy::Greedy,
            StrategySpec::Beam { width } => Strategy::Beam { width },
            StrategySpec::TopK { k, seed } => Strategy::TopK { k, seed },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exp3Params {
    pub prompt_tokens: usize,
    pub continuation_tokens: usize,
    pub strategies: Vec<StrategySpec>,
}

impl Default for Exp3Params {
    fn default() -> Self {
        Self { prompt_tokens: 3, continuation_tokens: 7, strategies: vec![StrategySpec::Greedy] }
    }
}

/// Ground truth versus generated continuation for one decoding strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySummary {
    pub strategy: String,
    pub pairs: usize,
    pub excluded: Vec<ExcludedSentence>,
    /// Generated sequences in which degenerate steps were skipped.
    pub flagged_generated: usize,
    pub layers: Vec<usize>,
    pub mean_delta_ground_truth: Vec<f64>,
    pub mean_delta_generated: Vec<f64>,
    /// Mean of generated minus ground-truth Δ-curvature.
    pub mean_difference: Vec<f64>,
    pub std_err: Vec<f64>,
    pub t: Vec<f64>,
    pub p_value: Vec<f64>,
    /// Layer where |mean difference| is largest.
    pub max_separation_layer: usize,
    pub max_separation_difference: f64,
    pub max_separation_p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exp3Summary {
    pub model: String,
    pub prompt_tokens: usize,
    pub continuation_tokens: usize,
    pub strategies: Vec<StrategySummary>,
}

pub struct Exp3Output {
    pub summary: Exp3Summary,
    pub pairs: Vec<PairRecord>,
    pub rows: Vec<ProfileRow>,
}

/// Trajectories are token level; the reference layer and final-norm options
/// of `opts` apply, its word reduction does not.
pub fn experiment3(model: &LoadedModel, vocab: &Vocabulary, sentences: &[Prepared], params: &Exp3Params, opts: &CaptureOptions) -> Result<Exp3Output> {
    // Sampled ids must decode; a tokenizer smaller than the embedding table would let them escape.
    if vocab.len() < model.model.config().vocab_size {
        return Err(Error::Config(format!(
            "tokenizer has {} entries but {} embeds {} ids",
            vocab.len(),
            model.label,
            model.model.config().vocab_size
        )));
    }
    let token_opts = CaptureOptions { reduce: Reduce::Token, ..*opts };
    let generated_opts = CaptureOptions { skip_degenerate: true, ..token_opts };
    let ids: Vec<Vec<u32>> = sentences.iter().map(|s| s.tokens.ids.clone()).collect();
    let layers = token_opts.layer_labels(model.model.config());
    let mut strategies = Vec::new();
    let mut records = Vec::new();
    let mut rows = Vec::new();
    for &strategy in &params.strategies {
        let spec = GenerationSpec {
            prompt_tokens: params.prompt_tokens,
            continuation_tokens: params.continuation_tokens,
            strategy: strategy.into(),
        };
        let label = spec.strategy.label();
        let (pairs, excluded) = build_experiment3_pairs(&ids, &spec, &model.model)?;
        let mut excluded: Vec<ExcludedSentence> = excluded
            .into_iter()
            .map(|e| ExcludedSentence { sentence_id: sentences[e.sentence].id.clone(), reason: e.reason })
            .collect();
        let curves: Vec<_> = pairs
            .par_iter()
            .map(|p| {
                let gt = vocab.sequence_from_ids(&p.ground_truth)?;
                let gen = vocab.sequence_from_ids(&p.generated)?;
                Ok::<_, straighten_core::Error>((sentence_profile(&model.model, &gt, &token_opts)?, sentence_profile(&model.model, &gen, &generated_opts)?))
            })
            .collect();
        let mut kept = Vec::new();
        for (p, c) in pairs.iter().zip(curves) {
            let id = &sentences[p.sentence].id;
            match c {
                Ok((gt, gen)) => kept.push((p, gt, gen)),
                Err(e) => {
                    log::warn!("pair {id} ({label}) excluded: {e}");
                    excluded.push(ExcludedSentence { sentence_id: id.clone(), reason: e.to_string() });
                }
            }
        }
        if kept.len() < 2 {
            return Err(Error::Config(format!("strategy {label}: {} usable pairs, need at least 2", kept.len())));
        }
        let gt_profiles: Vec<CurvatureProfile> = kept.iter().map(|k| k.1.clone()).collect();
        let gen_profiles: Vec<CurvatureProfile> = kept.iter().map(|k| k.2.clone()).collect();
        let gt_mean = corpus_average_delta(&gt_profiles)?.mean;
        let gen_mean = corpus_average_delta(&gen_profiles)?.mean;
        let (mut diff, mut se, mut t, mut pv) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for l in 0..layers.len() {
            let g: Vec<f64> = gen_profiles.iter().map(|p| p.per_layer_delta[l]).collect();
            let h: Vec<f64> = gt_profiles.iter().map(|p| p.per_layer_delta[l]).collect();
            let test = paired_t(&g, &h)?;
            diff.push(test.mean);
            se.push(test.std_err);
            t.push(test.t);
            pv.push(test.p_value);
        }
        let best = (0..layers.len()).fold(0, |b, l| if diff[l].abs() > diff[b].abs() { l } else { b });
        for (p, gt, gen) in &kept {
            let id = &sentences[p.sentence].id;
            records.push(PairRecord {
                sentence_id: id.clone(),
                prompt_text: vocab.decode(&p.ground_truth[..params.prompt_tokens])?,
                ground_truth_text: vocab.decode(&p.ground_truth)?,
                generated_text: vocab.decode(&p.generated)?,
                strategy: label.clone(),
            });
            for (tag, prof) in [("ground_truth", gt), ("generated", gen)] {
                for (i, &layer) in layers.iter().enumerate() {
                    rows.push(ProfileRow {
                        sentence_id: format!("{id}/{label}/{tag}"),
                        layer,
                        curvature_deg: prof.per_layer_curvature[i],
                        delta_deg: prof.per_layer_delta[i],
                    });
                }
            }
        }
        strategies.push(StrategySummary {
            strategy: label,
            pairs: kept.len(),
            excluded,
            flagged_generated: kept.iter().filter(|k| k.2.skipped_angles > 0).count(),
            layers: layers.clone(),
            mean_delta_ground_truth: gt_mean,
            mean_delta_generated: gen_mean,
            max_separation_layer: layers[best],
            max_separation_difference: diff[best],
            max_separation_p_value: pv[best],
            mean_difference: diff,
            std_err: se,
            t,
            p_value: pv,
        });
    }
    let summary = Exp3Summary {
        model: model.label.clone(),
        prompt_tokens: params.prompt_tokens,
        continuation_tokens: params.continuation_tokens,
        strategies,
    };
    Ok(Exp3Output { summary, pairs: records, rows })
}

pub fn run_experiment3(cfg: &ExperimentConfig, params: &Exp3Params) -> Result<Exp3Summary> {
    let mut manifest = cfg.manifest("exp3", params)?;
    let model = cfg.single_model()?.load()?;
    let (sentences, corpus_hash) = cfg.sentences()?;
    let vocab = cfg.vocabulary()?;
    let (prepared, _) = prepare(&vocab, &sentences, model.model.config().context_window);
    let out = experiment3(&model, &vocab, &prepared, params, &cfg.capture)?;
    write_jsonl(&cfg.out.join(PAIRS_JSONL), &out.pairs)?;
    write_csv(&cfg.out.join(PROFILE_CSV), &out.rows)?;
    write_json(&cfg.out.join(SUMMARY_JSON), &out.summary)?;
    manifest.models.push(model.file_hash());
    manifest.corpus = Some(corpus_hash);
    manifest.finish(&cfg.out, &[PAIRS_JSONL, PROFILE_CSV, SUMMARY_JSON])?;
    Ok(out.summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exp4Params {
    /// Binary n-gram model written by `train-ngram`.
    pub ngram: Option<PathBuf>,
    /// Plain-text corpus to train an n-gram model from when no model is given.
    pub ngram_corpus: Option<PathBuf>,
    pub order: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReduceCorrelation {
    pub word_reduce: String,
    pub sentences: usize,
    pub layers: Vec<usize>,
    pub surprisal_r: Vec<f64>,
    pub surprisal_p: Vec<f64>,
    pub unigram_r: Vec<f64>,
    pub unigram_p: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exp4Summary {
    pub model: String,
    pub ngram_order: usize,
    pub excluded: Vec<ExcludedSentence>,
    /// Per-layer significance threshold 0.01 / (layers beyond 0).
    pub bonferroni_threshold: f64,
    pub modes: Vec<ReduceCorrelation>,
}

pub struct Exp4Output {
    pub summary: Exp4Summary,
    pub correlations: Vec<CorrelationRow>,
    pub surprisal: Vec<SurprisalRow>,
}

/// Per-layer Pearson correlation between sentence curvature and sentence
/// surprisal (and unigram frequency), for both word reductions.
pub fn experiment4(model: &LoadedModel, sentences: &[Prepared], ngram: &NgramModel, opts: &CaptureOptions) -> Result<Exp4Output> {
    let mut excluded = Vec::new();
    let mut scored = Vec::new();
    for s in sentences {
        let words: Vec<&str> = s.text.split_whitespace().collect();
        match (ngram.sentence_surprisal(&words), ngram.unigram_frequency(&words)) {
            (Ok(a), Ok(b)) => scored.push((s, a, b)),
            (Err(e), _) | (_, Err(e)) => excluded.push(ExcludedSentence { sentence_id: s.id.clone(), reason: e.to_string() }),
        }
    }
    let modes = [Reduce::Mean, Reduce::Last];
    let per_mode: Vec<Vec<straighten_core::Result<CurvatureProfile>>> = modes
        .iter()
        .map(|&reduce| {
            let o = CaptureOptions { reduce, ..*opts };
            scored.par_iter().map(|(s, _, _)| sentence_profile(&model.model, &s.tokens, &o)).collect()
        })
        .collect();
    let mut usable = Vec::new();
    for (i, (s, _, _)) in scored.iter().enumerate() {
        match per_mode.iter().find_map(|m| m[i].as_ref().err()) {
            Some(e) => excluded.push(ExcludedSentence { sentence_id: s.id.clone(), reason: e.to_string() }),
            None => usable.push(i),
        }
    }
    let surprisal: Vec<f64> = usable.iter().map(|&i| scored[i].1).collect();
    let unigram: Vec<f64> = usable.iter().map(|&i| scored[i].2).collect();
    let layers = opts.layer_labels(model.model.config());
    let mut out_modes = Vec::new();
    let mut correlations = Vec::new();
    for (mode, results) in modes.iter().zip(&per_mode) {
        let profiles: Vec<&CurvatureProfile> = usable.iter().map(|&i| results[i].as_ref().expect("checked above")).collect();
        let mut rc = ReduceCorrelation {
            word_reduce: mode.name().into(),
            sentences: profiles.len(),
            layers: layers.clone(),
            surprisal_r: Vec::new(),
            surprisal_p: Vec::new(),
            unigram_r: Vec::new(),
            unigram_p: Vec::new(),
        };
        for (l, &layer) in layers.iter().enumerate() {
            let curvature: Vec<f64> = profiles.iter().map(|p| p.per_layer_curvature[l]).collect();
            for (name, predictor) in [("surprisal", &surprisal), ("unigram", &unigram)] {
                let c = pearson(&curvature, predictor)?;
                correlations.push(CorrelationRow { word_reduce: mode.name().into(), predictor: name.into(), layer, r: c.r, p_value: c.p_value, n: c.n });
                if name == "surprisal" {
                    rc.surprisal_r.push(c.r);
                    rc.surprisal_p.push(c.p_value);
                } else {
                    rc.unigram_r.push(c.r);
                    rc.unigram_p.push(c.p_value);
                }
            }
        }
        out_modes.push(rc);
    }
    let surprisal_rows = usable
        .iter()
        .map(|&i| SurprisalRow { sentence_id: scored[i].0.id.clone(), surprisal_bits: scored[i].1, unigram_bits: scored[i].2 })
        .collect();
    let summary = Exp4Summary {
        model: model.label.clone(),
        ngram_order: ngram.order(),
        excluded,
        bonferroni_threshold: 0.01 / (layers.len() - 1).max(1) as f64,
        modes: out_modes,
    };
    Ok(Exp4Output { summary, correlations, surprisal: surprisal_rows })
}

pub fn run_experiment4(cfg: &ExperimentConfig, params: &Exp4Params) -> Result<Exp4Summary> {
    let mut manifest = cfg.manifest("exp4", params)?;
    let ngram = match (&params.ngram, &params.ngram_corpus) {
        (Some(path), _) => load_ngram(path)?,
        (None, Some(corpus)) => {
            let text = crate::error::read_string(corpus)?;
            NgramModel::train(text.lines(), params.order)?
        }
        (None, None) => return Err(Error::Config("experiment 4 needs --ngram or --ngram-corpus".into())),
    };
    let model = cfg.single_model()?.load()?;
    let (sentences, corpus_hash) = cfg.sentences()?;
    let vocab = cfg.vocabulary()?;
    let (prepared, _) = prepare(&vocab, &sentences, model.model.config().context_window);
    let out = experiment4(&model, &prepared, &ngram, &cfg.capture)?;
    write_csv(&cfg.out.join(CORRELATION_CSV), &out.correlations)?;
    write_csv(&cfg.out.join(SURPRISAL_CSV), &out.surprisal)?;
    write_json(&cfg.out.join(SUMMARY_JSON), &out.summary)?;
    manifest.models.push(model.file_hash());
    manifest.corpus = Some(corpus_hash);
    manifest.finish(&cfg.out, &[CORRELATION_CSV, SURPRISAL_CSV, SUMMARY_JSON])?;
    Ok(out.summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRun {
    /// Block index (0-based) whose component was zeroed.
    pub layer: usize,
    pub component: String,
    pub summary: LayerSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationSummary {
    pub model: String,
    pub baseline: LayerSummary,
    pub runs: Vec<AblationRun>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub ablated_layer: Option<usize>,
    pub component: String,
    pub layer: usize,
    pub mean_delta: f64,
    pub std_delta: f64,
}

/// Baseline curve plus one curve per (block, component) ablation. Every
/// target is validated before any forward pass runs.
pub fn ablation(model: &LoadedModel, sentences: &[Prepared], targets: &[(usize, Component)], opts: &CaptureOptions) -> Result<AblationSummary> {
    let ablated: Vec<Model> = targets.iter().map(|&(l, c)| model.model.ablate(l, c)).collect::<straighten_core::Result<_>>()?;
    let base = profile_corpus(&model.model, sentences, opts);
    let baseline = LayerSummary::from_profiles(&base.layers, &base.profiles)?;
    let mut runs = Vec::new();
    for (&(layer, component), m) in targets.iter().zip(&ablated) {
        let set = profile_corpus(m, sentences, opts);
        runs.push(AblationRun { layer, component: component.name().into(), summary: LayerSummary::from_profiles(&set.layers, &set.profiles)? });
    }
    Ok(AblationSummary { model: model.label.clone(), baseline, runs })
}

impl AblationSummary {
    pub fn rows(&self) -> Vec<AblationRow> {
        let curve = |ablated_layer, component: &str, s: &LayerSummary| {
            s.layers
                .iter()
                .enumerate()
                .map(|(i, &layer)| AblationRow {
                    ablated_layer,
                    component: component.into(),
                    layer,
                    mean_delta: s.mean_delta[i],
                    std_delta: s.std_delta[i],
                })
                .collect::<Vec<_>>()
        };
        let mut rows = curve(None, "none", &self.baseline);
        for r in &self.runs {
            rows.extend(curve(Some(r.layer), &r.component, &r.summary));
        }
        rows
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationParams {
    pub layers: Vec<usize>,
    pub components: Vec<String>,
}

pub fn run_ablation(cfg: &ExperimentConfig, params: &AblationParams) -> Result<AblationSummary> {
    let mut manifest = cfg.manifest("ablate", params)?;
    let components = params
        .components
        .iter()
        .map(|c| Component::parse(c).ok_or_else(|| Error::Config(format!("unknown component {c:?}"))))
        .collect::<Result<Vec<_>>>()?;
    let targets: Vec<(usize, Component)> = params.layers.iter().flat_map(|&l| components.iter().map(move |&c| (l, c))).collect();
    let model = cfg.single_model()?.load()?;
    let (sentences, corpus_hash) = cfg.sentences()?;
    let vocab = cfg.vocabulary()?;
    let (prepared, _) = prepare(&vocab, &sentences, model.model.config().context_window);
    let summary = ablation(&model, &prepared, &targets, &cfg.capture)?;
    write_csv(&cfg.out.join(ABLATION_CSV), summary.rows())?;
    write_json(&cfg.out.join(SUMMARY_JSON), &summary)?;
    manifest.models.push(model.file_hash());
    manifest.corpus = Some(corpus_hash);
    manifest.finish(&cfg.out, &[ABLATION_CSV, SUMMARY_JSON])?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineParams {
    pub dim: usize,
    pub n: usize,
    pub min_len: usize,
    pub max_len: usize,
}

impl Default for BaselineParams {
    fn default() -> Self {
        Self { dim: 1600, n: 8408, min_len: 6, max_len: 19 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// Left edges in degrees; bins are 1 degree wide.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

pub fn histogram(samples: &[f64]) -> Histogram {
    if samples.is_empty() {
        return Histogram { edges: Vec::new(), counts: Vec::new() };
    }
    let lo = samples.iter().copied().fold(f64::INFINITY, f64::min).floor();
    let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max).floor();
    let bins = (hi - lo) as usize + 1;
    let mut counts = vec![0; bins];
    for &s in samples {
        counts[((s - lo).floor() as usize).min(bins - 1)] += 1;
    }
    Histogram { edges: (0..bins).map(|i| lo + i as f64).collect(), counts }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub histogram: Histogram,
}

impl Distribution {
    pub fn of(samples: &[f64]) -> Result<Self> {
        let (mean, std) = mean_std(samples)?;
        Ok(Self { n: samples.len(), mean, std, histogram: histogram(samples) })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineSummary {
    pub params: BaselineParams,
    pub seed: u64,
    pub random: Distribution,
    /// Capture-point-0 sentence curvature of the corpus, when a model and
    /// corpus were given.
    pub input_layer: Option<Distribution>,
    pub input_layer_model: Option<String>,
}

/// Sentence curvature at capture point 0 (token plus position embedding).
pub fn input_layer_curvatures(model: &Model, sentences: &[Prepared]) -> Vec<f64> {
    let w = model.weights();
    sentences
        .par_iter()
        .filter_map(|s| {
            let d = model.config().d_model;
            let mut x = straighten_core::Tensor2D::zeros(s.tokens.len(), d);
            for (t, &id) in s.tokens.ids.iter().enumerate() {
                let (tok, pos) = (w.token_embedding.row(id as usize), w.position_embedding.row(t));
                for ((o, a), b) in x.row_mut(t).iter_mut().zip(tok).zip(pos) {
                    *o = a + b;
                }
            }
            sentence_curvature_of(&x, DegeneratePolicy::Error).ok().map(|c| c.degrees)
        })
        .collect()
}

pub fn baseline(params: &BaselineParams, seed: u64) -> Result<Vec<f64>> {
    if params.min_len > params.max_len {
        return Err(Error::Config(format!("length range {}..={} is empty", params.min_len, params.max_len)));
    }
    let lengths: Vec<usize> = (params.min_len..=params.max_len).collect();
    Ok(random_trajectory_baseline(params.dim, &lengths, params.n, seed)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRow {
    pub source: String,
    pub index: usize,
    pub curvature_deg: f64,
}

/// Random-trajectory distribution; with a model and corpus configured, the
/// corpus input-layer distribution alongside it.
pub fn run_baseline(cfg: &ExperimentConfig, params: &BaselineParams) -> Result<BaselineSummary> {
    let mut manifest = cfg.manifest("baseline", params)?;
    let random = baseline(params, cfg.seed)?;
    let mut rows: Vec<BaselineRow> =
        random.iter().enumerate().map(|(index, &c)| BaselineRow { source: "random".into(), index, curvature_deg: c }).collect();
    let mut summary = BaselineSummary { params: params.clone(), seed: cfg.seed, random: Distribution::of(&random)?, input_layer: None, input_layer_model: None };
    if let (Some(spec), Some(_)) = (cfg.models.first(), &cfg.corpus) {
        let model = spec.load()?;
        let (sentences, corpus_hash) = cfg.sentences()?;
        let vocab = cfg.vocabulary()?;
        let (prepared, _) = prepare(&vocab, &sentences, model.model.config().context_window);
        let input = input_layer_curvatures(&model.model, &prepared);
        rows.extend(input.iter().enumerate().map(|(index, &c)| BaselineRow { source: "input_layer".into(), index, curvature_deg: c }));
        summary.input_layer = Some(Distribution::of(&input)?);
        summary.input_layer_model = Some(model.label.clone());
        manifest.models.push(model.file_hash());
        manifest.corpus = Some(corpus_hash);
    }
    write_csv(&cfg.out.join(BASELINE_CSV), &rows)?;
    write_json(&cfg.out.join(SUMMARY_JSON), &summary)?;
    manifest.finish(&cfg.out, &[BASELINE_CSV, SUMMARY_JSON])?;
    Ok(summary)
}
