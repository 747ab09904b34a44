use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use straighten::harness::{
    run_ablation, run_baseline, run_experiment1, run_experiment2, run_experiment3, run_experiment4, AblationParams,
    BaselineParams, CaptureOptions, Exp1Params, Exp3Params, Exp4Params, ExperimentConfig, ModelSpec, Reduce,
    StrategySpec,
};
use straighten::prep::{run_filter_corpus, run_train_ngram, FilterParams};

/// Curvature of sentence trajectories across transformer layers.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    /// Worker threads for per-sentence work (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Checkpoint directory, .safetensors file or cache name; with
    /// --untrained-seed, an architecture preset (gpt2, distilgpt2, gpt2-medium, gpt2-large, gpt2-xl).
    #[arg(long, default_value = "gpt2")]
    model: Vec<String>,
    /// Use a randomly initialized model with this seed.
    #[arg(long)]
    untrained_seed: Option<u64>,
    /// Sentences: .conllu, .jsonl (from filter-corpus) or plain text.
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Use only the first N sentences.
    #[arg(long)]
    limit: Option<usize>,
    /// Capture point that Δ-curvature is measured against.
    #[arg(long, default_value_t = 0)]
    capture_ref: usize,
    #[arg(long, value_enum, default_value_t = Reduce::Token)]
    word_reduce: Reduce,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also record the final layer-norm output as capture point n_layers + 1.
    #[arg(long)]
    final_norm: bool,
    /// Skip angles at degenerate steps instead of excluding the sentence.
    #[arg(long)]
    skip_degenerate: bool,
    /// Directory with vocab.json and merges.txt (default: bundled GPT-2 files).
    #[arg(long)]
    vocab: Option<PathBuf>,
}

impl Common {
    fn config(&self) -> ExperimentConfig {
        let models = self
            .model
            .iter()
            .map(|m| match self.untrained_seed {
                Some(seed) => ModelSpec::Untrained { preset: m.clone(), seed },
                None => ModelSpec::Checkpoint { path: m.clone() },
            })
            .collect();
        ExperimentConfig {
            models,
            corpus: self.corpus.clone(),
            limit: self.limit,
            out: self.out.clone(),
            capture: CaptureOptions {
                reference_layer: self.capture_ref,
                include_final_norm: self.final_norm,
                reduce: self.word_reduce,
                skip_degenerate: self.skip_degenerate,
            },
            seed: self.seed,
            vocab: self.vocab.clone(),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Layerwise curvature change over a corpus.
    Exp1 {
        #[command(flatten)]
        common: Common,
        /// Size of the largest-drop subset reported separately.
        #[arg(long, default_value_t = 300)]
        top_n: usize,
    },
    /// Curvature change across model sizes (repeat --model).
    Exp2 {
        #[command(flatten)]
        common: Common,
    },
    /// Generated versus ground-truth continuations.
    Exp3 {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 3)]
        prompt_tokens: usize,
        #[arg(long, default_value_t = 7)]
        continuation_tokens: usize,
        /// greedy, beam:<width> or topk:<k>; repeatable. Top-k uses --seed.
        #[arg(long, default_value = "greedy")]
        strategy: Vec<String>,
    },
    /// Correlation of curvature with n-gram surprisal.
    Exp4 {
        #[command(flatten)]
        common: Common,
        /// Binary n-gram model from train-ngram.
        #[arg(long)]
        ngram: Option<PathBuf>,
        /// Plain-text corpus to train the n-gram model from instead.
        #[arg(long)]
        ngram_corpus: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        order: usize,
    },
    /// Zero attention or MLP output at chosen blocks.
    Ablate {
        #[command(flatten)]
        common: Common,
        /// Block indices (0-based), comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        layers: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "attention,mlp")]
        components: Vec<String>,
    },
    /// Random-trajectory curvature null, optionally beside a corpus's input layer.
    Baseline {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1600)]
        dim: usize,
        #[arg(long, default_value_t = 8408)]
        n: usize,
        #[arg(long, default_value_t = 6)]
        min_len: usize,
        #[arg(long, default_value_t = 19)]
        max_len: usize,
    },
    /// Apply the sentence filters and write corpus.jsonl.
    FilterCorpus {
        /// Input files (.conllu or plain text).
        #[arg(long, required = true)]
        corpus: Vec<PathBuf>,
        /// One word per line, frequency ranked (default: bundled list).
        #[arg(long)]
        wordlist: Option<PathBuf>,
        #[arg(long)]
        wordlist_limit: Option<usize>,
        #[arg(long, default_value_t = 6)]
        min_words: usize,
        #[arg(long, default_value_t = 19)]
        max_words: usize,
        /// nouns (UPOS NOUN tokens when tagged) or all.
        #[arg(long, default_value = "nouns")]
        word_check: String,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Count n-grams over a plain-text corpus.
    TrainNgram {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = 3)]
        order: usize,
        /// Output model file; metadata goes to <out>.json.
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_strategy(s: &str, seed: u64) -> Result<StrategySpec> {
    let (name, arg) = s.split_once(':').map_or((s, None), |(a, b)| (a, Some(b)));
    let num = |default: usize| -> Result<usize> {
        arg.map_or(Ok(default), |a| a.parse().with_context(|| format!("bad strategy argument in {s:?}")))
    };
    Ok(match name {
        "greedy" => StrategySpec::Greedy,
        "beam" => StrategySpec::Beam { width: num(5)? },
        "topk" | "top-k" => StrategySpec::TopK { k: num(20)?, seed },
        _ => bail!("unknown strategy {s:?} (greedy | beam:<width> | topk:<k>)"),
    })
}

fn print(value: &impl serde::Serialize) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::Exp1 { common, top_n } => {
            let s = run_experiment1(&common.config(), &Exp1Params { top_n })?;
            print(&s.layers)?;
        }
        Command::Exp2 { common } => print(&run_experiment2(&common.config())?)?,
        Command::Exp3 { common, prompt_tokens, continuation_tokens, strategy } => {
            let strategies = strategy.iter().map(|s| parse_strategy(s, common.seed)).collect::<Result<_>>()?;
            let params = Exp3Params { prompt_tokens, continuation_tokens, strategies };
            let s = run_experiment3(&common.config(), &params)?;
            for st in &s.strategies {
                println!(
                    "{}: {} pairs, max separation at layer {} (difference {:.3} deg, p = {:.3e})",
                    st.strategy, st.pairs, st.max_separation_layer, st.max_separation_difference, st.max_separation_p_value
                );
            }
        }
        Command::Exp4 { common, ngram, ngram_corpus, order } => {
            let s = run_experiment4(&common.config(), &Exp4Params { ngram, ngram_corpus, order })?;
            print(&s.modes)?;
        }
        Command::Ablate { common, layers, components } => {
            let s = run_ablation(&common.config(), &AblationParams { layers, components })?;
            println!("baseline min ΔC {:.3} at layer {}", s.baseline.min_delta, s.baseline.min_delta_layer);
            for r in &s.runs {
                println!("{} @ block {}: min ΔC {:.3} at layer {}", r.component, r.layer, r.summary.min_delta, r.summary.min_delta_layer);
            }
        }
        Command::Baseline { common, dim, n, min_len, max_len } => {
            let mut cfg = common.config();
            // The baseline needs a model only to compare against a corpus.
            if cfg.corpus.is_none() {
                cfg.models.clear();
            }
            let s = run_baseline(&cfg, &BaselineParams { dim, n, min_len, max_len })?;
            println!("random: n = {}, mean = {:.3} deg, std = {:.3}", s.random.n, s.random.mean, s.random.std);
            if let Some(d) = &s.input_layer {
                println!("input layer: n = {}, mean = {:.3} deg, std = {:.3}", d.n, d.mean, d.std);
            }
        }
        Command::FilterCorpus { corpus, wordlist, wordlist_limit, min_words, max_words, word_check, out } => {
            let params = FilterParams { inputs: corpus, wordlist, wordlist_limit, min_words, max_words, word_check };
            let s = run_filter_corpus(&params, &out)?;
            println!("retained {} of {} sentences", s.retained, s.parsed);
        }
        Command::TrainNgram { corpus, order, out } => {
            let m = run_train_ngram(&corpus, order, &out)?;
            println!("{}-gram model: {} word types, {} word tokens", m.order(), m.vocabulary().len() - 2, m.word_tokens());
        }
    }
    Ok(())
}
