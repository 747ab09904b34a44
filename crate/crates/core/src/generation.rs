//! Autoregressive continuation: greedy, beam search and top-k sampling.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::error::{Error, Result};
use crate::model::Model;
use crate::rng::SeededRng;
use crate::tensor::log_softmax;

/// Anything that scores the next token given a prefix.
pub trait NextTokenModel {
    fn vocab_size(&self) -> usize;
    fn context_window(&self) -> usize;
    fn next_token_logits(&self, ids: &[u32]) -> Result<Vec<f32>>;
}

impl NextTokenModel for Model {
    fn vocab_size(&self) -> usize {
        self.config().vocab_size
    }

    fn context_window(&self) -> usize {
        self.config().context_window
    }

    fn next_token_logits(&self, ids: &[u32]) -> Result<Vec<f32>> {
        Model::next_token_logits(self, ids)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    Greedy,
    Beam { width: usize },
    TopK { k: usize, seed: u64 },
}

impl Strategy {
    pub fn label(&self) -> String {
        match self {
            Strategy::Greedy => "greedy".into(),
            Strategy::Beam { width } => format!("beam{width}"),
            Strategy::TopK { k, .. } => format!("top{k}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GenerationSpec {
    pub prompt_tokens: usize,
    pub continuation_tokens: usize,
    pub strategy: Strategy,
}

impl Default for GenerationSpec {
    fn default() -> Self {
        Self { prompt_tokens: 3, continuation_tokens: 7, strategy: Strategy::Greedy }
    }
}

impl GenerationSpec {
    pub fn total_tokens(&self) -> usize {
        self.prompt_tokens + self.continuation_tokens
    }

    pub fn validate(&self, context_window: usize) -> Result<()> {
        if self.prompt_tokens == 0 {
            return Err(Error::Config("prompt must contain at least one token".into()));
        }
        if self.total_tokens() > context_window {
            return Err(Error::Length { len: self.total_tokens(), limit: context_window });
        }
        match self.strategy {
            Strategy::Beam { width: 0 } => Err(Error::Config("beam width must be at least 1".into())),
            Strategy::TopK { k: 0, .. } => Err(Error::Config("top-k needs k >= 1".into())),
            _ => Ok(()),
        }
    }
}

fn check_lengths(m: &impl NextTokenModel, prompt: &[u32], n: usize) -> Result<()> {
    if prompt.is_empty() {
        return Err(Error::Empty("prompt"));
    }
    if prompt.len() + n > m.context_window() {
        return Err(Error::Length { len: prompt.len() + n, limit: m.context_window() });
    }
    Ok(())
}

/// Index of the largest logit; the lowest id wins ties.
pub fn argmax(logits: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in logits.iter().enumerate().skip(1) {
        if v > logits[best] {
            best = i;
        }
    }
    best
}

/// Ids of the `k` best logits, best first, lower id first on ties.
fn top_k_ids(scores: &[f64], k: usize) -> Vec<usize> {
    let mut ids: Vec<usize> = (0..scores.len()).collect();
    let by_score = |a: &usize, b: &usize| scores[*b].total_cmp(&scores[*a]).then(a.cmp(b));
    if k < ids.len() {
        ids.select_nth_unstable_by(k, by_score);
        ids.truncate(k);
    }
    ids.sort_by(by_score);
    ids
}

/// Prompt followed by `n` argmax tokens.
pub fn greedy_continue(m: &impl NextTokenModel, prompt: &[u32], n: usize) -> Result<Vec<u32>> {
    check_lengths(m, prompt, n)?;
    let mut ids = prompt.to_vec();
    for _ in 0..n {
        let logits = m.next_token_logits(&ids)?;
        ids.push(argmax(&logits) as u32);
    }
    Ok(ids)
}

#[derive(Debug, Clone)]
struct Beam {
    tokens: Vec<u32>,
    score: f64,
}

fn beam_order(a: &Beam, b: &Beam) -> Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.tokens.cmp(&b.tokens))
}

/// Prompt followed by the `n`-token continuation with the highest summed
/// log-probability found by a beam of `width`. Equal scores prefer the
/// lexicographically smaller id sequence.
pub fn beam_continue(m: &impl NextTokenModel, prompt: &[u32], n: usize, width: usize) -> Result<Vec<u32>> {
    check_lengths(m, prompt, n)?;
    if width == 0 {
        return Err(Error::Config("beam width must be at least 1".into()));
    }
    let mut beams = alloc::vec![Beam { tokens: prompt.to_vec(), score: 0.0 }];
    for _ in 0..n {
        let mut candidates = Vec::with_capacity(beams.len() * width);
        for beam in &beams {
            let logp = log_softmax(&m.next_token_logits(&beam.tokens)?)?;
            for id in top_k_ids(&logp, width) {
                let mut tokens = beam.tokens.clone();
                tokens.push(id as u32);
                candidates.push(Beam { tokens, score: beam.score + logp[id] });
            }
        }
        candidates.sort_by(beam_order);
        candidates.truncate(width);
        beams = candidates;
    }
    Ok(beams.into_iter().min_by(beam_order).expect("at least one beam").tokens)
}

/// Prompt followed by `n` tokens, each sampled from the renormalized
/// distribution over the `k` highest-scoring tokens.
pub fn sample_topk_continue(m: &impl NextTokenModel, prompt: &[u32], n: usize, k: usize, seed: u64) -> Result<Vec<u32>> {
    check_lengths(m, prompt, n)?;
    if k == 0 || k > m.vocab_size() {
        return Err(Error::Config(format!("top-k k={k} outside [1, {}]", m.vocab_size())));
    }
    let mut rng = SeededRng::new(seed);
    let mut ids = prompt.to_vec();
    for _ in 0..n {
        let logp = log_softmax(&m.next_token_logits(&ids)?)?;
        let top = top_k_ids(&logp, k);
        let max = logp[top[0]];
        let weights: Vec<f64> = top.iter().map(|&i| libm::exp(logp[i] - max)).collect();
        let total: f64 = weights.iter().sum();
        let mut u = rng.uniform() * total;
        let mut pick = top[top.len() - 1];
        for (&id, &w) in top.iter().zip(&weights) {
            if u < w {
                pick = id;
                break;
            }
            u -= w;
        }
        ids.push(pick as u32);
    }
    Ok(ids)
}

/// Dispatches on `strategy`. For top-k, `stream` is mixed into the seed so
/// that each sentence gets its own reproducible sample.
pub fn continue_with(m: &impl NextTokenModel, prompt: &[u32], n: usize, strategy: Strategy, stream: u64) -> Result<Vec<u32>> {
    match strategy {
        Strategy::Greedy => greedy_continue(m, prompt, n),
        Strategy::Beam { width } => beam_continue(m, prompt, n, width),
        Strategy::TopK { k, seed } => {
            sample_topk_continue(m, prompt, n, k, seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenerationPair {
    pub sentence: usize,
    pub ground_truth: Vec<u32>,
    pub generated: Vec<u32>,
    pub strategy: Strategy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Excluded {
    pub sentence: usize,
    pub reason: String,
}

/// Ground-truth sentences cut to `prompt + continuation` tokens, paired with
/// the model's continuation of the same prompt.
pub fn build_experiment3_pairs(
    corpus: &[Vec<u32>],
    spec: &GenerationSpec,
    m: &impl NextTokenModel,
) -> Result<(Vec<GenerationPair>, Vec<Excluded>)> {
    spec.validate(m.context_window())?;
    let mut pairs = Vec::new();
    let mut excluded = Vec::new();
    for (i, ids) in corpus.iter().enumerate() {
        if ids.len() < spec.total_tokens() {
            excluded.push(Excluded {
                sentence: i,
                reason: format!("{} tokens < {} required", ids.len(), spec.total_tokens()),
            });
            continue;
        }
        let ground_truth = ids[..spec.total_tokens()].to_vec();
        match continue_with(m, &ids[..spec.prompt_tokens], spec.continuation_tokens, spec.strategy, i as u64) {
            Ok(generated) => pairs.push(GenerationPair { sentence: i, ground_truth, generated, strategy: spec.strategy }),
            Err(e) => excluded.push(Excluded { sentence: i, reason: format!("generation failed: {e}") }),
        }
    }
    Ok((pairs, excluded))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    /// Logits depend on the last token only.
    struct Table(Vec<Vec<f32>>);

    impl NextTokenModel for Table {
        fn vocab_size(&self) -> usize {
            self.0.len()
        }
        fn context_window(&self) -> usize {
            64
        }
        fn next_token_logits(&self, ids: &[u32]) -> Result<Vec<f32>> {
            Ok(self.0[*ids.last().unwrap() as usize].clone())
        }
    }

    fn trap() -> Table {
        // Greedy takes 0 (p≈0.5) then is stuck with a flat row; beam finds 1 → 2.
        Table(vec![vec![0.0, 0.0, 0.0], vec![-5.0, -5.0, 5.0], vec![0.0, 0.0, 0.0]])
    }

    fn first_token_trap() -> Table {
        Table(vec![vec![1.0, 0.9, -3.0], vec![-4.0, -4.0, 4.0], vec![0.0, 0.0, 0.0]])
    }

    #[test]
    fn greedy_basics() {
        let m = trap();
        assert_eq!(greedy_continue(&m, &[1], 0).unwrap(), [1]);
        assert_eq!(greedy_continue(&m, &[1], 3).unwrap(), [1, 2, 0, 0]);
        assert!(matches!(greedy_continue(&m, &[1], 64), Err(Error::Length { .. })));
        assert!(greedy_continue(&m, &[], 1).is_err());
    }

    #[test]
    fn argmax_prefers_lowest_id() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0, 2.0]), 1);
        assert_eq!(argmax(&[0.0, 0.0]), 0);
    }

    fn brute_force(m: &Table, prompt: &[u32], n: usize) -> Vec<u32> {
        let v = m.vocab_size();
        let mut best: Option<(f64, Vec<u32>)> = None;
        for code in 0..v.pow(n as u32) {
            let mut ids = prompt.to_vec();
            let mut c = code;
            let mut digits = vec![0u32; n];
            for d in digits.iter_mut().rev() {
                *d = (c % v) as u32;
                c /= v;
            }
            let mut score = 0.0;
            for &t in &digits {
                score += log_softmax(&m.next_token_logits(&ids).unwrap()).unwrap()[t as usize];
                ids.push(t);
            }
            if best.as_ref().is_none_or(|(s, _)| score > *s) {
                best = Some((score, ids));
            }
        }
        best.unwrap().1
    }

    #[test]
    fn beam_matches_exhaustive_search() {
        for m in [trap(), first_token_trap()] {
            for n in 1..=3 {
                let exhaustive = brute_force(&m, &[0], n);
                assert_eq!(beam_continue(&m, &[0], n, 27).unwrap(), exhaustive);
            }
        }
        let m = first_token_trap();
        // Width 2 over a 3-token vocabulary with n=2 already finds the optimum.
        assert_eq!(beam_continue(&m, &[0], 2, 2).unwrap(), brute_force(&m, &[0], 2));
        assert_ne!(greedy_continue(&m, &[0], 2).unwrap(), brute_force(&m, &[0], 2));
    }

    #[test]
    fn reductions_to_greedy() {
        for m in [trap(), first_token_trap()] {
            for start in 0..3 {
                let g = greedy_continue(&m, &[start], 4).unwrap();
                assert_eq!(beam_continue(&m, &[start], 4, 1).unwrap(), g);
                assert_eq!(sample_topk_continue(&m, &[start], 4, 1, 99).unwrap(), g);
            }
        }
        assert_eq!(beam_continue(&trap(), &[2], 0, 3).unwrap(), [2]);
    }

    #[test]
    fn topk_frequencies() {
        let m = Table(vec![vec![2.0, 1.0, -1.0, 0.5]; 4]);
        let p0 = 1.0 / (1.0 + libm::exp(-1.0));
        let trials = 4000;
        let mut zeros = 0;
        for seed in 0..trials {
            let out = sample_topk_continue(&m, &[0], 1, 2, seed).unwrap();
            assert!(out[1] == 0 || out[1] == 1);
            zeros += (out[1] == 0) as usize;
        }
        let sigma = libm::sqrt(trials as f64 * p0 * (1.0 - p0));
        assert!((zeros as f64 - trials as f64 * p0).abs() < 3.0 * sigma);
        assert_eq!(
            sample_topk_continue(&m, &[0], 5, 3, 7).unwrap(),
            sample_topk_continue(&m, &[0], 5, 3, 7).unwrap()
        );
        assert!(sample_topk_continue(&m, &[0], 1, 5, 0).is_err());
    }

    #[test]
    fn pairs() {
        let m = trap();
        let corpus = vec![vec![1, 2, 0, 1, 2], vec![0, 1], vec![2, 2, 2, 1]];
        let spec = GenerationSpec { prompt_tokens: 2, continuation_tokens: 2, strategy: Strategy::Greedy };
        let (pairs, excluded) = build_experiment3_pairs(&corpus, &spec, &m).unwrap();
        assert_eq!(pairs.len(), 2);
        assert_eq!(excluded.len(), 1);
        assert_eq!(excluded[0].sentence, 1);
        for p in &pairs {
            assert_eq!(p.ground_truth.len(), p.generated.len());
            assert_eq!(p.ground_truth[..2], p.generated[..2]);
        }
        assert_eq!(pairs[0].ground_truth, [1, 2, 0, 1]);
        let zero = GenerationSpec { prompt_tokens: 3, continuation_tokens: 0, strategy: Strategy::Greedy };
        let (pairs, _) = build_experiment3_pairs(&corpus, &zero, &m).unwrap();
        assert!(pairs.iter().all(|p| p.ground_truth == p.generated));
    }
}
