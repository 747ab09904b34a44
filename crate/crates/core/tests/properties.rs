use proptest::prelude::*;
use straighten_core::generation::{beam_continue, greedy_continue, sample_topk_continue, NextTokenModel};
use straighten_core::geometry::{curvature_profile, sentence_curvature_of, step_curvature, DegeneratePolicy};
use straighten_core::rng::SeededRng;
use straighten_core::stats::pearson;
use straighten_core::tensor::{layer_norm, log_softmax, softmax};
use straighten_core::{Component, LayerTrajectory, Model, ModelConfig, NgramModel, Tensor2D};

fn curvature(points: &[Vec<f32>]) -> f64 {
    sentence_curvature_of(&Tensor2D::from_rows(points).unwrap(), DegeneratePolicy::Error).unwrap().degrees
}

fn gaussian_points(seed: u64, len: usize, dim: usize) -> Vec<Vec<f32>> {
    let mut rng = SeededRng::new(seed);
    (0..len).map(|_| (0..dim).map(|_| rng.standard_normal() as f32).collect()).collect()
}

/// Random orthogonal map (product of Givens rotations), positive scale, shift.
fn similarity(points: &[Vec<f32>], seed: u64, scale: f64, shift: f64) -> Vec<Vec<f32>> {
    let mut rng = SeededRng::new(seed);
    let d = points[0].len();
    let mut out: Vec<Vec<f64>> = points.iter().map(|p| p.iter().map(|&x| x as f64).collect()).collect();
    for _ in 0..4 * d {
        let (i, j) = (rng.below(d), rng.below(d));
        if i == j {
            continue;
        }
        let (s, c) = (rng.uniform() * std::f64::consts::TAU).sin_cos();
        for p in &mut out {
            let (a, b) = (p[i], p[j]);
            p[i] = c * a - s * b;
            p[j] = s * a + c * b;
        }
    }
    out.into_iter().map(|p| p.into_iter().map(|x| (x * scale + shift) as f32).collect()).collect()
}

struct Toy {
    vocab: usize,
    salt: u64,
}

impl NextTokenModel for Toy {
    fn vocab_size(&self) -> usize {
        self.vocab
    }
    fn context_window(&self) -> usize {
        32
    }
    fn next_token_logits(&self, ids: &[u32]) -> straighten_core::Result<Vec<f32>> {
        let h = ids.iter().fold(self.salt, |h, &i| h.wrapping_mul(6364136223846793005).wrapping_add(i as u64 + 1));
        Ok((0..self.vocab as u64).map(|t| ((h ^ t.wrapping_mul(0x9E37_79B9)).wrapping_mul(2862933555777941757) >> 44) as f32 / 1e4).collect())
    }
}

fn best_by_search(m: &Toy, prompt: &[u32], n: usize) -> (f64, Vec<u32>) {
    if n == 0 {
        return (0.0, prompt.to_vec());
    }
    let lp = log_softmax(&m.next_token_logits(prompt).unwrap()).unwrap();
    let mut best = (f64::NEG_INFINITY, Vec::new());
    for (t, l) in lp.iter().enumerate() {
        let mut next = prompt.to_vec();
        next.push(t as u32);
        let (s, seq) = best_by_search(m, &next, n - 1);
        if s + l > best.0 {
            best = (s + l, seq);
        }
    }
    best
}

fn small_model(seed: u64) -> Model {
    let config = ModelConfig { n_layers: 2, d_model: 16, n_heads: 2, vocab_size: 40, context_window: 24 };
    Model::random_init(config, seed).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn step_angles_stay_in_range(a in prop::collection::vec(-1e3f64..1e3, 6), b in prop::collection::vec(-1e3f64..1e3, 6)) {
        if let Ok(angle) = step_curvature(&a, &b) {
            prop_assert!((0.0..=180.0).contains(&angle));
        }
    }

    #[test]
    fn parallel_and_antiparallel_steps_clamp(v in prop::collection::vec(0.1f64..10.0, 1..12), k in 0.5f64..3.0) {
        let along: Vec<f64> = v.iter().map(|x| x * k).collect();
        let back: Vec<f64> = v.iter().map(|x| -x * k).collect();
        prop_assert!(step_curvature(&v, &along).unwrap() < 1e-5);
        prop_assert!((step_curvature(&v, &back).unwrap() - 180.0).abs() < 1e-5);
    }

    #[test]
    fn curvature_is_similarity_invariant(seed in any::<u64>(), len in 3usize..10, dim in 2usize..20, scale in 0.1f64..10.0, shift in -5.0f64..5.0) {
        let pts = gaussian_points(seed, len, dim);
        let moved = similarity(&pts, seed ^ 1, scale, shift);
        prop_assert!((curvature(&pts) - curvature(&moved)).abs() < 1e-4);
    }

    #[test]
    fn reversal_preserves_curvature(seed in any::<u64>(), len in 3usize..12, dim in 2usize..16) {
        let pts = gaussian_points(seed, len, dim);
        let rev: Vec<Vec<f32>> = pts.iter().rev().cloned().collect();
        prop_assert!((curvature(&pts) - curvature(&rev)).abs() < 1e-9);
    }

    #[test]
    fn monotone_line_is_straight(origin in prop::collection::vec(-5.0f32..5.0, 4), dir in prop::collection::vec(0.5f32..2.0, 4), steps in prop::collection::vec(0.1f32..3.0, 2..8)) {
        let mut t = 0.0;
        let mut pts = vec![origin.clone()];
        for s in steps {
            t += s;
            pts.push(origin.iter().zip(&dir).map(|(o, d)| o + t * d).collect());
        }
        prop_assert!(curvature(&pts) < 0.05);
    }

    #[test]
    fn delta_is_zero_at_reference(seed in any::<u64>(), layers in 2usize..6, reference in 0usize..6) {
        let reference = reference % layers;
        let traj: Vec<LayerTrajectory> = (0..layers)
            .map(|l| LayerTrajectory::new(l, Tensor2D::from_rows(&gaussian_points(seed.wrapping_add(l as u64), 5, 8)).unwrap()))
            .collect();
        let p = curvature_profile(&traj, reference, DegeneratePolicy::Error).unwrap();
        prop_assert_eq!(p.per_layer_delta[reference], 0.0);
        for (c, d) in p.per_layer_curvature.iter().zip(&p.per_layer_delta) {
            prop_assert!((c - p.per_layer_curvature[reference] - d).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_is_a_shift_invariant_distribution(x in prop::collection::vec(-50.0f32..50.0, 1..40), c in -100.0f32..100.0) {
        let p = softmax(&x).unwrap();
        let q = softmax(&x.iter().map(|v| v + c).collect::<Vec<_>>()).unwrap();
        prop_assert!((p.iter().map(|&v| v as f64).sum::<f64>() - 1.0).abs() < 1e-5);
        prop_assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
        prop_assert!(p.iter().zip(&q).all(|(a, b)| (a - b).abs() < 1e-5));
    }

    #[test]
    fn layer_norm_standardizes(x in prop::collection::vec(-20.0f32..20.0, 4..64)) {
        let spread = x.iter().cloned().fold(f32::MIN, f32::max) - x.iter().cloned().fold(f32::MAX, f32::min);
        prop_assume!(spread > 0.1);
        let n = x.len();
        let y = layer_norm(&x, &vec![1.0; n], &vec![0.0; n], 1e-5).unwrap();
        let mean = y.iter().map(|&v| v as f64).sum::<f64>() / n as f64;
        let var = y.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n as f64;
        prop_assert!(mean.abs() < 1e-4);
        prop_assert!((var - 1.0).abs() < 1e-2);
    }

    #[test]
    fn ngram_probabilities_normalize(
        lines in prop::collection::vec(prop::collection::vec("[a-f]{1,2}", 1..7), 1..10),
        ctx in prop::collection::vec("[a-h]{1,2}", 0..3),
        order in 1usize..4,
    ) {
        let text: Vec<String> = lines.iter().map(|l| l.join(" ")).collect();
        let m = NgramModel::train(text.iter().map(String::as_str), order).unwrap();
        let ctx: Vec<&str> = ctx.iter().map(String::as_str).collect();
        let total: f64 = m.vocabulary().iter().map(|w| m.probability(w, &ctx)).sum::<f64>() + m.probability("never-seen", &ctx);
        prop_assert!((total - 1.0).abs() < 1e-9, "{}", total);
        prop_assert!(m.word_surprisal(&lines[0][0], &ctx) >= 0.0);
    }

    #[test]
    fn pearson_matches_definition(seed in any::<u64>(), n in 3usize..60, slope in -3.0f64..3.0) {
        let mut rng = SeededRng::new(seed);
        let x: Vec<f64> = (0..n).map(|_| rng.standard_normal()).collect();
        let y: Vec<f64> = x.iter().map(|v| slope * v + rng.standard_normal()).collect();
        let (mx, my) = (x.iter().sum::<f64>() / n as f64, y.iter().sum::<f64>() / n as f64);
        let cov: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
        let sx = x.iter().map(|a| (a - mx).powi(2)).sum::<f64>().sqrt();
        let sy = y.iter().map(|b| (b - my).powi(2)).sum::<f64>().sqrt();
        let c = pearson(&x, &y).unwrap();
        prop_assert!((c.r - cov / (sx * sy)).abs() < 1e-10);
        prop_assert!((0.0..=1.0).contains(&c.p_value));
        let swapped = pearson(&y, &x).unwrap();
        prop_assert!((swapped.r - c.r).abs() < 1e-12);
        let affine: Vec<f64> = x.iter().map(|v| 4.0 * v - 7.0).collect();
        prop_assert!((pearson(&affine, &y).unwrap().r - c.r).abs() < 1e-9);
    }

    #[test]
    fn width_one_decoders_are_greedy(salt in any::<u64>(), prompt in prop::collection::vec(0u32..7, 1..4), n in 0usize..6, seed in any::<u64>()) {
        let m = Toy { vocab: 7, salt };
        let greedy = greedy_continue(&m, &prompt, n).unwrap();
        prop_assert_eq!(&beam_continue(&m, &prompt, n, 1).unwrap(), &greedy);
        prop_assert_eq!(&sample_topk_continue(&m, &prompt, n, 1, seed).unwrap(), &greedy);
    }

    #[test]
    fn full_width_beam_is_exhaustive(salt in any::<u64>(), first in 0u32..4, n in 1usize..4) {
        let m = Toy { vocab: 4, salt };
        let beam = beam_continue(&m, &[first], n, 4usize.pow(n as u32)).unwrap();
        prop_assert_eq!(beam, best_by_search(&m, &[first], n).1);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn forward_is_causal(seed in 0u64..1000, ids in prop::collection::vec(0u32..40, 2..20), cut in 1usize..20) {
        let m = small_model(seed);
        let cut = cut.min(ids.len());
        let full = m.forward(&ids).unwrap();
        let prefix = m.forward(&ids[..cut]).unwrap();
        for (a, b) in full.capture_points.iter().zip(&prefix.capture_points) {
            let head = a.states.slice_rows(0, cut);
            prop_assert!(head.data().iter().zip(b.states.data()).all(|(x, y)| (x - y).abs() < 1e-5));
        }
    }

    #[test]
    fn ablation_only_touches_later_capture_points(seed in 0u64..1000, ids in prop::collection::vec(0u32..40, 2..12), layer in 0usize..2, mlp in any::<bool>()) {
        let m = small_model(seed);
        let component = if mlp { Component::Mlp } else { Component::Attention };
        let full = m.forward(&ids).unwrap();
        let cut = m.ablate(layer, component).unwrap().forward(&ids).unwrap();
        for p in 0..=layer {
            prop_assert_eq!(&full.capture_points[p].states, &cut.capture_points[p].states);
        }
        prop_assert_ne!(&full.capture_points[layer + 1].states, &cut.capture_points[layer + 1].states);
    }
}
