//! Trajectory curvature.
//!
//! A trajectory is a sequence of states `x_1..x_n`. Its steps are
//! `v_k = x_{k+1} - x_k`, the curvature at step `k` is the angle between
//! `v_k` and `v_{k+1}` in degrees, and the sentence curvature is the mean of
//! those `n - 2` angles. Δ-curvature compares each layer against a reference
//! layer of the same sentence; negative values mean straightening.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::stats;
use crate::tensor::Tensor2D;

/// Steps with norm at or below this are degenerate.
pub const DEGENERATE_NORM: f64 = 1e-8;

/// One capture point's states for one sentence, one row per token or word.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerTrajectory {
    pub layer: usize,
    pub states: Tensor2D,
}

impl LayerTrajectory {
    pub fn new(layer: usize, states: Tensor2D) -> Self {
        Self { layer, states }
    }

    pub fn from_points(layer: usize, points: &[Vec<f32>]) -> Result<Self> {
        Ok(Self { layer, states: Tensor2D::from_rows(points)? })
    }

    pub fn len(&self) -> usize {
        self.states.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.states.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.states.cols()
    }
}

/// What to do with a step whose norm is at or below [`DEGENERATE_NORM`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DegeneratePolicy {
    #[default]
    Error,
    /// Drop every angle that involves a degenerate step.
    Skip,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SentenceCurvature {
    pub degrees: f64,
    pub angles: usize,
    pub skipped_angles: usize,
}

pub fn step_vectors(states: &Tensor2D) -> Result<Vec<Vec<f64>>> {
    if states.rows() < 2 {
        return Err(Error::TooShort { len: states.rows(), min: 2 });
    }
    Ok((1..states.rows())
        .map(|k| states.row(k).iter().zip(states.row(k - 1)).map(|(&b, &a)| b as f64 - a as f64).collect())
        .collect())
}

fn norm(v: &[f64]) -> f64 {
    libm::sqrt(v.iter().map(|x| x * x).sum())
}

/// Angle between two steps in degrees, in `[0, 180]`.
///
/// A degenerate operand yields [`Error::DegenerateStep`] with index 0 for
/// `v1` and 1 for `v2`.
pub fn step_curvature(v1: &[f64], v2: &[f64]) -> Result<f64> {
    if v1.len() != v2.len() {
        return Err(Error::Shape(alloc::format!("step dims {} vs {}", v1.len(), v2.len())));
    }
    let (n1, n2) = (norm(v1), norm(v2));
    if n1 <= DEGENERATE_NORM {
        return Err(Error::DegenerateStep { index: 0, norm: n1 });
    }
    if n2 <= DEGENERATE_NORM {
        return Err(Error::DegenerateStep { index: 1, norm: n2 });
    }
    Ok(angle_deg(v1, v2, n1, n2))
}

fn angle_deg(v1: &[f64], v2: &[f64], n1: f64, n2: f64) -> f64 {
    let dot: f64 = v1.iter().zip(v2).map(|(a, b)| a * b).sum();
    let cos = (dot / (n1 * n2)).clamp(-1.0, 1.0);
    libm::acos(cos).to_degrees()
}

/// All `n - 2` step angles; `None` marks angles touching a degenerate step.
pub fn step_angles(states: &Tensor2D) -> Result<Vec<Option<f64>>> {
    if states.rows() < 3 {
        return Err(Error::TooShort { len: states.rows(), min: 3 });
    }
    let steps = step_vectors(states)?;
    let norms: Vec<f64> = steps.iter().map(|v| norm(v)).collect();
    Ok((0..steps.len() - 1)
        .map(|k| {
            let (a, b) = (norms[k], norms[k + 1]);
            (a > DEGENERATE_NORM && b > DEGENERATE_NORM).then(|| angle_deg(&steps[k], &steps[k + 1], a, b))
        })
        .collect())
}

pub fn sentence_curvature(t: &LayerTrajectory, policy: DegeneratePolicy) -> Result<SentenceCurvature> {
    sentence_curvature_of(&t.states, policy)
}

pub fn sentence_curvature_of(states: &Tensor2D, policy: DegeneratePolicy) -> Result<SentenceCurvature> {
    let angles = step_angles(states)?;
    let total = angles.len();
    let mut kept = Vec::with_capacity(total);
    for (k, a) in angles.into_iter().enumerate() {
        match (a, policy) {
            (Some(a), _) => kept.push(a),
            (None, DegeneratePolicy::Skip) => {}
            (None, DegeneratePolicy::Error) => {
                let steps = step_vectors(states)?;
                let idx = if norm(&steps[k]) <= DEGENERATE_NORM { k } else { k + 1 };
                return Err(Error::DegenerateStep { index: idx, norm: norm(&steps[idx]) });
            }
        }
    }
    if kept.is_empty() {
        return Err(Error::AllStepsDegenerate);
    }
    Ok(SentenceCurvature {
        degrees: stats::pairwise_sum(&kept) / kept.len() as f64,
        angles: kept.len(),
        skipped_angles: total - kept.len(),
    })
}

/// Per-layer curvature of one sentence and its change relative to a
/// reference layer.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureProfile {
    pub per_layer_curvature: Vec<f64>,
    pub per_layer_delta: Vec<f64>,
    pub reference_layer: usize,
    pub skipped_angles: usize,
}

impl CurvatureProfile {
    pub fn from_curvatures(per_layer_curvature: Vec<f64>, reference_layer: usize) -> Result<Self> {
        let reference = *per_layer_curvature
            .get(reference_layer)
            .ok_or(Error::LayerOutOfRange { layer: reference_layer, n_layers: per_layer_curvature.len() })?;
        let per_layer_delta = per_layer_curvature.iter().map(|c| c - reference).collect();
        Ok(Self { per_layer_curvature, per_layer_delta, reference_layer, skipped_angles: 0 })
    }

    pub fn layers(&self) -> usize {
        self.per_layer_curvature.len()
    }

    /// Most negative Δ-curvature and the layer where it occurs (first on ties).
    pub fn min_delta(&self) -> (usize, f64) {
        min_with_index(&self.per_layer_delta)
    }
}

pub(crate) fn min_with_index(xs: &[f64]) -> (usize, f64) {
    xs.iter().enumerate().fold((0, f64::INFINITY), |best, (i, &v)| if v < best.1 { (i, v) } else { best })
}

/// `reference_layer` indexes into `per_layer` (not the trajectories' labels).
pub fn curvature_profile(
    per_layer: &[LayerTrajectory],
    reference_layer: usize,
    policy: DegeneratePolicy,
) -> Result<CurvatureProfile> {
    let Some(first) = per_layer.first() else {
        return Err(Error::Empty("layer list"));
    };
    if let Some(bad) = per_layer.iter().find(|t| t.len() != first.len()) {
        return Err(Error::Shape(alloc::format!(
            "layer {} has {} states, layer {} has {}",
            bad.layer,
            bad.len(),
            first.layer,
            first.len()
        )));
    }
    let mut skipped = 0;
    let mut curv = Vec::with_capacity(per_layer.len());
    for t in per_layer {
        let c = sentence_curvature(t, policy)?;
        skipped += c.skipped_angles;
        curv.push(c.degrees);
    }
    let mut profile = CurvatureProfile::from_curvatures(curv, reference_layer)?;
    profile.skipped_angles = skipped;
    Ok(profile)
}

/// Per-layer mean and population standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub count: usize,
}

impl LayerStats {
    pub fn min_mean(&self) -> (usize, f64) {
        min_with_index(&self.mean)
    }
}

pub fn corpus_average_delta(profiles: &[CurvatureProfile]) -> Result<LayerStats> {
    let rows: Vec<&[f64]> = profiles.iter().map(|p| p.per_layer_delta.as_slice()).collect();
    layer_stats(&rows)
}

pub fn corpus_average_curvature(profiles: &[CurvatureProfile]) -> Result<LayerStats> {
    let rows: Vec<&[f64]> = profiles.iter().map(|p| p.per_layer_curvature.as_slice()).collect();
    layer_stats(&rows)
}

/// Column statistics of equally long rows.
pub fn layer_stats(rows: &[&[f64]]) -> Result<LayerStats> {
    let Some(first) = rows.first() else {
        return Err(Error::Empty("profile list"));
    };
    let layers = first.len();
    if rows.iter().any(|r| r.len() != layers) {
        return Err(Error::Shape("profiles differ in layer count".into()));
    }
    let mut mean = Vec::with_capacity(layers);
    let mut std = Vec::with_capacity(layers);
    let mut column = vec![0.0; rows.len()];
    for l in 0..layers {
        for (c, r) in column.iter_mut().zip(rows) {
            *c = r[l];
        }
        let (m, s) = stats::mean_std(&column)?;
        mean.push(m);
        std.push(s);
    }
    Ok(LayerStats { mean, std, count: rows.len() })
}

/// Indices of the `n` profiles with the most negative minimum Δ-curvature;
/// ties go to the lower index. `n` larger than the list selects everything.
pub fn top_drop_selection(profiles: &[CurvatureProfile], n: usize) -> Vec<usize> {
    let mut order: Vec<(usize, f64)> = profiles.iter().enumerate().map(|(i, p)| (i, p.min_delta().1)).collect();
    order.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    order.into_iter().take(n).map(|(i, _)| i).collect()
}

/// Sentence curvatures of `n` trajectories of i.i.d. standard-normal points
/// in `dim` dimensions. Each trajectory's length is drawn uniformly from
/// `lengths`.
pub fn random_trajectory_baseline(dim: usize, lengths: &[usize], n: usize, seed: u64) -> Result<Vec<f64>> {
    if dim < 2 {
        return Err(Error::Config(alloc::format!("baseline dimension {dim} < 2")));
    }
    if lengths.is_empty() {
        return Err(Error::Empty("length list"));
    }
    if let Some(&bad) = lengths.iter().find(|&&l| l < 3) {
        return Err(Error::TooShort { len: bad, min: 3 });
    }
    let mut rng = SeededRng::new(seed);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let len = lengths[rng.below(lengths.len())];
        let data = (0..len * dim).map(|_| rng.standard_normal() as f32).collect();
        let states = Tensor2D::new(len, dim, data)?;
        out.push(sentence_curvature_of(&states, DegeneratePolicy::Error)?.degrees);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WordReduce {
    #[default]
    Mean,
    Last,
}

impl WordReduce {
    pub fn name(self) -> &'static str {
        match self {
            WordReduce::Mean => "mean",
            WordReduce::Last => "last",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "mean" => Some(WordReduce::Mean),
            "last" => Some(WordReduce::Last),
            _ => None,
        }
    }
}

/// Collapses token states to one state per word.
pub fn word_reduce(t: &LayerTrajectory, spans: &[Range<usize>], mode: WordReduce) -> Result<LayerTrajectory> {
    let mut next = 0;
    for s in spans {
        if s.start != next || s.end <= s.start {
            return Err(Error::Shape(alloc::format!("word span {s:?} does not continue at {next}")));
        }
        next = s.end;
    }
    if next != t.len() {
        return Err(Error::Shape(alloc::format!("word spans cover {next} of {} states", t.len())));
    }
    let d = t.dim();
    let mut data = Vec::with_capacity(spans.len() * d);
    for s in spans {
        match mode {
            WordReduce::Last => data.extend_from_slice(t.states.row(s.end - 1)),
            WordReduce::Mean => {
                let mut acc = vec![0.0f64; d];
                for r in s.clone() {
                    for (a, &v) in acc.iter_mut().zip(t.states.row(r)) {
                        *a += v as f64;
                    }
                }
                let k = s.len() as f64;
                data.extend(acc.into_iter().map(|a| (a / k) as f32));
            }
        }
    }
    Ok(LayerTrajectory::new(t.layer, Tensor2D::new(spans.len(), d, data)?))
}

#[cfg(test)]
#[allow(clippy::single_range_in_vec_init)]
mod tests {
    use super::*;

    fn traj(points: &[&[f32]]) -> LayerTrajectory {
        LayerTrajectory::from_points(0, &points.iter().map(|p| p.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn steps() {
        let t = traj(&[&[0.0, 0.0], &[1.0, 0.0], &[1.0, 2.0]]);
        assert_eq!(step_vectors(&t.states).unwrap(), [vec![1.0, 0.0], vec![0.0, 2.0]]);
        let c = traj(&[&[1.0, 1.0], &[1.0, 1.0], &[1.0, 1.0]]);
        assert!(step_vectors(&c.states).unwrap().iter().all(|v| v.iter().all(|&x| x == 0.0)));
        assert!(matches!(step_vectors(&traj(&[&[1.0]]).states), Err(Error::TooShort { .. })));
    }

    #[test]
    fn angles() {
        assert_eq!(step_curvature(&[1.0, 0.0], &[2.0, 0.0]).unwrap(), 0.0);
        assert!((step_curvature(&[1.0, 0.0], &[0.0, 1.0]).unwrap() - 90.0).abs() < 1e-12);
        assert!((step_curvature(&[1.0, 0.0], &[-1.0, 1.0]).unwrap() - 135.0).abs() < 1e-12);
        assert!(matches!(step_curvature(&[0.0, 0.0], &[1.0, 0.0]), Err(Error::DegenerateStep { index: 0, .. })));
        assert!(matches!(step_curvature(&[1.0, 0.0], &[0.0, 1e-9]), Err(Error::DegenerateStep { index: 1, .. })));
    }

    #[test]
    fn sentence_cases() {
        let line = traj(&[&[0.0, 0.0], &[1.0, 0.0], &[2.0, 0.0], &[3.0, 0.0]]);
        assert_eq!(sentence_curvature(&line, DegeneratePolicy::Error).unwrap().degrees, 0.0);
        let square = traj(&[&[0.0, 0.0], &[1.0, 0.0], &[1.0, 1.0], &[0.0, 1.0]]);
        assert!((sentence_curvature(&square, DegeneratePolicy::Error).unwrap().degrees - 90.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_policies() {
        // Repeated middle state: steps 1 is zero.
        let t = traj(&[&[0.0, 0.0], &[1.0, 0.0], &[1.0, 0.0], &[1.0, 1.0], &[2.0, 1.0]]);
        assert!(matches!(
            sentence_curvature(&t, DegeneratePolicy::Error),
            Err(Error::DegenerateStep { index: 1, .. })
        ));
        let c = sentence_curvature(&t, DegeneratePolicy::Skip).unwrap();
        assert_eq!((c.angles, c.skipped_angles), (1, 2));
        assert!((c.degrees - 90.0).abs() < 1e-12);
        let flat = traj(&[&[1.0], &[1.0], &[1.0]]);
        assert_eq!(sentence_curvature(&flat, DegeneratePolicy::Skip), Err(Error::AllStepsDegenerate));
    }

    #[test]
    fn profile_cases() {
        let square = traj(&[&[0.0, 0.0], &[1.0, 0.0], &[1.0, 1.0], &[0.0, 1.0]]);
        let same = [square.clone(), square.clone(), square.clone()];
        let p = curvature_profile(&same, 0, DegeneratePolicy::Error).unwrap();
        assert_eq!(p.per_layer_delta, [0.0, 0.0, 0.0]);

        // Layer 0: 90° turns; layer 1: one 90° and one 0°; layer 2: straight.
        let bent = traj(&[&[0.0, 0.0], &[1.0, 0.0], &[1.0, 1.0], &[1.0, 2.0]]);
        let line = traj(&[&[0.0, 0.0], &[1.0, 0.0], &[2.0, 0.0], &[3.0, 0.0]]);
        let p = curvature_profile(&[square.clone(), bent, line], 0, DegeneratePolicy::Error).unwrap();
        assert!((p.per_layer_delta[1] + 45.0).abs() < 1e-12);
        assert!((p.per_layer_delta[2] + 90.0).abs() < 1e-12);
        assert_eq!(p.min_delta().0, 2);
        let p1 = curvature_profile(&same, 2, DegeneratePolicy::Error).unwrap();
        assert_eq!(p1.per_layer_delta[2], 0.0);

        let short = traj(&[&[0.0, 0.0], &[1.0, 0.0], &[1.0, 1.0]]);
        assert!(curvature_profile(&[square, short], 0, DegeneratePolicy::Error).is_err());
    }

    fn profile(deltas: &[f64]) -> CurvatureProfile {
        CurvatureProfile {
            per_layer_curvature: deltas.iter().map(|d| 120.0 + d).collect(),
            per_layer_delta: deltas.to_vec(),
            reference_layer: 0,
            skipped_angles: 0,
        }
    }

    #[test]
    fn corpus_average() {
        let one = layer_stats(&[&[0.0, -3.0, 2.0]]).unwrap();
        assert_eq!(one.mean, [0.0, -3.0, 2.0]);
        assert_eq!(one.std, [0.0; 3]);
        let s = corpus_average_delta(&[profile(&[0.0, 4.0, -2.0]), profile(&[0.0, -4.0, 2.0])]).unwrap();
        assert_eq!(s.mean, [0.0; 3]);
        assert_eq!(s.std, [0.0, 4.0, 2.0]);
        assert!(corpus_average_delta(&[]).is_err());
    }

    #[test]
    fn top_drop() {
        let ps = [
            profile(&[0.0, -1.0]),
            profile(&[0.0, -5.0]),
            profile(&[0.0, -3.0]),
            profile(&[0.0, -5.0]),
            profile(&[0.0, 2.0]),
        ];
        assert_eq!(top_drop_selection(&ps, 3), [1, 3, 2]);
        assert_eq!(top_drop_selection(&ps, 0), Vec::<usize>::new());
        let mut all = top_drop_selection(&ps, 5);
        all.sort();
        assert_eq!(all, [0, 1, 2, 3, 4]);
    }

    #[test]
    fn baseline_deterministic() {
        let a = random_trajectory_baseline(16, &[6, 7, 8], 20, 3).unwrap();
        let b = random_trajectory_baseline(16, &[6, 7, 8], 20, 3).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, random_trajectory_baseline(16, &[6, 7, 8], 20, 4).unwrap());
        assert!(random_trajectory_baseline(1, &[6], 1, 0).is_err());
    }

    #[test]
    fn word_reduction() {
        let t = traj(&[&[1.0, 0.0], &[3.0, 2.0], &[5.0, 5.0], &[7.0, 1.0]]);
        let singles = [0..1, 1..2, 2..3, 3..4];
        assert_eq!(word_reduce(&t, &singles, WordReduce::Mean).unwrap(), t);
        assert_eq!(word_reduce(&t, &singles, WordReduce::Last).unwrap(), t);
        let mixed = [0..2, 2..3, 3..4];
        let last = word_reduce(&t, &mixed, WordReduce::Last).unwrap();
        assert_eq!(last.states.to_rows(), [vec![3.0, 2.0], vec![5.0, 5.0], vec![7.0, 1.0]]);
        let mean = word_reduce(&t, &mixed, WordReduce::Mean).unwrap();
        assert_eq!(mean.states.row(0), &[2.0, 1.0]);
        let dup = traj(&[&[2.0, 2.0], &[2.0, 2.0]]);
        assert_eq!(word_reduce(&dup, &[0..2], WordReduce::Mean).unwrap().states.row(0), &[2.0, 2.0]);
        assert!(word_reduce(&t, &[0..2, 3..4], WordReduce::Mean).is_err());
        assert!(word_reduce(&t, &[0..2], WordReduce::Mean).is_err());
    }
}
