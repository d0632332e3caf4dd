//! Agreement metrics between predicted and true deletion effects.

use trajinf::{Error, Result};

/// Summary of how well one score tracks one ground-truth target.
/// Correlations are `None` when either side has zero variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalMetrics {
    pub pearson: Option<f64>,
    pub spearman: Option<f64>,
    pub mae: f64,
    pub topk_overlap: f64,
    pub time_s: Option<f64>,
    pub speedup: Option<f64>,
}

pub const TOP_K: usize = 5;

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample Pearson correlation; `None` if either argument is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let (ma, mb) = (mean(a), mean(b));
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return None;
    }
    Some((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Ranks with ties sharing the average of their positions (1-based).
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let n = v.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| v[i].partial_cmp(&v[j]).unwrap().then(i.cmp(&j)));
    let mut ranks = vec![0.0; n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && v[order[end]] == v[order[start]] {
            end += 1;
        }
        // Positions start..end hold one tied group.
        let avg = (start + 1 + end) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = avg;
        }
        start = end;
    }
    ranks
}

/// Spearman correlation via Pearson on average ranks.
pub fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    pearson(&average_ranks(a), &average_ranks(b))
}

/// Indices of the k largest values; ties broken toward the smaller index.
fn top_k_set(v: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&i, &j| v[j].partial_cmp(&v[i]).unwrap().then(i.cmp(&j)));
    order.truncate(k);
    order
}

/// |top-k(pred) intersect top-k(truth)| / k.
pub fn topk_overlap(pred: &[f64], truth: &[f64], k: usize) -> f64 {
    let k = k.min(pred.len());
    if k == 0 {
        return 0.0;
    }
    let p = top_k_set(pred, k);
    let t = top_k_set(truth, k);
    let hits = p.iter().filter(|i| t.contains(i)).count();
    hits as f64 / k as f64
}

/// Compare a prediction vector against ground truth; entries must already
/// be paired (missing values filtered by the caller).
pub fn compute_metrics(pred: &[f64], truth: &[f64], k: usize) -> Result<EvalMetrics> {
    if pred.len() != truth.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} predictions vs {} truths",
            pred.len(),
            truth.len()
        )));
    }
    if pred.len() < 2 {
        return Err(Error::DegenerateInput(format!(
            "need at least 2 paired values, got {}",
            pred.len()
        )));
    }
    if pred.iter().chain(truth).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("metrics input".into()));
    }
    let mae = pred
        .iter()
        .zip(truth)
        .map(|(p, t)| (p - t).abs())
        .sum::<f64>()
        / pred.len() as f64;
    Ok(EvalMetrics {
        pearson: pearson(pred, truth),
        spearman: spearman(pred, truth),
        mae,
        topk_overlap: topk_overlap(pred, truth, k),
        time_s: None,
        speedup: None,
    })
}
