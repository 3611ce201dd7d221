use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{softmax, ClassifierError, Facet, FacetModel, FeatureSpec, FeatureVector, Result, WorkloadState};

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    /// L2 penalty on non-bias weights.
    pub l2: f64,
    /// Stop once the gradient norm falls to this value.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { l2: 1e-2, tolerance: 1e-6, max_iterations: 100_000, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub iterations: usize,
    pub loss: f64,
    pub grad_norm: f64,
    pub training_accuracy: f64,
}

/// Mean cross-entropy plus `l2/2 * |W|^2` (biases unpenalised), with its
/// gradient, for weights laid out as three rows of `dim + 1`.
pub fn loss_and_gradient(weights: &[f64], xs: &[FeatureVector], labels: &[WorkloadState], l2: f64) -> (f64, Vec<f64>) {
    let dim = xs.first().map_or(0, FeatureVector::dim);
    let stride = dim + 1;
    let n = xs.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; weights.len()];
    for (x, y) in xs.iter().zip(labels) {
        let scores = [0, 1, 2].map(|k| {
            let row = &weights[k * stride..(k + 1) * stride];
            row[..dim].iter().zip(&x.values).map(|(w, v)| w * v).sum::<f64>() + row[dim]
        });
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
        loss += (lse - scores[y.index()]) / n;
        let p = softmax(scores);
        for k in 0..3 {
            let r = (p[k] - if k == y.index() { 1.0 } else { 0.0 }) / n;
            let g = &mut grad[k * stride..(k + 1) * stride];
            for (gj, xj) in g[..dim].iter_mut().zip(&x.values) {
                *gj += r * xj;
            }
            g[dim] += r;
        }
    }
    for k in 0..3 {
        for j in 0..dim {
            let w = weights[k * stride + j];
            loss += 0.5 * l2 * w * w;
            grad[k * stride + j] += l2 * w;
        }
    }
    (loss, grad)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Nesterov-accelerated gradient descent with backtracking line search and
/// function-value restart.
pub fn fit_multinomial(
    facet: Facet,
    spec: FeatureSpec,
    xs: &[FeatureVector],
    labels: &[WorkloadState],
    opts: &FitOptions,
) -> Result<(FacetModel, FitReport)> {
    for k in WorkloadState::ALL {
        if !labels.contains(&k) {
            return Err(ClassifierError::MissingClass(k));
        }
    }
    let dim = spec.dim();
    if let Some(bad) = xs.iter().find(|x| x.dim() != dim) {
        return Err(ClassifierError::DimensionMismatch { expected: dim, got: bad.dim() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut w: Vec<f64> = (0..3 * (dim + 1)).map(|_| rng.random_range(-0.01..0.01)).collect();
    let (mut fw, mut gw) = loss_and_gradient(&w, xs, labels, opts.l2);
    let mut y = w.clone();
    let mut t = 1.0f64;
    let mut lip = 1.0f64;
    let mut iterations = 0;
    while norm(&gw) > opts.tolerance {
        if iterations >= opts.max_iterations {
            return Err(ClassifierError::NonConvergence { iterations, grad_norm: norm(&gw) });
        }
        iterations += 1;
        let (fy, gy) = loss_and_gradient(&y, xs, labels, opts.l2);
        let gy2 = gy.iter().map(|g| g * g).sum::<f64>();
        let (w_next, f_next, g_next) = loop {
            let cand: Vec<f64> = y.iter().zip(&gy).map(|(a, g)| a - g / lip).collect();
            let (fc, gc) = loss_and_gradient(&cand, xs, labels, opts.l2);
            if fc <= fy - 0.5 * gy2 / lip + 1e-15 * fy.abs() || lip > 1e12 {
                break (cand, fc, gc);
            }
            lip *= 2.0;
        };
        if f_next > fw {
            // momentum overshot: restart from the current iterate
            t = 1.0;
            y = w.clone();
            continue;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let beta = (t - 1.0) / t_next;
        y = w_next.iter().zip(&w).map(|(a, b)| a + beta * (a - b)).collect();
        w = w_next;
        fw = f_next;
        gw = g_next;
        t = t_next;
        lip *= 0.9;
    }
    let model = FacetModel::new(facet, spec, w)?;
    let correct = xs
        .iter()
        .zip(labels)
        .filter(|(x, y)| super::classify_facet(x, &model).map(|e| e.state == **y).unwrap_or(false))
        .count();
    let report = FitReport { iterations, loss: fw, grad_norm: norm(&gw), training_accuracy: correct as f64 / xs.len() as f64 };
    Ok((model, report))
}
