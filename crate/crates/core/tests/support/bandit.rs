//! The two-armed bandit used to check the score-function estimators.

use numgame::kernel::{softmax, Graph, Tensor};
use numgame::training::{speaker_surrogate, Estimator};
use rand::Rng;

/// Gradient of the surrogate w.r.t. the two bandit logits for one sampled
/// action.
pub fn bandit_grad(estimator: Estimator, theta: [f64; 2], action: usize, losses: [f64; 2]) -> [f64; 2] {
    let greedy = if theta[0] >= theta[1] { 0 } else { 1 };
    let mut g = Graph::new();
    let l = g.param(Tensor::matrix(1, 2, theta.to_vec()).unwrap()).unwrap();
    let nll = g.cross_entropy(l, &[Some(action)]).unwrap();
    let greedy_losses = [losses[greedy]];
    let s = speaker_surrogate(
        &mut g,
        estimator,
        nll,
        &[losses[action]],
        (estimator == Estimator::Scst).then_some(&greedy_losses[..]),
    )
    .unwrap();
    let grads = g.backward(s).unwrap();
    let d = grads.get(l).unwrap().data();
    [d[0], d[1]]
}

pub fn sample_action<R: Rng>(theta: [f64; 2], rng: &mut R) -> usize {
    let p0 = softmax(&theta)[0];
    usize::from(rng.gen::<f64>() >= p0)
}

/// d/dθ of E[loss] = Σ_a p_a loss_a ∇log p_a, with ∇_j log p_a = 1[a=j] − p_j.
pub fn exact_gradient(theta: [f64; 2], losses: [f64; 2]) -> [f64; 2] {
    let p = softmax(&theta);
    let mut exact = [0.0; 2];
    for a in 0..2 {
        for (j, e) in exact.iter_mut().enumerate() {
            *e += p[a] * losses[a] * (f64::from(u8::from(a == j)) - p[j]);
        }
    }
    exact
}

/// Relative error of the Monte Carlo mean REINFORCE gradient over `n` draws.
pub fn reinforce_error<R: Rng>(theta: [f64; 2], losses: [f64; 2], n: usize, rng: &mut R) -> f64 {
    let exact = exact_gradient(theta, losses);
    let mut mean = [0.0; 2];
    for _ in 0..n {
        let a = sample_action(theta, rng);
        let d = bandit_grad(Estimator::Reinforce, theta, a, losses);
        mean[0] += d[0] / n as f64;
        mean[1] += d[1] / n as f64;
    }
    ((mean[0] - exact[0]).powi(2) + (mean[1] - exact[1]).powi(2)).sqrt()
        / (exact[0].powi(2) + exact[1].powi(2)).sqrt()
}

/// Variance across 100 replicates of a 100-draw mean of the first gradient
/// coordinate.
pub fn estimator_variance<R: Rng>(est: Estimator, theta: [f64; 2], losses: [f64; 2], rng: &mut R) -> f64 {
    let reps: Vec<f64> = (0..100)
        .map(|_| {
            let mut s = 0.0;
            for _ in 0..100 {
                s += bandit_grad(est, theta, sample_action(theta, rng), losses)[0];
            }
            s / 100.0
        })
        .collect();
    let m = reps.iter().sum::<f64>() / reps.len() as f64;
    reps.iter().map(|r| (r - m).powi(2)).sum::<f64>() / (reps.len() - 1) as f64
}

/// Total variation between Gumbel-max sample frequencies and the softmax.
pub fn gumbel_tv<R: Rng>(logits: &[f64], n: usize, rng: &mut R) -> f64 {
    let p = softmax(logits);
    let mut counts = vec![0usize; logits.len()];
    for _ in 0..n {
        counts[numgame::agents::gumbel_softmax_sample(logits, 1.0, rng).0] += 1;
    }
    counts
        .iter()
        .zip(&p)
        .map(|(&c, &q)| (c as f64 / n as f64 - q).abs())
        .sum::<f64>()
        / 2.0
}
