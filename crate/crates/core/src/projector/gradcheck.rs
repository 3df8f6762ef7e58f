use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{backward, forward, init, Activation, ProjectorConfig, ProjectorError, ProjectorParams, TokenMatrix};

const EPS: f64 = 1e-5;
/// Denominator floor so near-zero gradients are compared absolutely.
const FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub config: ProjectorConfig,
    pub tokens: usize,
    pub checked: usize,
    pub max_rel_error: f64,
}

/// A small random configuration for gradient checking.
pub fn random_config(seed: u64) -> ProjectorConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let activation = [Activation::Gelu, Activation::Relu, Activation::None][rng.random_range(0..3)];
    ProjectorConfig {
        d_in: rng.random_range(1..=6),
        d_hidden: rng.random_range(1..=6),
        d_out: rng.random_range(1..=6),
        m_tokens: rng.random_range(1..=5),
        activation,
        seed,
    }
}

fn relative(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(FLOOR)
}

fn objective(params: &ProjectorParams, h: &TokenMatrix, g: &TokenMatrix) -> f64 {
    let y = forward(params, h).expect("shapes checked");
    y.data().iter().zip(g.data()).map(|(a, b)| a * b).sum()
}

/// Compares analytic gradients of `⟨forward(p, H), G⟩` with central finite
/// differences for every parameter and input entry.
pub fn grad_check(config: &ProjectorConfig, tokens: usize) -> Result<GradCheckReport, ProjectorError> {
    let mut params = init(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed);
    // non-zero biases so their gradients are exercised away from init
    for b in [&mut params.b1, &mut params.b2, &mut params.b3] {
        b.iter_mut().for_each(|v| *v = rng.random_range(-0.5..0.5));
    }
    let h = TokenMatrix::from_fn(tokens, config.d_in, |_, _| rng.random_range(-1.0..1.0));
    let g = TokenMatrix::from_fn(config.m_tokens, config.d_out, |_, _| rng.random_range(-1.0..1.0));
    let (grads, dh) = backward(&params, &h, &g)?;
    let analytic = grads.flat();

    let mut max_rel: f64 = 0.0;
    let mut checked = 0;
    let mut index = 0;
    for b in 0..6 {
        let len = params.blocks_mut()[b].len();
        for i in 0..len {
            let orig = params.blocks_mut()[b][i];
            params.blocks_mut()[b][i] = orig + EPS;
            let plus = objective(&params, &h, &g);
            params.blocks_mut()[b][i] = orig - EPS;
            let minus = objective(&params, &h, &g);
            params.blocks_mut()[b][i] = orig;
            max_rel = max_rel.max(relative(analytic[index], (plus - minus) / (2.0 * EPS)));
            index += 1;
            checked += 1;
        }
    }
    let mut hp = h.clone();
    for i in 0..h.data().len() {
        let orig = hp.data()[i];
        hp.data_mut()[i] = orig + EPS;
        let plus = objective(&params, &hp, &g);
        hp.data_mut()[i] = orig - EPS;
        let minus = objective(&params, &hp, &g);
        hp.data_mut()[i] = orig;
        max_rel = max_rel.max(relative(dh.data()[i], (plus - minus) / (2.0 * EPS)));
        checked += 1;
    }
    Ok(GradCheckReport { config: *config, tokens, checked, max_rel_error: max_rel })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradients_match_finite_differences() {
        for seed in 0..20 {
            let cfg = random_config(seed);
            let tokens = 1 + (seed as usize % 6);
            let r = grad_check(&cfg, tokens).unwrap();
            assert!(r.max_rel_error < 1e-4, "{r:?}");
        }
    }

    #[test]
    fn linear_w3_gradient_is_activation_contraction() {
        // with no activation and m == n, dW3 = A2ᵀ·G where A2 = (H·W1 + b1)·W2 + b2
        let cfg = ProjectorConfig { d_in: 3, d_hidden: 4, d_out: 2, m_tokens: 5, activation: Activation::None, seed: 1 };
        let p = init(&cfg).unwrap();
        let h = TokenMatrix::from_fn(5, 3, |r, c| (r as f64 - c as f64) * 0.3);
        let g = TokenMatrix::from_fn(5, 2, |r, c| (r + c) as f64 * 0.1);
        let mut a1 = h.matmul(&p.w1);
        a1.add_row_vector(&p.b1);
        let mut a2 = a1.matmul(&p.w2);
        a2.add_row_vector(&p.b2);
        let want = a2.t_matmul(&g);
        let (grads, _) = backward(&p, &h, &g).unwrap();
        assert!(grads.w3.max_abs_diff(&want) < 1e-12);
    }
}
