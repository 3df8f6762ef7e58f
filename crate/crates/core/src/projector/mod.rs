//! Alignment projector: stage-one hidden states to a fixed number of
//! context tokens in the generator's text-embedding space.
//!
//! Each hidden-state row goes through three linear layers (with a
//! configurable activation between them), then the sequence is resampled
//! along the token axis to exactly `m_tokens` rows by linear interpolation.
//! Matrices use the row-vector convention: `h = x·W1 + b1`.

mod checkpoint;
mod embed;
mod gradcheck;
mod matrix;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_FORMAT};
pub use embed::HashEmbedder;
pub use gradcheck::{grad_check, random_config, GradCheckReport};
pub use matrix::TokenMatrix;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProjectorError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("width mismatch: {left} vs {right}")]
    WidthMismatch { left: usize, right: usize },
    #[error("invalid projector config: {0}")]
    InvalidConfig(String),
    #[error("non-finite value")]
    NonFinite,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

impl ProjectorError {
    pub fn code(&self) -> &'static str {
        match self {
            ProjectorError::ShapeMismatch(_) => "ShapeMismatch",
            ProjectorError::WidthMismatch { .. } => "WidthMismatch",
            ProjectorError::InvalidConfig(_) => "InvalidConfig",
            ProjectorError::NonFinite => "NonFinite",
            ProjectorError::Checkpoint(_) => "Checkpoint",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Gelu,
    Relu,
    None,
}

const INV_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Gelu => 0.5 * x * (1.0 + libm::erf(x * INV_SQRT_2)),
            Activation::Relu => x.max(0.0),
            Activation::None => x,
        }
    }

    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Gelu => {
                0.5 * (1.0 + libm::erf(x * INV_SQRT_2)) + x * INV_SQRT_2PI * (-0.5 * x * x).exp()
            }
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::None => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProjectorConfig {
    pub d_in: usize,
    pub d_hidden: usize,
    pub d_out: usize,
    pub m_tokens: usize,
    pub activation: Activation,
    pub seed: u64,
}

impl ProjectorConfig {
    /// Defaults: 64 output tokens, hidden width `max(d_in, d_out)`, GELU.
    pub fn new(d_in: usize, d_out: usize) -> Self {
        Self { d_in, d_hidden: d_in.max(d_out), d_out, m_tokens: 64, activation: Activation::Gelu, seed: 0 }
    }

    pub fn validate(&self) -> Result<(), ProjectorError> {
        for (name, v) in [
            ("d_in", self.d_in),
            ("d_hidden", self.d_hidden),
            ("d_out", self.d_out),
            ("m_tokens", self.m_tokens),
        ] {
            if v == 0 {
                return Err(ProjectorError::InvalidConfig(format!("{name} must be at least 1")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectorParams {
    pub config: ProjectorConfig,
    pub w1: TokenMatrix,
    pub b1: Vec<f64>,
    pub w2: TokenMatrix,
    pub b2: Vec<f64>,
    pub w3: TokenMatrix,
    pub b3: Vec<f64>,
}

/// Gradients with the same layout as [`ProjectorParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    pub w1: TokenMatrix,
    pub b1: Vec<f64>,
    pub w2: TokenMatrix,
    pub b2: Vec<f64>,
    pub w3: TokenMatrix,
    pub b3: Vec<f64>,
}

impl ParamGrads {
    fn zeros(c: &ProjectorConfig) -> Self {
        Self {
            w1: TokenMatrix::zeros(c.d_in, c.d_hidden),
            b1: vec![0.0; c.d_hidden],
            w2: TokenMatrix::zeros(c.d_hidden, c.d_hidden),
            b2: vec![0.0; c.d_hidden],
            w3: TokenMatrix::zeros(c.d_hidden, c.d_out),
            b3: vec![0.0; c.d_out],
        }
    }

    fn accumulate(&mut self, other: &ParamGrads, scale: f64) {
        let add = |a: &mut [f64], b: &[f64]| a.iter_mut().zip(b).for_each(|(x, y)| *x += scale * y);
        add(self.w1.data_mut(), other.w1.data());
        add(&mut self.b1, &other.b1);
        add(self.w2.data_mut(), other.w2.data());
        add(&mut self.b2, &other.b2);
        add(self.w3.data_mut(), other.w3.data());
        add(&mut self.b3, &other.b3);
    }

    /// All gradient entries in parameter order (w1, b1, w2, b2, w3, b3).
    pub fn flat(&self) -> Vec<f64> {
        [self.w1.data(), &self.b1, self.w2.data(), &self.b2, self.w3.data(), &self.b3].concat()
    }
}

impl ProjectorParams {
    pub fn validate(&self) -> Result<(), ProjectorError> {
        let c = &self.config;
        c.validate()?;
        let shapes = [
            ("w1", self.w1.shape(), (c.d_in, c.d_hidden)),
            ("w2", self.w2.shape(), (c.d_hidden, c.d_hidden)),
            ("w3", self.w3.shape(), (c.d_hidden, c.d_out)),
            ("b1", (1, self.b1.len()), (1, c.d_hidden)),
            ("b2", (1, self.b2.len()), (1, c.d_hidden)),
            ("b3", (1, self.b3.len()), (1, c.d_out)),
        ];
        for (name, got, want) in shapes {
            if got != want {
                return Err(ProjectorError::ShapeMismatch(format!("{name} is {got:?}, expected {want:?}")));
            }
        }
        for m in [&self.w1, &self.w2, &self.w3] {
            m.validate()?;
        }
        if self.b1.iter().chain(&self.b2).chain(&self.b3).any(|v| !v.is_finite()) {
            return Err(ProjectorError::NonFinite);
        }
        Ok(())
    }

    /// All parameters in order (w1, b1, w2, b2, w3, b3).
    pub fn flat(&self) -> Vec<f64> {
        [self.w1.data(), &self.b1, self.w2.data(), &self.b2, self.w3.data(), &self.b3].concat()
    }

    /// Mutable views of every parameter block, in [`flat`](Self::flat) order.
    pub fn blocks_mut(&mut self) -> [&mut [f64]; 6] {
        [
            self.w1.data_mut(),
            &mut self.b1,
            self.w2.data_mut(),
            &mut self.b2,
            self.w3.data_mut(),
            &mut self.b3,
        ]
    }

    pub fn parameter_count(&self) -> usize {
        self.flat().len()
    }

    /// Returns `self - lr * grads`.
    pub fn step(&self, grads: &ParamGrads, lr: f64) -> ProjectorParams {
        let mut next = self.clone();
        let g = [grads.w1.data(), &grads.b1, grads.w2.data(), &grads.b2, grads.w3.data(), &grads.b3];
        for (block, g) in next.blocks_mut().into_iter().zip(g) {
            block.iter_mut().zip(g).for_each(|(p, d)| *p -= lr * d);
        }
        next
    }
}

/// Uniform weights in `±sqrt(3 / fan_in)` (unit variance scaled by
/// `1/sqrt(fan_in)`), zero biases. Deterministic per `config.seed`.
pub fn init(config: &ProjectorConfig) -> Result<ProjectorParams, ProjectorError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut layer = |fan_in: usize, fan_out: usize| {
        let bound = (3.0 / fan_in as f64).sqrt();
        TokenMatrix::from_fn(fan_in, fan_out, |_, _| rng.random_range(-bound..=bound))
    };
    let w1 = layer(config.d_in, config.d_hidden);
    let w2 = layer(config.d_hidden, config.d_hidden);
    let w3 = layer(config.d_hidden, config.d_out);
    Ok(ProjectorParams {
        config: *config,
        w1,
        b1: vec![0.0; config.d_hidden],
        w2,
        b2: vec![0.0; config.d_hidden],
        w3,
        b3: vec![0.0; config.d_out],
    })
}

/// Interpolation weights for resampling `n` rows to `m`: output row `i` reads
/// position `i·(n−1)/(m−1)` of the input (the centre when `m == 1`), so first
/// and last rows are kept and `n == m` is the identity.
pub fn resample_weights(n: usize, m: usize) -> Vec<[(usize, f64); 2]> {
    (0..m)
        .map(|i| {
            let pos = if m == 1 {
                (n - 1) as f64 / 2.0
            } else {
                i as f64 * (n - 1) as f64 / (m - 1) as f64
            };
            let lo = (pos.floor() as usize).min(n - 1);
            let hi = (lo + 1).min(n - 1);
            let frac = pos - lo as f64;
            [(lo, 1.0 - frac), (hi, frac)]
        })
        .collect()
}

fn resample(z: &TokenMatrix, m: usize) -> TokenMatrix {
    let weights = resample_weights(z.rows(), m);
    TokenMatrix::from_fn(m, z.cols(), |r, c| weights[r].iter().map(|(i, w)| w * z.get(*i, c)).sum())
}

/// Adjoint of [`resample`]: scatters `m` row gradients back onto `n` rows.
fn resample_adjoint(dy: &TokenMatrix, n: usize) -> TokenMatrix {
    let weights = resample_weights(n, dy.rows());
    let mut dz = TokenMatrix::zeros(n, dy.cols());
    for (r, pair) in weights.iter().enumerate() {
        for (i, w) in pair {
            if *w == 0.0 {
                continue;
            }
            for c in 0..dy.cols() {
                dz.data_mut()[i * dy.cols() + c] += w * dy.get(r, c);
            }
        }
    }
    dz
}

struct Trace {
    u1: TokenMatrix,
    a1: TokenMatrix,
    u2: TokenMatrix,
    a2: TokenMatrix,
    y: TokenMatrix,
}

fn check_input(params: &ProjectorParams, h: &TokenMatrix) -> Result<(), ProjectorError> {
    h.validate()?;
    if h.rows() == 0 {
        return Err(ProjectorError::ShapeMismatch("input has no tokens".into()));
    }
    if h.cols() != params.config.d_in {
        return Err(ProjectorError::ShapeMismatch(format!(
            "input width {} but d_in is {}",
            h.cols(),
            params.config.d_in
        )));
    }
    Ok(())
}

fn trace(params: &ProjectorParams, h: &TokenMatrix) -> Trace {
    let act = params.config.activation;
    let mut u1 = h.matmul(&params.w1);
    u1.add_row_vector(&params.b1);
    let a1 = u1.map(|v| act.apply(v));
    let mut u2 = a1.matmul(&params.w2);
    u2.add_row_vector(&params.b2);
    let a2 = u2.map(|v| act.apply(v));
    let mut z = a2.matmul(&params.w3);
    z.add_row_vector(&params.b3);
    let y = resample(&z, params.config.m_tokens);
    Trace { u1, a1, u2, a2, y }
}

/// Projects an `n × d_in` hidden-state sequence to `m_tokens × d_out`.
pub fn forward(params: &ProjectorParams, h: &TokenMatrix) -> Result<TokenMatrix, ProjectorError> {
    check_input(params, h)?;
    Ok(trace(params, h).y)
}

/// Text-embedding rows first, projected rows after.
pub fn concat_context(projected: &TokenMatrix, text_emb: &TokenMatrix) -> Result<TokenMatrix, ProjectorError> {
    text_emb.vstack(projected)
}

/// Exact gradients of `⟨forward(params, h), upstream⟩` with respect to the
/// parameters and the input.
pub fn backward(
    params: &ProjectorParams,
    h: &TokenMatrix,
    upstream: &TokenMatrix,
) -> Result<(ParamGrads, TokenMatrix), ProjectorError> {
    check_input(params, h)?;
    let c = &params.config;
    if upstream.shape() != (c.m_tokens, c.d_out) {
        return Err(ProjectorError::ShapeMismatch(format!(
            "upstream gradient is {:?}, expected {:?}",
            upstream.shape(),
            (c.m_tokens, c.d_out)
        )));
    }
    let t = trace(params, h);
    let act = c.activation;
    let dz = resample_adjoint(upstream, h.rows());
    let w3 = t.a2.t_matmul(&dz);
    let b3 = dz.column_sums();
    let du2 = dz.matmul_t(&params.w3).zip_map(&t.u2, |g, u| g * act.derivative(u));
    let w2 = t.a1.t_matmul(&du2);
    let b2 = du2.column_sums();
    let du1 = du2.matmul_t(&params.w2).zip_map(&t.u1, |g, u| g * act.derivative(u));
    let w1 = h.t_matmul(&du1);
    let b1 = du1.column_sums();
    let dh = du1.matmul_t(&params.w1);
    Ok((ParamGrads { w1, b1, w2, b2, w3, b3 }, dh))
}

/// Mean squared error over all entries.
pub fn mse(prediction: &TokenMatrix, target: &TokenMatrix) -> f64 {
    let n = prediction.data().len() as f64;
    prediction.data().iter().zip(target.data()).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / n
}

/// How squared errors are reduced into the objective that gradient descent
/// follows. The reported loss is always the per-entry mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reduction {
    /// Sum over every entry of every sample.
    #[default]
    Sum,
    /// Mean over every entry of every sample.
    Mean,
}

/// One full-batch gradient-descent step with [`Reduction::Sum`].
/// Returns the updated parameters and the mean squared error before the step.
pub fn train_step(
    params: &ProjectorParams,
    batch: &[(TokenMatrix, TokenMatrix)],
    lr: f64,
) -> Result<(ProjectorParams, f64), ProjectorError> {
    train_step_with(params, batch, lr, Reduction::Sum)
}

pub fn train_step_with(
    params: &ProjectorParams,
    batch: &[(TokenMatrix, TokenMatrix)],
    lr: f64,
    reduction: Reduction,
) -> Result<(ProjectorParams, f64), ProjectorError> {
    if batch.is_empty() {
        return Err(ProjectorError::ShapeMismatch("empty batch".into()));
    }
    let c = &params.config;
    let entries = (batch.len() * c.m_tokens * c.d_out) as f64;
    let scale = match reduction {
        Reduction::Sum => 1.0,
        Reduction::Mean => 1.0 / entries,
    };
    let mut grads = ParamGrads::zeros(c);
    let mut sse = 0.0;
    for (h, target) in batch {
        if target.shape() != (c.m_tokens, c.d_out) {
            return Err(ProjectorError::ShapeMismatch(format!(
                "target is {:?}, expected {:?}",
                target.shape(),
                (c.m_tokens, c.d_out)
            )));
        }
        let y = forward(params, h)?;
        sse += y.data().iter().zip(target.data()).map(|(p, t)| (p - t).powi(2)).sum::<f64>();
        let dy = y.zip_map(target, |p, t| 2.0 * (p - t));
        let (g, _) = backward(params, h, &dy)?;
        grads.accumulate(&g, scale);
    }
    Ok((params.step(&grads, lr), sse / entries))
}

/// Seeded regression task: a student projector (seed 1) fits the outputs
/// of a teacher (seed 99) on 64 inputs of 4 tokens each, d_in = d_out = 8,
/// d_hidden = 16, four output tokens, GELU.
pub fn toy_problem() -> (ProjectorParams, Vec<(TokenMatrix, TokenMatrix)>) {
    let cfg = ProjectorConfig { d_in: 8, d_hidden: 16, d_out: 8, m_tokens: 4, activation: Activation::Gelu, seed: 1 };
    let teacher = init(&ProjectorConfig { seed: 99, ..cfg }).expect("valid config");
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let batch = (0..64)
        .map(|_| {
            let h = TokenMatrix::from_fn(4, cfg.d_in, |_, _| rng.random_range(-1.0..1.0));
            let t = forward(&teacher, &h).expect("shapes match");
            (h, t)
        })
        .collect();
    (init(&cfg).expect("valid config"), batch)
}

/// Runs `steps` steps of [`train_step_with`] and returns the loss curve,
/// `steps + 1` values including the loss after the final step.
pub fn train_loop(
    mut params: ProjectorParams,
    batch: &[(TokenMatrix, TokenMatrix)],
    lr: f64,
    steps: usize,
    reduction: Reduction,
) -> Result<(ProjectorParams, Vec<f64>), ProjectorError> {
    let mut curve = Vec::with_capacity(steps + 1);
    for _ in 0..steps {
        let (next, loss) = train_step_with(&params, batch, lr, reduction)?;
        curve.push(loss);
        params = next;
    }
    let last = batch.iter().map(|(h, t)| forward(&params, h).map(|y| mse(&y, t))).sum::<Result<f64, _>>()?;
    curve.push(last / batch.len() as f64);
    Ok((params, curve))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random(rows: usize, cols: usize, seed: u64) -> TokenMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        TokenMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let cfg = ProjectorConfig { seed: 9, ..ProjectorConfig::new(16, 12) };
        let a = init(&cfg).unwrap();
        assert_eq!(a, init(&cfg).unwrap());
        assert!(a.b1.iter().chain(&a.b2).chain(&a.b3).all(|b| *b == 0.0));
        let bound = (3.0f64 / 16.0).sqrt();
        assert!(a.w1.data().iter().all(|w| w.abs() <= bound));
        assert_ne!(a, init(&ProjectorConfig { seed: 10, ..cfg }).unwrap());
    }

    #[test]
    fn output_shape_is_fixed() {
        let cfg = ProjectorConfig { m_tokens: 4, ..ProjectorConfig::new(16, 12) };
        let p = init(&cfg).unwrap();
        for n in [1, 3, 7, 64] {
            assert_eq!(forward(&p, &random(n, 16, n as u64)).unwrap().shape(), (4, 12));
        }
        assert_eq!(forward(&p, &random(3, 15, 0)).unwrap_err().code(), "ShapeMismatch");
    }

    #[test]
    fn zero_map_and_identity() {
        let cfg = ProjectorConfig { m_tokens: 5, activation: Activation::None, ..ProjectorConfig::new(6, 6) };
        let mut p = init(&cfg).unwrap();
        for block in p.blocks_mut() {
            block.fill(0.0);
        }
        let h = random(9, 6, 1);
        assert!(forward(&p, &h).unwrap().data().iter().all(|v| *v == 0.0));

        let eye = TokenMatrix::from_fn(6, 6, |r, c| f64::from(u8::from(r == c)));
        p.w1 = eye.clone();
        p.w2 = eye.clone();
        p.w3 = eye;
        let h = random(5, 6, 2);
        assert_eq!(forward(&p, &h).unwrap(), h);
    }

    #[test]
    fn resampling_endpoints() {
        let w = resample_weights(5, 3);
        assert_eq!(w[0], [(0, 1.0), (1, 0.0)]);
        assert_eq!(w[1], [(2, 1.0), (3, 0.0)]);
        assert_eq!(w[2], [(4, 1.0), (4, 0.0)]);
        let one = resample_weights(4, 1);
        assert_eq!(one[0], [(1, 0.5), (2, 0.5)]);
    }

    #[test]
    fn linear_projector_is_linear() {
        let cfg = ProjectorConfig { m_tokens: 3, activation: Activation::None, seed: 4, ..ProjectorConfig::new(5, 4) };
        let mut p = init(&cfg).unwrap();
        // biases make the map affine; linearity holds for the bias-free map
        for b in [&mut p.b1, &mut p.b2, &mut p.b3] {
            b.fill(0.0);
        }
        let (x, y) = (random(7, 5, 1), random(7, 5, 2));
        let fx = forward(&p, &x).unwrap();
        let fy = forward(&p, &y).unwrap();
        let sum = forward(&p, &x.zip_map(&y, |a, b| a + b)).unwrap();
        assert!(sum.max_abs_diff(&fx.zip_map(&fy, |a, b| a + b)) < 1e-10);
        let scaled = forward(&p, &x.map(|v| 2.5 * v)).unwrap();
        assert!(scaled.max_abs_diff(&fx.map(|v| 2.5 * v)) < 1e-10);
    }

    #[test]
    fn concat_puts_text_first() {
        let text = random(3, 4, 1);
        let proj = random(4, 4, 2);
        let joined = concat_context(&proj, &text).unwrap();
        assert_eq!(joined.rows(), 7);
        assert_eq!(&joined.data()[..12], text.data());
        assert_eq!(&joined.data()[12..], proj.data());
        let err = concat_context(&random(4, 12, 0), &random(3, 16, 0)).unwrap_err();
        assert_eq!(err, ProjectorError::WidthMismatch { left: 16, right: 12 });
        let zero = ProjectorConfig { m_tokens: 0, ..ProjectorConfig::new(4, 4) };
        assert_eq!(zero.validate().unwrap_err().code(), "InvalidConfig");
    }

    #[test]
    fn zero_upstream_zero_grads() {
        let p = init(&ProjectorConfig { m_tokens: 3, ..ProjectorConfig::new(4, 5) }).unwrap();
        let (g, dh) = backward(&p, &random(6, 4, 3), &TokenMatrix::zeros(3, 5)).unwrap();
        assert!(g.flat().iter().all(|v| *v == 0.0));
        assert!(dh.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn fixed_point_and_zero_lr() {
        let p = init(&ProjectorConfig { m_tokens: 3, seed: 2, ..ProjectorConfig::new(4, 5) }).unwrap();
        let h = random(6, 4, 3);
        let target = forward(&p, &h).unwrap();
        let (next, loss) = train_step(&p, &[(h.clone(), target)], 0.1).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(next, p);
        let (same, _) = train_step(&p, &[(h, random(3, 5, 4))], 0.0).unwrap();
        assert_eq!(same, p);
    }

    #[test]
    fn toy_regression_converges() {
        let (p, batch) = toy_problem();
        let (_, curve) = train_loop(p, &batch, 1e-3, 500, Reduction::Sum).unwrap();
        let (first, last) = (curve[0], curve[500]);
        assert!(last < 0.1 * first, "{first} -> {last}");
        for w in curve.windows(10) {
            assert!(w[9] <= w[0] + 1e-9);
        }
    }
}
