//! Project synthetic hidden states, append them to stub text embeddings,
//! check gradients and train on the toy regression task.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use unison::projector::{
    concat_context, forward, grad_check, init, random_config, toy_problem, train_loop, HashEmbedder, ProjectorConfig,
    Reduction, TokenMatrix,
};

fn main() {
    let cfg = ProjectorConfig { m_tokens: 8, seed: 3, ..ProjectorConfig::new(32, 24) };
    let params = init(&cfg).expect("valid config");
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let hidden = TokenMatrix::from_fn(57, cfg.d_in, |_, _| rng.random_range(-1.0..1.0));
    let projected = forward(&params, &hidden).expect("shapes match");
    let text = HashEmbedder::new(cfg.d_out, 0).embed("a red fox in the snow");
    let context = concat_context(&projected, &text).expect("same width");
    println!("hidden {:?} -> projected {:?}; text {:?} -> context {:?}", hidden.shape(), projected.shape(), text.shape(), context.shape());

    let worst = (0..20)
        .map(|s| grad_check(&random_config(s), 1 + s as usize % 6).expect("grad check").max_rel_error)
        .fold(0.0, f64::max);
    println!("max relative gradient error over 20 configs: {worst:.3e}");

    let (params, batch) = toy_problem();
    let (_, curve) = train_loop(params, &batch, 1e-3, 500, Reduction::Sum).expect("training");
    for step in [0, 50, 100, 200, 300, 400, 500] {
        println!("step {step:>3}  loss {:.6}  ({:.1}% of initial)", curve[step], 100.0 * curve[step] / curve[0]);
    }
}
