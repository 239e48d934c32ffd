//! Choosing beta by k-fold cross-validation on held-out joint
//! log-likelihood (reconstruction + pair terms), instead of eyeballing
//! a disentanglement metric that needs ground-truth factors.
//!
//!     cargo run --release --example crossval_beta

use pairdis::datasets::{gen_synthetic, make_binary_labels, LabelGenConfig};
use pairdis::experiment::flatten_images;
use pairdis::model::ModelConfig;
use pairdis::similarity::{LabelKind, SimilarityParams};
use pairdis::trainer::{crossval_beta, OptimizerKind, TrainConfig};

fn main() -> pairdis::Result<()> {
    let n = 1500;
    let (images, factors) = gen_synthetic("blobs", n, 5)?;
    let flat = flatten_images(&images)?;
    let labels = LabelGenConfig {
        proportion: 3e-3,
        rbf_sigma: 30.0,
        noise_gamma: 0.0,
        kind: LabelKind::Binary,
        seed: 5,
    };
    let pairs = make_binary_labels(&factors, &labels)?;
    println!("{} instances, {} labeled pairs", n, pairs.len());

    let model = ModelConfig {
        d_u: 2,
        d_v: 6,
        hidden_sizes: vec![64],
        beta: 1.0, // overridden per grid point
        sim: SimilarityParams::new(1e3, 2.0, LabelKind::Binary)?,
        input_shape: (16, 16),
    };
    let train = TrainConfig {
        epochs: 8,
        batch_size: 128,
        pairs_per_step: 16,
        learning_rate: 1e-3,
        optimizer_kind: OptimizerKind::AdaptiveMoment,
        seed: 5,
        beta_grid: vec![1.0, 2.0, 4.0, 8.0, 16.0, 64.0],
        folds: 5,
        ..Default::default()
    };

    let res = crossval_beta(&model, &flat, &pairs, &train)?;
    for row in &res.rows {
        println!(
            "beta {:>5}: held-out joint ll {:>10.3}  (folds: {})",
            row.beta,
            row.mean_joint_ll,
            row.fold_lls
                .iter()
                .map(|v| format!("{:.1}", v))
                .collect::<Vec<_>>()
                .join(", ")
        );
    }
    println!("selected beta = {}", res.selected_beta);
    Ok(())
}
