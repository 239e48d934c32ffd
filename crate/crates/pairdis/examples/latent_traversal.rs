//! Train on the bars dataset with RBF similarity labels, then decode a
//! lattice over the two z^(u) coordinates (z^(v) fixed from a real
//! image) into a PGM contact sheet. With a cyclic ground-truth factor
//! the decoded bars should rotate as the lattice walks around the
//! origin.
//!
//!     cargo run --release --example latent_traversal

use pairdis::datasets::LabelGenConfig;
use pairdis::experiment::{prepare_data, run_experiment, ExperimentSpec};
use pairdis::io::write_pgm;
use pairdis::model::ModelConfig;
use pairdis::similarity::{LabelKind, SimilarityParams};
use pairdis::tape::Tape;
use pairdis::tensor::sigmoid;
use pairdis::trainer::{OptimizerKind, TrainConfig};
use pairdis::Tensor;

fn main() -> pairdis::Result<()> {
    let spec = ExperimentSpec {
        dataset: "bars".into(),
        n: 3000,
        holdout: 0.2,
        labels: LabelGenConfig {
            proportion: 2e-3,
            rbf_sigma: 30.0,
            noise_gamma: 0.0,
            kind: LabelKind::Real,
            seed: 3,
        },
        model: ModelConfig {
            d_u: 2,
            d_v: 6,
            hidden_sizes: vec![128, 64],
            beta: 4.0,
            sim: SimilarityParams::new(1e3, 2.0, LabelKind::Real)?,
            input_shape: (16, 16),
        },
        train: TrainConfig {
            epochs: 20,
            batch_size: 128,
            pairs_per_step: 32,
            learning_rate: 1e-3,
            optimizer_kind: OptimizerKind::AdaptiveMoment,
            seed: 3,
            ..Default::default()
        },
        baseline: false,
    };
    let (model, outcome) = run_experiment(&spec)?;
    println!(
        "trained: MIG {:.3}, R^2 {:.3}, ring correlation {:.3}",
        outcome.mig,
        outcome.r2,
        outcome.circular_corr.unwrap_or(f64::NAN)
    );

    // fixed z^(v) from one held-out image
    let data = prepare_data(&spec)?;
    let one = Tensor::new(vec![1, 256], data.eval_x.row(0).to_vec())?;
    let code = model.posterior_means(&one)?;
    let zv: Vec<f64> = code.row(0)[2..].to_vec();

    let grid = 9usize;
    let extent = 2.5;
    let mut zs = Vec::new();
    for r in 0..grid {
        for c in 0..grid {
            let zu1 = -extent + 2.0 * extent * c as f64 / (grid - 1) as f64;
            let zu2 = extent - 2.0 * extent * r as f64 / (grid - 1) as f64;
            zs.push(zu1);
            zs.push(zu2);
            zs.extend_from_slice(&zv);
        }
    }
    let z = Tensor::new(vec![grid * grid, 8], zs)?;
    let mut tape = Tape::new();
    let bound = model.bind(&mut tape, false);
    let zvar = tape.constant(z);
    let logits = model.decode(&mut tape, &bound, zvar)?;
    let probs = tape.value(logits).map(sigmoid);

    let mut canvas = vec![0.0; grid * 16 * grid * 16];
    for r in 0..grid {
        for c in 0..grid {
            let tile = probs.row(r * grid + c);
            for py in 0..16 {
                for px in 0..16 {
                    canvas[(r * 16 + py) * (grid * 16) + c * 16 + px] = tile[py * 16 + px];
                }
            }
        }
    }
    let out = std::path::Path::new("traversal.pgm");
    write_pgm(out, grid * 16, grid * 16, &canvas)?;
    println!("wrote {} ({}x{} grid of decoded bars)", out.display(), grid, grid);
    Ok(())
}
