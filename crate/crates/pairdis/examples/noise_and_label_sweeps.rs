//! Two robustness sweeps on the blob dataset: disentanglement as a
//! function of label noise gamma, and as a function of how many pairs
//! receive labels. More noise should hurt; more labels should help.
//!
//!     cargo run --release --example noise_and_label_sweeps

use pairdis::datasets::LabelGenConfig;
use pairdis::experiment::{run_experiment, ExperimentSpec};
use pairdis::model::ModelConfig;
use pairdis::similarity::{LabelKind, SimilarityParams};
use pairdis::trainer::{OptimizerKind, TrainConfig};

fn spec(proportion: f64, gamma: f64, seed: u64) -> ExperimentSpec {
    ExperimentSpec {
        dataset: "blobs".into(),
        n: 2000,
        holdout: 0.25,
        labels: LabelGenConfig {
            proportion,
            rbf_sigma: 30.0,
            noise_gamma: gamma,
            kind: LabelKind::Binary,
            seed,
        },
        model: ModelConfig {
            d_u: 2,
            d_v: 6,
            hidden_sizes: vec![128, 64],
            beta: 4.0,
            sim: SimilarityParams::new(1e3, 2.0, LabelKind::Binary).unwrap(),
            input_shape: (16, 16),
        },
        train: TrainConfig {
            epochs: 12,
            batch_size: 128,
            pairs_per_step: 32,
            learning_rate: 1e-3,
            optimizer_kind: OptimizerKind::AdaptiveMoment,
            seed,
            ..Default::default()
        },
        baseline: false,
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v[v.len() / 2]
}

fn main() -> pairdis::Result<()> {
    let seeds = [1u64, 2, 3];

    println!("label-noise sweep (proportion 2e-3):");
    for gamma in [0.0, 0.1, 0.3] {
        let migs: Vec<f64> = seeds
            .iter()
            .map(|&s| run_experiment(&spec(2e-3, gamma, s)).map(|(_, o)| o.mig))
            .collect::<pairdis::Result<_>>()?;
        println!("  gamma {:>4}: median MIG {:.3}  ({:?})", gamma, median(migs.clone()), migs);
    }

    println!("label-count sweep (gamma 0):");
    for proportion in [1e-4, 5e-4, 2e-3] {
        let migs: Vec<f64> = seeds
            .iter()
            .map(|&s| run_experiment(&spec(proportion, 0.0, s)).map(|(_, o)| o.mig))
            .collect::<pairdis::Result<_>>()?;
        println!(
            "  proportion {:>6}: median MIG {:.3}  ({:?})",
            proportion,
            median(migs.clone()),
            migs
        );
    }
    Ok(())
}
