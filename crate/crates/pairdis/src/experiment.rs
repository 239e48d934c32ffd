//! End-to-end experiment runner: generate data, fabricate labels, train,
//! evaluate on a held-out split. Used by the `sweep` CLI command and by
//! integration tests.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::datasets::{
    gen_synthetic, inject_noise, make_binary_labels, make_rbf_labels, FactorKind, FactorTable,
    LabelGenConfig,
};
use crate::error::Result;
use crate::metrics::{
    circular_correlation, cohens_kappa, knn_predict, mig, r_squared, rank_latents_by_mi,
    reorder_columns, MigConfig,
};
use crate::model::{ModelConfig, VaeModel};
use crate::similarity::{LabelKind, PairBatch};
use crate::tensor::Tensor;
use crate::trainer::{train, EpochStats, TrainConfig};

#[derive(Clone, Debug)]
pub struct ExperimentSpec {
    pub dataset: String,
    pub n: usize,
    /// Fraction of instances held out for evaluation.
    pub holdout: f64,
    pub labels: LabelGenConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// Train the beta-VAE baseline (no pair supervision) instead.
    pub baseline: bool,
}

#[derive(Clone, Debug)]
pub struct ExperimentOutcome {
    pub mig: f64,
    /// Cohen's kappa of 5-NN classification (discrete factors only).
    pub kappa: Option<f64>,
    /// R^2 of 5-NN regression (circle-embedded for cyclic factors).
    pub r2: f64,
    /// Circular correlation of atan2(zu_2, zu_1) with the ground-truth
    /// angle, absolute value (reflections are equivalent embeddings).
    /// Only for cyclic factors with d_u = 2.
    pub circular_corr: Option<f64>,
    pub history: Vec<EpochStats>,
    pub held_out_n: usize,
}

pub struct SplitData {
    pub train_x: Tensor,
    pub train_t: FactorTable,
    pub eval_x: Tensor,
    pub eval_t: FactorTable,
    pub pairs: PairBatch,
}

/// Flatten [n, h, w] images to [n, h*w].
pub fn flatten_images(images: &Tensor) -> Result<Tensor> {
    let shape = images.shape().to_vec();
    let n = shape[0];
    let px: usize = shape[1..].iter().product();
    images.reshaped(vec![n, px])
}

/// Generate the dataset, split train/holdout, fabricate (and optionally
/// corrupt) pair labels on the training portion only.
pub fn prepare_data(spec: &ExperimentSpec) -> Result<SplitData> {
    let (images, factors) = gen_synthetic(&spec.dataset, spec.n, spec.labels.seed)?;
    let flat = flatten_images(&images)?;
    let n = spec.n;
    let n_eval = ((n as f64) * spec.holdout).round() as usize;
    let n_train = n - n_eval;

    // deterministic split: shuffle indices with a split-specific stream
    use rand::seq::SliceRandom;
    let mut rng = ChaCha12Rng::seed_from_u64(spec.labels.seed.wrapping_add(77));
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let (train_idx, eval_idx) = order.split_at(n_train);

    let px = flat.cols();
    let take = |idx: &[usize]| -> Result<(Tensor, FactorTable)> {
        let mut x = Tensor::zeros(&[idx.len(), px]);
        let mut t = Vec::with_capacity(idx.len());
        for (pos, &i) in idx.iter().enumerate() {
            x.data_mut()[pos * px..(pos + 1) * px].copy_from_slice(flat.row(i));
            t.push(factors.values[i]);
        }
        Ok((x, FactorTable::new(factors.kind, t)?))
    };
    let (train_x, train_t) = take(train_idx)?;
    let (eval_x, eval_t) = take(eval_idx)?;

    let pairs = match spec.labels.kind {
        LabelKind::Binary => make_binary_labels(&train_t, &spec.labels)?,
        LabelKind::Real => make_rbf_labels(&train_t, &spec.labels)?,
    };
    let pairs = inject_noise(&pairs, &spec.labels)?;

    Ok(SplitData { train_x, train_t, eval_x, eval_t, pairs })
}

/// Held-out evaluation of a trained model: MIG, 5-NN prediction quality,
/// and ring correlation where applicable. For baseline (unsupervised)
/// models the latent dimensions are first ranked by mutual information
/// with the factor and the top d_u treated as z^(u).
pub fn evaluate(
    model: &VaeModel,
    data: &SplitData,
    rank_dims: bool,
) -> Result<ExperimentOutcome> {
    let d_u = model.cfg.d_u;
    let mut eval_codes = model.posterior_means(&data.eval_x)?;
    let mut train_codes = model.posterior_means(&data.train_x)?;
    if rank_dims {
        let order = rank_latents_by_mi(&eval_codes, &data.eval_t, 20)?;
        eval_codes = reorder_columns(&eval_codes, &order)?;
        train_codes = reorder_columns(&train_codes, &order)?;
    }

    let mig_cfg = MigConfig::new(20, d_u)?;
    let mig_val = mig(&eval_codes, &data.eval_t, &mig_cfg)?;

    let slice_zu = |codes: &Tensor| -> Result<Tensor> {
        let (n, d) = (codes.rows(), codes.cols());
        let mut out = Tensor::zeros(&[n, d_u]);
        for r in 0..n {
            out.data_mut()[r * d_u..(r + 1) * d_u].copy_from_slice(&codes.row(r)[..d_u.min(d)]);
        }
        Ok(out)
    };
    let train_zu = slice_zu(&train_codes)?;
    let eval_zu = slice_zu(&eval_codes)?;

    let preds = knn_predict(&train_zu, &data.train_t, &eval_zu, 5)?;
    let (kappa, r2) = match data.eval_t.kind {
        FactorKind::Discrete => {
            let p: Vec<usize> = preds.iter().map(|&v| v as usize).collect();
            let t: Vec<usize> = data.eval_t.values.iter().map(|&v| v as usize).collect();
            (
                Some(cohens_kappa(&p, &t)?),
                r_squared(&preds, &data.eval_t.values, FactorKind::Discrete)?,
            )
        }
        FactorKind::Cyclic => (
            None,
            r_squared(&preds, &data.eval_t.values, FactorKind::Cyclic)?,
        ),
    };

    let circular_corr = if data.eval_t.kind == FactorKind::Cyclic && d_u == 2 {
        let angles: Vec<f64> = (0..eval_zu.rows())
            .map(|r| {
                let row = eval_zu.row(r);
                let a = row[1].atan2(row[0]).to_degrees();
                (a + 360.0) % 360.0
            })
            .collect();
        Some(circular_correlation(&angles, &data.eval_t.values)?.abs())
    } else {
        None
    };

    Ok(ExperimentOutcome {
        mig: mig_val,
        kappa,
        r2,
        circular_corr,
        history: Vec::new(),
        held_out_n: data.eval_x.rows(),
    })
}

/// Full pipeline for one seed. Returns the trained model alongside the
/// held-out metrics.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<(VaeModel, ExperimentOutcome)> {
    let data = prepare_data(spec)?;
    let mut model = VaeModel::new(spec.model.clone(), spec.train.seed)?;
    let history = if spec.baseline {
        train(&mut model, &data.train_x, None, &spec.train)?
    } else {
        train(&mut model, &data.train_x, Some(&data.pairs), &spec.train)?
    };
    let mut outcome = evaluate(&model, &data, spec.baseline)?;
    outcome.history = history;
    Ok((model, outcome))
}
