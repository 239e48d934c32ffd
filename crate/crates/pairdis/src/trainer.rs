//! Stochastic-gradient training, optimizers, and the beta
//! cross-validation protocol.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::model::{beta_vae_objective, joint_log_likelihood, objective, StepBatch, VaeModel};
use crate::similarity::PairBatch;
use crate::tape::Tape;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OptimizerKind {
    PlainSgd,
    AdaptiveMoment,
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plain-sgd" => Ok(OptimizerKind::PlainSgd),
            "adaptive-moment" => Ok(OptimizerKind::AdaptiveMoment),
            other => Err(Error::Config(format!("unknown optimizer {:?}", other))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub pairs_per_step: usize,
    pub learning_rate: f64,
    pub optimizer_kind: OptimizerKind,
    pub seed: u64,
    pub beta_grid: Vec<f64>,
    pub folds: usize,
    /// Monte Carlo samples for joint log-likelihood evaluation.
    pub joint_ll_samples: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 128,
            pairs_per_step: 32,
            learning_rate: 1e-3,
            optimizer_kind: OptimizerKind::AdaptiveMoment,
            seed: 0,
            beta_grid: vec![1.0, 2.0, 4.0, 8.0, 16.0],
            folds: 5,
            joint_ll_samples: 8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate < 0.0 {
            return Err(Error::Config("learning_rate must be >= 0".into()));
        }
        if self.folds < 2 {
            return Err(Error::Config("folds must be >= 2".into()));
        }
        if self.beta_grid.iter().any(|&b| b < 1.0) {
            return Err(Error::Config("beta grid values must be >= 1".into()));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config("epochs and batch_size must be positive".into()));
        }
        Ok(())
    }
}

/// Adam-style optimizer with bias correction; decay rates 0.9/0.999,
/// epsilon 1e-8. `PlainSgd` ignores the moment buffers.
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, shapes: &[Vec<usize>]) -> Self {
        Optimizer {
            kind,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
            v: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
        }
    }

    pub fn for_model(kind: OptimizerKind, lr: f64, model: &VaeModel) -> Self {
        let shapes: Vec<Vec<usize>> = model
            .params()
            .iter()
            .map(|(_, t)| t.shape().to_vec())
            .collect();
        Optimizer::new(kind, lr, &shapes)
    }

    pub fn apply(&mut self, params: &mut [(String, Tensor)], grads: &[Tensor]) {
        self.step += 1;
        match self.kind {
            OptimizerKind::PlainSgd => {
                for ((_, p), g) in params.iter_mut().zip(grads) {
                    for (pv, gv) in p.data_mut().iter_mut().zip(g.data()) {
                        *pv -= self.lr * gv;
                    }
                }
            }
            OptimizerKind::AdaptiveMoment => {
                let bc1 = 1.0 - self.beta1.powi(self.step as i32);
                let bc2 = 1.0 - self.beta2.powi(self.step as i32);
                for (k, ((_, p), g)) in params.iter_mut().zip(grads).enumerate() {
                    let m = self.m[k].data_mut();
                    let v = self.v[k].data_mut();
                    for ((pv, gv), (mv, vv)) in p
                        .data_mut()
                        .iter_mut()
                        .zip(g.data())
                        .zip(m.iter_mut().zip(v.iter_mut()))
                    {
                        *mv = self.beta1 * *mv + (1.0 - self.beta1) * gv;
                        *vv = self.beta2 * *vv + (1.0 - self.beta2) * gv * gv;
                        let mhat = *mv / bc1;
                        let vhat = *vv / bc2;
                        *pv -= self.lr * mhat / (vhat.sqrt() + self.eps);
                    }
                }
            }
        }
    }
}

/// Per-epoch mean term values, written out as the loss-history CSV.
#[derive(Clone, Copy, Debug)]
pub struct EpochStats {
    pub epoch: usize,
    pub recon: f64,
    pub pair: f64,
    pub kl_u: f64,
    pub kl_v: f64,
    pub total: f64,
}

pub fn write_loss_history(path: &std::path::Path, history: &[EpochStats]) -> Result<()> {
    use std::io::Write;
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "epoch,recon_term,pair_term,kl_u,kl_v,total")?;
    for s in history {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            s.epoch,
            crate::io::fmt_f64(s.recon),
            crate::io::fmt_f64(s.pair),
            crate::io::fmt_f64(s.kl_u),
            crate::io::fmt_f64(s.kl_v),
            crate::io::fmt_f64(s.total)
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Train in place. `pairs = None` trains the beta-VAE baseline (no pair
/// term, beta on the full KL); `Some(pairs)` trains the proposed
/// objective. `images` is [n, pixels]. Fully deterministic given
/// `cfg.seed`: separate ChaCha streams drive shuffling, pair picks, and
/// reparameterization noise.
pub fn train(
    model: &mut VaeModel,
    images: &Tensor,
    pairs: Option<&PairBatch>,
    cfg: &TrainConfig,
) -> Result<Vec<EpochStats>> {
    cfg.validate()?;
    let n = images.rows();
    if n == 0 {
        return Err(Error::Config("empty dataset".into()));
    }
    if let Some(p) = pairs {
        if !p.is_empty() && p.max_index() >= n {
            return Err(Error::Config(format!(
                "pair index {} out of range for {} instances",
                p.max_index(),
                n
            )));
        }
    }
    let pixels = images.cols();
    if pixels != model.cfg.pixels() {
        return Err(Error::Shape(format!(
            "images have {} pixels, model expects {}",
            pixels,
            model.cfg.pixels()
        )));
    }

    let mut shuffle_rng = ChaCha12Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut pair_rng = ChaCha12Rng::seed_from_u64(cfg.seed.wrapping_add(2));
    let mut noise_rng = ChaCha12Rng::seed_from_u64(cfg.seed.wrapping_add(3));

    let mut opt = Optimizer::for_model(cfg.optimizer_kind, cfg.learning_rate, model);
    let dz = model.cfg.d_z();
    let mut order: Vec<usize> = (0..n).collect();
    let mut pair_scratch: Vec<usize> = pairs.map(|p| (0..p.len()).collect()).unwrap_or_default();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut warned_empty = false;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut sums = (0.0, 0.0, 0.0, 0.0, 0.0);
        let mut steps = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            // assemble combined batch: minibatch instances + pair endpoints
            let mut rows: Vec<usize> = chunk.to_vec();
            let mut pos_of = std::collections::HashMap::new();
            for (pos, &idx) in rows.iter().enumerate() {
                pos_of.insert(idx, pos);
            }
            let (mut py, mut pi, mut pj) = (Vec::new(), Vec::new(), Vec::new());
            if let Some(p) = pairs {
                if p.is_empty() {
                    if !warned_empty {
                        eprintln!("warning: training with an empty pair set");
                        warned_empty = true;
                    }
                } else {
                    let take = cfg.pairs_per_step.min(p.len());
                    for k in 0..take {
                        let pick = pair_rng.gen_range(k..pair_scratch.len());
                        pair_scratch.swap(k, pick);
                    }
                    for &pk in &pair_scratch[..take] {
                        let (i, j, y) = (p.i_idx[pk], p.j_idx[pk], p.y[pk]);
                        let ipos = *pos_of.entry(i).or_insert_with(|| {
                            rows.push(i);
                            rows.len() - 1
                        });
                        let jpos = *pos_of.entry(j).or_insert_with(|| {
                            rows.push(j);
                            rows.len() - 1
                        });
                        pi.push(ipos);
                        pj.push(jpos);
                        py.push(y);
                    }
                }
            }

            let m = rows.len();
            let mut xb = Tensor::zeros(&[m, pixels]);
            for (pos, &idx) in rows.iter().enumerate() {
                xb.data_mut()[pos * pixels..(pos + 1) * pixels]
                    .copy_from_slice(images.row(idx));
            }
            let noise_data: Vec<f64> = (0..m * dz)
                .map(|_| StandardNormal.sample(&mut noise_rng))
                .collect();
            let noise = Tensor::new(vec![m, dz], noise_data)?;

            let mut tape = Tape::new();
            let bound = model.bind(&mut tape, true);
            let out = if pairs.is_some() {
                let batch = StepBatch {
                    x: &xb,
                    noise: &noise,
                    pair_y: &py,
                    pair_i: &pi,
                    pair_j: &pj,
                };
                objective(&mut tape, model, &bound, &batch)?
            } else {
                beta_vae_objective(&mut tape, model, &bound, &xb, &noise)?
            };
            let total = out.total(&tape);
            if !total.is_finite() {
                return Err(Error::Diverged(format!("epoch {} step {}", epoch, steps)));
            }
            let grads = tape.backward(out.loss)?;
            let grad_tensors: Vec<Tensor> =
                bound.vars().iter().map(|&v| grads.get(v)).collect();
            opt.apply(model.params_mut(), &grad_tensors);

            sums.0 += out.recon;
            sums.1 += out.pair;
            sums.2 += out.kl_u;
            sums.3 += out.kl_v;
            sums.4 += total;
            steps += 1;
        }
        let s = steps as f64;
        history.push(EpochStats {
            epoch,
            recon: sums.0 / s,
            pair: sums.1 / s,
            kl_u: sums.2 / s,
            kl_v: sums.3 / s,
            total: sums.4 / s,
        });
    }
    Ok(history)
}

/// One (beta, mean held-out joint log-likelihood) row per grid value.
#[derive(Clone, Debug)]
pub struct CrossvalRow {
    pub beta: f64,
    pub mean_joint_ll: f64,
    pub fold_lls: Vec<f64>,
}

pub struct CrossvalResult {
    pub rows: Vec<CrossvalRow>,
    pub selected_beta: f64,
}

/// 5-fold (configurable) cross-validation over beta. Folds split
/// instances; a pair is usable for training only when both endpoints are
/// in the training folds, and counts toward validation only when both
/// endpoints are in the validation fold. Each (beta, fold) run trains a
/// fresh model from a fold-derived seed shared across betas.
pub fn crossval_beta(
    base_model_cfg: &crate::model::ModelConfig,
    images: &Tensor,
    pairs: &PairBatch,
    cfg: &TrainConfig,
) -> Result<CrossvalResult> {
    cfg.validate()?;
    if cfg.beta_grid.is_empty() {
        return Err(Error::Config("empty beta grid".into()));
    }
    let n = images.rows();
    let pixels = images.cols();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed.wrapping_add(40));
    order.shuffle(&mut rng);
    let fold_of: Vec<usize> = {
        let mut f = vec![0usize; n];
        for (rank, &idx) in order.iter().enumerate() {
            f[idx] = rank % cfg.folds;
        }
        f
    };

    let mut rows: Vec<CrossvalRow> = cfg
        .beta_grid
        .iter()
        .map(|&beta| CrossvalRow { beta, mean_joint_ll: 0.0, fold_lls: Vec::new() })
        .collect();

    for fold in 0..cfg.folds {
        // index remapping for this fold
        let train_idx: Vec<usize> = (0..n).filter(|&i| fold_of[i] != fold).collect();
        let val_idx: Vec<usize> = (0..n).filter(|&i| fold_of[i] == fold).collect();
        let mut new_pos = vec![usize::MAX; n];
        for (pos, &i) in train_idx.iter().enumerate() {
            new_pos[i] = pos;
        }
        let mut val_pos = vec![usize::MAX; n];
        for (pos, &i) in val_idx.iter().enumerate() {
            val_pos[i] = pos;
        }

        let subset = |idx: &[usize]| -> Result<Tensor> {
            let mut t = Tensor::zeros(&[idx.len(), pixels]);
            for (pos, &i) in idx.iter().enumerate() {
                t.data_mut()[pos * pixels..(pos + 1) * pixels].copy_from_slice(images.row(i));
            }
            Ok(t)
        };
        let train_x = subset(&train_idx)?;
        let val_x = subset(&val_idx)?;

        let mut train_rows = Vec::new();
        let mut val_rows = Vec::new();
        for (i, j, y) in pairs.rows() {
            if fold_of[i] != fold && fold_of[j] != fold {
                train_rows.push((new_pos[i], new_pos[j], y));
            } else if fold_of[i] == fold && fold_of[j] == fold {
                val_rows.push((val_pos[i], val_pos[j], y));
            }
            // straddling pairs are dropped: using them would leak
        }
        let train_pairs = PairBatch::from_rows(&train_rows)?;
        let val_pairs = PairBatch::from_rows(&val_rows)?;
        if val_pairs.is_empty() {
            eprintln!(
                "warning: fold {} has no validation pairs; scoring reconstruction only",
                fold
            );
        }

        for row in rows.iter_mut() {
            let mut mcfg = base_model_cfg.clone();
            mcfg.beta = row.beta;
            let run_seed = cfg.seed.wrapping_add(1000).wrapping_add(fold as u64);
            let mut model = VaeModel::new(mcfg, run_seed)?;
            let mut tcfg = cfg.clone();
            tcfg.seed = run_seed;
            train(&mut model, &train_x, Some(&train_pairs), &tcfg)?;
            let mut eval_rng = ChaCha12Rng::seed_from_u64(run_seed.wrapping_add(7));
            let ll = joint_log_likelihood(
                &model,
                &val_x,
                &val_pairs,
                cfg.joint_ll_samples,
                &mut eval_rng,
            )?;
            row.fold_lls.push(ll);
        }
    }

    for row in rows.iter_mut() {
        row.mean_joint_ll = row.fold_lls.iter().sum::<f64>() / row.fold_lls.len() as f64;
    }
    let selected_beta = rows
        .iter()
        .max_by(|a, b| a.mean_joint_ll.partial_cmp(&b.mean_joint_ll).unwrap())
        .unwrap()
        .beta;
    Ok(CrossvalResult { rows, selected_beta })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;
    use crate::similarity::{LabelKind, SimilarityParams};

    fn tiny_model(seed: u64) -> VaeModel {
        let cfg = ModelConfig {
            d_u: 1,
            d_v: 2,
            hidden_sizes: vec![8],
            beta: 2.0,
            sim: SimilarityParams::new(10.0, 1.0, LabelKind::Binary).unwrap(),
            input_shape: (2, 2),
        };
        VaeModel::new(cfg, seed).unwrap()
    }

    /// Two pixel prototypes (even rows vs odd rows) with jitter, and
    /// pair labels consistent with prototype identity, so both the
    /// reconstruction and the pair term are learnable.
    fn tiny_data(n: usize, seed: u64) -> (Tensor, PairBatch) {
        use rand::Rng;
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut data = Vec::with_capacity(n * 4);
        for r in 0..n {
            for p in 0..4 {
                let hi = (r + p) % 2 == 0;
                let base = if hi { 0.9 } else { 0.05 };
                data.push(base + rng.gen_range(0.0..0.05));
            }
        }
        let x = Tensor::new(vec![n, 4], data).unwrap();
        let (mut i_idx, mut j_idx, mut y) = (Vec::new(), Vec::new(), Vec::new());
        for k in 0..n / 2 {
            let j = if k % 2 == 0 { k + n / 2 } else { n - 1 - k };
            i_idx.push(k);
            j_idx.push(j);
            y.push(if k % 2 == j % 2 { 1.0 } else { 0.0 });
        }
        (x, PairBatch::new(i_idx, j_idx, y).unwrap())
    }

    #[test]
    fn same_seed_bit_identical_histories() {
        let (x, pairs) = tiny_data(16, 1);
        let cfg = TrainConfig { epochs: 3, batch_size: 8, pairs_per_step: 4, ..Default::default() };
        let run = || {
            let mut m = tiny_model(9);
            train(&mut m, &x, Some(&pairs), &cfg).unwrap()
        };
        let h1 = run();
        let h2 = run();
        for (a, b) in h1.iter().zip(&h2) {
            assert_eq!(a.total.to_bits(), b.total.to_bits());
            assert_eq!(a.recon.to_bits(), b.recon.to_bits());
        }
    }

    #[test]
    fn zero_learning_rate_freezes_params() {
        let (x, pairs) = tiny_data(16, 2);
        let cfg = TrainConfig {
            epochs: 1,
            batch_size: 8,
            learning_rate: 0.0,
            ..Default::default()
        };
        let mut m = tiny_model(4);
        let before: Vec<Tensor> = m.params().iter().map(|(_, t)| t.clone()).collect();
        train(&mut m, &x, Some(&pairs), &cfg).unwrap();
        for ((_, after), b) in m.params().iter().zip(&before) {
            assert_eq!(after, b);
        }
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut m = tiny_model(4);
        let shapes: Vec<Vec<usize>> =
            m.params().iter().map(|(_, t)| t.shape().to_vec()).collect();
        for kind in [OptimizerKind::PlainSgd, OptimizerKind::AdaptiveMoment] {
            let mut opt = Optimizer::new(kind, 0.1, &shapes);
            let before: Vec<Tensor> = m.params().iter().map(|(_, t)| t.clone()).collect();
            let zeros: Vec<Tensor> = shapes.iter().map(|s| Tensor::zeros(s)).collect();
            opt.apply(m.params_mut(), &zeros);
            for ((_, after), b) in m.params().iter().zip(&before) {
                assert_eq!(after, b, "{:?}", kind);
            }
        }
    }

    #[test]
    fn adam_matches_hand_trace() {
        // single scalar parameter, gradients 1.0 then 0.5, lr=0.1
        let mut params = vec![("w".to_string(), Tensor::from_vec(vec![0.0]))];
        let mut opt = Optimizer::new(OptimizerKind::AdaptiveMoment, 0.1, &[vec![1]]);
        opt.apply(&mut params, &[Tensor::from_vec(vec![1.0])]);
        // step 1: mhat=1, vhat=1 -> w = -0.1 * 1/(1+1e-8)
        let w1 = params[0].1.data()[0];
        assert!((w1 - (-0.1 / (1.0 + 1e-8))).abs() < 1e-12, "{}", w1);
        opt.apply(&mut params, &[Tensor::from_vec(vec![0.5])]);
        // step 2 by hand:
        let m2 = 0.9 * 0.1 + 0.1 * 0.5; // 0.14
        let v2 = 0.999 * 0.001 + 0.001 * 0.25; // 0.001249
        let mhat = m2 / (1.0 - 0.9f64.powi(2));
        let vhat = v2 / (1.0 - 0.999f64.powi(2));
        let expect = w1 - 0.1 * mhat / (vhat.sqrt() + 1e-8);
        let w2 = params[0].1.data()[0];
        assert!((w2 - expect).abs() < 1e-12, "{} vs {}", w2, expect);
    }

    #[test]
    fn sgd_matches_update_rule() {
        let mut params = vec![("w".to_string(), Tensor::from_vec(vec![1.0, 2.0]))];
        let mut opt = Optimizer::new(OptimizerKind::PlainSgd, 0.5, &[vec![2]]);
        opt.apply(&mut params, &[Tensor::from_vec(vec![2.0, -4.0])]);
        assert_eq!(params[0].1.data(), &[0.0, 4.0]);
    }

    #[test]
    fn overfit_small_set_halves_loss() {
        let (x, pairs) = tiny_data(16, 3);
        let cfg = TrainConfig {
            epochs: 60,
            batch_size: 16,
            pairs_per_step: 4,
            ..Default::default()
        };
        let mut m = tiny_model(7);
        let hist = train(&mut m, &x, Some(&pairs), &cfg).unwrap();
        let first = hist.first().unwrap().total;
        let last = hist.last().unwrap().total;
        assert!(
            last < first * 0.5 || last < first - first.abs() * 0.5,
            "first {} last {}",
            first,
            last
        );
    }

    #[test]
    fn crossval_single_beta_returns_it() {
        let (x, pairs) = tiny_data(20, 5);
        let mcfg = tiny_model(0).cfg;
        let cfg = TrainConfig {
            epochs: 2,
            batch_size: 8,
            beta_grid: vec![3.0],
            folds: 2,
            joint_ll_samples: 2,
            ..Default::default()
        };
        let res = crossval_beta(&mcfg, &x, &pairs, &cfg).unwrap();
        assert_eq!(res.selected_beta, 3.0);
        assert_eq!(res.rows.len(), 1);
        assert_eq!(res.rows[0].fold_lls.len(), 2);
    }
}
