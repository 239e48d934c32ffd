//! Evaluation: mutual information gap (MIG) with histogram estimators,
//! 5-NN prediction, Cohen's kappa, R^2, and circular statistics for
//! cyclic factors.

use std::collections::{BTreeMap, HashMap};

use crate::datasets::{FactorKind, FactorTable};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LatentSource {
    PosteriorMean,
    PosteriorSample,
}

#[derive(Clone, Copy, Debug)]
pub struct MigConfig {
    pub bins: usize,
    pub latent_source: LatentSource,
    /// Leading latent dims treated jointly as z^(u).
    pub d_u: usize,
}

impl MigConfig {
    pub fn new(bins: usize, d_u: usize) -> Result<Self> {
        if bins < 2 {
            return Err(Error::Config("bins must be >= 2".into()));
        }
        if d_u < 1 {
            return Err(Error::Config("d_u must be >= 1".into()));
        }
        Ok(MigConfig { bins, latent_source: LatentSource::PosteriorMean, d_u })
    }
}

/// Plug-in mutual information in nats from two aligned symbol sequences.
pub fn discrete_mutual_info(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.is_empty() || a.len() != b.len() {
        return Err(Error::Domain("need equal-length nonempty samples".into()));
    }
    let n = a.len() as f64;
    // BTreeMap keeps the summation order fixed, so repeated runs agree bitwise.
    let mut joint: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let mut pa: BTreeMap<usize, f64> = BTreeMap::new();
    let mut pb: BTreeMap<usize, f64> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *joint.entry((x, y)).or_insert(0.0) += 1.0;
        *pa.entry(x).or_insert(0.0) += 1.0;
        *pb.entry(y).or_insert(0.0) += 1.0;
    }
    let mut mi = 0.0;
    for (&(x, y), &c) in &joint {
        let pxy = c / n;
        let px = pa[&x] / n;
        let py = pb[&y] / n;
        mi += pxy * (pxy / (px * py)).ln();
    }
    Ok(mi.max(0.0))
}

/// Miller-Madow bias-corrected mutual information in nats. The plug-in
/// estimate is biased upward by roughly (K_a - 1)(K_b - 1) / 2N, which
/// dominates when a joint product alphabet is scored on moderate sample
/// sizes; the correction subtracts the occupied-cell estimate of that
/// bias. Clamped at zero.
pub fn discrete_mutual_info_corrected(a: &[usize], b: &[usize]) -> Result<f64> {
    let plugin = discrete_mutual_info(a, b)?;
    let n = a.len() as f64;
    let distinct = |xs: &[usize]| xs.iter().collect::<std::collections::HashSet<_>>().len() as f64;
    let k_a = distinct(a);
    let k_b = distinct(b);
    let k_ab: f64 = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| (x, y))
        .collect::<std::collections::HashSet<_>>()
        .len() as f64;
    // bias(H) = -(K - 1)/2N, so bias(MI) = (K_ab - K_a - K_b + 1)/2N
    Ok((plugin - (k_ab - k_a - k_b + 1.0) / (2.0 * n)).max(0.0))
}

/// Entropy in nats of a symbol sequence.
pub fn discrete_entropy(a: &[usize]) -> f64 {
    let n = a.len() as f64;
    let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
    for &x in a {
        *counts.entry(x).or_insert(0.0) += 1.0;
    }
    -counts
        .values()
        .map(|&c| {
            let p = c / n;
            p * p.ln()
        })
        .sum::<f64>()
}

/// Equal-frequency discretization into `bins` levels. A zero-variance
/// column maps everything to bin 0 (its MI with anything is then 0).
pub fn quantile_bins(values: &[f64], bins: usize) -> Vec<usize> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| values[i].partial_cmp(&values[j]).unwrap());
    let mut out = vec![0usize; n];
    let mut k = 0;
    while k < n {
        // ties share the bin of their first member
        let mut end = k + 1;
        while end < n && values[order[end]] == values[order[k]] {
            end += 1;
        }
        let bin = (k * bins) / n;
        for &idx in &order[k..end] {
            out[idx] = bin;
        }
        k = end;
    }
    out
}

/// Discretize the factor: class ids directly, angles into 20 equal arcs.
pub fn discretize_factor(t: &FactorTable) -> Vec<usize> {
    match t.kind {
        FactorKind::Discrete => t.values.iter().map(|&v| v as usize).collect(),
        FactorKind::Cyclic => t
            .values
            .iter()
            .map(|&v| ((v / 360.0 * 20.0) as usize).min(19))
            .collect(),
    }
}

/// MIG = ( I(z^(u); t) - max_d I(z^(v)_d; t) ) / H(t).
///
/// The z^(u) block enters jointly through the product alphabet of its
/// per-dimension quantile bins; each z^(v) dimension is scored alone.
pub fn mig(latents: &Tensor, t: &FactorTable, cfg: &MigConfig) -> Result<f64> {
    let (n, d) = (latents.rows(), latents.cols());
    if n != t.len() {
        return Err(Error::Shape(format!(
            "{} latent rows vs {} factors",
            n,
            t.len()
        )));
    }
    if cfg.d_u > d {
        return Err(Error::Config(format!("d_u {} exceeds latent dim {}", cfg.d_u, d)));
    }
    let t_sym = discretize_factor(t);
    let h_t = discrete_entropy(&t_sym);
    if h_t <= 0.0 {
        return Err(Error::Domain("degenerate factor: zero entropy".into()));
    }

    let column = |k: usize| -> Vec<f64> { (0..n).map(|r| latents.row(r)[k]).collect() };

    // joint code over the z^(u) block
    let mut joint = vec![0usize; n];
    for k in 0..cfg.d_u {
        let bins = quantile_bins(&column(k), cfg.bins);
        for r in 0..n {
            joint[r] = joint[r] * cfg.bins + bins[r];
        }
    }
    let i_joint = discrete_mutual_info_corrected(&joint, &t_sym)?;

    let mut max_v = 0.0f64;
    for k in cfg.d_u..d {
        let col = column(k);
        let bins = quantile_bins(&col, cfg.bins);
        let i_k = discrete_mutual_info_corrected(&bins, &t_sym)?;
        max_v = max_v.max(i_k);
    }

    Ok((i_joint - max_v) / h_t)
}

/// Per-dimension MI with the factor, for assigning an unsupervised
/// model's latents to (z^(u), z^(v)) blocks: returns dimension indices
/// sorted by decreasing MI.
pub fn rank_latents_by_mi(latents: &Tensor, t: &FactorTable, bins: usize) -> Result<Vec<usize>> {
    let (n, d) = (latents.rows(), latents.cols());
    let t_sym = discretize_factor(t);
    let mut scored: Vec<(usize, f64)> = Vec::with_capacity(d);
    for k in 0..d {
        let col: Vec<f64> = (0..n).map(|r| latents.row(r)[k]).collect();
        let b = quantile_bins(&col, bins);
        scored.push((k, discrete_mutual_info(&b, &t_sym)?));
    }
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
    Ok(scored.into_iter().map(|(k, _)| k).collect())
}

/// Reorder latent columns so `order[0]` becomes column 0, etc.
pub fn reorder_columns(latents: &Tensor, order: &[usize]) -> Result<Tensor> {
    let (n, d) = (latents.rows(), latents.cols());
    if order.len() != d {
        return Err(Error::Shape("order length must equal latent dim".into()));
    }
    let mut out = Tensor::zeros(&[n, d]);
    for r in 0..n {
        for (new_c, &old_c) in order.iter().enumerate() {
            out.data_mut()[r * d + new_c] = latents.row(r)[old_c];
        }
    }
    Ok(out)
}

fn neighbors(train: &Tensor, query: &[f64], k: usize) -> Vec<usize> {
    let n = train.rows();
    let mut dist: Vec<(f64, usize)> = (0..n)
        .map(|r| {
            let d: f64 = train
                .row(r)
                .iter()
                .zip(query)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            (d, r)
        })
        .collect();
    dist.sort_by(|a, b| a.partial_cmp(b).unwrap());
    dist.truncate(k);
    dist.into_iter().map(|(_, r)| r).collect()
}

/// k-NN prediction in z^(u) space. Classification: majority vote, ties
/// broken toward the smallest class id. Regression: mean of neighbor
/// values; cyclic regression: circular mean of neighbor angles.
pub fn knn_predict(
    train_zu: &Tensor,
    train_t: &FactorTable,
    test_zu: &Tensor,
    k: usize,
) -> Result<Vec<f64>> {
    if train_zu.rows() == 0 {
        return Err(Error::Domain("empty training set".into()));
    }
    if k > train_zu.rows() {
        return Err(Error::Config(format!(
            "k={} exceeds train size {}",
            k,
            train_zu.rows()
        )));
    }
    if train_zu.rows() != train_t.len() {
        return Err(Error::Shape("train codes vs labels length".into()));
    }
    let mut out = Vec::with_capacity(test_zu.rows());
    for q in 0..test_zu.rows() {
        let nb = neighbors(train_zu, test_zu.row(q), k);
        let pred = match train_t.kind {
            FactorKind::Discrete => {
                let mut votes: HashMap<usize, usize> = HashMap::new();
                for &r in &nb {
                    *votes.entry(train_t.values[r] as usize).or_insert(0) += 1;
                }
                let best = votes
                    .iter()
                    .map(|(&cls, &cnt)| (cnt, std::cmp::Reverse(cls)))
                    .max()
                    .map(|(_, std::cmp::Reverse(cls))| cls)
                    .unwrap();
                best as f64
            }
            FactorKind::Cyclic => {
                let (mut s, mut c) = (0.0, 0.0);
                for &r in &nb {
                    let rad = train_t.values[r].to_radians();
                    s += rad.sin();
                    c += rad.cos();
                }
                let ang = s.atan2(c).to_degrees();
                (ang + 360.0) % 360.0
            }
        };
        out.push(pred);
    }
    Ok(out)
}

/// Chance-corrected agreement. Degenerate p_e = 1 maps to 1 when the
/// observed agreement is also perfect, else 0.
pub fn cohens_kappa(pred: &[usize], truth: &[usize]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::Shape("length mismatch".into()));
    }
    if pred.is_empty() {
        return Err(Error::Domain("empty inputs".into()));
    }
    let n = pred.len() as f64;
    let mut mp: BTreeMap<usize, f64> = BTreeMap::new();
    let mut mt: BTreeMap<usize, f64> = BTreeMap::new();
    let mut agree = 0.0;
    for (&p, &t) in pred.iter().zip(truth) {
        *mp.entry(p).or_insert(0.0) += 1.0;
        *mt.entry(t).or_insert(0.0) += 1.0;
        if p == t {
            agree += 1.0;
        }
    }
    let p_o = agree / n;
    let p_e: f64 = mp
        .iter()
        .map(|(cls, &cp)| cp / n * mt.get(cls).copied().unwrap_or(0.0) / n)
        .sum();
    if (1.0 - p_e).abs() < 1e-15 {
        return Ok(if (p_o - 1.0).abs() < 1e-15 { 1.0 } else { 0.0 });
    }
    Ok((p_o - p_e) / (1.0 - p_e))
}

/// Coefficient of determination. Cyclic targets (and predictions) are
/// embedded on the unit circle and the residual/total sums pooled over
/// both coordinates.
pub fn r_squared(pred: &[f64], truth: &[f64], kind: FactorKind) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::Shape("length mismatch".into()));
    }
    if pred.len() < 2 {
        return Err(Error::Domain("need at least 2 points".into()));
    }
    match kind {
        FactorKind::Discrete => {
            let n = truth.len() as f64;
            let mean = truth.iter().sum::<f64>() / n;
            let ss_tot: f64 = truth.iter().map(|&t| (t - mean) * (t - mean)).sum();
            if ss_tot == 0.0 {
                return Err(Error::Domain("constant truth: R^2 undefined".into()));
            }
            let ss_res: f64 = pred
                .iter()
                .zip(truth)
                .map(|(&p, &t)| (p - t) * (p - t))
                .sum();
            Ok(1.0 - ss_res / ss_tot)
        }
        FactorKind::Cyclic => {
            let n = truth.len() as f64;
            let embed = |v: f64| {
                let r = v.to_radians();
                (r.cos(), r.sin())
            };
            let (mut mc, mut ms) = (0.0, 0.0);
            for &t in truth {
                let (c, s) = embed(t);
                mc += c;
                ms += s;
            }
            mc /= n;
            ms /= n;
            let mut ss_tot = 0.0;
            let mut ss_res = 0.0;
            for (&p, &t) in pred.iter().zip(truth) {
                let (tc, ts) = embed(t);
                let (pc, ps) = embed(p);
                ss_tot += (tc - mc) * (tc - mc) + (ts - ms) * (ts - ms);
                ss_res += (pc - tc) * (pc - tc) + (ps - ts) * (ps - ts);
            }
            if ss_tot == 0.0 {
                return Err(Error::Domain("constant truth: R^2 undefined".into()));
            }
            Ok(1.0 - ss_res / ss_tot)
        }
    }
}

/// Fisher-Lee circular correlation between two angle sequences (degrees).
pub fn circular_correlation(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::Domain("need two aligned sequences".into()));
    }
    let n = a.len();
    let mut num = 0.0;
    let mut den_a = 0.0;
    let mut den_b = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let da = (a[i] - a[j]).to_radians().sin();
            let db = (b[i] - b[j]).to_radians().sin();
            num += da * db;
            den_a += da * da;
            den_b += db * db;
        }
    }
    if den_a == 0.0 || den_b == 0.0 {
        return Err(Error::Domain("degenerate angle sequence".into()));
    }
    Ok(num / (den_a * den_b).sqrt())
}
