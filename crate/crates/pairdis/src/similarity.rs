//! Pairwise similarity likelihood p(y_ij | z_i^(u), z_j^(u)).
//!
//! The similarity strength is g(z_i, z_j) = logistic(u) with
//! u = eta1 * (eta2 - ||z_i - z_j||^2). Binary labels use the Bernoulli
//! form with C = 1; real-valued labels in [0,1] share the same density up
//! to the closed-form normalizer C(u) = tanh(u/2)/u.
//!
//! All log terms are computed through softplus so that the eta1 = 1e3
//! regime (|u| in the thousands) stays finite, and gradients flow through
//! C as well as g.

use crate::error::{Error, Result};
use crate::tape::{log_norm_c_scalar, norm_c_scalar, Tape, Var};
use crate::tensor::{softplus, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum LabelKind {
    Binary,
    Real,
}

impl std::fmt::Display for LabelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LabelKind::Binary => write!(f, "binary"),
            LabelKind::Real => write!(f, "real"),
        }
    }
}

impl std::str::FromStr for LabelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "binary" => Ok(LabelKind::Binary),
            "real" => Ok(LabelKind::Real),
            other => Err(Error::Config(format!("unknown label kind {:?}", other))),
        }
    }
}

#[derive(Clone, Copy, Debug, serde::Serialize, serde::Deserialize)]
pub struct SimilarityParams {
    /// Steepness eta1 > 0.
    pub eta1: f64,
    /// Threshold eta2 > 0 on the squared latent distance.
    pub eta2: f64,
    pub label_kind: LabelKind,
}

impl SimilarityParams {
    pub fn new(eta1: f64, eta2: f64, label_kind: LabelKind) -> Result<Self> {
        if !(eta1 > 0.0) || !(eta2 > 0.0) {
            return Err(Error::Config(format!(
                "eta1 and eta2 must be positive, got {} and {}",
                eta1, eta2
            )));
        }
        Ok(SimilarityParams { eta1, eta2, label_kind })
    }
}

/// A batch of weak labels: unordered pairs (i, j) with y in [0,1].
#[derive(Clone, Debug, PartialEq)]
pub struct PairBatch {
    pub i_idx: Vec<usize>,
    pub j_idx: Vec<usize>,
    pub y: Vec<f64>,
}

impl PairBatch {
    pub fn new(i_idx: Vec<usize>, j_idx: Vec<usize>, y: Vec<f64>) -> Result<Self> {
        if i_idx.len() != j_idx.len() || i_idx.len() != y.len() {
            return Err(Error::Shape("pair batch field lengths differ".into()));
        }
        for (k, (&i, &j)) in i_idx.iter().zip(&j_idx).enumerate() {
            if i == j {
                return Err(Error::Domain(format!("self-pair at position {}", k)));
            }
        }
        if y.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::Domain("labels must lie in [0,1]".into()));
        }
        Ok(PairBatch { i_idx, j_idx, y })
    }

    pub fn from_rows(rows: &[(usize, usize, f64)]) -> Result<Self> {
        PairBatch::new(
            rows.iter().map(|r| r.0).collect(),
            rows.iter().map(|r| r.1).collect(),
            rows.iter().map(|r| r.2).collect(),
        )
    }

    pub fn rows(&self) -> Vec<(usize, usize, f64)> {
        (0..self.len())
            .map(|k| (self.i_idx[k], self.j_idx[k], self.y[k]))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn max_index(&self) -> usize {
        self.i_idx
            .iter()
            .chain(&self.j_idx)
            .copied()
            .max()
            .unwrap_or(0)
    }

    /// Reject fractional labels when the likelihood expects binary ones.
    pub fn check_labels(&self, kind: LabelKind) -> Result<()> {
        if kind == LabelKind::Binary && self.y.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::Domain(
                "binary label kind with fractional labels".into(),
            ));
        }
        Ok(())
    }
}

/// Logit u = eta1 * (eta2 - ||z_i - z_j||^2) per row pair, on the tape.
pub fn pair_logit(tape: &mut Tape, zu_i: Var, zu_j: Var, p: &SimilarityParams) -> Result<Var> {
    let d2 = tape.sq_dist_rows(zu_i, zu_j)?;
    tape.affine(d2, -p.eta1, p.eta1 * p.eta2)
}

/// g(z_i, z_j) = logistic(u), in (0,1), differentiable.
pub fn g_similarity(tape: &mut Tape, zu_i: Var, zu_j: Var, p: &SimilarityParams) -> Result<Var> {
    let u = pair_logit(tape, zu_i, zu_j, p)?;
    tape.sigmoid(u)
}

/// log C at a given logit value (non-tape convenience).
pub fn log_norm_constant(u: f64) -> Result<f64> {
    if !u.is_finite() {
        return Err(Error::Domain("non-finite logit".into()));
    }
    Ok(log_norm_c_scalar(u))
}

/// C itself; exactly 0.5 at u = 0.
pub fn norm_constant(u: f64) -> Result<f64> {
    if !u.is_finite() {
        return Err(Error::Domain("non-finite logit".into()));
    }
    Ok(norm_c_scalar(u))
}

/// Per-pair log density, shape [pairs]:
///   y * log g + (1-y) * log(1-g) - log C
/// with log g = -softplus(-u) and log(1-g) = -softplus(u).
/// C = 1 for binary labels, C = tanh(u/2)/u for real labels.
pub fn pair_log_likelihood(
    tape: &mut Tape,
    pairs_y: &[f64],
    zu_i: Var,
    zu_j: Var,
    p: &SimilarityParams,
) -> Result<Var> {
    if pairs_y.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
        return Err(Error::Domain("labels must lie in [0,1]".into()));
    }
    if p.label_kind == LabelKind::Binary && pairs_y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::Domain(
            "binary label kind with fractional labels".into(),
        ));
    }
    if pairs_y.len() != tape.value(zu_i).rows() {
        return Err(Error::Shape(format!(
            "{} labels vs {} code rows",
            pairs_y.len(),
            tape.value(zu_i).rows()
        )));
    }
    let u = pair_logit(tape, zu_i, zu_j, p)?;
    let neg_u = tape.neg(u)?;
    let sp_neg = tape.softplus(neg_u)?; // -log g
    let sp_pos = tape.softplus(u)?; // -log(1-g)
    let y = tape.constant(Tensor::from_vec(pairs_y.to_vec()));
    let one_minus_y = tape.constant(Tensor::from_vec(
        pairs_y.iter().map(|v| 1.0 - v).collect(),
    ));
    let a = tape.mul(y, sp_neg)?;
    let b = tape.mul(one_minus_y, sp_pos)?;
    let neg_ll = tape.add(a, b)?;
    let ll = tape.neg(neg_ll)?;
    match p.label_kind {
        LabelKind::Binary => Ok(ll),
        LabelKind::Real => {
            let log_c = tape.log_norm_c(u)?;
            tape.sub(ll, log_c)
        }
    }
}

/// Scalar reference path for the log density, used by oracles and
/// evaluation code that does not need gradients.
pub fn pair_log_density_scalar(y: f64, u: f64, kind: LabelKind) -> f64 {
    let ll = -y * softplus(-u) - (1.0 - y) * softplus(u);
    match kind {
        LabelKind::Binary => ll,
        LabelKind::Real => ll - log_norm_c_scalar(u),
    }
}

#[derive(Debug)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub points_checked: usize,
}

/// Finite-difference validation of d(log density)/d z^(u) at a spread of
/// logit regimes, including the removable u ~ 0 singularity of C
/// and the saturated |u| ~ 2000 regime.
pub fn pair_term_gradient_check(p: &SimilarityParams, seed: u64) -> Result<GradCheckReport> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
    let d = 2;
    let mut max_rel = 0.0f64;
    let mut points = 0;
    // target squared distances hitting u near 0, moderate, saturated
    let targets = [p.eta2, p.eta2 + 1.0 / p.eta1, p.eta2 - 0.5, p.eta2 + 2.0, 0.0];
    for &d2_target in &targets {
        let d2_target = d2_target.max(0.0);
        for _ in 0..4 {
            let y = if p.label_kind == LabelKind::Binary {
                if rng.gen_bool(0.5) {
                    1.0
                } else {
                    0.0
                }
            } else {
                rng.gen_range(0.0..=1.0)
            };
            let dir: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let norm: f64 = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
            let zi: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let zj: Vec<f64> = zi
                .iter()
                .zip(&dir)
                .map(|(a, v)| a + v / norm * d2_target.sqrt())
                .collect();

            let eval = |zi: &[f64], zj: &[f64]| -> f64 {
                let d2: f64 = zi.iter().zip(zj).map(|(a, b)| (a - b) * (a - b)).sum();
                let u = p.eta1 * (p.eta2 - d2);
                pair_log_density_scalar(y, u, p.label_kind)
            };

            // tape gradient
            let mut tape = Tape::new();
            let vi = tape.param(Tensor::matrix(1, d, zi.clone())?);
            let vj = tape.param(Tensor::matrix(1, d, zj.clone())?);
            let ll = pair_log_likelihood(&mut tape, &[y], vi, vj, p)?;
            let root = tape.sum(ll)?;
            let grads = tape.backward(root)?;
            let gi = grads.get(vi);

            // central differences on zi
            let h = 1e-7;
            for k in 0..d {
                let mut zp = zi.clone();
                let mut zm = zi.clone();
                zp[k] += h;
                zm[k] -= h;
                let fd = (eval(&zp, &zj) - eval(&zm, &zj)) / (2.0 * h);
                let g = gi.data()[k];
                let denom = fd.abs().max(g.abs()).max(1e-3);
                let rel = (fd - g).abs() / denom;
                max_rel = max_rel.max(rel);
                points += 1;
            }
        }
    }
    Ok(GradCheckReport { max_rel_err: max_rel, points_checked: points })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::sigmoid;

    fn params(eta1: f64, eta2: f64, kind: LabelKind) -> SimilarityParams {
        SimilarityParams::new(eta1, eta2, kind).unwrap()
    }

    fn g_at(d2: f64, p: &SimilarityParams) -> f64 {
        let mut tape = Tape::new();
        let zi = tape.param(Tensor::matrix(1, 1, vec![0.0]).unwrap());
        let zj = tape.param(Tensor::matrix(1, 1, vec![d2.sqrt()]).unwrap());
        let g = g_similarity(&mut tape, zi, zj, p).unwrap();
        tape.value(g).data()[0]
    }

    #[test]
    fn g_limits_and_midpoint() {
        let p = params(1e3, 2.0, LabelKind::Binary);
        assert!((g_at(0.0, &p) - 1.0).abs() < 1e-12); // sigma(2000)
        assert!((g_at(2.0, &p) - 0.5).abs() < 1e-12); // d^2 = eta2
        let p1 = params(1.0, 2.0, LabelKind::Binary);
        assert!((g_at(3.0, &p1) - sigmoid(-1.0)).abs() < 1e-12);
    }

    #[test]
    fn binary_density_at_midpoint() {
        let v = pair_log_density_scalar(1.0, 0.0, LabelKind::Binary);
        assert!((v - 0.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn real_density_example_u2_yhalf() {
        // 0.5*(-softplus(-2)) + 0.5*(-softplus(2)) - log C(2)
        let expect = -(softplus(-2.0) + softplus(2.0)) / 2.0 - log_norm_c_scalar(2.0);
        let v = pair_log_density_scalar(0.5, 2.0, LabelKind::Real);
        assert!((v - expect).abs() < 1e-14);
        // frozen: -(2 + 2 ln(1+e^-2))/2 - ln(tanh(1)/2)
        assert!((v - (-0.161439)).abs() < 1e-5, "{}", v);
    }

    #[test]
    fn norm_constant_quadrature() {
        // C(u) must equal the integral of g^y (1-g)^(1-y) dy over [0,1].
        // Simpson quadrature with fine grid; integrand is exp(y*log g + (1-y)*log(1-g)).
        for &u in &[0.0, 1e-6, -1e-6, 0.1, -0.1, 1.0, -1.0, 2.0, 10.0, -10.0] {
            let log_g = -softplus(-u);
            let log_1mg = -softplus(u);
            let f = |y: f64| (y * log_g + (1.0 - y) * log_1mg).exp();
            let n = 20_000;
            let h = 1.0 / n as f64;
            let mut s = f(0.0) + f(1.0);
            for k in 1..n {
                let y = k as f64 * h;
                s += if k % 2 == 1 { 4.0 } else { 2.0 } * f(y);
            }
            let integral = s * h / 3.0;
            let c = norm_constant(u).unwrap();
            assert!((integral - c).abs() < 1e-10, "u={} int={} c={}", u, integral, c);
        }
    }

    #[test]
    fn real_density_integrates_to_one() {
        for &u in &[0.0, 0.1, -0.1, 1.0, -1.0, 10.0, -10.0, 100.0, -100.0, 2000.0, -2000.0] {
            let f = |y: f64| pair_log_density_scalar(y, u, LabelKind::Real).exp();
            let n = 200_000;
            let h = 1.0 / n as f64;
            let mut s = f(0.0) + f(1.0);
            for k in 1..n {
                s += if k % 2 == 1 { 4.0 } else { 2.0 } * f(k as f64 * h);
            }
            let integral = s * h / 3.0;
            assert!((integral - 1.0).abs() < 1e-6, "u={} integral={}", u, integral);
        }
    }

    #[test]
    fn binary_and_real_differ_by_log_c() {
        for &u in &[-3.0, 0.0, 0.7, 40.0] {
            for &y in &[0.0, 1.0] {
                let b = pair_log_density_scalar(y, u, LabelKind::Binary);
                let r = pair_log_density_scalar(y, u, LabelKind::Real);
                assert!((b - (r + log_norm_c_scalar(u))).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn monotonic_in_distance() {
        let p = params(5.0, 1.0, LabelKind::Binary);
        let mut prev_y1 = f64::INFINITY;
        let mut prev_y0 = f64::NEG_INFINITY;
        for step in 0..40 {
            let d2 = step as f64 * 0.1;
            let u = p.eta1 * (p.eta2 - d2);
            let l1 = pair_log_density_scalar(1.0, u, LabelKind::Binary);
            let l0 = pair_log_density_scalar(0.0, u, LabelKind::Binary);
            assert!(l1 <= prev_y1 + 1e-12);
            assert!(l0 >= prev_y0 - 1e-12);
            prev_y1 = l1;
            prev_y0 = l0;
        }
    }

    #[test]
    fn gradient_check_all_regimes() {
        for kind in [LabelKind::Binary, LabelKind::Real] {
            let p = params(1e3, 2.0, kind);
            let report = pair_term_gradient_check(&p, 7).unwrap();
            assert!(
                report.max_rel_err < 1e-3,
                "{:?}: {}",
                kind,
                report.max_rel_err
            );
        }
    }

    #[test]
    fn gradient_sign_pulls_and_pushes() {
        // y=1 with far-apart codes: gradient on z_i points toward z_j.
        let p = params(1.0, 2.0, LabelKind::Binary);
        let check = |y: f64, dist: f64, expect_pull: bool| {
            let mut tape = Tape::new();
            let zi = tape.param(Tensor::matrix(1, 2, vec![0.0, 0.0]).unwrap());
            let zj = tape.param(Tensor::matrix(1, 2, vec![dist, 0.0]).unwrap());
            let ll = pair_log_likelihood(&mut tape, &[y], zi, zj, &p).unwrap();
            let root = tape.sum(ll).unwrap();
            let g = tape.backward(root).unwrap().get(zi);
            // ascent direction on log-likelihood; toward z_j means positive x-component
            let toward = g.data()[0];
            if expect_pull {
                assert!(toward > 0.0, "expected pull, got {}", toward);
            } else {
                assert!(toward < 0.0, "expected push, got {}", toward);
            }
        };
        check(1.0, 7.3, true); // u = -51, similar label, far apart
        check(0.0, 0.1, false); // u near +2, dissimilar label, close together
    }

    #[test]
    fn binary_kind_rejects_fractional_labels() {
        let p = params(1.0, 1.0, LabelKind::Binary);
        let mut tape = Tape::new();
        let zi = tape.param(Tensor::matrix(1, 1, vec![0.0]).unwrap());
        let zj = tape.param(Tensor::matrix(1, 1, vec![1.0]).unwrap());
        assert!(pair_log_likelihood(&mut tape, &[0.5], zi, zj, &p).is_err());
    }

    #[test]
    fn pair_batch_validation() {
        assert!(PairBatch::new(vec![0], vec![0], vec![1.0]).is_err());
        assert!(PairBatch::new(vec![0], vec![1], vec![1.5]).is_err());
        assert!(PairBatch::new(vec![0], vec![1], vec![0.5]).is_ok());
    }
}
