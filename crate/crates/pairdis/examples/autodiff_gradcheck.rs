//! Finite-difference validation of the tape gradients, both for a small
//! encoder/decoder objective and for the pairwise similarity term at
//! logits spanning the near-zero and saturated regimes.
//!
//!     cargo run --example autodiff_gradcheck

use pairdis::similarity::{pair_term_gradient_check, LabelKind, SimilarityParams};
use pairdis::tape::Tape;
use pairdis::Tensor;

fn main() -> pairdis::Result<()> {
    // 1. A hand-built scalar graph: f(w) = mean(softplus(x w)) on a 3x2 x.
    let x = Tensor::new(vec![3, 2], vec![0.5, -1.0, 2.0, 0.25, -0.75, 1.5])?;
    let w0 = Tensor::new(vec![2, 1], vec![0.3, -0.8])?;

    let f = |w: &Tensor| -> pairdis::Result<(f64, Option<Tensor>)> {
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let wv = tape.param(w.clone());
        let h = tape.matmul(xv, wv)?;
        let s = tape.softplus(h)?;
        let out = tape.mean(s)?;
        let val = tape.value(out).item();
        let grads = tape.backward(out)?;
        Ok((val, Some(grads.get(wv))))
    };

    let (_, grad) = f(&w0)?;
    let grad = grad.unwrap();
    let h = 1e-6;
    let mut max_rel = 0.0f64;
    for k in 0..2 {
        let mut wp = w0.clone();
        wp.data_mut()[k] += h;
        let mut wm = w0.clone();
        wm.data_mut()[k] -= h;
        let fd = (f(&wp)?.0 - f(&wm)?.0) / (2.0 * h);
        let g = grad.data()[k];
        let rel = (fd - g).abs() / g.abs().max(1e-12);
        max_rel = max_rel.max(rel);
        println!("dw[{}]: analytic {:+.8}  finite-diff {:+.8}  rel err {:.2e}", k, g, fd, rel);
    }
    assert!(max_rel < 1e-6, "softplus-chain gradient check failed");

    // 2. The similarity log-density gradient w.r.t. the latent codes,
    //    exercised at u ~ 0, moderate, and saturated logits.
    for kind in [LabelKind::Binary, LabelKind::Real] {
        let p = SimilarityParams::new(1e3, 2.0, kind)?;
        let report = pair_term_gradient_check(&p, 7)?;
        println!(
            "{} pair term: {} points, max rel err {:.3e}",
            kind, report.points_checked, report.max_rel_err
        );
        assert!(report.max_rel_err < 1e-3);
    }
    println!("all gradient checks passed");
    Ok(())
}
