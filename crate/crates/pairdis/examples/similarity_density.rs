//! The pairwise similarity likelihood in isolation: the similarity
//! probability g(u) = sigma(u), the real-label normalizer C(u), and a
//! numerical check that the real-valued density integrates to one.
//!
//!     cargo run --example similarity_density

use pairdis::similarity::{norm_constant, pair_log_density_scalar, LabelKind};

/// Simpson's rule over y in [0,1].
fn integrate_density(u: f64, panels: usize) -> f64 {
    let h = 1.0 / panels as f64;
    let f = |y: f64| pair_log_density_scalar(y, u, LabelKind::Real).exp();
    let mut acc = f(0.0) + f(1.0);
    for k in 1..panels {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(k as f64 * h);
    }
    acc * h / 3.0
}

fn main() -> pairdis::Result<()> {
    println!("{:>10}  {:>12}  {:>12}  {:>14}", "u", "g(u)", "C(u)", "integral p(y)");
    for &u in &[-2000.0f64, -100.0, -10.0, -1.0, -0.1, 0.0, 0.1, 1.0, 10.0, 100.0, 2000.0] {
        let g = 1.0 / (1.0 + (-u).exp());
        let c = norm_constant(u)?;
        // step fine enough to resolve the e^{uy} boundary layer
        let panels = 4096usize.max(2 * (64.0 * u.abs()) as usize);
        let total = integrate_density(u, panels + panels % 2);
        println!("{:>10}  {:>12.6}  {:>12.6}  {:>14.9}", u, g, c, total);
        assert!((total - 1.0).abs() < 1e-6, "density does not normalize at u = {}", u);
    }

    // C is even and continuous through the removable singularity at 0.
    let c0 = norm_constant(0.0)?;
    assert_eq!(c0, 0.5);
    assert!((norm_constant(1e-8)? - c0).abs() < 1e-12);
    assert!((norm_constant(3.7)? - norm_constant(-3.7)?).abs() < 1e-15);
    println!("C(0) = {} exactly; C is even and continuous at 0", c0);

    // Binary labels need no normalizer: the two outcomes already sum to 1.
    for &u in &[-5.0, 0.0, 2.5] {
        let p0 = pair_log_density_scalar(0.0, u, LabelKind::Binary).exp();
        let p1 = pair_log_density_scalar(1.0, u, LabelKind::Binary).exp();
        assert!((p0 + p1 - 1.0).abs() < 1e-12);
    }
    println!("binary outcome probabilities sum to 1");
    Ok(())
}
