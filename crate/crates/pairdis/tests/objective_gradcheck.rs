use pairdis::model::{objective, ModelConfig, StepBatch, VaeModel};
use pairdis::similarity::{LabelKind, SimilarityParams};
use pairdis::tape::Tape;
use pairdis::Tensor;

fn toy() -> (VaeModel, Tensor, Tensor) {
    let cfg = ModelConfig {
        d_u: 1,
        d_v: 2,
        hidden_sizes: vec![8],
        beta: 2.0,
        sim: SimilarityParams::new(10.0, 1.0, LabelKind::Binary).unwrap(),
        input_shape: (2, 2),
    };
    let m = VaeModel::new(cfg, 7).unwrap();
    let x = Tensor::new(
        vec![4, 4],
        vec![
            0.95, 0.05, 0.95, 0.05, 0.05, 0.95, 0.05, 0.95, 0.95, 0.95, 0.05, 0.05, 0.05, 0.05,
            0.95, 0.95,
        ],
    )
    .unwrap();
    let noise = Tensor::new(
        vec![4, 3],
        vec![0.3, -0.2, 0.5, -1.0, 0.7, 0.1, 0.4, -0.6, 0.9, -0.3, 0.2, -0.8],
    )
    .unwrap();
    (m, x, noise)
}

fn loss_at(m: &VaeModel, x: &Tensor, noise: &Tensor) -> f64 {
    let mut tape = Tape::new();
    let b = m.bind(&mut tape, true);
    let batch = StepBatch { x, noise, pair_y: &[1.0, 0.0], pair_i: &[0, 1], pair_j: &[2, 3] };
    let out = objective(&mut tape, m, &b, &batch).unwrap();
    tape.value(out.loss).item()
}

#[test]
fn full_objective_fd() {
    let (mut m, x, noise) = toy();
    // analytic grads
    let mut tape = Tape::new();
    let b = m.bind(&mut tape, true);
    let batch = StepBatch {
        x: &x,
        noise: &noise,
        pair_y: &[1.0, 0.0],
        pair_i: &[0, 1],
        pair_j: &[2, 3],
    };
    let out = objective(&mut tape, &m, &b, &batch).unwrap();
    let grads = tape.backward(out.loss).unwrap();
    let gt: Vec<(String, Tensor)> = b
        .vars()
        .iter()
        .zip(m.params().iter())
        .map(|(&v, (name, _))| (name.clone(), grads.get(v)))
        .collect();

    let h = 1e-5;
    let mut worst = (0.0f64, String::new(), 0usize);
    for pidx in 0..m.params().len() {
        let name = m.params()[pidx].0.clone();
        let len = m.params()[pidx].1.data().len();
        for k in (0..len).step_by(7) {
            let orig = m.params()[pidx].1.data()[k];
            m.params_mut()[pidx].1.data_mut()[k] = orig + h;
            let lp = loss_at(&m, &x, &noise);
            m.params_mut()[pidx].1.data_mut()[k] = orig - h;
            let lm = loss_at(&m, &x, &noise);
            m.params_mut()[pidx].1.data_mut()[k] = orig;
            let fd = (lp - lm) / (2.0 * h);
            let g = gt[pidx].1.data()[k];
            let rel = (fd - g).abs() / fd.abs().max(g.abs()).max(1e-6);
            if rel > worst.0 {
                worst = (rel, name.clone(), k);
            }
        }
    }
    println!("worst rel err {:.3e} at {} [{}]", worst.0, worst.1, worst.2);
    assert!(worst.0 < 1e-3, "{:?}", worst);
}
