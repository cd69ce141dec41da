use proptest::prelude::*;
use semrel::nn::{backward, forward, mean_cross_entropy, Activation, DenseLayer, Matrix};
use semrel::seed::rng_from_seed;

fn network(dims: &[usize], seed: u64) -> Vec<DenseLayer> {
    let mut rng = rng_from_seed(seed);
    (0..dims.len() - 1)
        .map(|l| {
            let act = if l + 2 == dims.len() { Activation::Softmax } else { Activation::Sigmoid };
            DenseLayer::glorot(dims[l], dims[l + 1], act, &mut rng).unwrap()
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn backward_matches_finite_differences(
        hidden in prop::collection::vec(1usize..8, 0..3),
        input in 1usize..8,
        classes in 2usize..5,
        batch in 1usize..6,
        seed in any::<u64>(),
        xs in prop::collection::vec(-2.0f64..2.0, 48),
        golds in prop::collection::vec(0usize..100, 6),
    ) {
        let mut dims = vec![input];
        dims.extend(&hidden);
        dims.push(classes);
        let layers = network(&dims, seed);
        let x = Matrix::from_vec(batch, input, (0..batch * input).map(|i| xs[i % xs.len()]).collect()).unwrap();
        let gold: Vec<usize> = golds[..batch].iter().map(|g| g % classes).collect();
        let grads = backward(&layers, &forward(&layers, &x).unwrap(), &gold).unwrap();
        let loss = |ls: &[DenseLayer]| mean_cross_entropy(forward(ls, &x).unwrap().output(), &gold).unwrap();
        let h = 1e-5;
        for l in 0..layers.len() {
            for i in 0..layers[l].biases.len() {
                let mut p = layers.clone();
                p[l].biases[i] += h;
                let up = loss(&p);
                p[l].biases[i] -= 2.0 * h;
                let numeric = (up - loss(&p)) / (2.0 * h);
                prop_assert!((numeric - grads[l].biases[i]).abs() < 1e-6);
            }
            for i in 0..layers[l].weights.as_slice().len() {
                let mut p = layers.clone();
                p[l].weights.as_mut_slice()[i] += h;
                let up = loss(&p);
                p[l].weights.as_mut_slice()[i] -= 2.0 * h;
                let numeric = (up - loss(&p)) / (2.0 * h);
                prop_assert!((numeric - grads[l].weights.as_slice()[i]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn softmax_rows_are_distributions(seed in any::<u64>(), rows in 1usize..10) {
        let layers = network(&[5, 6, 3], seed);
        let x = Matrix::from_vec(rows, 5, (0..rows * 5).map(|i| (i as f64 * 1.7).sin() * 30.0).collect()).unwrap();
        let out = forward(&layers, &x).unwrap();
        for r in out.output().iter_rows() {
            prop_assert!(r.iter().all(|&p| (0.0..=1.0).contains(&p)));
            prop_assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
