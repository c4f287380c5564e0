use cafbp_core::bp_net::{Network, NetworkShape, TrainingPair};
use proptest::collection::vec;
use proptest::prelude::*;

const XOR_EPOCHS: usize = 2048;

fn xor_pairs() -> Vec<TrainingPair> {
    [([0.0, 0.0], 0.0), ([0.0, 1.0], 1.0), ([1.0, 0.0], 1.0), ([1.0, 1.0], 0.0)]
        .into_iter()
        .map(|(x, d)| TrainingPair::new(x.to_vec(), vec![d]))
        .collect()
}

#[test]
fn xor_converges_at_frozen_epoch() {
    let mut net = Network::random(NetworkShape::new(2, 4, 1).unwrap(), 0.5, 42);
    let history = net.train(&xor_pairs(), 20_000, 0.01).unwrap();
    assert_eq!(history.len(), XOR_EPOCHS);
    assert!(*history.last().unwrap() < 0.01);
    for (p, want) in xor_pairs().iter().zip([false, true, true, false]) {
        assert_eq!(net.gate(&p.input, 0.5).unwrap(), want);
    }
}

#[test]
fn training_is_bit_identical_across_runs() {
    let run = || {
        let mut net = Network::random(NetworkShape::new(2, 4, 1).unwrap(), 0.5, 42);
        let h = net.train(&xor_pairs(), 300, 0.0).unwrap();
        (net, h)
    };
    let (a, ha) = run();
    let (b, hb) = run();
    assert_eq!(a, b);
    assert_eq!(ha, hb);
    let c = Network::random(NetworkShape::new(2, 4, 1).unwrap(), 0.5, 43);
    assert_ne!(Network::random(NetworkShape::new(2, 4, 1).unwrap(), 0.5, 42), c);
}

fn half_sq_error(net: &Network, x: &[f64], d: &[f64]) -> f64 {
    net.pattern_error(x, d).unwrap()
}

fn close(analytic: f64, numeric: f64) -> bool {
    if analytic.abs() < 1e-8 && numeric.abs() < 1e-8 {
        return true;
    }
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()) < 1e-4
}

fn shape_and_data() -> impl Strategy<Value = (NetworkShape, u64, Vec<f64>, Vec<f64>)> {
    (1usize..=5, 1usize..=5, 1usize..=5, any::<u64>()).prop_flat_map(|(n, l, m, seed)| {
        (
            Just(NetworkShape::new(n, l, m).unwrap()),
            Just(seed),
            vec(0.0f64..1.0, n),
            vec(0.0f64..1.0, m),
        )
    })
}

proptest! {
    #[test]
    fn weds_match_negative_finite_difference((shape, seed, x, d) in shape_and_data()) {
        let net = Network::random(shape, 0.1, seed);
        let t = net.forward(&x).unwrap();
        let g = net.backward(&t, &d).unwrap();
        let h = 1e-5;
        let numeric = |perturb: &dyn Fn(&mut Network, f64)| {
            let mut plus = net.clone();
            perturb(&mut plus, h);
            let mut minus = net.clone();
            perturb(&mut minus, -h);
            -(half_sq_error(&plus, &x, &d) - half_sq_error(&minus, &x, &d)) / (2.0 * h)
        };
        for k in 0..shape.outputs {
            for j in 0..shape.hidden {
                let fd = numeric(&|n, e| n.w_output.set(k, j, n.w_output.get(k, j) + e));
                prop_assert!(close(g.wed_out.get(k, j), fd), "out {k},{j}: {} vs {fd}", g.wed_out.get(k, j));
            }
            let fd = numeric(&|n, e| n.bias_output[k] += e);
            prop_assert!(close(g.delta_o[k], fd));
        }
        for j in 0..shape.hidden {
            for i in 0..shape.inputs {
                let fd = numeric(&|n, e| n.w_hidden.set(j, i, n.w_hidden.get(j, i) + e));
                prop_assert!(close(g.wed_hid.get(j, i), fd), "hid {j},{i}: {} vs {fd}", g.wed_hid.get(j, i));
            }
            let fd = numeric(&|n, e| n.bias_hidden[j] += e);
            prop_assert!(close(g.delta_h[j], fd));
        }
    }

    #[test]
    fn training_keeps_activations_open_and_finite(
        seed in any::<u64>(),
        eta in 0.01f64..=1.0,
        raw in vec((vec(0.0f64..=1.0, 3), 0.0f64..=1.0), 1..6),
    ) {
        let pairs: Vec<_> = raw.into_iter().map(|(x, d)| TrainingPair::new(x, vec![d])).collect();
        let mut net = Network::random(NetworkShape::new(3, 4, 1).unwrap(), eta, seed);
        let history = net.train(&pairs, 50, 0.0).unwrap();
        prop_assert!(net.all_finite());
        prop_assert!(history.iter().all(|e| e.is_finite()));
        for p in &pairs {
            let t = net.forward(&p.input).unwrap();
            prop_assert!(t.oh.iter().chain(&t.oo).all(|&v| v > 0.0 && v < 1.0));
        }
    }
}
