use greybox_nnet::net::forward;
use greybox_nnet::{design_grid, gradient_check, loss_and_gradient, Activation, Arch, NetParams, NetSpec};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn gradient_sweep_over_design_matrix() {
    // compact geometries so every grid cell stays cheap
    let cells: Vec<NetSpec> = [
        design_grid(Arch::Mlp, 1, 12, 3),
        design_grid(Arch::Cnn, 1, 72, 3),
        design_grid(Arch::Rnn, 2, 4, 2),
        design_grid(Arch::Lstm, 2, 4, 2),
    ]
    .concat();
    assert_eq!(cells.len(), 36 + 216 + 36 + 36);
    for (i, spec) in cells.iter().enumerate() {
        let r = gradient_check(spec, i as u64, 1e-5, 40).unwrap();
        assert!(r.max_rel_err < 1e-4, "{}: {:?}", spec.label(), r);
        assert!(r.non_smooth * 10 <= r.checked, "{}: {:?}", spec.label(), r);
    }
}

#[test]
fn dropout_expectation_matches_eval_output() {
    let spec = NetSpec::new(Arch::Mlp, 1, 50, Activation::Gelu).with_io(1, 6, 2).with_dropout(0.1);
    let p = NetParams::init(&spec, 2);
    let x = [0.4, -0.3, 0.9, 0.1, -0.7, 0.5];
    let eval = forward(&spec, &p, &x).unwrap();
    // with a zero target the loss is the squared output, so the mean output is
    // recovered from the gradient of the output bias: dL/db = 2 y / n_out
    let zero = [0.0, 0.0];
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 20_000;
    let mut mean = [0.0; 2];
    let b_off = spec.layout().block("out.b_xi").unwrap().offset;
    for _ in 0..n {
        let (_, g) = loss_and_gradient(&spec, &p, &[&x], &[&zero], Some(&mut rng)).unwrap();
        mean[0] += g[b_off] / n as f64;
        mean[1] += g[b_off + 1] / n as f64;
    }
    for k in 0..2 {
        let y = mean[k]; // 2 y / 2
        assert!((y - eval[k]).abs() <= 0.02 * eval[k].abs().max(0.05), "{y} vs {}", eval[k]);
    }
    // eval mode never drops units
    assert_eq!(forward(&spec, &p, &x).unwrap(), eval);
}

fn arb_spec() -> impl Strategy<Value = NetSpec> {
    (0usize..4, 1usize..3, 2usize..6, 0usize..3, 1usize..3, 2usize..6, 1usize..4).prop_map(|(a, l, z, act, psi, kpsi, kxi)| {
        let arch = Arch::ALL[a];
        let act = Activation::ALL[act];
        let spec = NetSpec::new(arch, l, z, act).with_io(psi, kpsi + 6, kxi);
        spec.with_conv(2, 2, if kpsi % 2 == 0 { 2 } else { 0 })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn random_specs_pass_gradient_check(spec in arb_spec(), seed in 0u64..1000) {
        let r = gradient_check(&spec, seed, 1e-5, usize::MAX).unwrap();
        prop_assert!(r.max_rel_err < 1e-4, "{} {:?}", spec.label(), r);
    }

    #[test]
    fn param_count_is_a_function_of_the_spec(spec in arb_spec(), s1 in 0u64..50, s2 in 0u64..50) {
        prop_assert_eq!(NetParams::init(&spec, s1).len(), NetParams::init(&spec, s2).len());
        prop_assert_eq!(spec.param_count(), spec.clone().param_count());
    }
}
