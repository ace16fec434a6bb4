use fractalssm::csr::{build_skip_graph, SkipGraph};
use fractalssm::curve::{generate_order, CurveKind, GridShape};
use fractalssm::rng;
use fractalssm::ssm::{
    bdpp_forward, bdpp_passes, causal_conv, conv_kernel, discretize, edge_visit_count, oracle_unrolled, recurrence_forward,
    BdppOptions, DiscreteParams, SsmError,
};
use fractalssm::verify::{random_instance, scaled_max_err};
use proptest::prelude::*;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

fn normals(r: &mut rng::Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| StandardNormal.sample(r)).collect()
}

#[test]
fn bdpp_matches_unrolled_oracle_on_250_instances() {
    let mut worst = 0f64;
    let mut skip_counts = [0usize; 7];
    for seed in 0..250 {
        let (p, x, g) = random_instance(1000 + seed, 64);
        skip_counts[g.skips().len()] += 1;
        for dedup_root in [false, true] {
            let o = BdppOptions { dedup_root };
            let err = scaled_max_err(
                &bdpp_forward(&p, &x, &g, o).unwrap(),
                &oracle_unrolled(&p, &x, &g, o).unwrap(),
            );
            worst = worst.max(err);
        }
    }
    assert!(worst <= 1e-10, "worst {worst:e}");
    assert!(skip_counts.iter().all(|&c| c > 0), "{skip_counts:?}");
}

#[test]
fn forward_states_on_a_path_are_the_recurrence() {
    let mut r = rng::seeded(3);
    let p = DiscreteParams::random(&mut r, 40, 2, 3);
    let x = normals(&mut r, 80);
    let st = bdpp_passes(&p, &x, &SkipGraph::path(40)).unwrap();
    let rec = recurrence_forward(&p, &x).unwrap();
    for t in 0..40 {
        for c in 0..2 {
            let k = (t * 2 + c) * 3;
            let y: f64 = (0..3).map(|s| p.c[k + s] * st.f[k + s]).sum();
            assert!((y - rec[t * 2 + c]).abs() <= 1e-12 * rec[t * 2 + c].abs().max(1.0));
        }
    }
}

#[test]
fn recurrence_equals_convolution_for_constant_parameters() {
    let mut r = rng::seeded(8);
    for n in [1usize, 2, 17, 64] {
        let a: Vec<f64> = (0..6).map(|_| r.random_range(0.1..0.99)).collect();
        let b = normals(&mut r, 6);
        let c = normals(&mut r, 6);
        let p = DiscreteParams::constant(n, 3, 2, &a, &b, &c).unwrap();
        let x = normals(&mut r, 3 * n);
        let k = conv_kernel(&p, n).unwrap();
        let y = causal_conv(&k, &x, 3).unwrap();
        assert!(scaled_max_err(&y, &recurrence_forward(&p, &x).unwrap()) < 1e-12);
    }
    let p = DiscreteParams::random(&mut r, 4, 1, 1);
    assert_eq!(conv_kernel(&p, 4), Err(SsmError::NonConstantParams));
}

#[test]
fn long_sequences_stay_finite() {
    let order = generate_order(CurveKind::Hilbert, GridShape::square(64).unwrap()).unwrap();
    let g = build_skip_graph(&order);
    let mut r = rng::seeded(5);
    for hi in [0.95, 0.999] {
        let n = 4096;
        let mut p = DiscreteParams::random(&mut r, n, 2, 2);
        p.a_bar.iter_mut().for_each(|a| *a = r.random_range(0.5..hi));
        let x = normals(&mut r, n * 2);
        let y = bdpp_forward(&p, &x, &g, BdppOptions::default()).unwrap();
        assert!(y.iter().all(|v| v.is_finite()));
        let rec = recurrence_forward(&p, &x).unwrap();
        assert!(rec.iter().all(|v| v.is_finite()));
    }
}

#[test]
fn edge_visits_are_path_plus_log2() {
    for side in [8usize, 16, 32, 64] {
        let n = side * side;
        let order = generate_order(CurveKind::Hilbert, GridShape::square(side).unwrap()).unwrap();
        let g = build_skip_graph(&order);
        let want = n - 1 + n.trailing_zeros() as usize;
        assert_eq!(edge_visit_count(&g), want);
        let p = DiscreteParams::random(&mut rng::seeded(side as u64), n, 1, 2);
        let st = bdpp_passes(&p, &vec![1.0; n], &g).unwrap();
        assert_eq!((st.forward_visits, st.backward_visits), (want, want));
    }
}

#[test]
fn shape_and_graph_errors() {
    let p = DiscreteParams::random(&mut rng::seeded(1), 5, 1, 2);
    assert!(matches!(
        bdpp_forward(&p, &[0.0; 4], &SkipGraph::path(5), BdppOptions::default()),
        Err(SsmError::ShapeMismatch { what: "x", .. })
    ));
    assert_eq!(
        bdpp_forward(&p, &[0.0; 5], &SkipGraph::path(6), BdppOptions::default()),
        Err(SsmError::GraphMismatch { graph: 6, n: 5 })
    );
}

#[test]
fn zero_order_hold_closed_forms() {
    let (a, b) = discretize(-1.0, 1.0, 2f64.ln()).unwrap();
    assert!((a - 0.5).abs() <= 1e-14 && (b - 0.5).abs() <= 1e-14);
    assert_eq!(discretize(-3.0, 2.0, 0.0).unwrap(), (1.0, 0.0));
    let (a, b) = discretize(-2.0, 1.5, 1e-9).unwrap();
    assert!((a - 1.0).abs() <= 1e-8 && b.abs() <= 1e-8);
    for tiny in [1e-7, -1e-9, 1e-12, 0.0] {
        let (a, b) = discretize(tiny, 2.0, 0.5).unwrap();
        assert!((a - 1.0).abs() <= 1e-6);
        assert!((b - 1.0).abs() <= 1e-6, "a = {tiny}: {b}");
    }
    assert!((discretize(1e-9, 2.0, 0.5).unwrap().1 - 1.0).abs() <= 1e-8);
    assert_eq!(discretize(-1.0, 1.0, -0.1), Err(SsmError::NonPositiveDelta(-0.1)));
}

proptest! {
    #[test]
    fn bdpp_is_linear_in_the_input(seed in 0u64..10_000, alpha in -3.0f64..3.0, beta in -3.0f64..3.0) {
        let (p, x, g) = random_instance(seed, 24);
        let z = normals(&mut rng::seeded(seed ^ 0xabc), x.len());
        let o = BdppOptions::default();
        let mixed: Vec<f64> = x.iter().zip(&z).map(|(a, b)| alpha * a + beta * b).collect();
        let lhs = bdpp_forward(&p, &mixed, &g, o).unwrap();
        let yx = bdpp_forward(&p, &x, &g, o).unwrap();
        let yz = bdpp_forward(&p, &z, &g, o).unwrap();
        let rhs: Vec<f64> = yx.iter().zip(&yz).map(|(a, b)| alpha * a + beta * b).collect();
        prop_assert!(scaled_max_err(&lhs, &rhs) < 1e-10);
    }

    #[test]
    fn root_dedup_only_changes_the_root(seed in 0u64..10_000) {
        let (p, x, g) = random_instance(seed, 24);
        let full = bdpp_forward(&p, &x, &g, BdppOptions { dedup_root: false }).unwrap();
        let dedup = bdpp_forward(&p, &x, &g, BdppOptions { dedup_root: true }).unwrap();
        let root = (p.n - 1) * p.channels;
        prop_assert_eq!(&full[..root], &dedup[..root]);
    }
}
