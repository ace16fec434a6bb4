use fractalssm::csr::SkipGraph;
use fractalssm::grad::{
    bdpp_backward, discretize_backward, finite_difference_check, finite_difference_errors, recurrence_backward, rel_err, FD_MAX_N,
};
use fractalssm::rng;
use fractalssm::ssm::{bdpp_forward, recurrence_forward, BdppOptions, DiscreteParams, SsmError, SsmParams};
use fractalssm::verify::random_instance;
use proptest::prelude::*;
use rand_distr::{Distribution, StandardNormal};

fn normals(r: &mut rng::Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| StandardNormal.sample(r)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[test]
fn bdpp_gradients_match_differences_on_120_instances() {
    let mut worst = 0f64;
    let mut seen_skips = [false; 7];
    for seed in 0..120 {
        let (p, x, g) = random_instance(5000 + seed, FD_MAX_N);
        seen_skips[g.skips().len()] = true;
        let report = finite_difference_check(&p, &x, &g, seed).unwrap();
        assert_eq!(report.n, p.n);
        worst = worst.max(report.max_rel_err);
    }
    assert!(worst < 1e-6, "worst {worst:e}");
    assert!(seen_skips.iter().all(|&s| s));
}

#[test]
fn root_dedup_gradients_match_differences() {
    for seed in 0..20 {
        let (p, x, g) = random_instance(seed, 20);
        let up = normals(&mut rng::seeded(seed), x.len());
        let e = finite_difference_errors(&p, &x, &g, &up, BdppOptions { dedup_root: true }).unwrap();
        assert!(e.max() < 1e-6, "seed {seed}: {e:?}");
    }
}

#[test]
fn input_gradient_is_the_adjoint() {
    let (p, x, g) = random_instance(77, 30);
    let mut r = rng::seeded(78);
    let up = normals(&mut r, x.len());
    let v = normals(&mut r, x.len());
    let o = BdppOptions::default();
    let grad = bdpp_backward(&p, &x, &g, &up, o).unwrap();
    // y is linear in x, so <g, J v> = <J^T g, v> exactly up to rounding
    let jv = bdpp_forward(&p, &v, &g, o).unwrap();
    assert!(rel_err(dot(&up, &jv), dot(&grad.d_x, &v)) < 1e-12);
}

#[test]
fn recurrence_gradients_match_differences() {
    let mut r = rng::seeded(12);
    let p = DiscreteParams::random(&mut r, 16, 2, 2);
    let x = normals(&mut r, 32);
    let up = normals(&mut r, 32);
    let grad = recurrence_backward(&p, &x, &up).unwrap();
    let loss = |p: &DiscreteParams| dot(&up, &recurrence_forward(p, &x).unwrap());
    let h = 1e-6;
    let mut q = p.clone();
    for k in 0..p.a_bar.len() {
        q.a_bar[k] += h;
        let lu = loss(&q);
        q.a_bar[k] -= 2.0 * h;
        let ld = loss(&q);
        q.a_bar[k] = p.a_bar[k];
        let num = (lu - ld) / (2.0 * h);
        assert!((num - grad.d_a_bar[k]).abs() <= 1e-6 * num.abs().max(1.0), "lane {k}");
    }
    let v = normals(&mut r, 32);
    assert!(rel_err(dot(&up, &recurrence_forward(&p, &v).unwrap()), dot(&grad.d_x, &v)) < 1e-12);
}

#[test]
fn raw_parameter_gradients_chain_through_the_hold() {
    let mut r = rng::seeded(31);
    let p = SsmParams::random(&mut r, 10, 2, 3);
    let x = normals(&mut r, 20);
    let up = normals(&mut r, 20);
    let g = SkipGraph::with_skips(10, &[(0, 6), (3, 9)]).unwrap();
    let o = BdppOptions::default();
    let loss = |p: &SsmParams| dot(&up, &bdpp_forward(&p.discretize().unwrap(), &x, &g, o).unwrap());
    let bundle = bdpp_backward(&p.discretize().unwrap(), &x, &g, &up, o).unwrap();
    let raw = discretize_backward(&p, &bundle).unwrap();
    let check = |field: fn(&mut SsmParams) -> &mut Vec<f64>, analytic: &[f64]| {
        let mut q = p.clone();
        for (k, &a) in analytic.iter().enumerate() {
            let t = field(&mut q)[k];
            let h = 1e-6 * t.abs().max(1.0);
            field(&mut q)[k] = t + h;
            let lu = loss(&q);
            field(&mut q)[k] = t - h;
            let ld = loss(&q);
            field(&mut q)[k] = t;
            let num = (lu - ld) / (2.0 * h);
            assert!((num - a).abs() <= 1e-5 * num.abs().max(1.0), "index {k}: {a} vs {num}");
        }
    };
    check(|p| &mut p.a, &raw.d_a);
    check(|p| &mut p.b, &raw.d_b);
    check(|p| &mut p.c, &raw.d_c);
    check(|p| &mut p.delta, &raw.d_delta);
}

#[test]
fn report_json_and_limits() {
    let (p, x, g) = random_instance(3, 12);
    let json = finite_difference_check(&p, &x, &g, 3).unwrap().to_json();
    for key in ["seed", "n", "skips", "groups", "max_rel_err"] {
        assert!(json.get(key).is_some(), "{key}");
    }
    for key in ["x", "A_bar", "B_bar", "C"] {
        assert!(json["groups"].get(key).is_some(), "{key}");
    }
    let big = DiscreteParams::zeros(FD_MAX_N + 1, 1, 1);
    assert_eq!(
        finite_difference_check(&big, &vec![0.0; FD_MAX_N + 1], &SkipGraph::path(FD_MAX_N + 1), 0),
        Err(SsmError::TooLarge {
            n: FD_MAX_N + 1,
            max: FD_MAX_N
        })
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn gradients_are_finite_and_match(seed in 0u64..100_000) {
        let (p, x, g) = random_instance(seed, 16);
        let r = finite_difference_check(&p, &x, &g, seed).unwrap();
        prop_assert!(r.max_rel_err < 1e-6, "seed {}: {:e}", seed, r.max_rel_err);
    }
}
