use proptest::prelude::*;

use trontide::harness::config::ExperimentConfig;
use trontide::mathcore::linalg::{eig_extremes_symmetric, Matrix, Vector};
use trontide::mathcore::log_gamma;
use trontide::model::{NetSpec, SensingFamily};
use trontide::theory::{self, RecursionParams};

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(-2.0f64..2.0, rows * cols).prop_map(move |d| Matrix::from_row_major(rows, cols, d).unwrap())
}

fn vector(n: usize) -> impl Strategy<Value = Vector> {
    prop::collection::vec(-3.0f64..3.0, n).prop_map(Vector::from_vec)
}

/// `k` random `r×n` sensing matrices with a random leak.
fn net(k: usize, r: usize, n: usize) -> impl Strategy<Value = NetSpec> {
    (prop::collection::vec(matrix(r, n), k), 0.0f64..=1.0)
        .prop_map(|(ms, a)| NetSpec::new(a, SensingFamily::new(ms).unwrap()).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn pointwise_bound_holds(
        (net, w1, w2, x) in prop::sample::select(vec![1usize, 2, 4])
            .prop_flat_map(|k| (net(k, 3, 4), vector(3), vector(3), vector(4)))
    ) {
        let (lhs, rhs) = net.pointwise_sq_diff_bound(&w1, &w2, &x).unwrap();
        prop_assert!(lhs <= rhs + 1e-9 * rhs.max(1.0), "lhs={lhs} rhs={rhs}");
    }

    #[test]
    fn forward_is_positively_homogeneous_in_x(net in net(2, 3, 3), w in vector(3), x in vector(3), c in 0.01f64..100.0) {
        let a = net.forward(&w, &x.scale(c)).unwrap();
        let b = c * net.forward(&w, &x).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "{a} vs {b}");
    }

    #[test]
    fn unit_leak_is_linear(ms in prop::collection::vec(matrix(2, 3), 3), w in vector(2), x in vector(3)) {
        let family = SensingFamily::new(ms).unwrap();
        let mean = family.mean().clone();
        let net = NetSpec::new(1.0, family).unwrap();
        let lin = w.dot(&mean.matvec(&x).unwrap()).unwrap();
        let f = net.forward(&w, &x).unwrap();
        prop_assert!((f - lin).abs() <= 1e-12 * lin.abs().max(1.0), "{f} vs {lin}");
    }

    #[test]
    fn symmetric_family_mean_is_center(m in matrix(2, 3), c in matrix(2, 3), h in 1usize..4) {
        let fam = SensingFamily::build_symmetric(&m, &c, h).unwrap();
        prop_assert!(fam.mean().max_abs_diff(&m).unwrap() <= 1e-12);
    }

    #[test]
    fn quadratic_form_bounded_by_symmetric_part(x in matrix(4, 4), v in vector(4)) {
        let (lo, _) = eig_extremes_symmetric(&x.symmetric_part().unwrap()).unwrap();
        let q = v.dot(&x.matvec(&v).unwrap()).unwrap();
        prop_assert!(q >= lo * v.norm_sq() - 1e-9);
    }

    #[test]
    fn gamma_recurrence(x in 0.5f64..100.0) {
        let lhs = log_gamma(x + 1.0).unwrap();
        let rhs = x.ln() + log_gamma(x).unwrap();
        prop_assert!(((lhs - rhs).exp() - 1.0).abs() <= 1e-11);
    }

    #[test]
    fn theta_star_round_trip(eps in 1e-3f64..1.0, delta in 1e-3f64..1.0, c in 1e-3f64..100.0) {
        let ts = theory::theta_star(eps, delta, c).unwrap();
        let back = (ts * ts / (delta * c)).sqrt();
        prop_assert!((back - eps).abs() <= 1e-12 * eps.max(1.0));
    }

    #[test]
    fn case2_horizon_is_minimal(
        b_star in 0.05f64..2.0,
        c1 in 0.5f64..20.0,
        c2 in 0.0f64..1.0,
        c3_frac in 0.0f64..0.9,
        eps_sq in 1e-4f64..1e-2,
        d1_mult in 1.5f64..1e4,
        g_mult in 1.01f64..5.0,
    ) {
        let c3 = c3_frac * eps_sq * b_star;
        let g = (b_star * b_star / c1).max((eps_sq + c2 / c1) / (eps_sq - c3 / b_star)).max(1.0) * g_mult;
        let p = RecursionParams::new(eps_sq * d1_mult, b_star, c1, c2, c3, g, eps_sq).unwrap();
        let claims = theory::lemma4_claims(&p);
        prop_assert!(claims.claim1 && claims.claim2);
        let t = theory::horizon_case2(&p).unwrap();
        prop_assume!(t <= 2_000_000);
        let seq = theory::recursion_unroll(&p, t).unwrap();
        prop_assert!(seq[t - 1] <= eps_sq);
        if t > 1 {
            prop_assert!(seq[t - 2] > eps_sq);
        }
    }

    #[test]
    fn config_round_trip(
        seed in any::<u64>(),
        n in 1usize..20,
        alpha in 0.0f64..=1.0,
        beta in 0.0f64..=1.0,
        b in 1usize..64,
        frac in 0.0f64..1.0,
        eps in 0.01f64..1.0,
    ) {
        let text = format!(r#"{{
            "seed": {seed},
            "net": {{"leak_alpha": {alpha}, "n": {n}}},
            "dist": {{"kind": "gaussian", "sigma": 1.5, "n": {n}}},
            "beta": {{"kind": "const", "value": {beta}}},
            "w_star": {{"random_sphere": {{"radius": 2.0}}}},
            "attack": {{"theta": {{"frac_of_theta_star": {frac}}}, "strategy": "grad_oppose"}},
            "train": {{"batch": {b}, "eta": {{"auto": {{}}}}}},
            "trials": {{"R": 5, "eps": {eps}, "delta": 0.3}}
        }}"#);
        let a = ExperimentConfig::from_json(&text).unwrap();
        let again = ExperimentConfig::from_json(&a.to_json()).unwrap();
        prop_assert_eq!(&a, &again);
        prop_assert_eq!(a.to_json(), again.to_json());
    }
}
