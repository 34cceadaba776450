//! Expectation-level checks on single steps from a frozen iterate, batch-size effects on
//! the automatic step size, and the learner's isolation from the hidden optimum.

use trontide::adversary::{AdversarialOracle, AttackSpec, LabelOracle, XiStrategy};
use trontide::distribution::{BetaProfile, InputDistribution};
use trontide::mathcore::rng::streams;
use trontide::mathcore::{Matrix, RngStream, Vector};
use trontide::model::NetSpec;
use trontide::theory::{self, TheoryConstants};
use trontide::trainer::{run_with_oracle, tron_gradient, LoopSettings, Problem};

const REPLICATES: usize = 500;

fn single_relu_problem(n: usize) -> Problem {
    let net = NetSpec::single_gate(n, 0.0).unwrap();
    let mut w = vec![0.0; n];
    w[0] = 0.8;
    w[1] = -0.6;
    Problem::new(net, Matrix::identity(n), InputDistribution::Gaussian { sigma: 1.0, n }, Vector::from_vec(w)).unwrap()
}

fn constants(p: &Problem, attack: &AttackSpec, b: usize) -> TheoryConstants {
    p.constants(attack, b, &mut RngStream::new(99), 100_000).unwrap()
}

/// Mean and standard error of `‖w⁺ − w*‖²` over independent single steps from `w`.
fn one_step_stats(p: &Problem, attack: &AttackSpec, w: &Vector, eta: f64, b: usize, seed: u64) -> (f64, f64) {
    let root = RngStream::new(seed);
    let mut vals = Vec::with_capacity(REPLICATES);
    for rep in 0..REPLICATES {
        let mut data = root.derive(streams::DATA).derive(rep as u64);
        let mut oracle = AdversarialOracle::new(&p.net, &p.w_star, attack, root.derive(streams::COINS).derive(rep as u64), None)
            .unwrap();
        let xs = p.dist.sample_batch(&mut data, b).unwrap();
        let flat: Vec<f64> = xs.iter().flat_map(|x| x.as_slice().to_vec()).collect();
        let mut ys = vec![0.0; b];
        oracle.answer_batch(&flat, &mut ys).unwrap();
        let g = tron_gradient(&p.m, &xs, &ys, &p.net, w).unwrap();
        let next = w.add(&g.scale(eta)).unwrap();
        vals.push(next.dist_sq(&p.w_star).unwrap());
    }
    let k = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / k;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
    (mean, (var / k).sqrt())
}

#[test]
fn case1_one_step_contraction() {
    let p = single_relu_problem(6);
    let attack = AttackSpec::none();
    for b in [1, 4, 16] {
        let c = constants(&p, &attack, b);
        let gamma = theory::default_gamma_case1(&c).unwrap();
        let step = theory::step_size_case1(&c, gamma).unwrap();
        let w = Vector::from_vec(vec![0.1, 0.3, -0.4, 0.2, 0.0, 0.5]);
        let d0 = w.dist_sq(&p.w_star).unwrap();
        let (mean, se) = one_step_stats(&p, &attack, &w, step.eta, b, 7 + b as u64);
        assert!(mean <= step.kappa * d0 + 4.0 * se, "b={b}: {mean} > {} + 4*{se}", step.kappa * d0);
        assert!(mean < d0, "b={b}: no progress");
    }
}

#[test]
fn case2_one_step_recursion() {
    let p = single_relu_problem(6);
    let (eps, delta) = (0.1, 0.2);
    for (b, strategy) in [(1, XiStrategy::SignedUniform), (8, XiStrategy::ConstantPositive)] {
        let probe = AttackSpec { theta: 0.0, profile: BetaProfile::constant(0.2), strategy: strategy.clone() };
        let c = constants(&p, &probe, b);
        let ts = theory::theta_star(eps, delta, theory::c_tradeoff(&c).unwrap()).unwrap();
        let attack = AttackSpec { theta: 0.8 * ts, ..probe };
        let w = Vector::from_vec(vec![0.5, -0.2, 0.1, 0.0, 0.3, -0.1]);
        let d0 = w.dist_sq(&p.w_star).unwrap();
        let params = theory::case2_recursion_params(&c, attack.theta, None, eps, delta, d0).unwrap();
        let eta = params.eta_prime / c.lambda2;
        let (mean, se) = one_step_stats(&p, &attack, &w, eta, b, 31 + b as u64);
        let bound = params.alpha_rec() * d0 + params.beta_rec();
        assert!(mean <= bound + 4.0 * se, "b={b}: {mean} > {bound} + 4*{se}");
    }
}

#[test]
fn auto_eta_increases_with_batch() {
    let p = single_relu_problem(5);
    let attack = AttackSpec::none();
    let etas: Vec<f64> = [1, 4, 16, 64]
        .iter()
        .map(|&b| {
            let c = constants(&p, &attack, b);
            theory::step_size_case1(&c, theory::default_gamma_case1(&c).unwrap()).unwrap().eta
        })
        .collect();
    assert!(etas.windows(2).all(|w| w[0] < w[1]), "{etas:?}");
}

/// Answers from one optimum for the first `switch` batches and from another afterwards.
struct SwitchingOracle {
    first: AdversarialOracle,
    second: AdversarialOracle,
    batches: usize,
    switch: usize,
}

impl LabelOracle for SwitchingOracle {
    fn answer_batch(&mut self, xs: &[f64], ys: &mut [f64]) -> trontide::Result<()> {
        self.batches += 1;
        if self.batches <= self.switch {
            self.first.answer_batch(xs, ys)
        } else {
            self.second.answer_batch(xs, ys)
        }
    }

    fn stats(&self) -> trontide::adversary::AttackStats {
        self.first.stats()
    }
}

#[test]
fn learner_follows_the_oracle_not_the_hidden_optimum() {
    let p = single_relu_problem(4);
    let swapped = Vector::from_vec(vec![-0.5, 0.5, 0.5, 0.0]);
    let attack = AttackSpec::none();
    let coins = RngStream::new(3).derive(streams::COINS);
    let mut oracle = SwitchingOracle {
        first: AdversarialOracle::new(&p.net, &p.w_star, &attack, coins.clone(), None).unwrap(),
        second: AdversarialOracle::new(&p.net, &swapped, &attack, coins, None).unwrap(),
        batches: 0,
        switch: 400,
    };
    let settings = LoopSettings { eta: 0.05, horizon: 3000, record_every: 100, eps: 0.0, early_stop: false };
    let mut data = RngStream::new(3).derive(streams::DATA);
    let w0 = Vector::zeros(4);
    let target = swapped.clone();
    let mut monitor = |w: &[f64]| trontide::mathcore::linalg::dist_sq(w, target.as_slice());
    let trace = run_with_oracle(&p.net, &p.m, &p.dist, &w0, &settings, 8, &mut data, &mut oracle, &mut monitor).unwrap();
    let at_switch = trace.rows.iter().find(|r| r.t == 400).unwrap().dist_sq;
    assert!(at_switch > 0.5, "should have tracked the first optimum: {at_switch}");
    assert!(trace.final_dist_sq < 1e-6, "should track the swapped optimum: {}", trace.final_dist_sq);
    assert!(trace.final_w.dist_sq(&p.w_star).unwrap() > 0.5);
}
