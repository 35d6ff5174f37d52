use super::*;
use crate::test_util::random_planes;
use ndarray::Array3;

fn reference_schedule() -> NoiseSchedule {
    NoiseSchedule::new(0.01, 378.0, 1000).unwrap()
}

/// Fixed output regardless of input; stands in for a perfect score.
struct FixedScore(Array3<f64>);

impl ScoreModel for FixedScore {
    fn evaluate(&self, _x: &Array3<f64>, _t: f64) -> crate::Result<Array3<f64>> {
        Ok(self.0.clone())
    }
}

/// Constant-valued score.
struct ConstScore(f64);

impl ScoreModel for ConstScore {
    fn evaluate(&self, x: &Array3<f64>, _t: f64) -> crate::Result<Array3<f64>> {
        Ok(Array3::from_elem(x.dim(), self.0))
    }
}

#[test]
fn sigma_endpoints_and_geometric_midpoint() {
    let s = reference_schedule();
    assert!((s.sigma(0.0).unwrap() - 0.01).abs() < 1e-15);
    assert!((s.sigma(1.0).unwrap() - 378.0).abs() < 1e-10);
    // independent route: geometric mean of the endpoints
    let mid = (0.01f64 * 378.0).sqrt();
    assert!((s.sigma(0.5).unwrap() - mid).abs() < 1e-12);
    assert!((mid - 1.94422).abs() < 1e-5);
}

#[test]
fn sigma_rejects_out_of_range_time() {
    let s = reference_schedule();
    assert!(s.sigma(-0.1).is_err());
    assert!(s.sigma(1.1).is_err());
}

#[test]
fn sigma_strictly_increasing_over_discretization() {
    let s = NoiseSchedule::new(0.01, 378.0, 500).unwrap();
    let mut last = 0.0;
    for i in 0..=s.n_scales {
        let v = s.sigma(i as f64 / s.n_scales as f64).unwrap();
        assert!(v > last, "σ not strictly increasing at index {i}");
        last = v;
    }
}

#[test]
fn perturb_is_small_at_t_zero_and_deterministic() {
    let s = NoiseSchedule::new(1e-6, 378.0, 100).unwrap();
    let x0 = random_planes(2, 8, 8, 1);
    let (x_t, z) = perturb(&x0, 0.0, &s, 5).unwrap();
    for ((a, b), n) in x_t.iter().zip(x0.iter()).zip(z.iter()) {
        assert!((a - b).abs() <= 1e-6 * n.abs() + 1e-15);
    }
    let (again, _) = perturb(&x0, 0.0, &s, 5).unwrap();
    assert_eq!(x_t, again);
}

// Monte-Carlo variance oracle: Var(x_t − x0) ≈ σ(t)² over 1e5 draws.
#[test]
fn perturb_variance_matches_sigma() {
    let s = reference_schedule();
    let t = 0.35;
    let sigma = s.sigma(t).unwrap();
    let x0 = Array3::zeros((1, 100, 100));
    let mut acc = 0.0;
    let mut n = 0usize;
    for seed in 0..10 {
        let (x_t, _) = perturb(&x0, t, &s, seed).unwrap();
        acc += x_t.iter().map(|v| v * v).sum::<f64>();
        n += x_t.len();
    }
    let var = acc / n as f64;
    let rel = (var - sigma * sigma).abs() / (sigma * sigma);
    assert!(rel < 0.02, "variance off by {rel}");
}

// The DSM target must equal the conditional score −(x_t − x0)/σ² exactly.
#[test]
fn dsm_target_is_conditional_score() {
    let s = reference_schedule();
    let batch = vec![random_planes(2, 4, 4, 3)];
    let samples = sample_batch(&batch, &s, 17).unwrap();
    let smp = &samples[0];
    for ((&target, &xt), &x0) in smp
        .target
        .iter()
        .zip(smp.x_t.iter())
        .zip(batch[0].iter())
    {
        let conditional = -(xt - x0) / (smp.sigma * smp.sigma);
        assert!(
            (target - conditional).abs() <= 1e-12 * conditional.abs().max(1.0),
            "target {target} vs conditional {conditional}"
        );
    }
}

#[test]
fn perfect_score_stub_gives_zero_loss() {
    let s = reference_schedule();
    let batch = vec![random_planes(2, 8, 8, 9)];
    let samples = sample_batch(&batch, &s, 33).unwrap();
    let stub = FixedScore(samples[0].target.clone());
    let loss = dsm_loss(&stub, &batch, &s, 33).unwrap();
    assert!(loss < 1e-20, "perfect score loss {loss}");
}

// Expectation check: the zero model's loss averages to the element count.
#[test]
fn zero_model_loss_approaches_element_count() {
    let s = reference_schedule();
    let batch: Vec<Array3<f64>> = (0..4).map(|i| random_planes(2, 8, 8, 50 + i)).collect();
    let zero = ZeroScore;
    let mut acc = 0.0;
    let runs = 200;
    for seed in 0..runs {
        acc += dsm_loss(&zero, &batch, &s, seed).unwrap();
    }
    let mean = acc / runs as f64;
    let expected = (2 * 8 * 8) as f64;
    assert!(
        (mean - expected).abs() / expected < 0.05,
        "mean {mean} vs {expected}"
    );
}

#[test]
fn predictor_identity_under_zero_score_and_noise() {
    let s = reference_schedule();
    let x = random_planes(2, 8, 8, 2);
    let z = Array3::zeros(x.dim());
    let out = predictor_step_with_noise(&x, 1000, &ZeroScore, &s, &z).unwrap();
    assert_eq!(out, x);
}

// With Z = 0 and σ_hi² − σ_lo² = 3 the update is exactly x + 3c.
#[test]
fn predictor_formula_with_constant_score() {
    let s = NoiseSchedule::new(1.0, 2.0, 1).unwrap();
    let (t_lo, t_hi) = s.step_times(1).unwrap();
    let diff = s.sigma(t_hi).unwrap().powi(2) - s.sigma(t_lo).unwrap().powi(2);
    assert!((diff - 3.0).abs() < 1e-12);
    let x = random_planes(1, 4, 4, 7);
    let z = Array3::zeros(x.dim());
    let c = 0.25;
    let out = predictor_step_with_noise(&x, 1, &ConstScore(c), &s, &z).unwrap();
    for (o, i) in out.iter().zip(x.iter()) {
        assert!((o - (i + 3.0 * c)).abs() < 1e-12);
    }
}

// Monte-Carlo against the known target distribution: predictor-only
// annealing from pure noise recovers the Gaussian mean.
#[test]
fn predictor_only_recovers_target_mean() {
    let s = NoiseSchedule::new(0.01, 378.0, 500).unwrap();
    let mean = Array3::from_elem((2, 8, 8), 2.0);
    let model = AnalyticGaussianScore::new(mean.clone(), 1.0, s).unwrap();
    let trajectories = 2000;
    let mut acc: Array3<f64> = Array3::zeros((2, 8, 8));
    for seed in 0..trajectories {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7000 + seed);
        let mut x = standard_normal_like((2, 8, 8), &mut rng);
        x.mapv_inplace(|v| v * 378.0);
        for index in (1..=s.n_scales).rev() {
            x = predictor_step(&x, index, &model, &s, &mut rng).unwrap();
        }
        acc += &x;
    }
    acc.mapv_inplace(|v| v / trajectories as f64);
    for (&m, &target) in acc.iter().zip(mean.iter()) {
        assert!(
            (m - target).abs() <= 0.05 * target.abs(),
            "component mean {m} vs {target}"
        );
    }
}

#[test]
fn corrector_zero_score_guard() {
    let s = reference_schedule();
    let x = random_planes(2, 8, 8, 4);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    let out = corrector_step(&x, 500, &ZeroScore, &s, 0.16, &mut rng).unwrap();
    assert_eq!(out, x);
}

// Langevin stationarity oracle: corrector-only iteration at a fixed scale
// converges to the Gaussian mean.
#[test]
fn corrector_only_langevin_converges_to_mean() {
    let s = NoiseSchedule::new(0.01, 378.0, 1000).unwrap();
    let mean = Array3::from_elem((1, 32, 32), 2.0);
    let model = AnalyticGaussianScore::new(mean, 1.0, s).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    let mut x = Array3::zeros((1, 32, 32));
    for _ in 0..1000 {
        x = corrector_step(&x, 1, &model, &s, 0.16, &mut rng).unwrap();
    }
    let empirical = x.iter().sum::<f64>() / x.len() as f64;
    assert!(
        (empirical - 2.0).abs() <= 0.05 * 2.0,
        "empirical mean {empirical}"
    );
}

#[test]
fn corrector_deterministic_under_seed() {
    let s = reference_schedule();
    let x = random_planes(2, 8, 8, 6);
    let model = AnalyticGaussianScore::new(Array3::zeros((2, 8, 8)), 1.0, s).unwrap();
    let mut rng1 = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let mut rng2 = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let a = corrector_step(&x, 100, &model, &s, 0.16, &mut rng1).unwrap();
    let b = corrector_step(&x, 100, &model, &s, 0.16, &mut rng2).unwrap();
    assert_eq!(a, b);
}

#[test]
fn analytic_score_at_mean_is_zero_and_unit_displacement() {
    let s = NoiseSchedule::new(1e-8, 378.0, 100).unwrap();
    let mean = random_planes(1, 4, 4, 8);
    let model = AnalyticGaussianScore::new(mean.clone(), 1.0, s).unwrap();
    let at_mean = model.evaluate(&mean, 0.0).unwrap();
    assert!(at_mean.iter().all(|v| v.abs() < 1e-14));

    let mut displaced = mean.clone();
    displaced[[0, 2, 3]] += 1.0;
    let score = model.evaluate(&displaced, 0.0).unwrap();
    for (idx, v) in score.indexed_iter() {
        if idx == (0, 2, 3) {
            assert!((v + 1.0).abs() < 1e-10, "score {v} at displaced entry");
        } else {
            assert!(v.abs() < 1e-14);
        }
    }
}

// The analytic model is the true marginal score, so its DSM loss sits at
// the irreducible minimum E_t[v̄/(v̄+σ²)]·d, well below the zero model.
#[test]
fn analytic_model_loss_near_irreducible_minimum() {
    let s = reference_schedule();
    let base_var = 1.0;
    let d = (2 * 8 * 8) as f64;
    let mean = Array3::from_elem((2, 8, 8), 0.5);
    let model = AnalyticGaussianScore::new(mean.clone(), base_var, s).unwrap();
    let zero = ZeroScore;

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(123);
    let mut analytic_acc = 0.0;
    let mut zero_acc = 0.0;
    let batches = 500;
    for seed in 0..batches {
        // data drawn from N(mean, base_var · I)
        let batch: Vec<Array3<f64>> = (0..2)
            .map(|_| &mean + &standard_normal_like((2, 8, 8), &mut rng))
            .collect();
        analytic_acc += dsm_loss(&model, &batch, &s, 9000 + seed).unwrap();
        zero_acc += dsm_loss(&zero, &batch, &s, 9000 + seed).unwrap();
    }
    let analytic_mean = analytic_acc / batches as f64;
    let zero_mean = zero_acc / batches as f64;

    // independent quadrature of E_t[v̄/(v̄+σ(t)²)]
    let quad_steps = 200_000;
    let mut irreducible = 0.0;
    for i in 0..quad_steps {
        let t = (i as f64 + 0.5) / quad_steps as f64;
        let sigma = s.sigma(t).unwrap();
        irreducible += base_var / (base_var + sigma * sigma);
    }
    irreducible *= d / quad_steps as f64;

    assert!(analytic_mean < zero_mean, "analytic {analytic_mean} vs zero {zero_mean}");
    let rel = (analytic_mean - irreducible).abs() / irreducible;
    assert!(rel < 0.10, "analytic {analytic_mean} vs irreducible {irreducible}");
}

#[test]
fn pc_sample_deterministic() {
    let s = NoiseSchedule::new(0.01, 378.0, 50).unwrap();
    let model = AnalyticGaussianScore::new(Array3::zeros((2, 8, 8)), 1.0, s).unwrap();
    let a = pc_sample((2, 8, 8), &model, &s, 1, 0.16, 77).unwrap();
    let b = pc_sample((2, 8, 8), &model, &s, 1, 0.16, 77).unwrap();
    assert_eq!(a, b);
}

#[test]
fn train_zero_steps_leaves_model_unchanged() {
    let s = reference_schedule();
    let mut net = TinyDenoiser::new(2, 4, s, 5).unwrap();
    let before = net.parameters();
    let cfg = TrainingConfig {
        steps: 0,
        ..TrainingConfig::default()
    };
    let data = vec![random_planes(2, 8, 8, 1)];
    let trace = train(&mut net, &data, &cfg, &s, 3).unwrap();
    assert!(trace.is_empty());
    assert_eq!(net.parameters(), before);
}

#[test]
fn train_is_deterministic_and_finite() {
    let s = reference_schedule();
    let data: Vec<Array3<f64>> = (0..8).map(|i| random_planes(2, 8, 8, 60 + i)).collect();
    let cfg = TrainingConfig {
        steps: 30,
        batch_size: 2,
        ..TrainingConfig::default()
    };
    let mut net1 = TinyDenoiser::new(2, 4, s, 9).unwrap();
    let trace1 = train(&mut net1, &data, &cfg, &s, 42).unwrap();
    let mut net2 = TinyDenoiser::new(2, 4, s, 9).unwrap();
    let trace2 = train(&mut net2, &data, &cfg, &s, 42).unwrap();
    assert_eq!(trace1, trace2);
    assert_eq!(net1.parameters(), net2.parameters());
    assert!(trace1.iter().all(|l| l.is_finite()));
    assert_eq!(trace1.len(), 30);
}

#[test]
fn training_non_trainable_model_rejected() {
    let s = reference_schedule();
    let mut model = AnalyticGaussianScore::new(Array3::zeros((2, 8, 8)), 1.0, s).unwrap();
    let data = vec![random_planes(2, 8, 8, 1)];
    match train(&mut model, &data, &TrainingConfig::default(), &s, 0) {
        Err(crate::Error::NotTrainable) => {}
        other => panic!("expected NotTrainable, got {other:?}"),
    }
    match model.loss_gradients(&data, &s, 0) {
        Err(crate::Error::NotTrainable) => {}
        other => panic!("expected NotTrainable, got {other:?}"),
    }
}
