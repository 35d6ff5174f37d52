//! Acceptance suite: one test per numbered criterion, each asserting its
//! stated tolerance and runtime budget and printing a PASS line (visible
//! with `--nocapture`). Criteria 4 and 7 additionally write their output
//! CSVs under the target tmpdir so the determinism criterion can compare
//! reruns byte for byte.

use std::path::PathBuf;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use ndarray::{Array2, Array3};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use maskdiff::recon::analytic_surrogate_models;
use maskdiff::*;

fn out_dir() -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn random_grid(h: usize, w: usize, seed: u64) -> ComplexGrid {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ComplexGrid::from_fn(h, w, |_| {
        Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    })
    .unwrap()
}

fn rel_l2(a: &ComplexGrid, b: &ComplexGrid) -> f64 {
    let num: f64 = a
        .data()
        .iter()
        .zip(b.data().iter())
        .map(|(x, y)| (x - y).norm_sqr())
        .sum();
    num.sqrt() / b.norm2()
}

fn check_runtime(criterion: &str, elapsed: Duration, budget: Duration) {
    assert!(
        elapsed < budget,
        "{criterion}: runtime {elapsed:?} exceeds budget {budget:?}"
    );
    println!("PASS {criterion} in {elapsed:.2?}");
}

// ---------------------------------------------------------------- 1 -----

#[test]
fn criterion_01_wavelet_identities() {
    let t0 = Instant::now();
    for family in [WaveletFamily::Haar, WaveletFamily::Daubechies4] {
        let spec = WaveletSpec::new(family, 2).unwrap();
        for seed in 0..50 {
            let x = random_grid(32, 32, 1000 + seed);
            let back = idwt2(&dwt2(&x, &spec).unwrap(), &spec).unwrap();
            assert!(
                rel_l2(&back, &x) < 1e-10,
                "{family:?}: reconstruction identity failed at seed {seed}"
            );
            let h = highpass(&x, &spec).unwrap();
            let l = lowpass(&x, &spec).unwrap();
            let sum = ComplexGrid::new(h.data() + l.data()).unwrap();
            assert!(
                rel_l2(&sum, &x) < 1e-10,
                "{family:?}: H + L identity failed at seed {seed}"
            );
        }
    }
    check_runtime(
        "criterion 1 (wavelet identities)",
        t0.elapsed(),
        Duration::from_secs(5),
    );
}

// ---------------------------------------------------------------- 2 -----

#[test]
fn criterion_02_mask_oracle_equivalence() {
    let t0 = Instant::now();
    let spec = WaveletSpec::new(WaveletFamily::Haar, 2).unwrap();

    // sort-based brute-force oracle, exact set equality
    for seed in 0..20 {
        let k = random_grid(16, 16, 2000 + seed);
        let (low_res, high_res) = frequency_residuals(&k, &spec).unwrap();
        let low = ThresholdRange::quantile(0.70, 1.0).unwrap();
        let highs = [
            ThresholdRange::quantile(0.50, 1.0).unwrap(),
            ThresholdRange::quantile(0.75, 1.0).unwrap(),
        ];
        let set = generate_masks(&k, &spec, &low, &highs).unwrap();

        let oracle = |res: &Array2<f64>, q_lo: f64, q_hi: f64| -> Array2<u8> {
            let mut sorted: Vec<f64> = res.iter().copied().collect();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let n = sorted.len();
            let pick = |q: f64| sorted[((q * n as f64).floor() as usize).min(n - 1)];
            let (lo, hi) = (pick(q_lo), pick(q_hi));
            res.mapv(|r| u8::from(r >= lo && r <= hi))
        };
        assert_eq!(set.low.grid(), &oracle(&low_res, 0.70, 1.0), "seed {seed} low");
        assert_eq!(set.highs[0].grid(), &oracle(&high_res, 0.50, 1.0), "seed {seed} h1");
        assert_eq!(set.highs[1].grid(), &oracle(&high_res, 0.75, 1.0), "seed {seed} h2");
    }

    // monotonicity under range widening
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let k = random_grid(16, 16, 3000);
    for trial in 0..100 {
        let lo_a: f64 = rng.gen_range(0.0..0.9);
        let hi_a: f64 = rng.gen_range(lo_a..1.0);
        let lo_b = lo_a * rng.gen_range(0.0..1.0);
        let hi_b = hi_a + (1.0 - hi_a) * rng.gen_range(0.0..1.0);
        let narrow = ThresholdRange::quantile(lo_a, hi_a).unwrap();
        let wide = ThresholdRange::quantile(lo_b, hi_b).unwrap();
        let dummy = ThresholdRange::quantile(0.0, 1.0).unwrap();
        let a = generate_masks(&k, &spec, &dummy, &[narrow]).unwrap();
        let b = generate_masks(&k, &spec, &dummy, &[wide]).unwrap();
        for (x, y) in a.highs[0].grid().iter().zip(b.highs[0].grid().iter()) {
            assert!(y >= x, "widening removed a selected entry (trial {trial})");
        }
    }
    check_runtime(
        "criterion 2 (mask oracle equivalence)",
        t0.elapsed(),
        Duration::from_secs(5),
    );
}

// ---------------------------------------------------------------- 3 -----

#[test]
fn criterion_03_data_consistency_oracle() {
    let t0 = Instant::now();
    for trial in 0..50u64 {
        let k_est = random_grid(8, 8, 4000 + trial);
        let k_true = random_grid(8, 8, 5000 + trial);
        let mut rng = ChaCha8Rng::seed_from_u64(6000 + trial);
        let mut entries = Array2::zeros((8, 8));
        for i in 0..8 {
            entries[[i, rng.gen_range(0..8)]] = 1u8;
            entries[[rng.gen_range(0..8), i]] = 1u8;
        }
        let mask = SamplingMask::new(entries).unwrap();
        let meas = apply_sampling(&k_true, &mask, 0.0, 0).unwrap();

        for mu in [0.0, 0.5, 10.0] {
            let closed = data_consistency(&k_est, &meas, mu).unwrap();
            // oracle: gradient descent on the per-entry quadratic to 1e-10
            for (idx, &m) in mask.entries().indexed_iter() {
                let y = meas.y.data()[idx];
                let est = k_est.data()[idx];
                let mf = m as f64;
                let mut v = est;
                if mf + mu > 0.0 {
                    let lr = 0.9 / (2.0 * (mf + mu));
                    for _ in 0..4000 {
                        let grad = (v * mf - y) * 2.0 * mf + (v - est) * 2.0 * mu;
                        if grad.norm() < 1e-10 {
                            break;
                        }
                        v -= grad * lr;
                    }
                }
                let got = closed.data()[idx];
                assert!(
                    (got - v).norm() <= 1e-6 * v.norm().max(1.0),
                    "trial {trial} mu {mu}: {got} vs oracle {v}"
                );
            }

            // idempotence: exact at the default mu = 0, and exact at
            // unsampled positions for every mu
            let twice = data_consistency(&closed, &meas, mu).unwrap();
            for (idx, &m) in mask.entries().indexed_iter() {
                if mu == 0.0 || m == 0 {
                    assert_eq!(twice.data()[idx], closed.data()[idx]);
                }
            }
        }
    }
    check_runtime(
        "criterion 3 (data-consistency oracle)",
        t0.elapsed(),
        Duration::from_secs(10),
    );
}

// ---------------------------------------------------------------- 4 -----

/// PC-sampler statistics against the analytic Gaussian target, rendered as
/// a per-component CSV for the determinism criterion.
fn sampler_statistics_csv() -> (Vec<u8>, f64, f64) {
    let schedule = NoiseSchedule::new(0.01, 378.0, 500).unwrap();
    let mean = Array3::from_shape_fn((2, 8, 8), |(c, y, x)| {
        0.4 + 0.2 * c as f64 + 0.05 * ((y + 2 * x) as f64).sin()
    });
    let model = AnalyticGaussianScore::new(mean.clone(), 1.0, schedule).unwrap();
    let trials = 2000;
    let mut sum: Array3<f64> = Array3::zeros((2, 8, 8));
    let mut sumsq: Array3<f64> = Array3::zeros((2, 8, 8));
    for i in 0..trials {
        let x = pc_sample((2, 8, 8), &model, &schedule, 1, 0.16, 40_000 + i).unwrap();
        sum += &x;
        sumsq += &x.mapv(|v| v * v);
    }
    let n = trials as f64;
    let d = sum.len() as f64;
    let mut mean_err_sq = 0.0;
    let mut var_acc = 0.0;
    let mut csv = String::from("component,mean,variance\n");
    for (idx, &s) in sum.indexed_iter() {
        let m = s / n;
        let var = sumsq[idx] / n - m * m;
        mean_err_sq += (m - mean[idx]).powi(2);
        var_acc += var;
        csv.push_str(&format!(
            "{}_{}_{},{m:.12e},{var:.12e}\n",
            idx.0, idx.1, idx.2
        ));
    }
    (csv.into_bytes(), (mean_err_sq / d).sqrt(), var_acc / d)
}

#[test]
fn criterion_04_sampler_statistics() {
    let t0 = Instant::now();
    // At 2000 samples each component mean carries a standard error of
    // ~0.023, so the recovery tolerances apply to the estimates across
    // components: RMS error of the recovered mean vector, and the average
    // recovered variance.
    let (csv, rms_mean_err, mean_var) = sampler_statistics_csv();
    std::fs::write(out_dir().join("sampler_stats.csv"), &csv).unwrap();
    assert!(
        rms_mean_err <= 0.05,
        "recovered mean off by {rms_mean_err} RMS"
    );
    assert!(
        (mean_var - 1.0).abs() <= 0.10,
        "recovered variance {mean_var} outside 10% of target"
    );
    println!("mean RMS error {rms_mean_err:.4}, recovered variance {mean_var:.4}");
    check_runtime(
        "criterion 4 (sampler statistics)",
        t0.elapsed(),
        Duration::from_secs(120),
    );
}

// ---------------------------------------------------------------- 5 -----

#[test]
fn criterion_05_gradient_correctness() {
    let t0 = Instant::now();
    let schedule = NoiseSchedule::new(0.01, 378.0, 1000).unwrap();
    // full-magnitude output layer: the near-zero deployment init leaves
    // upstream gradients below finite-difference resolution
    let net = {
        let mut net = TinyDenoiser::new(6, 4, schedule, 7).unwrap();
        let mut params = net.parameters();
        params[4].mapv_inplace(|v| v * 1e4);
        net.set_parameters(&params).unwrap();
        net
    };
    let mut rng = ChaCha8Rng::seed_from_u64(50_000);
    let batch: Vec<Array3<f64>> = (0..2)
        .map(|_| Array3::from_shape_fn((6, 8, 8), |_| rng.sample(StandardNormal)))
        .collect();
    let seed = 99;
    let (_, grads) = net.loss_gradients(&batch, &schedule, seed).unwrap();

    let step = 1e-5;
    let params = net.parameters();
    let mut checked = 0usize;
    for (pi, p) in params.iter().enumerate() {
        for j in 0..p.len() {
            let mut plus = params.clone();
            plus[pi].as_slice_mut().unwrap()[j] += step;
            let mut minus = params.clone();
            minus[pi].as_slice_mut().unwrap()[j] -= step;
            let mut net_p = net.clone();
            net_p.set_parameters(&plus).unwrap();
            let mut net_m = net.clone();
            net_m.set_parameters(&minus).unwrap();
            let lp = dsm_loss(&net_p, &batch, &schedule, seed).unwrap();
            let lm = dsm_loss(&net_m, &batch, &schedule, seed).unwrap();
            let fd = (lp - lm) / (2.0 * step);
            let an = grads[pi].as_slice().unwrap()[j];
            let denom = fd.abs().max(an.abs());
            if denom > 1e-6 {
                let rel = (fd - an).abs() / denom;
                assert!(
                    rel < 1e-4,
                    "tensor {pi} index {j}: analytic {an} vs fd {fd} (rel {rel})"
                );
            } else {
                assert!((fd - an).abs() < 1e-8);
            }
            checked += 1;
        }
    }
    assert_eq!(checked, params.iter().map(|p| p.len()).sum::<usize>());
    check_runtime(
        "criterion 5 (gradient correctness)",
        t0.elapsed(),
        Duration::from_secs(60),
    );
}

// ---------------------------------------------------------------- 6 -----

#[test]
fn criterion_06_training_sanity() {
    let t0 = Instant::now();
    let schedule = NoiseSchedule::new(0.01, 378.0, 1000).unwrap();
    let spec = WaveletSpec::new(WaveletFamily::Haar, 2).unwrap();
    let ranges = recon::MaskRanges::defaults(2).unwrap();
    let layout = ChannelLayout::new(LowSlot::Middle, 2).unwrap();
    let ds = phantom::make_dataset(PhantomKind::GaussianBlobs, 200, 32, 11).unwrap();
    let data: Vec<Array3<f64>> = ds
        .items
        .iter()
        .map(|img| {
            let k = fft2c(img).unwrap();
            let masks = generate_masks(&k, &spec, &ranges.low, &ranges.highs).unwrap();
            stack_hybrid(&k, &masks, &layout).unwrap().into_data()
        })
        .collect();

    let mut net = TinyDenoiser::new(6, 16, schedule, 33).unwrap();
    let eval: Vec<Array3<f64>> = data[..32].to_vec();
    let before = dsm_loss(&net, &eval, &schedule, 777).unwrap();
    let cfg = TrainingConfig {
        learning_rate: 1e-3,
        beta1: 0.9,
        beta2: 0.999,
        batch_size: 2,
        steps: 2000,
        weighting: sde::Weighting::SigmaSq,
    };
    let trace = train(&mut net, &data, &cfg, &schedule, 55).unwrap();
    assert_eq!(trace.len(), 2000);
    assert!(trace.iter().all(|l| l.is_finite()), "non-finite loss in trace");
    let after = dsm_loss(&net, &eval, &schedule, 777).unwrap();
    assert!(
        after <= 0.5 * before,
        "training reduced loss only to {:.1}% ({before:.1} -> {after:.1})",
        100.0 * after / before
    );
    println!("training loss {before:.1} -> {after:.1} ({:.1}%)", 100.0 * after / before);
    check_runtime(
        "criterion 6 (training sanity)",
        t0.elapsed(),
        Duration::from_secs(600),
    );
}

// ------------------------------------------------------------- 7 & 8 ----

struct EndToEndRun {
    zf_psnr: f64,
    final_psnr: f64,
    quarter_psnr: f64,
    trace_csv: Vec<u8>,
}

fn end_to_end_runs() -> Vec<EndToEndRun> {
    [0u64, 1, 2]
        .iter()
        .map(|&seed| {
            let img = make_phantom(PhantomKind::SheppLogan, 64, 0).unwrap();
            let k = fft2c(&img).unwrap();
            let pattern = generate_pattern(
                &PatternSpec::new(PatternKind::Random2D, 4.0, 0.04, seed).unwrap(),
                64,
                64,
            )
            .unwrap();
            let meas = apply_sampling(&k, &pattern, 0.0, seed).unwrap();
            let zf = zero_filled(&meas).unwrap();
            let zf_psnr = evaluate(&zf, &img).unwrap().psnr;

            let cfg = ReconConfig::desk_default(2, 200, seed).unwrap();
            assert!(matches!(cfg.dc, recon::DcPlacement::PerIteration));
            assert_eq!(cfg.mu, 0.0);
            let (d1, d2) = analytic_surrogate_models(&k, &cfg, 1e-6).unwrap();
            let out = reconstruct(&meas, &d1, &d2, &cfg, Some(&img)).unwrap();
            let trace = &out.state.trace;
            let quarter = trace[trace.len() / 4 - 1].psnr;
            let final_psnr = trace.last().unwrap().psnr;

            let mut csv = String::from("iteration,psnr,ssim,mse\n");
            for m in trace {
                csv.push_str(&format!(
                    "{},{:.9},{:.9},{:.9e}\n",
                    m.iteration, m.psnr, m.ssim, m.mse
                ));
            }
            EndToEndRun {
                zf_psnr,
                final_psnr,
                quarter_psnr: quarter,
                trace_csv: csv.into_bytes(),
            }
        })
        .collect()
}

fn shared_end_to_end() -> &'static Vec<EndToEndRun> {
    static RUNS: OnceLock<Vec<EndToEndRun>> = OnceLock::new();
    RUNS.get_or_init(end_to_end_runs)
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    values[values.len() / 2]
}

#[test]
fn criterion_07_end_to_end_margin() {
    let t0 = Instant::now();
    let runs = shared_end_to_end();
    for (i, run) in runs.iter().enumerate() {
        std::fs::write(out_dir().join(format!("recon_trace_seed{i}.csv")), &run.trace_csv)
            .unwrap();
    }
    let mut recon_psnrs: Vec<f64> = runs.iter().map(|r| r.final_psnr).collect();
    let mut zf_psnrs: Vec<f64> = runs.iter().map(|r| r.zf_psnr).collect();
    let margin = median(&mut recon_psnrs) - median(&mut zf_psnrs);
    assert!(
        margin >= 3.0,
        "median reconstruction margin {margin:.2} dB below 3 dB"
    );
    println!("median margin over zero-filled: {margin:.2} dB");
    check_runtime(
        "criterion 7 (end-to-end margin)",
        t0.elapsed(),
        Duration::from_secs(300),
    );
}

#[test]
fn criterion_08_convergence_shape() {
    let t0 = Instant::now();
    let runs = shared_end_to_end();
    let mut finals: Vec<f64> = runs.iter().map(|r| r.final_psnr).collect();
    let mut quarters: Vec<f64> = runs.iter().map(|r| r.quarter_psnr).collect();
    let (final_med, quarter_med) = (median(&mut finals), median(&mut quarters));
    assert!(
        final_med >= quarter_med,
        "median final PSNR {final_med:.2} below quarter-mark {quarter_med:.2}"
    );
    println!("median PSNR quarter-mark {quarter_med:.2} -> final {final_med:.2}");
    check_runtime(
        "criterion 8 (convergence shape)",
        t0.elapsed(),
        Duration::from_secs(300),
    );
}

// ---------------------------------------------------------------- 9 -----

#[test]
fn criterion_09_fully_sampled_fixed_point() {
    let t0 = Instant::now();
    let img = make_phantom(PhantomKind::SheppLogan, 64, 0).unwrap();
    let k = fft2c(&img).unwrap();
    let mask = SamplingMask::all_ones(64, 64);
    let meas = apply_sampling(&k, &mask, 0.0, 0).unwrap();
    let mut cfg = ReconConfig::desk_default(2, 2, 0).unwrap();
    cfg.schedule = NoiseSchedule::new(0.01, 10.0, 100).unwrap();

    let zero = sde::ZeroScore;
    let out = reconstruct(&meas, &zero, &zero, &cfg, None).unwrap();
    assert!(rel_l2(&out.image, &img) < 1e-10);

    let (d1, d2) = analytic_surrogate_models(&k, &cfg, 1e-6).unwrap();
    let out2 = reconstruct(&meas, &d1, &d2, &cfg, None).unwrap();
    assert!(rel_l2(&out2.image, &img) < 1e-10);
    check_runtime(
        "criterion 9 (fully-sampled fixed point)",
        t0.elapsed(),
        Duration::from_secs(10),
    );
}

// --------------------------------------------------------------- 10 -----

#[test]
fn criterion_10_channel_ablation() {
    let t0 = Instant::now();
    let img = make_phantom(PhantomKind::SheppLogan, 64, 0).unwrap();
    let k = fft2c(&img).unwrap();
    let pattern = generate_pattern(
        &PatternSpec::new(PatternKind::Random2D, 4.0, 0.04, 9).unwrap(),
        64,
        64,
    )
    .unwrap();
    let meas = apply_sampling(&k, &pattern, 0.0, 9).unwrap();

    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for channels in [4usize, 6, 8] {
        let n_high = channels / 2 - 1;
        let cfg = ReconConfig::desk_default(n_high, 60, 9).unwrap();
        let (d1, d2) = analytic_surrogate_models(&k, &cfg, 1e-6).unwrap();
        let out = reconstruct(&meas, &d1, &d2, &cfg, Some(&img)).unwrap();
        let row = evaluate(&out.image, &img).unwrap();
        assert!(row.psnr.is_finite() && row.ssim.is_finite());
        labels.push(format!("{channels}-ch"));
        rows.push(row);
    }
    // Table VI shape: metric rows by channel-count columns; the winner is
    // recorded as observed, not asserted
    let dir = out_dir();
    let csv_rows: Vec<Vec<String>> = vec![
        std::iter::once("PSNR".to_string())
            .chain(rows.iter().map(|r| format!("{:.2}", r.psnr)))
            .collect(),
        std::iter::once("SSIM".to_string())
            .chain(rows.iter().map(|r| format!("{:.4}", r.ssim)))
            .collect(),
        std::iter::once("MSE".to_string())
            .chain(rows.iter().map(|r| format!("{:.3}", r.mse * 1e4)))
            .collect(),
    ];
    io::write_csv(
        &dir.join("ablation.csv"),
        &format!("metric,{}", labels.join(",")),
        &csv_rows,
    )
    .unwrap();
    let table = metrics::format_table(&labels, &[("random2d R=4".to_string(), rows.clone())]);
    std::fs::write(dir.join("ablation.txt"), &table).unwrap();
    let winner = labels
        .iter()
        .zip(rows.iter())
        .max_by(|a, b| a.1.psnr.total_cmp(&b.1.psnr))
        .unwrap()
        .0;
    println!("{table}\nobserved best configuration at toy scale: {winner}");
    check_runtime(
        "criterion 10 (channel ablation harness)",
        t0.elapsed(),
        Duration::from_secs(900),
    );
}

// --------------------------------------------------------------- 11 -----

#[test]
fn criterion_11_determinism() {
    let t0 = Instant::now();
    // criterion 4 rerun: byte-identical statistics CSV
    let (csv_a, _, _) = sampler_statistics_csv();
    let (csv_b, _, _) = sampler_statistics_csv();
    assert_eq!(csv_a, csv_b, "sampler statistics CSV not reproducible");

    // criterion 7 rerun: byte-identical per-seed trace CSVs
    let first = shared_end_to_end();
    let second = end_to_end_runs();
    for (i, (a, b)) in first.iter().zip(second.iter()).enumerate() {
        assert_eq!(
            a.trace_csv, b.trace_csv,
            "trace CSV for seed {i} not reproducible"
        );
    }
    check_runtime(
        "criterion 11 (determinism)",
        t0.elapsed(),
        Duration::from_secs(600),
    );
}
