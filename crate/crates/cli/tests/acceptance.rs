//! Acceptance gate: one test per release criterion, each printing a
//! `criterion N ...: PASS` line (visible with `--nocapture`).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use gridfreq_core::data::{
    apply_scaler, chronological_split, fit_scaler, invert_scaler, make_windows, parse_timestamp,
    resample_1min, Frame, RawRecords,
};
use gridfreq_core::ensemble::{combine_weighted, metric_mae, metric_mape, metric_mse, EnsembleSpec};
use gridfreq_core::model::{
    build_model, forward, model_backward, Building, ConvLSTMConfig, ModelParams, PARAM_TENSORS,
};
use gridfreq_core::nn::conv::{conv1d_backward, conv1d_forward, Conv1DParams};
use gridfreq_core::nn::dense::{dense_backward, dense_forward, DenseParams};
use gridfreq_core::nn::loss::{mae_loss, mse_loss};
use gridfreq_core::nn::lstm::{
    lstm_backward, lstm_cell_forward, lstm_sequence_forward, LSTMParams, LSTMState,
};
use gridfreq_core::nn::{relu, sigmoid, tanh_op, Mode};
use gridfreq_core::training::{evaluate_split, train, TrainConfig};
use gridfreq_core::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const FEATURE_COLS: [&str; 8] = ["V1", "V2", "I1", "I2", "P", "Q", "E", "Freq"];

fn rand_tensor(shape: &[usize], lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.random::<f64>() * (hi - lo) + lo).collect();
    Tensor::from_vec(data, shape).unwrap()
}

const EPS: f64 = 1e-6;
const INSTANCES: usize = 20;

/// Tracks the coordinate count and worst relative error across all
/// finite-difference sweeps of one criterion.
struct GradTally {
    coords: usize,
    worst: f64,
}

impl GradTally {
    fn new() -> Self {
        GradTally { coords: 0, worst: 0.0 }
    }

    fn check(&mut self, analytic: f64, numeric: f64, what: &str) {
        let diff = (analytic - numeric).abs();
        let rel = if diff < 1e-9 {
            0.0
        } else {
            diff / analytic.abs().max(numeric.abs())
        };
        assert!(
            rel < 1e-4,
            "{}: analytic {} vs numeric {} (rel err {})",
            what,
            analytic,
            numeric,
            rel
        );
        self.worst = self.worst.max(rel);
        self.coords += 1;
    }

    /// Sweeps every coordinate: `probe(k, v)` re-evaluates the objective
    /// with coordinate `k` set to `v`.
    fn sweep(
        &mut self,
        n: usize,
        v0: impl Fn(usize) -> f64,
        analytic: impl Fn(usize) -> f64,
        probe: impl Fn(usize, f64) -> f64,
        what: &str,
    ) {
        for k in 0..n {
            let v = v0(k);
            let numeric = (probe(k, v + EPS) - probe(k, v - EPS)) / (2.0 * EPS);
            self.check(analytic(k), numeric, &format!("{}[{}]", what, k));
        }
    }
}

fn weighted_sum(out: &Tensor, c: &Tensor) -> f64 {
    out.data().iter().zip(c.data().iter()).map(|(o, w)| o * w).sum()
}

/// Uniform magnitude in (floor, hi) with random sign, keeping values away
/// from activation kinks where finite differences are undefined.
fn rand_off_zero(shape: &[usize], floor: f64, hi: f64, rng: &mut ChaCha8Rng) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let mag = rng.random::<f64>() * (hi - floor) + floor;
            if rng.random::<f64>() < 0.5 {
                -mag
            } else {
                mag
            }
        })
        .collect();
    Tensor::from_vec(data, shape).unwrap()
}

fn lstm_slot(p: &mut LSTMParams, s: usize) -> &mut Tensor {
    match s {
        0 => &mut p.w_f,
        1 => &mut p.w_i,
        2 => &mut p.w_c,
        3 => &mut p.w_o,
        4 => &mut p.b_f,
        5 => &mut p.b_i,
        6 => &mut p.b_c,
        7 => &mut p.b_o,
        _ => unreachable!(),
    }
}

fn check_activations(tally: &mut GradTally, rng: &mut ChaCha8Rng) {
    type Act = fn(&Tensor) -> (Tensor, Box<dyn Fn(&Tensor) -> Tensor>);
    let acts: [(&str, Act, bool); 3] = [
        ("sigmoid", |t| {
            let (y, back) = sigmoid(t);
            (y, Box::new(back))
        }, false),
        ("tanh", |t| {
            let (y, back) = tanh_op(t);
            (y, Box::new(back))
        }, false),
        ("relu", |t| {
            let (y, back) = relu(t);
            (y, Box::new(back))
        }, true),
    ];
    for (name, act, off_zero) in acts {
        for inst in 0..INSTANCES {
            let x = if off_zero {
                rand_off_zero(&[2, 5], 0.01, 3.0, rng)
            } else {
                rand_tensor(&[2, 5], -3.0, 3.0, rng)
            };
            let c = rand_tensor(x.shape(), -1.0, 1.0, rng);
            let analytic = act(&x).1(&c);
            tally.sweep(
                x.len(),
                |k| x.data()[k],
                |k| analytic.data()[k],
                |k, v| {
                    let mut x2 = x.clone();
                    x2.data_mut()[k] = v;
                    weighted_sum(&act(&x2).0, &c)
                },
                &format!("{}#{} x", name, inst),
            );
        }
    }
}

fn check_conv1d(tally: &mut GradTally, rng: &mut ChaCha8Rng) {
    for inst in 0..INSTANCES {
        let p = Conv1DParams {
            kernels: rand_tensor(&[2, 3, 3], -0.7, 0.7, rng),
            bias: rand_tensor(&[2], -0.5, 0.5, rng),
            stride: 1,
            padding: 1,
        };
        let x = rand_tensor(&[2, 3, 6], -1.0, 1.0, rng);
        let (out, cache) = conv1d_forward(&x, &p).unwrap();
        let c = rand_tensor(out.shape(), -1.0, 1.0, rng);
        let (gx, grads) = conv1d_backward(&c, &cache, &p).unwrap();
        let with_x = |k: usize, v: f64| {
            let mut x2 = x.clone();
            x2.data_mut()[k] = v;
            weighted_sum(&conv1d_forward(&x2, &p).unwrap().0, &c)
        };
        tally.sweep(x.len(), |k| x.data()[k], |k| gx.data()[k], with_x, &format!("conv#{} x", inst));
        let with_kernel = |k: usize, v: f64| {
            let mut p2 = p.clone();
            p2.kernels.data_mut()[k] = v;
            weighted_sum(&conv1d_forward(&x, &p2).unwrap().0, &c)
        };
        tally.sweep(
            p.kernels.len(),
            |k| p.kernels.data()[k],
            |k| grads.kernels.data()[k],
            with_kernel,
            &format!("conv#{} kernels", inst),
        );
        let with_bias = |k: usize, v: f64| {
            let mut p2 = p.clone();
            p2.bias.data_mut()[k] = v;
            weighted_sum(&conv1d_forward(&x, &p2).unwrap().0, &c)
        };
        tally.sweep(
            p.bias.len(),
            |k| p.bias.data()[k],
            |k| grads.bias.data()[k],
            with_bias,
            &format!("conv#{} bias", inst),
        );
    }
}

/// One step exercises the cell; four steps route gradients through the
/// forget gate and the carried state.
fn check_lstm(tally: &mut GradTally, steps: usize, rng: &mut ChaCha8Rng) {
    for inst in 0..INSTANCES {
        let (hidden, input) = (3, 2);
        let mut p = LSTMParams::zeros(hidden, input);
        for s in 0..8 {
            let shape = if s < 4 { vec![hidden, hidden + input] } else { vec![hidden] };
            *lstm_slot(&mut p, s) = rand_tensor(&shape, -0.6, 0.6, rng);
        }
        let x = rand_tensor(&[2, steps, input], -1.0, 1.0, rng);
        let (h, cache) = lstm_sequence_forward(&x, &p).unwrap();
        let c = rand_tensor(h.shape(), -1.0, 1.0, rng);
        let (gx, grads) = lstm_backward(&c, &cache, &p).unwrap();
        let with_x = |k: usize, v: f64| {
            let mut x2 = x.clone();
            x2.data_mut()[k] = v;
            weighted_sum(&lstm_sequence_forward(&x2, &p).unwrap().0, &c)
        };
        tally.sweep(
            x.len(),
            |k| x.data()[k],
            |k| gx.data()[k],
            with_x,
            &format!("lstm T={}#{} x", steps, inst),
        );
        let g = [
            &grads.w_f, &grads.w_i, &grads.w_c, &grads.w_o,
            &grads.b_f, &grads.b_i, &grads.b_c, &grads.b_o,
        ];
        let slots = [&p.w_f, &p.w_i, &p.w_c, &p.w_o, &p.b_f, &p.b_i, &p.b_c, &p.b_o];
        for s in 0..8 {
            let with_slot = |k: usize, v: f64| {
                let mut p2 = p.clone();
                lstm_slot(&mut p2, s).data_mut()[k] = v;
                weighted_sum(&lstm_sequence_forward(&x, &p2).unwrap().0, &c)
            };
            tally.sweep(
                slots[s].len(),
                |k| slots[s].data()[k],
                |k| g[s].data()[k],
                with_slot,
                &format!("lstm T={}#{} slot{}", steps, inst, s),
            );
        }
    }
}

fn check_dense(tally: &mut GradTally, rng: &mut ChaCha8Rng) {
    for inst in 0..INSTANCES {
        let p = DenseParams {
            weight: rand_tensor(&[3, 4], -0.8, 0.8, rng),
            bias: rand_tensor(&[3], -0.5, 0.5, rng),
        };
        let x = rand_tensor(&[2, 4], -1.0, 1.0, rng);
        let (out, cache) = dense_forward(&x, &p).unwrap();
        let c = rand_tensor(out.shape(), -1.0, 1.0, rng);
        let (gx, grads) = dense_backward(&c, &cache, &p).unwrap();
        let with_x = |k: usize, v: f64| {
            let mut x2 = x.clone();
            x2.data_mut()[k] = v;
            weighted_sum(&dense_forward(&x2, &p).unwrap().0, &c)
        };
        tally.sweep(x.len(), |k| x.data()[k], |k| gx.data()[k], with_x, &format!("dense#{} x", inst));
        let with_w = |k: usize, v: f64| {
            let mut p2 = p.clone();
            p2.weight.data_mut()[k] = v;
            weighted_sum(&dense_forward(&x, &p2).unwrap().0, &c)
        };
        tally.sweep(
            p.weight.len(),
            |k| p.weight.data()[k],
            |k| grads.weight.data()[k],
            with_w,
            &format!("dense#{} weight", inst),
        );
        let with_b = |k: usize, v: f64| {
            let mut p2 = p.clone();
            p2.bias.data_mut()[k] = v;
            weighted_sum(&dense_forward(&x, &p2).unwrap().0, &c)
        };
        tally.sweep(
            p.bias.len(),
            |k| p.bias.data()[k],
            |k| grads.bias.data()[k],
            with_b,
            &format!("dense#{} bias", inst),
        );
    }
}

fn check_losses(tally: &mut GradTally, rng: &mut ChaCha8Rng) {
    for inst in 0..INSTANCES {
        let actual = rand_tensor(&[5, 1], -1.0, 1.0, rng);
        // Keep residuals off the MAE kink at zero.
        let offset = rand_off_zero(&[5, 1], 0.05, 0.9, rng);
        let pred = actual.zip_map(&offset, |a, o| a + o);
        for (name, f) in [
            ("mse", mse_loss as fn(&Tensor, &Tensor) -> gridfreq_core::Result<(f64, Tensor)>),
            ("mae", mae_loss),
        ] {
            let (_, g) = f(&pred, &actual).unwrap();
            tally.sweep(
                pred.len(),
                |k| pred.data()[k],
                |k| g.data()[k],
                |k, v| {
                    let mut p2 = pred.clone();
                    p2.data_mut()[k] = v;
                    f(&p2, &actual).unwrap().0
                },
                &format!("{}#{} pred", name, inst),
            );
        }
    }
}

fn check_composite(tally: &mut GradTally, rng: &mut ChaCha8Rng) {
    let cfg = ConvLSTMConfig {
        window_length: 3,
        conv_out_channels: 4,
        kernel_size: 3,
        padding: 1,
        stride: 1,
        lstm_input: 4,
        lstm_hidden: 5,
        dropout_rate: 0.0,
        fc1_out: 3,
        fc2_out: 1,
    };
    for inst in 0..INSTANCES {
        let mut model = build_model(&cfg, inst as u64).unwrap();
        // Zero-initialized biases leave ReLU pre-activations exactly on the
        // kink whenever a whole layer input dies; random nonzero values in
        // every tensor avoid that.
        for t in model.tensors_mut() {
            for v in t.data_mut() {
                *v = rng.random::<f64>() - 0.5;
            }
        }
        let x = rand_tensor(&[2, cfg.window_length, cfg.lstm_input], 0.05, 0.95, rng);
        let c = rand_tensor(&[2, cfg.fc2_out], -1.0, 1.0, rng);
        let objective = |p: &ModelParams| -> f64 {
            let mut r = ChaCha8Rng::seed_from_u64(0);
            weighted_sum(&forward(p, &x, Mode::Eval, &mut r).unwrap().0, &c)
        };
        let mut r = ChaCha8Rng::seed_from_u64(0);
        let (_, cache) = forward(&model, &x, Mode::Eval, &mut r).unwrap();
        let grads = model_backward(&model, &cache, &c).unwrap();
        for t in 0..PARAM_TENSORS {
            tally.sweep(
                model.tensors()[t].len(),
                |k| model.tensors()[t].data()[k],
                |k| grads.tensors()[t].data()[k],
                |k, v| {
                    let mut p2 = model.clone();
                    p2.tensors_mut()[t].data_mut()[k] = v;
                    objective(&p2)
                },
                &format!("composite#{} {}", inst, ModelParams::tensor_names()[t]),
            );
        }
    }
}

/// Every layer, then the full composite at the reduced architecture,
/// against central finite differences.
#[test]
fn criterion_1_gradient_correctness() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let mut tally = GradTally::new();
    check_activations(&mut tally, &mut rng);
    check_conv1d(&mut tally, &mut rng);
    check_lstm(&mut tally, 1, &mut rng);
    check_lstm(&mut tally, 4, &mut rng);
    check_dense(&mut tally, &mut rng);
    check_losses(&mut tally, &mut rng);
    check_composite(&mut tally, &mut rng);
    let secs = started.elapsed().as_secs_f64();
    assert!(secs < 60.0, "gradient check took {:.1} s", secs);
    println!(
        "criterion 1 (gradient correctness): PASS - {} coordinates across all layers plus the composite, max rel err {:.2e}, {:.1} s",
        tally.coords, tally.worst, secs
    );
}

/// The zero-parameter cell collapses to its closed form: all gates 0.5,
/// `C_t = 0.5 C_prev`, `h_t = 0.5 tanh(0.5 C_prev)`.
#[test]
fn criterion_2_equation_fidelity() {
    let (hidden, input) = (4, 3);
    let p = LSTMParams::zeros(hidden, input);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..20 {
        let c_prev = rand_tensor(&[hidden], -2.0, 2.0, &mut rng);
        let state = LSTMState { h: Tensor::zeros(&[hidden]), c: c_prev.clone() };
        let x = rand_tensor(&[input], -3.0, 3.0, &mut rng);
        let (next, _) = lstm_cell_forward(&x, &state, &p).unwrap();
        for k in 0..hidden {
            let c_expect = 0.5 * c_prev.data()[k];
            let h_expect = 0.5 * (0.5 * c_prev.data()[k]).tanh();
            assert!((next.c.data()[k] - c_expect).abs() < 1e-12);
            assert!((next.h.data()[k] - h_expect).abs() < 1e-12);
        }
    }
    println!("criterion 2 (equation fidelity): PASS - zero-parameter cell matches closed form to 1e-12");
}

#[test]
fn criterion_3_metric_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for case in 0..100 {
        let n = 1 + (rng.random::<f64>() * 40.0) as usize;
        let pred: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
        let actual: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 4.0 + 0.5).collect();
        let (mut mse, mut mae, mut mape) = (0.0, 0.0, 0.0);
        for k in 0..n {
            let d: f64 = pred[k] - actual[k];
            mse += d * d;
            mae += d.abs();
            mape += (d / actual[k]).abs();
        }
        let nf = n as f64;
        assert!((metric_mse(&pred, &actual).unwrap() - mse / nf).abs() < 1e-12, "case {}", case);
        assert!((metric_mae(&pred, &actual).unwrap() - mae / nf).abs() < 1e-12, "case {}", case);
        assert!(
            (metric_mape(&pred, &actual).unwrap().value - mape / nf).abs() < 1e-12,
            "case {}",
            case
        );
    }
    let pred = [1.0, 2.0];
    let actual = [2.0, 2.0];
    assert!((metric_mse(&pred, &actual).unwrap() - 0.5).abs() < 1e-15);
    assert!((metric_mae(&pred, &actual).unwrap() - 0.5).abs() < 1e-15);
    assert!((metric_mape(&pred, &actual).unwrap().value - 0.25).abs() < 1e-15);
    println!("criterion 3 (metric oracles): PASS - 100 random vectors within 1e-12 plus the hand case");
}

#[test]
fn criterion_4_pipeline_invariants() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let start = parse_timestamp("2024-01-01 00:00:00").unwrap();
    for case in 0..50 {
        let rows = 5 + (rng.random::<f64>() * 30.0) as usize;
        let cols = 1 + case % 3;
        let names: Vec<String> = (0..cols).map(|c| format!("c{}", c)).collect();
        let values: Vec<f64> =
            (0..rows * cols).map(|_| rng.random::<f64>() * 2000.0 - 1000.0).collect();
        let frame = Frame::new("t", start, names.clone(), values).unwrap();

        // Scaler round trip within 1e-9 and unit-interval image on the fit range.
        let scaler = fit_scaler(&frame, 0..rows).unwrap();
        let scaled = apply_scaler(&frame, &scaler).unwrap();
        for (c, name) in names.iter().enumerate() {
            let col: Vec<f64> = (0..rows).map(|r| scaled.value(r, c)).collect();
            assert!(col.iter().all(|v| (0.0..=1.0).contains(v)));
            let back = invert_scaler(&col, &scaler, name).unwrap();
            for r in 0..rows {
                let orig = frame.value(r, c);
                assert!((orig - back[r]).abs() <= 1e-9 * orig.abs().max(1.0));
            }
        }

        // Windowing: count n - L, window j covers rows j..j+L, target row j+L.
        let window = 1 + (rng.random::<f64>() * (rows as f64 - 2.0)) as usize;
        let ds = make_windows(&frame, window, &names[cols - 1]).unwrap();
        assert_eq!(ds.count(), rows - window);
        for j in [0, ds.count() / 2, ds.count() - 1] {
            assert_eq!(ds.source_rows[j], j + window);
            assert_eq!(
                ds.targets.data()[j].to_bits(),
                frame.value(j + window, cols - 1).to_bits()
            );
            for t in 0..window {
                for c in 0..cols {
                    assert_eq!(ds.inputs.at3(j, t, c).to_bits(), frame.value(j + t, c).to_bits());
                }
            }
        }

        // Chronological split: floor count and strict ordering.
        let fraction = 0.1 + rng.random::<f64>() * 0.8;
        let (tr, te) = chronological_split(&ds, fraction).unwrap();
        assert_eq!(tr.count(), (ds.count() as f64 * fraction).floor() as usize);
        assert_eq!(tr.count() + te.count(), ds.count());
        if let (Some(a), Some(b)) = (tr.source_rows.last(), te.source_rows.first()) {
            assert!(a < b);
        }
    }

    // Resampling is invariant to record order, bit for bit.
    for case in 0..50 {
        let n = 2 + case % 12;
        let minutes: Vec<i64> = (0..n).map(|_| (rng.random::<f64>() * 5.0) as i64).collect();
        let vals: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 1e6 - 5e5).collect();
        let build = |order: &[usize]| RawRecords {
            timestamps: order
                .iter()
                .map(|&k| start + chrono::Duration::minutes(minutes[k]))
                .collect(),
            columns: vec!["v".to_string()],
            values: order.iter().map(|&k| vals[k]).collect(),
        };
        let identity: Vec<usize> = (0..n).collect();
        let base = resample_1min(&build(&identity)).unwrap();
        for _ in 0..3 {
            let mut perm = identity.clone();
            for i in (1..n).rev() {
                let j = (rng.random::<f64>() * (i + 1) as f64) as usize;
                perm.swap(i, j);
            }
            let shuffled = resample_1min(&build(&perm)).unwrap();
            assert_eq!(base.n_rows(), shuffled.n_rows());
            for r in 0..base.n_rows() {
                assert_eq!(base.value(r, 0).to_bits(), shuffled.value(r, 0).to_bits());
            }
        }
    }
    println!("criterion 4 (pipeline invariants): PASS - 50 randomized cases per invariant");
}

/// Sinusoid-plus-noise series: eight channels carrying a shared smooth
/// signal under independent observation noise. A model that learns the
/// smooth component beats persistence, which pays the noise twice.
fn synthetic_learn_frame(rows: usize, seed: u64) -> Frame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let feat_noise = Normal::new(0.0, 0.05).unwrap();
    let freq_noise = Normal::new(0.0, 0.01).unwrap();
    let coef = [0.6, 0.8, 1.0, 1.2, 1.4, 0.9, 1.1];
    let mut values = Vec::with_capacity(rows * 8);
    for k in 0..rows {
        let t = k as f64;
        let base = 0.04 * (2.0 * std::f64::consts::PI * t / 720.0).sin()
            + 0.015 * (2.0 * std::f64::consts::PI * t / 97.0).sin();
        for c in coef {
            values.push(220.0 + 15.0 * c * base + feat_noise.sample(&mut rng));
        }
        values.push(60.0 + base + freq_noise.sample(&mut rng));
    }
    Frame::new(
        "synthetic",
        parse_timestamp("2024-03-01 00:00:00").unwrap(),
        FEATURE_COLS.iter().map(|s| s.to_string()).collect(),
        values,
    )
    .unwrap()
}

#[test]
fn criterion_5_learnability_smoke() {
    let started = Instant::now();
    let frame = synthetic_learn_frame(5000, 20240815);
    let model_cfg = ConvLSTMConfig::for_building(Building::C);
    let window = model_cfg.window_length;
    let n_windows = frame.n_rows() - window;
    let n_train = (n_windows as f64 * 0.8).floor() as usize;
    let scaler = fit_scaler(&frame, 0..window + n_train).unwrap();
    let scaled = apply_scaler(&frame, &scaler).unwrap();
    let ds = make_windows(&scaled, window, "Freq").unwrap();
    let (train_set, test_set) = chronological_split(&ds, 0.8).unwrap();

    let mut train_cfg = TrainConfig::for_building(Building::C);
    train_cfg.epochs = 300;
    let model0 = build_model(&model_cfg, 20240815).unwrap();
    let (model, _) = train(model0, &train_set, &test_set, &train_cfg).unwrap();
    let (test_mse, _) = evaluate_split(&model, &test_set).unwrap();

    // Persistence predicts the previous minute's value.
    let freq_col = FEATURE_COLS.len() - 1;
    let mut persistence = 0.0;
    for j in 0..test_set.count() {
        let prev = test_set.inputs.at3(j, window - 1, freq_col);
        let d = prev - test_set.targets.data()[j];
        persistence += d * d;
    }
    persistence /= test_set.count() as f64;

    let secs = started.elapsed().as_secs_f64();
    assert!(
        test_mse < persistence,
        "model test MSE {} did not beat persistence {}",
        test_mse,
        persistence
    );
    println!(
        "criterion 5 (learnability smoke): PASS - test MSE {:.4e} < persistence {:.4e}, 300 epochs in {:.0} s",
        test_mse, persistence, secs
    );
}

#[test]
fn criterion_6_ensemble_algebra() {
    let spec = EnsembleSpec::default_weights();
    spec.validate().unwrap();
    assert_eq!(
        spec.members,
        vec![
            ("A".to_string(), 0.3),
            ("B".to_string(), 0.4),
            ("C".to_string(), 0.3)
        ]
    );

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..50 {
        let n = 1 + (rng.random::<f64>() * 30.0) as usize;
        let members: Vec<Tensor> =
            (0..3).map(|_| rand_tensor(&[n], -2.0, 2.0, &mut rng)).collect();
        let raw: [f64; 3] = [rng.random(), rng.random(), rng.random()];
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let refs: Vec<&Tensor> = members.iter().collect();
        let combined = combine_weighted(&refs, &weights).unwrap();
        for k in 0..n {
            let vals = [members[0].data()[k], members[1].data()[k], members[2].data()[k]];
            let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert!(combined.data()[k] >= lo - 1e-12 && combined.data()[k] <= hi + 1e-12);
        }

        let one_hot = combine_weighted(&refs, &[1.0, 0.0, 0.0]).unwrap();
        assert!(one_hot.bits_eq(&members[0]), "one-hot weights must be bit-exact");
    }
    println!(
        "criterion 6 (ensemble algebra): PASS - convexity over 50 cases, bit-exact one-hot, default weights 0.3/0.4/0.3"
    );
}

fn write_synthetic_csv(path: &Path, rows: usize, phase: f64, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.02).unwrap();
    let mut text = String::from("Time,");
    text.push_str(&FEATURE_COLS.join(","));
    text.push('\n');
    for k in 0..rows {
        let (dd, hh, mm) = (1 + k / 1440, (k / 60) % 24, k % 60);
        let base = 0.03 * (0.01 * k as f64 + phase).sin();
        let _ = write!(text, "2024-06-{:02} {:02}:{:02}:11", dd, hh, mm);
        for j in 0..7 {
            let _ = write!(text, ",{:.9}", 220.0 + 12.0 * base + j as f64 + noise.sample(&mut rng));
        }
        let _ = writeln!(text, ",{:.9}", 60.0 + base + 0.1 * noise.sample(&mut rng));
    }
    std::fs::write(path, text).unwrap();
}

fn write_config(dir: &Path, seed: u64, epochs: usize) -> PathBuf {
    let mut text = format!("seed = {}\ntrain_fraction = 0.8\n", seed);
    for (id, file) in [("A", "a.csv"), ("B", "b.csv"), ("C", "c.csv")] {
        let _ = write!(
            text,
            "\n[building.{}]\ncsv_path = \"{}\"\ntimestamp_col = \"Time\"\nfeature_cols = [{}]\nepochs = {}\n",
            id,
            dir.join("data").join(file).display(),
            FEATURE_COLS.iter().map(|c| format!("\"{}\"", c)).collect::<Vec<_>>().join(", "),
            epochs
        );
    }
    let path = dir.join("run.toml");
    std::fs::write(&path, text).unwrap();
    path
}

fn setup_run_dir(dir: &Path, seed: u64, epochs: usize) -> PathBuf {
    std::fs::create_dir_all(dir.join("data")).unwrap();
    for (k, file) in ["a.csv", "b.csv", "c.csv"].iter().enumerate() {
        write_synthetic_csv(&dir.join("data").join(file), 500, k as f64, 90 + k as u64);
    }
    write_config(dir, seed, epochs)
}

fn run_cli(config: &Path, out: &Path, args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_gridfreq"))
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("running gridfreq")
}

fn assert_ok(out: &std::process::Output, what: &str) {
    assert!(
        out.status.success(),
        "{} failed\nstdout: {}\nstderr: {}",
        what,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

/// The published measurement data is not reachable from this environment,
/// so per the release criteria this runs the substitute: the learnability
/// smoke (criterion 5) plus a three-building ensemble through the full CLI.
#[test]
fn criterion_7_end_to_end_cli() {
    let tmp = tempfile::tempdir().unwrap();
    let config = setup_run_dir(tmp.path(), 17, 4);
    let out = tmp.path().join("out");

    assert_ok(&run_cli(&config, &out, &["ingest"]), "ingest");
    assert_ok(&run_cli(&config, &out, &["train", "--all"]), "train");
    assert_ok(&run_cli(&config, &out, &["evaluate", "--split", "test"]), "evaluate");
    assert_ok(&run_cli(&config, &out, &["ensemble"]), "ensemble");
    assert_ok(&run_cli(&config, &out, &["export-curves"]), "export-curves");

    for b in ["A", "B", "C"] {
        for artifact in ["frame", "curve"] {
            assert!(out.join(format!("{}_{}.csv", artifact, b)).exists());
        }
        assert!(out.join(format!("dataset_{}.bin", b)).exists());
        assert!(out.join(format!("scaler_{}.json", b)).exists());
        assert!(out.join(format!("model_{}.clstm", b)).exists());
        assert!(out.join(format!("report_eval_{}_test.txt", b)).exists());
    }

    let report = std::fs::read_to_string(out.join("report_ensemble_A_test.txt")).unwrap();
    for needle in [
        "weight A: 0.3",
        "weight B: 0.4",
        "weight C: 0.3",
        "member: A",
        "member: B",
        "member: C",
        "member: ensemble",
        "ensemble_mse_le_min_member:",
    ] {
        assert!(report.contains(needle), "ensemble report missing '{}'", needle);
    }
    let pred = std::fs::read_to_string(out.join("pred_ensemble_A_test.csv")).unwrap();
    let header = pred.lines().next().unwrap();
    assert_eq!(
        header,
        "timestamp,actual,A,B,C,ensemble,actual_hz,A_hz,B_hz,C_hz,ensemble_hz"
    );
    let rows = pred.lines().count() - 1;
    assert!(rows > 50, "expected a populated prediction file, got {} rows", rows);

    let note = if std::env::var_os("NCUE_DATA_DIR").is_some() {
        " (NCUE_DATA_DIR set: run the full-preset comparison manually, see README)"
    } else {
        " (measurement dataset unavailable; synthetic substitute per the release criteria)"
    };
    println!(
        "criterion 7 (end-to-end CLI): PASS - 3 buildings ingested, trained, evaluated, ensembled{}",
        note
    );
}

#[test]
fn criterion_8_determinism() {
    let tmp = tempfile::tempdir().unwrap();
    let config = setup_run_dir(tmp.path(), 123, 2);
    let out1 = tmp.path().join("run1");
    let out2 = tmp.path().join("run2");
    for out in [&out1, &out2] {
        assert_ok(&run_cli(&config, out, &["ingest"]), "ingest");
        assert_ok(&run_cli(&config, out, &["train", "--all"]), "train");
        assert_ok(&run_cli(&config, out, &["ensemble"]), "ensemble");
    }

    let mut compared = 0;
    for name in [
        "dataset_A.bin",
        "dataset_B.bin",
        "dataset_C.bin",
        "model_A.clstm",
        "model_B.clstm",
        "model_C.clstm",
        "curve_A.csv",
        "curve_B.csv",
        "curve_C.csv",
        "pred_ensemble_A_test.csv",
    ] {
        let a = std::fs::read(out1.join(name)).unwrap();
        let b = std::fs::read(out2.join(name)).unwrap();
        assert_eq!(a, b, "{} differs between identical runs", name);
        compared += 1;
    }
    println!(
        "criterion 8 (determinism): PASS - {} artifacts byte-identical across two runs",
        compared
    );
}
