//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use rand::RngCore;

use condquant::measures::{distance_squared, DiscreteMeasure};
use condquant::net::Activation;
use condquant::oracle::{
    interpolated_quantizer, quantile_quantizer, static_quantizer, InterpolationGrid, QuantileFunction,
    StaticQuantizerConfig,
};
use condquant::rng::tag;
use condquant::samplers::{additive_gaussian, multiplicative_gaussian};
use condquant::special::norm_inv_cdf;
use condquant::trainer::{loss_on_batch, train, write_train_log, ConditionBatch, TrainConfig, TrainReport};
use condquant::{KernelParams, NetArchitecture, QuantizerNet, StreamRng};

const SEED: u64 = 1;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn report(id: usize, title: &str, elapsed: std::time::Duration, o: &Outcome) -> bool {
    println!(
        "[{}] criterion {id}: {title} ({}; {:.1}s)",
        if o.pass { "PASS" } else { "FAIL" },
        o.detail,
        elapsed.as_secs_f64()
    );
    o.pass
}

fn naive_huber(p: (f64, f64), u: &[f64], v: &[f64]) -> f64 {
    let d2: f64 = u.iter().zip(v).map(|(s, t)| (s - t) * (s - t)).sum();
    (p.0 * p.0 + d2).powf(p.1 / 2.0) - p.0.powf(p.1)
}

fn naive_distance(p: (f64, f64), y: &[Vec<f64>], wy: &[f64], z: &[Vec<f64>], wz: &[f64]) -> f64 {
    let mut cross = 0.0;
    for i in 0..y.len() {
        for j in 0..z.len() {
            cross += wy[i] * wz[j] * naive_huber(p, &y[i], &z[j]);
        }
    }
    let mut syy = 0.0;
    for i in 0..y.len() {
        for j in 0..y.len() {
            syy += wy[i] * wy[j] * naive_huber(p, &y[i], &y[j]);
        }
    }
    let mut szz = 0.0;
    for i in 0..z.len() {
        for j in 0..z.len() {
            szz += wz[i] * wz[j] * naive_huber(p, &z[i], &z[j]);
        }
    }
    cross - 0.5 * syy - 0.5 * szz
}

fn activation_pattern(net: &QuantizerNet, xs: &[Vec<f64>]) -> Vec<bool> {
    xs.iter()
        .flat_map(|x| {
            let cache = net.forward_cached(x).unwrap();
            cache
                .hidden_pre_activations()
                .iter()
                .flatten()
                .map(|z| *z > 0.0)
                .collect::<Vec<_>>()
        })
        .collect()
}

fn criterion_1() -> Outcome {
    let mut rng = StreamRng::substream(SEED, &[1]);
    let h = 1e-5;
    let (mut checked, mut skipped, mut failed) = (0, 0, 0);
    let mut worst: f64 = 0.0;
    while checked < 50 {
        let n_x = 1 + rng.index(2);
        let n_y = 1 + rng.index(2);
        let q = 1 + rng.index(3);
        let j = 1 + rng.index(4);
        let depth = 1 + rng.index(3);
        let width = 1 + rng.index(4);
        let b = 1 + rng.index(3);
        let a = 10f64.powf(-6.0 + 6.0 * rng.uniform());
        let r = 0.5 + 1.3 * rng.uniform();
        let p = KernelParams::new(a, r).unwrap();
        let arch = NetArchitecture::with_layers(n_x, n_y, q, depth, width, Activation::default()).unwrap();
        let mut net = QuantizerNet::init(arch, rng.next_u64());
        // nonzero biases so that the pre-activations are generic
        for v in net.params_mut() {
            *v += 0.1 * rng.standard_normal();
        }
        let xs: Vec<Vec<f64>> = (0..b)
            .map(|_| (0..n_x).map(|_| rng.standard_normal()).collect())
            .collect();
        let samples = (0..b)
            .map(|_| {
                (0..j)
                    .map(|_| (0..n_y).map(|_| rng.standard_normal()).collect())
                    .collect()
            })
            .collect();
        let batch = ConditionBatch { xs, samples };

        let base = activation_pattern(&net, &batch.xs);
        let g = loss_on_batch(&net, &p, &batch, 0).unwrap().grad;
        let mut fd = Vec::with_capacity(g.len());
        let mut crosses_kink = false;
        for k in 0..g.len() {
            let mut plus = net.clone();
            plus.params_mut()[k] += h;
            let mut minus = net.clone();
            minus.params_mut()[k] -= h;
            if activation_pattern(&plus, &batch.xs) != base || activation_pattern(&minus, &batch.xs) != base {
                crosses_kink = true;
                break;
            }
            let lp = loss_on_batch(&plus, &p, &batch, 0).unwrap().loss;
            let lm = loss_on_batch(&minus, &p, &batch, 0).unwrap().loss;
            fd.push((lp - lm) / (2.0 * h));
        }
        if crosses_kink {
            skipped += 1;
            continue;
        }
        let err = g.iter().zip(&fd).map(|(s, t)| (s - t).powi(2)).sum::<f64>().sqrt();
        let norm = fd.iter().map(|v| v * v).sum::<f64>().sqrt();
        let rel = if norm == 0.0 { err } else { err / norm };
        worst = worst.max(rel);
        if rel > 1e-4 {
            failed += 1;
        }
        checked += 1;
    }
    outcome(
        failed == 0,
        format!("{checked} instances, {failed} over 1e-4, worst relative error {worst:.2e}, {skipped} kink-crossing draws replaced"),
    )
}

fn criterion_2() -> Outcome {
    let mut rng = StreamRng::substream(SEED, &[2]);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let dim = 1 + rng.index(3);
        let l = 1 + rng.index(64);
        let m = 1 + rng.index(64);
        let a = if rng.uniform() < 0.2 {
            0.0
        } else {
            10f64.powf(-6.0 + 6.0 * rng.uniform())
        };
        let r = 0.1 + 1.8 * rng.uniform();
        let mut draw = |n: usize| -> (Vec<Vec<f64>>, Vec<f64>) {
            let pts = (0..n)
                .map(|_| (0..dim).map(|_| 2.0 * rng.standard_normal()).collect())
                .collect();
            let raw: Vec<f64> = (0..n).map(|_| 0.1 + rng.uniform()).collect();
            let s: f64 = raw.iter().sum();
            (pts, raw.iter().map(|w| w / s).collect())
        };
        let (y, wy) = draw(l);
        let (z, wz) = draw(m);
        let p = KernelParams::new(a, r).unwrap();
        let m1 = DiscreteMeasure::new(&y, wy.clone()).unwrap();
        let m2 = DiscreteMeasure::new(&z, wz.clone()).unwrap();
        let prod = distance_squared(&p, &m1, &m2).unwrap();
        let naive = naive_distance((a, r), &y, &wy, &z, &wz);
        worst = worst.max((prod - naive).abs() / naive.abs());
    }
    outcome(
        worst <= 1e-12,
        format!("200 instances, worst relative error {worst:.2e}"),
    )
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

fn criterion_3_config() -> TrainConfig {
    TrainConfig {
        batch_size: 128,
        samples_per_condition: 64,
        kernel: KernelParams::new(1e-6, 1.0).unwrap(),
        max_iterations: 3000,
        seed: SEED,
        ..TrainConfig::default()
    }
}

fn train_criterion_3() -> (QuantizerNet, TrainReport) {
    let arch = NetArchitecture::new(1, 1, 5).unwrap();
    train(&criterion_3_config(), arch, &additive_gaussian(1).unwrap(), None).unwrap()
}

fn criterion_3(net: &QuantizerNet) -> Outcome {
    let mut worst: f64 = 0.0;
    for i in 0..=20 {
        let x = -1.0 + 0.1 * i as f64;
        let ys = sorted(net.forward(&[x]).unwrap().into_iter().map(|p| p[0]).collect());
        for (q, y) in ys.iter().enumerate() {
            let target = x + norm_inv_cdf((q as f64 + 0.5) / 5.0);
            worst = worst.max((y - target).abs());
        }
    }
    outcome(worst < 0.15, format!("max error {worst:.4} over 21 grid points"))
}

fn criterion_4() -> Outcome {
    let p = KernelParams::new(1e-6, 1.0).unwrap();
    let cfg = StaticQuantizerConfig::new(5, 3000, SEED);
    let res = static_quantizer(&p, |rng, n| (0..n).map(|_| vec![rng.standard_normal()]).collect(), &cfg).unwrap();
    let got = sorted(res.points.iter().map(|p| p[0]).collect());
    let expected = [-1.2816, -0.5244, 0.0, 0.5244, 1.2816];
    let worst = got
        .iter()
        .zip(&expected)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    outcome(worst <= 0.05, format!("points {got:.4?}, max error {worst:.4}"))
}

fn train_2d(sampler: &dyn condquant::ConditionalSampler) -> (QuantizerNet, TrainReport) {
    let cfg = TrainConfig {
        max_iterations: 2000,
        seed: SEED,
        ..TrainConfig::default()
    };
    train(&cfg, NetArchitecture::new(2, 2, 10).unwrap(), sampler, None).unwrap()
}

fn criterion_5(net: &QuantizerNet) -> Outcome {
    let mut rng = StreamRng::substream(SEED, &[tag::EVAL, 5]);
    let mut dists = Vec::new();
    for _ in 0..5 {
        let x = vec![rng.standard_normal(), rng.standard_normal()];
        let pts = net.forward(&x).unwrap();
        let c: Vec<f64> = (0..2)
            .map(|k| pts.iter().map(|p| p[k]).sum::<f64>() / pts.len() as f64)
            .collect();
        dists.push(((c[0] - x[0]).powi(2) + (c[1] - x[1]).powi(2)).sqrt());
    }
    let within = dists.iter().filter(|d| **d <= 0.3).count();
    outcome(
        within >= 4,
        format!("{within}/5 centroids within 0.3, distances {dists:.3?}"),
    )
}

fn sample_std(pts: &[Vec<f64>], k: usize) -> f64 {
    let n = pts.len() as f64;
    let m = pts.iter().map(|p| p[k]).sum::<f64>() / n;
    (pts.iter().map(|p| (p[k] - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

fn criterion_6(net: &QuantizerNet) -> Outcome {
    let a = net.forward(&[2.0, 0.1]).unwrap();
    let b = net.forward(&[0.1, 2.0]).unwrap();
    let (a1, a2) = (sample_std(&a, 0), sample_std(&a, 1));
    let (b1, b2) = (sample_std(&b, 0), sample_std(&b, 1));
    outcome(
        a1 > 4.0 * a2 && b2 > 4.0 * b1,
        format!("x=(2,0.1): stds ({a1:.3}, {a2:.3}); x=(0.1,2): stds ({b1:.3}, {b2:.3})"),
    )
}

fn criterion_7(run3: &TrainReport, run5: &TrainReport) -> Outcome {
    let (h3, t3) = run3.head_tail_means(0.1);
    let (h5, t5) = run5.head_tail_means(0.1);
    outcome(
        t3 < 0.25 * h3 && t5 < 0.25 * h5,
        format!("last/first 10% mean loss: 1D {:.3}, 2D {:.3}", t3 / h3, t5 / h5),
    )
}

fn log_bytes(r: &TrainReport) -> Vec<u8> {
    let mut buf = Vec::new();
    write_train_log(r, &mut buf).unwrap();
    buf
}

fn criterion_8(first: &TrainReport) -> Outcome {
    let (_, again) = train_criterion_3();
    let (a, b) = (log_bytes(first), log_bytes(&again));
    outcome(a == b, format!("{} log bytes, identical: {}", a.len(), a == b))
}

fn criterion_9() -> Outcome {
    let base = QuantileFunction::normal(0.0, 1.0).unwrap();
    let oracle = |x: f64| quantile_quantizer(&base.shifted(x), 5);
    let grid = InterpolationGrid::from_fn(vec![-1.0, 0.0, 1.0], oracle).unwrap();
    let got = interpolated_quantizer(&grid, 0.5);
    let truth = oracle(0.5).unwrap();
    let worst = got.iter().zip(&truth).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    outcome(worst <= 0.02, format!("max error {worst:.2e}"))
}

fn main() -> ExitCode {
    let mut all = true;
    let mut run = |id: usize, title: &str, f: &mut dyn FnMut() -> Outcome| {
        let t = Instant::now();
        let o = f();
        all &= report(id, title, t.elapsed(), &o);
    };

    run(1, "end-to-end gradient vs central differences", &mut criterion_1);
    run(2, "distance_squared vs naive triple loop", &mut criterion_2);

    let t = Instant::now();
    let (net3, report3) = train_criterion_3();
    let train3 = t.elapsed();
    run(3, "1D additive Gaussian quantiles", &mut || {
        let mut o = criterion_3(&net3);
        o.detail = format!("{}, training {:.1}s", o.detail, train3.as_secs_f64());
        o
    });
    run(4, "static quantizer on N(0,1) vs quantile oracle", &mut criterion_4);

    let (net5, report5) = train_2d(&additive_gaussian(2).unwrap());
    run(5, "2D additive model follows the conditional mean", &mut || {
        criterion_5(&net5)
    });

    let (net6, _) = train_2d(&multiplicative_gaussian(2).unwrap());
    run(6, "2D multiplicative model scales with x", &mut || criterion_6(&net6));

    run(7, "loss convergence in criteria 3 and 5", &mut || {
        criterion_7(&report3, &report5)
    });
    run(8, "training log is reproducible", &mut || criterion_8(&report3));
    run(9, "interpolation baseline at x = 0.5", &mut criterion_9);

    if all {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: FAILED");
        ExitCode::FAILURE
    }
}
