//! Scratch run: tabular benchmark arms (to be deleted; dev aid only).
use rsc_core::data::{make_benchmark, BenchmarkName};
use rsc_core::model::NetworkParams;
use rsc_core::rsc::{RscConfig, RscMode};
use rsc_core::train::{train, Baseline, TrainConfig};

fn main() {
    let mut curves: Vec<Vec<f64>> = Vec::new();
    for arm in [Baseline::None, Baseline::Rsc] {
        let mut accs = Vec::new();
        let mut a4s = Vec::new();
        for seed in 0..5u64 {
            let bench = make_benchmark(BenchmarkName::TabularShift, seed).unwrap();
            let params = NetworkParams::init(bench.arch, 1000 + seed).unwrap();
            let cfg = TrainConfig {
                baseline: arm,
                seed,
                rsc: RscConfig { mode: RscMode::Elementwise, seed, ..RscConfig::default() },
                ..TrainConfig::default()
            };
            let out = train(params, &bench, &cfg).unwrap();
            let last = out.metrics.last().unwrap();
            accs.push(last.target.accuracy);
            if arm == Baseline::Rsc {
                a4s.push(
                    out.metrics[1..].iter().map(|m| m.a4_rate).sum::<f64>()
                        / (out.metrics.len() - 1) as f64,
                );
                curves.push(out.metrics.iter().map(|m| m.gamma_mean).collect());
            }
        }
        let mean = accs.iter().sum::<f64>() / accs.len() as f64;
        println!("{arm:?}: mean target acc {mean:.4} {accs:.3?}");
        if !a4s.is_empty() {
            println!("  a4 rates: {a4s:.4?}");
        }
    }
    let t = curves[0].len();
    let avg: Vec<f64> = (0..t)
        .map(|e| curves.iter().map(|c| c[e]).sum::<f64>() / curves.len() as f64)
        .collect();
    println!("seed-mean gamma: {avg:.4?}");
    let viol: Vec<(usize, f64)> = (2..t)
        .filter(|&i| avg[i] > avg[i - 1])
        .map(|i| (i, avg[i] / avg[i - 1]))
        .collect();
    println!("violations: {viol:?}");
}
