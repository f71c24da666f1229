//! Wall-clock scaling. Kept in its own binary so no other test shares the CPU
//! while it measures.

use std::time::Instant;

use atd_core::augment::GaussianNoise;
use atd_core::solver::{sao_run, GammaSetting, SaoConfig};
use atd_core::DenseTensor;

fn sweep_seconds(n: usize, rank: usize) -> f64 {
    let t = DenseTensor::from_fn(vec![n, 12, 12, 12], |i| (i.iter().sum::<usize>() % 7) as f64).unwrap();
    let aug = GaussianNoise::new(0.01).unwrap();
    let cfg = SaoConfig {
        rank,
        max_sweeps: 1,
        stop_tol: 0.0,
        alpha: 1e-3,
        beta: 2.0,
        gamma: GammaSetting::BatchSize,
        eta: 0.5,
        batch_size: 32,
        ..SaoConfig::default()
    };
    // best of three, after a warm-up run
    sao_run(&t, Some(&aug), &cfg).unwrap();
    (0..3)
        .map(|_| {
            let start = Instant::now();
            sao_run(&t, Some(&aug), &cfg).unwrap();
            start.elapsed().as_secs_f64()
        })
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn sweep_time_scales_linearly() {
    let n_ratio = sweep_seconds(1024, 8) / sweep_seconds(512, 8);
    let r_ratio = sweep_seconds(512, 16) / sweep_seconds(512, 8);
    assert!(n_ratio <= 2.3, "doubling N: {n_ratio:.2}x");
    assert!(r_ratio <= 2.3, "doubling R: {r_ratio:.2}x");
}
