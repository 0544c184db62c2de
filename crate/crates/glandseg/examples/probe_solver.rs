// temporary: empirical sweep of solver behavior for acceptance tuning

use glandseg::fusion::WeightMap;
use glandseg::imaging::Image;
use glandseg::tvseg::{solve_tv, threshold_segmentation, PdParams, TvProblem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_problem(seed: u64) -> TvProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (32, 32);
    // spatially smooth-ish g: random waves
    let waves: Vec<(f64, f64, f64)> = (0..4)
        .map(|_| (rng.gen_range(0.02..0.2), rng.gen_range(0.02..0.2), rng.gen_range(0.0..6.28)))
        .collect();
    let mut g = vec![0.0f32; w * h];
    for i in 0..w * h {
        let (x, y) = ((i % w) as f64, (i / w) as f64);
        let v: f64 = waves.iter().map(|&(fx, fy, p)| ((fx * x + fy * y) * 6.28 + p).cos()).sum();
        g[i] = ((v / 4.0).abs().powf(1.2)).max(0.001).min(1.0) as f32;
    }
    let weights: Vec<f64> = (0..w * h)
        .map(|_| {
            if rng.gen_bool(0.2) {
                0.0
            } else {
                let logit: f64 = rng.gen_range(0.4..6.0);
                if rng.gen_bool(0.5) {
                    -logit
                } else {
                    logit
                }
            }
        })
        .collect();
    let lambda = (rng.gen_range(0.05f64.ln()..2.0f64.ln())).exp();
    let g = Image::from_data(w, h, 1, g, (0.0, 1.0)).unwrap();
    TvProblem::new(&g, &WeightMap::new(w, h, weights).unwrap(), lambda).unwrap()
}

fn main() {
    let pd = PdParams::default();
    let mut converged = 0;
    let mut worst_monotone_violation = 0.0f64;
    let mut max_iters_seen = 0;
    for seed in 0..100u64 {
        let p = random_problem(seed);
        let s = solve_tv(&p, &pd).unwrap();
        if s.converged {
            converged += 1;
        }
        max_iters_seen = max_iters_seen.max(s.iterations);
        for w in s.checks.windows(2) {
            let slack = 1e-9 * w[0].primal_energy.abs().max(1.0);
            let viol = w[1].primal_energy - w[0].primal_energy - slack;
            worst_monotone_violation = worst_monotone_violation.max(viol);
        }
    }
    println!("converged {converged}/100, max iters {max_iters_seen}");
    println!("worst energy-monotonicity violation beyond slack: {worst_monotone_violation:e}");

    // disk problem: u0=0 vs u0=1 vs 50k reference
    let size = 64;
    let c = 32.0;
    let weights: Vec<f64> = (0..size * size)
        .map(|i| {
            let (x, y) = ((i % size) as f64, (i / size) as f64);
            if (x - c).powi(2) + (y - c).powi(2) < 144.0 {
                -2.0
            } else {
                2.0
            }
        })
        .collect();
    let g = Image::from_data(size, size, 1, vec![1.0; size * size], (0.0, 1.0)).unwrap();
    let problem = TvProblem::new(&g, &WeightMap::new(size, size, weights).unwrap(), 0.1).unwrap();
    let a = solve_tv(&problem, &PdParams { u_init: 0.0, ..pd }).unwrap();
    let b = solve_tv(&problem, &PdParams { u_init: 1.0, ..pd }).unwrap();
    let reference = solve_tv(
        &problem,
        &PdParams {
            u_init: 0.5,
            max_iters: 50_000,
            gap_tolerance: 0.0,
            ..pd
        },
    )
    .unwrap();
    let ma = threshold_segmentation(&a);
    let mb = threshold_segmentation(&b);
    let mr = threshold_segmentation(&reference);
    let diff = |x: &[f32], y: &[f32]| {
        x.iter().zip(y.iter()).filter(|(a, b)| a != b).count() as f64 / x.len() as f64
    };
    println!(
        "disk: a iters={} gap={:.2e}; b iters={} gap={:.2e}; ref final gap={:.2e}",
        a.iterations, a.relative_gap, b.iterations, b.relative_gap, reference.relative_gap
    );
    println!(
        "mask diffs: a-vs-b {:.4}%, a-vs-ref {:.4}%, b-vs-ref {:.4}%, fg(ref)={}",
        100.0 * diff(ma.data(), mb.data()),
        100.0 * diff(ma.data(), mr.data()),
        100.0 * diff(mb.data(), mr.data()),
        mr.data().iter().filter(|&&v| v > 0.0).count()
    );
}
