//! Benchmark fixtures shared by the criterion targets.

use glandseg::fusion::WeightMap;
use glandseg::imaging::Image;
use glandseg::tvseg::TvProblem;

/// Disk-shaped weight map on a constant edge field: the canonical solver
/// workload.
pub fn disk_problem(size: usize, lambda: f64) -> TvProblem {
    let c = size as f64 / 2.0;
    let r = size as f64 / 4.0;
    let weights: Vec<f64> = (0..size * size)
        .map(|i| {
            let (x, y) = ((i % size) as f64, (i / size) as f64);
            if (x - c).powi(2) + (y - c).powi(2) < r * r {
                -2.0
            } else {
                2.0
            }
        })
        .collect();
    let g = Image::from_data(size, size, 1, vec![1.0; size * size], (0.0, 1.0)).unwrap();
    let w = WeightMap::new(size, size, weights).unwrap();
    TvProblem::new(&g, &w, lambda).unwrap()
}
