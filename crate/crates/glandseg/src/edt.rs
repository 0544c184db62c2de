//! Exact Euclidean distance transform (Felzenszwalb-Huttenlocher) on a
//! binary seed mask; shared by the separator ground-truth generator and
//! the Hausdorff metric.

const INF: f64 = 1e20;

/// 1-D squared-distance transform of a sampled function.
fn dt1d(f: &[f64], d: &mut [f64]) {
    let n = f.len();
    let mut v = vec![0usize; n];
    let mut z = vec![0.0f64; n + 1];
    let mut k = 0usize;
    v[0] = 0;
    z[0] = -INF;
    z[1] = INF;
    for q in 1..n {
        let mut s;
        loop {
            let p = v[k];
            s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q - p) as f64);
            if s <= z[k] {
                if k == 0 {
                    break;
                }
                k -= 1;
            } else {
                break;
            }
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = INF;
    }
    k = 0;
    for q in 0..n {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let diff = q as f64 - v[k] as f64;
        d[q] = diff * diff + f[v[k]];
    }
}

/// Squared Euclidean distance from each pixel to the nearest seed pixel.
/// Pixels with no seed anywhere stay at a large sentinel (>= 1e20).
pub fn squared_edt(seeds: &[bool], width: usize, height: usize) -> Vec<f64> {
    assert_eq!(seeds.len(), width * height);
    let mut grid: Vec<f64> = seeds.iter().map(|&s| if s { 0.0 } else { INF }).collect();

    // columns
    let mut f = vec![0.0; height];
    let mut d = vec![0.0; height];
    for x in 0..width {
        for y in 0..height {
            f[y] = grid[y * width + x];
        }
        dt1d(&f, &mut d);
        for y in 0..height {
            grid[y * width + x] = d[y];
        }
    }
    // rows
    let mut f = vec![0.0; width];
    let mut d = vec![0.0; width];
    for y in 0..height {
        f.copy_from_slice(&grid[y * width..(y + 1) * width]);
        dt1d(&f, &mut d);
        grid[y * width..(y + 1) * width].copy_from_slice(&d);
    }
    grid
}
