//! Exact Euclidean distance transform on a grid (lower envelope of
//! parabolas, one pass per axis).

const FAR: f64 = 1e20;

/// Squared distance transform of one line, in place.
fn transform_line(f: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    if n == 0 {
        return;
    }
    let input = f.to_vec();
    let mut k = 0;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    let sq = |q: usize| (q * q) as f64;
    for q in 1..n {
        loop {
            let p = v[k];
            let s = ((input[q] + sq(q)) - (input[p] + sq(p))) / (2.0 * (q as f64 - p as f64));
            if s <= z[k] && k > 0 {
                k -= 1;
            } else {
                k += 1;
                v[k] = q;
                z[k] = s;
                z[k + 1] = f64::INFINITY;
                break;
            }
        }
    }
    k = 0;
    for (q, out) in f.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let dq = q as f64 - p as f64;
        *out = dq * dq + input[p];
    }
}

/// Euclidean distance (in cells) from every cell to the nearest `true`
/// cell of a row-major `rows × cols` mask. With no `true` cell every
/// distance is huge.
pub fn distance_transform(mask: &[bool], rows: usize, cols: usize) -> Vec<f64> {
    assert_eq!(mask.len(), rows * cols);
    let mut g: Vec<f64> = mask.iter().map(|&m| if m { 0.0 } else { FAR }).collect();
    let n = rows.max(cols);
    let (mut v, mut z) = (vec![0usize; n], vec![0f64; n + 1]);
    let mut line = vec![0f64; n];
    for c in 0..cols {
        for r in 0..rows {
            line[r] = g[r * cols + c];
        }
        transform_line(&mut line[..rows], &mut v, &mut z);
        for r in 0..rows {
            g[r * cols + c] = line[r];
        }
    }
    for r in 0..rows {
        transform_line(&mut g[r * cols..(r + 1) * cols], &mut v, &mut z);
    }
    g.into_iter().map(f64::sqrt).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let (rows, cols) = (rng.gen_range(1..25), rng.gen_range(1..25));
            let density = rng.gen_range(0.01..0.3);
            let mask: Vec<bool> = (0..rows * cols).map(|_| rng.gen_bool(density)).collect();
            if !mask.contains(&true) {
                continue;
            }
            let d = distance_transform(&mask, rows, cols);
            for i in 0..rows * cols {
                let (r, c) = ((i / cols) as f64, (i % cols) as f64);
                let brute = (0..rows * cols)
                    .filter(|&j| mask[j])
                    .map(|j| (((j / cols) as f64 - r).powi(2) + ((j % cols) as f64 - c).powi(2)).sqrt())
                    .fold(f64::INFINITY, f64::min);
                assert!((d[i] - brute).abs() < 1e-9, "{} vs {}", d[i], brute);
            }
        }
    }
}
