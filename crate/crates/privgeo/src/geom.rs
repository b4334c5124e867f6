//! Small dense-vector helpers shared by every module.
//!
//! Everything operates on `&[f64]` rows; no matrix library is used so the
//! entire numeric path stays visible and deterministic. Distance comparisons
//! elsewhere in the crate allow [`SLACK`] of absolute slop so points on a
//! closed-ball boundary are kept.

use rand::Rng;
use rand_chacha::ChaCha20Rng;

/// Absolute tolerance for norm/distance comparisons on closed balls.
pub const SLACK: f64 = 1e-9;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Squared Euclidean norm.
pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a)
}

pub fn norm(a: &[f64]) -> f64 {
    norm2(a).sqrt()
}

/// Squared Euclidean distance.
pub fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    dist2(a, b).sqrt()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn scale(a: &[f64], s: f64) -> Vec<f64> {
    a.iter().map(|x| x * s).collect()
}

/// Scale `a` into the closed unit ball if it lies outside.
pub fn project_to_unit_ball(a: &[f64]) -> Vec<f64> {
    let n = norm(a);
    if n > 1.0 {
        scale(a, 1.0 / n)
    } else {
        a.to_vec()
    }
}

/// Total order on float rows: coordinate-wise `total_cmp`.
pub fn lex_cmp(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        let c = x.total_cmp(y);
        if c != std::cmp::Ordering::Equal {
            return c;
        }
    }
    a.len().cmp(&b.len())
}

/// Exact bit-pattern key of a float row, usable as a dedup/map key.
pub fn bit_key(a: &[f64]) -> Vec<u64> {
    a.iter().map(|x| x.to_bits()).collect()
}

/// One standard normal draw (Box–Muller, one value per two uniforms, the
/// second uniform discarded to keep the stream layout simple).
pub fn std_normal(rng: &mut ChaCha20Rng) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>(); // (0, 1]
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Uniform point in the closed ball of the given radius.
pub fn uniform_in_ball(d: usize, radius: f64, rng: &mut ChaCha20Rng) -> Vec<f64> {
    loop {
        let g: Vec<f64> = (0..d).map(|_| std_normal(rng)).collect();
        let n = norm(&g);
        if n > 0.0 {
            let u: f64 = rng.random();
            let r = radius * u.powf(1.0 / d as f64);
            return scale(&g, r / n);
        }
    }
}

/// Haar-random rotation as a row-orthonormal d×d matrix: modified
/// Gram–Schmidt applied to an i.i.d. Gaussian matrix, with the positive
/// normalization that makes the factorization (and hence the distribution)
/// canonical.
pub fn random_rotation(d: usize, rng: &mut ChaCha20Rng) -> Vec<Vec<f64>> {
    loop {
        let mut rows: Vec<Vec<f64>> =
            (0..d).map(|_| (0..d).map(|_| std_normal(rng)).collect()).collect();
        let mut ok = true;
        for i in 0..d {
            for j in 0..i {
                let proj = dot(&rows[i], &rows[j]);
                let prev = rows[j].clone();
                for (x, p) in rows[i].iter_mut().zip(&prev) {
                    *x -= proj * p;
                }
            }
            let n = norm(&rows[i]);
            if n < 1e-12 {
                ok = false;
                break;
            }
            for x in rows[i].iter_mut() {
                *x /= n;
            }
        }
        if ok {
            return rows;
        }
    }
}

/// Apply a row matrix to a vector: y_i = ⟨row_i, x⟩.
pub fn apply_rows(rows: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    rows.iter().map(|r| dot(r, x)).collect()
}

/// Apply the transpose of a row matrix: y = Σ_i x_i · row_i.
pub fn apply_rows_transpose(rows: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    let d = if rows.is_empty() { 0 } else { rows[0].len() };
    let mut out = vec![0.0; d];
    for (xi, row) in x.iter().zip(rows) {
        for (o, r) in out.iter_mut().zip(row) {
            *o += xi * r;
        }
    }
    out
}
