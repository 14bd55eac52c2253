//! Random site distributions in the unit cube.

use std::collections::HashMap;
use std::f64::consts::PI;

use rand::Rng;

/// `n` uniform points in `[0, 1]^dim`, flat with stride `dim`.
pub fn white_noise<R: Rng + ?Sized>(rng: &mut R, n: usize, dim: usize) -> Vec<f64> {
    (0..n * dim).map(|_| rng.random::<f64>()).collect()
}

/// Result of dart throwing.
#[derive(Debug, Clone, PartialEq)]
pub struct BlueNoise {
    pub points: Vec<f64>,
    pub radius: f64,
    /// False when throwing stalled before reaching the requested count.
    pub complete: bool,
}

impl BlueNoise {
    pub fn len(&self, dim: usize) -> usize {
        self.points.len() / dim
    }
}

/// Saturation coverage of random sequential addition of equal balls.
fn saturation_fraction(dim: usize) -> f64 {
    match dim {
        1 => 0.7476,
        2 => 0.547,
        3 => 0.3841,
        4 => 0.2580,
        5 => 0.1672,
        _ => 0.1056,
    }
}

fn unit_ball_volume(dim: usize) -> f64 {
    // V_d = pi^(d/2) / Gamma(d/2 + 1)
    match dim {
        0 => 1.0,
        1 => 2.0,
        d => unit_ball_volume(d - 2) * 2.0 * PI / d as f64,
    }
}

/// Minimum distance for which dart throwing saturates slightly above `n`
/// points in the unit cube.
pub fn blue_noise_radius(n: usize, dim: usize) -> f64 {
    let phi = 0.85 * saturation_fraction(dim);
    // n balls of radius r/2 cover a fraction phi of the cube
    2.0 * (phi / (n as f64 * unit_ball_volume(dim))).powf(1.0 / dim as f64)
}

/// Poisson-disk sampling by dart throwing with the radius from
/// [`blue_noise_radius`].
pub fn blue_noise<R: Rng + ?Sized>(rng: &mut R, n: usize, dim: usize) -> BlueNoise {
    blue_noise_with_radius(rng, n, dim, blue_noise_radius(n, dim))
}

/// Dart throwing: candidates closer than `radius` to an accepted point are
/// rejected. Gives up after `100 * n + 1000` consecutive rejections.
pub fn blue_noise_with_radius<R: Rng + ?Sized>(rng: &mut R, n: usize, dim: usize, radius: f64) -> BlueNoise {
    let r2 = radius * radius;
    let cells_per_axis = (1.0 / radius).floor().max(1.0) as i64;
    let cell_of = |x: &[f64]| -> Vec<i64> {
        x.iter()
            .map(|&c| ((c * cells_per_axis as f64) as i64).min(cells_per_axis - 1))
            .collect()
    };
    let mut grid: HashMap<Vec<i64>, Vec<u32>> = HashMap::new();
    let mut points: Vec<f64> = Vec::with_capacity(n * dim);
    let max_fail = 100 * n + 1000;
    let mut fails = 0;
    let mut cand = vec![0.0; dim];
    let mut probe = vec![0i64; dim];
    while points.len() < n * dim && fails < max_fail {
        cand.iter_mut().for_each(|c| *c = rng.random());
        let home = cell_of(&cand);
        let mut ok = true;
        // visit the 3^dim block of neighboring cells
        'scan: for code in 0..3usize.pow(dim as u32) {
            let mut c = code;
            for k in 0..dim {
                probe[k] = home[k] + (c % 3) as i64 - 1;
                c /= 3;
            }
            if let Some(ids) = grid.get(&probe) {
                for &id in ids {
                    let p = &points[id as usize * dim..(id as usize + 1) * dim];
                    let d2: f64 = p.iter().zip(&cand).map(|(a, b)| (a - b) * (a - b)).sum();
                    if d2 < r2 {
                        ok = false;
                        break 'scan;
                    }
                }
            }
        }
        if ok {
            grid.entry(home).or_default().push((points.len() / dim) as u32);
            points.extend_from_slice(&cand);
            fails = 0;
        } else {
            fails += 1;
        }
    }
    let complete = points.len() == n * dim;
    BlueNoise {
        points,
        radius,
        complete,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn white_noise_in_cube_and_seeded() {
        let a = white_noise(&mut ChaCha8Rng::seed_from_u64(3), 100, 4);
        let b = white_noise(&mut ChaCha8Rng::seed_from_u64(3), 100, 4);
        assert_eq!(a, b);
        assert_eq!(a.len(), 400);
        assert!(a.iter().all(|x| (0.0..1.0).contains(x)));
    }

    #[test]
    fn ball_volumes() {
        assert!((unit_ball_volume(2) - PI).abs() < 1e-15);
        assert!((unit_ball_volume(3) - 4.0 * PI / 3.0).abs() < 1e-15);
        assert!((unit_ball_volume(4) - PI * PI / 2.0).abs() < 1e-14);
    }

    #[test]
    fn blue_noise_respects_radius() {
        for dim in 2..=4 {
            let mut rng = ChaCha8Rng::seed_from_u64(dim as u64);
            let b = blue_noise(&mut rng, 400, dim);
            assert!(b.complete, "dim {dim}: {} points", b.len(dim));
            let n = b.len(dim);
            let mut min = f64::INFINITY;
            for i in 0..n {
                for j in 0..i {
                    let d2: f64 = (0..dim)
                        .map(|k| (b.points[i * dim + k] - b.points[j * dim + k]).powi(2))
                        .sum();
                    min = min.min(d2.sqrt());
                }
            }
            assert!(min >= b.radius, "dim {dim}: {min} < {}", b.radius);
        }
    }

    #[test]
    fn oversized_radius_stalls() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = blue_noise_with_radius(&mut rng, 50, 2, 0.5);
        assert!(!b.complete);
        assert!(b.len(2) < 50);
    }
}
