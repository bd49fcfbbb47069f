//! Randomly shifted rank-1 lattice points with Richtmyer generators
//! `z_j = frac(√prime_j)`. Point k of shift Δ is `frac(k·z + Δ)`, folded by the
//! tent map `x ↦ |2x − 1|` so the periodized integrand stays continuous.
//!
//! The point set for N points is the prefix of the set for 2N points, so a
//! doubling schedule only evaluates the new points.

use std::sync::OnceLock;

pub const MAX_DIM: usize = 128;

fn generators() -> &'static [f64] {
    static GEN: OnceLock<Vec<f64>> = OnceLock::new();
    GEN.get_or_init(|| {
        let mut primes = Vec::with_capacity(MAX_DIM);
        let mut candidate = 2u64;
        while primes.len() < MAX_DIM {
            if primes.iter().take_while(|&&p| p * p <= candidate).all(|&p| candidate % p != 0) {
                primes.push(candidate);
            }
            candidate += 1;
        }
        primes.iter().map(|&p| (p as f64).sqrt().fract()).collect()
    })
}

/// Writes point `k` of the lattice shifted by `shift` into `out`.
#[inline]
pub fn point(k: u64, shift: &[f64], out: &mut [f64]) {
    let z = generators();
    let kf = k as f64;
    for ((o, &zj), &dj) in out.iter_mut().zip(z).zip(shift) {
        let x = (kf * zj + dj).fract();
        *o = (2.0 * x - 1.0).abs();
    }
}
