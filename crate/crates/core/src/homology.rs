//! Exact rank computation for integer incidence matrices.
//!
//! Betti numbers come from ranks of boundary matrices over the rationals:
//! b_k = n_k - rank d_k - rank d_{k+1}.  Floating-point rank detection is
//! useless for that purpose (a near-zero singular value is not a proof), so
//! ranks are computed exactly: fraction-free Gaussian elimination with full
//! pivoting for small matrices, and modular elimination at two large primes
//! for larger ones.

use num_bigint::BigInt;
use num_traits::{Signed, Zero};

/// Column count above which Bareiss elimination hands over to the modular
/// path.  Below it the fraction-free elimination is fast and unconditionally
/// exact.
const BAREISS_COL_LIMIT: usize = 512;

const P1: u64 = (1 << 61) - 1;
const P2: u64 = (1 << 31) - 1;

/// Rank of a sparse signed incidence matrix given as (row, col, sign) triplets.
pub fn rank_exact(rows: usize, cols: usize, triplets: &[(usize, usize, i8)]) -> usize {
    if rows == 0 || cols == 0 || triplets.is_empty() {
        return 0;
    }
    if cols.min(rows) <= BAREISS_COL_LIMIT {
        rank_bareiss(rows, cols, triplets)
    } else {
        rank_mod(rows, cols, triplets, P1).max(rank_mod(rows, cols, triplets, P2))
    }
}

/// Fraction-free elimination (Bareiss).  Entries stay integral at every step;
/// the division by the previous pivot is exact.  Full pivoting on a smallest
/// nonzero entry keeps growth tame on incidence-like matrices.
fn rank_bareiss(rows: usize, cols: usize, triplets: &[(usize, usize, i8)]) -> usize {
    let mut a = vec![vec![BigInt::zero(); cols]; rows];
    for &(i, j, s) in triplets {
        a[i][j] += BigInt::from(s as i64);
    }
    let mut prev = BigInt::from(1);
    let mut r = 0usize;
    let steps = rows.min(cols);
    while r < steps {
        let mut pivot: Option<(usize, usize)> = None;
        let mut best: Option<BigInt> = None;
        for i in r..rows {
            for j in r..cols {
                if !a[i][j].is_zero() {
                    let mag = a[i][j].abs();
                    if best.as_ref().map_or(true, |b| mag < *b) {
                        pivot = Some((i, j));
                        best = Some(mag);
                    }
                }
            }
        }
        let Some((pi, pj)) = pivot else { break };
        a.swap(r, pi);
        if pj != r {
            for row in a.iter_mut() {
                row.swap(r, pj);
            }
        }
        let piv = a[r][r].clone();
        for i in (r + 1)..rows {
            if a[i][r].is_zero() && piv.is_zero() {
                continue;
            }
            let head = a[i][r].clone();
            for j in (r + 1)..cols {
                let num = &piv * &a[i][j] - &head * &a[r][j];
                a[i][j] = num / &prev;
            }
            a[i][r] = BigInt::zero();
        }
        prev = piv;
        r += 1;
    }
    r
}

fn rank_mod(rows: usize, cols: usize, triplets: &[(usize, usize, i8)], p: u64) -> usize {
    let mut a = vec![vec![0u64; cols]; rows];
    for &(i, j, s) in triplets {
        let v = if s >= 0 { s as u64 } else { p - ((-s) as u64) };
        a[i][j] = (a[i][j] + v) % p;
    }
    let mut r = 0usize;
    for col in 0..cols {
        let Some(pi) = (r..rows).find(|&i| a[i][col] != 0) else {
            continue;
        };
        a.swap(r, pi);
        let inv = mod_inv(a[r][col], p);
        for j in col..cols {
            a[r][j] = mul_mod(a[r][j], inv, p);
        }
        for i in 0..rows {
            if i != r && a[i][col] != 0 {
                let f = a[i][col];
                for j in col..cols {
                    let sub = mul_mod(f, a[r][j], p);
                    a[i][j] = (a[i][j] + p - sub) % p;
                }
            }
        }
        r += 1;
        if r == rows {
            break;
        }
    }
    r
}

fn mul_mod(a: u64, b: u64, p: u64) -> u64 {
    ((a as u128 * b as u128) % p as u128) as u64
}

fn mod_inv(a: u64, p: u64) -> u64 {
    // Fermat: p is prime.
    pow_mod(a, p - 2, p)
}

fn pow_mod(mut base: u64, mut exp: u64, p: u64) -> u64 {
    let mut acc = 1u64;
    base %= p;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, p);
        }
        base = mul_mod(base, base, p);
        exp >>= 1;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_to_triplets(m: &[&[i8]]) -> (usize, usize, Vec<(usize, usize, i8)>) {
        let rows = m.len();
        let cols = m[0].len();
        let mut t = Vec::new();
        for (i, row) in m.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v != 0 {
                    t.push((i, j, v));
                }
            }
        }
        (rows, cols, t)
    }

    #[test]
    fn rank_of_identity_like() {
        let (r, c, t) = dense_to_triplets(&[&[1, 0, 0], &[0, 1, 0], &[0, 0, 1]]);
        assert_eq!(rank_exact(r, c, &t), 3);
    }

    #[test]
    fn rank_detects_dependent_rows() {
        // Third row = first + second: rank 2.
        let (r, c, t) = dense_to_triplets(&[&[1, -1, 0], &[0, 1, -1], &[1, 0, -1]]);
        assert_eq!(rank_exact(r, c, &t), 2);
    }

    #[test]
    fn rank_zero_matrix() {
        assert_eq!(rank_exact(4, 4, &[]), 0);
    }

    #[test]
    fn modular_and_bareiss_agree_on_random_incidence() {
        use rand::rngs::StdRng;
        use rand::{Rng, SeedableRng};
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..20 {
            let rows = rng.gen_range(3..20);
            let cols = rng.gen_range(3..20);
            let mut t = Vec::new();
            for i in 0..rows {
                for j in 0..cols {
                    if rng.gen_bool(0.3) {
                        t.push((i, j, if rng.gen_bool(0.5) { 1i8 } else { -1 }));
                    }
                }
            }
            let exact = rank_bareiss(rows, cols, &t);
            assert_eq!(rank_mod(rows, cols, &t, P1), exact);
            assert_eq!(rank_mod(rows, cols, &t, P2), exact);
        }
    }
}
