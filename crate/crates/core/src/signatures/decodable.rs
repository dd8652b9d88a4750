//! Unique decodability: `S x != S x'` for all distinct `x, x'` in `{-1, +1}^n`,
//! equivalently `S d != 0` for every nonzero `d` in `{-1, 0, 1}^n`.

use std::collections::HashSet;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SignatureMatrix;
use crate::error::{Error, Result};

/// Largest user count accepted by the brute-force checks.
pub const MAX_DECODABLE_USERS: usize = 16;

/// `S d` is treated as zero below this multiple of the largest column norm.
const COLLISION_RTOL: f64 = 1e-9;

pub fn verify_uniquely_decodable(s: &SignatureMatrix) -> Result<bool> {
    check_size(s)?;
    if let Some(z) = integer_lattice(s.matrix()) {
        return Ok(!integer_collision(&z));
    }
    let tol = collision_tol(s);
    let mut walk = TernaryWalk::new(s.matrix(), tol);
    walk.run();
    Ok(walk.best > tol)
}

/// `min ||S d||` over nonzero `d` in `{-1, 0, 1}^n`. Zero (up to rounding)
/// when the matrix is not uniquely decodable; half of the minimum distance
/// between noiseless received points otherwise.
pub fn decodability_margin(s: &SignatureMatrix) -> Result<f64> {
    check_size(s)?;
    let mut walk = TernaryWalk::new(s.matrix(), f64::NEG_INFINITY);
    walk.run();
    Ok(walk.best)
}

fn check_size(s: &SignatureMatrix) -> Result<()> {
    if s.users() > MAX_DECODABLE_USERS {
        return Err(Error::TooLarge(s.users()));
    }
    Ok(())
}

fn collision_tol(s: &SignatureMatrix) -> f64 {
    let max_norm = s.matrix().column_iter().map(|c| c.norm()).fold(0.0, f64::max);
    COLLISION_RTOL * max_norm
}

/// Depth-first enumeration of ternary vectors whose first nonzero entry is
/// `+1` (the other half follows by symmetry). Partial sums are kept per depth
/// so no rounding accumulates across branches.
struct TernaryWalk {
    cols: Vec<Vec<f64>>,
    partial: Vec<Vec<f64>>,
    best: f64,
    stop_at: f64,
}

impl TernaryWalk {
    fn new(s: &DMatrix<f64>, stop_at: f64) -> Self {
        let cols: Vec<Vec<f64>> = s.column_iter().map(|c| c.iter().copied().collect()).collect();
        let partial = vec![vec![0.0; s.nrows()]; s.ncols() + 1];
        Self { cols, partial, best: f64::INFINITY, stop_at }
    }

    fn run(&mut self) {
        self.visit(0, false);
    }

    /// Returns true once a vector at or below `stop_at` has been found.
    fn visit(&mut self, depth: usize, nonzero: bool) -> bool {
        if depth == self.cols.len() {
            if nonzero {
                let norm = self.partial[depth].iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm < self.best {
                    self.best = norm;
                }
                return self.best <= self.stop_at;
            }
            return false;
        }
        let signs: &[f64] = if nonzero { &[0.0, 1.0, -1.0] } else { &[0.0, 1.0] };
        for &d in signs {
            let (head, tail) = self.partial.split_at_mut(depth + 1);
            let (parent, child) = (&head[depth], &mut tail[0]);
            for ((c, p), col) in child.iter_mut().zip(parent).zip(&self.cols[depth]) {
                *c = p + d * col;
            }
            if self.visit(depth + 1, nonzero || d != 0.0) {
                return true;
            }
        }
        false
    }
}

/// If `s = c * Z` for an integer matrix `Z` (up to rounding), returns `Z`.
fn integer_lattice(s: &DMatrix<f64>) -> Option<Vec<Vec<i64>>> {
    let scale = s.iter().map(|v| v.abs()).filter(|&v| v > 0.0).fold(f64::INFINITY, f64::min);
    if !scale.is_finite() {
        return None;
    }
    let mut cols = Vec::with_capacity(s.ncols());
    for col in s.column_iter() {
        let mut out = Vec::with_capacity(s.nrows());
        for &v in col.iter() {
            let r = v / scale;
            let k = r.round();
            if (r - k).abs() > 1e-9 * r.abs().max(1.0) || k.abs() > 1e6 {
                return None;
            }
            out.push(k as i64);
        }
        cols.push(out);
    }
    Some(cols)
}

/// Exact collision test on an integer matrix by meet-in-the-middle:
/// `Z d = 0` iff `Z_a d_a = -Z_b d_b` for the two column halves.
fn integer_collision(cols: &[Vec<i64>]) -> bool {
    let split = cols.len() / 2;
    let (left, right) = cols.split_at(split);
    let mut left_sums: HashSet<Vec<i64>> = HashSet::new();
    let zero = vec![0i64; cols.first().map_or(0, Vec::len)];
    for (d_nonzero, v) in ternary_sums(left) {
        if d_nonzero {
            if v == zero {
                return true;
            }
            left_sums.insert(v);
        }
    }
    for (d_nonzero, v) in ternary_sums(right) {
        if !d_nonzero {
            continue;
        }
        let neg: Vec<i64> = v.iter().map(|x| -x).collect();
        if neg == zero || left_sums.contains(&neg) {
            return true;
        }
    }
    false
}

/// All `Z d` for `d` in `{-1, 0, 1}^k`, tagged with whether `d` is nonzero.
fn ternary_sums(cols: &[Vec<i64>]) -> Vec<(bool, Vec<i64>)> {
    let m = cols.first().map_or(0, Vec::len);
    let mut out = vec![(false, vec![0i64; m])];
    for col in cols {
        let mut next = Vec::with_capacity(out.len() * 3);
        for (nz, v) in &out {
            next.push((*nz, v.clone()));
            next.push((true, v.iter().zip(col).map(|(a, b)| a + b).collect()));
            next.push((true, v.iter().zip(col).map(|(a, b)| a - b).collect()));
        }
        out = next;
    }
    out
}

/// Entry distribution for random signature matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alphabet {
    /// `+-1` entries, columns scaled by `1/sqrt(m)`.
    Binary,
    /// Uniform entries on `[-1, 1]`, then column normalisation.
    Uniform,
}

pub fn random_binary<R: Rng + ?Sized>(m: usize, n: usize, rng: &mut R) -> SignatureMatrix {
    let scale = 1.0 / (m as f64).sqrt();
    let entries = DMatrix::from_fn(m, n, |_, _| if rng.random_bool(0.5) { scale } else { -scale });
    SignatureMatrix::new(entries).expect("nonempty finite matrix")
}

pub fn random_uniform<R: Rng + ?Sized>(m: usize, n: usize, rng: &mut R) -> SignatureMatrix {
    loop {
        let entries = DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..=1.0));
        if let Ok(s) = SignatureMatrix::new(entries).and_then(|s| s.normalize_columns()) {
            return s;
        }
    }
}

/// Seeded randomized search for a uniquely decodable matrix.
///
/// Each of the `trials` attempts builds a candidate independently; among
/// those reaching `n` users (and, with `require_estimable`, whose powers are
/// identifiable with known noise) the one with the largest minimum singular
/// value of the full row-product matrix is returned.
///
/// Binary attempts work on integer `+-1` columns: for even `m >= 4` the best
/// `m/2` family is doubled to `[A A; A -A]`, then extended by a budgeted
/// depth-first search over the remaining columns. Plain column-by-column
/// greedy draws stall well short of the achievable sizes (12 users at
/// `m = 8` against 13). Uniform attempts grow one random column at a time.
pub fn search_uniquely_decodable(
    m: usize,
    n: usize,
    alphabet: Alphabet,
    trials: usize,
    seed: u64,
    require_estimable: bool,
) -> Result<Option<SignatureMatrix>> {
    if m == 0 || n == 0 {
        return Err(Error::InvalidArgument("matrix dimensions must be positive".into()));
    }
    if n > MAX_DECODABLE_USERS {
        return Err(Error::TooLarge(n));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(f64, SignatureMatrix)> = None;
    for _ in 0..trials {
        let candidate = match alphabet {
            Alphabet::Binary => {
                let cols = binary_family(m, n, &mut rng);
                if cols.len() < n {
                    continue;
                }
                let scale = 1.0 / (m as f64).sqrt();
                let flat: Vec<f64> = cols.iter().flatten().map(|&v| v as f64 * scale).collect();
                SignatureMatrix::new(DMatrix::from_column_slice(m, n, &flat))?
            }
            Alphabet::Uniform => match grow(m, n, &mut rng)? {
                Some(s) => s,
                None => continue,
            },
        };
        let report = candidate.estimability(true);
        if require_estimable && !report.estimable {
            continue;
        }
        if best.as_ref().is_none_or(|(score, _)| report.min_singular_value > *score) {
            best = Some((report.min_singular_value, candidate));
        }
    }
    Ok(best.map(|(_, s)| s))
}

/// Depth-first nodes (decodability checks) per extension.
const EXTEND_BUDGET: usize = 5_000;

/// Largest decodable `+-1` column family found, at most `limit` columns.
fn binary_family<R: Rng + ?Sized>(m: usize, limit: usize, rng: &mut R) -> Vec<Vec<i64>> {
    let mut base = Vec::new();
    if m >= 4 && m.is_multiple_of(2) {
        let half = binary_family(m / 2, limit, rng);
        for col in &half {
            base.push(col.iter().chain(col.iter()).copied().collect::<Vec<_>>());
        }
        for col in &half {
            base.push(col.iter().copied().chain(col.iter().map(|v| -v)).collect());
        }
        base.truncate(limit);
        if integer_collision(&base) {
            base.clear();
        }
    }
    extend(base, m, limit, rng)
}

fn extend<R: Rng + ?Sized>(base: Vec<Vec<i64>>, m: usize, limit: usize, rng: &mut R) -> Vec<Vec<i64>> {
    // columns up to sign; exhaustive for small m, sampled otherwise
    let mut pool: Vec<Vec<i64>> = if m <= 12 {
        (0..1u64 << (m - 1))
            .map(|bits| (0..m).map(|r| if r > 0 && bits >> (r - 1) & 1 == 1 { -1 } else { 1 }).collect())
            .collect()
    } else {
        (0..4096)
            .map(|_| (0..m).map(|r| if r == 0 || rng.random_bool(0.5) { 1 } else { -1 }).collect())
            .collect()
    };
    pool.shuffle(rng);
    pool.retain(|c| {
        let mut trial = base.clone();
        trial.push(c.clone());
        !integer_collision(&trial)
    });

    let mut search = Extension { pool, limit, nodes: 0, best: base.clone() };
    let mut current = base;
    search.dfs(&mut current, 0);
    search.best
}

struct Extension {
    pool: Vec<Vec<i64>>,
    limit: usize,
    nodes: usize,
    best: Vec<Vec<i64>>,
}

impl Extension {
    fn dfs(&mut self, current: &mut Vec<Vec<i64>>, start: usize) -> bool {
        if current.len() > self.best.len() {
            self.best = current.clone();
        }
        if current.len() >= self.limit {
            return true;
        }
        for i in start..self.pool.len() {
            if self.nodes >= EXTEND_BUDGET || current.len() + self.pool.len() - i <= self.best.len() {
                return false;
            }
            self.nodes += 1;
            current.push(self.pool[i].clone());
            if !integer_collision(current) && self.dfs(current, i + 1) {
                return true;
            }
            current.pop();
        }
        false
    }
}

fn grow<R: Rng + ?Sized>(m: usize, n: usize, rng: &mut R) -> Result<Option<SignatureMatrix>> {
    let mut cols: Vec<f64> = Vec::with_capacity(m * n);
    let mut misses = 0;
    while cols.len() < m * n {
        let col = random_uniform(m, 1, rng);
        let k = cols.len() / m + 1;
        let mut trial = cols.clone();
        trial.extend_from_slice(col.matrix().as_slice());
        let candidate = SignatureMatrix::new(DMatrix::from_column_slice(m, k, &trial))?;
        if verify_uniquely_decodable(&candidate)? {
            cols = trial;
            misses = 0;
        } else {
            misses += 1;
            if misses >= 4 * m {
                return Ok(None);
            }
        }
    }
    Ok(Some(SignatureMatrix::new(DMatrix::from_column_slice(m, n, &cols))?))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent oracle: pairwise comparison of all `2^n` codewords.
    fn codebook_injective(s: &SignatureMatrix) -> bool {
        let n = s.users();
        let points: Vec<_> = (0..1u32 << n)
            .map(|bits| {
                let x = nalgebra::DVector::from_fn(n, |i, _| if bits >> i & 1 == 1 { 1.0 } else { -1.0 });
                s.matrix() * x
            })
            .collect();
        for a in 0..points.len() {
            for b in a + 1..points.len() {
                if (&points[a] - &points[b]).norm() < 1e-9 {
                    return false;
                }
            }
        }
        true
    }

    #[test]
    fn identity_is_decodable() {
        assert!(verify_uniquely_decodable(&SignatureMatrix::identity(2)).unwrap());
        assert!((decodability_margin(&SignatureMatrix::identity(2)).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn colliding_columns_are_not() {
        let s = SignatureMatrix::from_rows(1, 2, &[1.0, 1.0]).unwrap();
        assert!(!verify_uniquely_decodable(&s).unwrap());
        assert!(decodability_margin(&s).unwrap() < 1e-15);
    }

    #[test]
    fn too_many_users_rejected() {
        let s = SignatureMatrix::new(DMatrix::from_element(2, 17, 1.0)).unwrap();
        assert!(matches!(verify_uniquely_decodable(&s), Err(Error::TooLarge(17))));
    }

    #[test]
    fn searched_four_by_five_agrees_with_codebook() {
        let s = search_uniquely_decodable(4, 5, Alphabet::Uniform, 20, 7, false)
            .unwrap()
            .expect("uniform 4x5 matrices are generically decodable");
        assert!(verify_uniquely_decodable(&s).unwrap());
        assert!(codebook_injective(&s));
    }

    #[test]
    fn integer_and_float_paths_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut seen = [0usize; 2];
        for _ in 0..200 {
            let s = random_binary(3, 5, &mut rng);
            let fast = verify_uniquely_decodable(&s).unwrap();
            let mut walk = TernaryWalk::new(s.matrix(), 0.0);
            walk.run();
            let slow = walk.best > collision_tol(&s);
            assert_eq!(fast, slow);
            assert_eq!(fast, codebook_injective(&s));
            seen[fast as usize] += 1;
        }
        // both outcomes exercised
        assert!(seen[0] > 0, "{seen:?}");
    }

    #[test]
    fn binary_search_finds_eight_by_thirteen() {
        let s = search_uniquely_decodable(8, 13, Alphabet::Binary, 4, 1, true)
            .unwrap()
            .expect("a decodable 8x13 binary matrix within 4 attempts");
        assert!(verify_uniquely_decodable(&s).unwrap());
        // +-1 matrices: nonzero S d has integer entries of common parity
        assert!(decodability_margin(&s).unwrap() >= 2.0 / 8f64.sqrt() - 1e-12);
    }
}
