//! Power-adjusted detection of binary user data.
//!
//! The signature matrix is split as `S = [A | B]` with `A` an invertible
//! `m x m` block. For every candidate `x2` in `{-1, +1}^(n-m)` the remaining
//! bits follow from a sign rule,
//! `x1 = sign(A^-1 y - A^-1 B D2 x2)`, and the pair minimising
//! `||A^-1 y - A^-1 B D2 x2 - D1 x1||` wins. `D1` and `D2` hold the user
//! amplitudes `sqrt(p)` of the two blocks.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::signatures::SignatureMatrix;

/// Largest number of bits searched exhaustively.
pub const MAX_FREE_BITS: usize = 20;

/// `|det A|` must exceed this for the partition to be usable.
const MIN_BLOCK_DET: f64 = 1e-10;

/// Anything that turns a received vector into `+-1` decisions given the
/// per-user amplitudes.
pub trait Detector {
    fn users(&self) -> usize;
    fn chips(&self) -> usize;
    fn detect(&self, y: &DVector<f64>, amplitudes: &[f64]) -> Result<DVector<f64>>;
}

/// `sign` with `sign(0) = +1`.
#[inline]
pub fn hard_sign(v: f64) -> f64 {
    if v < 0.0 {
        -1.0
    } else {
        1.0
    }
}

#[derive(Debug, Clone)]
pub struct PartitionedSignature {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    a_inv: DMatrix<f64>,
    a_inv_b: DMatrix<f64>,
    /// `column_order[k]` is the user behind partitioned column `k`; the
    /// first `m` entries index `A`.
    column_order: Vec<usize>,
}

/// Picks `m` columns for `A` by greedy pivoting on the residual column
/// norms (the column pivoting of a QR factorisation), so `A` is well
/// conditioned. `B` keeps the remaining users in their original order.
pub fn partition(s: &SignatureMatrix) -> Result<PartitionedSignature> {
    let (m, n) = (s.chips(), s.users());
    if n < m {
        return Err(Error::NoInvertibleBlock { rank: n, m });
    }
    let mut residual = s.matrix().clone();
    let scale = residual.column_iter().map(|c| c.norm()).fold(0.0, f64::max);
    let mut chosen: Vec<usize> = Vec::with_capacity(m);
    for step in 0..m {
        let (best, norm) = (0..n)
            .filter(|j| !chosen.contains(j))
            .map(|j| (j, residual.column(j).norm()))
            .fold((usize::MAX, -1.0), |acc, (j, v)| if v > acc.1 { (j, v) } else { acc });
        if best == usize::MAX || norm <= 1e-10 * scale {
            return Err(Error::NoInvertibleBlock { rank: step, m });
        }
        let q = residual.column(best) / norm;
        for j in 0..n {
            let proj = q.dot(&residual.column(j));
            let mut col = residual.column_mut(j);
            col.axpy(-proj, &q, 1.0);
        }
        chosen.push(best);
    }

    let rest: Vec<usize> = (0..n).filter(|j| !chosen.contains(j)).collect();
    let a = s.matrix().select_columns(&chosen);
    let b = s.matrix().select_columns(&rest);
    if a.determinant().abs() <= MIN_BLOCK_DET {
        return Err(Error::NoInvertibleBlock { rank: m - 1, m });
    }
    let a_inv = a.clone().try_inverse().ok_or(Error::NoInvertibleBlock { rank: m - 1, m })?;
    let a_inv_b = &a_inv * &b;
    let mut column_order = chosen;
    column_order.extend(rest);
    Ok(PartitionedSignature { a, b, a_inv, a_inv_b, column_order })
}

impl PartitionedSignature {
    pub fn block_a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn block_b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn a_inverse(&self) -> &DMatrix<f64> {
        &self.a_inv
    }

    pub fn column_order(&self) -> &[usize] {
        &self.column_order
    }

    pub fn free_bits(&self) -> usize {
        self.b.ncols()
    }

    /// Reassembles `S` in user order.
    pub fn signature(&self) -> DMatrix<f64> {
        let m = self.a.nrows();
        let mut s = DMatrix::zeros(m, self.column_order.len());
        for (k, &user) in self.column_order.iter().enumerate() {
            let col = if k < m { self.a.column(k) } else { self.b.column(k - m) };
            s.set_column(user, &col);
        }
        s
    }

    /// Detected bits in user order together with the minimised criterion.
    pub fn decode_with_cost(&self, y: &DVector<f64>, amplitudes: &[f64]) -> Result<(DVector<f64>, f64)> {
        let m = self.a.nrows();
        let n = self.column_order.len();
        let free = n - m;
        if free > MAX_FREE_BITS {
            return Err(Error::TooManyFreeBits(free));
        }
        if y.len() != m || amplitudes.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "received vector has {} chips and {} amplitudes for a {m}x{n} system",
                y.len(),
                amplitudes.len()
            )));
        }
        let d1: Vec<f64> = self.column_order[..m].iter().map(|&u| amplitudes[u]).collect();
        // columns of A^-1 B D2
        let weighted: Vec<DVector<f64>> = (0..free)
            .map(|k| self.a_inv_b.column(k) * amplitudes[self.column_order[m + k]])
            .collect();
        let z = &self.a_inv * y;

        let mut best_cost = f64::INFINITY;
        let mut best_mask = 0u32;
        let mut v = DVector::zeros(m);
        for mask in 0..1u32 << free {
            v.copy_from(&z);
            for (k, col) in weighted.iter().enumerate() {
                // bit set means -1
                let x = if mask >> k & 1 == 1 { -1.0 } else { 1.0 };
                v.axpy(-x, col, 1.0);
            }
            let cost: f64 = v.iter().zip(&d1).map(|(vi, ai)| (vi - ai * hard_sign(*vi)).powi(2)).sum();
            if cost < best_cost {
                best_cost = cost;
                best_mask = mask;
            }
        }

        let mut x = DVector::zeros(n);
        v.copy_from(&z);
        for (k, col) in weighted.iter().enumerate() {
            let bit = if best_mask >> k & 1 == 1 { -1.0 } else { 1.0 };
            v.axpy(-bit, col, 1.0);
            x[self.column_order[m + k]] = bit;
        }
        for k in 0..m {
            x[self.column_order[k]] = hard_sign(v[k]);
        }
        Ok((x, best_cost.sqrt()))
    }

    pub fn decode(&self, y: &DVector<f64>, amplitudes: &[f64]) -> Result<DVector<f64>> {
        self.decode_with_cost(y, amplitudes).map(|(x, _)| x)
    }
}

impl Detector for PartitionedSignature {
    fn users(&self) -> usize {
        self.column_order.len()
    }

    fn chips(&self) -> usize {
        self.a.nrows()
    }

    fn detect(&self, y: &DVector<f64>, amplitudes: &[f64]) -> Result<DVector<f64>> {
        self.decode(y, amplitudes)
    }
}

/// Plain ML detection, `argmin ||y - S D x||` over all `2^n` inputs.
#[derive(Debug, Clone)]
pub struct ExhaustiveDetector {
    s: DMatrix<f64>,
}

impl ExhaustiveDetector {
    pub fn new(s: &SignatureMatrix) -> Result<Self> {
        if s.users() > MAX_FREE_BITS {
            return Err(Error::TooManyFreeBits(s.users()));
        }
        Ok(Self { s: s.matrix().clone() })
    }
}

impl Detector for ExhaustiveDetector {
    fn users(&self) -> usize {
        self.s.ncols()
    }

    fn chips(&self) -> usize {
        self.s.nrows()
    }

    fn detect(&self, y: &DVector<f64>, amplitudes: &[f64]) -> Result<DVector<f64>> {
        let n = self.s.ncols();
        if y.len() != self.s.nrows() || amplitudes.len() != n {
            return Err(Error::DimensionMismatch("received vector or amplitudes".into()));
        }
        let cols: Vec<DVector<f64>> = (0..n).map(|u| self.s.column(u) * amplitudes[u]).collect();
        let mut best = (f64::INFINITY, 0u32);
        let mut r = DVector::zeros(y.len());
        for mask in 0..1u32 << n {
            r.copy_from(y);
            for (u, c) in cols.iter().enumerate() {
                let x = if mask >> u & 1 == 1 { -1.0 } else { 1.0 };
                r.axpy(-x, c, 1.0);
            }
            let cost = r.norm_squared();
            if cost < best.0 {
                best = (cost, mask);
            }
        }
        Ok(DVector::from_fn(n, |u, _| if best.1 >> u & 1 == 1 { -1.0 } else { 1.0 }))
    }
}

/// Decisions for a batch plus the error count against known symbols.
#[derive(Debug, Clone)]
pub struct BatchDecision {
    /// `n x L` detected bits.
    pub bits: DMatrix<f64>,
    pub bit_errors: Option<usize>,
    pub ber: Option<f64>,
}

/// Decodes every column of `ys` with fixed amplitudes. Columns are decoded
/// in parallel and reassembled in order.
pub fn decode_batch<D: Detector + Sync>(
    ys: &DMatrix<f64>,
    detector: &D,
    amplitudes: &[f64],
    truth: Option<&DMatrix<f64>>,
) -> Result<BatchDecision> {
    let n = detector.users();
    if let Some(t) = truth {
        if t.shape() != (n, ys.ncols()) {
            return Err(Error::DimensionMismatch(format!("ground truth is {:?}", t.shape())));
        }
    }
    let cols: Vec<DVector<f64>> = (0..ys.ncols())
        .into_par_iter()
        .map(|j| detector.detect(&ys.column(j).into_owned(), amplitudes))
        .collect::<Result<_>>()?;
    let mut bits = DMatrix::zeros(n, ys.ncols());
    for (j, c) in cols.iter().enumerate() {
        bits.set_column(j, c);
    }
    let bit_errors = truth.map(|t| count_bit_errors(&bits, t));
    let total = n * ys.ncols();
    let ber = bit_errors.map(|e| if total == 0 { 0.0 } else { e as f64 / total as f64 });
    Ok(BatchDecision { bits, bit_errors, ber })
}

pub fn count_bit_errors(decided: &DMatrix<f64>, truth: &DMatrix<f64>) -> usize {
    decided.iter().zip(truth.iter()).filter(|(a, b)| hard_sign(**a) != hard_sign(**b)).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{gen_inputs, InputDistribution};
    use crate::signatures::{search_uniquely_decodable, Alphabet};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_plus_extra_column() {
        let s = SignatureMatrix::from_rows(2, 3, &[1.0, 0.0, 0.6, 0.0, 1.0, 0.8]).unwrap();
        let p = partition(&s).unwrap();
        assert_eq!(p.block_a(), &DMatrix::identity(2, 2));
        assert_eq!(p.block_b(), &DMatrix::from_column_slice(2, 1, &[0.6, 0.8]));
        assert_eq!(p.signature(), *s.matrix());
    }

    #[test]
    fn duplicate_column_excluded() {
        let s = SignatureMatrix::from_rows(2, 3, &[1.0, 1.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        let p = partition(&s).unwrap();
        assert_eq!(&p.column_order()[..2], &[0, 2]);
        assert_eq!(p.signature(), *s.matrix());
    }

    #[test]
    fn random_full_row_rank_block_invertible() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = crate::signatures::random_uniform(8, 13, &mut rng);
        let p = partition(&s).unwrap();
        assert!(p.block_a().determinant().abs() > 1e-10);
        assert_eq!(p.signature(), *s.matrix());
    }

    #[test]
    fn rank_deficient_has_no_block() {
        let s = SignatureMatrix::from_rows(2, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0]).unwrap();
        assert!(matches!(partition(&s), Err(Error::NoInvertibleBlock { rank: 1, m: 2 })));
    }

    #[test]
    fn identity_recovers_signs() {
        let p = partition(&SignatureMatrix::identity(2)).unwrap();
        assert_eq!(p.free_bits(), 0);
        let x = p.decode(&DVector::from_vec(vec![-0.3, 2.0]), &[1.0, 2.0]).unwrap();
        assert_eq!(x, DVector::from_vec(vec![-1.0, 1.0]));
        // sign(0) = +1
        let x = p.decode(&DVector::from_vec(vec![0.0, -1.0]), &[1.0, 1.0]).unwrap();
        assert_eq!(x, DVector::from_vec(vec![1.0, -1.0]));
    }

    #[test]
    fn noiseless_exact_on_every_input() {
        let s = search_uniquely_decodable(4, 5, Alphabet::Binary, 2, 2, false).unwrap().unwrap();
        let p = partition(&s).unwrap();
        let amps = [1.0, 0.9, 1.1, 1.05, 0.95];
        let d = DVector::from_column_slice(&amps);
        for mask in 0..1u32 << 5 {
            let x = DVector::from_fn(5, |u, _| if mask >> u & 1 == 1 { -1.0 } else { 1.0 });
            let y = s.matrix() * x.component_mul(&d);
            assert_eq!(p.decode(&y, &amps).unwrap(), x);
        }
    }

    #[test]
    fn noiseless_exact_eight_by_thirteen() {
        let s = search_uniquely_decodable(8, 13, Alphabet::Binary, 1, 5, false).unwrap().unwrap();
        let p = partition(&s).unwrap();
        let amps = [1.0; 13];
        for mask in 0..1u32 << 13 {
            let x = DVector::from_fn(13, |u, _| if mask >> u & 1 == 1 { -1.0 } else { 1.0 });
            let y = s.matrix() * &x;
            assert_eq!(p.decode(&y, &amps).unwrap(), x);
        }
    }

    #[test]
    fn sign_rule_consistent_with_returned_bits() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let s = crate::signatures::random_uniform(4, 7, &mut rng);
        let p = partition(&s).unwrap();
        let amps: Vec<f64> = (0..7).map(|_| rng.random_range(0.5..1.5)).collect();
        for _ in 0..50 {
            let y = DVector::from_fn(4, |_, _| rng.random_range(-2.0..2.0));
            let x = p.decode(&y, &amps).unwrap();
            let order = p.column_order();
            let x2 = DVector::from_fn(3, |k, _| x[order[4 + k]] * amps[order[4 + k]]);
            let v = p.a_inverse() * &y - p.a_inverse() * p.block_b() * x2;
            for k in 0..4 {
                assert_eq!(x[order[k]], hard_sign(v[k]));
            }
        }
    }

    #[test]
    fn too_many_free_bits() {
        let s = SignatureMatrix::new(DMatrix::from_fn(1, 22, |_, j| 1.0 + j as f64)).unwrap();
        let p = partition(&s).unwrap();
        let r = p.decode(&DVector::from_element(1, 1.0), &[1.0; 22]);
        assert!(matches!(r, Err(Error::TooManyFreeBits(21))));
    }

    #[test]
    fn batch_ber() {
        let s = search_uniquely_decodable(4, 5, Alphabet::Binary, 2, 2, false).unwrap().unwrap();
        let p = partition(&s).unwrap();
        let x = gen_inputs(InputDistribution::Binary, 5, 200, 1);
        let ys = s.matrix() * &x;
        let out = decode_batch(&ys, &p, &[1.0; 5], Some(&x)).unwrap();
        assert_eq!(out.ber, Some(0.0));
        assert_eq!(out.bits, x);
        let again = decode_batch(&ys, &p, &[1.0; 5], Some(&x)).unwrap();
        assert_eq!(again.bits, out.bits);
    }

    #[test]
    fn zero_amplitudes_are_chance_level() {
        let s = search_uniquely_decodable(4, 5, Alphabet::Binary, 2, 2, false).unwrap().unwrap();
        let p = partition(&s).unwrap();
        let x = gen_inputs(InputDistribution::Binary, 5, 5000, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let noise = DMatrix::from_fn(4, 5000, |_, _| 20.0 * rand_distr::Distribution::<f64>::sample(&rand_distr::StandardNormal, &mut rng));
        let ys = s.matrix() * &x + noise;
        let ber = decode_batch(&ys, &p, &[0.0; 5], Some(&x)).unwrap().ber.unwrap();
        assert!((ber - 0.5).abs() < 0.03, "ber {ber}");
    }

    #[test]
    fn exhaustive_detector_noiseless() {
        let s = search_uniquely_decodable(4, 5, Alphabet::Binary, 2, 2, false).unwrap().unwrap();
        let det = ExhaustiveDetector::new(&s).unwrap();
        let x = gen_inputs(InputDistribution::Binary, 5, 64, 9);
        for j in 0..64 {
            let y = s.matrix() * x.column(j);
            assert_eq!(det.detect(&y, &[1.0; 5]).unwrap(), x.column(j));
        }
    }
}
