//! Exact integer linear algebra on the routing matrix: basis partitions,
//! their inverses and null-space bases, unimodularity checks, and greedy
//! partition selection.

use num_rational::Ratio;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, lift, Matrix, SpanTracker};
use crate::netmodel::RoutingMatrix;
use crate::{Int, Rational};

/// Minor dimension beyond which the exhaustive TU check is skipped.
pub const DEFAULT_TU_SIZE_LIMIT: usize = 12;

/// Upper bound on determinants evaluated by the exhaustive TU check.
pub const TU_DETERMINANT_BUDGET: u128 = 10_000_000;

/// Alternative basis completions tried when the greedy basis is not unimodular.
pub const GREEDY_BACKTRACK_BUDGET: usize = 64;

const GREEDY_NODE_BUDGET: usize = 200_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TuStatus {
    VerifiedTu,
    VerifiedNotTu,
    Unchecked,
}

/// A split of the routes into `n` basis routes (the invertible block `A1`)
/// and `r - n` free routes (`A2`). Column indices are original route indices.
#[derive(Clone, Debug, PartialEq)]
pub struct Partition {
    basis_cols: Vec<usize>,
    free_cols: Vec<usize>,
    inv_a1: Matrix<Rational>,
    det_a1: Int,
}

impl Partition {
    pub fn basis_cols(&self) -> &[usize] {
        &self.basis_cols
    }

    pub fn free_cols(&self) -> &[usize] {
        &self.free_cols
    }

    pub fn inv_a1(&self) -> &Matrix<Rational> {
        &self.inv_a1
    }

    pub fn det_a1(&self) -> &Int {
        &self.det_a1
    }

    pub fn is_unimodular(&self) -> bool {
        self.det_a1.abs().is_one()
    }

    /// Routes in partition order: basis block first, then free routes.
    pub fn order(&self) -> Vec<usize> {
        self.basis_cols.iter().chain(&self.free_cols).copied().collect()
    }

    /// `A1^{-1}` as machine integers, when it is integral.
    pub fn integer_inverse(&self) -> Option<Matrix<i64>> {
        if !linalg::is_integral(&self.inv_a1) {
            return None;
        }
        let data: Option<Vec<i64>> = self.inv_a1.as_slice().iter().map(|v| v.to_integer().to_i64()).collect();
        data.map(|d| Matrix::from_vec(self.inv_a1.rows(), self.inv_a1.cols(), d))
    }
}

fn rational_matrix(a: &RoutingMatrix) -> Matrix<Rational> {
    a.entries().map(|&v| Ratio::from_integer(Int::from(v)))
}

/// Builds the partition with the given basis columns (free columns follow in
/// ascending index order).
pub fn make_partition(a: &RoutingMatrix, basis_cols: &[usize]) -> Result<Partition> {
    let (n, r) = (a.links(), a.routes());
    if basis_cols.len() != n {
        return Err(Error::Dimension(format!("{} basis columns for {} links", basis_cols.len(), n)));
    }
    let mut in_basis = vec![false; r];
    for &c in basis_cols {
        if c >= r || std::mem::replace(&mut in_basis[c], true) {
            return Err(Error::Invalid(format!("basis columns {basis_cols:?} are not distinct valid indices")));
        }
    }
    let a1 = lift::<Int>(&a.entries().select_columns(basis_cols));
    let det_a1 = linalg::determinant(&a1);
    if det_a1.is_zero() {
        return Err(Error::Singular);
    }
    let inv_a1 = linalg::inverse(&a1).ok_or(Error::Singular)?;
    debug_assert_eq!(a1.map(|v| Ratio::from_integer(v.clone())).mul(&inv_a1), Matrix::identity(n));
    let free_cols = (0..r).filter(|&j| !in_basis[j]).collect();
    Ok(Partition { basis_cols: basis_cols.to_vec(), free_cols, inv_a1, det_a1 })
}

/// The null-space basis `U = [-A1^{-1} A2 ; I]` with rows in partition order.
#[derive(Clone, Debug, PartialEq)]
pub struct NullBasis {
    u: Matrix<Rational>,
}

impl NullBasis {
    pub fn matrix(&self) -> &Matrix<Rational> {
        &self.u
    }

    pub fn is_integral(&self) -> bool {
        linalg::is_integral(&self.u)
    }

    /// Column `j` as machine integers, if integral.
    pub fn integer_column(&self, j: usize) -> Option<Vec<i64>> {
        (0..self.u.rows()).map(|i| {
            let v = &self.u[(i, j)];
            if v.is_integer() {
                v.to_integer().to_i64()
            } else {
                None
            }
        }).collect()
    }

    /// `U` with rows permuted back to original route order.
    pub fn in_route_order(&self, p: &Partition) -> Matrix<Rational> {
        let order = p.order();
        let mut out = Matrix::zeros(self.u.rows(), self.u.cols());
        for (k, &route) in order.iter().enumerate() {
            for j in 0..self.u.cols() {
                out[(route, j)] = self.u[(k, j)].clone();
            }
        }
        out
    }
}

pub fn null_basis(p: &Partition, a: &RoutingMatrix) -> NullBasis {
    let (n, r) = (a.links(), a.routes());
    let a2 = rational_matrix(a).select_columns(&p.free_cols);
    let top = p.inv_a1.mul(&a2);
    let u = Matrix::from_fn(r, r - n, |i, j| {
        if i < n {
            -top[(i, j)].clone()
        } else if i - n == j {
            Rational::one()
        } else {
            Rational::zero()
        }
    });
    let basis = NullBasis { u };
    debug_assert!(rational_matrix(a).mul(&basis.in_route_order(p)).is_zero());
    basis
}

pub fn is_unimodular(p: &Partition) -> bool {
    p.is_unimodular()
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Advances `idx` to the next k-combination of `0..n` in lexicographic order.
fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let k = idx.len();
    for i in (0..k).rev() {
        if idx[i] < n - k + i {
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Exhaustive check that every square submatrix has determinant in {-1, 0, 1}.
///
/// Skipped (`Unchecked`) when `min(n, r) > size_limit` or the number of
/// minors exceeds [`TU_DETERMINANT_BUDGET`].
pub fn total_unimodularity_check(a: &RoutingMatrix, size_limit: usize) -> TuStatus {
    let m = a.entries();
    let (n, r) = (m.rows(), m.cols());
    let kmax = n.min(r);
    if kmax > size_limit {
        return TuStatus::Unchecked;
    }
    let total: u128 = (1..=kmax).map(|k| binomial(n, k) * binomial(r, k)).sum();
    if total > TU_DETERMINANT_BUDGET {
        return TuStatus::Unchecked;
    }
    for k in 2..=kmax {
        let mut rows: Vec<usize> = (0..k).collect();
        loop {
            let mut cols: Vec<usize> = (0..k).collect();
            loop {
                let sub = Matrix::from_fn(k, k, |i, j| m[(rows[i], cols[j])]);
                if linalg::determinant(&sub).abs() > 1 {
                    return TuStatus::VerifiedNotTu;
                }
                if !next_combination(&mut cols, r) {
                    break;
                }
            }
            if !next_combination(&mut rows, n) {
                break;
            }
        }
    }
    TuStatus::VerifiedTu
}

struct GreedySearch<'a> {
    a: &'a RoutingMatrix,
    order: Vec<usize>,
    columns: Vec<Vec<Int>>,
    completions: usize,
    nodes: usize,
}

impl GreedySearch<'_> {
    fn search(&mut self, start: usize, tracker: &SpanTracker<Int>, chosen: &mut Vec<usize>) -> Result<Option<Partition>> {
        if chosen.len() == self.a.links() {
            self.completions += 1;
            let p = make_partition(self.a, chosen)?;
            if p.is_unimodular() {
                return Ok(Some(p));
            }
            log::debug!("greedy basis {chosen:?} has det {}; backtracking", p.det_a1());
            if self.completions >= GREEDY_BACKTRACK_BUDGET {
                return Err(Error::NoUnimodularBasis(GREEDY_BACKTRACK_BUDGET));
            }
            return Ok(None);
        }
        for k in start..self.order.len() {
            self.nodes += 1;
            if self.nodes > GREEDY_NODE_BUDGET {
                return Err(Error::NoUnimodularBasis(self.completions));
            }
            let col = self.order[k];
            if tracker.contains(&self.columns[col]) {
                continue;
            }
            let mut next = tracker.clone();
            next.insert(&self.columns[col]);
            chosen.push(col);
            if let Some(p) = self.search(k + 1, &next, chosen)? {
                return Ok(Some(p));
            }
            chosen.pop();
        }
        Ok(None)
    }
}

/// Picks basis routes one at a time in decreasing score order, skipping
/// routes in the span of those already chosen (ties go to the lower index).
/// Non-unimodular completions are backtracked over, up to
/// [`GREEDY_BACKTRACK_BUDGET`] of them.
pub fn greedy_reorder(a: &RoutingMatrix, scores: &[f64]) -> Result<Partition> {
    let r = a.routes();
    if scores.len() != r {
        return Err(Error::Dimension(format!("{} scores for {} routes", scores.len(), r)));
    }
    if scores.iter().any(|s| !s.is_finite() || *s < 0.0) {
        return Err(Error::Invalid("route scores must be finite and nonnegative".into()));
    }
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]).then(i.cmp(&j)));

    // Cheap rank check up front so rank deficiency is reported as such.
    let mut full = SpanTracker::<Int>::new(a.links());
    let columns: Vec<Vec<Int>> = (0..r).map(|j| a.column(j).into_iter().map(Int::from).collect()).collect();
    for c in &columns {
        full.insert(c);
    }
    if full.rank() < a.links() {
        return Err(Error::RankDeficient);
    }

    let mut search = GreedySearch { a, order, columns, completions: 0, nodes: 0 };
    let tracker = SpanTracker::new(a.links());
    match search.search(0, &tracker, &mut Vec::new())? {
        Some(p) => Ok(p),
        None => Err(Error::NoUnimodularBasis(search.completions)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::netmodel::column_sums_coprime;
    use proptest::prelude::*;

    fn half() -> Rational {
        Rational::new(Int::from(1), Int::from(2))
    }

    #[test]
    fn four_link_lex_partition_is_unimodular() {
        let a = fixtures::four_link_network();
        let p = make_partition(&a, &fixtures::FOUR_LINK_LEX_BASIS).unwrap();
        assert!(p.det_a1().abs().is_one());
        assert!(p.integer_inverse().is_some());
    }

    #[test]
    fn non_tu_partition_has_half_inverse() {
        let a = fixtures::non_tu_network();
        let p = make_partition(&a, &[0, 1, 2]).unwrap();
        assert_eq!(*p.det_a1(), Int::from(2));
        assert!(!is_unimodular(&p));
        let inv = p.inv_a1();
        // first row (1/2, 1/2, -1/2)
        assert_eq!(inv[(0, 0)], half());
        assert_eq!(inv[(0, 2)], -half());
        assert!(inv.as_slice().iter().all(|v| v.abs() == half()));
        assert!(!null_basis(&p, &a).is_integral());
    }

    #[test]
    fn non_tu_swapping_in_column_four_is_unimodular() {
        let a = fixtures::non_tu_network();
        for basis in [[3, 1, 2], [0, 3, 2], [0, 1, 3]] {
            let p = make_partition(&a, &basis).unwrap();
            assert!(is_unimodular(&p), "{basis:?}");
            assert!(p.inv_a1().as_slice().iter().all(|v| v.is_integer() && v.abs() <= Rational::one()));
        }
    }

    #[test]
    fn identity_block_inverse_is_identity() {
        let a = RoutingMatrix::from_rows(&[vec![1, 0, 1], vec![0, 1, 1]]).unwrap();
        let p = make_partition(&a, &[0, 1]).unwrap();
        assert_eq!(*p.inv_a1(), Matrix::identity(2));
        assert!(is_unimodular(&p));
    }

    #[test]
    fn partition_errors() {
        let a = fixtures::four_link_network();
        let sing = RoutingMatrix::from_rows(&[vec![1, 1, 0], vec![1, 1, 1]]).unwrap();
        assert!(matches!(make_partition(&sing, &[0, 1]), Err(Error::Singular)));
        assert!(matches!(make_partition(&a, &[0, 1]), Err(Error::Dimension(_))));
        assert!(matches!(make_partition(&a, &[0, 1, 1, 2]), Err(Error::Invalid(_))));
    }

    #[test]
    fn swapped_null_basis_matches_hand_computation() {
        let a = fixtures::four_link_network();
        let p = make_partition(&a, &fixtures::FOUR_LINK_SWAPPED_BASIS).unwrap();
        let u = null_basis(&p, &a);
        let col0 = u.integer_column(0).unwrap();
        let col1 = u.integer_column(1).unwrap();
        // hand-computed -A1^{-1} A2 for basis (0,1,2,4), free (3,5)
        assert_eq!(col0, vec![-1, 1, 0, -1, 1, 0]);
        assert_eq!(col1, vec![0, 1, -1, -1, 0, 1]);
        let full = u.in_route_order(&p);
        assert!(rational_matrix(&a).mul(&full).is_zero());
    }

    #[test]
    fn tu_checks() {
        assert_eq!(total_unimodularity_check(&fixtures::non_tu_network(), 12), TuStatus::VerifiedNotTu);
        assert_eq!(total_unimodularity_check(&fixtures::four_link_network(), 12), TuStatus::VerifiedTu);
        let ones = RoutingMatrix::from_rows(&[vec![1, 1, 1, 1]]).unwrap();
        assert_eq!(total_unimodularity_check(&ones, 12), TuStatus::VerifiedTu);
        assert_eq!(total_unimodularity_check(&fixtures::four_link_network(), 2), TuStatus::Unchecked);
    }

    #[test]
    fn greedy_prefers_high_scores() {
        let a = fixtures::four_link_network();
        let p = greedy_reorder(&a, &[5.0, 5.0, 5.0, 0.0, 5.0, 1.0]).unwrap();
        let mut b = p.basis_cols().to_vec();
        b.sort();
        assert_eq!(b, fixtures::FOUR_LINK_SWAPPED_BASIS.to_vec());
    }

    #[test]
    fn greedy_equal_scores_takes_first_independent_columns() {
        let a = fixtures::four_link_network();
        let p = greedy_reorder(&a, &[1.0; 6]).unwrap();
        assert_eq!(p.basis_cols(), &[0, 1, 2, 3]);
        let j = fixtures::junction_network();
        let p = greedy_reorder(&j, &[1.0; 20]).unwrap();
        assert_eq!(p.basis_cols(), &(0..9).collect::<Vec<_>>()[..]);
    }

    #[test]
    fn greedy_backtracks_past_non_unimodular_block() {
        let a = fixtures::non_tu_network();
        let p = greedy_reorder(&a, &[1.0; 4]).unwrap();
        assert!(p.is_unimodular());
        assert_eq!(p.basis_cols(), &[0, 1, 3]);
    }

    #[test]
    fn greedy_rejects_bad_scores() {
        let a = fixtures::four_link_network();
        assert!(matches!(greedy_reorder(&a, &[1.0; 5]), Err(Error::Dimension(_))));
        assert!(matches!(greedy_reorder(&a, &[f64::NAN; 6]), Err(Error::Invalid(_))));
    }

    /// Every invertible n x n block of the reference matrices.
    fn all_partitions(a: &RoutingMatrix) -> Vec<Partition> {
        let (n, r) = (a.links(), a.routes());
        let mut idx: Vec<usize> = (0..n).collect();
        let mut out = Vec::new();
        loop {
            if let Ok(p) = make_partition(a, &idx) {
                out.push(p);
            }
            if !next_combination(&mut idx, r) {
                break;
            }
        }
        out
    }

    #[test]
    fn unimodular_blocks_have_coprime_column_sums() {
        for a in [fixtures::four_link_network(), fixtures::non_tu_network(), fixtures::junction_network()] {
            let parts = all_partitions(&a);
            assert!(!parts.is_empty());
            for p in parts {
                if p.is_unimodular() {
                    assert!(column_sums_coprime(a.entries(), p.basis_cols()), "{:?}", p.basis_cols());
                }
            }
        }
    }

    proptest! {
        #[test]
        fn corridor_null_bases_are_small_integers(seed in 0u64..1000) {
            // interval matrices are TU; any invertible block gives U in {-1,0,1}
            let a = fixtures::corridor_network(5, 14);
            let mut scores: Vec<f64> = (0..a.routes()).map(|j| ((j as u64 * 2654435761 + seed * 97) % 101) as f64).collect();
            scores[0] += 0.5;
            let p = greedy_reorder(&a, &scores).unwrap();
            let u = null_basis(&p, &a);
            prop_assert!(u.matrix().as_slice().iter().all(|v| v.is_integer() && v.abs() <= Rational::one()));
            let full = u.in_route_order(&p);
            prop_assert!(rational_matrix(&a).mul(&full).is_zero());
        }

        #[test]
        fn greedy_is_deterministic(scores in proptest::collection::vec(0.0f64..10.0, 20)) {
            let a = fixtures::junction_network();
            let p1 = greedy_reorder(&a, &scores).unwrap();
            let p2 = greedy_reorder(&a, &scores).unwrap();
            prop_assert_eq!(p1.basis_cols(), p2.basis_cols());
            prop_assert!(p1.is_unimodular());
        }
    }
}
