//! Exact two-phase primal simplex with Bland's rule.
//!
//! Problems are in standard form: maximize `c·x` subject to `A x = b`,
//! `x >= 0`. Arithmetic is exact, so there is no tolerance anywhere.

use crate::linalg::Matrix;
use crate::scalar::ExactField;

#[derive(Clone, Debug, PartialEq)]
pub enum LpOutcome<F> {
    Optimal { x: Vec<F>, value: F },
    Infeasible,
    Unbounded,
}

struct Tableau<F> {
    t: Matrix<F>,
    basis: Vec<usize>,
    /// Number of structural (non-artificial) columns.
    n: usize,
}

impl<F: ExactField> Tableau<F> {
    fn rhs(&self, r: usize) -> &F {
        &self.t[(r, self.t.cols() - 1)]
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let w = self.t.cols();
        let piv = self.t[(row, col)].clone();
        for c in 0..w {
            self.t[(row, c)] = self.t[(row, c)].clone() / piv.clone();
        }
        for r in 0..self.t.rows() {
            if r == row {
                continue;
            }
            let f = self.t[(r, col)].clone();
            if f.is_zero() {
                continue;
            }
            for c in 0..w {
                let v = self.t[(row, c)].clone() * f.clone();
                self.t[(r, c)] = self.t[(r, c)].clone() - v;
            }
        }
        self.basis[row] = col;
    }

    /// Runs primal simplex for `max cost·x` over the columns in `allowed`.
    /// Returns false on unboundedness.
    fn optimize(&mut self, cost: &[F], allowed: usize) -> bool {
        loop {
            let mut entering = None;
            for j in 0..allowed {
                if self.basis.contains(&j) {
                    continue;
                }
                let mut d = cost[j].clone();
                for (r, &b) in self.basis.iter().enumerate() {
                    d = d - cost[b].clone() * self.t[(r, j)].clone();
                }
                if d > F::zero() {
                    entering = Some(j);
                    break;
                }
            }
            let Some(j) = entering else {
                return true;
            };
            let mut leave: Option<(usize, F)> = None;
            for r in 0..self.t.rows() {
                let a = self.t[(r, j)].clone();
                if a <= F::zero() {
                    continue;
                }
                let ratio = self.rhs(r).clone() / a;
                let better = match &leave {
                    None => true,
                    Some((lr, best)) => ratio < *best || (ratio == *best && self.basis[r] < self.basis[*lr]),
                };
                if better {
                    leave = Some((r, ratio));
                }
            }
            match leave {
                Some((r, _)) => self.pivot(r, j),
                None => return false,
            }
        }
    }
}

/// Maximizes `c·x` subject to `a x = b`, `x >= 0`.
pub fn maximize<F: ExactField>(a: &Matrix<F>, b: &[F], c: &[F]) -> LpOutcome<F> {
    let m = a.rows();
    let n = a.cols();
    assert_eq!(b.len(), m);
    assert_eq!(c.len(), n);

    // Tableau with one artificial per row; rows flipped so rhs >= 0.
    let mut t = Matrix::zeros(m, n + m + 1);
    for r in 0..m {
        let flip = b[r] < F::zero();
        for j in 0..n {
            let v = a[(r, j)].clone();
            t[(r, j)] = if flip { -v } else { v };
        }
        t[(r, n + r)] = F::one();
        t[(r, n + m)] = if flip { -b[r].clone() } else { b[r].clone() };
    }
    let mut tab = Tableau { t, basis: (n..n + m).collect(), n };

    // Phase one: maximize -(sum of artificials).
    let mut phase1 = vec![F::zero(); n + m];
    for v in phase1.iter_mut().skip(n) {
        *v = -F::one();
    }
    tab.optimize(&phase1, n + m);
    let mut infeas = F::zero();
    for (r, &bcol) in tab.basis.iter().enumerate() {
        if bcol >= n {
            infeas = infeas + tab.rhs(r).clone();
        }
    }
    if infeas > F::zero() {
        return LpOutcome::Infeasible;
    }

    // Drive remaining (zero-valued) artificials out; drop redundant rows.
    let mut r = 0;
    while r < tab.basis.len() {
        if tab.basis[r] >= n {
            match (0..n).find(|&j| !tab.t[(r, j)].is_zero()) {
                Some(j) => tab.pivot(r, j),
                None => {
                    let keep: Vec<usize> = (0..tab.t.rows()).filter(|&k| k != r).collect();
                    tab.t = tab.t.select_rows(&keep);
                    tab.basis.remove(r);
                    continue;
                }
            }
        }
        r += 1;
    }

    let mut cost = c.to_vec();
    cost.extend((0..m).map(|_| F::zero()));
    if !tab.optimize(&cost, tab.n) {
        return LpOutcome::Unbounded;
    }
    let mut x = vec![F::zero(); n];
    for (r, &bcol) in tab.basis.iter().enumerate() {
        if bcol < n {
            x[bcol] = tab.rhs(r).clone();
        }
    }
    let mut value = F::zero();
    for (cj, xj) in c.iter().zip(&x) {
        value = value + cj.clone() * xj.clone();
    }
    LpOutcome::Optimal { x, value }
}

/// Phase-one feasibility of `a x = b`, `x >= 0`.
pub fn is_feasible<F: ExactField>(a: &Matrix<F>, b: &[F]) -> bool {
    let c = vec![F::zero(); a.cols()];
    !matches!(maximize(a, b, &c), LpOutcome::Infeasible)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Rational;

    fn q(v: i64) -> Rational {
        Rational::from_integer(v.into())
    }

    fn mat(rows: &[&[i64]]) -> Matrix<Rational> {
        Matrix::from_rows(&rows.iter().map(|r| r.iter().map(|&v| q(v)).collect()).collect::<Vec<_>>())
    }

    #[test]
    fn simple_max() {
        // max x + y, x + 2y + s1 = 4, 3x + y + s2 = 6
        let a = mat(&[&[1, 2, 1, 0], &[3, 1, 0, 1]]);
        let b = vec![q(4), q(6)];
        let c = vec![q(1), q(1), q(0), q(0)];
        match maximize(&a, &b, &c) {
            LpOutcome::Optimal { x, value } => {
                assert_eq!(value, Rational::new(14.into(), 5.into()));
                assert_eq!(x[0], Rational::new(8.into(), 5.into()));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn infeasible_and_unbounded() {
        let a = mat(&[&[1, 1], &[1, 1]]);
        assert_eq!(maximize(&a, &[q(1), q(2)], &[q(0), q(0)]), LpOutcome::Infeasible);
        let a = mat(&[&[1, -1]]);
        assert_eq!(maximize(&a, &[q(1)], &[q(1), q(0)]), LpOutcome::Unbounded);
    }

    #[test]
    fn redundant_rows_are_tolerated() {
        let a = mat(&[&[1, 1, 0], &[1, 1, 0], &[0, 1, 1]]);
        let b = vec![q(3), q(3), q(2)];
        match maximize(&a, &b, &[q(1), q(1), q(1)]) {
            LpOutcome::Optimal { value, .. } => assert_eq!(value, q(5)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn negative_rhs_rows_are_flipped() {
        let a = mat(&[&[-1, 0]]);
        assert!(!is_feasible(&a, &[q(2)]));
        assert!(is_feasible(&a, &[q(-2)]));
    }
}
