//! Dense exact matrices with fraction-free (Bareiss) elimination.

use std::fmt;
use std::ops::{Index, IndexMut};

use num_rational::Ratio;
use num_traits::{One, Signed, Zero};

use crate::scalar::ExactInt;

/// Row-major dense matrix.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: fmt::Debug> fmt::Debug for Matrix<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            writeln!(f, "  {:?}", &self.data[r * self.cols..(r + 1) * self.cols])?;
        }
        write!(f, "]")
    }
}

/// Serialized as a list of rows.
impl<T: serde::Serialize> serde::Serialize for Matrix<T> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq((0..self.rows).map(|r| self.row(r)))
    }
}

impl<T> Matrix<T> {
    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length mismatch");
        Matrix { rows, cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(f).collect(),
        }
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }
}

impl<T: Clone> Matrix<T> {
    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(n * m);
        for row in rows {
            assert_eq!(row.len(), m, "ragged rows");
            data.extend(row.iter().cloned());
        }
        Matrix { rows: n, cols: m, data }
    }

    pub fn column(&self, c: usize) -> Vec<T> {
        (0..self.rows).map(|r| self[(r, c)].clone()).collect()
    }

    /// Submatrix made of the given columns, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Self {
        Matrix::from_fn(self.rows, cols.len(), |r, c| self[(r, cols[c])].clone())
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Matrix::from_fn(rows.len(), self.cols, |r, c| self[(rows[r], c)].clone())
    }

    pub fn transpose(&self) -> Self {
        Matrix::from_fn(self.cols, self.rows, |r, c| self[(c, r)].clone())
    }
}

impl<T: Clone + Zero + One> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix::from_fn(rows, cols, |_, _| T::zero())
    }

    pub fn identity(n: usize) -> Self {
        Matrix::from_fn(n, n, |r, c| if r == c { T::one() } else { T::zero() })
    }

    pub fn mul(&self, other: &Matrix<T>) -> Matrix<T> {
        assert_eq!(self.cols, other.rows, "dimension mismatch in product");
        Matrix::from_fn(self.rows, other.cols, |r, c| {
            let mut acc = T::zero();
            for k in 0..self.cols {
                acc = acc + self[(r, k)].clone() * other[(k, c)].clone();
            }
            acc
        })
    }

    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(self.cols, v.len(), "dimension mismatch in product");
        (0..self.rows)
            .map(|r| {
                let mut acc = T::zero();
                for (a, b) in self.row(r).iter().zip(v) {
                    acc = acc + a.clone() * b.clone();
                }
                acc
            })
            .collect()
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(Zero::is_zero)
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    fn index(&self, (r, c): (usize, usize)) -> &T {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut T {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }
}

/// Lifts an integer matrix into any exact ring with `From<i64>`-like conversion.
pub fn lift<T: ExactInt>(m: &Matrix<i64>) -> Matrix<T> {
    m.map(|&v| T::from_i64(v).expect("i64 fits in ring"))
}

/// Result of a fraction-free forward elimination.
struct Echelon<T> {
    rank: usize,
    /// Determinant sign from row swaps times the last pivot (square, full rank only).
    det: T,
}

/// Bareiss elimination in place. Returns the rank and, for square input,
/// the determinant.
fn bareiss<T: ExactInt>(mut m: Matrix<T>) -> Echelon<T> {
    let rows = m.rows;
    let cols = m.cols;
    let mut prev = T::one();
    let mut sign = T::one();
    let mut rank = 0;
    let mut pivot_row = 0;
    for col in 0..cols {
        if pivot_row == rows {
            break;
        }
        let Some(p) = (pivot_row..rows).find(|&r| !m[(r, col)].is_zero()) else {
            continue;
        };
        if p != pivot_row {
            for c in 0..cols {
                m.data.swap(p * cols + c, pivot_row * cols + c);
            }
            sign = -sign;
        }
        let piv = m[(pivot_row, col)].clone();
        for r in pivot_row + 1..rows {
            let lead = m[(r, col)].clone();
            for c in col + 1..cols {
                let v = piv.clone() * m[(r, c)].clone() - lead.clone() * m[(pivot_row, c)].clone();
                m[(r, c)] = v / prev.clone();
            }
            m[(r, col)] = T::zero();
        }
        prev = piv;
        pivot_row += 1;
        rank += 1;
    }
    let det = if rows == cols && rank == rows {
        if rows == 0 {
            T::one()
        } else {
            sign * prev
        }
    } else {
        T::zero()
    };
    Echelon { rank, det }
}

/// Exact determinant of a square matrix.
pub fn determinant<T: ExactInt>(m: &Matrix<T>) -> T {
    assert_eq!(m.rows, m.cols, "determinant of non-square matrix");
    bareiss(m.clone()).det
}

/// Exact rank over the rationals.
pub fn rank<T: ExactInt>(m: &Matrix<T>) -> usize {
    bareiss(m.clone()).rank
}

/// Exact inverse over the fraction field, or `None` when singular.
pub fn inverse<T: ExactInt>(m: &Matrix<T>) -> Option<Matrix<Ratio<T>>> {
    assert_eq!(m.rows, m.cols, "inverse of non-square matrix");
    let n = m.rows;
    let mut a: Matrix<Ratio<T>> = m.map(|v| Ratio::from_integer(v.clone()));
    let mut inv: Matrix<Ratio<T>> = Matrix::identity(n);
    for col in 0..n {
        let p = (col..n).find(|&r| !a[(r, col)].is_zero())?;
        if p != col {
            for c in 0..n {
                a.data.swap(p * n + c, col * n + c);
                inv.data.swap(p * n + c, col * n + c);
            }
        }
        let piv = a[(col, col)].clone();
        for c in 0..n {
            a[(col, c)] = a[(col, c)].clone() / piv.clone();
            inv[(col, c)] = inv[(col, c)].clone() / piv.clone();
        }
        for r in 0..n {
            if r == col || a[(r, col)].is_zero() {
                continue;
            }
            let f = a[(r, col)].clone();
            for c in 0..n {
                let av = a[(col, c)].clone() * f.clone();
                a[(r, c)] = a[(r, c)].clone() - av;
                let iv = inv[(col, c)].clone() * f.clone();
                inv[(r, c)] = inv[(r, c)].clone() - iv;
            }
        }
    }
    Some(inv)
}

/// Incremental span test over the rationals, kept fraction-free.
///
/// Vectors are reduced against an echelon set of integer vectors; each stored
/// vector is divided by the gcd of its entries so entries stay small.
#[derive(Clone, Debug)]
pub struct SpanTracker<T> {
    dim: usize,
    basis: Vec<(usize, Vec<T>)>,
}

impl<T: ExactInt> SpanTracker<T> {
    pub fn new(dim: usize) -> Self {
        SpanTracker { dim, basis: Vec::new() }
    }

    pub fn rank(&self) -> usize {
        self.basis.len()
    }

    fn reduce(&self, v: &[T]) -> Vec<T> {
        assert_eq!(v.len(), self.dim);
        let mut w = v.to_vec();
        for (p, b) in &self.basis {
            if w[*p].is_zero() {
                continue;
            }
            let bp = b[*p].clone();
            let wp = w[*p].clone();
            for (wi, bi) in w.iter_mut().zip(b) {
                *wi = bp.clone() * wi.clone() - wp.clone() * bi.clone();
            }
            normalize(&mut w);
        }
        w
    }

    /// True when `v` lies in the span of the vectors inserted so far.
    pub fn contains(&self, v: &[T]) -> bool {
        self.reduce(v).iter().all(Zero::is_zero)
    }

    /// Inserts `v` if independent; returns whether the rank grew.
    pub fn insert(&mut self, v: &[T]) -> bool {
        let w = self.reduce(v);
        match w.iter().position(|x| !x.is_zero()) {
            Some(p) => {
                self.basis.push((p, w));
                true
            }
            None => false,
        }
    }
}

fn normalize<T: ExactInt>(w: &mut [T]) {
    let mut g = T::zero();
    for x in w.iter() {
        if !x.is_zero() {
            g = g.gcd(x);
            if g.is_one() {
                return;
            }
        }
    }
    if !g.is_zero() && !g.is_one() {
        for x in w.iter_mut() {
            *x = x.clone() / g.clone();
        }
    }
}

/// Indices of rows that are rationally independent of all earlier rows.
pub fn independent_rows<T: ExactInt>(m: &Matrix<T>) -> (Vec<usize>, Vec<usize>) {
    let mut tracker = SpanTracker::new(m.cols);
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for r in 0..m.rows {
        if tracker.insert(m.row(r)) {
            kept.push(r);
        } else {
            dropped.push(r);
        }
    }
    (kept, dropped)
}

/// True when every entry of a rational matrix is an integer.
pub fn is_integral<T: ExactInt>(m: &Matrix<Ratio<T>>) -> bool {
    m.as_slice().iter().all(Ratio::is_integer)
}

/// Largest absolute entry of a rational matrix.
pub fn max_abs<T: ExactInt>(m: &Matrix<Ratio<T>>) -> Ratio<T> {
    m.as_slice()
        .iter()
        .map(Signed::abs)
        .fold(Ratio::zero(), |a, b| if b > a { b } else { a })
}
