//! Routing structure: the link-route incidence matrix, observed link counts,
//! and structural precondition checks.
//!
//! Row and column indices in this API are zero-based. Reports written for
//! people (CLI JSON) convert to one-based link and route numbers.

use num_integer::Integer;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::intlin::{self, TuStatus};
use crate::linalg::{independent_rows, Matrix};
use crate::simplex;
use crate::{Int, Rational};

/// A validated 0/1 link-route incidence matrix.
///
/// Rows rationally dependent on earlier rows are dropped at construction;
/// `entries()` is the reduced matrix and `original()` the matrix as given.
/// `col_perm` maps the current column order to original route indices; the
/// first `n` permuted columns form the basis block.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RoutingMatrix {
    entries: Matrix<i64>,
    original: Matrix<i64>,
    kept_rows: Vec<usize>,
    rows_removed: Vec<usize>,
    route_ids: Vec<String>,
    col_perm: Vec<usize>,
    route_links: Vec<Vec<usize>>,
    duplicate_columns: Vec<(usize, usize)>,
}

impl RoutingMatrix {
    /// Validates and reduces an incidence matrix. Route ids default to `1..=r`.
    pub fn new(entries: Matrix<i64>, route_ids: Option<Vec<String>>) -> Result<Self> {
        let (n0, r) = (entries.rows(), entries.cols());
        if n0 == 0 || r == 0 {
            return Err(Error::Invalid("routing matrix must have at least one row and one column".into()));
        }
        for i in 0..n0 {
            for j in 0..r {
                let v = entries[(i, j)];
                if v != 0 && v != 1 {
                    return Err(Error::NonBinary { row: i, col: j, value: v });
                }
            }
        }
        if let Some(j) = (0..r).find(|&j| (0..n0).all(|i| entries[(i, j)] == 0)) {
            return Err(Error::ZeroColumn(j));
        }
        let route_ids = match route_ids {
            Some(ids) if ids.len() != r => {
                return Err(Error::Dimension(format!("{} route ids for {} columns", ids.len(), r)))
            }
            Some(ids) => ids,
            None => (1..=r).map(|j| j.to_string()).collect(),
        };

        let mut duplicate_columns = Vec::new();
        let cols: Vec<Vec<i64>> = (0..r).map(|j| entries.column(j)).collect();
        for a in 0..r {
            for b in a + 1..r {
                if cols[a] == cols[b] {
                    duplicate_columns.push((a, b));
                }
            }
        }
        if !duplicate_columns.is_empty() {
            log::warn!("routing matrix has duplicate columns {duplicate_columns:?}; route flows are not identifiable");
        }

        let (kept_rows, rows_removed) = independent_rows(&crate::linalg::lift::<Int>(&entries));
        let reduced = entries.select_rows(&kept_rows);
        let route_links = (0..r)
            .map(|j| (0..reduced.rows()).filter(|&i| reduced[(i, j)] != 0).collect())
            .collect();
        Ok(RoutingMatrix {
            entries: reduced,
            original: entries,
            kept_rows,
            rows_removed,
            route_ids,
            col_perm: (0..r).collect(),
            route_links,
            duplicate_columns,
        })
    }

    pub fn from_rows(rows: &[Vec<i64>]) -> Result<Self> {
        if rows.iter().any(|r| r.len() != rows[0].len()) {
            return Err(Error::Dimension("ragged incidence rows".into()));
        }
        RoutingMatrix::new(Matrix::from_rows(rows), None)
    }

    /// Number of independent monitored links (`n`).
    pub fn links(&self) -> usize {
        self.entries.rows()
    }

    /// Number of routes (`r`).
    pub fn routes(&self) -> usize {
        self.entries.cols()
    }

    /// Width of the basis block, always equal to `links()`.
    pub fn n_swap(&self) -> usize {
        self.links()
    }

    pub fn entries(&self) -> &Matrix<i64> {
        &self.entries
    }

    pub fn original(&self) -> &Matrix<i64> {
        &self.original
    }

    pub fn kept_rows(&self) -> &[usize] {
        &self.kept_rows
    }

    pub fn rows_removed(&self) -> &[usize] {
        &self.rows_removed
    }

    pub fn route_ids(&self) -> &[String] {
        &self.route_ids
    }

    pub fn col_perm(&self) -> &[usize] {
        &self.col_perm
    }

    /// Reduced-row indices of the links used by route `j`.
    pub fn route_links(&self, j: usize) -> &[usize] {
        &self.route_links[j]
    }

    pub fn duplicate_columns(&self) -> &[(usize, usize)] {
        &self.duplicate_columns
    }

    pub fn column(&self, j: usize) -> Vec<i64> {
        self.entries.column(j)
    }

    /// Column indices (original numbering) of the current basis block.
    pub fn basis_block(&self) -> &[usize] {
        &self.col_perm[..self.links()]
    }

    /// Same matrix with a different column order. `perm[k]` is the original
    /// index of the column placed at position `k`.
    pub fn with_permutation(&self, perm: Vec<usize>) -> Result<Self> {
        let r = self.routes();
        let mut seen = vec![false; r];
        if perm.len() != r {
            return Err(Error::Dimension(format!("permutation of length {} for {} routes", perm.len(), r)));
        }
        for &p in &perm {
            if p >= r || std::mem::replace(&mut seen[p], true) {
                return Err(Error::Invalid("column order is not a permutation".into()));
            }
        }
        Ok(RoutingMatrix { col_perm: perm, ..self.clone() })
    }

    /// `A x` over the reduced rows.
    pub fn apply(&self, x: &[i64]) -> Vec<i64> {
        self.entries.mul_vec(x)
    }
}

/// Observed link counts, one vector per observation period, in the row order
/// of the incidence matrix as loaded (before redundant-row removal).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LinkCountSample {
    counts: Vec<Vec<i64>>,
    labels: Option<Vec<String>>,
}

impl LinkCountSample {
    pub fn new(counts: Vec<Vec<i64>>, labels: Option<Vec<String>>) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::Invalid("at least one observation is required".into()));
        }
        let len = counts[0].len();
        for (t, y) in counts.iter().enumerate() {
            if y.len() != len {
                return Err(Error::Dimension(format!("observation {t} has {} counts, expected {len}", y.len())));
            }
            if let Some(v) = y.iter().find(|&&v| v < 0) {
                return Err(Error::Invalid(format!("observation {t} has negative count {v}")));
            }
        }
        if let Some(l) = &labels {
            if l.len() != counts.len() {
                return Err(Error::Dimension("one label per observation required".into()));
            }
        }
        Ok(LinkCountSample { counts, labels })
    }

    pub fn single(y: Vec<i64>) -> Result<Self> {
        LinkCountSample::new(vec![y], None)
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn counts(&self) -> &[Vec<i64>] {
        &self.counts
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn check_dimensions(&self, a: &RoutingMatrix) -> Result<()> {
        let want = a.original().rows();
        match self.counts.first() {
            Some(y) if y.len() != want => Err(Error::Dimension(format!(
                "counts have {} links, routing matrix has {want}",
                y.len()
            ))),
            _ => Ok(()),
        }
    }

    /// Counts restricted to the independent rows kept by `a`.
    pub fn reduced(&self, a: &RoutingMatrix) -> Result<Vec<Vec<i64>>> {
        self.check_dimensions(a)?;
        Ok(self
            .counts
            .iter()
            .map(|y| a.kept_rows().iter().map(|&i| y[i]).collect())
            .collect())
    }
}

/// Outcome of the structural checks.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct NetworkReport {
    pub rows_removed: Vec<usize>,
    pub identifiability_ok: bool,
    pub coprime_ok: bool,
    pub tu_status: TuStatus,
    pub duplicate_columns: Vec<(usize, usize)>,
}

/// Parses CSV text into a validated routing matrix.
pub fn load_network(source: &str) -> Result<RoutingMatrix> {
    let (m, ids) = crate::io::parse_matrix_csv(source)?;
    RoutingMatrix::new(m, ids)
}

/// Distinct nonzero columns (identifiability) and coprime column sums of the
/// current basis block (necessary for a unimodular basis block).
pub fn check_identifiability_preconditions(a: &RoutingMatrix) -> NetworkReport {
    check_with_tu_limit(a, intlin::DEFAULT_TU_SIZE_LIMIT)
}

pub fn check_with_tu_limit(a: &RoutingMatrix, tu_size_limit: usize) -> NetworkReport {
    let nonzero = (0..a.routes()).all(|j| !a.route_links(j).is_empty());
    let identifiability_ok = nonzero && a.duplicate_columns().is_empty();
    NetworkReport {
        rows_removed: a.rows_removed().to_vec(),
        identifiability_ok,
        coprime_ok: column_sums_coprime(a.entries(), a.basis_block()),
        tu_status: intlin::total_unimodularity_check(a, tu_size_limit),
        duplicate_columns: a.duplicate_columns().to_vec(),
    }
}

/// gcd of the column sums of the given columns equals one.
pub fn column_sums_coprime(m: &Matrix<i64>, cols: &[usize]) -> bool {
    let g = cols
        .iter()
        .map(|&j| (0..m.rows()).map(|i| m[(i, j)]).sum::<i64>())
        .fold(0i64, |g, s| g.gcd(&s));
    g == 1
}

/// Whether every observation admits a nonnegative rational solution of
/// `A x = y`, checked against all rows as loaded (so inconsistent counts on
/// redundant links are caught).
pub fn consistency_check(a: &RoutingMatrix, y: &LinkCountSample) -> Result<bool> {
    y.check_dimensions(a)?;
    let lifted: Matrix<Rational> = a.original().map(|&v| Rational::from_integer(Int::from(v)));
    for obs in y.counts() {
        let b: Vec<Rational> = obs.iter().map(|&v| Rational::from_integer(Int::from(v))).collect();
        if !simplex::is_feasible(&lifted, &b) {
            return Ok(false);
        }
    }
    Ok(true)
}
