//! The feasible set `{x : A x = y, x >= 0, x integer}`: starting points,
//! coordinate move bounds, exhaustive enumeration and vertex tests.

use num_integer::Integer;
use num_traits::{ToPrimitive, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::intlin::{self, Partition};
use crate::linalg::{self, Matrix};
use crate::netmodel::RoutingMatrix;
use crate::simplex::{self, LpOutcome};
use crate::{Int, Rational};

/// Enumeration cap used when the caller has no better idea.
pub const DEFAULT_ENUMERATION_CAP: usize = 1_000_000;

/// A feasible integer route-flow vector in original route order.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct FlowState {
    x: Vec<i64>,
}

impl FlowState {
    pub fn new(x: Vec<i64>) -> Self {
        FlowState { x }
    }

    pub fn x(&self) -> &[i64] {
        &self.x
    }

    pub fn into_vec(self) -> Vec<i64> {
        self.x
    }

    pub fn is_feasible(&self, a: &RoutingMatrix, y: &[i64]) -> bool {
        self.x.iter().all(|&v| v >= 0) && a.apply(&self.x) == y
    }

    /// `(x1, x2)`: basis-route flows then free-route flows.
    pub fn split(&self, frame: &Frame) -> (Vec<i64>, Vec<i64>) {
        (
            frame.basis_cols.iter().map(|&c| self.x[c]).collect(),
            frame.free_cols.iter().map(|&c| self.x[c]).collect(),
        )
    }

    /// Mean flow over the basis routes.
    pub fn slack(&self, frame: &Frame) -> f64 {
        if frame.basis_cols.is_empty() {
            return 0.0;
        }
        frame.basis_cols.iter().map(|&c| self.x[c] as f64).sum::<f64>() / frame.basis_cols.len() as f64
    }
}

/// Feasible values `lo..=hi` of one free coordinate with the others fixed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct MoveBounds {
    pub lo: i64,
    pub hi: i64,
}

impl MoveBounds {
    pub fn width(&self) -> i64 {
        self.hi - self.lo + 1
    }

    pub fn contains(&self, t: i64) -> bool {
        self.lo <= t && t <= self.hi
    }
}

/// Integer coordinate system for sampling: the free routes of a unimodular
/// partition and, for each, the nonzero entries of its null-space direction
/// on the basis routes (keyed by original route index).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    basis_cols: Vec<usize>,
    free_cols: Vec<usize>,
    dirs: Vec<Vec<(usize, i64)>>,
}

impl Frame {
    pub fn new(a: &RoutingMatrix, p: &Partition) -> Result<Self> {
        if !p.is_unimodular() {
            return Err(Error::NotUnimodular(p.det_a1().to_string()));
        }
        let u = intlin::null_basis(p, a);
        let n = a.links();
        let mut dirs = Vec::with_capacity(p.free_cols().len());
        for j in 0..p.free_cols().len() {
            let col = u
                .integer_column(j)
                .ok_or_else(|| Error::Numerical("null basis of a unimodular block is not integral".into()))?;
            let d: Vec<(usize, i64)> = (0..n).filter(|&i| col[i] != 0).map(|i| (p.basis_cols()[i], col[i])).collect();
            assert!(
                d.iter().any(|&(_, w)| w < 0),
                "null direction of free route {} has no negative basis entry",
                p.free_cols()[j]
            );
            dirs.push(d);
        }
        Ok(Frame { basis_cols: p.basis_cols().to_vec(), free_cols: p.free_cols().to_vec(), dirs })
    }

    pub fn basis_cols(&self) -> &[usize] {
        &self.basis_cols
    }

    pub fn free_cols(&self) -> &[usize] {
        &self.free_cols
    }

    /// Number of free coordinates (`r - n`).
    pub fn dim(&self) -> usize {
        self.free_cols.len()
    }

    /// Basis-route entries of the `j`-th null direction.
    pub fn direction(&self, j: usize) -> &[(usize, i64)] {
        &self.dirs[j]
    }
}

/// Bounds for free coordinate `j` from `x* + t w >= 0` and `t >= 0`, where
/// `x* = A1^{-1}(y - A_{2,-j} x_{2,-j})` and `w` is the basis part of `u_j`.
pub fn move_bounds(state: &FlowState, frame: &Frame, j: usize) -> MoveBounds {
    let cur = state.x[frame.free_cols[j]];
    let mut lo = 0i64;
    let mut hi = i64::MAX;
    for &(route, w) in &frame.dirs[j] {
        let xstar = state.x[route] - cur * w;
        if w > 0 {
            lo = lo.max(Integer::div_ceil(&(-xstar), &w));
        } else {
            hi = hi.min(Integer::div_floor(&xstar, &(-w)));
        }
    }
    debug_assert!(hi != i64::MAX);
    debug_assert!(lo <= cur && cur <= hi, "current value {cur} outside [{lo}, {hi}]");
    MoveBounds { lo, hi }
}

/// Sets free coordinate `j` to `t`, updating the basis routes.
pub fn apply_move(state: &mut FlowState, frame: &Frame, j: usize, t: i64) {
    let col = frame.free_cols[j];
    let delta = t - state.x[col];
    if delta == 0 {
        return;
    }
    state.x[col] = t;
    for &(route, w) in &frame.dirs[j] {
        state.x[route] += delta * w;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    /// First integer point found.
    Any,
    /// Maximizer of the total flow.
    #[default]
    MaxL1,
}

#[derive(Clone, Copy, Debug)]
enum Bound {
    Upper(usize, i64),
    Lower(usize, i64),
}

fn relaxation(a: &RoutingMatrix, y: &[i64], bounds: &[Bound], objective: Objective) -> LpOutcome<Rational> {
    let (n, r) = (a.links(), a.routes());
    let rows = n + bounds.len();
    let cols = r + bounds.len();
    let q = |v: i64| Rational::from_integer(Int::from(v));
    let mut m: Matrix<Rational> = Matrix::zeros(rows, cols);
    let mut b = Vec::with_capacity(rows);
    for i in 0..n {
        for j in 0..r {
            m[(i, j)] = q(a.entries()[(i, j)]);
        }
        b.push(q(y[i]));
    }
    for (k, bound) in bounds.iter().enumerate() {
        let row = n + k;
        match *bound {
            Bound::Upper(j, v) => {
                m[(row, j)] = q(1);
                m[(row, r + k)] = q(1);
                b.push(q(v));
            }
            Bound::Lower(j, v) => {
                m[(row, j)] = q(1);
                m[(row, r + k)] = q(-1);
                b.push(q(v));
            }
        }
    }
    let c: Vec<Rational> = (0..cols)
        .map(|j| if j < r && objective == Objective::MaxL1 { q(1) } else { q(0) })
        .collect();
    simplex::maximize(&m, &b, &c)
}

/// A feasible integer route-flow vector by branch and bound on the exact LP
/// relaxation. `y` is in reduced-row order (see [`crate::LinkCountSample::reduced`]).
pub fn initial_feasible(a: &RoutingMatrix, y: &[i64], objective: Objective) -> Result<FlowState> {
    let r = a.routes();
    if y.len() != a.links() {
        return Err(Error::Dimension(format!("{} counts for {} links", y.len(), a.links())));
    }
    let mut stack: Vec<Vec<Bound>> = vec![Vec::new()];
    let mut best: Option<(i64, Vec<i64>)> = None;
    let mut root = true;
    while let Some(bounds) = stack.pop() {
        let outcome = relaxation(a, y, &bounds, objective);
        let (x, value) = match outcome {
            LpOutcome::Optimal { x, value } => (x, value),
            LpOutcome::Infeasible if root => return Err(Error::Infeasible),
            LpOutcome::Infeasible => continue,
            LpOutcome::Unbounded => return Err(Error::Numerical("unbounded flow relaxation".into())),
        };
        root = false;
        if let Some((incumbent, _)) = &best {
            if value.floor().to_integer() <= Int::from(*incumbent) {
                continue;
            }
        }
        match (0..r).find(|&j| !x[j].is_integer()) {
            None => {
                let xi: Vec<i64> = x[..r].iter().map(|v| v.to_integer().to_i64().expect("flow fits in i64")).collect();
                let total = xi.iter().sum();
                if objective == Objective::Any {
                    return Ok(FlowState::new(xi));
                }
                if best.as_ref().is_none_or(|(b, _)| total > *b) {
                    best = Some((total, xi));
                }
            }
            Some(j) => {
                let fl = x[j].floor().to_integer().to_i64().expect("flow fits in i64");
                let mut down = bounds.clone();
                down.push(Bound::Upper(j, fl));
                let mut up = bounds;
                up.push(Bound::Lower(j, fl + 1));
                stack.push(down);
                stack.push(up);
            }
        }
    }
    match best {
        Some((_, x)) => Ok(FlowState::new(x)),
        None => Err(Error::IntegerInfeasible),
    }
}

struct Enumerator<'a> {
    a: &'a RoutingMatrix,
    /// For each link, the highest route index using it.
    last_route: Vec<usize>,
    remaining: Vec<i64>,
    x: Vec<i64>,
    out: Vec<FlowState>,
    cap: usize,
}

impl Enumerator<'_> {
    fn visit(&mut self, j: usize) -> Result<()> {
        if j == self.a.routes() {
            if self.remaining.iter().all(|&v| v == 0) {
                if self.out.len() == self.cap {
                    return Err(Error::CapExceeded(self.cap));
                }
                self.out.push(FlowState::new(self.x.clone()));
            }
            return Ok(());
        }
        let links = self.a.route_links(j);
        let mut hi = links.iter().map(|&i| self.remaining[i]).min().unwrap_or(0);
        let mut lo = 0;
        // the last route through a link must absorb what is left on it
        for &i in links {
            if self.last_route[i] == j {
                lo = lo.max(self.remaining[i]);
                hi = hi.min(self.remaining[i]);
            }
        }
        for t in lo..=hi {
            self.x[j] = t;
            for &i in links {
                self.remaining[i] -= t;
            }
            let res = self.visit(j + 1);
            for &i in links {
                self.remaining[i] += t;
            }
            res?;
        }
        self.x[j] = 0;
        Ok(())
    }
}

/// Every integer point of the feasible set, by depth-first search over routes
/// in ascending index with capacity propagation. Points come out in
/// lexicographic order.
pub fn enumerate_feasible(a: &RoutingMatrix, y: &[i64], cap: usize) -> Result<Vec<FlowState>> {
    if y.len() != a.links() {
        return Err(Error::Dimension(format!("{} counts for {} links", y.len(), a.links())));
    }
    let mut last_route = vec![0; a.links()];
    for j in 0..a.routes() {
        for &i in a.route_links(j) {
            last_route[i] = j;
        }
    }
    let mut e = Enumerator { a, last_route, remaining: y.to_vec(), x: vec![0; a.routes()], out: Vec::new(), cap };
    e.visit(0)?;
    Ok(e.out)
}

/// A feasible point is a vertex when its support has at most `n` routes and
/// their columns are linearly independent (so they extend to a basis).
pub fn is_vertex(a: &RoutingMatrix, state: &FlowState) -> bool {
    let support: Vec<usize> = (0..a.routes()).filter(|&j| state.x[j] != 0).collect();
    if support.len() > a.links() {
        return false;
    }
    let sub = linalg::lift::<Int>(&a.entries().select_columns(&support));
    support.is_empty() || linalg::rank(&sub) == support.len()
}

/// Basic feasible solutions of the rational relaxation, by trying every
/// invertible basis block. Exponential; desk-scale only.
pub fn relaxation_vertices(a: &RoutingMatrix, y: &[i64]) -> Vec<Vec<Rational>> {
    let (n, r) = (a.links(), a.routes());
    let q = |v: i64| Rational::from_integer(Int::from(v));
    let yq: Vec<Rational> = y.iter().map(|&v| q(v)).collect();
    let mut idx: Vec<usize> = (0..n).collect();
    let mut out: Vec<Vec<Rational>> = Vec::new();
    loop {
        if let Ok(p) = intlin::make_partition(a, &idx) {
            let xb = p.inv_a1().mul_vec(&yq);
            if xb.iter().all(|v| *v >= Rational::zero()) {
                let mut x = vec![Rational::zero(); r];
                for (k, &c) in idx.iter().enumerate() {
                    x[c] = xb[k].clone();
                }
                if !out.contains(&x) {
                    out.push(x);
                }
            }
        }
        // next combination
        let mut i = n;
        loop {
            if i == 0 {
                out.sort();
                return out;
            }
            i -= 1;
            if idx[i] < r - n + i {
                idx[i] += 1;
                for k in i + 1..n {
                    idx[k] = idx[k - 1] + 1;
                }
                break;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::intlin::make_partition;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    /// Independent oracle: odometer over the box `0 <= x_j <= min y on j's links`.
    fn box_enumerate(a: &RoutingMatrix, y: &[i64]) -> Vec<Vec<i64>> {
        let r = a.routes();
        let ub: Vec<i64> = (0..r).map(|j| a.route_links(j).iter().map(|&i| y[i]).min().unwrap()).collect();
        let mut x = vec![0i64; r];
        let mut out = Vec::new();
        loop {
            if a.apply(&x) == y {
                out.push(x.clone());
            }
            let mut k = r;
            loop {
                if k == 0 {
                    return out;
                }
                k -= 1;
                if x[k] < ub[k] {
                    x[k] += 1;
                    break;
                }
                x[k] = 0;
            }
        }
    }

    fn states(v: Vec<FlowState>) -> Vec<Vec<i64>> {
        v.into_iter().map(FlowState::into_vec).collect()
    }

    #[test]
    fn stuck_counts_have_eleven_points() {
        let a = fixtures::four_link_network();
        let pts = states(enumerate_feasible(&a, &fixtures::FOUR_LINK_COUNTS_STUCK, 1000).unwrap());
        assert_eq!(pts.len(), 11);
        for x in &pts {
            assert_eq!((x[0], x[3]), (0, 0));
            assert_eq!(x[4] + x[5], 10);
        }
        assert_eq!(pts, box_enumerate(&a, &fixtures::FOUR_LINK_COUNTS_STUCK));
    }

    #[test]
    fn zero_counts_single_point() {
        let a = fixtures::four_link_network();
        assert_eq!(states(enumerate_feasible(&a, &[0; 4], 10).unwrap()), vec![vec![0; 6]]);
        assert_eq!(initial_feasible(&a, &[0; 4], Objective::MaxL1).unwrap().x(), &[0; 6]);
    }

    #[test]
    fn thin_counts_match_box_oracle() {
        let a = fixtures::four_link_network();
        let y = fixtures::FOUR_LINK_COUNTS_THIN;
        let pts = states(enumerate_feasible(&a, &y, 10_000).unwrap());
        let oracle = box_enumerate(&a, &y);
        assert_eq!(pts, oracle);
        // frozen golden count
        assert_eq!(pts.len(), 20);
    }

    #[test]
    fn cap_exceeded_is_reported() {
        let a = fixtures::four_link_network();
        assert!(matches!(
            enumerate_feasible(&a, &fixtures::FOUR_LINK_COUNTS_STUCK, 5),
            Err(Error::CapExceeded(5))
        ));
    }

    #[test]
    fn initial_points() {
        let a = fixtures::four_link_network();
        let x = initial_feasible(&a, &fixtures::FOUR_LINK_COUNTS_STUCK, Objective::Any).unwrap();
        assert!(x.is_feasible(&a, &fixtures::FOUR_LINK_COUNTS_STUCK));
        assert_eq!((x.x()[0], x.x()[3]), (0, 0));
        assert_eq!(x.x()[1] + x.x()[2], 10);
        assert_eq!(x.x()[4] + x.x()[5], 10);
        assert_eq!(x.x()[2] + x.x()[5], 10);

        // link 2 carries every route, so total flow is pinned at 20
        let y = fixtures::FOUR_LINK_COUNTS_THIN;
        let best = initial_feasible(&a, &y, Objective::MaxL1).unwrap();
        let oracle_max = box_enumerate(&a, &y).iter().map(|x| x.iter().sum::<i64>()).max().unwrap();
        assert_eq!(oracle_max, 20);
        assert_eq!(best.x().iter().sum::<i64>(), oracle_max);
    }

    #[test]
    fn infeasible_kinds() {
        let a = fixtures::four_link_network();
        assert!(matches!(initial_feasible(&a, &[10, 5, 0, 0], Objective::Any), Err(Error::Infeasible)));
        // x0 + x1 = 1, x1 + x2 = 1, x0 + x2 = 1 has only x = 1/2
        let tri = RoutingMatrix::from_rows(&[vec![1, 1, 0], vec![0, 1, 1], vec![1, 0, 1]]).unwrap();
        assert!(matches!(initial_feasible(&tri, &[1, 1, 1], Objective::Any), Err(Error::IntegerInfeasible)));
        assert!(matches!(initial_feasible(&tri, &[1, 1, 1], Objective::MaxL1), Err(Error::IntegerInfeasible)));
    }

    #[test]
    fn junction_max_l1_start() {
        let a = fixtures::junction_network();
        let x = initial_feasible(&a, &fixtures::JUNCTION_COUNTS, Objective::MaxL1).unwrap();
        assert!(x.is_feasible(&a, &fixtures::JUNCTION_COUNTS));
    }

    #[test]
    fn stuck_partition_bounds_are_degenerate() {
        let a = fixtures::four_link_network();
        let y = fixtures::FOUR_LINK_COUNTS_STUCK;
        let frame = Frame::new(&a, &make_partition(&a, &fixtures::FOUR_LINK_LEX_BASIS).unwrap()).unwrap();
        for x in enumerate_feasible(&a, &y, 100).unwrap() {
            for j in 0..frame.dim() {
                let b = move_bounds(&x, &frame, j);
                let cur = x.x()[frame.free_cols()[j]];
                assert_eq!((b.lo, b.hi), (cur, cur));
            }
        }
    }

    #[test]
    fn swapped_partition_spans_segment() {
        let a = fixtures::four_link_network();
        let y = fixtures::FOUR_LINK_COUNTS_STUCK;
        let frame = Frame::new(&a, &make_partition(&a, &fixtures::FOUR_LINK_SWAPPED_BASIS).unwrap()).unwrap();
        let x = initial_feasible(&a, &y, Objective::Any).unwrap();
        // free routes are 3 (always zero here) and 5
        assert_eq!(frame.free_cols(), &[3, 5]);
        let b = move_bounds(&x, &frame, 1);
        assert_eq!((b.lo, b.hi), (0, 10));
        assert_eq!(b.width(), 11);
    }

    #[test]
    fn frame_requires_unimodular_block() {
        let a = fixtures::non_tu_network();
        let p = make_partition(&a, &[0, 1, 2]).unwrap();
        assert!(matches!(Frame::new(&a, &p), Err(Error::NotUnimodular(_))));
    }

    #[test]
    fn vertex_examples() {
        let a = fixtures::four_link_network();
        assert!(is_vertex(&a, &FlowState::new(vec![0, 10, 0, 0, 10, 0])));
        assert!(!is_vertex(&a, &FlowState::new(vec![0, 5, 5, 0, 5, 5])));
        let unique = RoutingMatrix::from_rows(&[vec![1, 0], vec![0, 1]]).unwrap();
        let pts = enumerate_feasible(&unique, &[3, 4], 10).unwrap();
        assert_eq!(pts.len(), 1);
        assert!(is_vertex(&unique, &pts[0]));
    }

    /// Small random instances built from a feasible point of a TU matrix.
    fn instance() -> impl Strategy<Value = (RoutingMatrix, Vec<i64>)> {
        (prop_oneof![Just(0usize), Just(1), Just(2)], proptest::collection::vec(0i64..4, 14)).prop_map(|(k, flows)| {
            let a = match k {
                0 => fixtures::four_link_network(),
                1 => fixtures::corridor_network(4, 9),
                _ => fixtures::intersection_network(),
            };
            let x: Vec<i64> = flows[..a.routes()].to_vec();
            let y = a.apply(&x);
            (a, y)
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn enumeration_matches_box_oracle((a, y) in instance()) {
            let pts = states(enumerate_feasible(&a, &y, 1_000_000).unwrap());
            prop_assert_eq!(pts, box_enumerate(&a, &y));
        }

        #[test]
        fn move_bounds_match_enumeration((a, y) in instance(), seed in 0usize..1000) {
            let pts = enumerate_feasible(&a, &y, 1_000_000).unwrap();
            let scores: Vec<f64> = (0..a.routes()).map(|j| ((j * 7919 + seed) % 13) as f64).collect();
            let frame = Frame::new(&a, &intlin::greedy_reorder(&a, &scores).unwrap()).unwrap();
            for x in &pts {
                for j in 0..frame.dim() {
                    let b = move_bounds(x, &frame, j);
                    let col = frame.free_cols()[j];
                    let others: Vec<usize> = frame.free_cols().iter().copied().filter(|&c| c != col).collect();
                    let expected: BTreeSet<i64> = pts
                        .iter()
                        .filter(|z| others.iter().all(|&c| z.x()[c] == x.x()[c]))
                        .map(|z| z.x()[col])
                        .collect();
                    let got: BTreeSet<i64> = (b.lo..=b.hi).collect();
                    prop_assert_eq!(&got, &expected);
                    for t in b.lo..=b.hi {
                        let mut z = x.clone();
                        apply_move(&mut z, &frame, j, t);
                        prop_assert!(z.is_feasible(&a, &y));
                    }
                }
            }
        }

        #[test]
        fn positive_basis_flows_allow_unit_steps((a, y) in instance(), seed in 0usize..1000) {
            let scores: Vec<f64> = (0..a.routes()).map(|j| ((j * 31 + seed) % 11) as f64).collect();
            let frame = Frame::new(&a, &intlin::greedy_reorder(&a, &scores).unwrap()).unwrap();
            for x in enumerate_feasible(&a, &y, 1_000_000).unwrap() {
                if frame.basis_cols().iter().all(|&c| x.x()[c] > 0) {
                    for j in 0..frame.dim() {
                        let mut z = x.clone();
                        let col = frame.free_cols()[j];
                        apply_move(&mut z, &frame, j, x.x()[col] + 1);
                        prop_assert!(z.is_feasible(&a, &y));
                    }
                }
            }
        }

        #[test]
        fn tu_relaxation_vertices_are_integral_vertices((a, y) in instance()) {
            let pts = enumerate_feasible(&a, &y, 1_000_000).unwrap();
            let flagged: BTreeSet<Vec<i64>> = pts.iter().filter(|x| is_vertex(&a, x)).map(|x| x.x().to_vec()).collect();
            let lp: BTreeSet<Vec<i64>> = relaxation_vertices(&a, &y)
                .into_iter()
                .map(|v| {
                    assert!(v.iter().all(|q| q.is_integer()));
                    v.iter().map(|q| q.to_integer().to_i64().unwrap()).collect()
                })
                .collect();
            prop_assert_eq!(flagged, lp);
        }

        #[test]
        fn row_reduction_preserves_feasible_set((a, y) in instance()) {
            let mut rows: Vec<Vec<i64>> = (0..a.links()).map(|i| a.entries().row(i).to_vec()).collect();
            let mut y_full = y.clone();
            // append the sum of the first two rows: rationally redundant
            let extra: Vec<i64> = rows[0].iter().zip(&rows[1]).map(|(p, q)| p + q).collect();
            if extra.iter().all(|&v| v <= 1) {
                rows.push(extra);
                y_full.push(y[0] + y[1]);
                let b = RoutingMatrix::from_rows(&rows).unwrap();
                prop_assert_eq!(b.rows_removed(), &[rows.len() - 1]);
                let y_red: Vec<i64> = b.kept_rows().iter().map(|&i| y_full[i]).collect();
                prop_assert_eq!(
                    states(enumerate_feasible(&b, &y_red, 1_000_000).unwrap()),
                    box_enumerate(&a, &y)
                );
            }
        }
    }
}
