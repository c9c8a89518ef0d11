//! Small reference networks used by tests, examples and the CLI docs.

use crate::netmodel::RoutingMatrix;

/// Four-link series network with two origins and three destinations; routes
/// ordered lexicographically by origin then destination.
pub fn four_link_rows() -> Vec<Vec<i64>> {
    vec![
        vec![1, 1, 1, 0, 0, 0],
        vec![1, 1, 1, 1, 1, 1],
        vec![0, 1, 1, 0, 1, 1],
        vec![0, 0, 1, 0, 0, 1],
    ]
}

pub fn four_link_network() -> RoutingMatrix {
    RoutingMatrix::from_rows(&four_link_rows()).expect("valid fixture")
}

/// Basis block of the four-link network after exchanging routes 4 and 5
/// (zero-based columns 3 and 4): basis `{0, 1, 2, 4}`, free `{3, 5}`.
pub const FOUR_LINK_SWAPPED_BASIS: [usize; 4] = [0, 1, 2, 4];

/// Basis block in the lexicographic route order: `{0, 1, 2, 3}`.
pub const FOUR_LINK_LEX_BASIS: [usize; 4] = [0, 1, 2, 3];

/// Link counts for which the lexicographic partition cannot move.
pub const FOUR_LINK_COUNTS_STUCK: [i64; 4] = [10, 20, 20, 10];

/// Link counts with a single traveller bound for node 3.
pub const FOUR_LINK_COUNTS_THIN: [i64; 4] = [10, 20, 19, 9];

/// Three monitored links, four two-link routes; the first three columns
/// form a block with determinant 2.
pub fn non_tu_rows() -> Vec<Vec<i64>> {
    vec![vec![1, 0, 1, 0], vec![1, 1, 0, 0], vec![0, 1, 1, 1]]
}

pub fn non_tu_network() -> RoutingMatrix {
    RoutingMatrix::from_rows(&non_tu_rows()).expect("valid fixture")
}

/// Nine monitored links and twenty routes around a two-road junction, in the
/// randomized column order whose first nine columns are invertible.
pub fn junction_rows() -> Vec<Vec<i64>> {
    vec![
        vec![0, 0, 0, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 0, 0, 0, 1],
        vec![0, 1, 0, 0, 0, 0, 0, 1, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 0, 0],
        vec![0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 0, 0, 1, 1, 0, 0, 0, 0, 0, 0],
        vec![0, 0, 0, 0, 0, 1, 0, 0, 0, 1, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0],
        vec![1, 0, 0, 0, 1, 0, 0, 0, 0, 0, 0, 1, 1, 0, 0, 0, 0, 0, 0, 0],
        vec![1, 0, 0, 0, 0, 1, 0, 1, 1, 1, 0, 1, 0, 0, 0, 0, 0, 0, 0, 0],
        vec![0, 0, 1, 1, 0, 0, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 1, 1],
        vec![1, 0, 0, 0, 0, 1, 0, 0, 1, 0, 0, 0, 0, 0, 1, 0, 0, 0, 0, 0],
        vec![0, 0, 0, 1, 0, 0, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 0, 1, 0],
    ]
}

/// Origin-destination labels of the junction routes, in column order.
pub const JUNCTION_ROUTE_IDS: [&str; 20] = [
    "3-6", "1-3", "5-2", "6-1", "3-1", "2-6", "6-2", "1-5", "1-6", "2-5", "2-3", "3-5", "3-2", "1-2", "5-6",
    "2-1", "6-5", "5-3", "6-3", "5-1",
];

pub fn junction_network() -> RoutingMatrix {
    let ids = JUNCTION_ROUTE_IDS.iter().map(|s| s.to_string()).collect();
    RoutingMatrix::new(crate::linalg::Matrix::from_rows(&junction_rows()), Some(ids)).expect("valid fixture")
}

/// Single day of junction link counts.
pub const JUNCTION_COUNTS: [i64; 9] = [72, 56, 217, 120, 119, 127, 178, 117, 181];

/// Survey pseudo-counts for the junction routes; used as gamma prior means.
pub const JUNCTION_PRIOR_MEANS: [f64; 20] = [
    65.0, 33.0, 67.0, 38.0, 28.0, 30.0, 37.0, 9.0, 30.0, 37.0, 37.0, 20.0, 20.0, 2.0, 20.0, 2.0, 31.0, 10.0,
    15.0, 69.0,
];

/// Published posterior means for the junction routes.
pub const JUNCTION_POSTERIOR_MEANS: [f64; 20] = [
    39.5, 20.2, 59.5, 26.4, 21.9, 38.3, 59.8, 5.5, 20.5, 33.8, 36.7, 10.7, 51.6, 15.7, 28.0, 6.4, 66.7, 4.7, 8.0,
    38.9,
];

/// Published central 95% credible intervals for the junction routes.
pub const JUNCTION_POSTERIOR_CI: [(f64, f64); 20] = [
    (27.9, 52.3),
    (12.1, 30.2),
    (42.7, 78.7),
    (16.3, 38.4),
    (12.4, 33.1),
    (25.2, 53.1),
    (41.8, 78.9),
    (1.7, 11.4),
    (11.8, 31.3),
    (22.2, 47.5),
    (26.2, 48.9),
    (5.1, 18.2),
    (37.8, 67.0),
    (6.3, 26.3),
    (16.5, 41.5),
    (0.3, 15.4),
    (49.0, 86.2),
    (1.5, 9.5),
    (3.4, 14.3),
    (27.7, 52.1),
];

/// Three-arm intersection: nodes 1, 3, 4 each joined to an internal node 2
/// by an inbound and an outbound link; the outbound link to node 1 is not
/// monitored. Routes are the six ordered pairs 1-3, 1-4, 3-1, 3-4, 4-1, 4-3.
///
/// Rows: 1->2, 3->2, 2->3, 4->2, 2->4.
pub fn intersection_rows() -> Vec<Vec<i64>> {
    vec![
        vec![1, 1, 0, 0, 0, 0],
        vec![0, 0, 1, 1, 0, 0],
        vec![1, 0, 0, 0, 0, 1],
        vec![0, 0, 0, 0, 1, 1],
        vec![0, 1, 0, 1, 0, 0],
    ]
}

pub fn intersection_network() -> RoutingMatrix {
    let ids = ["1-3", "1-4", "3-1", "3-4", "4-1", "4-3"].iter().map(|s| s.to_string()).collect();
    RoutingMatrix::new(crate::linalg::Matrix::from_rows(&intersection_rows()), Some(ids)).expect("valid fixture")
}

/// Negative binomial mean route flows fitted to five days of intersection data.
pub const INTERSECTION_THETA: [f64; 6] = [176.4, 41.0, 183.5, 10.6, 63.1, 12.8];

/// Dispersion fitted alongside [`INTERSECTION_THETA`].
pub const INTERSECTION_ALPHA: f64 = 1.92;

/// A corridor of `nodes` nodes with a monitored link in each direction
/// between neighbours. Every ordered pair of distinct nodes is a route
/// following the corridor, taken in order of increasing trip length until
/// `max_routes` routes are present. The incidence matrix is an interval
/// matrix per direction, hence totally unimodular.
pub fn corridor_network(nodes: usize, max_routes: usize) -> RoutingMatrix {
    assert!(nodes >= 2);
    let links = 2 * (nodes - 1);
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for len in 1..nodes {
        for o in 0..nodes {
            for d in [o + len, o.wrapping_sub(len)] {
                if d < nodes && pairs.len() < max_routes {
                    pairs.push((o, d));
                }
            }
        }
    }
    let mut rows = vec![vec![0i64; pairs.len()]; links];
    for (j, &(o, d)) in pairs.iter().enumerate() {
        if o < d {
            for k in o..d {
                rows[k][j] = 1;
            }
        } else {
            for k in d..o {
                rows[nodes - 1 + k][j] = 1;
            }
        }
    }
    let ids = pairs.iter().map(|(o, d)| format!("{}-{}", o + 1, d + 1)).collect();
    RoutingMatrix::new(crate::linalg::Matrix::from_rows(&rows), Some(ids)).expect("valid corridor")
}
