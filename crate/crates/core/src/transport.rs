//! Exact solver for the balanced transportation problem.
//!
//! Minimizes `sum_ij f_ij c_ij` over nonnegative flows with row sums equal to
//! the supplies and column sums equal to the demands. This is the primal
//! Wasserstein-1 program when costs are ground distances.
//!
//! The implementation is the classic transportation simplex: northwest-corner
//! start, u-v (MODI) pricing with Dantzig's most-negative rule, pivoting along
//! the unique basis-tree cycle. If Dantzig stalls on degenerate pivots the
//! solver switches to Bland's rule, which cannot cycle. All tie-breaks are
//! lexicographic, so the run is deterministic.

use crate::error::{Error, Result};

/// Mass-balance tolerance for the supply and demand vectors.
const BALANCE_TOL: f64 = 1e-9;

pub(crate) struct TransportProblem<'a> {
    pub supply: &'a [f64],
    pub demand: &'a [f64],
    /// Row-major `supply.len() x demand.len()` cost matrix.
    pub cost: &'a [f64],
}

/// Optimal transport cost of the balanced problem.
pub(crate) fn solve_transport(p: &TransportProblem) -> Result<f64> {
    let n = p.supply.len();
    let m = p.demand.len();
    assert_eq!(p.cost.len(), n * m);
    if n == 0 || m == 0 {
        return Err(Error::TransportFailed {
            detail: "empty marginal".into(),
        });
    }
    let sa: f64 = p.supply.iter().sum();
    let sb: f64 = p.demand.iter().sum();
    if (sa - sb).abs() > BALANCE_TOL {
        return Err(Error::NotNormalized {
            detail: format!("supply sums to {sa}, demand to {sb}"),
        });
    }
    if p.supply.iter().chain(p.demand.iter()).any(|&w| w < 0.0) {
        return Err(Error::NotNormalized {
            detail: "negative mass".into(),
        });
    }

    let mut basis = nw_corner(p.supply, p.demand);
    let cost_scale = p.cost.iter().fold(1.0f64, |a, &c| a.max(c.abs()));
    let tol = 1e-12 * cost_scale;

    let mut u = vec![0.0f64; n];
    let mut v = vec![0.0f64; m];
    let dantzig_cap = 200 * (n + m) + 2000;
    let bland_cap = 10 * dantzig_cap;

    for round in 0..bland_cap {
        compute_duals(&basis, p, &mut u, &mut v)?;
        let entering = if round < dantzig_cap {
            price_dantzig(p, &u, &v, tol)
        } else {
            price_bland(p, &basis, &u, &v, tol)
        };
        let Some((ei, ej)) = entering else {
            let value = basis
                .cells
                .iter()
                .map(|c| c.flow.max(0.0) * p.cost[c.row * m + c.col])
                .sum();
            return Ok(value);
        };
        pivot(&mut basis, ei, ej)?;
    }
    Err(Error::TransportFailed {
        detail: format!("no optimum within {bland_cap} pivots"),
    })
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    row: usize,
    col: usize,
    flow: f64,
}

struct Basis {
    cells: Vec<Cell>,
    /// cell indices incident to each row / column
    by_row: Vec<Vec<usize>>,
    by_col: Vec<Vec<usize>>,
}

impl Basis {
    fn new(n: usize, m: usize, cells: Vec<Cell>) -> Self {
        let mut by_row = vec![Vec::new(); n];
        let mut by_col = vec![Vec::new(); m];
        for (idx, c) in cells.iter().enumerate() {
            by_row[c.row].push(idx);
            by_col[c.col].push(idx);
        }
        Self {
            cells,
            by_row,
            by_col,
        }
    }

    fn rebuild_incidence(&mut self) {
        for l in self.by_row.iter_mut() {
            l.clear();
        }
        for l in self.by_col.iter_mut() {
            l.clear();
        }
        for (idx, c) in self.cells.iter().enumerate() {
            self.by_row[c.row].push(idx);
            self.by_col[c.col].push(idx);
        }
    }
}

/// Northwest-corner initial basic feasible solution with exactly
/// `n + m - 1` cells (degenerate zero flows included).
fn nw_corner(supply: &[f64], demand: &[f64]) -> Basis {
    let n = supply.len();
    let m = demand.len();
    let mut a = supply.to_vec();
    let mut b = demand.to_vec();
    let mut cells = Vec::with_capacity(n + m - 1);
    let (mut i, mut j) = (0usize, 0usize);
    for _ in 0..(n + m - 1) {
        let flow = a[i].min(b[j]);
        cells.push(Cell { row: i, col: j, flow });
        a[i] -= flow;
        b[j] -= flow;
        if a[i] > 0.0 || (b[j] <= 0.0 && i == n - 1) {
            if j < m - 1 {
                j += 1;
            } else {
                i += 1;
            }
        } else if i < n - 1 {
            i += 1;
        } else {
            j += 1;
        }
    }
    Basis::new(n, m, cells)
}

/// Solves `u_i + v_j = c_ij` over the basis tree (u_0 = 0).
fn compute_duals(basis: &Basis, p: &TransportProblem, u: &mut [f64], v: &mut [f64]) -> Result<()> {
    let n = u.len();
    let m = v.len();
    let mut u_known = vec![false; n];
    let mut v_known = vec![false; m];
    u[0] = 0.0;
    u_known[0] = true;
    // BFS over bipartite tree nodes; rows are 0..n, cols n..n+m.
    let mut queue = std::collections::VecDeque::with_capacity(n + m);
    queue.push_back(0usize);
    while let Some(node) = queue.pop_front() {
        if node < n {
            for &ci in &basis.by_row[node] {
                let c = basis.cells[ci];
                if !v_known[c.col] {
                    v[c.col] = p.cost[c.row * m + c.col] - u[c.row];
                    v_known[c.col] = true;
                    queue.push_back(n + c.col);
                }
            }
        } else {
            let col = node - n;
            for &ci in &basis.by_col[col] {
                let c = basis.cells[ci];
                if !u_known[c.row] {
                    u[c.row] = p.cost[c.row * m + c.col] - v[c.col];
                    u_known[c.row] = true;
                    queue.push_back(c.row);
                }
            }
        }
    }
    if u_known.iter().all(|&k| k) && v_known.iter().all(|&k| k) {
        Ok(())
    } else {
        Err(Error::TransportFailed {
            detail: "basis tree disconnected".into(),
        })
    }
}

fn price_dantzig(
    p: &TransportProblem,
    u: &[f64],
    v: &[f64],
    tol: f64,
) -> Option<(usize, usize)> {
    let m = v.len();
    let mut best = -tol;
    let mut cell = None;
    for (i, &ui) in u.iter().enumerate() {
        for (j, &vj) in v.iter().enumerate() {
            let r = p.cost[i * m + j] - ui - vj;
            if r < best {
                best = r;
                cell = Some((i, j));
            }
        }
    }
    cell
}

fn price_bland(
    p: &TransportProblem,
    basis: &Basis,
    u: &[f64],
    v: &[f64],
    tol: f64,
) -> Option<(usize, usize)> {
    let m = v.len();
    let in_basis: std::collections::HashSet<(usize, usize)> =
        basis.cells.iter().map(|c| (c.row, c.col)).collect();
    for (i, &ui) in u.iter().enumerate() {
        for (j, &vj) in v.iter().enumerate() {
            if p.cost[i * m + j] - ui - vj < -tol && !in_basis.contains(&(i, j)) {
                return Some((i, j));
            }
        }
    }
    None
}

/// Brings cell `(ei, ej)` into the basis, shifting flow around the unique
/// cycle it closes and dropping the minimum-flow cell on the negative side.
fn pivot(basis: &mut Basis, ei: usize, ej: usize) -> Result<()> {
    let n = basis.by_row.len();
    // Path from row node ei to col node n+ej through basis edges.
    let total = n + basis.by_col.len();
    let mut parent_edge: Vec<Option<usize>> = vec![None; total];
    let mut visited = vec![false; total];
    visited[ei] = true;
    let mut queue = std::collections::VecDeque::new();
    queue.push_back(ei);
    while let Some(node) = queue.pop_front() {
        if node == n + ej {
            break;
        }
        let incident = if node < n {
            &basis.by_row[node]
        } else {
            &basis.by_col[node - n]
        };
        for &ci in incident {
            let c = basis.cells[ci];
            let other = if node < n { n + c.col } else { c.row };
            if !visited[other] {
                visited[other] = true;
                parent_edge[other] = Some(ci);
                queue.push_back(other);
            }
        }
    }
    if !visited[n + ej] {
        return Err(Error::TransportFailed {
            detail: "no cycle for entering cell".into(),
        });
    }
    // Walk back collecting the path edges; the cycle alternates signs with
    // the entering cell at +.
    let mut path = Vec::new();
    let mut node = n + ej;
    while node != ei {
        let ci = parent_edge[node].expect("path edge");
        path.push(ci);
        let c = basis.cells[ci];
        node = if node >= n { c.row } else { n + c.col };
    }
    // path[0] touches col ej ... path[last] touches row ei. Signs along the
    // cycle starting at the entering (+) cell alternate -, +, -, ... from the
    // ei end of the path.
    path.reverse();
    let mut theta = f64::INFINITY;
    let mut leaving: Option<usize> = None;
    for (pos, &ci) in path.iter().enumerate() {
        if pos % 2 == 0 {
            // negative side
            let c = basis.cells[ci];
            let better = c.flow < theta
                || (c.flow == theta
                    && leaving.is_some_and(|l| {
                        (c.row, c.col) < (basis.cells[l].row, basis.cells[l].col)
                    }));
            if better {
                theta = c.flow;
                leaving = Some(ci);
            }
        }
    }
    let leaving = leaving.ok_or_else(|| Error::TransportFailed {
        detail: "cycle without negative side".into(),
    })?;
    for (pos, &ci) in path.iter().enumerate() {
        if pos % 2 == 0 {
            basis.cells[ci].flow -= theta;
        } else {
            basis.cells[ci].flow += theta;
        }
    }
    basis.cells[leaving] = Cell {
        row: ei,
        col: ej,
        flow: theta,
    };
    basis.rebuild_incidence();
    Ok(())
}
