//! One-to-one matching of ground-truth points to proposals.
//!
//! The matching cost between ground truth `i` and proposal `j` is
//! `tau * ||p_i - p̂_j|| - ĉ_j`, so both proximity and confidence favour a
//! proposal. The assignment is solved exactly with the Kuhn–Munkres
//! (Hungarian) algorithm on the rectangular `N x M` matrix, `N <= M`.

use crate::error::{Error, Result};
use crate::geometry::{euclidean_distance, Point, Prediction};

pub const DEFAULT_TAU: f64 = 5e-2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchConfig {
    /// Weight of the pixel distance against the confidence term.
    pub tau: f64,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self { tau: DEFAULT_TAU }
    }
}

impl MatchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tau > 0.0 && self.tau.is_finite() {
            Ok(())
        } else {
            Err(Error::param("tau", "must be positive and finite"))
        }
    }
}

/// Dense row-major `rows x cols` cost matrix. Rows are ground-truth points,
/// columns are proposals.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::CostShape {
                rows,
                cols,
                got: values.len(),
            });
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteCost {
                row: k / cols,
                col: k % cols,
            });
        }
        Ok(Self { rows, cols, values })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut values = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::LengthMismatch {
                    left: cols,
                    right: r.len(),
                });
            }
            values.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, values)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.values[row * self.cols..(row + 1) * self.cols]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Result of a one-to-one assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    /// `assignment[i]` is the proposal matched to ground-truth point `i`.
    pub assignment: Vec<usize>,
    /// Matched proposal indices, ascending.
    pub positives: Vec<usize>,
    /// Unmatched proposal indices, ascending.
    pub negatives: Vec<usize>,
    pub total_cost: f64,
}

impl MatchResult {
    fn from_assignment(assignment: Vec<usize>, cols: usize, total_cost: f64) -> Self {
        let mut matched = vec![false; cols];
        for &j in &assignment {
            matched[j] = true;
        }
        let (positives, negatives) = (0..cols).partition(|&j| matched[j]);
        Self {
            assignment,
            positives,
            negatives,
            total_cost,
        }
    }
}

/// Matching cost `tau * ||p_i - p̂_j|| - ĉ_j` for every ground-truth/proposal pair.
pub fn build_cost_matrix(gt: &[Point], proposals: &[Prediction], cfg: &MatchConfig) -> Result<CostMatrix> {
    cfg.validate()?;
    if gt.len() > proposals.len() {
        return Err(Error::InsufficientProposals {
            gt: gt.len(),
            proposals: proposals.len(),
        });
    }
    let values = gt
        .iter()
        .flat_map(|&p| {
            proposals
                .iter()
                .map(move |q| cfg.tau * euclidean_distance(p, q.point) - q.confidence)
        })
        .collect();
    CostMatrix::new(gt.len(), proposals.len(), values)
}

/// Hungarian matching followed by labelling the unmatched proposals as negatives.
pub fn one_to_one_assign(gt: &[Point], proposals: &[Prediction], cfg: &MatchConfig) -> Result<MatchResult> {
    let costs = build_cost_matrix(gt, proposals, cfg)?;
    hungarian_match(&costs)
}

/// Minimum-cost injective assignment of every row to a distinct column.
///
/// Among several optimal assignments the lexicographically smallest
/// assignment vector is returned. Costs closer than `1e-9` times the
/// matrix range are treated as ties.
pub fn hungarian_match(costs: &CostMatrix) -> Result<MatchResult> {
    let (n, m) = (costs.rows, costs.cols);
    if n > m {
        return Err(Error::InsufficientProposals { gt: n, proposals: m });
    }
    if n == 0 {
        return Ok(MatchResult::from_assignment(Vec::new(), m, 0.0));
    }

    let min = costs.values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = costs.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let shifted: Vec<f64> = costs.values.iter().map(|v| v - min).collect();
    let tol = 1e-9 * (max - min).max(1.0);

    let mut solver = Solver::new(n, m, &shifted);
    solver.solve();
    let mut state = solver.into_state(tol);
    state.lexicographic_refine();

    let assignment = state.row_col;
    // Folded from +0.0: an empty `sum` of floats is -0.0.
    let total_cost = assignment
        .iter()
        .enumerate()
        .fold(0.0, |acc, (i, &j)| acc + costs.get(i, j));
    Ok(MatchResult::from_assignment(assignment, m, total_cost))
}

/// Shortest augmenting path Hungarian method with row/column potentials,
/// `O(n^2 m)` for `n <= m`. Index 0 is a sentinel; rows and columns are
/// 1-based internally.
struct Solver<'a> {
    n: usize,
    m: usize,
    a: &'a [f64],
    u: Vec<f64>,
    v: Vec<f64>,
    /// Row matched to each column, 0 when free.
    p: Vec<usize>,
    way: Vec<usize>,
}

impl<'a> Solver<'a> {
    fn new(n: usize, m: usize, a: &'a [f64]) -> Self {
        Self {
            n,
            m,
            a,
            u: vec![0.0; n + 1],
            v: vec![0.0; m + 1],
            p: vec![0; m + 1],
            way: vec![0; m + 1],
        }
    }

    #[inline]
    fn cost(&self, i: usize, j: usize) -> f64 {
        self.a[(i - 1) * self.m + (j - 1)]
    }

    fn solve(&mut self) {
        let m = self.m;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        for i in 1..=self.n {
            self.p[0] = i;
            let mut j0 = 0;
            minv.fill(f64::INFINITY);
            used.fill(false);
            loop {
                used[j0] = true;
                let i0 = self.p[j0];
                let mut delta = f64::INFINITY;
                let mut j1 = 0;
                for j in 1..=m {
                    if used[j] {
                        continue;
                    }
                    let reduced = self.cost(i0, j) - self.u[i0] - self.v[j];
                    if reduced < minv[j] {
                        minv[j] = reduced;
                        self.way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
                for j in 0..=m {
                    if used[j] {
                        self.u[self.p[j]] += delta;
                        self.v[j] -= delta;
                    } else {
                        minv[j] -= delta;
                    }
                }
                j0 = j1;
                if self.p[j0] == 0 {
                    break;
                }
            }
            while j0 != 0 {
                let j1 = self.way[j0];
                self.p[j0] = self.p[j1];
                j0 = j1;
            }
        }
    }

    fn into_state(self, tol: f64) -> RefineState {
        let (n, m) = (self.n, self.m);
        let mut row_col = vec![0; n];
        let mut col_owner = vec![None; m];
        for j in 1..=m {
            if self.p[j] != 0 {
                row_col[self.p[j] - 1] = j - 1;
                col_owner[j - 1] = Some(self.p[j] - 1);
            }
        }
        let tight = (1..=n)
            .map(|i| {
                (1..=m)
                    .filter(|&j| (self.cost(i, j) - self.u[i] - self.v[j]).abs() <= tol)
                    .map(|j| j - 1)
                    .collect()
            })
            .collect();
        let free_ok = (1..=m).map(|j| self.v[j].abs() <= tol).collect();
        RefineState {
            row_col,
            col_owner,
            tight,
            free_ok,
        }
    }
}

/// Optimal matching plus its dual certificate, used to walk to the
/// lexicographically smallest optimal assignment.
///
/// With the rectangular problem padded by zero-cost dummy rows, an
/// assignment is optimal iff every used edge is tight. A dummy row can take
/// column `j` exactly when `v_j = 0`, which `free_ok` records. Dummy rows
/// are interchangeable and modelled by `col_owner[j] == None`.
struct RefineState {
    row_col: Vec<usize>,
    col_owner: Vec<Option<usize>>,
    tight: Vec<Vec<usize>>,
    free_ok: Vec<bool>,
}

impl RefineState {
    fn lexicographic_refine(&mut self) {
        for i in 0..self.row_col.len() {
            let cur = self.row_col[i];
            let candidates: Vec<usize> = self.tight[i].iter().copied().take_while(|&j| j < cur).collect();
            for j in candidates {
                if let Some(path) = self.exchange_path(i, j, cur) {
                    self.rotate(i, &path);
                    break;
                }
            }
        }
    }

    /// Breadth-first search for a column chain `j = c0 -> c1 -> ... -> cur`
    /// where the owner of each `c_t` can move to `c_{t+1}` along a tight edge.
    /// Rows before `i` are frozen.
    fn exchange_path(&self, i: usize, start: usize, target: usize) -> Option<Vec<usize>> {
        let m = self.col_owner.len();
        let mut parent = vec![usize::MAX; m];
        let mut visited = vec![false; m];
        let mut free_expanded = false;
        let mut queue = std::collections::VecDeque::new();
        visited[start] = true;
        queue.push_back(start);
        while let Some(c) = queue.pop_front() {
            if c == target {
                let mut path = vec![c];
                let mut at = c;
                while at != start {
                    at = parent[at];
                    path.push(at);
                }
                path.reverse();
                return Some(path);
            }
            let next: &mut dyn Iterator<Item = usize> = match self.col_owner[c] {
                Some(r) if r <= i => continue,
                Some(r) => &mut self.tight[r].iter().copied(),
                None if free_expanded => continue,
                None => {
                    free_expanded = true;
                    &mut (0..m).filter(|&c2| self.free_ok[c2])
                }
            };
            for c2 in next {
                if !visited[c2] {
                    visited[c2] = true;
                    parent[c2] = c;
                    queue.push_back(c2);
                }
            }
        }
        None
    }

    fn rotate(&mut self, i: usize, path: &[usize]) {
        let owners: Vec<Option<usize>> = path.iter().map(|&c| self.col_owner[c]).collect();
        for t in 0..path.len() - 1 {
            self.col_owner[path[t + 1]] = owners[t];
            if let Some(r) = owners[t] {
                self.row_col[r] = path[t + 1];
            }
        }
        self.col_owner[path[0]] = Some(i);
        self.row_col[i] = path[0];
    }
}
