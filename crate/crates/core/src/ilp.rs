//! Small dense integer linear programs:
//!
//! ```text
//! minimize    cᵀx
//! subject to  A x = b,  l ≤ x ≤ u,  x integer
//! ```
//!
//! The LP relaxation is solved with a two-phase bounded-variable simplex on a
//! dense tableau; integrality is recovered by best-first branch and bound.

use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::BinaryHeap;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IlpError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("variable {0} has an invalid bound pair")]
    Bounds(usize),
    #[error("non-finite coefficient in the problem data")]
    NonFinite,
    #[error("simplex did not terminate within {0} pivots")]
    IterationLimit(usize),
    #[error("branch and bound exceeded {0} nodes")]
    NodeLimit(usize),
}

/// Numerical tolerances used by the solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub pivot: f64,
    pub integrality: f64,
    /// A node is pruned unless its bound beats the incumbent by more than this.
    pub prune: f64,
    /// Largest phase-one infeasibility accepted as feasible.
    pub feasibility: f64,
    pub max_nodes: usize,
    pub max_pivots: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            pivot: 1e-9,
            integrality: 1e-6,
            prune: 1e-9,
            feasibility: 1e-7,
            max_nodes: 2_000_000,
            max_pivots: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IlpProblem {
    pub cost: Vec<f64>,
    pub eq_matrix: Vec<Vec<f64>>,
    pub eq_rhs: Vec<f64>,
    pub lower: Vec<f64>,
    /// `f64::INFINITY` marks an unbounded variable.
    pub upper: Vec<f64>,
}

impl IlpProblem {
    pub fn num_vars(&self) -> usize {
        self.cost.len()
    }

    pub fn num_rows(&self) -> usize {
        self.eq_rhs.len()
    }

    pub fn validate(&self) -> Result<(), IlpError> {
        let n = self.num_vars();
        if self.eq_matrix.len() != self.num_rows() {
            return Err(IlpError::Dimension(format!(
                "{} constraint rows but {} right-hand sides",
                self.eq_matrix.len(),
                self.num_rows()
            )));
        }
        if let Some(row) = self.eq_matrix.iter().find(|r| r.len() != n) {
            return Err(IlpError::Dimension(format!("row of length {} for {n} variables", row.len())));
        }
        if self.lower.len() != n || self.upper.len() != n {
            return Err(IlpError::Dimension(format!("bounds must have {n} entries")));
        }
        let finite = self.cost.iter().chain(&self.eq_rhs).chain(self.eq_matrix.iter().flatten()).all(|v| v.is_finite());
        if !finite {
            return Err(IlpError::NonFinite);
        }
        for j in 0..n {
            let (l, u) = (self.lower[j], self.upper[j]);
            if !l.is_finite() || u.is_nan() || u == f64::NEG_INFINITY || l > u {
                return Err(IlpError::Bounds(j));
            }
        }
        Ok(())
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        self.cost.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Largest `|A x − b|` over the rows.
    pub fn residual(&self, x: &[f64]) -> f64 {
        self.eq_matrix
            .iter()
            .zip(&self.eq_rhs)
            .map(|(row, b)| (row.iter().zip(x).map(|(a, v)| a * v).sum::<f64>() - b).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub status: Status,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IlpSolution {
    pub x: Vec<i64>,
    pub objective: f64,
    pub status: Status,
    pub nodes_explored: usize,
}

/// Dense bounded-variable simplex state. Column values are shifted so that
/// every lower bound is zero; `ub` is the shifted upper bound.
struct Tableau<'a> {
    tol: &'a Tolerances,
    rows: usize,
    cols: usize,
    t: Vec<Vec<f64>>,
    beta: Vec<f64>,
    basis: Vec<usize>,
    at_upper: Vec<bool>,
    ub: Vec<f64>,
    pivots: usize,
}

enum Outcome {
    Optimal,
    Unbounded,
}

impl<'a> Tableau<'a> {
    fn is_basic(&self, j: usize) -> Option<usize> {
        self.basis.iter().position(|&b| b == j)
    }

    fn value(&self, j: usize) -> f64 {
        match self.is_basic(j) {
            Some(r) => self.beta[r],
            None if self.at_upper[j] => self.ub[j],
            None => 0.0,
        }
    }

    fn pivot(&mut self, r: usize, j: usize) {
        let p = self.t[r][j];
        for v in self.t[r].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.t[r].clone();
        for (i, row) in self.t.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[j];
            if f != 0.0 {
                for (v, pr) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pr;
                }
                row[j] = 0.0;
            }
        }
        self.basis[r] = j;
        self.pivots += 1;
    }

    /// Minimizes `cost · x'` from the current basis.
    fn optimize(&mut self, cost: &[f64]) -> Result<Outcome, IlpError> {
        let mut degenerate_run = 0usize;
        loop {
            if self.pivots > self.tol.max_pivots {
                return Err(IlpError::IterationLimit(self.tol.max_pivots));
            }
            let bland = degenerate_run > 50;
            let mut entering: Option<(usize, f64)> = None;
            for j in 0..self.cols {
                if self.ub[j] == 0.0 || self.is_basic(j).is_some() {
                    continue;
                }
                let d = cost[j] - (0..self.rows).map(|i| cost[self.basis[i]] * self.t[i][j]).sum::<f64>();
                let gain = if self.at_upper[j] { d } else { -d };
                if gain > self.tol.pivot {
                    if bland {
                        entering = Some((j, gain));
                        break;
                    }
                    if entering.is_none_or(|(_, g)| gain > g) {
                        entering = Some((j, gain));
                    }
                }
            }
            let Some((j, _)) = entering else { return Ok(Outcome::Optimal) };

            // +1 moves x_j up from its lower bound, -1 down from its upper one
            let dir = if self.at_upper[j] { -1.0 } else { 1.0 };
            let mut step = self.ub[j];
            let mut leave: Option<(usize, bool)> = None;
            for i in 0..self.rows {
                let alpha = self.t[i][j] * dir;
                let limit = if alpha > self.tol.pivot {
                    Some((self.beta[i].max(0.0) / alpha, false))
                } else if alpha < -self.tol.pivot && self.ub[self.basis[i]].is_finite() {
                    Some(((self.ub[self.basis[i]] - self.beta[i]).max(0.0) / -alpha, true))
                } else {
                    None
                };
                if let Some((s, to_upper)) = limit {
                    let better = match leave {
                        None => s < step,
                        Some((r, _)) => s < step || (s == step && bland && self.basis[i] < self.basis[r]),
                    };
                    if better {
                        step = s;
                        leave = Some((i, to_upper));
                    }
                }
            }
            if step.is_infinite() {
                return Ok(Outcome::Unbounded);
            }
            degenerate_run = if step <= self.tol.pivot { degenerate_run + 1 } else { 0 };

            let entering_value = if dir > 0.0 { step } else { self.ub[j] - step };
            for i in 0..self.rows {
                self.beta[i] -= self.t[i][j] * dir * step;
            }
            match leave {
                None => {
                    self.at_upper[j] = !self.at_upper[j];
                }
                Some((r, to_upper)) => {
                    let out = self.basis[r];
                    self.at_upper[out] = to_upper;
                    self.at_upper[j] = false;
                    self.pivot(r, j);
                    self.beta[r] = entering_value;
                }
            }
        }
    }
}

/// Solves the continuous relaxation of `problem`.
pub fn solve_lp_relaxation(problem: &IlpProblem) -> Result<LpSolution, IlpError> {
    solve_lp_with(problem, &problem.lower, &problem.upper, &Tolerances::default())
}

fn solve_lp_with(problem: &IlpProblem, lower: &[f64], upper: &[f64], tol: &Tolerances) -> Result<LpSolution, IlpError> {
    problem.validate()?;
    let n = problem.num_vars();
    let m = problem.num_rows();
    if lower.iter().zip(upper).any(|(l, u)| l > u) {
        return Ok(LpSolution { x: Vec::new(), objective: f64::INFINITY, status: Status::Infeasible });
    }

    let cols = n + m;
    let mut t = vec![vec![0.0; cols]; m];
    let mut beta = vec![0.0; m];
    for i in 0..m {
        let shift: f64 = problem.eq_matrix[i].iter().zip(lower).map(|(a, l)| a * l).sum();
        let rhs = problem.eq_rhs[i] - shift;
        let sign = if rhs < 0.0 { -1.0 } else { 1.0 };
        for (cell, a) in t[i].iter_mut().zip(&problem.eq_matrix[i]) {
            *cell = sign * a;
        }
        t[i][n + i] = 1.0;
        beta[i] = sign * rhs;
    }
    let mut ub: Vec<f64> = lower.iter().zip(upper).map(|(l, u)| u - l).collect();
    ub.extend(std::iter::repeat_n(f64::INFINITY, m));

    let mut tab =
        Tableau { tol, rows: m, cols, t, beta, basis: (n..cols).collect(), at_upper: vec![false; cols], ub, pivots: 0 };

    let mut phase1 = vec![0.0; cols];
    phase1[n..].iter_mut().for_each(|c| *c = 1.0);
    tab.optimize(&phase1)?;
    let infeasibility: f64 = (n..cols).map(|j| tab.value(j)).sum();
    let scale = 1.0 + problem.eq_rhs.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    if infeasibility > tol.feasibility * scale {
        return Ok(LpSolution { x: Vec::new(), objective: f64::INFINITY, status: Status::Infeasible });
    }

    // Fix artificials at zero and drive basic ones out where possible.
    for j in n..cols {
        tab.ub[j] = 0.0;
        tab.at_upper[j] = false;
    }
    for r in 0..m {
        if tab.basis[r] < n {
            continue;
        }
        if let Some(j) = (0..n).find(|&j| tab.is_basic(j).is_none() && tab.t[r][j].abs() > 1e-7) {
            let v = tab.value(j);
            tab.at_upper[j] = false;
            tab.pivot(r, j);
            tab.beta[r] = v;
        } else {
            tab.beta[r] = 0.0;
        }
    }

    let mut phase2 = problem.cost.clone();
    phase2.extend(std::iter::repeat_n(0.0, m));
    if let Outcome::Unbounded = tab.optimize(&phase2)? {
        return Ok(LpSolution { x: Vec::new(), objective: f64::NEG_INFINITY, status: Status::Unbounded });
    }

    let x: Vec<f64> = (0..n).map(|j| lower[j] + tab.value(j)).collect();
    let objective = problem.objective(&x);
    Ok(LpSolution { x, objective, status: Status::Optimal })
}

struct Node {
    bound: f64,
    seq: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
    x: Vec<f64>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    // BinaryHeap is a max-heap: the smallest bound, then the oldest node, wins.
    fn cmp(&self, other: &Self) -> Ordering {
        other.bound.total_cmp(&self.bound).then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Most fractional variable, lowest index on ties.
fn branching_variable(x: &[f64], tol: f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (j, &v) in x.iter().enumerate() {
        let frac = v - v.floor();
        let dist = frac.min(1.0 - frac);
        if dist > tol && best.is_none_or(|(_, d)| dist > d) {
            best = Some((j, dist));
        }
    }
    best.map(|(j, _)| j)
}

pub fn solve_ilp(problem: &IlpProblem) -> Result<IlpSolution, IlpError> {
    solve_ilp_with(problem, &Tolerances::default())
}

/// Best-first branch and bound over the LP relaxation.
pub fn solve_ilp_with(problem: &IlpProblem, tol: &Tolerances) -> Result<IlpSolution, IlpError> {
    problem.validate()?;
    let mut nodes = 0usize;
    let mut seq = 0usize;
    let mut incumbent: Option<(Vec<i64>, f64)> = None;
    let mut heap = BinaryHeap::new();

    // Returns false when the LP relaxation is unbounded.
    let mut visit = |lower: Vec<f64>,
                     upper: Vec<f64>,
                     heap: &mut BinaryHeap<Node>,
                     incumbent: &mut Option<(Vec<i64>, f64)>|
     -> Result<bool, IlpError> {
        nodes += 1;
        if nodes > tol.max_nodes {
            return Err(IlpError::NodeLimit(tol.max_nodes));
        }
        let lp = solve_lp_with(problem, &lower, &upper, tol)?;
        match lp.status {
            Status::Infeasible => return Ok(true),
            Status::Unbounded => return Ok(false),
            Status::Optimal => {}
        }
        if incumbent.as_ref().is_some_and(|(_, best)| lp.objective >= best - tol.prune) {
            return Ok(true);
        }
        if branching_variable(&lp.x, tol.integrality).is_none() {
            let xi: Vec<i64> = lp.x.iter().map(|v| v.round() as i64).collect();
            let xf: Vec<f64> = xi.iter().map(|&v| v as f64).collect();
            let in_bounds = xf.iter().zip(lower.iter().zip(&upper)).all(|(v, (l, u))| v >= l && v <= u);
            if in_bounds && problem.residual(&xf) <= tol.feasibility {
                let obj = problem.objective(&xf);
                if incumbent.as_ref().is_none_or(|(_, best)| obj < *best) {
                    *incumbent = Some((xi, obj));
                }
                return Ok(true);
            }
        }
        heap.push(Node { bound: lp.objective, seq, lower, upper, x: lp.x });
        seq += 1;
        Ok(true)
    };

    if !visit(problem.lower.clone(), problem.upper.clone(), &mut heap, &mut incumbent)? {
        return Ok(IlpSolution {
            x: Vec::new(),
            objective: f64::NEG_INFINITY,
            status: Status::Unbounded,
            nodes_explored: 1,
        });
    }

    while let Some(node) = heap.pop() {
        if incumbent.as_ref().is_some_and(|(_, best)| node.bound >= best - tol.prune) {
            continue;
        }
        // Rounded-but-inconsistent vertices fall back to the largest fractional part.
        let j = branching_variable(&node.x, tol.integrality).unwrap_or_else(|| {
            (0..node.x.len())
                .max_by(|&a, &b| {
                    let fa = (node.x[a] - node.x[a].round()).abs();
                    let fb = (node.x[b] - node.x[b].round()).abs();
                    fa.total_cmp(&fb).then(b.cmp(&a))
                })
                .unwrap_or(0)
        });
        let v = node.x[j];
        let mut down_upper = node.upper.clone();
        down_upper[j] = v.floor();
        let mut up_lower = node.lower.clone();
        up_lower[j] = v.ceil();
        if up_lower[j] == v.floor() {
            up_lower[j] += 1.0;
        }
        visit(node.lower.clone(), down_upper, &mut heap, &mut incumbent)?;
        visit(up_lower, node.upper, &mut heap, &mut incumbent)?;
    }

    Ok(match incumbent {
        Some((x, objective)) => IlpSolution { x, objective, status: Status::Optimal, nodes_explored: nodes },
        None => {
            IlpSolution { x: Vec::new(), objective: f64::INFINITY, status: Status::Infeasible, nodes_explored: nodes }
        }
    })
}
