//! Bandwidth allocation across error categories.
//!
//! Sensors are grouped by link error probability. Each group is split between
//! `l`-bit quantizers (`l = 1..=L`) and promoted full-precision sensors that
//! cost `l0` bits each, subject to a total bit budget `Q`.

use crate::design::{design, DesignError, DesignMethod, DesignProblem, DesignSettings};
use crate::exec::Execution;
use crate::ilp::{solve_ilp, IlpError, IlpProblem, Status};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Mutex;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AllocError {
    #[error("no sensors to categorize")]
    Empty,
    #[error("error probability {0} outside [0, 0.5]")]
    Probability(f64),
    #[error("invalid histogram: {0}")]
    Histogram(String),
    #[error("category {index}: f·M = {value} is not an integer")]
    NonIntegral { index: usize, value: f64 },
    #[error("table shape does not match the histogram: {0}")]
    Table(String),
    #[error("allocation is infeasible")]
    Infeasible,
    #[error("dynamic program too large for budget {0}")]
    OracleTooLarge(u64),
    #[error(transparent)]
    Ilp(#[from] IlpError),
    #[error(transparent)]
    Design(#[from] DesignError),
}

/// Sorted unique link error probabilities with their relative frequencies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorHistogram {
    epsilons: Vec<f64>,
    freqs: Vec<f64>,
    m_total: u64,
}

impl ErrorHistogram {
    /// Builds a histogram from given frequencies; every `f·M` must be integral.
    pub fn from_frequencies(epsilons: Vec<f64>, freqs: Vec<f64>, m_total: u64) -> Result<Self, AllocError> {
        if epsilons.is_empty() {
            return Err(AllocError::Empty);
        }
        if epsilons.len() != freqs.len() {
            return Err(AllocError::Histogram(format!("{} epsilons but {} frequencies", epsilons.len(), freqs.len())));
        }
        if let Some(&e) = epsilons.iter().find(|e| !(0.0..=0.5).contains(*e)) {
            return Err(AllocError::Probability(e));
        }
        if epsilons.windows(2).any(|w| w[0] >= w[1]) {
            return Err(AllocError::Histogram("epsilons must be strictly increasing".into()));
        }
        if freqs.iter().any(|f| !(f.is_finite() && *f >= 0.0)) {
            return Err(AllocError::Histogram("frequencies must be non-negative".into()));
        }
        let total: f64 = freqs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(AllocError::Histogram(format!("frequencies sum to {total}")));
        }
        let hist = Self { epsilons, freqs, m_total };
        hist.counts()?;
        Ok(hist)
    }

    pub fn epsilons(&self) -> &[f64] {
        &self.epsilons
    }

    pub fn freqs(&self) -> &[f64] {
        &self.freqs
    }

    pub fn m_total(&self) -> u64 {
        self.m_total
    }

    pub fn categories(&self) -> usize {
        self.epsilons.len()
    }

    /// Same category mix with a different number of sensors.
    pub fn with_total(&self, m_total: u64) -> Result<Self, AllocError> {
        Self::from_frequencies(self.epsilons.clone(), self.freqs.clone(), m_total)
    }

    /// Sensor count `f_n·M` per category.
    pub fn counts(&self) -> Result<Vec<u64>, AllocError> {
        self.freqs
            .iter()
            .enumerate()
            .map(|(index, f)| {
                let value = f * self.m_total as f64;
                let rounded = value.round();
                if (value - rounded).abs() > 1e-9 {
                    Err(AllocError::NonIntegral { index, value })
                } else {
                    Ok(rounded as u64)
                }
            })
            .collect()
    }
}

/// Groups per-sensor error probabilities into a histogram.
pub fn categorize_errors(per_sensor_pe: &[f64]) -> Result<ErrorHistogram, AllocError> {
    if per_sensor_pe.is_empty() {
        return Err(AllocError::Empty);
    }
    if let Some(&e) = per_sensor_pe.iter().find(|e| !(0.0..=0.5).contains(*e)) {
        return Err(AllocError::Probability(e));
    }
    let mut sorted = per_sensor_pe.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut epsilons: Vec<f64> = Vec::new();
    let mut counts: Vec<u64> = Vec::new();
    for e in sorted {
        if epsilons.last() == Some(&e) {
            *counts.last_mut().expect("non-empty") += 1;
        } else {
            epsilons.push(e);
            counts.push(1);
        }
    }
    let m = per_sensor_pe.len() as u64;
    let freqs = counts.iter().map(|&c| c as f64 / m as f64).collect();
    Ok(ErrorHistogram { epsilons, freqs, m_total: m })
}

/// Per-sensor Fisher information for each (bit width, category) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiTable {
    /// `gamma[l - 1][n]`.
    pub gamma: Vec<Vec<f64>>,
    /// Full-precision sensor contribution, `1/σ_n²`.
    pub gamma0: f64,
}

impl FiTable {
    pub fn levels(&self) -> usize {
        self.gamma.len()
    }

    pub fn categories(&self) -> usize {
        self.gamma.first().map_or(0, Vec::len)
    }

    fn check(&self, hist: &ErrorHistogram) -> Result<(), AllocError> {
        if self.gamma.is_empty() {
            return Err(AllocError::Table("no bit widths".into()));
        }
        if self.gamma.iter().any(|row| row.len() != hist.categories()) {
            return Err(AllocError::Table(format!("expected {} categories per row", hist.categories())));
        }
        Ok(())
    }
}

/// Memoized optimal per-sensor FI, keyed by `(bits, ε, σ_n², seed)`.
#[derive(Debug, Default)]
pub struct DesignCache {
    entries: Mutex<HashMap<(u32, u64, u64, u64), f64>>,
}

impl DesignCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn get_or_design(
        &self,
        bits: u32,
        p_e: f64,
        sigma_n2: f64,
        method: DesignMethod,
        settings: &DesignSettings,
    ) -> Result<f64, AllocError> {
        let key = (bits, p_e.to_bits(), sigma_n2.to_bits(), settings.pso.seed);
        if let Some(&v) = self.entries.lock().expect("cache lock").get(&key) {
            return Ok(v);
        }
        let problem = DesignProblem::new(bits, p_e, sigma_n2)?;
        let value = design(&problem, method, settings, Execution::Sequential)?.objective.max(0.0);
        self.entries.lock().expect("cache lock").insert(key, value);
        Ok(value)
    }
}

/// FI table with thresholds optimized per cell.
pub fn build_fi_table(
    hist: &ErrorHistogram,
    levels: u32,
    sigma_n2: f64,
    settings: &DesignSettings,
    exec: Execution,
) -> Result<FiTable, AllocError> {
    build_fi_table_cached(hist, levels, sigma_n2, DesignMethod::Auto, settings, &DesignCache::new(), exec)
}

pub fn build_fi_table_cached(
    hist: &ErrorHistogram,
    levels: u32,
    sigma_n2: f64,
    method: DesignMethod,
    settings: &DesignSettings,
    cache: &DesignCache,
    exec: Execution,
) -> Result<FiTable, AllocError> {
    if levels == 0 {
        return Err(AllocError::Table("at least one bit width is required".into()));
    }
    let n = hist.categories();
    let cells = exec.map(levels as usize * n, |k| {
        let (l, c) = (k / n + 1, k % n);
        cache.get_or_design(l as u32, hist.epsilons[c], sigma_n2, method, settings)
    });
    let flat = cells.into_iter().collect::<Result<Vec<_>, _>>()?;
    let gamma = flat.chunks(n).map(<[f64]>::to_vec).collect();
    Ok(FiTable { gamma, gamma0: 1.0 / sigma_n2 })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BudgetMode {
    /// Bits used must equal the budget.
    Exact,
    /// Bits used may not exceed the budget.
    #[default]
    AtMost,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sense {
    #[default]
    #[serde(rename = "max")]
    MaximizeFI,
    #[serde(rename = "min")]
    MinimizeFI,
}

impl fmt::Display for BudgetMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BudgetMode::Exact => "exact",
            BudgetMode::AtMost => "atmost",
        })
    }
}

impl FromStr for BudgetMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exact" => Ok(BudgetMode::Exact),
            "atmost" => Ok(BudgetMode::AtMost),
            other => Err(format!("unknown budget mode `{other}`")),
        }
    }
}

impl fmt::Display for Sense {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sense::MaximizeFI => "max",
            Sense::MinimizeFI => "min",
        })
    }
}

impl FromStr for Sense {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "max" => Ok(Sense::MaximizeFI),
            "min" => Ok(Sense::MinimizeFI),
            other => Err(format!("unknown sense `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationResult {
    /// `x_matrix[l - 1][n]` sensors of category `n` use `l` bits.
    pub x_matrix: Vec<Vec<u64>>,
    pub promotions: Vec<u64>,
    pub total_fi: f64,
    pub bits_used: u64,
}

impl AllocationResult {
    fn from_parts(x_matrix: Vec<Vec<u64>>, promotions: Vec<u64>, table: &FiTable, l0: u32) -> Self {
        let mut total_fi = 0.0;
        let mut bits_used = 0;
        for (l, row) in x_matrix.iter().enumerate() {
            for (n, &x) in row.iter().enumerate() {
                total_fi += table.gamma[l][n] * x as f64;
                bits_used += (l as u64 + 1) * x;
            }
        }
        for &a in &promotions {
            total_fi += table.gamma0 * a as f64;
            bits_used += l0 as u64 * a;
        }
        Self { x_matrix, promotions, total_fi, bits_used }
    }

    /// Checks count conservation, promotion bounds and the bit budget.
    pub fn satisfies_constraints(&self, hist: &ErrorHistogram, budget: u64, l0: u32, mode: BudgetMode) -> bool {
        let Ok(counts) = hist.counts() else { return false };
        if self.promotions.len() != counts.len() || self.x_matrix.iter().any(|r| r.len() != counts.len()) {
            return false;
        }
        let per_category = (0..counts.len()).all(|n| {
            let quantized: u64 = self.x_matrix.iter().map(|r| r[n]).sum();
            quantized + self.promotions[n] == counts[n] && self.promotions[n] <= counts[n]
        });
        let total: u64 = self.x_matrix.iter().flatten().sum::<u64>() + self.promotions.iter().sum::<u64>();
        let bits: u64 =
            self.x_matrix.iter().enumerate().map(|(l, r)| (l as u64 + 1) * r.iter().sum::<u64>()).sum::<u64>()
                + l0 as u64 * self.promotions.iter().sum::<u64>();
        let budget_ok = match mode {
            BudgetMode::Exact => bits == budget,
            BudgetMode::AtMost => bits <= budget,
        };
        per_category && total == hist.m_total() && bits == self.bits_used && budget_ok
    }
}

/// Column of `x_{l,n}` in the decision vector (`l` is 1-based).
pub fn x_index(l: usize, n: usize, levels: usize) -> usize {
    n * levels + (l - 1)
}

/// Assembles the integer program. Columns are `vec(X)` (column-major,
/// `L` entries per category) followed by `a`, plus one slack column on the
/// bandwidth row in [`BudgetMode::AtMost`].
pub fn build_ilp(
    hist: &ErrorHistogram,
    table: &FiTable,
    budget: u64,
    l0: u32,
    mode: BudgetMode,
    sense: Sense,
) -> Result<IlpProblem, AllocError> {
    table.check(hist)?;
    let counts = hist.counts()?;
    let (nl, nn) = (table.levels(), hist.categories());
    let cols = nl * nn + nn + usize::from(mode == BudgetMode::AtMost);
    let sign = match sense {
        Sense::MaximizeFI => -1.0,
        Sense::MinimizeFI => 1.0,
    };

    let mut cost = vec![0.0; cols];
    let mut rows = vec![vec![0.0; cols]; 2 + nn];
    for n in 0..nn {
        for l in 1..=nl {
            let j = x_index(l, n, nl);
            cost[j] = sign * table.gamma[l - 1][n];
            rows[0][j] = 1.0;
            rows[1][j] = l as f64;
            rows[2 + n][j] = 1.0;
        }
        let j = nl * nn + n;
        cost[j] = sign * table.gamma0;
        rows[0][j] = 1.0;
        rows[1][j] = l0 as f64;
        rows[2 + n][j] = 1.0;
    }
    let mut upper = vec![f64::INFINITY; cols];
    for n in 0..nn {
        upper[nl * nn + n] = counts[n] as f64;
    }
    if mode == BudgetMode::AtMost {
        rows[1][cols - 1] = 1.0;
    }
    let mut rhs = vec![hist.m_total() as f64, budget as f64];
    rhs.extend(counts.iter().map(|&c| c as f64));
    Ok(IlpProblem { cost, eq_matrix: rows, eq_rhs: rhs, lower: vec![0.0; cols], upper })
}

/// Optimal allocation by branch and bound.
pub fn allocate(
    hist: &ErrorHistogram,
    table: &FiTable,
    budget: u64,
    l0: u32,
    mode: BudgetMode,
    sense: Sense,
) -> Result<AllocationResult, AllocError> {
    let problem = build_ilp(hist, table, budget, l0, mode, sense)?;
    let solution = solve_ilp(&problem)?;
    if solution.status != Status::Optimal {
        return Err(AllocError::Infeasible);
    }
    let (nl, nn) = (table.levels(), hist.categories());
    let x_matrix = (1..=nl).map(|l| (0..nn).map(|n| solution.x[x_index(l, n, nl)] as u64).collect()).collect();
    let promotions = (0..nn).map(|n| solution.x[nl * nn + n] as u64).collect();
    Ok(AllocationResult::from_parts(x_matrix, promotions, table, l0))
}

/// Best split of one category per number of bits consumed.
fn category_options(
    count: u64,
    gammas: &[f64],
    gamma0: f64,
    l0: u32,
    sense: Sense,
    cap: u64,
) -> HashMap<u64, (f64, Vec<u64>)> {
    let better = |a: f64, b: f64| match sense {
        Sense::MaximizeFI => a > b,
        Sense::MinimizeFI => a < b,
    };
    let nl = gammas.len();
    let mut best: HashMap<u64, (f64, Vec<u64>)> = HashMap::new();
    // parts[0..nl] are the per-width counts, parts[nl] the promotions
    let mut parts = vec![0u64; nl + 1];
    fn walk(k: usize, left: u64, parts: &mut Vec<u64>, visit: &mut dyn FnMut(&[u64])) {
        if k + 1 == parts.len() {
            parts[k] = left;
            visit(parts);
            return;
        }
        for v in 0..=left {
            parts[k] = v;
            walk(k + 1, left - v, parts, visit);
        }
    }
    walk(0, count, &mut parts, &mut |p: &[u64]| {
        let bits: u64 = (0..nl).map(|l| (l as u64 + 1) * p[l]).sum::<u64>() + l0 as u64 * p[nl];
        if bits > cap {
            return;
        }
        let fi: f64 = (0..nl).map(|l| gammas[l] * p[l] as f64).sum::<f64>() + gamma0 * p[nl] as f64;
        match best.get(&bits) {
            Some((v, _)) if !better(fi, *v) => {}
            _ => {
                best.insert(bits, (fi, p.to_vec()));
            }
        }
    });
    best
}

/// Exact optimum by dynamic programming over (category, bits used). Shares
/// no code with the integer-programming path.
pub fn allocate_dp_oracle(
    hist: &ErrorHistogram,
    table: &FiTable,
    budget: u64,
    l0: u32,
    mode: BudgetMode,
    sense: Sense,
) -> Result<AllocationResult, AllocError> {
    table.check(hist)?;
    if budget > 10_000 {
        return Err(AllocError::OracleTooLarge(budget));
    }
    let counts = hist.counts()?;
    let (nl, nn) = (table.levels(), hist.categories());
    let better = |a: f64, b: f64| match sense {
        Sense::MaximizeFI => a > b,
        Sense::MinimizeFI => a < b,
    };
    let cap = budget as usize;

    // state[b] = best value using exactly b bits over the categories so far
    let mut state: Vec<Option<f64>> = vec![None; cap + 1];
    state[0] = Some(0.0);
    // (bits used before this category, its composition)
    type Pick = Option<(u64, Vec<u64>)>;
    let mut choices: Vec<Vec<Pick>> = Vec::with_capacity(nn);
    for (n, &count) in counts.iter().enumerate() {
        let gammas: Vec<f64> = (0..nl).map(|l| table.gamma[l][n]).collect();
        let mut options: Vec<(u64, (f64, Vec<u64>))> =
            category_options(count, &gammas, table.gamma0, l0, sense, budget).into_iter().collect();
        options.sort_by_key(|(bits, _)| *bits);
        let mut next: Vec<Option<f64>> = vec![None; cap + 1];
        let mut pick: Vec<Pick> = vec![None; cap + 1];
        for (prev_bits, prev) in state.iter().enumerate() {
            let Some(prev) = prev else { continue };
            for (bits, (fi, parts)) in &options {
                let total = prev_bits + *bits as usize;
                if total > cap {
                    break;
                }
                let v = prev + fi;
                if next[total].is_none_or(|cur| better(v, cur)) {
                    next[total] = Some(v);
                    pick[total] = Some((prev_bits as u64, parts.clone()));
                }
            }
        }
        state = next;
        choices.push(pick);
    }

    let end = match mode {
        BudgetMode::Exact => state[cap].map(|_| cap),
        BudgetMode::AtMost => {
            let mut best: Option<usize> = None;
            for (b, v) in state.iter().enumerate() {
                if let Some(v) = v {
                    if best.is_none_or(|k| better(*v, state[k].expect("set"))) {
                        best = Some(b);
                    }
                }
            }
            best
        }
    };
    let Some(mut bits) = end else { return Err(AllocError::Infeasible) };

    let mut x_matrix = vec![vec![0u64; nn]; nl];
    let mut promotions = vec![0u64; nn];
    for n in (0..nn).rev() {
        let (prev, parts) = choices[n][bits].clone().expect("reachable state has a choice");
        for l in 0..nl {
            x_matrix[l][n] = parts[l];
        }
        promotions[n] = parts[nl];
        bits = prev as usize;
    }
    Ok(AllocationResult::from_parts(x_matrix, promotions, table, l0))
}
