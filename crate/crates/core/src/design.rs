//! Per-sensor quantizer threshold design.
//!
//! The objective is one quantized sensor's Fisher information at θ = 0. On a
//! noiseless link it is unimodal and is climbed with batch gradient ascent;
//! over a noisy link it can have several peaks, so a constriction-factor
//! particle swarm searches the box `[-τ_max, τ_max]^(2^q - 1)` instead.

use crate::detection::{bsc_kernel_with, LikelihoodKernels};
use crate::exec::Execution;
use crate::model::{strictly_increasing, CodewordMapping, ModelError, MAX_BITS};
use crate::normal::{pdf, upper_tail};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Minimum gap kept between neighbouring thresholds when ordering is repaired.
const ORDER_GAP: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DesignError {
    #[error("thresholds must be finite and strictly increasing")]
    NonMonotone,
    #[error("expected {expected} thresholds for a {bits}-bit quantizer, got {got}")]
    Dimension { bits: u32, expected: usize, got: usize },
    #[error("the closed-form gradient needs an error-free channel, got crossover {0}")]
    NoisyChannel(f64),
    #[error("step size must be positive, got {0}")]
    Step(f64),
    #[error("invalid swarm settings: {0}")]
    Settings(&'static str),
    #[error("the threshold landscape is defined for 2-bit quantizers only, got {0} bits")]
    LandscapeBits(u32),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// One sensor's design problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignProblem {
    pub bits: u32,
    pub p_e: f64,
    pub sigma_n2: f64,
    /// Half-width of the swarm's search box.
    pub tau_max: f64,
    #[serde(default)]
    pub mapping: CodewordMapping,
}

impl DesignProblem {
    pub fn new(bits: u32, p_e: f64, sigma_n2: f64) -> Result<Self, DesignError> {
        let problem = Self { bits, p_e, sigma_n2, tau_max: 5.0, mapping: CodewordMapping::NaturalBinary };
        problem.validate()?;
        Ok(problem)
    }

    pub fn with_tau_max(mut self, tau_max: f64) -> Self {
        self.tau_max = tau_max;
        self
    }

    pub fn with_mapping(mut self, mapping: CodewordMapping) -> Self {
        self.mapping = mapping;
        self
    }

    pub fn validate(&self) -> Result<(), DesignError> {
        if !(1..=MAX_BITS).contains(&self.bits) {
            return Err(ModelError::Bits(self.bits).into());
        }
        if !(0.0..=0.5).contains(&self.p_e) {
            return Err(ModelError::Crossover(self.p_e).into());
        }
        if !(self.sigma_n2.is_finite() && self.sigma_n2 > 0.0) {
            return Err(ModelError::NoiseVariance(self.sigma_n2).into());
        }
        if !(self.tau_max.is_finite() && self.tau_max > 0.0) {
            return Err(DesignError::Settings("tau_max must be positive"));
        }
        Ok(())
    }

    pub fn dimension(&self) -> usize {
        (1usize << self.bits) - 1
    }
}

/// Constriction-factor PSO settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PsoSettings {
    pub c1: f64,
    pub c2: f64,
    pub swarm_size: usize,
    pub v_tol: f64,
    pub chi: f64,
    pub max_iters: usize,
    pub seed: u64,
    pub boundary: Boundary,
}

/// What happens to a particle that leaves the search box.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    /// Clamp to the wall and stop.
    Absorb,
    /// Mirror the overshoot back inside and reverse the velocity.
    #[default]
    Reflect,
    /// Clamp to the wall and bounce back with a random fraction of the speed.
    Damp,
}

impl Default for PsoSettings {
    fn default() -> Self {
        Self {
            c1: 2.05,
            c2: 2.05,
            swarm_size: 100,
            v_tol: 1e-6,
            chi: 0.7298,
            max_iters: 2000,
            seed: 0,
            boundary: Boundary::default(),
        }
    }
}

impl PsoSettings {
    pub fn validate(&self) -> Result<(), DesignError> {
        if self.swarm_size < 2 {
            return Err(DesignError::Settings("swarm_size must be at least 2"));
        }
        if self.v_tol.is_nan() || self.v_tol <= 0.0 {
            return Err(DesignError::Settings("v_tol must be positive"));
        }
        if !(self.c1 >= 0.0 && self.c2 >= 0.0) {
            return Err(DesignError::Settings("acceleration coefficients must be non-negative"));
        }
        if self.c1 + self.c2 <= 4.0 {
            return Err(DesignError::Settings("constriction needs c1 + c2 > 4"));
        }
        if !(self.chi > 0.0 && self.chi <= 1.0) {
            return Err(DesignError::Settings("chi must lie in (0, 1]"));
        }
        Ok(())
    }

    /// Clerc-Kennedy constriction factor for the configured coefficients.
    pub fn clerc_chi(c1: f64, c2: f64) -> f64 {
        let phi = c1 + c2;
        2.0 / (2.0 - phi - (phi * phi - 4.0 * phi).sqrt()).abs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BgdaSettings {
    pub step: f64,
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for BgdaSettings {
    fn default() -> Self {
        Self { step: 2.0, tol: 1e-8, max_iters: 10_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignResult {
    pub thresholds: Vec<f64>,
    pub objective: f64,
    /// Best objective after each iteration (entry 0 is the starting point).
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Objective evaluator with the channel matrix cached.
#[derive(Debug, Clone)]
pub(crate) struct Objective {
    sigma_n: f64,
    bsc: Vec<Vec<f64>>,
}

impl Objective {
    pub(crate) fn new(problem: &DesignProblem) -> Self {
        Self { sigma_n: problem.sigma_n2.sqrt(), bsc: bsc_kernel_with(problem.bits, problem.p_e, problem.mapping) }
    }

    /// `Q` and `F` for a sorted (possibly non-strict) threshold vector.
    fn tables(&self, thresholds: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let s = self.sigma_n;
        let n = thresholds.len() + 1;
        let edge = |k: usize| -> f64 {
            if k == 0 {
                f64::NEG_INFINITY
            } else if k == n {
                f64::INFINITY
            } else {
                thresholds[k - 1] / s
            }
        };
        let tails: Vec<f64> = (0..=n).map(|k| upper_tail(edge(k))).collect();
        let dens: Vec<f64> = (0..=n).map(|k| pdf(edge(k))).collect();
        let probs = (0..n).map(|j| (tails[j] - tails[j + 1]).max(0.0)).collect();
        let scores = (0..n).map(|j| s * s * (dens[j] - dens[j + 1])).collect();
        (probs, scores)
    }

    pub(crate) fn value(&self, thresholds: &[f64]) -> f64 {
        let (probs, scores) = self.tables(thresholds);
        LikelihoodKernels::from_tables(self.sigma_n, probs, scores, self.bsc.clone()).fisher_information()
    }

    /// Analytic gradient on a noiseless link. For each threshold `τ_i` between
    /// bins `i` and `i+1` with ratios `r_k = F_k / Q_k`:
    /// `∂/∂τ_i = Ψ(τ_i/σ)/σ⁶ · (r_i − r_{i+1}) · (2τ_i − (r_i + r_{i+1})/σ)`.
    fn gradient(&self, thresholds: &[f64]) -> Vec<f64> {
        let s = self.sigma_n;
        let (probs, scores) = self.tables(thresholds);
        let ratio = |k: usize| if probs[k] > 0.0 { scores[k] / probs[k] } else { 0.0 };
        thresholds
            .iter()
            .enumerate()
            .map(|(i, &t)| {
                let (ri, rn) = (ratio(i), ratio(i + 1));
                pdf(t / s) / s.powi(6) * (ri - rn) * (2.0 * t - (ri + rn) / s)
            })
            .collect()
    }
}

fn check_thresholds(thresholds: &[f64], problem: &DesignProblem) -> Result<(), DesignError> {
    problem.validate()?;
    let expected = problem.dimension();
    if thresholds.len() != expected {
        return Err(DesignError::Dimension { bits: problem.bits, expected, got: thresholds.len() });
    }
    if !strictly_increasing(thresholds) {
        return Err(DesignError::NonMonotone);
    }
    Ok(())
}

/// Fisher information contributed by one sensor with these thresholds.
pub fn design_objective(thresholds: &[f64], problem: &DesignProblem) -> Result<f64, DesignError> {
    check_thresholds(thresholds, problem)?;
    Ok(Objective::new(problem).value(thresholds))
}

/// Closed-form gradient of [`design_objective`] on a noiseless link.
pub fn objective_gradient(thresholds: &[f64], problem: &DesignProblem) -> Result<Vec<f64>, DesignError> {
    check_thresholds(thresholds, problem)?;
    if problem.p_e != 0.0 {
        return Err(DesignError::NoisyChannel(problem.p_e));
    }
    Ok(Objective::new(problem).gradient(thresholds))
}

/// Pushes violating neighbours apart around their midpoint.
fn restore_order(x: &mut [f64]) {
    for _ in 0..x.len() {
        let mut clean = true;
        for i in 1..x.len() {
            if x[i] - x[i - 1] < ORDER_GAP {
                let mid = 0.5 * (x[i] + x[i - 1]);
                x[i - 1] = mid - ORDER_GAP;
                x[i] = mid + ORDER_GAP;
                clean = false;
            }
        }
        if clean {
            break;
        }
    }
}

/// Batch gradient ascent from `init`.
///
/// Each iteration tries the full step and halves it until the objective does
/// not decrease; ordering violations are projected back to the midpoint.
pub fn design_bgda(
    problem: &DesignProblem,
    init: &[f64],
    settings: &BgdaSettings,
) -> Result<DesignResult, DesignError> {
    if problem.p_e != 0.0 {
        return Err(DesignError::NoisyChannel(problem.p_e));
    }
    if !(settings.step > 0.0 && settings.step.is_finite()) {
        return Err(DesignError::Step(settings.step));
    }
    check_thresholds(init, problem)?;

    let objective = Objective::new(problem);
    let mut x = init.to_vec();
    let mut value = objective.value(&x);
    let mut trace = vec![value];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < settings.max_iters {
        let grad = objective.gradient(&x);
        if grad.iter().fold(0.0f64, |m, g| m.max(g.abs())) <= settings.tol {
            converged = true;
            break;
        }
        iterations += 1;
        let mut step = settings.step;
        let mut accepted = None;
        for _ in 0..60 {
            let mut cand: Vec<f64> = x.iter().zip(&grad).map(|(xi, gi)| xi + step * gi).collect();
            restore_order(&mut cand);
            let v = objective.value(&cand);
            if v >= value {
                accepted = Some((cand, v));
                break;
            }
            step *= 0.5;
        }
        match accepted {
            Some((cand, v)) => {
                x = cand;
                value = v;
                trace.push(value);
            }
            None => {
                // no ascent direction left at machine precision
                converged = true;
                break;
            }
        }
    }

    Ok(DesignResult { thresholds: x, objective: value, trace, iterations, converged })
}

/// Particle swarm search with Clerc-Kennedy constriction.
///
/// Particle coordinates are sorted before every evaluation; velocities are
/// left untouched. All random numbers of an iteration are drawn from the
/// seeded stream before the (possibly parallel) evaluation, so results are
/// identical for either execution mode.
pub fn design_pso(
    problem: &DesignProblem,
    settings: &PsoSettings,
    exec: Execution,
) -> Result<DesignResult, DesignError> {
    problem.validate()?;
    settings.validate()?;

    let dim = problem.dimension();
    let n = settings.swarm_size;
    let bound = problem.tau_max;
    let v_max = 2.0 * bound;
    let objective = Objective::new(problem);
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);

    let evaluate = |positions: &[Vec<f64>]| -> Vec<f64> {
        exec.map_slice(positions, |p| {
            let mut sorted = p.clone();
            sorted.sort_by(f64::total_cmp);
            objective.value(&sorted)
        })
    };

    let mut pos: Vec<Vec<f64>> = (0..n).map(|_| (0..dim).map(|_| rng.random_range(-bound..bound)).collect()).collect();
    let mut vel: Vec<Vec<f64>> =
        pos.iter().map(|p| p.iter().map(|&x| 0.5 * (rng.random_range(-bound..bound) - x)).collect()).collect();
    let mut fit = evaluate(&pos);
    let mut best_pos = pos.clone();
    let mut best_fit = fit.clone();
    let mut g = argmax(&best_fit);
    let mut trace = vec![best_fit[g]];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < settings.max_iters {
        iterations += 1;
        let draws: Vec<(f64, f64, f64)> =
            (0..n * dim).map(|_| (rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>())).collect();
        let global = best_pos[g].clone();
        let mut speed = 0.0f64;
        for k in 0..n {
            for d in 0..dim {
                let (r1, r2, r3) = draws[k * dim + d];
                let x = pos[k][d];
                let v = settings.chi
                    * (vel[k][d] + settings.c1 * r1 * (best_pos[k][d] - x) + settings.c2 * r2 * (global[d] - x));
                let mut v = v.clamp(-v_max, v_max);
                let mut nx = x + v;
                if nx > bound || nx < -bound {
                    match settings.boundary {
                        Boundary::Absorb => {
                            nx = nx.clamp(-bound, bound);
                            v = 0.0;
                        }
                        Boundary::Reflect => {
                            let wall = if nx > bound { bound } else { -bound };
                            nx = (2.0 * wall - nx).clamp(-bound, bound);
                            v = -v;
                        }
                        Boundary::Damp => {
                            nx = nx.clamp(-bound, bound);
                            v *= -r3;
                        }
                    }
                }
                vel[k][d] = v;
                pos[k][d] = nx;
                speed = speed.max(v.abs());
            }
        }
        fit = evaluate(&pos);
        for k in 0..n {
            if fit[k] > best_fit[k] {
                best_fit[k] = fit[k];
                best_pos[k].clone_from(&pos[k]);
            }
        }
        g = argmax(&best_fit);
        trace.push(best_fit[g]);
        if speed <= settings.v_tol {
            converged = true;
            break;
        }
    }

    let mut thresholds = best_pos[g].clone();
    thresholds.sort_by(f64::total_cmp);
    restore_order(&mut thresholds);
    let objective_value = objective.value(&thresholds);
    Ok(DesignResult { thresholds, objective: objective_value, trace, iterations, converged })
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Gradient ascent for noiseless links, particle swarm otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct DesignSettings {
    pub pso: PsoSettings,
    pub bgda: BgdaSettings,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DesignMethod {
    #[default]
    Auto,
    Bgda,
    Pso,
}

/// Optimizes thresholds with the requested method. `Auto` picks gradient
/// ascent from evenly spaced thresholds when the channel is noiseless.
pub fn design(
    problem: &DesignProblem,
    method: DesignMethod,
    settings: &DesignSettings,
    exec: Execution,
) -> Result<DesignResult, DesignError> {
    let use_bgda = match method {
        DesignMethod::Auto => problem.p_e == 0.0,
        DesignMethod::Bgda => true,
        DesignMethod::Pso => false,
    };
    if use_bgda {
        let init = default_init(problem.bits, problem.sigma_n2.sqrt());
        design_bgda(problem, &init, &settings.bgda)
    } else {
        design_pso(problem, &settings.pso, exec)
    }
}

/// Evenly spaced starting thresholds on `[-1.5σ, 1.5σ]`.
pub fn default_init(bits: u32, sigma_n: f64) -> Vec<f64> {
    let n = (1usize << bits) - 1;
    if n == 1 {
        return vec![0.5 * sigma_n];
    }
    (0..n).map(|i| sigma_n * (-1.5 + 3.0 * i as f64 / (n - 1) as f64)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridAxis {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl GridAxis {
    pub fn values(&self) -> Vec<f64> {
        match self.points {
            0 => Vec::new(),
            1 => vec![self.min],
            n => (0..n).map(|i| self.min + (self.max - self.min) * i as f64 / (n - 1) as f64).collect(),
        }
    }
}

/// Objective over `(τ₁, τ₃)` with `τ₂` held fixed, for a 2-bit quantizer.
#[derive(Debug, Clone, PartialEq)]
pub struct Landscape {
    pub tau1: Vec<f64>,
    pub tau2: f64,
    pub tau3: Vec<f64>,
    /// Row-major over `(tau1, tau3)`; `None` where `τ₁ < τ₂ < τ₃` fails.
    pub values: Vec<Option<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalMax {
    pub row: usize,
    pub col: usize,
    pub tau1: f64,
    pub tau3: f64,
    pub value: f64,
}

impl Landscape {
    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        self.values[row * self.tau3.len() + col]
    }

    /// Valid cells strictly above every valid 8-neighbour.
    pub fn local_maxima(&self) -> Vec<LocalMax> {
        let (rows, cols) = (self.tau1.len(), self.tau3.len());
        let mut out = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                let Some(v) = self.get(r, c) else { continue };
                let mut is_max = true;
                'nb: for dr in -1i64..=1 {
                    for dc in -1i64..=1 {
                        if dr == 0 && dc == 0 {
                            continue;
                        }
                        let (nr, nc) = (r as i64 + dr, c as i64 + dc);
                        if nr < 0 || nc < 0 || nr >= rows as i64 || nc >= cols as i64 {
                            continue;
                        }
                        if let Some(w) = self.get(nr as usize, nc as usize) {
                            if w >= v {
                                is_max = false;
                                break 'nb;
                            }
                        }
                    }
                }
                if is_max {
                    out.push(LocalMax { row: r, col: c, tau1: self.tau1[r], tau3: self.tau3[c], value: v });
                }
            }
        }
        out
    }

    pub fn argmax(&self) -> Option<LocalMax> {
        let cols = self.tau3.len();
        self.values
            .iter()
            .enumerate()
            .filter_map(|(k, v)| v.map(|v| (k, v)))
            .fold(None, |best: Option<(usize, f64)>, (k, v)| match best {
                Some((_, bv)) if bv >= v => best,
                _ => Some((k, v)),
            })
            .map(|(k, v)| LocalMax {
                row: k / cols,
                col: k % cols,
                tau1: self.tau1[k / cols],
                tau3: self.tau3[k % cols],
                value: v,
            })
    }
}

pub fn fi_landscape(
    problem: &DesignProblem,
    tau1_axis: &GridAxis,
    tau3_axis: &GridAxis,
    tau2: f64,
    exec: Execution,
) -> Result<Landscape, DesignError> {
    problem.validate()?;
    if problem.bits != 2 {
        return Err(DesignError::LandscapeBits(problem.bits));
    }
    let tau1 = tau1_axis.values();
    let tau3 = tau3_axis.values();
    let objective = Objective::new(problem);
    let cols = tau3.len();
    let values = exec.map(tau1.len() * cols, |k| {
        let t = [tau1[k / cols], tau2, tau3[k % cols]];
        strictly_increasing(&t).then(|| objective.value(&t))
    });
    Ok(Landscape { tau1, tau2, tau3, values })
}
