//! Experiment runners behind the command-line scenarios.
//!
//! Monte Carlo trials draw from ChaCha8 streams derived from the master seed
//! and the trial index, so results do not depend on thread scheduling. All
//! detectors in a run see the same observations and, for equal bit widths,
//! the same channel bit flips.

use crate::alloc::{
    allocate, build_fi_table_cached, AllocError, AllocationResult, BudgetMode, DesignCache, ErrorHistogram, FiTable,
    Sense,
};
use crate::config::{ConfigError, ExperimentConfig, NetworkSection};
use crate::design::{design, fi_landscape, DesignError, DesignMethod, DesignProblem, DesignSettings, GridAxis};
use crate::detection::{
    clairvoyant_statistic, theoretical_pd, threshold_for_pfa, DetectionError, HybridDetector, ReconstructionDetector,
};
use crate::exec::Execution;
use crate::model::{
    draw_observation, level_to_codeword, quantize, transmit, ChannelSpec, Codeword, Hypothesis, ModelError,
    NetworkConfig, QuantizerSpec, SignalParams,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Detection(#[from] DetectionError),
    #[error(transparent)]
    Design(#[from] DesignError),
    #[error(transparent)]
    Alloc(#[from] AllocError),
    #[error("unknown detector `{0}`")]
    UnknownDetector(String),
    #[error("detector `{kind}` needs {what}, but the network has none")]
    Incompatible { kind: String, what: &'static str },
    #[error("scenario mismatch: config describes `{0}`")]
    Scenario(String),
}

/// Detector roster entries, named like `clairvoyant`, `3b`, `fp`, `3b-fp`, `r-3b-fp`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DetectorKind {
    Clairvoyant,
    Quantized(u32),
    FullPrecision,
    Hybrid(u32),
    Reconstruction(u32),
}

impl fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DetectorKind::Clairvoyant => f.write_str("clairvoyant"),
            DetectorKind::Quantized(q) => write!(f, "{q}b"),
            DetectorKind::FullPrecision => f.write_str("fp"),
            DetectorKind::Hybrid(q) => write!(f, "{q}b-fp"),
            DetectorKind::Reconstruction(q) => write!(f, "r-{q}b-fp"),
        }
    }
}

impl FromStr for DetectorKind {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let unknown = || ExperimentError::UnknownDetector(s.to_string());
        let bits = |t: &str| -> Result<u32, ExperimentError> {
            let q: u32 = t.strip_suffix('b').and_then(|n| n.parse().ok()).ok_or_else(unknown)?;
            if (1..=crate::model::MAX_BITS).contains(&q) {
                Ok(q)
            } else {
                Err(unknown())
            }
        };
        match s {
            "clairvoyant" => Ok(DetectorKind::Clairvoyant),
            "fp" => Ok(DetectorKind::FullPrecision),
            _ => {
                if let Some(rest) = s.strip_prefix("r-").and_then(|r| r.strip_suffix("-fp")) {
                    Ok(DetectorKind::Reconstruction(bits(rest)?))
                } else if let Some(rest) = s.strip_suffix("-fp") {
                    Ok(DetectorKind::Hybrid(bits(rest)?))
                } else {
                    Ok(DetectorKind::Quantized(bits(s)?))
                }
            }
        }
    }
}

impl DetectorKind {
    pub fn bits(self) -> Option<u32> {
        match self {
            DetectorKind::Quantized(q) | DetectorKind::Hybrid(q) | DetectorKind::Reconstruction(q) => Some(q),
            _ => None,
        }
    }

    /// Bits sent to the fusion center per snapshot.
    pub fn bits_per_snapshot(self, quantized: usize, full_precision: usize, l0: u32) -> u64 {
        let (mq, mu, l0) = (quantized as u64, full_precision as u64, l0 as u64);
        match self {
            DetectorKind::Clairvoyant => (mq + mu) * l0,
            DetectorKind::Quantized(q) => mq * q as u64,
            DetectorKind::FullPrecision => mu * l0,
            DetectorKind::Hybrid(q) | DetectorKind::Reconstruction(q) => mq * q as u64 + mu * l0,
        }
    }
}

/// Makes swarm output usable as a quantizer: ties at the search-box edge are
/// pulled apart by a negligible amount.
fn separate(mut t: Vec<f64>) -> Vec<f64> {
    for i in 1..t.len() {
        if t[i] <= t[i - 1] {
            t[i] = t[i - 1] + 1e-9 * (1.0 + t[i - 1].abs());
        }
    }
    t
}

/// Optimized thresholds for one sensor.
pub fn optimized_quantizer(
    bits: u32,
    p_e: f64,
    sigma_n2: f64,
    settings: &DesignSettings,
) -> Result<QuantizerSpec, ExperimentError> {
    let problem = DesignProblem::new(bits, p_e, sigma_n2)?;
    let result = design(&problem, DesignMethod::Auto, settings, Execution::Sequential)?;
    Ok(QuantizerSpec::new(bits, separate(result.thresholds))?)
}

enum Prepared {
    Clairvoyant { sigma_n: f64 },
    Lmpt { det: HybridDetector, quantizer: Option<usize>, analog: bool },
    Reconstruction { det: ReconstructionDetector, quantizer: usize },
}

/// Detectors sharing one simulated network: `quantized` sensors in front of a
/// BSC followed by `full_precision` analog sensors.
pub struct MonteCarlo {
    params: SignalParams,
    channel: ChannelSpec,
    quantized: usize,
    full_precision: usize,
    l0: u32,
    quantizers: Vec<QuantizerSpec>,
    detectors: Vec<(DetectorKind, Prepared)>,
}

impl MonteCarlo {
    pub fn new(
        params: SignalParams,
        network: &NetworkSection,
        kinds: &[DetectorKind],
        settings: &DesignSettings,
    ) -> Result<Self, ExperimentError> {
        let channel = ChannelSpec::new(network.p_e)?;
        let mut quantizers: Vec<QuantizerSpec> = Vec::new();
        let mut detectors = Vec::new();
        for &kind in kinds {
            let quantizer = match kind.bits() {
                None => None,
                Some(q) => Some(match quantizers.iter().position(|s| s.bits() == q) {
                    Some(k) => k,
                    None => {
                        let spec = match (&network.thresholds, q == network.bits) {
                            (Some(t), true) => QuantizerSpec::new(q, t.clone())?,
                            _ => optimized_quantizer(q, network.p_e, params.sigma_n2, settings)?,
                        };
                        quantizers.push(spec);
                        quantizers.len() - 1
                    }
                }),
            };
            let needs = |what: &'static str, ok: bool| {
                if ok {
                    Ok(())
                } else {
                    Err(ExperimentError::Incompatible { kind: kind.to_string(), what })
                }
            };
            let roster = |spec: Option<&QuantizerSpec>, analog: usize| {
                let n = if spec.is_some() { network.quantized } else { 0 };
                let q = spec.cloned().unwrap_or_else(|| QuantizerSpec::uniform(1, 1.0).expect("valid"));
                NetworkConfig::homogeneous(params, q, channel, n, analog, network.l0)
            };
            let prepared = match kind {
                DetectorKind::Clairvoyant => {
                    needs("sensors", network.quantized + network.full_precision > 0)?;
                    Prepared::Clairvoyant { sigma_n: params.sigma_n() }
                }
                DetectorKind::FullPrecision => {
                    needs("full-precision sensors", network.full_precision > 0)?;
                    let det = HybridDetector::new(&roster(None, network.full_precision)?);
                    Prepared::Lmpt { det, quantizer: None, analog: true }
                }
                DetectorKind::Quantized(_) | DetectorKind::Hybrid(_) => {
                    let analog = matches!(kind, DetectorKind::Hybrid(_));
                    needs("quantized sensors", network.quantized > 0)?;
                    let k = quantizer.expect("bit width set");
                    let mu = if analog { network.full_precision } else { 0 };
                    let det = HybridDetector::new(&roster(Some(&quantizers[k]), mu)?);
                    if det.fisher_information() <= 0.0 {
                        return Err(DetectionError::ZeroFisher.into());
                    }
                    Prepared::Lmpt { det, quantizer: Some(k), analog }
                }
                DetectorKind::Reconstruction(_) => {
                    needs("quantized sensors", network.quantized > 0)?;
                    let k = quantizer.expect("bit width set");
                    let det = ReconstructionDetector::new(&roster(Some(&quantizers[k]), network.full_precision)?)?;
                    Prepared::Reconstruction { det, quantizer: k }
                }
            };
            detectors.push((kind, prepared));
        }
        Ok(Self {
            params,
            channel,
            quantized: network.quantized,
            full_precision: network.full_precision,
            l0: network.l0,
            quantizers,
            detectors,
        })
    }

    pub fn kinds(&self) -> Vec<DetectorKind> {
        self.detectors.iter().map(|(k, _)| *k).collect()
    }

    pub fn quantizers(&self) -> &[QuantizerSpec] {
        &self.quantizers
    }

    /// Asymptotic non-centrality per detector; `None` for the reconstruction rule.
    pub fn noncentrality(&self) -> Vec<Option<f64>> {
        let m = (self.quantized + self.full_precision) as f64;
        self.detectors
            .iter()
            .map(|(_, p)| match p {
                Prepared::Clairvoyant { .. } => Some(self.params.theta * (m / self.params.sigma_n2).sqrt()),
                Prepared::Lmpt { det, .. } => Some(det.noncentrality()),
                Prepared::Reconstruction { .. } => None,
            })
            .collect()
    }

    fn rng(seed: u64, trial: u64, hypothesis: Hypothesis, channel: bool) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = match hypothesis {
            Hypothesis::H0 => 0,
            Hypothesis::H1 => 1,
        };
        rng.set_stream((trial << 2) | (h << 1) | u64::from(channel));
        rng
    }

    /// Statistic of every detector for one trial.
    pub fn trial(&self, seed: u64, trial: u64, hypothesis: Hypothesis) -> Vec<f64> {
        let mut obs_rng = Self::rng(seed, trial, hypothesis, false);
        let y: Vec<f64> = (0..self.quantized + self.full_precision)
            .map(|_| draw_observation(&self.params, hypothesis, &mut obs_rng))
            .collect();
        let (yq, analog) = y.split_at(self.quantized);
        let received: Vec<Vec<Codeword>> = self
            .quantizers
            .iter()
            .map(|spec| {
                let mut chan_rng = Self::rng(seed, trial, hypothesis, true);
                yq.iter()
                    .map(|&v| {
                        let sent = level_to_codeword(quantize(v, spec), spec.bits()).expect("level in range");
                        transmit(sent, &self.channel, &mut chan_rng)
                    })
                    .collect()
            })
            .collect();
        self.detectors
            .iter()
            .map(|(_, p)| match p {
                Prepared::Clairvoyant { sigma_n } => clairvoyant_statistic(&y, *sigma_n),
                Prepared::Lmpt { det, quantizer, analog: use_analog } => {
                    let cw: &[Codeword] = quantizer.map_or(&[], |k| &received[k]);
                    let an: &[f64] = if *use_analog { analog } else { &[] };
                    det.score_unchecked(cw, an) / det.fisher_information().sqrt()
                }
                Prepared::Reconstruction { det, quantizer } => det.statistic_unchecked(&received[*quantizer], analog),
            })
            .collect()
    }

    /// ROC points at each target false-alarm rate.
    pub fn roc(
        &self,
        pfa_grid: &[f64],
        trials: u64,
        seed: u64,
        exec: Execution,
    ) -> Result<Vec<RocPoint>, ExperimentError> {
        let etas = pfa_grid.iter().map(|&p| threshold_for_pfa(p)).collect::<Result<Vec<_>, _>>()?;
        let nd = self.detectors.len();
        let ne = etas.len();
        // per trial: exceedance counts for H0 then H1, indexed [detector][eta]
        let per_trial = exec.map(trials as usize, |t| {
            let mut hits = vec![0u32; 2 * nd * ne];
            for (h, hyp) in [Hypothesis::H0, Hypothesis::H1].into_iter().enumerate() {
                let stats = self.trial(seed, t as u64, hyp);
                for (d, s) in stats.iter().enumerate() {
                    for (e, eta) in etas.iter().enumerate() {
                        if s > eta {
                            hits[(h * nd + d) * ne + e] += 1;
                        }
                    }
                }
            }
            hits
        });
        let mut totals = vec![0u64; 2 * nd * ne];
        for hits in per_trial {
            for (acc, h) in totals.iter_mut().zip(hits) {
                *acc += h as u64;
            }
        }
        let lambdas = self.noncentrality();
        let n = trials as f64;
        let mut points = Vec::with_capacity(nd * ne);
        for (d, (kind, _)) in self.detectors.iter().enumerate() {
            for (e, (&pfa, &eta)) in pfa_grid.iter().zip(&etas).enumerate() {
                let pfa_mc = totals[d * ne + e] as f64 / n;
                let pd_mc = totals[(nd + d) * ne + e] as f64 / n;
                points.push(RocPoint {
                    detector: kind.to_string(),
                    pfa_target: pfa,
                    eta,
                    pd_theory: lambdas[d].map(|l| theoretical_pd(l, eta)),
                    pfa_mc,
                    pd_mc,
                    stderr_mc: (pd_mc * (1.0 - pd_mc) / n).sqrt(),
                });
            }
        }
        Ok(points)
    }

    pub fn bit_accounting(&self) -> Vec<BitAccount> {
        self.detectors
            .iter()
            .map(|(k, _)| BitAccount {
                detector: k.to_string(),
                bits_per_snapshot: k.bits_per_snapshot(self.quantized, self.full_precision, self.l0),
            })
            .collect()
    }
}

/// Sample mean and variance of the unnormalized H0 score of a network.
pub fn score_moments_h0(network: &NetworkConfig, trials: u64, seed: u64, exec: Execution) -> (f64, f64) {
    const CHUNK: u64 = 10_000;
    let det = HybridDetector::new(network);
    let params = network.params;
    let channels: Vec<(QuantizerSpec, ChannelSpec)> = network.quantized().map(|(q, c)| (q.clone(), *c)).collect();
    let mu = network.full_precision_count();
    let chunks = trials.div_ceil(CHUNK);
    let sums = exec.map(chunks as usize, |c| {
        let (mut s, mut s2) = (0.0, 0.0);
        let lo = c as u64 * CHUNK;
        for t in lo..(lo + CHUNK).min(trials) {
            let mut obs = MonteCarlo::rng(seed, t, Hypothesis::H0, false);
            let mut chan = MonteCarlo::rng(seed, t, Hypothesis::H0, true);
            let cw: Vec<Codeword> = channels
                .iter()
                .map(|(q, ch)| {
                    let y = draw_observation(&params, Hypothesis::H0, &mut obs);
                    transmit(level_to_codeword(quantize(y, q), q.bits()).expect("level in range"), ch, &mut chan)
                })
                .collect();
            let analog: Vec<f64> = (0..mu).map(|_| draw_observation(&params, Hypothesis::H0, &mut obs)).collect();
            let v = det.score_unchecked(&cw, &analog);
            s += v;
            s2 += v * v;
        }
        (s, s2)
    });
    let (s, s2) = sums.into_iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let n = trials as f64;
    let mean = s / n;
    (mean, (s2 - n * mean * mean) / (n - 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub detector: String,
    pub pfa_target: f64,
    pub eta: f64,
    pub pd_theory: Option<f64>,
    pub pfa_mc: f64,
    pub pd_mc: f64,
    pub stderr_mc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BitAccount {
    pub detector: String,
    pub bits_per_snapshot: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizerRow {
    pub bits: u32,
    pub thresholds: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocReport {
    pub trials: u64,
    pub points: Vec<RocPoint>,
    pub bits: Vec<BitAccount>,
    pub quantizers: Vec<QuantizerRow>,
}

fn design_settings(config: &ExperimentConfig) -> DesignSettings {
    let mut pso = config.design.pso;
    pso.seed = config.seed;
    DesignSettings { pso, bgda: config.design.bgda }
}

fn require_scenario(config: &ExperimentConfig, scenario: crate::config::Scenario) -> Result<(), ExperimentError> {
    if config.scenario == scenario {
        Ok(())
    } else {
        Err(ExperimentError::Scenario(config.scenario.name().to_string()))
    }
}

fn signal(config: &ExperimentConfig) -> Result<SignalParams, ExperimentError> {
    let s = &config.signal;
    Ok(SignalParams::new(s.theta, s.sigma_n2, s.sigma_h2)?)
}

pub fn run_roc(config: &ExperimentConfig, exec: Execution) -> Result<RocReport, ExperimentError> {
    require_scenario(config, crate::config::Scenario::Roc)?;
    let kinds = config.roc.detectors.iter().map(|s| s.parse()).collect::<Result<Vec<DetectorKind>, _>>()?;
    let mc = MonteCarlo::new(signal(config)?, &config.network, &kinds, &design_settings(config))?;
    let points = mc.roc(&config.roc.pfa_grid, config.trials, config.seed, exec)?;
    Ok(RocReport {
        trials: config.trials,
        points,
        bits: mc.bit_accounting(),
        quantizers: mc
            .quantizers()
            .iter()
            .map(|q| QuantizerRow { bits: q.bits(), thresholds: q.thresholds().to_vec() })
            .collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignRow {
    pub method: String,
    pub bits: u32,
    pub p_e: f64,
    pub sigma_n2: f64,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub thresholds: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignReport {
    pub rows: Vec<DesignRow>,
}

fn design_rows(config: &ExperimentConfig, exec: Execution) -> Result<Vec<DesignRow>, ExperimentError> {
    let d = &config.design;
    let problem =
        DesignProblem::new(d.bits, d.p_e, config.signal.sigma_n2)?.with_tau_max(d.tau_max).with_mapping(d.mapping);
    let settings = design_settings(config);
    d.methods
        .iter()
        .map(|&method| {
            let r = design(&problem, method, &settings, exec)?;
            let name = match method {
                DesignMethod::Auto if d.p_e == 0.0 => "bgda",
                DesignMethod::Auto | DesignMethod::Pso => "pso",
                DesignMethod::Bgda => "bgda",
            };
            Ok(DesignRow {
                method: name.to_string(),
                bits: d.bits,
                p_e: d.p_e,
                sigma_n2: config.signal.sigma_n2,
                objective: r.objective,
                iterations: r.iterations,
                converged: r.converged,
                thresholds: r.thresholds,
            })
        })
        .collect()
}

pub fn run_design(config: &ExperimentConfig, exec: Execution) -> Result<DesignReport, ExperimentError> {
    require_scenario(config, crate::config::Scenario::DesignQuantizer)?;
    Ok(DesignReport { rows: design_rows(config, exec)? })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandscapeCell {
    pub tau1: f64,
    pub tau2: f64,
    pub tau3: f64,
    pub objective: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub tau1: f64,
    pub tau3: f64,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandscapeReport {
    pub cells: Vec<LandscapeCell>,
    pub local_maxima: Vec<Peak>,
    pub designs: Vec<DesignRow>,
}

pub fn run_landscape(config: &ExperimentConfig, exec: Execution) -> Result<LandscapeReport, ExperimentError> {
    require_scenario(config, crate::config::Scenario::FiLandscape)?;
    let d = &config.design;
    let l = &config.landscape;
    let problem =
        DesignProblem::new(d.bits, d.p_e, config.signal.sigma_n2)?.with_tau_max(d.tau_max).with_mapping(d.mapping);
    let axis = GridAxis { min: l.min, max: l.max, points: l.points };
    let land = fi_landscape(&problem, &axis, &axis, l.tau2, exec)?;
    let mut cells = Vec::with_capacity(land.values.len());
    for (r, &t1) in land.tau1.iter().enumerate() {
        for (c, &t3) in land.tau3.iter().enumerate() {
            cells.push(LandscapeCell { tau1: t1, tau2: l.tau2, tau3: t3, objective: land.get(r, c) });
        }
    }
    let local_maxima =
        land.local_maxima().into_iter().map(|m| Peak { tau1: m.tau1, tau3: m.tau3, objective: m.value }).collect();
    Ok(LandscapeReport { cells, local_maxima, designs: design_rows(config, exec)? })
}

/// Sensors per (bit width or `fp`, error class).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakdownRow {
    pub case: String,
    pub m_total: u64,
    pub sense: Sense,
    pub level: String,
    pub error_class: f64,
    pub count: u64,
}

fn breakdown(case: &str, sense: Sense, hist: &ErrorHistogram, r: &AllocationResult) -> Vec<BreakdownRow> {
    let mut rows = Vec::new();
    for (n, &eps) in hist.epsilons().iter().enumerate() {
        for (l, row) in r.x_matrix.iter().enumerate() {
            rows.push(BreakdownRow {
                case: case.to_string(),
                m_total: hist.m_total(),
                sense,
                level: (l + 1).to_string(),
                error_class: eps,
                count: row[n],
            });
        }
        rows.push(BreakdownRow {
            case: case.to_string(),
            m_total: hist.m_total(),
            sense,
            level: "fp".into(),
            error_class: eps,
            count: r.promotions[n],
        });
    }
    rows
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocateReport {
    pub m_total: u64,
    pub budget: u64,
    pub budget_mode: BudgetMode,
    pub sense: Sense,
    pub table: FiTable,
    pub result: AllocationResult,
    pub lambda: f64,
    pub pfa: f64,
    pub pd_theory: f64,
    pub breakdown: Vec<BreakdownRow>,
}

pub fn run_allocate(config: &ExperimentConfig, exec: Execution) -> Result<AllocateReport, ExperimentError> {
    require_scenario(config, crate::config::Scenario::Allocate)?;
    let a = &config.allocation;
    let hist = ErrorHistogram::from_frequencies(a.epsilons.clone(), a.freqs.clone(), a.m_total)?;
    let cache = DesignCache::new();
    let settings = design_settings(config);
    let table =
        build_fi_table_cached(&hist, a.levels, config.signal.sigma_n2, DesignMethod::Auto, &settings, &cache, exec)?;
    let result = allocate(&hist, &table, a.budget, a.l0, a.budget_mode, a.sense)?;
    let lambda = config.signal.theta * result.total_fi.sqrt();
    let eta = threshold_for_pfa(a.pfa)?;
    Ok(AllocateReport {
        m_total: a.m_total,
        budget: a.budget,
        budget_mode: a.budget_mode,
        sense: a.sense,
        breakdown: breakdown("single", a.sense, &hist, &result),
        table,
        result,
        lambda,
        pfa: a.pfa,
        pd_theory: theoretical_pd(lambda, eta),
    })
}

/// One (case, M, sense) point; allocation fields are empty when infeasible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub case: String,
    pub m_total: u64,
    pub sense: Sense,
    pub feasible: bool,
    pub total_fi: Option<f64>,
    pub bits_used: Option<u64>,
    pub lambda: Option<f64>,
    pub pd_theory: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub budget: u64,
    pub budget_mode: BudgetMode,
    pub pfa: f64,
    pub table: FiTable,
    pub points: Vec<SweepPoint>,
    pub breakdown: Vec<BreakdownRow>,
}

pub fn run_sweep(config: &ExperimentConfig, exec: Execution) -> Result<SweepReport, ExperimentError> {
    require_scenario(config, crate::config::Scenario::Sweep)?;
    let a = &config.allocation;
    let sw = &config.sweep;
    let eta = threshold_for_pfa(sw.pfa)?;
    let settings = design_settings(config);
    let cache = DesignCache::new();
    let uniform = vec![1.0 / a.epsilons.len() as f64; a.epsilons.len()];
    let base = ErrorHistogram::from_frequencies(a.epsilons.clone(), uniform, 0)?;
    let table =
        build_fi_table_cached(&base, a.levels, config.signal.sigma_n2, DesignMethod::Auto, &settings, &cache, exec)?;

    let mut jobs = Vec::new();
    for case in &sw.cases {
        for m in sw.m_values() {
            for &sense in &sw.senses {
                jobs.push((case, m, sense));
            }
        }
    }
    let solved = exec.map_slice(&jobs, |&(case, m, sense)| -> Result<_, ExperimentError> {
        let hist = ErrorHistogram::from_frequencies(a.epsilons.clone(), case.freqs.clone(), m)?;
        match allocate(&hist, &table, a.budget, a.l0, a.budget_mode, sense) {
            Ok(r) => Ok((hist, Some(r))),
            Err(AllocError::Infeasible) => Ok((hist, None)),
            Err(e) => Err(e.into()),
        }
    });

    let mut points = Vec::new();
    let mut rows = Vec::new();
    for ((case, m, sense), outcome) in jobs.into_iter().zip(solved) {
        let (hist, result) = outcome?;
        let lambda = result.as_ref().map(|r| config.signal.theta * r.total_fi.sqrt());
        points.push(SweepPoint {
            case: case.name.clone(),
            m_total: m,
            sense,
            feasible: result.is_some(),
            total_fi: result.as_ref().map(|r| r.total_fi),
            bits_used: result.as_ref().map(|r| r.bits_used),
            lambda,
            pd_theory: lambda.map(|l| theoretical_pd(l, eta)),
        });
        if let Some(r) = &result {
            rows.extend(breakdown(&case.name, sense, &hist, r));
        }
    }
    Ok(SweepReport { budget: a.budget, budget_mode: a.budget_mode, pfa: sw.pfa, table, points, breakdown: rows })
}
