//! Likelihood kernels, Fisher information and the hybrid LMPT detector.
//!
//! Everything is evaluated at the null point θ = 0. For a quantized sensor
//! with quantizer thresholds `τ` and reporting-channel matrix `G`:
//!
//! * `Q_j = Φ(τ_{j-1}/σ_n) − Φ(τ_j/σ_n)` is the probability of bin `j`,
//! * `F_j = σ_n²·[Ψ(τ_{j-1}/σ_n) − Ψ(τ_j/σ_n)]`, so that `dQ_j/dθ = F_j/σ_n³`,
//! * receiving codeword `i` contributes the score `Σ_j G_ij F_j / (σ_n³ Σ_j G_ij Q_j)`
//!   and the Fisher information `(Σ_j G_ij F_j)² / (σ_n⁶ Σ_j G_ij Q_j)`.
//!
//! A full-precision sensor contributes the score `ṽ/σ_n²` and information `1/σ_n²`.

use crate::model::{
    hamming_distance, ChannelSpec, Codeword, CodewordMapping, ModelError, NetworkConfig, QuantizerSpec,
};
use crate::normal::{pdf, upper_tail, upper_tail_inv};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DetectionError {
    #[error("Fisher information is zero; the statistic cannot be normalized")]
    ZeroFisher,
    #[error("detector `{0}` has no sensors to work with in this network")]
    EmptySubset(String),
    #[error("received data does not match the roster: expected {expected} {what}, got {got}")]
    Mismatch { what: &'static str, expected: usize, got: usize },
    #[error("false-alarm probability must lie in (0, 1), got {0}")]
    Pfa(f64),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// `Q_j(0)` for the `j`-th bin.
pub fn bin_prob(level: u32, spec: &QuantizerSpec, sigma_n: f64) -> f64 {
    let (lo, hi) = spec.edges(level);
    upper_tail(lo / sigma_n) - upper_tail(hi / sigma_n)
}

/// `F_j(0)` for the `j`-th bin.
pub fn bin_score(level: u32, spec: &QuantizerSpec, sigma_n: f64) -> f64 {
    let (lo, hi) = spec.edges(level);
    sigma_n * sigma_n * (pdf(lo / sigma_n) - pdf(hi / sigma_n))
}

/// Codeword transition matrix of a `q`-bit BSC; entry `(i, j)` is the
/// probability of receiving level `i` when level `j` was sent.
pub fn bsc_kernel(q: u32, p_e: f64) -> Vec<Vec<f64>> {
    bsc_kernel_with(q, p_e, CodewordMapping::NaturalBinary)
}

/// [`bsc_kernel`] under an arbitrary level labelling.
pub fn bsc_kernel_with(q: u32, p_e: f64, mapping: CodewordMapping) -> Vec<Vec<f64>> {
    let n = 1u32 << q;
    (1..=n)
        .map(|i| {
            let ci = mapping.encode(i, q).expect("level in range");
            (1..=n)
                .map(|j| {
                    let cj = mapping.encode(j, q).expect("level in range");
                    let d = hamming_distance(ci, cj).expect("same length") as i32;
                    p_e.powi(d) * (1.0 - p_e).powi(q as i32 - d)
                })
                .collect()
        })
        .collect()
}

/// Per-sensor tables at θ = 0, precomputed once and shared read-only.
#[derive(Debug, Clone, PartialEq)]
pub struct LikelihoodKernels {
    pub sigma_n: f64,
    pub bin_probs: Vec<f64>,
    pub bin_scores: Vec<f64>,
    pub bsc_matrix: Vec<Vec<f64>>,
    /// `Σ_j G_ij Q_j`: probability of receiving level `i` under H0.
    pub received_probs: Vec<f64>,
    /// Score contribution of each received level (already divided by σ_n³).
    pub received_scores: Vec<f64>,
    /// Received levels with zero probability; their score is defined as 0.
    pub degenerate_levels: Vec<u32>,
    fisher: f64,
}

impl LikelihoodKernels {
    pub fn new(quantizer: &QuantizerSpec, channel: &ChannelSpec, sigma_n: f64) -> Self {
        let n = quantizer.levels();
        let bin_probs: Vec<f64> = (1..=n).map(|j| bin_prob(j, quantizer, sigma_n)).collect();
        let bin_scores: Vec<f64> = (1..=n).map(|j| bin_score(j, quantizer, sigma_n)).collect();
        let bsc_matrix = bsc_kernel(quantizer.bits(), channel.crossover());
        Self::from_tables(sigma_n, bin_probs, bin_scores, bsc_matrix)
    }

    /// Builds the kernels from already-tabulated `Q`, `F` and `G`. Used by the
    /// quantizer design loop, which reuses one `G` for many threshold vectors.
    pub(crate) fn from_tables(
        sigma_n: f64,
        bin_probs: Vec<f64>,
        bin_scores: Vec<f64>,
        bsc_matrix: Vec<Vec<f64>>,
    ) -> Self {
        let s3 = sigma_n.powi(3);
        let mut received_probs = Vec::with_capacity(bin_probs.len());
        let mut received_scores = Vec::with_capacity(bin_probs.len());
        let mut degenerate_levels = Vec::new();
        let mut fisher = 0.0;
        for (i, row) in bsc_matrix.iter().enumerate() {
            let num: f64 = row.iter().zip(&bin_scores).map(|(g, f)| g * f).sum();
            let den: f64 = row.iter().zip(&bin_probs).map(|(g, q)| g * q).sum();
            received_probs.push(den);
            if den > 0.0 {
                received_scores.push(num / (den * s3));
                fisher += num * num / (den * s3 * s3);
            } else {
                received_scores.push(0.0);
                degenerate_levels.push(i as u32 + 1);
            }
        }
        Self { sigma_n, bin_probs, bin_scores, bsc_matrix, received_probs, received_scores, degenerate_levels, fisher }
    }

    /// This sensor's contribution to FI(0).
    pub fn fisher_information(&self) -> f64 {
        self.fisher
    }

    pub fn score(&self, received: Codeword) -> f64 {
        self.received_scores[received.value() as usize]
    }
}

/// Fisher information contribution of one quantized sensor at θ = 0.
pub fn quantized_fisher(quantizer: &QuantizerSpec, channel: &ChannelSpec, sigma_n: f64) -> f64 {
    LikelihoodKernels::new(quantizer, channel, sigma_n).fisher_information()
}

/// What the fusion center receives in one snapshot.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReceivedData {
    pub codewords: Vec<Codeword>,
    pub analog: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorOutput {
    /// `score(0) / sqrt(FI(0))`.
    pub statistic: f64,
    pub fisher_info: f64,
    /// `θ·sqrt(FI(0))`.
    pub noncentrality: f64,
}

/// LMPT fusion rule for a fixed roster, with its kernels precomputed.
#[derive(Debug, Clone)]
pub struct HybridDetector {
    theta: f64,
    sigma_n2: f64,
    kernels: Vec<LikelihoodKernels>,
    sensor_kernel: Vec<usize>,
    full_precision: usize,
    fisher: f64,
}

impl HybridDetector {
    pub fn new(config: &NetworkConfig) -> Self {
        let sigma_n = config.params.sigma_n();
        let mut kernels: Vec<LikelihoodKernels> = Vec::new();
        let mut keys: Vec<(&QuantizerSpec, &ChannelSpec)> = Vec::new();
        let mut sensor_kernel = Vec::with_capacity(config.quantized_count());
        for (q, c) in config.quantized() {
            let idx = match keys.iter().position(|&(kq, kc)| kq == q && kc == c) {
                Some(idx) => idx,
                None => {
                    keys.push((q, c));
                    kernels.push(LikelihoodKernels::new(q, c, sigma_n));
                    kernels.len() - 1
                }
            };
            sensor_kernel.push(idx);
        }
        let full_precision = config.full_precision_count();
        let quantized: f64 = sensor_kernel.iter().map(|&k| kernels[k].fisher_information()).sum();
        let fisher = quantized + full_precision as f64 / config.params.sigma_n2;
        Self {
            theta: config.params.theta,
            sigma_n2: config.params.sigma_n2,
            kernels,
            sensor_kernel,
            full_precision,
            fisher,
        }
    }

    pub fn fisher_information(&self) -> f64 {
        self.fisher
    }

    pub fn noncentrality(&self) -> f64 {
        self.theta * self.fisher.sqrt()
    }

    pub fn quantized_count(&self) -> usize {
        self.sensor_kernel.len()
    }

    pub fn full_precision_count(&self) -> usize {
        self.full_precision
    }

    /// Kernels of the `m`-th quantized sensor.
    pub fn kernels(&self, m: usize) -> &LikelihoodKernels {
        &self.kernels[self.sensor_kernel[m]]
    }

    fn check(&self, data: &ReceivedData) -> Result<(), DetectionError> {
        if data.codewords.len() != self.sensor_kernel.len() {
            return Err(DetectionError::Mismatch {
                what: "codewords",
                expected: self.sensor_kernel.len(),
                got: data.codewords.len(),
            });
        }
        if data.analog.len() != self.full_precision {
            return Err(DetectionError::Mismatch {
                what: "analog samples",
                expected: self.full_precision,
                got: data.analog.len(),
            });
        }
        Ok(())
    }

    /// Unnormalized score `∂ ln p / ∂θ` at θ = 0.
    pub fn score(&self, data: &ReceivedData) -> Result<f64, DetectionError> {
        self.check(data)?;
        Ok(self.score_unchecked(&data.codewords, &data.analog))
    }

    pub(crate) fn score_unchecked(&self, codewords: &[Codeword], analog: &[f64]) -> f64 {
        let quantized: f64 = codewords.iter().zip(&self.sensor_kernel).map(|(&c, &k)| self.kernels[k].score(c)).sum();
        let analog: f64 = analog.iter().sum::<f64>() / self.sigma_n2;
        quantized + analog
    }

    pub fn evaluate(&self, data: &ReceivedData) -> Result<DetectorOutput, DetectionError> {
        if self.fisher <= 0.0 {
            return Err(DetectionError::ZeroFisher);
        }
        let score = self.score(data)?;
        Ok(DetectorOutput {
            statistic: score / self.fisher.sqrt(),
            fisher_info: self.fisher,
            noncentrality: self.noncentrality(),
        })
    }
}

/// FI(0) of the whole hybrid network.
pub fn fisher_information(config: &NetworkConfig) -> f64 {
    HybridDetector::new(config).fisher_information()
}

pub fn lmpt_statistic(config: &NetworkConfig, data: &ReceivedData) -> Result<DetectorOutput, DetectionError> {
    HybridDetector::new(config).evaluate(data)
}

/// Threshold `η` with `Φ(η) = p_fa` under the N(0, 1) null.
pub fn threshold_for_pfa(p_fa: f64) -> Result<f64, DetectionError> {
    if p_fa > 0.0 && p_fa < 1.0 {
        Ok(upper_tail_inv(p_fa))
    } else {
        Err(DetectionError::Pfa(p_fa))
    }
}

/// `P(N(λ, 1) > η)`.
pub fn theoretical_pd(lambda: f64, eta: f64) -> f64 {
    upper_tail(eta - lambda)
}

/// Baseline fusion rules compared against the hybrid detector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineKind {
    /// Sample mean of uncorrupted analog observations from every sensor.
    Clairvoyant,
    /// LMPT over the quantized sensors alone.
    QuantizedOnly,
    /// LMPT over the full-precision sensors alone.
    FpOnly,
    /// Bin-centroid reconstruction of received levels averaged with the analog samples.
    ReconstructionHybrid,
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BaselineKind::Clairvoyant => "clairvoyant",
            BaselineKind::QuantizedOnly => "quantized-only",
            BaselineKind::FpOnly => "fp-only",
            BaselineKind::ReconstructionHybrid => "reconstruction-hybrid",
        })
    }
}

impl FromStr for BaselineKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "clairvoyant" => Ok(Self::Clairvoyant),
            "quantized-only" => Ok(Self::QuantizedOnly),
            "fp-only" => Ok(Self::FpOnly),
            "reconstruction-hybrid" => Ok(Self::ReconstructionHybrid),
            other => Err(format!("unknown baseline `{other}`")),
        }
    }
}

/// `Σ y_m / (σ_n √M)`.
pub fn clairvoyant_statistic(raw: &[f64], sigma_n: f64) -> f64 {
    raw.iter().sum::<f64>() / (sigma_n * (raw.len() as f64).sqrt())
}

/// Reconstruction-and-average fusion rule.
///
/// Each received level is replaced by its H0 bin centroid
/// `E[y | level] = F_j / (σ_n Q_j)` without correcting for channel errors,
/// then all reconstructed and analog values are summed. The sum is centered
/// and scaled by its exact H0 mean and variance, so the statistic has zero
/// mean and unit variance under H0 for any channel.
#[derive(Debug, Clone)]
pub struct ReconstructionDetector {
    centroids: Vec<Vec<f64>>,
    sensor_table: Vec<usize>,
    offset: f64,
    scale: f64,
    full_precision: usize,
}

impl ReconstructionDetector {
    pub fn new(config: &NetworkConfig) -> Result<Self, DetectionError> {
        if config.total() == 0 {
            return Err(DetectionError::EmptySubset(BaselineKind::ReconstructionHybrid.to_string()));
        }
        let sigma_n = config.params.sigma_n();
        let mut tables: Vec<(LikelihoodKernels, Vec<f64>, f64, f64)> = Vec::new();
        let mut keys: Vec<(&QuantizerSpec, &ChannelSpec)> = Vec::new();
        let mut sensor_table = Vec::new();
        for (q, c) in config.quantized() {
            let idx = match keys.iter().position(|&(kq, kc)| kq == q && kc == c) {
                Some(idx) => idx,
                None => {
                    let k = LikelihoodKernels::new(q, c, sigma_n);
                    let centroids: Vec<f64> = (1..=q.levels())
                        .map(|j| {
                            let i = (j - 1) as usize;
                            if k.bin_probs[i] > 0.0 {
                                k.bin_scores[i] / (sigma_n * k.bin_probs[i])
                            } else {
                                let (lo, hi) = q.edges(j);
                                if lo.is_finite() {
                                    lo
                                } else {
                                    hi
                                }
                            }
                        })
                        .collect();
                    let mean: f64 = k.received_probs.iter().zip(&centroids).map(|(p, y)| p * y).sum();
                    let second: f64 = k.received_probs.iter().zip(&centroids).map(|(p, y)| p * y * y).sum();
                    keys.push((q, c));
                    tables.push((k, centroids, mean, (second - mean * mean).max(0.0)));
                    tables.len() - 1
                }
            };
            sensor_table.push(idx);
        }
        let full_precision = config.full_precision_count();
        let offset: f64 = sensor_table.iter().map(|&t| tables[t].2).sum();
        let variance: f64 =
            sensor_table.iter().map(|&t| tables[t].3).sum::<f64>() + full_precision as f64 * config.params.sigma_n2;
        if variance <= 0.0 {
            return Err(DetectionError::ZeroFisher);
        }
        Ok(Self {
            centroids: tables.into_iter().map(|t| t.1).collect(),
            sensor_table,
            offset,
            scale: variance.sqrt(),
            full_precision,
        })
    }

    /// H0 centroid used for `level` at the `m`-th quantized sensor.
    pub fn centroid(&self, m: usize, level: u32) -> f64 {
        self.centroids[self.sensor_table[m]][(level - 1) as usize]
    }

    pub fn statistic(&self, data: &ReceivedData) -> Result<f64, DetectionError> {
        if data.codewords.len() != self.sensor_table.len() {
            return Err(DetectionError::Mismatch {
                what: "codewords",
                expected: self.sensor_table.len(),
                got: data.codewords.len(),
            });
        }
        if data.analog.len() != self.full_precision {
            return Err(DetectionError::Mismatch {
                what: "analog samples",
                expected: self.full_precision,
                got: data.analog.len(),
            });
        }
        Ok(self.statistic_unchecked(&data.codewords, &data.analog))
    }

    pub(crate) fn statistic_unchecked(&self, codewords: &[Codeword], analog: &[f64]) -> f64 {
        let rec: f64 =
            codewords.iter().zip(&self.sensor_table).map(|(c, &t)| self.centroids[t][c.value() as usize]).sum();
        (rec + analog.iter().sum::<f64>() - self.offset) / self.scale
    }
}

/// One-shot evaluation of a baseline fusion rule. `raw` holds the
/// uncorrupted per-sensor observations (only the clairvoyant rule reads it).
pub fn baseline_statistic(
    kind: BaselineKind,
    config: &NetworkConfig,
    raw: &[f64],
    data: &ReceivedData,
) -> Result<f64, DetectionError> {
    match kind {
        BaselineKind::Clairvoyant => {
            if raw.is_empty() {
                return Err(DetectionError::EmptySubset(kind.to_string()));
            }
            if raw.len() != config.total() {
                return Err(DetectionError::Mismatch {
                    what: "raw observations",
                    expected: config.total(),
                    got: raw.len(),
                });
            }
            Ok(clairvoyant_statistic(raw, config.params.sigma_n()))
        }
        BaselineKind::QuantizedOnly => {
            let sub = config.quantized_subnetwork();
            if sub.total() == 0 {
                return Err(DetectionError::EmptySubset(kind.to_string()));
            }
            let data = ReceivedData { codewords: data.codewords.clone(), analog: Vec::new() };
            Ok(lmpt_statistic(&sub, &data)?.statistic)
        }
        BaselineKind::FpOnly => {
            let sub = config.full_precision_subnetwork();
            if sub.total() == 0 {
                return Err(DetectionError::EmptySubset(kind.to_string()));
            }
            let data = ReceivedData { codewords: Vec::new(), analog: data.analog.clone() };
            Ok(lmpt_statistic(&sub, &data)?.statistic)
        }
        BaselineKind::ReconstructionHybrid => ReconstructionDetector::new(config)?.statistic(data),
    }
}
