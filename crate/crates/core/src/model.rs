//! Observation model, multi-bit quantizers, codewords and the binary
//! symmetric reporting channel.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

/// Largest quantizer resolution supported (codewords are packed in a `u32`).
pub const MAX_BITS: u32 = 16;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("noise variance must be positive and finite, got {0}")]
    NoiseVariance(f64),
    #[error("fading variance must be non-negative and finite, got {0}")]
    FadingVariance(f64),
    #[error("signal amplitude must be non-negative and finite, got {0}")]
    Amplitude(f64),
    #[error("quantizer bits must be in 1..={MAX_BITS}, got {0}")]
    Bits(u32),
    #[error("a {bits}-bit quantizer needs {expected} thresholds, got {got}")]
    ThresholdCount { bits: u32, expected: usize, got: usize },
    #[error("thresholds must be finite and strictly increasing")]
    ThresholdOrder,
    #[error("crossover probability must lie in [0, 0.5], got {0}")]
    Crossover(f64),
    #[error("level {level} out of range 1..={max}")]
    Level { level: u32, max: u32 },
    #[error("codeword lengths differ ({0} vs {1})")]
    LengthMismatch(u32, u32),
    #[error("quantized sensors must precede full-precision sensors in the roster")]
    RosterOrder,
    #[error("full-precision bit width must be positive")]
    BitWidth,
}

/// Hypothesis under which observations are generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Hypothesis {
    H0,
    H1,
}

/// Signal amplitude and noise variances of the observation model
/// `y = h·θ + w`, `h ~ N(1, σ_h²)`, `w ~ N(0, σ_n²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalParams {
    pub theta: f64,
    pub sigma_n2: f64,
    pub sigma_h2: f64,
}

impl SignalParams {
    pub fn new(theta: f64, sigma_n2: f64, sigma_h2: f64) -> Result<Self, ModelError> {
        let p = Self { theta, sigma_n2, sigma_h2 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.sigma_n2.is_finite() && self.sigma_n2 > 0.0) {
            return Err(ModelError::NoiseVariance(self.sigma_n2));
        }
        if !(self.sigma_h2.is_finite() && self.sigma_h2 >= 0.0) {
            return Err(ModelError::FadingVariance(self.sigma_h2));
        }
        if !(self.theta.is_finite() && self.theta >= 0.0) {
            return Err(ModelError::Amplitude(self.theta));
        }
        Ok(())
    }

    pub fn sigma_n(&self) -> f64 {
        self.sigma_n2.sqrt()
    }

    /// Observation variance under H1, `θ²σ_h² + σ_n²`.
    pub fn h1_variance(&self) -> f64 {
        self.theta * self.theta * self.sigma_h2 + self.sigma_n2
    }
}

/// A `q`-bit quantizer with `2^q - 1` strictly increasing thresholds.
///
/// Bin `i` (1-based) is `[τ_{i-1}, τ_i)` with `τ_0 = -∞`, `τ_{2^q} = +∞`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizerSpec {
    bits: u32,
    thresholds: Vec<f64>,
}

impl QuantizerSpec {
    pub fn new(bits: u32, thresholds: Vec<f64>) -> Result<Self, ModelError> {
        check_bits(bits)?;
        let expected = (1usize << bits) - 1;
        if thresholds.len() != expected {
            return Err(ModelError::ThresholdCount { bits, expected, got: thresholds.len() });
        }
        if !strictly_increasing(&thresholds) {
            return Err(ModelError::ThresholdOrder);
        }
        Ok(Self { bits, thresholds })
    }

    /// Evenly spaced thresholds on `[-span, span]`.
    pub fn uniform(bits: u32, span: f64) -> Result<Self, ModelError> {
        check_bits(bits)?;
        let n = (1usize << bits) - 1;
        let thresholds =
            if n == 1 { vec![0.0] } else { (0..n).map(|i| -span + 2.0 * span * i as f64 / (n - 1) as f64).collect() };
        Self::new(bits, thresholds)
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn levels(&self) -> u32 {
        1 << self.bits
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    /// Lower and upper edge of bin `level` (1-based), sentinels included.
    pub fn edges(&self, level: u32) -> (f64, f64) {
        let i = level as usize;
        let lo = if i == 1 { f64::NEG_INFINITY } else { self.thresholds[i - 2] };
        let hi = if i == self.levels() as usize { f64::INFINITY } else { self.thresholds[i - 1] };
        (lo, hi)
    }
}

fn check_bits(bits: u32) -> Result<(), ModelError> {
    if (1..=MAX_BITS).contains(&bits) {
        Ok(())
    } else {
        Err(ModelError::Bits(bits))
    }
}

pub(crate) fn strictly_increasing(xs: &[f64]) -> bool {
    xs.iter().all(|x| x.is_finite()) && xs.windows(2).all(|w| w[0] < w[1])
}

/// Binary symmetric channel with crossover probability `P_e ∈ [0, 0.5]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    crossover: f64,
}

impl ChannelSpec {
    pub fn new(crossover: f64) -> Result<Self, ModelError> {
        if (0.0..=0.5).contains(&crossover) {
            Ok(Self { crossover })
        } else {
            Err(ModelError::Crossover(crossover))
        }
    }

    pub fn noiseless() -> Self {
        Self { crossover: 0.0 }
    }

    pub fn crossover(&self) -> f64 {
        self.crossover
    }
}

/// How one sensor reports to the fusion center. Full-precision links are
/// error-free.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SensorSpec {
    Quantized { quantizer: QuantizerSpec, channel: ChannelSpec },
    FullPrecision,
}

impl SensorSpec {
    pub fn is_quantized(&self) -> bool {
        matches!(self, SensorSpec::Quantized { .. })
    }
}

/// Network roster plus signal parameters. Quantized sensors come first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub params: SignalParams,
    sensors: Vec<SensorSpec>,
    pub l0: u32,
    pub budget_q: Option<u64>,
}

impl NetworkConfig {
    pub fn new(params: SignalParams, sensors: Vec<SensorSpec>, l0: u32) -> Result<Self, ModelError> {
        params.validate()?;
        if l0 == 0 {
            return Err(ModelError::BitWidth);
        }
        let first_fp = sensors.iter().position(|s| !s.is_quantized()).unwrap_or(sensors.len());
        if sensors[first_fp..].iter().any(SensorSpec::is_quantized) {
            return Err(ModelError::RosterOrder);
        }
        Ok(Self { params, sensors, l0, budget_q: None })
    }

    /// `count` identical quantized sensors followed by `full_precision` analog ones.
    pub fn homogeneous(
        params: SignalParams,
        quantizer: QuantizerSpec,
        channel: ChannelSpec,
        count: usize,
        full_precision: usize,
        l0: u32,
    ) -> Result<Self, ModelError> {
        let mut sensors = vec![SensorSpec::Quantized { quantizer, channel }; count];
        sensors.extend(std::iter::repeat_n(SensorSpec::FullPrecision, full_precision));
        Self::new(params, sensors, l0)
    }

    pub fn with_budget(mut self, q: u64) -> Self {
        self.budget_q = Some(q);
        self
    }

    pub fn sensors(&self) -> &[SensorSpec] {
        &self.sensors
    }

    pub fn total(&self) -> usize {
        self.sensors.len()
    }

    pub fn quantized_count(&self) -> usize {
        self.sensors.iter().filter(|s| s.is_quantized()).count()
    }

    pub fn full_precision_count(&self) -> usize {
        self.total() - self.quantized_count()
    }

    pub fn quantized(&self) -> impl Iterator<Item = (&QuantizerSpec, &ChannelSpec)> {
        self.sensors.iter().filter_map(|s| match s {
            SensorSpec::Quantized { quantizer, channel } => Some((quantizer, channel)),
            SensorSpec::FullPrecision => None,
        })
    }

    /// Bits sent per snapshot: `Σ q_m` plus `l0` per full-precision sensor.
    pub fn bits_per_snapshot(&self) -> u64 {
        let q: u64 = self.quantized().map(|(qz, _)| qz.bits() as u64).sum();
        q + self.l0 as u64 * self.full_precision_count() as u64
    }

    /// Same parameters, only the quantized sensors.
    pub fn quantized_subnetwork(&self) -> Self {
        let sensors = self.sensors.iter().filter(|s| s.is_quantized()).cloned().collect();
        Self { sensors, ..self.clone() }
    }

    /// Same parameters, only the full-precision sensors.
    pub fn full_precision_subnetwork(&self) -> Self {
        let sensors = self.sensors.iter().filter(|s| !s.is_quantized()).cloned().collect();
        Self { sensors, ..self.clone() }
    }
}

/// A `q`-bit codeword, most significant bit first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Codeword {
    value: u32,
    len: u32,
}

impl Codeword {
    pub fn new(value: u32, len: u32) -> Result<Self, ModelError> {
        check_bits(len)?;
        if value >> len != 0 {
            return Err(ModelError::Level { level: value + 1, max: 1 << len });
        }
        Ok(Self { value, len })
    }

    pub fn value(&self) -> u32 {
        self.value
    }

    pub fn len(&self) -> u32 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Bits, most significant first.
    pub fn bits(&self) -> Vec<bool> {
        (0..self.len).rev().map(|k| (self.value >> k) & 1 == 1).collect()
    }

    /// The quantization level this codeword encodes.
    pub fn level(&self) -> u32 {
        self.value + 1
    }
}

impl fmt::Display for Codeword {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.bits() {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// Natural binary code of `level - 1` on `q` bits.
pub fn level_to_codeword(level: u32, q: u32) -> Result<Codeword, ModelError> {
    check_bits(q)?;
    let max = 1u32 << q;
    if !(1..=max).contains(&level) {
        return Err(ModelError::Level { level, max });
    }
    Ok(Codeword { value: level - 1, len: q })
}

/// How quantization levels are labelled with bit patterns.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CodewordMapping {
    #[default]
    NaturalBinary,
    /// Reflected binary code: neighbouring levels differ in one bit.
    Gray,
}

impl CodewordMapping {
    pub fn encode(self, level: u32, q: u32) -> Result<Codeword, ModelError> {
        let natural = level_to_codeword(level, q)?;
        Ok(match self {
            CodewordMapping::NaturalBinary => natural,
            CodewordMapping::Gray => Codeword { value: natural.value ^ (natural.value >> 1), len: q },
        })
    }
}

pub fn hamming_distance(a: Codeword, b: Codeword) -> Result<u32, ModelError> {
    if a.len != b.len {
        return Err(ModelError::LengthMismatch(a.len, b.len));
    }
    Ok((a.value ^ b.value).count_ones())
}

/// Level `i` such that `τ_{i-1} <= y < τ_i`.
pub fn quantize(y: f64, spec: &QuantizerSpec) -> u32 {
    spec.thresholds.partition_point(|&t| t <= y) as u32 + 1
}

/// Draws one observation with an explicit generator.
pub fn draw_observation<R: Rng + ?Sized>(params: &SignalParams, hypothesis: Hypothesis, rng: &mut R) -> f64 {
    let w: f64 = rng.sample(StandardNormal);
    let noise = params.sigma_n() * w;
    match hypothesis {
        Hypothesis::H0 => noise,
        Hypothesis::H1 => {
            let z: f64 = rng.sample(StandardNormal);
            let h = 1.0 + params.sigma_h2.sqrt() * z;
            h * params.theta + noise
        }
    }
}

/// `count` independent observations, reproducible from `seed`.
pub fn simulate_observations(params: &SignalParams, hypothesis: Hypothesis, count: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| draw_observation(params, hypothesis, &mut rng)).collect()
}

/// Flips each bit independently with the channel's crossover probability.
pub fn transmit<R: Rng + ?Sized>(code: Codeword, channel: &ChannelSpec, rng: &mut R) -> Codeword {
    let p = channel.crossover;
    if p == 0.0 {
        return code;
    }
    let mut mask = 0u32;
    for k in 0..code.len {
        if rng.random::<f64>() < p {
            mask |= 1 << k;
        }
    }
    Codeword { value: code.value ^ mask, len: code.len }
}

pub fn bsc_transmit(code: Codeword, channel: &ChannelSpec, seed: u64) -> Codeword {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    transmit(code, channel, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cw(s: &str) -> Codeword {
        Codeword::new(u32::from_str_radix(s, 2).unwrap(), s.len() as u32).unwrap()
    }

    #[test]
    fn codeword_mapping() {
        assert_eq!(level_to_codeword(1, 2).unwrap().to_string(), "00");
        assert_eq!(level_to_codeword(4, 2).unwrap().to_string(), "11");
        assert_eq!(level_to_codeword(3, 3).unwrap().to_string(), "010");
        assert!(level_to_codeword(0, 2).is_err());
        assert!(level_to_codeword(5, 2).is_err());
    }

    #[test]
    fn gray_mapping() {
        let g = |l| CodewordMapping::Gray.encode(l, 2).unwrap().to_string();
        assert_eq!([g(1), g(2), g(3), g(4)], ["00", "01", "11", "10"].map(String::from));
        assert_eq!(CodewordMapping::NaturalBinary.encode(3, 2).unwrap(), level_to_codeword(3, 2).unwrap());
        for l in 1..8 {
            let a = CodewordMapping::Gray.encode(l, 3).unwrap();
            let b = CodewordMapping::Gray.encode(l + 1, 3).unwrap();
            assert_eq!(hamming_distance(a, b).unwrap(), 1);
        }
    }

    #[test]
    fn hamming() {
        assert_eq!(hamming_distance(cw("00"), cw("00")).unwrap(), 0);
        assert_eq!(hamming_distance(cw("00"), cw("11")).unwrap(), 2);
        assert_eq!(hamming_distance(cw("010"), cw("111")).unwrap(), 2);
        assert!(matches!(hamming_distance(cw("01"), cw("010")), Err(ModelError::LengthMismatch(2, 3))));
    }

    #[test]
    fn quantize_bins() {
        let q = QuantizerSpec::new(2, vec![-1.0, 0.0, 1.0]).unwrap();
        assert_eq!(quantize(0.5, &q), 3);
        assert_eq!(quantize(-5.0, &q), 1);
        assert_eq!(quantize(1.0, &q), 4);
        assert_eq!(quantize(-1.0, &q), 2);
        assert_eq!(quantize(f64::INFINITY, &q), 4);
    }

    #[test]
    fn quantizer_validation() {
        assert!(matches!(QuantizerSpec::new(2, vec![0.0, 1.0]), Err(ModelError::ThresholdCount { .. })));
        assert_eq!(QuantizerSpec::new(2, vec![0.0, 0.0, 1.0]), Err(ModelError::ThresholdOrder));
        assert_eq!(QuantizerSpec::new(0, vec![]), Err(ModelError::Bits(0)));
        assert!(ChannelSpec::new(0.51).is_err());
        assert!(ChannelSpec::new(-0.1).is_err());
        assert!(SignalParams::new(0.25, 0.0, 0.5).is_err());
    }

    #[test]
    fn roster_order_enforced() {
        let p = SignalParams::new(0.25, 1.0, 0.5).unwrap();
        let q = SensorSpec::Quantized {
            quantizer: QuantizerSpec::uniform(1, 0.0).unwrap(),
            channel: ChannelSpec::noiseless(),
        };
        assert_eq!(NetworkConfig::new(p, vec![SensorSpec::FullPrecision, q.clone()], 32), Err(ModelError::RosterOrder));
        let net = NetworkConfig::new(p, vec![q, SensorSpec::FullPrecision], 32).unwrap();
        assert_eq!(net.quantized_count(), 1);
        assert_eq!(net.full_precision_count(), 1);
        assert_eq!(net.bits_per_snapshot(), 33);
    }

    #[test]
    fn observation_moments() {
        let p = SignalParams::new(0.25, 1.0, 0.5).unwrap();
        let n = 1_000_000;
        let h0 = simulate_observations(&p, Hypothesis::H0, n, 11);
        let mean0 = h0.iter().sum::<f64>() / n as f64;
        assert!(mean0.abs() < 0.004, "{mean0}");

        let h1 = simulate_observations(&p, Hypothesis::H1, n, 12);
        let mean1 = h1.iter().sum::<f64>() / n as f64;
        let var1 = h1.iter().map(|y| (y - mean1).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((mean1 - 0.25).abs() < 0.004, "{mean1}");
        assert!((var1 / 1.03125 - 1.0).abs() < 0.01, "{var1}");
    }

    #[test]
    fn observations_deterministic() {
        let p = SignalParams::new(0.25, 1.0, 0.5).unwrap();
        assert_eq!(simulate_observations(&p, Hypothesis::H1, 64, 5), simulate_observations(&p, Hypothesis::H1, 64, 5));
        assert_ne!(simulate_observations(&p, Hypothesis::H1, 64, 5), simulate_observations(&p, Hypothesis::H1, 64, 6));
    }

    #[test]
    fn bsc_rates() {
        let clean = ChannelSpec::noiseless();
        assert_eq!(bsc_transmit(cw("1011"), &clean, 3), cw("1011"));

        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let ch = ChannelSpec::new(0.2).unwrap();
        let trials = 1_000_000;
        let kept = (0..trials).filter(|_| transmit(cw("11"), &ch, &mut rng) == cw("11")).count();
        assert!((kept as f64 / trials as f64 - 0.64).abs() < 0.002);

        let half = ChannelSpec::new(0.5).unwrap();
        let ones = (0..trials).filter(|_| transmit(cw("0"), &half, &mut rng) == cw("1")).count();
        assert!((ones as f64 / trials as f64 - 0.5).abs() < 0.002);
    }

    proptest! {
        #[test]
        fn bins_partition_the_line(mut t in proptest::collection::vec(-10.0f64..10.0, 7), y in -20.0f64..20.0) {
            t.sort_by(|a, b| a.partial_cmp(b).unwrap());
            prop_assume!(strictly_increasing(&t));
            let q = QuantizerSpec::new(3, t).unwrap();
            let level = quantize(y, &q);
            let hits = (1..=q.levels()).filter(|&l| {
                let (lo, hi) = q.edges(l);
                lo <= y && y < hi
            }).count();
            prop_assert_eq!(hits, 1);
            let (lo, hi) = q.edges(level);
            prop_assert!(lo <= y && y < hi);
        }

        #[test]
        fn codeword_bijection(q in 1u32..=8) {
            let mut seen = std::collections::HashSet::new();
            for level in 1..=(1u32 << q) {
                let c = level_to_codeword(level, q).unwrap();
                prop_assert_eq!(c.level(), level);
                prop_assert!(seen.insert(c.value()));
            }
        }
    }
}
