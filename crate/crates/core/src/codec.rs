//! Latent text codec and differentially private rewriting.
//!
//! A text is encoded as the mean of fixed random token embeddings plus one
//! slot holding the token count. Rewriting clips that vector, adds noise
//! calibrated to (ε, δ) for sensitivity `2C`, and decodes the noisy vector
//! back into tokens with greedy matching pursuit. The decoder adds a unigram
//! log-frequency prior to every candidate's score, so rare words are the first
//! to be lost once noise blurs the latent.
//!
//! Everything after the noise draw is post-processing of a single noisy
//! release, so the rewritten text inherits its (ε, δ) guarantee.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::corpus::Corpus;
use crate::seed::{self, Part};

pub const DEFAULT_DELTA: f64 = 1e-4;
pub const DEFAULT_CLIP_BOUND: f64 = 1.0;
pub const UNKNOWN_TOKEN: &str = "<UNK>";
const CODEC_FORMAT_VERSION: u32 = 1;

/// Largest acceptable `|condition(σ) − δ|` after bisection.
pub const CALIBRATION_TOLERANCE: f64 = 1e-10;

#[derive(Debug, thiserror::Error)]
pub enum CodecError {
    #[error("epsilon must be positive, got {0}")]
    NonPositiveEpsilon(f64),
    #[error("delta must lie in (0, 1), got {0}")]
    InvalidDelta(f64),
    #[error("clip bound must be positive and finite, got {0}")]
    InvalidClipBound(f64),
    #[error("sensitivity must be positive and finite, got {0}")]
    InvalidSensitivity(f64),
    #[error("noise calibration did not converge (eps={epsilon}, delta={delta})")]
    CalibrationDidNotConverge { epsilon: f64, delta: f64 },
    #[error("pretraining corpus is empty")]
    EmptyPretrain,
    #[error("latent dimension must be at least 2, got {0}")]
    InvalidDimension(usize),
    #[error("invalid codec setting: {0}")]
    InvalidConfig(String),
    #[error("cannot encode an empty token sequence")]
    EmptyInput,
    #[error("unsupported codec file version {0}")]
    UnsupportedVersion(u32),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("codec file: {0}")]
    Format(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseFamily {
    Gaussian,
    Laplace,
}

impl FromStr for NoiseFamily {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" => Ok(NoiseFamily::Gaussian),
            "laplace" => Ok(NoiseFamily::Laplace),
            other => Err(format!("unknown noise family `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Norm {
    L1,
    L2,
}

impl Norm {
    pub fn of(self, v: &[f64]) -> f64 {
        match self {
            Norm::L1 => v.iter().map(|x| x.abs()).sum(),
            Norm::L2 => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
        }
    }
}

/// Privacy contract of one latent release.
///
/// `epsilon` may be `f64::INFINITY`, which disables noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyParams {
    pub epsilon: f64,
    pub delta: f64,
    pub clip_bound: f64,
    pub noise: NoiseFamily,
}

impl PrivacyParams {
    pub fn new(epsilon: f64, delta: f64, clip_bound: f64, noise: NoiseFamily) -> Result<Self, CodecError> {
        let p = PrivacyParams { epsilon, delta, clip_bound, noise };
        p.validate()?;
        Ok(p)
    }

    /// Gaussian mechanism with δ = 1e-4 and C = 1.
    pub fn gaussian(epsilon: f64) -> Result<Self, CodecError> {
        Self::new(epsilon, DEFAULT_DELTA, DEFAULT_CLIP_BOUND, NoiseFamily::Gaussian)
    }

    pub fn validate(&self) -> Result<(), CodecError> {
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return Err(CodecError::NonPositiveEpsilon(self.epsilon));
        }
        let delta_ok = self.delta > 0.0 && self.delta < 1.0;
        if !delta_ok && (self.noise == NoiseFamily::Gaussian || self.delta != 0.0) {
            return Err(CodecError::InvalidDelta(self.delta));
        }
        if !(self.clip_bound > 0.0 && self.clip_bound.is_finite()) {
            return Err(CodecError::InvalidClipBound(self.clip_bound));
        }
        Ok(())
    }

    /// Clipping norm matched to the noise family.
    pub fn norm(&self) -> Norm {
        match self.noise {
            NoiseFamily::Gaussian => Norm::L2,
            NoiseFamily::Laplace => Norm::L1,
        }
    }

    /// Distance between any two clipped latents.
    pub fn sensitivity(&self) -> f64 {
        2.0 * self.clip_bound
    }

    /// Total ε spent when the same point is released `k` times.
    pub fn composed_epsilon(&self, k: usize) -> f64 {
        self.epsilon * k as f64
    }
}

/// `ln Φ(x)` for the standard normal CDF, accurate far into the lower tail.
pub fn log_normal_cdf(x: f64) -> f64 {
    if x > 5.0 {
        (-0.5 * erfc(x / std::f64::consts::SQRT_2)).ln_1p()
    } else if x > -20.0 {
        (0.5 * erfc(-x / std::f64::consts::SQRT_2)).ln()
    } else {
        // Asymptotic series Φ(x) = φ(x)/|x| · Σ (-1)^k (2k-1)!! / x^{2k}.
        let x2 = x * x;
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..8 {
            term *= -((2 * k - 1) as f64) / x2;
            sum += term;
        }
        -0.5 * x2 - (-x).ln() - 0.5 * (2.0 * std::f64::consts::PI).ln() + sum.ln()
    }
}

/// δ achieved by Gaussian noise of scale `sigma_over_sensitivity · Δ`:
/// `Φ(Δ/2σ − εσ/Δ) − e^ε Φ(−Δ/2σ − εσ/Δ)`.
pub fn analytic_gaussian_delta(epsilon: f64, sigma_over_sensitivity: f64) -> f64 {
    let s = sigma_over_sensitivity;
    let a = 0.5 / s - epsilon * s;
    let b = -0.5 / s - epsilon * s;
    log_normal_cdf(a).exp() - (epsilon + log_normal_cdf(b)).exp()
}

/// Noise scale for one release: σ for Gaussian, b for Laplace.
///
/// Gaussian noise is calibrated with the analytic Gaussian mechanism: σ/Δ is
/// found by bisection so that [`analytic_gaussian_delta`] equals δ. The
/// returned σ sits on the private side of the root. Infinite ε gives 0.
pub fn calibrate_noise(params: &PrivacyParams, sensitivity: f64) -> Result<f64, CodecError> {
    params.validate()?;
    if !(sensitivity > 0.0 && sensitivity.is_finite()) {
        return Err(CodecError::InvalidSensitivity(sensitivity));
    }
    if params.epsilon.is_infinite() {
        return Ok(0.0);
    }
    match params.noise {
        NoiseFamily::Laplace => Ok(sensitivity / params.epsilon),
        NoiseFamily::Gaussian => Ok(gaussian_unit_scale(params.epsilon, params.delta)? * sensitivity),
    }
}

fn gaussian_unit_scale(epsilon: f64, delta: f64) -> Result<f64, CodecError> {
    let fail = || CodecError::CalibrationDidNotConverge { epsilon, delta };
    let excess = |s: f64| analytic_gaussian_delta(epsilon, s) - delta;

    let (mut lo, mut hi) = (1.0_f64, 1.0_f64);
    for _ in 0..2100 {
        if excess(lo) > 0.0 {
            break;
        }
        lo *= 0.5;
    }
    for _ in 0..2100 {
        if excess(hi) <= 0.0 {
            break;
        }
        hi *= 2.0;
    }
    if !(excess(lo) > 0.0 && excess(hi) <= 0.0) {
        return Err(fail());
    }
    for _ in 0..4000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if excess(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let residual = excess(hi);
    if residual.is_finite() && residual.abs() <= CALIBRATION_TOLERANCE {
        Ok(hi)
    } else {
        Err(fail())
    }
}

/// Fixed-length text representation: content slots then one length slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentVector {
    pub values: Vec<f64>,
}

impl LatentVector {
    pub fn content(&self) -> &[f64] {
        &self.values[..self.values.len() - 1]
    }

    pub fn length_slot(&self) -> f64 {
        self.values[self.values.len() - 1]
    }
}

/// Rescales `z` onto the `norm`-ball of radius `c`; a zero vector is returned as is.
pub fn clip_latent(z: &LatentVector, c: f64, norm: Norm) -> LatentVector {
    let n = norm.of(&z.values);
    if n == 0.0 || n <= c {
        return z.clone();
    }
    let factor = c / n;
    LatentVector { values: z.values.iter().map(|v| v * factor).collect() }
}

/// Codec hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CodecConfig {
    /// Latent size including the length slot.
    pub dim: usize,
    /// Weight λ of the log-frequency prior in the decoder.
    pub prior_weight: f64,
    pub max_len: usize,
    pub length_scale: f64,
}

impl Default for CodecConfig {
    fn default() -> Self {
        CodecConfig { dim: 17, prior_weight: 0.05, max_len: 30, length_scale: 30.0 }
    }
}

impl CodecConfig {
    pub fn validate(&self) -> Result<(), CodecError> {
        if self.dim < 2 {
            return Err(CodecError::InvalidDimension(self.dim));
        }
        if self.max_len == 0 {
            return Err(CodecError::InvalidConfig("max_len must be at least 1".into()));
        }
        if !(self.length_scale > 0.0 && self.length_scale.is_finite()) {
            return Err(CodecError::InvalidConfig("length_scale must be positive".into()));
        }
        if !(self.prior_weight >= 0.0 && self.prior_weight.is_finite()) {
            return Err(CodecError::InvalidConfig("prior_weight must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct CodecFile {
    format_version: u32,
    dim: usize,
    fit_seed: u64,
    length_scale: f64,
    prior_weight: f64,
    max_len: usize,
    vocabulary: Vec<String>,
    unigram_freq: Vec<u64>,
}

/// Pretrained codec state. Immutable after fitting.
#[derive(Debug, Clone, PartialEq)]
pub struct Codec {
    config: CodecConfig,
    fit_seed: u64,
    vocabulary: Vec<String>,
    unigram_freq: Vec<u64>,
    /// Row-major `vocabulary.len() × (dim − 1)`.
    embeddings: Vec<f64>,
    unknown: Vec<f64>,
    log_prior: Vec<f64>,
    index: HashMap<String, usize>,
}

fn token_embedding(token: &str, seed: u64, width: usize) -> Vec<f64> {
    let mut rng = seed::rng_for(seed, &[Part::Str("embedding"), Part::Str(token)]);
    let mut v: Vec<f64> = (0..width).map(|_| StandardNormal.sample(&mut rng)).collect();
    let norm = Norm::L2.of(&v);
    for x in &mut v {
        *x /= norm;
    }
    v
}

/// Builds a codec from its pretraining corpus: the vocabulary is every
/// pretraining token, with counts as unigram frequencies.
pub fn fit_codec(pretrain: &Corpus, config: &CodecConfig, seed: u64) -> Result<Codec, CodecError> {
    config.validate()?;
    let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
    for p in pretrain.points() {
        for t in &p.tokens {
            if t != UNKNOWN_TOKEN {
                *counts.entry(t.as_str()).or_default() += 1;
            }
        }
    }
    if counts.is_empty() {
        return Err(CodecError::EmptyPretrain);
    }
    let (vocabulary, unigram_freq) = counts.into_iter().map(|(t, c)| (t.to_string(), c)).unzip();
    Ok(Codec::from_parts(*config, seed, vocabulary, unigram_freq))
}

impl Codec {
    fn from_parts(config: CodecConfig, fit_seed: u64, vocabulary: Vec<String>, unigram_freq: Vec<u64>) -> Codec {
        let width = config.dim - 1;
        let embeddings = vocabulary.iter().flat_map(|t| token_embedding(t, fit_seed, width)).collect();
        let unknown = token_embedding(UNKNOWN_TOKEN, fit_seed, width);
        let total: u64 = unigram_freq.iter().sum();
        let log_prior = unigram_freq.iter().map(|&f| (f as f64 / total as f64).ln()).collect();
        let index = vocabulary.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Codec { config, fit_seed, vocabulary, unigram_freq, embeddings, unknown, log_prior, index }
    }

    pub fn config(&self) -> &CodecConfig {
        &self.config
    }

    pub fn dim(&self) -> usize {
        self.config.dim
    }

    pub fn fit_seed(&self) -> u64 {
        self.fit_seed
    }

    pub fn vocabulary(&self) -> &[String] {
        &self.vocabulary
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn frequency(&self, token: &str) -> Option<u64> {
        self.index.get(token).map(|&i| self.unigram_freq[i])
    }

    /// Embedding of `token`, or of the reserved unknown symbol.
    pub fn embedding(&self, token: &str) -> &[f64] {
        match self.index.get(token) {
            Some(&i) => self.row(i),
            None => &self.unknown,
        }
    }

    fn row(&self, i: usize) -> &[f64] {
        let w = self.config.dim - 1;
        &self.embeddings[i * w..(i + 1) * w]
    }

    pub fn encode(&self, tokens: &[String]) -> Result<LatentVector, CodecError> {
        if tokens.is_empty() {
            return Err(CodecError::EmptyInput);
        }
        let w = self.config.dim - 1;
        let mut values = vec![0.0; w + 1];
        for t in tokens {
            for (acc, e) in values.iter_mut().zip(self.embedding(t)) {
                *acc += e;
            }
        }
        let n = tokens.len() as f64;
        for v in &mut values[..w] {
            *v /= n;
        }
        values[w] = n / self.config.length_scale;
        Ok(LatentVector { values })
    }

    /// Output length encoded by a latent's length slot.
    pub fn decoded_length(&self, z: &LatentVector) -> usize {
        let raw = (z.length_slot() * self.config.length_scale).round();
        if raw.is_nan() || raw < 1.0 {
            1
        } else {
            (raw as usize).min(self.config.max_len)
        }
    }

    /// Greedy matching pursuit over the vocabulary.
    ///
    /// Each step picks the token maximizing `cos(residual, e) + λ·ln p(token)`
    /// and removes the residual's projection onto that token's embedding.
    pub fn decode(&self, z: &LatentVector) -> Vec<String> {
        let len = self.decoded_length(z);
        let mut residual = z.content().to_vec();
        let lambda = self.config.prior_weight;
        let mut out = Vec::with_capacity(len);
        for _ in 0..len {
            let r_norm = Norm::L2.of(&residual);
            let mut best = (f64::NEG_INFINITY, 0usize, 0.0);
            for i in 0..self.vocabulary.len() {
                let dot: f64 = residual.iter().zip(self.row(i)).map(|(a, b)| a * b).sum();
                let cos = if r_norm > 0.0 { dot / r_norm } else { 0.0 };
                let score = cos + lambda * self.log_prior[i];
                if score > best.0 {
                    best = (score, i, dot);
                }
            }
            let (_, pick, dot) = best;
            for (r, e) in residual.iter_mut().zip(self.row(pick)) {
                *r -= e * dot;
            }
            out.push(self.vocabulary[pick].clone());
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), CodecError> {
        let file = CodecFile {
            format_version: CODEC_FORMAT_VERSION,
            dim: self.config.dim,
            fit_seed: self.fit_seed,
            length_scale: self.config.length_scale,
            prior_weight: self.config.prior_weight,
            max_len: self.config.max_len,
            vocabulary: self.vocabulary.clone(),
            unigram_freq: self.unigram_freq.clone(),
        };
        let json = serde_json::to_string_pretty(&file)?;
        fs::write(path, json + "\n").map_err(|source| CodecError::Io { path: path.to_path_buf(), source })
    }

    /// Loads a codec saved by [`Codec::save`]; embeddings are regenerated from the seed.
    pub fn load(path: &Path) -> Result<Codec, CodecError> {
        let text = fs::read_to_string(path).map_err(|source| CodecError::Io { path: path.to_path_buf(), source })?;
        let file: CodecFile = serde_json::from_str(&text)?;
        if file.format_version != CODEC_FORMAT_VERSION {
            return Err(CodecError::UnsupportedVersion(file.format_version));
        }
        let config = CodecConfig {
            dim: file.dim,
            prior_weight: file.prior_weight,
            max_len: file.max_len,
            length_scale: file.length_scale,
        };
        config.validate()?;
        let sorted = file.vocabulary.windows(2).all(|w| w[0] < w[1]);
        if !sorted || file.vocabulary.len() != file.unigram_freq.len() || file.vocabulary.is_empty() {
            return Err(CodecError::InvalidConfig("vocabulary must be sorted, unique and match the frequencies".into()));
        }
        if file.unigram_freq.contains(&0) {
            return Err(CodecError::InvalidConfig("every vocabulary token needs a frequency of at least 1".into()));
        }
        Ok(Codec::from_parts(config, file.fit_seed, file.vocabulary, file.unigram_freq))
    }
}

fn sample_laplace<R: Rng>(rng: &mut R, scale: f64) -> f64 {
    // Inverse CDF on u ∈ (-1/2, 1/2).
    let u: f64 = rng.random::<f64>() - 0.5;
    -scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

/// Adds i.i.d. noise of the given scale to every slot.
pub fn add_noise<R: Rng>(z: &LatentVector, family: NoiseFamily, scale: f64, rng: &mut R) -> LatentVector {
    if scale == 0.0 {
        return z.clone();
    }
    let values = z
        .values
        .iter()
        .map(|v| match family {
            NoiseFamily::Gaussian => {
                let n: f64 = StandardNormal.sample(rng);
                v + scale * n
            }
            NoiseFamily::Laplace => v + sample_laplace(rng, scale),
        })
        .collect();
    LatentVector { values }
}

/// Encode, clip, add noise of an explicit scale, decode.
///
/// [`dp_rewrite`] calls this with the calibrated scale; a scale of zero
/// yields the codec's deterministic reconstruction.
pub fn rewrite_with_scale(
    codec: &Codec,
    tokens: &[String],
    params: &PrivacyParams,
    scale: f64,
    seed: u64,
) -> Result<Vec<String>, CodecError> {
    let z = codec.encode(tokens)?;
    let clipped = clip_latent(&z, params.clip_bound, params.norm());
    let mut rng = seed::rng_for(seed, &[Part::Str("latent-noise")]);
    let noisy = add_noise(&clipped, params.noise, scale, &mut rng);
    Ok(codec.decode(&noisy))
}

/// Differentially private rewrite of one text.
pub fn dp_rewrite(codec: &Codec, tokens: &[String], params: &PrivacyParams, seed: u64) -> Result<Vec<String>, CodecError> {
    let scale = calibrate_noise(params, params.sensitivity())?;
    rewrite_with_scale(codec, tokens, params, scale, seed)
}

/// `k` independent rewrites; version `i` uses seed `mix(base_seed, i)`.
pub fn rewrite_versions(
    codec: &Codec,
    tokens: &[String],
    params: &PrivacyParams,
    base_seed: u64,
    k: usize,
) -> Result<Vec<Vec<String>>, CodecError> {
    let scale = calibrate_noise(params, params.sensitivity())?;
    (0..k as u64)
        .map(|i| rewrite_with_scale(codec, tokens, params, scale, seed::mix(base_seed, i)))
        .collect()
}
