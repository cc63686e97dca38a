use std::collections::BTreeMap;
use std::path::Path;

use approx::assert_relative_eq;
use privlabel::codec::{
    analytic_gaussian_delta, calibrate_noise, dp_rewrite, fit_codec, rewrite_versions, CodecConfig, NoiseFamily,
    PrivacyParams,
};
use privlabel::corpus::{ingest_corpus, split_corpus, tokenize, CorpusFormat};
use privlabel::pii::{redact_corpus, EntityKind, Gazetteer};
use privlabel::{Corpus, DataPoint, Label};
use proptest::prelude::*;

// Independent 50-digit bisection on the analytic condition (mpmath).
const SIGMA_EPS_1: f64 = 6.371_405_979_921_34;
const SIGMA_EPS_3333: f64 = 0.025_633_411_741_280_37;
const SIGMA_EPS_10000: f64 = 0.014_518_191_370_215_554;

fn fixtures() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures"))
}

fn reference_config() -> CodecConfig {
    CodecConfig { dim: 64, prior_weight: 0.15, ..CodecConfig::default() }
}

fn sigma(eps: f64, delta: f64, sens: f64) -> f64 {
    calibrate_noise(&PrivacyParams::new(eps, delta, 1.0, NoiseFamily::Gaussian).unwrap(), sens).unwrap()
}

#[test]
fn gaussian_calibration_matches_independent_oracle() {
    assert_relative_eq!(sigma(1.0, 1e-4, 2.0), SIGMA_EPS_1, max_relative = 1e-9);
    assert_relative_eq!(sigma(3333.0, 1e-4, 2.0), SIGMA_EPS_3333, max_relative = 1e-9);
    assert_relative_eq!(sigma(10000.0, 1e-4, 2.0), SIGMA_EPS_10000, max_relative = 1e-9);
}

#[test]
fn analytic_sigma_beats_classic_bound() {
    let classic = (2.0 * (1.25f64 / 1e-4).ln()).sqrt() * 2.0 / 1.0;
    assert_relative_eq!(classic, 8.6872, epsilon = 1e-4);
    assert!(sigma(1.0, 1e-4, 2.0) <= classic);
}

#[test]
fn sigma_is_monotone_in_epsilon_and_delta() {
    let eps = [0.5, 1.0, 10.0, 100.0, 3333.0, 10000.0];
    let by_eps: Vec<f64> = eps.iter().map(|&e| sigma(e, 1e-4, 2.0)).collect();
    assert!(by_eps.windows(2).all(|w| w[1] < w[0]), "{by_eps:?}");
    let by_delta: Vec<f64> = [1e-8, 1e-6, 1e-4, 1e-2, 0.5].iter().map(|&d| sigma(1.0, d, 2.0)).collect();
    assert!(by_delta.windows(2).all(|w| w[1] < w[0]), "{by_delta:?}");
}

#[test]
fn laplace_scale_and_composition() {
    let p = PrivacyParams::new(2.0, 0.0, 1.0, NoiseFamily::Laplace).unwrap();
    assert_eq!(calibrate_noise(&p, p.sensitivity()).unwrap(), 1.0);
    assert_eq!(PrivacyParams::gaussian(3333.0).unwrap().composed_epsilon(3), 9999.0);
}

#[test]
fn raw_and_redacted_codecs_differ_in_vocabulary() {
    let corpus = ingest_corpus(&fixtures().join("flights.tsv"), CorpusFormat::Tsv).unwrap();
    let names = Gazetteer::load(EntityKind::Name, &fixtures().join("names.txt")).unwrap();
    let locations = Gazetteer::load(EntityKind::Location, &fixtures().join("locations.txt")).unwrap();
    let (redacted, _) = redact_corpus(&corpus, &names, &locations).unwrap();
    let raw = fit_codec(&corpus, &CodecConfig::default(), 1).unwrap();
    let red = fit_codec(&redacted, &CodecConfig::default(), 1).unwrap();
    assert!(red.contains("<LOCATION>") && !raw.contains("<LOCATION>"));
    assert!(raw.contains("boston") && !red.contains("boston"));
}

#[test]
fn encode_matches_external_mean() {
    let pts = vec![DataPoint::new("a", "what is the fare to boston", Label::Target).unwrap()];
    let codec = fit_codec(&Corpus::new("c", "t", pts).unwrap(), &CodecConfig::default(), 42).unwrap();
    let tokens = tokenize("the fare the boston");
    let z = codec.encode(&tokens).unwrap();
    let width = codec.dim() - 1;
    for k in 0..width {
        let mean = tokens.iter().map(|t| codec.embedding(t)[k]).sum::<f64>() / tokens.len() as f64;
        assert_relative_eq!(z.values[k], mean, epsilon = 1e-15);
    }
    assert_relative_eq!(z.values[width], 4.0 / 30.0);
}

fn small_codec() -> privlabel::codec::Codec {
    let texts = ["book a flight to boston", "how much is the fare", "play some jazz", "what is the cheapest fare"];
    let pts = texts.iter().enumerate().map(|(i, t)| DataPoint::new(format!("p{i}"), *t, Label::NonTarget).unwrap()).collect();
    fit_codec(&Corpus::new("c", "t", pts).unwrap(), &CodecConfig::default(), 5).unwrap()
}

#[test]
fn three_versions_are_frozen() {
    let codec = small_codec();
    let params = PrivacyParams::gaussian(100.0).unwrap();
    let out = rewrite_versions(&codec, &tokenize("how much is the cheapest fare"), &params, 77, 3).unwrap();
    let joined: Vec<String> = out.iter().map(|v| v.join(" ")).collect();
    assert_eq!(joined, FROZEN_VERSIONS);
}

const FROZEN_VERSIONS: [&str; 3] = [
    "is the fare how jazz flight book",
    "fare to cheapest the some boston much",
    "fare jazz the a is book how book is fare some book how",
];

fn overlap_f1(a: &[String], b: &[String]) -> f64 {
    let mut counts: BTreeMap<&str, i64> = BTreeMap::new();
    for t in a {
        *counts.entry(t).or_default() += 1;
    }
    let mut common = 0;
    for t in b {
        if let Some(c) = counts.get_mut(t.as_str()) {
            if *c > 0 {
                *c -= 1;
                common += 1;
            }
        }
    }
    2.0 * common as f64 / (a.len() + b.len()) as f64
}

#[test]
fn utility_is_monotone_in_epsilon() {
    let corpus = ingest_corpus(&fixtures().join("flights.tsv"), CorpusFormat::Tsv).unwrap();
    let splits = split_corpus(&corpus, [0.7, 0.1, 0.2], 7).unwrap();
    let codec = fit_codec(&splits.pretrain, &reference_config(), 11).unwrap();
    let mut means = Vec::new();
    for eps in [3333.0, 10000.0, f64::INFINITY] {
        let params = PrivacyParams::gaussian(eps).unwrap();
        let points = splits.crowdsourcing.points();
        let total: f64 = points
            .iter()
            .enumerate()
            .map(|(i, p)| overlap_f1(&p.tokens, &dp_rewrite(&codec, &p.tokens, &params, i as u64).unwrap()))
            .sum();
        means.push(total / points.len() as f64);
    }
    assert!(means.windows(2).all(|w| w[1] >= w[0]), "{means:?}");
}

proptest! {
    #[test]
    fn calibrated_sigma_satisfies_condition(eps in 0.05f64..20000.0, log_delta in -12.0f64..-1.0, sens in 0.1f64..10.0) {
        let delta = 10f64.powf(log_delta);
        let s = sigma(eps, delta, sens);
        prop_assert!(analytic_gaussian_delta(eps, s / sens) <= delta + 1e-9);
        let doubled = sigma(eps, delta, 2.0 * sens);
        prop_assert!((doubled - 2.0 * s).abs() <= 1e-9 * doubled);
    }
}
