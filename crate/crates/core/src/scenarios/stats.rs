//! Monte Carlo over seeds and the statistics reported for it.

use super::{check_trace, ground_free_flight, run, run_boosted, BoostedView, FreeFlight, RunTrace};
use super::{Scenario, ScenarioConfig, ScenarioError, SPIN_ROWS};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Width of the reported binomial intervals, in standard deviations.
pub const WILSON_Z: f64 = 3.0;
/// Kolmogorov–Smirnov critical coefficient at the 1% level.
pub const KS_COEFFICIENT: f64 = 1.628;
pub const HISTOGRAM_BINS: usize = 20;
const MAX_EXAMPLES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn contains(&self, p: f64) -> bool {
        p >= self.lower && p <= self.upper
    }
}

/// Wilson score interval for `successes` out of `n`.
pub fn wilson_interval(successes: usize, n: usize, z: f64) -> Interval {
    let n_f = n as f64;
    let p = successes as f64 / n_f;
    let z2 = z * z;
    let denom = 1.0 + z2 / n_f;
    let center = (p + z2 / (2.0 * n_f)) / denom;
    let half = z / denom * (p * (1.0 - p) / n_f + z2 / (4.0 * n_f * n_f)).sqrt();
    Interval { lower: (center - half).max(0.0), upper: (center + half).min(1.0) }
}

/// One-sample KS statistic of `samples` against the CDF `cdf`.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (((i + 1) as f64 / n) - f).max(f - i as f64 / n)
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchFrequency {
    pub label: String,
    pub count: usize,
    pub frequency: f64,
    pub expected: f64,
    pub interval: Interval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub std_dev: f64,
    pub min: f64,
    pub max: f64,
    pub histogram: Histogram,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let width = if max > min { (max - min) / HISTOGRAM_BINS as f64 } else { 1.0 };
        let edges = (0..=HISTOGRAM_BINS).map(|i| min + width * i as f64).collect();
        let mut counts = vec![0; HISTOGRAM_BINS];
        for v in values {
            let bin = (((v - min) / width) as usize).min(HISTOGRAM_BINS - 1);
            counts[bin] += 1;
        }
        Self { count: values.len(), mean, std_dev: var.sqrt(), min, max, histogram: Histogram { edges, counts } }
    }
}

/// Decay times of one source tested against the exponential law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KsTest {
    pub source: String,
    pub rate: f64,
    pub statistic: f64,
    pub critical: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub schema_version: u32,
    pub scenario: String,
    pub name: String,
    pub base_seed: u64,
    pub runs: usize,
    pub violations: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub violation_examples: Vec<String>,
    pub branches: Vec<BranchFrequency>,
    /// Conic time of the first reduction, measured from the scenario start.
    pub first_hit: Summary,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ks: Vec<KsTest>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anticorrelation: Option<f64>,
    /// Runs in which the boosted coordinate order differs from the conic order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lorentz_reversals: Option<usize>,
    pub grounding: Vec<FreeFlight>,
}

impl StatsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn branch_key(trace: &RunTrace) -> String {
    match trace.scenario.as_str() {
        "independent" => format!("{} first", trace.outcome["first"]),
        _ => trace.reductions[0].component.clone(),
    }
}

fn expected_branches(config: &ScenarioConfig) -> Vec<(String, f64)> {
    match &config.scenario {
        Scenario::Decay(_) => vec![("p1 p2".into(), 1.0)],
        Scenario::Epr(e) | Scenario::EprBoosted(e) => SPIN_ROWS
            .iter()
            .zip(e.weights)
            .map(|(&(carrier, spin), w)| (super::engaged_spec(carrier, spin).label, w))
            .collect(),
        Scenario::Independent(ind) => {
            let total: f64 = ind.nuclei.iter().map(|n| n.rate).sum();
            (0..2).map(|k| (format!("n{} first", k + 1), ind.nuclei[k].rate / total)).collect()
        }
    }
}

fn start_time(config: &ScenarioConfig) -> f64 {
    match &config.scenario {
        Scenario::Decay(d) => d.start_time,
        Scenario::Epr(e) | Scenario::EprBoosted(e) => e.emission.t,
        Scenario::Independent(i) => i.start_time,
    }
}

fn one(config: &ScenarioConfig, seed: u64, boosted: bool) -> Result<(RunTrace, Option<BoostedView>), ScenarioError> {
    if boosted {
        run_boosted(config, seed).map(|(t, v)| (t, Some(v)))
    } else {
        run(config, seed).map(|t| (t, None))
    }
}

/// Runs seeds `base_seed..base_seed + runs` in parallel and aggregates the
/// results in seed order.
pub fn monte_carlo(config: &ScenarioConfig, runs: usize, base_seed: u64) -> Result<StatsReport, ScenarioError> {
    config.validate()?;
    if runs == 0 {
        return Err(super::ConfigError::new("runs", "must be at least 1").into());
    }
    let grounding = ground_free_flight(config)?;
    let boosted = matches!(config.scenario, Scenario::EprBoosted(_));
    let results: Vec<(RunTrace, Option<BoostedView>, Vec<String>)> = (0..runs as u64)
        .into_par_iter()
        .map(|i| {
            let (trace, view) = one(config, base_seed.wrapping_add(i), boosted)?;
            let problems = check_trace(&trace);
            Ok((trace, view, problems))
        })
        .collect::<Result<_, ScenarioError>>()?;

    let mut violations = 0;
    let mut examples = Vec::new();
    for (trace, _, problems) in &results {
        if !problems.is_empty() {
            violations += 1;
            if examples.len() < MAX_EXAMPLES {
                examples.push(format!("seed {}: {}", trace.seed, problems.join("; ")));
            }
        }
    }

    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for (trace, _, _) in &results {
        *counts.entry(branch_key(trace)).or_default() += 1;
    }
    let branches = expected_branches(config)
        .into_iter()
        .map(|(label, expected)| {
            let count = counts.get(&label).copied().unwrap_or(0);
            BranchFrequency {
                frequency: count as f64 / runs as f64,
                interval: wilson_interval(count, runs, WILSON_Z),
                label,
                count,
                expected,
            }
        })
        .collect();

    let t0 = start_time(config);
    let first: Vec<f64> = results.iter().map(|(t, _, _)| t.reductions[0].conic_time - t0).collect();

    let mut ks = Vec::new();
    let sources: Vec<(String, f64)> = match &config.scenario {
        Scenario::Decay(d) => vec![("pc".into(), d.rate)],
        Scenario::Independent(ind) => {
            ind.nuclei.iter().enumerate().map(|(k, n)| (format!("n{}", k + 1), n.rate)).collect()
        }
        _ => Vec::new(),
    };
    for (source, rate) in sources {
        let times: Vec<f64> = results
            .iter()
            .filter_map(|(t, _, _)| {
                let w = t.worldline(&source)?;
                t.reductions.iter().find(|r| r.vertex.x == w.worldline.origin.x).map(|r| r.conic_time - t0)
            })
            .collect();
        let statistic = ks_statistic(&times, |x| 1.0 - (-rate * x).exp());
        let critical = KS_COEFFICIENT / (times.len() as f64).sqrt();
        ks.push(KsTest { source, rate, statistic, critical, passed: statistic < critical });
    }

    let anticorrelation = match config.scenario {
        Scenario::Epr(_) | Scenario::EprBoosted(_) => {
            let anti = results.iter().filter(|(t, _, _)| t.outcome["p1"] != t.outcome["p2"]).count();
            Some(anti as f64 / runs as f64)
        }
        _ => None,
    };
    let lorentz_reversals = boosted.then(|| {
        results.iter().filter(|(_, v, _)| v.as_ref().is_some_and(|v| v.lorentz_reverses_conic)).count()
    });

    Ok(StatsReport {
        schema_version: super::TRACE_SCHEMA_VERSION,
        scenario: config.scenario.kind().to_string(),
        name: config.name.clone(),
        base_seed,
        runs,
        violations,
        violation_examples: examples,
        branches,
        first_hit: Summary::of(&first),
        ks,
        anticorrelation,
        lorentz_reversals,
        grounding,
    })
}
