//! Replication study on the benchmark SCM: repeated samples, every
//! estimator on each, summaries against reference box-plot averages.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::RngCore;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimation::stats::{derived_rng, summarize, Summary};
use crate::estimation::{Estimator, EstimatorConfig};
use crate::par;
use crate::recovery::{QuerySpec, Target};
use crate::scm::{appendix_a, OracleResult, APPENDIX_A_30, APPENDIX_A_50};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Scenario {
    #[serde(rename = "50")]
    Missing50,
    #[serde(rename = "30")]
    Missing30,
}

impl Scenario {
    pub fn betas(self) -> (f64, f64) {
        match self {
            Scenario::Missing50 => APPENDIX_A_50,
            Scenario::Missing30 => APPENDIX_A_30,
        }
    }

    /// Reference replication means and oracle values.
    pub fn targets(self) -> Targets {
        match self {
            Scenario::Missing50 => Targets {
                means: BTreeMap::from([
                    (Estimator::DrF, -4.017672),
                    (Estimator::DrN, 1.262105),
                    (Estimator::Mi, 3.079754),
                    (Estimator::Mim, 1.741383),
                ]),
                fate: -4.010287,
                nate: 1.261823,
            },
            Scenario::Missing30 => Targets {
                means: BTreeMap::from([
                    (Estimator::DrF, -4.024713),
                    (Estimator::DrN, -0.8773132),
                    (Estimator::Mi, 0.3968317),
                    (Estimator::Mim, -0.5541139),
                ]),
                fate: -4.007316,
                nate: -0.8844339,
            },
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scenario::Missing50 => "50",
            Scenario::Missing30 => "30",
        })
    }
}

impl FromStr for Scenario {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim_end_matches('%') {
            "50" => Ok(Scenario::Missing50),
            "30" => Ok(Scenario::Missing30),
            other => Err(Error::Parse(format!("unknown scenario {other:?}; expected 50 or 30"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Targets {
    pub means: BTreeMap<Estimator, f64>,
    pub fate: f64,
    pub nate: f64,
}

/// Allowed distance between a replication mean and its reference value.
pub fn tolerance(e: Estimator) -> f64 {
    match e {
        Estimator::DrN | Estimator::DrF => 0.10,
        Estimator::Mim => 0.15,
        Estimator::Mi | Estimator::Cc => 0.25,
    }
}

pub const DEFAULT_ESTIMATORS: [Estimator; 4] = [Estimator::DrF, Estimator::DrN, Estimator::Mi, Estimator::Mim];

#[derive(Debug, Clone)]
pub struct StudyConfig {
    pub scenario: Scenario,
    pub n: usize,
    pub m: usize,
    pub seed: u64,
    pub estimators: Vec<Estimator>,
    pub config: EstimatorConfig,
    /// Monte Carlo size for the oracle lines; 0 skips them.
    pub oracle_n_mc: usize,
}

impl StudyConfig {
    pub fn new(scenario: Scenario) -> Self {
        StudyConfig {
            scenario,
            n: 5000,
            m: 200,
            seed: 0,
            estimators: DEFAULT_ESTIMATORS.to_vec(),
            config: EstimatorConfig::appendix_a(),
            oracle_n_mc: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub estimator: String,
    pub target: f64,
    pub mean: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyResult {
    pub scenario: Scenario,
    pub n: usize,
    pub m: usize,
    pub seed: u64,
    pub missing_rate: f64,
    pub summaries: BTreeMap<String, Summary>,
    pub failures: BTreeMap<String, usize>,
    pub oracle: Option<OracleResult>,
    pub checks: Vec<Check>,
    #[serde(skip)]
    pub estimates: BTreeMap<Estimator, Vec<f64>>,
}

impl StudyResult {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    /// One row per estimator: the box-plot summary schema.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::Parse(format!("csv: {e}"));
        w.write_record([
            "estimator", "config", "mean", "sd", "q1", "median", "q3", "whisker_lo", "whisker_hi", "target", "pass",
        ])
        .map_err(io)?;
        for c in &self.checks {
            let s = &self.summaries[&c.estimator];
            let mut rec = vec![c.estimator.clone(), self.scenario.to_string()];
            rec.extend(
                [s.mean, s.sd, s.q1, s.median, s.q3, s.whisker_lo, s.whisker_hi, c.target]
                    .iter()
                    .map(|v| format!("{v}")),
            );
            rec.push(c.pass.to_string());
            w.write_record(&rec).map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Parse(format!("csv: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }
}

/// Seed for replication `k`.
pub fn replication_seed(seed: u64, k: usize) -> u64 {
    derived_rng(seed, k as u64).next_u64()
}

pub fn run_study(cfg: &StudyConfig) -> Result<StudyResult> {
    if cfg.m == 0 || cfg.n == 0 {
        return Err(Error::InvalidQuery("study needs n > 0 and m > 0".into()));
    }
    let (b1, b2) = cfg.scenario.betas();
    let scm = appendix_a(b1, b2);
    let reps = par::map_indices(cfg.m, |k| -> Result<(f64, Vec<Option<f64>>)> {
        let seed = replication_seed(cfg.seed, k);
        let data = scm.sample_observational(cfg.n, seed)?;
        let r = data.raw_column(&cfg.config.indicator)?;
        let missing = r.iter().filter(|v| **v == 0.0).count() as f64 / r.len() as f64;
        let mut ec = cfg.config.clone();
        ec.seed = seed;
        let points = cfg
            .estimators
            .iter()
            .map(|e| match e.point(&data, &ec) {
                Ok(v) if v.is_finite() => Some(v),
                Ok(_) => None,
                Err(err) => {
                    log::warn!("replication {k}: {} failed: {err}", e.label());
                    None
                }
            })
            .collect();
        Ok((missing, points))
    });
    let reps: Vec<(f64, Vec<Option<f64>>)> = reps.into_iter().collect::<Result<_>>()?;
    let missing_rate = reps.iter().map(|r| r.0).sum::<f64>() / reps.len() as f64;

    let targets = cfg.scenario.targets();
    let mut estimates = BTreeMap::new();
    let mut summaries = BTreeMap::new();
    let mut failures = BTreeMap::new();
    let mut checks = Vec::new();
    for (j, e) in cfg.estimators.iter().enumerate() {
        let vals: Vec<f64> = reps.iter().filter_map(|r| r.1[j]).collect();
        failures.insert(e.label().to_string(), cfg.m - vals.len());
        if vals.is_empty() {
            return Err(Error::InsufficientData(format!("{} failed on every replication", e.label())));
        }
        let s = summarize(&vals);
        if let Some(&t) = targets.means.get(e) {
            checks.push(Check {
                estimator: e.label().into(),
                target: t,
                mean: s.mean,
                tolerance: tolerance(*e),
                pass: (s.mean - t).abs() <= tolerance(*e),
            });
        }
        summaries.insert(e.label().to_string(), s);
        estimates.insert(*e, vals);
    }
    let oracle = if cfg.oracle_n_mc > 0 {
        let q = QuerySpec::new("A", "Y1", Target::Nate);
        Some(scm.oracle_effects(&q, cfg.oracle_n_mc, cfg.seed)?)
    } else {
        None
    };
    Ok(StudyResult {
        scenario: cfg.scenario,
        n: cfg.n,
        m: cfg.m,
        seed: cfg.seed,
        missing_rate,
        summaries,
        failures,
        oracle,
        checks,
        estimates,
    })
}
