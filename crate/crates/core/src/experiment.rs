//! The evaluation pipeline: derive a matrix from each SUT instance,
//! generate suites per criterion, repair the extended ones, simulate, and
//! average over instances and repetitions.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::consistency::{repair_case, ConsistencyError};
use crate::generator::{extend_influenced, generate_suite, CoverageCriterion, GenerateError, TestSuite};
use crate::seed;
use crate::simulator::{simulate, SimulationError, SimulationOptions};
use crate::sut::{build_transition_system, derive_crud_matrix, ArtificialSut, SutError};
use crate::sutgen::{generate_sut, SutGenConfig, SutGenError, PRESETS};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("experiment has no instances")]
    NoInstances,
    #[error("invalid criterion set: {0}")]
    Criteria(String),
    #[error("invalid experiment config: {0}")]
    Config(String),
    #[error("instance `{instance}`: {source}")]
    SutGen { instance: String, source: SutGenError },
    #[error(transparent)]
    Sut(#[from] SutError),
    #[error(transparent)]
    Generate(#[from] GenerateError),
    #[error(transparent)]
    Consistency(#[from] ConsistencyError),
    #[error(transparent)]
    Simulation(#[from] SimulationError),
}

/// A named preset or an explicit generator config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InstanceSpec {
    Preset(String),
    Generated(SutGenConfig),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default = "default_instances")]
    pub instances: Vec<InstanceSpec>,
    #[serde(default = "default_criteria")]
    pub criteria: Vec<CoverageCriterion>,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default = "default_capture_ratio")]
    pub capture_ratio: f64,
    #[serde(default)]
    pub strict_detection: bool,
    #[serde(default = "default_match_op_kind")]
    pub match_op_kind: bool,
}

fn default_instances() -> Vec<InstanceSpec> {
    PRESETS.iter().map(|p| InstanceSpec::Preset((*p).to_string())).collect()
}

fn default_criteria() -> Vec<CoverageCriterion> {
    use CoverageCriterion::*;
    vec![Dcyt1R, DcytNR, OR, IR, IRI, NR, NRI]
}

fn default_repetitions() -> usize {
    10
}

fn default_capture_ratio() -> f64 {
    1.0
}

fn default_match_op_kind() -> bool {
    true
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            instances: default_instances(),
            criteria: default_criteria(),
            repetitions: default_repetitions(),
            capture_ratio: default_capture_ratio(),
            strict_detection: false,
            match_op_kind: true,
        }
    }
}

impl ExperimentConfig {
    pub fn check(&self) -> Result<(), ExperimentError> {
        if self.repetitions == 0 {
            return Err(ExperimentError::Config("repetitions must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.capture_ratio) {
            return Err(ExperimentError::Config(format!("capture_ratio {} is outside [0, 1]", self.capture_ratio)));
        }
        if !self.criteria.iter().any(|c| c.is_baseline()) {
            return Err(ExperimentError::Criteria("no baseline criterion".into()));
        }
        if !self.criteria.iter().any(|c| !c.is_baseline()) {
            return Err(ExperimentError::Criteria("no extended criterion".into()));
        }
        for (i, c) in self.criteria.iter().enumerate() {
            if self.criteria[..i].contains(c) {
                return Err(ExperimentError::Criteria(format!("{} listed twice", c.name())));
            }
        }
        for spec in &self.instances {
            match spec {
                InstanceSpec::Preset(name) if SutGenConfig::preset(name).is_none() => {
                    return Err(ExperimentError::Config(format!("unknown preset `{name}`")));
                }
                InstanceSpec::Generated(c) => {
                    c.check().map_err(|e| ExperimentError::Config(e.to_string()))?;
                }
                _ => {}
            }
        }
        Ok(())
    }

    fn options(&self) -> SimulationOptions {
        SimulationOptions { strict_detection: self.strict_detection, match_op_kind: self.match_op_kind }
    }
}

/// Where the SUT of each repetition comes from.
#[derive(Clone, Debug)]
pub enum Instance {
    /// A fresh SUT per repetition, seeded from the experiment seed.
    Generated { name: String, config: SutGenConfig },
    /// The same SUT in every repetition.
    Fixed { name: String, sut: ArtificialSut },
}

impl Instance {
    pub fn name(&self) -> &str {
        match self {
            Instance::Generated { name, .. } | Instance::Fixed { name, .. } => name,
        }
    }
}

pub fn resolve_instances(specs: &[InstanceSpec]) -> Result<Vec<Instance>, ExperimentError> {
    specs
        .iter()
        .enumerate()
        .map(|(i, spec)| match spec {
            InstanceSpec::Preset(name) => SutGenConfig::preset(name)
                .map(|config| Instance::Generated { name: name.clone(), config })
                .ok_or_else(|| ExperimentError::Config(format!("unknown preset `{name}`"))),
            InstanceSpec::Generated(config) => Ok(Instance::Generated { name: format!("instance{}", i + 1), config: config.clone() }),
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub criterion: CoverageCriterion,
    pub runs: usize,
    pub mean_steps: f64,
    pub inconsistent_ratio: f64,
    pub leakage_ratio: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<CoverageCriterion>,
    /// Relative growth of the total step count over the matched baseline.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_increase: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub seed: u64,
    pub repetitions: usize,
    pub capture_ratio: f64,
    pub instances: Vec<String>,
    pub rows: Vec<ExperimentRow>,
}

impl ExperimentReport {
    pub fn row(&self, criterion: CoverageCriterion) -> Option<&ExperimentRow> {
        self.rows.iter().find(|r| r.criterion == criterion)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{} instance(s) x {} repetition(s), seed {}, capture ratio {}",
            self.instances.len(),
            self.repetitions,
            self.seed,
            self.capture_ratio
        );
        let _ = writeln!(out, "{:<9} {:>13} {:>9}  {}", "criterion", "inconsistent", "leakage", "step increase");
        for r in &self.rows {
            let increase = match (r.step_increase, r.baseline) {
                (Some(x), Some(b)) => format!("{:+.1}% vs {}", x * 100.0, b.name()),
                _ => "-".to_string(),
            };
            let _ = writeln!(
                out,
                "{:<9} {:>12.1}% {:>8.1}%  {}",
                r.criterion.name(),
                r.inconsistent_ratio * 100.0,
                r.leakage_ratio * 100.0,
                increase
            );
        }
        out
    }
}

/// The suite a criterion contributes to the experiment: extended criteria
/// are repaired against the SUT, baselines run as generated.
///
/// IRI and NRI are built in two stages: the IR or NR core is repaired,
/// influence verifications are added, and the result is repaired again.
/// The verification reads are the ones direct generation would pick, and
/// the repaired suite stays a supersequence of the repaired core suite.
pub fn experiment_suite(
    sut: &ArtificialSut,
    criterion: CoverageCriterion,
    capture_ratio: f64,
    seed: u64,
) -> Result<TestSuite, ExperimentError> {
    let matrix = derive_crud_matrix(sut, capture_ratio, seed)?;
    let core = match criterion {
        CoverageCriterion::IRI => CoverageCriterion::IR,
        CoverageCriterion::NRI => CoverageCriterion::NR,
        c => c,
    };
    let mut suite = generate_suite(&matrix, core, seed)?;
    if criterion.is_baseline() {
        return Ok(suite);
    }
    let ts = build_transition_system(sut)?;
    for case in &mut suite.cases {
        *case = repair_case(case, &ts)?.repaired;
        if core != criterion {
            let ext_seed = seed::derive_seed(case.seed, "influence", case.entity.as_str());
            let mut extended = extend_influenced(case, &matrix, ext_seed);
            extended.criterion = criterion;
            *case = repair_case(&extended, &ts)?.repaired;
        }
    }
    suite.criterion = criterion;
    Ok(suite)
}

#[derive(Default)]
struct Totals {
    runs: usize,
    steps: usize,
    inconsistent: f64,
    leakage: f64,
}

pub fn run_experiment(config: &ExperimentConfig, instances: &[Instance], seed: u64) -> Result<ExperimentReport, ExperimentError> {
    config.check()?;
    if instances.is_empty() {
        return Err(ExperimentError::NoInstances);
    }
    let options = config.options();
    let mut totals: BTreeMap<CoverageCriterion, Totals> = BTreeMap::new();
    for instance in instances {
        for rep in 0..config.repetitions {
            let key = format!("{}:{rep}", instance.name());
            let run_seed = seed::derive_seed(seed, "run", &key);
            let generated;
            let sut = match instance {
                Instance::Fixed { sut, .. } => sut,
                Instance::Generated { name, config: gen } => {
                    let gen = SutGenConfig { seed: seed::derive_seed(seed, "instance", &key), ..gen.clone() };
                    generated = generate_sut(&gen)
                        .map_err(|source| ExperimentError::SutGen { instance: name.clone(), source })?;
                    &generated
                }
            };
            for &criterion in &config.criteria {
                let suite = experiment_suite(sut, criterion, config.capture_ratio, run_seed)?;
                let report = simulate(&suite, sut, run_seed, options)?;
                let t = totals.entry(criterion).or_default();
                t.runs += 1;
                t.steps += report.total_steps;
                t.inconsistent += report.inconsistent_ratio;
                t.leakage += report.leakage_ratio;
            }
        }
    }

    let rows = config
        .criteria
        .iter()
        .map(|&criterion| {
            let t = &totals[&criterion];
            let baseline = criterion.matched_baseline().filter(|b| totals.contains_key(b));
            let step_increase = baseline.and_then(|b| {
                let base = totals[&b].steps;
                (base > 0).then(|| (t.steps as f64 - base as f64) / base as f64)
            });
            ExperimentRow {
                criterion,
                runs: t.runs,
                mean_steps: t.steps as f64 / t.runs as f64,
                inconsistent_ratio: t.inconsistent / t.runs as f64,
                leakage_ratio: t.leakage / t.runs as f64,
                baseline: step_increase.and(baseline),
                step_increase,
            }
        })
        .collect();

    Ok(ExperimentReport {
        seed,
        repetitions: config.repetitions,
        capture_ratio: config.capture_ratio,
        instances: instances.iter().map(|i| i.name().to_string()).collect(),
        rows,
    })
}
