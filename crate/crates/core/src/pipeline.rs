//! Batch classification of random Gaussian instances.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::certificates::{classify, CertificateReport, Thresholds, ValueStatus, Verdict};
use crate::ensemble::{derive_seed, generate_instance, EnsembleSpec};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct TrialRow {
    pub trial: usize,
    pub seed: u64,
    /// `None` when classification raised an error (recorded in `error`).
    pub verdict: Option<Verdict>,
    pub tau: Option<f64>,
    pub rho: Option<f64>,
    pub gamma: Option<f64>,
    pub zeta: Option<f64>,
    pub ic: Option<f64>,
    pub ri: bool,
    pub sri: bool,
    pub optimal: bool,
    /// Some certificate solver hit its iteration cap or failed.
    pub solver_limited: bool,
    pub error: Option<String>,
    /// Kept out of the CSV so that reruns are byte-identical.
    pub elapsed: Duration,
}

impl TrialRow {
    fn from_report(trial: usize, seed: u64, r: &CertificateReport, elapsed: Duration) -> Self {
        let limited = [r.rho, r.zeta, r.ic]
            .iter()
            .any(|v| matches!(v.status, ValueStatus::MaxIterations | ValueStatus::Failed));
        Self {
            trial,
            seed,
            verdict: Some(r.verdict),
            tau: r.tau.value,
            rho: r.rho.value,
            gamma: r.gamma.value,
            zeta: r.zeta.value,
            ic: r.ic.value,
            ri: r.ri_holds,
            sri: r.sri_holds,
            optimal: r.is_optimal(),
            solver_limited: limited,
            error: None,
            elapsed,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct PipelineResult {
    pub rows: Vec<TrialRow>,
    pub tally: BTreeMap<Verdict, usize>,
    pub failures: usize,
}

impl PipelineResult {
    pub fn count(&self, v: Verdict) -> usize {
        self.tally.get(&v).copied().unwrap_or(0)
    }

    pub fn not_optimal(&self) -> usize {
        self.rows.iter().filter(|r| r.verdict.is_some() && !r.optimal).count()
    }

    pub fn falsified(&self) -> bool {
        self.count(Verdict::NotASolution) > 0
    }
}

/// Trial `t` uses the ensemble with seed `derive_seed(spec.seed, [t])`.
pub fn trial_seed(spec: &EnsembleSpec, trial: usize) -> u64 {
    derive_seed(spec.seed, &[trial as u64])
}

pub fn run_pipeline(spec: &EnsembleSpec, trials: usize, thresholds: &Thresholds) -> Result<PipelineResult> {
    if trials == 0 {
        return Err(Error::InvalidInput("at least one trial is needed".into()));
    }
    spec.validate()?;
    let rows: Vec<TrialRow> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let seed = trial_seed(spec, t);
            let start = Instant::now();
            let outcome = generate_instance(&spec.with_seed(seed)).and_then(|p| classify(&p, thresholds));
            match outcome {
                Ok(r) => TrialRow::from_report(t, seed, &r, start.elapsed()),
                Err(e) => TrialRow {
                    trial: t,
                    seed,
                    verdict: None,
                    tau: None,
                    rho: None,
                    gamma: None,
                    zeta: None,
                    ic: None,
                    ri: false,
                    sri: false,
                    optimal: false,
                    solver_limited: true,
                    error: Some(e.to_string()),
                    elapsed: start.elapsed(),
                },
            }
        })
        .collect();
    let mut tally = BTreeMap::new();
    for v in rows.iter().filter_map(|r| r.verdict) {
        *tally.entry(v).or_insert(0) += 1;
    }
    let failures = rows.iter().filter(|r| r.verdict.is_none()).count();
    Ok(PipelineResult { rows, tally, failures })
}
