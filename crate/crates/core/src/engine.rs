//! Generation-synchronous evaluation and the optimization loop.
//!
//! Each generation is fanned out to at most `parallelism` worker threads.
//! Records are collected by `gen_index`, written to the log, and only then is
//! the next generation sampled, so results never depend on completion order.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cma::{self, Candidate, CmaError, CmaState, PriorSampler};
use crate::protocol::{EvalOutcome, EvalRequest, Evaluator};
use crate::runlog::{EvalStatus, EvaluationRecord, LogSink, RunHeader, RunLog};
use crate::space::{SearchSpace, SpaceError};

/// Default slack between an evaluation's budget and the engine abandoning it.
pub const DEFAULT_GRACE_SECONDS: f64 = 0.5;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("generation {generation} collapsed: no evaluation succeeded")]
    GenerationCollapse { generation: u64 },
    #[error(transparent)]
    Cma(#[from] CmaError),
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error("log sink: {0}")]
    Sink(#[from] std::io::Error),
}

/// Objective assigned to failed and timed-out evaluations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailurePolicy {
    /// Worst ok objective of the generation plus 10% of the ok spread
    /// (plus 1.0 when the spread is zero).
    WorstOfGenerationPlusMargin,
    FixedPenalty(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Cma,
    /// Every generation drawn from the isotropic initial distribution.
    RandomPrior,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub run_id: String,
    pub optimizer: OptimizerKind,
    pub lambda: usize,
    pub parallelism: usize,
    pub max_evaluations: usize,
    /// Per-evaluation wall-clock budget; `None` means unlimited.
    pub eval_budget_seconds: Option<f64>,
    pub grace_seconds: f64,
    pub seed: u64,
    pub failure_policy: FailurePolicy,
}

impl RunConfig {
    pub fn new(lambda: usize, max_evaluations: usize, seed: u64) -> Self {
        Self {
            run_id: format!("run-{seed}"),
            optimizer: OptimizerKind::Cma,
            lambda,
            parallelism: 1,
            max_evaluations,
            eval_budget_seconds: None,
            grace_seconds: DEFAULT_GRACE_SECONDS,
            seed,
            failure_policy: FailurePolicy::WorstOfGenerationPlusMargin,
        }
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |m: String| Err(EngineError::Config(m));
        if self.parallelism < 1 {
            return bad("parallelism must be at least 1".into());
        }
        let min_lambda = match self.optimizer {
            OptimizerKind::Cma => 2,
            OptimizerKind::RandomPrior => 1,
        };
        if self.lambda < min_lambda {
            return bad(format!("lambda must be at least {min_lambda}, got {}", self.lambda));
        }
        if self.max_evaluations < self.lambda {
            return bad(format!(
                "max_evaluations ({}) must be at least lambda ({})",
                self.max_evaluations, self.lambda
            ));
        }
        if let Some(b) = self.eval_budget_seconds {
            if !(b > 0.0 && b.is_finite()) {
                return bad(format!("evaluation budget must be positive, got {b}"));
            }
        }
        if !(self.grace_seconds >= 0.0 && self.grace_seconds.is_finite()) {
            return bad(format!("grace must be non-negative, got {}", self.grace_seconds));
        }
        if let FailurePolicy::FixedPenalty(v) = self.failure_policy {
            if !v.is_finite() {
                return bad("fixed penalty must be finite".into());
            }
        }
        Ok(())
    }
}

/// Settings for one [`dispatch_generation`] call.
#[derive(Debug, Clone)]
pub struct DispatchOptions {
    pub run_id: String,
    pub parallelism: usize,
    pub budget_seconds: Option<f64>,
    pub grace_seconds: f64,
}

impl DispatchOptions {
    pub fn from_config(config: &RunConfig) -> Self {
        Self {
            run_id: config.run_id.clone(),
            parallelism: config.parallelism,
            budget_seconds: config.eval_budget_seconds,
            grace_seconds: config.grace_seconds,
        }
    }
}

fn run_one(evaluator: &Arc<dyn Evaluator>, request: EvalRequest, limit: Option<Duration>) -> EvalOutcome {
    let Some(limit) = limit else {
        return evaluator.evaluate(&request);
    };
    let (tx, rx) = mpsc::channel();
    let ev = Arc::clone(evaluator);
    // abandoned (not joined) if it overruns; the evaluator sees the budget
    // in the request and is expected to stop on its own
    let spawned = thread::Builder::new()
        .name(format!("eval-{}", request.candidate_id))
        .spawn(move || {
            let _ = tx.send(ev.evaluate(&request));
        });
    if let Err(e) = spawned {
        return EvalOutcome::Failed(format!("could not start evaluation thread: {e}"));
    }
    match rx.recv_timeout(limit) {
        Ok(outcome) => outcome,
        Err(mpsc::RecvTimeoutError::Timeout) => EvalOutcome::Timeout,
        Err(mpsc::RecvTimeoutError::Disconnected) => EvalOutcome::Failed("evaluator panicked".into()),
    }
}

/// Evaluates one generation with at most `parallelism` evaluations in
/// flight. Records come back sorted by `gen_index`.
pub fn dispatch_generation(
    candidates: &[Candidate],
    space: &SearchSpace,
    evaluator: &Arc<dyn Evaluator>,
    options: &DispatchOptions,
) -> Result<Vec<EvaluationRecord>, EngineError> {
    if candidates.is_empty() {
        return Err(EngineError::Config("no candidates to dispatch".into()));
    }
    if options.parallelism < 1 {
        return Err(EngineError::Config("parallelism must be at least 1".into()));
    }
    let requests = candidates
        .iter()
        .map(|c| {
            Ok(EvalRequest {
                run_id: options.run_id.clone(),
                candidate_id: c.id,
                generation: c.generation,
                budget_seconds: options.budget_seconds,
                params: space.transform(&c.genotype)?.into(),
                genotype: c.genotype.clone(),
            })
        })
        .collect::<Result<Vec<_>, SpaceError>>()?;
    let limit = options
        .budget_seconds
        .map(|b| Duration::from_secs_f64(b + options.grace_seconds));

    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<(EvalOutcome, f64, usize)>>> = Mutex::new(vec![None; candidates.len()]);
    let workers = options.parallelism.min(candidates.len());
    thread::scope(|scope| {
        for worker in 0..workers {
            let (next, slots, requests) = (&next, &slots, &requests);
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= requests.len() {
                    break;
                }
                let start = Instant::now();
                let outcome = run_one(evaluator, requests[i].clone(), limit);
                let wall = start.elapsed().as_secs_f64();
                slots.lock().expect("slot lock")[i] = Some((outcome, wall, worker));
            });
        }
    });

    let slots = slots.into_inner().expect("slot lock");
    let mut records: Vec<EvaluationRecord> = candidates
        .iter()
        .zip(requests)
        .zip(slots)
        .map(|((c, req), slot)| {
            let (outcome, wall_seconds, worker_slot) = slot.expect("every candidate evaluated");
            let (objective, status) = match outcome {
                EvalOutcome::Ok(f) if f.is_finite() => (Some(f), EvalStatus::Ok),
                EvalOutcome::Ok(_) | EvalOutcome::Failed(_) => (None, EvalStatus::Failed),
                EvalOutcome::Timeout => (None, EvalStatus::Timeout),
            };
            EvaluationRecord {
                candidate_id: c.id,
                generation: c.generation,
                gen_index: c.gen_index,
                genotype: c.genotype.clone(),
                phenotype: req.params,
                objective,
                status,
                wall_seconds,
                worker_slot,
            }
        })
        .collect();
    records.sort_by_key(|r| r.gen_index);
    Ok(records)
}

/// Objectives for every candidate of a generation, with failed and timed-out
/// evaluations replaced according to `policy`. `records` must be in the same
/// order as `candidates`.
pub fn resolve_failures(
    candidates: &[Candidate],
    records: &[EvaluationRecord],
    policy: FailurePolicy,
) -> Result<Vec<(Candidate, f64)>, EngineError> {
    if candidates.len() != records.len() {
        return Err(EngineError::Config(format!(
            "{} candidates but {} records",
            candidates.len(),
            records.len()
        )));
    }
    let ok: Vec<f64> = records
        .iter()
        .filter(|r| r.is_ok())
        .filter_map(|r| r.objective)
        .collect();
    if ok.is_empty() {
        return Err(EngineError::GenerationCollapse {
            generation: records.first().map_or(0, |r| r.generation),
        });
    }
    let penalty = match policy {
        FailurePolicy::FixedPenalty(v) => v,
        FailurePolicy::WorstOfGenerationPlusMargin => {
            let max = ok.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let min = ok.iter().copied().fold(f64::INFINITY, f64::min);
            let spread = max - min;
            if spread > 0.0 {
                max + 0.1 * spread
            } else {
                max + 1.0
            }
        }
    };
    Ok(candidates
        .iter()
        .zip(records)
        .map(|(c, r)| {
            debug_assert_eq!(c.id, r.candidate_id);
            let f = match r.objective {
                Some(f) if r.is_ok() => f,
                _ => penalty,
            };
            (c.clone(), f)
        })
        .collect())
}

enum Driver {
    Cma(Box<CmaState>),
    Prior(PriorSampler),
}

/// Runs the ask → evaluate → resolve → tell loop until at least
/// `max_evaluations` candidates have been evaluated.
pub fn run_optimization(
    config: &RunConfig,
    space: &SearchSpace,
    evaluator: Arc<dyn Evaluator>,
    sink: &mut dyn LogSink,
) -> Result<RunLog, EngineError> {
    config.validate()?;
    let dim = space.dim_count();
    let mut driver = match config.optimizer {
        OptimizerKind::Cma => Driver::Cma(Box::new(CmaState::new(
            dim,
            config.lambda,
            &vec![cma::DEFAULT_MEAN; dim],
            cma::DEFAULT_SIGMA,
            config.seed,
        )?)),
        OptimizerKind::RandomPrior => Driver::Prior(PriorSampler::new(dim, config.seed)?),
    };
    let options = DispatchOptions::from_config(config);
    let header = RunHeader::new(config, space);
    sink.header(&header)?;
    let mut log = RunLog::new(header);

    while log.records.len() < config.max_evaluations {
        let candidates = match &mut driver {
            Driver::Cma(state) => state.ask()?,
            Driver::Prior(sampler) => sampler.next_batch(config.lambda),
        };
        let records = dispatch_generation(&candidates, space, &evaluator, &options)?;
        for r in &records {
            sink.append(r)?;
        }
        sink.flush()?;
        log.records.extend(records.iter().cloned());

        let resolved = resolve_failures(&candidates, &records, config.failure_policy)?;
        if let Driver::Cma(state) = &mut driver {
            state.tell(&resolved)?;
        }
    }
    Ok(log)
}
