//! Post-hoc analysis of run logs and the CSV tables written for it.
//!
//! Tables start with a `#` comment line naming the source and parameters,
//! followed by a header row. Numbers use 17 significant digits.

use std::fmt::Write as _;

use thiserror::Error;

use crate::kde::{kde_diffusion, DensityEstimate, KdeError};
use crate::runlog::{EvalStatus, RunLog};

pub const DEFAULT_FIRST: usize = 30;
pub const DEFAULT_LAST: usize = 100;
pub const DEFAULT_DENSITY_MESH: usize = 256;
pub const DEFAULT_ERROR_MESH: usize = 5000;
pub const DEFAULT_DIVERGENCE_THRESHOLD: f64 = 0.7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReportError {
    #[error("log has no ok evaluations")]
    NoOkRecords,
    #[error("log is empty")]
    EmptyLog,
    #[error("insufficient records: need {needed}, log has {have}")]
    InsufficientRecords { needed: usize, have: usize },
    #[error("no logs given")]
    NoLogs,
    #[error("density for {what}: {source}")]
    Kde {
        what: String,
        #[source]
        source: KdeError,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryPoint {
    pub eval_index: usize,
    pub candidate_id: u64,
    pub generation: u64,
    pub status: EvalStatus,
    pub objective: Option<f64>,
    /// Running minimum of ok objectives up to and including this record.
    pub best_so_far: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationSummary {
    pub generation: u64,
    pub best: Option<f64>,
    pub median: Option<f64>,
    pub ok_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub points: Vec<TrajectoryPoint>,
    pub generations: Vec<GenerationSummary>,
}

impl Trajectory {
    /// Best-so-far after `evals` evaluations (1-based count).
    pub fn best_after(&self, evals: usize) -> Option<f64> {
        self.points.get(evals.checked_sub(1)?)?.best_so_far
    }

    pub fn final_best(&self) -> Option<f64> {
        self.points.last()?.best_so_far
    }
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

/// Running minimum over ok objectives in id order.
pub fn best_so_far(log: &RunLog) -> Result<Trajectory, ReportError> {
    if log.records.is_empty() {
        return Err(ReportError::EmptyLog);
    }
    let mut records: Vec<_> = log.records.iter().collect();
    records.sort_by_key(|r| r.candidate_id);

    let mut best: Option<f64> = None;
    let mut points = Vec::with_capacity(records.len());
    for (eval_index, r) in records.iter().enumerate() {
        if let (EvalStatus::Ok, Some(f)) = (r.status, r.objective) {
            best = Some(best.map_or(f, |b| b.min(f)));
        }
        points.push(TrajectoryPoint {
            eval_index,
            candidate_id: r.candidate_id,
            generation: r.generation,
            status: r.status,
            objective: r.objective,
            best_so_far: best,
        });
    }
    if best.is_none() {
        return Err(ReportError::NoOkRecords);
    }

    let mut generations: Vec<GenerationSummary> = Vec::new();
    let mut i = 0;
    while i < records.len() {
        let g = records[i].generation;
        let mut ok: Vec<f64> = Vec::new();
        while i < records.len() && records[i].generation == g {
            if records[i].status == EvalStatus::Ok {
                ok.extend(records[i].objective);
            }
            i += 1;
        }
        generations.push(GenerationSummary {
            generation: g,
            best: ok.iter().copied().reduce(f64::min),
            ok_count: ok.len(),
            median: median(&mut ok),
        });
    }
    Ok(Trajectory { points, generations })
}

/// Early and late genotype densities for one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct DimDensity {
    pub name: String,
    pub first: DensityEstimate,
    pub last: DensityEstimate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityReport {
    pub first_n: usize,
    pub last_m: usize,
    pub dims: Vec<DimDensity>,
}

/// Per-dimension densities of the first `first_n` and the last `last_m`
/// evaluated genotypes, each on `[0,1]`.
pub fn density_report(log: &RunLog, first_n: usize, last_m: usize, mesh: usize) -> Result<DensityReport, ReportError> {
    let have = log.records.len();
    let needed = first_n + last_m;
    if have < needed {
        return Err(ReportError::InsufficientRecords { needed, have });
    }
    let mut records: Vec<_> = log.records.iter().collect();
    records.sort_by_key(|r| r.candidate_id);
    let early = &records[..first_n];
    let late = &records[have - last_m..];

    let names = log.header.dim_names();
    let dims = names
        .into_iter()
        .enumerate()
        .map(|(d, name)| {
            let column = |rs: &[&crate::runlog::EvaluationRecord]| rs.iter().map(|r| r.genotype[d]).collect::<Vec<_>>();
            let kde = |xs: Vec<f64>, which: &str| {
                kde_diffusion(&xs, mesh, 0.0, 1.0).map_err(|source| ReportError::Kde {
                    what: format!("{name} ({which})"),
                    source,
                })
            };
            Ok(DimDensity {
                first: kde(column(early), "first")?,
                last: kde(column(late), "last")?,
                name,
            })
        })
        .collect::<Result<Vec<_>, ReportError>>()?;
    Ok(DensityReport { first_n, last_m, dims })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorDensity {
    pub run_id: String,
    pub density: DensityEstimate,
    /// Share of records whose objective exceeds the threshold or that did
    /// not finish ok.
    pub divergence_fraction: f64,
}

pub fn divergence_fraction(log: &RunLog, threshold: f64) -> Result<f64, ReportError> {
    if log.records.is_empty() {
        return Err(ReportError::EmptyLog);
    }
    let diverged = log
        .records
        .iter()
        .filter(|r| r.status != EvalStatus::Ok || r.objective.is_none_or(|f| f > threshold))
        .count();
    Ok(diverged as f64 / log.records.len() as f64)
}

/// Objective density per log over `[min, max]` padded by 5% on each side,
/// plus the divergence fraction.
pub fn error_density(logs: &[RunLog], mesh: usize, threshold: f64) -> Result<Vec<ErrorDensity>, ReportError> {
    if logs.is_empty() {
        return Err(ReportError::NoLogs);
    }
    logs.iter()
        .map(|log| {
            let fraction = divergence_fraction(log, threshold)?;
            let values: Vec<f64> = log
                .records
                .iter()
                .filter(|r| r.status == EvalStatus::Ok)
                .filter_map(|r| r.objective)
                .collect();
            if values.is_empty() {
                return Err(ReportError::NoOkRecords);
            }
            let min = values.iter().copied().fold(f64::INFINITY, f64::min);
            let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let pad = if max > min { 0.05 * (max - min) } else { 0.05 * min.abs().max(1.0) };
            let density = kde_diffusion(&values, mesh, min - pad, max + pad).map_err(|source| ReportError::Kde {
                what: format!("objectives of {}", log.header.run_id),
                source,
            })?;
            Ok(ErrorDensity {
                run_id: log.header.run_id.clone(),
                density,
                divergence_fraction: fraction,
            })
        })
        .collect()
}

/// 17 significant digits.
pub fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_num).unwrap_or_default()
}

fn status_str(s: EvalStatus) -> &'static str {
    match s {
        EvalStatus::Ok => "ok",
        EvalStatus::Failed => "failed",
        EvalStatus::Timeout => "timeout",
    }
}

pub fn trajectory_table(source: &str, t: &Trajectory) -> String {
    let mut out = format!("# trajectory source={source}\n");
    out.push_str("eval_index,candidate_id,generation,status,objective,best_so_far,generation_best,generation_median\n");
    for p in &t.points {
        let g = t.generations.iter().find(|g| g.generation == p.generation);
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            p.eval_index,
            p.candidate_id,
            p.generation,
            status_str(p.status),
            fmt_opt(p.objective),
            fmt_opt(p.best_so_far),
            fmt_opt(g.and_then(|g| g.best)),
            fmt_opt(g.and_then(|g| g.median)),
        );
    }
    out
}

pub fn density_table(source: &str, r: &DensityReport) -> String {
    let mesh_len = r.dims.first().map_or(0, |d| d.first.mesh.len());
    let mut out = format!(
        "# density source={source} first={} last={} mesh={mesh_len}\n",
        r.first_n, r.last_m
    );
    out.push_str("mesh");
    for d in &r.dims {
        let _ = write!(out, ",{0}_first,{0}_last", d.name);
    }
    out.push('\n');
    for j in 0..mesh_len {
        out.push_str(&fmt_num(r.dims[0].first.mesh[j]));
        for d in &r.dims {
            let _ = write!(out, ",{},{}", fmt_num(d.first.density[j]), fmt_num(d.last.density[j]));
        }
        out.push('\n');
    }
    out
}

pub fn error_density_table(sources: &[String], threshold: f64, densities: &[ErrorDensity]) -> String {
    let mesh_len = densities.first().map_or(0, |d| d.density.mesh.len());
    let mut out = format!("# error_density threshold={} mesh={mesh_len}", fmt_num(threshold));
    for (src, d) in sources.iter().zip(densities) {
        let _ = write!(out, " {src}:divergence_fraction={}", fmt_num(d.divergence_fraction));
    }
    out.push('\n');
    let cols: Vec<String> = (0..densities.len())
        .flat_map(|i| [format!("log{i}_mesh"), format!("log{i}_density")])
        .collect();
    out.push_str(&cols.join(","));
    out.push('\n');
    for j in 0..mesh_len {
        let row: Vec<String> = densities
            .iter()
            .flat_map(|d| [fmt_num(d.density.mesh[j]), fmt_num(d.density.density[j])])
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}
