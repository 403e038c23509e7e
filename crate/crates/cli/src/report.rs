//! Report records and their table / CSV renderings.

use std::io::Write;

use serde::Serialize;
use trace_pursuit::{
    Action, Algorithm, ExperimentResult, Method, Model, PredictorDist, SelectionReport,
    SolutionPath, StopReason, TraceTest,
};

use crate::error::CliError;
use crate::{CommandKind, RunConfig};

pub const SCHEMA_VERSION: u32 = 1;

pub(crate) fn one_based(v: &[usize]) -> Vec<usize> {
    v.iter().map(|j| j + 1).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct DataSummary {
    pub n: usize,
    pub p: usize,
    pub names: Vec<String>,
}

#[derive(Serialize)]
pub(crate) struct Record<'a> {
    pub schema_version: u32,
    pub command: CommandKind,
    pub config: &'a RunConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<&'a DataSummary>,
    pub result: &'a Outcome,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timings_ms: Option<f64>,
}

#[derive(Debug, Serialize)]
#[serde(untagged)]
pub(crate) enum Outcome {
    Select(SelectOut),
    Screen(ScreenOut),
    Test(TestOut),
    Bench(BenchOut),
}

#[derive(Debug, Serialize)]
pub(crate) struct TrailRow {
    action: Action,
    index: Option<usize>,
    statistic: Option<f64>,
    threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    note: Option<String>,
}

#[derive(Debug, Serialize)]
pub(crate) struct SelectOut {
    algorithm: Algorithm,
    method: Method,
    alpha: f64,
    selected: Vec<usize>,
    screened: Vec<usize>,
    screened_size: usize,
    final_size: usize,
    stop_reason: StopReason,
    trail: Vec<TrailRow>,
}

impl SelectOut {
    pub fn new(algorithm: Algorithm, alpha: f64, r: &SelectionReport) -> Self {
        Self {
            algorithm,
            method: r.method,
            alpha,
            selected: one_based(&r.selected),
            screened: one_based(&r.screened),
            screened_size: r.stage_sizes.screened,
            final_size: r.stage_sizes.final_size,
            stop_reason: r.stop_reason,
            trail: r
                .trail
                .iter()
                .map(|e| TrailRow {
                    action: e.action,
                    index: e.index.map(|j| j + 1),
                    statistic: e.statistic,
                    threshold: e.threshold,
                    note: e.note.clone(),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Serialize)]
pub(crate) struct StepRow {
    step: usize,
    index: usize,
    trace: f64,
    bic: f64,
}

#[derive(Debug, Serialize)]
pub(crate) struct ScreenOut {
    method: Method,
    k_max: usize,
    steps: Vec<StepRow>,
    chosen_size: usize,
    chosen: Vec<usize>,
    /// `(step, index)` pairs skipped as collinear.
    skipped: Vec<(usize, usize)>,
}

impl ScreenOut {
    pub fn new(path: &SolutionPath) -> Self {
        let k = path.bic_choice().unwrap_or(0);
        Self {
            method: path.method,
            k_max: path.k_max,
            steps: path
                .steps
                .iter()
                .enumerate()
                .map(|(s, st)| StepRow {
                    step: s + 1,
                    index: st.added_index + 1,
                    trace: st.trace_value,
                    bic: st.bic_value,
                })
                .collect(),
            chosen_size: k,
            chosen: one_based(&path.prefix(k)),
            skipped: path.skipped.iter().map(|&(s, j)| (s, j + 1)).collect(),
        }
    }
}

#[derive(Debug, Serialize)]
pub(crate) struct WeightSummary {
    count: usize,
    sum: f64,
    largest: f64,
    smallest: f64,
}

#[derive(Debug, Serialize)]
pub(crate) struct TestOut {
    method: Method,
    set: Vec<usize>,
    candidate: usize,
    alpha: f64,
    statistic: f64,
    threshold: f64,
    decision: &'static str,
    weights: WeightSummary,
}

impl TestOut {
    pub fn new(t: &TraceTest, alpha: f64) -> Self {
        let w = &t.weights;
        Self {
            method: t.method,
            set: one_based(&t.set),
            candidate: t.candidate + 1,
            alpha,
            statistic: t.statistic,
            threshold: t.threshold,
            decision: if t.reject { "reject H0" } else { "retain H0" },
            weights: WeightSummary {
                count: w.len(),
                sum: w.iter().sum(),
                largest: w.first().copied().unwrap_or(0.0),
                smallest: w.last().copied().unwrap_or(0.0),
            },
        }
    }
}

#[derive(Debug, Serialize)]
pub(crate) struct BenchOut {
    model: Model,
    n: usize,
    p: usize,
    rho: f64,
    dist: PredictorDist,
    algorithm: Algorithm,
    method: Method,
    alpha: f64,
    uf: usize,
    cf: usize,
    of: usize,
    ms: f64,
    n_reps: usize,
    failures: usize,
}

impl BenchOut {
    pub fn new(r: &ExperimentResult, alpha: Option<f64>) -> Self {
        let d = &r.design;
        Self {
            model: d.model,
            n: d.n,
            p: d.p,
            rho: d.rho,
            dist: d.predictor_dist,
            algorithm: r.algorithm,
            method: r.method,
            alpha: alpha.unwrap_or(0.1 / d.p as f64),
            uf: r.metrics.uf,
            cf: r.metrics.cf,
            of: r.metrics.of,
            ms: r.metrics.ms,
            n_reps: r.metrics.n_reps,
            failures: r.failures,
        }
    }
}

fn list(v: &[usize]) -> String {
    if v.is_empty() {
        return "{}".into();
    }
    let parts: Vec<String> = v.iter().map(usize::to_string).collect();
    format!("{{{}}}", parts.join(", "))
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.4}"))
}

pub(crate) fn write_table(
    o: &Outcome,
    data: Option<&DataSummary>,
    w: &mut dyn Write,
) -> std::io::Result<()> {
    if let Some(d) = data {
        writeln!(w, "data: n = {}, p = {}", d.n, d.p)?;
    }
    match o {
        Outcome::Select(s) => {
            writeln!(w, "{}-{} at alpha = {}", s.algorithm, s.method, s.alpha)?;
            writeln!(
                w,
                "{:<8} {:>6} {:>12} {:>12}",
                "action", "index", "statistic", "threshold"
            )?;
            for t in &s.trail {
                let action = serde_json::to_value(t.action).ok();
                let action = action.as_ref().and_then(|v| v.as_str()).unwrap_or("?");
                let index = t.index.map_or("-".into(), |j| j.to_string());
                writeln!(
                    w,
                    "{:<8} {:>6} {:>12} {:>12}",
                    action,
                    index,
                    opt(t.statistic),
                    opt(t.threshold)
                )?;
            }
            writeln!(w, "screened ({}): {}", s.screened_size, list(&s.screened))?;
            writeln!(w, "selected ({}): {}", s.final_size, list(&s.selected))?;
        }
        Outcome::Screen(s) => {
            writeln!(w, "FTP-{} path, k_max = {}", s.method, s.k_max)?;
            writeln!(
                w,
                "{:>5} {:>6} {:>12} {:>12}",
                "step", "index", "trace", "bic"
            )?;
            for st in &s.steps {
                let mark = if st.step == s.chosen_size { " *" } else { "" };
                writeln!(
                    w,
                    "{:>5} {:>6} {:>12.6} {:>12.6}{mark}",
                    st.step, st.index, st.trace, st.bic
                )?;
            }
            for (step, j) in &s.skipped {
                writeln!(w, "skipped index {j} at step {step} (collinear)")?;
            }
            writeln!(w, "BIC choice ({}): {}", s.chosen_size, list(&s.chosen))?;
        }
        Outcome::Test(t) => {
            writeln!(
                w,
                "{} test of x{} given {}",
                t.method,
                t.candidate,
                list(&t.set)
            )?;
            writeln!(w, "statistic  {:.6}", t.statistic)?;
            writeln!(w, "threshold  {:.6} (alpha = {})", t.threshold, t.alpha)?;
            writeln!(
                w,
                "weights    {} (sum {:.4}, largest {:.4}, smallest {:.4})",
                t.weights.count, t.weights.sum, t.weights.largest, t.weights.smallest
            )?;
            writeln!(w, "decision   {}", t.decision)?;
        }
        Outcome::Bench(b) => {
            writeln!(
                w,
                "model {:?}, n = {}, p = {}, rho = {}, {:?} predictors",
                b.model, b.n, b.p, b.rho, b.dist
            )?;
            writeln!(
                w,
                "{:<10} {:>5} {:>5} {:>5} {:>7} {:>5} {:>8}",
                "method", "UF", "CF", "OF", "MS", "N", "failed"
            )?;
            writeln!(
                w,
                "{:<10} {:>5} {:>5} {:>5} {:>7.2} {:>5} {:>8}",
                format!("{}-{}", b.algorithm, b.method),
                b.uf,
                b.cf,
                b.of,
                b.ms,
                b.n_reps,
                b.failures
            )?;
        }
    }
    Ok(())
}

pub(crate) fn write_csv(o: &Outcome, w: &mut dyn Write) -> Result<(), CliError> {
    let mut cw = csv::Writer::from_writer(w);
    let err = |e: csv::Error| CliError::Csv(e.to_string());
    match o {
        Outcome::Select(s) => {
            for t in &s.trail {
                cw.serialize(t).map_err(err)?;
            }
        }
        Outcome::Screen(s) => {
            for st in &s.steps {
                cw.serialize(st).map_err(err)?;
            }
        }
        Outcome::Test(t) => {
            cw.write_record([
                "method",
                "set",
                "candidate",
                "alpha",
                "statistic",
                "threshold",
                "decision",
            ])
            .map_err(err)?;
            let set: Vec<String> = t.set.iter().map(usize::to_string).collect();
            cw.write_record([
                t.method.to_string(),
                set.join(" "),
                t.candidate.to_string(),
                t.alpha.to_string(),
                t.statistic.to_string(),
                t.threshold.to_string(),
                t.decision.to_string(),
            ])
            .map_err(err)?;
        }
        Outcome::Bench(b) => cw.serialize(b).map_err(err)?,
    }
    cw.flush().map_err(|e| CliError::Csv(e.to_string()))
}
