//! Stepwise (STP), forward (FTP) and hybrid (HTP) trace pursuit.

use std::collections::HashSet;

use rayon::prelude::*;
use serde::Serialize;

use crate::data::CenteredSample;
use crate::error::{Error, Result};
use crate::kernels::{self, AuxiliarySaveDrStats, Method, ResidualStats, WorkingSet};
use crate::null::{test_residual, QuantileMethod};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StpConfig {
    pub method: Method,
    pub alpha: f64,
    pub max_iterations: usize,
    pub max_set_size: usize,
    pub quantile: QuantileMethod,
}

impl StpConfig {
    /// Defaults for a dataset with `n` samples, `p` predictors and `h_count`
    /// slices: `alpha = 0.1 / p` and working sets capped at `n - h_count - 2`.
    pub fn new(method: Method, n: usize, p: usize, h_count: usize) -> Self {
        Self {
            method,
            alpha: 0.1 / p as f64,
            max_iterations: 500,
            max_set_size: n.saturating_sub(h_count + 2).max(1),
            quantile: QuantileMethod::TwoMoment,
        }
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    fn validate(&self, n: usize) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidInput(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        if self.max_set_size >= n {
            return Err(Error::InvalidInput(format!(
                "max_set_size {} must be below the sample size {n}",
                self.max_set_size
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Add,
    Delete,
    /// A candidate was left out of a scan because its design was singular.
    Skip,
    Stop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Converged,
    MaxIterations,
    Cycle,
    EmptyUniverse,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrailEntry {
    pub action: Action,
    pub index: Option<usize>,
    pub statistic: Option<f64>,
    pub threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl TrailEntry {
    fn decision(action: Action, index: usize, statistic: f64, threshold: f64) -> Self {
        Self {
            action,
            index: Some(index),
            statistic: Some(statistic),
            threshold: Some(threshold),
            note: None,
        }
    }

    fn skip(index: usize, err: &Error) -> Self {
        Self {
            action: Action::Skip,
            index: Some(index),
            statistic: None,
            threshold: None,
            note: Some(err.to_string()),
        }
    }

    fn stop(reason: StopReason) -> Self {
        Self {
            action: Action::Stop,
            index: None,
            statistic: None,
            threshold: None,
            note: Some(
                match reason {
                    StopReason::Converged => "converged",
                    StopReason::MaxIterations => "max-iterations",
                    StopReason::Cycle => "cycle",
                    StopReason::EmptyUniverse => "empty-universe",
                }
                .into(),
            ),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct StageSizes {
    pub screened: usize,
    #[serde(rename = "final")]
    pub final_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionReport {
    pub method: Method,
    /// Selected predictors, ascending.
    pub selected: Vec<usize>,
    /// Index set the stepwise stage searched.
    pub screened: Vec<usize>,
    pub trail: Vec<TrailEntry>,
    pub stage_sizes: StageSizes,
    pub stop_reason: StopReason,
}

impl SelectionReport {
    /// Reapplies the add/delete actions of the trail starting from `∅`.
    pub fn replay(&self) -> Vec<usize> {
        let mut set: Vec<usize> = Vec::new();
        for e in &self.trail {
            match (e.action, e.index) {
                (Action::Add, Some(j)) => set.push(j),
                (Action::Delete, Some(j)) => set.retain(|&k| k != j),
                _ => {}
            }
        }
        set.sort_unstable();
        set
    }
}

/// Index of the largest score, ties going to the smallest candidate index.
/// `scores` must be sorted by candidate index.
fn argmax_by_index<T>(scores: &[(usize, f64, T)]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (pos, s) in scores.iter().enumerate() {
        match best {
            Some(b) if !(s.1 > scores[b].1) => {}
            _ => best = Some(pos),
        }
    }
    best
}

type Scan = (Vec<(usize, f64, ResidualStats)>, Vec<(usize, Error)>);

fn scan_candidates(ws: &WorkingSet<'_>, method: Method, candidates: &[usize]) -> Scan {
    let results: Vec<(usize, Result<(f64, ResidualStats)>)> = candidates
        .par_iter()
        .map(|&j| (j, ws.candidate_diff(method, j)))
        .collect();
    let mut ok = Vec::new();
    let mut skipped = Vec::new();
    for (j, r) in results {
        match r {
            Ok((d, res)) => ok.push((j, d, res)),
            Err(e) => skipped.push((j, e)),
        }
    }
    (ok, skipped)
}

/// Stepwise trace pursuit over `universe`, starting from the empty set.
///
/// Each pass tries one forward addition (the candidate with the largest
/// trace increase, kept if its statistic exceeds the null quantile) and one
/// backward deletion (the member whose removal costs least, dropped if its
/// statistic at the reduced set falls below that set's null quantile). The
/// loop ends when a pass changes nothing, when a working set recurs, or after
/// `max_iterations` passes.
pub fn stp_run(
    sample: &CenteredSample,
    cfg: &StpConfig,
    universe: &[usize],
) -> Result<SelectionReport> {
    cfg.validate(sample.n())?;
    let p = sample.p();
    let mut universe: Vec<usize> = universe.to_vec();
    universe.sort_unstable();
    universe.dedup();
    if let Some(&bad) = universe.iter().find(|&&j| j >= p) {
        return Err(Error::IndexOutOfRange { index: bad, p });
    }
    let method = cfg.method;
    let mut trail = Vec::new();
    let finish = |selected: Vec<usize>, mut trail: Vec<TrailEntry>, reason: StopReason| {
        trail.push(TrailEntry::stop(reason));
        let mut selected = selected;
        selected.sort_unstable();
        SelectionReport {
            method,
            stage_sizes: StageSizes {
                screened: universe.len(),
                final_size: selected.len(),
            },
            selected,
            screened: universe.clone(),
            trail,
            stop_reason: reason,
        }
    };
    if universe.is_empty() {
        return Ok(finish(Vec::new(), trail, StopReason::EmptyUniverse));
    }

    let mut current: Vec<usize> = Vec::new();
    let mut visited: HashSet<Vec<usize>> = HashSet::new();
    visited.insert(Vec::new());

    for _ in 0..cfg.max_iterations {
        let mut changed = false;

        // forward addition
        let outside: Vec<usize> = universe
            .iter()
            .copied()
            .filter(|j| !current.contains(j))
            .collect();
        if !outside.is_empty() && current.len() < cfg.max_set_size {
            let ws = WorkingSet::new(sample, &current)?;
            let (scores, skipped) = scan_candidates(&ws, method, &outside);
            trail.extend(skipped.iter().map(|(j, e)| TrailEntry::skip(*j, e)));
            if let Some(best) = argmax_by_index(&scores) {
                let (j, _, res) = &scores[best];
                match test_residual(method, &ws, res, cfg.alpha, cfg.quantile) {
                    Ok(t) if t.reject => {
                        current.push(*j);
                        trail.push(TrailEntry::decision(
                            Action::Add,
                            *j,
                            t.statistic,
                            t.threshold,
                        ));
                        changed = true;
                    }
                    Ok(_) => {}
                    Err(e) => trail.push(TrailEntry::skip(*j, &e)),
                }
            }
        }

        // backward deletion
        if !current.is_empty() {
            let mut sorted = current.clone();
            sorted.sort_unstable();
            let evaluated: Vec<(usize, Result<(f64, ResidualStats)>)> = sorted
                .par_iter()
                .map(|&d| {
                    let rest: Vec<usize> = current.iter().copied().filter(|&k| k != d).collect();
                    let r =
                        WorkingSet::new(sample, &rest).and_then(|ws| ws.candidate_diff(method, d));
                    (d, r)
                })
                .collect();
            // removing d keeps the largest trace when its own increment is smallest
            let mut best: Option<(usize, f64)> = None;
            for (d, r) in &evaluated {
                match r {
                    Ok((diff, _)) => {
                        if best.is_none_or(|(_, b)| *diff < b) {
                            best = Some((*d, *diff));
                        }
                    }
                    Err(e) => trail.push(TrailEntry::skip(*d, e)),
                }
            }
            if let Some((d, _)) = best {
                let rest: Vec<usize> = current.iter().copied().filter(|&k| k != d).collect();
                let ws = WorkingSet::new(sample, &rest)?;
                let res = ws.residualize(d)?;
                match test_residual(method, &ws, &res, cfg.alpha, cfg.quantile) {
                    Ok(t) if t.statistic < t.threshold => {
                        current = rest;
                        trail.push(TrailEntry::decision(
                            Action::Delete,
                            d,
                            t.statistic,
                            t.threshold,
                        ));
                        changed = true;
                    }
                    Ok(_) => {}
                    Err(e) => trail.push(TrailEntry::skip(d, &e)),
                }
            }
        }

        if !changed {
            return Ok(finish(current, trail, StopReason::Converged));
        }
        let mut key = current.clone();
        key.sort_unstable();
        if !visited.insert(key) {
            return Ok(finish(current, trail, StopReason::Cycle));
        }
    }
    Ok(finish(current, trail, StopReason::MaxIterations))
}

/// Modified BIC: `−log trace + |F| (log n + 2 log p) / n`. Nonpositive
/// traces score `+∞`.
pub fn bic_score(trace_value: f64, set_size: usize, n: usize, p: usize) -> f64 {
    if !(trace_value > 0.0) {
        return f64::INFINITY;
    }
    let n_f = n as f64;
    -trace_value.ln() + set_size as f64 * (n_f.ln() + 2.0 * (p as f64).ln()) / n_f
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathStep {
    pub added_index: usize,
    pub trace_value: f64,
    pub bic_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolutionPath {
    pub method: Method,
    pub steps: Vec<PathStep>,
    /// Requested path length; `steps` is shorter only when every remaining
    /// candidate had to be skipped.
    pub k_max: usize,
    pub n: usize,
    pub p: usize,
    /// `(step, index)` pairs left out of a step's scan as collinear.
    pub skipped: Vec<(usize, usize)>,
}

impl SolutionPath {
    pub fn prefix(&self, k: usize) -> Vec<usize> {
        self.steps[..k].iter().map(|s| s.added_index).collect()
    }

    /// Length of the BIC-minimizing prefix (ties to the shorter one), or
    /// `None` for an empty path.
    pub fn bic_choice(&self) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (k, s) in self.steps.iter().enumerate() {
            if best.is_none_or(|(_, b)| s.bic_value < b) {
                best = Some((k + 1, s.bic_value));
            }
        }
        best.map(|(k, _)| k)
    }
}

/// Default FTP path length `min(p, n − H − 2)`.
pub fn default_k_max(n: usize, p: usize, h_count: usize) -> usize {
    p.min(n.saturating_sub(h_count + 2))
}

/// Forward trace pursuit: the greedy path that adds, at each step, the
/// candidate with the largest trace increase.
///
/// Candidates are kept as residuals against the current set, updated by
/// modified Gram–Schmidt after every addition, so a step costs `O(n p)` for
/// SIR and `O(n p |F|)` for SAVE and DR.
pub fn ftp_run(sample: &CenteredSample, method: Method, k_max: usize) -> Result<SolutionPath> {
    let n = sample.n();
    let p = sample.p();
    let slices = sample.slices();
    let h_count = slices.h_count();
    let cap = default_k_max(n, p, h_count);
    if k_max == 0 || k_max > cap {
        return Err(Error::InvalidInput(format!(
            "path length must lie in 1..={cap}, got {k_max}"
        )));
    }
    let props = slices.proportions().to_vec();

    let mut residuals: Vec<Option<Vec<f64>>> =
        (0..p).map(|j| Some(sample.column(j).to_vec())).collect();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut basis_means: Vec<nalgebra::DVector<f64>> = vec![nalgebra::DVector::zeros(0); h_count];
    let mut kappa = 0.0;
    let mut trace = 0.0;
    let mut steps = Vec::with_capacity(k_max);
    let mut skipped = Vec::new();

    for step in 0..k_max {
        let candidates: Vec<usize> = (0..p).filter(|&j| residuals[j].is_some()).collect();
        let evaluated: Vec<(usize, Result<(f64, Vec<f64>)>)> = candidates
            .par_iter()
            .map(|&j| {
                let e = residuals[j].as_deref().expect("candidate residual");
                let r = kernels::standardize_residual(e, sample.column_var(j), j, slices).map(
                    |(_, gamma, gamma_h, zeta_h)| {
                        let aux = if method == Method::Sir {
                            None
                        } else {
                            let cols: Vec<&[f64]> = basis.iter().map(Vec::as_slice).collect();
                            let nu = kernels::slice_cross_means(&cols, &gamma, slices);
                            Some(kernels::auxiliary_from(
                                nu,
                                &basis_means,
                                kappa,
                                &props,
                                &gamma_h,
                            ))
                        };
                        let aux = aux.unwrap_or_else(empty_aux);
                        let d = kernels::diff_from_parts(method, &props, &gamma_h, &zeta_h, &aux);
                        (d, gamma)
                    },
                );
                (j, r)
            })
            .collect();

        let mut best: Option<(usize, f64, Vec<f64>)> = None;
        for (j, r) in evaluated {
            match r {
                Ok((d, gamma)) => {
                    if best.as_ref().is_none_or(|(_, b, _)| d > *b) {
                        best = Some((j, d, gamma));
                    }
                }
                Err(_) => skipped.push((step + 1, j)),
            }
        }
        let Some((j, diff, q)) = best else { break };

        trace += diff;
        let size = step + 1;
        steps.push(PathStep {
            added_index: j,
            trace_value: trace,
            bic_value: bic_score(trace, size, n, p),
        });

        residuals[j] = None;
        let q_means = slices.slice_means(&q);
        kappa += props
            .iter()
            .zip(&q_means)
            .map(|(ph, g)| ph * g * g)
            .sum::<f64>();
        for (h, m) in basis_means.iter_mut().enumerate() {
            let mut grown = m.clone().resize_vertically(m.len() + 1, 0.0);
            grown[m.len()] = q_means[h];
            *m = grown;
        }
        residuals.par_iter_mut().flatten().for_each(|e| {
            let c = e.iter().zip(&q).map(|(a, b)| a * b).sum::<f64>() / n as f64;
            for (ei, qi) in e.iter_mut().zip(&q) {
                *ei -= c * qi;
            }
        });
        basis.push(q);
    }

    Ok(SolutionPath {
        method,
        steps,
        k_max,
        n,
        p,
        skipped,
    })
}

fn empty_aux() -> AuxiliarySaveDrStats {
    AuxiliarySaveDrStats {
        phi_by_slice: Vec::new(),
        nu_by_slice: Vec::new(),
        iota_by_slice: Vec::new(),
        iota_sum: nalgebra::DVector::zeros(0),
        varrho: 0.0,
        kappa: 0.0,
    }
}

/// Hybrid trace pursuit: screen with the FTP path cut at its BIC minimum,
/// then run STP on the screened indices (reusing the original slicing).
pub fn htp_run(
    sample: &CenteredSample,
    cfg: &StpConfig,
) -> Result<(SelectionReport, SolutionPath)> {
    let k_max = default_k_max(sample.n(), sample.p(), sample.slices().h_count());
    let path = ftp_run(sample, cfg.method, k_max)?;
    let screened = path
        .bic_choice()
        .map(|k| path.prefix(k))
        .unwrap_or_default();
    let mut report = stp_run(sample, cfg, &screened)?;
    report.stage_sizes.screened = screened.len();
    Ok((report, path))
}
