//! Simulation designs and selection metrics for the benchmark models.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Geometric, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::data::{slice_response, CenteredSample, Dataset};
use crate::error::{Error, Result};
use crate::kernels::Method;
use crate::select::{default_k_max, ftp_run, htp_run, stp_run, StpConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Model {
    /// `sgn(x1 + xp) exp(x2 + x(p-1)) + ε`
    I,
    /// `2 x1² xp² − 2 x2² x(p-1)² + ε`
    II,
    /// `x1⁴ − xp⁴ + 3 exp(0.8 x2 + 0.6 x(p-1)) + ε`
    III,
}

impl std::str::FromStr for Model {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "I" | "1" => Ok(Model::I),
            "II" | "2" => Ok(Model::II),
            "III" | "3" => Ok(Model::III),
            _ => Err(Error::InvalidInput(format!(
                "unknown model '{s}' (expected I, II or III)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictorDist {
    /// Gaussian with `Cov(x_i, x_j) = ρ^|i−j|`.
    Normal,
    /// Uniform on `(1, 2)`.
    Uniform,
    /// Exponential with rate 1.
    Exponential,
    /// Geometric with success probability 1/2 on `{1, 2, …}`.
    Geometric,
}

impl std::str::FromStr for PredictorDist {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "normal" | "gaussian" => Ok(PredictorDist::Normal),
            "uniform" => Ok(PredictorDist::Uniform),
            "exponential" | "exp" => Ok(PredictorDist::Exponential),
            "geometric" | "geom" => Ok(PredictorDist::Geometric),
            _ => Err(Error::InvalidInput(format!(
                "unknown predictor distribution '{s}'"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimDesign {
    pub model: Model,
    pub n: usize,
    pub p: usize,
    pub rho: f64,
    pub noise_sd: f64,
    pub predictor_dist: PredictorDist,
    pub h_count: usize,
    pub seed: u64,
}

impl SimDesign {
    pub fn new(model: Model, n: usize, p: usize) -> Self {
        Self {
            model,
            n,
            p,
            rho: 0.0,
            noise_sd: 0.2,
            predictor_dist: PredictorDist::Normal,
            h_count: 4,
            seed: 0,
        }
    }

    pub fn with_rho(mut self, rho: f64) -> Self {
        self.rho = rho;
        self
    }

    pub fn with_dist(mut self, dist: PredictorDist) -> Self {
        self.predictor_dist = dist;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.p < 4 {
            return Err(Error::InvalidInput(format!(
                "benchmark models need p >= 4, got {}",
                self.p
            )));
        }
        if self.n < 10 {
            return Err(Error::InvalidInput(format!(
                "n must be at least 10, got {}",
                self.n
            )));
        }
        if !(self.rho > -1.0 && self.rho < 1.0) {
            return Err(Error::InvalidInput(format!(
                "rho must lie in (-1, 1), got {}",
                self.rho
            )));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(Error::InvalidInput(
                "noise_sd must be finite and nonnegative".into(),
            ));
        }
        if self.h_count < 2 || self.h_count > self.n / 2 {
            return Err(Error::InvalidInput(format!(
                "slice count {} must lie in 2..={}",
                self.h_count,
                self.n / 2
            )));
        }
        Ok(())
    }

    /// The four active predictors `{x1, x2, x(p-1), xp}`, 0-based.
    pub fn active(&self) -> Vec<usize> {
        vec![0, 1, self.p - 2, self.p - 1]
    }
}

/// Noise-free part of the model response for one predictor row.
pub fn model_signal(model: Model, row: &[f64]) -> f64 {
    let p = row.len();
    let (x1, x2, xq, xp) = (row[0], row[1], row[p - 2], row[p - 1]);
    match model {
        Model::I => {
            let s = x1 + xp;
            let sign = if s > 0.0 {
                1.0
            } else if s < 0.0 {
                -1.0
            } else {
                0.0
            };
            sign * (x2 + xq).exp()
        }
        Model::II => 2.0 * x1 * x1 * xp * xp - 2.0 * x2 * x2 * xq * xq,
        Model::III => x1.powi(4) - xp.powi(4) + 3.0 * (0.8 * x2 + 0.6 * xq).exp(),
    }
}

/// Draws replications of a design. The covariance factor is computed once.
#[derive(Debug, Clone)]
pub struct Generator {
    design: SimDesign,
    factor: Option<DMatrix<f64>>,
}

impl Generator {
    pub fn new(design: SimDesign) -> Result<Self> {
        design.validate()?;
        let factor = if design.predictor_dist == PredictorDist::Normal && design.rho != 0.0 {
            let p = design.p;
            let rho = design.rho;
            let cov = DMatrix::from_fn(p, p, |i, j| rho.powi(i.abs_diff(j) as i32));
            let eig = SymmetricEigen::new(cov);
            let root = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
            Some(&eig.eigenvectors * DMatrix::from_diagonal(&root) * eig.eigenvectors.transpose())
        } else {
            None
        };
        Ok(Self { design, factor })
    }

    pub fn design(&self) -> &SimDesign {
        &self.design
    }

    /// Replication `rep`, drawn from its own stream of the design seed.
    pub fn replicate(&self, rep: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(self.design.seed);
        rng.set_stream(rep);
        self.draw(&mut rng)
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> Dataset {
        let d = &self.design;
        let (n, p) = (d.n, d.p);
        let geom = Geometric::new(0.5).expect("valid probability");
        // row-major draw keeps each sample's predictors contiguous in the stream
        let mut raw = DMatrix::zeros(n, p);
        for i in 0..n {
            for j in 0..p {
                raw[(i, j)] = match d.predictor_dist {
                    PredictorDist::Normal => StandardNormal.sample(rng),
                    PredictorDist::Uniform => rng.random_range(1.0..2.0),
                    PredictorDist::Exponential => Exp1.sample(rng),
                    PredictorDist::Geometric => (geom.sample(rng) + 1) as f64,
                };
            }
        }
        let x = match &self.factor {
            Some(f) => raw * f,
            None => raw,
        };
        let mut row = vec![0.0; p];
        let y = (0..n)
            .map(|i| {
                for (j, v) in row.iter_mut().enumerate() {
                    *v = x[(i, j)];
                }
                let eps: f64 = StandardNormal.sample(rng);
                model_signal(d.model, &row) + d.noise_sd * eps
            })
            .collect();
        Dataset::new(x, y).expect("simulated data are finite")
    }
}

/// One replication of `design` (replication index 0).
pub fn generate(design: &SimDesign) -> Result<(Dataset, Vec<usize>)> {
    let g = Generator::new(design.clone())?;
    Ok((g.replicate(0), design.active()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SelectionMetrics {
    /// Replications missing at least one active predictor.
    pub uf: usize,
    /// Replications selecting exactly the active set.
    pub cf: usize,
    /// Replications selecting a strict superset of the active set.
    pub of: usize,
    /// Mean selected-set size.
    pub ms: f64,
    pub n_reps: usize,
}

/// Underfit / correct-fit / overfit counts and mean model size.
pub fn evaluate(selected: &[Vec<usize>], active: &[usize]) -> Result<SelectionMetrics> {
    if selected.is_empty() {
        return Err(Error::InvalidInput("no replications to evaluate".into()));
    }
    let (mut uf, mut cf, mut of) = (0usize, 0usize, 0usize);
    let mut total = 0usize;
    for s in selected {
        let hits = active.iter().filter(|a| s.contains(a)).count();
        if hits < active.len() {
            uf += 1;
        } else if s.len() == active.len() {
            cf += 1;
        } else {
            of += 1;
        }
        total += s.len();
    }
    Ok(SelectionMetrics {
        uf,
        cf,
        of,
        ms: total as f64 / selected.len() as f64,
        n_reps: selected.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Algorithm {
    Stp,
    Ftp,
    Htp,
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Algorithm::Stp => "STP",
            Algorithm::Ftp => "FTP",
            Algorithm::Htp => "HTP",
        })
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "STP" => Ok(Algorithm::Stp),
            "FTP" => Ok(Algorithm::Ftp),
            "HTP" => Ok(Algorithm::Htp),
            _ => Err(Error::InvalidInput(format!(
                "unknown algorithm '{s}' (expected STP, FTP or HTP)"
            ))),
        }
    }
}

/// Runs one selector on one dataset with default slicing and level.
///
/// FTP returns its BIC-chosen prefix.
pub fn select_once(
    data: &Dataset,
    algorithm: Algorithm,
    method: Method,
    h_count: usize,
    alpha: Option<f64>,
) -> Result<Vec<usize>> {
    let slices = slice_response(data.y(), h_count, false)?;
    let sample = CenteredSample::new(data, slices)?;
    let (n, p) = (data.n(), data.p());
    let mut cfg = StpConfig::new(method, n, p, h_count);
    if let Some(a) = alpha {
        cfg.alpha = a;
    }
    let mut set = match algorithm {
        Algorithm::Stp => {
            let universe: Vec<usize> = (0..p).collect();
            stp_run(&sample, &cfg, &universe)?.selected
        }
        Algorithm::Ftp => {
            let path = ftp_run(&sample, method, default_k_max(n, p, h_count))?;
            path.bic_choice()
                .map(|k| path.prefix(k))
                .unwrap_or_default()
        }
        Algorithm::Htp => htp_run(&sample, &cfg)?.0.selected,
    };
    set.sort_unstable();
    Ok(set)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentResult {
    pub design: SimDesign,
    pub algorithm: Algorithm,
    pub method: Method,
    pub metrics: SelectionMetrics,
    /// Replications whose selection failed; excluded from `metrics`.
    pub failures: usize,
    pub selected: Vec<Vec<usize>>,
}

/// Repeats `design` `reps` times and scores the selections.
pub fn run_experiment(
    design: &SimDesign,
    algorithm: Algorithm,
    method: Method,
    reps: usize,
    alpha: Option<f64>,
) -> Result<ExperimentResult> {
    if reps == 0 {
        return Err(Error::InvalidInput("reps must be positive".into()));
    }
    let gen = Generator::new(design.clone())?;
    let outcomes: Vec<Result<Vec<usize>>> = (0..reps as u64)
        .into_par_iter()
        .map(|rep| {
            let data = gen.replicate(rep);
            select_once(&data, algorithm, method, design.h_count, alpha)
        })
        .collect();
    let failures = outcomes.iter().filter(|o| o.is_err()).count();
    let selected: Vec<Vec<usize>> = outcomes.into_iter().filter_map(|o| o.ok()).collect();
    if selected.is_empty() {
        return Err(Error::NumericalFailure(format!(
            "all {reps} replications failed"
        )));
    }
    let metrics = evaluate(&selected, &design.active())?;
    Ok(ExperimentResult {
        design: design.clone(),
        algorithm,
        method,
        metrics,
        failures,
        selected,
    })
}
