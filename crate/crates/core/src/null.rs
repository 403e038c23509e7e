//! Null calibration of the trace test statistics.
//!
//! Under `Y ⟂ x_j | X_F` the statistic `n·{trace(M̂_{F∪j}) − trace(M̂_F)}`
//! converges to a weighted sum of independent χ²₁ variables whose weights are
//! the eigenvalues of the covariance `Ω` of a stacked influence vector. `Ω` is
//! estimated by the empirical second moment of that vector evaluated at each
//! sample with every population quantity replaced by its full-sample
//! estimate.
//!
//! All influence vectors are computed in the whitened basis of the working
//! set and in standardized residual units. Writing `γ_i` for the standardized
//! residual of sample `i`, `z_i` for its whitened working-set row and `R_ih`
//! for its slice indicator:
//!
//! ```text
//! γ*_ih = (γ_i − γ_h) R_ih / p_h − γ_i − γ_i z_iᵀ U_h
//! ζ*_ih = (γ_i² − ζ_h) R_ih / p_h − 2 γ_i γ_h − 2 γ_i z_iᵀ ν_h − (γ_i² − 1)
//! ν*_ih = (z_i γ_i − ν_h) R_ih / p_h − z_i γ_h − U_h γ_i − V_h z_i γ_i
//! φ*_ih = U_h γ*_ih − ν*_ih,      ι*_ih = U_h γ*_ih
//! ```
//!
//! where `U_h`, `V_h` are slice first and second moments of `z`.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;
use statrs::function::gamma::gamma_ur;

use crate::data::CenteredSample;
use crate::error::{Error, Result};
use crate::kernels::{trace_diff, AuxiliarySaveDrStats, Method, ResidualStats, WorkingSet};

/// Per-sample influence vectors, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceSample {
    pub method: Method,
    pub ell_star: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NullDistribution {
    pub method: Method,
    pub omega: DMatrix<f64>,
    /// Eigenvalues of `omega`, nonincreasing, tiny negatives clamped to zero.
    pub weights: Vec<f64>,
    pub dim: usize,
}

/// Length of the stacked influence vector.
///
/// SIR stacks `H` slice terms, SAVE `(|F|+1)·H`. DR stacks its five blocks
/// `H + H·|F| + 1 + |F| + H`, the third being identically zero.
pub fn influence_dim(method: Method, set_size: usize, h_count: usize) -> usize {
    match method {
        Method::Sir => h_count,
        Method::Save => (set_size + 1) * h_count,
        Method::Dr => 2 * h_count + h_count * set_size + 1 + set_size,
    }
}

/// Evaluates the method's influence vector at every sample.
pub fn influence_samples(
    method: Method,
    ws: &WorkingSet<'_>,
    r: &ResidualStats,
    aux: &AuxiliarySaveDrStats,
) -> Result<InfluenceSample> {
    let sample = ws.sample();
    let n = sample.n();
    let m = ws.members().len();
    let slices = sample.slices();
    let h_count = slices.h_count();
    let p = slices.proportions();
    let membership = slices.membership();
    let z = ws.z();
    let u = ws.z_slice_means();
    let gamma = &r.gamma_per_sample;
    let gamma_h = &r.gamma_by_slice;
    let zeta_h = &r.zeta_by_slice;

    let dim = influence_dim(method, m, h_count);
    let mut ell = DMatrix::zeros(n, dim);

    // γ*: needed by every method
    let mut gstar = DMatrix::zeros(n, h_count);
    for i in 0..n {
        let gi = gamma[i];
        for h in 0..h_count {
            let mut zu = 0.0;
            for k in 0..m {
                zu += z[(i, k)] * u[h][k];
            }
            let indicator = if membership[i] == h { 1.0 / p[h] } else { 0.0 };
            gstar[(i, h)] = (gi - gamma_h[h]) * indicator - gi - gi * zu;
        }
    }

    if method == Method::Sir {
        for h in 0..h_count {
            let s = p[h].sqrt();
            for i in 0..n {
                ell[(i, h)] = s * gstar[(i, h)];
            }
        }
        return finish(method, ell);
    }

    let nu = &aux.nu_by_slice;
    let v = ws.z_slice_second();
    let mut zrow = vec![0.0; m];
    let mut nustar = vec![0.0; m];
    for i in 0..n {
        let gi = gamma[i];
        for (k, zk) in zrow.iter_mut().enumerate() {
            *zk = z[(i, k)];
        }
        let mut col = 0usize;
        // ζ* block (SAVE ℓ1, DR ℓ1)
        for h in 0..h_count {
            let indicator = if membership[i] == h { 1.0 / p[h] } else { 0.0 };
            let znu: f64 = (0..m).map(|k| zrow[k] * nu[h][k]).sum();
            let zeta_star = (gi * gi - zeta_h[h]) * indicator
                - 2.0 * gi * gamma_h[h]
                - 2.0 * gi * znu
                - (gi * gi - 1.0);
            ell[(i, col)] = match method {
                Method::Save => p[h].sqrt() * zeta_star,
                _ => -(2.0 * p[h]).sqrt() * zeta_star,
            };
            col += 1;
        }
        // ν* / φ* block (SAVE ℓ2, DR ℓ2)
        for h in 0..h_count {
            let indicator = if membership[i] == h { 1.0 / p[h] } else { 0.0 };
            for a in 0..m {
                let vz: f64 = (0..m).map(|b| v[h][(a, b)] * zrow[b]).sum();
                nustar[a] = (zrow[a] * gi - nu[h][a]) * indicator
                    - zrow[a] * gamma_h[h]
                    - u[h][a] * gi
                    - vz * gi;
            }
            for a in 0..m {
                ell[(i, col + a)] = match method {
                    Method::Save => (2.0 * p[h]).sqrt() * (u[h][a] * gstar[(i, h)] - nustar[a]),
                    _ => 2.0 * p[h].sqrt() * nustar[a],
                };
            }
            col += m;
        }
        if method == Method::Dr {
            // ℓ3* is identically zero
            col += 1;
            // ℓ4* = 2 Σ_h p_h ι*_h
            for a in 0..m {
                let s: f64 = (0..h_count).map(|h| p[h] * u[h][a] * gstar[(i, h)]).sum();
                ell[(i, col + a)] = 2.0 * s;
            }
            col += m;
            // ℓ5* = 2 (κ p_h)^{1/2} γ*_h
            for h in 0..h_count {
                ell[(i, col + h)] = 2.0 * (aux.kappa * p[h]).sqrt() * gstar[(i, h)];
            }
            col += h_count;
        }
        debug_assert_eq!(col, dim);
    }
    finish(method, ell)
}

fn finish(method: Method, ell_star: DMatrix<f64>) -> Result<InfluenceSample> {
    if ell_star.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalFailure(
            "non-finite influence values".into(),
        ));
    }
    Ok(InfluenceSample { method, ell_star })
}

/// `Ω̂ = E_n(ℓ* ℓ*ᵀ)` and its eigenvalue weights.
pub fn omega_hat(samples: &InfluenceSample) -> Result<NullDistribution> {
    let ell = &samples.ell_star;
    let (n, dim) = ell.shape();
    if n == 0 {
        return Err(Error::NumericalFailure("no influence samples".into()));
    }
    if ell.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalFailure(
            "non-finite influence values".into(),
        ));
    }
    let raw = ell.tr_mul(ell) / n as f64;
    let omega = (&raw + raw.transpose()) * 0.5;
    let mut weights: Vec<f64> = if dim == 0 {
        Vec::new()
    } else {
        SymmetricEigen::new(omega.clone())
            .eigenvalues
            .iter()
            .copied()
            .collect()
    };
    weights.sort_by(|a, b| b.total_cmp(a));
    let top = weights.first().copied().unwrap_or(0.0).max(1.0);
    for w in &mut weights {
        if *w < 0.0 {
            if *w < -1e-10 * top {
                return Err(Error::NumericalFailure(format!(
                    "influence covariance has eigenvalue {w:.3e}"
                )));
            }
            *w = 0.0;
        }
    }
    Ok(NullDistribution {
        method: samples.method,
        omega,
        weights,
        dim,
    })
}

/// How upper quantiles of `Σ ω_k χ²₁` are approximated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Default)]
pub enum QuantileMethod {
    /// Scaled χ² matching the first two moments.
    #[default]
    TwoMoment,
    /// Empirical quantile of seeded draws; for diagnostics.
    MonteCarlo { draws: usize, seed: u64 },
}

impl QuantileMethod {
    /// Monte Carlo with the default 10⁵ draws.
    pub fn monte_carlo(seed: u64) -> Self {
        QuantileMethod::MonteCarlo {
            draws: 100_000,
            seed,
        }
    }
}

/// Upper `alpha` quantile of `Σ ω_k χ²₁` by two-moment matching:
/// `a·χ²_d(alpha)` with `a = Σω²/Σω` and `d = (Σω)²/Σω²`.
pub fn weighted_chisq_upper_quantile(weights: &[f64], alpha: f64) -> Result<f64> {
    weighted_chisq_quantile_with(weights, alpha, QuantileMethod::TwoMoment)
}

pub fn weighted_chisq_quantile_with(
    weights: &[f64],
    alpha: f64,
    method: QuantileMethod,
) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidInput(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::InvalidInput(
            "weights must be finite and nonnegative".into(),
        ));
    }
    let sum: f64 = weights.iter().sum();
    if !(sum > 0.0) {
        return Err(Error::DegenerateDistribution);
    }
    match method {
        QuantileMethod::TwoMoment => {
            let sum_sq: f64 = weights.iter().map(|w| w * w).sum();
            let scale = sum_sq / sum;
            let df = sum * sum / sum_sq;
            Ok(scale * chi_square_upper_quantile(df, alpha)?)
        }
        QuantileMethod::MonteCarlo { draws, seed } => {
            if draws == 0 {
                return Err(Error::InvalidInput(
                    "Monte Carlo needs at least one draw".into(),
                ));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut values: Vec<f64> = (0..draws)
                .map(|_| {
                    weights
                        .iter()
                        .map(|w| {
                            let g: f64 = StandardNormal.sample(&mut rng);
                            w * g * g
                        })
                        .sum()
                })
                .collect();
            let rank = (((1.0 - alpha) * draws as f64).ceil() as usize).clamp(1, draws) - 1;
            let (_, q, _) = values.select_nth_unstable_by(rank, f64::total_cmp);
            Ok(*q)
        }
    }
}

/// Upper `alpha` quantile of χ² with (possibly fractional) `df` degrees of
/// freedom, by bisection on the regularized upper incomplete gamma function.
pub fn chi_square_upper_quantile(df: f64, alpha: f64) -> Result<f64> {
    if !(df > 0.0) || !df.is_finite() {
        return Err(Error::InvalidInput(format!(
            "degrees of freedom must be positive, got {df}"
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidInput(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    let tail = |x: f64| gamma_ur(df / 2.0, x / 2.0);
    let mut lo = 0.0;
    let mut hi = df.max(1.0);
    while tail(hi) > alpha {
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::NumericalFailure(
                "χ² quantile bracket diverged".into(),
            ));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if tail(mid) > alpha {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-13 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Outcome of one conditional-independence trace test.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceTest {
    pub method: Method,
    pub candidate: usize,
    pub set: Vec<usize>,
    pub statistic: f64,
    pub threshold: f64,
    pub reject: bool,
    pub weights: Vec<f64>,
}

/// Tests `Y ⟂ x_j | X_F` at level `alpha`.
pub fn trace_test(
    method: Method,
    sample: &CenteredSample,
    f: &[usize],
    j: usize,
    alpha: f64,
) -> Result<TraceTest> {
    let ws = WorkingSet::new(sample, f)?;
    let r = ws.residualize(j)?;
    test_residual(method, &ws, &r, alpha, QuantileMethod::TwoMoment)
}

/// Trace test for an already residualized candidate.
pub fn test_residual(
    method: Method,
    ws: &WorkingSet<'_>,
    r: &ResidualStats,
    alpha: f64,
    quantile: QuantileMethod,
) -> Result<TraceTest> {
    let aux = ws.auxiliary(r);
    let n = ws.sample().n() as f64;
    let statistic = n * trace_diff(method, r, &aux);
    let null = omega_hat(&influence_samples(method, ws, r, &aux)?)?;
    let threshold = weighted_chisq_quantile_with(&null.weights, alpha, quantile)?;
    Ok(TraceTest {
        method,
        candidate: r.j,
        set: ws.members().to_vec(),
        statistic,
        threshold,
        reject: statistic > threshold,
        weights: null.weights,
    })
}
