//! Kernel traces for SIR, SAVE and directional regression, and the closed-form
//! trace differences obtained by adding one candidate predictor to a working
//! set.
//!
//! The closed forms work in whitened coordinates: with `Z = X_F W` for any `W`
//! satisfying `Wᵀ Σ_F W = I`, adding `x_j` to `F` appends the standardized OLS
//! residual of `x_j` on `X_F` as a new orthonormal column. All quantities
//! entering the differences are norms or traces in that basis, so the choice
//! of `W` does not matter.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::data::{CenteredSample, MomentStats, SliceAssignment};
use crate::error::{Error, Result};
use crate::linalg::{self, EIGEN_FLOOR};

/// Residual variance below this fraction of the candidate's own variance
/// marks the candidate as collinear with the working set.
pub const COLLINEAR_RATIO: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Sir,
    Save,
    Dr,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Sir, Method::Save, Method::Dr];
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Sir => "SIR",
            Method::Save => "SAVE",
            Method::Dr => "DR",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sir" => Ok(Method::Sir),
            "save" => Ok(Method::Save),
            "dr" => Ok(Method::Dr),
            other => Err(Error::InvalidInput(format!(
                "unknown method `{other}` (expected sir, save or dr)"
            ))),
        }
    }
}

/// Standardized OLS residual of candidate `j` on the working set.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualStats {
    pub j: usize,
    pub f: Vec<usize>,
    /// Regression coefficients of centered `x_j` on centered `X_F`.
    pub theta: DVector<f64>,
    pub sigma2_jf: f64,
    pub gamma_by_slice: Vec<f64>,
    pub zeta_by_slice: Vec<f64>,
    pub gamma_per_sample: Vec<f64>,
    pub proportions: Vec<f64>,
}

/// Additional slice statistics needed by the SAVE and DR differences.
///
/// Vectors are expressed in the whitened basis of the working set.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxiliarySaveDrStats {
    pub phi_by_slice: Vec<DVector<f64>>,
    pub nu_by_slice: Vec<DVector<f64>>,
    pub iota_by_slice: Vec<DVector<f64>>,
    pub iota_sum: DVector<f64>,
    pub varrho: f64,
    pub kappa: f64,
}

/// `trace(M̂_F)` for the chosen kernel, computed from the moments by
/// Cholesky solves. An empty working set has trace zero.
pub fn trace_kernel(method: Method, m: &MomentStats) -> Result<f64> {
    let dim = m.f.len();
    if dim == 0 {
        return Ok(0.0);
    }
    check_conditioning(&m.sigma_f, &m.f, &m.degenerate)?;
    let chol = Cholesky::new(m.sigma_f.clone()).ok_or_else(|| Error::SingularDesign {
        set: m.f.clone(),
        condition: f64::INFINITY,
    })?;
    let p = &m.proportions;

    let value = match method {
        Method::Sir => {
            m.u.iter()
                .zip(p)
                .map(|(u, &ph)| ph * u.dot(&chol.solve(u)))
                .sum()
        }
        Method::Save => {
            m.u.iter()
                .zip(&m.v)
                .zip(p)
                .map(|((u, v), &ph)| {
                    let a = &m.sigma_f - v + u * u.transpose();
                    let b = chol.solve(&a);
                    ph * linalg::trace_of_product(&b, &b)
                })
                .sum()
        }
        Method::Dr => {
            let mut between = DMatrix::zeros(dim, dim);
            let mut first = 0.0;
            for ((u, v), &ph) in m.u.iter().zip(&m.v).zip(p) {
                between += u * u.transpose() * ph;
                let b = chol.solve(v);
                first += ph * linalg::trace_of_product(&b, &b);
            }
            let b = chol.solve(&between);
            let tr = b.trace();
            2.0 * first + 2.0 * linalg::trace_of_product(&b, &b) + 2.0 * tr * tr - 2.0 * dim as f64
        }
    };
    Ok(value)
}

fn check_conditioning(sigma: &DMatrix<f64>, f: &[usize], degenerate: &[usize]) -> Result<()> {
    if !degenerate.is_empty() {
        return Err(Error::SingularDesign {
            set: f.to_vec(),
            condition: f64::INFINITY,
        });
    }
    let eig = SymmetricEigen::new(sigma.clone()).eigenvalues;
    let hi = eig.max();
    let lo = eig.min();
    if !(hi > 0.0) || lo < EIGEN_FLOOR * hi {
        return Err(Error::SingularDesign {
            set: f.to_vec(),
            condition: if lo > 0.0 { hi / lo } else { f64::INFINITY },
        });
    }
    Ok(())
}

/// Closed-form `trace(M̂_{F∪j}) − trace(M̂_F)`.
pub fn trace_diff(method: Method, r: &ResidualStats, aux: &AuxiliarySaveDrStats) -> f64 {
    diff_from_parts(
        method,
        &r.proportions,
        &r.gamma_by_slice,
        &r.zeta_by_slice,
        aux,
    )
}

pub(crate) fn diff_from_parts(
    method: Method,
    p: &[f64],
    gamma: &[f64],
    zeta: &[f64],
    aux: &AuxiliarySaveDrStats,
) -> f64 {
    match method {
        Method::Sir => p.iter().zip(gamma).map(|(ph, g)| ph * g * g).sum(),
        Method::Save => (0..p.len())
            .map(|h| {
                let lead = 1.0 - zeta[h] + gamma[h] * gamma[h];
                p[h] * (lead * lead + 2.0 * aux.phi_by_slice[h].norm_squared())
            })
            .sum(),
        Method::Dr => {
            let sliced: f64 = (0..p.len())
                .map(|h| {
                    let d = 1.0 - zeta[h];
                    p[h] * (d * d + 2.0 * aux.nu_by_slice[h].norm_squared())
                })
                .sum();
            2.0 * sliced
                + 4.0 * aux.varrho * aux.varrho
                + 4.0 * aux.iota_sum.norm_squared()
                + 4.0 * aux.kappa * aux.varrho
        }
    }
}

/// Residual summaries from a raw residual vector `e` of candidate `j`.
///
/// Returns `(sigma2, gamma_per_sample, gamma_by_slice, zeta_by_slice)`.
pub(crate) fn standardize_residual(
    e: &[f64],
    var_j: f64,
    j: usize,
    slices: &SliceAssignment,
) -> Result<(f64, Vec<f64>, Vec<f64>, Vec<f64>)> {
    let n = e.len() as f64;
    let mean = e.iter().sum::<f64>() / n;
    let sigma2 = e.iter().map(|v| v * v).sum::<f64>() / n - mean * mean;
    if !(var_j > 0.0) || !(sigma2 >= COLLINEAR_RATIO * var_j) {
        return Err(Error::CollinearCandidate {
            index: j,
            ratio: if var_j > 0.0 { sigma2 / var_j } else { 0.0 },
        });
    }
    let sd = sigma2.sqrt();
    let gamma: Vec<f64> = e.iter().map(|v| v / sd).collect();
    let gamma_h = slices.slice_means(&gamma);
    let sq: Vec<f64> = gamma.iter().map(|g| g * g).collect();
    let zeta_h = slices.slice_means(&sq);
    Ok((sigma2, gamma, gamma_h, zeta_h))
}

/// Slice means of `z_k γ` for each whitened column `k`.
pub(crate) fn slice_cross_means(
    z: &[&[f64]],
    gamma: &[f64],
    slices: &SliceAssignment,
) -> Vec<DVector<f64>> {
    let h_count = slices.h_count();
    let m = z.len();
    let mut out = vec![DVector::zeros(m); h_count];
    let membership = slices.membership();
    for (k, col) in z.iter().enumerate() {
        let mut acc = vec![0.0; h_count];
        for i in 0..gamma.len() {
            acc[membership[i]] += col[i] * gamma[i];
        }
        for h in 0..h_count {
            out[h][k] = acc[h] / slices.counts()[h] as f64;
        }
    }
    out
}

pub(crate) fn auxiliary_from(
    nu: Vec<DVector<f64>>,
    z_slice_means: &[DVector<f64>],
    kappa: f64,
    p: &[f64],
    gamma_h: &[f64],
) -> AuxiliarySaveDrStats {
    let m = z_slice_means.first().map_or(0, |u| u.len());
    let iota: Vec<DVector<f64>> = z_slice_means
        .iter()
        .zip(gamma_h)
        .map(|(u, &g)| u * g)
        .collect();
    let phi = iota.iter().zip(&nu).map(|(i, v)| i - v).collect();
    let mut iota_sum = DVector::zeros(m);
    for (i, &ph) in iota.iter().zip(p) {
        iota_sum += i * ph;
    }
    let varrho = p.iter().zip(gamma_h).map(|(ph, g)| ph * g * g).sum();
    AuxiliarySaveDrStats {
        phi_by_slice: phi,
        nu_by_slice: nu,
        iota_by_slice: iota,
        iota_sum,
        varrho,
        kappa,
    }
}

/// Whitened working set `F`, ready to residualize candidates against.
#[derive(Debug, Clone)]
pub struct WorkingSet<'a> {
    sample: &'a CenteredSample,
    f: Vec<usize>,
    /// Symmetric `Σ̂_F^{-1/2}`.
    w: DMatrix<f64>,
    /// `n x |F|` whitened centered predictors.
    z: DMatrix<f64>,
    z_slice_means: Vec<DVector<f64>>,
    z_slice_second: Vec<DMatrix<f64>>,
    kappa: f64,
}

impl<'a> WorkingSet<'a> {
    pub fn new(sample: &'a CenteredSample, f: &[usize]) -> Result<Self> {
        sample.check_set(f)?;
        let n = sample.n();
        let m = f.len();
        let x_f = DMatrix::from_fn(n, m, |i, k| sample.x()[(i, f[k])]);
        let sigma = x_f.tr_mul(&x_f) / n as f64;
        if f.iter().any(|&j| sample.column_var(j) == 0.0) {
            return Err(Error::SingularDesign {
                set: f.to_vec(),
                condition: f64::INFINITY,
            });
        }
        let w = linalg::inverse_sqrt(&sigma, f)?;
        let z = &x_f * &w;
        let slices = sample.slices();
        let h_count = slices.h_count();
        let mut z_slice_means = vec![DVector::zeros(m); h_count];
        let mut z_slice_second = vec![DMatrix::zeros(m, m); h_count];
        for (i, &h) in slices.membership().iter().enumerate() {
            let row = z.row(i).transpose();
            z_slice_means[h] += &row;
            z_slice_second[h] += &row * row.transpose();
        }
        for h in 0..h_count {
            let c = slices.counts()[h] as f64;
            z_slice_means[h] /= c;
            z_slice_second[h] /= c;
        }
        let kappa = z_slice_means
            .iter()
            .zip(slices.proportions())
            .map(|(u, &ph)| ph * u.norm_squared())
            .sum();
        Ok(Self {
            sample,
            f: f.to_vec(),
            w,
            z,
            z_slice_means,
            z_slice_second,
            kappa,
        })
    }

    pub fn sample(&self) -> &'a CenteredSample {
        self.sample
    }

    pub fn members(&self) -> &[usize] {
        &self.f
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub(crate) fn z(&self) -> &DMatrix<f64> {
        &self.z
    }

    pub(crate) fn z_slice_means(&self) -> &[DVector<f64>] {
        &self.z_slice_means
    }

    pub(crate) fn z_slice_second(&self) -> &[DMatrix<f64>] {
        &self.z_slice_second
    }

    /// OLS residual of candidate `j` on the working set, standardized.
    pub fn residualize(&self, j: usize) -> Result<ResidualStats> {
        let p = self.sample.p();
        if j >= p {
            return Err(Error::IndexOutOfRange { index: j, p });
        }
        if self.f.contains(&j) {
            return Err(Error::InvalidInput(format!(
                "candidate {j} already belongs to the working set"
            )));
        }
        let n = self.sample.n() as f64;
        let x = DVector::from_column_slice(self.sample.column(j));
        let mut coef = self.z.tr_mul(&x) / n;
        let mut e = &x - &self.z * &coef;
        // second projection pass against rounding in Z
        let fix = self.z.tr_mul(&e) / n;
        e -= &self.z * &fix;
        coef += fix;
        let theta = &self.w * coef;

        let slices = self.sample.slices();
        let (sigma2, gamma, gamma_h, zeta_h) =
            standardize_residual(e.as_slice(), self.sample.column_var(j), j, slices)?;
        Ok(ResidualStats {
            j,
            f: self.f.clone(),
            theta,
            sigma2_jf: sigma2,
            gamma_by_slice: gamma_h,
            zeta_by_slice: zeta_h,
            gamma_per_sample: gamma,
            proportions: slices.proportions().to_vec(),
        })
    }

    pub fn auxiliary(&self, r: &ResidualStats) -> AuxiliarySaveDrStats {
        let n = self.sample.n();
        let cols: Vec<&[f64]> = (0..self.f.len())
            .map(|k| &self.z.as_slice()[k * n..(k + 1) * n])
            .collect();
        let nu = slice_cross_means(&cols, &r.gamma_per_sample, self.sample.slices());
        auxiliary_from(
            nu,
            &self.z_slice_means,
            self.kappa,
            &r.proportions,
            &r.gamma_by_slice,
        )
    }

    /// Trace difference for candidate `j`, with the residual it came from.
    pub fn candidate_diff(&self, method: Method, j: usize) -> Result<(f64, ResidualStats)> {
        let r = self.residualize(j)?;
        let diff = match method {
            Method::Sir => diff_from_parts(
                method,
                &r.proportions,
                &r.gamma_by_slice,
                &r.zeta_by_slice,
                &AuxiliarySaveDrStats::empty(),
            ),
            _ => trace_diff(method, &r, &self.auxiliary(&r)),
        };
        Ok((diff, r))
    }
}

impl AuxiliarySaveDrStats {
    fn empty() -> Self {
        Self {
            phi_by_slice: Vec::new(),
            nu_by_slice: Vec::new(),
            iota_by_slice: Vec::new(),
            iota_sum: DVector::zeros(0),
            varrho: 0.0,
            kappa: 0.0,
        }
    }
}

/// Spec-shaped entry point: residualize `j` against the set recorded in `m`.
pub fn residualize(sample: &CenteredSample, m: &MomentStats, j: usize) -> Result<ResidualStats> {
    WorkingSet::new(sample, &m.f)?.residualize(j)
}
