//! Datasets, response slicing and slice-conditional moments.
//!
//! Every estimator downstream works on predictors centered once at the
//! grand mean. Working sets select columns of that centered matrix; they are
//! never re-centered.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};

/// Predictor matrix (`n x p`, raw units) and response vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: DMatrix<f64>,
    y: Vec<f64>,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: Vec<f64>) -> Result<Self> {
        let (n, p) = x.shape();
        if n < 2 {
            return Err(Error::InvalidInput(format!(
                "need at least 2 samples, got {n}"
            )));
        }
        if p < 1 {
            return Err(Error::InvalidInput("need at least one predictor".into()));
        }
        if y.len() != n {
            return Err(Error::InvalidInput(format!(
                "response has {} entries but predictor matrix has {n} rows",
                y.len()
            )));
        }
        if let Some((idx, _)) = x.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            // column-major storage
            return Err(Error::InvalidInput(format!(
                "non-finite predictor at row {}, column {}",
                idx % n + 1,
                idx / n + 1
            )));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite response at row {}",
                i + 1
            )));
        }
        Ok(Self { x, y })
    }

    /// Builds a dataset from row-major predictor rows.
    pub fn from_rows(rows: &[Vec<f64>], y: Vec<f64>) -> Result<Self> {
        let n = rows.len();
        let p = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != p) {
            return Err(Error::InvalidInput("ragged predictor rows".into()));
        }
        Self::new(DMatrix::from_fn(n, p, |i, j| rows[i][j]), y)
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }
}

/// Partition of the samples into `H` response slices.
///
/// Slice labels are 0-based (`0..h_count`).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SliceAssignment {
    h_count: usize,
    membership: Vec<usize>,
    counts: Vec<usize>,
    proportions: Vec<f64>,
}

impl SliceAssignment {
    /// Builds an assignment from explicit labels. Every slice in
    /// `0..h_count` must be nonempty.
    pub fn from_membership(membership: Vec<usize>, h_count: usize) -> Result<Self> {
        if h_count < 2 {
            return Err(Error::InvalidInput(format!(
                "need at least 2 slices, got {h_count}"
            )));
        }
        let mut counts = vec![0usize; h_count];
        for &m in &membership {
            if m >= h_count {
                return Err(Error::InvalidInput(format!(
                    "slice label {m} outside 0..{h_count}"
                )));
            }
            counts[m] += 1;
        }
        if let Some(h) = counts.iter().position(|&c| c == 0) {
            return Err(Error::InvalidInput(format!("slice {h} is empty")));
        }
        let n = membership.len() as f64;
        let proportions = counts.iter().map(|&c| c as f64 / n).collect();
        Ok(Self {
            h_count,
            membership,
            counts,
            proportions,
        })
    }

    pub fn h_count(&self) -> usize {
        self.h_count
    }

    pub fn n(&self) -> usize {
        self.membership.len()
    }

    pub fn membership(&self) -> &[usize] {
        &self.membership
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn proportions(&self) -> &[f64] {
        &self.proportions
    }

    /// Per-slice means of `values`.
    pub fn slice_means(&self, values: &[f64]) -> Vec<f64> {
        let mut sums = vec![0.0; self.h_count];
        for (&h, &v) in self.membership.iter().zip(values) {
            sums[h] += v;
        }
        sums.iter()
            .zip(&self.counts)
            .map(|(s, &c)| s / c as f64)
            .collect()
    }
}

/// Slices the response.
///
/// Continuous responses are cut into `h_count` equal-frequency slices by
/// rank (ties broken by sample order, sizes differing by at most one).
/// Discrete responses get one slice per distinct value, in increasing order,
/// and `h_count` only bounds the number of distinct values allowed.
pub fn slice_response(y: &[f64], h_count: usize, discrete: bool) -> Result<SliceAssignment> {
    if h_count < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 slices, got {h_count}"
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(
            "response contains non-finite values".into(),
        ));
    }
    let n = y.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| y[a].total_cmp(&y[b]).then(a.cmp(&b)));
    let distinct = 1 + order.windows(2).filter(|w| y[w[0]] != y[w[1]]).count();
    let distinct = if n == 0 { 0 } else { distinct };

    if discrete {
        if distinct > h_count {
            return Err(Error::InvalidInput(format!(
                "discrete response has {distinct} distinct values, more than the {h_count} allowed"
            )));
        }
        if distinct < 2 {
            return Err(Error::DegenerateSlicing {
                distinct,
                requested: 2,
            });
        }
        let mut membership = vec![0usize; n];
        let mut label = 0usize;
        for (rank, &i) in order.iter().enumerate() {
            if rank > 0 && y[i] != y[order[rank - 1]] {
                label += 1;
            }
            membership[i] = label;
        }
        return SliceAssignment::from_membership(membership, distinct);
    }

    if distinct < h_count {
        return Err(Error::DegenerateSlicing {
            distinct,
            requested: h_count,
        });
    }
    let mut membership = vec![0usize; n];
    for h in 0..h_count {
        let lo = h * n / h_count;
        let hi = (h + 1) * n / h_count;
        for &i in &order[lo..hi] {
            membership[i] = h;
        }
    }
    SliceAssignment::from_membership(membership, h_count)
}

/// Centered predictors paired with a slicing of the response.
///
/// This is the shared input of every estimator: it is built once per
/// dataset and working sets only select its columns.
#[derive(Debug, Clone)]
pub struct CenteredSample {
    x: DMatrix<f64>,
    grand_mean: DVector<f64>,
    column_var: Vec<f64>,
    slices: SliceAssignment,
}

impl CenteredSample {
    pub fn new(d: &Dataset, slices: SliceAssignment) -> Result<Self> {
        if slices.n() != d.n() {
            return Err(Error::InvalidInput(format!(
                "slice assignment covers {} samples, dataset has {}",
                slices.n(),
                d.n()
            )));
        }
        let n = d.n() as f64;
        let grand_mean = d.x().row_mean().transpose();
        let mut x = d.x().clone();
        for (j, mut col) in x.column_iter_mut().enumerate() {
            col.add_scalar_mut(-grand_mean[j]);
        }
        let column_var = x.column_iter().map(|c| c.dot(&c) / n).collect();
        Ok(Self {
            x,
            grand_mean,
            column_var,
            slices,
        })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn column(&self, j: usize) -> &[f64] {
        let n = self.n();
        &self.x.as_slice()[j * n..(j + 1) * n]
    }

    /// Sample variance (divisor `n`) of predictor `j`.
    pub fn column_var(&self, j: usize) -> f64 {
        self.column_var[j]
    }

    pub fn grand_mean(&self) -> &DVector<f64> {
        &self.grand_mean
    }

    pub fn slices(&self) -> &SliceAssignment {
        &self.slices
    }

    pub(crate) fn check_set(&self, f: &[usize]) -> Result<()> {
        let p = self.p();
        for (k, &j) in f.iter().enumerate() {
            if j >= p {
                return Err(Error::IndexOutOfRange { index: j, p });
            }
            if f[..k].contains(&j) {
                return Err(Error::InvalidInput(format!(
                    "index {j} repeated in working set"
                )));
            }
        }
        if f.len() >= self.n() {
            return Err(Error::IllPosedMoments {
                set_size: f.len(),
                n: self.n(),
            });
        }
        Ok(())
    }

    /// Slice-conditional moments of the columns `f`.
    pub fn moments(&self, f: &[usize]) -> Result<MomentStats> {
        self.check_set(f)?;
        let n = self.n();
        let m = f.len();
        let h_count = self.slices.h_count();
        let membership = self.slices.membership();
        let counts = self.slices.counts();

        let mut sigma_f = DMatrix::zeros(m, m);
        for a in 0..m {
            let ca = self.column(f[a]);
            for b in a..m {
                let cb = self.column(f[b]);
                let s = ca.iter().zip(cb).map(|(u, v)| u * v).sum::<f64>() / n as f64;
                sigma_f[(a, b)] = s;
                sigma_f[(b, a)] = s;
            }
        }

        let mut u = vec![DVector::zeros(m); h_count];
        let mut v = vec![DMatrix::zeros(m, m); h_count];
        for a in 0..m {
            let ca = self.column(f[a]);
            for (i, &h) in membership.iter().enumerate() {
                u[h][a] += ca[i];
            }
            for b in a..m {
                let cb = self.column(f[b]);
                let mut acc = vec![0.0; h_count];
                for (i, &h) in membership.iter().enumerate() {
                    acc[h] += ca[i] * cb[i];
                }
                for h in 0..h_count {
                    v[h][(a, b)] = acc[h];
                    v[h][(b, a)] = acc[h];
                }
            }
        }
        for h in 0..h_count {
            let c = counts[h] as f64;
            u[h] /= c;
            v[h] /= c;
        }

        let degenerate = f
            .iter()
            .copied()
            .filter(|&j| self.column_var[j] == 0.0)
            .collect();

        Ok(MomentStats {
            f: f.to_vec(),
            sigma_f,
            u,
            v,
            grand_mean: self.grand_mean.clone(),
            proportions: self.slices.proportions().to_vec(),
            degenerate,
        })
    }
}

/// Slice-conditional moments of a working set `F` on centered predictors.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentStats {
    pub f: Vec<usize>,
    /// Sample covariance of `X_F`, divisor `n`.
    pub sigma_f: DMatrix<f64>,
    /// Slice means of centered `X_F`.
    pub u: Vec<DVector<f64>>,
    /// Slice second moments of centered `X_F`.
    pub v: Vec<DMatrix<f64>>,
    pub grand_mean: DVector<f64>,
    pub proportions: Vec<f64>,
    /// Members of `f` with zero sample variance. Kernels refuse these.
    pub degenerate: Vec<usize>,
}

impl MomentStats {
    pub fn h_count(&self) -> usize {
        self.proportions.len()
    }
}

/// Convenience wrapper: center `d`, attach `s` and compute the moments of `f`.
pub fn compute_moments(d: &Dataset, s: &SliceAssignment, f: &[usize]) -> Result<MomentStats> {
    CenteredSample::new(d, s.clone())?.moments(f)
}
