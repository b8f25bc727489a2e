//! Covariance -> coarray signal -> spatially smoothed covariance -> noise
//! subspace, one subarray at a time.

use crate::error::{Error, Result};
use crate::geometry::SensorSet;
use crate::linalg::{hermitian_eigh, CMat, CVec};
use num_complex::Complex64;

/// Coarray-domain signal on the contiguous lags `-m*..=m*`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoarraySignal {
    pub lags: Vec<i64>,
    pub values: CVec,
    /// Lags of the difference set outside the contiguous segment that were dropped.
    pub discarded_lags: usize,
}

impl CoarraySignal {
    pub fn max_lag(&self) -> i64 {
        *self.lags.last().unwrap_or(&0)
    }

    pub fn value_at(&self, m: i64) -> Option<Complex64> {
        let idx = m + self.max_lag();
        (idx >= 0 && (idx as usize) < self.values.len()).then(|| self.values[idx as usize])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedCovariance {
    pub matrix: CMat,
    pub m: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSubspace {
    pub basis: CMat,
    pub m: usize,
    pub d: usize,
    /// Eigenvalues of the smoothed covariance, descending.
    pub eigenvalues: Vec<f64>,
    /// Set when an eigenvalue fell below `-1e-10 * trace`.
    pub psd_warning: bool,
}

impl NoiseSubspace {
    /// `V V^H`.
    pub fn projector(&self) -> CMat {
        &self.basis * self.basis.adjoint()
    }
}

/// `(1/T) X X^H`.
pub fn sample_covariance(block: &CMat) -> Result<CMat> {
    let t = block.ncols();
    if t == 0 {
        return Err(Error::EmptyData("data block has no snapshots".into()));
    }
    let mut r = block * block.adjoint();
    r.scale_mut(1.0 / t as f64);
    let n = r.nrows();
    for i in 0..n {
        r[(i, i)].im = 0.0;
        for j in (i + 1)..n {
            let v = (r[(i, j)] + r[(j, i)].conj()) * 0.5;
            r[(i, j)] = v;
            r[(j, i)] = v.conj();
        }
    }
    Ok(r)
}

/// Averages `r_hat` along every sensor-pair lag and keeps the contiguous
/// central segment of the difference coarray.
pub fn coarray_vectorize(r_hat: &CMat, array: &SensorSet) -> Result<CoarraySignal> {
    let n = array.len();
    if r_hat.nrows() != n || r_hat.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "covariance is {}x{}, array has {n} sensors",
            r_hat.nrows(),
            r_hat.ncols()
        )));
    }
    let profile = array.coarray();
    let m_star = profile.max_contiguous_lag();
    let len = (2 * m_star + 1) as usize;
    let mut sums = vec![Complex64::new(0.0, 0.0); len];
    let mut counts = vec![0usize; len];
    let pos = array.positions();
    for i in 0..n {
        for j in 0..n {
            let lag = pos[i] - pos[j];
            if lag.abs() <= m_star {
                let k = (lag + m_star) as usize;
                sums[k] += r_hat[(i, j)];
                counts[k] += 1;
            }
        }
    }
    let values = CVec::from_iterator(
        len,
        sums.iter().zip(&counts).map(|(s, &c)| s / c as f64),
    );
    Ok(CoarraySignal {
        lags: profile.central_set.clone(),
        values,
        discarded_lags: profile.discarded_lags(),
    })
}

/// Forward spatial smoothing over `M = (udof + 1) / 2` windows. Window 1
/// covers lags `0..M-1`; window `i` covers `1-i..M-i`.
pub fn spatial_smooth(sig: &CoarraySignal) -> Result<SmoothedCovariance> {
    let len = sig.values.len();
    if len == 0 || len % 2 == 0 {
        return Err(Error::DegenerateGeometry(format!(
            "coarray signal must have an odd, non-zero number of lags (got {len})"
        )));
    }
    let m = (len + 1) / 2;
    let mut r = CMat::zeros(m, m);
    for i in 1..=m {
        let x = sig.values.rows(m - i, m);
        r.ger(Complex64::new(1.0, 0.0), &x, &x.conjugate(), Complex64::new(1.0, 0.0));
    }
    r.scale_mut(1.0 / m as f64);
    Ok(SmoothedCovariance { matrix: r, m })
}

/// Eigenvectors of the `M - d` smallest eigenvalues of the smoothed covariance.
pub fn noise_subspace(rss: &SmoothedCovariance, d: usize) -> Result<NoiseSubspace> {
    let m = rss.m;
    if d >= m {
        return Err(Error::TooManySources { d, m });
    }
    let (vals, vecs) = hermitian_eigh(&rss.matrix);
    let trace: f64 = vals.iter().sum();
    let psd_warning = vals.iter().any(|&v| v < -1e-10 * trace.abs());
    let basis = vecs.columns(d, m - d).into_owned();
    Ok(NoiseSubspace { basis, m, d, eigenvalues: vals, psd_warning })
}

/// Full per-subarray chain from a data block to its noise subspace.
pub fn subarray_noise_subspace(block: &CMat, array: &SensorSet, d: usize) -> Result<NoiseSubspace> {
    let r = sample_covariance(block)?;
    let sig = coarray_vectorize(&r, array)?;
    let rss = spatial_smooth(&sig)?;
    noise_subspace(&rss, d)
}
