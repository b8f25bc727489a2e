//! GCA-MUSIC (grid search), GCA-rMUSIC (polynomial rooting) and the fully
//! calibrated spatial-smoothing MUSIC baseline.

use crate::coarray::{
    coarray_vectorize, noise_subspace, sample_covariance, spatial_smooth,
    subarray_noise_subspace, NoiseSubspace,
};
use crate::error::{Error, Result};
use crate::geometry::SubarrayLayout;
use crate::linalg::{cis_pi, polynomial_roots, CMat, CVec};
use crate::signal_model::SnapshotData;
use num_complex::Complex64;

pub const DEFAULT_GRID_SIZE: usize = 4001;

/// Roots with modulus up to `1 + UNIT_CIRCLE_TOL` count as inside.
pub const UNIT_CIRCLE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumResult {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub estimates: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RootResult {
    pub roots_all: Vec<Complex64>,
    pub selected: Vec<Complex64>,
    pub estimates: Vec<f64>,
    /// Fewer than `d` roots were inside the unit circle; the selection fell
    /// back to the roots nearest the circle from either side.
    pub deficient: bool,
}

/// `[1, e^{j pi theta}, ..., e^{j pi (m-1) theta}]`.
pub fn coarray_steering(m: usize, theta: f64) -> CVec {
    CVec::from_fn(m, |k, _| cis_pi(k as f64 * theta))
}

/// `g` points `-1 + 2i/g`, `i = 1..=g`, covering `(-1, 1]`.
pub fn uniform_grid(g: usize) -> Vec<f64> {
    (1..=g).map(|i| -1.0 + 2.0 * i as f64 / g as f64).collect()
}

/// `sum_l ||V_l^H a_{M_l}(theta)||^2`.
pub fn music_denominator(subspaces: &[NoiseSubspace], theta: f64) -> f64 {
    subspaces
        .iter()
        .map(|v| (v.basis.adjoint() * coarray_steering(v.m, theta)).norm_squared())
        .sum()
}

/// Spectrum-search estimator combining the subarray noise projections.
pub fn gca_music(subspaces: &[NoiseSubspace], grid_size: usize, d: usize) -> Result<SpectrumResult> {
    if subspaces.is_empty() {
        return Err(Error::InvalidArgument("need at least one noise subspace".into()));
    }
    let min_m = subspaces.iter().map(|v| v.m).min().unwrap();
    if d == 0 || d >= min_m {
        return Err(Error::TooManySources { d, m: min_m });
    }
    if grid_size < 3 {
        return Err(Error::InvalidArgument("grid needs at least 3 points".into()));
    }
    let grid = uniform_grid(grid_size);
    let adjoints: Vec<CMat> = subspaces.iter().map(|v| v.basis.adjoint()).collect();
    let max_m = subspaces.iter().map(|v| v.m).max().unwrap();
    let mut steer = vec![Complex64::new(0.0, 0.0); max_m];

    let values: Vec<f64> = grid
        .iter()
        .map(|&th| {
            let z = cis_pi(th);
            let mut acc = Complex64::new(1.0, 0.0);
            for s in steer.iter_mut() {
                *s = acc;
                acc *= z;
            }
            let mut denom = 0.0;
            for vh in &adjoints {
                let m = vh.ncols();
                for r in 0..vh.nrows() {
                    let mut dot = Complex64::new(0.0, 0.0);
                    for k in 0..m {
                        dot += vh[(r, k)] * steer[k];
                    }
                    denom += dot.norm_sqr();
                }
            }
            1.0 / denom
        })
        .collect();

    let estimates = pick_peaks(&grid, &values, d)?;
    Ok(SpectrumResult { grid, values, estimates })
}

/// Top-`d` interior local maxima, returned in ascending angle.
///
/// A run of equal values that rises above both neighbours counts as one peak,
/// located at its first point. Symmetric scenes put a source exactly between
/// two grid points, which produces such a two-point plateau.
fn pick_peaks(grid: &[f64], values: &[f64], d: usize) -> Result<Vec<f64>> {
    let n = values.len();
    let mut peaks = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if values[i] > values[i - 1] {
            let mut j = i;
            while j + 1 < n && values[j + 1] == values[i] {
                j += 1;
            }
            if j + 1 < n && values[j + 1] < values[i] {
                peaks.push(i);
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    if peaks.len() < d {
        return Err(Error::InsufficientPeaks { found: peaks.len(), wanted: d });
    }
    peaks.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).unwrap().then(a.cmp(&b)));
    let mut chosen: Vec<f64> = peaks[..d].iter().map(|&i| grid[i]).collect();
    chosen.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(chosen)
}

/// Sum of the subarray noise projectors, each smaller projector placed in the
/// trailing principal block of the largest one.
pub fn build_global_projection(subspaces: &[NoiseSubspace]) -> CMat {
    let big = largest_subspace(subspaces);
    let mi = subspaces[big].m;
    let mut p = CMat::zeros(mi, mi);
    for v in subspaces {
        let off = mi - v.m;
        let mut block = p.view_mut((off, off), (v.m, v.m));
        block += v.projector();
    }
    p
}

fn largest_subspace(subspaces: &[NoiseSubspace]) -> usize {
    let mut best = 0;
    for (i, v) in subspaces.iter().enumerate() {
        if v.m > subspaces[best].m {
            best = i;
        }
    }
    best
}

/// Coefficients `c_k = sum_{m-n=k} P[n, m]`, `k = -(M-1)..=(M-1)`, stored at
/// index `k + M - 1`. `Q(z) = sum_k c_k z^k = f(1/z)^T P f(z)`.
pub fn projection_polynomial(p: &CMat) -> Vec<Complex64> {
    let m = p.nrows();
    let mut coeffs = vec![Complex64::new(0.0, 0.0); 2 * m - 1];
    for n in 0..m {
        for col in 0..m {
            coeffs[col + m - 1 - n] += p[(n, col)];
        }
    }
    coeffs
}

/// Evaluates the Laurent polynomial from [`projection_polynomial`] at `z`.
pub fn eval_projection_polynomial(coeffs: &[Complex64], z: Complex64) -> Complex64 {
    let m = (coeffs.len() + 1) / 2;
    let zinv = 1.0 / z;
    let mut acc = Complex64::new(0.0, 0.0);
    for (idx, c) in coeffs.iter().enumerate() {
        let k = idx as i64 - (m as i64 - 1);
        let zk = if k >= 0 { z.powi(k as i32) } else { zinv.powi((-k) as i32) };
        acc += c * zk;
    }
    acc
}

/// Polynomial-rooting estimator on the global noise projection.
pub fn gca_rmusic(subspaces: &[NoiseSubspace], d: usize) -> Result<RootResult> {
    if subspaces.is_empty() {
        return Err(Error::InvalidArgument("need at least one noise subspace".into()));
    }
    let p = build_global_projection(subspaces);
    let mi = p.nrows();
    if d == 0 || d >= mi {
        return Err(Error::TooManySources { d, m: mi });
    }
    let coeffs = projection_polynomial(&p);
    let roots_all = polynomial_roots(&coeffs);
    let candidates = merge_root_clusters(&coeffs, &roots_all);
    let (selected, deficient) = select_roots(&candidates, d);
    let mut estimates: Vec<f64> = selected.iter().map(|z| z.arg() / std::f64::consts::PI).collect();
    estimates.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(RootResult { roots_all, selected, estimates, deficient })
}

/// Roots closer than this are treated as one numerically split multiple root.
const ROOT_CLUSTER_TOL: f64 = 1e-5;

/// Collapses clusters of nearly coincident roots into one refined root each.
///
/// With exact statistics every source gives a double root on the unit circle,
/// which floating point splits by roughly `sqrt(eps)`. A double root of `p`
/// is a simple root of `p'`, so Newton on `p'` recovers it to full precision.
/// Noisy data yields well separated roots and passes through unchanged.
fn merge_root_clusters(coeffs: &[Complex64], roots: &[Complex64]) -> Vec<Complex64> {
    let mut used = vec![false; roots.len()];
    let mut out = Vec::with_capacity(roots.len());
    for i in 0..roots.len() {
        if used[i] {
            continue;
        }
        used[i] = true;
        let mut cluster = vec![roots[i]];
        for j in (i + 1)..roots.len() {
            if !used[j] && (roots[j] - roots[i]).norm() < ROOT_CLUSTER_TOL {
                used[j] = true;
                cluster.push(roots[j]);
            }
        }
        if cluster.len() == 1 {
            out.push(roots[i]);
            continue;
        }
        let mean = cluster.iter().sum::<Complex64>() / cluster.len() as f64;
        out.push(refine_on_derivative(coeffs, mean));
    }
    out
}

fn refine_on_derivative(coeffs: &[Complex64], start: Complex64) -> Complex64 {
    // p(z) = sum_k coeffs[k] z^k; Newton on p' using p''.
    let eval = |z: Complex64| {
        let mut d1 = Complex64::new(0.0, 0.0);
        let mut d2 = Complex64::new(0.0, 0.0);
        for k in (1..coeffs.len()).rev() {
            d2 = d2 * z + d1;
            d1 = d1 * z + coeffs[k] * k as f64;
        }
        (d1, d2)
    };
    let mut z = start;
    let (mut g, _) = eval(z);
    for _ in 0..30 {
        let (d1, d2) = eval(z);
        if d2.norm() == 0.0 {
            break;
        }
        let next = z - d1 / d2;
        if (next - start).norm() > ROOT_CLUSTER_TOL {
            break;
        }
        let (g_next, _) = eval(next);
        if g_next.norm() >= g.norm() {
            break;
        }
        z = next;
        g = g_next;
    }
    z
}

fn select_roots(roots: &[Complex64], d: usize) -> (Vec<Complex64>, bool) {
    let mut inside: Vec<Complex64> = roots
        .iter()
        .copied()
        .filter(|z| z.norm() <= 1.0 + UNIT_CIRCLE_TOL)
        .collect();
    if inside.len() >= d {
        inside.sort_by(|a, b| {
            b.norm()
                .partial_cmp(&a.norm())
                .unwrap()
                .then_with(|| (1.0 - a.norm()).abs().partial_cmp(&(1.0 - b.norm()).abs()).unwrap())
        });
        inside.truncate(d);
        return (inside, false);
    }
    let mut all = roots.to_vec();
    all.sort_by(|a, b| (1.0 - a.norm()).abs().partial_cmp(&(1.0 - b.norm()).abs()).unwrap());
    all.truncate(d);
    (all, true)
}

/// Noise subspaces of every subarray, each processed in its own coordinates.
pub fn subarray_subspaces(
    data: &SnapshotData,
    layout: &SubarrayLayout,
    d: usize,
) -> Result<Vec<NoiseSubspace>> {
    if data.blocks.len() != layout.num_subarrays() {
        return Err(Error::DimensionMismatch(format!(
            "{} data blocks for {} subarrays",
            data.blocks.len(),
            layout.num_subarrays()
        )));
    }
    data.blocks
        .iter()
        .zip(layout.subarrays())
        .map(|(block, sub)| {
            if block.nrows() != sub.len() {
                return Err(Error::DimensionMismatch(format!(
                    "block has {} rows, subarray has {} sensors",
                    block.nrows(),
                    sub.len()
                )));
            }
            subarray_noise_subspace(block, sub, d)
        })
        .collect()
}

/// Fully calibrated coarray MUSIC on the union array.
pub fn ss_music_baseline(
    data: &SnapshotData,
    layout: &SubarrayLayout,
    grid_size: usize,
    d: usize,
) -> Result<SpectrumResult> {
    let full_array = layout.full_array();
    let x = data.stacked();
    if x.nrows() != full_array.len() {
        return Err(Error::DimensionMismatch(format!(
            "stacked data has {} rows, array has {} sensors",
            x.nrows(),
            full_array.len()
        )));
    }
    let r = sample_covariance(&x)?;
    let sig = coarray_vectorize(&r, &full_array)?;
    let rss = spatial_smooth(&sig)?;
    let v = noise_subspace(&rss, d)?;
    gca_music(std::slice::from_ref(&v), grid_size, d)
}
