//! Cramér–Rao bound for DOA estimation with a partially calibrated array and
//! uncorrelated sources.
//!
//! The unknowns are `phi = [theta, p, sigma^2, nu_2..nu_L, eta_2..eta_L]`,
//! where `h_{l,d} = nu_{l,d} + j eta_{l,d}` is the calibration of subarray `l`
//! towards source `d`. With `R = W diag(p) W^H + sigma^2 I` every derivative
//! except the noise one has the form `X + X^H` with `X = u v^H`, so each FIM
//! block reduces to Hadamard products of small `D x D` matrices.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::geometry::{SensorSet, SubarrayLayout};
use crate::linalg::{cis_pi, pinv_symmetric, symmetric_eigenvalues, CMat, RMat, J};
use crate::signal_model::{default_calibration, CalibrationSet, SceneConfig};
use num_complex::Complex64;

/// Relative eigenvalue cut used when pseudo-inverting the nuisance block.
pub const PINV_TOL: f64 = 1e-12;
/// Largest acceptable condition number of the DOA Schur complement.
pub const MAX_CONDITION: f64 = 1e12;
/// Largest acceptable imaginary residue, relative to the intermediate products.
const IMAG_TOL: f64 = 1e-10;

/// How the calibration phases relate to the directions.
#[derive(Debug, Clone, PartialEq)]
pub enum CalibrationModel {
    /// `h_{l,d} = exp(j pi delta_l theta_d)`; its `theta` derivative enters
    /// the DOA derivative.
    Geometric,
    /// Calibration supplied by the caller and held constant in `theta`.
    Fixed(CalibrationSet),
}

/// Evaluation point of the bound.
#[derive(Debug, Clone)]
pub struct CrlbModel {
    layout: SubarrayLayout,
    thetas: Vec<f64>,
    powers: Vec<f64>,
    noise_var: f64,
    calib: CalibrationSet,
    geometric: bool,
}

impl CrlbModel {
    pub fn new(layout: &SubarrayLayout, scene: &SceneConfig, model: &CalibrationModel) -> Result<Self> {
        let (calib, geometric) = match model {
            CalibrationModel::Geometric => (default_calibration(layout, &scene.thetas)?, true),
            CalibrationModel::Fixed(c) => {
                if c.num_subarrays() != layout.num_subarrays() || c.num_sources() != scene.num_sources() {
                    return Err(Error::DimensionMismatch(format!(
                        "calibration is {}x{}, expected {}x{}",
                        c.num_subarrays(),
                        c.num_sources(),
                        layout.num_subarrays(),
                        scene.num_sources()
                    )));
                }
                (c.clone(), false)
            }
        };
        Ok(CrlbModel {
            layout: layout.clone(),
            thetas: scene.thetas.clone(),
            powers: scene.powers.clone(),
            noise_var: scene.noise_var,
            calib,
            geometric,
        })
    }

    pub fn layout(&self) -> &SubarrayLayout {
        &self.layout
    }

    pub fn thetas(&self) -> &[f64] {
        &self.thetas
    }

    pub fn powers(&self) -> &[f64] {
        &self.powers
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    pub fn calibration(&self) -> &CalibrationSet {
        &self.calib
    }

    pub fn is_geometric(&self) -> bool {
        self.geometric
    }

    pub fn num_sources(&self) -> usize {
        self.thetas.len()
    }

    pub fn num_subarrays(&self) -> usize {
        self.layout.num_subarrays()
    }

    pub fn num_sensors(&self) -> usize {
        self.layout.total_sensors()
    }

    /// Stacked local steering without calibration (`N x D`).
    pub fn local_steering(&self) -> CMat {
        let mut a = CMat::zeros(self.num_sensors(), self.num_sources());
        for (l, r0) in self.layout.row_offsets().into_iter().enumerate() {
            let local = self.layout.local(l);
            for (d, &th) in self.thetas.iter().enumerate() {
                for (k, &p) in local.positions().iter().enumerate() {
                    a[(r0 + k, d)] = cis_pi(p as f64 * th);
                }
            }
        }
        a
    }

    /// Calibrated manifold `W` (`N x D`).
    pub fn manifold(&self) -> CMat {
        let mut w = self.local_steering();
        self.for_each_row(|r, l, _| {
            for d in 0..self.num_sources() {
                w[(r, d)] *= self.calib.get(l, d);
            }
        });
        w
    }

    /// Column-wise `theta` derivative of `W`.
    pub fn manifold_derivative(&self) -> CMat {
        let w = self.manifold();
        let mut dw = CMat::zeros(w.nrows(), w.ncols());
        self.for_each_row(|r, l, pos| {
            let mut phase = pos as f64;
            if self.geometric {
                phase += self.layout.displacement(l) as f64;
            }
            for d in 0..self.num_sources() {
                dw[(r, d)] = J * std::f64::consts::PI * phase * w[(r, d)];
            }
        });
        dw
    }

    /// `R = W diag(p) W^H + sigma^2 I`.
    pub fn covariance(&self) -> CMat {
        let w = self.manifold();
        let n = w.nrows();
        &w * scale_columns(&w, &self.powers).adjoint() + CMat::identity(n, n).scale(self.noise_var)
    }

    pub fn parameters(&self) -> ParameterVector {
        let l = self.num_subarrays();
        let h = self.calib.matrix();
        ParameterVector {
            thetas: self.thetas.clone(),
            powers: self.powers.clone(),
            noise_var: self.noise_var,
            nu: (1..l).map(|i| h.row(i).iter().map(|z| z.re).collect()).collect(),
            eta: (1..l).map(|i| h.row(i).iter().map(|z| z.im).collect()).collect(),
        }
    }

    fn for_each_row(&self, mut f: impl FnMut(usize, usize, i64)) {
        for (l, r0) in self.layout.row_offsets().into_iter().enumerate() {
            for (k, &p) in self.layout.local(l).positions().iter().enumerate() {
                f(r0 + k, l, p);
            }
        }
    }

    /// Rows of subarray `l` kept, all others zeroed.
    fn select_rows(&self, m: &CMat, l: usize) -> CMat {
        let r0 = self.layout.row_offsets()[l];
        let len = self.layout.subarrays()[l].len();
        let mut out = CMat::zeros(m.nrows(), m.ncols());
        out.rows_mut(r0, len).copy_from(&m.rows(r0, len));
        out
    }

    fn check_source(&self, i: usize) -> Result<()> {
        if i >= self.num_sources() {
            return Err(Error::IndexOutOfRange { index: i, len: self.num_sources() });
        }
        Ok(())
    }

    fn check_subarray(&self, l: usize) -> Result<()> {
        if l >= self.num_subarrays() {
            return Err(Error::IndexOutOfRange { index: l, len: self.num_subarrays() });
        }
        if l == 0 {
            return Err(Error::ReferenceSubarray);
        }
        Ok(())
    }
}

fn scale_columns(m: &CMat, s: &[f64]) -> CMat {
    let mut out = m.clone();
    for (k, &v) in s.iter().enumerate() {
        out.column_mut(k).scale_mut(v);
    }
    out
}

fn hermitian_pair(u: &CMat, v: &CMat) -> CMat {
    let x = u * v.adjoint();
    &x + x.adjoint()
}

/// `dR/dtheta_i`.
pub fn derivative_wrt_theta(model: &CrlbModel, i: usize) -> Result<CMat> {
    model.check_source(i)?;
    let u = model.manifold_derivative().columns(i, 1).into_owned();
    let v = model.manifold().columns(i, 1).scale(model.powers[i]);
    Ok(hermitian_pair(&u, &v))
}

/// `dR/dp_i = w_i w_i^H`.
pub fn derivative_wrt_power(model: &CrlbModel, i: usize) -> Result<CMat> {
    model.check_source(i)?;
    let w = model.manifold().column(i).into_owned();
    Ok(&w * w.adjoint())
}

/// `dR/dsigma^2 = I`.
pub fn derivative_wrt_noise(model: &CrlbModel) -> CMat {
    let n = model.num_sensors();
    CMat::identity(n, n)
}

/// `dR/dnu_{l,i}`; `l` is a zero-based subarray index and must not be the
/// reference subarray 0.
pub fn derivative_wrt_nu(model: &CrlbModel, l: usize, i: usize) -> Result<CMat> {
    calibration_derivative(model, l, i, Complex64::new(1.0, 0.0))
}

/// `dR/deta_{l,i}`; indices as in [`derivative_wrt_nu`].
pub fn derivative_wrt_eta(model: &CrlbModel, l: usize, i: usize) -> Result<CMat> {
    calibration_derivative(model, l, i, J)
}

fn calibration_derivative(model: &CrlbModel, l: usize, i: usize, dir: Complex64) -> Result<CMat> {
    model.check_subarray(l)?;
    model.check_source(i)?;
    let a = model.select_rows(&model.local_steering(), l);
    let u = a.columns(i, 1) * dir;
    let v = model.manifold().columns(i, 1).scale(model.powers[i]);
    Ok(hermitian_pair(&u, &v))
}

/// Parameter group of the FIM.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamGroup {
    Theta,
    Power,
    NoiseVar,
    /// Real calibration part of subarray `l` (zero-based, `l >= 1`).
    Nu(usize),
    /// Imaginary calibration part of subarray `l`.
    Eta(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParameterVector {
    pub thetas: Vec<f64>,
    pub powers: Vec<f64>,
    pub noise_var: f64,
    pub nu: Vec<Vec<f64>>,
    pub eta: Vec<Vec<f64>>,
}

impl ParameterVector {
    pub fn dim(&self) -> usize {
        let d = self.thetas.len();
        2 * d + 1 + 2 * self.nu.len() * d
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut out = self.thetas.clone();
        out.extend(&self.powers);
        out.push(self.noise_var);
        for row in self.nu.iter().chain(&self.eta) {
            out.extend(row);
        }
        out
    }
}

/// Group ordering and index ranges for `L` subarrays and `D` sources.
pub fn parameter_layout(l: usize, d: usize) -> Vec<(ParamGroup, Range<usize>)> {
    let mut groups = vec![ParamGroup::Theta, ParamGroup::Power, ParamGroup::NoiseVar];
    groups.extend((1..l).map(ParamGroup::Nu));
    groups.extend((1..l).map(ParamGroup::Eta));
    let mut at = 0;
    groups
        .into_iter()
        .map(|g| {
            let len = if g == ParamGroup::NoiseVar { 1 } else { d };
            let r = at..at + len;
            at += len;
            (g, r)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FimMatrix {
    pub matrix: RMat,
    pub groups: Vec<(ParamGroup, Range<usize>)>,
}

impl FimMatrix {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn range(&self, g: ParamGroup) -> Option<Range<usize>> {
        self.groups.iter().find(|(k, _)| *k == g).map(|(_, r)| r.clone())
    }

    pub fn block(&self, a: ParamGroup, b: ParamGroup) -> Option<RMat> {
        let ra = self.range(a)?;
        let rb = self.range(b)?;
        Some(self.matrix.view((ra.start, rb.start), (ra.len(), rb.len())).into_owned())
    }

    pub fn num_sources(&self) -> usize {
        self.range(ParamGroup::Theta).map_or(0, |r| r.len())
    }
}

/// Per-group factors `U, V` with `dR_i = u_i v_i^H + v_i u_i^H`.
struct Factors {
    u: CMat,
    v: CMat,
}

fn group_factors(model: &CrlbModel, g: ParamGroup, w: &CMat, wp: &CMat, a: &CMat) -> Option<Factors> {
    match g {
        ParamGroup::Theta => Some(Factors { u: model.manifold_derivative(), v: wp.clone() }),
        ParamGroup::Power => Some(Factors { u: w.clone(), v: w.scale(0.5) }),
        ParamGroup::NoiseVar => None,
        ParamGroup::Nu(l) => Some(Factors { u: model.select_rows(a, l), v: wp.clone() }),
        ParamGroup::Eta(l) => Some(Factors { u: model.select_rows(a, l) * J, v: wp.clone() }),
    }
}

/// `T tr(Q dR_i Q dR_j)` for two rank-two families, entrywise:
/// `(V1^H Q U2) o (V2^H Q U1)^T + (V1^H Q V2) o (U2^H Q U1)^T + c.c. terms`.
fn hadamard_block(q: &CMat, f1: &Factors, f2: &Factors, t: f64) -> Result<RMat> {
    let qu1 = q * &f1.u;
    let qv1 = q * &f1.v;
    let a = f1.v.adjoint() * q * &f2.u;
    let b = f2.v.adjoint() * &qu1;
    let c = f1.v.adjoint() * q * &f2.v;
    let e = f2.u.adjoint() * &qu1;
    let a2 = f1.u.adjoint() * q * &f2.u;
    let b2 = f2.v.adjoint() * &qv1;
    let c2 = f1.u.adjoint() * q * &f2.v;
    let e2 = f2.u.adjoint() * &qv1;
    let terms = [
        a.component_mul(&b.transpose()),
        c.component_mul(&e.transpose()),
        a2.component_mul(&b2.transpose()),
        c2.component_mul(&e2.transpose()),
    ];
    let qn = q.norm();
    let scale = t * qn * qn * (f1.u.norm() + f1.v.norm()) * (f2.u.norm() + f2.v.norm());
    let full = terms.iter().fold(CMat::zeros(a.nrows(), a.ncols()), |acc, m| acc + m);
    real_part(&full.scale(t), scale)
}

/// `T tr(Q dR_i Q)` for a rank-two family against the noise derivative.
fn noise_column(q: &CMat, f: &Factors, t: f64) -> Result<RMat> {
    let q2 = q * q;
    let x = f.v.adjoint() * &q2 * &f.u;
    let y = f.u.adjoint() * &q2 * &f.v;
    let diag = CMat::from_fn(x.nrows(), 1, |i, _| x[(i, i)] + y[(i, i)]);
    let scale = t * q2.norm() * f.u.norm() * f.v.norm();
    real_part(&diag.scale(t), scale)
}

/// Real part of a block, checking that the discarded imaginary part is
/// negligible against `scale`, the magnitude of the intermediate products.
/// At high SNR `Q` is ill-conditioned and the blocks themselves cancel by many
/// orders of magnitude, so the block norm is not a usable reference.
fn real_part(m: &CMat, scale: f64) -> Result<RMat> {
    let imag = m.iter().map(|z| z.im * z.im).sum::<f64>().sqrt();
    if imag > IMAG_TOL * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::Numerical(format!(
            "FIM block has imaginary residue {imag:e} (scale {scale:e})"
        )));
    }
    Ok(m.map(|z| z.re))
}

/// Inverse of the model covariance; fails when the noise variance is zero.
pub fn covariance_inverse(model: &CrlbModel) -> Result<CMat> {
    if !(model.noise_var > 0.0) {
        return Err(Error::SingularCovariance);
    }
    let r = model.covariance();
    let chol = r.cholesky().ok_or(Error::SingularCovariance)?;
    Ok(chol.inverse())
}

/// Fisher information over all parameters for `t` snapshots.
pub fn assemble_fim(model: &CrlbModel, t: usize) -> Result<FimMatrix> {
    let q = covariance_inverse(model)?;
    let tf = t as f64;
    let d = model.num_sources();
    let groups = parameter_layout(model.num_subarrays(), d);
    let w = model.manifold();
    let wp = scale_columns(&w, &model.powers);
    let a = model.local_steering();
    let factors: Vec<Option<Factors>> =
        groups.iter().map(|(g, _)| group_factors(model, *g, &w, &wp, &a)).collect();

    let dim = groups.last().map_or(0, |(_, r)| r.end);
    let mut fim = RMat::zeros(dim, dim);
    for (i, (_, ri)) in groups.iter().enumerate() {
        for (j, (_, rj)) in groups.iter().enumerate().skip(i) {
            let block = match (&factors[i], &factors[j]) {
                (Some(fi), Some(fj)) => hadamard_block(&q, fi, fj, tf)?,
                (Some(fi), None) => noise_column(&q, fi, tf)?,
                (None, Some(fj)) => noise_column(&q, fj, tf)?.transpose(),
                (None, None) => RMat::from_element(1, 1, tf * (&q * &q).trace().re),
            };
            fim.view_mut((ri.start, rj.start), (ri.len(), rj.len())).copy_from(&block);
            if i != j {
                fim.view_mut((rj.start, ri.start), (rj.len(), ri.len()))
                    .copy_from(&block.transpose());
            }
        }
    }
    Ok(FimMatrix { matrix: fim, groups })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrlbResult {
    pub theta_bound: RMat,
    pub per_source_std: Vec<f64>,
}

impl CrlbResult {
    /// Diagonal of the bound (per-source variance).
    pub fn variances(&self) -> Vec<f64> {
        self.theta_bound.diagonal().iter().copied().collect()
    }

    pub fn mean_variance(&self) -> f64 {
        let v = self.variances();
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// DOA block of the inverse FIM via the Schur complement, with a
/// pseudo-inverse for the nuisance block.
pub fn crlb_theta(fim: &FimMatrix) -> Result<CrlbResult> {
    let d = fim.num_sources();
    let n = fim.dim();
    let f = &fim.matrix;
    let f11 = f.view((0, 0), (d, d)).into_owned();
    let schur = if n > d {
        let f12 = f.view((0, d), (d, n - d)).into_owned();
        let f22 = f.view((d, d), (n - d, n - d)).into_owned();
        &f11 - &f12 * pinv_symmetric(&f22, PINV_TOL) * f12.transpose()
    } else {
        f11
    };
    let schur = (&schur + schur.transpose()) * 0.5;
    let eig = symmetric_eigenvalues(&schur);
    let (lo, hi) = (eig[0], eig[eig.len() - 1]);
    let cond = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(cond <= MAX_CONDITION) {
        return Err(Error::NonIdentifiable { cond });
    }
    let bound = pinv_symmetric(&schur, 0.0);
    let per_source_std = bound.diagonal().iter().map(|v| v.sqrt()).collect();
    Ok(CrlbResult { theta_bound: bound, per_source_std })
}

/// Proposed partially-calibrated bound.
pub fn crlb_pc_up(
    layout: &SubarrayLayout,
    scene: &SceneConfig,
    model: &CalibrationModel,
    t: usize,
) -> Result<CrlbResult> {
    crlb_theta(&assemble_fim(&CrlbModel::new(layout, scene, model)?, t)?)
}

/// Fully calibrated bound: the whole array as one subarray, FIM over
/// `[theta, p, sigma^2]` only.
pub fn crlb_fc_up(full_array: &SensorSet, scene: &SceneConfig, t: usize) -> Result<CrlbResult> {
    let layout = SubarrayLayout::single(full_array.clone());
    let calib = CalibrationSet::ones(1, scene.num_sources());
    crlb_pc_up(&layout, scene, &CalibrationModel::Fixed(calib), t)
}
