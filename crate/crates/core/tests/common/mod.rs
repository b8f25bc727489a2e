#![allow(dead_code)]

use coarray_doa::coarray::{coarray_vectorize, noise_subspace, spatial_smooth, NoiseSubspace};
use coarray_doa::geometry::{build_type2, generate_mra, generate_naq2, snaq2_7, SensorSet, SubarrayLayout};
use coarray_doa::signal_model::{exact_subarray_covariance, SceneConfig};

pub const MRA7: [i64; 7] = [0, 1, 4, 10, 12, 15, 17];

pub fn eleven_sources() -> Vec<f64> {
    vec![-0.75, -0.6, -0.45, -0.3, -0.15, 0.0, 0.15, 0.3, 0.45, 0.6, 0.75]
}

pub fn mra7_reference() -> SensorSet {
    generate_mra(7).unwrap()
}

pub fn ii_mra_layout() -> SubarrayLayout {
    build_type2(&mra7_reference(), 2, 8).unwrap()
}

pub fn layout_for(name: &str) -> SubarrayLayout {
    let reference = match name {
        "mra" => generate_mra(7).unwrap(),
        "snaq2" => snaq2_7(),
        "naq2" => generate_naq2(4, 3).unwrap(),
        other => panic!("unknown geometry {other}"),
    };
    build_type2(&reference, 2, 8).unwrap()
}

/// Per-subarray noise subspaces from exact covariances.
pub fn exact_subspaces(layout: &SubarrayLayout, scene: &SceneConfig) -> Vec<NoiseSubspace> {
    layout
        .subarrays()
        .iter()
        .map(|sub| {
            let r = exact_subarray_covariance(sub, scene);
            let sig = coarray_vectorize(&r, sub).unwrap();
            noise_subspace(&spatial_smooth(&sig).unwrap(), scene.num_sources()).unwrap()
        })
        .collect()
}

/// Noise-free scene: the noise variance is tiny but positive so exact
/// covariances stay invertible.
pub fn noiseless_scene(thetas: Vec<f64>) -> SceneConfig {
    let d = thetas.len();
    SceneConfig::new(thetas, vec![1.0; d], 1e-300, 1, 0).unwrap()
}

pub mod crlb_oracle {
    use coarray_doa::crlb::{
        assemble_fim, derivative_wrt_eta, derivative_wrt_noise, derivative_wrt_nu, derivative_wrt_power,
        derivative_wrt_theta, CalibrationModel, CrlbModel, ParamGroup,
    };
    use coarray_doa::geometry::{build_type2, generate_mra, SensorSet, SubarrayLayout};
    use coarray_doa::linalg::{cis_pi, CMat};
    use coarray_doa::signal_model::{CalibrationSet, SceneConfig};
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[derive(Debug, Clone, Copy)]
    pub enum Param {
        Theta(usize),
        Power(usize),
        Noise,
        Nu(usize, usize),
        Eta(usize, usize),
    }

    /// Parameters in FIM order.
    pub fn params(model: &CrlbModel) -> Vec<Param> {
        let fim = assemble_fim(model, 1).unwrap();
        let mut out = Vec::new();
        for (g, r) in &fim.groups {
            for i in 0..r.len() {
                out.push(match *g {
                    ParamGroup::Theta => Param::Theta(i),
                    ParamGroup::Power => Param::Power(i),
                    ParamGroup::NoiseVar => Param::Noise,
                    ParamGroup::Nu(l) => Param::Nu(l, i),
                    ParamGroup::Eta(l) => Param::Eta(l, i),
                });
            }
        }
        out
    }

    pub fn analytic(model: &CrlbModel, p: Param) -> CMat {
        match p {
            Param::Theta(i) => derivative_wrt_theta(model, i).unwrap(),
            Param::Power(i) => derivative_wrt_power(model, i).unwrap(),
            Param::Noise => derivative_wrt_noise(model),
            Param::Nu(l, i) => derivative_wrt_nu(model, l, i).unwrap(),
            Param::Eta(l, i) => derivative_wrt_eta(model, l, i).unwrap(),
        }
    }

    fn scene_of(thetas: Vec<f64>, powers: Vec<f64>, noise: f64) -> SceneConfig {
        SceneConfig::new(thetas, powers, noise, 1, 0).unwrap()
    }

    fn rebuilt(model: &CrlbModel, thetas: Vec<f64>, powers: Vec<f64>, noise: f64) -> CMat {
        let scene = scene_of(thetas, powers, noise);
        let cal = if model.is_geometric() {
            CalibrationModel::Geometric
        } else {
            CalibrationModel::Fixed(model.calibration().clone())
        };
        CrlbModel::new(model.layout(), &scene, &cal).unwrap().covariance()
    }

    /// Covariance with calibration entry `(l, i)` moved by `delta`.
    fn with_calibration(model: &CrlbModel, l: usize, i: usize, delta: Complex64) -> CMat {
        let a = model.local_steering();
        let offsets = model.layout().row_offsets();
        let mut h = model.calibration().matrix().clone();
        h[(l, i)] += delta;
        let mut w = a.clone();
        for (sub, &r0) in offsets.iter().enumerate() {
            for r in r0..r0 + model.layout().subarrays()[sub].len() {
                for d in 0..w.ncols() {
                    w[(r, d)] *= h[(sub, d)];
                }
            }
        }
        let mut wp = w.clone();
        for (d, &p) in model.powers().iter().enumerate() {
            wp.column_mut(d).scale_mut(p);
        }
        let n = w.nrows();
        &wp * w.adjoint() + CMat::identity(n, n).scale(model.noise_var())
    }

    /// Central difference of `R` along one parameter.
    pub fn finite_difference(model: &CrlbModel, p: Param, h: f64) -> CMat {
        let th = model.thetas().to_vec();
        let pw = model.powers().to_vec();
        let s2 = model.noise_var();
        let (plus, minus) = match p {
            Param::Theta(i) => {
                let mut a = th.clone();
                let mut b = th.clone();
                a[i] += h;
                b[i] -= h;
                (rebuilt(model, a, pw.clone(), s2), rebuilt(model, b, pw, s2))
            }
            Param::Power(i) => {
                let mut a = pw.clone();
                let mut b = pw.clone();
                a[i] += h;
                b[i] -= h;
                (rebuilt(model, th.clone(), a, s2), rebuilt(model, th, b, s2))
            }
            Param::Noise => (rebuilt(model, th.clone(), pw.clone(), s2 + h), rebuilt(model, th, pw, s2 - h)),
            Param::Nu(l, i) => (
                with_calibration(model, l, i, Complex64::new(h, 0.0)),
                with_calibration(model, l, i, Complex64::new(-h, 0.0)),
            ),
            Param::Eta(l, i) => (
                with_calibration(model, l, i, Complex64::new(0.0, h)),
                with_calibration(model, l, i, Complex64::new(0.0, -h)),
            ),
        };
        (plus - minus).unscale(2.0 * h)
    }

    /// Largest relative deviation of analytic derivatives from central
    /// differences.
    pub fn max_fd_error(model: &CrlbModel, h: f64) -> f64 {
        params(model)
            .into_iter()
            .map(|p| {
                let a = analytic(model, p);
                let fd = finite_difference(model, p, h);
                let norm = a.norm();
                if norm == 0.0 {
                    fd.norm()
                } else {
                    (a - fd).norm() / norm
                }
            })
            .fold(0.0, f64::max)
    }

    /// Largest deviation of the closed-form FIM from `T tr(Q dR_i Q dR_j)`,
    /// normalized entrywise by `sqrt(F_ii F_jj)`; also returns the largest
    /// imaginary part of the trace relative to that normalization.
    pub fn trace_oracle(model: &CrlbModel, t: usize) -> (f64, f64) {
        let fim = assemble_fim(model, t).unwrap();
        let q = model.covariance().try_inverse().unwrap();
        let ders: Vec<CMat> = params(model).into_iter().map(|p| &q * analytic(model, p)).collect();
        let n = ders.len();
        let mut trace = vec![vec![Complex64::new(0.0, 0.0); n]; n];
        for i in 0..n {
            for j in i..n {
                let v = (&ders[i] * &ders[j]).trace() * t as f64;
                trace[i][j] = v;
                trace[j][i] = v;
            }
        }
        let mut err: f64 = 0.0;
        let mut imag: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let scale = (trace[i][i].re * trace[j][j].re).sqrt().max(f64::MIN_POSITIVE);
                err = err.max((fim.matrix[(i, j)] - trace[i][j].re).abs() / scale);
                imag = imag.max(trace[i][j].im.abs() / scale);
            }
        }
        (err, imag)
    }

    pub fn ii_mra_model(snr_db: f64, t: usize) -> CrlbModel {
        let layout = build_type2(&generate_mra(7).unwrap(), 2, 8).unwrap();
        let scene = SceneConfig::from_snr(super::eleven_sources(), snr_db, t, 0).unwrap();
        CrlbModel::new(&layout, &scene, &CalibrationModel::Geometric).unwrap()
    }

    /// Random scenes: 1..=3 subarrays, random references and directions,
    /// geometric or random fixed calibration.
    pub fn random_models(count: usize, seed: u64) -> Vec<CrlbModel> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|k| {
                let n = rng.random_range(3..=6);
                let reference = if rng.random_bool(0.5) {
                    generate_mra(n).unwrap()
                } else {
                    let mut pos = vec![0i64];
                    while pos.len() < n {
                        let last = *pos.last().unwrap();
                        pos.push(last + rng.random_range(1..=4));
                    }
                    SensorSet::new(pos).unwrap()
                };
                let l = rng.random_range(1..=3);
                let layout: SubarrayLayout = build_type2(&reference, l, rng.random_range(1..=10)).unwrap();
                let d = rng.random_range(1..=4);
                let mut thetas: Vec<f64> = Vec::new();
                while thetas.len() < d {
                    let t: f64 = rng.random_range(-0.9..0.9);
                    if thetas.iter().all(|x| (x - t).abs() > 0.08) {
                        thetas.push(t);
                    }
                }
                thetas.sort_by(f64::total_cmp);
                let powers = (0..d).map(|_| rng.random_range(0.5..2.0)).collect();
                let noise = 10f64.powf(-rng.random_range(-10.0..20.0) / 10.0);
                let scene = SceneConfig::new(thetas, powers, noise, 100, 0).unwrap();
                let cal = if k % 2 == 0 {
                    CalibrationModel::Geometric
                } else {
                    let h = CMat::from_fn(l, d, |i, _| {
                        if i == 0 {
                            Complex64::new(1.0, 0.0)
                        } else {
                            cis_pi(rng.random_range(-1.0..1.0))
                        }
                    });
                    CalibrationModel::Fixed(CalibrationSet::new(h).unwrap())
                };
                CrlbModel::new(&layout, &scene, &cal).unwrap()
            })
            .collect()
    }
}

/// Least-squares log-log slope of every source's proposed bound against
/// linear SNR over `lo..=hi` dB in 2.5 dB steps.
pub fn crlb_slope(lo: f64, hi: f64) -> Vec<f64> {
    use coarray_doa::crlb::{crlb_pc_up, CalibrationModel};
    let layout = ii_mra_layout();
    let mut xs = Vec::new();
    let mut ys: Vec<Vec<f64>> = Vec::new();
    let mut snr = lo;
    while snr <= hi + 1e-9 {
        let scene = SceneConfig::from_snr(eleven_sources(), snr, 2000, 0).unwrap();
        let v = crlb_pc_up(&layout, &scene, &CalibrationModel::Geometric, 2000).unwrap().variances();
        xs.push(snr / 10.0);
        ys.push(v.iter().map(|x| x.log10()).collect());
        snr += 2.5;
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    (0..ys[0].len())
        .map(|d| {
            let my = ys.iter().map(|y| y[d]).sum::<f64>() / n;
            xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y[d] - my)).sum::<f64>() / sxx
        })
        .collect()
}
