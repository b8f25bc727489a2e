//! Partially-calibrated narrowband data model.
//!
//! Subarray `l` sees `x_l(t) = A_l(theta) G_l s(t) + n_l(t)` where `A_l` is
//! the steering matrix in the subarray's own coordinates and
//! `G_l = diag(h_{l,1..D})` carries the unknown inter-subarray phases. All
//! subarrays observe the same source realization `s(t)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::geometry::{LayoutKind, SensorSet, SubarrayLayout};
use crate::linalg::{cis_pi, CMat, CVec};
use num_complex::Complex64;

#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub thetas: Vec<f64>,
    pub powers: Vec<f64>,
    pub noise_var: f64,
    pub snapshots: usize,
    pub seed: u64,
}

impl SceneConfig {
    pub fn new(
        thetas: Vec<f64>,
        powers: Vec<f64>,
        noise_var: f64,
        snapshots: usize,
        seed: u64,
    ) -> Result<Self> {
        if thetas.len() != powers.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} directions but {} powers",
                thetas.len(),
                powers.len()
            )));
        }
        if thetas.iter().any(|t| !t.is_finite() || *t < -1.0 || *t >= 1.0) {
            return Err(Error::InvalidArgument("directions must lie in [-1, 1)".into()));
        }
        if thetas.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(
                "directions must be strictly ascending".into(),
            ));
        }
        if powers.iter().any(|p| !(*p > 0.0) || !p.is_finite()) {
            return Err(Error::InvalidArgument("source powers must be positive".into()));
        }
        if !(noise_var > 0.0) || !noise_var.is_finite() {
            return Err(Error::InvalidArgument("noise variance must be positive".into()));
        }
        if snapshots == 0 {
            return Err(Error::InvalidArgument("need at least one snapshot".into()));
        }
        Ok(SceneConfig { thetas, powers, noise_var, snapshots, seed })
    }

    /// Unit-power sources with `noise_var = 10^(-snr_db / 10)`.
    pub fn from_snr(thetas: Vec<f64>, snr_db: f64, snapshots: usize, seed: u64) -> Result<Self> {
        let powers = vec![1.0; thetas.len()];
        Self::new(thetas, powers, snr_to_noise_var(snr_db), snapshots, seed)
    }

    pub fn num_sources(&self) -> usize {
        self.thetas.len()
    }

    /// Copy with a different noise level and seed; skips revalidation of the
    /// directions.
    pub fn with_noise_and_seed(&self, noise_var: f64, seed: u64) -> Self {
        SceneConfig { noise_var, seed, ..self.clone() }
    }
}

pub fn snr_to_noise_var(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0)
}

/// Per-subarray, per-source unit-modulus calibration phases (`L x D`,
/// first row all ones).
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationSet {
    h: CMat,
}

impl CalibrationSet {
    pub fn new(h: CMat) -> Result<Self> {
        if h.nrows() == 0 {
            return Err(Error::InvalidArgument("calibration needs at least one row".into()));
        }
        if h.iter().any(|z| (z.norm() - 1.0).abs() > 1e-9) {
            return Err(Error::InvalidArgument("calibration entries must have unit modulus".into()));
        }
        if h.row(0).iter().any(|z| (z - Complex64::new(1.0, 0.0)).norm() > 1e-9) {
            return Err(Error::InvalidArgument(
                "reference subarray calibration must be all ones".into(),
            ));
        }
        Ok(CalibrationSet { h })
    }

    pub fn ones(l: usize, d: usize) -> Self {
        CalibrationSet { h: CMat::from_element(l, d, Complex64::new(1.0, 0.0)) }
    }

    pub fn matrix(&self) -> &CMat {
        &self.h
    }

    pub fn num_subarrays(&self) -> usize {
        self.h.nrows()
    }

    pub fn num_sources(&self) -> usize {
        self.h.ncols()
    }

    pub fn get(&self, l: usize, d: usize) -> Complex64 {
        self.h[(l, d)]
    }
}

/// Geometric calibration: `h_{l,d} = exp(j pi delta_l theta_d)` where
/// `delta_l` is the displacement of subarray `l` from the reference. For a
/// type-II layout `delta_l = (l-1)(mu + kappa)`.
pub fn default_calibration(layout: &SubarrayLayout, thetas: &[f64]) -> Result<CalibrationSet> {
    if layout.kind() == LayoutKind::Custom && layout.num_subarrays() > 1 {
        return Err(Error::UnsupportedLayout);
    }
    let l = layout.num_subarrays();
    let h = CMat::from_fn(l, thetas.len(), |i, d| {
        cis_pi(layout.displacement(i) as f64 * thetas[d])
    });
    Ok(CalibrationSet { h })
}

/// `[exp(j pi n_k theta)]_k` over the sensor positions of `array`.
pub fn steering_vector(array: &SensorSet, theta: f64) -> CVec {
    CVec::from_iterator(array.len(), array.positions().iter().map(|&n| cis_pi(n as f64 * theta)))
}

pub fn steering_matrix(array: &SensorSet, thetas: &[f64]) -> CMat {
    CMat::from_fn(array.len(), thetas.len(), |k, d| {
        cis_pi(array.positions()[k] as f64 * thetas[d])
    })
}

/// Per-subarray snapshot blocks, each `N_l x T`.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotData {
    pub blocks: Vec<CMat>,
}

impl SnapshotData {
    pub fn snapshots(&self) -> usize {
        self.blocks.first().map_or(0, |b| b.ncols())
    }

    /// Row-wise concatenation of the blocks: the full-array data matrix.
    pub fn stacked(&self) -> CMat {
        let rows: usize = self.blocks.iter().map(|b| b.nrows()).sum();
        let t = self.snapshots();
        let mut out = CMat::zeros(rows, t);
        let mut r0 = 0;
        for b in &self.blocks {
            out.view_mut((r0, 0), (b.nrows(), t)).copy_from(b);
            r0 += b.nrows();
        }
        out
    }
}

fn complex_gaussian(rng: &mut ChaCha8Rng, scale: f64) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re * scale, im * scale)
}

/// Draws `T` snapshots for every subarray. Deterministic in `scene.seed`.
pub fn simulate(
    layout: &SubarrayLayout,
    scene: &SceneConfig,
    calib: &CalibrationSet,
) -> Result<SnapshotData> {
    let l = layout.num_subarrays();
    let d = scene.num_sources();
    check_calibration(calib, l, d)?;
    let t = scene.snapshots;
    let mut rng = ChaCha8Rng::seed_from_u64(scene.seed);

    let mut sources = CMat::zeros(d, t);
    for col in 0..t {
        for k in 0..d {
            sources[(k, col)] = complex_gaussian(&mut rng, (scene.powers[k] / 2.0).sqrt());
        }
    }

    let noise_scale = (scene.noise_var / 2.0).sqrt();
    let mut blocks = Vec::with_capacity(l);
    for i in 0..l {
        let local = layout.local(i);
        let mut mixing = steering_matrix(&local, &scene.thetas);
        for k in 0..d {
            let h = calib.get(i, k);
            for r in 0..local.len() {
                mixing[(r, k)] *= h;
            }
        }
        let mut block = &mixing * &sources;
        for col in 0..t {
            for r in 0..local.len() {
                block[(r, col)] += complex_gaussian(&mut rng, noise_scale);
            }
        }
        blocks.push(block);
    }
    Ok(SnapshotData { blocks })
}

fn check_calibration(calib: &CalibrationSet, l: usize, d: usize) -> Result<()> {
    if calib.num_subarrays() != l || calib.num_sources() != d {
        return Err(Error::DimensionMismatch(format!(
            "calibration is {}x{}, expected {l}x{d}",
            calib.num_subarrays(),
            calib.num_sources()
        )));
    }
    Ok(())
}

/// `A diag(p) A^H + sigma^2 I` for one subarray. Calibration phases cancel
/// inside a subarray, so none are needed.
pub fn exact_subarray_covariance(array: &SensorSet, scene: &SceneConfig) -> CMat {
    let a = steering_matrix(array, &scene.thetas);
    weighted_gram(&a, &scene.powers) + CMat::identity(array.len(), array.len()).scale(scene.noise_var)
}

/// Stacked full-array steering `W = [V(theta_d) h_d]_d` (`N x D`).
pub fn calibrated_manifold(
    layout: &SubarrayLayout,
    thetas: &[f64],
    calib: &CalibrationSet,
) -> Result<CMat> {
    check_calibration(calib, layout.num_subarrays(), thetas.len())?;
    let n = layout.total_sensors();
    let offsets = layout.row_offsets();
    let mut w = CMat::zeros(n, thetas.len());
    for (i, &r0) in offsets.iter().enumerate() {
        let local = layout.local(i);
        for (d, &th) in thetas.iter().enumerate() {
            let h = calib.get(i, d);
            for (k, &p) in local.positions().iter().enumerate() {
                w[(r0 + k, d)] = cis_pi(p as f64 * th) * h;
            }
        }
    }
    Ok(w)
}

/// Full-array covariance `W diag(p) W^H + sigma^2 I`.
pub fn exact_full_covariance(
    layout: &SubarrayLayout,
    scene: &SceneConfig,
    calib: &CalibrationSet,
) -> Result<CMat> {
    let w = calibrated_manifold(layout, &scene.thetas, calib)?;
    let n = w.nrows();
    Ok(weighted_gram(&w, &scene.powers) + CMat::identity(n, n).scale(scene.noise_var))
}

fn weighted_gram(a: &CMat, powers: &[f64]) -> CMat {
    let mut scaled = a.clone();
    for (k, &p) in powers.iter().enumerate() {
        scaled.column_mut(k).scale_mut(p);
    }
    &scaled * a.adjoint()
}

/// Mixes a base seed with trial coordinates (SplitMix64 finalizer per word)
/// so every trial gets an independent, order-free stream.
pub fn derive_seed(base: u64, coords: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    coords.iter().fold(mix(base), |acc, &c| mix(acc ^ mix(c)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_type2;

    fn set(v: &[i64]) -> SensorSet {
        SensorSet::new(v.to_vec()).unwrap()
    }

    fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
        (a - b).norm() < tol
    }

    #[test]
    fn steering_examples() {
        let one = Complex64::new(1.0, 0.0);
        let v = steering_vector(&set(&[0, 1, 2]), 0.0);
        assert!(v.iter().all(|z| close(*z, one, 1e-15)));
        let v = steering_vector(&set(&[0, 1]), -1.0);
        assert!(close(v[0], one, 1e-15) && close(v[1], -one, 1e-15));
        let v = steering_vector(&set(&[0, 2]), 0.5);
        assert!(close(v[1], -one, 1e-15));
    }

    #[test]
    fn steering_is_two_periodic() {
        let s = set(&[0, 1, 4, 10, 12, 15, 17]);
        for th in [-0.93, -0.2, 0.0, 0.41, 0.99] {
            let a = steering_vector(&s, th);
            let b = steering_vector(&s, th - 2.0);
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn scene_validation() {
        assert!(SceneConfig::new(vec![0.2, 0.1], vec![1.0, 1.0], 1.0, 10, 0).is_err());
        assert!(SceneConfig::new(vec![1.0], vec![1.0], 1.0, 10, 0).is_err());
        assert!(SceneConfig::new(vec![0.0], vec![0.0], 1.0, 10, 0).is_err());
        assert!(SceneConfig::new(vec![0.0], vec![1.0], 0.0, 10, 0).is_err());
        assert!(SceneConfig::new(vec![0.0], vec![1.0], 1.0, 0, 0).is_err());
        let s = SceneConfig::from_snr(vec![0.0], 10.0, 5, 1).unwrap();
        assert!((s.noise_var - 0.1).abs() < 1e-15);
    }

    #[test]
    fn default_calibration_examples() {
        let reference = set(&[0, 1, 4, 10, 12, 15, 17]);
        let single = build_type2(&reference, 1, 8).unwrap();
        let h = default_calibration(&single, &[0.1, 0.2]).unwrap();
        assert_eq!(h.matrix().shape(), (1, 2));
        assert!(h.matrix().iter().all(|z| close(*z, Complex64::new(1.0, 0.0), 1e-15)));

        let two = build_type2(&reference, 2, 8).unwrap();
        let h = default_calibration(&two, &[0.0, 0.5]).unwrap();
        assert!(close(h.get(1, 0), Complex64::new(1.0, 0.0), 1e-15));
        assert!(close(h.get(1, 1), Complex64::new(0.0, 1.0), 1e-12));

        let custom = SubarrayLayout::custom(vec![set(&[0, 1]), set(&[5, 6])]).unwrap();
        assert_eq!(default_calibration(&custom, &[0.0]), Err(Error::UnsupportedLayout));
    }

    #[test]
    fn calibration_validation() {
        let bad = CMat::from_element(2, 1, Complex64::new(0.5, 0.0));
        assert!(CalibrationSet::new(bad).is_err());
        let mut h = CMat::from_element(2, 1, Complex64::new(1.0, 0.0));
        h[(0, 0)] = Complex64::new(0.0, 1.0);
        assert!(CalibrationSet::new(h).is_err());
    }

    #[test]
    fn exact_subarray_covariance_examples() {
        let s = SceneConfig::new(vec![], vec![], 0.7, 1, 0).unwrap();
        let r = exact_subarray_covariance(&set(&[0, 3, 4]), &s);
        assert!((r - CMat::identity(3, 3).scale(0.7)).norm() < 1e-15);

        let s = SceneConfig::new(vec![0.3], vec![2.0], 1.0, 1, 0).unwrap();
        let r = exact_subarray_covariance(&set(&[0]), &s);
        assert!(close(r[(0, 0)], Complex64::new(3.0, 0.0), 1e-14));

        // noise_var must be positive in a scene, so build the noiseless case directly
        let a = steering_matrix(&set(&[0, 1]), &[0.0]);
        let r = weighted_gram(&a, &[1.0]);
        assert!(r.iter().all(|z| close(*z, Complex64::new(1.0, 0.0), 1e-15)));
    }

    #[test]
    fn full_covariance_blocks_match_subarrays() {
        let reference = set(&[0, 1, 4, 10, 12, 15, 17]);
        let layout = build_type2(&reference, 2, 8).unwrap();
        let thetas = vec![-0.75, -0.3, 0.0, 0.45];
        let scene = SceneConfig::new(thetas.clone(), vec![1.0, 0.5, 2.0, 1.5], 0.3, 1, 0).unwrap();
        let calib = default_calibration(&layout, &thetas).unwrap();
        let full = exact_full_covariance(&layout, &scene, &calib).unwrap();
        for (i, &r0) in layout.row_offsets().iter().enumerate() {
            let n = layout.subarrays()[i].len();
            let block = full.view((r0, r0), (n, n)).into_owned();
            let sub = exact_subarray_covariance(&layout.subarrays()[i], &scene);
            assert!((block - sub).norm() < 1e-12);
        }
        // Geometric calibration makes the full covariance that of the physical array.
        let direct = exact_subarray_covariance(&layout.full_array(), &scene);
        assert!((full - direct).norm() < 1e-11);
    }

    #[test]
    fn full_covariance_single_subarray_and_noise_only() {
        let s = set(&[0, 2, 3, 7]);
        let layout = SubarrayLayout::single(s.clone());
        let scene = SceneConfig::new(vec![0.1, 0.6], vec![1.0, 3.0], 0.5, 1, 0).unwrap();
        let calib = CalibrationSet::ones(1, 2);
        let full = exact_full_covariance(&layout, &scene, &calib).unwrap();
        assert!((full - exact_subarray_covariance(&s, &scene)).norm() < 1e-13);

        let quiet = SceneConfig::new(vec![], vec![], 0.25, 1, 0).unwrap();
        let r = exact_full_covariance(&layout, &quiet, &CalibrationSet::ones(1, 0)).unwrap();
        assert!((r - CMat::identity(4, 4).scale(0.25)).norm() < 1e-15);

        assert!(matches!(
            exact_full_covariance(&layout, &scene, &CalibrationSet::ones(2, 2)),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn exact_covariances_are_hermitian_pd() {
        let layout = build_type2(&set(&[0, 2, 3, 6, 9, 13, 14]), 2, 8).unwrap();
        let thetas = vec![-0.6, -0.15, 0.3, 0.75];
        let scene = SceneConfig::new(thetas.clone(), vec![1.0; 4], 0.2, 1, 0).unwrap();
        let calib = default_calibration(&layout, &thetas).unwrap();
        let full = exact_full_covariance(&layout, &scene, &calib).unwrap();
        assert!((&full - full.adjoint()).norm() < 1e-13);
        let (vals, _) = crate::linalg::hermitian_eigh(&full);
        assert!(*vals.last().unwrap() >= 0.2 - 1e-10);
    }

    #[test]
    fn simulate_shapes_and_determinism() {
        let layout = build_type2(&set(&[0, 1, 4, 7, 9]), 2, 1).unwrap();
        let thetas = vec![-0.2, 0.4];
        let calib = default_calibration(&layout, &thetas).unwrap();
        let scene = SceneConfig::from_snr(thetas, 0.0, 1, 42).unwrap();
        let data = simulate(&layout, &scene, &calib).unwrap();
        assert_eq!(data.blocks.len(), 2);
        assert!(data.blocks.iter().all(|b| b.ncols() == 1 && b.nrows() == 5));

        let scene = scene.with_noise_and_seed(1.0, 7);
        let scene = SceneConfig { snapshots: 64, ..scene };
        let a = simulate(&layout, &scene, &calib).unwrap();
        let b = simulate(&layout, &scene, &calib).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.stacked().nrows(), 10);

        assert!(matches!(
            simulate(&layout, &scene, &CalibrationSet::ones(3, 2)),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn derived_seeds_differ() {
        let a = derive_seed(1, &[0, 0]);
        let b = derive_seed(1, &[0, 1]);
        let c = derive_seed(1, &[1, 0]);
        let d = derive_seed(2, &[0, 0]);
        assert!(a != b && a != c && b != c && a != d);
        assert_eq!(a, derive_seed(1, &[0, 0]));
    }
}
