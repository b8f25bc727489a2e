//! Seeded Monte Carlo sweeps: config parsing, per-trial estimation, RMSE
//! accumulation and CSV output.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use num_complex::Complex64;
use serde::Deserialize;

use crate::crlb::{crlb_fc_up, crlb_pc_up, CalibrationModel};
use crate::error::{Error, Result};
use crate::linalg::{cis_pi, CMat};
use crate::estimators::{gca_music, gca_rmusic, ss_music_baseline, subarray_subspaces, DEFAULT_GRID_SIZE};
use crate::geometry::{build_type2, generate_mra, generate_naq2, snaq2_7, split_type1, SensorSet, SubarrayLayout};
use crate::signal_model::{default_calibration, derive_seed, simulate, CalibrationSet, SceneConfig, SnapshotData};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EstimatorKind {
    GcaMusic,
    GcaRmusic,
    SsMusic,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 3] = [EstimatorKind::GcaMusic, EstimatorKind::GcaRmusic, EstimatorKind::SsMusic];

    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::GcaMusic => "gca-music",
            EstimatorKind::GcaRmusic => "gca-rmusic",
            EstimatorKind::SsMusic => "ss-music",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown estimator `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Snr,
    Snapshots,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Snr => "snr",
            SweepAxis::Snapshots => "snapshots",
        }
    }
}

fn default_layout() -> String {
    "type2".into()
}
fn default_l() -> usize {
    1
}
fn default_snr() -> f64 {
    0.0
}
fn default_snapshots() -> usize {
    2000
}
fn default_trials() -> usize {
    1000
}
fn default_estimators() -> Vec<String> {
    EstimatorKind::ALL.iter().map(|k| k.name().to_string()).collect()
}
fn default_grid() -> usize {
    DEFAULT_GRID_SIZE
}

/// Flat experiment description, read from TOML. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// `mra`, `naq2`, `snaq2-7` or `explicit`.
    pub geometry: String,
    pub n: Option<usize>,
    pub n1: Option<usize>,
    pub n2: Option<usize>,
    pub positions: Option<Vec<i64>>,
    /// `type2` replicates the geometry `l` times; `type1` splits it by `sizes`.
    #[serde(default = "default_layout")]
    pub layout: String,
    #[serde(default = "default_l")]
    pub l: usize,
    pub mu: Option<i64>,
    pub sizes: Option<Vec<usize>>,
    pub thetas: Vec<f64>,
    pub powers: Option<Vec<f64>>,
    /// Fixed calibration phases in units of pi, one row per subarray after
    /// the first. Geometric calibration when absent.
    pub calibration_phases: Option<Vec<Vec<f64>>>,
    #[serde(default = "default_snr")]
    pub snr_db: f64,
    #[serde(default = "default_snapshots")]
    pub snapshots: usize,
    pub sweep_axis: Option<String>,
    pub sweep_values: Option<Vec<f64>>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_estimators")]
    pub estimators: Vec<String>,
    #[serde(default = "default_grid")]
    pub grid_size: usize,
    #[serde(default)]
    pub include_crlb: bool,
    #[serde(default)]
    pub base_seed: u64,
    pub output: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[serde(default)]
    pub workers: usize,
}

fn cfg<T>(r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Config(_) => e,
        other => Error::Config(other.to_string()),
    })
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let c: ExperimentConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        let values = self.sweep_points()?;
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("sweep values must be finite and nonempty".into()));
        }
        if self.sweep_axis()? == SweepAxis::Snapshots
            && values.iter().any(|v| *v < 1.0 || v.fract() != 0.0)
        {
            return Err(Error::Config("snapshot sweep values must be positive integers".into()));
        }
        self.estimator_kinds()?;
        let layout = self.build_layout()?;
        for v in values {
            self.scene_at(v, 0)?;
        }
        cfg(self.calibration(&layout).map(|_| ()))
    }

    pub fn sweep_axis(&self) -> Result<SweepAxis> {
        match self.sweep_axis.as_deref() {
            None | Some("snr") => Ok(SweepAxis::Snr),
            Some("snapshots") => Ok(SweepAxis::Snapshots),
            Some(other) => Err(Error::Config(format!("unknown sweep axis `{other}`"))),
        }
    }

    /// Swept values; without an explicit sweep, the single configured point.
    pub fn sweep_points(&self) -> Result<Vec<f64>> {
        Ok(match &self.sweep_values {
            Some(v) => v.clone(),
            None => match self.sweep_axis()? {
                SweepAxis::Snr => vec![self.snr_db],
                SweepAxis::Snapshots => vec![self.snapshots as f64],
            },
        })
    }

    pub fn estimator_kinds(&self) -> Result<Vec<EstimatorKind>> {
        if self.estimators.is_empty() {
            return Err(Error::Config("no estimators requested".into()));
        }
        let mut kinds = self.estimators.iter().map(|s| EstimatorKind::parse(s)).collect::<Result<Vec<_>>>()?;
        kinds.sort();
        kinds.dedup();
        Ok(kinds)
    }

    fn base_array(&self) -> Result<SensorSet> {
        let need = |v: Option<usize>, k: &str| v.ok_or_else(|| Error::Config(format!("geometry `{}` needs `{k}`", self.geometry)));
        cfg(match self.geometry.as_str() {
            "mra" => generate_mra(need(self.n, "n")?),
            "naq2" => generate_naq2(need(self.n1, "n1")?, need(self.n2, "n2")?),
            "snaq2-7" => Ok(snaq2_7()),
            "explicit" => match &self.positions {
                Some(p) => SensorSet::from_unsorted(p.clone()),
                None => Err(Error::Config("geometry `explicit` needs `positions`".into())),
            },
            other => Err(Error::Config(format!("unknown geometry `{other}`"))),
        })
    }

    pub fn build_layout(&self) -> Result<SubarrayLayout> {
        let base = self.base_array()?;
        cfg(match self.layout.as_str() {
            "type2" => {
                if self.l == 1 {
                    Ok(SubarrayLayout::single(base.canonical()))
                } else {
                    let mu = self.mu.ok_or_else(|| Error::Config("type2 layout needs `mu`".into()))?;
                    build_type2(&base, self.l, mu)
                }
            }
            "type1" => match &self.sizes {
                Some(sizes) => split_type1(&base, sizes),
                None => Err(Error::Config("type1 layout needs `sizes`".into())),
            },
            other => Err(Error::Config(format!("unknown layout `{other}`"))),
        })
    }

    pub fn calibration(&self, layout: &SubarrayLayout) -> Result<CalibrationSet> {
        let Some(rows) = &self.calibration_phases else {
            return default_calibration(layout, &self.thetas);
        };
        let (l, d) = (layout.num_subarrays(), self.thetas.len());
        if rows.len() + 1 != l || rows.iter().any(|r| r.len() != d) {
            return Err(Error::Config(format!("calibration_phases must be {} rows of {d} values", l - 1)));
        }
        let mut h = CMat::from_element(l, d, Complex64::new(1.0, 0.0));
        for (i, row) in rows.iter().enumerate() {
            for (k, phase) in row.iter().enumerate() {
                h[(i + 1, k)] = cis_pi(*phase);
            }
        }
        CalibrationSet::new(h)
    }

    /// Calibration model for the partially calibrated bound.
    pub fn calibration_model(&self, layout: &SubarrayLayout) -> Result<CalibrationModel> {
        match self.calibration_phases {
            None => Ok(CalibrationModel::Geometric),
            Some(_) => Ok(CalibrationModel::Fixed(self.calibration(layout)?)),
        }
    }

    /// Scene at one sweep value.
    pub fn scene_at(&self, value: f64, seed: u64) -> Result<SceneConfig> {
        let (snr, t) = match self.sweep_axis()? {
            SweepAxis::Snr => (value, self.snapshots),
            SweepAxis::Snapshots => (self.snr_db, value as usize),
        };
        let powers = self.powers.clone().unwrap_or_else(|| vec![1.0; self.thetas.len()]);
        cfg(SceneConfig::new(self.thetas.clone(), powers, crate::signal_model::snr_to_noise_var(snr), t, seed))
    }
}

/// Pairs sorted estimates with sorted truth and returns the root mean
/// squared difference.
pub fn rmse(estimates: &[f64], truth: &[f64]) -> Result<f64> {
    Ok((squared_error(estimates, truth)? / truth.len().max(1) as f64).sqrt())
}

fn squared_error(estimates: &[f64], truth: &[f64]) -> Result<f64> {
    if estimates.len() != truth.len() {
        return Err(Error::LengthMismatch(estimates.len(), truth.len()));
    }
    let mut e = estimates.to_vec();
    let mut t = truth.to_vec();
    e.sort_by(f64::total_cmp);
    t.sort_by(f64::total_cmp);
    Ok(e.iter().zip(&t).map(|(a, b)| (a - b) * (a - b)).sum())
}

/// RMSE of guessing uniformly on `[-1, 1]`: `sqrt(1/3 + mean(theta^2))`.
pub fn naive_rmse(truth: &[f64]) -> f64 {
    let mean_sq = truth.iter().map(|t| t * t).sum::<f64>() / truth.len().max(1) as f64;
    (1.0 / 3.0 + mean_sq).sqrt()
}

/// Result of one estimator on one data set: `None` marks a counted failure
/// (missing spectral peaks or too few roots inside the unit circle).
pub fn run_estimator(
    kind: EstimatorKind,
    data: &SnapshotData,
    layout: &SubarrayLayout,
    d: usize,
    grid_size: usize,
) -> Result<Option<Vec<f64>>> {
    let out = match kind {
        EstimatorKind::GcaMusic => {
            let subs = subarray_subspaces(data, layout, d)?;
            gca_music(&subs, grid_size, d).map(|r| r.estimates)
        }
        EstimatorKind::GcaRmusic => {
            let subs = subarray_subspaces(data, layout, d)?;
            let r = gca_rmusic(&subs, d)?;
            if r.deficient {
                return Ok(None);
            }
            Ok(r.estimates)
        }
        EstimatorKind::SsMusic => ss_music_baseline(data, layout, grid_size, d).map(|r| r.estimates),
    };
    match out {
        Ok(est) => Ok(Some(est)),
        Err(Error::InsufficientPeaks { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RmseRecord {
    pub estimator: EstimatorKind,
    pub axis: SweepAxis,
    pub value: f64,
    pub rmse: f64,
    pub failures: usize,
    pub trials: usize,
    pub mean_runtime_s: f64,
    /// Mean per-source bound (squared units), when requested.
    pub crlb_pc_up: Option<f64>,
    pub crlb_fc_up: Option<f64>,
}

struct TrialResult {
    sq_err: Option<f64>,
    runtime_s: f64,
}

fn run_trial(
    config: &ExperimentConfig,
    layout: &SubarrayLayout,
    calib: &CalibrationSet,
    kinds: &[EstimatorKind],
    value: f64,
    seed: u64,
) -> Result<Vec<TrialResult>> {
    let scene = config.scene_at(value, seed)?;
    let data = simulate(layout, &scene, calib)?;
    kinds
        .iter()
        .map(|&k| {
            let start = Instant::now();
            let est = run_estimator(k, &data, layout, scene.num_sources(), config.grid_size)?;
            let runtime_s = start.elapsed().as_secs_f64();
            let sq_err = est.map(|e| squared_error(&e, &scene.thetas)).transpose()?;
            Ok(TrialResult { sq_err, runtime_s })
        })
        .collect()
}

fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))
}

/// Runs the full sweep. Trials may execute in parallel; results are merged in
/// trial order so the output depends only on the config.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<RmseRecord>> {
    config.validate()?;
    let layout = config.build_layout()?;
    let calib = cfg(config.calibration(&layout))?;
    let kinds = config.estimator_kinds()?;
    let axis = config.sweep_axis()?;
    let d = config.thetas.len();
    let pool = thread_pool(config.workers)?;

    let mut records = Vec::new();
    for (si, &value) in config.sweep_points()?.iter().enumerate() {
        let trials: Vec<Vec<TrialResult>> = pool.install(|| {
            (0..config.trials)
                .into_par_iter()
                .map(|ti| {
                    let seed = derive_seed(config.base_seed, &[si as u64, ti as u64]);
                    run_trial(config, &layout, &calib, &kinds, value, seed)
                })
                .collect::<Result<Vec<_>>>()
        })?;

        let bounds = if config.include_crlb {
            let scene = config.scene_at(value, 0)?;
            let t = scene.snapshots;
            let pc = crlb_pc_up(&layout, &scene, &config.calibration_model(&layout)?, t)?;
            let fc = crlb_fc_up(&layout.full_array(), &scene, t)?;
            Some((pc.mean_variance(), fc.mean_variance()))
        } else {
            None
        };

        for (ki, &kind) in kinds.iter().enumerate() {
            let mut sum = 0.0;
            let mut ok = 0usize;
            let mut runtime = 0.0;
            for trial in &trials {
                let r = &trial[ki];
                runtime += r.runtime_s;
                if let Some(e) = r.sq_err {
                    sum += e;
                    ok += 1;
                }
            }
            let rmse = if ok == 0 { f64::NAN } else { (sum / (ok * d) as f64).sqrt() };
            records.push(RmseRecord {
                estimator: kind,
                axis,
                value,
                rmse,
                failures: config.trials - ok,
                trials: config.trials,
                mean_runtime_s: runtime / config.trials as f64,
                crlb_pc_up: bounds.map(|b| b.0),
                crlb_fc_up: bounds.map(|b| b.1),
            });
        }
    }
    Ok(records)
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

pub fn write_sweep_csv<W: Write>(records: &[RmseRecord], out: W) -> Result<()> {
    let with_crlb = records.iter().any(|r| r.crlb_pc_up.is_some());
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["estimator", "axis", "value", "rmse", "failures", "trials", "mean_runtime_s"];
    if with_crlb {
        header.extend(["crlb_pc_up", "crlb_fc_up"]);
    }
    w.write_record(&header).map_err(csv_err)?;
    for r in records {
        let mut row = vec![
            r.estimator.name().to_string(),
            r.axis.name().to_string(),
            r.value.to_string(),
            r.rmse.to_string(),
            r.failures.to_string(),
            r.trials.to_string(),
            r.mean_runtime_s.to_string(),
        ];
        if with_crlb {
            let f = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
            row.push(f(r.crlb_pc_up));
            row.push(f(r.crlb_fc_up));
        }
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrlbRow {
    pub snr_db: f64,
    pub source_index: usize,
    pub crlb_value: f64,
    pub bound_name: &'static str,
}

/// Per-source bounds at every SNR in `snrs`, for both the proposed bound and
/// the fully calibrated one.
pub fn crlb_table(config: &ExperimentConfig, snrs: &[f64]) -> Result<Vec<CrlbRow>> {
    let layout = config.build_layout()?;
    let powers = config.powers.clone().unwrap_or_else(|| vec![1.0; config.thetas.len()]);
    let mut rows = Vec::new();
    for &snr in snrs {
        let scene = cfg(SceneConfig::new(
            config.thetas.clone(),
            powers.clone(),
            crate::signal_model::snr_to_noise_var(snr),
            config.snapshots,
            0,
        ))?;
        let pc = crlb_pc_up(&layout, &scene, &config.calibration_model(&layout)?, config.snapshots)?;
        let fc = crlb_fc_up(&layout.full_array(), &scene, config.snapshots)?;
        for (name, res) in [("pc-up-prop", pc), ("fc-up", fc)] {
            for (i, v) in res.variances().into_iter().enumerate() {
                rows.push(CrlbRow { snr_db: snr, source_index: i, crlb_value: v, bound_name: name });
            }
        }
    }
    Ok(rows)
}

pub fn write_crlb_csv<W: Write>(rows: &[CrlbRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["snr_db", "source_index", "crlb_value", "bound_name"]).map_err(csv_err)?;
    for r in rows {
        w.write_record([r.snr_db.to_string(), r.source_index.to_string(), r.crlb_value.to_string(), r.bound_name.to_string()])
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}
