use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use coarray_doa::geometry::{difference_coarray, theorem1_bound, LayoutKind};
use coarray_doa::harness::{
    crlb_table, run_estimator, run_experiment, write_crlb_csv, write_sweep_csv, ExperimentConfig, SweepAxis,
};
use coarray_doa::signal_model::{derive_seed, simulate};
use coarray_doa::Error;

#[derive(Parser)]
#[command(name = "coarray-doa", version, about = "Coarray DOA estimation for partially calibrated sparse arrays")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file; stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides `base_seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides `trials`.
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Overrides `workers`.
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Weight function of the full array and of every subarray.
    Geometry,
    /// One realization of the stacked snapshots.
    Simulate,
    /// Estimates from one realization with every configured estimator.
    Estimate,
    /// Per-source CRLB over the SNR sweep.
    Crlb,
    /// Monte Carlo RMSE sweep.
    Sweep,
}

fn load(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let path = cli.config.as_ref().ok_or_else(|| Error::Config("--config is required".into()))?;
    let mut c = ExperimentConfig::load(path)?;
    if let Some(s) = cli.seed {
        c.base_seed = s;
    }
    if let Some(t) = cli.trials {
        c.trials = t;
    }
    if let Some(w) = cli.workers {
        c.workers = w;
    }
    c.validate()?;
    Ok(c)
}

fn output(cli: &Cli, fallback: Option<&PathBuf>) -> Result<Box<dyn Write>, Error> {
    match cli.out.as_ref().or(fallback) {
        Some(p) => Ok(Box::new(BufWriter::new(File::create(p)?))),
        None => Ok(Box::new(BufWriter::new(io::stdout()))),
    }
}

fn run(cli: &Cli) -> Result<(), Error> {
    let config = load(cli)?;
    let layout = config.build_layout()?;
    match cli.command {
        Command::Geometry => {
            let full = layout.full_array();
            let mut arrays = vec![("full".to_string(), full.clone())];
            for (i, sub) in layout.subarrays().iter().enumerate() {
                arrays.push((format!("sub{}", i + 1), sub.clone()));
            }
            let mut text = String::new();
            for (name, s) in &arrays {
                let p = difference_coarray(s);
                let umax = p.max_contiguous_lag();
                text += &format!("{name:<6} positions {s}\n");
                text += &format!("{:<6} dof {:>4}   udof {:>4}   U = [-{umax}, {umax}]\n", "", p.dof, p.udof);
                let lags: Vec<String> = p.diff_set.iter().map(|m| format!("{m:>4}")).collect();
                let weights: Vec<String> = p.diff_set.iter().map(|m| format!("{:>4}", p.weight_at(*m))).collect();
                text += &format!("{:<6} m    {}\n{:<6} w(m) {}\n", "", lags.join(""), "", weights.join(""));
            }
            if let LayoutKind::TypeII { mu } = layout.kind() {
                let reference = layout.local(0);
                let sub = difference_coarray(&reference);
                if !sub.has_holes() {
                    let b = theorem1_bound(sub.dof, layout.num_subarrays(), mu, reference.aperture())?;
                    text += &format!("dof bound {} ({:?})\n", b.bound, b.regime);
                }
            }
            print!("{text}");
            if cli.out.is_some() {
                let io_err = |e: csv::Error| Error::Io(e.to_string());
                let mut w = csv::Writer::from_writer(output(cli, None)?);
                w.write_record(["array", "lag", "weight"]).map_err(io_err)?;
                for (name, s) in &arrays {
                    for (lag, weight) in &difference_coarray(s).weight {
                        w.write_record([name.clone(), lag.to_string(), weight.to_string()]).map_err(io_err)?;
                    }
                }
                w.flush()?;
            }
        }
        Command::Simulate | Command::Estimate => {
            let value = config.sweep_points()?[0];
            let scene = config.scene_at(value, derive_seed(config.base_seed, &[0, 0]))?;
            let data = simulate(&layout, &scene, &config.calibration(&layout)?)?;
            let mut w = csv::Writer::from_writer(output(cli, None)?);
            let io_err = |e: csv::Error| Error::Io(e.to_string());
            if matches!(cli.command, Command::Simulate) {
                let x = data.stacked();
                w.write_record(["sensor", "snapshot", "re", "im"]).map_err(io_err)?;
                for t in 0..x.ncols() {
                    for n in 0..x.nrows() {
                        let z = x[(n, t)];
                        w.write_record([n.to_string(), t.to_string(), z.re.to_string(), z.im.to_string()])
                            .map_err(io_err)?;
                    }
                }
            } else {
                w.write_record(["estimator", "source_index", "truth", "estimate"]).map_err(io_err)?;
                for kind in config.estimator_kinds()? {
                    let est = run_estimator(kind, &data, &layout, scene.num_sources(), config.grid_size)?;
                    for (i, t) in scene.thetas.iter().enumerate() {
                        let e = est.as_ref().map_or(f64::NAN, |e| e[i]);
                        w.write_record([kind.name().to_string(), i.to_string(), t.to_string(), e.to_string()])
                            .map_err(io_err)?;
                    }
                }
            }
            w.flush()?;
        }
        Command::Crlb => {
            let snrs = match config.sweep_axis()? {
                SweepAxis::Snr => config.sweep_points()?,
                SweepAxis::Snapshots => vec![config.snr_db],
            };
            write_crlb_csv(&crlb_table(&config, &snrs)?, output(cli, None)?)?;
        }
        Command::Sweep => {
            let records = run_experiment(&config)?;
            write_sweep_csv(&records, output(cli, config.output.as_ref())?)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::Io(_) => ExitCode::from(2),
                _ => ExitCode::from(3),
            }
        }
    }
}
