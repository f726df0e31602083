//! Command-line front end.
//!
//! Exit codes: 0 on success, 2 for configuration and usage errors, 3 for
//! numerical failures and failed validation.

pub mod config;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rayon::prelude::*;

use crate::bath::cache::{cache_key, KernelCache};
use crate::dynamics::{PropagatorKind, Simulator, Trajectory};
use crate::error::{Error, Result};
use crate::observables::{
    eigen_populations, lab_density, population_spectrum, site_populations, trace_distance_analysis,
    FrameTag, Series, COHERENCE_ORDER,
};
use crate::polaron::{validity_report, InitialState};
use crate::validation::{run_all, run_criterion, CriterionReport, ValidationOptions, CRITERIA};

pub use config::{InitialSpec, ResolvedRun, RunConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Name of the resolved configuration written next to every run's outputs.
pub const METADATA_FILE: &str = "metadata.toml";

const DEFAULT_OUT: &str = "polaron-out";

#[derive(Debug, Parser)]
#[command(
    name = "polaron",
    version,
    about = "Polaron-frame TCL master equation for excitation energy transfer"
)]
pub struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory; overrides `out_dir` in the configuration.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Worker threads for the rate assembly.
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    /// Kernel-table cache directory; defaults to `$POLARON_TCL_CACHE`.
    #[arg(long, global = true, value_name = "DIR")]
    pub cache: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Propagate one initial state and write trajectory and populations.
    Simulate,
    /// Run several propagators on the same model side by side.
    Compare {
        /// Propagator tags; defaults to `[compare].propagators`.
        propagators: Vec<String>,
    },
    /// Detrended Fourier spectrum of one site population.
    Spectrum,
    /// Trace distance between `initial` and `initial_b` in both frames.
    Tracedist,
    /// Run the acceptance suites.
    Validate {
        /// Criterion numbers to run; all when omitted.
        #[arg(long = "criterion", value_name = "N")]
        criteria: Vec<u8>,
    },
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_input_error() {
        EXIT_INPUT
    } else {
        EXIT_NUMERICAL
    }
}

/// Parses `args` and runs the command, printing errors to stderr.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Runs a parsed command; `Ok` carries the exit code.
pub fn run(cli: &Cli) -> Result<i32> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Usage("--threads must be at least 1".into()));
        }
        if rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .is_err()
        {
            log::warn!("thread pool already initialised; --threads ignored");
        }
    }
    let cache = cli
        .cache
        .as_ref()
        .map(KernelCache::new)
        .or_else(KernelCache::from_env);
    if let Command::Validate { criteria } = &cli.command {
        return validate(criteria, cache);
    }
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::Usage("--config PATH is required for this command".into()))?;
    let run = RunConfig::load(path)?.resolve()?;
    let out = cli
        .out
        .clone()
        .or_else(|| run.config.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    let ctx = Context::new(&run, cache.as_ref(), &out)?;
    match &cli.command {
        Command::Simulate => ctx.simulate()?,
        Command::Compare { propagators } => ctx.compare(propagators)?,
        Command::Spectrum => ctx.spectrum()?,
        Command::Tracedist => ctx.tracedist()?,
        Command::Validate { .. } => unreachable!(),
    }
    Ok(EXIT_OK)
}

fn validate(criteria: &[u8], cache: Option<KernelCache>) -> Result<i32> {
    let opts = ValidationOptions {
        cache,
        ..Default::default()
    };
    let reports: Vec<CriterionReport> = if criteria.is_empty() {
        run_all(&opts)
    } else {
        for id in criteria {
            if !CRITERIA.iter().any(|(i, _)| i == id) {
                return Err(Error::Usage(format!("no acceptance criterion {id}")));
            }
        }
        criteria
            .iter()
            .map(|&id| run_criterion(id, &opts))
            .collect::<Result<_>>()?
    };
    for r in &reports {
        print!("{r}");
    }
    let passed = reports.iter().filter(|r| r.passed()).count();
    println!("acceptance: {passed}/{} criteria passed", reports.len());
    Ok(if passed == reports.len() {
        EXIT_OK
    } else {
        EXIT_NUMERICAL
    })
}

struct Context<'a> {
    run: &'a ResolvedRun,
    sim: Simulator,
    initial: InitialState,
    out: PathBuf,
    cache_key: String,
}

impl<'a> Context<'a> {
    fn new(run: &'a ResolvedRun, cache: Option<&KernelCache>, out: &Path) -> Result<Self> {
        let numerics = &run.config.numerics;
        let propagation = numerics.propagation();
        let sim = Simulator::new(
            run.network.clone(),
            run.bath.clone(),
            numerics.coupling_treatment,
            propagation.clone(),
            numerics.quadrature,
            cache,
        )?;
        let report = validity_report(sim.frame(), &run.network, &run.bath.spectral_density);
        for p in report.pairs.iter() {
            if !(p.gamma_below_bath_frequency && p.gap_exceeds_coupling) {
                log::warn!(
                    "pair ({}, {}) outside the comfortable range of the polaron treatment",
                    p.pair.0 + 1,
                    p.pair.1 + 1
                );
            }
        }
        let initial = run.initial.build(sim.frame())?;
        let key = cache_key(
            &run.network,
            &run.bath,
            sim.kernels().spacing(),
            sim.kernels().t_max(),
            &numerics.quadrature,
        );
        fs::create_dir_all(out)?;
        Ok(Self {
            run,
            sim,
            initial,
            out: out.to_path_buf(),
            cache_key: key,
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn write_metadata(&self, command: &str, extra: &[String]) -> Result<()> {
        let mut config = self.run.config.clone();
        config.out_dir = None;
        let mut text = String::new();
        text.push_str(&format!(
            "# polaron-tcl {} {command}\n",
            env!("CARGO_PKG_VERSION")
        ));
        text.push_str(&format!("# kernel_cache_key = {}\n", self.cache_key));
        text.push_str(&format!("# coherence_order = {COHERENCE_ORDER}\n"));
        for line in extra {
            text.push_str(&format!("# {line}\n"));
        }
        text.push('\n');
        text.push_str(&config.to_toml());
        fs::write(self.path(METADATA_FILE), text)?;
        Ok(())
    }

    fn trajectory(&self, kind: PropagatorKind, initial: &InitialState) -> Result<Trajectory> {
        log::info!("propagating with {kind}");
        self.sim.run(kind, initial)
    }

    fn simulate(&self) -> Result<()> {
        let kind = self.run.config.propagator;
        let traj = self.trajectory(kind, &self.initial)?;
        let frame = self.sim.frame();
        let n = frame.size();

        let mut header = vec!["t_fs".to_string()];
        for m in 1..=n {
            for k in m..=n {
                header.push(format!("rho_{m}_{k}_re"));
                header.push(format!("rho_{m}_{k}_im"));
            }
        }
        let rows = traj.states.iter().zip(&traj.times).map(|(s, &t)| {
            let site = frame.to_site_basis(s);
            let mut row = vec![t];
            for m in 0..n {
                for k in m..n {
                    row.push(site[(m, k)].re);
                    row.push(site[(m, k)].im);
                }
            }
            row
        });
        write_numeric(&self.path("trajectory.csv"), &header, rows)?;

        let pops = site_populations(&traj, frame);
        write_series(&self.path("populations.csv"), &pops, "p")?;

        let lab = lab_density(&traj, &self.initial, frame);
        let mut header = vec!["t_fs".to_string()];
        for m in 1..=n {
            for k in m + 1..=n {
                header.push(format!("rho_{m}_{k}_re"));
                header.push(format!("rho_{m}_{k}_im"));
            }
        }
        let rows = lab.iter().zip(&traj.times).map(|(r, &t)| {
            let mut row = vec![t];
            for m in 0..n {
                for k in m + 1..n {
                    row.push(r[(m, k)].re);
                    row.push(r[(m, k)].im);
                }
            }
            row
        });
        write_numeric(&self.path("coherences.csv"), &header, rows)?;

        let polaron = eigen_populations(&traj, &self.initial, frame, FrameTag::Polaron);
        let labp = eigen_populations(&traj, &self.initial, frame, FrameTag::Lab);
        let mut header = vec!["t_fs".to_string()];
        header.extend((1..=n).map(|a| format!("polaron_e{a}")));
        header.extend((1..=n).map(|a| format!("lab_e{a}")));
        let rows = (0..traj.len()).map(|i| {
            let mut row = vec![traj.times[i]];
            row.extend(polaron.columns.iter().map(|c| c[i]));
            row.extend(labp.columns.iter().map(|c| c[i]));
            row
        });
        write_numeric(&self.path("eigen_populations.csv"), &header, rows)?;

        self.write_metadata("simulate", &[format!("propagator = {kind}")])
    }

    fn compare(&self, args: &[String]) -> Result<()> {
        let tags: Vec<PropagatorKind> = if args.is_empty() {
            self.run
                .config
                .compare
                .as_ref()
                .map(|c| c.propagators.clone())
                .unwrap_or_default()
        } else {
            args.iter().map(|a| a.parse()).collect::<Result<_>>()?
        };
        if tags.len() < 2 {
            return Err(Error::Usage(format!(
                "compare needs at least two propagators, got {}",
                tags.len()
            )));
        }
        let frame = self.sim.frame();
        let pops: Vec<Series> = tags
            .par_iter()
            .map(|&k| Ok(site_populations(&self.trajectory(k, &self.initial)?, frame)))
            .collect::<Result<_>>()?;
        let n = frame.size();
        let times = &pops[0].times;
        let mut header = vec!["t_fs".to_string()];
        for k in &tags {
            header.extend((1..=n).map(|m| format!("{k}_p{m}")));
        }
        let rows = (0..times.len()).map(|i| {
            let mut row = vec![times[i]];
            for p in &pops {
                row.extend(p.columns.iter().map(|c| c[i]));
            }
            row
        });
        write_numeric(&self.path("compare.csv"), &header, rows)?;

        let mut w = csv_writer(&self.path("compare_summary.csv"))?;
        w.write_record([
            "propagator",
            "reference",
            "max_deviation",
            "t_at_max_fs",
            "final_deviation",
        ])?;
        for (k, p) in tags.iter().zip(&pops).skip(1) {
            let (mut worst, mut t_worst) = (0.0f64, 0.0);
            for (i, &t) in times.iter().enumerate() {
                let d = (0..n)
                    .map(|m| (p.columns[m][i] - pops[0].columns[m][i]).abs())
                    .fold(0.0, f64::max);
                if d > worst {
                    worst = d;
                    t_worst = t;
                }
            }
            let last = times.len() - 1;
            let fin = (0..n)
                .map(|m| (p.columns[m][last] - pops[0].columns[m][last]).abs())
                .fold(0.0, f64::max);
            check_finite(&[worst, fin])?;
            w.write_record([
                k.tag().to_string(),
                tags[0].tag().to_string(),
                format_value(worst),
                format_value(t_worst),
                format_value(fin),
            ])?;
        }
        w.flush()?;
        let list: Vec<_> = tags.iter().map(|k| k.tag()).collect();
        self.write_metadata("compare", &[format!("propagators = {}", list.join(", "))])
    }

    fn spectrum(&self) -> Result<()> {
        let kind = self.run.config.propagator;
        let section = &self.run.config.spectrum;
        let traj = self.trajectory(kind, &self.initial)?;
        let pops = site_populations(&traj, self.sim.frame());
        let s = population_spectrum(
            &pops.times,
            pops.column(section.site - 1),
            &section.config(),
        )?;
        write_numeric(
            &self.path("spectrum.csv"),
            &["frequency_cm".into(), "magnitude".into()],
            s.frequency_cm
                .iter()
                .zip(&s.magnitude)
                .map(|(&f, &m)| vec![f, m]),
        )?;
        write_numeric(
            &self.path("peaks.csv"),
            &[
                "rank".into(),
                "frequency_cm".into(),
                "height".into(),
                "width_cm".into(),
            ],
            s.peaks
                .iter()
                .enumerate()
                .map(|(i, p)| vec![(i + 1) as f64, p.frequency_cm, p.height, p.width_cm]),
        )?;
        let (a, b, tau) = s.baseline;
        self.write_metadata(
            "spectrum",
            &[
                format!("propagator = {kind}"),
                format!("baseline = {a} + {b} exp(-t/{tau} fs)"),
            ],
        )
    }

    fn tracedist(&self) -> Result<()> {
        let spec_b = self.run.initial_b.as_ref().ok_or_else(|| {
            Error::Usage("tracedist needs a second initial state in [initial_b]".into())
        })?;
        let initial_b = spec_b.build(self.sim.frame())?;
        let kind = self.run.config.propagator;
        let ta = self.trajectory(kind, &self.initial)?;
        let tb = self.trajectory(kind, &initial_b)?;
        let mut w = csv_writer(&self.path("tracedist_intervals.csv"))?;
        w.write_record(["frame", "t_start_fs", "t_end_fs"])?;
        let mut notes = vec![format!("propagator = {kind}")];
        for tag in [FrameTag::Polaron, FrameTag::Lab] {
            let r = trace_distance_analysis(
                (&ta, &self.initial),
                (&tb, &initial_b),
                self.sim.frame(),
                tag,
            )?;
            write_numeric(
                &self.path(&format!("tracedist_{tag}.csv")),
                &["t_fs".into(), "distance".into(), "derivative_per_fs".into()],
                (0..r.times.len()).map(|i| vec![r.times[i], r.distance[i], r.derivative[i]]),
            )?;
            for &(s, e) in &r.intervals {
                check_finite(&[s, e])?;
                w.write_record([tag.tag().to_string(), format_value(s), format_value(e)])?;
            }
            notes.push(format!(
                "{tag}: max dD/dt = {} per fs, {} growth intervals",
                r.max_derivative(),
                r.intervals.len()
            ));
        }
        w.flush()?;
        self.write_metadata("tracedist", &notes)
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    Ok(csv::Writer::from_path(path)?)
}

fn check_finite(values: &[f64]) -> Result<()> {
    match values.iter().find(|v| !v.is_finite()) {
        Some(v) => Err(Error::Numerical(format!("non-finite output value {v}"))),
        None => Ok(()),
    }
}

fn write_numeric(
    path: &Path,
    header: &[String],
    rows: impl Iterator<Item = Vec<f64>>,
) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(header)?;
    for row in rows {
        check_finite(&row)?;
        w.write_record(row.iter().map(|&v| format_value(v)))?;
    }
    w.flush()?;
    Ok(())
}

/// Shortest round-trip text, in exponent form for very small or large magnitudes.
fn format_value(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-4..1e15).contains(&a) {
        format!("{v:e}")
    } else {
        v.to_string()
    }
}

fn write_series(path: &Path, s: &Series, prefix: &str) -> Result<()> {
    let mut header = vec!["t_fs".to_string()];
    header.extend((1..=s.columns.len()).map(|k| format!("{prefix}{k}")));
    let rows = (0..s.times.len()).map(|i| {
        let mut row = vec![s.times[i]];
        row.extend(s.columns.iter().map(|c| c[i]));
        row
    });
    write_numeric(path, &header, rows)
}
