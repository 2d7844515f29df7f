use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use urnscale::analytic::{self, ModelParams};
use urnscale::harness::{self, exit, ExperimentSpec, FitKind, HarnessError};
use urnscale::loss::{self, LossParams};
use urnscale::urn::{self, ActivationMode, UrnConfig};

#[derive(Parser)]
#[command(name = "urnscale", version, about = "Preferential-activation urn: simulation, theory and fits")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one replicate and print D,K at log-spaced checkpoints.
    Simulate(SimulateArgs),
    /// Evaluate the closed-form theory.
    Analytic {
        #[command(subcommand)]
        what: AnalyticCommand,
    },
    /// Closed-form loss curve over a D grid.
    Loss(LossArgs),
    /// Fit a column of a CSV file.
    Fit(FitArgs),
    /// Run an experiment spec and write its artifacts.
    Sweep(SweepArgs),
    /// Check MC against theory; exit 2 on failure.
    Verify(VerifyArgs),
    /// Render the growth-curve SVG of an experiment spec.
    Plot(PlotArgs),
}

/// Reals written as `1e11`, `1000`, ...
fn real(s: &str) -> Result<f64, String> {
    s.parse::<f64>().map_err(|e| format!("`{s}`: {e}"))
}

fn whole(s: &str) -> Result<u64, String> {
    let v = real(s)?;
    if v >= 0.0 && v.fract() == 0.0 && v <= u64::MAX as f64 {
        Ok(v as u64)
    } else {
        Err(format!("`{s}` is not a whole number"))
    }
}

/// `min:max:count`, log-spaced.
fn grid(s: &str) -> Result<harness::DGrid, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [min, max, count] = parts[..] else {
        return Err(format!("`{s}`: expected min:max:count"));
    };
    Ok(harness::DGrid {
        min: real(min)?,
        max: real(max)?,
        count: whole(count)? as usize,
    })
}

#[derive(Args, Clone, Copy)]
struct ModelArgs {
    #[arg(long, value_parser = real)]
    n: f64,
    #[arg(long, value_parser = real)]
    b: f64,
    #[arg(long, value_parser = real)]
    c: f64,
    #[arg(long, value_parser = real, default_value = "0")]
    k0: f64,
    #[arg(long, value_parser = real, default_value = "0")]
    d0: f64,
}

impl ModelArgs {
    fn params(&self) -> Result<ModelParams, HarnessError> {
        Ok(ModelParams::with_initial(self.n, self.b, self.c, self.k0, self.d0)?)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    FixedC,
    Bernoulli,
    SingleDraw,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_parser = whole)]
    n: u64,
    #[arg(long, value_parser = real)]
    b: f64,
    #[arg(long, value_parser = whole)]
    c: u64,
    /// Samples to run.
    #[arg(long, value_parser = whole)]
    d: u64,
    #[arg(long, value_enum, default_value = "fixed-c")]
    mode: Mode,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    replicate: u64,
    /// Number of log-spaced checkpoints in 1..=d.
    #[arg(long, default_value_t = 20)]
    checkpoints: usize,
    /// Also write the final activation histogram here.
    #[arg(long)]
    histogram: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum AnalyticCommand {
    /// K(D) from the closed form, optionally beside the RK4 solution.
    K {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, value_parser = grid)]
        d_grid: harness::DGrid,
        /// RK4 steps per decade of D + bN/c (of the free fraction when b > 1); 0 omits the ODE column.
        #[arg(long, default_value_t = 0)]
        ode_steps: usize,
    },
    /// Free-neuron fraction (N - K)/N.
    Ratio {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, value_parser = grid)]
        d_grid: harness::DGrid,
    },
    /// Linear / transition / saturated regime at log10 D.
    Regime {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        log10_d: f64,
        #[arg(long, default_value_t = analytic::DEFAULT_EPSILON)]
        epsilon: f64,
    },
}

#[derive(Args)]
struct LossArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    l_noise: f64,
    #[arg(long)]
    l_opt: f64,
    #[arg(long)]
    alpha: f64,
    #[arg(long, value_parser = real)]
    b_sub: f64,
    #[arg(long, value_parser = real)]
    c_sub: f64,
    #[arg(long, value_parser = real)]
    n_sub: f64,
    #[arg(long, value_parser = grid)]
    d_grid: harness::DGrid,
}

#[derive(Clone, Copy, ValueEnum)]
enum FitWhat {
    Powerlaw,
    Breakpoint,
    Loss,
}

#[derive(Args)]
struct FitArgs {
    #[arg(value_enum)]
    kind: FitWhat,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    column: String,
    /// Abscissa column (breakpoint, loss; default `D`) or per-row
    /// multiplicity (powerlaw).
    #[arg(long)]
    x_column: Option<String>,
    /// Loss fits: keep rows with a value at most this.
    #[arg(long)]
    max_y: Option<f64>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 0 uses all cores.
    #[arg(long, default_value_t = 0)]
    workers: usize,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    /// Experiment spec; the built-in desk-scale spec when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Negative control: use this b in the analytic reference only.
    #[arg(long, value_parser = real)]
    inject_wrong_b: Option<f64>,
}

#[derive(Args)]
struct PlotArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Skip the simulation.
    #[arg(long)]
    analytic_only: bool,
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

fn csv_rows(header: &str, rows: impl Iterator<Item = Vec<f64>>) -> String {
    let mut s = format!("{header}\n");
    for row in rows {
        let cells: Vec<String> = row.iter().map(|x| format!("{x:.16e}")).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<(), HarnessError> {
    match out {
        Some(p) => harness::atomic_write(p, text.as_bytes()),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|source| HarnessError::Io {
                    path: PathBuf::from("<stdout>"),
                    source,
                })
        }
    }
}

fn with_seed(mut spec: ExperimentSpec, seed: Option<u64>) -> Result<ExperimentSpec, HarnessError> {
    if let Some(seed) = seed {
        spec.seed = seed;
    }
    spec.validate()?;
    Ok(spec)
}

fn run(cli: Cli) -> Result<i32, HarnessError> {
    match cli.command {
        Command::Simulate(a) => {
            let mode = match a.mode {
                Mode::FixedC => ActivationMode::FixedC,
                Mode::Bernoulli => ActivationMode::Bernoulli,
                Mode::SingleDraw => ActivationMode::SingleDraw,
            };
            let mut config = UrnConfig::new(a.n as usize, a.b, a.c as usize).with_mode(mode).with_seed(a.seed);
            config.record_histograms = a.histogram.is_some();
            let mut schedule = harness::DGrid {
                count: a.checkpoints.max(1),
                min: 1.0,
                max: a.d.max(1) as f64,
            }
            .sample_counts();
            schedule.dedup();
            let traj = urn::simulate(&config, a.d, &schedule, a.replicate)?;
            if let (Some(path), Some(hist)) = (&a.histogram, &traj.last().histogram) {
                let mut text = String::from("k,neurons\n");
                for (k, n) in hist {
                    text.push_str(&format!("{k},{n}\n"));
                }
                harness::atomic_write(path, text.as_bytes())?;
            }
            let mut text = String::from("D,K\n");
            for cp in &traj.checkpoints {
                text.push_str(&format!("{},{}\n", cp.d, cp.k));
            }
            write_or_print(a.out.as_deref(), &text)?;
            Ok(exit::SUCCESS)
        }
        Command::Analytic { what } => {
            let text = match what {
                AnalyticCommand::K { model, d_grid, ode_steps } => {
                    let p = model.params()?;
                    let mut rows = Vec::new();
                    for d in d_grid.points() {
                        let mut row = vec![d, analytic::k_closed_form(&p, d)?];
                        if ode_steps > 0 {
                            row.push(analytic::k_ode(&p, d, analytic::ode_steps(&p, d, ode_steps))?);
                        }
                        rows.push(row);
                    }
                    let header = if ode_steps > 0 { "D,K_closed_form,K_ode" } else { "D,K_closed_form" };
                    csv_rows(header, rows.into_iter())
                }
                AnalyticCommand::Ratio { model, d_grid } => {
                    let p = model.params()?;
                    csv_rows(
                        "D,compressibility_ratio",
                        d_grid.points().into_iter().map(|d| vec![d, analytic::compressibility_ratio(&p, d)]),
                    )
                }
                AnalyticCommand::Regime { model, log10_d, epsilon } => {
                    let report = analytic::regime_classify(&model.params()?, log10_d, epsilon)?;
                    format!("{}\n", serde_json::to_string_pretty(&report).expect("reports serialize"))
                }
            };
            write_or_print(None, &text)?;
            Ok(exit::SUCCESS)
        }
        Command::Loss(a) => {
            let p = a.model.params()?;
            let lp = LossParams::new(a.l_noise, a.l_opt, a.alpha, a.b_sub, a.c_sub, a.n_sub);
            lp.validate()?;
            let mut rows = Vec::new();
            for d in a.d_grid.points() {
                if let Ok(l) = loss::expected_loss(&lp, &p, d) {
                    rows.push(vec![d, l]);
                }
            }
            write_or_print(None, &csv_rows("D,expected_loss", rows.into_iter()))?;
            Ok(exit::SUCCESS)
        }
        Command::Fit(a) => {
            let kind = match a.kind {
                FitWhat::Powerlaw => FitKind::PowerLaw,
                FitWhat::Breakpoint => FitKind::Breakpoint,
                FitWhat::Loss => FitKind::Loss,
            };
            let out = harness::fit_from_csv(&a.input, kind, &a.column, a.x_column.as_deref(), a.max_y)?;
            write_or_print(None, &format!("{}\n", serde_json::to_string_pretty(&out).expect("fits serialize")))?;
            Ok(exit::SUCCESS)
        }
        Command::Sweep(a) => {
            let spec = with_seed(harness::load_spec(&a.config)?, a.seed)?;
            let result = harness::run_sweep(&spec, a.workers)?;
            for path in harness::emit_outputs(&result, &a.out_dir)? {
                eprintln!("wrote {}", path.display());
            }
            Ok(exit::SUCCESS)
        }
        Command::Verify(a) => {
            let spec = match &a.config {
                Some(path) => harness::load_spec(path)?,
                None => harness::builtin(harness::DESK_SPEC, "desk.toml"),
            };
            let mut spec = with_seed(spec, a.seed)?;
            if a.inject_wrong_b.is_some() {
                spec.verify.inject_analytic_b = a.inject_wrong_b;
                spec.validate()?;
            }
            let report = harness::verify(&spec, a.workers)?;
            write_or_print(None, &report.render())?;
            Ok(report.exit_code())
        }
        Command::Plot(a) => {
            let mut spec = harness::load_spec(&a.config)?;
            spec.analytic_only |= a.analytic_only;
            let result = harness::run_sweep(&spec, a.workers)?;
            harness::emit_plot(&result, &a.out)?;
            Ok(exit::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { exit::USAGE as u8 } else { exit::SUCCESS as u8 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
