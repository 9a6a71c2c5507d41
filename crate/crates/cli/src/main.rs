use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use svea::diagnostics::{probe_csv, scaling_probe_all, ProbeQuantity};
use svea::harness::{emit, run_study, Format, StudyConfig};
use svea::spectra::{check_nonresonance, NonresonanceLevel};
use svea::validate_model;

/// Multiple-harmonic envelope approximation studies.
#[derive(Parser, Debug)]
#[command(name = "svea", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Convergence study of the m-cutoff approximations against the reference.
    Study {
        #[command(flatten)]
        common: Common,
        /// Also run the scaling probes and include them in the report.
        #[arg(long)]
        probes: bool,
        /// Leave the wallclock column empty (byte-reproducible output).
        #[arg(long)]
        no_wallclock: bool,
    },
    /// ε-scaling probes of the quantities that control the error.
    Probe {
        #[command(flatten)]
        common: Common,
        /// Quantities to probe (default: all).
        #[arg(long, value_delimiter = ',')]
        quantities: Vec<ProbeQuantity>,
    },
    /// Eigenvalues and non-resonance margins at the carrier wave.
    Spectrum {
        #[command(flatten)]
        common: Common,
        /// Levels to check (m3, m5, three_term); default: all.
        #[arg(long, value_delimiter = ',')]
        level: Vec<NonresonanceLevel>,
        /// Print the key/value map instead of the text block.
        #[arg(long)]
        map: bool,
    },
    /// Structural checks of the model coefficients and nonlinearity.
    Validate {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args, Debug)]
struct Common {
    /// TOML configuration; missing keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output.dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated ε list (overrides the study or probe list).
    #[arg(long, value_delimiter = ',')]
    eps: Vec<f64>,
    /// Worker threads (0: one per core).
    #[arg(long)]
    threads: Option<usize>,
    /// Model name (overrides `model.name`).
    #[arg(long)]
    model: Option<String>,
    /// N = 2^14, dt = 1e-5, six ε down to 0.01. Hours of compute.
    #[arg(long)]
    paper_scale: bool,
}

impl Common {
    fn load(&self) -> Result<StudyConfig> {
        let mut c = match &self.config {
            Some(path) => {
                if self.paper_scale {
                    bail!("--paper-scale and --config are mutually exclusive");
                }
                StudyConfig::load(path)?
            }
            None if self.paper_scale => {
                eprintln!("warning: --paper-scale runs N = 2^14 with dt = 1e-5 down to eps = 0.01; expect hours");
                StudyConfig::paper_scale()
            }
            None => StudyConfig::default(),
        };
        if let Some(out) = &self.out {
            c.output.dir = out.clone();
        }
        if let Some(t) = self.threads {
            c.study.threads = t;
        }
        if let Some(m) = &self.model {
            c.model.name = m.clone();
        }
        Ok(c)
    }

    fn study_config(&self) -> Result<StudyConfig> {
        let mut c = self.load()?;
        if !self.eps.is_empty() {
            c.study.eps = self.eps.clone();
        }
        c.validate()?;
        Ok(c)
    }

    fn probe_config(&self) -> Result<StudyConfig> {
        let mut c = self.load()?;
        if !self.eps.is_empty() {
            c.probe.eps = self.eps.clone();
        }
        c.validate()?;
        Ok(c)
    }
}

fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if threads == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build()?;
    Ok(pool.install(f))
}

/// `Ok(true)` when every requested run completed and the hard checks passed.
fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Study {
            common,
            probes,
            no_wallclock,
        } => {
            let mut config = common.study_config()?;
            if no_wallclock {
                config.output.wallclock = false;
            }
            let mut result = run_study(&config)?;
            let mut probes_ok = true;
            if probes {
                let setup = config.probe_setup()?;
                let rows = with_threads(config.study.threads, || {
                    scaling_probe_all(&setup, &config.probe.quantities, &config.probe.eps)
                })?;
                match rows {
                    Ok(rows) => result.probes = rows,
                    Err(e) => {
                        eprintln!("probes failed: {e}");
                        probes_ok = false;
                    }
                }
            }
            let files = emit(&result, &[Format::Csv, Format::Report], &config.output.dir)?;
            print!("{}", svea::harness::study_report(&result));
            for f in files {
                eprintln!("wrote {}", f.display());
            }
            Ok(result.all_completed() && result.nonresonance_passed() && probes_ok)
        }
        Command::Probe { common, quantities } => {
            let config = common.probe_config()?;
            let quantities = if quantities.is_empty() { config.probe.quantities.clone() } else { quantities };
            let setup = config.probe_setup()?;
            let rows = with_threads(config.study.threads, || {
                scaling_probe_all(&setup, &quantities, &config.probe.eps)
            })??;
            let text = probe_csv(&rows);
            let dir = &config.output.dir;
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            let path = dir.join("probes.csv");
            std::fs::write(&path, &text).with_context(|| format!("writing {}", path.display()))?;
            print!("{text}");
            eprintln!("wrote {}", path.display());
            Ok(true)
        }
        Command::Spectrum { common, level, map } => {
            let config = common.load()?;
            let model = config.build_model()?;
            let carrier = config.build_carrier(&model)?;
            let kernel: Vec<String> = carrier.kernel.iter().map(|z| format!("{:+.6}{:+.6}i", z.re, z.im)).collect();
            println!(
                "{}: kappa = {:?}, omega = {:.12}, c_g = {:.12}, kernel = [{}]",
                model.name,
                carrier.kappa,
                carrier.omega,
                carrier.cg[0],
                kernel.join(", ")
            );
            let levels = if level.is_empty() {
                vec![NonresonanceLevel::M3, NonresonanceLevel::M5, NonresonanceLevel::ThreeTerm]
            } else {
                level
            };
            let mut all = true;
            for l in levels {
                let report = check_nonresonance(&model, &carrier, l)?;
                all &= report.passed;
                if map {
                    for (k, v) in report.to_map() {
                        println!("{k} = {v}");
                    }
                    println!();
                } else {
                    println!("{report}");
                }
            }
            Ok(all)
        }
        Command::Validate { common } => {
            let config = common.load()?;
            let model = config.build_model()?;
            let report = validate_model(&model);
            println!("{}: {report}", model.name);
            Ok(report.passed())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
