use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use dsm_spectra::dsm::{self, StochasticMatrix, EXPERIMENT_TOL};
use dsm_spectra::harness::{self, Experiment, ExperimentConfig};
use dsm_spectra::rng::{derive_trial_seed, StreamRole};
use dsm_spectra::spectral::{self, SpectralReport};
use dsm_spectra::{Error, Result};

const THREADS_ENV: &str = "DSM_SPECTRA_THREADS";

#[derive(Parser)]
#[command(name = "dsm-spectra", version, about = "Spectral diagnostics and collapse experiments for doubly-stochastic mixing")]
struct Cli {
    /// Worker threads (overrides DSM_SPECTRA_THREADS)
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate one Sinkhorn DSM and print it as CSV
    Generate {
        #[arg(long, default_value_t = 64)]
        n: usize,
        #[arg(long, short = 't', visible_alias = "temp", default_value_t = 1.0)]
        temperature: f64,
        #[arg(long, default_value_t = 0)]
        seed: u32,
        #[arg(long, default_value_t = 0)]
        rep: u32,
        #[arg(long, visible_alias = "iters", default_value_t = 200)]
        iterations: usize,
        #[arg(long, short = 'o', visible_alias = "out")]
        output: Option<PathBuf>,
    },
    /// Spectral report for a matrix CSV (`-` reads stdin)
    Spectrum {
        input: String,
        #[arg(long, default_value_t = 0.01)]
        eps: f64,
        #[arg(long, default_value_t = spectral::DEFAULT_TRANSIENT_DEPTH)]
        transient_depth: usize,
        #[arg(long, default_value_t = EXPERIMENT_TOL)]
        tol: f64,
        /// Print the transient profile as `k,norm` rows instead
        #[arg(long)]
        profile: bool,
    },
    /// sigma2 and entropy over the temperature grid
    SweepTemp(ExperimentArgs),
    /// Final-cosine histogram of similar input pairs
    Collapse(ExperimentArgs),
    /// Plain against affine Layer Norm
    Ablation(ExperimentArgs),
    /// Monte Carlo audit of every bound
    VerifyBounds(ExperimentArgs),
    /// Residual identity-stagnation runs
    Residual(ExperimentArgs),
    /// Effective depth ln(1/eps) / -ln(sigma2)
    Depth {
        #[arg(long)]
        sigma2: f64,
        #[arg(long, default_value_t = 0.01)]
        eps: f64,
    },
}

#[derive(Args)]
struct ExperimentArgs {
    /// Flat `key = value` config file; flags override it
    #[arg(long, short = 'c')]
    config: Option<PathBuf>,
    /// Extra `key=value` settings, applied after the config file
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    nu: Option<String>,
    /// Comma list, ranges allowed (`0-9`)
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    reps: Option<String>,
    #[arg(long)]
    trials: Option<String>,
    #[arg(long)]
    temperatures: Option<String>,
    #[arg(long, visible_alias = "temp")]
    temperature: Option<String>,
    #[arg(long)]
    eps: Option<String>,
    #[arg(long)]
    depth: Option<String>,
    #[arg(long)]
    transient_depth: Option<String>,
    #[arg(long)]
    regime: Option<String>,
    #[arg(long)]
    bound_scale: Option<String>,
    /// Write the CSV here instead of stdout
    #[arg(long, short = 'o', visible_alias = "out")]
    output: Option<PathBuf>,
    /// Omit the `# generated_unix=` line
    #[arg(long)]
    no_timestamp: bool,
}

impl ExperimentArgs {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::from_file(p).map_err(|e| match e {
                Error::Io(io) => Error::Config(format!("{}: {io}", p.display())),
                other => other,
            })?,
            None => ExperimentConfig::default(),
        };
        for kv in &self.sets {
            let (k, v) = kv.split_once('=').ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got '{kv}'")))?;
            cfg.set(k.trim(), v)?;
        }
        let flags = [
            ("n", &self.n),
            ("nu", &self.nu),
            ("seeds", &self.seeds),
            ("reps", &self.reps),
            ("trials", &self.trials),
            ("temperatures", &self.temperatures),
            ("temperature", &self.temperature),
            ("eps", &self.eps),
            ("depth", &self.depth),
            ("transient_depth", &self.transient_depth),
            ("regime", &self.regime),
            ("bound_scale", &self.bound_scale),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                cfg.set(k, v)?;
            }
        }
        if let Some(p) = &self.output {
            cfg.output = Some(p.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn sink(path: Option<&PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn run_experiment(experiment: Experiment, args: &ExperimentArgs) -> Result<bool> {
    let cfg = args.config()?;
    eprintln!("running {} ({} trials per configuration)", experiment.name(), cfg.total_trials());
    let out = harness::run_experiment(experiment, &cfg)?;
    let ts = (!args.no_timestamp).then(|| SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0));
    let mut w = sink(cfg.output.as_ref())?;
    out.write(&mut w, ts)?;
    w.flush()?;
    if let Some(p) = &cfg.output {
        eprintln!("wrote {} rows to {}", out.rows.len(), p.display());
    }
    for v in &out.violations {
        eprintln!("violation: {v}");
    }
    Ok(out.passed())
}

fn spectrum(input: &str, eps: f64, depth: usize, tol: f64, profile: bool) -> Result<()> {
    let matrix = if input == "-" {
        dsm::read_matrix_csv(io::stdin().lock())?
    } else {
        dsm::read_matrix_csv(BufReader::new(File::open(input)?))?
    };
    let m = StochasticMatrix::certify(matrix, tol)?;
    let mut w = sink(None)?;
    if profile {
        let t = spectral::transient_growth(m.matrix(), depth.max(1))?;
        writeln!(w, "k,norm")?;
        for (k, v) in t.profile {
            writeln!(w, "{k},{}", dsm::fmt_f64(v))?;
        }
    } else {
        let r = spectral::spectral_report(&m, 0, f64::NAN, eps, depth)?;
        let fields = r.csv_fields();
        writeln!(w, "{}", SpectralReport::CSV_HEADER[2..].join(","))?;
        writeln!(w, "{}", fields[2..].join(","))?;
    }
    w.flush()?;
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Generate { n, temperature, seed, rep, iterations, output } => {
            let cfg = dsm::SinkhornConfig {
                n,
                temperature,
                iterations,
                seed: derive_trial_seed(seed, rep, StreamRole::Cost),
            };
            let m = dsm::sinkhorn_generate(&cfg)?;
            let mut w = sink(output.as_ref())?;
            dsm::write_matrix_csv(m.matrix(), &mut w)?;
            w.flush()?;
            let (ok, dev) = dsm::is_doubly_stochastic(m.matrix(), EXPERIMENT_TOL);
            eprintln!("max row/column deviation {dev:e}");
            Ok(ok)
        }
        Command::Spectrum { input, eps, transient_depth, tol, profile } => {
            spectrum(&input, eps, transient_depth, tol, profile)?;
            Ok(true)
        }
        Command::SweepTemp(a) => run_experiment(Experiment::SweepTemp, &a),
        Command::Collapse(a) => run_experiment(Experiment::CollapseHist, &a),
        Command::Ablation(a) => run_experiment(Experiment::AffineAblation, &a),
        Command::VerifyBounds(a) => run_experiment(Experiment::VerifyBounds, &a),
        Command::Residual(a) => run_experiment(Experiment::ResidualDepth, &a),
        Command::Depth { sigma2, eps } => {
            let d = spectral::effective_depth(sigma2, eps)?;
            if d.is_infinite() {
                println!("inf");
            } else {
                println!("{d:.6}");
            }
            Ok(true)
        }
    }
}

fn configure_threads(flag: Option<usize>) -> Result<()> {
    let n = match flag {
        Some(n) => Some(n),
        None => match std::env::var(THREADS_ENV) {
            Ok(v) => Some(v.trim().parse().map_err(|_| Error::Config(format!("{THREADS_ENV} must be a positive integer, got '{v}'")))?),
            Err(_) => None,
        },
    };
    if let Some(n) = n {
        if n == 0 {
            return Err(Error::Config("thread count must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 4 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = configure_threads(cli.threads).and_then(|_| run(cli));
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
