use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use metacog::detector::{build_cdf_l, detect, statistic_phi, DetectorConfig, EmpiricalCdfL};
use metacog::harness::{run_example1, run_example2, write_bytes, write_results, ExperimentConfig, ExperimentId, Table};
use metacog::masking::{self, epsilon_max, mask_deterministic, mask_stochastic, DetMaskConfig, SpsaTrace};
use metacog::radar::{matrix_csv, solve_are, SystemSpec, ARE_MAX_ITER, ARE_TOL};
use metacog::revealed::{afriat_feasible, check_garp, TOL};
use metacog::{Error, ProbeResponseDataset, Result, SeedStream, UtilityModel};

#[derive(Parser)]
#[command(name = "metacog", version, about = "Revealed-preference detection and utility masking for cognitive radars")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment config (JSON)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed, overrides the config
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; stdout when absent
    #[arg(long)]
    out: Option<PathBuf>,
    /// Progress messages on stderr
    #[arg(long)]
    verbose: bool,
}

#[derive(Subcommand)]
enum Command {
    /// GARP check of a dataset CSV
    Garp {
        /// Dataset CSV
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Afriat certificate of a dataset CSV, as JSON
    Afriat {
        /// Dataset CSV
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Minimal Afriat relaxation of a (noisy) dataset CSV
    Phi {
        /// Dataset CSV
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Test a noisy dataset against a CDF of L
    Detect {
        /// Dataset CSV
        #[arg(long)]
        data: PathBuf,
        /// Samples of L, as written by cdf-l
        #[arg(long)]
        cdf: PathBuf,
        /// Significance level
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Monte-Carlo samples of L for the probes of a dataset or config
    CdfL {
        /// Take the probes from this dataset CSV instead of drawing them
        #[arg(long)]
        data: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Steady-state Kalman covariance of a system (JSON)
    Are {
        /// System JSON
        #[arg(long)]
        system: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Deterministic masking at one margin bound
    MaskDet {
        /// Margin bound, overrides the config
        #[arg(long)]
        epsilon: Option<f64>,
        /// Take the probes from this dataset CSV instead of drawing them
        #[arg(long)]
        data: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Stochastic masking with the config's SPSA settings
    MaskStoch {
        /// Optimizer trace CSV
        #[arg(long)]
        trace: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Example 1: perturbation versus margin bound
    Ex1 {
        #[command(flatten)]
        common: Common,
    },
    /// Example 2: confusion versus weight and significance
    Ex2 {
        #[command(flatten)]
        common: Common,
    },
}

fn load_config(common: &Common, default: ExperimentId) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::read(path)?,
        None => ExperimentConfig::preset(default),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn emit(common: &Common, fallback: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match common.out.as_deref().or(fallback) {
        Some(path) => {
            write_bytes(path, bytes)?;
            if common.verbose {
                eprintln!("wrote {}", path.display());
            }
            Ok(())
        }
        None => {
            print!("{}", String::from_utf8_lossy(bytes));
            Ok(())
        }
    }
}

fn emit_table(common: &Common, fallback: Option<&Path>, table: &Table) -> Result<()> {
    match common.out.as_deref().or(fallback) {
        Some(path) => {
            write_results(table, path)?;
            if common.verbose {
                eprintln!("wrote {} rows to {}", table.rows.len(), path.display());
            }
            Ok(())
        }
        None => emit(common, None, &table.to_bytes()),
    }
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Garp { data, common } => {
            let d = ProbeResponseDataset::read_csv(&data)?;
            let verdict = if check_garp(&d) { "pass" } else { "fail" };
            emit(&common, None, format!("garp: {verdict}\n").as_bytes())
        }
        Command::Afriat { data, common } => {
            let d = ProbeResponseDataset::read_csv(&data)?;
            let json = match afriat_feasible(&d, TOL)? {
                Some(cert) => serde_json::to_string_pretty(&cert)?,
                None => "null".to_string(),
            };
            emit(&common, None, format!("{json}\n").as_bytes())
        }
        Command::Phi { data, common } => {
            let d = ProbeResponseDataset::read_csv(&data)?;
            let phi = statistic_phi(&d, DetectorConfig::default().tol_phi)?;
            emit(&common, None, format!("{phi}\n").as_bytes())
        }
        Command::Detect { data, cdf, alpha, common } => {
            let cfg = load_config(&common, ExperimentId::Ex2)?;
            let d = ProbeResponseDataset::read_csv(&data)?;
            let cdf = EmpiricalCdfL::read_csv(&cdf, d.probes().to_vec(), cfg.noise())?;
            let det = DetectorConfig { alpha, ..Default::default() };
            if !(alpha > 0.0 && alpha < 1.0) {
                return Err(Error::InvalidConfig(format!("significance {alpha} not in (0, 1)")));
            }
            let phi = statistic_phi(&d, det.tol_phi)?;
            let verdict = detect(&d, &cdf, &det)?;
            if common.verbose {
                eprintln!("phi* = {phi}, F_L(phi*) = {}", cdf.eval(phi));
            }
            emit(&common, None, format!("{verdict}\n").as_bytes())
        }
        Command::CdfL { data, common } => {
            let cfg = load_config(&common, ExperimentId::Ex2)?;
            let root = SeedStream::new(cfg.seed);
            let probes = match data {
                Some(path) => ProbeResponseDataset::read_csv(&path)?.probes().to_vec(),
                None => cfg.draw_probes(&root),
            };
            let cdf = build_cdf_l(&probes, &cfg.noise(), cfg.n_cdf, &root.child("cdf-l", 0))?;
            emit(&common, None, &cdf.to_csv())
        }
        Command::Are { system, common } => {
            let text = std::fs::read_to_string(&system).map_err(|source| Error::Io {
                context: "cannot read system",
                path: system.clone(),
                source,
            })?;
            let spec: SystemSpec = serde_json::from_str(&text)?;
            let sigma = solve_are(&spec.build()?, ARE_TOL, ARE_MAX_ITER)?;
            emit(&common, None, matrix_csv(&sigma).as_bytes())
        }
        Command::MaskDet { epsilon, data, common } => {
            let cfg = load_config(&common, ExperimentId::Ex1)?;
            let root = SeedStream::new(cfg.seed);
            let probes = match data {
                Some(path) => ProbeResponseDataset::read_csv(&path)?.probes().to_vec(),
                None => cfg.draw_probes(&root),
            };
            let mut table = Table::new(masking::RESULT_HEADER);
            for family in &cfg.utilities {
                let u = UtilityModel::from_family(*family)?;
                let eps = match epsilon {
                    Some(e) => e,
                    None => cfg.det.epsilon,
                };
                let det = DetMaskConfig { epsilon: eps, seed: root.child("mask-det", 0).seed(), ..cfg.det };
                let r = mask_deterministic(&probes, &u, &det)?;
                if common.verbose {
                    eprintln!("{family}: epsilon_max = {}", epsilon_max(&probes, &u)?);
                }
                table.push(masking::result_row(eps, *family, &r));
            }
            emit_table(&common, cfg.output.as_deref(), &table)
        }
        Command::MaskStoch { trace, common } => {
            let cfg = load_config(&common, ExperimentId::Ex2)?;
            let root = SeedStream::new(cfg.seed);
            let probes = cfg.draw_probes(&root);
            let u = UtilityModel::from_family(cfg.utilities[0])?;
            let cdf = build_cdf_l(&probes, &cfg.noise(), cfg.n_cdf, &root.child("cdf-l", 0))?;
            let mut spsa = cfg.spsa;
            spsa.seed = root.child("mask-stoch", 0).seed();
            if trace.is_some() && spsa.trace_every == 0 {
                spsa.trace_every = 1;
            }
            let (r, tr): (_, SpsaTrace) = mask_stochastic(&probes, &u, &spsa, &cdf)?;
            let mut table = Table::new(&format!("{},lambda,alpha,seed", masking::RESULT_HEADER));
            table.push(format!(
                ",{},{},{},{},{},{},{},{}",
                u.family(),
                r.perturbation,
                r.utility_loss,
                r.achieved_margin,
                r.feasible,
                spsa.lambda,
                spsa.alpha,
                cfg.seed
            ));
            if common.verbose {
                eprintln!("final confusion {}", tr.final_confusion);
            }
            if let Some(path) = trace {
                write_bytes(&path, &tr.to_csv())?;
            }
            emit_table(&common, cfg.output.as_deref(), &table)
        }
        Command::Ex1 { common } => {
            let cfg = load_config(&common, ExperimentId::Ex1)?;
            let table = run_example1(&cfg)?;
            emit_table(&common, cfg.output.as_deref(), &table)
        }
        Command::Ex2 { common } => {
            let cfg = load_config(&common, ExperimentId::Ex2)?;
            let table = run_example2(&cfg)?;
            emit_table(&common, cfg.output.as_deref(), &table)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
