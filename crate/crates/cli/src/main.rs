use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use heatrisk::study::{self, StudyConfig, StudyKind, StudyOutput};

#[derive(Parser, Debug)]
#[command(name = "heatrisk", version, about = "Risk-averse heat-equation control studies with lattice QMC")]
struct Cli {
    #[command(flatten)]
    common: Common,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// TOML study configuration; flags below override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Full-size discretization and sample counts (overrides sizes from --config).
    #[arg(long, global = true)]
    paper_scale: bool,

    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Mesh refinement level (2^level cells per side).
    #[arg(long, global = true)]
    level: Option<u32>,

    #[arg(long, global = true)]
    n_steps: Option<usize>,

    /// Decay exponent of the diffusion fluctuations.
    #[arg(long, global = true)]
    decay: Option<f64>,

    /// Entropic risk parameter.
    #[arg(long, global = true)]
    theta: Option<f64>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Directory for cached fluctuation matrices.
    #[arg(long, global = true)]
    cache_dir: Option<PathBuf>,

    /// Generating-vector file to use instead of building one.
    #[arg(long, global = true)]
    vector_file: Option<PathBuf>,

    /// Print the effective configuration as TOML and exit.
    #[arg(long, global = true)]
    print_config: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Dimension truncation errors against a high-dimensional reference.
    Truncation {
        /// Comma-separated truncation dimensions.
        #[arg(long, value_delimiter = ',')]
        s_list: Option<Vec<usize>>,
        #[arg(long)]
        s_ref: Option<usize>,
        #[arg(long)]
        n: Option<u64>,
        /// Trailing points left out of the slope fit.
        #[arg(long)]
        exclude_tail: Option<usize>,
    },
    /// Root-mean-square QMC error over random shifts for n = 2^m.
    QmcRms {
        #[arg(long)]
        s: Option<usize>,
        #[arg(long)]
        m_min: Option<u32>,
        #[arg(long)]
        m_max: Option<u32>,
        #[arg(long)]
        shifts: Option<usize>,
        #[arg(long)]
        exclude_tail: Option<usize>,
    },
    /// Constrained and unconstrained projected gradient descent.
    Optimize {
        #[arg(long)]
        s: Option<usize>,
        #[arg(long)]
        n: Option<u64>,
        #[arg(long)]
        radius: Option<f64>,
        #[arg(long)]
        max_iters: Option<usize>,
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Component-by-component construction of a generating vector.
    CbcBuild {
        #[arg(long)]
        n: Option<u64>,
        #[arg(long)]
        s: Option<usize>,
    },
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn build_config(cli: &Cli) -> Result<(StudyKind, StudyConfig)> {
    let mut cfg = match &cli.common.config {
        Some(path) => StudyConfig::load(path).with_context(|| format!("reading {}", path.display()))?,
        None => StudyConfig::default(),
    };
    if cli.common.paper_scale {
        cfg = cfg.paper_scale();
    }
    let c = &cli.common;
    set(&mut cfg.out_dir, c.out.clone());
    set(&mut cfg.level, c.level);
    set(&mut cfg.n_steps, c.n_steps);
    set(&mut cfg.decay, c.decay);
    set(&mut cfg.theta, c.theta);
    set(&mut cfg.seed, c.seed);
    if c.cache_dir.is_some() {
        cfg.cache_dir = c.cache_dir.clone();
    }
    if c.vector_file.is_some() {
        cfg.vector_file = c.vector_file.clone();
    }

    let kind = match &cli.command {
        Command::Truncation {
            s_list,
            s_ref,
            n,
            exclude_tail,
        } => {
            let t = &mut cfg.truncation;
            set(&mut t.s_list, s_list.clone());
            set(&mut t.s_ref, *s_ref);
            set(&mut t.n, *n);
            set(&mut t.exclude_tail, *exclude_tail);
            StudyKind::Truncation
        }
        Command::QmcRms {
            s,
            m_min,
            m_max,
            shifts,
            exclude_tail,
        } => {
            let q = &mut cfg.qmc_rms;
            set(&mut q.s, *s);
            set(&mut q.m_min, *m_min);
            set(&mut q.m_max, *m_max);
            set(&mut q.shifts, *shifts);
            set(&mut q.exclude_tail, *exclude_tail);
            StudyKind::QmcRms
        }
        Command::Optimize {
            s,
            n,
            radius,
            max_iters,
            tol,
        } => {
            let o = &mut cfg.optimize;
            set(&mut o.s, *s);
            set(&mut o.n, *n);
            set(&mut o.radius, *radius);
            set(&mut o.max_iters, *max_iters);
            if tol.is_some() {
                o.tol = *tol;
            }
            StudyKind::Optimize
        }
        Command::CbcBuild { n, s } => {
            set(&mut cfg.cbc.n, *n);
            set(&mut cfg.cbc.s, *s);
            StudyKind::CbcBuild
        }
    };
    cfg.validate(kind).context("invalid study configuration")?;
    Ok((kind, cfg))
}

fn report(out: &StudyOutput) -> Result<()> {
    println!("manifest_hash = {}", out.manifest.hash());
    for path in &out.files {
        println!("wrote {}", path.display());
        let is_table = path.extension().is_some_and(|e| e == "csv")
            && !path.file_name().is_some_and(|n| n.to_string_lossy().contains("_control"));
        if is_table {
            let text = std::fs::read_to_string(path)?;
            for line in text.lines().filter(|l| !l.starts_with("# manifest_hash")) {
                println!("  {line}");
            }
        }
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let (kind, cfg) = build_config(&cli)?;
    if cli.common.print_config {
        print!("{}", cfg.to_toml()?);
        return Ok(());
    }
    let out = match kind {
        StudyKind::Truncation => study::run_truncation(&cfg),
        StudyKind::QmcRms => study::run_qmc_rms(&cfg),
        StudyKind::Optimize => study::run_optimize(&cfg),
        StudyKind::CbcBuild => study::run_cbc_build(&cfg),
    }
    .with_context(|| format!("{} study failed", kind.name()))?;
    report(&out)
}
