use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use powerdiag::density::{DensityField, DensityKind};
use powerdiag::geometry::MAX_DIM;
use powerdiag::quadrature::MAX_ORDER;
use powerdiag::transport::QuantizeMode;

use crate::CliError;

#[derive(Debug, Parser)]
#[command(name = "powerdiag", version, about = "Restricted power diagrams in 2 to 6 dimensions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a white- or blue-noise site file.
    Generate(Flags),
    /// Compute a diagram and report masses, counts and timings.
    Diagram(Flags),
    /// Optimize site positions for a density (Lloyd or L-BFGS).
    Quantize(Flags),
    /// Solve for weights giving every cell the same mass.
    Sdot(Flags),
    /// Slice a diagram with axis-aligned hyperplanes and export meshes.
    Slice(Flags),
    /// Time diagram computation for white and blue noise.
    Bench(Flags),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Generate(_) => "generate",
            Self::Diagram(_) => "diagram",
            Self::Quantize(_) => "quantize",
            Self::Sdot(_) => "sdot",
            Self::Slice(_) => "slice",
            Self::Bench(_) => "bench",
        }
    }

    pub fn flags(&self) -> &Flags {
        match self {
            Self::Generate(f)
            | Self::Diagram(f)
            | Self::Quantize(f)
            | Self::Sdot(f)
            | Self::Slice(f)
            | Self::Bench(f) => f,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MeshFormat {
    EdgeList,
    PolygonSoup,
}

#[derive(Debug, Clone, Args)]
pub struct Flags {
    /// Dimension of the domain (2 to 6).
    #[arg(long, default_value_t = 2)]
    pub dim: usize,
    /// Number of sites to generate.
    #[arg(long, default_value_t = 100)]
    pub num_sites: usize,
    /// uniform, gaussian, cone or sphere.
    #[arg(long, default_value = "uniform")]
    pub density: String,
    /// Quadrature order (1 to 4); defaults to the density's recommendation.
    #[arg(long)]
    pub order: Option<usize>,
    /// white or blue for site generation, lloyd or lbfgs for quantize.
    #[arg(long)]
    pub mode: Option<String>,
    /// Lloyd steps or optimizer evaluator calls.
    #[arg(long, default_value_t = 100)]
    pub iters: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Read sites (with optional weights) instead of generating them.
    #[arg(long)]
    pub sites_file: Option<PathBuf>,
    /// Output file, or output directory for quantize and sdot.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Slice chain such as `t=0.5` or `t=0.5,x=0.5`; repeat for several meshes.
    #[arg(long = "slice")]
    pub slices: Vec<String>,
    /// Mesh export format.
    #[arg(long, value_enum, default_value_t = MeshFormat::EdgeList)]
    pub format: MeshFormat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Distribution {
    White,
    Blue,
}

/// Validated settings of one run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: &'static str,
    pub dim: usize,
    pub num_sites: usize,
    pub density: DensityField,
    pub order: usize,
    pub distribution: Distribution,
    pub quantize_mode: QuantizeMode,
    pub iters: usize,
    pub seed: u64,
    pub workers: usize,
    pub sites_file: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub slices: Vec<Vec<(String, f64)>>,
    pub format: MeshFormat,
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn parse_slice(chain: &str) -> Result<Vec<(String, f64)>, CliError> {
    chain
        .split(',')
        .map(|part| {
            let (axis, value) = part
                .split_once('=')
                .ok_or_else(|| usage(format!("slice '{part}' is not of the form axis=value")))?;
            let value: f64 = value
                .trim()
                .parse()
                .map_err(|_| usage(format!("slice value '{value}' is not a number")))?;
            Ok((axis.trim().to_string(), value))
        })
        .collect()
}

impl RunConfig {
    pub fn from_command(cmd: &Command) -> Result<Self, CliError> {
        let f = cmd.flags();
        if !(1..=MAX_DIM).contains(&f.dim) {
            return Err(usage(format!("--dim must be between 1 and {MAX_DIM}")));
        }
        if f.num_sites == 0 {
            return Err(usage("--num-sites must be at least 1"));
        }
        let kind: DensityKind = f.density.parse().map_err(|e: powerdiag::Error| usage(e.to_string()))?;
        let density = DensityField::by_name(&kind.to_string(), f.dim).map_err(|e| usage(e.to_string()))?;
        let order = f.order.unwrap_or_else(|| density.recommended_order());
        if !(1..=MAX_ORDER).contains(&order) {
            return Err(usage(format!("--order must be between 1 and {MAX_ORDER}")));
        }
        let mut distribution = Distribution::White;
        let mut quantize_mode = QuantizeMode::Lbfgs;
        if let Some(mode) = &f.mode {
            match (cmd.name(), mode.to_ascii_lowercase().as_str()) {
                ("quantize", m) => quantize_mode = m.parse().map_err(|e: powerdiag::Error| usage(e.to_string()))?,
                (_, "white") => distribution = Distribution::White,
                (_, "blue") => distribution = Distribution::Blue,
                (c, m) => return Err(usage(format!("--mode {m} is not valid for {c}"))),
            }
        }
        if f.workers == Some(0) {
            return Err(usage("--workers must be at least 1"));
        }
        let workers = f
            .workers
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
        let slices = f.slices.iter().map(|s| parse_slice(s)).collect::<Result<Vec<_>, _>>()?;
        if cmd.name() == "slice" && slices.is_empty() {
            return Err(usage("slice needs at least one --slice"));
        }
        if matches!(cmd.name(), "quantize" | "sdot") && f.out.is_none() {
            return Err(usage(format!("{} needs --out <directory>", cmd.name())));
        }
        Ok(Self {
            command: cmd.name(),
            dim: f.dim,
            num_sites: f.num_sites,
            density,
            order,
            distribution,
            quantize_mode,
            iters: f.iters,
            seed: f.seed,
            workers,
            sites_file: f.sites_file.clone(),
            out: f.out.clone(),
            slices,
            format: f.format,
        })
    }

    /// The settings as `key = value` lines for embedding in outputs.
    pub fn comment_lines(&self) -> Vec<String> {
        let path = |p: &Option<PathBuf>| p.as_ref().map_or("-".to_string(), |p| p.display().to_string());
        let mut slices = String::new();
        for (k, chain) in self.slices.iter().enumerate() {
            if k > 0 {
                slices.push(' ');
            }
            let parts: Vec<String> = chain.iter().map(|(a, v)| format!("{a}={v}")).collect();
            let _ = write!(slices, "{}", parts.join(","));
        }
        vec![
            format!("command = {}", self.command),
            format!("dim = {}", self.dim),
            format!("num_sites = {}", self.num_sites),
            format!("density = {}", self.density.kind()),
            format!("order = {}", self.order),
            format!(
                "distribution = {}",
                match self.distribution {
                    Distribution::White => "white",
                    Distribution::Blue => "blue",
                }
            ),
            format!("quantize_mode = {}", self.quantize_mode),
            format!("iters = {}", self.iters),
            format!("seed = {}", self.seed),
            format!("workers = {}", self.workers),
            format!("sites_file = {}", path(&self.sites_file)),
            format!("out = {}", path(&self.out)),
            format!("slices = {}", if slices.is_empty() { "-".into() } else { slices }),
            format!(
                "format = {}",
                match self.format {
                    MeshFormat::EdgeList => "edge-list",
                    MeshFormat::PolygonSoup => "polygon-soup",
                }
            ),
        ]
    }
}
