use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Parser, Debug, Serialize)]
#[command(name = "qspec", version, about = "Eigenvalue lower bounds for the p-Laplacian on quasiconformal images of balls and cubes")]
pub struct Cli {
    /// Write a run manifest (arguments, seeds, inputs, outputs) to this file.
    #[arg(long, global = true, value_name = "FILE")]
    #[serde(skip)]
    pub manifest: Option<String>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Closed-form constants and exponent windows.
    Constants(ConstantsArgs),
    /// Assemble an eigenvalue lower bound.
    Bound(BoundArgs),
    /// Numerical checks of the inequalities behind the bounds.
    Verify(VerifyArgs),
    /// Estimate the first non-trivial Neumann eigenvalue on a grid.
    Eigen(EigenArgs),
    /// Quasihyperbolic distance between two points.
    Qh(QhArgs),
    /// Empirical fit of the quasihyperbolic boundary condition.
    QhFit(QhFitArgs),
    /// Stretched-cube example end to end.
    Example(ExampleArgs),
    /// Re-run a manifest and compare outputs bit for bit.
    Replay(ReplayArgs),
}

#[derive(Args, Debug, Serialize)]
pub struct ConstantsArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long = "K", default_value_t = 1.0)]
    pub k: f64,
    #[arg(long)]
    pub p: Option<String>,
    /// β value, `mid` for the window midpoint, or `window:F` for a fraction.
    #[arg(long)]
    pub beta: Option<String>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Theorem {
    Convex,
    Beta,
    Infty,
    UnitBall,
    Quasiball,
    Qhbc,
    Example,
}

#[derive(Args, Debug, Serialize)]
pub struct BoundArgs {
    #[arg(long, value_enum)]
    pub theorem: Theorem,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub p: f64,
    #[arg(long = "K")]
    pub k: Option<f64>,
    /// β value, `mid` for the window midpoint, or `window:F` for a fraction.
    #[arg(long)]
    pub beta: Option<String>,
    #[arg(long)]
    pub diameter: Option<f64>,
    /// Measure of the target domain.
    #[arg(long)]
    pub volume: Option<f64>,
    /// Base convex domain (ball or cube descriptor); defaults to the unit ball.
    #[arg(long)]
    pub base: Option<String>,
    /// Jacobian norm ‖J|L_β‖ (or ‖J|L_∞‖ for `infty`).
    #[arg(long = "jac-norm")]
    pub jac_norm: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long = "r-star")]
    pub r_star: Option<f64>,
    /// Stretch exponent for `example`.
    #[arg(long)]
    pub a: Option<f64>,
    #[arg(long)]
    pub csv: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Doubling,
    Norm,
    Rhi,
    Exponents,
    All,
}

#[derive(Args, Debug, Serialize)]
pub struct VerifyArgs {
    #[arg(value_enum)]
    pub suite: Suite,
    #[arg(long)]
    pub map: String,
    #[arg(long)]
    pub n: usize,
    /// Single (p, q) pair; the default runs (4,2), (6,1) and (6,3).
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub q: Option<f64>,
    /// Integration domain for `norm` and `exponents`; defaults to the unit ball.
    #[arg(long)]
    pub domain: Option<String>,
    #[arg(long, default_value_t = 1_000_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub csv: bool,
}

#[derive(Args, Debug, Serialize)]
pub struct EigenArgs {
    #[arg(long)]
    pub domain: String,
    #[arg(long)]
    pub p: f64,
    #[arg(long, default_value_t = 1.0 / 32.0)]
    pub h: f64,
    #[arg(long, default_value_t = 8)]
    pub restarts: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long = "max-iterations", default_value_t = 100_000)]
    pub max_iterations: usize,
    /// Write the minimiser as CSV (cell, coordinates, value).
    #[arg(long = "dump-field", value_name = "FILE")]
    pub dump_field: Option<String>,
}

#[derive(Args, Debug, Serialize)]
pub struct QhArgs {
    #[arg(long)]
    pub domain: String,
    #[arg(long)]
    pub x0: String,
    #[arg(long)]
    pub x: String,
    #[arg(long, default_value_t = 1.0 / 128.0)]
    pub h: f64,
}

#[derive(Args, Debug, Serialize)]
pub struct QhFitArgs {
    #[arg(long)]
    pub domain: String,
    #[arg(long, default_value_t = 4000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1.0 / 128.0)]
    pub h: f64,
    /// Base point; defaults to the centre of mass of the rasterised domain.
    #[arg(long)]
    pub x0: Option<String>,
    #[arg(long = "c0-cap", default_value_t = 10.0)]
    pub c0_cap: f64,
    /// Skip sampled cells closer than this to the boundary (default 2h).
    #[arg(long = "min-distance")]
    pub min_distance: Option<f64>,
}

#[derive(Args, Debug, Serialize)]
pub struct ExampleArgs {
    #[arg(long, default_value_t = 3)]
    pub n: usize,
    #[arg(long, default_value_t = 4.0)]
    pub p: f64,
    #[arg(long, default_value_t = 1.0)]
    pub a: f64,
    #[arg(long, default_value_t = 1_000_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug, Serialize)]
pub struct ReplayArgs {
    pub file: String,
}
