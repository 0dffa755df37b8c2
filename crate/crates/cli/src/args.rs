use clap::{Args, Parser, Subcommand, ValueEnum};

const POTENTIAL_HELP: &str = "Potential as comma-separated k=u_k pairs, with V(x) = sum_k (1/k) u_k x^k. \
\"2=1.0,4=0.25\" means u_2 = 1, u_4 = 0.25, i.e. V(x) = x^2/2 + x^4/16. \
The degree must be even and the leading coefficient positive.";

#[derive(Debug, Parser)]
#[command(
    name = "ortholax",
    version,
    about = "Recurrence coefficients, Jacobi operators and 2x2 Lax systems for orthogonal polynomials with weight e^{-V(x)}",
    after_help = "Exit codes: 0 ok, 2 usage, 3 precision failure, 4 verification failure, 5 trust-window violation."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Text,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    #[arg(long, help = POTENTIAL_HELP)]
    pub potential: String,

    /// Working precision in bits.
    #[arg(long, default_value_t = ortholax_core::DEFAULT_PRECISION)]
    pub precision: u32,

    /// Truncation order N of the Jacobi operator (default: n + 2 deg V' + 4).
    #[arg(long = "N")]
    pub truncation: Option<usize>,

    /// Output format.
    #[arg(long, value_enum)]
    pub format: Option<Format>,

    /// Seed for randomly placed sample points.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Recurrence coefficients gamma_n, beta_n and norms h_n.
    Coeffs {
        #[command(flatten)]
        common: Common,
        /// Largest index to print.
        #[arg(long, default_value_t = 10)]
        n: usize,
    },
    /// The 2x2 systems D_n(x) and U_k(x) as coefficient arrays.
    Lax {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n: usize,
        /// Also print U_k for this k (repeatable, comma-separated).
        #[arg(long, value_delimiter = ',')]
        k: Vec<usize>,
        /// Also print U_1 .. U_K.
        #[arg(long)]
        k_max: Option<usize>,
    },
    /// Wavefunctions psi_{n-1}, psi_n and their x-derivatives from D_n.
    Psi {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n: usize,
        /// Sample points (comma-separated); default: Chebyshev points over the spectral bulk.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        x: Vec<String>,
        /// Number of default sample points.
        #[arg(long, default_value_t = 7)]
        points: usize,
    },
    /// Residual checks of every identity, with a pass/fail report.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n_max: Option<usize>,
        #[arg(long)]
        k_max: Option<usize>,
        /// Deformation step (default 2^{-precision/4}).
        #[arg(long, allow_hyphen_values = true)]
        delta: Option<String>,
        /// Base finite-difference step in x (default 2^{-precision/3}).
        #[arg(long)]
        h: Option<String>,
        /// Relative tolerance of algebraic identities (default 2^{-precision/2}).
        #[arg(long)]
        tol_algebraic: Option<String>,
        /// Relative tolerance of finite-difference checks.
        #[arg(long)]
        tol_fd: Option<String>,
        /// Constant C in the finite-difference tolerance max(C h^2, C delta^2, 10 tol).
        #[arg(long)]
        fd_constant: Option<f64>,
        /// Largest index in the orthonormality check (default min(10, n-max)).
        #[arg(long)]
        ortho_n_max: Option<usize>,
        #[arg(long, default_value_t = 7)]
        x_samples: usize,
        /// Run only these check groups (comma-separated).
        #[arg(long, value_delimiter = ',')]
        only: Vec<String>,
        /// Shift one coefficient after it is computed: n=IDX,delta=VAL[,target=gamma|beta].
        #[arg(long, allow_hyphen_values = true)]
        fault_inject: Option<String>,
        /// Shorthand for --format json.
        #[arg(long)]
        json: bool,
    },
    /// Finite difference in u_k of (psi_{n-1}, psi_n) against U_k.
    Deform {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        n: usize,
        /// Step in u_k (default 2^{-precision/4}).
        #[arg(long, allow_hyphen_values = true)]
        delta: Option<String>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        x: Vec<String>,
    },
}
