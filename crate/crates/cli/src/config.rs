//! Declarative experiment configuration: a TOML file, command-line flags on
//! top (flags win), then defaults.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, ValueEnum};
use momentlab::kernels::KernelTag;
use momentlab::precision::{DEFAULT_BITS, MIN_BITS};
use momentlab::{Execution, OperatorSpec};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const BITS_ENV: &str = "MOMENTLAB_BITS";

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid configuration: {}", self.0)
    }
}

fn invalid(field: &str, msg: impl fmt::Display) -> ConfigError {
    ConfigError(format!("{field}: {msg}"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum CommandKind {
    Spectrum,
    Hilbert,
    Kernel,
    Modulus,
    Rates,
    Verify,
}

impl CommandKind {
    pub fn name(self) -> &'static str {
        match self {
            CommandKind::Spectrum => "spectrum",
            CommandKind::Hilbert => "hilbert",
            CommandKind::Kernel => "kernel",
            CommandKind::Modulus => "modulus",
            CommandKind::Rates => "rates",
            CommandKind::Verify => "verify",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyName {
    /// J, square or rectangular Galerkin section.
    Integration,
    /// Hausdorff moment operator in the Legendre basis.
    Hausdorff,
    /// Multiplication by t^θ.
    Multiplication,
    /// Diagonal embedding model with σ_i ≍ i^{-k}.
    Embedding,
    /// Hausdorff operator composed with J.
    BhJ,
    /// Multiplication operator composed with J.
    MultJ,
    /// Hausdorff operator composed with the embedding model.
    BhEmbedding,
}

impl FamilyName {
    fn default_rows(self, cols: usize) -> usize {
        match self {
            FamilyName::Hausdorff | FamilyName::BhJ | FamilyName::BhEmbedding => 3 * cols,
            _ => cols,
        }
    }

    pub fn spec(self, rows: usize, cols: usize, theta: f64, k: u32) -> OperatorSpec {
        match self {
            FamilyName::Integration => OperatorSpec::integration_rect(rows, cols),
            FamilyName::Hausdorff => OperatorSpec::hausdorff(rows, cols),
            FamilyName::Multiplication => OperatorSpec::multiplication(theta, cols),
            FamilyName::Embedding => OperatorSpec::embedding(k, cols),
            FamilyName::BhJ => OperatorSpec::hausdorff_integration(rows, cols),
            FamilyName::MultJ => OperatorSpec::multiplication_integration(theta, cols),
            FamilyName::BhEmbedding => OperatorSpec::hausdorff_embedding(k, rows, cols),
        }
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumArgs {
    #[arg(long, value_enum)]
    pub family: Option<FamilyName>,
    /// Shorthand for --cols.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub rows: Option<usize>,
    #[arg(long)]
    pub cols: Option<usize>,
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub k: Option<u32>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HilbertArgs {
    /// Largest segment size; the table runs over 1..=n.
    #[arg(long)]
    pub n: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelArgs {
    /// hausdorff-j, hausdorff-j-ds, hausdorff-j-dss or mult-j:θ.
    #[arg(long)]
    pub tag: Option<String>,
    /// Points per axis of the equispaced grid on [0,1]².
    #[arg(long)]
    pub grid: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModulusArgs {
    #[arg(long, value_enum)]
    pub d_family: Option<FamilyName>,
    #[arg(long, value_enum)]
    pub a_family: Option<FamilyName>,
    /// Number of columns shared by D and A.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub d_rows: Option<usize>,
    #[arg(long)]
    pub a_rows: Option<usize>,
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub k: Option<u32>,
    /// δ grid runs from 10^hi to 10^lo.
    #[arg(long, allow_hyphen_values = true)]
    pub delta_hi_exp: Option<i32>,
    #[arg(long, allow_hyphen_values = true)]
    pub delta_lo_exp: Option<i32>,
    #[arg(long)]
    pub per_decade: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RatesArgs {
    #[arg(long, value_enum)]
    pub family: Option<FamilyName>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub rows: Option<usize>,
    #[arg(long)]
    pub cols: Option<usize>,
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub k: Option<u32>,
    /// Fit window lo,hi (1-based, inclusive).
    #[arg(long, value_delimiter = ',')]
    pub window: Option<Vec<usize>>,
    /// Section sizes (columns) for the stabilization table.
    #[arg(long, value_delimiter = ',')]
    pub sizes: Option<Vec<usize>>,
    /// Singular value index tracked across `sizes`.
    #[arg(long)]
    pub index: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyArgs {
    /// Criterion numbers to run; all when omitted.
    #[arg(long, value_delimiter = ',')]
    pub only: Option<Vec<u8>>,
}

/// Contents of a configuration file.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub command: Option<CommandKind>,
    pub bits: Option<u32>,
    pub output: Option<PathBuf>,
    pub sequential: Option<bool>,
    pub spectrum: SpectrumArgs,
    pub hilbert: HilbertArgs,
    pub kernel: KernelArgs,
    pub modulus: ModulusArgs,
    pub rates: RatesArgs,
    pub verify: VerifyArgs,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| ConfigError(format!("{}: {}", path.display(), e.0)))
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError(e.to_string().trim_end().to_string()))
    }
}

/// Flag values for the selected command.
#[derive(Debug, Clone)]
pub enum CommandArgs {
    Spectrum(SpectrumArgs),
    Hilbert(HilbertArgs),
    Kernel(KernelArgs),
    Modulus(ModulusArgs),
    Rates(RatesArgs),
    Verify(VerifyArgs),
}

impl CommandArgs {
    pub fn kind(&self) -> CommandKind {
        match self {
            CommandArgs::Spectrum(_) => CommandKind::Spectrum,
            CommandArgs::Hilbert(_) => CommandKind::Hilbert,
            CommandArgs::Kernel(_) => CommandKind::Kernel,
            CommandArgs::Modulus(_) => CommandKind::Modulus,
            CommandArgs::Rates(_) => CommandKind::Rates,
            CommandArgs::Verify(_) => CommandKind::Verify,
        }
    }
}

/// Global flags shared by every command.
#[derive(Debug, Clone, Default)]
pub struct GlobalArgs {
    pub bits: Option<u32>,
    pub output: Option<PathBuf>,
    pub sequential: bool,
}

/// Fully resolved job; its serialization is what the cache key hashes.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Job {
    Spectrum {
        spec: OperatorSpec,
    },
    Hilbert {
        n: usize,
    },
    Kernel {
        tag: String,
        grid: usize,
    },
    Modulus {
        d: OperatorSpec,
        a: OperatorSpec,
        n: usize,
        delta_hi_exp: i32,
        delta_lo_exp: i32,
        per_decade: usize,
    },
    Rates {
        spec: OperatorSpec,
        window: (usize, usize),
        sizes: Vec<usize>,
        index: usize,
    },
    Verify {
        only: Vec<u8>,
    },
}

impl Job {
    pub fn kind(&self) -> CommandKind {
        match self {
            Job::Spectrum { .. } => CommandKind::Spectrum,
            Job::Hilbert { .. } => CommandKind::Hilbert,
            Job::Kernel { .. } => CommandKind::Kernel,
            Job::Modulus { .. } => CommandKind::Modulus,
            Job::Rates { .. } => CommandKind::Rates,
            Job::Verify { .. } => CommandKind::Verify,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Resolved {
    pub bits: u32,
    pub output: PathBuf,
    pub exec: Execution,
    pub job: Job,
}

#[derive(Serialize)]
struct HashInput<'a> {
    version: &'a str,
    bits: u32,
    job: &'a Job,
}

impl Resolved {
    /// Canonical JSON of the job, the precision and the code version.
    pub fn canonical(&self) -> String {
        serde_json::to_string(&HashInput {
            version: env!("CARGO_PKG_VERSION"),
            bits: self.bits,
            job: &self.job,
        })
        .expect("plain data")
    }

    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// `<output>/<command>-<first 16 hex digits of the hash>`.
    pub fn run_dir(&self) -> PathBuf {
        self.output
            .join(format!("{}-{}", self.job.kind().name(), &self.hash()[..16]))
    }
}

macro_rules! pick {
    ($flag:expr, $file:expr) => {
        $flag.clone().or($file.clone())
    };
}

fn positive(field: &str, v: usize) -> Result<usize, ConfigError> {
    if v == 0 {
        Err(invalid(field, "must be >= 1"))
    } else {
        Ok(v)
    }
}

fn theta_ok(field: &str, theta: f64) -> Result<f64, ConfigError> {
    if theta.is_finite() && theta > 0.0 {
        Ok(theta)
    } else {
        Err(invalid(field, format!("{theta} must be finite and > 0")))
    }
}

struct SpecParts {
    family: Option<FamilyName>,
    n: Option<usize>,
    rows: Option<usize>,
    cols: Option<usize>,
    theta: Option<f64>,
    k: Option<u32>,
}

fn build_spec(section: &str, p: SpecParts, default_cols: usize) -> Result<OperatorSpec, ConfigError> {
    let field = |name: &str| format!("{section}.{name}");
    let family = p.family.unwrap_or(FamilyName::BhJ);
    let cols = positive(&field("cols"), p.cols.or(p.n).unwrap_or(default_cols))?;
    let rows = positive(&field("rows"), p.rows.unwrap_or_else(|| family.default_rows(cols)))?;
    let theta = theta_ok(&field("theta"), p.theta.unwrap_or(1.0))?;
    let k = p.k.unwrap_or(2);
    if k == 0 {
        return Err(invalid(&field("k"), "must be >= 1"));
    }
    let spec = family.spec(rows, cols, theta, k);
    spec.validate().map_err(|e| invalid(section, e))?;
    Ok(spec)
}

fn bits_from_env() -> Result<Option<u32>, ConfigError> {
    match std::env::var(BITS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<u32>()
            .map(Some)
            .map_err(|_| invalid(BITS_ENV, format!("'{v}' is not an unsigned integer"))),
        Err(_) => Ok(None),
    }
}

/// Merge flags over the file over defaults and validate every field.
pub fn resolve(
    global: &GlobalArgs,
    command: Option<CommandArgs>,
    file: &FileConfig,
) -> Result<Resolved, ConfigError> {
    let kind = match (&command, file.command) {
        (Some(c), _) => c.kind(),
        (None, Some(k)) => k,
        (None, None) => {
            return Err(ConfigError(
                "no command given on the command line or in the config file".into(),
            ))
        }
    };
    let bits = match global.bits.or(file.bits) {
        Some(b) => b,
        None => bits_from_env()?.unwrap_or(DEFAULT_BITS),
    };
    if bits < MIN_BITS {
        return Err(invalid("bits", format!("{bits} is below the minimum {MIN_BITS}")));
    }
    let output = global
        .output
        .clone()
        .or_else(|| file.output.clone())
        .unwrap_or_else(|| PathBuf::from("momentlab-out"));
    let sequential = global.sequential || file.sequential.unwrap_or(false);
    let exec = if sequential {
        Execution::Sequential
    } else {
        Execution::default()
    };

    let job = match kind {
        CommandKind::Spectrum => {
            let f = match &command {
                Some(CommandArgs::Spectrum(a)) => a.clone(),
                _ => SpectrumArgs::default(),
            };
            let s = &file.spectrum;
            Job::Spectrum {
                spec: build_spec(
                    "spectrum",
                    SpecParts {
                        family: pick!(f.family, s.family),
                        n: pick!(f.n, s.n),
                        rows: pick!(f.rows, s.rows),
                        cols: pick!(f.cols, s.cols),
                        theta: pick!(f.theta, s.theta),
                        k: pick!(f.k, s.k),
                    },
                    100,
                )?,
            }
        }
        CommandKind::Hilbert => {
            let f = match &command {
                Some(CommandArgs::Hilbert(a)) => a.clone(),
                _ => HilbertArgs::default(),
            };
            Job::Hilbert {
                n: positive("hilbert.n", pick!(f.n, file.hilbert.n).unwrap_or(20))?,
            }
        }
        CommandKind::Kernel => {
            let f = match &command {
                Some(CommandArgs::Kernel(a)) => a.clone(),
                _ => KernelArgs::default(),
            };
            let tag = pick!(f.tag, file.kernel.tag).unwrap_or_else(|| "hausdorff-j".into());
            let parsed = KernelTag::from_str(&tag).map_err(|e| invalid("kernel.tag", e))?;
            let grid = pick!(f.grid, file.kernel.grid).unwrap_or(101);
            if grid < 2 {
                return Err(invalid("kernel.grid", "needs at least 2 points"));
            }
            Job::Kernel {
                tag: parsed.to_string(),
                grid,
            }
        }
        CommandKind::Modulus => {
            let f = match &command {
                Some(CommandArgs::Modulus(a)) => a.clone(),
                _ => ModulusArgs::default(),
            };
            let s = &file.modulus;
            let n = positive("modulus.n", pick!(f.n, s.n).unwrap_or(40))?;
            let theta = pick!(f.theta, s.theta);
            let k = pick!(f.k, s.k);
            let d_family = pick!(f.d_family, s.d_family).unwrap_or(FamilyName::Integration);
            let a_family = pick!(f.a_family, s.a_family).unwrap_or(FamilyName::BhJ);
            let d = build_spec(
                "modulus.d",
                SpecParts {
                    family: Some(d_family),
                    n: Some(n),
                    rows: Some(pick!(f.d_rows, s.d_rows).unwrap_or(n + 1)),
                    cols: None,
                    theta,
                    k,
                },
                n,
            )?;
            let a = build_spec(
                "modulus.a",
                SpecParts {
                    family: Some(a_family),
                    n: Some(n),
                    rows: pick!(f.a_rows, s.a_rows),
                    cols: None,
                    theta,
                    k,
                },
                n,
            )?;
            let hi = pick!(f.delta_hi_exp, s.delta_hi_exp).unwrap_or(-1);
            let lo = pick!(f.delta_lo_exp, s.delta_lo_exp).unwrap_or(-6);
            if lo >= hi {
                return Err(invalid(
                    "modulus.delta_lo_exp",
                    format!("{lo} must be below delta_hi_exp = {hi}"),
                ));
            }
            let per_decade = positive("modulus.per_decade", pick!(f.per_decade, s.per_decade).unwrap_or(2))?;
            Job::Modulus {
                d,
                a,
                n,
                delta_hi_exp: hi,
                delta_lo_exp: lo,
                per_decade,
            }
        }
        CommandKind::Rates => {
            let f = match &command {
                Some(CommandArgs::Rates(a)) => a.clone(),
                _ => RatesArgs::default(),
            };
            let s = &file.rates;
            let spec = build_spec(
                "rates",
                SpecParts {
                    family: pick!(f.family, s.family),
                    n: pick!(f.n, s.n),
                    rows: pick!(f.rows, s.rows),
                    cols: pick!(f.cols, s.cols),
                    theta: pick!(f.theta, s.theta),
                    k: pick!(f.k, s.k),
                },
                100,
            )?;
            let window = match pick!(f.window, s.window) {
                None => momentlab::spectral::default_fit_window(spec.cols),
                Some(w) if w.len() == 2 => (w[0], w[1]),
                Some(w) => return Err(invalid("rates.window", format!("expected lo,hi but got {} values", w.len()))),
            };
            if window.0 < 1 || window.1 > spec.cols || window.1 < window.0 + 4 {
                return Err(invalid(
                    "rates.window",
                    format!("[{}, {}] must hold at least 5 indices within 1..={}", window.0, window.1, spec.cols),
                ));
            }
            let index = positive("rates.index", pick!(f.index, s.index).unwrap_or(1))?;
            let sizes = pick!(f.sizes, s.sizes).unwrap_or_else(|| vec![spec.cols / 4, spec.cols / 2, spec.cols]);
            if sizes.iter().any(|&m| m < index) {
                return Err(invalid("rates.sizes", format!("every size must be >= index {index}")));
            }
            Job::Rates {
                spec,
                window,
                sizes,
                index,
            }
        }
        CommandKind::Verify => {
            let f = match &command {
                Some(CommandArgs::Verify(a)) => a.clone(),
                _ => VerifyArgs::default(),
            };
            let mut only = pick!(f.only, file.verify.only).unwrap_or_else(|| (1..=10).collect());
            only.sort_unstable();
            only.dedup();
            if let Some(bad) = only.iter().find(|c| !(1..=10).contains(*c)) {
                return Err(invalid("verify.only", format!("criterion {bad} does not exist (1..=10)")));
            }
            Job::Verify { only }
        }
    };
    Ok(Resolved {
        bits,
        output,
        exec,
        job,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn resolve_file(text: &str) -> Result<Resolved, ConfigError> {
        resolve(&GlobalArgs::default(), None, &FileConfig::parse(text)?)
    }

    #[test]
    fn flags_win_over_file() {
        let file = FileConfig::parse("command = \"spectrum\"\nbits = 128\n[spectrum]\nfamily = \"hausdorff\"\ncols = 10\n").unwrap();
        let global = GlobalArgs {
            bits: Some(192),
            ..GlobalArgs::default()
        };
        let flags = CommandArgs::Spectrum(SpectrumArgs {
            cols: Some(12),
            ..SpectrumArgs::default()
        });
        let r = resolve(&global, Some(flags), &file).unwrap();
        assert_eq!(r.bits, 192);
        assert_eq!(r.job, Job::Spectrum { spec: OperatorSpec::hausdorff(36, 12) });
    }

    #[test]
    fn unknown_field_is_reported_with_location() {
        let err = FileConfig::parse("command = \"spectrum\"\n[spectrum]\nfamilly = \"bh-j\"\n").unwrap_err();
        assert!(err.0.contains("familly"), "{}", err.0);
        assert!(err.0.contains("line 3"), "{}", err.0);
    }

    #[test]
    fn semantic_errors_name_the_field() {
        let err = resolve_file("command = \"kernel\"\n[kernel]\ngrid = 1\n").unwrap_err();
        assert!(err.0.starts_with("kernel.grid"));
        let err = resolve_file("command = \"modulus\"\n[modulus]\ndelta_hi_exp = -3\ndelta_lo_exp = -2\n").unwrap_err();
        assert!(err.0.starts_with("modulus.delta_lo_exp"));
        let err = resolve_file("command = \"verify\"\n[verify]\nonly = [11]\n").unwrap_err();
        assert!(err.0.starts_with("verify.only"));
        let err = resolve_file("command = \"spectrum\"\nbits = 8\n").unwrap_err();
        assert!(err.0.starts_with("bits"));
    }

    #[test]
    fn hash_ignores_execution_and_output() {
        let a = resolve_file("command = \"hilbert\"\noutput = \"x\"\n").unwrap();
        let b = resolve_file("command = \"hilbert\"\noutput = \"y\"\nsequential = true\n").unwrap();
        assert_eq!(a.hash(), b.hash());
        let c = resolve_file("command = \"hilbert\"\n[hilbert]\nn = 19\n").unwrap();
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn modulus_defaults_match_the_reference_pair() {
        let r = resolve_file("command = \"modulus\"\n").unwrap();
        match r.job {
            Job::Modulus { d, a, n, .. } => {
                assert_eq!(n, 40);
                assert_eq!(d, OperatorSpec::integration_rect(41, 40));
                assert_eq!(a, OperatorSpec::hausdorff_integration(120, 40));
            }
            other => panic!("{other:?}"),
        }
    }
}
