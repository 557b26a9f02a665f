//! Run configuration: CLI flags layered over an optional key=value file.

use bosegas::{Bc, PairPotential};
use clap::{Args, Parser, Subcommand};
use std::collections::HashMap;
use std::path::PathBuf;

#[derive(Parser, Debug)]
#[command(
    name = "bosegas",
    about = "Finite-volume laboratory for the interacting Bose gas",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub opts: RawOptions,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    /// Ideal-gas free energy, closed form or by constrained minimization
    Ideal,
    /// Cycle-length weights q_k for a box and boundary condition
    Weights,
    /// Partition function by the cycle expansion
    Zexact,
    /// Partition function by brute force over permutations
    Zperm,
    /// Partition function by the marked-Poisson representation
    Zestimate,
    /// Quotient lower bound Z_{m+1}/Z_m against Monte Carlo ratios
    Quotient,
    /// Domain test, quotient bound, free-energy upper bound, monotonicity
    Bounds,
    /// Restricted variational upper bound on the free energy
    Chi,
    /// Pairing identities and Hamiltonian bounds on sampled configurations
    Check,
    /// Fast internal identities; exit 0 when all pass
    Selftest,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Ideal => "ideal",
            Command::Weights => "weights",
            Command::Zexact => "zexact",
            Command::Zperm => "zperm",
            Command::Zestimate => "zestimate",
            Command::Quotient => "quotient",
            Command::Bounds => "bounds",
            Command::Chi => "chi",
            Command::Check => "check",
            Command::Selftest => "selftest",
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct RawOptions {
    /// Inverse temperature
    #[arg(long, global = true)]
    pub beta: Option<f64>,
    /// Particle density (fixes the box side together with --n)
    #[arg(long, global = true)]
    pub rho: Option<f64>,
    /// Particle number
    #[arg(long, global = true)]
    pub n: Option<usize>,
    /// Dimension (1, 2 or 3)
    #[arg(long, global = true)]
    pub d: Option<usize>,
    /// Box side length (alternative to --n with --rho)
    #[arg(long, global = true)]
    pub length: Option<f64>,
    /// Boundary condition: empty | periodic | dirichlet
    #[arg(long, global = true)]
    pub bc: Option<String>,
    /// Pair potential, e.g. zero | gaussian:c=1,sigma=1 |
    /// step:c=2,r0=0.5 | invpow:a=1,h=6,rhc=0.1 | table:FILE
    #[arg(long, global = true)]
    pub potential: Option<String>,
    /// Time slices per leg
    #[arg(long, global = true)]
    pub ns: Option<usize>,
    /// Largest cycle length carried by weight tables
    #[arg(long, global = true)]
    pub kmax: Option<usize>,
    /// Monte Carlo samples
    #[arg(long, global = true)]
    pub samples: Option<u64>,
    /// Master seed
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (results are identical for any value)
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output basename; writes BASE.csv and BASE.json
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// key=value config file; explicit flags override file entries
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Route for `ideal`: closed | variational
    #[arg(long, global = true)]
    pub via: Option<String>,
    /// Constraint mode for `chi`: le | eq
    #[arg(long, global = true)]
    pub mode: Option<String>,
}

/// Fully resolved run parameters.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub beta: f64,
    pub rho: Option<f64>,
    pub n: Option<usize>,
    pub d: usize,
    pub length: Option<f64>,
    pub bc: Bc,
    pub potential_spec: String,
    pub potential: PairPotential,
    pub ns: usize,
    pub kmax: usize,
    pub samples: u64,
    pub seed: u64,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
    pub via: String,
    pub mode: String,
}

fn parse_file(path: &PathBuf) -> Result<HashMap<String, String>, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("{}: cannot read config: {e}", path.display()))?;
    let mut map = HashMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or(format!(
            "{}:{}: expected key=value, got `{raw}`",
            path.display(),
            lineno + 1
        ))?;
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

fn value_from<T: std::str::FromStr>(
    map: &HashMap<String, String>,
    key: &str,
) -> Result<Option<T>, String> {
    match map.get(key) {
        None => Ok(None),
        Some(raw) => raw
            .parse::<T>()
            .map(Some)
            .map_err(|_| format!("config key `{key}`: cannot parse `{raw}`")),
    }
}

pub fn parse_bc(name: &str) -> Result<Bc, String> {
    match name {
        "empty" => Ok(Bc::Empty),
        "periodic" => Ok(Bc::Periodic),
        "dirichlet" => Ok(Bc::Dirichlet),
        other => Err(format!(
            "unknown boundary condition `{other}` (expected empty|periodic|dirichlet)"
        )),
    }
}

fn parse_params(body: &str, spec: &str) -> Result<HashMap<String, f64>, String> {
    let mut map = HashMap::new();
    for item in body.split(',') {
        let (k, v) = item
            .split_once('=')
            .ok_or(format!("potential `{spec}`: expected key=value in `{item}`"))?;
        let value: f64 = v
            .trim()
            .parse()
            .map_err(|_| format!("potential `{spec}`: bad number `{v}`"))?;
        map.insert(k.trim().to_string(), value);
    }
    Ok(map)
}

fn require(map: &HashMap<String, f64>, key: &str, spec: &str) -> Result<f64, String> {
    map.get(key)
        .copied()
        .ok_or(format!("potential `{spec}`: missing parameter `{key}`"))
}

pub fn parse_potential(spec: &str) -> Result<PairPotential, String> {
    let spec = spec.trim();
    if spec == "zero" {
        return Ok(PairPotential::zero());
    }
    let (family, body) = spec
        .split_once(':')
        .ok_or(format!("potential `{spec}`: expected FAMILY:PARAMS"))?;
    match family {
        "gaussian" => {
            let p = parse_params(body, spec)?;
            PairPotential::gaussian(require(&p, "c", spec)?, require(&p, "sigma", spec)?)
                .map_err(|e| e.to_string())
        }
        "step" => {
            let p = parse_params(body, spec)?;
            PairPotential::compact_step(require(&p, "c", spec)?, require(&p, "r0", spec)?)
                .map_err(|e| e.to_string())
        }
        "invpow" => {
            let p = parse_params(body, spec)?;
            PairPotential::inverse_power(
                require(&p, "a", spec)?,
                require(&p, "h", spec)?,
                p.get("rhc").copied().unwrap_or(0.0),
            )
            .map_err(|e| e.to_string())
        }
        "table" => {
            let text = std::fs::read_to_string(body)
                .map_err(|e| format!("potential table `{body}`: {e}"))?;
            let mut points = Vec::new();
            for (lineno, raw) in text.lines().enumerate() {
                let line = raw.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (r, v) = line
                    .split_once(',')
                    .ok_or(format!("{body}:{}: expected `r,v`", lineno + 1))?;
                let r: f64 = r
                    .trim()
                    .parse()
                    .map_err(|_| format!("{body}:{}: bad radius `{r}`", lineno + 1))?;
                let v: f64 = v
                    .trim()
                    .parse()
                    .map_err(|_| format!("{body}:{}: bad value `{v}`", lineno + 1))?;
                points.push((r, v));
            }
            PairPotential::tabulated(&points).map_err(|e| e.to_string())
        }
        other => Err(format!("unknown potential family `{other}`")),
    }
}

pub fn resolve(opts: &RawOptions) -> Result<RunConfig, String> {
    let file = match &opts.config {
        Some(path) => parse_file(path)?,
        None => HashMap::new(),
    };
    let beta = match opts.beta {
        Some(v) => v,
        None => value_from(&file, "beta")?.unwrap_or(1.0),
    };
    if !(beta > 0.0) {
        return Err("beta must be positive".into());
    }
    let rho = match opts.rho {
        Some(v) => Some(v),
        None => value_from(&file, "rho")?,
    };
    let n = match opts.n {
        Some(v) => Some(v),
        None => value_from(&file, "n")?,
    };
    let d = match opts.d {
        Some(v) => v,
        None => value_from(&file, "d")?.unwrap_or(3),
    };
    if !(1..=3).contains(&d) {
        return Err(format!("dimension {d} unsupported (need 1, 2 or 3)"));
    }
    let length = match opts.length {
        Some(v) => Some(v),
        None => value_from(&file, "length")?,
    };
    let bc_name = match &opts.bc {
        Some(v) => v.clone(),
        None => value_from::<String>(&file, "bc")?.unwrap_or_else(|| "empty".into()),
    };
    let potential_spec = match &opts.potential {
        Some(v) => v.clone(),
        None => value_from::<String>(&file, "potential")?.unwrap_or_else(|| "zero".into()),
    };
    let ns = match opts.ns {
        Some(v) => v,
        None => value_from(&file, "ns")?.unwrap_or(16),
    };
    let kmax = match opts.kmax {
        Some(v) => v,
        None => value_from(&file, "kmax")?.unwrap_or(64),
    };
    let samples = match opts.samples {
        Some(v) => v,
        None => value_from(&file, "samples")?.unwrap_or(10_000),
    };
    let seed = match opts.seed {
        Some(v) => v,
        None => value_from(&file, "seed")?.unwrap_or(1),
    };
    let threads = match opts.threads {
        Some(v) => Some(v),
        None => value_from(&file, "threads")?,
    };
    let via = match &opts.via {
        Some(v) => v.clone(),
        None => value_from::<String>(&file, "via")?.unwrap_or_else(|| "closed".into()),
    };
    let mode = match &opts.mode {
        Some(v) => v.clone(),
        None => value_from::<String>(&file, "mode")?.unwrap_or_else(|| "le".into()),
    };
    Ok(RunConfig {
        beta,
        rho,
        n,
        d,
        length,
        bc: parse_bc(&bc_name)?,
        potential: parse_potential(&potential_spec)?,
        potential_spec,
        ns: ns.max(2),
        kmax: kmax.max(1),
        samples: samples.max(1),
        seed,
        threads,
        out: opts.out.clone(),
        via,
        mode,
    })
}

impl RunConfig {
    /// The box side: explicit, or (n / rho)^{1/d}; exactly one way must be
    /// given.
    pub fn box_length(&self) -> Result<f64, String> {
        match (self.length, self.n, self.rho) {
            (Some(l), _, None) => Ok(l),
            (Some(_), _, Some(_)) => {
                Err("give either --length or --rho with --n, not both".into())
            }
            (None, Some(n), Some(rho)) => {
                if rho <= 0.0 {
                    return Err("rho must be positive".into());
                }
                Ok((n as f64 / rho).powf(1.0 / self.d as f64))
            }
            _ => Err("the box needs --length, or --n together with --rho".into()),
        }
    }

    pub fn require_n(&self) -> Result<usize, String> {
        self.n.ok_or_else(|| "this command needs --n".into())
    }

    pub fn require_rho(&self) -> Result<f64, String> {
        let rho = self.rho.ok_or_else(|| String::from("this command needs --rho"))?;
        if rho <= 0.0 {
            return Err("rho must be positive".into());
        }
        Ok(rho)
    }
}
