use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use opspace::dynamics::InitialState;
use opspace::{ModelKind, ModelSpec, Site};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[value(rename_all = "snake_case")]
#[serde(rename_all = "snake_case")]
pub enum CommandName {
    /// Rank-coupling matrix C^(k'→k)
    CouplingMatrix,
    /// On-site decays and hopping amplitudes
    OnsiteDecay,
    /// Eigenvalues, participation ratios and mode weights
    Spectrum,
    /// Rank weights of the slowest oscillatory mode across a Γ/Ω sweep
    Hybridization,
    /// (k, q_x) weights of the slowest oscillatory mode
    Heatmap,
    /// Coefficient and spin trajectories
    Evolve,
    /// Rank-one precession eigenvalues across a κ sweep
    PrecessionCheck,
    /// Exact versus first-order effective spectrum
    PerturbativeCompare,
}

impl CommandName {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::CouplingMatrix => "coupling_matrix",
            Self::OnsiteDecay => "onsite_decay",
            Self::Spectrum => "spectrum",
            Self::Hybridization => "hybridization",
            Self::Heatmap => "heatmap",
            Self::Evolve => "evolve",
            Self::PrecessionCheck => "precession_check",
            Self::PerturbativeCompare => "perturbative_compare",
        }
    }
}

/// Operator-lattice analyses of collective-spin Lindbladians.
///
/// Settings resolve as built-in defaults, then `--config`, then flags.
#[derive(Debug, Parser)]
#[command(name = "opspace", version)]
pub struct Cli {
    #[arg(value_enum)]
    pub command: CommandName,
    /// Number of spin-1/2 constituents
    #[arg(long)]
    pub n: Option<u32>,
    #[arg(long)]
    pub omega: Option<f64>,
    #[arg(long = "gamma-over-omega")]
    pub gamma_over_omega: Option<f64>,
    /// btc or precession
    #[arg(long)]
    pub model: Option<ModelKind>,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON run configuration
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Time grid start:stop:step
    #[arg(long)]
    pub times: Option<String>,
    /// polarized | mixed | coherent:θ,φ
    #[arg(long)]
    pub state: Option<String>,
    /// Report mode weights in x-quantized tensor coordinates
    #[arg(long = "x-basis")]
    pub x_basis: bool,
    /// Eigenmode index (in the sorted spectrum) instead of the slowest oscillatory mode
    #[arg(long)]
    pub mode: Option<usize>,
    /// Comma-separated Γ/Ω values for sweep commands
    #[arg(long, value_delimiter = ',')]
    pub sweep: Option<Vec<f64>>,
    /// κ grid start:stop:step for precession_check
    #[arg(long = "kappa-grid")]
    pub kappa_grid: Option<String>,
    /// Comma-separated k:q sites recorded by evolve
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub sites: Option<Vec<String>>,
    /// Also write the tensor basis as JSON
    #[arg(long = "dump-basis")]
    pub dump_basis: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelKind,
    #[serde(rename = "N")]
    pub n: u32,
    pub omega: f64,
    pub gamma_over_omega: f64,
    pub out: PathBuf,
    pub times: String,
    pub state: String,
    pub x_basis: bool,
    pub mode: Option<usize>,
    pub sweep: Option<Vec<f64>>,
    pub kappa_grid: String,
    pub sites: Vec<String>,
    pub dump_basis: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelKind::Btc,
            n: 7,
            omega: 1.0,
            gamma_over_omega: 1.0,
            out: PathBuf::from("."),
            times: "0:50:0.05".into(),
            state: "polarized".into(),
            x_basis: false,
            mode: None,
            sweep: None,
            kappa_grid: "0:4:0.001".into(),
            sites: vec!["1:-1".into(), "1:0".into(), "1:1".into()],
            dump_basis: false,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("bad config {}: {e}", path.display())))
    }

    pub fn resolve(cli: &Cli) -> Result<Self, CliError> {
        let mut cfg = match &cli.config {
            Some(path) => Self::load(path)?,
            None => Self::default(),
        };
        if let Some(v) = cli.n {
            cfg.n = v;
        }
        if let Some(v) = cli.omega {
            cfg.omega = v;
        }
        if let Some(v) = cli.gamma_over_omega {
            cfg.gamma_over_omega = v;
        }
        if let Some(v) = cli.model {
            cfg.model = v;
        }
        if let Some(v) = &cli.out {
            cfg.out = v.clone();
        }
        if let Some(v) = &cli.times {
            cfg.times = v.clone();
        }
        if let Some(v) = &cli.state {
            cfg.state = v.clone();
        }
        if let Some(v) = &cli.sweep {
            cfg.sweep = Some(v.clone());
        }
        if let Some(v) = &cli.kappa_grid {
            cfg.kappa_grid = v.clone();
        }
        if let Some(v) = &cli.sites {
            cfg.sites = v.clone();
        }
        cfg.mode = cli.mode.or(cfg.mode);
        cfg.x_basis |= cli.x_basis;
        cfg.dump_basis |= cli.dump_basis;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        self.spec()?;
        parse_grid(&self.times, "--times")?;
        parse_grid(&self.kappa_grid, "--kappa-grid")?;
        self.initial_state()?;
        self.sites()?;
        if let Some(sweep) = &self.sweep {
            if sweep.is_empty() || sweep.iter().any(|g| !g.is_finite() || *g < 0.0) {
                return Err(CliError::Usage("--sweep needs non-negative finite values".into()));
            }
        }
        Ok(())
    }

    pub fn spec(&self) -> Result<ModelSpec, CliError> {
        self.spec_with_ratio(self.gamma_over_omega)
    }

    pub fn spec_with_ratio(&self, ratio: f64) -> Result<ModelSpec, CliError> {
        if !ratio.is_finite() || ratio < 0.0 {
            return Err(CliError::Usage(format!("Γ/Ω must be non-negative, got {ratio}")));
        }
        Ok(ModelSpec::new(self.model, self.n, self.omega, ratio * self.omega)?)
    }

    pub fn initial_state(&self) -> Result<InitialState, CliError> {
        Ok(self.state.parse::<InitialState>()?)
    }

    pub fn time_grid(&self) -> Result<Vec<f64>, CliError> {
        parse_grid(&self.times, "--times")
    }

    pub fn kappa_values(&self) -> Result<Vec<f64>, CliError> {
        parse_grid(&self.kappa_grid, "--kappa-grid")
    }

    pub fn sites(&self) -> Result<Vec<Site>, CliError> {
        self.sites
            .iter()
            .map(|s| {
                let bad = || CliError::Usage(format!("site `{s}` is not k:q with |q| ≤ k ≤ N"));
                let (k, q) = s.split_once(':').ok_or_else(bad)?;
                let site = Site::new(k.trim().parse().map_err(|_| bad())?, q.trim().parse().map_err(|_| bad())?);
                if !site.is_valid() || site.k > self.n {
                    return Err(bad());
                }
                Ok(site)
            })
            .collect()
    }
}

/// `start:stop:step`, inclusive of `stop` when it lies on the grid.
pub fn parse_grid(text: &str, flag: &str) -> Result<Vec<f64>, CliError> {
    let bad = |why: &str| CliError::Usage(format!("{flag} `{text}`: {why}"));
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        return Err(bad("expected start:stop:step"));
    }
    let nums: Vec<f64> = parts
        .iter()
        .map(|p| p.trim().parse::<f64>().map_err(|_| bad("not a number")))
        .collect::<Result<_, _>>()?;
    let (start, stop, step) = (nums[0], nums[1], nums[2]);
    if !(start.is_finite() && stop.is_finite() && step.is_finite()) {
        return Err(bad("values must be finite"));
    }
    if start < 0.0 || stop < start || step <= 0.0 {
        return Err(bad("need 0 ≤ start ≤ stop and step > 0"));
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize;
    if count > 10_000_000 {
        return Err(bad("grid too large"));
    }
    Ok((0..=count).map(|i| start + i as f64 * step).collect())
}
