use std::path::{Path, PathBuf};

use clap::Args;
use serde::Deserialize;

use secvault::codec::Mode;
use secvault::resilience::Placement;

/// Keys accepted in a `--config` file. Flags override them; anything left
/// unset falls back to the built-in defaults.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct FileSettings {
    pub n: Option<usize>,
    pub k: Option<usize>,
    pub width: Option<u32>,
    pub systematic: Option<bool>,
    pub mode: Option<Mode>,
    pub placement: Option<Placement>,
    pub gamma: Option<usize>,
    pub deltas: Option<Vec<usize>>,
    pub p: Option<f64>,
    pub p_grid: Option<String>,
    pub pmf: Option<Vec<String>>,
    pub trials: Option<u64>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub root: Option<PathBuf>,
}

impl FileSettings {
    pub fn load(path: &Path) -> Result<FileSettings, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("reading config {}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| format!("config {}: {e}", path.display()))
    }
}

#[derive(Debug, Clone, Args)]
pub struct CodeArgs {
    /// Total shares per stored object
    #[arg(long)]
    pub n: Option<usize>,
    /// Blocks per object
    #[arg(long)]
    pub k: Option<usize>,
    /// Symbol width w of GF(2^w)
    #[arg(long)]
    pub width: Option<u32>,
    /// Use a systematic generator [I; B]
    #[arg(long, conflicts_with = "non_systematic")]
    pub systematic: bool,
    /// Use a fully Cauchy generator (the default)
    #[arg(long)]
    pub non_systematic: bool,
}

impl CodeArgs {
    pub fn systematic(&self) -> Option<bool> {
        match (self.systematic, self.non_systematic) {
            (true, _) => Some(true),
            (_, true) => Some(false),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct LayoutArgs {
    /// basic, optimized or reversed
    #[arg(long)]
    pub mode: Option<Mode>,
    /// colocated or dispersed
    #[arg(long)]
    pub placement: Option<Placement>,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    /// Single node failure probability (overrides --p-grid)
    #[arg(long)]
    pub p: Option<f64>,
    /// Comma list `0.01,0.05` or range `start:stop:step`
    #[arg(long)]
    pub p_grid: Option<String>,
    /// Delta sparsity
    #[arg(long)]
    pub gamma: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct OutArgs {
    /// Output file; `-` or absent writes to stdout
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct RootArgs {
    /// Directory holding archives
    #[arg(long, env = "SECVAULT_ROOT")]
    pub root: Option<PathBuf>,
}

pub struct Defaults;

impl Defaults {
    pub const N: usize = 6;
    pub const K: usize = 3;
    pub const WIDTH: u32 = 8;
    pub const GAMMA: usize = 1;
    pub const TRIALS: u64 = 100_000;
    pub const SEED: u64 = 1;
    pub const P_GRID: &'static str = "0.01:0.2:0.01";
}

pub fn parse_p_grid(spec: &str) -> Result<Vec<f64>, String> {
    let num = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| format!("bad number {s:?} in p grid {spec:?}"))
    };
    let grid = if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        let [start, stop, step] = parts[..] else {
            return Err(format!(
                "p grid range must be start:stop:step, got {spec:?}"
            ));
        };
        let (start, stop, step) = (num(start)?, num(stop)?, num(step)?);
        if step.is_nan() || step <= 0.0 || stop < start {
            return Err(format!("p grid {spec:?} needs step > 0 and stop >= start"));
        }
        let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
        (0..count)
            .map(|i| ((start + i as f64 * step) * 1e9).round() / 1e9)
            .collect()
    } else {
        spec.split(',').map(num).collect::<Result<Vec<_>, _>>()?
    };
    if let Some(bad) = grid.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(format!("failure probability {bad} is outside [0, 1]"));
    }
    if grid.is_empty() {
        return Err("empty p grid".into());
    }
    Ok(grid)
}

pub fn parse_list(spec: &str, what: &str) -> Result<Vec<usize>, String> {
    if spec.trim().is_empty() {
        return Ok(Vec::new());
    }
    spec.split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| format!("bad {what} {s:?} in {spec:?}"))
        })
        .collect()
}
