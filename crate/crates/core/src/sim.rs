//! I/O experiments: sparsity PMFs, expected read counts, Monte-Carlo
//! estimates of the average reads for a sparse delta under random node
//! failures, and the five-version scenario.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::codec::{encode_archive, CodeParams, CodecError, Mode};
use crate::gf::{Field, Symbol};
use crate::linalg::GfMatrix;
use crate::resilience::{
    FailureModel, FailurePattern, Placement, PlacementMap, ResilienceError, SparseSubsets,
    MAX_CENSUS_N,
};

/// Fixed number of RNG streams trials are split across, independent of the
/// thread count so results only depend on the seed.
const STREAMS: u64 = 16;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid pmf: {0}")]
    InvalidPmf(String),
    #[error("sparsity {gamma} is outside the support 1..={k}")]
    OutOfSupport { gamma: usize, k: usize },
    #[error("sparse recovery needs 2 * gamma < k (gamma = {gamma}, k = {k})")]
    NotSparse { gamma: usize, k: usize },
    #[error("no trial left k live nodes ({trials} trials)")]
    InsufficientSamples { trials: u64 },
    #[error("trial count must be at least 1")]
    NoTrials,
    #[error(transparent)]
    Resilience(#[from] ResilienceError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error("writing csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = SimError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PmfKind {
    TruncExponential { alpha: f64 },
    TruncPoisson { lambda: f64 },
    Explicit,
}

impl fmt::Display for PmfKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PmfKind::TruncExponential { alpha } => write!(f, "exp:{alpha}"),
            PmfKind::TruncPoisson { lambda } => write!(f, "poisson:{lambda}"),
            PmfKind::Explicit => f.write_str("table"),
        }
    }
}

/// Distribution of the delta sparsity over `1..=k`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparsityPmf {
    kind: PmfKind,
    probs: Vec<f64>,
    normalizer: f64,
}

impl SparsityPmf {
    fn from_weights(kind: PmfKind, weights: Vec<f64>) -> Result<SparsityPmf> {
        let total: f64 = weights.iter().sum();
        if weights.is_empty() || !(total.is_finite() && total > 0.0) {
            return Err(SimError::InvalidPmf(format!("{kind} has no mass")));
        }
        let normalizer = 1.0 / total;
        Ok(SparsityPmf {
            kind,
            probs: weights.iter().map(|w| w * normalizer).collect(),
            normalizer,
        })
    }

    /// `P(gamma) = c exp(-alpha gamma)`.
    pub fn trunc_exponential(alpha: f64, k: usize) -> Result<SparsityPmf> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(SimError::InvalidPmf(format!(
                "alpha must be positive, got {alpha}"
            )));
        }
        let weights = (1..=k).map(|g| (-alpha * g as f64).exp()).collect();
        Self::from_weights(PmfKind::TruncExponential { alpha }, weights)
    }

    /// `P(gamma) = c lambda^gamma exp(-lambda) / gamma!`.
    pub fn trunc_poisson(lambda: f64, k: usize) -> Result<SparsityPmf> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(SimError::InvalidPmf(format!(
                "lambda must be positive, got {lambda}"
            )));
        }
        let mut log_fact = 0.0;
        let weights = (1..=k)
            .map(|g| {
                log_fact += (g as f64).ln();
                (g as f64 * lambda.ln() - lambda - log_fact).exp()
            })
            .collect();
        Self::from_weights(PmfKind::TruncPoisson { lambda }, weights)
    }

    /// `table[i]` is `P(i + 1)`; must already sum to 1.
    pub fn explicit(table: Vec<f64>) -> Result<SparsityPmf> {
        if table.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            return Err(SimError::InvalidPmf(
                "probabilities must lie in [0, 1]".into(),
            ));
        }
        let total: f64 = table.iter().sum();
        if table.is_empty() || (total - 1.0).abs() > 1e-12 {
            return Err(SimError::InvalidPmf(format!(
                "table sums to {total}, not 1"
            )));
        }
        Ok(SparsityPmf {
            kind: PmfKind::Explicit,
            probs: table,
            normalizer: 1.0,
        })
    }

    /// Point mass on `gamma`.
    pub fn point(gamma: usize, k: usize) -> Result<SparsityPmf> {
        if gamma == 0 || gamma > k {
            return Err(SimError::OutOfSupport { gamma, k });
        }
        let mut table = vec![0.0; k];
        table[gamma - 1] = 1.0;
        Self::explicit(table)
    }

    /// Parses `exp:<alpha>` or `poisson:<lambda>` for support `1..=k`.
    pub fn parse(spec: &str, k: usize) -> Result<SparsityPmf> {
        let (name, value) = spec.split_once(':').ok_or_else(|| {
            SimError::InvalidPmf(format!("expected <family>:<parameter>, got {spec:?}"))
        })?;
        let param = || {
            value
                .parse::<f64>()
                .map_err(|_| SimError::InvalidPmf(format!("bad parameter {value:?}")))
        };
        match name {
            "exp" => Self::trunc_exponential(param()?, k),
            "poisson" => Self::trunc_poisson(param()?, k),
            other => Err(SimError::InvalidPmf(format!("unknown family {other:?}"))),
        }
    }

    pub fn kind(&self) -> PmfKind {
        self.kind
    }

    pub fn k(&self) -> usize {
        self.probs.len()
    }

    pub fn normalizer(&self) -> f64 {
        self.normalizer
    }

    pub fn eval(&self, gamma: usize) -> Result<f64> {
        if gamma == 0 || gamma > self.k() {
            return Err(SimError::OutOfSupport { gamma, k: self.k() });
        }
        Ok(self.probs[gamma - 1])
    }

    /// `(gamma, P(gamma))` over the support.
    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.probs.iter().enumerate().map(|(i, &p)| (i + 1, p))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpectedIo {
    pub expected: f64,
    /// Reduction (for pairs) or increase (for the latest version), in percent.
    pub percent: f64,
}

fn check_support(pmf: &SparsityPmf, params: &CodeParams) -> Result<()> {
    if pmf.k() != params.k() {
        return Err(SimError::InvalidPmf(format!(
            "pmf support 1..={} does not match k = {}",
            pmf.k(),
            params.k()
        )));
    }
    Ok(())
}

/// Expected reads for the first two versions and the reduction against
/// reading two full objects.
pub fn expected_io_pair(pmf: &SparsityPmf, params: &CodeParams) -> Result<ExpectedIo> {
    check_support(pmf, params)?;
    let k = params.k() as f64;
    let expected = k + pmf
        .iter()
        .map(|(g, p)| p * params.delta_read_cost(g) as f64)
        .sum::<f64>();
    Ok(ExpectedIo {
        expected,
        percent: (2.0 * k - expected) / (2.0 * k) * 100.0,
    })
}

/// Expected reads for the second version alone and the increase over `k`.
pub fn expected_io_latest(
    pmf: &SparsityPmf,
    params: &CodeParams,
    mode: Mode,
) -> Result<ExpectedIo> {
    check_support(pmf, params)?;
    let k = params.k() as f64;
    let expected = match mode {
        Mode::Basic => expected_io_pair(pmf, params)?.expected,
        Mode::Optimized => pmf
            .iter()
            .map(|(g, p)| {
                let t = if 2 * g >= params.k() {
                    k
                } else {
                    k + params.delta_read_cost(g) as f64
                };
                p * t
            })
            .sum(),
        // the latest version is the stored full object
        Mode::Reversed => k,
    };
    Ok(ExpectedIo {
        expected,
        percent: (expected - k) / k * 100.0,
    })
}

#[derive(Debug, Clone)]
pub struct TrialConfig {
    pub params: CodeParams,
    pub model: FailureModel,
    pub trials: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MuEstimate {
    pub mu: f64,
    pub trials: u64,
    /// Trials that left at least `k` live nodes.
    pub survivors: u64,
    /// Survivors where `2 gamma` reads sufficed.
    pub sparse_hits: u64,
    /// Standard error of `mu`.
    pub std_error: f64,
}

impl MuEstimate {
    /// Fraction of survivors needing `k` reads.
    pub fn p_k(&self) -> f64 {
        (self.survivors - self.sparse_hits) as f64 / self.survivors as f64
    }
}

fn mu_from(p_sparse: f64, gamma: usize, k: usize) -> f64 {
    p_sparse * (2 * gamma) as f64 + (1.0 - p_sparse) * k as f64
}

/// Estimates the average reads needed for a `gamma`-sparse delta, over
/// random failure patterns that leave at least `k` live nodes.
pub fn monte_carlo_mu(config: &TrialConfig, gamma: usize) -> Result<MuEstimate> {
    let params = &config.params;
    let (n, k) = (params.n(), params.k());
    if gamma == 0 || 2 * gamma >= k {
        return Err(SimError::NotSparse { gamma, k });
    }
    if config.trials == 0 {
        return Err(SimError::NoTrials);
    }
    if n > 64 {
        return Err(ResilienceError::TooLarge { n, max: 64 }.into());
    }
    let subsets = SparseSubsets::for_params(params, gamma)?;
    let p = config.model.p();
    let full = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };

    let counts: Vec<(u64, u64)> = (0..STREAMS)
        .into_par_iter()
        .map(|stream| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(stream);
            let share = config.trials / STREAMS + u64::from(stream < config.trials % STREAMS);
            let mut memo: HashMap<u64, bool> = HashMap::new();
            let (mut survivors, mut hits) = (0u64, 0u64);
            for _ in 0..share {
                let mut failed = 0u64;
                for node in 0..n {
                    if rng.random_bool(p) {
                        failed |= 1 << node;
                    }
                }
                let alive = full & !failed;
                if (alive.count_ones() as usize) < k {
                    continue;
                }
                survivors += 1;
                if *memo
                    .entry(alive)
                    .or_insert_with(|| subsets.covered_by(alive))
                {
                    hits += 1;
                }
            }
            (survivors, hits)
        })
        .collect();

    let survivors: u64 = counts.iter().map(|c| c.0).sum();
    let hits: u64 = counts.iter().map(|c| c.1).sum();
    if survivors == 0 {
        return Err(SimError::InsufficientSamples {
            trials: config.trials,
        });
    }
    let p_sparse = hits as f64 / survivors as f64;
    let std_error =
        (k - 2 * gamma) as f64 * (p_sparse * (1.0 - p_sparse) / survivors as f64).sqrt();
    Ok(MuEstimate {
        mu: mu_from(p_sparse, gamma, k),
        trials: config.trials,
        survivors,
        sparse_hits: hits,
        std_error,
    })
}

/// Exact expectation of the Monte-Carlo estimate, by enumerating every
/// failure pattern. Returns `(mu, P[2 gamma reads | >= k alive])`.
pub fn exact_mu(params: &CodeParams, gamma: usize, model: FailureModel) -> Result<(f64, f64)> {
    let (n, k) = (params.n(), params.k());
    if gamma == 0 || 2 * gamma >= k {
        return Err(SimError::NotSparse { gamma, k });
    }
    if n > MAX_CENSUS_N {
        return Err(ResilienceError::TooLarge {
            n,
            max: MAX_CENSUS_N,
        }
        .into());
    }
    let subsets = SparseSubsets::for_params(params, gamma)?;
    let p = model.p();
    let full = (1u64 << n) - 1;
    let (mut survive, mut sparse) = (0.0, 0.0);
    for failed in 0..=full {
        let f = failed.count_ones() as i32;
        if (n as i32 - f) < k as i32 {
            continue;
        }
        let w = p.powi(f) * (1.0 - p).powi(n as i32 - f);
        survive += w;
        if subsets.covered_by(full & !failed) {
            sparse += w;
        }
    }
    let p_sparse = sparse / survive;
    Ok((mu_from(p_sparse, gamma, k), p_sparse))
}

/// Baseline without deltas: every version costs `k` reads.
pub fn mu_nondifferential(params: &CodeParams) -> f64 {
    params.k() as f64
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioRow {
    pub version: usize,
    pub basic_version: usize,
    pub basic_cumulative: usize,
    pub optimized_version: usize,
    pub optimized_cumulative: usize,
    pub nondiff_version: usize,
    pub nondiff_cumulative: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub n: usize,
    pub k: usize,
    pub gammas: Vec<usize>,
    pub basic_pattern: Vec<String>,
    pub optimized_pattern: Vec<String>,
    pub rows: Vec<ScenarioRow>,
}

impl Scenario {
    pub fn basic_total(&self) -> usize {
        self.rows.last().map_or(0, |r| r.basic_cumulative)
    }

    pub fn baseline_total(&self) -> usize {
        self.rows.last().map_or(0, |r| r.nondiff_cumulative)
    }

    /// Saving of reading every version with deltas against the baseline.
    pub fn saving_percent(&self) -> f64 {
        let base = self.baseline_total() as f64;
        (base - self.basic_total() as f64) / base * 100.0
    }
}

/// Version sequence over `field` whose deltas have exactly the given
/// sparsity levels, from a fixed seed.
pub fn synthesize_versions(
    field: &Field,
    k: usize,
    stripe: usize,
    gammas: &[usize],
    seed: u64,
) -> Vec<GfMatrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = field.order();
    let mut nonzero = || rng.random_range(1..q) as Symbol;
    let data: Vec<Symbol> = (0..k * stripe).map(|_| nonzero()).collect();
    let mut current = GfMatrix::new(field, k, stripe, data).expect("valid symbols");
    let mut out = vec![current.clone()];
    for (j, &gamma) in gammas.iter().enumerate() {
        let mut z = GfMatrix::zeros(field, k, stripe);
        // rotate the changed blocks so successive deltas touch different rows
        for i in 0..gamma.min(k) {
            let row = (i + j * 3) % k;
            for c in 0..stripe {
                z.set(row, c, nonzero());
            }
        }
        current = current.add(&z).expect("same shape");
        out.push(current.clone());
    }
    out
}

/// Runs a version sequence with the given delta sparsity through basic and
/// optimized encoding and plans every retrieval with all nodes alive.
pub fn scenario(n: usize, k: usize, gammas: &[usize], systematic: bool) -> Result<Scenario> {
    let field = Field::with_width(8).map_err(CodecError::from)?;
    let params = CodeParams::cauchy(n, k, &field, systematic)?;
    let versions = synthesize_versions(&field, k, 1, gammas, 0x5ec);
    let basic = encode_archive(&versions, &params, Mode::Basic)?;
    let optimized = encode_archive(&versions, &params, Mode::Optimized)?;
    let placement = PlacementMap::new(Placement::Colocated, n, versions.len());
    let alive = FailurePattern::none(n);
    let mut rows = Vec::new();
    for l in 1..=versions.len() {
        rows.push(ScenarioRow {
            version: l,
            basic_version: basic.retrieval_plan(l, &placement, &alive)?.total_reads,
            basic_cumulative: basic.prefix_plan(l, &placement, &alive)?.total_reads,
            optimized_version: optimized.retrieval_plan(l, &placement, &alive)?.total_reads,
            optimized_cumulative: optimized.prefix_plan(l, &placement, &alive)?.total_reads,
            nondiff_version: k,
            nondiff_cumulative: l * k,
        });
    }
    Ok(Scenario {
        n,
        k,
        gammas: gammas.to_vec(),
        basic_pattern: basic.storage_pattern(),
        optimized_pattern: optimized.storage_pattern(),
        rows,
    })
}

/// Five versions, k = 10, a (20, 10) code and delta sparsity {3, 8, 3, 6}.
pub fn scenario_l5() -> Result<Scenario> {
    scenario(20, 10, &[3, 8, 3, 6], false)
}

/// One line of simulation CSV output.
#[derive(Debug, Clone, PartialEq)]
pub struct SimRow {
    pub experiment: String,
    pub params: String,
    pub seed: Option<u64>,
    /// Sweep coordinate, e.g. `p=0.05` or `alpha=2`.
    pub point: String,
    pub metric: String,
    pub value: f64,
}

pub fn params_label(params: &CodeParams) -> String {
    format!(
        "n={} k={} w={} {}",
        params.n(),
        params.k(),
        params.field().width(),
        if params.is_systematic() {
            "sys"
        } else {
            "nonsys"
        }
    )
}

/// mu for the code, the other layout (systematic vs not) and the
/// non-differential baseline at each `p`.
pub fn mu_sweep(
    params: &CodeParams,
    gamma: usize,
    p_grid: &[f64],
    trials: u64,
    seed: u64,
) -> Result<Vec<SimRow>> {
    let mut rows = Vec::new();
    let nonsys = CodeParams::cauchy(params.n(), params.k(), params.field(), false)?;
    let sys = CodeParams::cauchy(params.n(), params.k(), params.field(), true)?;
    for &p in p_grid {
        let model = FailureModel::new(p)?;
        let point = format!("p={p}");
        for (label, code) in [("nonsys", &nonsys), ("sys", &sys)] {
            let est = monte_carlo_mu(
                &TrialConfig {
                    params: code.clone(),
                    model,
                    trials,
                    seed,
                },
                gamma,
            )?;
            let mut push = |metric: String, value: f64| {
                rows.push(SimRow {
                    experiment: "mu".into(),
                    params: params_label(code),
                    seed: Some(seed),
                    point: point.clone(),
                    metric,
                    value,
                })
            };
            push(format!("mu_gamma{gamma}_{label}"), est.mu);
            push(format!("mu_gamma{gamma}_{label}_stderr"), est.std_error);
            if code.n() <= MAX_CENSUS_N {
                push(
                    format!("mu_gamma{gamma}_{label}_exact"),
                    exact_mu(code, gamma, model)?.0,
                );
            }
        }
        rows.push(SimRow {
            experiment: "mu".into(),
            params: params_label(params),
            seed: Some(seed),
            point,
            metric: format!("mu_gamma{gamma}_nondiff"),
            value: mu_nondifferential(params),
        });
    }
    Ok(rows)
}

/// Expected I/O for each PMF in `pmfs`.
pub fn expected_io_sweep(params: &CodeParams, pmfs: &[SparsityPmf]) -> Result<Vec<SimRow>> {
    let mut rows = Vec::new();
    for pmf in pmfs {
        let point = match pmf.kind() {
            PmfKind::TruncExponential { alpha } => format!("alpha={alpha}"),
            PmfKind::TruncPoisson { lambda } => format!("lambda={lambda}"),
            PmfKind::Explicit => "table".to_string(),
        };
        let pair = expected_io_pair(pmf, params)?;
        let basic = expected_io_latest(pmf, params, Mode::Basic)?;
        let opt = expected_io_latest(pmf, params, Mode::Optimized)?;
        for (metric, value) in [
            ("expected_reads_pair", pair.expected),
            ("reduction_pct_pair", pair.percent),
            ("expected_reads_latest_basic", basic.expected),
            ("increase_pct_latest_basic", basic.percent),
            ("expected_reads_latest_optimized", opt.expected),
            ("increase_pct_latest_optimized", opt.percent),
        ] {
            rows.push(SimRow {
                experiment: "expected-io".into(),
                params: params_label(params),
                seed: None,
                point: point.clone(),
                metric: metric.into(),
                value,
            });
        }
    }
    Ok(rows)
}

pub fn scenario_rows(s: &Scenario) -> Vec<SimRow> {
    let gammas: Vec<String> = s.gammas.iter().map(|g| g.to_string()).collect();
    let label = format!("n={} k={} gammas={}", s.n, s.k, gammas.join("/"));
    let mut rows = Vec::new();
    for r in &s.rows {
        for (metric, value) in [
            ("basic_version", r.basic_version),
            ("basic_cumulative", r.basic_cumulative),
            ("optimized_version", r.optimized_version),
            ("optimized_cumulative", r.optimized_cumulative),
            ("nondiff_version", r.nondiff_version),
            ("nondiff_cumulative", r.nondiff_cumulative),
        ] {
            rows.push(SimRow {
                experiment: "scenario-l5".into(),
                params: label.clone(),
                seed: None,
                point: format!("l={}", r.version),
                metric: metric.into(),
                value: value as f64,
            });
        }
    }
    rows.push(SimRow {
        experiment: "scenario-l5".into(),
        params: label,
        seed: None,
        point: "total".into(),
        metric: "saving_pct".into(),
        value: s.saving_percent(),
    });
    rows
}

/// Writes rows with a leading `#` comment line carrying the seed.
pub fn write_sim_csv(rows: &[SimRow], seed: Option<u64>, mut out: impl Write) -> Result<()> {
    match seed {
        Some(s) => writeln!(out, "# seed={s}")?,
        None => writeln!(out, "# seed=none")?,
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["experiment", "params", "seed", "point", "metric", "value"])?;
    for r in rows {
        w.write_record([
            r.experiment.clone(),
            r.params.clone(),
            r.seed.map(|s| s.to_string()).unwrap_or_default(),
            r.point.clone(),
            r.metric.clone(),
            r.value.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
