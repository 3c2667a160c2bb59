//! Static resilience: loss probabilities of stored objects under i.i.d. node
//! failures, exhaustive failure-pattern census, and whole-archive retention
//! for dispersed and colocated placements.
//!
//! Loss probabilities are kept as [`LossPolynomial`]s in the basis
//! `p^f (1-p)^(n-f)`: coefficient `f` counts the failure patterns with `f`
//! failed nodes that lose the object. Closed forms and the census produce
//! the same representation, so they compare coefficient by coefficient.

use std::fmt;
use std::io::Write;

use itertools::Itertools;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{CodeParams, CodecError};

/// Largest code length the exhaustive census accepts.
pub const MAX_CENSUS_N: usize = 24;

#[derive(Debug, Error)]
pub enum ResilienceError {
    #[error("failure probability {0} is outside [0, 1]")]
    InvalidProbability(f64),
    #[error("exhaustive enumeration over n = {n} nodes is limited to n <= {max}")]
    TooLarge { n: usize, max: usize },
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error("writing csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = ResilienceError> = std::result::Result<T, E>;

/// Independent node failures with a common probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FailureModel {
    p: f64,
}

impl FailureModel {
    pub fn new(p: f64) -> Result<FailureModel> {
        if !(0.0..=1.0).contains(&p) {
            return Err(ResilienceError::InvalidProbability(p));
        }
        Ok(FailureModel { p })
    }

    pub fn p(&self) -> f64 {
        self.p
    }
}

/// Which nodes are down.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FailurePattern {
    failed: Vec<bool>,
}

impl FailurePattern {
    pub fn none(nodes: usize) -> FailurePattern {
        FailurePattern {
            failed: vec![false; nodes],
        }
    }

    /// Indices past `nodes` are ignored.
    pub fn from_failed(nodes: usize, failed: &[usize]) -> FailurePattern {
        let mut p = FailurePattern::none(nodes);
        for &i in failed {
            if i < nodes {
                p.failed[i] = true;
            }
        }
        p
    }

    /// Bit `i` of `mask` set means node `i` failed.
    pub fn from_mask(nodes: usize, mask: u64) -> FailurePattern {
        FailurePattern {
            failed: (0..nodes).map(|i| i < 64 && (mask >> i) & 1 == 1).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.failed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.failed.is_empty()
    }

    pub fn is_failed(&self, node: usize) -> bool {
        self.failed.get(node).copied().unwrap_or(false)
    }

    pub fn fail(&mut self, node: usize) {
        if let Some(f) = self.failed.get_mut(node) {
            *f = true;
        }
    }

    pub fn failed_count(&self) -> usize {
        self.failed.iter().filter(|&&f| f).count()
    }

    pub fn failed_nodes(&self) -> Vec<usize> {
        (0..self.failed.len()).filter(|&i| self.failed[i]).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Placement {
    /// All stored objects share one set of `n` nodes.
    Colocated,
    /// Each stored object gets its own `n` nodes, `nL` in total.
    Dispersed,
}

impl fmt::Display for Placement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Placement::Colocated => "colocated",
            Placement::Dispersed => "dispersed",
        })
    }
}

impl std::str::FromStr for Placement {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "colocated" => Ok(Placement::Colocated),
            "dispersed" => Ok(Placement::Dispersed),
            other => Err(format!(
                "unknown placement {other:?} (expected colocated or dispersed)"
            )),
        }
    }
}

/// Maps (slot, share) to a node id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlacementMap {
    placement: Placement,
    n: usize,
    slots: usize,
}

impl PlacementMap {
    pub fn new(placement: Placement, n: usize, slots: usize) -> PlacementMap {
        PlacementMap {
            placement,
            n,
            slots,
        }
    }

    pub fn placement(&self) -> Placement {
        self.placement
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn slots(&self) -> usize {
        self.slots
    }

    pub fn node_count(&self) -> usize {
        match self.placement {
            Placement::Colocated => self.n,
            Placement::Dispersed => self.n * self.slots,
        }
    }

    /// Node storing share `share` of slot `slot` (slots start at 1).
    pub fn node_of(&self, slot: usize, share: usize) -> usize {
        match self.placement {
            Placement::Colocated => share,
            Placement::Dispersed => (slot - 1) * self.n + share,
        }
    }

    /// The node set `N_slot`.
    pub fn nodes_for(&self, slot: usize) -> Vec<usize> {
        (0..self.n).map(|s| self.node_of(slot, s)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    NonSystematic,
    Systematic,
    /// Each version coded on its own.
    NonDifferential,
}

impl Variant {
    pub const ALL: [Variant; 3] = [
        Variant::NonSystematic,
        Variant::Systematic,
        Variant::NonDifferential,
    ];
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::NonSystematic => "nonsys",
            Variant::Systematic => "sys",
            Variant::NonDifferential => "nondiff",
        })
    }
}

pub fn binomial(n: usize, r: usize) -> f64 {
    if r > n {
        return 0.0;
    }
    let r = r.min(n - r);
    (0..r)
        .fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
        .round()
}

/// `sum_f coeffs[f] * p^f * (1-p)^(n-f)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LossPolynomial {
    n: usize,
    coeffs: Vec<f64>,
}

impl LossPolynomial {
    fn zero(n: usize) -> LossPolynomial {
        LossPolynomial {
            n,
            coeffs: vec![0.0; n + 1],
        }
    }

    /// Lost exactly when at least `threshold` of `n` nodes fail.
    pub fn at_least(n: usize, threshold: usize) -> LossPolynomial {
        let mut poly = LossPolynomial::zero(n);
        for f in threshold..=n {
            poly.coeffs[f] = binomial(n, f);
        }
        poly
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Coefficient of `p^failed (1-p)^(n-failed)`.
    pub fn coeff(&self, failed: usize) -> f64 {
        self.coeffs.get(failed).copied().unwrap_or(0.0)
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn eval(&self, p: f64) -> f64 {
        let mut terms: Vec<f64> = self
            .coeffs
            .iter()
            .enumerate()
            .filter(|(_, &c)| c != 0.0)
            .map(|(f, &c)| c * p.powi(f as i32) * (1.0 - p).powi((self.n - f) as i32))
            .collect();
        terms.sort_by(f64::total_cmp);
        terms.iter().sum()
    }
}

/// `x_1` (and any object needing `k` reads) is lost once `n - k + 1` nodes
/// fail.
pub fn loss_poly_full(n: usize, k: usize) -> LossPolynomial {
    LossPolynomial::at_least(n, n - k + 1)
}

/// A non-systematic delta is lost once `n - min(2 gamma, k) + 1` nodes fail.
pub fn loss_poly_delta_nonsys(n: usize, k: usize, gamma: usize) -> LossPolynomial {
    let upsilon = (2 * gamma).min(k);
    LossPolynomial::at_least(n, n - upsilon + 1)
}

/// The strict lower bound on the systematic delta loss probability.
pub fn loss_poly_delta_sys_bound(n: usize, k: usize, gamma: usize) -> LossPolynomial {
    loss_poly_delta_nonsys(n, k, gamma)
}

pub fn loss_prob_full(params: &CodeParams, model: FailureModel) -> f64 {
    loss_poly_full(params.n(), params.k()).eval(model.p())
}

pub fn loss_prob_delta_nonsys(params: &CodeParams, gamma: usize, model: FailureModel) -> f64 {
    loss_poly_delta_nonsys(params.n(), params.k(), gamma).eval(model.p())
}

/// Exact systematic delta loss probability, from the census.
pub fn loss_prob_delta_sys(params: &CodeParams, gamma: usize, model: FailureModel) -> Result<f64> {
    if 2 * gamma >= params.k() {
        return Ok(loss_prob_full(params, model));
    }
    let sys = if params.is_systematic() {
        params.clone()
    } else {
        CodeParams::cauchy(params.n(), params.k(), params.field(), true)?
    };
    Ok(census(&sys, gamma)?.lost.eval(model.p()))
}

pub fn loss_prob_delta_sys_bound(params: &CodeParams, gamma: usize, model: FailureModel) -> f64 {
    loss_poly_delta_sys_bound(params.n(), params.k(), gamma).eval(model.p())
}

/// Share subsets of size `2 gamma` that recover a `gamma`-sparse delta.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SparseSubsets {
    /// Sparse recovery is not applicable (`2 gamma >= k` or `gamma = 0`).
    None,
    /// Any `size` shares will do.
    Any { size: usize },
    /// Only these subsets, as bitmasks over share indices.
    Explicit { size: usize, masks: Vec<u64> },
}

impl SparseSubsets {
    /// Non-systematic Cauchy codes accept every subset; systematic ones are
    /// checked exhaustively against the generator.
    pub fn for_params(params: &CodeParams, gamma: usize) -> Result<SparseSubsets> {
        if !params.sparse_threshold(gamma) {
            return Ok(SparseSubsets::None);
        }
        let size = 2 * gamma;
        if !params.is_systematic() {
            return Ok(SparseSubsets::Any { size });
        }
        if params.n() > 64 {
            return Err(ResilienceError::TooLarge {
                n: params.n(),
                max: 64,
            });
        }
        Self::exhaustive(params, gamma)
    }

    /// Checks every candidate subset regardless of code structure.
    pub fn exhaustive(params: &CodeParams, gamma: usize) -> Result<SparseSubsets> {
        if !params.sparse_threshold(gamma) {
            return Ok(SparseSubsets::None);
        }
        let size = 2 * gamma;
        let mut masks = Vec::new();
        for rows in params
            .sparse_usable_rows(gamma)
            .into_iter()
            .combinations(size)
        {
            if params.rows_support_sparse(&rows, gamma)? {
                masks.push(rows.iter().fold(0u64, |m, &r| m | 1 << r));
            }
        }
        Ok(SparseSubsets::Explicit { size, masks })
    }

    pub fn count(&self, n: usize) -> usize {
        match self {
            SparseSubsets::None => 0,
            SparseSubsets::Any { size } => binomial(n, *size) as usize,
            SparseSubsets::Explicit { masks, .. } => masks.len(),
        }
    }

    /// Whether some qualifying subset lies within `alive`.
    pub fn covered_by(&self, alive: u64) -> bool {
        match self {
            SparseSubsets::None => false,
            SparseSubsets::Any { size } => alive.count_ones() as usize >= *size,
            SparseSubsets::Explicit { masks, .. } => masks.iter().any(|&m| m & !alive == 0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Census {
    /// Nonempty failure patterns, `2^n - 1`.
    pub total_patterns: u64,
    /// Patterns leaving at least `k` live shares.
    pub recoverable_mds: u64,
    /// Patterns recoverable only through a sparse subset.
    pub recoverable_sparse_extra: u64,
    pub total_handled: u64,
    /// Losing patterns by number of failed nodes.
    pub lost: LossPolynomial,
}

/// Classifies all `2^n - 1` nonempty failure patterns for a delta of
/// sparsity `gamma`.
pub fn census(params: &CodeParams, gamma: usize) -> Result<Census> {
    let n = params.n();
    if n > MAX_CENSUS_N {
        return Err(ResilienceError::TooLarge {
            n,
            max: MAX_CENSUS_N,
        });
    }
    let k = params.k();
    let subsets = SparseSubsets::for_params(params, gamma)?;
    let all = (1u64 << n) - 1;
    let mut mds = 0u64;
    let mut extra = 0u64;
    let mut lost = LossPolynomial::zero(n);
    for failed in 0..=all {
        let alive = all & !failed;
        let nfailed = failed.count_ones() as usize;
        if n - nfailed >= k {
            if failed != 0 {
                mds += 1;
            }
        } else if subsets.covered_by(alive) {
            extra += 1;
        } else {
            lost.coeffs[nfailed] += 1.0;
        }
    }
    Ok(Census {
        total_patterns: all,
        recoverable_mds: mds,
        recoverable_sparse_extra: extra,
        total_handled: mds + extra,
        lost,
    })
}

fn delta_loss(params: &CodeParams, gamma: usize, variant: Variant, p: f64) -> Result<f64> {
    let model = FailureModel::new(p)?;
    Ok(match variant {
        Variant::NonSystematic => loss_prob_delta_nonsys(params, gamma, model),
        Variant::Systematic => loss_prob_delta_sys(params, gamma, model)?,
        Variant::NonDifferential => loss_prob_full(params, model),
    })
}

/// Probability that all versions survive. `deltas` holds the sparsity of
/// `z_2, ..., z_L`, so the archive has `deltas.len() + 1` versions.
pub fn archive_retention(
    params: &CodeParams,
    deltas: &[usize],
    placement: Placement,
    model: FailureModel,
    variant: Variant,
) -> Result<f64> {
    let anchor = 1.0 - loss_prob_full(params, model);
    match placement {
        // any k live nodes recover every object, and fewer lose x_1
        Placement::Colocated => Ok(anchor),
        Placement::Dispersed => {
            let mut retained = anchor;
            for &gamma in deltas {
                retained *= 1.0 - delta_loss(params, gamma, variant, model.p())?;
            }
            Ok(retained)
        }
    }
}

/// Availability expressed as a count of nines, `-log10(1 - availability)`.
pub fn nines(availability: f64) -> f64 {
    -(1.0 - availability).log10()
}

/// One line of resilience CSV output.
#[derive(Debug, Clone, PartialEq)]
pub struct ResilienceRow {
    pub p: Option<f64>,
    pub variant: String,
    pub placement: String,
    pub metric: String,
    pub value: f64,
}

/// Loss, retention and census figures for `deltas` over a grid of `p`.
pub fn resilience_table(
    params: &CodeParams,
    deltas: &[usize],
    p_grid: &[f64],
) -> Result<Vec<ResilienceRow>> {
    let mut rows = Vec::new();
    let row = |p, variant: &dyn fmt::Display, placement: &str, metric: &str, value| ResilienceRow {
        p,
        variant: variant.to_string(),
        placement: placement.to_string(),
        metric: metric.to_string(),
        value,
    };
    let nonsys = CodeParams::cauchy(params.n(), params.k(), params.field(), false)?;
    let sys = CodeParams::cauchy(params.n(), params.k(), params.field(), true)?;
    if params.n() <= MAX_CENSUS_N {
        let mut seen = Vec::new();
        for &gamma in deltas.iter().filter(|&&g| g > 0) {
            if seen.contains(&gamma) {
                continue;
            }
            seen.push(gamma);
            for (variant, code) in [
                (Variant::NonSystematic, &nonsys),
                (Variant::Systematic, &sys),
            ] {
                let c = census(code, gamma)?;
                let tag = |m: &str| format!("{m}_gamma{gamma}");
                rows.push(row(
                    None,
                    &variant,
                    "-",
                    &tag("census_patterns"),
                    c.total_patterns as f64,
                ));
                rows.push(row(
                    None,
                    &variant,
                    "-",
                    &tag("census_mds"),
                    c.recoverable_mds as f64,
                ));
                rows.push(row(
                    None,
                    &variant,
                    "-",
                    &tag("census_sparse_extra"),
                    c.recoverable_sparse_extra as f64,
                ));
                rows.push(row(
                    None,
                    &variant,
                    "-",
                    &tag("census_handled"),
                    c.total_handled as f64,
                ));
            }
        }
    }
    for &p in p_grid {
        let model = FailureModel::new(p)?;
        rows.push(row(
            Some(p),
            &"all",
            "-",
            "loss_full",
            loss_prob_full(params, model),
        ));
        for (j, &gamma) in deltas.iter().enumerate() {
            let metric = format!("loss_z{}", j + 2);
            for variant in Variant::ALL {
                let value = delta_loss(params, gamma, variant, p)?;
                rows.push(row(Some(p), &variant, "-", &metric, value));
            }
        }
        for variant in Variant::ALL {
            for placement in [Placement::Colocated, Placement::Dispersed] {
                let code = if variant == Variant::Systematic {
                    &sys
                } else {
                    &nonsys
                };
                let r = archive_retention(code, deltas, placement, model, variant)?;
                let tag = placement.to_string();
                rows.push(row(Some(p), &variant, &tag, "retention", r));
                rows.push(row(Some(p), &variant, &tag, "retention_nines", nines(r)));
            }
        }
    }
    Ok(rows)
}

pub fn write_resilience_csv(rows: &[ResilienceRow], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["p", "variant", "placement", "metric", "value"])?;
    for r in rows {
        w.write_record([
            r.p.map(|p| p.to_string()).unwrap_or_default(),
            r.variant.clone(),
            r.placement.clone(),
            r.metric.clone(),
            r.value.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gf::Field;

    fn code(n: usize, k: usize, systematic: bool) -> CodeParams {
        CodeParams::cauchy(n, k, &Field::with_width(10).unwrap(), systematic).unwrap()
    }

    fn model(p: f64) -> FailureModel {
        FailureModel::new(p).unwrap()
    }

    #[test]
    fn failure_model_range() {
        assert!(FailureModel::new(-0.1).is_err());
        assert!(FailureModel::new(1.5).is_err());
        assert!(FailureModel::new(1.0).is_ok());
    }

    #[test]
    fn full_loss_examples() {
        let c = code(6, 3, false);
        assert_eq!(loss_prob_full(&c, model(0.0)), 0.0);
        assert_eq!(loss_prob_full(&c, model(1.0)), 1.0);
        let poly = loss_poly_full(6, 3);
        assert_eq!(poly.coeffs(), &[0.0, 0.0, 0.0, 0.0, 15.0, 6.0, 1.0]);
        for p in [0.05f64, 0.1, 0.3] {
            let q = 1.0 - p;
            let expected = p.powi(6) + 6.0 * p.powi(5) * q + 15.0 * p.powi(4) * q * q;
            assert!((loss_prob_full(&c, model(p)) - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn nonsys_delta_examples() {
        let c = code(6, 3, false);
        assert_eq!(
            loss_poly_delta_nonsys(6, 3, 1).coeffs(),
            &[0.0, 0.0, 0.0, 0.0, 0.0, 6.0, 1.0]
        );
        assert_eq!(loss_poly_delta_nonsys(6, 3, 2), loss_poly_full(6, 3));
        assert_eq!(loss_prob_delta_nonsys(&c, 1, model(0.0)), 0.0);
    }

    #[test]
    fn sys_delta_examples() {
        let s = code(6, 3, true);
        let c = census(&s, 1).unwrap();
        assert_eq!(c.lost.coeffs(), &[0.0, 0.0, 0.0, 0.0, 12.0, 6.0, 1.0]);
        assert_eq!(
            loss_prob_delta_sys(&s, 2, model(0.2)).unwrap(),
            loss_prob_full(&s, model(0.2))
        );
        assert_eq!(loss_prob_delta_sys(&s, 1, model(0.0)).unwrap(), 0.0);
    }

    #[test]
    fn census_six_three() {
        let n = census(&code(6, 3, false), 1).unwrap();
        assert_eq!(
            (
                n.total_patterns,
                n.recoverable_mds,
                n.recoverable_sparse_extra,
                n.total_handled
            ),
            (63, 41, 15, 56)
        );
        let s = census(&code(6, 3, true), 1).unwrap();
        assert_eq!(
            (
                s.total_patterns,
                s.recoverable_mds,
                s.recoverable_sparse_extra,
                s.total_handled
            ),
            (63, 41, 3, 44)
        );
        for systematic in [false, true] {
            let c = census(&code(6, 3, systematic), 2).unwrap();
            assert_eq!(c.recoverable_sparse_extra, 0);
        }
    }

    #[test]
    fn census_size_limit() {
        let big = code(25, 3, false);
        assert!(matches!(
            census(&big, 1),
            Err(ResilienceError::TooLarge { n: 25, .. })
        ));
    }

    #[test]
    fn nonsys_structural_subsets_match_exhaustive_check() {
        for (n, k) in [(6, 3), (7, 5), (8, 5), (8, 6)] {
            let c = code(n, k, false);
            for gamma in 1..k.div_ceil(2) {
                let any = SparseSubsets::for_params(&c, gamma).unwrap();
                let checked = SparseSubsets::exhaustive(&c, gamma).unwrap();
                assert_eq!(any.count(n), checked.count(n));
            }
        }
    }

    #[test]
    fn closed_forms_match_pattern_sums() {
        // brute force over patterns, independent of LossPolynomial
        for (n, k) in [(6, 3), (8, 4), (10, 5), (9, 7)] {
            for gamma in 1..=k {
                let upsilon = (2 * gamma).min(k);
                for p in [0.01f64, 0.07, 0.2, 0.5] {
                    let mut brute = 0.0;
                    for mask in 0u32..(1 << n) {
                        let f = mask.count_ones() as i32;
                        if (n as i32 - f) < upsilon as i32 {
                            brute += p.powi(f) * (1.0 - p).powi(n as i32 - f);
                        }
                    }
                    let closed = loss_poly_delta_nonsys(n, k, gamma).eval(p);
                    assert!(
                        (closed - brute).abs() < 1e-12,
                        "n={n} k={k} gamma={gamma} p={p}"
                    );
                }
            }
        }
    }

    #[test]
    fn sys_dominates_nonsys() {
        for (n, k) in [(6, 3), (8, 4), (10, 5), (9, 6)] {
            let s = code(n, k, true);
            let ns = code(n, k, false);
            for gamma in 1..=k {
                for p in [0.01, 0.05, 0.1, 0.2, 0.4] {
                    let sys = loss_prob_delta_sys(&s, gamma, model(p)).unwrap();
                    let non = loss_prob_delta_nonsys(&ns, gamma, model(p));
                    if 2 * gamma < k {
                        assert!(sys > non, "n={n} k={k} gamma={gamma} p={p}");
                        assert!(sys > loss_prob_delta_sys_bound(&s, gamma, model(p)));
                    } else {
                        assert_eq!(sys, non);
                    }
                }
            }
        }
    }

    #[test]
    fn loss_is_monotone_in_p() {
        let s = code(6, 3, true);
        let mut prev = [0.0; 3];
        for i in 0..=100 {
            let p = i as f64 / 100.0;
            let cur = [
                loss_prob_full(&s, model(p)),
                loss_prob_delta_nonsys(&s, 1, model(p)),
                loss_prob_delta_sys(&s, 1, model(p)).unwrap(),
            ];
            for j in 0..3 {
                assert!(cur[j] >= prev[j] - 1e-15);
            }
            prev = cur;
        }
    }

    #[test]
    fn retention_examples() {
        let c = code(6, 3, false);
        let s = code(6, 3, true);
        for p in [0.01, 0.1, 0.2] {
            let expected = 1.0 - loss_prob_full(&c, model(p));
            for placement in [Placement::Colocated, Placement::Dispersed] {
                for variant in Variant::ALL {
                    let r = archive_retention(&c, &[], placement, model(p), variant).unwrap();
                    assert!((r - expected).abs() < 1e-15);
                }
            }
            for variant in Variant::ALL {
                let params = if variant == Variant::Systematic {
                    &s
                } else {
                    &c
                };
                let colo = archive_retention(params, &[1], Placement::Colocated, model(p), variant)
                    .unwrap();
                let disp = archive_retention(params, &[1], Placement::Dispersed, model(p), variant)
                    .unwrap();
                assert_eq!(colo, expected);
                assert!(colo >= disp);
            }
            // dispersed: nonsys beats the other two
            let ns = archive_retention(
                &c,
                &[1],
                Placement::Dispersed,
                model(p),
                Variant::NonSystematic,
            )
            .unwrap();
            let sy = archive_retention(
                &s,
                &[1],
                Placement::Dispersed,
                model(p),
                Variant::Systematic,
            )
            .unwrap();
            let nd = archive_retention(
                &c,
                &[1],
                Placement::Dispersed,
                model(p),
                Variant::NonDifferential,
            )
            .unwrap();
            assert!(ns > sy && sy > nd);
        }
    }

    #[test]
    fn nines_transform() {
        assert!((nines(0.999) - 3.0).abs() < 1e-9);
        assert!(nines(1.0).is_infinite());
    }

    #[test]
    fn placement_map_nodes() {
        let c = PlacementMap::new(Placement::Colocated, 6, 2);
        assert_eq!(c.node_count(), 6);
        assert_eq!(c.nodes_for(2), (0..6).collect::<Vec<_>>());
        let d = PlacementMap::new(Placement::Dispersed, 6, 2);
        assert_eq!(d.node_count(), 12);
        assert_eq!(d.nodes_for(2), (6..12).collect::<Vec<_>>());
    }

    #[test]
    fn csv_output_has_zero_losses_at_p_zero() {
        let c = code(6, 3, false);
        let rows = resilience_table(&c, &[1], &[0.0, 0.1]).unwrap();
        let census_rows: Vec<_> = rows
            .iter()
            .filter(|r| r.metric.starts_with("census"))
            .collect();
        let handled: Vec<_> = census_rows
            .iter()
            .filter(|r| r.metric == "census_handled_gamma1")
            .map(|r| (r.variant.as_str(), r.value))
            .collect();
        assert_eq!(handled, [("nonsys", 56.0), ("sys", 44.0)]);
        for r in rows
            .iter()
            .filter(|r| r.p == Some(0.0) && r.metric.starts_with("loss"))
        {
            assert_eq!(r.value, 0.0);
        }
        let mut buf = Vec::new();
        write_resilience_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("p,variant,placement,metric,value\n"));
    }
}
