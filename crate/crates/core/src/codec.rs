//! Differential encoding of versioned objects and sparse-aware retrieval.
//!
//! An object is a `k x stripe` matrix of symbols: `k` data blocks, each a
//! stripe of symbols encoded column-wise with the same generator. Share `i`
//! of a stored object is row `i` of `G * object`, so a node holds one row
//! per stored object. A delta is `gamma`-sparse when at most `gamma` of its
//! blocks are nonzero; such a delta is recovered from any `2 * gamma`
//! shares whose generator rows have every `2 * gamma` columns independent.
//!
//! Archive slots are numbered `1..=L`, one per version:
//!
//! * basic: slot 1 holds `x_1`, slot `j` holds `z_j = x_j - x_{j-1}`;
//! * optimized: as basic, but slot `j` holds `x_j` itself whenever
//!   `2 * gamma_j >= k`;
//! * reversed: slot `L` holds `x_L`, slot `j < L` holds `z_{j+1}`.

use std::fmt;

use itertools::Itertools;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gf::{Field, GfError, Symbol};
use crate::linalg::{default_cauchy_points, GfMatrix, LinalgError};
use crate::resilience::{FailurePattern, PlacementMap};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("invalid code parameters: {0}")]
    InvalidParams(String),
    #[error("an archive needs at least one version")]
    EmptyArchive,
    #[error("object shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },
    #[error("invalid share set: {0}")]
    InvalidShares(String),
    #[error("insufficient shares: have {have}, need {need}")]
    InsufficientShares { have: usize, need: usize },
    #[error("selected share rows do not form an invertible submatrix")]
    Singular,
    #[error("no {gamma}-sparse vector is consistent with the shares")]
    Inconsistent { gamma: usize },
    #[error("share rows do not have every {} columns independent", 2 * .gamma)]
    UnusableSubset { gamma: usize },
    #[error("version {version} is outside 1..={len}")]
    VersionOutOfRange { version: usize, len: usize },
    #[error("stored object {slot} is unrecoverable: {alive} live shares, {need} needed")]
    Unrecoverable {
        slot: usize,
        alive: usize,
        need: usize,
    },
    #[error("placement does not match the archive: {0}")]
    PlacementMismatch(String),
    #[error("share {share} of stored object {slot} is erased")]
    ShareErased { slot: usize, share: usize },
    #[error("reading share {share} of stored object {slot}: {reason}")]
    ShareRead {
        slot: usize,
        share: usize,
        reason: String,
    },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Gf(#[from] GfError),
}

pub type Result<T, E = CodecError> = std::result::Result<T, E>;

/// An (n, k) Cauchy-based MDS code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeParams {
    n: usize,
    k: usize,
    systematic: bool,
    field: Field,
    generator: GfMatrix,
    h: Vec<Symbol>,
    f: Vec<Symbol>,
}

impl CodeParams {
    /// Code with the default Cauchy points. For a systematic code the points
    /// define the `(n - k) x k` parity block `B` under `I_k`.
    pub fn cauchy(n: usize, k: usize, field: &Field, systematic: bool) -> Result<CodeParams> {
        if k == 0 || n <= k {
            return Err(CodecError::InvalidParams(format!(
                "need n > k >= 1, got n = {n}, k = {k}"
            )));
        }
        let rows = if systematic { n - k } else { n };
        let (h, f) = default_cauchy_points(rows, k);
        CodeParams::with_points(n, k, field, systematic, h, f)
    }

    pub fn with_points(
        n: usize,
        k: usize,
        field: &Field,
        systematic: bool,
        h: Vec<Symbol>,
        f: Vec<Symbol>,
    ) -> Result<CodeParams> {
        if k == 0 || n <= k {
            return Err(CodecError::InvalidParams(format!(
                "need n > k >= 1, got n = {n}, k = {k}"
            )));
        }
        let rows = if systematic { n - k } else { n };
        if h.len() != rows || f.len() != k {
            return Err(CodecError::InvalidParams(format!(
                "expected {rows} row points and {k} column points, got {} and {}",
                h.len(),
                f.len()
            )));
        }
        let cauchy = GfMatrix::cauchy(field, &h, &f)?;
        let generator = if systematic {
            GfMatrix::identity(field, k).vstack(&cauchy)?
        } else {
            cauchy
        };
        Ok(CodeParams {
            n,
            k,
            systematic,
            field: field.clone(),
            generator,
            h,
            f,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn is_systematic(&self) -> bool {
        self.systematic
    }

    pub fn field(&self) -> &Field {
        &self.field
    }

    pub fn generator(&self) -> &GfMatrix {
        &self.generator
    }

    pub fn row_points(&self) -> &[Symbol] {
        &self.h
    }

    pub fn col_points(&self) -> &[Symbol] {
        &self.f
    }

    /// Whether a `gamma`-sparse delta is a candidate for `2 * gamma` reads.
    pub fn sparse_threshold(&self, gamma: usize) -> bool {
        gamma > 0 && 2 * gamma < self.k
    }

    /// Read cost of a delta of sparsity `gamma` with every node alive:
    /// `min(2 gamma, k)` for the non-systematic code; for the systematic
    /// code `2 gamma` only while the parity block has `2 gamma` rows.
    pub fn delta_read_cost(&self, gamma: usize) -> usize {
        if gamma == 0 {
            0
        } else if self.sparse_threshold(gamma) && (!self.systematic || 2 * gamma <= self.n - self.k)
        {
            2 * gamma
        } else {
            self.k
        }
    }

    /// Generator rows that can appear in a Criterion-2 subset for `gamma`:
    /// a row with `2 gamma` or more zeros never can.
    pub fn sparse_usable_rows(&self, gamma: usize) -> Vec<usize> {
        (0..self.n)
            .filter(|&r| self.generator.row(r).iter().filter(|&&x| x == 0).count() < 2 * gamma)
            .collect()
    }

    /// Whether the generator rows `rows` (exactly `2 gamma` of them) let a
    /// `gamma`-sparse vector be recovered.
    pub fn rows_support_sparse(&self, rows: &[usize], gamma: usize) -> Result<bool> {
        if !self.systematic {
            // every square submatrix of a Cauchy matrix is invertible
            return Ok(rows.len() == 2 * gamma && 2 * gamma < self.k);
        }
        Ok(self
            .generator
            .row_submatrix(rows)?
            .satisfies_criterion2(gamma)?)
    }

    /// Encodes a `k x stripe` object into `n x stripe` shares.
    pub fn encode(&self, object: &GfMatrix) -> Result<GfMatrix> {
        if object.rows() != self.k || object.field() != &self.field {
            return Err(CodecError::ShapeMismatch {
                expected: format!("{} rows over {:?}", self.k, self.field),
                got: format!("{} rows over {:?}", object.rows(), object.field()),
            });
        }
        Ok(self.generator.mul(object)?)
    }
}

/// Number of nonzero blocks (rows) of an object.
pub fn compute_sparsity(z: &GfMatrix) -> usize {
    z.nonzero_rows()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Basic,
    Optimized,
    Reversed,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Basic => "basic",
            Mode::Optimized => "optimized",
            Mode::Reversed => "reversed",
        })
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "basic" => Ok(Mode::Basic),
            "optimized" => Ok(Mode::Optimized),
            "reversed" => Ok(Mode::Reversed),
            other => Err(format!(
                "unknown mode {other:?} (expected basic, optimized or reversed)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StoredAs {
    Full,
    Delta,
}

impl fmt::Display for StoredAs {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StoredAs::Full => "full",
            StoredAs::Delta => "delta",
        })
    }
}

/// One stored object of an archive.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedVersion {
    /// Slot (version index), starting at 1.
    pub version: usize,
    pub stored_as: StoredAs,
    /// Sparsity of `z_version = x_version - x_{version-1}`; `None` for
    /// version 1.
    pub delta_gamma: Option<usize>,
    /// Nonzero blocks of the stored plaintext. For a delta this is the
    /// sparsity the reader decodes with.
    pub weight: usize,
    /// `n x stripe` shares.
    pub codeword: GfMatrix,
}

impl EncodedVersion {
    pub fn share(&self, index: usize) -> &[Symbol] {
        self.codeword.row(index)
    }
}

/// A share read back from a node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Share {
    pub index: usize,
    pub symbols: Vec<Symbol>,
}

impl Share {
    pub fn new(index: usize, symbols: Vec<Symbol>) -> Share {
        Share { index, symbols }
    }
}

#[derive(Debug, Clone)]
pub struct VersionedArchive {
    params: CodeParams,
    mode: Mode,
    stripe: usize,
    versions: Vec<EncodedVersion>,
    // full plaintext of the latest version, kept by the encoder
    latest: Option<GfMatrix>,
}

/// Encodes `versions` (each `k x stripe`) into an archive.
pub fn encode_archive(
    versions: &[GfMatrix],
    params: &CodeParams,
    mode: Mode,
) -> Result<VersionedArchive> {
    let (first, rest) = versions.split_first().ok_or(CodecError::EmptyArchive)?;
    let mut archive = VersionedArchive::start(params, mode, first)?;
    for v in rest {
        archive.push(v)?;
    }
    Ok(archive)
}

impl VersionedArchive {
    pub fn start(params: &CodeParams, mode: Mode, first: &GfMatrix) -> Result<VersionedArchive> {
        if first.cols() == 0 {
            return Err(CodecError::ShapeMismatch {
                expected: "at least one symbol per block".into(),
                got: "empty stripe".into(),
            });
        }
        let codeword = params.encode(first)?;
        Ok(VersionedArchive {
            params: params.clone(),
            mode,
            stripe: first.cols(),
            versions: vec![EncodedVersion {
                version: 1,
                stored_as: StoredAs::Full,
                delta_gamma: None,
                weight: compute_sparsity(first),
                codeword,
            }],
            latest: Some(first.clone()),
        })
    }

    /// Rebuilds an archive from stored objects (no encoder cache).
    pub fn from_parts(
        params: CodeParams,
        mode: Mode,
        versions: Vec<EncodedVersion>,
    ) -> Result<VersionedArchive> {
        let first = versions.first().ok_or(CodecError::EmptyArchive)?;
        let stripe = first.codeword.cols();
        for (i, v) in versions.iter().enumerate() {
            if v.version != i + 1 || v.codeword.rows() != params.n || v.codeword.cols() != stripe {
                return Err(CodecError::ShapeMismatch {
                    expected: format!("slot {} with {}x{stripe} shares", i + 1, params.n),
                    got: format!(
                        "slot {} with {}x{} shares",
                        v.version,
                        v.codeword.rows(),
                        v.codeword.cols()
                    ),
                });
            }
        }
        let archive = VersionedArchive {
            params,
            mode,
            stripe,
            versions,
            latest: None,
        };
        let anchor = archive.anchor_slot();
        if archive.versions[anchor - 1].stored_as != StoredAs::Full {
            return Err(CodecError::InvalidParams(format!(
                "slot {anchor} must be stored in full in {mode} mode"
            )));
        }
        Ok(archive)
    }

    /// Appends the next version. Only the encoder that built the archive
    /// holds the latest plaintext needed for this.
    pub fn push(&mut self, next: &GfMatrix) -> Result<&EncodedVersion> {
        let latest = self.latest.as_ref().ok_or_else(|| {
            CodecError::InvalidParams("archive has no cached latest version".into())
        })?;
        if next.rows() != self.params.k || next.cols() != self.stripe {
            return Err(CodecError::ShapeMismatch {
                expected: format!("{}x{}", self.params.k, self.stripe),
                got: format!("{}x{}", next.rows(), next.cols()),
            });
        }
        let delta = next.add(latest)?;
        let gamma = compute_sparsity(&delta);
        let version = self.versions.len() + 1;
        match self.mode {
            Mode::Basic | Mode::Optimized => {
                let full = self.mode == Mode::Optimized && 2 * gamma >= self.params.k;
                let (stored_as, plain) = if full {
                    (StoredAs::Full, next)
                } else {
                    (StoredAs::Delta, &delta)
                };
                self.versions.push(EncodedVersion {
                    version,
                    stored_as,
                    delta_gamma: Some(gamma),
                    weight: compute_sparsity(plain),
                    codeword: self.params.encode(plain)?,
                });
            }
            Mode::Reversed => {
                // the previous full slot becomes the backward delta z_{L+1}
                let prev = self.versions.last_mut().expect("archive is never empty");
                prev.stored_as = StoredAs::Delta;
                prev.weight = gamma;
                prev.codeword = self.params.encode(&delta)?;
                self.versions.push(EncodedVersion {
                    version,
                    stored_as: StoredAs::Full,
                    delta_gamma: Some(gamma),
                    weight: compute_sparsity(next),
                    codeword: self.params.encode(next)?,
                });
            }
        }
        self.latest = Some(next.clone());
        Ok(self.versions.last().expect("just pushed"))
    }

    pub fn params(&self) -> &CodeParams {
        &self.params
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn stripe(&self) -> usize {
        self.stripe
    }

    pub fn len(&self) -> usize {
        self.versions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.versions.is_empty()
    }

    pub fn versions(&self) -> &[EncodedVersion] {
        &self.versions
    }

    pub fn slot(&self, version: usize) -> &EncodedVersion {
        &self.versions[version - 1]
    }

    /// Cached plaintext of the latest version, if this archive was encoded
    /// in this process.
    pub fn latest(&self) -> Option<&GfMatrix> {
        self.latest.as_ref()
    }

    /// Supplies the latest plaintext to an archive rebuilt from stored
    /// objects, so further versions can be pushed.
    pub fn set_latest(&mut self, latest: GfMatrix) -> Result<()> {
        if latest.rows() != self.params.k || latest.cols() != self.stripe {
            return Err(CodecError::ShapeMismatch {
                expected: format!("{}x{}", self.params.k, self.stripe),
                got: format!("{}x{}", latest.rows(), latest.cols()),
            });
        }
        self.latest = Some(latest);
        Ok(())
    }

    fn anchor_slot(&self) -> usize {
        match self.mode {
            Mode::Reversed => self.versions.len(),
            _ => 1,
        }
    }

    /// Stored objects in the order `{x_1, z_2, ...}` notation, e.g.
    /// `["x1", "z2", "x3"]`.
    pub fn storage_pattern(&self) -> Vec<String> {
        self.versions
            .iter()
            .map(|v| match (self.mode, v.stored_as) {
                (_, StoredAs::Full) => format!("x{}", v.version),
                (Mode::Reversed, StoredAs::Delta) => format!("z{}", v.version + 1),
                (_, StoredAs::Delta) => format!("z{}", v.version),
            })
            .collect()
    }

    /// Slots that must be decoded to rebuild `target`, in decode order.
    pub fn chain(&self, target: usize) -> Result<Vec<usize>> {
        let len = self.versions.len();
        if target == 0 || target > len {
            return Err(CodecError::VersionOutOfRange {
                version: target,
                len,
            });
        }
        Ok(match self.mode {
            Mode::Basic | Mode::Optimized => {
                let restart = (1..=target)
                    .rev()
                    .find(|&j| self.slot(j).stored_as == StoredAs::Full)
                    .expect("slot 1 is always full");
                (restart..=target).collect()
            }
            Mode::Reversed => {
                let restart = (target..=len)
                    .find(|&j| self.slot(j).stored_as == StoredAs::Full)
                    .expect("slot L is always full");
                (target..=restart).rev().collect()
            }
        })
    }

    fn check_placement(&self, placement: &PlacementMap, failures: &FailurePattern) -> Result<()> {
        if placement.n() != self.params.n || placement.slots() < self.versions.len() {
            return Err(CodecError::PlacementMismatch(format!(
                "placement covers {} slots of {} shares, archive has {} slots of {}",
                placement.slots(),
                placement.n(),
                self.versions.len(),
                self.params.n
            )));
        }
        if failures.len() != placement.node_count() {
            return Err(CodecError::PlacementMismatch(format!(
                "failure pattern over {} nodes, placement uses {}",
                failures.len(),
                placement.node_count()
            )));
        }
        Ok(())
    }

    fn plan_slot(
        &self,
        slot: usize,
        alive: &[usize],
        placement: &PlacementMap,
    ) -> Result<PlanStep> {
        let v = self.slot(slot);
        let k = self.params.k;
        let step = |path, shares: Vec<usize>| PlanStep {
            slot,
            stored_as: v.stored_as,
            path,
            nodes: shares.iter().map(|&s| placement.node_of(slot, s)).collect(),
            shares,
        };
        if v.stored_as == StoredAs::Delta {
            let gamma = v.weight;
            if gamma == 0 {
                return Ok(step(DecodePath::Zero, Vec::new()));
            }
            if self.params.sparse_threshold(gamma) {
                if let Some(rows) = self.sparse_subset(gamma, alive)? {
                    return Ok(step(DecodePath::Sparse { gamma }, rows));
                }
            }
        }
        if alive.len() < k {
            return Err(CodecError::Unrecoverable {
                slot,
                alive: alive.len(),
                need: k,
            });
        }
        Ok(step(DecodePath::Full, alive[..k].to_vec()))
    }

    // Lowest-indexed qualifying alive rows, parity rows first for
    // systematic codes.
    fn sparse_subset(&self, gamma: usize, alive: &[usize]) -> Result<Option<Vec<usize>>> {
        let usable = self.params.sparse_usable_rows(gamma);
        let mut candidates: Vec<usize> = alive
            .iter()
            .copied()
            .filter(|r| usable.contains(r))
            .collect();
        if self.params.systematic {
            candidates.sort_by_key(|&r| (r < self.params.k, r));
        }
        if candidates.len() < 2 * gamma {
            return Ok(None);
        }
        for rows in candidates.into_iter().combinations(2 * gamma) {
            if self.params.rows_support_sparse(&rows, gamma)? {
                return Ok(Some(rows));
            }
        }
        Ok(None)
    }

    /// Plans the reads needed to rebuild version `target` given a failure
    /// pattern over the placement's nodes.
    pub fn retrieval_plan(
        &self,
        target: usize,
        placement: &PlacementMap,
        failures: &FailurePattern,
    ) -> Result<RetrievalPlan> {
        self.check_placement(placement, failures)?;
        let chain = self.chain(target)?;
        let steps = chain
            .iter()
            .map(|&slot| {
                let alive: Vec<usize> = (0..self.params.n)
                    .filter(|&s| !failures.is_failed(placement.node_of(slot, s)))
                    .collect();
                self.plan_slot(slot, &alive, placement)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(RetrievalPlan {
            target,
            restart: chain[0],
            total_reads: steps.iter().map(PlanStep::reads).sum(),
            steps,
        })
    }

    /// Plans reading every version `1..=upto`; each stored object is read
    /// once.
    pub fn prefix_plan(
        &self,
        upto: usize,
        placement: &PlacementMap,
        failures: &FailurePattern,
    ) -> Result<RetrievalPlan> {
        self.check_placement(placement, failures)?;
        let mut slots: Vec<usize> = Vec::new();
        for target in 1..=upto {
            for slot in self.chain(target)? {
                if !slots.contains(&slot) {
                    slots.push(slot);
                }
            }
        }
        let steps = slots
            .iter()
            .map(|&slot| {
                let alive: Vec<usize> = (0..self.params.n)
                    .filter(|&s| !failures.is_failed(placement.node_of(slot, s)))
                    .collect();
                self.plan_slot(slot, &alive, placement)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(RetrievalPlan {
            target: upto,
            restart: slots[0],
            total_reads: steps.iter().map(PlanStep::reads).sum(),
            steps,
        })
    }

    /// Rebuilds version `target`, reading shares from `source`.
    pub fn retrieve(
        &self,
        target: usize,
        placement: &PlacementMap,
        failures: &FailurePattern,
        source: &impl ShareSource,
    ) -> Result<(GfMatrix, IoReport)> {
        let plan = self.retrieval_plan(target, placement, failures)?;
        let mut acc = GfMatrix::zeros(&self.params.field, self.params.k, self.stripe);
        let mut objects = Vec::with_capacity(plan.steps.len());
        for step in &plan.steps {
            let mut shares = Vec::with_capacity(step.shares.len());
            for &s in &step.shares {
                let symbols = source
                    .read_share(step.slot, s)?
                    .ok_or(CodecError::ShareErased {
                        slot: step.slot,
                        share: s,
                    })?;
                shares.push(Share::new(s, symbols));
            }
            let object = match step.path {
                DecodePath::Zero => GfMatrix::zeros(&self.params.field, self.params.k, self.stripe),
                DecodePath::Full => decode_full(&shares, &self.params)?,
                DecodePath::Sparse { gamma } => {
                    decode_sparse(&shares, gamma, &self.params, self.stripe)?
                }
            };
            acc = acc.add(&object)?;
            objects.push(ObjectRead {
                slot: step.slot,
                stored_as: step.stored_as,
                path: step.path,
                reads: shares.len(),
            });
        }
        let report = IoReport {
            target,
            restart: plan.restart,
            total: objects.iter().map(|o| o.reads).sum(),
            objects,
        };
        Ok((acc, report))
    }
}

/// Anything that can hand out the shares of stored objects.
pub trait ShareSource {
    /// `Ok(None)` means the share is erased.
    fn read_share(&self, slot: usize, share: usize) -> Result<Option<Vec<Symbol>>>;
}

impl ShareSource for VersionedArchive {
    fn read_share(&self, slot: usize, share: usize) -> Result<Option<Vec<Symbol>>> {
        Ok(self
            .versions
            .get(slot.wrapping_sub(1))
            .filter(|_| share < self.params.n)
            .map(|v| v.share(share).to_vec()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecodePath {
    /// k shares, matrix inversion (or the systematic shortcut).
    Full,
    /// 2 gamma shares, support enumeration.
    Sparse { gamma: usize },
    /// All-zero delta, nothing to read.
    Zero,
}

impl fmt::Display for DecodePath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DecodePath::Full => f.write_str("full"),
            DecodePath::Sparse { gamma } => write!(f, "sparse(gamma={gamma})"),
            DecodePath::Zero => f.write_str("zero"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlanStep {
    pub slot: usize,
    pub stored_as: StoredAs,
    pub path: DecodePath,
    /// Share (generator row) indices to read.
    pub shares: Vec<usize>,
    /// Node holding each share.
    pub nodes: Vec<usize>,
}

impl PlanStep {
    pub fn reads(&self) -> usize {
        self.shares.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RetrievalPlan {
    pub target: usize,
    /// First slot of the decode chain (the full object it starts from).
    pub restart: usize,
    pub steps: Vec<PlanStep>,
    pub total_reads: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObjectRead {
    pub slot: usize,
    pub stored_as: StoredAs,
    pub path: DecodePath,
    pub reads: usize,
}

/// Reads actually performed by [`VersionedArchive::retrieve`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IoReport {
    pub target: usize,
    pub restart: usize,
    pub objects: Vec<ObjectRead>,
    pub total: usize,
}

fn check_shares(shares: &[Share], params: &CodeParams) -> Result<usize> {
    let stripe = shares.first().map_or(0, |s| s.symbols.len());
    let mut seen = vec![false; params.n];
    for s in shares {
        if s.index >= params.n {
            return Err(CodecError::InvalidShares(format!(
                "share index {} out of range for n = {}",
                s.index, params.n
            )));
        }
        if std::mem::replace(&mut seen[s.index], true) {
            return Err(CodecError::InvalidShares(format!(
                "duplicate share index {}",
                s.index
            )));
        }
        if s.symbols.len() != stripe {
            return Err(CodecError::InvalidShares("shares differ in length".into()));
        }
        for &x in &s.symbols {
            params.field.element(x as u32)?;
        }
    }
    Ok(stripe)
}

fn stack_shares(shares: &[Share], params: &CodeParams, stripe: usize) -> Result<GfMatrix> {
    let data = shares
        .iter()
        .flat_map(|s| s.symbols.iter().copied())
        .collect();
    Ok(GfMatrix::new(&params.field, shares.len(), stripe, data)?)
}

/// Rebuilds a full object from at least `k` shares.
///
/// With a systematic code and all `k` systematic shares present the data is
/// returned directly. Otherwise the first `k` shares are used with the
/// inverse of their generator rows.
pub fn decode_full(shares: &[Share], params: &CodeParams) -> Result<GfMatrix> {
    let stripe = check_shares(shares, params)?;
    let k = params.k;
    if shares.len() < k {
        return Err(CodecError::InsufficientShares {
            have: shares.len(),
            need: k,
        });
    }
    if params.systematic {
        let mut rows: Vec<Option<&Share>> = vec![None; k];
        for s in shares.iter().filter(|s| s.index < k) {
            rows[s.index] = Some(s);
        }
        if rows.iter().all(Option::is_some) {
            let data = rows
                .into_iter()
                .flat_map(|s| s.expect("checked").symbols.iter().copied())
                .collect();
            return Ok(GfMatrix::new(&params.field, k, stripe, data)?);
        }
    }
    let chosen = &shares[..k];
    let indices: Vec<usize> = chosen.iter().map(|s| s.index).collect();
    let inverse = match params.generator.row_submatrix(&indices)?.invert() {
        Ok(inv) => inv,
        Err(LinalgError::Singular) => return Err(CodecError::Singular),
        Err(e) => return Err(e.into()),
    };
    Ok(inverse.mul(&stack_shares(chosen, params, stripe)?)?)
}

/// Recovers a `gamma`-sparse object from exactly `2 gamma` shares.
///
/// Every support of size `gamma` is tried in lexicographic order; the
/// `2 gamma x gamma` system restricted to a support has full column rank,
/// so the first consistent support yields the unique answer. `stripe` gives
/// the block length when `gamma` is zero and no shares are read.
pub fn decode_sparse(
    shares: &[Share],
    gamma: usize,
    params: &CodeParams,
    stripe: usize,
) -> Result<GfMatrix> {
    let got = check_shares(shares, params)?;
    if shares.len() != 2 * gamma {
        return Err(CodecError::InvalidShares(format!(
            "sparse decoding with gamma = {gamma} takes exactly {} shares, got {}",
            2 * gamma,
            shares.len()
        )));
    }
    let k = params.k;
    if gamma == 0 {
        return Ok(GfMatrix::zeros(&params.field, k, stripe));
    }
    if got != stripe {
        return Err(CodecError::InvalidShares(format!(
            "shares carry {got} symbols, expected {stripe}"
        )));
    }
    if 2 * gamma >= k {
        return Err(CodecError::InvalidShares(format!(
            "2 * gamma = {} must be below k = {k}",
            2 * gamma
        )));
    }
    let indices: Vec<usize> = shares.iter().map(|s| s.index).collect();
    if !params.rows_support_sparse(&indices, gamma)? {
        return Err(CodecError::UnusableSubset { gamma });
    }
    let sub = params.generator.row_submatrix(&indices)?;
    let y = stack_shares(shares, params, stripe)?;
    for support in (0..k).combinations(gamma) {
        let a = sub.col_submatrix(&support)?;
        let solution = match a.solve(&y) {
            Ok(Some(u)) => u,
            Ok(None) => continue,
            Err(LinalgError::Singular) => return Err(CodecError::UnusableSubset { gamma }),
            Err(e) => return Err(e.into()),
        };
        let mut z = GfMatrix::zeros(&params.field, k, stripe);
        for (i, &row) in support.iter().enumerate() {
            z.row_mut(row).copy_from_slice(solution.row(i));
        }
        return Ok(z);
    }
    Err(CodecError::Inconsistent { gamma })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::resilience::Placement;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn gf(w: u32) -> Field {
        Field::with_width(w).unwrap()
    }

    fn col(field: &Field, v: &[Symbol]) -> GfMatrix {
        GfMatrix::column(field, v).unwrap()
    }

    fn shares_of(codeword: &GfMatrix, rows: &[usize]) -> Vec<Share> {
        rows.iter()
            .map(|&r| Share::new(r, codeword.row(r).to_vec()))
            .collect()
    }

    fn random_sparse(
        field: &Field,
        k: usize,
        stripe: usize,
        gamma: usize,
        rng: &mut impl Rng,
    ) -> GfMatrix {
        let mut z = GfMatrix::zeros(field, k, stripe);
        let mut rows: Vec<usize> = (0..k).collect();
        for i in 0..gamma {
            let j = rng.random_range(i..k);
            rows.swap(i, j);
        }
        for &r in &rows[..gamma] {
            for c in 0..stripe {
                z.set(r, c, rng.random_range(1..field.order()) as Symbol);
            }
        }
        z
    }

    fn all_alive(archive: &VersionedArchive) -> (PlacementMap, FailurePattern) {
        let p = PlacementMap::new(Placement::Colocated, archive.params().n(), archive.len());
        let f = FailurePattern::none(p.node_count());
        (p, f)
    }

    #[test]
    fn params_validation() {
        let f = gf(8);
        assert!(CodeParams::cauchy(3, 3, &f, false).is_err());
        assert!(CodeParams::cauchy(3, 0, &f, false).is_err());
        let s = CodeParams::cauchy(6, 3, &f, true).unwrap();
        assert_eq!(
            s.generator().row_submatrix(&[0, 1, 2]).unwrap(),
            GfMatrix::identity(&f, 3)
        );
        // GF(4) cannot hold 6 + 3 distinct points
        assert!(matches!(
            CodeParams::cauchy(6, 3, &gf(2), false),
            Err(CodecError::Linalg(LinalgError::Capacity { .. }))
        ));
    }

    #[test]
    fn sparsity_examples() {
        let f = gf(10);
        assert_eq!(compute_sparsity(&col(&f, &[0, 0, 0])), 0);
        assert_eq!(compute_sparsity(&col(&f, &[777, 0, 0])), 1);
        assert_eq!(compute_sparsity(&col(&f, &[1, 2, 3, 4])), 4);
    }

    #[test]
    fn single_version_archive() {
        let f = gf(8);
        let p = CodeParams::cauchy(6, 3, &f, false).unwrap();
        let x = col(&f, &[1, 2, 3]);
        let a = encode_archive(std::slice::from_ref(&x), &p, Mode::Basic).unwrap();
        assert_eq!(a.len(), 1);
        assert_eq!(a.slot(1).codeword, p.encode(&x).unwrap());
        assert!(matches!(
            encode_archive(&[], &p, Mode::Basic),
            Err(CodecError::EmptyArchive)
        ));
    }

    #[test]
    fn identical_versions_give_zero_delta() {
        let f = gf(8);
        let p = CodeParams::cauchy(6, 3, &f, false).unwrap();
        let x = col(&f, &[9, 8, 7]);
        let a = encode_archive(&[x.clone(), x], &p, Mode::Basic).unwrap();
        let v = a.slot(2);
        assert_eq!(v.delta_gamma, Some(0));
        assert!(v.codeword.is_zero());
        let (pl, fl) = all_alive(&a);
        let plan = a.retrieval_plan(2, &pl, &fl).unwrap();
        assert_eq!(plan.total_reads, 3);
        assert_eq!(plan.steps[1].path, DecodePath::Zero);
    }

    #[test]
    fn first_symbol_change_is_one_sparse() {
        let f = gf(10);
        let p = CodeParams::cauchy(6, 3, &f, false).unwrap();
        let x1 = col(&f, &[100, 200, 300]);
        let x2 = col(&f, &[555, 200, 300]);
        let a = encode_archive(&[x1, x2], &p, Mode::Basic).unwrap();
        assert_eq!(a.slot(2).delta_gamma, Some(1));
        assert_eq!(a.storage_pattern(), ["x1", "z2"]);
    }

    fn versions_with_gammas(field: &Field, k: usize, gammas: &[usize], seed: u64) -> Vec<GfMatrix> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut current = GfMatrix::new(
            field,
            k,
            1,
            (0..k)
                .map(|_| rng.random_range(1..field.order()) as Symbol)
                .collect(),
        )
        .unwrap();
        let mut out = vec![current.clone()];
        for &g in gammas {
            current = current
                .add(&random_sparse(field, k, 1, g, &mut rng))
                .unwrap();
            out.push(current.clone());
        }
        out
    }

    #[test]
    fn optimized_storage_pattern() {
        let f = gf(8);
        let p = CodeParams::cauchy(20, 10, &f, false).unwrap();
        let versions = versions_with_gammas(&f, 10, &[3, 8, 3, 6], 1);
        let a = encode_archive(&versions, &p, Mode::Optimized).unwrap();
        assert_eq!(a.storage_pattern(), ["x1", "z2", "x3", "z4", "x5"]);
        let b = encode_archive(&versions, &p, Mode::Basic).unwrap();
        assert_eq!(b.storage_pattern(), ["x1", "z2", "z3", "z4", "z5"]);
        let r = encode_archive(&versions, &p, Mode::Reversed).unwrap();
        assert_eq!(r.storage_pattern(), ["z2", "z3", "z4", "z5", "x5"]);
        let gammas: Vec<_> = a.versions().iter().map(|v| v.delta_gamma).collect();
        assert_eq!(gammas, [None, Some(3), Some(8), Some(3), Some(6)]);
    }

    #[test]
    fn plan_costs_for_five_versions() {
        let f = gf(8);
        for systematic in [false, true] {
            let p = CodeParams::cauchy(20, 10, &f, systematic).unwrap();
            let versions = versions_with_gammas(&f, 10, &[3, 8, 3, 6], 2);
            let basic = encode_archive(&versions, &p, Mode::Basic).unwrap();
            let opt = encode_archive(&versions, &p, Mode::Optimized).unwrap();
            let (pl, fl) = all_alive(&basic);
            let eta = |a: &VersionedArchive| -> Vec<usize> {
                (1..=5)
                    .map(|l| a.retrieval_plan(l, &pl, &fl).unwrap().total_reads)
                    .collect()
            };
            assert_eq!(eta(&basic), [10, 16, 26, 32, 42]);
            assert_eq!(eta(&opt), [10, 16, 10, 16, 10]);
            assert_eq!(opt.prefix_plan(5, &pl, &fl).unwrap().total_reads, 42);
        }
    }

    #[test]
    fn decode_full_systematic_shortcut() {
        let f = gf(8);
        let p = CodeParams::cauchy(6, 3, &f, true).unwrap();
        let x = col(&f, &[4, 5, 6]);
        let c = p.encode(&x).unwrap();
        let shares = shares_of(&c, &[2, 0, 1]);
        assert_eq!(decode_full(&shares, &p).unwrap(), x);
    }

    #[test]
    fn decode_full_any_three_of_six() {
        let f = gf(10);
        for systematic in [false, true] {
            let p = CodeParams::cauchy(6, 3, &f, systematic).unwrap();
            let x = col(&f, &[1000, 3, 517]);
            let c = p.encode(&x).unwrap();
            let mut subsets = 0;
            for rows in (0..6).combinations(3) {
                assert_eq!(decode_full(&shares_of(&c, &rows), &p).unwrap(), x);
                subsets += 1;
            }
            assert_eq!(subsets, 20);
        }
    }

    #[test]
    fn decode_full_errors() {
        let f = gf(8);
        let p = CodeParams::cauchy(6, 3, &f, false).unwrap();
        let c = p.encode(&col(&f, &[1, 2, 3])).unwrap();
        assert_eq!(
            decode_full(&shares_of(&c, &[0, 4]), &p),
            Err(CodecError::InsufficientShares { have: 2, need: 3 })
        );
        let mut dup = shares_of(&c, &[0, 1, 2]);
        dup[2].index = 0;
        assert!(matches!(
            decode_full(&dup, &p),
            Err(CodecError::InvalidShares(_))
        ));
    }

    #[test]
    fn decode_sparse_one_sparse_from_any_pair() {
        let f = gf(10);
        let p = CodeParams::cauchy(6, 3, &f, false).unwrap();
        let z = col(&f, &[0x2a5, 0, 0]);
        let c = p.encode(&z).unwrap();
        for rows in (0..6).combinations(2) {
            assert_eq!(decode_sparse(&shares_of(&c, &rows), 1, &p, 1).unwrap(), z);
        }
    }

    #[test]
    fn decode_sparse_zero_gamma() {
        let f = gf(8);
        let p = CodeParams::cauchy(6, 3, &f, false).unwrap();
        let z = decode_sparse(&[], 0, &p, 4).unwrap();
        assert!(z.is_zero());
        assert_eq!((z.rows(), z.cols()), (3, 4));
    }

    #[test]
    fn decode_sparse_systematic_rejects_identity_rows() {
        let f = gf(8);
        let p = CodeParams::cauchy(6, 3, &f, true).unwrap();
        let c = p.encode(&col(&f, &[7, 0, 0])).unwrap();
        for rows in (0..6usize).combinations(2) {
            let r = decode_sparse(&shares_of(&c, &rows), 1, &p, 1);
            if rows.iter().all(|&i| i >= 3) {
                assert_eq!(r.unwrap(), col(&f, &[7, 0, 0]));
            } else {
                assert_eq!(r, Err(CodecError::UnusableSubset { gamma: 1 }));
            }
        }
    }

    #[test]
    fn decode_sparse_detects_wrong_gamma() {
        let f = gf(8);
        let p = CodeParams::cauchy(10, 5, &f, false).unwrap();
        let z = col(&f, &[1, 2, 3, 0, 0]);
        let c = p.encode(&z).unwrap();
        assert_eq!(
            decode_sparse(&shares_of(&c, &[0, 1]), 1, &p, 1),
            Err(CodecError::Inconsistent { gamma: 1 })
        );
    }

    #[test]
    fn decode_sparse_two_sparse_matches_full_decode() {
        let f = gf(8);
        let p = CodeParams::cauchy(10, 5, &f, false).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let z = random_sparse(&f, 5, 2, 2, &mut rng);
            let c = p.encode(&z).unwrap();
            let reference = decode_full(&shares_of(&c, &[5, 6, 7, 8, 9]), &p).unwrap();
            assert_eq!(reference, z);
            for rows in (0..10).combinations(4) {
                assert_eq!(decode_sparse(&shares_of(&c, &rows), 2, &p, 2).unwrap(), z);
            }
        }
    }

    #[test]
    fn systematic_prefers_parity_rows() {
        let f = gf(8);
        let p = CodeParams::cauchy(6, 3, &f, true).unwrap();
        let x1 = col(&f, &[1, 2, 3]);
        let x2 = col(&f, &[9, 2, 3]);
        let a = encode_archive(&[x1, x2.clone()], &p, Mode::Basic).unwrap();
        let (pl, fl) = all_alive(&a);
        let plan = a.retrieval_plan(2, &pl, &fl).unwrap();
        assert_eq!(plan.steps[0].shares, [0, 1, 2]);
        assert_eq!(plan.steps[1].shares, [3, 4]);
        assert_eq!(plan.total_reads, 5);
        let (got, report) = a.retrieve(2, &pl, &fl, &a).unwrap();
        assert_eq!(got, x2);
        assert_eq!(report.total, 5);
    }

    #[test]
    fn failures_force_full_reads_or_loss() {
        let f = gf(8);
        let p = CodeParams::cauchy(6, 3, &f, true).unwrap();
        let x1 = col(&f, &[1, 2, 3]);
        let x2 = col(&f, &[9, 2, 3]);
        let a = encode_archive(&[x1, x2.clone()], &p, Mode::Basic).unwrap();
        let pl = PlacementMap::new(Placement::Colocated, 6, 2);
        // two parity nodes down: the delta needs 3 reads
        let fl = FailurePattern::from_failed(6, &[3, 4]);
        let plan = a.retrieval_plan(2, &pl, &fl).unwrap();
        assert_eq!(plan.steps[1].path, DecodePath::Full);
        assert_eq!(plan.total_reads, 6);
        assert_eq!(a.retrieve(2, &pl, &fl, &a).unwrap().0, x2);
        // four down: n - k + 1 failures lose the anchor
        let fl = FailurePattern::from_failed(6, &[0, 1, 2, 3]);
        assert_eq!(
            a.retrieval_plan(2, &pl, &fl),
            Err(CodecError::Unrecoverable {
                slot: 1,
                alive: 2,
                need: 3
            })
        );
    }

    #[test]
    fn reversed_retrieval_walks_backwards() {
        let f = gf(8);
        let p = CodeParams::cauchy(8, 4, &f, false).unwrap();
        let versions = versions_with_gammas(&f, 4, &[1, 3, 1], 9);
        let a = encode_archive(&versions, &p, Mode::Reversed).unwrap();
        let (pl, fl) = all_alive(&a);
        assert_eq!(a.chain(1).unwrap(), [4, 3, 2, 1]);
        let plan = a.retrieval_plan(4, &pl, &fl).unwrap();
        assert_eq!(plan.total_reads, 4);
        // x_1 = x_4 + z_4 + z_3 + z_2: 4 + 2 + 4 + 2
        assert_eq!(a.retrieval_plan(1, &pl, &fl).unwrap().total_reads, 12);
        for (i, v) in versions.iter().enumerate() {
            assert_eq!(&a.retrieve(i + 1, &pl, &fl, &a).unwrap().0, v);
        }
    }

    #[test]
    fn version_out_of_range() {
        let f = gf(8);
        let p = CodeParams::cauchy(6, 3, &f, false).unwrap();
        let a = encode_archive(&[col(&f, &[1, 2, 3])], &p, Mode::Basic).unwrap();
        let (pl, fl) = all_alive(&a);
        assert!(matches!(
            a.retrieval_plan(2, &pl, &fl),
            Err(CodecError::VersionOutOfRange { version: 2, len: 1 })
        ));
        assert!(a.retrieval_plan(0, &pl, &fl).is_err());
    }

    #[test]
    fn sparse_result_independent_of_subset_choice() {
        let f = gf(8);
        for (n, k) in [(6, 3), (7, 5), (8, 5)] {
            let p = CodeParams::cauchy(n, k, &f, false).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(n as u64 * 31 + k as u64);
            for gamma in 1..k.div_ceil(2) {
                let z = random_sparse(&f, k, 1, gamma, &mut rng);
                let c = p.encode(&z).unwrap();
                let outputs: Vec<_> = (0..n)
                    .combinations(2 * gamma)
                    .map(|rows| decode_sparse(&shares_of(&c, &rows), gamma, &p, 1).unwrap())
                    .collect();
                assert!(outputs.iter().all(|o| o == &z));
            }
        }
    }

    #[test]
    fn systematic_rate_threshold() {
        let f = gf(8);
        // k/n <= 1/2: every gamma below k/2 is cheap
        let low = CodeParams::cauchy(10, 5, &f, true).unwrap();
        assert_eq!(low.delta_read_cost(1), 2);
        assert_eq!(low.delta_read_cost(2), 4);
        // k/n > 1/2: only 2 gamma <= n - k
        let high = CodeParams::cauchy(8, 6, &f, true).unwrap();
        assert_eq!(high.delta_read_cost(1), 2);
        assert_eq!(high.delta_read_cost(2), 6);
        let nonsys = CodeParams::cauchy(8, 6, &f, false).unwrap();
        assert_eq!(nonsys.delta_read_cost(2), 4);
        assert_eq!(nonsys.delta_read_cost(3), 6);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn round_trip_every_mode(
            k in 1usize..6,
            extra in 1usize..5,
            stripe in 1usize..4,
            len in 1usize..5,
            systematic: bool,
            mode_idx in 0usize..3,
            seed: u64,
        ) {
            let f = gf(8);
            let n = k + extra;
            let p = CodeParams::cauchy(n, k, &f, systematic).unwrap();
            let mode = [Mode::Basic, Mode::Optimized, Mode::Reversed][mode_idx];
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut current = GfMatrix::new(&f, k, stripe,
                (0..k * stripe).map(|_| rng.random::<u8>() as Symbol).collect()).unwrap();
            let mut versions = vec![current.clone()];
            for _ in 1..len {
                let g = rng.random_range(0..=k);
                current = current.add(&random_sparse(&f, k, stripe, g, &mut rng)).unwrap();
                versions.push(current.clone());
            }
            let a = encode_archive(&versions, &p, mode).unwrap();
            let pl = PlacementMap::new(Placement::Colocated, n, len);
            // fail up to n - k nodes, which never loses data
            let failed: Vec<usize> = (0..n).filter(|_| rng.random_bool(0.3)).take(n - k).collect();
            let fl = FailurePattern::from_failed(n, &failed);
            for (i, v) in versions.iter().enumerate() {
                let (got, report) = a.retrieve(i + 1, &pl, &fl, &a).unwrap();
                prop_assert_eq!(&got, v);
                let plan = a.retrieval_plan(i + 1, &pl, &fl).unwrap();
                prop_assert_eq!(report.total, plan.total_reads);
            }
        }
    }
}
