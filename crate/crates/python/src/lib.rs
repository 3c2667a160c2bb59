//! Python bindings. Objects cross the boundary as lists of rows (one list of
//! symbols per block) or as `bytes` for the on-disk store.

use std::path::PathBuf;

use pyo3::exceptions::{PyException, PyIOError, PyValueError};
use pyo3::prelude::*;

use secvault::codec::{self, CodeParams, CodecError, Mode, VersionedArchive};
use secvault::gf::{Field, Symbol};
use secvault::linalg::GfMatrix;
use secvault::resilience::{self, FailureModel, FailurePattern, Placement, PlacementMap, Variant};
use secvault::sim::{self, SparsityPmf, TrialConfig};
use secvault::store::{self, StoreError, StoredArchive};

pyo3::create_exception!(secvault, UnrecoverableError, PyException);

fn codec_err(e: CodecError) -> PyErr {
    match e {
        CodecError::Unrecoverable { .. }
        | CodecError::InsufficientShares { .. }
        | CodecError::ShareErased { .. } => UnrecoverableError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn store_err(e: StoreError) -> PyErr {
    match e {
        StoreError::Codec(c) => codec_err(c),
        StoreError::Io { .. }
        | StoreError::NotFound(_)
        | StoreError::Conflict(_)
        | StoreError::Corrupt { .. }
        | StoreError::Manifest(_) => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse<T: std::str::FromStr<Err = String>>(s: &str) -> PyResult<T> {
    s.parse().map_err(PyValueError::new_err)
}

fn model(p: f64) -> PyResult<FailureModel> {
    FailureModel::new(p).map_err(value_err)
}

fn to_matrix(field: &Field, rows: Vec<Vec<Symbol>>) -> PyResult<GfMatrix> {
    GfMatrix::from_rows(field, &rows).map_err(value_err)
}

fn to_rows(m: &GfMatrix) -> Vec<Vec<Symbol>> {
    (0..m.rows()).map(|r| m.row(r).to_vec()).collect()
}

#[pyclass(name = "Field", frozen)]
struct PyField {
    inner: Field,
}

#[pymethods]
impl PyField {
    #[new]
    #[pyo3(signature = (width = 8, poly = None))]
    fn new(width: u32, poly: Option<u32>) -> PyResult<Self> {
        let inner = match poly {
            Some(p) => Field::new(width, p),
            None => Field::with_width(width),
        }
        .map_err(value_err)?;
        Ok(PyField { inner })
    }

    #[getter]
    fn width(&self) -> u32 {
        self.inner.width()
    }

    #[getter]
    fn poly(&self) -> u32 {
        self.inner.poly()
    }

    fn add(&self, a: u32, b: u32) -> PyResult<Symbol> {
        let f = &self.inner;
        Ok(f.add(
            f.element(a).map_err(value_err)?,
            f.element(b).map_err(value_err)?,
        ))
    }

    fn mul(&self, a: u32, b: u32) -> PyResult<Symbol> {
        let f = &self.inner;
        Ok(f.mul(
            f.element(a).map_err(value_err)?,
            f.element(b).map_err(value_err)?,
        ))
    }

    fn inv(&self, a: u32) -> PyResult<Symbol> {
        let f = &self.inner;
        f.inv(f.element(a).map_err(value_err)?).map_err(value_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Field(width={}, poly={:#x})",
            self.inner.width(),
            self.inner.poly()
        )
    }
}

#[pyclass(name = "Code", frozen)]
struct PyCode {
    inner: CodeParams,
}

#[pymethods]
impl PyCode {
    #[new]
    #[pyo3(signature = (n, k, width = 8, systematic = false))]
    fn new(n: usize, k: usize, width: u32, systematic: bool) -> PyResult<Self> {
        let field = Field::with_width(width).map_err(value_err)?;
        let inner = CodeParams::cauchy(n, k, &field, systematic).map_err(codec_err)?;
        Ok(PyCode { inner })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn k(&self) -> usize {
        self.inner.k()
    }

    #[getter]
    fn systematic(&self) -> bool {
        self.inner.is_systematic()
    }

    fn generator(&self) -> Vec<Vec<Symbol>> {
        to_rows(self.inner.generator())
    }

    /// Shares of a `k x stripe` object, one row per share.
    fn encode(&self, object: Vec<Vec<Symbol>>) -> PyResult<Vec<Vec<Symbol>>> {
        let m = to_matrix(self.inner.field(), object)?;
        Ok(to_rows(&self.inner.encode(&m).map_err(codec_err)?))
    }

    /// Decodes from `k` shares given as `(index, symbols)` pairs.
    fn decode_full(&self, shares: Vec<(usize, Vec<Symbol>)>) -> PyResult<Vec<Vec<Symbol>>> {
        let shares: Vec<codec::Share> = shares
            .into_iter()
            .map(|(i, s)| codec::Share::new(i, s))
            .collect();
        Ok(to_rows(
            &codec::decode_full(&shares, &self.inner).map_err(codec_err)?,
        ))
    }

    /// Decodes a `gamma`-sparse object from `2 gamma` shares.
    fn decode_sparse(
        &self,
        shares: Vec<(usize, Vec<Symbol>)>,
        gamma: usize,
    ) -> PyResult<Vec<Vec<Symbol>>> {
        let stripe = shares.first().map_or(1, |s| s.1.len());
        let shares: Vec<codec::Share> = shares
            .into_iter()
            .map(|(i, s)| codec::Share::new(i, s))
            .collect();
        let m = codec::decode_sparse(&shares, gamma, &self.inner, stripe).map_err(codec_err)?;
        Ok(to_rows(&m))
    }

    fn delta_read_cost(&self, gamma: usize) -> usize {
        self.inner.delta_read_cost(gamma)
    }

    fn __repr__(&self) -> String {
        format!(
            "Code(n={}, k={}, width={}, systematic={})",
            self.inner.n(),
            self.inner.k(),
            self.inner.field().width(),
            if self.inner.is_systematic() {
                "True"
            } else {
                "False"
            }
        )
    }
}

/// In-memory versioned archive.
#[pyclass(name = "Archive")]
struct PyArchive {
    inner: VersionedArchive,
    placement: Placement,
}

#[pymethods]
impl PyArchive {
    #[new]
    #[pyo3(signature = (code, versions, mode = "basic", placement = "colocated"))]
    fn new(
        code: &PyCode,
        versions: Vec<Vec<Vec<Symbol>>>,
        mode: &str,
        placement: &str,
    ) -> PyResult<Self> {
        let field = code.inner.field();
        let objs = versions
            .into_iter()
            .map(|v| to_matrix(field, v))
            .collect::<PyResult<Vec<_>>>()?;
        let inner =
            codec::encode_archive(&objs, &code.inner, parse::<Mode>(mode)?).map_err(codec_err)?;
        Ok(PyArchive {
            inner,
            placement: parse(placement)?,
        })
    }

    fn push(&mut self, version: Vec<Vec<Symbol>>) -> PyResult<()> {
        let m = to_matrix(self.inner.params().field(), version)?;
        self.inner.push(&m).map_err(codec_err)?;
        Ok(())
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn storage_pattern(&self) -> Vec<String> {
        self.inner.storage_pattern()
    }

    /// Sparsity of each delta, `None` for the first version.
    fn delta_gammas(&self) -> Vec<Option<usize>> {
        self.inner
            .versions()
            .iter()
            .map(|v| v.delta_gamma)
            .collect()
    }

    fn node_count(&self) -> usize {
        self.map().node_count()
    }

    /// Reads needed for `version` with the given nodes failed.
    #[pyo3(signature = (version, failed = Vec::new()))]
    fn read_cost(&self, version: usize, failed: Vec<usize>) -> PyResult<usize> {
        let map = self.map();
        let pattern = self.pattern(&map, &failed)?;
        Ok(self
            .inner
            .retrieval_plan(version, &map, &pattern)
            .map_err(codec_err)?
            .total_reads)
    }

    /// Returns `(object, reads)`.
    #[pyo3(signature = (version, failed = Vec::new()))]
    fn retrieve(&self, version: usize, failed: Vec<usize>) -> PyResult<(Vec<Vec<Symbol>>, usize)> {
        let map = self.map();
        let pattern = self.pattern(&map, &failed)?;
        let (m, report) = self
            .inner
            .retrieve(version, &map, &pattern, &self.inner)
            .map_err(codec_err)?;
        Ok((to_rows(&m), report.total))
    }
}

impl PyArchive {
    fn map(&self) -> PlacementMap {
        PlacementMap::new(self.placement, self.inner.params().n(), self.inner.len())
    }

    fn pattern(&self, map: &PlacementMap, failed: &[usize]) -> PyResult<FailurePattern> {
        if let Some(bad) = failed.iter().find(|&&f| f >= map.node_count()) {
            return Err(PyValueError::new_err(format!("node {bad} does not exist")));
        }
        Ok(FailurePattern::from_failed(map.node_count(), failed))
    }
}

/// Archive stored on disk.
#[pyclass(name = "StoredArchive")]
struct PyStoredArchive {
    inner: StoredArchive,
}

#[pymethods]
impl PyStoredArchive {
    /// Encodes equal-length byte strings into `<root>/<id>`.
    #[staticmethod]
    #[pyo3(signature = (root, id, objects, code, mode = "basic", placement = "colocated"))]
    fn create(
        root: PathBuf,
        id: &str,
        objects: Vec<Vec<u8>>,
        code: &PyCode,
        mode: &str,
        placement: &str,
    ) -> PyResult<Self> {
        let inner = store::encode_bytes(
            &objects,
            &code.inner,
            parse(mode)?,
            parse(placement)?,
            &root,
            id,
        )
        .map_err(store_err)?;
        Ok(PyStoredArchive { inner })
    }

    #[staticmethod]
    fn open(root: PathBuf, id: &str) -> PyResult<Self> {
        Ok(PyStoredArchive {
            inner: StoredArchive::open(&root, id).map_err(store_err)?,
        })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn append(&mut self, object: Vec<u8>) -> PyResult<()> {
        self.inner.append(&object).map_err(store_err)?;
        Ok(())
    }

    fn manifest(&self) -> PyResult<String> {
        self.inner.manifest().to_toml().map_err(store_err)
    }

    fn node_count(&self) -> usize {
        self.inner.placement_map().node_count()
    }

    /// Returns `(bytes, reads)`.
    #[pyo3(signature = (version, failed = Vec::new()))]
    fn retrieve(&self, version: usize, failed: Vec<usize>) -> PyResult<(Vec<u8>, usize)> {
        let nodes = self.node_count();
        if let Some(bad) = failed.iter().find(|&&f| f >= nodes) {
            return Err(PyValueError::new_err(format!("node {bad} does not exist")));
        }
        let pattern = FailurePattern::from_failed(nodes, &failed);
        let (bytes, report) = self
            .inner
            .retrieve_bytes(version, &pattern)
            .map_err(store_err)?;
        Ok((bytes, report.total))
    }
}

fn code(n: usize, k: usize, width: u32, systematic: bool) -> PyResult<CodeParams> {
    Ok(PyCode::new(n, k, width, systematic)?.inner)
}

/// `(patterns, mds, sparse_extra, handled)` for a delta of sparsity `gamma`.
#[pyfunction]
#[pyo3(signature = (n, k, gamma, systematic = false, width = 8))]
fn census(
    n: usize,
    k: usize,
    gamma: usize,
    systematic: bool,
    width: u32,
) -> PyResult<(u64, u64, u64, u64)> {
    let c = resilience::census(&code(n, k, width, systematic)?, gamma).map_err(value_err)?;
    Ok((
        c.total_patterns,
        c.recoverable_mds,
        c.recoverable_sparse_extra,
        c.total_handled,
    ))
}

/// Probability of losing a full object.
#[pyfunction]
#[pyo3(signature = (n, k, p, width = 8))]
fn loss_prob_full(n: usize, k: usize, p: f64, width: u32) -> PyResult<f64> {
    Ok(resilience::loss_prob_full(
        &code(n, k, width, false)?,
        model(p)?,
    ))
}

/// Probability of losing a `gamma`-sparse delta.
#[pyfunction]
#[pyo3(signature = (n, k, gamma, p, systematic = false, width = 8))]
fn loss_prob_delta(
    n: usize,
    k: usize,
    gamma: usize,
    p: f64,
    systematic: bool,
    width: u32,
) -> PyResult<f64> {
    let params = code(n, k, width, systematic)?;
    if systematic {
        resilience::loss_prob_delta_sys(&params, gamma, model(p)?).map_err(value_err)
    } else {
        Ok(resilience::loss_prob_delta_nonsys(
            &params,
            gamma,
            model(p)?,
        ))
    }
}

/// Probability that every version survives.
#[pyfunction]
#[pyo3(signature = (n, k, deltas, p, placement = "colocated", variant = "nonsys", width = 8))]
fn archive_retention(
    n: usize,
    k: usize,
    deltas: Vec<usize>,
    p: f64,
    placement: &str,
    variant: &str,
    width: u32,
) -> PyResult<f64> {
    let variant = match variant {
        "nonsys" => Variant::NonSystematic,
        "sys" => Variant::Systematic,
        "nondiff" => Variant::NonDifferential,
        other => return Err(PyValueError::new_err(format!("unknown variant {other:?}"))),
    };
    let params = code(n, k, width, variant == Variant::Systematic)?;
    resilience::archive_retention(&params, &deltas, parse(placement)?, model(p)?, variant)
        .map_err(value_err)
}

/// `(expected reads, reduction %)` for two versions.
#[pyfunction]
#[pyo3(signature = (pmf, n, k, systematic = false))]
fn expected_io_pair(pmf: &str, n: usize, k: usize, systematic: bool) -> PyResult<(f64, f64)> {
    let params = code(n, k, 8, systematic)?;
    let pmf = SparsityPmf::parse(pmf, k).map_err(value_err)?;
    let e = sim::expected_io_pair(&pmf, &params).map_err(value_err)?;
    Ok((e.expected, e.percent))
}

/// `(mu, std_error, survivors)` from a seeded Monte-Carlo run.
#[pyfunction]
#[pyo3(signature = (n, k, gamma, p, trials = 100_000, seed = 1, systematic = false))]
fn monte_carlo_mu(
    n: usize,
    k: usize,
    gamma: usize,
    p: f64,
    trials: u64,
    seed: u64,
    systematic: bool,
) -> PyResult<(f64, f64, u64)> {
    let cfg = TrialConfig {
        params: code(n, k, 8, systematic)?,
        model: model(p)?,
        trials,
        seed,
    };
    let est = sim::monte_carlo_mu(&cfg, gamma).map_err(value_err)?;
    Ok((est.mu, est.std_error, est.survivors))
}

/// Exact expected mu by enumerating failure patterns.
#[pyfunction]
#[pyo3(signature = (n, k, gamma, p, systematic = false))]
fn exact_mu(n: usize, k: usize, gamma: usize, p: f64, systematic: bool) -> PyResult<f64> {
    Ok(sim::exact_mu(&code(n, k, 8, systematic)?, gamma, model(p)?)
        .map_err(value_err)?
        .0)
}

/// Basic cumulative, optimized per-version and baseline cumulative reads.
#[pyfunction]
fn scenario_l5() -> PyResult<(Vec<usize>, Vec<usize>, Vec<usize>)> {
    let s = sim::scenario_l5().map_err(value_err)?;
    Ok((
        s.rows.iter().map(|r| r.basic_cumulative).collect(),
        s.rows.iter().map(|r| r.optimized_version).collect(),
        s.rows.iter().map(|r| r.nondiff_cumulative).collect(),
    ))
}

#[pymodule]
#[pyo3(name = "secvault")]
fn secvault_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyField>()?;
    m.add_class::<PyCode>()?;
    m.add_class::<PyArchive>()?;
    m.add_class::<PyStoredArchive>()?;
    m.add(
        "UnrecoverableError",
        m.py().get_type::<UnrecoverableError>(),
    )?;
    m.add_function(wrap_pyfunction!(census, m)?)?;
    m.add_function(wrap_pyfunction!(loss_prob_full, m)?)?;
    m.add_function(wrap_pyfunction!(loss_prob_delta, m)?)?;
    m.add_function(wrap_pyfunction!(archive_retention, m)?)?;
    m.add_function(wrap_pyfunction!(expected_io_pair, m)?)?;
    m.add_function(wrap_pyfunction!(monte_carlo_mu, m)?)?;
    m.add_function(wrap_pyfunction!(exact_mu, m)?)?;
    m.add_function(wrap_pyfunction!(scenario_l5, m)?)?;
    Ok(())
}
