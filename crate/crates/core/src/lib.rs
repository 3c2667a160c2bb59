//! Delta-based erasure coding of versioned objects over GF(2^w).
//!
//! Versions of a fixed-size object are split into `k` blocks and encoded
//! with an `(n, k)` Cauchy MDS code. After the first version, the archive
//! stores the encoded difference between consecutive versions; when only a
//! few blocks changed, that difference can be decoded from `2 gamma` shares
//! instead of `k`.

pub mod codec;
pub mod gf;
pub mod linalg;
pub mod resilience;
pub mod sim;
pub mod store;

pub use codec::{
    decode_full, decode_sparse, encode_archive, CodeParams, CodecError, DecodePath, IoReport, Mode,
    RetrievalPlan, Share, ShareSource, StoredAs, VersionedArchive,
};
pub use gf::{Field, GfError, Symbol};
pub use linalg::{GfMatrix, LinalgError};
pub use resilience::{
    archive_retention, census, Census, FailureModel, FailurePattern, LossPolynomial, Placement,
    PlacementMap, ResilienceError, Variant,
};
pub use sim::{
    expected_io_latest, expected_io_pair, monte_carlo_mu, scenario_l5, SimError, SparsityPmf,
    TrialConfig,
};
pub use store::{encode_bytes, write_archive, Manifest, StoreError, StoredArchive};
