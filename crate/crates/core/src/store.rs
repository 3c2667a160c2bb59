//! On-disk archives.
//!
//! ```text
//! <root>/<id>/manifest            TOML
//! <root>/<id>/node-<i>/v<j>.share header + little-endian symbols
//! ```
//!
//! Share header (64 bytes, little-endian):
//!
//! | offset | size | field                       |
//! |--------|------|-----------------------------|
//! | 0      | 8    | magic `SECSHARE`            |
//! | 8      | 2    | format version              |
//! | 10     | 1    | symbol width `w`            |
//! | 11     | 1    | reserved, zero              |
//! | 12     | 32   | archive id, zero padded     |
//! | 44     | 4    | version index                |
//! | 48     | 4    | node index                  |
//! | 52     | 4    | share (generator row) index |
//! | 56     | 4    | symbol count                |
//! | 60     | 4    | CRC-32 of the payload       |
//!
//! The payload holds `symbol count * ceil(w / 8)` bytes.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{
    CodeParams, CodecError, EncodedVersion, IoReport, Mode, ShareSource, StoredAs, VersionedArchive,
};
use crate::gf::{Field, GfError, Symbol};
use crate::linalg::{GfMatrix, LinalgError};
use crate::resilience::{FailurePattern, Placement, PlacementMap};

pub const MAGIC: &[u8; 8] = b"SECSHARE";
pub const FORMAT_VERSION: u16 = 1;
pub const HEADER_LEN: usize = 64;
pub const MAX_ID_LEN: usize = 32;
pub const MANIFEST_FILE: &str = "manifest";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("invalid archive id {0:?}: use 1 to 32 characters from [A-Za-z0-9._-]")]
    InvalidId(String),
    #[error("archive {0:?} already exists")]
    Conflict(String),
    #[error("archive {0:?} not found")]
    NotFound(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("bad manifest: {0}")]
    Manifest(String),
    #[error("corrupt share {path}: {reason}")]
    Corrupt { path: PathBuf, reason: String },
    #[error("object is {got} bytes but the archive holds {expected}-byte objects")]
    SizeMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Gf(#[from] GfError),
}

pub type Result<T, E = StoreError> = std::result::Result<T, E>;

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn validate_id(id: &str) -> Result<()> {
    let ok = !id.is_empty()
        && id.len() <= MAX_ID_LEN
        && !id.starts_with('.')
        && id
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || matches!(b, b'.' | b'_' | b'-'));
    if ok {
        Ok(())
    } else {
        Err(StoreError::InvalidId(id.to_string()))
    }
}

/// Symbols needed per block to hold `byte_len` bytes in a `k`-block object.
pub fn stripe_for(byte_len: usize, width: u32, k: usize) -> usize {
    let symbols = (byte_len * 8).div_ceil(width as usize);
    symbols.div_ceil(k).max(1)
}

/// Packs bytes into `width`-bit symbols, least significant bit first.
pub fn pack_bytes(bytes: &[u8], width: u32) -> Vec<Symbol> {
    let w = width as usize;
    let mut out = Vec::with_capacity((bytes.len() * 8).div_ceil(w));
    let (mut acc, mut bits) = (0u32, 0usize);
    for &b in bytes {
        acc |= u32::from(b) << bits;
        bits += 8;
        while bits >= w {
            out.push((acc & ((1 << w) - 1)) as Symbol);
            acc >>= w;
            bits -= w;
        }
    }
    if bits > 0 {
        out.push(acc as Symbol);
    }
    out
}

/// Inverse of [`pack_bytes`], truncated to `byte_len` bytes.
pub fn unpack_symbols(symbols: &[Symbol], width: u32, byte_len: usize) -> Vec<u8> {
    let w = width as usize;
    let mut out = Vec::with_capacity(byte_len);
    let (mut acc, mut bits) = (0u32, 0usize);
    for &s in symbols {
        acc |= u32::from(s) << bits;
        bits += w;
        while bits >= 8 && out.len() < byte_len {
            out.push(acc as u8);
            acc >>= 8;
            bits -= 8;
        }
        if out.len() == byte_len {
            break;
        }
    }
    out
}

/// Lays `bytes` out as a `k x stripe` object, block after block.
pub fn object_from_bytes(field: &Field, k: usize, stripe: usize, bytes: &[u8]) -> Result<GfMatrix> {
    let mut symbols = pack_bytes(bytes, field.width());
    if symbols.len() > k * stripe {
        return Err(StoreError::SizeMismatch {
            expected: k * stripe * field.width() as usize / 8,
            got: bytes.len(),
        });
    }
    symbols.resize(k * stripe, 0);
    Ok(GfMatrix::new(field, k, stripe, symbols)?)
}

pub fn object_to_bytes(object: &GfMatrix, byte_len: usize) -> Vec<u8> {
    unpack_symbols(object.data(), object.field().width(), byte_len)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VersionRecord {
    pub index: usize,
    /// Sparsity of the delta from the previous version.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_gamma: Option<usize>,
    /// Nonzero blocks of the stored object.
    pub weight: usize,
    pub stored_as: StoredAs,
    /// CRC-32 of each share payload, by share index.
    pub checksums: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u16,
    pub id: String,
    pub n: usize,
    pub k: usize,
    pub width: u32,
    pub poly: u32,
    pub systematic: bool,
    pub h: Vec<Symbol>,
    pub f: Vec<Symbol>,
    pub mode: Mode,
    pub placement: Placement,
    pub stripe: usize,
    /// Length of every stored object in bytes.
    pub byte_len: usize,
    pub versions: Vec<VersionRecord>,
}

impl Manifest {
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| StoreError::Manifest(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Manifest> {
        let m: Manifest = toml::from_str(text).map_err(|e| StoreError::Manifest(e.to_string()))?;
        m.validate()?;
        Ok(m)
    }

    fn validate(&self) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(StoreError::Manifest(format!(
                "unsupported format version {}",
                self.format_version
            )));
        }
        validate_id(&self.id)?;
        if self.versions.is_empty() {
            return Err(StoreError::Manifest("no versions".into()));
        }
        for (i, v) in self.versions.iter().enumerate() {
            if v.index != i + 1 {
                return Err(StoreError::Manifest(format!(
                    "version records must run 1..L, found {} at position {}",
                    v.index,
                    i + 1
                )));
            }
            if v.checksums.len() != self.n {
                return Err(StoreError::Manifest(format!(
                    "version {} lists {} checksums for n = {}",
                    v.index,
                    v.checksums.len(),
                    self.n
                )));
            }
        }
        Ok(())
    }

    pub fn field(&self) -> Result<Field> {
        Ok(Field::new(self.width, self.poly)?)
    }

    /// Rebuilds the code exactly from the stored points.
    pub fn params(&self) -> Result<CodeParams> {
        Ok(CodeParams::with_points(
            self.n,
            self.k,
            &self.field()?,
            self.systematic,
            self.h.clone(),
            self.f.clone(),
        )?)
    }

    pub fn placement_map(&self) -> PlacementMap {
        PlacementMap::new(self.placement, self.n, self.versions.len())
    }

    fn record_for(v: &EncodedVersion) -> VersionRecord {
        VersionRecord {
            index: v.version,
            delta_gamma: v.delta_gamma,
            weight: v.weight,
            stored_as: v.stored_as,
            checksums: (0..v.codeword.rows())
                .map(|s| crc32fast::hash(&payload_bytes(v.share(s), v.codeword.field().width())))
                .collect(),
        }
    }
}

fn payload_bytes(symbols: &[Symbol], width: u32) -> Vec<u8> {
    if width <= 8 {
        symbols.iter().map(|&s| s as u8).collect()
    } else {
        symbols.iter().flat_map(|s| s.to_le_bytes()).collect()
    }
}

fn payload_symbols(bytes: &[u8], width: u32) -> Vec<Symbol> {
    if width <= 8 {
        bytes.iter().map(|&b| Symbol::from(b)).collect()
    } else {
        bytes
            .chunks_exact(2)
            .map(|c| Symbol::from_le_bytes([c[0], c[1]]))
            .collect()
    }
}

/// Header fields of a share file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShareHeader {
    pub format_version: u16,
    pub width: u32,
    pub archive_id: String,
    pub version: u32,
    pub node: u32,
    pub share: u32,
    pub symbol_count: u32,
    pub crc: u32,
}

impl ShareHeader {
    pub fn encode(&self) -> [u8; HEADER_LEN] {
        let mut h = [0u8; HEADER_LEN];
        h[0..8].copy_from_slice(MAGIC);
        h[8..10].copy_from_slice(&self.format_version.to_le_bytes());
        h[10] = self.width as u8;
        let id = self.archive_id.as_bytes();
        h[12..12 + id.len()].copy_from_slice(id);
        h[44..48].copy_from_slice(&self.version.to_le_bytes());
        h[48..52].copy_from_slice(&self.node.to_le_bytes());
        h[52..56].copy_from_slice(&self.share.to_le_bytes());
        h[56..60].copy_from_slice(&self.symbol_count.to_le_bytes());
        h[60..64].copy_from_slice(&self.crc.to_le_bytes());
        h
    }

    pub fn decode(bytes: &[u8]) -> Result<ShareHeader, String> {
        if bytes.len() < HEADER_LEN {
            return Err(format!(
                "file is {} bytes, shorter than the header",
                bytes.len()
            ));
        }
        if &bytes[0..8] != MAGIC {
            return Err("bad magic".into());
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let id_bytes = &bytes[12..44];
        let end = id_bytes.iter().position(|&b| b == 0).unwrap_or(MAX_ID_LEN);
        let archive_id = std::str::from_utf8(&id_bytes[..end])
            .map_err(|_| "archive id is not utf-8".to_string())?
            .to_string();
        Ok(ShareHeader {
            format_version: u16::from_le_bytes([bytes[8], bytes[9]]),
            width: u32::from(bytes[10]),
            archive_id,
            version: u32_at(44),
            node: u32_at(48),
            share: u32_at(52),
            symbol_count: u32_at(56),
            crc: u32_at(60),
        })
    }
}

/// Writes `data` to `path` through a temporary file and a rename.
fn write_atomic(path: &Path, data: &[u8]) -> Result<()> {
    let tmp = path.with_extension(format!("tmp-{}", std::process::id()));
    let mut file = fs::File::create(&tmp).map_err(io_err(&tmp))?;
    file.write_all(data).map_err(io_err(&tmp))?;
    file.sync_all().map_err(io_err(&tmp))?;
    drop(file);
    fs::rename(&tmp, path).map_err(io_err(path))
}

fn node_dir(dir: &Path, node: usize) -> PathBuf {
    dir.join(format!("node-{node}"))
}

fn share_path(dir: &Path, version: usize, node: usize) -> PathBuf {
    node_dir(dir, node).join(format!("v{version}.share"))
}

fn write_slot(dir: &Path, id: &str, placement: &PlacementMap, v: &EncodedVersion) -> Result<()> {
    let width = v.codeword.field().width();
    for s in 0..v.codeword.rows() {
        let node = placement.node_of(v.version, s);
        let payload = payload_bytes(v.share(s), width);
        let header = ShareHeader {
            format_version: FORMAT_VERSION,
            width,
            archive_id: id.to_string(),
            version: v.version as u32,
            node: node as u32,
            share: s as u32,
            symbol_count: v.codeword.cols() as u32,
            crc: crc32fast::hash(&payload),
        };
        let nd = node_dir(dir, node);
        fs::create_dir_all(&nd).map_err(io_err(&nd))?;
        let mut bytes = header.encode().to_vec();
        bytes.extend_from_slice(&payload);
        write_atomic(&share_path(dir, v.version, node), &bytes)?;
    }
    Ok(())
}

/// Writes a freshly encoded archive under `<root>/<id>`. `byte_len` is the
/// length of each original object; `None` means the full object capacity.
pub fn write_archive(
    archive: &VersionedArchive,
    root: &Path,
    id: &str,
    placement: Placement,
    byte_len: Option<usize>,
) -> Result<StoredArchive> {
    validate_id(id)?;
    let params = archive.params();
    let field = params.field();
    let capacity = params.k() * archive.stripe() * field.width() as usize / 8;
    let byte_len = byte_len.unwrap_or(capacity);
    if stripe_for(byte_len, field.width(), params.k()) > archive.stripe() {
        return Err(StoreError::SizeMismatch {
            expected: capacity,
            got: byte_len,
        });
    }
    fs::create_dir_all(root).map_err(io_err(root))?;
    let dir = root.join(id);
    if dir.exists() {
        return Err(StoreError::Conflict(id.to_string()));
    }
    // build under a hidden name, then move into place in one rename
    let staging = root.join(format!(".{id}.partial-{}", std::process::id()));
    if staging.exists() {
        fs::remove_dir_all(&staging).map_err(io_err(&staging))?;
    }
    fs::create_dir(&staging).map_err(io_err(&staging))?;
    let map = PlacementMap::new(placement, params.n(), archive.len());
    for v in archive.versions() {
        write_slot(&staging, id, &map, v)?;
    }
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        id: id.to_string(),
        n: params.n(),
        k: params.k(),
        width: field.width(),
        poly: field.poly(),
        systematic: params.is_systematic(),
        h: params.row_points().to_vec(),
        f: params.col_points().to_vec(),
        mode: archive.mode(),
        placement,
        stripe: archive.stripe(),
        byte_len,
        versions: archive
            .versions()
            .iter()
            .map(Manifest::record_for)
            .collect(),
    };
    write_atomic(&staging.join(MANIFEST_FILE), manifest.to_toml()?.as_bytes())?;
    if dir.exists() {
        let _ = fs::remove_dir_all(&staging);
        return Err(StoreError::Conflict(id.to_string()));
    }
    fs::rename(&staging, &dir).map_err(io_err(&dir))?;
    StoredArchive::open(root, id)
}

/// Encodes byte objects of equal length and writes them as a new archive.
pub fn encode_bytes(
    objects: &[Vec<u8>],
    params: &CodeParams,
    mode: Mode,
    placement: Placement,
    root: &Path,
    id: &str,
) -> Result<StoredArchive> {
    let first = objects.first().ok_or(CodecError::EmptyArchive)?;
    if let Some(bad) = objects.iter().find(|o| o.len() != first.len()) {
        return Err(StoreError::SizeMismatch {
            expected: first.len(),
            got: bad.len(),
        });
    }
    let stripe = stripe_for(first.len(), params.field().width(), params.k());
    let matrices = objects
        .iter()
        .map(|o| object_from_bytes(params.field(), params.k(), stripe, o))
        .collect::<Result<Vec<_>>>()?;
    let archive = crate::codec::encode_archive(&matrices, params, mode)?;
    write_archive(&archive, root, id, placement, Some(first.len()))
}

/// A share as read from a node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeShare {
    pub node: usize,
    pub share: usize,
    /// `None` when the node holds no readable file for it.
    pub symbols: Option<Vec<Symbol>>,
}

/// An archive opened from disk.
#[derive(Debug, Clone)]
pub struct StoredArchive {
    dir: PathBuf,
    manifest: Manifest,
    params: CodeParams,
}

impl StoredArchive {
    pub fn open(root: &Path, id: &str) -> Result<StoredArchive> {
        validate_id(id)?;
        let dir = root.join(id);
        let path = dir.join(MANIFEST_FILE);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                return Err(StoreError::NotFound(id.to_string()))
            }
            Err(e) => return Err(io_err(&path)(e)),
        };
        let manifest = Manifest::from_toml(&text)?;
        if manifest.id != id {
            return Err(StoreError::Manifest(format!(
                "manifest names archive {:?}, opened as {id:?}",
                manifest.id
            )));
        }
        let params = manifest.params()?;
        Ok(StoredArchive {
            dir,
            manifest,
            params,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn params(&self) -> &CodeParams {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.manifest.versions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.manifest.versions.is_empty()
    }

    pub fn placement_map(&self) -> PlacementMap {
        self.manifest.placement_map()
    }

    pub fn share_path(&self, version: usize, node: usize) -> PathBuf {
        share_path(&self.dir, version, node)
    }

    /// Reads one share, checking header and checksum. A missing file or
    /// node directory is reported as `Ok(None)`.
    pub fn read_share_file(&self, version: usize, share: usize) -> Result<Option<Vec<Symbol>>> {
        let node = self.placement_map().node_of(version, share);
        let path = self.share_path(version, node);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(io_err(&path)(e)),
        };
        let corrupt = |reason: String| StoreError::Corrupt {
            path: path.clone(),
            reason,
        };
        let header = ShareHeader::decode(&bytes).map_err(corrupt)?;
        let m = &self.manifest;
        let expect = [
            (
                "format version",
                u32::from(header.format_version),
                u32::from(FORMAT_VERSION),
            ),
            ("width", header.width, m.width),
            ("version", header.version, version as u32),
            ("node", header.node, node as u32),
            ("share", header.share, share as u32),
            ("symbol count", header.symbol_count, m.stripe as u32),
        ];
        for (name, got, want) in expect {
            if got != want {
                return Err(corrupt(format!("header {name} is {got}, expected {want}")));
            }
        }
        if header.archive_id != m.id {
            return Err(corrupt(format!(
                "belongs to archive {:?}",
                header.archive_id
            )));
        }
        let payload = &bytes[HEADER_LEN..];
        let sym_bytes = if m.width <= 8 { 1 } else { 2 };
        if payload.len() != m.stripe * sym_bytes {
            return Err(corrupt(format!(
                "payload is {} bytes, expected {}",
                payload.len(),
                m.stripe * sym_bytes
            )));
        }
        let crc = crc32fast::hash(payload);
        if crc != header.crc || crc != m.versions[version - 1].checksums[share] {
            return Err(corrupt("checksum mismatch".into()));
        }
        let symbols = payload_symbols(payload, m.width);
        if symbols.iter().any(|&s| u32::from(s) >= 1 << m.width) {
            return Err(corrupt("symbol outside the field".into()));
        }
        Ok(Some(symbols))
    }

    /// Reads the shares of `version` held by `nodes`. Nodes that hold no
    /// share of this version are skipped.
    pub fn read_shares(&self, version: usize, nodes: &[usize]) -> Result<Vec<NodeShare>> {
        if version == 0 || version > self.len() {
            return Err(CodecError::VersionOutOfRange {
                version,
                len: self.len(),
            }
            .into());
        }
        let map = self.placement_map();
        let mut out = Vec::new();
        for share in 0..self.manifest.n {
            let node = map.node_of(version, share);
            if nodes.contains(&node) {
                out.push(NodeShare {
                    node,
                    share,
                    symbols: self.read_share_file(version, share)?,
                });
            }
        }
        Ok(out)
    }

    /// Nodes whose directory is missing.
    pub fn missing_nodes(&self) -> Vec<usize> {
        (0..self.placement_map().node_count())
            .filter(|&node| !node_dir(&self.dir, node).is_dir())
            .collect()
    }

    /// Metadata view used for planning; share data stays on disk.
    fn skeleton(&self) -> Result<VersionedArchive> {
        let zero = GfMatrix::zeros(self.params.field(), self.manifest.n, self.manifest.stripe);
        let versions = self
            .manifest
            .versions
            .iter()
            .map(|r| EncodedVersion {
                version: r.index,
                stored_as: r.stored_as,
                delta_gamma: r.delta_gamma,
                weight: r.weight,
                codeword: zero.clone(),
            })
            .collect();
        Ok(VersionedArchive::from_parts(
            self.params.clone(),
            self.manifest.mode,
            versions,
        )?)
    }

    /// Rebuilds `version` with `failures` plus any node found missing on
    /// disk treated as failed.
    pub fn retrieve(
        &self,
        version: usize,
        failures: &FailurePattern,
    ) -> Result<(GfMatrix, IoReport)> {
        let skeleton = self.skeleton()?;
        let map = self.placement_map();
        if failures.len() != map.node_count() {
            return Err(CodecError::PlacementMismatch(format!(
                "failure pattern covers {} nodes, archive uses {}",
                failures.len(),
                map.node_count()
            ))
            .into());
        }
        let mut failed = failures.clone();
        for node in self.missing_nodes() {
            failed.fail(node);
        }
        loop {
            match skeleton.retrieve(version, &map, &failed, self) {
                // a single share file can vanish without its node: fail the
                // node and plan again
                Err(CodecError::ShareErased { slot, share }) => {
                    failed.fail(map.node_of(slot, share));
                }
                Err(CodecError::ShareRead {
                    slot,
                    share,
                    reason,
                }) => {
                    return Err(StoreError::Corrupt {
                        path: self.share_path(slot, map.node_of(slot, share)),
                        reason,
                    })
                }
                other => return Ok(other?),
            }
        }
    }

    pub fn retrieve_bytes(
        &self,
        version: usize,
        failures: &FailurePattern,
    ) -> Result<(Vec<u8>, IoReport)> {
        let (object, report) = self.retrieve(version, failures)?;
        Ok((object_to_bytes(&object, self.manifest.byte_len), report))
    }

    /// Appends a version. Needs every stored object of the current chain to
    /// be readable.
    pub fn append(&mut self, bytes: &[u8]) -> Result<&VersionRecord> {
        if bytes.len() != self.manifest.byte_len {
            return Err(StoreError::SizeMismatch {
                expected: self.manifest.byte_len,
                got: bytes.len(),
            });
        }
        let len = self.len();
        let nodes = self.placement_map().node_count();
        let (latest, _) = self.retrieve(len, &FailurePattern::none(nodes))?;
        let mut archive = self.skeleton()?;
        archive.set_latest(latest)?;
        let next = object_from_bytes(
            self.params.field(),
            self.manifest.k,
            self.manifest.stripe,
            bytes,
        )?;
        archive.push(&next)?;
        let mut manifest = self.manifest.clone();
        let map = PlacementMap::new(manifest.placement, manifest.n, len + 1);
        // reversed mode also rewrites the previous slot as a backward delta
        let first_changed = if manifest.mode == Mode::Reversed {
            len
        } else {
            len + 1
        };
        manifest.versions.truncate(first_changed - 1);
        for v in &archive.versions()[first_changed - 1..] {
            write_slot(&self.dir, &manifest.id, &map, v)?;
            manifest.versions.push(Manifest::record_for(v));
        }
        write_atomic(
            &self.dir.join(MANIFEST_FILE),
            manifest.to_toml()?.as_bytes(),
        )?;
        self.manifest = manifest;
        Ok(self.manifest.versions.last().expect("just appended"))
    }
}

impl ShareSource for StoredArchive {
    fn read_share(&self, slot: usize, share: usize) -> Result<Option<Vec<Symbol>>, CodecError> {
        self.read_share_file(slot, share)
            .map_err(|e| CodecError::ShareRead {
                slot,
                share,
                reason: e.to_string(),
            })
    }
}
