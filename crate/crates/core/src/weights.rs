//! Named-tensor weight store, the manifest derived from a [`ModelConfig`],
//! seeded random initialization and the `MVTW` binary format.
//!
//! File layout (little-endian):
//!
//! ```text
//! "MVTW"  u32 version=1  u32 count
//! count × { u32 name_len, name (UTF-8), u8 dtype (0 = f32), u8 rank, rank × u32 dims, f32 payload }
//! ```

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::ModelConfig;
use crate::error::{Result, WeightError};
use crate::model::MvtModel;
use crate::tensor::{Tensor, MAX_RANK};

pub const MAGIC: [u8; 4] = *b"MVTW";
pub const VERSION: u32 = 1;
const DTYPE_F32: u8 = 0;

/// Role of a parameter, used for initialization and for parameter accounting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    Weight { fan_in: usize },
    Bias { fan_in: usize },
    NormScale,
    NormShift,
    /// Batch-norm running mean; a buffer, not a learned parameter.
    RunningMean,
    /// Batch-norm running variance; a buffer, not a learned parameter.
    RunningVar,
}

impl ParamKind {
    pub fn is_learnable(self) -> bool {
        !matches!(self, ParamKind::RunningMean | ParamKind::RunningVar)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub kind: ParamKind,
}

impl ManifestEntry {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

/// Every tensor a model of a given configuration expects, in canonical order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    /// Learnable parameter count (batch-norm running statistics excluded).
    pub fn parameter_count(&self) -> usize {
        self.entries
            .iter()
            .filter(|e| e.kind.is_learnable())
            .map(ManifestEntry::numel)
            .sum()
    }

    /// Elements stored in a weight file, buffers included.
    pub fn element_count(&self) -> usize {
        self.entries.iter().map(ManifestEntry::numel).sum()
    }

    /// Learnable parameter count of entries whose name starts with `prefix`.
    pub fn parameter_count_under(&self, prefix: &str) -> usize {
        self.entries
            .iter()
            .filter(|e| e.kind.is_learnable() && e.name.starts_with(prefix))
            .map(ManifestEntry::numel)
            .sum()
    }

    pub fn get(&self, name: &str) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.name == name)
    }
}

/// Supplies (or records) named parameters while a model is assembled.
pub trait ParamSource {
    fn param(&mut self, name: &str, shape: &[usize], kind: ParamKind) -> Result<Tensor>;
}

/// Hierarchical name prefix over a [`ParamSource`].
pub struct Scope<'a> {
    source: &'a mut dyn ParamSource,
    prefix: String,
}

impl<'a> Scope<'a> {
    pub fn root(source: &'a mut dyn ParamSource) -> Self {
        Self {
            source,
            prefix: String::new(),
        }
    }

    pub fn sub(&mut self, name: impl std::fmt::Display) -> Scope<'_> {
        let prefix = if self.prefix.is_empty() {
            name.to_string()
        } else {
            format!("{}.{name}", self.prefix)
        };
        Scope {
            source: &mut *self.source,
            prefix,
        }
    }

    pub fn get(&mut self, leaf: &str, shape: &[usize], kind: ParamKind) -> Result<Tensor> {
        let name = if self.prefix.is_empty() {
            leaf.to_string()
        } else {
            format!("{}.{leaf}", self.prefix)
        };
        self.source.param(&name, shape, kind)
    }
}

/// Records the requested names and hands back placeholder tensors.
#[derive(Default)]
struct Recorder {
    entries: Vec<ManifestEntry>,
}

impl ParamSource for Recorder {
    fn param(&mut self, name: &str, shape: &[usize], kind: ParamKind) -> Result<Tensor> {
        self.entries.push(ManifestEntry {
            name: name.to_string(),
            shape: shape.to_vec(),
            kind,
        });
        let fill = match kind {
            ParamKind::NormScale | ParamKind::RunningVar => 1.0,
            _ => 0.0,
        };
        Tensor::full(shape, fill)
    }
}

/// Canonical manifest of a model configuration.
pub fn build_manifest(cfg: &ModelConfig) -> Result<Manifest> {
    let mut rec = Recorder::default();
    MvtModel::assemble(cfg, &mut rec)?;
    Ok(Manifest {
        entries: rec.entries,
    })
}

/// Ordered `name → tensor` map.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightStore {
    tensors: IndexMap<String, Tensor>,
}

impl WeightStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<(), WeightError> {
        let name = name.into();
        if self.tensors.contains_key(&name) {
            return Err(WeightError::Duplicate(name));
        }
        self.tensors.insert(name, tensor);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn element_count(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    /// Checks that the store holds exactly the manifest's tensors with matching shapes.
    pub fn conform(&self, manifest: &Manifest) -> Result<(), WeightError> {
        for e in &manifest.entries {
            match self.tensors.get(&e.name) {
                None => return Err(WeightError::Missing(e.name.clone())),
                Some(t) if t.shape() != e.shape.as_slice() => {
                    return Err(WeightError::ShapeMismatch {
                        name: e.name.clone(),
                        expected: e.shape.clone(),
                        found: t.shape().to_vec(),
                    })
                }
                Some(_) => {}
            }
        }
        if self.tensors.len() != manifest.entries.len() {
            let known: HashSet<&str> = manifest.entries.iter().map(|e| e.name.as_str()).collect();
            if let Some(extra) = self.tensors.keys().find(|k| !known.contains(k.as_str())) {
                return Err(WeightError::Unknown(extra.clone()));
            }
        }
        Ok(())
    }

    /// FNV-1a digest over names, shapes and raw payload bits.
    pub fn fingerprint(&self) -> u64 {
        let mut h = Fnv::default();
        for (name, t) in &self.tensors {
            h.write(name.as_bytes());
            for &d in t.shape() {
                h.write(&(d as u64).to_le_bytes());
            }
            for v in t.data() {
                h.write(&v.to_bits().to_le_bytes());
            }
        }
        h.0
    }
}

pub(crate) struct Fnv(pub u64);

impl Default for Fnv {
    fn default() -> Self {
        Fnv(0xcbf2_9ce4_8422_2325)
    }
}

impl Fnv {
    pub fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x0100_0000_01b3);
        }
    }
}

/// Pulls tensors from a store during assembly.
pub(crate) struct StoreSource<'a> {
    pub store: &'a WeightStore,
}

impl ParamSource for StoreSource<'_> {
    fn param(&mut self, name: &str, shape: &[usize], _kind: ParamKind) -> Result<Tensor> {
        let t = self
            .store
            .get(name)
            .ok_or_else(|| WeightError::Missing(name.to_string()))?;
        if t.shape() != shape {
            return Err(WeightError::ShapeMismatch {
                name: name.to_string(),
                expected: shape.to_vec(),
                found: t.shape().to_vec(),
            }
            .into());
        }
        Ok(t.clone())
    }
}

/// Seeded parameter generator.
///
/// Weights are drawn from `U(−√(3/fan_in), √(3/fan_in))` (unit-variance
/// fan-in scaling), biases from `U(−1/√fan_in, 1/√fan_in)`. Norm scales are
/// 1, shifts 0, running means 0 and running variances 1, unless
/// `random_norms` is set, in which case they are drawn from
/// `U(0.5, 1.5)`, `U(−0.5, 0.5)`, `U(−0.5, 0.5)` and `U(0.5, 2)`.
pub struct RandomSource {
    rng: ChaCha8Rng,
    pub random_norms: bool,
}

impl RandomSource {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            random_norms: false,
        }
    }

    pub fn with_random_norms(seed: u64) -> Self {
        Self {
            random_norms: true,
            ..Self::new(seed)
        }
    }

    fn uniform(&mut self, n: usize, lo: f32, hi: f32) -> Vec<f32> {
        (0..n).map(|_| self.rng.gen_range(lo..=hi)).collect()
    }
}

impl ParamSource for RandomSource {
    fn param(&mut self, _name: &str, shape: &[usize], kind: ParamKind) -> Result<Tensor> {
        let n = shape.iter().product();
        let data = match (kind, self.random_norms) {
            (ParamKind::Weight { fan_in }, _) => {
                let b = (3.0 / fan_in as f64).sqrt() as f32;
                self.uniform(n, -b, b)
            }
            (ParamKind::Bias { fan_in }, _) => {
                let b = (1.0 / fan_in as f64).sqrt() as f32;
                self.uniform(n, -b, b)
            }
            (ParamKind::NormScale | ParamKind::RunningVar, false) => vec![1.0; n],
            (ParamKind::NormShift | ParamKind::RunningMean, false) => vec![0.0; n],
            (ParamKind::NormScale, true) => self.uniform(n, 0.5, 1.5),
            (ParamKind::NormShift | ParamKind::RunningMean, true) => self.uniform(n, -0.5, 0.5),
            (ParamKind::RunningVar, true) => self.uniform(n, 0.5, 2.0),
        };
        Tensor::new(shape, data)
    }
}

/// Seeded initialization in manifest order; see [`RandomSource`].
pub fn random_init(cfg: &ModelConfig, seed: u64) -> Result<WeightStore> {
    let manifest = build_manifest(cfg)?;
    let mut source = RandomSource::new(seed);
    let mut store = WeightStore::new();
    for e in &manifest.entries {
        let t = source.param(&e.name, &e.shape, e.kind)?;
        store.insert(e.name.clone(), t)?;
    }
    Ok(store)
}

pub fn encode(store: &WeightStore) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + store.element_count() * 4);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(store.len() as u32).to_le_bytes());
    for (name, t) in store.iter() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(DTYPE_F32);
        out.push(t.rank() as u8);
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: impl FnOnce() -> String) -> Result<&'a [u8], WeightError> {
        if self.buf.len() - self.pos < n {
            return Err(WeightError::Truncated(what()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: impl FnOnce() -> String) -> Result<u32, WeightError> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }

    fn u8(&mut self, what: impl FnOnce() -> String) -> Result<u8, WeightError> {
        Ok(self.take(1, what)?[0])
    }
}

pub fn decode(bytes: &[u8]) -> Result<WeightStore, WeightError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let magic: [u8; 4] = r
        .take(4, || "header".into())?
        .try_into()
        .expect("4 bytes");
    if magic != MAGIC {
        return Err(WeightError::BadMagic(magic));
    }
    let version = r.u32(|| "header".into())?;
    if version != VERSION {
        return Err(WeightError::UnsupportedVersion(version));
    }
    let count = r.u32(|| "header".into())? as usize;
    let mut store = WeightStore::new();
    for index in 0..count {
        let entry = || format!("entry {index}");
        let len = r.u32(entry)? as usize;
        let name = std::str::from_utf8(r.take(len, entry)?)
            .map_err(|_| WeightError::InvalidName { index })?
            .to_string();
        let named = || format!("entry {index} (`{name}`)");
        let dtype = r.u8(named)?;
        if dtype != DTYPE_F32 {
            return Err(WeightError::UnsupportedDtype { name, dtype });
        }
        let rank = r.u8(named)? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32(named)? as usize);
        }
        if rank == 0 || rank > MAX_RANK || shape.contains(&0) {
            return Err(WeightError::InvalidShape { name, shape });
        }
        let n = shape.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
        let bytes_needed = n.and_then(|n| n.checked_mul(4));
        let payload = match bytes_needed {
            Some(b) => r.take(b, named)?,
            None => return Err(WeightError::Truncated(named())),
        };
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        let t = Tensor::new(&shape, data).map_err(|_| WeightError::InvalidShape {
            name: name.clone(),
            shape: shape.clone(),
        })?;
        store.insert(name, t)?;
    }
    if r.pos != bytes.len() {
        return Err(WeightError::TrailingBytes(bytes.len() - r.pos));
    }
    Ok(store)
}

pub fn save_weights(store: &WeightStore, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let tmp = path.with_extension("mvtw.tmp");
    fs::write(&tmp, encode(store))?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Reads a weight file without checking it against any manifest.
pub fn load_weights(path: impl AsRef<Path>) -> Result<WeightStore> {
    let bytes = fs::read(path)?;
    Ok(decode(&bytes)?)
}

/// Reads a weight file and checks it against the manifest of `cfg`.
pub fn load_for_config(path: impl AsRef<Path>, cfg: &ModelConfig) -> Result<WeightStore> {
    let store = load_weights(path)?;
    store.conform(&build_manifest(cfg)?)?;
    Ok(store)
}
