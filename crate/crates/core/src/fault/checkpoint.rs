//! Checkpoint records and their store.
//!
//! Binary layout (all integers little-endian):
//!
//! ```text
//! u8  schema version
//! u8  scalar width tag (4 = f32, 8 = f64)
//! u64 client_id, u64 round, u64 epoch
//! u32 n_dims, then n_dims x u64 layer widths
//! u64 n_params
//! n_params x T  model parameters
//! u64 adam step, n_params x T first moments, n_params x T second moments
//! n_params x T  best-so-far parameters
//! u8 has_best, f64 best validation accuracy
//! u64 epochs since improvement
//! u64 history length, then f64 per epoch
//! u8  stopped
//! u32 CRC-32 of every preceding byte
//! ```
//!
//! Files live at `<root>/client_<id>/ckpt_r<round>_e<epoch>` and are written
//! to a temporary name, synced, then renamed into place.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use super::FaultError;
use crate::nn::{unflatten_params, AdamState, TrainerSnapshot};
use crate::scalar::Scalar;

pub const SCHEMA_VERSION: u8 = 1;

/// Resumable training state of one client at an epoch boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointRecord<T> {
    pub client_id: u64,
    pub round: u64,
    pub state: TrainerSnapshot<T>,
}

impl<T: Scalar> CheckpointRecord<T> {
    pub fn epoch(&self) -> u64 {
        self.state.epoch as u64
    }

    pub fn encode(&self) -> Vec<u8> {
        let s = &self.state;
        let mut out = Vec::new();
        out.push(SCHEMA_VERSION);
        out.push(T::TAG);
        put_u64(&mut out, self.client_id);
        put_u64(&mut out, self.round);
        put_u64(&mut out, s.epoch as u64);
        let dims = s.model.layer_dims();
        out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
        for &d in dims {
            put_u64(&mut out, d as u64);
        }
        put_u64(&mut out, s.model.n_params() as u64);
        put_scalars(&mut out, s.model.params());
        put_u64(&mut out, s.adam.step);
        put_scalars(&mut out, &s.adam.m);
        put_scalars(&mut out, &s.adam.v);
        put_scalars(&mut out, &s.best_params);
        out.push(u8::from(s.best_accuracy.is_some()));
        out.extend_from_slice(&s.best_accuracy.unwrap_or(0.0).to_le_bytes());
        put_u64(&mut out, s.since_improvement as u64);
        put_u64(&mut out, s.history.len() as u64);
        for h in &s.history {
            out.extend_from_slice(&h.to_le_bytes());
        }
        out.push(u8::from(s.stopped));
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, FaultError> {
        let malformed = |m: &str| FaultError::Malformed(m.to_string());
        if bytes.len() < 6 {
            return Err(malformed("truncated"));
        }
        let (body, footer) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(footer.try_into().expect("4-byte footer"));
        if crc32fast::hash(body) != stored {
            return Err(FaultError::ChecksumMismatch("record".into()));
        }
        let mut r = Reader { buf: body, pos: 0 };
        let version = r.u8()?;
        if version != SCHEMA_VERSION {
            return Err(FaultError::Malformed(format!("unsupported schema version {version}")));
        }
        if r.u8()? != T::TAG {
            return Err(malformed("scalar width differs from the requested type"));
        }
        let client_id = r.u64()?;
        let round = r.u64()?;
        let epoch = r.u64()? as usize;
        let n_dims = r.u32()? as usize;
        let dims = (0..n_dims).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
        let n = r.u64()? as usize;
        let params = r.scalars::<T>(n)?;
        let model = unflatten_params(params, &dims).map_err(|e| FaultError::Malformed(e.to_string()))?;
        let step = r.u64()?;
        let m = r.scalars::<T>(n)?;
        let v = r.scalars::<T>(n)?;
        let best_params = r.scalars::<T>(n)?;
        let has_best = r.u8()? == 1;
        let best = r.f64()?;
        let since_improvement = r.u64()? as usize;
        let h = r.u64()? as usize;
        let history = (0..h).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
        let stopped = r.u8()? == 1;
        if r.pos != body.len() {
            return Err(malformed("trailing bytes"));
        }
        Ok(Self {
            client_id,
            round,
            state: TrainerSnapshot {
                model,
                adam: AdamState { m, v, step },
                epoch,
                best_params,
                best_accuracy: has_best.then_some(best),
                since_improvement,
                history,
                stopped,
            },
        })
    }
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_scalars<T: Scalar>(out: &mut Vec<u8>, values: &[T]) {
    out.reserve(values.len() * T::BYTES);
    for &v in values {
        v.write_le(out);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], FaultError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| FaultError::Malformed("truncated".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, FaultError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, FaultError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, FaultError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, FaultError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn scalars<T: Scalar>(&mut self, n: usize) -> Result<Vec<T>, FaultError> {
        let len = n
            .checked_mul(T::BYTES)
            .ok_or_else(|| FaultError::Malformed("length overflow".into()))?;
        Ok(self.take(len)?.chunks_exact(T::BYTES).map(T::read_le).collect())
    }
}

/// Location of a stored record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckpointRef {
    pub client_id: u64,
    pub round: u64,
    pub epoch: u64,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkippedRecord {
    pub name: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Restored<T> {
    pub record: CheckpointRecord<T>,
    /// Newer records that failed validation and were passed over.
    pub skipped: Vec<SkippedRecord>,
}

enum Backend {
    Dir(PathBuf),
    Memory(Mutex<BTreeMap<(u64, String), Vec<u8>>>),
}

/// Per-client checkpoint storage, either a directory tree or memory. Both
/// hold the same encoded bytes.
pub struct CheckpointStore {
    backend: Backend,
}

fn record_name(round: u64, epoch: u64) -> String {
    format!("ckpt_r{round}_e{epoch}")
}

fn parse_name(name: &str) -> Option<(u64, u64)> {
    let rest = name.strip_prefix("ckpt_r")?;
    let (r, e) = rest.split_once("_e")?;
    Some((r.parse().ok()?, e.parse().ok()?))
}

impl CheckpointStore {
    pub fn open(root: impl AsRef<Path>) -> Result<Self, FaultError> {
        let root = root.as_ref().to_path_buf();
        fs::create_dir_all(&root).map_err(|source| FaultError::Io {
            path: root.clone(),
            source,
        })?;
        Ok(Self {
            backend: Backend::Dir(root),
        })
    }

    pub fn in_memory() -> Self {
        Self {
            backend: Backend::Memory(Mutex::new(BTreeMap::new())),
        }
    }

    fn client_dir(root: &Path, client_id: u64) -> PathBuf {
        root.join(format!("client_{client_id}"))
    }

    pub fn save<T: Scalar>(&self, record: &CheckpointRecord<T>) -> Result<CheckpointRef, FaultError> {
        let name = record_name(record.round, record.epoch());
        let bytes = record.encode();
        match &self.backend {
            Backend::Dir(root) => {
                let dir = Self::client_dir(root, record.client_id);
                let io = |path: &Path| {
                    let path = path.to_path_buf();
                    move |source| FaultError::Io { path, source }
                };
                fs::create_dir_all(&dir).map_err(io(&dir))?;
                let tmp = dir.join(format!(".{name}.tmp"));
                let dst = dir.join(&name);
                let mut f = fs::File::create(&tmp).map_err(io(&tmp))?;
                f.write_all(&bytes).map_err(io(&tmp))?;
                f.sync_all().map_err(io(&tmp))?;
                drop(f);
                fs::rename(&tmp, &dst).map_err(io(&dst))?;
            }
            Backend::Memory(map) => {
                map.lock()
                    .expect("checkpoint store poisoned")
                    .insert((record.client_id, name.clone()), bytes);
            }
        }
        Ok(CheckpointRef {
            client_id: record.client_id,
            round: record.round,
            epoch: record.epoch(),
            name,
        })
    }

    /// Records of `client_id`, oldest first by `(round, epoch)`.
    pub fn list(&self, client_id: u64) -> Result<Vec<CheckpointRef>, FaultError> {
        let names: Vec<String> = match &self.backend {
            Backend::Dir(root) => {
                let dir = Self::client_dir(root, client_id);
                match fs::read_dir(&dir) {
                    Ok(entries) => entries
                        .filter_map(|e| e.ok())
                        .filter_map(|e| e.file_name().into_string().ok())
                        .collect(),
                    Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
                    Err(source) => return Err(FaultError::Io { path: dir, source }),
                }
            }
            Backend::Memory(map) => map
                .lock()
                .expect("checkpoint store poisoned")
                .keys()
                .filter(|(c, _)| *c == client_id)
                .map(|(_, n)| n.clone())
                .collect(),
        };
        let mut refs: Vec<CheckpointRef> = names
            .into_iter()
            .filter_map(|name| {
                let (round, epoch) = parse_name(&name)?;
                Some(CheckpointRef {
                    client_id,
                    round,
                    epoch,
                    name,
                })
            })
            .collect();
        refs.sort_by_key(|r| (r.round, r.epoch));
        Ok(refs)
    }

    pub fn read_bytes(&self, r: &CheckpointRef) -> Result<Vec<u8>, FaultError> {
        match &self.backend {
            Backend::Dir(root) => {
                let path = Self::client_dir(root, r.client_id).join(&r.name);
                fs::read(&path).map_err(|source| FaultError::Io { path, source })
            }
            Backend::Memory(map) => map
                .lock()
                .expect("checkpoint store poisoned")
                .get(&(r.client_id, r.name.clone()))
                .cloned()
                .ok_or(FaultError::NoCheckpoint(r.client_id)),
        }
    }

    /// Latest record of `client_id` whose checksum and contents validate.
    pub fn restore<T: Scalar>(&self, client_id: u64) -> Result<Restored<T>, FaultError> {
        let mut skipped = Vec::new();
        for r in self.list(client_id)?.into_iter().rev() {
            let decoded = self.read_bytes(&r).and_then(|b| CheckpointRecord::<T>::decode(&b));
            let reason = match decoded {
                Ok(rec) if rec.client_id == client_id && rec.round == r.round && rec.epoch() == r.epoch => {
                    return Ok(Restored { record: rec, skipped });
                }
                Ok(_) => "header does not match file name".to_string(),
                Err(FaultError::ChecksumMismatch(_)) => FaultError::ChecksumMismatch(r.name.clone()).to_string(),
                Err(e) => e.to_string(),
            };
            log::warn!("client {client_id}: skipping checkpoint {}: {reason}", r.name);
            skipped.push(SkippedRecord { name: r.name, reason });
        }
        Err(FaultError::NoCheckpoint(client_id))
    }

    /// Removes every record of `client_id`.
    pub fn clear(&self, client_id: u64) -> Result<(), FaultError> {
        match &self.backend {
            Backend::Dir(root) => {
                let dir = Self::client_dir(root, client_id);
                match fs::remove_dir_all(&dir) {
                    Ok(()) => Ok(()),
                    Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(()),
                    Err(source) => Err(FaultError::Io { path: dir, source }),
                }
            }
            Backend::Memory(map) => {
                map.lock()
                    .expect("checkpoint store poisoned")
                    .retain(|(c, _), _| *c != client_id);
                Ok(())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;
    use crate::nn::{LabeledSet, LocalTrainer, MlpModel, TrainConfig};
    use proptest::prelude::*;

    fn trained_state(epochs: usize) -> TrainerSnapshot<f64> {
        let m = MlpModel::<f64>::with_dims(&[2, 5, 3, 1], 1).unwrap();
        let x = Matrix::from_rows(&[[0.1, 0.9], [0.8, 0.2], [0.3, 0.7], [0.9, 0.1]]).unwrap();
        let set = LabeledSet::new(x, vec![0, 1, 0, 1]).unwrap();
        let cfg = TrainConfig {
            max_epochs: 10,
            seed: 3,
            ..Default::default()
        };
        let mut t = LocalTrainer::new(m.clone(), AdamState::for_model(&m), cfg).unwrap();
        for _ in 0..epochs {
            t.run_epoch(&set, &set).unwrap();
        }
        t.snapshot().clone()
    }

    fn record(round: u64, epochs: usize) -> CheckpointRecord<f64> {
        CheckpointRecord {
            client_id: 4,
            round,
            state: trained_state(epochs),
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let rec = record(2, 3);
        let bytes = rec.encode();
        assert_eq!(bytes[0], SCHEMA_VERSION);
        let back = CheckpointRecord::<f64>::decode(&bytes).unwrap();
        assert_eq!(back, rec);
        assert_eq!(back.encode(), bytes);
        assert!(matches!(
            CheckpointRecord::<f32>::decode(&bytes),
            Err(FaultError::Malformed(_))
        ));
    }

    #[test]
    fn flipped_byte_fails_checksum() {
        let mut bytes = record(1, 1).encode();
        bytes[40] ^= 0x10;
        assert!(matches!(
            CheckpointRecord::<f64>::decode(&bytes),
            Err(FaultError::ChecksumMismatch(_))
        ));
        assert!(CheckpointRecord::<f64>::decode(&bytes[..3]).is_err());
    }

    fn exercise(store: &CheckpointStore) {
        assert!(matches!(store.restore::<f64>(4), Err(FaultError::NoCheckpoint(4))));
        let early = record(1, 3);
        let late = record(1, 7);
        store.save(&early).unwrap();
        let r = store.save(&late).unwrap();
        assert_eq!(r.name, "ckpt_r1_e7");
        let got = store.restore::<f64>(4).unwrap();
        assert_eq!(got.record, late);
        assert!(got.skipped.is_empty());
        assert_eq!(store.list(4).unwrap().len(), 2);
        assert!(store.restore::<f64>(5).is_err());
    }

    #[test]
    fn memory_store_latest_wins() {
        exercise(&CheckpointStore::in_memory());
    }

    #[test]
    fn directory_store_latest_wins_and_skips_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let store = CheckpointStore::open(dir.path()).unwrap();
        exercise(&store);

        let path = dir.path().join("client_4").join("ckpt_r1_e7");
        let mut bytes = fs::read(&path).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0xff;
        fs::write(&path, bytes).unwrap();
        let got = store.restore::<f64>(4).unwrap();
        assert_eq!(got.record.epoch(), 3);
        assert_eq!(got.skipped.len(), 1);
        assert_eq!(got.skipped[0].name, "ckpt_r1_e7");
        assert!(got.skipped[0].reason.contains("checksum"));

        // no temporary files survive a save
        let names: Vec<_> = fs::read_dir(dir.path().join("client_4")).unwrap().map(|e| e.unwrap().file_name()).collect();
        assert!(names.iter().all(|n| !n.to_string_lossy().ends_with(".tmp")));

        store.clear(4).unwrap();
        assert!(store.list(4).unwrap().is_empty());
    }

    #[test]
    fn later_round_beats_higher_epoch() {
        let store = CheckpointStore::in_memory();
        store.save(&record(1, 7)).unwrap();
        store.save(&record(2, 1)).unwrap();
        let got = store.restore::<f64>(4).unwrap();
        assert_eq!((got.record.round, got.record.epoch()), (2, 1));
    }

    proptest! {
        #[test]
        fn arbitrary_parameters_round_trip(
            params in prop::collection::vec(any::<f64>(), 9),
            step in any::<u64>(),
            hist in prop::collection::vec(0.0f64..=1.0, 0..5),
        ) {
            let model = unflatten_params(params.clone(), &[2, 2, 1]).unwrap();
            let state = TrainerSnapshot {
                adam: AdamState { m: params.clone(), v: params.iter().map(|p| p * 2.0).collect(), step },
                best_params: params.iter().rev().copied().collect(),
                model,
                epoch: hist.len(),
                best_accuracy: hist.first().copied(),
                since_improvement: 1,
                history: hist,
                stopped: step % 2 == 0,
            };
            let rec = CheckpointRecord { client_id: 9, round: 3, state };
            let bytes = rec.encode();
            let back = CheckpointRecord::<f64>::decode(&bytes).unwrap();
            // NaN payloads compare by bits
            prop_assert_eq!(back.encode(), bytes);
        }
    }
}
