//! Versioned binary key blobs and their hex sidecars.
//!
//! Layout: magic `LVKB`, version `u16`, kind `u8`, then the payload.
//! Table key: 16 bytes. Family key: family id `u32` + 16 bytes. View key
//! set: family id `u32`, tag length `u8`, predicate count `u32`, then per
//! predicate a `u32` count of `(u32 length + value bytes, 16-byte key)`.

use std::path::{Path, PathBuf};

use zeroize::Zeroizing;

use crate::crypto::{SymKey, KEY_LEN};
use crate::error::{BackendError, Result};

const MAGIC: &[u8; 4] = b"LVKB";
const VERSION: u16 = 1;

/// Keys for one view: per predicate, the wildcard values and their keys.
#[derive(Clone, PartialEq, Eq)]
pub struct ViewKeySet {
    pub family_id: u32,
    pub tag_len: usize,
    pub keys: Vec<Vec<(Vec<u8>, SymKey)>>,
}

impl ViewKeySet {
    pub fn key_count(&self) -> usize {
        self.keys.iter().map(Vec::len).sum()
    }
}

impl std::fmt::Debug for ViewKeySet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ViewKeySet")
            .field("family_id", &self.family_id)
            .field("tag_len", &self.tag_len)
            .field("keys_per_predicate", &self.keys.iter().map(Vec::len).collect::<Vec<_>>())
            .finish()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum KeyBlob {
    Table(SymKey),
    Family { family_id: u32, key: SymKey },
    View(ViewKeySet),
}

impl KeyBlob {
    pub fn kind(&self) -> &'static str {
        match self {
            KeyBlob::Table(_) => "table",
            KeyBlob::Family { .. } => "family",
            KeyBlob::View(_) => "view",
        }
    }

    pub fn to_bytes(&self) -> Zeroizing<Vec<u8>> {
        let mut out = Zeroizing::new(Vec::new());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_be_bytes());
        match self {
            KeyBlob::Table(k) => {
                out.push(1);
                out.extend_from_slice(k.as_bytes());
            }
            KeyBlob::Family { family_id, key } => {
                out.push(2);
                out.extend_from_slice(&family_id.to_be_bytes());
                out.extend_from_slice(key.as_bytes());
            }
            KeyBlob::View(set) => {
                out.push(3);
                out.extend_from_slice(&set.family_id.to_be_bytes());
                out.push(set.tag_len as u8);
                out.extend_from_slice(&(set.keys.len() as u32).to_be_bytes());
                for list in &set.keys {
                    out.extend_from_slice(&(list.len() as u32).to_be_bytes());
                    for (value, key) in list {
                        out.extend_from_slice(&(value.len() as u32).to_be_bytes());
                        out.extend_from_slice(value);
                        out.extend_from_slice(key.as_bytes());
                    }
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Cursor(bytes);
        if r.take(4)? != MAGIC {
            return Err(blob_err("not a key blob"));
        }
        let version = u16::from_be_bytes(r.take(2)?.try_into().unwrap());
        if version != VERSION {
            return Err(blob_err(&format!("unsupported key blob version {version}")));
        }
        let blob = match r.take(1)?[0] {
            1 => KeyBlob::Table(r.key()?),
            2 => KeyBlob::Family { family_id: r.u32()?, key: r.key()? },
            3 => {
                let family_id = r.u32()?;
                let tag_len = r.take(1)?[0] as usize;
                if !(1..=16).contains(&tag_len) {
                    return Err(BackendError::TagLength(tag_len).into());
                }
                let n_pred = r.u32()? as usize;
                let mut keys = Vec::with_capacity(n_pred.min(bytes.len()));
                for _ in 0..n_pred {
                    let n = r.u32()? as usize;
                    let mut list = Vec::with_capacity(n.min(bytes.len()));
                    for _ in 0..n {
                        let len = r.u32()? as usize;
                        let value = r.take(len)?.to_vec();
                        list.push((value, r.key()?));
                    }
                    keys.push(list);
                }
                KeyBlob::View(ViewKeySet { family_id, tag_len, keys })
            }
            k => return Err(blob_err(&format!("unknown key kind {k}"))),
        };
        if !r.0.is_empty() {
            return Err(blob_err("trailing bytes"));
        }
        Ok(blob)
    }

    /// Writes the blob and a `.hex` sidecar next to it.
    pub fn write(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes();
        write_private(path, &bytes)?;
        let hex = Zeroizing::new(hex::encode(&*bytes) + "\n");
        write_private(&hex_sidecar(path), hex.as_bytes())?;
        Ok(())
    }

    /// Reads a binary blob, or its hex form when the file is a sidecar.
    pub fn read(path: &Path) -> Result<Self> {
        let raw = Zeroizing::new(std::fs::read(path)?);
        if raw.starts_with(MAGIC) {
            return KeyBlob::from_bytes(&raw);
        }
        let text = std::str::from_utf8(&raw).map_err(|_| blob_err("neither binary nor hex"))?;
        let bytes = Zeroizing::new(hex::decode(text.trim()).map_err(|_| blob_err("neither binary nor hex"))?);
        KeyBlob::from_bytes(&bytes)
    }

    pub fn into_table(self) -> Result<SymKey> {
        match self {
            KeyBlob::Table(k) => Ok(k),
            other => Err(blob_err(&format!("expected a table key, found a {} key", other.kind()))),
        }
    }

    pub fn into_family(self) -> Result<(u32, SymKey)> {
        match self {
            KeyBlob::Family { family_id, key } => Ok((family_id, key)),
            other => Err(blob_err(&format!("expected a family key, found a {} key", other.kind()))),
        }
    }

    pub fn into_view(self) -> Result<ViewKeySet> {
        match self {
            KeyBlob::View(v) => Ok(v),
            other => Err(blob_err(&format!("expected a view key set, found a {} key", other.kind()))),
        }
    }
}

pub fn hex_sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".hex");
    PathBuf::from(s)
}

fn write_private(path: &Path, bytes: &[u8]) -> Result<()> {
    use std::io::Write;
    let mut opts = std::fs::OpenOptions::new();
    opts.write(true).create_new(true);
    #[cfg(unix)]
    {
        use std::os::unix::fs::OpenOptionsExt;
        opts.mode(0o600);
    }
    let mut f = opts.open(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::AlreadyExists {
            blob_err(&format!("{} already exists; refusing to overwrite a key", path.display()))
        } else {
            e.into()
        }
    })?;
    f.write_all(bytes)?;
    f.sync_all()?;
    Ok(())
}

fn blob_err(msg: &str) -> crate::Error {
    BackendError::KeyBlob(msg.to_owned()).into()
}

struct Cursor<'a>(&'a [u8]);

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.0.len() < n {
            return Err(blob_err("truncated"));
        }
        let (h, t) = self.0.split_at(n);
        self.0 = t;
        Ok(h)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn key(&mut self) -> Result<SymKey> {
        Ok(SymKey::from_slice(self.take(KEY_LEN)?).expect("exact key length"))
    }
}
