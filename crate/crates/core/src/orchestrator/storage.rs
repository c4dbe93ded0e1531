//! Whole-file object storage. Keys are `/`-separated relative paths.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use crate::error::{Error, Result};

pub trait Storage: Send + Sync {
    /// Keys under `prefix`, sorted.
    fn list(&self, prefix: &str) -> Result<Vec<String>>;
    fn get(&self, key: &str) -> Result<Vec<u8>>;
    /// Atomic whole-file write: readers see either the old or new content.
    fn put(&self, key: &str, bytes: &[u8]) -> Result<()>;
    fn delete(&self, key: &str) -> Result<()>;
    /// Atomic rename, replacing `to` if present.
    fn rename(&self, from: &str, to: &str) -> Result<()>;

    fn exists(&self, key: &str) -> Result<bool> {
        Ok(self.list(key)?.iter().any(|k| k == key))
    }
}

fn not_found(key: &str) -> Error {
    Error::Storage(format!("{key}: not found"))
}

fn check_key(key: &str) -> Result<()> {
    let bad = key.is_empty()
        || key.starts_with('/')
        || key.split('/').any(|c| c.is_empty() || c == "." || c == "..")
        || key.ends_with(PARTIAL_SUFFIX);
    if bad {
        return Err(Error::Storage(format!("invalid storage key {key:?}")));
    }
    Ok(())
}

const PARTIAL_SUFFIX: &str = ".partial";

/// A local directory.
pub struct LocalDir {
    root: PathBuf,
}

impl LocalDir {
    pub fn new(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        std::fs::create_dir_all(&root)?;
        Ok(LocalDir { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn path(&self, key: &str) -> Result<PathBuf> {
        check_key(key)?;
        Ok(self.root.join(key))
    }

    fn walk(&self, dir: &Path, rel: &str, out: &mut Vec<String>) -> Result<()> {
        let entries = match std::fs::read_dir(dir) {
            Ok(e) => e,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(()),
            Err(e) => return Err(e.into()),
        };
        for entry in entries {
            let entry = entry?;
            let Some(name) = entry.file_name().to_str().map(str::to_owned) else { continue };
            let key = if rel.is_empty() { name.clone() } else { format!("{rel}/{name}") };
            if entry.file_type()?.is_dir() {
                self.walk(&entry.path(), &key, out)?;
            } else if !name.ends_with(PARTIAL_SUFFIX) {
                out.push(key);
            }
        }
        Ok(())
    }
}

impl Storage for LocalDir {
    fn list(&self, prefix: &str) -> Result<Vec<String>> {
        let mut out = Vec::new();
        self.walk(&self.root, "", &mut out)?;
        out.retain(|k| k.starts_with(prefix));
        out.sort();
        Ok(out)
    }

    fn get(&self, key: &str) -> Result<Vec<u8>> {
        std::fs::read(self.path(key)?).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => not_found(key),
            _ => e.into(),
        })
    }

    fn put(&self, key: &str, bytes: &[u8]) -> Result<()> {
        let path = self.path(key)?;
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let mut tmp = path.clone().into_os_string();
        tmp.push(PARTIAL_SUFFIX);
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        std::fs::rename(&tmp, &path)?;
        Ok(())
    }

    fn delete(&self, key: &str) -> Result<()> {
        match std::fs::remove_file(self.path(key)?) {
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(()),
            r => Ok(r?),
        }
    }

    fn rename(&self, from: &str, to: &str) -> Result<()> {
        std::fs::rename(self.path(from)?, self.path(to)?).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => not_found(from),
            _ => e.into(),
        })
    }
}

/// In-memory storage for tests and benchmarks.
#[derive(Default)]
pub struct MemStorage {
    files: Mutex<BTreeMap<String, Vec<u8>>>,
}

impl MemStorage {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Storage for MemStorage {
    fn list(&self, prefix: &str) -> Result<Vec<String>> {
        Ok(self.files.lock().unwrap().keys().filter(|k| k.starts_with(prefix)).cloned().collect())
    }

    fn get(&self, key: &str) -> Result<Vec<u8>> {
        self.files.lock().unwrap().get(key).cloned().ok_or_else(|| not_found(key))
    }

    fn put(&self, key: &str, bytes: &[u8]) -> Result<()> {
        check_key(key)?;
        self.files.lock().unwrap().insert(key.to_owned(), bytes.to_vec());
        Ok(())
    }

    fn delete(&self, key: &str) -> Result<()> {
        self.files.lock().unwrap().remove(key);
        Ok(())
    }

    fn rename(&self, from: &str, to: &str) -> Result<()> {
        check_key(to)?;
        let mut files = self.files.lock().unwrap();
        let bytes = files.remove(from).ok_or_else(|| not_found(from))?;
        files.insert(to.to_owned(), bytes);
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Access {
    List(String),
    Get(String),
    Put(String),
    Delete(String),
    Rename(String, String),
}

/// Records every access; optionally fails the n-th `put` to simulate a crash.
pub struct LoggedStorage<S> {
    inner: S,
    log: Mutex<Vec<Access>>,
    fail_put_after: Mutex<Option<usize>>,
}

impl<S: Storage> LoggedStorage<S> {
    pub fn new(inner: S) -> Self {
        LoggedStorage { inner, log: Mutex::new(Vec::new()), fail_put_after: Mutex::new(None) }
    }

    pub fn inner(&self) -> &S {
        &self.inner
    }

    pub fn log(&self) -> Vec<Access> {
        self.log.lock().unwrap().clone()
    }

    pub fn clear_log(&self) {
        self.log.lock().unwrap().clear();
    }

    /// Keys fetched with `get` since the log was last cleared.
    pub fn gets(&self) -> Vec<String> {
        self.log()
            .into_iter()
            .filter_map(|a| match a {
                Access::Get(k) => Some(k),
                _ => None,
            })
            .collect()
    }

    /// Lets `n` more puts succeed, then fails every later one.
    pub fn fail_puts_after(&self, n: Option<usize>) {
        *self.fail_put_after.lock().unwrap() = n;
    }

    fn record(&self, a: Access) {
        self.log.lock().unwrap().push(a);
    }
}

impl<S: Storage> Storage for LoggedStorage<S> {
    fn list(&self, prefix: &str) -> Result<Vec<String>> {
        self.record(Access::List(prefix.to_owned()));
        self.inner.list(prefix)
    }

    fn get(&self, key: &str) -> Result<Vec<u8>> {
        self.record(Access::Get(key.to_owned()));
        self.inner.get(key)
    }

    fn put(&self, key: &str, bytes: &[u8]) -> Result<()> {
        {
            let mut budget = self.fail_put_after.lock().unwrap();
            if let Some(n) = budget.as_mut() {
                if *n == 0 {
                    return Err(Error::Storage(format!("{key}: injected put failure")));
                }
                *n -= 1;
            }
        }
        self.record(Access::Put(key.to_owned()));
        self.inner.put(key, bytes)
    }

    fn delete(&self, key: &str) -> Result<()> {
        self.record(Access::Delete(key.to_owned()));
        self.inner.delete(key)
    }

    fn rename(&self, from: &str, to: &str) -> Result<()> {
        self.record(Access::Rename(from.to_owned(), to.to_owned()));
        self.inner.rename(from, to)
    }
}
