//! Table-level driver over a [`Storage`] root.
//!
//! Layout: `<table>/manifest.json` and `<table>/part-%05d.mep`. Writers stage
//! partitions as `part-%05d.mep.tmp`, then commit: the new manifest is put as
//! `manifest.json.pending`, staged files are renamed into place, and the
//! pending manifest is renamed over the old one. [`recover`] rolls a commit
//! forward when the pending manifest exists and discards staged files
//! otherwise.

pub mod pipeline;
pub mod storage;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rand::rngs::StdRng;
use rand::SeedableRng;

use crate::backend::{self, AddFamilyStats, FamilyParams, RevealParams, RevealStats, ViewKeySet};
use crate::crypto::SymKey;
use crate::error::{BackendError, Error, Result};
use crate::planner::{plan_family, plan_view, CanonicalFamily, PlannerParams};
use crate::table::{
    read_csv, write_csv, Column, EncryptedPartition, FamilyRecord, PartitionEntry, PlainPartition, Schema,
    TableManifest,
};

pub use pipeline::{PipelineConfig, StageTimes};
pub use storage::{Access, LocalDir, LoggedStorage, MemStorage, Storage};

const STAGING: &str = ".tmp";
const PENDING: &str = ".pending";

pub fn manifest_key(table: &str) -> String {
    format!("{table}/manifest.json")
}

pub fn partition_key(table: &str, id: u32) -> String {
    format!("{table}/part-{id:05}.mep")
}

fn staging_key(table: &str, id: u32) -> String {
    partition_key(table, id) + STAGING
}

fn pending_key(table: &str) -> String {
    manifest_key(table) + PENDING
}

fn check_table_name(table: &str) -> Result<()> {
    let ok = !table.is_empty()
        && table.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
        && !table.starts_with('-');
    if !ok {
        return Err(Error::Orchestrator(format!("invalid table name {table:?}")));
    }
    Ok(())
}

pub fn load_manifest(storage: &dyn Storage, table: &str) -> Result<TableManifest> {
    check_table_name(table)?;
    let bytes = storage.get(&manifest_key(table))?;
    let text = std::str::from_utf8(&bytes).map_err(|_| Error::Storage("manifest is not UTF-8".into()))?;
    let manifest = TableManifest::from_json(text)?;
    if manifest.table != table {
        return Err(Error::Orchestrator(format!("manifest names table {}, expected {table}", manifest.table)));
    }
    Ok(manifest)
}

/// Stores a manifest and renames staged partitions into place.
fn commit(storage: &dyn Storage, table: &str, manifest: &TableManifest, staged: &[u32]) -> Result<()> {
    storage.put(&pending_key(table), manifest.to_json().as_bytes())?;
    for &id in staged {
        storage.rename(&staging_key(table, id), &partition_key(table, id))?;
    }
    storage.rename(&pending_key(table), &manifest_key(table))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Recovery {
    Clean,
    /// An interrupted commit was completed.
    RolledForward {
        partitions: usize,
    },
    /// Staged files of an uncommitted operation were deleted.
    RolledBack {
        files: usize,
    },
}

/// Brings a table directory back to a committed state.
pub fn recover(storage: &dyn Storage, table: &str) -> Result<Recovery> {
    check_table_name(table)?;
    let keys = storage.list(&format!("{table}/"))?;
    let staged: Vec<&String> = keys.iter().filter(|k| k.ends_with(STAGING)).collect();
    if keys.contains(&pending_key(table)) {
        for k in &staged {
            storage.rename(k, k.strip_suffix(STAGING).unwrap())?;
        }
        storage.rename(&pending_key(table), &manifest_key(table))?;
        return Ok(Recovery::RolledForward { partitions: staged.len() });
    }
    for k in &staged {
        storage.delete(k)?;
    }
    Ok(if staged.is_empty() { Recovery::Clean } else { Recovery::RolledBack { files: staged.len() } })
}

/// One plaintext partition to encrypt.
#[derive(Debug, Clone)]
pub enum PlainInput {
    /// CSV with a header row matching the schema.
    Csv {
        id: u32,
        path: PathBuf,
    },
    Rows(PlainPartition),
}

impl PlainInput {
    pub fn id(&self) -> u32 {
        match self {
            PlainInput::Csv { id, .. } => *id,
            PlainInput::Rows(p) => p.id,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EncryptReport {
    pub manifest: TableManifest,
    pub plaintext_bytes: u64,
    pub encrypted_bytes: u64,
    pub times: StageTimes,
}

/// Encrypts every input partition under `table_key` into a new table.
/// Refuses to write into a table that already has files.
pub fn run_encrypt_table(
    storage: &dyn Storage,
    table: &str,
    schema: &Schema,
    inputs: Vec<PlainInput>,
    table_key: &SymKey,
    cfg: &PipelineConfig,
) -> Result<EncryptReport> {
    check_table_name(table)?;
    recover(storage, table)?;
    if !storage.list(&format!("{table}/"))?.is_empty() {
        return Err(Error::Orchestrator(format!("table {table} already exists; refusing to overwrite")));
    }
    let mut ids: Vec<u32> = inputs.iter().map(PlainInput::id).collect();
    ids.sort_unstable();
    if ids.first() == Some(&0) || ids.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Orchestrator("partition ids must be unique and at least 1".into()));
    }
    let slots: BTreeMap<u32, Mutex<Option<PlainInput>>> =
        inputs.into_iter().map(|i| (i.id(), Mutex::new(Some(i)))).collect();
    let rows: Mutex<BTreeMap<u32, (u64, u64, u64)>> = Mutex::new(BTreeMap::new());

    let times = pipeline::run(
        &ids,
        cfg,
        &|id| {
            let input = slots[&id].lock().unwrap().take().expect("each partition fetched once");
            Ok(match input {
                PlainInput::Rows(p) => p,
                PlainInput::Csv { id, path } => {
                    let f =
                        std::fs::File::open(&path).map_err(|e| Error::Storage(format!("{}: {e}", path.display())))?;
                    PlainPartition::new(id, read_csv(std::io::BufReader::new(f), schema)?)?
                }
            })
        },
        &|_, plain| {
            let part = backend::encrypt_table_partition(&plain, schema, table_key)?;
            Ok((part.row_count as u64, part.cell_bytes() as u64, part.to_bytes()))
        },
        &|id, (n, plain_bytes, bytes)| {
            storage.put(&staging_key(table, id), &bytes)?;
            rows.lock().unwrap().insert(id, (n, plain_bytes, bytes.len() as u64));
            Ok(())
        },
    );
    let times = match times {
        Ok(t) => t,
        Err(e) => {
            recover(storage, table)?;
            return Err(e);
        }
    };
    let rows = rows.into_inner().unwrap();
    let mut manifest = TableManifest::new(table, schema.clone());
    manifest.partitions = rows.iter().map(|(&id, &(n, _, _))| PartitionEntry { id, rows: n }).collect();
    commit(storage, table, &manifest, &ids)?;
    Ok(EncryptReport {
        manifest,
        plaintext_bytes: rows.values().map(|r| r.1).sum(),
        encrypted_bytes: rows.values().map(|r| r.2).sum(),
        times,
    })
}

fn fetch_partition(storage: &dyn Storage, table: &str, id: u32, schema: &Schema) -> Result<EncryptedPartition> {
    let bytes = storage.get(&partition_key(table, id))?;
    let part = EncryptedPartition::read_checked(&bytes, schema)?;
    if part.id != id {
        return Err(Error::Orchestrator(format!("file for partition {id} holds partition {}", part.id)));
    }
    Ok(part)
}

#[derive(Debug, Clone)]
pub struct AddFamilyReport {
    pub family_id: u32,
    pub n_pred: usize,
    pub stats: AddFamilyStats,
    /// Plaintext cell bytes processed.
    pub plaintext_bytes: u64,
    /// Bytes of family columns added.
    pub family_bytes: u64,
    pub times: StageTimes,
}

/// Plans a family and instantiates it on every partition. The manifest only
/// changes once all partitions are staged.
#[allow(clippy::too_many_arguments)]
pub fn run_add_family(
    storage: &dyn Storage,
    table: &str,
    table_key: &SymKey,
    family_sql: &str,
    planner: &PlannerParams,
    params: &FamilyParams,
    family_key: &SymKey,
    cfg: &PipelineConfig,
) -> Result<AddFamilyReport> {
    params.validate()?;
    recover(storage, table)?;
    let mut manifest = load_manifest(storage, table)?;
    let family = plan_family(family_sql, &manifest.schema, planner)?;
    if !family.table.eq_ignore_ascii_case(table) {
        return Err(Error::Orchestrator(format!("family reads table {}, not {table}", family.table)));
    }
    let family_id = family.family_id();
    if manifest.family(family_id).is_some() {
        return Err(BackendError::DuplicateFamily(family_id).into());
    }
    let ids: Vec<u32> = manifest.partitions.iter().map(|p| p.id).collect();
    let schema = manifest.schema.clone();
    let totals: Mutex<(AddFamilyStats, u64, u64)> = Mutex::new(Default::default());

    let result = pipeline::run(
        &ids,
        cfg,
        &|id| fetch_partition(storage, table, id, &schema),
        &|_, mut part| {
            let mut rng = StdRng::from_entropy();
            let stats = backend::add_family_partition(&mut part, table_key, &family, family_key, params, &mut rng)?;
            let fam_bytes = part.families[&family_id].byte_size() as u64;
            let mut t = totals.lock().unwrap();
            t.0.rows += stats.rows;
            t.0.cache_hits += stats.cache_hits;
            t.0.cache_misses += stats.cache_misses;
            t.1 += part.cell_bytes() as u64;
            t.2 += fam_bytes;
            Ok(part.to_bytes())
        },
        &|id, bytes| storage.put(&staging_key(table, id), &bytes),
    );
    let times = match result {
        Ok(t) => t,
        Err(e) => {
            recover(storage, table)?;
            return Err(e);
        }
    };
    manifest.families.push(FamilyRecord {
        family_id,
        sql: family.sql.clone(),
        canonical: hex::encode(family.to_bytes()),
        tag_length_bytes: params.tag_len,
        branching_factor_bits: family.branching_bits,
    });
    commit(storage, table, &manifest, &ids)?;
    let (stats, plaintext_bytes, family_bytes) = totals.into_inner().unwrap();
    Ok(AddFamilyReport { family_id, n_pred: family.n_pred(), stats, plaintext_bytes, family_bytes, times })
}

/// The canonical family stored in a manifest record.
pub fn stored_family(manifest: &TableManifest, family_id: u32) -> Result<(CanonicalFamily, &FamilyRecord)> {
    let record = manifest
        .family(family_id)
        .ok_or_else(|| Error::Orchestrator(format!("table {} has no family {family_id}", manifest.table)))?;
    let bytes = hex::decode(&record.canonical)
        .map_err(|_| Error::Orchestrator(format!("family {family_id}: canonical form is not hex")))?;
    let family = CanonicalFamily::from_bytes(&bytes)?;
    if family.family_id() != family_id {
        return Err(Error::Orchestrator(format!("family {family_id}: stored canonical form has a different id")));
    }
    Ok((family, record))
}

/// Mints the key set for a view of a stored family.
pub fn run_view_gen(
    storage: &dyn Storage,
    table: &str,
    family_id: u32,
    family_key: &SymKey,
    view_sql: &str,
    planner: &PlannerParams,
) -> Result<ViewKeySet> {
    let manifest = load_manifest(storage, table)?;
    let (family, record) = stored_family(&manifest, family_id)?;
    let view = plan_view(view_sql, &family, &manifest.schema, planner)?;
    backend::view_gen(&view, family_key, record.tag_length_bytes)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionReveal {
    pub id: u32,
    pub rows: usize,
    pub stats: RevealStats,
}

#[derive(Debug, Clone)]
pub struct RevealReport {
    pub columns: Vec<Column>,
    pub partitions: Vec<PartitionReveal>,
    pub times: StageTimes,
}

impl RevealReport {
    pub fn rows(&self) -> usize {
        self.partitions.iter().map(|p| p.rows).sum()
    }
}

pub fn output_file(out: &Path, id: u32) -> PathBuf {
    out.join(format!("part-{id:05}.csv"))
}

/// Partition ids selected by an inclusive filter, which must lie within the
/// table's partition ids.
pub fn filter_ids(manifest: &TableManifest, fil: Option<(u32, u32)>) -> Result<Vec<u32>> {
    let ids: Vec<u32> = manifest.partitions.iter().map(|p| p.id).collect();
    let Some((lo, hi)) = fil else { return Ok(ids) };
    if lo > hi || !ids.contains(&lo) || !ids.contains(&hi) {
        return Err(Error::Orchestrator(format!("partition filter {lo}:{hi} is outside the table's partitions")));
    }
    Ok(ids.into_iter().filter(|id| (lo..=hi).contains(id)).collect())
}

/// Decrypts a view into one CSV per partition under `out`, fetching only
/// the partitions `fil` selects.
pub fn run_reveal_view(
    storage: &dyn Storage,
    table: &str,
    keys: &ViewKeySet,
    fil: Option<(u32, u32)>,
    out: &Path,
    params: &RevealParams,
    cfg: &PipelineConfig,
) -> Result<RevealReport> {
    let manifest = load_manifest(storage, table)?;
    let (family, record) = stored_family(&manifest, keys.family_id)?;
    if record.tag_length_bytes != keys.tag_len {
        return Err(BackendError::TagLengthMismatch { keys: keys.tag_len, family: record.tag_length_bytes }.into());
    }
    let ids = filter_ids(&manifest, fil)?;
    std::fs::create_dir_all(out)?;
    let columns: Vec<Column> = family.projection.iter().map(|&c| manifest.schema.column(c).clone()).collect();
    let schema = &manifest.schema;
    let done: Mutex<Vec<PartitionReveal>> = Mutex::new(Vec::new());

    let times = pipeline::run(
        &ids,
        cfg,
        &|id| fetch_partition(storage, table, id, schema),
        &|_, part| backend::reveal_view_partition(&part, &family, keys, params),
        &|id, outcome| {
            let rows: Vec<_> = outcome.rows.into_iter().map(|(_, vs)| vs).collect();
            let mut buf = Vec::new();
            write_csv(&mut buf, &columns, &rows)?;
            std::fs::write(output_file(out, id), buf)?;
            done.lock().unwrap().push(PartitionReveal { id, rows: rows.len(), stats: outcome.stats });
            Ok(())
        },
    )?;
    Ok(RevealReport { columns, partitions: done.into_inner().unwrap(), times })
}
