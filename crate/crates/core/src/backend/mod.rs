//! Per-partition protocol operations: table encryption, family
//! instantiation (projection, selection and tagging columns), view key
//! generation, and the tag-driven reveal scan.

pub mod keys;

use std::collections::HashMap;
use std::num::NonZeroUsize;
use std::rc::Rc;

use lru::LruCache;
use rand::{CryptoRng, RngCore};

use crate::crypto::{
    ote_apply, pack, prf, prf_block, secure_concat, secure_split, Block, NonceDomain, NoncePosition, Prf, SymKey,
    BLOCK_LEN,
};
use crate::error::{BackendError, Result};
use crate::planner::{CanonicalFamily, CanonicalView};
use crate::table::{decode_cell, EncryptedPartition, FamilyColumns, PlainPartition, Schema, Value};

pub use keys::ViewKeySet;

pub const DEFAULT_TAG_LEN: usize = 4;
pub const DEFAULT_CACHE_CAPACITY: usize = 512;

const ZERO_BLOCK: Block = [0u8; BLOCK_LEN];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FamilyParams {
    /// Bytes kept from each 16-byte tag.
    pub tag_len: usize,
    /// Selection cache entries; 0 disables the cache.
    pub cache_capacity: usize,
}

impl Default for FamilyParams {
    fn default() -> Self {
        FamilyParams { tag_len: DEFAULT_TAG_LEN, cache_capacity: DEFAULT_CACHE_CAPACITY }
    }
}

impl FamilyParams {
    pub fn validate(&self) -> Result<()> {
        if !(1..=BLOCK_LEN).contains(&self.tag_len) {
            return Err(BackendError::TagLength(self.tag_len).into());
        }
        Ok(())
    }
}

fn row_key(table_key: &Prf, partition: u32, row: usize) -> SymKey {
    table_key.derive(&pack(&[partition, row as u32]))
}

fn cell_key(row_key: &Prf, column: usize) -> SymKey {
    row_key.derive(&pack(&[column as u32 + 1]))
}

/// `k^pred_j`, with `j` counted from 0 here and 1 inside the PRF input.
pub fn predicate_key(family_key: &SymKey, j: usize) -> SymKey {
    prf(family_key, &pack(&[j as u32 + 1]))
}

/// `s = PRF(k^pred_j, g_j(row))`.
pub fn selection_key(family_key: &SymKey, j: usize, g: &[u8]) -> SymKey {
    Prf::new(&predicate_key(family_key, j)).var(g)
}

/// Encrypts every cell of a partition under its own cell key.
pub fn encrypt_table_partition(
    plain: &PlainPartition,
    schema: &Schema,
    table_key: &SymKey,
) -> Result<EncryptedPartition> {
    plain.validate(schema)?;
    let mut part = plain.to_encoded(schema)?;
    let tk = Prf::new(table_key);
    let n_col = schema.len();
    for r in 0..part.row_count {
        let rk = Prf::new(&row_key(&tk, part.id, r));
        for c in 0..n_col {
            ote_apply(&cell_key(&rk, c), &mut part.cells[r * n_col + c]);
        }
    }
    Ok(part)
}

/// Prepared ciphers for one selection key.
struct SelectionMaterial {
    /// Encrypts the projection key: `PRF(s, 0)`.
    entry: Prf,
    /// Tagging key `τ = PRF(s, p)`.
    tag: Prf,
}

impl SelectionMaterial {
    fn new(s: &SymKey, partition: u32) -> Self {
        SelectionMaterial { entry: Prf::new(&prf(s, &ZERO_BLOCK)), tag: Prf::new(&prf(s, &pack(&[partition]))) }
    }

    fn tag_bytes(&self, count: u32) -> Block {
        self.tag.block(&pack(&[count]))
    }
}

/// LRU map from selection key to prepared ciphers, scoped to one partition.
pub struct SelectionCache {
    lru: Option<LruCache<SymKey, Rc<SelectionMaterial>>>,
    partition: u32,
    pub hits: u64,
    pub misses: u64,
}

impl SelectionCache {
    pub fn new(capacity: usize, partition: u32) -> Self {
        SelectionCache { lru: NonZeroUsize::new(capacity).map(LruCache::new), partition, hits: 0, misses: 0 }
    }

    fn get(&mut self, s: &SymKey) -> Rc<SelectionMaterial> {
        let Some(lru) = &mut self.lru else {
            self.misses += 1;
            return Rc::new(SelectionMaterial::new(s, self.partition));
        };
        if let Some(m) = lru.get(s) {
            self.hits += 1;
            return Rc::clone(m);
        }
        self.misses += 1;
        let m = Rc::new(SelectionMaterial::new(s, self.partition));
        lru.put(s.clone(), Rc::clone(&m));
        m
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AddFamilyStats {
    pub rows: usize,
    pub cache_hits: u64,
    pub cache_misses: u64,
}

/// How a row's projection key relates to its cell keys.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ProjectionMode {
    /// One projected column: the projection key is that cell's key.
    Single(usize),
    /// Every column projected: the projection key is the row key.
    AllColumns,
    /// Random projection key encrypting the listed cell keys.
    Subset,
}

fn projection_mode(family: &CanonicalFamily, n_col: usize) -> ProjectionMode {
    if family.projection.len() == 1 {
        ProjectionMode::Single(family.projection[0])
    } else if family.projection.len() == n_col {
        ProjectionMode::AllColumns
    } else {
        ProjectionMode::Subset
    }
}

fn check_family_columns(family: &CanonicalFamily, n_col: usize) -> Result<()> {
    if let Some(&c) = family.projection.iter().chain(&family.where_columns()).find(|&&c| c >= n_col) {
        return Err(BackendError::UnknownColumn(c).into());
    }
    Ok(())
}

/// Adds the projection, selection and tagging columns of `family` to a
/// partition. Only the cells the predicates read are decrypted.
pub fn add_family_partition<R: RngCore + CryptoRng>(
    part: &mut EncryptedPartition,
    table_key: &SymKey,
    family: &CanonicalFamily,
    family_key: &SymKey,
    params: &FamilyParams,
    rng: &mut R,
) -> Result<AddFamilyStats> {
    params.validate()?;
    let fid = family.family_id();
    if part.families.contains_key(&fid) {
        return Err(BackendError::DuplicateFamily(fid).into());
    }
    let n_col = part.schema.len();
    check_family_columns(family, n_col)?;
    let mode = projection_mode(family, n_col);
    let where_cols = family.where_columns();
    let pred_prfs: Vec<Prf> = (0..family.n_pred()).map(|j| Prf::new(&predicate_key(family_key, j))).collect();
    let tk = Prf::new(table_key);
    let p = part.id;
    let rows = part.row_count;
    let tag_len = params.tag_len;

    let mut cache = SelectionCache::new(params.cache_capacity, p);
    let mut counts: HashMap<SymKey, u32> = HashMap::new();
    let mut cols = FamilyColumns {
        projection: Vec::with_capacity(rows),
        selection: Vec::with_capacity(rows),
        tagging: Vec::with_capacity(rows),
    };
    let mut plain: Vec<Vec<u8>> = vec![Vec::new(); n_col];

    for r in 0..rows {
        let k_r = row_key(&tk, p, r);
        let rk = Prf::new(&k_r);
        for &c in &where_cols {
            let mut cell = part.cell(r, c).to_vec();
            ote_apply(&cell_key(&rk, c), &mut cell);
            plain[c] = cell;
        }

        let (pk, projection) = match mode {
            ProjectionMode::Single(c) => {
                let pk = cell_key(&rk, c);
                let check = prf_block(&pk, &ZERO_BLOCK).to_vec();
                (pk, check)
            }
            ProjectionMode::AllColumns => (k_r.clone(), rk.block(&ZERO_BLOCK).to_vec()),
            ProjectionMode::Subset => {
                let pk = SymKey::random(rng);
                let cell_keys: Vec<SymKey> = family.projection.iter().map(|&c| cell_key(&rk, c)).collect();
                let keys: Vec<&[u8]> = cell_keys.iter().map(|k| &k.as_bytes()[..]).collect();
                let pkp = Prf::new(&pk);
                let mut blob = secure_concat(&keys);
                pkp.apply_keystream(&NoncePosition::new(NonceDomain::ProjectionBlob, p, r as u32, 0), &mut blob);
                let zero =
                    pkp.encrypt(&NoncePosition::new(NonceDomain::ProjectionZeroCheck, p, r as u32, 0), &ZERO_BLOCK);
                (pk, secure_concat(&[blob, zero]))
            }
        };

        let mut selection = Vec::with_capacity(family.n_pred() * BLOCK_LEN);
        let mut tagging = Vec::with_capacity(family.n_pred() * tag_len);
        for (j, pred) in family.predicates.iter().enumerate() {
            let s = pred_prfs[j].var(&pred.eval(&plain));
            let material = cache.get(&s);
            let pos = NoncePosition::new(NonceDomain::SelectionEntry, p, r as u32, j as u32);
            selection.extend_from_slice(&material.entry.encrypt(&pos, pk.as_bytes()));
            let count = counts.entry(s).or_insert(0);
            tagging.extend_from_slice(&material.tag_bytes(*count)[..tag_len]);
            *count += 1;
        }
        cols.projection.push(projection);
        cols.selection.push(selection);
        cols.tagging.push(tagging);
    }
    part.families.insert(fid, cols);
    Ok(AddFamilyStats { rows, cache_hits: cache.hits, cache_misses: cache.misses })
}

/// Keys for every wildcard value of a view: `PRF(k^pred_j, x)`.
pub fn view_gen(view: &CanonicalView, family_key: &SymKey, tag_len: usize) -> Result<ViewKeySet> {
    if !(1..=BLOCK_LEN).contains(&tag_len) {
        return Err(BackendError::TagLength(tag_len).into());
    }
    let keys = view
        .values
        .iter()
        .enumerate()
        .map(|(j, xs)| {
            let pk = Prf::new(&predicate_key(family_key, j));
            xs.iter().map(|x| (x.clone(), pk.var(x))).collect()
        })
        .collect();
    Ok(ViewKeySet { family_id: view.family_id, tag_len, keys })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RevealParams {
    /// Use tags to skip rows; otherwise try every key on every row.
    pub tagged: bool,
}

impl Default for RevealParams {
    fn default() -> Self {
        RevealParams { tagged: true }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RevealStats {
    /// NET lookups that found a candidate key.
    pub tag_hits: u64,
    /// Candidate keys that failed the projection check.
    pub false_positives: u64,
    /// Selection entries decrypted and checked.
    pub trials: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RevealOutcome {
    /// Row index within the partition and its projected values.
    pub rows: Vec<(usize, Vec<Value>)>,
    /// Per predicate and key (in key set order): rows the key decrypted.
    pub counts: Vec<Vec<u32>>,
    pub stats: RevealStats,
}

/// Borrowed view of one family's columns, with structural checks done.
struct FamilyView<'a> {
    part: &'a EncryptedPartition,
    family: &'a CanonicalFamily,
    cols: &'a FamilyColumns,
    mode: ProjectionMode,
    tag_len: usize,
}

impl<'a> FamilyView<'a> {
    fn new(part: &'a EncryptedPartition, family: &'a CanonicalFamily) -> Result<Self> {
        let fid = family.family_id();
        let cols = part.families.get(&fid).ok_or(BackendError::MissingFamily(fid))?;
        let n_col = part.schema.len();
        check_family_columns(family, n_col)?;
        let n_pred = family.n_pred();
        let rows = part.row_count;
        let corrupted = |what: &str| BackendError::Corrupted(format!("family {fid}: {what}"));
        if cols.projection.len() != rows || cols.selection.len() != rows || cols.tagging.len() != rows {
            return Err(corrupted("column length differs from row count").into());
        }
        if cols.selection.iter().any(|s| s.len() != n_pred * BLOCK_LEN) {
            return Err(corrupted("selection entry width").into());
        }
        let tag_len = match cols.tagging.first() {
            Some(t) => t.len() / n_pred,
            None => 0,
        };
        if cols.tagging.iter().any(|t| t.len() != n_pred * tag_len || tag_len > BLOCK_LEN) {
            return Err(corrupted("tag width").into());
        }
        Ok(FamilyView { part, family, cols, mode: projection_mode(family, n_col), tag_len })
    }

    fn tag(&self, r: usize, j: usize) -> &[u8] {
        &self.cols.tagging[r][j * self.tag_len..(j + 1) * self.tag_len]
    }

    /// Recovers the projection key of row `r` from slot `j`, or `None` when
    /// the key does not open it.
    fn open(&self, r: usize, j: usize, entry: &Prf) -> Option<SymKey> {
        let pos = NoncePosition::new(NonceDomain::SelectionEntry, self.part.id, r as u32, j as u32);
        let ct = &self.cols.selection[r][j * BLOCK_LEN..(j + 1) * BLOCK_LEN];
        let pk = SymKey::from_slice(&entry.decrypt(&pos, ct))?;
        let proj = &self.cols.projection[r];
        let ok = match self.mode {
            ProjectionMode::Single(_) | ProjectionMode::AllColumns => prf_block(&pk, &ZERO_BLOCK)[..] == proj[..],
            ProjectionMode::Subset => {
                let parts = secure_split(proj)?;
                let [_, zero] = parts.as_slice() else { return None };
                let pos = NoncePosition::new(NonceDomain::ProjectionZeroCheck, self.part.id, r as u32, 0);
                Prf::new(&pk).decrypt(&pos, zero) == ZERO_BLOCK
            }
        };
        ok.then_some(pk)
    }

    /// Decrypts the projected cells of row `r` given its projection key.
    fn cells(&self, r: usize, pk: &SymKey) -> Result<Vec<Value>> {
        let corrupted = |what: &str| BackendError::Corrupted(format!("row {r}: {what}"));
        let projection = &self.family.projection;
        let cell_keys: Vec<SymKey> = match self.mode {
            ProjectionMode::Single(_) => vec![pk.clone()],
            ProjectionMode::AllColumns => {
                let rk = Prf::new(pk);
                projection.iter().map(|&c| cell_key(&rk, c)).collect()
            }
            ProjectionMode::Subset => {
                let parts = secure_split(&self.cols.projection[r]).ok_or_else(|| corrupted("projection framing"))?;
                let pos = NoncePosition::new(NonceDomain::ProjectionBlob, self.part.id, r as u32, 0);
                let blob = Prf::new(pk).decrypt(&pos, parts[0]);
                let keys = secure_split(&blob).ok_or_else(|| corrupted("cell key framing"))?;
                if keys.len() != projection.len() {
                    return Err(corrupted("cell key count").into());
                }
                keys.iter()
                    .map(|k| SymKey::from_slice(k).ok_or_else(|| corrupted("cell key width")))
                    .collect::<Result<_, _>>()?
            }
        };
        projection
            .iter()
            .zip(&cell_keys)
            .map(|(&c, k)| {
                let mut cell = self.part.cell(r, c).to_vec();
                ote_apply(k, &mut cell);
                decode_cell(&cell, self.part.schema.column(c)).map_err(|_| corrupted("cell does not decode").into())
            })
            .collect()
    }
}

/// Decrypts the projected columns of row `r` with candidate selection key
/// `s` for predicate `j`. `Ok(None)` when `s` does not open the row.
pub fn decrypt_row(
    part: &EncryptedPartition,
    family: &CanonicalFamily,
    r: usize,
    j: usize,
    s: &SymKey,
) -> Result<Option<Vec<Value>>> {
    let fv = FamilyView::new(part, family)?;
    if r >= part.row_count || j >= family.n_pred() {
        return Ok(None);
    }
    let entry = Prf::new(&prf(s, &ZERO_BLOCK));
    match fv.open(r, j, &entry) {
        Some(pk) => fv.cells(r, &pk).map(Some),
        None => Ok(None),
    }
}

struct KeyState {
    j: usize,
    idx: usize,
    material: SelectionMaterial,
    count: u32,
    net: u128,
}

fn tag_key(tag: &[u8]) -> u128 {
    let mut b = [0u8; 16];
    b[..tag.len()].copy_from_slice(tag);
    u128::from_be_bytes(b)
}

/// Scans a partition and returns the rows the key set opens, in row order,
/// each at most once.
pub fn reveal_view_partition(
    part: &EncryptedPartition,
    family: &CanonicalFamily,
    keys: &ViewKeySet,
    params: &RevealParams,
) -> Result<RevealOutcome> {
    let fid = family.family_id();
    if keys.family_id != fid {
        return Err(BackendError::KeyBlob(format!("keys are for family {}, not {fid}", keys.family_id)).into());
    }
    if keys.keys.len() != family.n_pred() {
        return Err(BackendError::KeyBlob("key set and family disagree on predicate count".into()).into());
    }
    let fv = FamilyView::new(part, family)?;
    if part.row_count > 0 && fv.tag_len != keys.tag_len {
        return Err(BackendError::TagLengthMismatch { keys: keys.tag_len, family: fv.tag_len }.into());
    }
    let p = part.id;
    let mut states: Vec<KeyState> = Vec::new();
    for (j, list) in keys.keys.iter().enumerate() {
        for (idx, (_, k)) in list.iter().enumerate() {
            let material = SelectionMaterial::new(k, p);
            let net = tag_key(&material.tag_bytes(0)[..keys.tag_len]);
            states.push(KeyState { j, idx, material, count: 0, net });
        }
    }
    let mut stats = RevealStats::default();
    let mut rows = Vec::new();

    if params.tagged {
        // Every hit moves a key to a new NET. A sparse table lets removals
        // free their slots instead of leaving tombstones that lengthen the
        // probe of every missing lookup.
        let mut nets: HashMap<(usize, u128), Vec<usize>> = HashMap::with_capacity(4 * states.len().max(8));
        for (i, st) in states.iter().enumerate() {
            nets.entry((st.j, st.net)).or_default().push(i);
        }
        for r in 0..part.row_count {
            let mut emitted = false;
            for j in 0..family.n_pred() {
                let Some(bucket) = nets.get(&(j, tag_key(fv.tag(r, j)))) else { continue };
                stats.tag_hits += 1;
                let candidates = bucket.clone();
                for i in candidates {
                    stats.trials += 1;
                    let Some(pk) = fv.open(r, j, &states[i].material.entry) else {
                        stats.false_positives += 1;
                        continue;
                    };
                    if !emitted {
                        rows.push((r, fv.cells(r, &pk)?));
                        emitted = true;
                    }
                    let st = &mut states[i];
                    let old = (st.j, st.net);
                    st.count += 1;
                    st.net = tag_key(&st.material.tag_bytes(st.count)[..keys.tag_len]);
                    let new = (st.j, st.net);
                    if let Some(b) = nets.get_mut(&old) {
                        b.retain(|&x| x != i);
                        if b.is_empty() {
                            nets.remove(&old);
                        }
                    }
                    nets.entry(new).or_default().push(i);
                    break;
                }
            }
        }
    } else {
        let mut by_pred: Vec<Vec<usize>> = vec![Vec::new(); family.n_pred()];
        for (i, st) in states.iter().enumerate() {
            by_pred[st.j].push(i);
        }
        for r in 0..part.row_count {
            let mut emitted = false;
            for (j, idxs) in by_pred.iter().enumerate() {
                for &i in idxs {
                    stats.trials += 1;
                    if let Some(pk) = fv.open(r, j, &states[i].material.entry) {
                        if !emitted {
                            rows.push((r, fv.cells(r, &pk)?));
                            emitted = true;
                        }
                        states[i].count += 1;
                        break;
                    }
                }
            }
        }
    }

    let mut counts: Vec<Vec<u32>> = keys.keys.iter().map(|l| vec![0; l.len()]).collect();
    for st in &states {
        counts[st.j][st.idx] = st.count;
    }
    Ok(RevealOutcome { rows, counts, stats })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner::{plan_family, plan_view, PlannerParams};
    use crate::table::Column;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    fn boats() -> (Schema, PlainPartition) {
        let schema = Schema::new(vec![Column::int("bid"), Column::utf8("bname"), Column::utf8("color")]).unwrap();
        let rows =
            [(101, "Interlake", "blue"), (102, "Interlake", "red"), (103, "Clipper", "green"), (104, "Marine", "red")]
                .iter()
                .map(|&(b, n, c)| vec![Value::Int(b), Value::Str(n.into()), Value::Str(c.into())])
                .collect();
        (schema, PlainPartition::new(1, rows).unwrap())
    }

    fn key(b: u8) -> SymKey {
        SymKey::from_bytes([b; 16])
    }

    #[test]
    fn cells_use_distinct_keys() {
        let (schema, _) = boats();
        let same = vec![Value::Int(7), Value::Str("x".into()), Value::Str("x".into())];
        let plain = PlainPartition::new(3, vec![same.clone(), same]).unwrap();
        let enc = encrypt_table_partition(&plain, &schema, &key(1)).unwrap();
        assert_ne!(enc.cell(0, 0), enc.cell(1, 0));
        assert_ne!(enc.cell(0, 1), enc.cell(0, 2));
        assert_eq!(enc.cell(0, 1).len(), 2);
        let empty = encrypt_table_partition(&PlainPartition::new(1, vec![]).unwrap(), &schema, &key(1)).unwrap();
        assert_eq!(empty.row_count, 0);
    }

    #[test]
    fn running_example() {
        let (schema, plain) = boats();
        let params = PlannerParams::default();
        let fam = plan_family("SELECT bname, color FROM boats WHERE bname IN ?x_1 OR color IN ?x_2", &schema, &params)
            .unwrap();
        let mut enc = encrypt_table_partition(&plain, &schema, &key(1)).unwrap();
        let mut rng = StdRng::seed_from_u64(9);
        add_family_partition(&mut enc, &key(1), &fam, &key(2), &FamilyParams::default(), &mut rng).unwrap();
        let view = plan_view(
            "SELECT bname, color FROM boats WHERE bname IN ('Interlake') OR color IN ('red')",
            &fam,
            &schema,
            &params,
        )
        .unwrap();
        let keys = view_gen(&view, &key(2), 4).unwrap();
        assert_eq!(keys.key_count(), 2);
        let out = reveal_view_partition(&enc, &fam, &keys, &RevealParams::default()).unwrap();
        let idx: Vec<usize> = out.rows.iter().map(|(r, _)| *r).collect();
        assert_eq!(idx, vec![0, 1, 3]);
        assert_eq!(out.rows[0].1, vec![Value::Str("Interlake".into()), Value::Str("blue".into())]);
        assert_eq!(out.counts, vec![vec![2], vec![2]]);
        let untagged = reveal_view_partition(&enc, &fam, &keys, &RevealParams { tagged: false }).unwrap();
        assert_eq!(untagged.rows, out.rows);
        assert_eq!(untagged.counts, out.counts);
    }

    #[test]
    fn duplicate_family_rejected() {
        let (schema, plain) = boats();
        let fam = plan_family("SELECT * FROM boats WHERE bid = ?x", &schema, &PlannerParams::default()).unwrap();
        let mut enc = encrypt_table_partition(&plain, &schema, &key(1)).unwrap();
        let mut rng = StdRng::seed_from_u64(1);
        add_family_partition(&mut enc, &key(1), &fam, &key(2), &FamilyParams::default(), &mut rng).unwrap();
        let again = add_family_partition(&mut enc, &key(1), &fam, &key(2), &FamilyParams::default(), &mut rng);
        assert!(matches!(again, Err(crate::Error::Backend(BackendError::DuplicateFamily(_)))));
    }

    #[test]
    fn select_star_projection_is_one_block() {
        let (schema, plain) = boats();
        let fam = plan_family("SELECT * FROM boats WHERE bid = ?x", &schema, &PlannerParams::default()).unwrap();
        let mut enc = encrypt_table_partition(&plain, &schema, &key(1)).unwrap();
        let mut rng = StdRng::seed_from_u64(1);
        add_family_partition(&mut enc, &key(1), &fam, &key(2), &FamilyParams::default(), &mut rng).unwrap();
        let cols = &enc.families[&fam.family_id()];
        assert!(cols.projection.iter().all(|p| p.len() == 16));
    }

    #[test]
    fn bad_tag_length() {
        assert!(FamilyParams { tag_len: 0, ..Default::default() }.validate().is_err());
        assert!(FamilyParams { tag_len: 17, ..Default::default() }.validate().is_err());
    }
}
