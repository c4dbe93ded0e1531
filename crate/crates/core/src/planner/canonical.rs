//! Canonical families and views: a projection plus predicates `g_j` whose
//! value sets are computed from wildcard bindings by stored recipes.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use num_bigint::BigUint;
use sha2::{Digest, Sha256};

use crate::crypto::{hash_string, secure_concat};
use crate::error::PlanError;
use crate::table::{encode_cell, int_to_ordered, Column, ColumnType, Value};

use super::ast::CmpOp;
use super::cover::{cover_levels, IntervalSet};

const MAGIC: &[u8; 4] = b"MCF1";
const VERSION: u16 = 1;

pub const INT_BITS: u32 = 64;
pub const HASH_BITS: u32 = 256;

/// One component of a predicate function.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Atom {
    /// The cell's canonical encoding.
    Field { column: usize },
    /// `[0x00]` for NULL, else `[0x01]` followed by the top `bits` bits of
    /// the order-preserving 64-bit value as an 8-byte big-endian integer.
    TopBits { column: usize, bits: u32 },
    /// Top `bits` bits of SHA-256 of the cell encoding, as 32 big-endian bytes.
    HashTopBits { column: usize, bits: u32 },
}

impl Atom {
    pub fn column(&self) -> usize {
        match *self {
            Atom::Field { column } | Atom::TopBits { column, .. } | Atom::HashTopBits { column, .. } => column,
        }
    }

    /// Evaluates the atom on a row of encoded cells.
    pub fn eval(&self, cells: &[Vec<u8>]) -> Vec<u8> {
        let cell = &cells[self.column()];
        match *self {
            Atom::Field { .. } => cell.clone(),
            Atom::TopBits { bits, .. } => {
                let body = match cell.len() {
                    9 if cell[0] == 0 => return vec![0],
                    9 => &cell[1..],
                    _ => &cell[..],
                };
                let v = u64::from_be_bytes(body.try_into().expect("integer cell is 8 bytes"));
                top_bits_output(v, bits)
            }
            Atom::HashTopBits { bits, .. } => shr_256(&hash_string(cell), HASH_BITS - bits).to_vec(),
        }
    }

    fn describe(&self, schema_names: &dyn Fn(usize) -> String) -> String {
        match *self {
            Atom::Field { column } => schema_names(column),
            Atom::TopBits { column, bits } => format!("{}[{}:{}]", schema_names(column), INT_BITS - 1, INT_BITS - bits),
            Atom::HashTopBits { column, bits } => {
                format!("sha256({})[{}:{}]", schema_names(column), HASH_BITS - 1, HASH_BITS - bits)
            }
        }
    }
}

fn top_bits_output(ordered: u64, bits: u32) -> Vec<u8> {
    let mut out = Vec::with_capacity(9);
    out.push(1);
    out.extend_from_slice(&(ordered >> (INT_BITS - bits)).to_be_bytes());
    out
}

fn shr_256(v: &[u8; 32], shift: u32) -> [u8; 32] {
    let bytes = (shift / 8) as usize;
    let bits = shift % 8;
    let mut out = [0u8; 32];
    for i in (bytes..32).rev() {
        let src = i - bytes;
        let hi = v[src] >> bits;
        let carry = if bits > 0 && src > 0 { v[src - 1] << (8 - bits) } else { 0 };
        out[i] = hi | carry;
    }
    out
}

fn biguint_to_be(v: &BigUint, width: usize) -> Vec<u8> {
    let raw = v.to_bytes_be();
    let mut out = vec![0u8; width.saturating_sub(raw.len())];
    out.extend_from_slice(&raw[raw.len().saturating_sub(width)..]);
    out
}

/// Where a set of wildcard values comes from.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Src {
    Wildcard(String),
    Literal(Vec<Value>),
}

/// A leaf of a set expression, tagged with the top-level disjunct of the
/// family it came from.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Piece {
    pub src: Src,
    pub origin: u32,
}

/// A set of domain values, possibly depending on wildcard bindings.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum SetExpr {
    /// The operand values themselves.
    Values(Piece),
    /// Everything except the operand values (NULL included when nullable).
    Excluding(Piece),
    /// `x op v` for a single non-NULL `v`. Never contains NULL.
    Range(CmpOp, Piece),
    Union(Vec<SetExpr>),
    Intersect(Vec<SetExpr>),
}

impl SetExpr {
    pub fn pieces(&self) -> Vec<&Piece> {
        match self {
            SetExpr::Values(p) | SetExpr::Excluding(p) | SetExpr::Range(_, p) => vec![p],
            SetExpr::Union(cs) | SetExpr::Intersect(cs) => cs.iter().flat_map(SetExpr::pieces).collect(),
        }
    }

    pub fn is_literal(&self) -> bool {
        self.pieces().iter().all(|p| matches!(p.src, Src::Literal(_)))
    }

    /// Combines with flattening of nested nodes of the same kind.
    pub fn combine(items: Vec<SetExpr>, intersect: bool) -> SetExpr {
        let mut out = Vec::new();
        for item in items {
            match (item, intersect) {
                (SetExpr::Intersect(cs), true) | (SetExpr::Union(cs), false) => out.extend(cs),
                (other, _) => out.push(other),
            }
        }
        if out.len() == 1 {
            out.pop().unwrap()
        } else if intersect {
            SetExpr::Intersect(out)
        } else {
            SetExpr::Union(out)
        }
    }
}

impl fmt::Display for Src {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Src::Wildcard(w) => write!(f, "?{w}"),
            Src::Literal(vs) => {
                f.write_str("(")?;
                for (i, v) in vs.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    match v {
                        Value::Str(s) => write!(f, "'{}'", s.replace('\'', "''"))?,
                        other => write!(f, "{other}")?,
                    }
                }
                f.write_str(")")
            }
        }
    }
}

impl fmt::Display for SetExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |f: &mut fmt::Formatter<'_>, cs: &[SetExpr], sep: &str| -> fmt::Result {
            f.write_str("[")?;
            for (i, c) in cs.iter().enumerate() {
                if i > 0 {
                    write!(f, " {sep} ")?;
                }
                write!(f, "{c}")?;
            }
            f.write_str("]")
        };
        match self {
            SetExpr::Values(p) => write!(f, "IN {}", p.src),
            SetExpr::Excluding(p) => write!(f, "NOT IN {}", p.src),
            SetExpr::Range(op, p) => write!(f, "{} {}", op.symbol(), p.src),
            SetExpr::Union(cs) => join(f, cs, "OR"),
            SetExpr::Intersect(cs) => join(f, cs, "AND"),
        }
    }
}

/// The value domain a set expression ranges over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Target {
    /// Integer column, decomposed into bit-prefix trees.
    Int { column: usize, nullable: bool },
    /// String column compared for equality on its encoding.
    Field { column: usize, nullable: bool },
    /// String column compared through the hash tree.
    Hash { column: usize, nullable: bool },
}

impl Target {
    pub fn column(&self) -> usize {
        match *self {
            Target::Int { column, .. } | Target::Field { column, .. } | Target::Hash { column, .. } => column,
        }
    }

    fn nullable(&self) -> bool {
        match *self {
            Target::Int { nullable, .. } | Target::Field { nullable, .. } | Target::Hash { nullable, .. } => nullable,
        }
    }

    fn column_def(&self) -> Column {
        let ty = match self {
            Target::Int { .. } => ColumnType::Int64,
            _ => ColumnType::Utf8,
        };
        Column::new(format!("#{}", self.column()), ty, self.nullable())
    }

    pub fn total_bits(&self) -> u32 {
        match self {
            Target::Int { .. } => INT_BITS,
            Target::Hash { .. } => HASH_BITS,
            Target::Field { .. } => 0,
        }
    }

    pub fn atom(&self, level_bits: u32) -> Atom {
        match *self {
            Target::Int { column, .. } => Atom::TopBits { column, bits: level_bits },
            Target::Field { column, .. } => Atom::Field { column },
            Target::Hash { column, .. } => Atom::HashTopBits { column, bits: level_bits },
        }
    }
}

/// The values one atom contributes: level `level_bits` of the cover of `set`
/// over `target` (the whole set for `Field` targets, where the level is 0).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ValueSource {
    pub target: Target,
    pub level_bits: u32,
    pub set: SetExpr,
}

impl ValueSource {
    pub fn atom(&self) -> Atom {
        self.target.atom(self.level_bits)
    }
}

/// Per atom, the sources whose value sets are intersected; the predicate's
/// values for this recipe are the cross product over atoms.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Recipe {
    pub parts: Vec<Vec<ValueSource>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Predicate {
    pub atoms: Vec<Atom>,
    pub recipes: Vec<Recipe>,
}

impl Predicate {
    /// `g_j(row)`: secure concatenation of the atom outputs.
    pub fn eval(&self, cells: &[Vec<u8>]) -> Vec<u8> {
        let outs: Vec<Vec<u8>> = self.atoms.iter().map(|a| a.eval(cells)).collect();
        secure_concat(&outs)
    }

    pub fn columns(&self) -> impl Iterator<Item = usize> + '_ {
        self.atoms.iter().map(Atom::column)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CanonicalFamily {
    pub table: String,
    /// Normalized family SQL.
    pub sql: String,
    pub branching_bits: u32,
    pub projection: Vec<usize>,
    /// Wildcard names per top-level disjunct, in order of appearance.
    pub disjunct_wildcards: Vec<Vec<String>>,
    pub predicates: Vec<Predicate>,
}

/// A family with concrete value sets `X^j`, sorted and deduplicated.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CanonicalView {
    pub family_id: u32,
    pub values: Vec<Vec<Vec<u8>>>,
}

impl CanonicalView {
    pub fn value_count(&self) -> usize {
        self.values.iter().map(Vec::len).sum()
    }

    /// Whether `g_j(row) ∈ X^j` for some `j`.
    pub fn matches(&self, family: &CanonicalFamily, cells: &[Vec<u8>]) -> bool {
        family
            .predicates
            .iter()
            .zip(&self.values)
            .any(|(pred, xs)| !xs.is_empty() && xs.binary_search(&pred.eval(cells)).is_ok())
    }
}

/// Wildcard values plus the set of enabled top-level disjuncts.
#[derive(Debug, Clone, Default)]
pub struct Bindings {
    pub values: BTreeMap<String, Vec<Value>>,
    pub enabled: BTreeSet<u32>,
}

/// The resolved content of a set expression.
#[derive(Debug, Clone, PartialEq, Eq)]
enum Concrete {
    Ordered { set: IntervalSet, null: bool },
    Bytes(BTreeSet<Vec<u8>>),
}

impl Concrete {
    fn is_empty(&self) -> bool {
        match self {
            Concrete::Ordered { set, null } => set.is_empty() && !null,
            Concrete::Bytes(b) => b.is_empty(),
        }
    }
}

fn empty_of(target: Target) -> Concrete {
    match target {
        Target::Field { .. } => Concrete::Bytes(BTreeSet::new()),
        _ => Concrete::Ordered { set: IntervalSet::empty(), null: false },
    }
}

fn piece_values<'a>(piece: &'a Piece, bindings: Option<&'a Bindings>) -> Result<Option<&'a [Value]>, PlanError> {
    match &piece.src {
        Src::Literal(vs) => {
            let enabled = bindings.is_none_or(|b| b.enabled.contains(&piece.origin));
            Ok(enabled.then_some(vs.as_slice()))
        }
        Src::Wildcard(name) => {
            let Some(b) = bindings else {
                return Err(PlanError::Binding(name.clone(), "not bound".into()));
            };
            if !b.enabled.contains(&piece.origin) {
                return Ok(None);
            }
            match b.values.get(name) {
                Some(vs) => Ok(Some(vs.as_slice())),
                None => Err(PlanError::Binding(name.clone(), "not bound".into())),
            }
        }
    }
}

fn ordered_point(target: Target, v: &Value, piece: &Piece) -> Result<Option<BigUint>, PlanError> {
    let bad = |why: &str| match &piece.src {
        Src::Wildcard(w) => PlanError::Binding(w.clone(), why.to_owned()),
        Src::Literal(_) => PlanError::Type(why.to_owned()),
    };
    match (target, v) {
        (Target::Int { .. }, Value::Int(i)) => Ok(Some(BigUint::from(int_to_ordered(*i)))),
        (_, Value::Null) if !target.nullable() => Err(bad("NULL used on a non-nullable column")),
        (Target::Int { .. }, Value::Null) => Ok(None),
        (Target::Hash { .. }, Value::Str(_) | Value::Null) => {
            let cell = encode_cell(v, &target.column_def()).map_err(|e| bad(&e.to_string()))?;
            Ok(Some(BigUint::from_bytes_be(&hash_string(&cell))))
        }
        _ => Err(bad(&format!("value {v} has the wrong type"))),
    }
}

fn resolve(set: &SetExpr, target: Target, bindings: Option<&Bindings>) -> Result<Concrete, PlanError> {
    match set {
        SetExpr::Union(cs) | SetExpr::Intersect(cs) => {
            let intersect = matches!(set, SetExpr::Intersect(_));
            let mut acc: Option<Concrete> = None;
            for c in cs {
                let next = resolve(c, target, bindings)?;
                acc = Some(match (acc, next) {
                    (None, n) => n,
                    (Some(Concrete::Bytes(a)), Concrete::Bytes(b)) => Concrete::Bytes(if intersect {
                        a.intersection(&b).cloned().collect()
                    } else {
                        a.union(&b).cloned().collect()
                    }),
                    (Some(Concrete::Ordered { set: a, null: na }), Concrete::Ordered { set: b, null: nb }) => {
                        if intersect {
                            Concrete::Ordered { set: a.intersect(&b), null: na && nb }
                        } else {
                            Concrete::Ordered { set: a.union(&b), null: na || nb }
                        }
                    }
                    _ => unreachable!("set kinds are fixed by the target"),
                });
            }
            Ok(acc.unwrap_or_else(|| empty_of(target)))
        }
        SetExpr::Values(piece) | SetExpr::Excluding(piece) | SetExpr::Range(_, piece) => {
            let Some(values) = piece_values(piece, bindings)? else {
                return Ok(empty_of(target));
            };
            if let Target::Field { .. } = target {
                let col = target.column_def();
                let mut out = BTreeSet::new();
                for v in values {
                    let cell = encode_cell(v, &col).map_err(|e| match &piece.src {
                        Src::Wildcard(w) => PlanError::Binding(w.clone(), e.to_string()),
                        Src::Literal(_) => PlanError::Type(e.to_string()),
                    })?;
                    out.insert(cell);
                }
                return match set {
                    SetExpr::Values(_) => Ok(Concrete::Bytes(out)),
                    _ => Err(PlanError::Unsupported("string equality target only holds value sets".into())),
                };
            }
            let bits = target.total_bits();
            let mut points = Vec::new();
            let mut null = false;
            for v in values {
                match ordered_point(target, v, piece)? {
                    Some(p) => points.push(p),
                    None => null = true,
                }
            }
            let listed = IntervalSet::from_points(points);
            Ok(match set {
                SetExpr::Values(_) => Concrete::Ordered { set: listed, null },
                SetExpr::Excluding(_) => Concrete::Ordered {
                    set: listed.complement(bits),
                    null: matches!(target, Target::Int { nullable: true, .. }) && !null,
                },
                SetExpr::Range(op, _) => {
                    let [v] = values else {
                        return Err(range_arity(piece));
                    };
                    if null || !matches!(target, Target::Int { .. }) || matches!(v, Value::Null) {
                        return Err(range_arity(piece));
                    }
                    let Value::Int(i) = v else { unreachable!() };
                    let o = int_to_ordered(*i) as u128;
                    let max = u64::MAX as u128;
                    let (lo, hi) = match op {
                        CmpOp::Lt => (0, o.checked_sub(1)),
                        CmpOp::Le => (0, Some(o)),
                        CmpOp::Gt => (o + 1, Some(max)),
                        CmpOp::Ge => (o, Some(max)),
                        _ => unreachable!("range op"),
                    };
                    let set = match hi {
                        Some(hi) if lo <= hi => IntervalSet::interval(BigUint::from(lo), BigUint::from(hi)),
                        _ => IntervalSet::empty(),
                    };
                    Concrete::Ordered { set, null: false }
                }
                _ => unreachable!(),
            })
        }
    }
}

fn range_arity(piece: &Piece) -> PlanError {
    let why = "range comparisons take exactly one non-NULL integer";
    match &piece.src {
        Src::Wildcard(w) => PlanError::Binding(w.clone(), why.into()),
        Src::Literal(_) => PlanError::Type(why.into()),
    }
}

/// True when a literal-only set is empty, so its leaf can collapse to FALSE.
pub fn literal_set_is_empty(set: &SetExpr, target: Target) -> Result<bool, PlanError> {
    if !set.is_literal() {
        return Ok(false);
    }
    Ok(resolve(set, target, None)?.is_empty())
}

/// Validates a literal-only set without evaluating it into levels.
pub fn check_literal_set(set: &SetExpr, target: Target) -> Result<(), PlanError> {
    if set.is_literal() {
        resolve(set, target, None)?;
    }
    Ok(())
}

type LevelMap = BTreeMap<u32, BTreeSet<Vec<u8>>>;

/// Memoizes per-level atom outputs of resolved sets within one planning call.
struct Resolver<'a> {
    bindings: &'a Bindings,
    branching_bits: u32,
    cache: HashMap<(Target, SetExpr), LevelMap>,
}

impl Resolver<'_> {
    fn level_values(&mut self, src: &ValueSource) -> Result<&BTreeSet<Vec<u8>>, PlanError> {
        static EMPTY: BTreeSet<Vec<u8>> = BTreeSet::new();
        let key = (src.target, src.set.clone());
        if !self.cache.contains_key(&key) {
            let levels = self.levels(src.target, &src.set)?;
            self.cache.insert(key.clone(), levels);
        }
        Ok(self.cache[&key].get(&src.level_bits).unwrap_or(&EMPTY))
    }

    fn levels(&self, target: Target, set: &SetExpr) -> Result<LevelMap, PlanError> {
        let mut out = LevelMap::new();
        match resolve(set, target, Some(self.bindings))? {
            Concrete::Bytes(values) => {
                out.insert(0, values);
            }
            Concrete::Ordered { set, null } => {
                let total = target.total_bits();
                for (bits, prefixes) in cover_levels(&set, total, self.branching_bits) {
                    let entry = out.entry(bits).or_default();
                    for p in prefixes {
                        entry.insert(match target {
                            Target::Int { .. } => {
                                let v = p.iter_u64_digits().next().unwrap_or(0);
                                let mut o = vec![1];
                                o.extend_from_slice(&v.to_be_bytes());
                                o
                            }
                            _ => biguint_to_be(&p, 32),
                        });
                    }
                }
                if null {
                    out.entry(self.branching_bits).or_default().insert(vec![0]);
                }
            }
        }
        Ok(out)
    }
}

impl CanonicalFamily {
    pub fn n_pred(&self) -> usize {
        self.predicates.len()
    }

    pub fn wildcards(&self) -> BTreeSet<&str> {
        self.disjunct_wildcards.iter().flatten().map(String::as_str).collect()
    }

    /// Columns referenced by any predicate, sorted.
    pub fn where_columns(&self) -> Vec<usize> {
        let set: BTreeSet<usize> = self.predicates.iter().flat_map(Predicate::columns).collect();
        set.into_iter().collect()
    }

    pub fn family_id(&self) -> u32 {
        let digest = Sha256::digest(self.to_bytes());
        u32::from_be_bytes(digest[..4].try_into().unwrap())
    }

    /// Computes `X^j` for every predicate.
    pub fn instantiate(&self, bindings: &Bindings, value_cap: usize) -> Result<CanonicalView, PlanError> {
        let mut resolver = Resolver { bindings, branching_bits: self.branching_bits, cache: HashMap::new() };
        let mut total = 0usize;
        let mut values = Vec::with_capacity(self.predicates.len());
        for pred in &self.predicates {
            let mut xs: BTreeSet<Vec<u8>> = BTreeSet::new();
            for recipe in &pred.recipes {
                let mut per_atom: Vec<Vec<Vec<u8>>> = Vec::with_capacity(recipe.parts.len());
                for part in &recipe.parts {
                    let mut acc: Option<BTreeSet<Vec<u8>>> = None;
                    for src in part {
                        let vals = resolver.level_values(src)?;
                        acc = Some(match acc {
                            None => vals.clone(),
                            Some(a) => a.intersection(vals).cloned().collect(),
                        });
                    }
                    per_atom.push(acc.unwrap_or_default().into_iter().collect());
                }
                let combos = per_atom.iter().try_fold(1usize, |n, v| n.checked_mul(v.len())).unwrap_or(usize::MAX);
                total = total.saturating_add(combos);
                if total > value_cap {
                    return Err(PlanError::ValueBlowup { values: total, cap: value_cap });
                }
                cross_product(&per_atom, &mut Vec::new(), &mut xs);
            }
            values.push(xs.into_iter().collect());
        }
        Ok(CanonicalView { family_id: self.family_id(), values })
    }

    /// Human-readable predicate list.
    pub fn describe(&self, names: &dyn Fn(usize) -> String) -> Vec<String> {
        self.predicates
            .iter()
            .map(|p| {
                let atoms: Vec<String> = p.atoms.iter().map(|a| a.describe(names)).collect();
                if atoms.is_empty() {
                    "<constant>".to_owned()
                } else if atoms.len() == 1 {
                    atoms[0].clone()
                } else {
                    format!("({})", atoms.join(" || "))
                }
            })
            .collect()
    }
}

fn cross_product(parts: &[Vec<Vec<u8>>], prefix: &mut Vec<Vec<u8>>, out: &mut BTreeSet<Vec<u8>>) {
    match parts.split_first() {
        None => {
            out.insert(secure_concat(prefix));
        }
        Some((first, rest)) => {
            for v in first {
                prefix.push(v.clone());
                cross_product(rest, prefix, out);
                prefix.pop();
            }
        }
    }
}

// Serialization: every field is fixed-width or u32-length-prefixed.

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.0.extend_from_slice(&v.to_be_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_be_bytes());
    }
    fn bytes(&mut self, b: &[u8]) {
        self.u32(b.len() as u32);
        self.0.extend_from_slice(b);
    }
    fn len(&mut self, n: usize) {
        self.u32(n as u32);
    }
}

struct Reader<'a>(&'a [u8]);

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], PlanError> {
        if self.0.len() < n {
            return Err(PlanError::Decode("truncated".into()));
        }
        let (head, tail) = self.0.split_at(n);
        self.0 = tail;
        Ok(head)
    }
    fn u8(&mut self) -> Result<u8, PlanError> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16, PlanError> {
        Ok(u16::from_be_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32, PlanError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn bytes(&mut self) -> Result<&'a [u8], PlanError> {
        let n = self.u32()? as usize;
        self.take(n)
    }
    fn string(&mut self) -> Result<String, PlanError> {
        String::from_utf8(self.bytes()?.to_vec()).map_err(|_| PlanError::Decode("invalid UTF-8".into()))
    }
    fn len(&mut self) -> Result<usize, PlanError> {
        let n = self.u32()? as usize;
        // Every element takes at least one byte.
        if n > self.0.len() {
            return Err(PlanError::Decode("count exceeds remaining bytes".into()));
        }
        Ok(n)
    }
}

fn bad(what: &str) -> PlanError {
    PlanError::Decode(what.to_owned())
}

fn op_code(op: CmpOp) -> u8 {
    match op {
        CmpOp::Eq => 1,
        CmpOp::Ne => 2,
        CmpOp::Lt => 3,
        CmpOp::Le => 4,
        CmpOp::Gt => 5,
        CmpOp::Ge => 6,
        CmpOp::In => 7,
        CmpOp::NotIn => 8,
    }
}

fn op_from_code(c: u8) -> Result<CmpOp, PlanError> {
    Ok(match c {
        1 => CmpOp::Eq,
        2 => CmpOp::Ne,
        3 => CmpOp::Lt,
        4 => CmpOp::Le,
        5 => CmpOp::Gt,
        6 => CmpOp::Ge,
        7 => CmpOp::In,
        8 => CmpOp::NotIn,
        _ => return Err(bad("unknown operator")),
    })
}

fn write_value(w: &mut Writer, v: &Value) {
    match v {
        Value::Null => w.u8(0),
        Value::Int(i) => {
            w.u8(1);
            w.0.extend_from_slice(&i.to_be_bytes());
        }
        Value::Str(s) => {
            w.u8(2);
            w.bytes(s.as_bytes());
        }
    }
}

fn read_value(r: &mut Reader<'_>) -> Result<Value, PlanError> {
    Ok(match r.u8()? {
        0 => Value::Null,
        1 => Value::Int(i64::from_be_bytes(r.take(8)?.try_into().unwrap())),
        2 => Value::Str(String::from_utf8(r.bytes()?.to_vec()).map_err(|_| bad("invalid UTF-8"))?),
        _ => return Err(bad("unknown value tag")),
    })
}

fn write_piece(w: &mut Writer, p: &Piece) {
    w.u32(p.origin);
    match &p.src {
        Src::Wildcard(name) => {
            w.u8(1);
            w.bytes(name.as_bytes());
        }
        Src::Literal(vs) => {
            w.u8(2);
            w.len(vs.len());
            vs.iter().for_each(|v| write_value(w, v));
        }
    }
}

fn read_piece(r: &mut Reader<'_>) -> Result<Piece, PlanError> {
    let origin = r.u32()?;
    let src = match r.u8()? {
        1 => Src::Wildcard(r.string()?),
        2 => {
            let n = r.len()?;
            Src::Literal((0..n).map(|_| read_value(r)).collect::<Result<_, _>>()?)
        }
        _ => return Err(bad("unknown source tag")),
    };
    Ok(Piece { src, origin })
}

fn write_set(w: &mut Writer, s: &SetExpr) {
    match s {
        SetExpr::Values(p) => {
            w.u8(1);
            write_piece(w, p);
        }
        SetExpr::Excluding(p) => {
            w.u8(2);
            write_piece(w, p);
        }
        SetExpr::Range(op, p) => {
            w.u8(3);
            w.u8(op_code(*op));
            write_piece(w, p);
        }
        SetExpr::Union(cs) | SetExpr::Intersect(cs) => {
            w.u8(if matches!(s, SetExpr::Union(_)) { 4 } else { 5 });
            w.len(cs.len());
            cs.iter().for_each(|c| write_set(w, c));
        }
    }
}

fn read_set(r: &mut Reader<'_>, depth: usize) -> Result<SetExpr, PlanError> {
    if depth > 64 {
        return Err(bad("set expression nested too deeply"));
    }
    Ok(match r.u8()? {
        1 => SetExpr::Values(read_piece(r)?),
        2 => SetExpr::Excluding(read_piece(r)?),
        3 => {
            let op = op_from_code(r.u8()?)?;
            if !op.is_range() {
                return Err(bad("range with a non-range operator"));
            }
            SetExpr::Range(op, read_piece(r)?)
        }
        tag @ (4 | 5) => {
            let n = r.len()?;
            let cs = (0..n).map(|_| read_set(r, depth + 1)).collect::<Result<_, _>>()?;
            if tag == 4 {
                SetExpr::Union(cs)
            } else {
                SetExpr::Intersect(cs)
            }
        }
        _ => return Err(bad("unknown set tag")),
    })
}

fn write_target(w: &mut Writer, t: &Target) {
    let (kind, column, nullable) = match *t {
        Target::Int { column, nullable } => (1, column, nullable),
        Target::Field { column, nullable } => (2, column, nullable),
        Target::Hash { column, nullable } => (3, column, nullable),
    };
    w.u8(kind);
    w.u32(column as u32);
    w.u8(nullable as u8);
}

fn read_target(r: &mut Reader<'_>) -> Result<Target, PlanError> {
    let kind = r.u8()?;
    let column = r.u32()? as usize;
    let nullable = match r.u8()? {
        0 => false,
        1 => true,
        _ => return Err(bad("bad nullable flag")),
    };
    Ok(match kind {
        1 => Target::Int { column, nullable },
        2 => Target::Field { column, nullable },
        3 => Target::Hash { column, nullable },
        _ => return Err(bad("unknown target kind")),
    })
}

fn write_atom(w: &mut Writer, a: &Atom) {
    let (kind, column, bits) = match *a {
        Atom::Field { column } => (1, column, 0),
        Atom::TopBits { column, bits } => (2, column, bits),
        Atom::HashTopBits { column, bits } => (3, column, bits),
    };
    w.u8(kind);
    w.u32(column as u32);
    w.u32(bits);
}

fn read_atom(r: &mut Reader<'_>) -> Result<Atom, PlanError> {
    let kind = r.u8()?;
    let column = r.u32()? as usize;
    let bits = r.u32()?;
    Ok(match kind {
        1 if bits == 0 => Atom::Field { column },
        2 if (1..=INT_BITS).contains(&bits) => Atom::TopBits { column, bits },
        3 if (1..=HASH_BITS).contains(&bits) => Atom::HashTopBits { column, bits },
        _ => return Err(bad("invalid atom")),
    })
}

impl CanonicalFamily {
    /// Deterministic binary form; identical families give identical bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(MAGIC);
        w.u16(VERSION);
        w.bytes(self.table.as_bytes());
        w.bytes(self.sql.as_bytes());
        w.u32(self.branching_bits);
        w.len(self.projection.len());
        self.projection.iter().for_each(|&c| w.u32(c as u32));
        w.len(self.disjunct_wildcards.len());
        for names in &self.disjunct_wildcards {
            w.len(names.len());
            names.iter().for_each(|n| w.bytes(n.as_bytes()));
        }
        w.len(self.predicates.len());
        for pred in &self.predicates {
            w.len(pred.atoms.len());
            pred.atoms.iter().for_each(|a| write_atom(&mut w, a));
            w.len(pred.recipes.len());
            for recipe in &pred.recipes {
                for part in &recipe.parts {
                    w.len(part.len());
                    for src in part {
                        write_target(&mut w, &src.target);
                        w.u32(src.level_bits);
                        write_set(&mut w, &src.set);
                    }
                }
            }
        }
        w.0
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, PlanError> {
        let mut r = Reader(bytes);
        if r.take(4)? != MAGIC {
            return Err(bad("bad magic"));
        }
        let version = r.u16()?;
        if version != VERSION {
            return Err(PlanError::Decode(format!("unsupported version {version}")));
        }
        let table = r.string()?;
        let sql = r.string()?;
        let branching_bits = r.u32()?;
        if !super::valid_branching_bits(branching_bits) {
            return Err(bad("invalid branching bits"));
        }
        let n = r.len()?;
        let projection = (0..n).map(|_| r.u32().map(|c| c as usize)).collect::<Result<_, _>>()?;
        let n = r.len()?;
        let mut disjunct_wildcards = Vec::with_capacity(n);
        for _ in 0..n {
            let m = r.len()?;
            disjunct_wildcards.push((0..m).map(|_| r.string()).collect::<Result<_, _>>()?);
        }
        let n = r.len()?;
        let mut predicates = Vec::with_capacity(n);
        for _ in 0..n {
            let m = r.len()?;
            let atoms: Vec<Atom> = (0..m).map(|_| read_atom(&mut r)).collect::<Result<_, _>>()?;
            let k = r.len()?;
            let mut recipes = Vec::with_capacity(k);
            for _ in 0..k {
                let mut parts = Vec::with_capacity(atoms.len());
                for atom in &atoms {
                    let s = r.len()?;
                    let mut part = Vec::with_capacity(s);
                    for _ in 0..s {
                        let target = read_target(&mut r)?;
                        let level_bits = r.u32()?;
                        let set = read_set(&mut r, 0)?;
                        let src = ValueSource { target, level_bits, set };
                        if &src.atom() != atom {
                            return Err(bad("value source does not match its atom"));
                        }
                        part.push(src);
                    }
                    parts.push(part);
                }
                recipes.push(Recipe { parts });
            }
            predicates.push(Predicate { atoms, recipes });
        }
        if !r.0.is_empty() {
            return Err(bad("trailing bytes"));
        }
        if predicates.is_empty() {
            return Err(bad("family without predicates"));
        }
        Ok(CanonicalFamily { table, sql, branching_bits, projection, disjunct_wildcards, predicates })
    }
}
