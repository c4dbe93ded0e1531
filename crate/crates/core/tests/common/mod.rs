//! Random tables, families and views shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::Rng;

use lakeveil_core::backend::{self, FamilyParams, RevealParams};
use lakeveil_core::oracle::Selected;
use lakeveil_core::planner::ast::{BoolExpr, CmpOp, Comparison, Literal, Operand, Projection, ViewFamilyAst};
use lakeveil_core::planner::{CanonicalFamily, CanonicalView};
use lakeveil_core::table::{Column, ColumnType, PlainPartition, Schema, Value};
use lakeveil_core::SymKey;

pub const INTS: [i64; 9] = [-3, -2, -1, 0, 1, 2, 3, i64::MIN, i64::MAX];
pub const STRS: [&str; 6] = ["", "a", "b", "ab", "a'b", "zz"];

pub struct Case {
    pub schema: Schema,
    pub rows: Vec<Vec<Value>>,
    pub family: ViewFamilyAst,
    /// Wildcard values; wildcards absent here are unbound.
    pub bindings: BTreeMap<String, Vec<Value>>,
    pub branching_bits: u32,
}

impl Case {
    pub fn family_sql(&self) -> String {
        self.family.to_string()
    }

    /// The family with every wildcard replaced by its bound values. Only
    /// meaningful when all wildcards are bound.
    pub fn view_sql(&self) -> String {
        let mut view = self.family.clone();
        view.selection = view.selection.map_leaves(&mut |mut c: Comparison| {
            if let Operand::Wildcard(w) = &c.operand {
                c.operand = Operand::Literals(self.bindings[w].iter().map(literal).collect());
            }
            BoolExpr::Leaf(c)
        });
        view.to_string()
    }

    pub fn all_bound(&self) -> bool {
        self.family.wildcards().iter().all(|w| self.bindings.contains_key(*w))
    }
}

pub fn literal(v: &Value) -> Literal {
    match v {
        Value::Null => Literal::Null,
        Value::Int(i) => Literal::Int(*i),
        Value::Str(s) => Literal::Str(s.clone()),
    }
}

fn random_value(rng: &mut StdRng, col: &Column, allow_null: bool) -> Value {
    if allow_null && col.nullable && rng.gen_bool(0.15) {
        return Value::Null;
    }
    match col.ty {
        ColumnType::Int64 => Value::Int(*INTS.choose(rng).unwrap()),
        ColumnType::Utf8 => Value::Str(STRS.choose(rng).unwrap().to_string()),
    }
}

pub fn random_schema(rng: &mut StdRng, max_cols: usize) -> Schema {
    let n = rng.gen_range(1..=max_cols);
    let cols = (0..n)
        .map(|i| {
            let ty = if rng.gen_bool(0.6) { ColumnType::Int64 } else { ColumnType::Utf8 };
            Column::new(format!("c{i}"), ty, rng.gen_bool(0.4))
        })
        .collect();
    Schema::new(cols).unwrap()
}

pub fn random_rows(rng: &mut StdRng, schema: &Schema, max_rows: usize) -> Vec<Vec<Value>> {
    let n = rng.gen_range(0..=max_rows);
    (0..n).map(|_| schema.columns().iter().map(|c| random_value(rng, c, true)).collect()).collect()
}

struct LeafGen<'a> {
    schema: &'a Schema,
    next_wildcard: usize,
    /// Wildcard name, column and operator.
    wildcards: Vec<(String, usize, CmpOp)>,
    leaves: usize,
}

impl LeafGen<'_> {
    fn leaf(&mut self, rng: &mut StdRng) -> BoolExpr<Comparison> {
        self.leaves += 1;
        let c = rng.gen_range(0..self.schema.len());
        let col = self.schema.column(c);
        let op = match col.ty {
            ColumnType::Int64 => {
                *[CmpOp::Eq, CmpOp::Ne, CmpOp::Lt, CmpOp::Le, CmpOp::Gt, CmpOp::Ge, CmpOp::In, CmpOp::NotIn]
                    .choose(rng)
                    .unwrap()
            }
            ColumnType::Utf8 => *[CmpOp::Eq, CmpOp::Ne, CmpOp::In, CmpOp::NotIn].choose(rng).unwrap(),
        };
        let operand = if rng.gen_bool(0.6) {
            let name = format!("w{}", self.next_wildcard);
            self.next_wildcard += 1;
            self.wildcards.push((name.clone(), c, op));
            Operand::Wildcard(name)
        } else {
            let n = if matches!(op, CmpOp::In | CmpOp::NotIn) { rng.gen_range(1..=3) } else { 1 };
            let allow_null = !op.is_range();
            Operand::Literals((0..n).map(|_| literal(&random_value(rng, col, allow_null))).collect())
        };
        BoolExpr::Leaf(Comparison { column: col.name.clone(), op, operand })
    }

    fn tree(&mut self, rng: &mut StdRng, depth: u32) -> BoolExpr<Comparison> {
        if depth == 0 || self.leaves >= 5 || rng.gen_bool(0.35) {
            return self.leaf(rng);
        }
        match rng.gen_range(0..5) {
            0 => BoolExpr::negate(self.tree(rng, depth - 1)),
            k => {
                let n = rng.gen_range(2..=3);
                let children = (0..n).map(|_| self.tree(rng, depth - 1)).collect();
                if k <= 2 {
                    BoolExpr::And(children)
                } else {
                    BoolExpr::Or(children)
                }
            }
        }
    }
}

/// A random case. With `bind_all`, every wildcard gets values; otherwise
/// some stay unbound.
pub fn random_case(rng: &mut StdRng, max_cols: usize, max_rows: usize, bind_all: bool) -> Case {
    let schema = random_schema(rng, max_cols);
    let rows = random_rows(rng, &schema, max_rows);
    let (g, selection) = loop {
        let mut g = LeafGen { schema: &schema, next_wildcard: 0, wildcards: Vec::new(), leaves: 0 };
        let tree = g.tree(rng, 3).flatten();
        if g.leaves <= 5 {
            break (g, tree);
        }
    };
    let projection = if rng.gen_bool(0.4) {
        Projection::Star
    } else {
        let used: Vec<usize> = selection
            .leaves()
            .iter()
            .map(|c| schema.index_of(&c.column).unwrap())
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect();
        let mut cols: Vec<usize> = (0..schema.len()).filter(|c| used.contains(c) || rng.gen_bool(0.5)).collect();
        cols.shuffle(rng);
        Projection::Columns(cols.into_iter().map(|c| schema.column(c).name.clone()).collect())
    };
    let mut bindings = BTreeMap::new();
    for (name, c, op) in &g.wildcards {
        if !bind_all && rng.gen_bool(0.2) {
            continue;
        }
        let col = schema.column(*c);
        let n = if matches!(op, CmpOp::In | CmpOp::NotIn) { rng.gen_range(1..=3) } else { 1 };
        let vals: Vec<Value> = (0..n).map(|_| random_value(rng, col, !op.is_range())).collect();
        bindings.insert(name.clone(), vals);
    }
    // Every Int leaf expands into one leaf per tree level, so ANDed Int
    // leaves multiply the clause count.
    let int_leaves = selection
        .leaves()
        .iter()
        .filter(|c| schema.column(schema.index_of(&c.column).unwrap()).ty == ColumnType::Int64)
        .count() as u32;
    let fits: Vec<u32> = [1u32, 2, 4, 8]
        .into_iter()
        .filter(|b| (64u64 / *b as u64).checked_pow(int_leaves).is_some_and(|n| n <= 4096))
        .collect();
    // With several Int leaves the smallest fitting factor also keeps the
    // cross products of their value sets small.
    let branching_bits = if int_leaves <= 1 { *fits.choose(rng).unwrap() } else { fits.first().copied().unwrap_or(8) };
    let family = ViewFamilyAst { projection, table: "t".into(), selection };
    Case { schema, rows, family, bindings, branching_bits }
}

/// Runs the full encrypted pipeline over one partition and returns the
/// revealed rows and per-key counts.
pub fn encrypted_reveal(
    schema: &Schema,
    rows: &[Vec<Value>],
    family: &CanonicalFamily,
    view: &CanonicalView,
    params: &FamilyParams,
    partition: u32,
    seed: u64,
) -> (Selected, Vec<Vec<u32>>) {
    use rand::SeedableRng;
    let mut rng = StdRng::seed_from_u64(seed);
    let tk = SymKey::random(&mut rng);
    let fk = SymKey::random(&mut rng);
    let plain = PlainPartition::new(partition, rows.to_vec()).unwrap();
    let mut part = backend::encrypt_table_partition(&plain, schema, &tk).unwrap();
    backend::add_family_partition(&mut part, &tk, family, &fk, params, &mut rng).unwrap();
    let keys = backend::view_gen(view, &fk, params.tag_len).unwrap();
    let out = backend::reveal_view_partition(&part, family, &keys, &RevealParams::default()).unwrap();
    (out.rows, out.counts)
}

/// Plans a case's family and view, falling back to other branching factors
/// when the first choice exceeds the size caps. `None` when every factor
/// does, or when not all wildcards are bound and `partial` is false.
pub fn plan_case(case: &Case, value_cap: usize, partial: bool) -> Option<(CanonicalFamily, CanonicalView)> {
    use lakeveil_core::error::PlanError;
    use lakeveil_core::planner::{plan_family, plan_view, plan_view_with_bindings, PlannerParams};
    let mut order = vec![case.branching_bits];
    order.extend([1, 2, 4, 8].into_iter().filter(|b| *b != case.branching_bits));
    for bits in order {
        let p = PlannerParams { branching_bits: bits, dnf_cap: 4096, value_cap };
        let fam = match plan_family(&case.family_sql(), &case.schema, &p) {
            Ok(f) => f,
            Err(PlanError::Blowup { .. }) => continue,
            Err(e) => panic!("{}: {e}", case.family_sql()),
        };
        let view = if partial {
            plan_view_with_bindings(&fam, &case.bindings, &p)
        } else {
            plan_view(&case.view_sql(), &fam, &case.schema, &p)
        };
        match view {
            Ok(v) => return Some((fam, v)),
            Err(PlanError::ValueBlowup { .. }) => continue,
            Err(e) => panic!("{}: {e}", case.family_sql()),
        }
    }
    None
}
