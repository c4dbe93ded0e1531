//! Resolves column names against a schema and checks the grammar rules that
//! need types: projection coverage, string operators, literal types.

use std::collections::BTreeMap;

use crate::error::PlanError;
use crate::table::{ColumnType, Schema, Value};

use super::ast::{BoolExpr, CmpOp, Comparison, Literal, Operand, Projection, ViewFamilyAst};
use super::canonical::Src;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundLeaf {
    pub column: usize,
    pub ty: ColumnType,
    pub nullable: bool,
    pub op: CmpOp,
    pub src: Src,
    /// Index of the top-level disjunct containing this leaf.
    pub origin: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bound {
    pub table: String,
    pub projection: Vec<usize>,
    /// Top-level OR operands of the flattened WHERE tree.
    pub disjuncts: Vec<BoolExpr<BoundLeaf>>,
}

impl Bound {
    pub fn disjunct_wildcards(&self) -> Vec<Vec<String>> {
        self.disjuncts
            .iter()
            .map(|d| {
                let mut names: Vec<String> = Vec::new();
                for leaf in d.leaves() {
                    if let Src::Wildcard(w) = &leaf.src {
                        if !names.contains(w) {
                            names.push(w.clone());
                        }
                    }
                }
                names
            })
            .collect()
    }
}

fn literal_value(lit: &Literal) -> Value {
    match lit {
        Literal::Null => Value::Null,
        Literal::Int(v) => Value::Int(*v),
        Literal::Str(s) => Value::Str(s.clone()),
    }
}

/// Checks that `value` may appear as an operand on `column`.
pub fn check_value(schema: &Schema, column: usize, value: &Value) -> Result<(), String> {
    let col = schema.column(column);
    match (col.ty, value) {
        (_, Value::Null) if !col.nullable => Err(format!("column {} is not nullable", col.name)),
        (_, Value::Null) | (ColumnType::Int64, Value::Int(_)) | (ColumnType::Utf8, Value::Str(_)) => Ok(()),
        (ColumnType::Int64, _) => Err(format!("column {} holds integers, got {value:?}", col.name)),
        (ColumnType::Utf8, _) => Err(format!("column {} holds strings, got {value:?}", col.name)),
    }
}

pub fn bind(ast: &ViewFamilyAst, schema: &Schema) -> Result<Bound, PlanError> {
    let projection: Vec<usize> = match &ast.projection {
        Projection::Star => (0..schema.len()).collect(),
        Projection::Columns(names) => {
            let mut out = Vec::with_capacity(names.len());
            for name in names {
                let idx = schema.index_of(name).ok_or_else(|| PlanError::UnknownColumn(name.clone()))?;
                if out.contains(&idx) {
                    return Err(PlanError::Unsupported(format!("column {name} projected twice")));
                }
                out.push(idx);
            }
            out
        }
    };

    // Wildcard name -> (column type, used with a range operator).
    let mut wildcard_types: BTreeMap<String, ColumnType> = BTreeMap::new();
    let mut bind_leaf = |cmp: Comparison| -> Result<BoolExpr<BoundLeaf>, PlanError> {
        let column = schema.index_of(&cmp.column).ok_or_else(|| PlanError::UnknownColumn(cmp.column.clone()))?;
        if !projection.contains(&column) {
            return Err(PlanError::NotProjected(cmp.column.clone()));
        }
        let col = schema.column(column);
        if col.ty == ColumnType::Utf8 && cmp.op.is_range() {
            return Err(PlanError::StringOperator { column: cmp.column.clone(), op: cmp.op.symbol().into() });
        }
        let src = match cmp.operand {
            Operand::Wildcard(name) => {
                match wildcard_types.get(&name) {
                    Some(ty) if *ty != col.ty => {
                        return Err(PlanError::Type(format!("wildcard ?{name} is used on columns of different types")))
                    }
                    _ => {
                        wildcard_types.insert(name.clone(), col.ty);
                    }
                }
                Src::Wildcard(name)
            }
            Operand::Literals(lits) => {
                let values: Vec<Value> = lits.iter().map(literal_value).collect();
                for v in &values {
                    check_value(schema, column, v).map_err(PlanError::Type)?;
                }
                if cmp.op.is_range() && (values.len() != 1 || values[0].is_null()) {
                    return Err(PlanError::Type("range comparisons take exactly one non-NULL value".into()));
                }
                Src::Literal(values)
            }
        };
        Ok(BoolExpr::Leaf(BoundLeaf { column, ty: col.ty, nullable: col.nullable, op: cmp.op, src, origin: 0 }))
    };

    let tree = ast.selection.clone().try_map_leaves(&mut bind_leaf)?.flatten();
    let disjuncts = match tree {
        BoolExpr::Or(items) => items,
        other => vec![other],
    };
    let disjuncts = disjuncts
        .into_iter()
        .enumerate()
        .map(|(i, d)| {
            d.map_leaves(&mut |mut leaf| {
                leaf.origin = i as u32;
                BoolExpr::Leaf(leaf)
            })
        })
        .collect();
    Ok(Bound { table: ast.table.clone(), projection, disjuncts })
}
