//! Plaintext reference evaluator. Interprets view and family SQL directly
//! over rows, independently of the canonical rewrite, so the two can be
//! compared.
//!
//! Comparison semantics: `NULL = NULL` holds, `NULL != v` holds for every
//! non-NULL `v`, and range comparisons never hold on NULL.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use crate::error::PlanError;
use crate::planner::ast::{BoolExpr, CmpOp, Comparison, Literal, Operand};
use crate::planner::bind::bind;
use crate::planner::{parse, CanonicalFamily, CanonicalView, SqlKind};
use crate::table::{encode_cell, Schema, Value};

/// Rows a view selects, as `(row index, projected values)`.
pub type Selected = Vec<(usize, Vec<Value>)>;

fn literal_value(l: &Literal) -> Value {
    match l {
        Literal::Null => Value::Null,
        Literal::Int(v) => Value::Int(*v),
        Literal::Str(s) => Value::Str(s.clone()),
    }
}

fn compare(cell: &Value, op: CmpOp, operand: &[Value]) -> bool {
    match op {
        CmpOp::Eq | CmpOp::In => operand.iter().any(|v| v == cell),
        CmpOp::Ne | CmpOp::NotIn => operand.iter().all(|v| v != cell),
        CmpOp::Lt | CmpOp::Le | CmpOp::Gt | CmpOp::Ge => {
            let [v] = operand else { return false };
            let ord = match (cell, v) {
                (Value::Int(a), Value::Int(b)) => a.cmp(b),
                _ => return false,
            };
            match op {
                CmpOp::Lt => ord == Ordering::Less,
                CmpOp::Le => ord != Ordering::Greater,
                CmpOp::Gt => ord == Ordering::Greater,
                _ => ord != Ordering::Less,
            }
        }
    }
}

fn eval_tree(e: &BoolExpr<Comparison>, schema: &Schema, row: &[Value], values: &BTreeMap<String, Vec<Value>>) -> bool {
    match e {
        BoolExpr::Leaf(c) => {
            let col = schema.index_of(&c.column).expect("columns are checked by bind");
            match &c.operand {
                Operand::Literals(ls) => {
                    let vs: Vec<Value> = ls.iter().map(literal_value).collect();
                    compare(&row[col], c.op, &vs)
                }
                Operand::Wildcard(w) => compare(&row[col], c.op, values.get(w).map_or(&[][..], Vec::as_slice)),
            }
        }
        BoolExpr::And(cs) => cs.iter().all(|c| eval_tree(c, schema, row, values)),
        BoolExpr::Or(cs) => cs.iter().any(|c| eval_tree(c, schema, row, values)),
        BoolExpr::Not(c) => !eval_tree(c, schema, row, values),
        BoolExpr::True => true,
        BoolExpr::False => false,
    }
}

fn wildcards_of(e: &BoolExpr<Comparison>) -> Vec<&str> {
    e.leaves()
        .into_iter()
        .filter_map(|c| match &c.operand {
            Operand::Wildcard(w) => Some(w.as_str()),
            Operand::Literals(_) => None,
        })
        .collect()
}

fn select(
    sql: &str,
    kind: SqlKind,
    schema: &Schema,
    rows: &[Vec<Value>],
    values: &BTreeMap<String, Vec<Value>>,
) -> Result<Selected, PlanError> {
    let ast = parse(sql, kind)?;
    let bound = bind(&ast, schema)?;
    let where_tree = ast.selection.flatten();
    // A family disjunct takes part only when all of its wildcards are bound.
    let disjuncts: Vec<&BoolExpr<Comparison>> = match &where_tree {
        BoolExpr::Or(cs) => cs.iter().collect(),
        other => vec![other],
    };
    let active: Vec<&BoolExpr<Comparison>> =
        disjuncts.into_iter().filter(|d| wildcards_of(d).iter().all(|w| values.contains_key(*w))).collect();
    Ok(rows
        .iter()
        .enumerate()
        .filter(|(_, row)| active.iter().any(|d| eval_tree(d, schema, row, values)))
        .map(|(i, row)| (i, bound.projection.iter().map(|&c| row[c].clone()).collect()))
        .collect())
}

/// Rows selected by a literal view.
pub fn eval_view(schema: &Schema, rows: &[Vec<Value>], view_sql: &str) -> Result<Selected, PlanError> {
    select(view_sql, SqlKind::View, schema, rows, &BTreeMap::new())
}

/// Rows selected by a family under explicit wildcard bindings, with the same
/// disjunct enabling rule as the planner.
pub fn eval_family(
    schema: &Schema,
    rows: &[Vec<Value>],
    family_sql: &str,
    values: &BTreeMap<String, Vec<Value>>,
) -> Result<Selected, PlanError> {
    select(family_sql, SqlKind::Family, schema, rows, values)
}

/// Rows a canonical view selects, by evaluating every predicate on the
/// plaintext cells.
pub fn eval_canonical(
    schema: &Schema,
    rows: &[Vec<Value>],
    family: &CanonicalFamily,
    view: &CanonicalView,
) -> Result<Selected, PlanError> {
    let mut out = Vec::new();
    for (i, row) in rows.iter().enumerate() {
        let cells = row
            .iter()
            .zip(schema.columns())
            .map(|(v, c)| encode_cell(v, c))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| PlanError::Type(e.to_string()))?;
        if view.matches(family, &cells) {
            out.push((i, family.projection.iter().map(|&c| row[c].clone()).collect()));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner::{plan_family, plan_view, PlannerParams};
    use crate::table::Column;

    fn data() -> (Schema, Vec<Vec<Value>>) {
        let schema = Schema::new(vec![
            Column::new("a", crate::table::ColumnType::Int64, true),
            Column::new("s", crate::table::ColumnType::Utf8, true),
        ])
        .unwrap();
        let rows = vec![
            vec![Value::Int(1), Value::Str("x".into())],
            vec![Value::Null, Value::Str("y".into())],
            vec![Value::Int(-5), Value::Null],
            vec![Value::Int(7), Value::Str("x".into())],
        ];
        (schema, rows)
    }

    fn idx(sel: &Selected) -> Vec<usize> {
        sel.iter().map(|(i, _)| *i).collect()
    }

    #[test]
    fn null_semantics() {
        let (schema, rows) = data();
        let q = |w: &str| idx(&eval_view(&schema, &rows, &format!("SELECT * FROM t WHERE {w}")).unwrap());
        assert_eq!(q("a = NULL"), vec![1]);
        assert_eq!(q("a != 1"), vec![1, 2, 3]);
        assert_eq!(q("a < 5"), vec![0, 2]);
        assert_eq!(q("NOT a < 5"), vec![1, 3]);
        assert_eq!(q("s NOT IN ('x', NULL)"), vec![1]);
    }

    #[test]
    fn agrees_with_planner() {
        let (schema, rows) = data();
        let params = PlannerParams { branching_bits: 4, ..Default::default() };
        let fam = plan_family("SELECT a, s FROM t WHERE a >= ?lo OR s NOT IN ?ex", &schema, &params).unwrap();
        for view in [
            "SELECT a, s FROM t WHERE a >= 2 OR s NOT IN ('x')",
            "SELECT a, s FROM t WHERE a >= -10",
            "SELECT a, s FROM t WHERE s NOT IN ('y', NULL)",
        ] {
            let cv = plan_view(view, &fam, &schema, &params).unwrap();
            assert_eq!(
                eval_view(&schema, &rows, view).unwrap(),
                eval_canonical(&schema, &rows, &fam, &cv).unwrap(),
                "{view}"
            );
        }
    }

    #[test]
    fn family_bindings_enable_disjuncts() {
        let (schema, rows) = data();
        let mut values = BTreeMap::new();
        values.insert("v".to_string(), vec![Value::Str("y".into())]);
        let sel = eval_family(&schema, &rows, "SELECT * FROM t WHERE a = ?u OR s = ?v", &values).unwrap();
        assert_eq!(idx(&sel), vec![1]);
    }
}
