//! Restricted SQL for view families and views, rewritten into canonical form.

pub mod ast;
pub mod bind;
pub mod canonical;
pub mod cover;
pub mod parse;
pub mod passes;

use std::collections::{BTreeMap, BTreeSet};

use crate::error::PlanError;
use crate::table::{Schema, Value};

use ast::BoolExpr;
use bind::{bind, Bound, BoundLeaf};
use canonical::Src;
pub use canonical::{Atom, Bindings, CanonicalFamily, CanonicalView, Predicate};
pub use parse::{parse, SqlKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlannerParams {
    /// log2 of the bit-tree branching factor.
    pub branching_bits: u32,
    /// Largest number of DNF clauses before planning fails.
    pub dnf_cap: usize,
    /// Largest total number of wildcard values a view may expand to.
    pub value_cap: usize,
}

impl Default for PlannerParams {
    fn default() -> Self {
        PlannerParams { branching_bits: 8, dnf_cap: 4096, value_cap: 1 << 22 }
    }
}

pub fn valid_branching_bits(bits: u32) -> bool {
    matches!(bits, 1 | 2 | 4 | 8 | 16)
}

impl PlannerParams {
    pub fn validate(&self) -> Result<(), PlanError> {
        if !valid_branching_bits(self.branching_bits) {
            return Err(PlanError::Param(format!(
                "branching bits must be 1, 2, 4, 8 or 16, got {}",
                self.branching_bits
            )));
        }
        if self.dnf_cap == 0 || self.value_cap == 0 {
            return Err(PlanError::Param("caps must be at least 1".into()));
        }
        Ok(())
    }
}

fn parse_and_bind(sql: &str, kind: SqlKind, schema: &Schema) -> Result<(String, Bound), PlanError> {
    let mut ast = parse(sql, kind)?;
    ast.selection = ast.selection.flatten();
    let bound = bind(&ast, schema)?;
    Ok((ast.to_string(), bound))
}

/// Plans a view family.
pub fn plan_family(sql: &str, schema: &Schema, params: &PlannerParams) -> Result<CanonicalFamily, PlanError> {
    params.validate()?;
    let (normalized, bound) = parse_and_bind(sql, SqlKind::Family, schema)?;
    let disjunct_wildcards = bound.disjunct_wildcards();
    let tree = passes::push_not_down(BoolExpr::Or(bound.disjuncts));
    let tree = passes::to_ranges(tree)?;
    let tree = passes::consolidate(tree)?;
    let tree = passes::ranges_to_in(tree, params.branching_bits);
    let tree = passes::to_dnf(tree, params.dnf_cap)?;
    let predicates = passes::eliminate_ands(&tree, params.dnf_cap)?;
    Ok(CanonicalFamily {
        table: bound.table,
        sql: normalized,
        branching_bits: params.branching_bits,
        projection: bound.projection,
        disjunct_wildcards,
        predicates,
    })
}

/// Values for a family with explicit wildcard bindings. A disjunct is active
/// only when all of its wildcards are bound; literal-only disjuncts are
/// always active.
pub fn plan_view_with_bindings(
    family: &CanonicalFamily,
    values: &BTreeMap<String, Vec<Value>>,
    params: &PlannerParams,
) -> Result<CanonicalView, PlanError> {
    let known = family.wildcards();
    if let Some(extra) = values.keys().find(|k| !known.contains(k.as_str())) {
        return Err(PlanError::Binding(extra.clone(), "not a wildcard of this family".into()));
    }
    let enabled = family
        .disjunct_wildcards
        .iter()
        .enumerate()
        .filter(|(_, names)| names.iter().all(|n| values.contains_key(n)))
        .map(|(i, _)| i as u32)
        .collect();
    family.instantiate(&Bindings { values: dedup(values), enabled }, params.value_cap)
}

fn dedup(values: &BTreeMap<String, Vec<Value>>) -> BTreeMap<String, Vec<Value>> {
    values
        .iter()
        .map(|(k, vs)| (k.clone(), vs.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect()))
        .collect()
}

/// Literal-only disjuncts enabled, nothing bound: the values a family fixes
/// by itself.
pub fn plan_literals(family: &CanonicalFamily, params: &PlannerParams) -> Result<CanonicalView, PlanError> {
    plan_view_with_bindings(family, &BTreeMap::new(), params)
}

/// Plans a view written against a family: the view must repeat the family's
/// WHERE structure with literal values in place of wildcards. Family
/// disjuncts the view leaves out select nothing. A family disjunct made of a
/// single `IN ?x` (or `= ?x`) may be matched by several view disjuncts, whose
/// values accumulate.
pub fn plan_view(
    view_sql: &str,
    family: &CanonicalFamily,
    schema: &Schema,
    params: &PlannerParams,
) -> Result<CanonicalView, PlanError> {
    let bindings = match_view(view_sql, family, schema)?;
    family.instantiate(&bindings, params.value_cap)
}

/// Unifies a view with its family and returns the implied bindings.
pub fn match_view(view_sql: &str, family: &CanonicalFamily, schema: &Schema) -> Result<Bindings, PlanError> {
    let (_, fam) = parse_and_bind(&family.sql, SqlKind::Family, schema)?;
    let (_, view) = parse_and_bind(view_sql, SqlKind::View, schema)?;
    if !fam.table.eq_ignore_ascii_case(&view.table) {
        return Err(PlanError::ViewMismatch(format!("view reads {}, family reads {}", view.table, fam.table)));
    }
    if fam.projection != view.projection {
        return Err(PlanError::ViewMismatch("projected columns differ".into()));
    }
    let mut occurrences: BTreeMap<&str, usize> = BTreeMap::new();
    for d in &fam.disjuncts {
        for leaf in d.leaves() {
            if let Src::Wildcard(w) = &leaf.src {
                *occurrences.entry(w.as_str()).or_default() += 1;
            }
        }
    }
    let accumulating: Vec<bool> = fam
        .disjuncts
        .iter()
        .map(|d| match d {
            BoolExpr::Leaf(BoundLeaf { op, src: Src::Wildcard(w), .. }) => {
                op.is_membership() && occurrences[w.as_str()] == 1
            }
            _ => false,
        })
        .collect();

    let mut values: BTreeMap<String, BTreeSet<Value>> = BTreeMap::new();
    let mut used = vec![false; fam.disjuncts.len()];
    for (vi, vd) in view.disjuncts.iter().enumerate() {
        let mut matched = false;
        for (fi, fd) in fam.disjuncts.iter().enumerate() {
            if used[fi] && !accumulating[fi] {
                continue;
            }
            let mut local: Vec<(String, BTreeSet<Value>)> = Vec::new();
            if !match_tree(fd, vd, &mut local) {
                continue;
            }
            let consistent = local.iter().all(|(w, vs)| {
                let in_local = local.iter().filter(|(w2, _)| w2 == w).all(|(_, vs2)| vs2 == vs);
                let global_ok = accumulating[fi] || values.get(w).is_none_or(|g| g == vs);
                in_local && global_ok
            });
            if !consistent {
                continue;
            }
            for (w, vs) in local {
                values.entry(w).or_default().extend(vs);
            }
            used[fi] = true;
            matched = true;
            break;
        }
        if !matched {
            return Err(PlanError::ViewMismatch(format!(
                "view disjunct {} matches no remaining family disjunct",
                vi + 1
            )));
        }
    }
    Ok(Bindings {
        values: values.into_iter().map(|(k, v)| (k, v.into_iter().collect())).collect(),
        enabled: used.iter().enumerate().filter(|(_, u)| **u).map(|(i, _)| i as u32).collect(),
    })
}

fn same_class(a: ast::CmpOp, b: ast::CmpOp) -> bool {
    a == b || (a.is_membership() && b.is_membership()) || (a.is_exclusion() && b.is_exclusion())
}

fn match_tree(f: &BoolExpr<BoundLeaf>, v: &BoolExpr<BoundLeaf>, out: &mut Vec<(String, BTreeSet<Value>)>) -> bool {
    match (f, v) {
        (BoolExpr::Leaf(fl), BoolExpr::Leaf(vl)) => {
            if fl.column != vl.column || !same_class(fl.op, vl.op) {
                return false;
            }
            let Src::Literal(view_values) = &vl.src else { return false };
            let view_set: BTreeSet<Value> = view_values.iter().cloned().collect();
            match &fl.src {
                Src::Wildcard(w) => {
                    out.push((w.clone(), view_set));
                    true
                }
                Src::Literal(fam_values) => fam_values.iter().cloned().collect::<BTreeSet<_>>() == view_set,
            }
        }
        (BoolExpr::And(fs), BoolExpr::And(vs)) | (BoolExpr::Or(fs), BoolExpr::Or(vs)) => {
            std::mem::discriminant(f) == std::mem::discriminant(v)
                && fs.len() == vs.len()
                && fs.iter().zip(vs).all(|(a, b)| match_tree(a, b, out))
        }
        (BoolExpr::Not(a), BoolExpr::Not(b)) => match_tree(a, b, out),
        _ => false,
    }
}
