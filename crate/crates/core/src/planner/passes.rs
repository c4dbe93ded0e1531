//! The rewrite pipeline from a bound WHERE tree to canonical predicates.
//!
//! `push_not_down` → `to_ranges` → `consolidate` → `ranges_to_in` →
//! `to_dnf` → `eliminate_ands`. Each pass is deterministic and the
//! type-preserving ones are idempotent.

use std::collections::HashSet;

use crate::error::PlanError;
use crate::table::{ColumnType, Value};

use super::ast::{BoolExpr, CmpOp};
use super::bind::BoundLeaf;
use super::canonical::{
    check_literal_set, literal_set_is_empty, Atom, Piece, Predicate, Recipe, SetExpr, Target, ValueSource,
};

/// A set constraint on one target: `x ∈ set`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SetLeaf {
    pub target: Target,
    pub set: SetExpr,
}

fn negate_leaf(mut leaf: BoundLeaf) -> BoolExpr<BoundLeaf> {
    let range = leaf.op.is_range();
    leaf.op = leaf.op.negate();
    if range && leaf.nullable {
        // Ranges never hold on NULL, so their negation always does.
        let null = BoundLeaf { op: CmpOp::Eq, src: super::canonical::Src::Literal(vec![Value::Null]), ..leaf.clone() };
        BoolExpr::Or(vec![BoolExpr::Leaf(leaf), BoolExpr::Leaf(null)])
    } else {
        BoolExpr::Leaf(leaf)
    }
}

/// De Morgan rewriting; the result contains no `Not` nodes.
pub fn push_not_down(expr: BoolExpr<BoundLeaf>) -> BoolExpr<BoundLeaf> {
    fn go(e: BoolExpr<BoundLeaf>, negate: bool) -> BoolExpr<BoundLeaf> {
        match (e, negate) {
            (BoolExpr::Leaf(l), false) => BoolExpr::Leaf(l),
            (BoolExpr::Leaf(l), true) => negate_leaf(l),
            (BoolExpr::And(cs), false) => BoolExpr::And(cs.into_iter().map(|c| go(c, false)).collect()),
            (BoolExpr::And(cs), true) => BoolExpr::Or(cs.into_iter().map(|c| go(c, true)).collect()),
            (BoolExpr::Or(cs), false) => BoolExpr::Or(cs.into_iter().map(|c| go(c, false)).collect()),
            (BoolExpr::Or(cs), true) => BoolExpr::And(cs.into_iter().map(|c| go(c, true)).collect()),
            (BoolExpr::Not(c), n) => go(*c, !n),
            (BoolExpr::True, false) | (BoolExpr::False, true) => BoolExpr::True,
            (BoolExpr::True, true) | (BoolExpr::False, false) => BoolExpr::False,
        }
    }
    go(expr, false).flatten()
}

/// Maps every comparison to a set constraint. Literal-only constraints whose
/// set is empty collapse to FALSE.
pub fn to_ranges(expr: BoolExpr<BoundLeaf>) -> Result<BoolExpr<SetLeaf>, PlanError> {
    assert!(!expr.contains_not(), "to_ranges runs after push_not_down");
    let out = expr.try_map_leaves(&mut |leaf: BoundLeaf| {
        let column = leaf.column;
        let nullable = leaf.nullable;
        let target = match (leaf.ty, leaf.op.is_exclusion()) {
            (ColumnType::Int64, _) => Target::Int { column, nullable },
            (ColumnType::Utf8, false) => Target::Field { column, nullable },
            (ColumnType::Utf8, true) => Target::Hash { column, nullable },
        };
        let piece = Piece { src: leaf.src, origin: leaf.origin };
        let set = if leaf.op.is_membership() {
            SetExpr::Values(piece)
        } else if leaf.op.is_exclusion() {
            SetExpr::Excluding(piece)
        } else {
            SetExpr::Range(leaf.op, piece)
        };
        check_literal_set(&set, target)?;
        if literal_set_is_empty(&set, target)? {
            return Ok(BoolExpr::False);
        }
        Ok(BoolExpr::Leaf(SetLeaf { target, set }))
    })?;
    Ok(out.simplify_constants().flatten())
}

fn consolidate_once(expr: BoolExpr<SetLeaf>) -> Result<BoolExpr<SetLeaf>, PlanError> {
    let (children, is_and) = match expr {
        BoolExpr::And(cs) => (cs, true),
        BoolExpr::Or(cs) => (cs, false),
        other => return Ok(other),
    };
    let mut out: Vec<BoolExpr<SetLeaf>> = Vec::with_capacity(children.len());
    let mut seen: Vec<(Target, usize)> = Vec::new();
    for child in children {
        match consolidate_once(child)? {
            BoolExpr::Leaf(leaf) => match seen.iter().find(|(t, _)| *t == leaf.target) {
                Some(&(_, idx)) => {
                    let BoolExpr::Leaf(existing) = &mut out[idx] else { unreachable!() };
                    let merged = SetExpr::combine(vec![existing.set.clone(), leaf.set], is_and);
                    existing.set = merged;
                }
                None => {
                    seen.push((leaf.target, out.len()));
                    out.push(BoolExpr::Leaf(leaf));
                }
            },
            other => out.push(other),
        }
    }
    let mut collapsed = Vec::with_capacity(out.len());
    for node in out {
        collapsed.push(match node {
            BoolExpr::Leaf(l) if literal_set_is_empty(&l.set, l.target)? => BoolExpr::False,
            other => other,
        });
    }
    Ok(if is_and { BoolExpr::And(collapsed) } else { BoolExpr::Or(collapsed) })
}

/// Merges sibling constraints on the same target: OR-siblings by union,
/// AND-siblings by intersection. Runs to a fixed point.
pub fn consolidate(expr: BoolExpr<SetLeaf>) -> Result<BoolExpr<SetLeaf>, PlanError> {
    let mut cur = expr.simplify_constants().flatten();
    loop {
        let next = consolidate_once(cur.clone())?.simplify_constants().flatten();
        if next == cur {
            return Ok(cur);
        }
        cur = next;
    }
}

/// Splits every constraint into one membership test per bit-tree level.
pub fn ranges_to_in(expr: BoolExpr<SetLeaf>, branching_bits: u32) -> BoolExpr<ValueSource> {
    expr.map_leaves(&mut |leaf: SetLeaf| {
        let total = leaf.target.total_bits();
        if total == 0 {
            return BoolExpr::Leaf(ValueSource { target: leaf.target, level_bits: 0, set: leaf.set });
        }
        assert_eq!(total % branching_bits, 0, "branching bits must divide the domain width");
        let levels: Vec<BoolExpr<ValueSource>> = (1..=total / branching_bits)
            .map(|d| {
                BoolExpr::Leaf(ValueSource {
                    target: leaf.target,
                    level_bits: d * branching_bits,
                    set: leaf.set.clone(),
                })
            })
            .collect();
        if levels.len() == 1 {
            levels.into_iter().next().unwrap()
        } else {
            BoolExpr::Or(levels)
        }
    })
    .flatten()
}

/// Clause list of a NOT-free tree; an empty list is FALSE and an empty
/// clause is TRUE.
pub fn clauses(expr: &BoolExpr<ValueSource>, cap: usize) -> Result<Vec<Vec<ValueSource>>, PlanError> {
    let out = match expr {
        BoolExpr::Leaf(l) => vec![vec![l.clone()]],
        BoolExpr::True => vec![vec![]],
        BoolExpr::False => vec![],
        BoolExpr::Not(_) => panic!("clauses requires a NOT-free tree"),
        BoolExpr::Or(cs) => {
            let mut acc = Vec::new();
            for c in cs {
                acc.extend(clauses(c, cap)?);
                if acc.len() > cap {
                    return Err(PlanError::Blowup { clauses: acc.len(), cap });
                }
            }
            acc
        }
        BoolExpr::And(cs) => {
            let mut acc: Vec<Vec<ValueSource>> = vec![vec![]];
            for c in cs {
                let rhs = clauses(c, cap)?;
                let n = acc.len().saturating_mul(rhs.len());
                if n > cap {
                    return Err(PlanError::Blowup { clauses: n, cap });
                }
                let mut next = Vec::with_capacity(n);
                for a in &acc {
                    for b in &rhs {
                        let mut clause = a.clone();
                        for leaf in b {
                            if !clause.contains(leaf) {
                                clause.push(leaf.clone());
                            }
                        }
                        next.push(clause);
                    }
                }
                acc = next;
            }
            acc
        }
    };
    let mut seen = HashSet::new();
    Ok(out.into_iter().filter(|c| seen.insert(c.clone())).collect())
}

/// Rewrites to an OR of ANDs of leaves.
pub fn to_dnf(expr: BoolExpr<ValueSource>, cap: usize) -> Result<BoolExpr<ValueSource>, PlanError> {
    let cs = clauses(&expr, cap)?;
    if cs.is_empty() {
        return Ok(BoolExpr::False);
    }
    let terms: Vec<BoolExpr<ValueSource>> = cs
        .into_iter()
        .map(|c| match c.len() {
            0 => BoolExpr::True,
            1 => BoolExpr::Leaf(c.into_iter().next().unwrap()),
            _ => BoolExpr::And(c.into_iter().map(BoolExpr::Leaf).collect()),
        })
        .collect();
    Ok(if terms.len() == 1 { terms.into_iter().next().unwrap() } else { BoolExpr::Or(terms) })
}

/// Turns each DNF clause into one predicate over the concatenation of its
/// atoms. Clauses with identical atom lists share a predicate.
pub fn eliminate_ands(dnf: &BoolExpr<ValueSource>, cap: usize) -> Result<Vec<Predicate>, PlanError> {
    let mut preds: Vec<Predicate> = Vec::new();
    for clause in clauses(dnf, cap)? {
        let mut grouped: Vec<(Atom, Vec<ValueSource>)> = Vec::new();
        for leaf in clause {
            let atom = leaf.atom();
            match grouped.iter_mut().find(|(a, _)| *a == atom) {
                Some((_, srcs)) => srcs.push(leaf),
                None => grouped.push((atom, vec![leaf])),
            }
        }
        grouped.sort_by(|a, b| a.0.cmp(&b.0));
        let atoms: Vec<Atom> = grouped.iter().map(|(a, _)| a.clone()).collect();
        let recipe = Recipe { parts: grouped.into_iter().map(|(_, s)| s).collect() };
        match preds.iter_mut().find(|p| p.atoms == atoms) {
            Some(p) => {
                if !p.recipes.contains(&recipe) {
                    p.recipes.push(recipe);
                }
            }
            None => preds.push(Predicate { atoms, recipes: vec![recipe] }),
        }
    }
    if preds.is_empty() {
        preds.push(Predicate { atoms: vec![], recipes: vec![] });
    }
    Ok(preds)
}
