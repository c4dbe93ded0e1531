use std::fmt;

/// A boolean tree whose leaf type changes as the planner rewrites it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BoolExpr<L> {
    Leaf(L),
    And(Vec<BoolExpr<L>>),
    Or(Vec<BoolExpr<L>>),
    Not(Box<BoolExpr<L>>),
    True,
    False,
}

impl<L> BoolExpr<L> {
    pub fn leaf(l: L) -> Self {
        BoolExpr::Leaf(l)
    }

    pub fn negate(e: BoolExpr<L>) -> Self {
        BoolExpr::Not(Box::new(e))
    }

    /// Visits every leaf in left-to-right order.
    pub fn leaves(&self) -> Vec<&L> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a L>) {
        match self {
            BoolExpr::Leaf(l) => out.push(l),
            BoolExpr::And(cs) | BoolExpr::Or(cs) => cs.iter().for_each(|c| c.collect_leaves(out)),
            BoolExpr::Not(c) => c.collect_leaves(out),
            BoolExpr::True | BoolExpr::False => {}
        }
    }

    pub fn try_map_leaves<M, E>(self, f: &mut impl FnMut(L) -> Result<BoolExpr<M>, E>) -> Result<BoolExpr<M>, E> {
        Ok(match self {
            BoolExpr::Leaf(l) => f(l)?,
            BoolExpr::And(cs) => BoolExpr::And(cs.into_iter().map(|c| c.try_map_leaves(f)).collect::<Result<_, _>>()?),
            BoolExpr::Or(cs) => BoolExpr::Or(cs.into_iter().map(|c| c.try_map_leaves(f)).collect::<Result<_, _>>()?),
            BoolExpr::Not(c) => BoolExpr::Not(Box::new(c.try_map_leaves(f)?)),
            BoolExpr::True => BoolExpr::True,
            BoolExpr::False => BoolExpr::False,
        })
    }

    pub fn map_leaves<M>(self, f: &mut impl FnMut(L) -> BoolExpr<M>) -> BoolExpr<M> {
        match self.try_map_leaves::<M, std::convert::Infallible>(&mut |l| Ok(f(l))) {
            Ok(e) => e,
            Err(never) => match never {},
        }
    }

    pub fn contains_not(&self) -> bool {
        match self {
            BoolExpr::Not(_) => true,
            BoolExpr::And(cs) | BoolExpr::Or(cs) => cs.iter().any(BoolExpr::contains_not),
            _ => false,
        }
    }

    /// Flattens nested AND/OR nodes of the same kind and unwraps
    /// single-child nodes.
    pub fn flatten(self) -> Self {
        match self {
            BoolExpr::And(cs) => {
                let mut out = Vec::new();
                for c in cs {
                    match c.flatten() {
                        BoolExpr::And(inner) => out.extend(inner),
                        other => out.push(other),
                    }
                }
                single_or(out, BoolExpr::And)
            }
            BoolExpr::Or(cs) => {
                let mut out = Vec::new();
                for c in cs {
                    match c.flatten() {
                        BoolExpr::Or(inner) => out.extend(inner),
                        other => out.push(other),
                    }
                }
                single_or(out, BoolExpr::Or)
            }
            BoolExpr::Not(c) => BoolExpr::Not(Box::new(c.flatten())),
            other => other,
        }
    }

    /// Propagates TRUE/FALSE constants through AND/OR/NOT.
    pub fn simplify_constants(self) -> Self {
        match self {
            BoolExpr::And(cs) => {
                let mut out = Vec::new();
                for c in cs {
                    match c.simplify_constants() {
                        BoolExpr::False => return BoolExpr::False,
                        BoolExpr::True => {}
                        other => out.push(other),
                    }
                }
                if out.is_empty() {
                    BoolExpr::True
                } else {
                    single_or(out, BoolExpr::And)
                }
            }
            BoolExpr::Or(cs) => {
                let mut out = Vec::new();
                for c in cs {
                    match c.simplify_constants() {
                        BoolExpr::True => return BoolExpr::True,
                        BoolExpr::False => {}
                        other => out.push(other),
                    }
                }
                if out.is_empty() {
                    BoolExpr::False
                } else {
                    single_or(out, BoolExpr::Or)
                }
            }
            BoolExpr::Not(c) => match c.simplify_constants() {
                BoolExpr::True => BoolExpr::False,
                BoolExpr::False => BoolExpr::True,
                other => BoolExpr::Not(Box::new(other)),
            },
            other => other,
        }
    }
}

fn single_or<L>(mut v: Vec<BoolExpr<L>>, wrap: fn(Vec<BoolExpr<L>>) -> BoolExpr<L>) -> BoolExpr<L> {
    if v.len() == 1 {
        v.pop().unwrap()
    } else {
        wrap(v)
    }
}

impl<L: fmt::Display> fmt::Display for BoolExpr<L> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |f: &mut fmt::Formatter<'_>, cs: &[BoolExpr<L>], sep: &str| -> fmt::Result {
            f.write_str("(")?;
            for (i, c) in cs.iter().enumerate() {
                if i > 0 {
                    write!(f, " {sep} ")?;
                }
                write!(f, "{c}")?;
            }
            f.write_str(")")
        };
        match self {
            BoolExpr::Leaf(l) => write!(f, "{l}"),
            BoolExpr::And(cs) => join(f, cs, "AND"),
            BoolExpr::Or(cs) => join(f, cs, "OR"),
            BoolExpr::Not(c) => write!(f, "NOT {c}"),
            BoolExpr::True => f.write_str("TRUE"),
            BoolExpr::False => f.write_str("FALSE"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    In,
    NotIn,
}

impl CmpOp {
    pub fn is_range(self) -> bool {
        matches!(self, CmpOp::Lt | CmpOp::Le | CmpOp::Gt | CmpOp::Ge)
    }

    /// `=`/`IN` hold when some operand value matches.
    pub fn is_membership(self) -> bool {
        matches!(self, CmpOp::Eq | CmpOp::In)
    }

    /// `!=`/`NOT IN` hold when no operand value matches.
    pub fn is_exclusion(self) -> bool {
        matches!(self, CmpOp::Ne | CmpOp::NotIn)
    }

    pub fn negate(self) -> CmpOp {
        match self {
            CmpOp::Eq => CmpOp::Ne,
            CmpOp::Ne => CmpOp::Eq,
            CmpOp::In => CmpOp::NotIn,
            CmpOp::NotIn => CmpOp::In,
            CmpOp::Lt => CmpOp::Ge,
            CmpOp::Ge => CmpOp::Lt,
            CmpOp::Le => CmpOp::Gt,
            CmpOp::Gt => CmpOp::Le,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
            CmpOp::In => "IN",
            CmpOp::NotIn => "NOT IN",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Literal {
    Null,
    Int(i64),
    Str(String),
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Null => f.write_str("NULL"),
            Literal::Int(v) => write!(f, "{v}"),
            Literal::Str(s) => write!(f, "'{}'", s.replace('\'', "''")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Operand {
    Wildcard(String),
    Literals(Vec<Literal>),
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::Wildcard(w) => write!(f, "?{w}"),
            Operand::Literals(ls) if ls.len() == 1 => write!(f, "{}", ls[0]),
            Operand::Literals(ls) => {
                f.write_str("(")?;
                for (i, l) in ls.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{l}")?;
                }
                f.write_str(")")
            }
        }
    }
}

/// A parsed `column op operand` predicate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Comparison {
    pub column: String,
    pub op: CmpOp,
    pub operand: Operand,
}

impl fmt::Display for Comparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.operand {
            Operand::Literals(ls) if ls.len() == 1 && matches!(self.op, CmpOp::In | CmpOp::NotIn) => {
                write!(f, "{} {} ({})", self.column, self.op.symbol(), ls[0])
            }
            operand => write!(f, "{} {} {}", self.column, self.op.symbol(), operand),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Projection {
    Star,
    Columns(Vec<String>),
}

/// A parsed view or view family: projection plus WHERE tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ViewFamilyAst {
    pub projection: Projection,
    pub table: String,
    pub selection: BoolExpr<Comparison>,
}

impl ViewFamilyAst {
    pub fn wildcards(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for leaf in self.selection.leaves() {
            if let Operand::Wildcard(w) = &leaf.operand {
                if !out.contains(&w.as_str()) {
                    out.push(w);
                }
            }
        }
        out
    }
}

impl fmt::Display for ViewFamilyAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SELECT ")?;
        match &self.projection {
            Projection::Star => f.write_str("*")?,
            Projection::Columns(cs) => f.write_str(&cs.join(", "))?,
        }
        write!(f, " FROM {} WHERE {}", self.table, self.selection)
    }
}
