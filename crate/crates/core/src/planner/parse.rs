//! Parser for the restricted grammar:
//!
//! ```text
//! query   := SELECT proj FROM ident WHERE expr [;]
//! proj    := '*' | ident (',' ident)*
//! expr    := conj (OR conj)*
//! conj    := unary (AND unary)*
//! unary   := NOT unary | '(' expr ')' | leaf
//! leaf    := ident cmp operand
//!          | ident [NOT] IN ( wildcard | '(' literal (',' literal)* ')' )
//!          | ident IS [NOT] NULL
//! cmp     := = | != | <> | < | <= | > | >=
//! operand := wildcard | literal
//! literal := integer | 'string' | "string" | NULL
//! ```

use crate::error::PlanError;

use super::ast::{BoolExpr, CmpOp, Comparison, Literal, Operand, Projection, ViewFamilyAst};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SqlKind {
    /// Operands may be `?wildcards` or literals.
    Family,
    /// Operands must be literals.
    View,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Wildcard(String),
    Int(i64),
    Str(String),
    Star,
    Comma,
    LParen,
    RParen,
    Semi,
    Op(CmpOp),
    /// Characters that only appear in unsupported expressions.
    Other(char),
}

struct Token {
    tok: Tok,
    offset: usize,
}

const UNSUPPORTED_WORDS: &[&str] = &[
    "LIKE",
    "ILIKE",
    "BETWEEN",
    "JOIN",
    "GROUP",
    "ORDER",
    "HAVING",
    "UNION",
    "LIMIT",
    "DISTINCT",
    "EXISTS",
    "CASE",
    "OFFSET",
    "INTERSECT",
    "EXCEPT",
];

fn syntax(offset: usize, message: impl Into<String>) -> PlanError {
    PlanError::Syntax { offset, message: message.into() }
}

fn lex(src: &str) -> Result<Vec<Token>, PlanError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        let start = i;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let ident_char = |b: u8| b.is_ascii_alphanumeric() || b == b'_';
        let tok = if c.is_ascii_alphabetic() || c == '_' {
            while i < bytes.len() && ident_char(bytes[i]) {
                i += 1;
            }
            Tok::Ident(src[start..i].to_owned())
        } else if c == '?' {
            i += 1;
            while i < bytes.len() && ident_char(bytes[i]) {
                i += 1;
            }
            if i == start + 1 {
                return Err(syntax(start, "wildcards must be named, e.g. ?x"));
            }
            Tok::Wildcard(src[start + 1..i].to_owned())
        } else if c.is_ascii_digit() || (c == '-' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit)) {
            i += 1;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            let text = &src[start..i];
            Tok::Int(text.parse().map_err(|_| syntax(start, format!("integer {text} out of range")))?)
        } else if c == '\'' || c == '"' {
            let quote = bytes[i];
            i += 1;
            let mut s = String::new();
            loop {
                let Some(&b) = bytes.get(i) else {
                    return Err(syntax(start, "unterminated string"));
                };
                if b == quote {
                    if bytes.get(i + 1) == Some(&quote) {
                        s.push(quote as char);
                        i += 2;
                        continue;
                    }
                    i += 1;
                    break;
                }
                let ch = src[i..].chars().next().unwrap();
                s.push(ch);
                i += ch.len_utf8();
            }
            Tok::Str(s)
        } else {
            let two = src.get(i..i + 2);
            let (tok, len) = match (c, two) {
                (_, Some("<=")) => (Tok::Op(CmpOp::Le), 2),
                (_, Some(">=")) => (Tok::Op(CmpOp::Ge), 2),
                (_, Some("!=")) | (_, Some("<>")) => (Tok::Op(CmpOp::Ne), 2),
                ('<', _) => (Tok::Op(CmpOp::Lt), 1),
                ('>', _) => (Tok::Op(CmpOp::Gt), 1),
                ('=', _) => (Tok::Op(CmpOp::Eq), 1),
                ('*', _) => (Tok::Star, 1),
                (',', _) => (Tok::Comma, 1),
                ('(', _) => (Tok::LParen, 1),
                (')', _) => (Tok::RParen, 1),
                (';', _) => (Tok::Semi, 1),
                _ => (Tok::Other(c), c.len_utf8()),
            };
            i += len;
            tok
        };
        out.push(Token { tok, offset: start });
    }
    Ok(out)
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    end: usize,
    kind: SqlKind,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |t| t.offset)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|t| t.tok.clone());
        self.pos += 1;
        t
    }

    fn peek_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(s)) if s.eq_ignore_ascii_case(kw))
    }

    fn eat_keyword(&mut self, kw: &str) -> bool {
        if self.peek_keyword(kw) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<(), PlanError> {
        if self.eat_keyword(kw) {
            Ok(())
        } else {
            Err(self.unexpected(&format!("expected {kw}")))
        }
    }

    fn unexpected(&self, what: &str) -> PlanError {
        if let Some(Tok::Ident(word)) = self.peek() {
            let upper = word.to_ascii_uppercase();
            if UNSUPPORTED_WORDS.contains(&upper.as_str()) {
                return PlanError::Unsupported(format!("{upper} is not supported"));
            }
        }
        match self.peek() {
            Some(Tok::Other(c @ ('+' | '-' | '/' | '%' | '|'))) => {
                PlanError::Unsupported(format!("arithmetic field expressions ('{c}') are not supported"))
            }
            Some(t) => syntax(self.offset(), format!("{what}, found {t:?}")),
            None => syntax(self.offset(), format!("{what}, found end of input")),
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, PlanError> {
        match self.peek() {
            Some(Tok::Ident(s)) if !is_reserved(s) => {
                let s = s.clone();
                self.pos += 1;
                if self.peek() == Some(&Tok::LParen) {
                    return Err(PlanError::Unsupported(format!(
                        "function {}() is not supported",
                        s.to_ascii_uppercase()
                    )));
                }
                Ok(s)
            }
            _ => Err(self.unexpected(&format!("expected {what}"))),
        }
    }

    fn query(&mut self) -> Result<ViewFamilyAst, PlanError> {
        self.expect_keyword("SELECT")?;
        let projection = if self.peek() == Some(&Tok::Star) {
            self.pos += 1;
            Projection::Star
        } else {
            let mut cols = vec![self.ident("column name")?];
            while self.peek() == Some(&Tok::Comma) {
                self.pos += 1;
                cols.push(self.ident("column name")?);
            }
            Projection::Columns(cols)
        };
        self.expect_keyword("FROM")?;
        if self.peek() == Some(&Tok::LParen) {
            return Err(PlanError::Unsupported("subqueries are not supported".into()));
        }
        let table = self.ident("table name")?;
        if self.peek() == Some(&Tok::Comma) {
            return Err(PlanError::Unsupported("joins are not supported".into()));
        }
        self.expect_keyword("WHERE")?;
        let selection = self.disjunction()?;
        if self.peek() == Some(&Tok::Semi) {
            self.pos += 1;
        }
        if self.pos < self.toks.len() {
            return Err(self.unexpected("expected end of statement"));
        }
        Ok(ViewFamilyAst { projection, table, selection })
    }

    fn disjunction(&mut self) -> Result<BoolExpr<Comparison>, PlanError> {
        let mut items = vec![self.conjunction()?];
        while self.eat_keyword("OR") {
            items.push(self.conjunction()?);
        }
        Ok(if items.len() == 1 { items.pop().unwrap() } else { BoolExpr::Or(items) })
    }

    fn conjunction(&mut self) -> Result<BoolExpr<Comparison>, PlanError> {
        let mut items = vec![self.unary()?];
        while self.eat_keyword("AND") {
            items.push(self.unary()?);
        }
        Ok(if items.len() == 1 { items.pop().unwrap() } else { BoolExpr::And(items) })
    }

    fn unary(&mut self) -> Result<BoolExpr<Comparison>, PlanError> {
        if self.eat_keyword("NOT") {
            return Ok(BoolExpr::negate(self.unary()?));
        }
        if self.peek() == Some(&Tok::LParen) {
            self.pos += 1;
            if self.peek_keyword("SELECT") {
                return Err(PlanError::Unsupported("subqueries are not supported".into()));
            }
            let inner = self.disjunction()?;
            if self.next() != Some(Tok::RParen) {
                self.pos -= 1;
                return Err(self.unexpected("expected )"));
            }
            return Ok(inner);
        }
        self.leaf().map(BoolExpr::Leaf)
    }

    fn leaf(&mut self) -> Result<Comparison, PlanError> {
        let column = self.ident("column name")?;
        if self.eat_keyword("IS") {
            let negated = self.eat_keyword("NOT");
            self.expect_keyword("NULL")?;
            let op = if negated { CmpOp::Ne } else { CmpOp::Eq };
            return Ok(Comparison { column, op, operand: Operand::Literals(vec![Literal::Null]) });
        }
        let op = if self.eat_keyword("NOT") {
            self.expect_keyword("IN")?;
            CmpOp::NotIn
        } else if self.eat_keyword("IN") {
            CmpOp::In
        } else {
            match self.peek() {
                Some(Tok::Op(op)) => {
                    let op = *op;
                    self.pos += 1;
                    op
                }
                _ => return Err(self.unexpected("expected comparison operator")),
            }
        };
        let operand = if matches!(op, CmpOp::In | CmpOp::NotIn) && self.peek() == Some(&Tok::LParen) {
            self.pos += 1;
            if self.peek_keyword("SELECT") {
                return Err(PlanError::Unsupported("subqueries are not supported".into()));
            }
            let mut lits = vec![self.literal()?];
            while self.peek() == Some(&Tok::Comma) {
                self.pos += 1;
                lits.push(self.literal()?);
            }
            if self.next() != Some(Tok::RParen) {
                self.pos -= 1;
                return Err(self.unexpected("expected )"));
            }
            Operand::Literals(lits)
        } else if let Some(Tok::Wildcard(w)) = self.peek() {
            let w = w.clone();
            if self.kind == SqlKind::View {
                return Err(syntax(self.offset(), format!("views bind literal values, found ?{w}")));
            }
            self.pos += 1;
            Operand::Wildcard(w)
        } else if matches!(op, CmpOp::In | CmpOp::NotIn) {
            return Err(self.unexpected("expected ( or wildcard after IN"));
        } else {
            Operand::Literals(vec![self.literal()?])
        };
        if op.is_range() && operand == Operand::Literals(vec![Literal::Null]) {
            return Err(PlanError::Unsupported(format!("{} NULL never holds; use IS NULL", op.symbol())));
        }
        Ok(Comparison { column, op, operand })
    }

    fn literal(&mut self) -> Result<Literal, PlanError> {
        match self.peek().cloned() {
            Some(Tok::Int(v)) => {
                self.pos += 1;
                Ok(Literal::Int(v))
            }
            Some(Tok::Str(s)) => {
                self.pos += 1;
                Ok(Literal::Str(s))
            }
            Some(Tok::Ident(s)) if s.eq_ignore_ascii_case("NULL") => {
                self.pos += 1;
                Ok(Literal::Null)
            }
            Some(Tok::Wildcard(w)) => Err(syntax(self.offset(), format!("wildcard ?{w} not allowed in a value list"))),
            _ => Err(self.unexpected("expected literal")),
        }
    }
}

fn is_reserved(word: &str) -> bool {
    ["SELECT", "FROM", "WHERE", "AND", "OR", "NOT", "IN", "IS", "NULL"].iter().any(|k| word.eq_ignore_ascii_case(k))
}

pub fn parse(sql: &str, kind: SqlKind) -> Result<ViewFamilyAst, PlanError> {
    let toks = lex(sql)?;
    let mut p = Parser { toks, pos: 0, end: sql.len(), kind };
    p.query()
}
