//! Recursive-descent parser for the expression grammar.
//!
//! ```text
//! expr     := term (('+' | '-') term)*
//! term     := unary (('*' | '/') unary)*
//! unary    := '-' unary | power
//! power    := atom ('^' exponent)?
//! exponent := literal ('^' exponent)?          (right-associative)
//! literal  := number | '-' literal | '(' literal ')'
//! atom     := number | identifier | func '(' expr ')' | '(' expr ')'
//! ```
//!
//! Identifiers: `t`; `qI` (one dof) or `qI_A` (several dofs); momenta `pI`
//! / `pI_A` and the extended momentum `p` outside Lagrangian scope; declared
//! parameter names. `I` is the derivative order or momentum level, `A` the
//! one-based dof index.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::expr::{Expr, Func, Node, Var};

/// What identifiers are admissible.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scope {
    /// Jet orders up to `k`, no momenta.
    Lagrangian,
    /// Jet orders up to `2k + 1`, momenta levels below `k`, extended `p`.
    Unified,
}

#[derive(Clone, Debug)]
pub struct ParseContext {
    pub order: usize,
    pub dofs: usize,
    pub params: Vec<String>,
    pub scope: Scope,
}

impl ParseContext {
    pub fn lagrangian(order: usize, dofs: usize, params: &[&str]) -> Self {
        ParseContext {
            order,
            dofs,
            params: params.iter().map(|s| s.to_string()).collect(),
            scope: Scope::Lagrangian,
        }
    }

    pub fn unified(order: usize, dofs: usize, params: &[&str]) -> Self {
        ParseContext { scope: Scope::Unified, ..Self::lagrangian(order, dofs, params) }
    }

    fn max_jet_order(&self) -> usize {
        match self.scope {
            Scope::Lagrangian => self.order,
            Scope::Unified => 2 * self.order + 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum ParseError {
    #[error("syntax error at position {pos}: {message}")]
    Syntax { pos: usize, message: String },
    #[error("unknown identifier `{name}` at position {pos}")]
    UnknownIdentifier { pos: usize, name: String },
    #[error("jet order exceeds k: `{name}` at position {pos} has order {order}, maximum is {max}")]
    JetOrderExceeds { pos: usize, name: String, order: usize, max: usize },
}

impl ParseError {
    pub fn position(&self) -> usize {
        match self {
            ParseError::Syntax { pos, .. }
            | ParseError::UnknownIdentifier { pos, .. }
            | ParseError::JetOrderExceeds { pos, .. } => *pos,
        }
    }
}

/// Parses `text` into an expression whose free variables are all declared
/// in `ctx`.
pub fn parse(text: &str, ctx: &ParseContext) -> Result<Expr, ParseError> {
    let mut p = Parser { src: text.as_bytes(), pos: 0, ctx };
    let e = p.expr()?;
    p.skip_ws();
    if p.pos < p.src.len() {
        return Err(p.syntax("unexpected trailing input"));
    }
    Ok(e)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    ctx: &'a ParseContext,
}

impl Parser<'_> {
    fn syntax(&self, message: &str) -> ParseError {
        ParseError::Syntax { pos: self.pos, message: message.into() }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: u8) -> Result<(), ParseError> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.syntax(&alloc::format!("expected `{}`", c as char)))
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut terms = alloc::vec![self.term()?];
        loop {
            if self.eat(b'+') {
                terms.push(self.term()?);
            } else if self.eat(b'-') {
                terms.push(Expr::new(Node::Neg(self.term()?)));
            } else {
                break;
            }
        }
        Ok(if terms.len() == 1 { terms.pop().unwrap() } else { Expr::new(Node::Sum(terms)) })
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        fn collapse(mut factors: Vec<Expr>) -> Expr {
            if factors.len() == 1 {
                factors.pop().unwrap()
            } else {
                Expr::new(Node::Product(factors))
            }
        }
        let mut factors = alloc::vec![self.unary()?];
        loop {
            if self.eat(b'*') {
                factors.push(self.unary()?);
            } else if self.eat(b'/') {
                let lhs = collapse(core::mem::take(&mut factors));
                factors.push(Expr::new(Node::Div(lhs, self.unary()?)));
            } else {
                break;
            }
        }
        Ok(collapse(factors))
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.eat(b'-') {
            return Ok(Expr::new(Node::Neg(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if self.eat(b'^') {
            let ex = self.exponent()?;
            return Ok(Expr::new(Node::Pow(base, ex)));
        }
        Ok(base)
    }

    fn exponent(&mut self) -> Result<f64, ParseError> {
        let lit = self.literal()?;
        if self.eat(b'^') {
            let rest = self.exponent()?;
            return Ok(libm::pow(lit, rest));
        }
        Ok(lit)
    }

    fn literal(&mut self) -> Result<f64, ParseError> {
        if self.eat(b'-') {
            return Ok(-self.literal()?);
        }
        if self.eat(b'(') {
            let v = self.literal()?;
            self.expect(b')')?;
            return Ok(v);
        }
        match self.peek() {
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            _ => Err(self.syntax("exponent must be a numeric literal")),
        }
    }

    fn number(&mut self) -> Result<f64, ParseError> {
        self.skip_ws();
        let start = self.pos;
        let s = self.src;
        while self.pos < s.len() && (s[self.pos].is_ascii_digit() || s[self.pos] == b'.') {
            self.pos += 1;
        }
        if self.pos < s.len() && (s[self.pos] == b'e' || s[self.pos] == b'E') {
            let mut j = self.pos + 1;
            if j < s.len() && (s[j] == b'+' || s[j] == b'-') {
                j += 1;
            }
            if j < s.len() && s[j].is_ascii_digit() {
                while j < s.len() && s[j].is_ascii_digit() {
                    j += 1;
                }
                self.pos = j;
            }
        }
        let text = core::str::from_utf8(&s[start..self.pos]).unwrap_or("");
        text.parse::<f64>().map_err(|_| ParseError::Syntax {
            pos: start,
            message: alloc::format!("malformed number `{}`", text),
        })
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        match self.peek() {
            None => Err(self.syntax("unexpected end of input")),
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(b')')?;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => Ok(Expr::constant(self.number()?)),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => self.identifier(),
            Some(c) => Err(self.syntax(&alloc::format!("unexpected character `{}`", c as char))),
        }
    }

    fn identifier(&mut self) -> Result<Expr, ParseError> {
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
        {
            self.pos += 1;
        }
        let name = core::str::from_utf8(&self.src[start..self.pos]).unwrap_or("");
        if let Some(func) = Func::from_name(name) {
            if self.peek() == Some(b'(') {
                self.pos += 1;
                let arg = self.expr()?;
                self.expect(b')')?;
                return Ok(Expr::apply(func, arg));
            }
            return Err(self.syntax(&alloc::format!("function `{}` requires parentheses", name)));
        }
        self.resolve(name, start).map(Expr::var)
    }

    fn resolve(&self, name: &str, pos: usize) -> Result<Var, ParseError> {
        let unknown = || ParseError::UnknownIdentifier { pos, name: name.into() };
        if name == "t" {
            return Ok(Var::Time);
        }
        if let Some((head, index, dof)) = split_indexed(name, self.ctx.dofs) {
            let dof = dof.ok_or_else(unknown)?;
            if head == 'q' {
                let max = self.ctx.max_jet_order();
                if index > max {
                    return Err(ParseError::JetOrderExceeds {
                        pos,
                        name: name.into(),
                        order: index,
                        max,
                    });
                }
                return Ok(Var::jet(dof, index));
            }
            if self.ctx.scope == Scope::Unified && index < self.ctx.order {
                return Ok(Var::momentum(dof, index));
            }
            return Err(unknown());
        }
        if name == "p" && self.ctx.scope == Scope::Unified {
            return Ok(Var::ExtMomentum);
        }
        if self.ctx.params.iter().any(|p| p == name) {
            return Ok(Var::Param(name.into()));
        }
        Err(unknown())
    }
}

/// Splits `qI`, `qI_A`, `pI`, `pI_A`. Returns `Some((head, I, dof))` when the
/// name has the indexed shape; `dof` is `None` if the suffix form does not
/// match the dof count or `A` is out of range.
pub(crate) fn split_indexed(name: &str, dofs: usize) -> Option<(char, usize, Option<usize>)> {
    let head = name.chars().next()?;
    if head != 'q' && head != 'p' {
        return None;
    }
    let rest = &name[1..];
    let (index, suffix) = match rest.split_once('_') {
        Some((i, a)) => (i, Some(a)),
        None => (rest, None),
    };
    if index.is_empty() || !index.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    if let Some(a) = suffix {
        if a.is_empty() || !a.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
    }
    let index: usize = index.parse().ok()?;
    let dof = match (suffix, dofs) {
        (None, 1) => Some(0),
        (Some(a), n) if n > 1 => a.parse::<usize>().ok().filter(|&a| a >= 1 && a <= n).map(|a| a - 1),
        _ => None,
    };
    Some((head, index, dof))
}

/// Identifiers a parameter may not shadow.
pub fn is_reserved(name: &str) -> bool {
    name == "t" || name == "p" || Func::from_name(name).is_some() || split_indexed(name, 1).is_some()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::eval;
    use alloc::collections::BTreeMap;

    fn ctx1(k: usize) -> ParseContext {
        ParseContext::lagrangian(k, 1, &[])
    }

    fn at(e: &Expr, vals: &[(Var, f64)]) -> f64 {
        let b: BTreeMap<Var, f64> = vals.iter().cloned().collect();
        eval(e, &b).unwrap()
    }

    #[test]
    fn harmonic_lagrangian() {
        let e = parse("0.5*(q1^2 - q0^2)", &ctx1(1)).unwrap();
        assert_eq!(at(&e, &[(Var::jet(0, 0), 1.0), (Var::jet(0, 1), 0.0)]), -0.5);
    }

    #[test]
    fn product_with_function() {
        let e = parse("q0*sin(t)", &ctx1(1)).unwrap();
        let expect = Expr::new(Node::Product(alloc::vec![Expr::jet(0, 0), Expr::time().sin()]));
        assert_eq!(e, expect);
    }

    #[test]
    fn jet_order_above_k_is_rejected() {
        let err = parse("q3", &ctx1(2)).unwrap_err();
        assert!(matches!(err, ParseError::JetOrderExceeds { order: 3, max: 2, .. }));
        assert!(alloc::format!("{}", err).contains("jet order exceeds k"));
    }

    #[test]
    fn power_is_right_associative_and_binds_tighter_than_minus() {
        let e = parse("-q0^2^3", &ctx1(1)).unwrap();
        assert_eq!(at(&e, &[(Var::jet(0, 0), 2.0)]), -256.0);
        let e = parse("q0^(-1)", &ctx1(1)).unwrap();
        assert_eq!(at(&e, &[(Var::jet(0, 0), 4.0)]), 0.25);
    }

    #[test]
    fn division_is_left_associative() {
        let e = parse("8/q0/2", &ctx1(1)).unwrap();
        assert_eq!(at(&e, &[(Var::jet(0, 0), 2.0)]), 2.0);
        let e = parse("2*q0/4*3", &ctx1(1)).unwrap();
        assert_eq!(at(&e, &[(Var::jet(0, 0), 2.0)]), 3.0);
    }

    #[test]
    fn syntax_errors_report_position() {
        let err = parse("q0 + * q1", &ctx1(1)).unwrap_err();
        assert_eq!(err.position(), 5);
        let err = parse("q0^q1", &ctx1(1)).unwrap_err();
        assert!(matches!(err, ParseError::Syntax { pos: 3, .. }));
        assert!(parse("(q0", &ctx1(1)).is_err());
        assert!(parse("q0 q1", &ctx1(1)).is_err());
    }

    #[test]
    fn identifiers_follow_dof_count() {
        let c2 = ParseContext::lagrangian(1, 2, &["w"]);
        assert!(parse("q1_2*w", &c2).is_ok());
        assert!(matches!(parse("q1", &c2), Err(ParseError::UnknownIdentifier { .. })));
        assert!(matches!(parse("q1_3", &c2), Err(ParseError::UnknownIdentifier { .. })));
        assert!(matches!(parse("q1_1", &ctx1(1)), Err(ParseError::UnknownIdentifier { .. })));
        assert!(matches!(parse("v", &c2), Err(ParseError::UnknownIdentifier { name, .. }) if name == "v"));
    }

    #[test]
    fn momenta_only_in_unified_scope() {
        assert!(parse("p0*q1", &ctx1(1)).is_err());
        let u = ParseContext::unified(2, 1, &[]);
        let e = parse("p + p1*q2 + p0*q1 - q3", &u).unwrap();
        assert!(e.free_vars().contains(&Var::ExtMomentum));
        assert!(parse("p2", &u).is_err());
    }

    #[test]
    fn reserved_names() {
        assert!(is_reserved("q0"));
        assert!(is_reserved("p12"));
        assert!(is_reserved("sin"));
        assert!(is_reserved("p"));
        assert!(!is_reserved("w1"));
        assert!(!is_reserved("pi"));
    }
}
