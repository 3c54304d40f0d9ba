//! Text form of operators.
//!
//! ```text
//! expr    := ['+' | '-'] product (('+' | '-') product)*
//! product := atom (['*'] atom)*
//! atom    := integer ['/' integer] | 'x' k ['^' p] | 'd' k ['^' p]
//!          | '[' expr ',' expr ']' | '(' expr ')'
//! ```
//!
//! Juxtaposition composes left to right, so `d1 x1` is `x1 d1 + 1`. Whitespace is
//! ignored. The dimension is the largest variable index that appears.

use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed};

use super::PolyDiffOp;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
enum Node {
    Number(BigRational),
    X(usize, u32),
    D(usize, u32),
    Sum(Vec<(bool, Node)>),
    Product(Vec<Node>),
    Bracket(Box<Node>, Box<Node>),
}

impl Node {
    fn max_index(&self) -> usize {
        match self {
            Node::Number(_) => 0,
            Node::X(k, _) | Node::D(k, _) => *k,
            Node::Sum(items) => items.iter().map(|(_, n)| n.max_index()).max().unwrap_or(0),
            Node::Product(items) => items.iter().map(Node::max_index).max().unwrap_or(0),
            Node::Bracket(a, b) => a.max_index().max(b.max_index()),
        }
    }

    fn eval(&self, dim: usize) -> Result<PolyDiffOp> {
        Ok(match self {
            Node::Number(c) => PolyDiffOp::constant(dim, c.clone()),
            Node::X(k, p) => {
                let mut alpha = vec![0; dim];
                alpha[k - 1] = *p;
                PolyDiffOp::monomial(dim, BigRational::one(), alpha, vec![0; dim])?
            }
            Node::D(k, p) => {
                let mut beta = vec![0; dim];
                beta[k - 1] = *p;
                PolyDiffOp::monomial(dim, BigRational::one(), vec![0; dim], beta)?
            }
            Node::Sum(items) => {
                let mut acc = PolyDiffOp::zero(dim);
                for (negative, node) in items {
                    let term = node.eval(dim)?;
                    acc = if *negative { acc.sub(&term)? } else { acc.add(&term)? };
                }
                acc
            }
            Node::Product(items) => {
                let mut acc = PolyDiffOp::identity(dim);
                for node in items {
                    acc = acc.compose(&node.eval(dim)?)?;
                }
                acc
            }
            Node::Bracket(a, b) => a.eval(dim)?.commutator(&b.eval(dim)?)?,
        })
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn err<T>(&self, msg: impl Into<String>) -> Result<T> {
        Err(Error::Parse { pos: self.pos, msg: msg.into() })
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

    fn expect(&mut self, c: u8) -> Result<()> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            self.err(format!("expected '{}'", c as char))
        }
    }

    fn integer(&mut self) -> Result<BigInt> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return self.err("expected digits");
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii digits");
        Ok(text.parse().expect("digits parse as integer"))
    }

    fn small(&mut self, what: &str) -> Result<u32> {
        let pos = self.pos;
        let v = self.integer()?;
        u32::try_from(v).map_err(|_| Error::Parse { pos, msg: format!("{what} too large") })
    }

    fn expr(&mut self) -> Result<Node> {
        let mut items = Vec::new();
        let mut negative = match self.peek() {
            Some(b'-') => {
                self.pos += 1;
                true
            }
            Some(b'+') => {
                self.pos += 1;
                false
            }
            _ => false,
        };
        loop {
            items.push((negative, self.product()?));
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    negative = false;
                }
                Some(b'-') => {
                    self.pos += 1;
                    negative = true;
                }
                _ => break,
            }
        }
        Ok(Node::Sum(items))
    }

    fn starts_atom(c: Option<u8>) -> bool {
        matches!(c, Some(b'0'..=b'9' | b'x' | b'd' | b'[' | b'(' | b'*'))
    }

    fn product(&mut self) -> Result<Node> {
        let mut items = vec![self.atom()?];
        while Self::starts_atom(self.peek()) {
            if self.peek() == Some(b'*') {
                self.pos += 1;
            }
            items.push(self.atom()?);
        }
        Ok(Node::Product(items))
    }

    fn variable(&mut self) -> Result<(usize, u32)> {
        let pos = self.pos;
        let k = self.small("index")? as usize;
        if k == 0 {
            return Err(Error::Parse { pos, msg: "variable indices start at 1".into() });
        }
        let p = if self.peek() == Some(b'^') {
            self.pos += 1;
            self.small("exponent")?
        } else {
            1
        };
        Ok((k, p))
    }

    fn atom(&mut self) -> Result<Node> {
        match self.peek() {
            Some(b'0'..=b'9') => {
                let num = self.integer()?;
                if self.peek() == Some(b'/') {
                    self.pos += 1;
                    let den = self.integer()?;
                    if den == BigInt::from(0) {
                        return self.err("zero denominator");
                    }
                    Ok(Node::Number(BigRational::new(num, den)))
                } else {
                    Ok(Node::Number(BigRational::from_integer(num)))
                }
            }
            Some(b'x') => {
                self.pos += 1;
                let (k, p) = self.variable()?;
                Ok(Node::X(k, p))
            }
            Some(b'd') => {
                self.pos += 1;
                let (k, p) = self.variable()?;
                Ok(Node::D(k, p))
            }
            Some(b'[') => {
                self.pos += 1;
                let a = self.expr()?;
                self.expect(b',')?;
                let b = self.expr()?;
                self.expect(b']')?;
                Ok(Node::Bracket(Box::new(a), Box::new(b)))
            }
            Some(b'(') => {
                self.pos += 1;
                let inner = self.expr()?;
                self.expect(b')')?;
                Ok(inner)
            }
            Some(c) => self.err(format!("unexpected '{}'", c as char)),
            None => self.err("unexpected end of input"),
        }
    }
}

fn parse_node(text: &str) -> Result<Node> {
    let mut p = Parser { src: text.as_bytes(), pos: 0 };
    let node = p.expr()?;
    if p.peek().is_some() {
        return p.err("trailing input");
    }
    Ok(node)
}

/// Parses an operator; its dimension is the largest index used (at least 1).
pub fn parse_expr(text: &str) -> Result<PolyDiffOp> {
    let node = parse_node(text)?;
    node.eval(node.max_index().max(1))
}

/// Parses an operator in a fixed dimension.
pub fn parse_expr_with_dim(text: &str, dim: usize) -> Result<PolyDiffOp> {
    let node = parse_node(text)?;
    let needed = node.max_index();
    if needed > dim {
        return Err(Error::DimMismatch { expected: dim, got: needed });
    }
    node.eval(dim)
}

impl fmt::Display for PolyDiffOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (i, ((alpha, beta), c)) in self.terms.iter().enumerate() {
            let negative = c.is_negative();
            match (i, negative) {
                (0, true) => write!(f, "-")?,
                (0, false) => {}
                (_, true) => write!(f, " - ")?,
                (_, false) => write!(f, " + ")?,
            }
            let mut factors = Vec::new();
            for (k, &e) in alpha.iter().enumerate() {
                push_factor(&mut factors, 'x', k + 1, e);
            }
            for (k, &e) in beta.iter().enumerate() {
                push_factor(&mut factors, 'd', k + 1, e);
            }
            let magnitude = c.abs();
            if factors.is_empty() {
                write!(f, "{magnitude}")?;
            } else if magnitude.is_one() {
                write!(f, "{}", factors.join(" "))?;
            } else {
                write!(f, "{magnitude} {}", factors.join(" "))?;
            }
        }
        Ok(())
    }
}

fn push_factor(out: &mut Vec<String>, letter: char, k: usize, e: u32) {
    match e {
        0 => {}
        1 => out.push(format!("{letter}{k}")),
        _ => out.push(format!("{letter}{k}^{e}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prints_lemma_case() {
        assert_eq!(parse_expr("[-d1^2, x1 d1]").unwrap().to_string(), "-2 d1^2");
    }

    #[test]
    fn grammar_accepts_spec_style_terms() {
        let op = parse_expr("-2 x1^2 d1 d2^2 + 3/4 x2 -   d1").unwrap();
        assert_eq!(op.dim(), 2);
        assert_eq!(op.len(), 3);
        assert_eq!(parse_expr(&op.to_string()).unwrap(), op);
    }

    #[test]
    fn juxtaposition_composes() {
        assert_eq!(parse_expr("d1 x1").unwrap(), parse_expr("x1 d1 + 1").unwrap());
        assert_eq!(parse_expr("d1 * x1").unwrap(), parse_expr("d1 x1").unwrap());
        assert_eq!(parse_expr("2 (x1 + d1)").unwrap().to_string(), "2 d1 + 2 x1");
    }

    #[test]
    fn zero_and_constants() {
        assert_eq!(parse_expr("x1 - x1").unwrap().to_string(), "0");
        assert_eq!(parse_expr("-3/6").unwrap().to_string(), "-1/2");
        assert!(parse_expr("0").unwrap().is_zero());
    }

    #[test]
    fn malformed_inputs() {
        for bad in ["[d1,", "d", "x0", "d1 +", "1/0", "[d1 x1]", "d1)", "y1", ""] {
            assert!(matches!(parse_expr(bad), Err(Error::Parse { .. })), "{bad:?}");
        }
    }

    #[test]
    fn fixed_dimension() {
        assert_eq!(parse_expr_with_dim("d1", 3).unwrap().dim(), 3);
        assert!(matches!(parse_expr_with_dim("d4", 3), Err(Error::DimMismatch { .. })));
    }
}
