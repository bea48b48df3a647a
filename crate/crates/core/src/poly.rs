//! Integer polynomials in the entries of an `r × r` matrix.

use std::fmt;

use num_bigint::BigInt;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::arith::Fp;
use crate::error::{Error, Result};
use crate::matrix::{IntegerMatrix, ModMatrix};

/// One monomial: coefficient times a product of entries (with repetition).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Term {
    pub coefficient: i64,
    /// Row-major flat indices `i * r + j`, repeated for powers.
    pub factors: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolynomialFunction {
    name: String,
    rank: usize,
    terms: Vec<Term>,
}

impl PolynomialFunction {
    pub fn new(name: impl Into<String>, rank: usize, terms: Vec<Term>) -> Result<Self> {
        if let Some(bad) = terms.iter().flat_map(|t| &t.factors).find(|&&f| f >= rank * rank) {
            return Err(Error::Polynomial(format!(
                "entry index {bad} out of range for rank {rank}"
            )));
        }
        Ok(PolynomialFunction {
            name: name.into(),
            rank,
            terms,
        })
    }

    /// `a² + d²` on `SL_2`.
    pub fn sum_of_diagonal_squares() -> Self {
        PolynomialFunction::parse("a^2 + d^2", 2).expect("valid")
    }

    /// Product of all `r²` entries.
    pub fn product_of_entries(rank: usize) -> Self {
        let term = Term {
            coefficient: 1,
            factors: (0..rank * rank).collect(),
        };
        PolynomialFunction {
            name: format!("product of entries (r = {rank})"),
            rank,
            terms: vec![term],
        }
    }

    /// Parses expressions such as `a^2 + d^2`, `g11*g12*g21*g22`, `3*g12 - 1`.
    ///
    /// Variables are `gIJ` with 1-based indices (single digits), or
    /// `a, b, c, d` for rank 2.
    pub fn parse(text: &str, rank: usize) -> Result<Self> {
        let terms = Parser::new(text, rank).parse()?;
        Ok(PolynomialFunction {
            name: text.trim().to_string(),
            rank,
            terms,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn degree(&self) -> usize {
        self.terms.iter().map(|t| t.factors.len()).max().unwrap_or(0)
    }

    /// Sum of absolute coefficients.
    pub fn coefficient_norm(&self) -> u64 {
        self.terms.iter().map(|t| t.coefficient.unsigned_abs()).sum()
    }

    pub fn evaluate(&self, g: &IntegerMatrix) -> Result<BigInt> {
        if g.dim() != self.rank {
            return Err(Error::DimensionMismatch(self.rank, g.dim()));
        }
        let entries = g.entries();
        let mut total = BigInt::zero();
        for t in &self.terms {
            let mut prod = BigInt::from(t.coefficient);
            for &f in &t.factors {
                prod *= &entries[f];
            }
            total += prod;
        }
        Ok(total)
    }

    pub fn evaluate_mod(&self, g: &ModMatrix) -> Result<u64> {
        if g.dim() != self.rank {
            return Err(Error::DimensionMismatch(self.rank, g.dim()));
        }
        Ok(self.compile(g.modulus())?.eval(g.entries()))
    }

    /// Coefficients reduced mod `p` for repeated evaluation.
    pub fn compile(&self, p: u64) -> Result<ModPoly> {
        let field = Fp::new(p)?;
        Ok(ModPoly {
            field,
            terms: self
                .terms
                .iter()
                .map(|t| (field.reduce_i64(t.coefficient), t.factors.clone()))
                .filter(|(c, _)| *c != 0)
                .collect(),
        })
    }
}

impl fmt::Display for PolynomialFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

/// A polynomial with coefficients reduced modulo a fixed prime.
#[derive(Clone, Debug)]
pub struct ModPoly {
    field: Fp,
    terms: Vec<(u64, Vec<usize>)>,
}

impl ModPoly {
    #[inline]
    pub fn eval(&self, entries: &[u64]) -> u64 {
        let f = self.field;
        let mut acc = 0;
        for (c, factors) in &self.terms {
            let mut prod = *c;
            for &i in factors {
                prod = f.mul(prod, entries[i]);
            }
            acc = f.add(acc, prod);
        }
        acc
    }
}

struct Parser<'a> {
    chars: Vec<char>,
    pos: usize,
    rank: usize,
    source: &'a str,
}

impl<'a> Parser<'a> {
    fn new(source: &'a str, rank: usize) -> Self {
        Parser {
            chars: source.chars().filter(|c| !c.is_whitespace()).collect(),
            pos: 0,
            rank,
            source,
        }
    }

    fn err(&self, msg: &str) -> Error {
        Error::Polynomial(format!("{msg} in {:?} at offset {}", self.source, self.pos))
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn parse(mut self) -> Result<Vec<Term>> {
        let mut terms = Vec::new();
        let mut sign = 1i64;
        if self.peek() == Some('-') {
            sign = -1;
            self.pos += 1;
        } else if self.peek() == Some('+') {
            self.pos += 1;
        }
        loop {
            let mut term = self.term()?;
            term.coefficient *= sign;
            terms.push(term);
            match self.peek() {
                None => break,
                Some('+') => sign = 1,
                Some('-') => sign = -1,
                Some(_) => return Err(self.err("expected '+' or '-'")),
            }
            self.pos += 1;
        }
        if terms.is_empty() {
            return Err(self.err("empty polynomial"));
        }
        Ok(terms)
    }

    fn term(&mut self) -> Result<Term> {
        let mut coefficient = 1i64;
        let mut factors = Vec::new();
        loop {
            match self.peek() {
                Some(c) if c.is_ascii_digit() => {
                    coefficient = coefficient
                        .checked_mul(self.integer()?)
                        .ok_or_else(|| self.err("coefficient overflow"))?;
                }
                Some(c) if c.is_ascii_alphabetic() => {
                    let idx = self.variable()?;
                    let mut power = 1;
                    if self.peek() == Some('^') {
                        self.pos += 1;
                        power = self.integer()?;
                    }
                    factors.extend(std::iter::repeat(idx).take(power as usize));
                }
                _ => return Err(self.err("expected a coefficient or variable")),
            }
            match self.peek() {
                Some('*') => self.pos += 1,
                // implicit product, as in `2b`
                Some(c) if c.is_ascii_alphabetic() => {}
                _ => break,
            }
        }
        Ok(Term {
            coefficient,
            factors,
        })
    }

    fn integer(&mut self) -> Result<i64> {
        let start = self.pos;
        while self.peek().is_some_and(|c| c.is_ascii_digit()) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.err("expected an integer"));
        }
        let s: String = self.chars[start..self.pos].iter().collect();
        s.parse().map_err(|_| self.err("integer out of range"))
    }

    fn variable(&mut self) -> Result<usize> {
        let c = self.peek().expect("checked");
        self.pos += 1;
        if self.rank == 2 {
            if let Some(i) = "abcd".find(c) {
                return Ok(i);
            }
        }
        if c != 'g' {
            return Err(self.err("unknown variable"));
        }
        let mut digit = || -> Result<usize> {
            let d = self
                .peek()
                .and_then(|c| c.to_digit(10))
                .ok_or_else(|| self.err("expected an entry index"))?;
            self.pos += 1;
            Ok(d as usize)
        };
        let (i, j) = (digit()?, digit()?);
        if i == 0 || j == 0 || i > self.rank || j > self.rank {
            return Err(self.err("entry index out of range"));
        }
        Ok((i - 1) * self.rank + (j - 1))
    }
}

impl Term {
    pub fn constant(c: i64) -> Self {
        Term {
            coefficient: c,
            factors: Vec::new(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(rows: &[[i64; 2]]) -> IntegerMatrix {
        IntegerMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn small_values() {
        let f = PolynomialFunction::sum_of_diagonal_squares();
        let id = IntegerMatrix::identity(2);
        assert_eq!(f.evaluate(&id).unwrap(), BigInt::from(2));
        assert_eq!(f.evaluate(&m(&[[0, 1], [-1, 0]])).unwrap(), BigInt::from(0));
        let prod = PolynomialFunction::product_of_entries(2);
        assert_eq!(prod.evaluate(&id).unwrap(), BigInt::from(0));
        assert_eq!(prod.evaluate(&m(&[[10, 3], [3, 1]])).unwrap(), BigInt::from(90));
    }

    #[test]
    fn parse_forms() {
        let f = PolynomialFunction::parse("g11*g12*g21*g22", 2).unwrap();
        assert_eq!(f.terms(), PolynomialFunction::product_of_entries(2).terms());
        let g = PolynomialFunction::parse("-3*a^2 + 2b - 7", 2).unwrap();
        assert_eq!(g.evaluate(&m(&[[2, 5], [1, 3]])).unwrap(), BigInt::from(-12 + 10 - 7));
        assert_eq!(g.degree(), 2);
        assert!(PolynomialFunction::parse("a + x", 2).is_err());
        assert!(PolynomialFunction::parse("g31", 2).is_err());
        assert!(PolynomialFunction::parse("a +", 2).is_err());
    }

    #[test]
    fn rank_mismatch() {
        let f = PolynomialFunction::sum_of_diagonal_squares();
        assert!(matches!(
            f.evaluate(&IntegerMatrix::identity(3)),
            Err(Error::DimensionMismatch(2, 3))
        ));
    }

    proptest! {
        #[test]
        fn evaluation_commutes_with_reduction(
            entries in proptest::collection::vec(-10_000i64..10_000, 4),
            coefs in proptest::collection::vec(-50i64..50, 3),
            pi in 0usize..5,
        ) {
            let p = [2u64, 3, 5, 13, 10_007][pi];
            let g = IntegerMatrix::from_flat(&entries).unwrap();
            let text = format!("{}*a*d {} {}*b^3*c + {}", coefs[0].abs(), if coefs[1] < 0 { "-" } else { "+" }, coefs[1].abs(), coefs[2].abs());
            let f = PolynomialFunction::parse(&text, 2).unwrap();
            let exact = f.evaluate(&g).unwrap();
            let big_p = BigInt::from(p);
            let expected = ((exact % &big_p) + &big_p) % &big_p;
            let residue = f.evaluate_mod(&g.reduce_mod(p).unwrap()).unwrap();
            prop_assert_eq!(BigInt::from(residue), expected);
        }
    }
}
