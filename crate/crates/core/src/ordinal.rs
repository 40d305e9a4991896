//! Ordinals below ε₀ in Cantor normal form.
//!
//! An [`Ordinal`] is a finite sum `ω^e₁·c₁ + … + ω^e_k·c_k` with strictly
//! decreasing exponents (themselves ordinals) and positive coefficients.
//! The empty sum is `0`.
//!
//! The textual form used in reports and on the command line is
//!
//! ```text
//! expr := term ('+' term)*
//! term := 'w' ('^' atom)? ('*' nat)? | nat
//! atom := nat | 'w' | '(' expr ')'
//! ```
//!
//! so `w^2*3+w+4` is ω²·3+ω+4 and `w^(w+1)` is ω^(ω+1).

use std::cmp::Ordering;
use std::fmt;
use std::ops::Add;
use std::str::FromStr;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OrdinalError {
    #[error("malformed ordinal at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },
    #[error("ordinal is not in Cantor normal form: {0}")]
    NotCnf(String),
}

/// One `ω^exp · coeff` summand.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Term {
    pub exp: Ordinal,
    pub coeff: BigUint,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct Ordinal {
    terms: Vec<Term>,
}

impl Ordinal {
    pub fn zero() -> Self {
        Ordinal { terms: Vec::new() }
    }

    pub fn one() -> Self {
        Self::finite(1)
    }

    pub fn omega() -> Self {
        Self::omega_pow(Self::one())
    }

    pub fn finite(n: u64) -> Self {
        Self::finite_big(BigUint::from(n))
    }

    fn finite_big(n: BigUint) -> Self {
        if n.is_zero() {
            return Self::zero();
        }
        Ordinal {
            terms: vec![Term {
                exp: Self::zero(),
                coeff: n,
            }],
        }
    }

    /// `ω^exp`.
    pub fn omega_pow(exp: Ordinal) -> Self {
        Self::monomial(exp, BigUint::one())
    }

    /// `ω^exp · coeff`; a zero coefficient yields `0`.
    pub fn monomial(exp: Ordinal, coeff: BigUint) -> Self {
        if coeff.is_zero() {
            return Self::zero();
        }
        Ordinal {
            terms: vec![Term { exp, coeff }],
        }
    }

    /// Builds an ordinal from terms, rejecting anything not in CNF.
    pub fn from_terms(terms: Vec<Term>) -> Result<Self, OrdinalError> {
        for t in &terms {
            if t.coeff.is_zero() {
                return Err(OrdinalError::NotCnf("zero coefficient".into()));
            }
        }
        for w in terms.windows(2) {
            if w[0].exp <= w[1].exp {
                return Err(OrdinalError::NotCnf(format!(
                    "exponent {} does not exceed {}",
                    w[0].exp, w[1].exp
                )));
            }
        }
        Ok(Ordinal { terms })
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.terms.iter().all(|t| t.exp.is_zero())
    }

    pub fn to_u64(&self) -> Option<u64> {
        match self.terms.as_slice() {
            [] => Some(0),
            [t] if t.exp.is_zero() => t.coeff.to_u64(),
            _ => None,
        }
    }

    pub fn is_successor(&self) -> bool {
        self.terms.last().is_some_and(|t| t.exp.is_zero())
    }

    pub fn is_limit(&self) -> bool {
        !self.is_zero() && !self.is_successor()
    }

    pub fn succ(&self) -> Self {
        self.clone() + Self::one()
    }

    /// `ζ` with `ζ+1 = self`, for successor ordinals.
    pub fn predecessor(&self) -> Option<Self> {
        if !self.is_successor() {
            return None;
        }
        let mut terms = self.terms.clone();
        let last = terms.last_mut().expect("successor has a term");
        last.coeff -= 1u32;
        if last.coeff.is_zero() {
            terms.pop();
        }
        Some(Ordinal { terms })
    }

    /// The canonical fundamental sequence `self[n]`, `n ≥ 1`, of a limit
    /// ordinal. Writing `self = γ + ω^β`, this is `γ + ω^δ·n` when
    /// `β = δ+1` and `γ + ω^(β[n])` when `β` is a limit.
    pub fn fundamental(&self, n: u64) -> Option<Self> {
        if !self.is_limit() || n == 0 {
            return None;
        }
        let mut head = self.terms.clone();
        let last = head.last_mut().expect("limit has a term");
        let beta = last.exp.clone();
        last.coeff -= 1u32;
        if last.coeff.is_zero() {
            head.pop();
        }
        let gamma = Ordinal { terms: head };
        let tail = match beta.predecessor() {
            Some(delta) => Self::monomial(delta, BigUint::from(n)),
            None => Self::omega_pow(beta.fundamental(n)?),
        };
        Some(gamma + tail)
    }

    fn leading_exp(&self) -> Option<&Ordinal> {
        self.terms.first().map(|t| &t.exp)
    }
}

impl Ord for Ordinal {
    fn cmp(&self, other: &Self) -> Ordering {
        for (a, b) in self.terms.iter().zip(&other.terms) {
            let ord = a.exp.cmp(&b.exp).then_with(|| a.coeff.cmp(&b.coeff));
            if ord != Ordering::Equal {
                return ord;
            }
        }
        self.terms.len().cmp(&other.terms.len())
    }
}

impl PartialOrd for Ordinal {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Add for Ordinal {
    type Output = Ordinal;

    fn add(self, rhs: Ordinal) -> Ordinal {
        let Some(lead) = rhs.leading_exp() else {
            return self;
        };
        let mut terms: Vec<Term> = self
            .terms
            .into_iter()
            .take_while(|t| t.exp >= *lead)
            .collect();
        let mut rest = rhs.terms.into_iter();
        let first = rest.next().expect("nonzero rhs");
        match terms.last_mut() {
            Some(t) if t.exp == first.exp => t.coeff += first.coeff,
            _ => terms.push(first),
        }
        terms.extend(rest);
        Ordinal { terms }
    }
}

impl<'a> Add<&'a Ordinal> for &'a Ordinal {
    type Output = Ordinal;

    fn add(self, rhs: &'a Ordinal) -> Ordinal {
        self.clone() + rhs.clone()
    }
}

impl From<u64> for Ordinal {
    fn from(n: u64) -> Self {
        Ordinal::finite(n)
    }
}

impl fmt::Display for Ordinal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return f.write_str("0");
        }
        for (i, t) in self.terms.iter().enumerate() {
            if i > 0 {
                f.write_str("+")?;
            }
            if t.exp.is_zero() {
                write!(f, "{}", t.coeff)?;
                continue;
            }
            f.write_str("w")?;
            if t.exp != Ordinal::one() {
                if t.exp.to_u64().is_some() || t.exp == Ordinal::omega() {
                    write!(f, "^{}", t.exp)?;
                } else {
                    write!(f, "^({})", t.exp)?;
                }
            }
            if !t.coeff.is_one() {
                write!(f, "*{}", t.coeff)?;
            }
        }
        Ok(())
    }
}

impl FromStr for Ordinal {
    type Err = OrdinalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut p = Parser {
            src: s.as_bytes(),
            pos: 0,
        };
        let ord = p.expr()?;
        p.skip_ws();
        if p.pos != p.src.len() {
            return Err(p.err("trailing input"));
        }
        Ok(ord)
    }
}

impl serde::Serialize for Ordinal {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn err(&self, msg: &str) -> OrdinalError {
        OrdinalError::Parse {
            pos: self.pos,
            msg: msg.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.src.get(self.pos).is_some_and(u8::is_ascii_whitespace) {
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

    /// Accepts `w`, `W` and the UTF-8 encoding of `ω`.
    fn eat_omega(&mut self) -> bool {
        match self.peek() {
            Some(b'w' | b'W') => {
                self.pos += 1;
                true
            }
            Some(0xCF) if self.src.get(self.pos + 1) == Some(&0x89) => {
                self.pos += 2;
                true
            }
            _ => false,
        }
    }

    fn nat(&mut self) -> Result<BigUint, OrdinalError> {
        self.skip_ws();
        let start = self.pos;
        while self.src.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.err("expected a natural number"));
        }
        let digits = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii digits");
        Ok(digits.parse().expect("decimal digits"))
    }

    fn expr(&mut self) -> Result<Ordinal, OrdinalError> {
        let mut terms = vec![self.term()?];
        while self.eat(b'+') {
            terms.push(self.term()?);
        }
        if terms.len() == 1 {
            return match terms.pop().flatten() {
                Some(t) => Ordinal::from_terms(vec![t]),
                None => Ok(Ordinal::zero()),
            };
        }
        let terms: Vec<Term> = terms
            .into_iter()
            .map(|t| t.ok_or_else(|| OrdinalError::NotCnf("zero summand".into())))
            .collect::<Result<_, _>>()?;
        Ordinal::from_terms(terms)
    }

    /// `None` stands for a literal `0` summand.
    fn term(&mut self) -> Result<Option<Term>, OrdinalError> {
        if self.eat_omega() {
            let exp = if self.eat(b'^') {
                self.atom()?
            } else {
                Ordinal::one()
            };
            let coeff = if self.eat(b'*') {
                let c = self.nat()?;
                if c.is_zero() {
                    return Err(self.err("coefficient must be positive"));
                }
                c
            } else {
                BigUint::one()
            };
            return Ok(Some(Term { exp, coeff }));
        }
        let n = self.nat()?;
        Ok((!n.is_zero()).then(|| Term {
            exp: Ordinal::zero(),
            coeff: n,
        }))
    }

    fn atom(&mut self) -> Result<Ordinal, OrdinalError> {
        if self.eat(b'(') {
            let e = self.expr()?;
            if !self.eat(b')') {
                return Err(self.err("expected ')'"));
            }
            return Ok(e);
        }
        if self.eat_omega() {
            return Ok(Ordinal::omega());
        }
        Ok(Ordinal::finite_big(self.nat()?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn o(s: &str) -> Ordinal {
        s.parse().unwrap()
    }

    /// Independent comparator: expands both operands to explicit
    /// (exponent-string, coefficient) lists and compares them term by term,
    /// recursing on exponents through a fresh parse.
    fn oracle_cmp(a: &str, b: &str) -> Ordering {
        fn split(s: &str) -> Vec<(String, u64)> {
            let mut out = Vec::new();
            let mut depth = 0;
            let mut cur = String::new();
            for ch in s.chars() {
                match ch {
                    '(' => depth += 1,
                    ')' => depth -= 1,
                    '+' if depth == 0 => {
                        out.push(std::mem::take(&mut cur));
                        continue;
                    }
                    _ => {}
                }
                cur.push(ch);
            }
            out.push(cur);
            out.into_iter()
                .filter(|t| t != "0")
                .map(|t| {
                    let (base, coeff) = match t.rsplit_once('*') {
                        Some((b, c)) if !c.contains(')') => (b.to_string(), c.parse().unwrap()),
                        _ => (t.clone(), 1),
                    };
                    if let Ok(n) = base.parse::<u64>() {
                        ("0".to_string(), n * coeff)
                    } else if base == "w" {
                        ("1".to_string(), coeff)
                    } else {
                        let e = base.trim_start_matches("w^");
                        let e = e.trim_start_matches('(').trim_end_matches(')');
                        (e.to_string(), coeff)
                    }
                })
                .collect()
        }
        let (ta, tb) = (split(a), split(b));
        for (x, y) in ta.iter().zip(&tb) {
            let ord = oracle_cmp(&x.0, &y.0).then(x.1.cmp(&y.1));
            if ord != Ordering::Equal {
                return ord;
            }
        }
        ta.len().cmp(&tb.len())
    }

    #[test]
    fn compare_examples() {
        assert_eq!(o("w").cmp(&o("5")), Ordering::Greater);
        assert_eq!(o("w^2+1").cmp(&o("w^2+1")), Ordering::Equal);
        let expected = oracle_cmp("w*2+3", "w*3");
        assert_eq!(expected, Ordering::Less);
        assert_eq!(o("w*2+3").cmp(&o("w*3")), expected);
    }

    #[test]
    fn compare_matches_oracle_on_fixed_pool() {
        let pool = [
            "0",
            "1",
            "7",
            "w",
            "w+1",
            "w*2",
            "w*2+3",
            "w*3",
            "w^2",
            "w^2+w*5",
            "w^w",
            "w^(w+1)",
            "w^(w+1)*2+w^3",
            "w^(w^2)",
        ];
        for a in pool {
            for b in pool {
                assert_eq!(o(a).cmp(&o(b)), oracle_cmp(a, b), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn addition_examples() {
        assert_eq!(o("1") + o("w"), o("w"));
        assert_eq!(o("w") + o("1"), o("w+1"));
        // Truncate the terms of the left operand below ω (the leading
        // exponent of the right operand), then merge: ω²+ω + ω·2+1.
        assert_eq!(o("w^2+w") + o("w*2+1"), o("w^2+w*3+1"));
        assert_eq!(o("w^2*2+w*7+3") + o("w^2"), o("w^2*3"));
    }

    #[test]
    fn codec_examples() {
        let a = o("w^2*3+w+4");
        assert_eq!(a.terms().len(), 3);
        assert_eq!(a.to_string(), "w^2*3+w+4");
        assert!(o("0").is_zero());
        assert!(matches!(
            "w+w^2".parse::<Ordinal>(),
            Err(OrdinalError::NotCnf(_))
        ));
        assert!(matches!(
            "w+w".parse::<Ordinal>(),
            Err(OrdinalError::NotCnf(_))
        ));
        assert!(matches!(
            "w*".parse::<Ordinal>(),
            Err(OrdinalError::Parse { .. })
        ));
        assert!(matches!(
            "w^".parse::<Ordinal>(),
            Err(OrdinalError::Parse { .. })
        ));
        assert!(matches!(
            "w*0".parse::<Ordinal>(),
            Err(OrdinalError::Parse { .. })
        ));
        assert!(matches!(
            "(w".parse::<Ordinal>(),
            Err(OrdinalError::Parse { .. })
        ));
        assert_eq!(o("w^(w+1)*2").to_string(), "w^(w+1)*2");
        assert_eq!(o("ω^ω").to_string(), "w^w");
        assert_eq!(o(" w ^ 2 + 1 ").to_string(), "w^2+1");
        assert_eq!(o("w^0*3"), o("3"));
        assert_eq!(
            o("99999999999999999999999").to_string(),
            "99999999999999999999999"
        );
    }

    #[test]
    fn successor_and_limit_structure() {
        assert!(o("w+1").is_successor());
        assert_eq!(o("w+1").predecessor(), Some(o("w")));
        assert_eq!(o("w*2+1").predecessor(), Some(o("w*2")));
        assert!(o("w*2").is_limit());
        assert!(!o("0").is_limit() && !o("0").is_successor());
        assert_eq!(o("3").succ(), o("4"));
    }

    #[test]
    fn fundamental_sequences() {
        assert_eq!(o("w").fundamental(5), Some(o("5")));
        assert_eq!(o("w*2").fundamental(3), Some(o("w+3")));
        assert_eq!(o("w^2").fundamental(4), Some(o("w*4")));
        assert_eq!(o("w^2+w").fundamental(2), Some(o("w^2+2")));
        assert_eq!(o("w^w").fundamental(3), Some(o("w^3")));
        assert_eq!(o("w^(w+1)").fundamental(2), Some(o("w^w*2")));
        assert_eq!(o("w+1").fundamental(2), None);
        for xi in ["w", "w*2", "w^2", "w^w", "w^(w*2)+w^3"] {
            let xi = o(xi);
            let seq: Vec<_> = (1..6).map(|n| xi.fundamental(n).unwrap()).collect();
            assert!(seq.windows(2).all(|w| w[0] < w[1]));
            assert!(seq.iter().all(|z| *z < xi));
        }
    }
}
