//! Parser for the restricted growth-expression grammar used by the p/q and
//! beta-rule flags.
//!
//! Accepted shapes:
//!   polynomials      "n^3", "50*n^2", "n^2 + 3*n + 1"
//!   exponentials     "exp(0.4*n)", "exp(0.5*n^0.75)", "exp(0.5*sqrt(n)*log(n))"
//!   quasi-poly       "n^log(n)"
//!   beta rules       "2", "3*log(n)", "4/n", "2*log(n)/n"
//! Logarithms are natural.

use metastab_core::error::{Error, Result};
use metastab_core::partition::{BetaRule, GrowthFn};

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    N,
    Log,
    Sqrt,
    Exp,
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
}

fn tokenize(src: &str) -> Result<Vec<Token>> {
    let mut out = Vec::new();
    let bytes = src.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        match c {
            ' ' | '\t' => i += 1,
            '+' => {
                out.push(Token::Plus);
                i += 1;
            }
            '-' => {
                out.push(Token::Minus);
                i += 1;
            }
            '*' => {
                out.push(Token::Star);
                i += 1;
            }
            '/' => {
                out.push(Token::Slash);
                i += 1;
            }
            '^' => {
                out.push(Token::Caret);
                i += 1;
            }
            '(' => {
                out.push(Token::LParen);
                i += 1;
            }
            ')' => {
                out.push(Token::RParen);
                i += 1;
            }
            '0'..='9' | '.' => {
                let start = i;
                while i < bytes.len() && matches!(bytes[i] as char, '0'..='9' | '.' | 'e' | 'E') {
                    // allow scientific exponents like 1e-3
                    if matches!(bytes[i] as char, 'e' | 'E')
                        && i + 1 < bytes.len()
                        && matches!(bytes[i + 1] as char, '+' | '-')
                    {
                        i += 1;
                    }
                    i += 1;
                }
                let text = &src[start..i];
                let v: f64 = text
                    .parse()
                    .map_err(|_| Error::invalid(format!("bad number '{text}'")))?;
                out.push(Token::Num(v));
            }
            'a'..='z' => {
                let start = i;
                while i < bytes.len() && (bytes[i] as char).is_ascii_alphabetic() {
                    i += 1;
                }
                match &src[start..i] {
                    "n" => out.push(Token::N),
                    "log" | "ln" => out.push(Token::Log),
                    "sqrt" => out.push(Token::Sqrt),
                    "exp" => out.push(Token::Exp),
                    other => return Err(Error::invalid(format!("unknown symbol '{other}'"))),
                }
            }
            other => return Err(Error::invalid(format!("unexpected character '{other}'"))),
        }
    }
    Ok(out)
}

/// A monomial `coeff * n^n_exp * log(n)^log_exp`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Term {
    coeff: f64,
    n_exp: f64,
    log_exp: i32,
}

impl Term {
    fn constant(c: f64) -> Self {
        Term {
            coeff: c,
            n_exp: 0.0,
            log_exp: 0,
        }
    }

    fn mul(self, other: Term) -> Term {
        Term {
            coeff: self.coeff * other.coeff,
            n_exp: self.n_exp + other.n_exp,
            log_exp: self.log_exp + other.log_exp,
        }
    }

    fn inv(self) -> Term {
        Term {
            coeff: 1.0 / self.coeff,
            n_exp: -self.n_exp,
            log_exp: -self.log_exp,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Sum(Vec<Term>),
    ExpOf(Vec<Term>),
    NPowLog,
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn bump(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn expect(&mut self, t: Token) -> Result<()> {
        match self.bump() {
            Some(got) if got == t => Ok(()),
            got => Err(Error::invalid(format!("expected {t:?}, found {got:?}"))),
        }
    }

    fn parse_sum(&mut self) -> Result<Node> {
        let mut node = self.parse_product()?;
        loop {
            let sign = match self.peek() {
                Some(Token::Plus) => 1.0,
                Some(Token::Minus) => -1.0,
                _ => break,
            };
            self.bump();
            let rhs = self.parse_product()?;
            let (Node::Sum(mut acc), Node::Sum(more)) = (node, rhs) else {
                return Err(Error::invalid(
                    "exponential and n^log(n) atoms cannot appear in sums",
                ));
            };
            acc.extend(more.into_iter().map(|t| Term {
                coeff: sign * t.coeff,
                ..t
            }));
            node = Node::Sum(acc);
        }
        Ok(node)
    }

    fn parse_product(&mut self) -> Result<Node> {
        let mut node = self.parse_atom()?;
        loop {
            let divide = match self.peek() {
                Some(Token::Star) => false,
                Some(Token::Slash) => true,
                _ => break,
            };
            self.bump();
            let rhs = self.parse_atom()?;
            let (Node::Sum(lhs), Node::Sum(rhs)) = (&node, &rhs) else {
                return Err(Error::invalid(
                    "exponential and n^log(n) atoms cannot be combined multiplicatively",
                ));
            };
            let (&[l], &[r]) = (&lhs[..], &rhs[..]) else {
                return Err(Error::invalid("products of sums are not in the grammar"));
            };
            node = Node::Sum(vec![if divide { l.mul(r.inv()) } else { l.mul(r) }]);
        }
        Ok(node)
    }

    fn parse_atom(&mut self) -> Result<Node> {
        match self.bump() {
            Some(Token::Num(v)) => Ok(Node::Sum(vec![Term::constant(v)])),
            Some(Token::Minus) => {
                let inner = self.parse_atom()?;
                match inner {
                    Node::Sum(terms) => Ok(Node::Sum(
                        terms
                            .into_iter()
                            .map(|t| Term {
                                coeff: -t.coeff,
                                ..t
                            })
                            .collect(),
                    )),
                    _ => Err(Error::invalid("cannot negate this atom")),
                }
            }
            Some(Token::N) => {
                if matches!(self.peek(), Some(Token::Caret)) {
                    self.bump();
                    match self.bump() {
                        Some(Token::Num(e)) => Ok(Node::Sum(vec![Term {
                            coeff: 1.0,
                            n_exp: e,
                            log_exp: 0,
                        }])),
                        Some(Token::Log) => {
                            self.expect(Token::LParen)?;
                            self.expect(Token::N)?;
                            self.expect(Token::RParen)?;
                            Ok(Node::NPowLog)
                        }
                        got => Err(Error::invalid(format!("bad exponent {got:?}"))),
                    }
                } else {
                    Ok(Node::Sum(vec![Term {
                        coeff: 1.0,
                        n_exp: 1.0,
                        log_exp: 0,
                    }]))
                }
            }
            Some(Token::Log) => {
                self.expect(Token::LParen)?;
                self.expect(Token::N)?;
                self.expect(Token::RParen)?;
                Ok(Node::Sum(vec![Term {
                    coeff: 1.0,
                    n_exp: 0.0,
                    log_exp: 1,
                }]))
            }
            Some(Token::Sqrt) => {
                self.expect(Token::LParen)?;
                self.expect(Token::N)?;
                self.expect(Token::RParen)?;
                Ok(Node::Sum(vec![Term {
                    coeff: 1.0,
                    n_exp: 0.5,
                    log_exp: 0,
                }]))
            }
            Some(Token::Exp) => {
                self.expect(Token::LParen)?;
                let inner = self.parse_sum()?;
                self.expect(Token::RParen)?;
                match inner {
                    Node::Sum(terms) => Ok(Node::ExpOf(terms)),
                    _ => Err(Error::invalid("nested exponentials are not in the grammar")),
                }
            }
            Some(Token::LParen) => {
                let inner = self.parse_sum()?;
                self.expect(Token::RParen)?;
                Ok(inner)
            }
            got => Err(Error::invalid(format!("unexpected token {got:?}"))),
        }
    }
}

fn parse_node(src: &str) -> Result<Node> {
    let tokens = tokenize(src)?;
    let mut parser = Parser { tokens, pos: 0 };
    let node = parser.parse_sum()?;
    if parser.pos != parser.tokens.len() {
        return Err(Error::invalid(format!("trailing input in '{src}'")));
    }
    Ok(node)
}

/// Parses a growth function: a polynomial in n, `exp(c*n^a)`,
/// `exp(c*sqrt(n)*log(n))`, or `n^log(n)`.
pub fn parse_growth(src: &str) -> Result<GrowthFn> {
    match parse_node(src)? {
        Node::NPowLog => Ok(GrowthFn::PowLog),
        Node::ExpOf(terms) => {
            let [t] = terms[..] else {
                return Err(Error::invalid(
                    "exponentials take a single product argument",
                ));
            };
            match (t.n_exp, t.log_exp) {
                (a, 0) if a > 0.0 => Ok(GrowthFn::ExpPoly {
                    scale: t.coeff,
                    exponent: a,
                }),
                (a, 1) if (a - 0.5).abs() < 1e-12 => Ok(GrowthFn::ExpSqrtLog { scale: t.coeff }),
                _ => Err(Error::invalid(format!(
                    "unsupported exponential argument in '{src}'"
                ))),
            }
        }
        Node::Sum(terms) => {
            let mut coeffs: Vec<f64> = Vec::new();
            for t in terms {
                if t.log_exp != 0 || t.n_exp < 0.0 || t.n_exp.fract() != 0.0 {
                    return Err(Error::invalid(format!(
                        "'{src}' is not a polynomial in n (ExpPoly/ExpSqrtLog/n^log(n) are the \
                         only non-polynomial shapes)"
                    )));
                }
                let k = t.n_exp as usize;
                if coeffs.len() <= k {
                    coeffs.resize(k + 1, 0.0);
                }
                coeffs[k] += t.coeff;
            }
            Ok(GrowthFn::Poly { coeffs })
        }
    }
}

/// Parses a beta rule: `c`, `c*log(n)`, `c/n`, or `c*log(n)/n`.
pub fn parse_beta_rule(src: &str) -> Result<BetaRule> {
    let Node::Sum(terms) = parse_node(src)? else {
        return Err(Error::invalid(format!("'{src}' is not a valid beta rule")));
    };
    let [t] = terms[..] else {
        return Err(Error::invalid("beta rules are single products"));
    };
    match (t.n_exp, t.log_exp) {
        (0.0, 0) => Ok(BetaRule::Const(t.coeff)),
        (0.0, 1) => Ok(BetaRule::MulLogN(t.coeff)),
        (-1.0, 0) => Ok(BetaRule::OverN(t.coeff)),
        (-1.0, 1) => Ok(BetaRule::MulLogNOverN(t.coeff)),
        _ => Err(Error::invalid(format!(
            "'{src}' is not one of c, c*log(n), c/n, c*log(n)/n"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomials_parse() {
        assert_eq!(
            parse_growth("n^3").unwrap(),
            GrowthFn::Poly {
                coeffs: vec![0.0, 0.0, 0.0, 1.0]
            }
        );
        assert_eq!(
            parse_growth("50*n^2").unwrap(),
            GrowthFn::Poly {
                coeffs: vec![0.0, 0.0, 50.0]
            }
        );
        assert_eq!(
            parse_growth("n^2 + 3*n + 1").unwrap(),
            GrowthFn::Poly {
                coeffs: vec![1.0, 3.0, 1.0]
            }
        );
    }

    #[test]
    fn exponentials_parse() {
        assert_eq!(
            parse_growth("exp(0.4*n)").unwrap(),
            GrowthFn::ExpPoly {
                scale: 0.4,
                exponent: 1.0
            }
        );
        assert_eq!(
            parse_growth("exp(0.5*n^0.75)").unwrap(),
            GrowthFn::ExpPoly {
                scale: 0.5,
                exponent: 0.75
            }
        );
        assert_eq!(
            parse_growth("exp(0.5*sqrt(n)*log(n))").unwrap(),
            GrowthFn::ExpSqrtLog { scale: 0.5 }
        );
        assert_eq!(parse_growth("n^log(n)").unwrap(), GrowthFn::PowLog);
    }

    #[test]
    fn evaluation_agrees_with_direct_formulas() {
        let q = parse_growth("exp(0.3*n)").unwrap();
        assert!((q.eval(10.0) - (3.0f64).exp()).abs() < 1e-12);
        let p = parse_growth("50*n^2").unwrap();
        assert_eq!(p.eval(10.0), 5000.0);
    }

    #[test]
    fn beta_rules_parse() {
        assert_eq!(parse_beta_rule("2").unwrap(), BetaRule::Const(2.0));
        assert_eq!(parse_beta_rule("3*log(n)").unwrap(), BetaRule::MulLogN(3.0));
        assert_eq!(parse_beta_rule("4/n").unwrap(), BetaRule::OverN(4.0));
        assert_eq!(
            parse_beta_rule("2*log(n)/n").unwrap(),
            BetaRule::MulLogNOverN(2.0)
        );
    }

    #[test]
    fn junk_is_rejected_with_context() {
        assert!(parse_growth("exp(exp(n))").is_err());
        assert!(parse_growth("n^n").is_err());
        assert!(parse_growth("2^n").is_err());
        assert!(parse_beta_rule("n^2").is_err());
        assert!(parse_growth("frobnicate(n)").is_err());
    }
}
