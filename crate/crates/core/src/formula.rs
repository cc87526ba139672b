//! Linear predictors over the four scenario covariates.
//!
//! Formulas are written as sums of terms such as `-6.4 + 0.25*x1 + x1*x3 +
//! 0.5*x2^2`. Each non-constant term is a covariate or a product of two
//! covariates.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Number of covariates per individual.
pub const N_COVARIATES: usize = 4;

/// `(X1, X2, X3, X4)`: two continuous, two binary.
pub type Covariates = [f64; N_COVARIATES];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Term {
    /// Zero-based covariate index.
    Main(usize),
    /// Product of two covariates; `Product(i, i)` is a square.
    Product(usize, usize),
}

impl Term {
    pub fn eval(&self, x: &Covariates) -> f64 {
        match *self {
            Term::Main(i) => x[i],
            Term::Product(i, j) => x[i] * x[j],
        }
    }

    pub fn main_effects() -> Vec<Term> {
        (0..N_COVARIATES).map(Term::Main).collect()
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Term::Main(i) => write!(f, "x{}", i + 1),
            Term::Product(i, j) if i == j => write!(f, "x{}^2", i + 1),
            Term::Product(i, j) => write!(f, "x{}*x{}", i + 1, j + 1),
        }
    }
}

/// `intercept + Σ coefficient · term`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearPredictor {
    pub intercept: f64,
    pub terms: Vec<(f64, Term)>,
}

impl LinearPredictor {
    pub fn new(intercept: f64, terms: Vec<(f64, Term)>) -> Self {
        Self { intercept, terms }
    }

    pub fn eval(&self, x: &Covariates) -> f64 {
        self.terms
            .iter()
            .fold(self.intercept, |acc, (c, t)| acc + c * t.eval(x))
    }

    /// Value without the intercept.
    pub fn eval_slope(&self, x: &Covariates) -> f64 {
        self.eval(x) - self.intercept
    }

    pub fn term_list(&self) -> Vec<Term> {
        self.terms.iter().map(|(_, t)| *t).collect()
    }

    pub fn with_intercept(&self, intercept: f64) -> Self {
        Self {
            intercept,
            terms: self.terms.clone(),
        }
    }
}

impl fmt::Display for LinearPredictor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.intercept)?;
        for (c, t) in &self.terms {
            if *c < 0.0 {
                write!(f, " - {}*{}", -c, t)?;
            } else {
                write!(f, " + {}*{}", c, t)?;
            }
        }
        Ok(())
    }
}

impl FromStr for LinearPredictor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |msg: &str| Error::Config(format!("invalid formula `{s}`: {msg}"));
        let compact: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        if compact.is_empty() {
            return Err(bad("empty"));
        }

        // Split into signed terms, keeping exponent signs such as `1e-3` intact.
        let mut pieces: Vec<String> = Vec::new();
        let mut current = String::new();
        let mut prev: Option<char> = None;
        for ch in compact.chars() {
            let exponent_sign = matches!(prev, Some('e') | Some('E'))
                && current
                    .trim_start_matches(['+', '-'])
                    .chars()
                    .next()
                    .is_some_and(|c| c.is_ascii_digit() || c == '.');
            if (ch == '+' || ch == '-') && !current.is_empty() && !exponent_sign {
                pieces.push(std::mem::take(&mut current));
            }
            current.push(ch);
            prev = Some(ch);
        }
        pieces.push(current);

        let mut intercept = 0.0;
        let mut terms: Vec<(f64, Term)> = Vec::new();
        for piece in pieces {
            let (sign, body) = match piece.strip_prefix('-') {
                Some(rest) => (-1.0, rest),
                None => (1.0, piece.strip_prefix('+').unwrap_or(&piece)),
            };
            if body.is_empty() {
                return Err(bad("dangling sign"));
            }
            let mut coef = sign;
            let mut vars: Vec<usize> = Vec::new();
            for factor in body.split('*') {
                if factor.is_empty() {
                    return Err(bad("empty factor"));
                }
                if let Some(var) = factor.strip_prefix(['x', 'X']) {
                    let (idx, power) = match var.split_once('^') {
                        Some((i, p)) => (i, p),
                        None => (var, "1"),
                    };
                    let idx: usize = idx.parse().map_err(|_| bad("bad covariate index"))?;
                    if idx == 0 || idx > N_COVARIATES {
                        return Err(bad("covariate index out of range"));
                    }
                    let power: usize = power.parse().map_err(|_| bad("bad exponent"))?;
                    for _ in 0..power {
                        vars.push(idx - 1);
                    }
                } else {
                    let v: f64 = factor.parse().map_err(|_| bad("bad number"))?;
                    coef *= v;
                }
            }
            let term = match vars.as_slice() {
                [] => {
                    intercept += coef;
                    continue;
                }
                [i] => Term::Main(*i),
                [i, j] => Term::Product(*i.min(j), *i.max(j)),
                _ => return Err(bad("terms of degree above two are not supported")),
            };
            match terms.iter_mut().find(|(_, t)| *t == term) {
                Some((c, _)) => *c += coef,
                None => terms.push((coef, term)),
            }
        }
        Ok(LinearPredictor { intercept, terms })
    }
}

pub fn expit(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}
