//! Arithmetic for config values such as `"5pi/19"`, `"pi/2"` or `"10^(-1/2)"`.
//!
//! Grammar: `+ - * /`, `^` (right-associative, binds tighter than unary
//! minus on its left), parentheses, decimal literals, `pi`, and implicit
//! multiplication between a literal and what follows it (`5pi`, `2(pi/3)`).

use anyhow::{bail, Result};

pub fn eval(text: &str) -> Result<f64> {
    let mut parser = Parser { chars: text.chars().filter(|c| !c.is_whitespace()).collect(), pos: 0 };
    let value = parser.sum()?;
    if parser.pos != parser.chars.len() {
        bail!("unexpected `{}` in `{text}`", parser.chars[parser.pos]);
    }
    if !value.is_finite() {
        bail!("`{text}` is not finite");
    }
    Ok(value)
}

struct Parser {
    chars: Vec<char>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn sum(&mut self) -> Result<f64> {
        let mut value = self.product()?;
        loop {
            if self.eat('+') {
                value += self.product()?;
            } else if self.eat('-') {
                value -= self.product()?;
            } else {
                return Ok(value);
            }
        }
    }

    fn product(&mut self) -> Result<f64> {
        let mut value = self.unary()?;
        loop {
            if self.eat('*') {
                value *= self.unary()?;
            } else if self.eat('/') {
                value /= self.unary()?;
            } else if matches!(self.peek(), Some('p' | '(')) {
                value *= self.power()?;
            } else {
                return Ok(value);
            }
        }
    }

    fn unary(&mut self) -> Result<f64> {
        if self.eat('-') {
            return Ok(-self.unary()?);
        }
        if self.eat('+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<f64> {
        let base = self.atom()?;
        if self.eat('^') {
            return Ok(base.powf(self.unary()?));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<f64> {
        if self.eat('(') {
            let value = self.sum()?;
            if !self.eat(')') {
                bail!("missing `)`");
            }
            return Ok(value);
        }
        if self.chars[self.pos..].starts_with(&['p', 'i']) {
            self.pos += 2;
            return Ok(std::f64::consts::PI);
        }
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_digit() || c == '.' || c == 'e' && self.pos > start) {
            // allow exponents such as 1e-3
            if self.peek() == Some('e') && matches!(self.chars.get(self.pos + 1), Some('-' | '+')) {
                self.pos += 1;
            }
            self.pos += 1;
        }
        let literal: String = self.chars[start..self.pos].iter().collect();
        match literal.parse::<f64>() {
            Ok(v) => Ok(v),
            Err(_) if literal.is_empty() => match self.peek() {
                Some(c) => bail!("unexpected `{c}`"),
                None => bail!("unexpected end of expression"),
            },
            Err(_) => bail!("bad number `{literal}`"),
        }
    }
}
