//! Recursive-descent parser.
//!
//! ```text
//! expr   := term (('+'|'-') term)*
//! term   := factor (('*'|'/') factor)*
//! factor := '-'? power
//! power  := atom ('^' '-'? integer)?
//! atom   := number | 't' | func '(' expr ')' | '(' expr ')'
//! func   := 'sin' | 'cos' | 'exp' | 'sqrt'
//! ```

use super::{ExprError, Func, TimeExpr};

pub fn parse(source: &str) -> Result<TimeExpr, ExprError> {
    let mut parser = Parser {
        src: source.as_bytes(),
        pos: 0,
    };
    let expr = parser.expr()?;
    parser.skip_ws();
    if parser.pos < parser.src.len() {
        return Err(parser.error("unexpected trailing input"));
    }
    Ok(expr)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn error(&self, message: impl Into<String>) -> ExprError {
        ExprError::Syntax {
            offset: self.pos,
            message: message.into(),
        }
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

    fn eat(&mut self, byte: u8) -> bool {
        if self.peek() == Some(byte) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<TimeExpr, ExprError> {
        let mut lhs = self.term()?;
        loop {
            if self.eat(b'+') {
                lhs = lhs.add(&self.term()?);
            } else if self.eat(b'-') {
                lhs = lhs.sub(&self.term()?);
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<TimeExpr, ExprError> {
        let mut lhs = self.factor()?;
        loop {
            if self.eat(b'*') {
                lhs = lhs.mul(&self.factor()?);
            } else if self.eat(b'/') {
                lhs = lhs.div(&self.factor()?);
            } else {
                return Ok(lhs);
            }
        }
    }

    fn factor(&mut self) -> Result<TimeExpr, ExprError> {
        if self.eat(b'-') {
            Ok(self.power()?.neg())
        } else {
            self.power()
        }
    }

    fn power(&mut self) -> Result<TimeExpr, ExprError> {
        let base = self.atom()?;
        if !self.eat(b'^') {
            return Ok(base);
        }
        let negative = self.eat(b'-');
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.error("expected integer exponent"));
        }
        let digits = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii digits");
        let magnitude: i32 = digits.parse().map_err(|_| ExprError::Syntax {
            offset: start,
            message: "exponent out of range".into(),
        })?;
        Ok(base.powi(if negative { -magnitude } else { magnitude }))
    }

    fn atom(&mut self) -> Result<TimeExpr, ExprError> {
        match self.peek() {
            None => Err(self.error("unexpected end of input")),
            Some(b'(') => {
                self.pos += 1;
                let inner = self.expr()?;
                if !self.eat(b')') {
                    return Err(self.error("expected `)`"));
                }
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => self.identifier(),
            Some(c) => Err(self.error(format!("unexpected character `{}`", c as char))),
        }
    }

    fn number(&mut self) -> Result<TimeExpr, ExprError> {
        let start = self.pos;
        let digits = |p: &mut Self| {
            let s = p.pos;
            while p.pos < p.src.len() && p.src[p.pos].is_ascii_digit() {
                p.pos += 1;
            }
            p.pos - s
        };
        let mut mantissa = digits(self);
        if self.src.get(self.pos) == Some(&b'.') {
            self.pos += 1;
            mantissa += digits(self);
        }
        if mantissa == 0 {
            return Err(ExprError::Syntax {
                offset: start,
                message: "malformed number".into(),
            });
        }
        if matches!(self.src.get(self.pos), Some(b'e' | b'E')) {
            let save = self.pos;
            self.pos += 1;
            if matches!(self.src.get(self.pos), Some(b'+' | b'-')) {
                self.pos += 1;
            }
            if digits(self) == 0 {
                self.pos = save;
                return Err(self.error("malformed exponent"));
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii number");
        text.parse::<f64>()
            .map(TimeExpr::constant)
            .map_err(|_| ExprError::Syntax {
                offset: start,
                message: format!("malformed number `{text}`"),
            })
    }

    fn identifier(&mut self) -> Result<TimeExpr, ExprError> {
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
        {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii identifier");
        if name == "t" {
            return Ok(TimeExpr::time());
        }
        let Some(func) = Func::from_name(name) else {
            return Err(ExprError::UnknownIdentifier {
                name: name.to_string(),
                offset: start,
            });
        };
        if !self.eat(b'(') {
            return Err(self.error(format!("expected `(` after `{name}`")));
        }
        let arg = self.expr()?;
        if !self.eat(b')') {
            return Err(self.error("expected `)`"));
        }
        Ok(TimeExpr::call(func, &arg))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn incomplete_expression_reports_offset() {
        assert_eq!(
            parse("t +"),
            Err(ExprError::Syntax {
                offset: 3,
                message: "unexpected end of input".into()
            })
        );
    }

    #[test]
    fn unknown_identifier() {
        let err = parse("2*x").unwrap_err();
        assert_eq!(
            err,
            ExprError::UnknownIdentifier {
                name: "x".into(),
                offset: 2
            }
        );
        assert!(matches!(parse("tan(t)"), Err(ExprError::UnknownIdentifier { .. })));
    }

    #[test]
    fn precedence_and_associativity() {
        let e = parse("2 - 3 - 4").unwrap();
        assert_eq!(e.eval(0.0).unwrap(), -5.0);
        let e = parse("8 / 2 / 2").unwrap();
        assert_eq!(e.eval(0.0).unwrap(), 2.0);
        let e = parse("2 * t ^ 2 + 1").unwrap();
        assert_eq!(e.eval(3.0).unwrap(), 19.0);
        let e = parse("(t+1)^-1").unwrap();
        assert_eq!(e.eval(1.0).unwrap(), 0.5);
    }

    #[test]
    fn numbers_with_exponents() {
        assert_eq!(parse("1.5e2").unwrap().as_constant(), Some(150.0));
        assert_eq!(parse(".25").unwrap().as_constant(), Some(0.25));
        assert_eq!(parse("2E-1").unwrap().as_constant(), Some(0.2));
        assert!(parse("1e").is_err());
    }

    #[test]
    fn rejects_malformed_input() {
        for bad in ["", "()", "t^", "t^1.5", "sin t", "sin(t", "t t", "--t", "3 $ t"] {
            assert!(parse(bad).is_err(), "{bad:?} should not parse");
        }
    }
}
