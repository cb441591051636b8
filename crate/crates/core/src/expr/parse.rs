use super::{Env, Expr, Func, Var};

/// Parse failure with the byte offset where it was detected.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{kind} at byte {offset}")]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ParseErrorKind {
    #[error("unexpected character {0:?}")]
    UnexpectedChar(char),
    #[error("unexpected {0}")]
    UnexpectedToken(String),
    #[error("unexpected end of input")]
    UnexpectedEnd,
    #[error("unknown function `{0}`")]
    UnknownFunction(String),
    #[error("malformed index")]
    MalformedIndex,
    #[error("function `{name}` expects {expected} argument(s), got {got}")]
    WrongArity { name: String, expected: usize, got: usize },
    #[error("exponent must be a constant")]
    NonConstantExponent,
    #[error("invalid number literal")]
    InvalidNumber,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(v) => format!("number {v}"),
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Plus => "`+`".into(),
            Tok::Minus => "`-`".into(),
            Tok::Star => "`*`".into(),
            Tok::Slash => "`/`".into(),
            Tok::Caret => "`^`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::LBracket => "`[`".into(),
            Tok::RBracket => "`]`".into(),
            Tok::Comma => "`,`".into(),
        }
    }
}

fn tokenize(text: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        let tok = match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'+' => Tok::Plus,
            b'-' => Tok::Minus,
            b'*' => Tok::Star,
            b'/' => Tok::Slash,
            b'^' => Tok::Caret,
            b'(' => Tok::LParen,
            b')' => Tok::RParen,
            b'[' => Tok::LBracket,
            b']' => Tok::RBracket,
            b',' => Tok::Comma,
            b'0'..=b'9' | b'.' => {
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        while j < bytes.len() && bytes[j].is_ascii_digit() {
                            j += 1;
                        }
                        i = j;
                    }
                }
                let value: f64 = text[start..i].parse().map_err(|_| ParseError {
                    kind: ParseErrorKind::InvalidNumber,
                    offset: start,
                })?;
                out.push((Tok::Num(value), start));
                continue;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push((Tok::Ident(text[start..i].to_string()), start));
                continue;
            }
            _ => {
                let ch = text[i..].chars().next().unwrap_or('?');
                return Err(ParseError { kind: ParseErrorKind::UnexpectedChar(ch), offset: i });
            }
        };
        out.push((tok, start));
        i += 1;
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn peek_at(&self, k: usize) -> Option<&Tok> {
        self.toks.get(self.pos + k).map(|(t, _)| t)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |(_, o)| *o)
    }

    fn err(&self, kind: ParseErrorKind) -> ParseError {
        ParseError { kind, offset: self.offset() }
    }

    fn unexpected(&self) -> ParseError {
        match self.peek() {
            Some(t) => self.err(ParseErrorKind::UnexpectedToken(t.describe())),
            None => self.err(ParseErrorKind::UnexpectedEnd),
        }
    }

    fn expect(&mut self, tok: Tok) -> Result<(), ParseError> {
        if self.peek() == Some(&tok) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.unexpected())
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(Tok::Plus) => {
                    self.pos += 1;
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Some(Tok::Minus) => {
                    self.pos += 1;
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Some(Tok::Star) => {
                    self.pos += 1;
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                Some(Tok::Slash) => {
                    self.pos += 1;
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.peek() == Some(&Tok::Minus) {
            self.pos += 1;
            // A bare literal after `-` is read as a negative literal.
            if let Some(Tok::Num(v)) = self.peek() {
                if self.peek_at(1) != Some(&Tok::Caret) {
                    let v = -*v;
                    self.pos += 1;
                    return Ok(Expr::Num(v));
                }
            }
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.base()?;
        if self.peek() != Some(&Tok::Caret) {
            return Ok(base);
        }
        self.pos += 1;
        let at = self.offset();
        let exponent = self.unary()?;
        if !exponent.variables().is_empty() {
            return Err(ParseError { kind: ParseErrorKind::NonConstantExponent, offset: at });
        }
        let value = exponent
            .eval(&Env::default())
            .map_err(|_| ParseError { kind: ParseErrorKind::NonConstantExponent, offset: at })?;
        Ok(Expr::Pow(Box::new(base), value))
    }

    fn base(&mut self) -> Result<Expr, ParseError> {
        let offset = self.offset();
        match self.peek().cloned() {
            Some(Tok::Num(v)) => {
                self.pos += 1;
                Ok(Expr::Num(v))
            }
            Some(Tok::LParen) => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                match self.peek() {
                    Some(Tok::LParen) => {
                        let func = Func::from_name(&name).ok_or(ParseError {
                            kind: ParseErrorKind::UnknownFunction(name.clone()),
                            offset,
                        })?;
                        self.pos += 1;
                        let mut args = vec![self.expr()?];
                        while self.peek() == Some(&Tok::Comma) {
                            self.pos += 1;
                            args.push(self.expr()?);
                        }
                        self.expect(Tok::RParen)?;
                        if args.len() != func.arity() {
                            return Err(ParseError {
                                kind: ParseErrorKind::WrongArity {
                                    name,
                                    expected: func.arity(),
                                    got: args.len(),
                                },
                                offset,
                            });
                        }
                        Ok(Expr::Call(func, args))
                    }
                    Some(Tok::LBracket) => {
                        self.pos += 1;
                        let idx = match self.peek() {
                            Some(Tok::Num(v)) if v.fract() == 0.0 && *v >= 1.0 && *v < 1e9 => {
                                *v as usize
                            }
                            _ => return Err(self.err(ParseErrorKind::MalformedIndex)),
                        };
                        self.pos += 1;
                        if self.peek() != Some(&Tok::RBracket) {
                            return Err(self.err(ParseErrorKind::MalformedIndex));
                        }
                        self.pos += 1;
                        Ok(Expr::Var(Var::new(name, Some(idx))))
                    }
                    _ => Ok(Expr::Var(Var::new(name, None))),
                }
            }
            _ => Err(self.unexpected()),
        }
    }
}

pub(super) fn parse(text: &str) -> Result<Expr, ParseError> {
    let toks = tokenize(text)?;
    let mut p = Parser { toks, pos: 0, end: text.len() };
    let e = p.expr()?;
    if p.pos != p.toks.len() {
        return Err(p.unexpected());
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> Expr {
        parse(s).unwrap()
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(p("1 - 2 - 3"), p("(1 - 2) - 3"));
        assert_eq!(p("8 / 4 / 2"), p("(8 / 4) / 2"));
        assert_eq!(p("1 + 2 * 3"), p("1 + (2 * 3)"));
        // power binds tighter than unary minus
        assert_eq!(p("-x[1]^2"), Expr::Neg(Box::new(p("x[1]^2"))));
        // right associative constant exponents
        assert_eq!(p("x[1]^3^2"), Expr::Pow(Box::new(p("x[1]")), 9.0));
        assert_eq!(p("x[1]^-1"), Expr::Pow(Box::new(p("x[1]")), -1.0));
        assert_eq!(p("x[1]^(1/2)"), Expr::Pow(Box::new(p("x[1]")), 0.5));
    }

    #[test]
    fn whitespace_is_insignificant() {
        assert_eq!(p("  x [ 1 ]*2-  d[1]"), p("x[1]*2-d[1]"));
    }

    #[test]
    fn literal_zero() {
        assert_eq!(p("0"), Expr::Num(0.0));
        assert_eq!(p("1.5e-3"), Expr::Num(1.5e-3));
    }

    #[test]
    fn planar_vector_field_component() {
        let e = p("-2*x[1] - d[1]*x[1]^3 + x[2]");
        let expected = Expr::Add(
            Box::new(Expr::Sub(
                Box::new(Expr::Mul(Box::new(Expr::Num(-2.0)), Box::new(Expr::var("x", 1)))),
                Box::new(Expr::Mul(
                    Box::new(Expr::var("d", 1)),
                    Box::new(Expr::Pow(Box::new(Expr::var("x", 1)), 3.0)),
                )),
            )),
            Box::new(Expr::var("x", 2)),
        );
        assert_eq!(e, expected);
    }

    #[test]
    fn error_offsets() {
        let e = parse("x[1] + foo(2)").unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::UnknownFunction("foo".into()));
        assert_eq!(e.offset, 7);
        let e = parse("x[1.5]").unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::MalformedIndex);
        assert_eq!(e.offset, 2);
        let e = parse("x[0]").unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::MalformedIndex);
        let e = parse("2 * (x[1]").unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::UnexpectedEnd);
        assert_eq!(e.offset, 9);
        let e = parse("x[1] $ 2").unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::UnexpectedChar('$'));
        assert_eq!(e.offset, 5);
        let e = parse("x[1]^x[2]").unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::NonConstantExponent);
        let e = parse("min(x[1])").unwrap_err();
        assert!(matches!(e.kind, ParseErrorKind::WrongArity { expected: 2, got: 1, .. }));
        assert!(parse("").is_err());
        assert!(parse("1 2").is_err());
    }
}
