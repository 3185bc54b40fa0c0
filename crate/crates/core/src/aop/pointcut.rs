//! Pointcut expressions.
//!
//! ```text
//! expr   := term ("||" term)*
//! term   := factor ("&&" factor)*
//! factor := "!" factor | "(" expr ")" | "execution(" glob "." glob ")"
//! ```

use std::fmt;

use thiserror::Error;

use super::glob::{is_name_char, Glob};
use super::JoinPoint;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("pointcut syntax error at offset {position}: {message}")]
pub struct PointcutError {
    pub position: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum PointcutExpr {
    Execution { module: Glob, op: Glob },
    And(Box<PointcutExpr>, Box<PointcutExpr>),
    Or(Box<PointcutExpr>, Box<PointcutExpr>),
    Not(Box<PointcutExpr>),
}

impl PointcutExpr {
    pub fn execution(module: &str, op: &str) -> Option<Self> {
        Some(PointcutExpr::Execution {
            module: Glob::new(module)?,
            op: Glob::new(op)?,
        })
    }

    pub fn and(self, rhs: PointcutExpr) -> Self {
        PointcutExpr::And(Box::new(self), Box::new(rhs))
    }

    pub fn or(self, rhs: PointcutExpr) -> Self {
        PointcutExpr::Or(Box::new(self), Box::new(rhs))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(self) -> Self {
        PointcutExpr::Not(Box::new(self))
    }

    pub fn matches(&self, jp: &JoinPoint) -> bool {
        matches(self, jp)
    }

    fn precedence(&self) -> u8 {
        match self {
            PointcutExpr::Or(..) => 0,
            PointcutExpr::And(..) => 1,
            PointcutExpr::Not(_) | PointcutExpr::Execution { .. } => 2,
        }
    }
}

/// Evaluates a pointcut against a join point.
pub fn matches(p: &PointcutExpr, jp: &JoinPoint) -> bool {
    match p {
        PointcutExpr::Execution { module, op } => module.matches(jp.module()) && op.matches(jp.op()),
        PointcutExpr::And(a, b) => matches(a, jp) && matches(b, jp),
        PointcutExpr::Or(a, b) => matches(a, jp) || matches(b, jp),
        PointcutExpr::Not(a) => !matches(a, jp),
    }
}

impl fmt::Display for PointcutExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // Left operands need parens only when they bind looser; right
        // operands also when equal, to keep left-associativity on reparse.
        let child = |f: &mut fmt::Formatter<'_>, e: &PointcutExpr, min: u8| {
            if e.precedence() < min {
                write!(f, "({e})")
            } else {
                write!(f, "{e}")
            }
        };
        match self {
            PointcutExpr::Execution { module, op } => write!(f, "execution({module}.{op})"),
            PointcutExpr::Or(a, b) => {
                child(f, a, 0)?;
                f.write_str(" || ")?;
                child(f, b, 1)
            }
            PointcutExpr::And(a, b) => {
                child(f, a, 1)?;
                f.write_str(" && ")?;
                child(f, b, 2)
            }
            PointcutExpr::Not(a) => {
                f.write_str("!")?;
                child(f, a, 2)
            }
        }
    }
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn err<T>(&self, message: impl Into<String>) -> Result<T, PointcutError> {
        Err(PointcutError {
            position: self.pos,
            message: message.into(),
        })
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.src[self.pos..].chars().next() {
            if c.is_whitespace() {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
    }

    fn eat(&mut self, token: &str) -> bool {
        self.skip_ws();
        if self.src[self.pos..].starts_with(token) {
            self.pos += token.len();
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<PointcutExpr, PointcutError> {
        let mut lhs = self.term()?;
        while self.eat("||") {
            let rhs = self.term()?;
            lhs = lhs.or(rhs);
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<PointcutExpr, PointcutError> {
        let mut lhs = self.factor()?;
        while self.eat("&&") {
            let rhs = self.factor()?;
            lhs = lhs.and(rhs);
        }
        Ok(lhs)
    }

    fn factor(&mut self) -> Result<PointcutExpr, PointcutError> {
        if self.eat("!") {
            return Ok(self.factor()?.not());
        }
        if self.eat("(") {
            let inner = self.expr()?;
            if !self.eat(")") {
                return self.err("expected `)`");
            }
            return Ok(inner);
        }
        if self.eat("execution") {
            if !self.eat("(") {
                return self.err("expected `(` after `execution`");
            }
            let module = self.glob("module pattern")?;
            if !self.eat(".") {
                return self.err("expected `.` between module and operation patterns");
            }
            let op = self.glob("operation pattern")?;
            if !self.eat(")") {
                return self.err("expected `)`");
            }
            return Ok(PointcutExpr::Execution { module, op });
        }
        self.skip_ws();
        if self.pos >= self.src.len() {
            self.err("unexpected end of expression")
        } else {
            self.err("expected `!`, `(` or `execution(`")
        }
    }

    fn glob(&mut self, what: &str) -> Result<Glob, PointcutError> {
        self.skip_ws();
        let start = self.pos;
        while let Some(c) = self.src[self.pos..].chars().next() {
            if c == '*' || is_name_char(c) {
                self.pos += 1;
            } else {
                break;
            }
        }
        match Glob::new(&self.src[start..self.pos]) {
            Some(g) => Ok(g),
            None => self.err(format!("empty {what}")),
        }
    }
}

pub fn parse_pointcut(text: &str) -> Result<PointcutExpr, PointcutError> {
    let mut p = Parser { src: text, pos: 0 };
    let e = p.expr()?;
    p.skip_ws();
    if p.pos != text.len() {
        return p.err("trailing input");
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exec(m: &str, o: &str) -> PointcutExpr {
        PointcutExpr::execution(m, o).unwrap()
    }

    #[test]
    fn single_execution() {
        assert_eq!(
            parse_pointcut("execution(DataTransfer.read*)").unwrap(),
            exec("DataTransfer", "read*")
        );
    }

    #[test]
    fn precedence() {
        let e = parse_pointcut("!execution(A.x) && execution(*.y) || execution(B.*)").unwrap();
        assert_eq!(e, exec("A", "x").not().and(exec("*", "y")).or(exec("B", "*")));
        let e = parse_pointcut("execution(A.a) || execution(B.b) && execution(C.c)").unwrap();
        assert_eq!(e, exec("A", "a").or(exec("B", "b").and(exec("C", "c"))));
    }

    #[test]
    fn left_associative_and_parens() {
        let e = parse_pointcut("execution(A.a) || execution(B.b) || execution(C.c)").unwrap();
        assert_eq!(e, exec("A", "a").or(exec("B", "b")).or(exec("C", "c")));
        let e = parse_pointcut("execution(A.a) || (execution(B.b) || execution(C.c))").unwrap();
        assert_eq!(e, exec("A", "a").or(exec("B", "b").or(exec("C", "c"))));
        assert_eq!(
            e.to_string(),
            "execution(A.a) || (execution(B.b) || execution(C.c))"
        );
        let e = parse_pointcut("!(execution(A.a)&&execution(B.b))").unwrap();
        assert_eq!(e.to_string(), "!(execution(A.a) && execution(B.b))");
    }

    #[test]
    fn whitespace_between_tokens() {
        let e = parse_pointcut("  execution ( A . b* )  ").unwrap();
        assert_eq!(e, exec("A", "b*"));
    }

    #[test]
    fn errors() {
        let e = parse_pointcut("execution()").unwrap_err();
        assert_eq!(e.position, 10);
        assert!(parse_pointcut("execution(A.)").is_err());
        assert!(parse_pointcut("execution(A.b").is_err());
        assert!(parse_pointcut("execution(A.b) &&").is_err());
        assert!(parse_pointcut("execution(A.b) execution(C.d)").is_err());
        assert!(parse_pointcut("").is_err());
        assert!(parse_pointcut("call(A.b)").is_err());
    }

    #[test]
    fn matching() {
        let jp = JoinPoint::new("DataTransfer", "read_cached", "");
        assert!(exec("*", "*").matches(&jp));
        assert!(parse_pointcut("execution(DataTransfer.read*)").unwrap().matches(&jp));
        let jp2 = JoinPoint::new("DataTransfer", "send_frame", "");
        assert!(!parse_pointcut("execution(DataTransfer.read*)").unwrap().matches(&jp2));
        assert!(parse_pointcut("!execution(*.read*)").unwrap().matches(&jp2));
    }
}
