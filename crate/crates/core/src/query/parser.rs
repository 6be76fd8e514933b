//! Recursive-descent parser for the textual query syntax.
//!
//! ```text
//! concept := or_c
//! or_c    := and_c ('|' and_c)*
//! and_c   := unary_c ('&' unary_c)*
//! unary_c := '{' IDENT '}' | 'not' unary_c | 'exists' role '.' unary_c | '(' concept ')'
//! role    := meet_r
//! meet_r  := comp_r ('&' comp_r)*
//! comp_r  := inv_r (';' inv_r)*
//! inv_r   := IDENT | 'inv' inv_r | '(' role ')'
//! IDENT   := [A-Za-z0-9_./:-]+
//! ```
//!
//! Identifiers may contain `.`, so a relation name directly followed by the
//! `.` of an existential (`exists r.{a}`) is split at its trailing dots.

use thiserror::Error;

use super::{Concept, Role};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("parse error at {position}: expected {expected}")]
pub struct ParseError {
    pub position: usize,
    pub expected: String,
}

pub fn parse_concept(text: &str) -> Result<Concept, ParseError> {
    let mut p = Parser::new(text);
    let c = p.concept()?;
    p.end()?;
    Ok(c)
}

pub fn parse_role(text: &str) -> Result<Role, ParseError> {
    let mut p = Parser::new(text);
    let r = p.role()?;
    p.end()?;
    Ok(r)
}

fn is_ident_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || matches!(b, b'_' | b'.' | b'/' | b':' | b'-')
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Self {
        Self { src, pos: 0 }
    }

    fn bytes(&self) -> &'a [u8] {
        self.src.as_bytes()
    }

    fn skip_ws(&mut self) {
        while self
            .bytes()
            .get(self.pos)
            .is_some_and(|b| b.is_ascii_whitespace())
        {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.bytes().get(self.pos).copied()
    }

    fn error<T>(&self, expected: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError {
            position: self.pos,
            expected: expected.into(),
        })
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
            self.error(format!("'{}'", c as char))
        }
    }

    fn end(&mut self) -> Result<(), ParseError> {
        if self.peek().is_some() {
            self.error("end of input")
        } else {
            Ok(())
        }
    }

    fn word_end(&self, from: usize) -> usize {
        let bytes = self.bytes();
        let mut end = from;
        while end < bytes.len() && is_ident_byte(bytes[end]) {
            end += 1;
        }
        end
    }

    /// Consumes `kw` if it is the next complete word.
    fn keyword(&mut self, kw: &str) -> bool {
        self.skip_ws();
        let end = self.word_end(self.pos);
        if &self.src[self.pos..end] == kw {
            self.pos = end;
            true
        } else {
            false
        }
    }

    fn ident(&mut self, what: &str, strip_trailing_dots: bool) -> Result<String, ParseError> {
        self.skip_ws();
        let mut end = self.word_end(self.pos);
        if strip_trailing_dots {
            while end > self.pos && self.bytes()[end - 1] == b'.' {
                end -= 1;
            }
        }
        if end == self.pos {
            return self.error(what);
        }
        let name = self.src[self.pos..end].to_owned();
        self.pos = end;
        Ok(name)
    }

    fn concept(&mut self) -> Result<Concept, ParseError> {
        let mut args = vec![self.and_c()?];
        while self.eat(b'|') {
            args.push(self.and_c()?);
        }
        Ok(if args.len() == 1 {
            args.pop().unwrap()
        } else {
            Concept::Or(args)
        })
    }

    fn and_c(&mut self) -> Result<Concept, ParseError> {
        let mut args = vec![self.unary_c()?];
        while self.eat(b'&') {
            args.push(self.unary_c()?);
        }
        Ok(if args.len() == 1 {
            args.pop().unwrap()
        } else {
            Concept::And(args)
        })
    }

    fn unary_c(&mut self) -> Result<Concept, ParseError> {
        match self.peek() {
            Some(b'{') => {
                self.pos += 1;
                let name = self.ident("entity name", false)?;
                self.expect(b'}')?;
                Ok(Concept::Nominal(name))
            }
            Some(b'(') => {
                self.pos += 1;
                let c = self.concept()?;
                self.expect(b')')?;
                Ok(c)
            }
            _ => {
                if self.keyword("not") {
                    Ok(Concept::not(self.unary_c()?))
                } else if self.keyword("exists") {
                    let role = self.role()?;
                    self.expect(b'.')?;
                    let arg = self.unary_c()?;
                    Ok(Concept::exists(role, arg))
                } else {
                    self.error("'{', '(', 'not' or 'exists'")
                }
            }
        }
    }

    fn role(&mut self) -> Result<Role, ParseError> {
        let mut members = vec![self.comp_r()?];
        while self.eat(b'&') {
            members.push(self.comp_r()?);
        }
        Ok(if members.len() == 1 {
            members.pop().unwrap()
        } else {
            Role::Meet(members)
        })
    }

    fn comp_r(&mut self) -> Result<Role, ParseError> {
        let mut r = self.inv_r()?;
        while self.eat(b';') {
            r = Role::compose(r, self.inv_r()?);
        }
        Ok(r)
    }

    fn inv_r(&mut self) -> Result<Role, ParseError> {
        if self.eat(b'(') {
            let r = self.role()?;
            self.expect(b')')?;
            return Ok(r);
        }
        if self.keyword("inv") {
            return Ok(self.inv_r()?.inv());
        }
        Ok(Role::Name(self.ident("relation name, 'inv' or '('", true)?))
    }
}
