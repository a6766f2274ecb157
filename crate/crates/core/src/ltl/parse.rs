//! Recursive-descent parser for the ASCII formula syntax.
//!
//! Precedence from tightest: `!`/`[]`/`G`/`<>`/`F`, then `U` (right
//! associative), then `&&`, then `||`. Propositions are `l<i>` or `pi<i>`.

use super::{Formula, LtlError};
use crate::label::Label;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Not,
    And,
    Or,
    Until,
    Eventually,
    Always,
    LParen,
    RParen,
    True,
    False,
    Atom(Label),
    Eof,
}

const UNARY_START: &[&str] = &["!", "[]", "<>", "G", "F", "(", "true", "false", "proposition"];

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn next_token(&mut self) -> Result<(usize, Tok), LtlError> {
        let bytes = self.src.as_bytes();
        while self.pos < bytes.len() && bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        let start = self.pos;
        if start >= bytes.len() {
            return Ok((start, Tok::Eof));
        }
        let rest = &self.src[start..];
        let two = |s: &str| rest.starts_with(s);
        let (tok, len) = if two("&&") {
            (Tok::And, 2)
        } else if two("||") {
            (Tok::Or, 2)
        } else if two("<>") {
            (Tok::Eventually, 2)
        } else if two("[]") {
            (Tok::Always, 2)
        } else {
            match bytes[start] {
                b'!' => (Tok::Not, 1),
                b'&' => (Tok::And, 1),
                b'|' => (Tok::Or, 1),
                b'(' => (Tok::LParen, 1),
                b')' => (Tok::RParen, 1),
                c if c.is_ascii_alphanumeric() || c == b'_' => {
                    let len = rest
                        .bytes()
                        .take_while(|b| b.is_ascii_alphanumeric() || *b == b'_')
                        .count();
                    let word = &rest[..len];
                    let tok = match word {
                        "U" => Tok::Until,
                        "F" => Tok::Eventually,
                        "G" => Tok::Always,
                        "true" | "1" => Tok::True,
                        "false" | "0" => Tok::False,
                        _ => Tok::Atom(parse_prop(word).ok_or_else(|| LtlError::UnknownProposition {
                            offset: start,
                            name: word.to_string(),
                        })?),
                    };
                    (tok, len)
                }
                _ => {
                    return Err(LtlError::Syntax {
                        offset: start,
                        expected: UNARY_START.to_vec(),
                    })
                }
            }
        };
        self.pos += len;
        Ok((start, tok))
    }
}

fn parse_prop(word: &str) -> Option<Label> {
    let digits = word.strip_prefix("pi").or_else(|| word.strip_prefix('l'))?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let i: u16 = digits.parse().ok()?;
    (i >= 1).then_some(Label(i))
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    at: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].1
    }

    fn offset(&self) -> usize {
        self.toks[self.at].0
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.at].1.clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn or(&mut self) -> Result<Formula, LtlError> {
        let mut lhs = self.and()?;
        while *self.peek() == Tok::Or {
            self.bump();
            lhs = lhs.or(self.and()?);
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Result<Formula, LtlError> {
        let mut lhs = self.until()?;
        while *self.peek() == Tok::And {
            self.bump();
            lhs = lhs.and(self.until()?);
        }
        Ok(lhs)
    }

    fn until(&mut self) -> Result<Formula, LtlError> {
        let lhs = self.unary()?;
        if *self.peek() == Tok::Until {
            self.bump();
            return Ok(lhs.until(self.until()?));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Formula, LtlError> {
        let offset = self.offset();
        match self.bump() {
            Tok::Not => Ok(self.unary()?.not()),
            Tok::Eventually => Ok(self.unary()?.eventually()),
            Tok::Always => Ok(self.unary()?.always()),
            Tok::True => Ok(Formula::True),
            Tok::False => Ok(Formula::True.not()),
            Tok::Atom(l) => Ok(Formula::Atom(l)),
            Tok::LParen => {
                let inner = self.or()?;
                if *self.peek() != Tok::RParen {
                    return Err(LtlError::Syntax {
                        offset: self.offset(),
                        expected: vec![")", "&&", "||", "U"],
                    });
                }
                self.bump();
                Ok(inner)
            }
            _ => Err(LtlError::Syntax {
                offset,
                expected: UNARY_START.to_vec(),
            }),
        }
    }
}

/// Parses the ASCII syntax into a surface AST (derived operators kept).
pub fn parse_ltl(text: &str) -> Result<Formula, LtlError> {
    let mut lexer = Lexer { src: text, pos: 0 };
    let mut toks = Vec::new();
    loop {
        let (off, t) = lexer.next_token()?;
        let eof = t == Tok::Eof;
        toks.push((off, t));
        if eof {
            break;
        }
    }
    let mut p = Parser { toks, at: 0 };
    let f = p.or()?;
    if *p.peek() != Tok::Eof {
        return Err(LtlError::Syntax {
            offset: p.offset(),
            expected: vec!["&&", "||", "U", "end of input"],
        });
    }
    Ok(f)
}

#[cfg(test)]
pub(crate) fn arb_formula(depth: u32, aps: u16) -> impl proptest::strategy::Strategy<Value = Formula> {
    use proptest::prelude::*;
    let leaf = prop_oneof![Just(Formula::True), (1..=aps).prop_map(Formula::atom)];
    leaf.prop_recursive(depth, 32, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(Formula::not),
            inner.clone().prop_map(Formula::eventually),
            inner.clone().prop_map(Formula::always),
            (inner.clone(), inner.clone()).prop_map(|(x, y)| x.and(y)),
            (inner.clone(), inner.clone()).prop_map(|(x, y)| x.or(y)),
            (inner.clone(), inner).prop_map(|(x, y)| x.until(y)),
        ]
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn a(i: u16) -> Formula {
        Formula::atom(i)
    }

    #[test]
    fn case_study_formula() {
        let f = parse_ltl("[]<> l1 && (!l1 U l2) && <> l3").unwrap();
        let expected = a(1)
            .eventually()
            .always()
            .and(a(1).not().until(a(2)))
            .and(a(3).eventually());
        assert_eq!(f, expected);
        // U binds tighter than &&, so the parentheses are optional
        assert_eq!(parse_ltl("[]<>l1 && !l1 U l2 && <>l3").unwrap(), expected);
        assert_eq!(parse_ltl("G F pi1 & (!pi1 U pi2) & F pi3").unwrap(), expected);
    }

    #[test]
    fn constants_and_precedence() {
        assert_eq!(parse_ltl("true").unwrap(), Formula::True);
        assert_eq!(parse_ltl("false").unwrap(), Formula::True.not());
        assert_eq!(parse_ltl("l1 U l2 U l3").unwrap(), a(1).until(a(2).until(a(3))));
        assert_eq!(parse_ltl("l1 || l2 && l3").unwrap(), a(1).or(a(2).and(a(3))));
        assert_eq!(parse_ltl("!l1 U l2").unwrap(), a(1).not().until(a(2)));
    }

    #[test]
    fn incomplete_until_reports_offset() {
        match parse_ltl("l1 U") {
            Err(LtlError::Syntax { offset, expected }) => {
                assert_eq!(offset, 4);
                assert!(expected.contains(&"proposition"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn other_errors() {
        assert!(matches!(parse_ltl("(l1 && l2"), Err(LtlError::Syntax { offset: 9, .. })));
        assert!(matches!(parse_ltl("l1 l2"), Err(LtlError::Syntax { offset: 3, .. })));
        assert!(matches!(parse_ltl("foo"), Err(LtlError::UnknownProposition { offset: 0, .. })));
        assert!(matches!(parse_ltl("l0"), Err(LtlError::UnknownProposition { .. })));
        assert!(matches!(parse_ltl("l1 $ l2"), Err(LtlError::Syntax { offset: 3, .. })));
    }

    proptest! {
        #[test]
        fn pretty_print_round_trips(f in arb_formula(4, 3)) {
            let back = parse_ltl(&f.to_string()).unwrap();
            prop_assert_eq!(back.normalize(), f.normalize());
            prop_assert_eq!(back, f);
        }
    }
}
