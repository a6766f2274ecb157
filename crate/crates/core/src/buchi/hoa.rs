//! Reader for the HOA v1 subset produced by common LTL translators:
//! explicit edge labels, a single initial state and state-based `Inf(0)`
//! acceptance (or `t`, all runs accepting).

use std::collections::HashMap;

use super::{BuchiError, Guard, Nba};
use crate::label::Label;
use crate::ltl::Formula;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Header(String),
    Ident(String),
    Int(usize),
    Str(String),
    Alias(String),
    Sym(char),
    Body,
    End,
}

fn tokenize(text: &str) -> Result<Vec<(usize, Tok)>, BuchiError> {
    let mut out = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line_no = ln + 1;
        let b = line.as_bytes();
        let mut i = 0;
        while i < b.len() {
            let c = b[i];
            if c.is_ascii_whitespace() {
                i += 1;
            } else if line[i..].starts_with("/*") {
                let end = line[i..].find("*/").ok_or(BuchiError::HoaSyntax {
                    line: line_no,
                    msg: "unterminated comment".into(),
                })?;
                i += end + 2;
            } else if line[i..].starts_with("--BODY--") {
                out.push((line_no, Tok::Body));
                i += 8;
            } else if line[i..].starts_with("--END--") {
                out.push((line_no, Tok::End));
                i += 7;
            } else if c == b'"' {
                let mut j = i + 1;
                while j < b.len() && b[j] != b'"' {
                    j += if b[j] == b'\\' { 2 } else { 1 };
                }
                if j >= b.len() {
                    return Err(BuchiError::HoaSyntax { line: line_no, msg: "unterminated string".into() });
                }
                out.push((line_no, Tok::Str(line[i + 1..j].to_string())));
                i = j + 1;
            } else if c.is_ascii_digit() {
                let j = i + line[i..].bytes().take_while(u8::is_ascii_digit).count();
                let v = line[i..j].parse().map_err(|_| BuchiError::HoaSyntax {
                    line: line_no,
                    msg: "integer overflow".into(),
                })?;
                out.push((line_no, Tok::Int(v)));
                i = j;
            } else if c == b'@' || c.is_ascii_alphabetic() || c == b'_' {
                let start = if c == b'@' { i + 1 } else { i };
                let j = start
                    + line[start..]
                        .bytes()
                        .take_while(|x| x.is_ascii_alphanumeric() || *x == b'_' || *x == b'-' || *x == b'.')
                        .count();
                let word = line[start..j].to_string();
                if c == b'@' {
                    out.push((line_no, Tok::Alias(word)));
                    i = j;
                } else if j < b.len() && b[j] == b':' {
                    out.push((line_no, Tok::Header(word)));
                    i = j + 1;
                } else {
                    out.push((line_no, Tok::Ident(word)));
                    i = j;
                }
            } else if "!&|()[]{}".contains(c as char) {
                out.push((line_no, Tok::Sym(c as char)));
                i += 1;
            } else {
                return Err(BuchiError::HoaSyntax {
                    line: line_no,
                    msg: format!("unexpected character `{}`", c as char),
                });
            }
        }
    }
    Ok(out)
}

struct Cursor {
    toks: Vec<(usize, Tok)>,
    at: usize,
}

impl Cursor {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.at).map(|t| &t.1)
    }

    fn line(&self) -> usize {
        self.toks.get(self.at).or(self.toks.last()).map_or(1, |t| t.0)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.at).map(|t| t.1.clone());
        self.at += 1;
        t
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T, BuchiError> {
        Err(BuchiError::HoaSyntax { line: self.line(), msg: msg.into() })
    }

    fn int(&mut self) -> Result<usize, BuchiError> {
        match self.next() {
            Some(Tok::Int(v)) => Ok(v),
            _ => {
                self.at -= 1;
                self.err("expected integer")
            }
        }
    }

    fn sym(&mut self, c: char) -> Result<(), BuchiError> {
        if self.peek() == Some(&Tok::Sym(c)) {
            self.at += 1;
            Ok(())
        } else {
            self.err(format!("expected `{c}`"))
        }
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(&Tok::Sym(c)) {
            self.at += 1;
            true
        } else {
            false
        }
    }

    fn label_or(&mut self, aps: &[Label], aliases: &HashMap<String, Formula>) -> Result<Formula, BuchiError> {
        let mut f = self.label_and(aps, aliases)?;
        while self.eat('|') {
            f = f.or(self.label_and(aps, aliases)?);
        }
        Ok(f)
    }

    fn label_and(&mut self, aps: &[Label], aliases: &HashMap<String, Formula>) -> Result<Formula, BuchiError> {
        let mut f = self.label_not(aps, aliases)?;
        while self.eat('&') {
            f = f.and(self.label_not(aps, aliases)?);
        }
        Ok(f)
    }

    fn label_not(&mut self, aps: &[Label], aliases: &HashMap<String, Formula>) -> Result<Formula, BuchiError> {
        if self.eat('!') {
            return Ok(self.label_not(aps, aliases)?.not());
        }
        if self.eat('(') {
            let f = self.label_or(aps, aliases)?;
            self.sym(')')?;
            return Ok(f);
        }
        match self.next() {
            Some(Tok::Ident(w)) if w == "t" => Ok(Formula::True),
            Some(Tok::Ident(w)) if w == "f" => Ok(Formula::True.not()),
            Some(Tok::Int(i)) => match aps.get(i) {
                Some(l) => Ok(Formula::Atom(*l)),
                None => {
                    self.at -= 1;
                    self.err(format!("AP index {i} out of range"))
                }
            },
            Some(Tok::Alias(a)) => match aliases.get(&a) {
                Some(f) => Ok(f.clone()),
                None => {
                    self.at -= 1;
                    self.err(format!("undefined alias @{a}"))
                }
            },
            _ => {
                self.at = self.at.saturating_sub(1);
                self.err("expected label expression")
            }
        }
    }
}

fn ap_label(name: &str, index: usize) -> Label {
    let digits = name.strip_prefix("pi").or_else(|| name.strip_prefix('l'));
    match digits.and_then(|d| d.parse::<u16>().ok()) {
        Some(k) if k >= 1 => Label(k),
        _ => Label(index as u16 + 1),
    }
}

/// Parses an HOA v1 automaton into an [`Nba`]. Atomic propositions named
/// `l<k>`/`pi<k>` map to label `k`; others map to their 1-based position.
pub fn parse_hoa(text: &str) -> Result<Nba, BuchiError> {
    let mut c = Cursor { toks: tokenize(text)?, at: 0 };
    match (c.next(), c.next()) {
        (Some(Tok::Header(h)), Some(Tok::Ident(v))) if h == "HOA" && v == "v1" => {}
        _ => {
            c.at = 0;
            return c.err("expected `HOA: v1`");
        }
    }
    let mut states: Option<usize> = None;
    let mut start: Option<usize> = None;
    let mut aps: Vec<Label> = Vec::new();
    let mut aliases: HashMap<String, Formula> = HashMap::new();
    let mut all_accepting = false;
    let mut saw_acceptance = false;

    loop {
        match c.next() {
            Some(Tok::Body) => break,
            Some(Tok::Header(h)) => match h.as_str() {
                "States" => states = Some(c.int()?),
                "Start" => {
                    if start.is_some() {
                        return Err(BuchiError::UnsupportedFeature("multiple initial states".into()));
                    }
                    start = Some(c.int()?);
                    if c.peek() == Some(&Tok::Sym('&')) {
                        return Err(BuchiError::UnsupportedFeature("alternation (conjunctive start)".into()));
                    }
                }
                "AP" => {
                    let k = c.int()?;
                    for i in 0..k {
                        match c.next() {
                            Some(Tok::Str(name)) => aps.push(ap_label(&name, i)),
                            _ => return c.err("expected AP name"),
                        }
                    }
                }
                "Alias" => {
                    let name = match c.next() {
                        Some(Tok::Alias(a)) => a,
                        _ => return c.err("expected alias name"),
                    };
                    let f = c.label_or(&aps, &aliases)?;
                    aliases.insert(name, f);
                }
                "Acceptance" => {
                    saw_acceptance = true;
                    let sets = c.int()?;
                    let mut cond = Vec::new();
                    while let Some(t) = c.peek() {
                        if matches!(t, Tok::Header(_) | Tok::Body) {
                            break;
                        }
                        cond.push(c.next().expect("peeked"));
                    }
                    let is_inf0 = cond
                        == vec![Tok::Ident("Inf".into()), Tok::Sym('('), Tok::Int(0), Tok::Sym(')')];
                    let is_true = cond == vec![Tok::Ident("t".into())];
                    match (sets, is_inf0, is_true) {
                        (1, true, _) => {}
                        (_, _, true) => all_accepting = true,
                        _ => {
                            return Err(BuchiError::UnsupportedFeature(
                                "acceptance other than `1 Inf(0)` or `t`".into(),
                            ))
                        }
                    }
                }
                "Start-alternation" | "univ-branch" => {
                    return Err(BuchiError::UnsupportedFeature("alternation".into()));
                }
                _ => {
                    // name, tool, acc-name, properties, ...: skip the values
                    while let Some(t) = c.peek() {
                        if matches!(t, Tok::Header(_) | Tok::Body) {
                            break;
                        }
                        c.next();
                    }
                }
            },
            Some(_) => return c.err("expected header item"),
            None => return c.err("missing --BODY--"),
        }
    }
    if !saw_acceptance {
        return c.err("missing Acceptance header");
    }
    let start = start.unwrap_or(0);

    let mut accepting = Vec::new();
    let mut edges = Vec::new();
    let mut max_state = start;
    loop {
        match c.next() {
            Some(Tok::End) => break,
            Some(Tok::Header(h)) if h == "State" => {
                if c.peek() == Some(&Tok::Sym('[')) {
                    return Err(BuchiError::UnsupportedFeature("state labels".into()));
                }
                let q = c.int()?;
                max_state = max_state.max(q);
                if let Some(Tok::Str(_)) = c.peek() {
                    c.next();
                }
                if c.eat('{') {
                    while !c.eat('}') {
                        c.int()?;
                    }
                    accepting.push(q);
                }
                while c.peek() == Some(&Tok::Sym('[')) {
                    c.next();
                    let f = c.label_or(&aps, &aliases)?;
                    c.sym(']')?;
                    let dst = c.int()?;
                    if c.peek() == Some(&Tok::Sym('&')) {
                        return Err(BuchiError::UnsupportedFeature("alternation (universal edge)".into()));
                    }
                    if c.peek() == Some(&Tok::Sym('{')) {
                        return Err(BuchiError::UnsupportedFeature("transition-based acceptance".into()));
                    }
                    max_state = max_state.max(dst);
                    let guard = Guard::from_formula(&f).expect("label expressions are boolean");
                    edges.push((q, guard, dst));
                }
                if let Some(Tok::Int(_)) = c.peek() {
                    return Err(BuchiError::UnsupportedFeature("implicit edge labels".into()));
                }
            }
            Some(_) => return c.err("expected `State:` or `--END--`"),
            None => return c.err("missing --END--"),
        }
    }
    let n = states.unwrap_or(max_state + 1).max(max_state + 1);
    if all_accepting {
        accepting = (0..n).collect();
    }
    Nba::new(n, start, accepting, edges)
}

/// Guard in HOA label syntax with APs numbered `label - 1`.
pub(super) fn guard_to_hoa(g: &Guard) -> String {
    if g.is_false() {
        return "f".into();
    }
    g.disjuncts()
        .iter()
        .map(|c| {
            if c.is_empty() {
                "t".to_string()
            } else {
                c.iter()
                    .map(|l| format!("{}{}", if l.positive { "" } else { "!" }, l.label.0 - 1))
                    .collect::<Vec<_>>()
                    .join("&")
            }
        })
        .collect::<Vec<_>>()
        .join(" | ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::buchi::{case_study_nba, Lit};

    #[test]
    fn minimal_self_loop() {
        let b = parse_hoa("HOA: v1\nStates: 1\nStart: 0\nAP: 0\nAcceptance: 1 Inf(0)\n--BODY--\nState: 0 {0}\n[t] 0\n--END--\n")
            .unwrap();
        assert_eq!(b.state_count(), 1);
        assert!(b.is_accepting(0));
        assert!(b.edge(0, 0).unwrap().guard.is_true());
    }

    #[test]
    fn fin_acceptance_is_unsupported() {
        let err = parse_hoa("HOA: v1\nStates: 1\nStart: 0\nAP: 0\nAcceptance: 1 Fin(0)\n--BODY--\nState: 0\n[t] 0\n--END--\n")
            .unwrap_err();
        assert!(matches!(err, BuchiError::UnsupportedFeature(_)));
        let err = parse_hoa(
            "HOA: v1\nStates: 1\nStart: 0\nAP: 0\nAcceptance: 2 Inf(0)&Inf(1)\n--BODY--\nState: 0\n[t] 0\n--END--\n",
        )
        .unwrap_err();
        assert!(matches!(err, BuchiError::UnsupportedFeature(_)));
    }

    #[test]
    fn syntax_error_has_line() {
        let err = parse_hoa("HOA: v1\nStates: 1\nStart: 0\nAcceptance: 1 Inf(0)\n--BODY--\nState: 0\n[0 & ] 0\n--END--\n")
            .unwrap_err();
        match err {
            BuchiError::HoaSyntax { line, .. } => assert_eq!(line, 7),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn ap_names_and_aliases() {
        let text = r#"HOA: v1
name: "F l1"
States: 2
Start: 1
AP: 2 "l3" "foo"
Alias: @a 0 & !1
acc-name: Buchi
Acceptance: 1 Inf(0)
properties: trans-labels explicit-labels state-acc
--BODY--
State: 0 "done" {0}
[t] 0
State: 1
[@a] 0
[!0 | 1] 1
--END--
"#;
        let b = parse_hoa(text).unwrap();
        assert_eq!(b.init(), 1);
        assert_eq!(b.edge(1, 0).unwrap().guard, Guard::conj([Lit::pos(3), Lit::neg(2)]));
    }

    #[test]
    fn writer_round_trip() {
        let b = case_study_nba();
        assert_eq!(parse_hoa(&b.to_hoa()).unwrap(), b);
    }
}
