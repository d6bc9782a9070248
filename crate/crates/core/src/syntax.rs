//! Term syntax: variables, abstractions, applications and explicit
//! substitutions, together with parsing, printing, capture-avoiding
//! substitution, the two size measures and the grammar classifiers.

use std::collections::BTreeSet;
use std::fmt;

/// A term of the calculus. `Es(body, x, arg)` is the explicit substitution
/// `body[x <- arg]`; it binds `x` in `body` only.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Term {
    Var(String),
    Abs(String, Box<Term>),
    App(Box<Term>, Box<Term>),
    Es(Box<Term>, String, Box<Term>),
}

impl Term {
    pub fn var(name: impl Into<String>) -> Term {
        Term::Var(name.into())
    }

    pub fn abs(binder: impl Into<String>, body: Term) -> Term {
        Term::Abs(binder.into(), Box::new(body))
    }

    pub fn app(left: Term, right: Term) -> Term {
        Term::App(Box::new(left), Box::new(right))
    }

    pub fn es(body: Term, binder: impl Into<String>, arg: Term) -> Term {
        Term::Es(Box::new(body), binder.into(), Box::new(arg))
    }

    pub fn is_es_free(&self) -> bool {
        match self {
            Term::Var(_) => true,
            Term::Abs(_, b) => b.is_es_free(),
            Term::App(l, r) => l.is_es_free() && r.is_es_free(),
            Term::Es(..) => false,
        }
    }

    /// Free variables, with `Es(body, x, arg)` binding `x` in `body` only.
    pub fn free_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_free(&mut Vec::new(), &mut out);
        out
    }

    fn collect_free(&self, bound: &mut Vec<String>, out: &mut BTreeSet<String>) {
        match self {
            Term::Var(x) => {
                if !bound.iter().any(|b| b == x) {
                    out.insert(x.clone());
                }
            }
            Term::Abs(x, b) => {
                bound.push(x.clone());
                b.collect_free(bound, out);
                bound.pop();
            }
            Term::App(l, r) => {
                l.collect_free(bound, out);
                r.collect_free(bound, out);
            }
            Term::Es(b, x, a) => {
                a.collect_free(bound, out);
                bound.push(x.clone());
                b.collect_free(bound, out);
                bound.pop();
            }
        }
    }

    /// Alpha equivalence, decided by comparing binder-index skeletons.
    pub fn alpha_eq(&self, other: &Term) -> bool {
        fn go(a: &Term, b: &Term, ea: &mut Vec<String>, eb: &mut Vec<String>) -> bool {
            match (a, b) {
                (Term::Var(x), Term::Var(y)) => {
                    let ia = ea.iter().rev().position(|v| v == x);
                    let ib = eb.iter().rev().position(|v| v == y);
                    match (ia, ib) {
                        (Some(i), Some(j)) => i == j,
                        (None, None) => x == y,
                        _ => false,
                    }
                }
                (Term::Abs(x, ba), Term::Abs(y, bb)) => {
                    ea.push(x.clone());
                    eb.push(y.clone());
                    let r = go(ba, bb, ea, eb);
                    ea.pop();
                    eb.pop();
                    r
                }
                (Term::App(la, ra), Term::App(lb, rb)) => {
                    go(la, lb, ea, eb) && go(ra, rb, ea, eb)
                }
                (Term::Es(ba, x, aa), Term::Es(bb, y, ab)) => {
                    if !go(aa, ab, ea, eb) {
                        return false;
                    }
                    ea.push(x.clone());
                    eb.push(y.clone());
                    let r = go(ba, bb, ea, eb);
                    ea.pop();
                    eb.pop();
                    r
                }
                _ => false,
            }
        }
        go(self, other, &mut Vec::new(), &mut Vec::new())
    }

    /// A string keying the alpha class of this term: bound variables are
    /// rendered as de Bruijn indices, free ones by name.
    pub fn alpha_key(&self) -> String {
        fn go(t: &Term, env: &mut Vec<String>, out: &mut String) {
            match t {
                Term::Var(x) => match env.iter().rev().position(|v| v == x) {
                    Some(i) => {
                        out.push('#');
                        out.push_str(&i.to_string());
                    }
                    None => {
                        out.push('\'');
                        out.push_str(x);
                    }
                },
                Term::Abs(x, b) => {
                    out.push('\\');
                    env.push(x.clone());
                    go(b, env, out);
                    env.pop();
                }
                Term::App(l, r) => {
                    out.push('(');
                    go(l, env, out);
                    out.push(' ');
                    go(r, env, out);
                    out.push(')');
                }
                Term::Es(b, x, a) => {
                    out.push('[');
                    env.push(x.clone());
                    go(b, env, out);
                    env.pop();
                    out.push('|');
                    go(a, env, out);
                    out.push(']');
                }
            }
        }
        let mut s = String::new();
        go(self, &mut Vec::new(), &mut s);
        s
    }

    /// The open or strong size. Open size counts applications outside
    /// abstractions; strong size counts applications and abstractions
    /// everywhere. Explicit substitutions contribute nothing to either.
    pub fn size(&self, kind: SizeKind) -> usize {
        match (self, kind) {
            (Term::Var(_), _) => 0,
            (Term::Abs(_, _), SizeKind::Open) => 0,
            (Term::Abs(_, b), SizeKind::Strong) => b.size(kind) + 1,
            (Term::App(l, r), _) => l.size(kind) + r.size(kind) + 1,
            (Term::Es(b, _, a), _) => b.size(kind) + a.size(kind),
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum SizeKind {
    Open,
    Strong,
}

/// Grammar membership flags for a term, all computed in one bottom-up pass.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Default)]
pub struct TermClass {
    pub is_value: bool,
    pub is_answer: bool,
    pub is_inert: bool,
    pub is_fireball: bool,
    pub is_strong_inert: bool,
    pub is_strong_value: bool,
    pub is_strong_fireball: bool,
    pub is_rigid: bool,
}

pub fn classify(t: &Term) -> TermClass {
    match t {
        Term::Var(_) => TermClass {
            is_value: false,
            is_answer: false,
            is_inert: true,
            is_fireball: true,
            is_strong_inert: true,
            is_strong_value: false,
            is_strong_fireball: true,
            is_rigid: true,
        },
        Term::Abs(_, b) => {
            let bc = classify(b);
            TermClass {
                is_value: true,
                is_answer: true,
                is_inert: false,
                is_fireball: true,
                is_strong_inert: false,
                is_strong_value: bc.is_strong_fireball,
                is_strong_fireball: bc.is_strong_fireball,
                is_rigid: false,
            }
        }
        Term::App(l, r) => {
            let lc = classify(l);
            let rc = classify(r);
            let inert = lc.is_inert && rc.is_fireball;
            let strong_inert = lc.is_strong_inert && rc.is_strong_fireball;
            TermClass {
                is_value: false,
                is_answer: false,
                is_inert: inert,
                is_fireball: inert,
                is_strong_inert: strong_inert,
                is_strong_value: false,
                is_strong_fireball: strong_inert,
                is_rigid: lc.is_rigid,
            }
        }
        Term::Es(b, _, a) => {
            let bc = classify(b);
            let ac = classify(a);
            TermClass {
                is_value: false,
                is_answer: bc.is_answer,
                is_inert: bc.is_inert && ac.is_inert,
                is_fireball: bc.is_fireball && ac.is_inert,
                is_strong_inert: bc.is_strong_inert && ac.is_strong_inert,
                is_strong_value: false,
                is_strong_fireball: bc.is_strong_fireball && ac.is_strong_inert,
                is_rigid: bc.is_rigid && ac.is_rigid,
            }
        }
    }
}

/// Picks a name based on `base` that does not occur in `avoid`: `base` itself
/// if possible, otherwise `base1`, `base2`, ...
pub fn fresh_name(base: &str, avoid: &BTreeSet<String>) -> String {
    if !avoid.contains(base) {
        return base.to_string();
    }
    let mut k = 1usize;
    loop {
        let cand = format!("{base}{k}");
        if !avoid.contains(&cand) {
            return cand;
        }
        k += 1;
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct SubstError {
    pub offending: Term,
}

impl fmt::Display for SubstError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "substitution requires a theoretical value (variable or abstraction), got: {}",
            self.offending
        )
    }
}

impl std::error::Error for SubstError {}

/// Capture-avoiding meta-substitution `t{x <- v}`. Only theoretical values
/// (abstractions, or variables for the evar extension) may be substituted.
pub fn substitute(t: &Term, x: &str, v: &Term) -> Result<Term, SubstError> {
    match v {
        Term::Abs(..) | Term::Var(_) => Ok(subst_raw(t, x, v)),
        _ => Err(SubstError {
            offending: v.clone(),
        }),
    }
}

pub(crate) fn subst_raw(t: &Term, x: &str, v: &Term) -> Term {
    match t {
        Term::Var(y) => {
            if y == x {
                v.clone()
            } else {
                t.clone()
            }
        }
        Term::App(l, r) => Term::app(subst_raw(l, x, v), subst_raw(r, x, v)),
        Term::Abs(y, b) => {
            if y == x || !b.free_vars().contains(x) {
                t.clone()
            } else if v.free_vars().contains(y) {
                let mut avoid = b.free_vars();
                avoid.extend(v.free_vars());
                avoid.insert(x.to_string());
                avoid.insert(y.clone());
                let y2 = fresh_name(y, &avoid);
                let b2 = subst_raw(b, y, &Term::var(y2.clone()));
                Term::abs(y2, subst_raw(&b2, x, v))
            } else {
                Term::abs(y.clone(), subst_raw(b, x, v))
            }
        }
        Term::Es(b, y, a) => {
            let a2 = subst_raw(a, x, v);
            if y == x || !b.free_vars().contains(x) {
                Term::es((**b).clone(), y.clone(), a2)
            } else if v.free_vars().contains(y) {
                let mut avoid = b.free_vars();
                avoid.extend(v.free_vars());
                avoid.insert(x.to_string());
                avoid.insert(y.clone());
                let y2 = fresh_name(y, &avoid);
                let b2 = subst_raw(b, y, &Term::var(y2.clone()));
                Term::es(subst_raw(&b2, x, v), y2, a2)
            } else {
                Term::es(subst_raw(b, x, v), y.clone(), a2)
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Printing
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, PartialEq, Eq)]
enum Pos {
    Top,
    AppLeft,
    Atom,
}

fn fmt_at(t: &Term, pos: Pos, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match t {
        Term::Var(x) => write!(f, "{x}"),
        Term::Abs(x, b) => {
            let parens = pos != Pos::Top;
            if parens {
                write!(f, "(")?;
            }
            write!(f, "\\{x}. ")?;
            fmt_at(b, Pos::Top, f)?;
            if parens {
                write!(f, ")")?;
            }
            Ok(())
        }
        Term::App(l, r) => {
            let parens = pos == Pos::Atom;
            if parens {
                write!(f, "(")?;
            }
            fmt_at(l, Pos::AppLeft, f)?;
            write!(f, " ")?;
            fmt_at(r, Pos::Atom, f)?;
            if parens {
                write!(f, ")")?;
            }
            Ok(())
        }
        Term::Es(b, x, a) => {
            fmt_at(b, Pos::Atom, f)?;
            write!(f, "[{x} <- ")?;
            fmt_at(a, Pos::Top, f)?;
            write!(f, "]")
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_at(self, Pos::Top, f)
    }
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ParseError {
    pub pos: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "syntax error at byte {}: {}", self.pos, self.message)
    }
}

impl std::error::Error for ParseError {}

#[derive(Clone, PartialEq, Eq, Debug)]
enum Tok {
    Lambda,
    Dot,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Assign,
    Ident(String),
}

fn lex(text: &str) -> Result<Vec<(usize, Tok)>, ParseError> {
    let bytes = text.as_bytes();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = text[i..].chars().next().unwrap();
        match c {
            ' ' | '\t' | '\r' | '\n' => i += c.len_utf8(),
            '-' if bytes.get(i + 1) == Some(&b'-') => {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
            }
            '\\' | 'λ' => {
                toks.push((i, Tok::Lambda));
                i += c.len_utf8();
            }
            '.' => {
                toks.push((i, Tok::Dot));
                i += 1;
            }
            '(' => {
                toks.push((i, Tok::LParen));
                i += 1;
            }
            ')' => {
                toks.push((i, Tok::RParen));
                i += 1;
            }
            '[' => {
                toks.push((i, Tok::LBracket));
                i += 1;
            }
            ']' => {
                toks.push((i, Tok::RBracket));
                i += 1;
            }
            '<' if bytes.get(i + 1) == Some(&b'-') => {
                toks.push((i, Tok::Assign));
                i += 2;
            }
            c if c.is_ascii_alphabetic() => {
                let start = i;
                while i < bytes.len()
                    && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_' || bytes[i] == b'\'')
                {
                    i += 1;
                }
                toks.push((start, Tok::Ident(text[start..i].to_string())));
            }
            _ => {
                return Err(ParseError {
                    pos: i,
                    message: format!("unexpected character '{c}'"),
                })
            }
        }
    }
    Ok(toks)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn here(&self) -> usize {
        self.toks.get(self.pos).map(|(p, _)| *p).unwrap_or(self.end)
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|(_, t)| t.clone());
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: &Tok, what: &str) -> Result<(), ParseError> {
        match self.peek() {
            Some(t) if t == want => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(self.err(format!("expected {what}"))),
        }
    }

    fn err(&self, message: String) -> ParseError {
        ParseError {
            pos: self.here(),
            message,
        }
    }

    fn ident(&mut self) -> Result<String, ParseError> {
        match self.bump() {
            Some(Tok::Ident(s)) => Ok(s),
            _ => {
                self.pos = self.pos.saturating_sub(1);
                Err(self.err("expected identifier".to_string()))
            }
        }
    }

    fn term(&mut self) -> Result<Term, ParseError> {
        if self.peek() == Some(&Tok::Lambda) {
            self.bump();
            let x = self.ident()?;
            self.expect(&Tok::Dot, "'.' after binder")?;
            let body = self.term()?;
            return Ok(Term::abs(x, body));
        }
        let mut acc = self.atom()?;
        loop {
            match self.peek() {
                Some(Tok::Ident(_)) | Some(Tok::LParen) | Some(Tok::Lambda) => {
                    if self.peek() == Some(&Tok::Lambda) {
                        // `t \x. u` would swallow the rest; abstraction
                        // arguments must be parenthesized.
                        return Err(self.err(
                            "abstraction in argument position must be parenthesized".to_string(),
                        ));
                    }
                    let next = self.atom()?;
                    acc = Term::app(acc, next);
                }
                _ => break,
            }
        }
        Ok(acc)
    }

    fn atom(&mut self) -> Result<Term, ParseError> {
        let mut base = match self.peek() {
            Some(Tok::Ident(_)) => Term::Var(self.ident()?),
            Some(Tok::LParen) => {
                self.bump();
                let t = self.term()?;
                self.expect(&Tok::RParen, "')'")?;
                t
            }
            Some(Tok::LBracket) => {
                return Err(self.err("explicit substitution bracket without a subject".to_string()))
            }
            _ => return Err(self.err("expected a term".to_string())),
        };
        while self.peek() == Some(&Tok::LBracket) {
            self.bump();
            let x = self.ident()?;
            self.expect(&Tok::Assign, "'<-'")?;
            let arg = self.term()?;
            self.expect(&Tok::RBracket, "']'")?;
            base = Term::es(base, x, arg);
        }
        Ok(base)
    }
}

/// Parses the textual term grammar. `--` starts a line comment; `λ` is an
/// alias for `\`.
pub fn parse_term(text: &str) -> Result<Term, ParseError> {
    let toks = lex(text)?;
    let mut p = Parser {
        toks,
        pos: 0,
        end: text.len(),
    };
    let t = p.term()?;
    if p.peek().is_some() {
        return Err(p.err("trailing input after term".to_string()));
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> Term {
        parse_term(s).unwrap()
    }

    #[test]
    fn parse_grammar_cases() {
        assert_eq!(
            p("\\x. x x"),
            Term::abs("x", Term::app(Term::var("x"), Term::var("x")))
        );
        assert_eq!(
            p("(x x)[x <- \\y.y]"),
            Term::es(
                Term::app(Term::var("x"), Term::var("x")),
                "x",
                Term::abs("y", Term::var("y"))
            )
        );
        // The postfix bracket binds tighter than application.
        assert_eq!(
            p("x y[z <- w]"),
            Term::app(
                Term::var("x"),
                Term::es(Term::var("y"), "z", Term::var("w"))
            )
        );
    }

    #[test]
    fn parse_lambda_alias_and_comments() {
        assert_eq!(p("λx. x -- identity"), p("\\x. x"));
    }

    #[test]
    fn parse_errors_carry_positions() {
        let e = parse_term("x )").unwrap_err();
        assert_eq!(e.pos, 2);
        let e = parse_term("[x <- y]").unwrap_err();
        assert!(e.message.contains("without a subject"));
        let e = parse_term("\\x x").unwrap_err();
        assert!(e.message.contains("'.'"));
    }

    #[test]
    fn print_cases() {
        assert_eq!(
            Term::abs("x", Term::app(Term::var("x"), Term::var("x"))).to_string(),
            "\\x. x x"
        );
        assert_eq!(
            Term::es(Term::var("y"), "z", Term::var("w")).to_string(),
            "y[z <- w]"
        );
        assert_eq!(
            Term::app(Term::app(Term::var("x"), Term::var("y")), Term::var("z")).to_string(),
            "x y z"
        );
    }

    #[test]
    fn print_parse_roundtrip_needs_parens() {
        let t = Term::es(
            Term::abs("x", Term::var("x")),
            "y",
            Term::abs("z", Term::var("z")),
        );
        assert_eq!(t.to_string(), "(\\x. x)[y <- \\z. z]");
        assert!(p(&t.to_string()).alpha_eq(&t));
        let u = Term::app(
            Term::es(Term::var("x"), "y", Term::var("z")),
            Term::var("w"),
        );
        assert_eq!(u.to_string(), "x[y <- z] w");
        assert!(p(&u.to_string()).alpha_eq(&u));
    }

    #[test]
    fn substitute_cases() {
        let id = p("\\y.y");
        let r = substitute(&p("x x"), "x", &id).unwrap();
        assert!(r.alpha_eq(&p("(\\y.y)(\\y.y)")));

        // Bound y is renamed to avoid capturing the free y of the substituted value.
        let r = substitute(&p("\\y.x"), "x", &p("\\z.y")).unwrap();
        assert!(r.alpha_eq(&p("\\w. \\z. y")));
        assert_eq!(r.free_vars(), ["y".to_string()].into_iter().collect());

        let r = substitute(&p("z"), "x", &id).unwrap();
        assert_eq!(r, p("z"));

        assert!(substitute(&p("x"), "x", &p("y z")).is_err());
    }

    #[test]
    fn sizes() {
        let delta = p("\\x. x x");
        assert_eq!(delta.size(SizeKind::Strong), 2);
        assert_eq!(delta.size(SizeKind::Open), 0);
        let dl = Term::app(delta, p("\\y.y"));
        assert_eq!(dl.size(SizeKind::Strong), 4);
        assert_eq!(dl.size(SizeKind::Open), 1);
        // Explicit substitutions contribute nothing.
        assert_eq!(p("x[y <- z]").size(SizeKind::Strong), 0);
    }

    #[test]
    fn classify_cases() {
        let c = classify(&p("\\y.y"));
        assert!(c.is_value && c.is_answer && c.is_fireball && c.is_strong_value);
        assert!(c.is_strong_fireball && !c.is_inert && !c.is_rigid);

        // Rigid but not strong inert: the argument is not a strong fireball.
        let c = classify(&p("y ((\\x. x x)(\\z. z))"));
        assert!(c.is_rigid && !c.is_strong_inert);

        // Inert and fireball, but not a strong fireball: a diverging body
        // hides under the abstraction.
        let c = classify(&p("x (\\y. (\\z. z z)(\\z. z z))"));
        assert!(c.is_inert && c.is_fireball && !c.is_strong_fireball);
    }

    #[test]
    fn free_vars_cases() {
        assert_eq!(p("x x").free_vars().len(), 1);
        assert_eq!(
            p("(x)[x <- y]").free_vars(),
            ["y".to_string()].into_iter().collect()
        );
        assert_eq!(
            p("\\x. x y").free_vars(),
            ["y".to_string()].into_iter().collect()
        );
    }

    #[test]
    fn alpha_eq_cases() {
        assert!(p("\\x. x").alpha_eq(&p("\\y. y")));
        assert!(!p("\\x. x").alpha_eq(&p("\\y. x")));
        assert!(p("(x)[x <- y]").alpha_eq(&p("(z)[z <- y]")));
        assert!(!p("(x)[x <- y]").alpha_eq(&p("(x)[z <- y]")));
    }
}
