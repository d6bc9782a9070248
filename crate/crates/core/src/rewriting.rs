//! Root rules at a distance, redex enumeration per context class, and the
//! evaluation driver with exact multiplicative / exponential step accounting.

use std::collections::BTreeSet;
use std::fmt;

use crate::syntax::{classify, fresh_name, subst_raw, Term};

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum StepKind {
    Mult,
    Expo,
    EVar,
}

impl fmt::Display for StepKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StepKind::Mult => write!(f, "m"),
            StepKind::Expo => write!(f, "e"),
            StepKind::EVar => write!(f, "evar"),
        }
    }
}

/// Which evaluation contexts close the root rules: open (weak) contexts,
/// external contexts, or all (strong) contexts.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Strategy {
    Open,
    External,
    Full,
}

/// One child selector: `Left`/`Right` for applications, `Body` for abstraction
/// and substitution bodies, `Arg` for substitution arguments.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Dir {
    Left,
    Right,
    Body,
    Arg,
}

impl fmt::Display for Dir {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Dir::Left => write!(f, "left"),
            Dir::Right => write!(f, "right"),
            Dir::Body => write!(f, "body"),
            Dir::Arg => write!(f, "arg"),
        }
    }
}

/// A position in a term; the empty path is the root.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Default)]
pub struct Path(pub Vec<Dir>);

impl Path {
    pub fn root() -> Path {
        Path(Vec::new())
    }

    pub fn child(&self, d: Dir) -> Path {
        let mut v = self.0.clone();
        v.push(d);
        Path(v)
    }

    pub fn is_root(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for Path {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "root");
        }
        for (i, d) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ".")?;
            }
            write!(f, "{d}")?;
        }
        Ok(())
    }
}

/// Peels the substitution-context spine off a term: the list of
/// (binder, argument) pairs outermost first, and the core.
pub fn peel_spine(t: &Term) -> (Vec<(String, Term)>, Term) {
    let mut spine = Vec::new();
    let mut cur = t;
    while let Term::Es(b, x, a) = cur {
        spine.push((x.clone(), (**a).clone()));
        cur = b;
    }
    (spine, cur.clone())
}

/// Inverse of [`peel_spine`].
pub fn build_spine(core: Term, spine: &[(String, Term)]) -> Term {
    let mut t = core;
    for (x, a) in spine.iter().rev() {
        t = Term::es(t, x.clone(), a.clone());
    }
    t
}

/// Renames the spine binders of `t` so that none of them occurs in
/// `forbidden`; used before moving a term inside the spine.
fn freshen_spine(t: &Term, forbidden: &BTreeSet<String>) -> Term {
    match t {
        Term::Es(b, y, a) => {
            let b2 = freshen_spine(b, forbidden);
            if forbidden.contains(y) {
                let mut avoid = forbidden.clone();
                avoid.extend(b2.free_vars());
                avoid.insert(y.clone());
                let y2 = fresh_name(y, &avoid);
                Term::es(subst_raw(&b2, y, &Term::var(y2.clone())), y2, (**a).clone())
            } else {
                Term::es(b2, y.clone(), (**a).clone())
            }
        }
        _ => t.clone(),
    }
}

/// Fires the root rule of the given kind through any substitution-context
/// spine; `None` if `t` is not a root redex of that kind.
pub fn root_step(t: &Term, kind: StepKind) -> Option<Term> {
    match (kind, t) {
        (StepKind::Mult, Term::App(f, u)) => {
            let f2 = freshen_spine(f, &u.free_vars());
            let (spine, core) = peel_spine(&f2);
            match core {
                Term::Abs(x, b) => Some(build_spine(Term::es(*b, x, (**u).clone()), &spine)),
                _ => None,
            }
        }
        (StepKind::Expo | StepKind::EVar, Term::Es(b, x, r)) => {
            let mut forbidden = b.free_vars();
            forbidden.remove(x);
            let r2 = freshen_spine(r, &forbidden);
            let (spine, core) = peel_spine(&r2);
            let fires = match (&core, kind) {
                (Term::Abs(..), StepKind::Expo) => true,
                (Term::Var(_), StepKind::EVar) => true,
                _ => false,
            };
            if fires {
                Some(build_spine(subst_raw(b, x, &core), &spine))
            } else {
                None
            }
        }
        _ => None,
    }
}

fn is_root_redex(t: &Term, kind: StepKind) -> bool {
    match (kind, t) {
        (StepKind::Mult, Term::App(f, _)) => matches!(peel_spine(f).1, Term::Abs(..)),
        (StepKind::Expo, Term::Es(_, _, r)) => matches!(peel_spine(r).1, Term::Abs(..)),
        (StepKind::EVar, Term::Es(_, _, r)) => matches!(peel_spine(r).1, Term::Var(_)),
        _ => false,
    }
}

fn root_redexes(t: &Term, evar: bool, at: &Path, out: &mut BTreeSet<(Path, StepKind)>) {
    for kind in [StepKind::Mult, StepKind::Expo, StepKind::EVar] {
        if kind == StepKind::EVar && !evar {
            continue;
        }
        if is_root_redex(t, kind) {
            out.insert((at.clone(), kind));
        }
    }
}

fn collect_open(t: &Term, evar: bool, at: &Path, out: &mut BTreeSet<(Path, StepKind)>) {
    root_redexes(t, evar, at, out);
    match t {
        Term::App(l, r) => {
            collect_open(l, evar, &at.child(Dir::Left), out);
            collect_open(r, evar, &at.child(Dir::Right), out);
        }
        Term::Es(b, _, a) => {
            collect_open(b, evar, &at.child(Dir::Body), out);
            collect_open(a, evar, &at.child(Dir::Arg), out);
        }
        _ => {}
    }
}

fn collect_full(t: &Term, evar: bool, at: &Path, out: &mut BTreeSet<(Path, StepKind)>) {
    root_redexes(t, evar, at, out);
    match t {
        Term::App(l, r) => {
            collect_full(l, evar, &at.child(Dir::Left), out);
            collect_full(r, evar, &at.child(Dir::Right), out);
        }
        Term::Es(b, _, a) => {
            collect_full(b, evar, &at.child(Dir::Body), out);
            collect_full(a, evar, &at.child(Dir::Arg), out);
        }
        Term::Abs(_, b) => collect_full(b, evar, &at.child(Dir::Body), out),
        Term::Var(_) => {}
    }
}

// External contexts E and rigid contexts R are mutually recursive:
//   E ::= <.> | \x.E | t[x<-R] | E[x<-r] | R
//   R ::= rE | Rt | R[x<-r] | r[x<-R]
// with the base closed under open contexts.
fn collect_external(t: &Term, evar: bool, at: &Path, out: &mut BTreeSet<(Path, StepKind)>) {
    collect_open(t, evar, at, out);
    match t {
        Term::Abs(_, b) => collect_external(b, evar, &at.child(Dir::Body), out),
        Term::Es(b, _, a) => {
            if classify(a).is_rigid {
                collect_external(b, evar, &at.child(Dir::Body), out);
            }
            collect_rigid(a, evar, &at.child(Dir::Arg), out);
        }
        _ => {}
    }
    collect_rigid(t, evar, at, out);
}

fn collect_rigid(t: &Term, evar: bool, at: &Path, out: &mut BTreeSet<(Path, StepKind)>) {
    match t {
        Term::App(l, r) => {
            if classify(l).is_rigid {
                collect_external(r, evar, &at.child(Dir::Right), out);
            }
            collect_rigid(l, evar, &at.child(Dir::Left), out);
        }
        Term::Es(b, _, a) => {
            if classify(a).is_rigid {
                collect_rigid(b, evar, &at.child(Dir::Body), out);
            }
            if classify(b).is_rigid {
                collect_rigid(a, evar, &at.child(Dir::Arg), out);
            }
        }
        _ => {}
    }
}

/// All positions at which the strategy may fire a root rule, in a fixed
/// leftmost-outermost order.
pub fn redexes(t: &Term, strategy: Strategy, evar_enabled: bool) -> Vec<(Path, StepKind)> {
    let mut out = BTreeSet::new();
    let root = Path::root();
    match strategy {
        Strategy::Open => collect_open(t, evar_enabled, &root, &mut out),
        Strategy::External => collect_external(t, evar_enabled, &root, &mut out),
        Strategy::Full => collect_full(t, evar_enabled, &root, &mut out),
    }
    out.into_iter().collect()
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum StepError {
    InvalidPath { path: Path },
    NotARedex { path: Path, kind: StepKind },
}

impl fmt::Display for StepError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StepError::InvalidPath { path } => write!(f, "path {path} does not address a subterm"),
            StepError::NotARedex { path, kind } => {
                write!(f, "no {kind}-redex at {path}")
            }
        }
    }
}

impl std::error::Error for StepError {}

/// Fires the root rule of `kind` at position `p`.
pub fn step_at(t: &Term, p: &Path, kind: StepKind) -> Result<Term, StepError> {
    fn go(t: &Term, dirs: &[Dir], full: &Path, kind: StepKind) -> Result<Term, StepError> {
        match dirs.split_first() {
            None => root_step(t, kind).ok_or(StepError::NotARedex {
                path: full.clone(),
                kind,
            }),
            Some((d, rest)) => match (t, d) {
                (Term::App(l, r), Dir::Left) => {
                    Ok(Term::app(go(l, rest, full, kind)?, (**r).clone()))
                }
                (Term::App(l, r), Dir::Right) => {
                    Ok(Term::app((**l).clone(), go(r, rest, full, kind)?))
                }
                (Term::Abs(x, b), Dir::Body) => {
                    Ok(Term::abs(x.clone(), go(b, rest, full, kind)?))
                }
                (Term::Es(b, x, a), Dir::Body) => Ok(Term::es(
                    go(b, rest, full, kind)?,
                    x.clone(),
                    (**a).clone(),
                )),
                (Term::Es(b, x, a), Dir::Arg) => Ok(Term::es(
                    (**b).clone(),
                    x.clone(),
                    go(a, rest, full, kind)?,
                )),
                _ => Err(StepError::InvalidPath { path: full.clone() }),
            },
        }
    }
    go(t, &p.0, p, kind)
}

pub fn subterm_at<'a>(t: &'a Term, p: &Path) -> Option<&'a Term> {
    let mut cur = t;
    for d in &p.0 {
        cur = match (cur, d) {
            (Term::App(l, _), Dir::Left) => l,
            (Term::App(_, r), Dir::Right) => r,
            (Term::Abs(_, b), Dir::Body) => b,
            (Term::Es(b, _, _), Dir::Body) => b,
            (Term::Es(_, _, a), Dir::Arg) => a,
            _ => return None,
        };
    }
    Some(cur)
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct TraceStep {
    pub path: Path,
    pub kind: StepKind,
    pub result: Term,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum TraceStatus {
    Normal,
    FuelExhausted,
}

/// An evaluation record: the initial term and the ordered steps that were
/// fired, each with its position, kind and resulting term.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Trace {
    pub initial: Term,
    pub steps: Vec<TraceStep>,
    pub status: TraceStatus,
}

impl Trace {
    pub fn final_term(&self) -> &Term {
        self.steps.last().map(|s| &s.result).unwrap_or(&self.initial)
    }

    pub fn count(&self, kind: StepKind) -> usize {
        self.steps.iter().filter(|s| s.kind == kind).count()
    }

    pub fn m_steps(&self) -> usize {
        self.count(StepKind::Mult)
    }

    pub fn e_steps(&self) -> usize {
        self.count(StepKind::Expo)
    }

    pub fn evar_steps(&self) -> usize {
        self.count(StepKind::EVar)
    }

    /// Term before step `i`.
    pub fn term_before(&self, i: usize) -> &Term {
        if i == 0 {
            &self.initial
        } else {
            &self.steps[i - 1].result
        }
    }

    /// Text export: one line per step, then the counts line.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (i, s) in self.steps.iter().enumerate() {
            out.push_str(&format!(
                "step {}: {} at {} => {}\n",
                i + 1,
                s.kind,
                s.path,
                s.result
            ));
        }
        let status = match self.status {
            TraceStatus::Normal => "normal",
            TraceStatus::FuelExhausted => "fuel-exhausted",
        };
        out.push_str(&format!(
            "counts: m={} e={} evar={} status={}\n",
            self.m_steps(),
            self.e_steps(),
            self.evar_steps(),
            status
        ));
        out
    }
}

/// Repeatedly fires the first redex in the deterministic order until none
/// remain or `fuel` steps have been taken. For the diamond strategies the
/// resulting counts do not depend on the scheduling.
pub fn evaluate(t: &Term, strategy: Strategy, fuel: usize, evar_enabled: bool) -> Trace {
    let mut steps = Vec::new();
    let mut cur = t.clone();
    for _ in 0..fuel {
        let rs = redexes(&cur, strategy, evar_enabled);
        let Some((path, kind)) = rs.into_iter().next() else {
            return Trace {
                initial: t.clone(),
                steps,
                status: TraceStatus::Normal,
            };
        };
        cur = step_at(&cur, &path, kind).expect("enumerated redex must fire");
        steps.push(TraceStep {
            path,
            kind,
            result: cur.clone(),
        });
    }
    let status = if redexes(&cur, strategy, evar_enabled).is_empty() {
        TraceStatus::Normal
    } else {
        TraceStatus::FuelExhausted
    };
    Trace {
        initial: t.clone(),
        steps,
        status,
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct PlotkinInputError {
    pub term: Term,
}

impl fmt::Display for PlotkinInputError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "simulation input must not contain explicit substitutions: {}",
            self.term
        )
    }
}

impl std::error::Error for PlotkinInputError {}

fn beta_v_redexes(t: &Term, at: &Path, out: &mut Vec<Path>) {
    if let Term::App(l, r) = t {
        if matches!(**l, Term::Abs(..)) && matches!(**r, Term::Abs(..) | Term::Var(_)) {
            out.push(at.clone());
        }
    }
    match t {
        Term::App(l, r) => {
            beta_v_redexes(l, &at.child(Dir::Left), out);
            beta_v_redexes(r, &at.child(Dir::Right), out);
        }
        Term::Abs(_, b) => beta_v_redexes(b, &at.child(Dir::Body), out),
        _ => {}
    }
}

/// Simulates Plotkin-style call-by-value beta reduction: each beta step on an
/// ES-free term is realized as one multiplicative step followed by one
/// exponential (or evar, when the argument is a variable) step at the same
/// position.
pub fn simulate_plotkin(t: &Term, fuel: usize) -> Result<Trace, PlotkinInputError> {
    if !t.is_es_free() {
        return Err(PlotkinInputError { term: t.clone() });
    }
    let mut steps = Vec::new();
    let mut cur = t.clone();
    let mut budget = fuel;
    loop {
        let mut rs = Vec::new();
        beta_v_redexes(&cur, &Path::root(), &mut rs);
        rs.sort();
        let Some(path) = rs.into_iter().next() else {
            return Ok(Trace {
                initial: t.clone(),
                steps,
                status: TraceStatus::Normal,
            });
        };
        if budget < 2 {
            return Ok(Trace {
                initial: t.clone(),
                steps,
                status: TraceStatus::FuelExhausted,
            });
        }
        let arg_is_var = matches!(
            subterm_at(&cur, &path),
            Some(Term::App(_, r)) if matches!(**r, Term::Var(_))
        );
        cur = step_at(&cur, &path, StepKind::Mult).expect("beta redex fires multiplicatively");
        steps.push(TraceStep {
            path: path.clone(),
            kind: StepKind::Mult,
            result: cur.clone(),
        });
        let second = if arg_is_var {
            StepKind::EVar
        } else {
            StepKind::Expo
        };
        cur = step_at(&cur, &path, second).expect("created substitution fires");
        steps.push(TraceStep {
            path,
            kind: second,
            result: cur.clone(),
        });
        budget -= 2;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::parse_term;

    fn p(s: &str) -> Term {
        parse_term(s).unwrap()
    }

    #[test]
    fn root_steps() {
        let dl = p("(\\x. x x)(\\y. y)");
        let r = root_step(&dl, StepKind::Mult).unwrap();
        assert!(r.alpha_eq(&p("(x x)[x <- \\y. y]")));

        // The rule fires up to a substitution context.
        let t = p("(\\x. t)[z <- s] u");
        let r = root_step(&t, StepKind::Mult).unwrap();
        assert!(r.alpha_eq(&p("t[x <- u][z <- s]")));

        let t = p("(x x)[x <- \\y. y]");
        let r = root_step(&t, StepKind::Expo).unwrap();
        assert!(r.alpha_eq(&p("(\\y. y)(\\y. y)")));

        assert_eq!(root_step(&p("x"), StepKind::Mult), None);
        assert_eq!(root_step(&p("t[x <- y z]"), StepKind::Expo), None);
    }

    #[test]
    fn root_step_avoids_spine_capture() {
        // Moving `u` under the spine must not capture its free `z`.
        let t = p("(\\x. x z)[z <- w] z");
        let r = root_step(&t, StepKind::Mult).unwrap();
        assert!(r.alpha_eq(&p("(x z1)[x <- z][z1 <- w]")));
        let t = p("y[x <- (\\w. z)[z <- v]] ");
        let r = root_step(&t, StepKind::Expo).unwrap();
        assert!(r.alpha_eq(&p("y[z <- v]")));
        // Body free var clashing with a spine binder gets protected.
        let t = p("(x z)[x <- (\\w. w)[z <- v]]");
        let r = root_step(&t, StepKind::Expo).unwrap();
        assert!(r.alpha_eq(&p("((\\w. w) z)[z1 <- v]")));
    }

    #[test]
    fn evar_root_step() {
        let t = p("t[x <- (y)[y <- w]]");
        let r = root_step(&t, StepKind::EVar).unwrap();
        assert!(r.alpha_eq(&p("t[y <- w]")));
        assert_eq!(root_step(&t, StepKind::Expo), None);
    }

    #[test]
    fn redex_enumeration() {
        // Open contexts do not impose an order on applications.
        let t = p("((\\z. z)(\\z. z))((\\z. z)(\\z. z))");
        let rs = redexes(&t, Strategy::External, false);
        assert_eq!(rs.len(), 2);
        assert!(rs.iter().all(|(_, k)| *k == StepKind::Mult));

        // No evaluation under an applied abstraction.
        let t = p("(\\x. (\\z. z)(\\z. z)) (\\v. v)");
        let rs = redexes(&t, Strategy::External, false);
        assert_eq!(rs, vec![(Path::root(), StepKind::Mult)]);

        // Open reduction is weak; the external strategy enters non-applied
        // abstractions.
        let t = p("\\x. (\\z. z)(\\z. z)");
        assert!(redexes(&t, Strategy::Open, false).is_empty());
        let rs = redexes(&t, Strategy::External, false);
        assert_eq!(rs, vec![(Path(vec![Dir::Body]), StepKind::Mult)]);
    }

    #[test]
    fn external_enters_rigid_positions() {
        let t = p("(x (\\y. (\\z. z)(\\z. z)))[x <- x ((\\z. z)(\\z. z))]");
        let rs = redexes(&t, Strategy::External, false);
        let paths: Vec<String> = rs.iter().map(|(p, _)| p.to_string()).collect();
        assert_eq!(paths, vec!["body.right.body", "arg.right"]);
    }

    #[test]
    fn step_at_cases() {
        let dl = p("(\\x. x x)(\\y. y)");
        let r = step_at(&dl, &Path::root(), StepKind::Mult).unwrap();
        assert!(r.alpha_eq(&p("(x x)[x <- \\y. y]")));

        let t = p("y ((\\x. x x)(\\z. z))");
        let r = step_at(&t, &Path(vec![Dir::Right]), StepKind::Mult).unwrap();
        assert!(r.alpha_eq(&p("y ((x x)[x <- \\z. z])")));

        assert!(matches!(
            step_at(&p("x"), &Path::root(), StepKind::Mult),
            Err(StepError::NotARedex { .. })
        ));
        assert!(matches!(
            step_at(&p("x"), &Path(vec![Dir::Left]), StepKind::Mult),
            Err(StepError::InvalidPath { .. })
        ));
    }

    #[test]
    fn evaluate_counts() {
        let tr = evaluate(&p("(\\x. x x)(\\y. y)"), Strategy::External, 100, false);
        assert_eq!(tr.status, TraceStatus::Normal);
        assert!(tr.final_term().alpha_eq(&p("\\y. y")));
        assert_eq!((tr.m_steps(), tr.e_steps()), (2, 2));

        let tr = evaluate(&p("\\x. (\\z. z z)(\\z. z z)"), Strategy::External, 100, false);
        assert_eq!(tr.status, TraceStatus::FuelExhausted);

        let tr = evaluate(&p("(\\x. y)(\\z. (\\w. w w)(\\w. w w))"), Strategy::External, 100, false);
        assert_eq!(tr.status, TraceStatus::Normal);
        assert!(tr.final_term().alpha_eq(&p("y")));
        assert_eq!((tr.m_steps(), tr.e_steps()), (1, 1));
    }

    #[test]
    fn trace_render_format() {
        let tr = evaluate(&p("(\\x. x)(\\y. y)"), Strategy::External, 10, false);
        let text = tr.render();
        assert!(text.starts_with("step 1: m at root => "));
        assert!(text.ends_with("counts: m=1 e=1 evar=0 status=normal\n"));
    }

    #[test]
    fn plotkin_simulation() {
        let tr = simulate_plotkin(&p("(\\x. x)(\\y. y)"), 100).unwrap();
        assert!(tr.final_term().alpha_eq(&p("\\y. y")));
        assert_eq!(
            tr.steps.iter().map(|s| s.kind).collect::<Vec<_>>(),
            vec![StepKind::Mult, StepKind::Expo]
        );

        let tr = simulate_plotkin(&p("(\\x. x) y"), 100).unwrap();
        assert!(tr.final_term().alpha_eq(&p("y")));
        assert_eq!(
            tr.steps.iter().map(|s| s.kind).collect::<Vec<_>>(),
            vec![StepKind::Mult, StepKind::EVar]
        );

        let tr = simulate_plotkin(&p("(\\x. x x)(\\x. x x)"), 50).unwrap();
        assert_eq!(tr.status, TraceStatus::FuelExhausted);

        assert!(simulate_plotkin(&p("x[y <- z]"), 10).is_err());
    }
}
