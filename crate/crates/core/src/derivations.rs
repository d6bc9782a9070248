//! Multi-type derivation trees: the five rules, validity checking, the two
//! derivation sizes, final-judgment classifiers, skeleton equivalence, and a
//! canonical textual serialization.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::multitypes::{
    classify_multi, context_is, GroundSubst, LinearType, MultiType, TypeContext, TypeFlags,
};
use crate::syntax::Term;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum RuleKind {
    Ax,
    App,
    Lam,
    Es,
    Many,
}

impl RuleKind {
    pub fn name(&self) -> &'static str {
        match self {
            RuleKind::Ax => "ax",
            RuleKind::App => "app",
            RuleKind::Lam => "lam",
            RuleKind::Es => "es",
            RuleKind::Many => "many",
        }
    }
}

/// The right-hand side of a judgment: axioms and lambda rules conclude with a
/// linear type, the other rules with a multi type.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum JType {
    Linear(LinearType),
    Multi(MultiType),
}

impl JType {
    pub fn as_multi(&self) -> Option<&MultiType> {
        match self {
            JType::Multi(m) => Some(m),
            JType::Linear(_) => None,
        }
    }

    pub fn as_linear(&self) -> Option<&LinearType> {
        match self {
            JType::Linear(a) => Some(a),
            JType::Multi(_) => None,
        }
    }

    /// The multi type view used by the final-judgment classifiers: a linear
    /// conclusion counts as its singleton.
    pub fn to_multi(&self) -> MultiType {
        match self {
            JType::Multi(m) => m.clone(),
            JType::Linear(a) => MultiType::singleton(a.clone()),
        }
    }

    pub fn size(&self) -> usize {
        match self {
            JType::Multi(m) => m.size(),
            JType::Linear(a) => a.size(),
        }
    }
}

impl fmt::Display for JType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            JType::Linear(a) => write!(f, "{a}"),
            JType::Multi(m) => write!(f, "{m}"),
        }
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Judgment {
    pub ctx: TypeContext,
    pub subject: Term,
    pub ty: JType,
}

impl fmt::Display for Judgment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} |- {} : {}", self.ctx, self.subject, self.ty)
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Derivation {
    pub rule: RuleKind,
    pub conclusion: Judgment,
    pub premises: Vec<Derivation>,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Default)]
pub struct Sizes {
    /// Rule occurrences except `many`.
    pub general: usize,
    /// Occurrences of the `lam` and `app` rules.
    pub mult: usize,
}

/// Classification of a derivation, read off its final judgment only.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Default)]
pub struct DerivationClass {
    pub inert: bool,
    pub tight: bool,
    pub shrinking: bool,
    pub unitary_shrinking: bool,
}

impl Derivation {
    pub fn subject(&self) -> &Term {
        &self.conclusion.subject
    }

    pub fn ctx(&self) -> &TypeContext {
        &self.conclusion.ctx
    }

    /// Sizes computed structurally (no validity check).
    pub fn sizes_unchecked(&self) -> Sizes {
        let mut s = match self.rule {
            RuleKind::Many => Sizes::default(),
            RuleKind::Lam | RuleKind::App => Sizes {
                general: 1,
                mult: 1,
            },
            RuleKind::Ax | RuleKind::Es => Sizes {
                general: 1,
                mult: 0,
            },
        };
        for p in &self.premises {
            let ps = p.sizes_unchecked();
            s.general += ps.general;
            s.mult += ps.mult;
        }
        s
    }

    pub fn ground_types(&self) -> BTreeSet<u32> {
        let mut out = BTreeSet::new();
        self.collect_grounds(&mut out);
        out
    }

    fn collect_grounds(&self, out: &mut BTreeSet<u32>) {
        out.extend(self.conclusion.ctx.ground_types());
        match &self.conclusion.ty {
            JType::Linear(a) => out.extend(a.ground_types()),
            JType::Multi(m) => out.extend(m.ground_types()),
        }
        for p in &self.premises {
            p.collect_grounds(out);
        }
    }

    /// All identifiers occurring anywhere in the tree (subject binders, free
    /// variables, and context entries); used to pick globally fresh names.
    pub(crate) fn identifiers(&self) -> BTreeSet<String> {
        fn idents_of_term(t: &Term, out: &mut BTreeSet<String>) {
            match t {
                Term::Var(x) => {
                    out.insert(x.clone());
                }
                Term::Abs(x, b) => {
                    out.insert(x.clone());
                    idents_of_term(b, out);
                }
                Term::App(l, r) => {
                    idents_of_term(l, out);
                    idents_of_term(r, out);
                }
                Term::Es(b, x, a) => {
                    out.insert(x.clone());
                    idents_of_term(b, out);
                    idents_of_term(a, out);
                }
            }
        }
        let mut out = BTreeSet::new();
        let mut stack = vec![self];
        while let Some(d) = stack.pop() {
            idents_of_term(&d.conclusion.subject, &mut out);
            for (x, _) in d.conclusion.ctx.entries() {
                out.insert(x.clone());
            }
            stack.extend(d.premises.iter());
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Smart constructors (used by the inference transforms)
// ---------------------------------------------------------------------------

pub(crate) fn d_ax(x: impl Into<String>, a: LinearType) -> Derivation {
    let x = x.into();
    Derivation {
        rule: RuleKind::Ax,
        conclusion: Judgment {
            ctx: TypeContext::singleton(x.clone(), MultiType::singleton(a.clone())),
            subject: Term::var(x),
            ty: JType::Linear(a),
        },
        premises: Vec::new(),
    }
}

pub(crate) fn d_many(subject: Term, premises: Vec<Derivation>) -> Derivation {
    debug_assert!(matches!(subject, Term::Var(_) | Term::Abs(..)));
    let mut ctx = TypeContext::empty();
    let mut elems = Vec::new();
    for p in &premises {
        debug_assert_eq!(p.conclusion.subject, subject);
        ctx = ctx.sum(&p.conclusion.ctx);
        elems.push(
            p.conclusion
                .ty
                .as_linear()
                .expect("many premises conclude linear judgments")
                .clone(),
        );
    }
    Derivation {
        rule: RuleKind::Many,
        conclusion: Judgment {
            ctx,
            subject,
            ty: JType::Multi(MultiType::from_elems(elems)),
        },
        premises,
    }
}

/// Axioms under a `many`, typing a variable at the given multi type.
pub(crate) fn d_var(x: impl Into<String>, m: &MultiType) -> Derivation {
    let x = x.into();
    let premises = m.elems().iter().map(|a| d_ax(x.clone(), a.clone())).collect();
    d_many(Term::var(x), premises)
}

pub(crate) fn d_lam(binder: &str, premise: Derivation) -> Derivation {
    let body = premise.conclusion.subject.clone();
    let n = premise
        .conclusion
        .ty
        .as_multi()
        .expect("lam premise concludes a multi judgment")
        .clone();
    let (ctx, m) = premise.conclusion.ctx.split(binder);
    Derivation {
        rule: RuleKind::Lam,
        conclusion: Judgment {
            ctx,
            subject: Term::abs(binder, body),
            ty: JType::Linear(LinearType::Arrow(m, n)),
        },
        premises: vec![premise],
    }
}

pub(crate) fn d_app(left: Derivation, right: Derivation) -> Derivation {
    let (src, tgt) = {
        let m = left
            .conclusion
            .ty
            .as_multi()
            .expect("app left premise concludes a multi judgment");
        let (src, tgt) = m
            .as_singleton_arrow()
            .expect("app left premise types a singleton arrow");
        (src.clone(), tgt.clone())
    };
    debug_assert_eq!(right.conclusion.ty.as_multi(), Some(&src));
    Derivation {
        rule: RuleKind::App,
        conclusion: Judgment {
            ctx: left.conclusion.ctx.sum(&right.conclusion.ctx),
            subject: Term::app(
                left.conclusion.subject.clone(),
                right.conclusion.subject.clone(),
            ),
            ty: JType::Multi(tgt),
        },
        premises: vec![left, right],
    }
}

pub(crate) fn d_es(binder: &str, body: Derivation, arg: Derivation) -> Derivation {
    let n = body
        .conclusion
        .ty
        .as_multi()
        .expect("es body premise concludes a multi judgment")
        .clone();
    let (ctx, m) = body.conclusion.ctx.split(binder);
    debug_assert_eq!(arg.conclusion.ty.as_multi(), Some(&m));
    Derivation {
        rule: RuleKind::Es,
        conclusion: Judgment {
            ctx: ctx.sum(&arg.conclusion.ctx),
            subject: Term::es(
                body.conclusion.subject.clone(),
                binder,
                arg.conclusion.subject.clone(),
            ),
            ty: JType::Multi(n),
        },
        premises: vec![body, arg],
    }
}

// ---------------------------------------------------------------------------
// Validity
// ---------------------------------------------------------------------------

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ValidityError {
    /// Premise indices from the root to the offending node.
    pub path: Vec<usize>,
    pub message: String,
}

impl fmt::Display for ValidityError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() {
            write!(f, "invalid derivation at root: {}", self.message)
        } else {
            let path: Vec<String> = self.path.iter().map(|i| i.to_string()).collect();
            write!(
                f,
                "invalid derivation at premise path {}: {}",
                path.join("."),
                self.message
            )
        }
    }
}

impl std::error::Error for ValidityError {}

fn err(path: &[usize], message: impl Into<String>) -> ValidityError {
    ValidityError {
        path: path.to_vec(),
        message: message.into(),
    }
}

/// Renames a derivation so that its subject becomes `target` (which must be
/// alpha-equivalent); context entries for renamed binders follow along.
pub(crate) fn align_subject(d: &Derivation, target: &Term) -> Result<Derivation, ValidityError> {
    fn term_rename(t: &Term, map: &BTreeMap<String, String>, target: &Term) -> Result<(), String> {
        // Presence check only; the rebuilt derivation simply adopts `target`.
        match (t, target) {
            (Term::Var(x), Term::Var(y)) => {
                let mapped = map.get(x).map(String::as_str).unwrap_or(x);
                if mapped == y {
                    Ok(())
                } else {
                    Err(format!("variable {x} does not map to {y}"))
                }
            }
            (Term::Abs(x, b), Term::Abs(y, tb)) => {
                let mut m = map.clone();
                m.insert(x.clone(), y.clone());
                term_rename(b, &m, tb)
            }
            (Term::App(l, r), Term::App(tl, tr)) => {
                term_rename(l, map, tl)?;
                term_rename(r, map, tr)
            }
            (Term::Es(b, x, a), Term::Es(tb, y, ta)) => {
                term_rename(a, map, ta)?;
                let mut m = map.clone();
                m.insert(x.clone(), y.clone());
                term_rename(b, &m, tb)
            }
            _ => Err("structural mismatch".to_string()),
        }
    }

    fn go(
        d: &Derivation,
        target: &Term,
        map: &BTreeMap<String, String>,
    ) -> Result<Derivation, String> {
        term_rename(&d.conclusion.subject, map, target)?;
        let mut ctx = TypeContext::empty();
        for (x, m) in d.conclusion.ctx.entries() {
            let key = map.get(x).cloned().unwrap_or_else(|| x.clone());
            if !ctx.get(&key).is_empty() {
                return Err(format!("renaming collapses distinct context entries at {key}"));
            }
            ctx.bind(key, m.clone());
        }
        let premises = match (d.rule, target) {
            (RuleKind::Ax, _) => Vec::new(),
            (RuleKind::Many, _) => d
                .premises
                .iter()
                .map(|p| go(p, target, map))
                .collect::<Result<_, _>>()?,
            (RuleKind::Lam, Term::Abs(y, tb)) => {
                let p = d.premises.first().ok_or("lam node without premise")?;
                let (x, _) = match &d.conclusion.subject {
                    Term::Abs(x, b) => (x, b),
                    _ => return Err("lam subject is not an abstraction".to_string()),
                };
                let mut m = map.clone();
                m.insert(x.clone(), y.clone());
                vec![go(p, tb, &m)?]
            }
            (RuleKind::App, Term::App(tl, tr)) => {
                if d.premises.len() != 2 {
                    return Err("app node needs two premises".to_string());
                }
                vec![go(&d.premises[0], tl, map)?, go(&d.premises[1], tr, map)?]
            }
            (RuleKind::Es, Term::Es(tb, y, ta)) => {
                if d.premises.len() != 2 {
                    return Err("es node needs two premises".to_string());
                }
                let x = match &d.conclusion.subject {
                    Term::Es(_, x, _) => x,
                    _ => return Err("es subject is not a substitution".to_string()),
                };
                let mut m = map.clone();
                m.insert(x.clone(), y.clone());
                vec![go(&d.premises[0], tb, &m)?, go(&d.premises[1], ta, map)?]
            }
            _ => return Err("rule does not match subject shape".to_string()),
        };
        Ok(Derivation {
            rule: d.rule,
            conclusion: Judgment {
                ctx,
                subject: target.clone(),
                ty: d.conclusion.ty.clone(),
            },
            premises,
        })
    }

    go(d, target, &BTreeMap::new()).map_err(|message| ValidityError {
        path: Vec::new(),
        message: format!("subject alignment failed: {message}"),
    })
}

/// Confirms every node satisfies its rule's shape: premise judgments, context
/// sums, subject agreement (up to alpha) and the theoretical-value
/// restriction of `many`. Reports the first violating node.
pub fn check_derivation(d: &Derivation) -> Result<(), ValidityError> {
    fn check(d: &Derivation, path: &mut Vec<usize>) -> Result<(), ValidityError> {
        let j = &d.conclusion;
        match d.rule {
            RuleKind::Ax => {
                if !d.premises.is_empty() {
                    return Err(err(path, "ax takes no premises"));
                }
                let a = j
                    .ty
                    .as_linear()
                    .ok_or_else(|| err(path, "ax concludes a linear judgment"))?;
                let x = match &j.subject {
                    Term::Var(x) => x,
                    _ => return Err(err(path, "ax subject must be a variable")),
                };
                let want = TypeContext::singleton(x.clone(), MultiType::singleton(a.clone()));
                if j.ctx != want {
                    return Err(err(path, format!("ax context must be {want}")));
                }
            }
            RuleKind::Many => {
                if !matches!(j.subject, Term::Var(_) | Term::Abs(..)) {
                    return Err(err(
                        path,
                        "many subject must be a theoretical value (variable or abstraction)",
                    ));
                }
                let m = j
                    .ty
                    .as_multi()
                    .ok_or_else(|| err(path, "many concludes a multi judgment"))?;
                let mut ctx = TypeContext::empty();
                let mut elems = Vec::new();
                for (i, p) in d.premises.iter().enumerate() {
                    path.push(i);
                    let aligned = align_premise(p, &j.subject, path)?;
                    check(&aligned, path)?;
                    let a = aligned
                        .conclusion
                        .ty
                        .as_linear()
                        .ok_or_else(|| err(path, "many premise concludes a linear judgment"))?
                        .clone();
                    elems.push(a);
                    ctx = ctx.sum(&aligned.conclusion.ctx);
                    path.pop();
                }
                if &MultiType::from_elems(elems) != m {
                    return Err(err(path, "many conclusion is not the multiset of its premises"));
                }
                if ctx != j.ctx {
                    return Err(err(path, "many context is not the sum of its premises"));
                }
            }
            RuleKind::Lam => {
                let (x, b) = match &j.subject {
                    Term::Abs(x, b) => (x.clone(), (**b).clone()),
                    _ => return Err(err(path, "lam subject must be an abstraction")),
                };
                let arrow = j
                    .ty
                    .as_linear()
                    .ok_or_else(|| err(path, "lam concludes a linear judgment"))?;
                let (m, n) = match arrow {
                    LinearType::Arrow(m, n) => (m.clone(), n.clone()),
                    _ => return Err(err(path, "lam concludes an arrow type")),
                };
                if d.premises.len() != 1 {
                    return Err(err(path, "lam takes exactly one premise"));
                }
                path.push(0);
                let p = align_premise(&d.premises[0], &b, path)?;
                check(&p, path)?;
                if p.conclusion.ty.as_multi() != Some(&n) {
                    return Err(err(path, "lam premise type must be the arrow target"));
                }
                let (rest, bound) = p.conclusion.ctx.split(&x);
                if bound != m {
                    return Err(err(path, "binder entry must be the arrow source"));
                }
                if rest != j.ctx {
                    return Err(err(path, "lam context must drop exactly the binder"));
                }
                path.pop();
            }
            RuleKind::App => {
                let (l, r) = match &j.subject {
                    Term::App(l, r) => ((**l).clone(), (**r).clone()),
                    _ => return Err(err(path, "app subject must be an application")),
                };
                let n = j
                    .ty
                    .as_multi()
                    .ok_or_else(|| err(path, "app concludes a multi judgment"))?;
                if d.premises.len() != 2 {
                    return Err(err(path, "app takes exactly two premises"));
                }
                path.push(0);
                let p0 = align_premise(&d.premises[0], &l, path)?;
                check(&p0, path)?;
                let arrow = p0
                    .conclusion
                    .ty
                    .as_multi()
                    .and_then(|m| m.as_singleton_arrow().map(|(a, b)| (a.clone(), b.clone())));
                let Some((src, tgt)) = arrow else {
                    return Err(err(path, "app left premise must type a singleton arrow"));
                };
                path.pop();
                path.push(1);
                let p1 = align_premise(&d.premises[1], &r, path)?;
                check(&p1, path)?;
                if p1.conclusion.ty.as_multi() != Some(&src) {
                    return Err(err(path, "app argument type must match the arrow source"));
                }
                path.pop();
                if &tgt != n {
                    return Err(err(path, "app conclusion must be the arrow target"));
                }
                if p0.conclusion.ctx.sum(&p1.conclusion.ctx) != j.ctx {
                    return Err(err(path, "app context is not the sum of its premises"));
                }
            }
            RuleKind::Es => {
                let (b, x, a) = match &j.subject {
                    Term::Es(b, x, a) => ((**b).clone(), x.clone(), (**a).clone()),
                    _ => return Err(err(path, "es subject must be an explicit substitution")),
                };
                let n = j
                    .ty
                    .as_multi()
                    .ok_or_else(|| err(path, "es concludes a multi judgment"))?;
                if d.premises.len() != 2 {
                    return Err(err(path, "es takes exactly two premises"));
                }
                path.push(0);
                let p0 = align_premise(&d.premises[0], &b, path)?;
                check(&p0, path)?;
                if p0.conclusion.ty.as_multi() != Some(n) {
                    return Err(err(path, "es body premise must conclude the es type"));
                }
                let (rest, bound) = p0.conclusion.ctx.split(&x);
                path.pop();
                path.push(1);
                let p1 = align_premise(&d.premises[1], &a, path)?;
                check(&p1, path)?;
                if p1.conclusion.ty.as_multi() != Some(&bound) {
                    return Err(err(path, "es argument type must match the binder entry"));
                }
                path.pop();
                if rest.sum(&p1.conclusion.ctx) != j.ctx {
                    return Err(err(path, "es context is not the sum of its premises"));
                }
            }
        }
        Ok(())
    }

    fn align_premise(
        p: &Derivation,
        expected: &Term,
        path: &[usize],
    ) -> Result<Derivation, ValidityError> {
        if &p.conclusion.subject == expected {
            Ok(p.clone())
        } else {
            align_subject(p, expected).map_err(|e| ValidityError {
                path: path.to_vec(),
                message: format!("premise subject disagrees: {}", e.message),
            })
        }
    }

    check(d, &mut Vec::new())
}

/// Sizes of a valid derivation.
pub fn sizes(d: &Derivation) -> Result<Sizes, ValidityError> {
    check_derivation(d)?;
    Ok(d.sizes_unchecked())
}

pub fn classify_derivation(d: &Derivation) -> Result<DerivationClass, ValidityError> {
    check_derivation(d)?;
    Ok(classify_final_judgment(d))
}

/// Flags computed from the final judgment alone; a linear conclusion is read
/// as its singleton multi type.
pub fn classify_final_judgment(d: &Derivation) -> DerivationClass {
    let m = d.conclusion.ty.to_multi();
    let mf = classify_multi(&m);
    let ctx_inert = context_is(&d.conclusion.ctx, |f: &TypeFlags| f.inert);
    let ctx_left = context_is(&d.conclusion.ctx, |f: &TypeFlags| f.left);
    let ctx_uleft = context_is(&d.conclusion.ctx, |f: &TypeFlags| f.unitary_left);
    DerivationClass {
        inert: ctx_inert && mf.inert,
        tight: ctx_inert && mf.ground,
        shrinking: ctx_left && mf.right,
        unitary_shrinking: ctx_uleft && mf.unitary_right,
    }
}

// ---------------------------------------------------------------------------
// Skeleton equivalence
// ---------------------------------------------------------------------------

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct SkeletonError {
    pub message: String,
}

impl fmt::Display for SkeletonError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.message)
    }
}

impl std::error::Error for SkeletonError {}

/// True iff the two derivations have the same rules arranged the same way,
/// with `many` premises matched up to permutation. The subjects must agree up
/// to alpha.
pub fn skeleton_eq(d1: &Derivation, d2: &Derivation) -> Result<bool, SkeletonError> {
    if !d1.conclusion.subject.alpha_eq(&d2.conclusion.subject) {
        return Err(SkeletonError {
            message: format!(
                "skeleton comparison requires the same subject: {} vs {}",
                d1.conclusion.subject, d2.conclusion.subject
            ),
        });
    }
    Ok(skel_eq(d1, d2))
}

fn skel_eq(d1: &Derivation, d2: &Derivation) -> bool {
    if d1.rule != d2.rule || d1.premises.len() != d2.premises.len() {
        return false;
    }
    match d1.rule {
        RuleKind::Many => {
            // Match premises up to permutation by backtracking; premise
            // counts are small in practice.
            fn matching(ps1: &[Derivation], ps2: &[Derivation], used: &mut Vec<bool>) -> bool {
                let Some(p1) = ps1.first() else {
                    return true;
                };
                for (j, p2) in ps2.iter().enumerate() {
                    if !used[j] && skel_eq(p1, p2) {
                        used[j] = true;
                        if matching(&ps1[1..], ps2, used) {
                            return true;
                        }
                        used[j] = false;
                    }
                }
                false
            }
            matching(
                &d1.premises,
                &d2.premises,
                &mut vec![false; d2.premises.len()],
            )
        }
        _ => d1
            .premises
            .iter()
            .zip(&d2.premises)
            .all(|(a, b)| skel_eq(a, b)),
    }
}

pub fn apply_subst_derivation(s: &GroundSubst, d: &Derivation) -> Derivation {
    Derivation {
        rule: d.rule,
        conclusion: Judgment {
            ctx: s.apply_context(&d.conclusion.ctx),
            subject: d.conclusion.subject.clone(),
            ty: match &d.conclusion.ty {
                JType::Linear(a) => JType::Linear(s.apply_linear(a)),
                JType::Multi(m) => JType::Multi(s.apply_multi(m)),
            },
        },
        premises: d
            .premises
            .iter()
            .map(|p| apply_subst_derivation(s, p))
            .collect(),
    }
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

/// Canonical textual form: one s-expression per node, contexts sorted by
/// variable, multisets in canonical order, `many` premises sorted by their
/// serialized text.
pub fn serialize(d: &Derivation) -> String {
    let mut out = String::new();
    ser(d, &mut out);
    out
}

fn ser(d: &Derivation, out: &mut String) {
    out.push_str("(rule ");
    out.push_str(d.rule.name());
    out.push_str(" (ctx ");
    out.push_str(&d.conclusion.ctx.to_string());
    out.push_str(") (subject ");
    out.push_str(&d.conclusion.subject.to_string());
    out.push_str(") (type ");
    match &d.conclusion.ty {
        JType::Linear(a) => {
            out.push_str("lin ");
            out.push_str(&a.to_string());
        }
        JType::Multi(m) => {
            out.push_str("mt ");
            out.push_str(&m.to_string());
        }
    }
    out.push_str(") (premises");
    let mut texts: Vec<String> = d.premises.iter().map(serialize).collect();
    if d.rule == RuleKind::Many {
        texts.sort();
    }
    for t in texts {
        out.push(' ');
        out.push_str(&t);
    }
    out.push_str("))");
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum DeserializeError {
    Parse { pos: usize, message: String },
    Invalid(ValidityError),
}

impl fmt::Display for DeserializeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DeserializeError::Parse { pos, message } => {
                write!(f, "derivation parse error at byte {pos}: {message}")
            }
            DeserializeError::Invalid(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for DeserializeError {}

struct DerParser<'a> {
    text: &'a str,
    pos: usize,
}

impl<'a> DerParser<'a> {
    fn error(&self, message: impl Into<String>) -> DeserializeError {
        DeserializeError::Parse {
            pos: self.pos,
            message: message.into(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.text.len()
            && self.text.as_bytes()[self.pos].is_ascii_whitespace()
        {
            self.pos += 1;
        }
    }

    fn expect(&mut self, lit: &str) -> Result<(), DeserializeError> {
        self.skip_ws();
        if self.text[self.pos..].starts_with(lit) {
            self.pos += lit.len();
            Ok(())
        } else {
            Err(self.error(format!("expected '{lit}'")))
        }
    }

    fn word(&mut self) -> Result<&'a str, DeserializeError> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.text.len()
            && self.text.as_bytes()[self.pos].is_ascii_alphanumeric()
        {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.error("expected a word"));
        }
        Ok(&self.text[start..self.pos])
    }

    /// Reads raw text up to the ')' closing the current field, tracking
    /// nested parentheses inside the payload.
    fn until_field_close(&mut self) -> Result<&'a str, DeserializeError> {
        self.skip_ws();
        let start = self.pos;
        let mut depth = 0usize;
        let bytes = self.text.as_bytes();
        while self.pos < self.text.len() {
            match bytes[self.pos] {
                b'(' => depth += 1,
                b')' => {
                    if depth == 0 {
                        let s = &self.text[start..self.pos];
                        self.pos += 1;
                        return Ok(s);
                    }
                    depth -= 1;
                }
                _ => {}
            }
            self.pos += 1;
        }
        Err(self.error("unterminated field"))
    }

    fn node(&mut self) -> Result<Derivation, DeserializeError> {
        self.expect("(rule")?;
        let rule = match self.word()? {
            "ax" => RuleKind::Ax,
            "app" => RuleKind::App,
            "lam" => RuleKind::Lam,
            "es" => RuleKind::Es,
            "many" => RuleKind::Many,
            other => return Err(self.error(format!("unknown rule tag '{other}'"))),
        };
        self.expect("(ctx")?;
        let ctx_text = self.until_field_close()?;
        let ctx = parse_context(ctx_text).map_err(|m| self.error(m))?;
        self.expect("(subject")?;
        let subject_text = self.until_field_close()?;
        let subject = crate::syntax::parse_term(subject_text)
            .map_err(|e| self.error(format!("bad subject: {e}")))?;
        self.expect("(type")?;
        let kind = self.word()?;
        let ty_text = self.until_field_close()?;
        let ty = match kind {
            "lin" => JType::Linear(
                crate::multitypes::parse_linear_type(ty_text)
                    .map_err(|e| self.error(format!("bad type: {e}")))?,
            ),
            "mt" => JType::Multi(
                crate::multitypes::parse_multi_type(ty_text)
                    .map_err(|e| self.error(format!("bad type: {e}")))?,
            ),
            other => return Err(self.error(format!("unknown type tag '{other}'"))),
        };
        self.expect("(premises")?;
        let mut premises = Vec::new();
        loop {
            self.skip_ws();
            match self.text.as_bytes().get(self.pos) {
                Some(b')') => {
                    self.pos += 1;
                    break;
                }
                Some(b'(') => premises.push(self.node()?),
                _ => return Err(self.error("expected a premise or ')'")),
            }
        }
        self.expect(")")?;
        Ok(Derivation {
            rule,
            conclusion: Judgment { ctx, subject, ty },
            premises,
        })
    }
}

fn parse_context(text: &str) -> Result<TypeContext, String> {
    let text = text.trim();
    let inner = text
        .strip_prefix('{')
        .and_then(|s| s.strip_suffix('}'))
        .ok_or("context must be braced")?;
    let mut ctx = TypeContext::empty();
    let mut rest = inner.trim();
    while !rest.is_empty() {
        let colon = rest.find(':').ok_or("missing ':' in context entry")?;
        let var = rest[..colon].trim().to_string();
        if var.is_empty() {
            return Err("empty variable in context".to_string());
        }
        // The multi type extends to the matching close bracket.
        let after = &rest[colon + 1..];
        let mut depth = 0usize;
        let mut end = None;
        for (i, b) in after.bytes().enumerate() {
            match b {
                b'[' => depth += 1,
                b']' => {
                    depth -= 1;
                    if depth == 0 {
                        end = Some(i + 1);
                        break;
                    }
                }
                _ => {}
            }
        }
        let end = end.ok_or("unterminated multi type in context")?;
        let m = crate::multitypes::parse_multi_type(after[..end].trim())
            .map_err(|e| format!("bad context type: {e}"))?;
        if !ctx.get(&var).is_empty() {
            return Err(format!("duplicate context entry for {var}"));
        }
        ctx.bind(var, m);
        rest = after[end..].trim();
        if let Some(r) = rest.strip_prefix(',') {
            rest = r.trim();
        } else if !rest.is_empty() {
            return Err("expected ',' between context entries".to_string());
        }
    }
    Ok(ctx)
}

/// Parses and validates a serialized derivation. The returned tree has its
/// premise subjects aligned with the conclusions.
pub fn deserialize(text: &str) -> Result<Derivation, DeserializeError> {
    let mut p = DerParser { text, pos: 0 };
    let d = p.node()?;
    p.skip_ws();
    if p.pos != text.len() {
        return Err(p.error("trailing input after derivation"));
    }
    check_derivation(&d).map_err(DeserializeError::Invalid)?;
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::multitypes::parse_multi_type;
    use crate::syntax::parse_term;

    fn p(s: &str) -> Term {
        parse_term(s).unwrap()
    }

    fn mt(s: &str) -> MultiType {
        parse_multi_type(s).unwrap()
    }

    /// The derivation of the identity at [[X] -o [X]].
    fn phi_l() -> Derivation {
        let ax = d_ax("y", LinearType::Ground(0));
        let var = d_many(Term::var("y"), vec![ax]);
        let lam = d_lam("y", var);
        d_many(p("\\y. y"), vec![lam])
    }

    /// The derivation of \x. x x at [[[X] -o [X], X] -o [X]].
    fn phi_delta() -> Derivation {
        let arrow = LinearType::Arrow(mt("[X]"), mt("[X]"));
        let left = d_many(Term::var("x"), vec![d_ax("x", arrow)]);
        let right = d_var("x", &mt("[X]"));
        let app = d_app(left, right);
        d_many(p("\\x. x x"), vec![d_lam("x", app)])
    }

    #[test]
    fn builders_produce_valid_trees() {
        check_derivation(&phi_l()).unwrap();
        check_derivation(&phi_delta()).unwrap();
        assert_eq!(phi_l().sizes_unchecked(), Sizes { general: 2, mult: 1 });
        assert_eq!(
            phi_delta().sizes_unchecked(),
            Sizes {
                general: 4,
                mult: 2
            }
        );
    }

    #[test]
    fn invalid_many_subject() {
        let mut d = phi_l();
        d.conclusion.subject = p("x y");
        let e = check_derivation(&d).unwrap_err();
        assert!(e.message.contains("theoretical value") || e.message.contains("alignment"));
    }

    #[test]
    fn invalid_app_shape() {
        // Left premise typing a non-singleton multi is rejected.
        let left = d_var(
            "x",
            &mt("[[X] -o [X], [X] -o [X]]"),
        );
        let right = d_var("z", &mt("[X]"));
        let bad = Derivation {
            rule: RuleKind::App,
            conclusion: Judgment {
                ctx: left.conclusion.ctx.sum(&right.conclusion.ctx),
                subject: p("x z"),
                ty: JType::Multi(mt("[X]")),
            },
            premises: vec![left, right],
        };
        let e = check_derivation(&bad).unwrap_err();
        assert!(e.message.contains("singleton arrow"));
    }

    #[test]
    fn classify_examples() {
        // Empty many over an abstraction: tight.
        let d = d_many(p("\\x. (\\z. z z)(\\z. z z)"), vec![]);
        let c = classify_derivation(&d).unwrap();
        assert!(c.tight && c.inert);
        assert!(!c.shrinking);

        let c = classify_derivation(&phi_delta()).unwrap();
        assert!(c.shrinking && c.unitary_shrinking);
        assert!(!c.inert);
    }

    #[test]
    fn skeletons() {
        let d = phi_delta();
        // Replacing X by X -> X everywhere preserves the skeleton.
        let mut s = GroundSubst::identity();
        s.bind(0, LinearType::Arrow(mt("[X]"), mt("[X]")));
        let d2 = apply_subst_derivation(&s, &d);
        check_derivation(&d2).unwrap();
        assert!(skeleton_eq(&d, &d2).unwrap());
        assert!(skeleton_eq(&d, &d).unwrap());
        assert!(skeleton_eq(&phi_l(), &phi_l()).unwrap());
        assert!(skeleton_eq(&phi_l(), &phi_delta()).is_err());
    }

    #[test]
    fn skeleton_invariants() {
        let d = phi_delta();
        let mut s = GroundSubst::identity();
        s.bind(0, LinearType::Arrow(mt("[X]"), mt("[X]")));
        let d2 = apply_subst_derivation(&s, &d);
        assert_eq!(d.sizes_unchecked(), d2.sizes_unchecked());
        assert_eq!(
            d.conclusion.ty.to_multi().card(),
            d2.conclusion.ty.to_multi().card()
        );
        let c1 = classify_final_judgment(&d);
        let c2 = classify_final_judgment(&d2);
        assert_eq!(c1.shrinking, c2.shrinking);
        assert_eq!(c1.unitary_shrinking, c2.unitary_shrinking);
    }

    #[test]
    fn serialization_roundtrip() {
        for d in [phi_l(), phi_delta(), d_many(p("\\x. x"), vec![])] {
            let text = serialize(&d);
            let back = deserialize(&text).unwrap();
            assert!(skeleton_eq(&d, &back).unwrap());
            assert_eq!(serialize(&back), text);
        }
    }

    #[test]
    fn deserialize_rejects_garbage_and_invalid() {
        assert!(matches!(
            deserialize("(rule nope)"),
            Err(DeserializeError::Parse { .. })
        ));
        // Well-formed text encoding an invalid instance: ax with wrong context.
        let text = "(rule ax (ctx {}) (subject x) (type lin X) (premises))";
        assert!(matches!(
            deserialize(text),
            Err(DeserializeError::Invalid(_))
        ));
    }

    #[test]
    fn alignment_tolerates_alpha_variant_premises() {
        let mut d = phi_l();
        // Rename the bound variable in the premise subtree only.
        let renamed = align_subject(&d.premises[0], &p("\\w. w")).unwrap();
        d.premises[0] = renamed;
        check_derivation(&d).unwrap();
    }

    #[test]
    fn dom_subset_of_free_vars() {
        for d in [phi_l(), phi_delta()] {
            let fv = d.conclusion.subject.free_vars();
            assert!(d.conclusion.ctx.domain().all(|x| fv.contains(x)));
        }
    }
}
