//! The two-layer type grammar: linear types (a ground type or an arrow
//! between multi types) and multi types (finite multisets of linear types),
//! plus type contexts, ground-type substitutions, sizes and the inert /
//! ground / left / right (shrinking) classifiers.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

/// A linear type. `Ground(0)` is the standard ground type `X`; other indices
/// only occur in the infinite-grounds variant used for dissections.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum LinearType {
    Ground(u32),
    Arrow(MultiType, MultiType),
}

impl LinearType {
    pub fn arrow(src: MultiType, tgt: MultiType) -> LinearType {
        LinearType::Arrow(src, tgt)
    }

    /// Number of arrow constructors.
    pub fn size(&self) -> usize {
        match self {
            LinearType::Ground(_) => 0,
            LinearType::Arrow(m, n) => 1 + m.size() + n.size(),
        }
    }

    pub fn ground_types(&self) -> BTreeSet<u32> {
        let mut out = BTreeSet::new();
        self.collect_grounds(&mut out);
        out
    }

    fn collect_grounds(&self, out: &mut BTreeSet<u32>) {
        match self {
            LinearType::Ground(i) => {
                out.insert(*i);
            }
            LinearType::Arrow(m, n) => {
                for a in m.elems().iter().chain(n.elems()) {
                    a.collect_grounds(out);
                }
            }
        }
    }
}

/// A finite multiset of linear types, kept canonically sorted so that
/// equality is multiset equality and printing is stable.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Default)]
pub struct MultiType(Vec<LinearType>);

impl MultiType {
    pub fn empty() -> MultiType {
        MultiType(Vec::new())
    }

    pub fn singleton(a: LinearType) -> MultiType {
        MultiType(vec![a])
    }

    pub fn from_elems(mut elems: Vec<LinearType>) -> MultiType {
        elems.sort();
        MultiType(elems)
    }

    /// `n` copies of the standard ground type.
    pub fn ground(n: usize) -> MultiType {
        MultiType(vec![LinearType::Ground(0); n])
    }

    pub fn elems(&self) -> &[LinearType] {
        &self.0
    }

    pub fn card(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Multiset sum.
    pub fn sum(&self, other: &MultiType) -> MultiType {
        let mut v = self.0.clone();
        v.extend(other.0.iter().cloned());
        MultiType::from_elems(v)
    }

    pub fn size(&self) -> usize {
        self.0.iter().map(LinearType::size).sum()
    }

    pub fn ground_types(&self) -> BTreeSet<u32> {
        let mut out = BTreeSet::new();
        for a in &self.0 {
            a.collect_grounds(&mut out);
        }
        out
    }

    /// The unique arrow element of a singleton multi type, if that is the shape.
    pub fn as_singleton_arrow(&self) -> Option<(&MultiType, &MultiType)> {
        match self.0.as_slice() {
            [LinearType::Arrow(m, n)] => Some((m, n)),
            _ => None,
        }
    }
}

/// A finite map from variables to multi types; variables outside the domain
/// are implicitly mapped to the empty multi type, and no empty multi type is
/// ever stored.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Default)]
pub struct TypeContext(BTreeMap<String, MultiType>);

impl TypeContext {
    pub fn empty() -> TypeContext {
        TypeContext(BTreeMap::new())
    }

    pub fn singleton(x: impl Into<String>, m: MultiType) -> TypeContext {
        let mut c = TypeContext::empty();
        c.bind(x, m);
        c
    }

    pub fn bind(&mut self, x: impl Into<String>, m: MultiType) {
        if !m.is_empty() {
            self.0.insert(x.into(), m);
        }
    }

    pub fn get(&self, x: &str) -> MultiType {
        self.0.get(x).cloned().unwrap_or_else(MultiType::empty)
    }

    pub fn domain(&self) -> impl Iterator<Item = &String> {
        self.0.keys()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&String, &MultiType)> {
        self.0.iter()
    }

    /// Pointwise multiset sum.
    pub fn sum(&self, other: &TypeContext) -> TypeContext {
        let mut out = self.clone();
        for (x, m) in &other.0 {
            let cur = out.get(x);
            out.0.insert(x.clone(), cur.sum(m));
        }
        out
    }

    /// Splits off the entry for `x`: the remaining context and the multi type
    /// bound to `x` (empty if absent).
    pub fn split(&self, x: &str) -> (TypeContext, MultiType) {
        let mut rest = self.clone();
        let m = rest.0.remove(x).unwrap_or_else(MultiType::empty);
        (rest, m)
    }

    pub fn rename_var(&self, old: &str, new: &str) -> TypeContext {
        let mut out = TypeContext::empty();
        for (x, m) in &self.0 {
            let k = if x == old { new } else { x };
            out.bind(k.to_string(), m.clone());
        }
        out
    }

    /// Total size of the list of types in the context.
    pub fn size(&self) -> usize {
        self.0.values().map(MultiType::size).sum()
    }

    pub fn ground_types(&self) -> BTreeSet<u32> {
        let mut out = BTreeSet::new();
        for m in self.0.values() {
            out.extend(m.ground_types());
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Classifiers
// ---------------------------------------------------------------------------

/// Membership of a type in the classifier grammars. For multi types `ground`
/// means every element is a ground type (equivalently, size zero).
#[derive(Clone, Copy, PartialEq, Eq, Debug, Default)]
pub struct TypeFlags {
    pub inert: bool,
    pub ground: bool,
    pub left: bool,
    pub right: bool,
    pub unitary_left: bool,
    pub unitary_right: bool,
}

pub fn classify_linear(a: &LinearType) -> TypeFlags {
    match a {
        LinearType::Ground(_) => TypeFlags {
            inert: true,
            ground: true,
            left: true,
            right: true,
            unitary_left: true,
            unitary_right: true,
        },
        LinearType::Arrow(m, n) => {
            let mf = classify_multi(m);
            let nf = classify_multi(n);
            TypeFlags {
                inert: mf.ground && nf.inert,
                ground: false,
                left: mf.right && nf.left,
                right: mf.left && nf.right,
                unitary_left: mf.unitary_right && nf.unitary_left,
                unitary_right: mf.unitary_left && nf.unitary_right,
            }
        }
    }
}

pub fn classify_multi(m: &MultiType) -> TypeFlags {
    let elems: Vec<TypeFlags> = m.elems().iter().map(classify_linear).collect();
    let all = |f: fn(&TypeFlags) -> bool| elems.iter().all(f);
    TypeFlags {
        inert: all(|f| f.inert),
        ground: all(|f| f.ground),
        left: all(|f| f.left),
        // Right multi types must be non-empty; unitary right ones singletons.
        right: !m.is_empty() && all(|f| f.right),
        unitary_left: all(|f| f.unitary_left),
        unitary_right: m.card() == 1 && all(|f| f.unitary_right),
    }
}

/// A context is inert / left / unitary left when all its entries are.
pub fn context_is(ctx: &TypeContext, pred: impl Fn(&TypeFlags) -> bool) -> bool {
    ctx.entries().all(|(_, m)| pred(&classify_multi(m)))
}

// ---------------------------------------------------------------------------
// Ground substitutions
// ---------------------------------------------------------------------------

/// A function from ground types to linear types that is the identity outside
/// a finite domain.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct GroundSubst(BTreeMap<u32, LinearType>);

impl GroundSubst {
    pub fn identity() -> GroundSubst {
        GroundSubst(BTreeMap::new())
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (u32, LinearType)>) -> GroundSubst {
        GroundSubst(pairs.into_iter().collect())
    }

    pub fn bind(&mut self, g: u32, a: LinearType) {
        self.0.insert(g, a);
    }

    pub fn get(&self, g: u32) -> LinearType {
        self.0.get(&g).cloned().unwrap_or(LinearType::Ground(g))
    }

    pub fn domain(&self) -> BTreeSet<u32> {
        self.0.keys().copied().collect()
    }

    pub fn restrict(&self, keep: &BTreeSet<u32>) -> GroundSubst {
        GroundSubst(
            self.0
                .iter()
                .filter(|(g, _)| keep.contains(g))
                .map(|(g, a)| (*g, a.clone()))
                .collect(),
        )
    }

    /// Union of two substitutions; panics if they disagree on a shared key.
    pub fn union(&self, other: &GroundSubst) -> GroundSubst {
        let mut out = self.0.clone();
        for (g, a) in &other.0 {
            if let Some(prev) = out.insert(*g, a.clone()) {
                assert_eq!(&prev, a, "ground substitutions disagree on X_{g}");
            }
        }
        GroundSubst(out)
    }

    pub fn apply_linear(&self, a: &LinearType) -> LinearType {
        match a {
            LinearType::Ground(g) => self.get(*g),
            LinearType::Arrow(m, n) => {
                LinearType::Arrow(self.apply_multi(m), self.apply_multi(n))
            }
        }
    }

    pub fn apply_multi(&self, m: &MultiType) -> MultiType {
        MultiType::from_elems(m.elems().iter().map(|a| self.apply_linear(a)).collect())
    }

    pub fn apply_context(&self, ctx: &TypeContext) -> TypeContext {
        let mut out = TypeContext::empty();
        for (x, m) in ctx.entries() {
            out.bind(x.clone(), self.apply_multi(m));
        }
        out
    }
}

/// `count` ground types with pairwise distinct indices disjoint from `avoid`,
/// deterministically the smallest available ones.
pub fn fresh_grounds(avoid: &BTreeSet<u32>, count: usize) -> Vec<LinearType> {
    let mut out = Vec::with_capacity(count);
    let mut i = 0u32;
    while out.len() < count {
        if !avoid.contains(&i) {
            out.push(LinearType::Ground(i));
        }
        i += 1;
    }
    out
}

// ---------------------------------------------------------------------------
// Printing
// ---------------------------------------------------------------------------

impl fmt::Display for LinearType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LinearType::Ground(0) => write!(f, "X"),
            LinearType::Ground(i) => write!(f, "X_{i}"),
            LinearType::Arrow(m, n) => write!(f, "{m} -o {n}"),
        }
    }
}

impl fmt::Display for MultiType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, a) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{a}")?;
        }
        write!(f, "]")
    }
}

impl fmt::Display for TypeContext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, (x, m)) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{x}:{m}")?;
        }
        write!(f, "}}")
    }
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct TypeParseError {
    pub pos: usize,
    pub message: String,
}

impl fmt::Display for TypeParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "type syntax error at byte {}: {}", self.pos, self.message)
    }
}

impl std::error::Error for TypeParseError {}

struct TyParser<'a> {
    text: &'a [u8],
    pos: usize,
}

impl<'a> TyParser<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.text.len() && self.text[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn err(&self, message: &str) -> TypeParseError {
        TypeParseError {
            pos: self.pos,
            message: message.to_string(),
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.text.get(self.pos).copied()
    }

    fn eat(&mut self, b: u8, what: &str) -> Result<(), TypeParseError> {
        if self.peek() == Some(b) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(&format!("expected '{what}'")))
        }
    }

    fn multi(&mut self) -> Result<MultiType, TypeParseError> {
        self.eat(b'[', "[")?;
        let mut elems = Vec::new();
        if self.peek() == Some(b']') {
            self.pos += 1;
            return Ok(MultiType::empty());
        }
        loop {
            elems.push(self.linear()?);
            match self.peek() {
                Some(b',') => {
                    self.pos += 1;
                }
                Some(b']') => {
                    self.pos += 1;
                    break;
                }
                _ => return Err(self.err("expected ',' or ']'")),
            }
        }
        Ok(MultiType::from_elems(elems))
    }

    fn linear(&mut self) -> Result<LinearType, TypeParseError> {
        match self.peek() {
            Some(b'X') => {
                self.pos += 1;
                let mut idx = 0u32;
                if self.text.get(self.pos) == Some(&b'_') {
                    self.pos += 1;
                    let start = self.pos;
                    while self.pos < self.text.len() && self.text[self.pos].is_ascii_digit() {
                        self.pos += 1;
                    }
                    if start == self.pos {
                        return Err(self.err("expected ground index after '_'"));
                    }
                    idx = std::str::from_utf8(&self.text[start..self.pos])
                        .unwrap()
                        .parse()
                        .map_err(|_| self.err("ground index out of range"))?;
                }
                Ok(LinearType::Ground(idx))
            }
            Some(b'[') => {
                let src = self.multi()?;
                self.skip_ws();
                if self.text[self.pos..].starts_with(b"-o") {
                    self.pos += 2;
                } else {
                    return Err(self.err("expected '-o'"));
                }
                let tgt = self.multi()?;
                Ok(LinearType::Arrow(src, tgt))
            }
            _ => Err(self.err("expected 'X' or '['")),
        }
    }
}

pub fn parse_multi_type(text: &str) -> Result<MultiType, TypeParseError> {
    let mut p = TyParser {
        text: text.as_bytes(),
        pos: 0,
    };
    let m = p.multi()?;
    if p.peek().is_some() {
        return Err(p.err("trailing input after type"));
    }
    Ok(m)
}

pub fn parse_linear_type(text: &str) -> Result<LinearType, TypeParseError> {
    let mut p = TyParser {
        text: text.as_bytes(),
        pos: 0,
    };
    let a = p.linear()?;
    if p.peek().is_some() {
        return Err(p.err("trailing input after type"));
    }
    Ok(a)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mt(s: &str) -> MultiType {
        parse_multi_type(s).unwrap()
    }

    fn lt(s: &str) -> LinearType {
        parse_linear_type(s).unwrap()
    }

    #[test]
    fn sums() {
        assert_eq!(mt("[X]").sum(&mt("[X]")), mt("[X, X]"));
        assert_eq!(mt("[X]").sum(&MultiType::empty()), mt("[X]"));
        let a = TypeContext::singleton("x", mt("[X]"));
        let b = TypeContext::singleton("x", mt("[[X] -o [X]]"));
        assert_eq!(a.sum(&b).get("x"), mt("[X, [X] -o [X]]"));
    }

    #[test]
    fn sizes() {
        assert_eq!(lt("[X] -o [X]").size(), 1);
        // [[X2] -o [X2], X2] -o [X2] with X2 := [X] -o [X]
        let big = lt("[[[X] -o [X]] -o [[X] -o [X]], [X] -o [X]] -o [[X] -o [X]]");
        assert_eq!(big.size(), 6);
        assert_eq!(MultiType::empty().size(), 0);
        assert_eq!(lt("[[X, X] -o [X], X] -o [X]").size(), 2);
    }

    #[test]
    fn size_zero_iff_ground() {
        for m in [mt("[]"), mt("[X]"), mt("[X, X, X]")] {
            assert_eq!(m.size(), 0);
            assert!(classify_multi(&m).ground);
        }
        assert_ne!(mt("[[] -o []]").size(), 0);
        assert!(!classify_multi(&mt("[[] -o []]")).ground);
    }

    #[test]
    fn classifier_cases() {
        let zero = classify_multi(&MultiType::empty());
        assert!(zero.unitary_left && zero.left && zero.ground && zero.inert);
        assert!(!zero.right);

        let xx = classify_multi(&mt("[X, X]"));
        assert!(xx.left && xx.right && !xx.unitary_right && xx.unitary_left);

        let r = classify_multi(&mt("[[] -o [X]]"));
        assert!(r.unitary_right && !r.left);

        // [X] is both unitary left and unitary right.
        let x = classify_multi(&mt("[X]"));
        assert!(x.unitary_left && x.unitary_right);
    }

    #[test]
    fn inert_grammar() {
        // X and n[X] -o M^i are inert.
        assert!(classify_linear(&lt("[X, X] -o [X]")).inert);
        assert!(classify_linear(&lt("[X] -o [[X, X] -o []]")).inert);
        assert!(!classify_linear(&lt("[[X] -o [X]] -o [X]")).inert);
    }

    #[test]
    fn substitutions() {
        let x2 = lt("[X] -o [X]");
        let mut s = GroundSubst::identity();
        s.bind(0, x2.clone());
        assert_eq!(
            s.apply_linear(&lt("[X] -o [X]")),
            lt("[[X] -o [X]] -o [[X] -o [X]]")
        );
        assert_eq!(GroundSubst::identity().apply_linear(&x2), x2);

        let s = GroundSubst::from_pairs([(1, lt("X")), (2, lt("X"))]);
        assert_eq!(
            s.apply_linear(&lt("[[X_1] -o [X_2], X_1] -o [X_2]")),
            lt("[[X] -o [X], X] -o [X]")
        );
    }

    #[test]
    fn subst_preserves_cardinality_and_distributes() {
        let s = GroundSubst::from_pairs([(0, lt("[X_1] -o [X_1]"))]);
        let m = mt("[X, X]");
        let n = mt("[X, [X] -o [X]]");
        assert_eq!(s.apply_multi(&m).card(), m.card());
        assert_eq!(
            s.apply_multi(&m.sum(&n)),
            s.apply_multi(&m).sum(&s.apply_multi(&n))
        );
    }

    #[test]
    fn fresh_ground_choices() {
        let avoid: BTreeSet<u32> = [0].into_iter().collect();
        assert_eq!(
            fresh_grounds(&avoid, 2),
            vec![LinearType::Ground(1), LinearType::Ground(2)]
        );
        assert_eq!(
            fresh_grounds(&BTreeSet::new(), 1),
            vec![LinearType::Ground(0)]
        );
        let avoid: BTreeSet<u32> = [0, 1, 2].into_iter().collect();
        assert_eq!(fresh_grounds(&avoid, 1), vec![LinearType::Ground(3)]);
    }

    #[test]
    fn printing_roundtrip() {
        for s in ["[]", "[X]", "[X, X_3]", "[[X] -o [X, X]]", "[[] -o [X], X]"] {
            let m = mt(s);
            assert_eq!(parse_multi_type(&m.to_string()).unwrap(), m);
        }
    }
}
