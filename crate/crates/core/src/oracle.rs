//! Independent brute-force machinery: exhaustive term enumeration, bounded
//! reduction-graph exploration, the diamond / commutation / random-descent
//! validators, and seeded random term generation.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::rewriting::{redexes, step_at, Path, StepKind, Strategy};
use crate::syntax::Term;

// ---------------------------------------------------------------------------
// Exhaustive enumeration
// ---------------------------------------------------------------------------

// Nameless skeletons used while enumerating alpha classes. `Es(body, arg)`
// binds index 0 in `body`.
#[derive(Clone, Debug)]
enum Db {
    Bound(usize),
    Free(usize),
    Abs(Box<Db>),
    App(Box<Db>, Box<Db>),
    Es(Box<Db>, Box<Db>),
}

fn db_to_term(db: &Db, depth: usize) -> Term {
    match db {
        Db::Bound(i) => Term::var(format!("v{}", depth - 1 - i)),
        Db::Free(j) => Term::var(format!("x{j}")),
        Db::Abs(b) => Term::abs(format!("v{depth}"), db_to_term(b, depth + 1)),
        Db::App(l, r) => Term::app(db_to_term(l, depth), db_to_term(r, depth)),
        Db::Es(b, a) => Term::es(
            db_to_term(b, depth + 1),
            format!("v{depth}"),
            db_to_term(a, depth),
        ),
    }
}

/// Indexed enumeration of all terms up to alpha with at most `max_size`
/// application, abstraction and substitution nodes, over `var_pool` free
/// variable names (none when `closed_only`). Terms are addressed by a dense
/// index so corpora can be traversed in parallel without materializing them.
pub struct TermEnumerator {
    max_size: usize,
    pool: usize,
    closed: bool,
    // counts[(size, depth)]
    counts: HashMap<(usize, usize), u64>,
    // cumulative[s] = number of terms of size < s (at depth 0)
    cumulative: Vec<u64>,
}

impl TermEnumerator {
    pub fn new(max_size: usize, var_pool: usize, closed_only: bool) -> TermEnumerator {
        let mut e = TermEnumerator {
            max_size,
            pool: var_pool,
            closed: closed_only,
            counts: HashMap::new(),
            cumulative: Vec::new(),
        };
        let mut acc = 0u64;
        e.cumulative.push(0);
        for s in 0..=max_size {
            acc += e.count(s, 0);
            e.cumulative.push(acc);
        }
        e
    }

    fn count(&mut self, size: usize, depth: usize) -> u64 {
        if let Some(&c) = self.counts.get(&(size, depth)) {
            return c;
        }
        let c = if size == 0 {
            depth as u64 + if self.closed { 0 } else { self.pool as u64 }
        } else {
            let mut c = self.count(size - 1, depth + 1); // Abs
            for i in 0..size {
                let l = self.count(i, depth);
                let r = self.count(size - 1 - i, depth);
                c += l * r; // App
                let b = self.count(i, depth + 1);
                let a = self.count(size - 1 - i, depth);
                c += b * a; // Es
            }
            c
        };
        self.counts.insert((size, depth), c);
        c
    }

    /// Total number of terms of size at most `max_size`.
    pub fn total(&self) -> u64 {
        *self.cumulative.last().unwrap()
    }

    /// The `idx`-th term (0-based), ordered by size and then structurally.
    pub fn get(&self, idx: u64) -> Term {
        assert!(idx < self.total(), "term index out of range");
        let size = self
            .cumulative
            .windows(2)
            .position(|w| idx < w[1])
            .unwrap();
        let db = self.unrank(size, 0, idx - self.cumulative[size]);
        db_to_term(&db, 0)
    }

    fn cnt(&self, size: usize, depth: usize) -> u64 {
        *self.counts.get(&(size, depth)).unwrap_or(&0)
    }

    fn unrank(&self, size: usize, depth: usize, mut idx: u64) -> Db {
        if size == 0 {
            let d = depth as u64;
            if idx < d {
                // Innermost binder first.
                return Db::Bound(idx as usize);
            }
            idx -= d;
            return Db::Free(idx as usize);
        }
        let abs = self.cnt(size - 1, depth + 1);
        if idx < abs {
            return Db::Abs(Box::new(self.unrank(size - 1, depth + 1, idx)));
        }
        idx -= abs;
        for i in 0..size {
            let l = self.cnt(i, depth);
            let r = self.cnt(size - 1 - i, depth);
            if idx < l * r {
                return Db::App(
                    Box::new(self.unrank(i, depth, idx / r)),
                    Box::new(self.unrank(size - 1 - i, depth, idx % r)),
                );
            }
            idx -= l * r;
            let b = self.cnt(i, depth + 1);
            let a = self.cnt(size - 1 - i, depth);
            if idx < b * a {
                return Db::Es(
                    Box::new(self.unrank(i, depth + 1, idx / a)),
                    Box::new(self.unrank(size - 1 - i, depth, idx % a)),
                );
            }
            idx -= b * a;
        }
        unreachable!("index exhausted the size blocks")
    }

    pub fn iter(&self) -> impl Iterator<Item = Term> + '_ {
        (0..self.total()).map(move |i| self.get(i))
    }
}

/// Materializes the enumeration; intended for small sizes.
pub fn enumerate_terms(max_size: usize, var_pool: usize, closed_only: bool) -> Vec<Term> {
    TermEnumerator::new(max_size, var_pool, closed_only)
        .iter()
        .collect()
}

// ---------------------------------------------------------------------------
// Random terms
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug)]
pub struct RandomTermParams {
    pub max_depth: usize,
    pub var_pool: usize,
    pub closed: bool,
}

/// Deterministic seeded random term respecting the parameters.
pub fn random_term(seed: u64, params: &RandomTermParams) -> Term {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    gen_random(&mut rng, params, params.max_depth, &mut Vec::new(), 0)
}

fn gen_random(
    rng: &mut ChaCha8Rng,
    params: &RandomTermParams,
    depth: usize,
    scope: &mut Vec<String>,
    next_binder: usize,
) -> Term {
    let pick_var = |rng: &mut ChaCha8Rng, scope: &Vec<String>| -> Option<Term> {
        let free = if params.closed { 0 } else { params.var_pool };
        let n = scope.len() + free;
        if n == 0 {
            return None;
        }
        let i = rng.gen_range(0..n);
        Some(if i < scope.len() {
            Term::var(scope[i].clone())
        } else {
            Term::var(format!("x{}", i - scope.len()))
        })
    };
    if depth <= 1 {
        if let Some(v) = pick_var(rng, scope) {
            return v;
        }
        let name = format!("v{next_binder}");
        return Term::abs(name.clone(), Term::var(name));
    }
    let choice = rng.gen_range(0..4);
    match choice {
        0 => match pick_var(rng, scope) {
            Some(v) => v,
            None => gen_random(rng, params, depth, scope, next_binder),
        },
        1 => {
            let name = format!("v{next_binder}");
            scope.push(name.clone());
            let body = gen_random(rng, params, depth - 1, scope, next_binder + 1);
            scope.pop();
            Term::abs(name, body)
        }
        2 => {
            let l = gen_random(rng, params, depth - 1, scope, next_binder);
            let r = gen_random(rng, params, depth - 1, scope, next_binder);
            Term::app(l, r)
        }
        _ => {
            let name = format!("v{next_binder}");
            let arg = gen_random(rng, params, depth - 1, scope, next_binder + 1);
            scope.push(name.clone());
            let body = gen_random(rng, params, depth - 1, scope, next_binder + 1);
            scope.pop();
            Term::es(body, name, arg)
        }
    }
}

// ---------------------------------------------------------------------------
// Reduction graphs
// ---------------------------------------------------------------------------

/// Finite approximation of the reduction relation from a root term. Nodes are
/// alpha classes keyed by canonical form; `truncated` is set iff the node cap
/// was hit.
#[derive(Clone, Debug)]
pub struct ReductionGraph {
    pub terms: Vec<Term>,
    pub edges: Vec<Vec<(Path, StepKind, usize)>>,
    pub truncated: bool,
}

pub fn reduction_graph(t: &Term, strategy: Strategy, node_cap: usize) -> ReductionGraph {
    let mut terms = Vec::new();
    let mut edges: Vec<Vec<(Path, StepKind, usize)>> = Vec::new();
    let mut index: BTreeMap<String, usize> = BTreeMap::new();
    let mut truncated = false;

    let intern =
        |t: &Term, terms: &mut Vec<Term>, index: &mut BTreeMap<String, usize>| -> usize {
            let key = t.alpha_key();
            if let Some(&i) = index.get(&key) {
                return i;
            }
            let i = terms.len();
            terms.push(t.clone());
            index.insert(key, i);
            i
        };

    intern(t, &mut terms, &mut index);
    let mut next = 0usize;
    while next < terms.len() {
        let cur = terms[next].clone();
        let mut out = Vec::new();
        for (path, kind) in redexes(&cur, strategy, false) {
            let dst = step_at(&cur, &path, kind).expect("enumerated redex must fire");
            if terms.len() >= node_cap && !index.contains_key(&dst.alpha_key()) {
                truncated = true;
                continue;
            }
            let j = intern(&dst, &mut terms, &mut index);
            out.push((path, kind, j));
        }
        edges.push(out);
        next += 1;
    }
    ReductionGraph {
        terms,
        edges,
        truncated,
    }
}

impl ReductionGraph {
    pub fn node_count(&self) -> usize {
        self.terms.len()
    }

    /// One edge per line: `<term> --<kind>@<path>--> <term>`.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (i, es) in self.edges.iter().enumerate() {
            for (p, k, j) in es {
                out.push_str(&format!(
                    "{} --{}@{}--> {}\n",
                    self.terms[i], k, p, self.terms[*j]
                ));
            }
        }
        out
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct TruncatedGraph;

impl fmt::Display for TruncatedGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "graph hit the node cap; property checks refuse partial graphs")
    }
}

impl std::error::Error for TruncatedGraph {}

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum Verdict {
    Ok,
    Violation(String),
}

impl Verdict {
    pub fn is_ok(&self) -> bool {
        matches!(self, Verdict::Ok)
    }
}

/// Diamond: any two distinct one-step reducts of a node have a common
/// one-step reduct.
pub fn check_diamond(g: &ReductionGraph) -> Result<Verdict, TruncatedGraph> {
    if g.truncated {
        return Err(TruncatedGraph);
    }
    let succ: Vec<BTreeSet<usize>> = g
        .edges
        .iter()
        .map(|es| es.iter().map(|(_, _, j)| *j).collect())
        .collect();
    for (i, s) in succ.iter().enumerate() {
        let nodes: Vec<usize> = s.iter().copied().collect();
        for (a_i, &a) in nodes.iter().enumerate() {
            for &b in &nodes[a_i + 1..] {
                if succ[a].intersection(&succ[b]).next().is_none() {
                    return Ok(Verdict::Violation(format!(
                        "peak at {} with reducts {} and {} has no one-step join",
                        g.terms[i], g.terms[a], g.terms[b]
                    )));
                }
            }
        }
    }
    Ok(Verdict::Ok)
}

/// Strong commutation of the two kinds: a peak `u1 <-k1- t -k2-> u2` closes
/// as `u1 -k2-> s <-k1- u2`.
pub fn check_commutation(
    g: &ReductionGraph,
    k1: StepKind,
    k2: StepKind,
) -> Result<Verdict, TruncatedGraph> {
    if g.truncated {
        return Err(TruncatedGraph);
    }
    let by_kind = |i: usize, k: StepKind| -> BTreeSet<usize> {
        g.edges[i].iter().filter(|e| e.1 == k).map(|e| e.2).collect()
    };
    for i in 0..g.node_count() {
        let s1 = by_kind(i, k1);
        if s1.is_empty() {
            continue;
        }
        let s2 = by_kind(i, k2);
        for &a in &s1 {
            let fa = by_kind(a, k2);
            for &b in &s2 {
                if a == b {
                    continue;
                }
                let fb = by_kind(b, k1);
                if fa.intersection(&fb).next().is_none() {
                    return Ok(Verdict::Violation(format!(
                        "peak at {} does not strongly commute ({} / {})",
                        g.terms[i], g.terms[a], g.terms[b]
                    )));
                }
            }
        }
    }
    Ok(Verdict::Ok)
}

/// Outcome of the random-descent check: either no normal form is reachable,
/// or every maximal path has the same per-kind counts, reported for the root.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum Descent {
    NoNormalForm,
    Unique { m: usize, e: usize },
    Violation(String),
}

pub fn check_random_descent(g: &ReductionGraph) -> Result<Descent, TruncatedGraph> {
    if g.truncated {
        return Err(TruncatedGraph);
    }
    let n = g.node_count();
    // Nodes from which a normal form is reachable: reverse BFS from the
    // normal forms.
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, es) in g.edges.iter().enumerate() {
        for (_, _, j) in es {
            preds[*j].push(i);
        }
    }
    let mut reaches_nf = vec![false; n];
    let mut work: Vec<usize> = (0..n).filter(|&i| g.edges[i].is_empty()).collect();
    for &i in &work {
        reaches_nf[i] = true;
    }
    while let Some(i) = work.pop() {
        for &p in &preds[i] {
            if !reaches_nf[p] {
                reaches_nf[p] = true;
                work.push(p);
            }
        }
    }
    if !reaches_nf[0] {
        return Ok(Descent::NoNormalForm);
    }
    // Within the subgraph that reaches a normal form, a cycle would pump
    // normalizing sequences of unbounded length.
    let mut state = vec![0u8; n]; // 0 unvisited, 1 on stack, 2 done
    let mut stack = vec![(0usize, 0usize)];
    state[0] = 1;
    while let Some(&mut (i, ref mut ei)) = stack.last_mut() {
        if *ei >= g.edges[i].len() {
            state[i] = 2;
            stack.pop();
            continue;
        }
        let j = g.edges[i][*ei].2;
        *ei += 1;
        if !reaches_nf[j] {
            continue;
        }
        if state[j] == 1 {
            return Ok(Descent::Violation(format!(
                "cycle through {} can pump normalizing sequences",
                g.terms[j]
            )));
        }
        if state[j] == 0 {
            state[j] = 1;
            stack.push((j, 0));
        }
    }
    // The relevant subgraph is acyclic: fold count sets bottom-up.
    let mut memo: Vec<Option<BTreeSet<(usize, usize)>>> = vec![None; n];
    fn counts(
        i: usize,
        g: &ReductionGraph,
        reaches_nf: &[bool],
        memo: &mut Vec<Option<BTreeSet<(usize, usize)>>>,
    ) -> BTreeSet<(usize, usize)> {
        if let Some(c) = &memo[i] {
            return c.clone();
        }
        let mut out = BTreeSet::new();
        if g.edges[i].is_empty() {
            out.insert((0, 0));
        }
        for (_, kind, j) in &g.edges[i] {
            if !reaches_nf[*j] {
                continue;
            }
            for (m, e) in counts(*j, g, reaches_nf, memo) {
                let (dm, de) = match kind {
                    StepKind::Mult => (1, 0),
                    StepKind::Expo => (0, 1),
                    StepKind::EVar => (0, 0),
                };
                out.insert((m + dm, e + de));
            }
        }
        memo[i] = Some(out.clone());
        out
    }
    for i in 0..n {
        if !reaches_nf[i] {
            continue;
        }
        let cs = counts(i, g, &reaches_nf, &mut memo);
        if cs.len() > 1 {
            return Ok(Descent::Violation(format!(
                "{} admits normalizing sequences with distinct counts {:?}",
                g.terms[i], cs
            )));
        }
    }
    let (m, e) = *memo[0].as_ref().unwrap().iter().next().unwrap();
    Ok(Descent::Unique { m, e })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::parse_term;

    fn p(s: &str) -> Term {
        parse_term(s).unwrap()
    }

    #[test]
    fn enumeration_smallest_sizes() {
        // No closed term has size zero.
        assert_eq!(enumerate_terms(0, 1, true).len(), 0);
        // Exactly the identity at size one.
        let ts = enumerate_terms(1, 0, true);
        assert_eq!(ts.len(), 1);
        assert!(ts[0].alpha_eq(&p("\\x. x")));
    }

    #[test]
    fn enumeration_matches_hand_list_at_size_two() {
        let ts = enumerate_terms(2, 0, true);
        let expected = [
            "\\x. x",
            "\\x. \\y. y",
            "\\x. \\y. x",
            "\\x. x x",
            "\\x. y[y <- x]",
            "\\x. x[y <- x]",
            "y[y <- \\z. z]",
        ];
        assert_eq!(ts.len(), expected.len());
        for e in expected {
            let e = p(e);
            assert!(
                ts.iter().any(|t| t.alpha_eq(&e)),
                "missing from enumeration: {e}"
            );
        }
    }

    #[test]
    fn enumeration_has_no_alpha_duplicates() {
        let ts = enumerate_terms(4, 1, false);
        let keys: BTreeSet<String> = ts.iter().map(|t| t.alpha_key()).collect();
        assert_eq!(keys.len(), ts.len());
    }

    #[test]
    fn enumeration_closed_terms_are_closed() {
        for t in enumerate_terms(3, 2, true) {
            assert!(t.free_vars().is_empty(), "open term enumerated: {t}");
        }
    }

    #[test]
    fn random_term_contract() {
        let params = RandomTermParams {
            max_depth: 5,
            var_pool: 2,
            closed: false,
        };
        assert_eq!(random_term(42, &params), random_term(42, &params));
        let closed = RandomTermParams {
            max_depth: 5,
            var_pool: 2,
            closed: true,
        };
        for seed in 0..50 {
            assert!(random_term(seed, &closed).free_vars().is_empty());
        }
        let tiny = RandomTermParams {
            max_depth: 1,
            var_pool: 0,
            closed: true,
        };
        assert!(random_term(7, &tiny).alpha_eq(&p("\\v. v")));
    }

    #[test]
    fn graph_of_a_normal_form() {
        let g = reduction_graph(&p("\\y. y"), Strategy::External, 100);
        assert_eq!(g.node_count(), 1);
        assert!(g.edges[0].is_empty());
        assert_eq!(check_diamond(&g).unwrap(), Verdict::Ok);
        assert_eq!(
            check_random_descent(&g).unwrap(),
            Descent::Unique { m: 0, e: 0 }
        );
    }

    #[test]
    fn full_reduction_is_not_diamond() {
        // (x x)[x <- \y. (\z. z)(\z. z)]
        let t = p("(x x)[x <- \\y. (\\z. z)(\\z. z)]");
        let g = reduction_graph(&t, Strategy::Full, 10_000);
        assert!(!g.truncated);
        assert!(matches!(check_diamond(&g).unwrap(), Verdict::Violation(_)));
    }

    #[test]
    fn external_examples_are_diamond() {
        for s in [
            "(\\x. x x)(\\y. y)",
            "((\\z. z)(\\z. z))((\\z. z)(\\z. z))",
            "(x (\\y. (\\z. z)(\\z. z)))[x <- x ((\\z. z)(\\z. z))]",
        ] {
            let g = reduction_graph(&p(s), Strategy::External, 10_000);
            assert!(!g.truncated);
            assert_eq!(check_diamond(&g).unwrap(), Verdict::Ok, "diamond on {s}");
            assert_eq!(
                check_commutation(&g, StepKind::Mult, StepKind::Expo).unwrap(),
                Verdict::Ok,
                "commutation on {s}"
            );
            assert!(
                matches!(check_random_descent(&g).unwrap(), Descent::Unique { .. }),
                "descent on {s}"
            );
        }
        let g = reduction_graph(&p("(\\x. x x)(\\y. y)"), Strategy::External, 10_000);
        assert_eq!(
            check_random_descent(&g).unwrap(),
            Descent::Unique { m: 2, e: 2 }
        );
    }

    #[test]
    fn truncated_graphs_are_rejected() {
        // A growing divergent term overflows any small cap.
        let t = p("(\\x. x x)(\\x. x x x)");
        let g = reduction_graph(&t, Strategy::External, 5);
        assert!(g.truncated);
        assert!(check_diamond(&g).is_err());
    }

    #[test]
    fn graph_dump_format() {
        let g = reduction_graph(&p("(\\x. x)(\\y. y)"), Strategy::External, 100);
        let dump = g.render();
        assert!(dump.contains("--m@root-->"));
    }
}
