//! Quantitative bounds machinery: bounded interpretation sampling, composable
//! pairs, the types-bound check, size representation, size dissection over
//! the infinite-grounds system, and the combined bound report.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::derivations::{
    apply_subst_derivation, check_derivation, classify_final_judgment, d_app, d_es, d_lam, d_many,
    d_var, skeleton_eq, Derivation, JType, RuleKind, ValidityError,
};
use crate::inference::{derive, type_normal_form, Mode};
use crate::multitypes::{
    classify_multi, fresh_grounds, GroundSubst, LinearType, MultiType,
};
use crate::rewriting::TraceStatus;
use crate::syntax::{classify, SizeKind, Term};

// ---------------------------------------------------------------------------
// Budgets
// ---------------------------------------------------------------------------

/// Enumeration budget. `max_general` bounds the general size of enumerated
/// derivations and `max_type_size` the size of every judgment type; the
/// remaining knobs keep the search finite: multiset cardinalities are capped,
/// axiom types come from a seed universe of bounded size, and at most
/// `derivation_cap` derivations are kept per subterm.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Budget {
    pub max_general: usize,
    pub max_type_size: usize,
    pub card_cap: usize,
    pub seed_size: usize,
    pub derivation_cap: usize,
}

impl Default for Budget {
    fn default() -> Budget {
        Budget {
            max_general: 8,
            max_type_size: 6,
            card_cap: 2,
            seed_size: 3,
            derivation_cap: 50_000,
        }
    }
}

impl Budget {
    pub fn new(max_general: usize, max_type_size: usize) -> Budget {
        Budget {
            max_general,
            max_type_size,
            ..Budget::default()
        }
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum BoundsError {
    NotClosed(Term),
    NotNormal(Term),
    NotAStrongFireball(Term),
    Invalid(ValidityError),
    Shape(String),
}

impl fmt::Display for BoundsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BoundsError::NotClosed(t) => write!(f, "term must be closed: {t}"),
            BoundsError::NotNormal(t) => write!(f, "term must be normal: {t}"),
            BoundsError::NotAStrongFireball(t) => {
                write!(f, "subject must be a strong fireball: {t}")
            }
            BoundsError::Invalid(e) => write!(f, "{e}"),
            BoundsError::Shape(m) => write!(f, "unexpected derivation shape: {m}"),
        }
    }
}

impl std::error::Error for BoundsError {}

impl From<ValidityError> for BoundsError {
    fn from(e: ValidityError) -> Self {
        BoundsError::Invalid(e)
    }
}

// ---------------------------------------------------------------------------
// Derivation enumeration
// ---------------------------------------------------------------------------

/// Linear types over the single ground `X` with size at most `max_size` and
/// multiset cardinalities at most `card_cap`, in size order.
fn seed_types(max_size: usize, card_cap: usize) -> Vec<LinearType> {
    let mut linears: Vec<Vec<LinearType>> = vec![vec![LinearType::Ground(0)]];
    let mut multis: Vec<Vec<MultiType>> = Vec::new();
    let multis_of = |linears: &[Vec<LinearType>], size: usize, card_cap: usize| {
        // multisets of total size `size` with elements drawn from the levels
        let mut out = Vec::new();
        if size == 0 {
            out.push(MultiType::empty());
        }
        let flat: Vec<&LinearType> = linears.iter().flatten().collect();
        if card_cap >= 1 {
            for a in &flat {
                if a.size() == size {
                    out.push(MultiType::singleton((*a).clone()));
                }
            }
        }
        if card_cap >= 2 {
            for (i, a) in flat.iter().enumerate() {
                for b in flat.iter().skip(i) {
                    if a.size() + b.size() == size {
                        out.push(MultiType::from_elems(vec![(*a).clone(), (*b).clone()]));
                    }
                }
            }
        }
        out.sort();
        out.dedup();
        out
    };
    for s in 0..=max_size {
        multis.push(multis_of(&linears, s, card_cap));
        if s + 1 > max_size {
            break;
        }
        // arrows of size s+1 combine multis with total size s
        let mut level = Vec::new();
        for ls in 0..=s {
            for m in &multis[ls] {
                for n in &multis[s - ls] {
                    level.push(LinearType::Arrow(m.clone(), n.clone()));
                }
            }
        }
        level.sort();
        level.dedup();
        linears.push(level);
    }
    linears.into_iter().flatten().collect()
}

/// Index combinations `i1 <= ... <= ik` for k in `0..=card_cap`, ordered by
/// (k, index sum, lexicographic), truncated at `cap` emissions.
fn index_combos(len: usize, card_cap: usize, cap: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for k in 1..=card_cap {
        if out.len() >= cap {
            break;
        }
        let max_sum = k * len.saturating_sub(1);
        'sums: for sum in 0..=max_sum {
            // k ascending indices with the given sum
            fn gen(
                k: usize,
                sum: usize,
                min: usize,
                len: usize,
                acc: &mut Vec<usize>,
                out: &mut Vec<Vec<usize>>,
                cap: usize,
            ) -> bool {
                if out.len() >= cap {
                    return false;
                }
                if k == 0 {
                    if sum == 0 {
                        out.push(acc.clone());
                    }
                    return true;
                }
                for i in min..len {
                    if i > sum {
                        break;
                    }
                    // remaining k-1 indices are all >= i
                    if sum - i > (k - 1) * len.saturating_sub(1) {
                        continue;
                    }
                    acc.push(i);
                    let keep = gen(k - 1, sum - i, i, len, acc, out, cap);
                    acc.pop();
                    if !keep {
                        return false;
                    }
                }
                true
            }
            if !gen(k, sum, 0, len, &mut Vec::new(), &mut out, cap) {
                break 'sums;
            }
        }
    }
    out
}

fn judgment_fits(d: &Derivation, budget: &Budget) -> bool {
    d.conclusion.ty.size() <= budget.max_type_size
        && d.conclusion.ctx.size() <= budget.max_type_size
}

/// All valid derivations for `t` within the budget, over the single ground
/// type, in a deterministic generation order.
fn enum_derivations(t: &Term, budget: &Budget, seed: &[LinearType]) -> Vec<Derivation> {
    let cap = budget.derivation_cap;
    match t {
        Term::Var(x) => {
            let usable: Vec<&LinearType> = seed
                .iter()
                .filter(|a| a.size() <= budget.max_type_size)
                .collect();
            let mut out = Vec::new();
            for combo in index_combos(usable.len(), budget.card_cap.min(budget.max_general), cap)
            {
                if combo.len() > budget.max_general {
                    continue;
                }
                let m = MultiType::from_elems(
                    combo.iter().map(|&i| usable[i].clone()).collect(),
                );
                if m.size() > budget.max_type_size {
                    continue;
                }
                let d = d_var(x.clone(), &m);
                if judgment_fits(&d, budget) {
                    out.push(d);
                }
                if out.len() >= cap {
                    break;
                }
            }
            out
        }
        Term::Abs(x, b) => {
            if budget.max_general == 0 {
                return vec![d_many(t.clone(), Vec::new())];
            }
            let inner_budget = Budget {
                max_general: budget.max_general - 1,
                ..*budget
            };
            let inner = enum_derivations(b, &inner_budget, seed);
            // lambda options, each costing one rule plus its premise
            let mut options = Vec::new();
            for d in inner {
                let lam = d_lam(x, d);
                let arrow = lam.conclusion.ty.as_linear().unwrap();
                if arrow.size() > budget.max_type_size {
                    continue;
                }
                if lam.conclusion.ctx.size() > budget.max_type_size {
                    continue;
                }
                options.push(lam);
            }
            options.sort_by_key(|l| (l.sizes_unchecked().general, l.conclusion.ty.size()));
            let mut out = Vec::new();
            for combo in index_combos(options.len(), budget.card_cap, cap) {
                let total: usize = combo
                    .iter()
                    .map(|&i| options[i].sizes_unchecked().general)
                    .sum();
                if total > budget.max_general {
                    continue;
                }
                let premises: Vec<Derivation> =
                    combo.iter().map(|&i| options[i].clone()).collect();
                let d = d_many(t.clone(), premises);
                if judgment_fits(&d, budget) {
                    out.push(d);
                }
                if out.len() >= cap {
                    break;
                }
            }
            out
        }
        Term::App(l, r) => {
            if budget.max_general == 0 {
                return Vec::new();
            }
            let inner_budget = Budget {
                max_general: budget.max_general - 1,
                ..*budget
            };
            let lefts = enum_derivations(l, &inner_budget, seed);
            let rights = enum_derivations(r, &inner_budget, seed);
            let mut by_type: BTreeMap<MultiType, Vec<&Derivation>> = BTreeMap::new();
            for d in &rights {
                by_type
                    .entry(d.conclusion.ty.as_multi().unwrap().clone())
                    .or_default()
                    .push(d);
            }
            let mut out = Vec::new();
            'outer: for lf in &lefts {
                let Some((src, _)) = lf
                    .conclusion
                    .ty
                    .as_multi()
                    .and_then(MultiType::as_singleton_arrow)
                else {
                    continue;
                };
                let Some(matches) = by_type.get(src) else {
                    continue;
                };
                for rg in matches {
                    let gl = lf.sizes_unchecked().general;
                    let gr = rg.sizes_unchecked().general;
                    if gl + gr + 1 > budget.max_general {
                        continue;
                    }
                    let d = d_app(lf.clone(), (*rg).clone());
                    if judgment_fits(&d, budget) {
                        out.push(d);
                    }
                    if out.len() >= cap {
                        break 'outer;
                    }
                }
            }
            out
        }
        Term::Es(b, x, a) => {
            if budget.max_general == 0 {
                return Vec::new();
            }
            let inner_budget = Budget {
                max_general: budget.max_general - 1,
                ..*budget
            };
            let bodies = enum_derivations(b, &inner_budget, seed);
            let args = enum_derivations(a, &inner_budget, seed);
            let mut by_type: BTreeMap<MultiType, Vec<&Derivation>> = BTreeMap::new();
            for d in &args {
                by_type
                    .entry(d.conclusion.ty.as_multi().unwrap().clone())
                    .or_default()
                    .push(d);
            }
            let mut out = Vec::new();
            'outer: for bd in &bodies {
                let need = bd.ctx().get(x);
                let Some(matches) = by_type.get(&need) else {
                    continue;
                };
                for ad in matches {
                    let gb = bd.sizes_unchecked().general;
                    let ga = ad.sizes_unchecked().general;
                    if gb + ga + 1 > budget.max_general {
                        continue;
                    }
                    let d = d_es(x, bd.clone(), (*ad).clone());
                    if judgment_fits(&d, budget) {
                        out.push(d);
                    }
                    if out.len() >= cap {
                        break 'outer;
                    }
                }
            }
            out
        }
    }
}

// ---------------------------------------------------------------------------
// Interpretation samples
// ---------------------------------------------------------------------------

/// A finite, budget-bounded fragment of the relational interpretation of a
/// term: the deduplicated final judgments of all enumerated derivations,
/// each witnessed by a stored derivation.
#[derive(Clone, Debug)]
pub struct SemSample {
    /// The suitable variable list (the term's free variables, sorted).
    pub vars: Vec<String>,
    pub budget: Budget,
    entries: BTreeMap<(Vec<MultiType>, MultiType), Derivation>,
}

impl SemSample {
    pub fn entries(&self) -> impl Iterator<Item = (&(Vec<MultiType>, MultiType), &Derivation)> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, ctx_types: &[MultiType], ty: &MultiType) -> bool {
        self.entries
            .contains_key(&(ctx_types.to_vec(), ty.clone()))
    }

    pub fn witness(&self, ctx_types: &[MultiType], ty: &MultiType) -> Option<&Derivation> {
        self.entries.get(&(ctx_types.to_vec(), ty.clone()))
    }

    /// Judgment types for a closed term (empty contexts only).
    pub fn closed_types(&self) -> impl Iterator<Item = &MultiType> {
        self.entries
            .iter()
            .filter(|((ctx, _), _)| ctx.iter().all(MultiType::is_empty))
            .map(|((_, ty), _)| ty)
    }
}

/// Enumerates all valid derivations for `t` within the budget over the single
/// ground type, deduplicating final judgments. With `shrinking_only` the
/// sample is filtered to left contexts and right types.
pub fn interpretation_sample(t: &Term, budget: &Budget, shrinking_only: bool) -> SemSample {
    let seed = seed_types(budget.seed_size.min(budget.max_type_size), budget.card_cap);
    let vars: Vec<String> = t.free_vars().into_iter().collect();
    let mut entries = BTreeMap::new();
    for (i, d) in enum_derivations(t, budget, &seed).into_iter().enumerate() {
        // Spot-check a prefix; the smart constructors keep the rest valid.
        debug_assert!(i > 64 || check_derivation(&d).is_ok());
        if shrinking_only {
            let ctx_left = vars
                .iter()
                .all(|x| classify_multi(&d.ctx().get(x)).left);
            let ty_right = classify_multi(d.conclusion.ty.as_multi().unwrap()).right;
            if !ctx_left || !ty_right {
                continue;
            }
        }
        let key: Vec<MultiType> = vars.iter().map(|x| d.ctx().get(x)).collect();
        let ty = d.conclusion.ty.as_multi().unwrap().clone();
        entries.entry((key, ty)).or_insert(d);
    }
    SemSample {
        vars,
        budget: *budget,
        entries,
    }
}

// ---------------------------------------------------------------------------
// Composable pairs
// ---------------------------------------------------------------------------

/// An arrow type of `t` together with a matching argument type of `u`, both
/// drawn from the sampled interpretations, with a right-shrinking target.
#[derive(Clone, Debug)]
pub struct ComposablePair {
    pub arrow: LinearType,
    pub argument: MultiType,
    pub left_witness: Derivation,
    pub right_witness: Derivation,
}

pub fn composable_pairs(
    t: &Term,
    u: &Term,
    budget: &Budget,
) -> Result<Vec<ComposablePair>, BoundsError> {
    for side in [t, u] {
        if !side.free_vars().is_empty() {
            return Err(BoundsError::NotClosed(side.clone()));
        }
        if !classify(side).is_strong_fireball {
            return Err(BoundsError::NotNormal(side.clone()));
        }
    }
    let st = interpretation_sample(t, budget, false);
    let su = interpretation_sample(u, budget, false);
    let mut out = Vec::new();
    for ((_, ty), left_witness) in st.entries() {
        let Some((src, tgt)) = ty.as_singleton_arrow() else {
            continue;
        };
        if !classify_multi(tgt).right {
            continue;
        }
        if let Some(right_witness) = su.witness(&[], src) {
            out.push(ComposablePair {
                arrow: ty.elems()[0].clone(),
                argument: src.clone(),
                left_witness: left_witness.clone(),
                right_witness: right_witness.clone(),
            });
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Types bound the sizes of derivations and normal forms
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct TypesBoundReport {
    pub mult: usize,
    /// |Γ̂| + |M| of the final judgment.
    pub types_total: usize,
    pub gap: usize,
    /// (strong size of the subject, types_total), present when the derivation
    /// is shrinking; the first component never exceeds the second.
    pub strong_size_bound: Option<(usize, usize)>,
}

/// Checks that the final judgment's type sizes bound the multiplicative size
/// of a derivation of a strong fireball (and, for shrinking derivations, the
/// subject's strong size).
pub fn check_types_bound(d: &Derivation) -> Result<TypesBoundReport, BoundsError> {
    check_derivation(d)?;
    if !classify(&d.conclusion.subject).is_strong_fireball {
        return Err(BoundsError::NotAStrongFireball(d.conclusion.subject.clone()));
    }
    let mult = d.sizes_unchecked().mult;
    let types_total = d.conclusion.ctx.size() + d.conclusion.ty.size();
    let gap = types_total.saturating_sub(mult);
    debug_assert!(mult <= types_total);
    let strong_size_bound = if classify_final_judgment(d).shrinking {
        Some((d.conclusion.subject.size(SizeKind::Strong), types_total))
    } else {
        None
    };
    Ok(TypesBoundReport {
        mult,
        types_total,
        gap,
        strong_size_bound,
    })
}

// ---------------------------------------------------------------------------
// Size representation
// ---------------------------------------------------------------------------

/// Retypes a derivation of a strong fireball into a skeleton-equivalent one
/// whose final judgment's type sizes equal the multiplicative size exactly.
pub fn size_representation(d: &Derivation) -> Result<Derivation, BoundsError> {
    check_derivation(d)?;
    if !classify(&d.conclusion.subject).is_strong_fireball {
        return Err(BoundsError::NotAStrongFireball(d.conclusion.subject.clone()));
    }
    let out = rep_fireball(d)?;
    debug_assert!(skeleton_eq(d, &out).unwrap_or(false));
    debug_assert_eq!(
        out.conclusion.ctx.size() + out.conclusion.ty.size(),
        d.sizes_unchecked().mult
    );
    Ok(out)
}

fn rep_fireball(d: &Derivation) -> Result<Derivation, BoundsError> {
    let t = &d.conclusion.subject;
    if classify(t).is_strong_inert {
        let card = d
            .conclusion
            .ty
            .as_multi()
            .ok_or_else(|| BoundsError::Shape("expected a multi judgment".into()))?
            .card();
        return rep_inert(d, &MultiType::ground(card));
    }
    match (d.rule, t) {
        (RuleKind::Many, Term::Abs(x, _)) => {
            let x = x.clone();
            let premises = d
                .premises
                .iter()
                .map(|lam| {
                    let inner = rep_fireball(&lam.premises[0])?;
                    Ok(d_lam(&x, inner))
                })
                .collect::<Result<Vec<_>, BoundsError>>()?;
            Ok(d_many(t.clone(), premises))
        }
        (RuleKind::Es, Term::Es(_, x, _)) => {
            let body = rep_fireball(&d.premises[0])?;
            let entry = body.ctx().get(x);
            let arg = rep_inert(&d.premises[1], &entry)?;
            Ok(d_es(x, body, arg))
        }
        _ => Err(BoundsError::Shape(format!(
            "unexpected node for a strong fireball: {t}"
        ))),
    }
}

fn rep_inert(d: &Derivation, target: &MultiType) -> Result<Derivation, BoundsError> {
    match (d.rule, &d.conclusion.subject) {
        (RuleKind::Many, Term::Var(x)) => Ok(d_var(x.clone(), target)),
        (RuleKind::App, _) => {
            let arg = rep_fireball(&d.premises[1])?;
            let o = arg.conclusion.ty.as_multi().unwrap().clone();
            let fun = rep_inert(
                &d.premises[0],
                &MultiType::singleton(LinearType::Arrow(o, target.clone())),
            )?;
            Ok(d_app(fun, arg))
        }
        (RuleKind::Es, Term::Es(_, x, _)) => {
            let body = rep_inert(&d.premises[0], target)?;
            let entry = body.ctx().get(x);
            let arg = rep_inert(&d.premises[1], &entry)?;
            Ok(d_es(x, body, arg))
        }
        _ => Err(BoundsError::Shape(format!(
            "unexpected node for a strong inert term: {}",
            d.conclusion.subject
        ))),
    }
}

// ---------------------------------------------------------------------------
// Size dissection
// ---------------------------------------------------------------------------

/// A skeleton-equal retyping over fresh ground types together with the
/// substitution mapping it back onto the original derivation.
#[derive(Clone, Debug)]
pub struct Dissection {
    pub derivation: Derivation,
    pub substitution: GroundSubst,
}

struct FreshAlloc {
    used: BTreeSet<u32>,
}

impl FreshAlloc {
    fn fresh(&mut self) -> u32 {
        let g = fresh_grounds(&self.used, 1)[0].clone();
        let LinearType::Ground(i) = g else { unreachable!() };
        self.used.insert(i);
        i
    }
}

/// Builds a size dissection of a derivation of a strong fireball: the output
/// derivation is skeleton-equal, uses only ground types outside `avoid` (and
/// outside the input's own), maps back onto the input under the returned
/// substitution, and its final judgment's type sizes equal the input's
/// multiplicative size.
pub fn size_dissection(d: &Derivation, avoid: &BTreeSet<u32>) -> Result<Dissection, BoundsError> {
    check_derivation(d)?;
    if !classify(&d.conclusion.subject).is_strong_fireball {
        return Err(BoundsError::NotAStrongFireball(d.conclusion.subject.clone()));
    }
    let base: BTreeSet<u32> = avoid.union(&d.ground_types()).copied().collect();
    let mut alloc = FreshAlloc { used: base.clone() };
    let (psi, sigma) = dis_fireball(d, &mut alloc)?;
    let (psi, sigma) = renumber_by_occurrence(psi, sigma, &base);
    debug_assert!(skeleton_eq(d, &psi).unwrap_or(false));
    debug_assert!(derivation_eq_mod_many(&apply_subst_derivation(&sigma, &psi), d));
    debug_assert!(psi.ground_types().is_disjoint(avoid));
    debug_assert!(psi.ground_types().is_disjoint(&d.ground_types()));
    debug_assert_eq!(
        psi.conclusion.ctx.size() + psi.conclusion.ty.size(),
        d.sizes_unchecked().mult
    );
    Ok(Dissection {
        derivation: psi,
        substitution: sigma,
    })
}

/// Relabels the freshly allocated ground types in order of first occurrence
/// in the final judgment (falling back to a preorder walk for any that only
/// occur in inner judgments). The fresh pool is unchanged; only the
/// assignment of indices to positions is normalized.
fn renumber_by_occurrence(
    psi: Derivation,
    sigma: GroundSubst,
    base: &BTreeSet<u32>,
) -> (Derivation, GroundSubst) {
    let allocated = sigma.domain();
    fn visit_linear(a: &LinearType, allocated: &BTreeSet<u32>, order: &mut Vec<u32>) {
        match a {
            LinearType::Ground(g) => {
                if allocated.contains(g) && !order.contains(g) {
                    order.push(*g);
                }
            }
            LinearType::Arrow(m, n) => {
                for e in m.elems().iter().chain(n.elems()) {
                    visit_linear(e, allocated, order);
                }
            }
        }
    }
    fn visit_judgment(d: &Derivation, allocated: &BTreeSet<u32>, order: &mut Vec<u32>) {
        for (_, m) in d.conclusion.ctx.entries() {
            for e in m.elems() {
                visit_linear(e, allocated, order);
            }
        }
        match &d.conclusion.ty {
            JType::Linear(a) => visit_linear(a, allocated, order),
            JType::Multi(m) => {
                for e in m.elems() {
                    visit_linear(e, allocated, order);
                }
            }
        }
    }
    let mut order = Vec::new();
    visit_judgment(&psi, &allocated, &mut order);
    let mut stack = vec![&psi];
    while let Some(d) = stack.pop() {
        visit_judgment(d, &allocated, &mut order);
        stack.extend(d.premises.iter());
    }
    let targets = fresh_grounds(base, order.len());
    let mut relabel = GroundSubst::identity();
    let mut sigma2 = GroundSubst::identity();
    for (old, target) in order.iter().zip(&targets) {
        relabel.bind(*old, target.clone());
        let LinearType::Ground(new_idx) = target else {
            unreachable!()
        };
        sigma2.bind(*new_idx, sigma.get(*old));
    }
    (apply_subst_derivation(&relabel, &psi), sigma2)
}

/// Structural equality with `many` premises compared as multisets.
pub fn derivation_eq_mod_many(a: &Derivation, b: &Derivation) -> bool {
    if a.rule != b.rule || a.conclusion != b.conclusion || a.premises.len() != b.premises.len() {
        return false;
    }
    match a.rule {
        RuleKind::Many => {
            fn matching(ps1: &[Derivation], ps2: &[Derivation], used: &mut Vec<bool>) -> bool {
                let Some(p1) = ps1.first() else {
                    return true;
                };
                for (j, p2) in ps2.iter().enumerate() {
                    if !used[j] && derivation_eq_mod_many(p1, p2) {
                        used[j] = true;
                        if matching(&ps1[1..], ps2, used) {
                            return true;
                        }
                        used[j] = false;
                    }
                }
                false
            }
            matching(&a.premises, &b.premises, &mut vec![false; b.premises.len()])
        }
        _ => a
            .premises
            .iter()
            .zip(&b.premises)
            .all(|(x, y)| derivation_eq_mod_many(x, y)),
    }
}

fn dis_fireball(
    d: &Derivation,
    alloc: &mut FreshAlloc,
) -> Result<(Derivation, GroundSubst), BoundsError> {
    let t = &d.conclusion.subject;
    if classify(t).is_strong_inert {
        let m = d
            .conclusion
            .ty
            .as_multi()
            .ok_or_else(|| BoundsError::Shape("expected a multi judgment".into()))?
            .clone();
        let mut tau = GroundSubst::identity();
        let mut fresh_elems = Vec::new();
        for a in m.elems() {
            let g = alloc.fresh();
            tau.bind(g, a.clone());
            fresh_elems.push(LinearType::Ground(g));
        }
        let target = MultiType::from_elems(fresh_elems);
        return dis_inert(d, &target, &tau, alloc);
    }
    match (d.rule, t) {
        (RuleKind::Many, Term::Abs(x, _)) => {
            let x = x.clone();
            let mut sigma = GroundSubst::identity();
            let mut premises = Vec::new();
            for lam in &d.premises {
                let (inner, s) = dis_fireball(&lam.premises[0], alloc)?;
                sigma = sigma.union(&s);
                premises.push(d_lam(&x, inner));
            }
            Ok((d_many(t.clone(), premises), sigma))
        }
        (RuleKind::Es, Term::Es(_, x, _)) => {
            let (body, s_body) = dis_fireball(&d.premises[0], alloc)?;
            let entry = body.ctx().get(x);
            let tau = s_body.restrict(&entry.ground_types());
            let (arg, s_arg) = dis_inert(&d.premises[1], &entry, &tau, alloc)?;
            Ok((d_es(x, body, arg), s_body.union(&s_arg)))
        }
        _ => Err(BoundsError::Shape(format!(
            "unexpected node for a strong fireball: {t}"
        ))),
    }
}

/// `target` is the fresh retyping of the conclusion and `tau` maps its ground
/// types back onto the original conclusion type.
fn dis_inert(
    d: &Derivation,
    target: &MultiType,
    tau: &GroundSubst,
    alloc: &mut FreshAlloc,
) -> Result<(Derivation, GroundSubst), BoundsError> {
    match (d.rule, &d.conclusion.subject) {
        (RuleKind::Many, Term::Var(x)) => Ok((d_var(x.clone(), target), tau.clone())),
        (RuleKind::App, _) => {
            let (arg, s_arg) = dis_fireball(&d.premises[1], alloc)?;
            let n_fresh = arg.conclusion.ty.as_multi().unwrap().clone();
            let arrow = MultiType::singleton(LinearType::Arrow(n_fresh.clone(), target.clone()));
            let tau_fun = s_arg.restrict(&n_fresh.ground_types()).union(tau);
            let (fun, s_fun) = dis_inert(&d.premises[0], &arrow, &tau_fun, alloc)?;
            Ok((d_app(fun, arg), s_arg.union(&s_fun)))
        }
        (RuleKind::Es, Term::Es(_, x, _)) => {
            let (body, s_body) = dis_inert(&d.premises[0], target, tau, alloc)?;
            let entry = body.ctx().get(x);
            let tau_arg = s_body.restrict(&entry.ground_types());
            let (arg, s_arg) = dis_inert(&d.premises[1], &entry, &tau_arg, alloc)?;
            Ok((d_es(x, body, arg), s_body.union(&s_arg)))
        }
        _ => Err(BoundsError::Shape(format!(
            "unexpected node for a strong inert term: {}",
            d.conclusion.subject
        ))),
    }
}

// ---------------------------------------------------------------------------
// Bound report
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct BoundLine {
    pub lhs: usize,
    pub rhs: usize,
    pub ok: bool,
}

#[derive(Clone, Debug, Default)]
pub struct BoundReport {
    /// 2|d|m + |s|s for the external evaluation of the application, when it
    /// normalizes within fuel.
    pub steps_plus_size: Option<usize>,
    pub diverged: bool,
    /// One lax bound per composable pair found within budget.
    pub lax: Vec<BoundLine>,
    pub weak_exact: Option<BoundLine>,
    pub exact: Option<BoundLine>,
    /// The dissection witness for the exact bound: the arrow, the argument
    /// type, and the substitution sending them into a composable pair.
    pub exact_witness: Option<(LinearType, MultiType, GroundSubst)>,
    /// Kind-2 equalities |t|s = |M| + |Γ̂| for the two terms.
    pub kind2: Vec<BoundLine>,
    /// Composable pairs found although evaluation hit the fuel limit.
    pub divergence_pairs_found: usize,
}

impl BoundReport {
    pub fn has_violation(&self) -> bool {
        self.lax.iter().any(|l| !l.ok)
            || self.weak_exact.map_or(false, |l| !l.ok)
            || self.exact.map_or(false, |l| !l.ok)
            || self.kind2.iter().any(|l| !l.ok)
            || self.divergence_pairs_found > 0
    }

    pub fn render(&self) -> String {
        fn line(out: &mut String, l: &BoundLine) {
            out.push_str(&format!(
                "lhs={} rhs={} verdict={}\n",
                l.lhs,
                l.rhs,
                if l.ok { "ok" } else { "violation" }
            ));
        }
        let mut out = String::new();
        if self.diverged {
            out.push_str(&format!(
                "evaluation hit the fuel limit; composable pairs found: {}\n",
                self.divergence_pairs_found
            ));
        }
        out.push_str("LAX\n");
        for l in &self.lax {
            line(&mut out, l);
        }
        out.push_str("WEAK-EXACT\n");
        if let Some(l) = &self.weak_exact {
            line(&mut out, l);
        }
        out.push_str("EXACT\n");
        if let Some(l) = &self.exact {
            line(&mut out, l);
        }
        if let Some((arrow, o, sigma)) = &self.exact_witness {
            out.push_str(&format!("witness: arrow={arrow} argument={o} subst={{"));
            let mut first = true;
            for g in sigma.domain() {
                if !first {
                    out.push_str(", ");
                }
                first = false;
                out.push_str(&format!("X_{g} <- {}", sigma.get(g)));
            }
            out.push_str("}\n");
        }
        out.push_str("KIND-2\n");
        for l in &self.kind2 {
            line(&mut out, l);
        }
        out
    }
}

/// Evaluates `t u` externally and reports the lax, weak-exact and exact
/// kind-3 bounds plus the kind-2 equalities for `t` and `u` individually.
pub fn bound_report(
    t: &Term,
    u: &Term,
    fuel: usize,
    budget: &Budget,
) -> Result<BoundReport, BoundsError> {
    for side in [t, u] {
        if !side.free_vars().is_empty() {
            return Err(BoundsError::NotClosed(side.clone()));
        }
        if !classify(side).is_strong_fireball {
            return Err(BoundsError::NotNormal(side.clone()));
        }
    }
    let mut report = BoundReport::default();
    let pairs = composable_pairs(t, u, budget)?;
    let app = Term::app(t.clone(), u.clone());
    let result = derive(&app, Mode::StrongUnitary, fuel);
    if result.trace.status == TraceStatus::FuelExhausted {
        report.diverged = true;
        report.divergence_pairs_found = pairs.len();
        return Ok(report);
    }
    let steps_plus_size = 2 * result.trace.m_steps()
        + result.trace.final_term().size(SizeKind::Strong);
    report.steps_plus_size = Some(steps_plus_size);

    // Lax bounds: every composable pair dominates the cost.
    for pair in &pairs {
        let rhs = pair.arrow.size() + pair.argument.size() + 1;
        report.lax.push(BoundLine {
            lhs: steps_plus_size,
            rhs,
            ok: steps_plus_size <= rhs,
        });
    }

    // Weak exact bound: size representation of the two premises of the
    // pipeline derivation.
    let top = result
        .derivation
        .as_ref()
        .ok_or_else(|| BoundsError::Shape("pipeline produced no derivation".into()))?;
    if top.rule != RuleKind::App {
        return Err(BoundsError::Shape(
            "pipeline derivation of an application must end in an app rule".into(),
        ));
    }
    let left = &top.premises[0];
    let right = &top.premises[1];
    let rep_left = size_representation(left)?;
    let rep_right = size_representation(right)?;
    let m_size = rep_left.conclusion.ty.size() + rep_left.conclusion.ctx.size();
    let n_size = rep_right.conclusion.ty.size() + rep_right.conclusion.ctx.size();
    report.weak_exact = Some(BoundLine {
        lhs: steps_plus_size,
        rhs: m_size + n_size + 1,
        ok: steps_plus_size == m_size + n_size + 1,
    });

    // Exact bound: dissect the two premises; the witness realizes the infimum
    // and its substitution image is a composable pair.
    let avoid = top.ground_types();
    let dis_left = size_dissection(left, &avoid)?;
    let mut avoid2 = avoid.clone();
    avoid2.extend(dis_left.substitution.domain());
    avoid2.extend(dis_left.derivation.ground_types());
    let dis_right = size_dissection(right, &avoid2)?;
    let arrow = dis_left
        .derivation
        .conclusion
        .ty
        .as_multi()
        .and_then(|m| match m.elems() {
            [a @ LinearType::Arrow(..)] => Some(a.clone()),
            _ => None,
        })
        .ok_or_else(|| BoundsError::Shape("dissected left premise is not an arrow".into()))?;
    let o = dis_right.derivation.conclusion.ty.as_multi().unwrap().clone();
    let sigma = dis_left.substitution.union(&dis_right.substitution);
    let witness_value = arrow.size() + o.size() + 1;
    // The sigma image must recompose the original premises.
    let image_ok = {
        let arrow_img = sigma.apply_linear(&arrow);
        let o_img = sigma.apply_multi(&o);
        let orig_arrow = left
            .conclusion
            .ty
            .as_multi()
            .map(|m| m.elems().to_vec())
            .unwrap_or_default();
        let orig_o = right.conclusion.ty.as_multi().cloned().unwrap_or_default();
        orig_arrow == vec![arrow_img.clone()]
            && o_img == orig_o
            && match &arrow_img {
                LinearType::Arrow(src, tgt) => src == &o_img && classify_multi(tgt).right,
                _ => false,
            }
    };
    // No found candidate beats the witness: dissecting any composable pair's
    // witnesses yields a value at least as large.
    let mut beaten = false;
    for pair in &pairs {
        let da = size_dissection(&pair.left_witness, &pair.left_witness.ground_types())?;
        let db = {
            let mut avoid = pair.right_witness.ground_types();
            avoid.extend(da.substitution.domain());
            avoid.extend(da.derivation.ground_types());
            size_dissection(&pair.right_witness, &avoid)?
        };
        let va = da.derivation.conclusion.ty.size() + da.derivation.conclusion.ctx.size();
        let vb = db.derivation.conclusion.ty.size() + db.derivation.conclusion.ctx.size();
        if va + vb + 1 < witness_value {
            beaten = true;
        }
    }
    report.exact = Some(BoundLine {
        lhs: steps_plus_size,
        rhs: witness_value,
        ok: steps_plus_size == witness_value && image_ok && !beaten,
    });
    report.exact_witness = Some((arrow, o, sigma));

    // Kind-2 equalities for the two sides.
    for side in [t, u] {
        let d = type_normal_form(side, Mode::StrongUnitary, None)
            .map_err(|e| BoundsError::Shape(e.to_string()))?;
        let rep = size_representation(&d)?;
        let total = rep.conclusion.ty.size() + rep.conclusion.ctx.size();
        let strong = side.size(SizeKind::Strong);
        report.kind2.push(BoundLine {
            lhs: strong,
            rhs: total,
            ok: strong == total,
        });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::derivations::{apply_subst_derivation, JType};
    use crate::multitypes::{parse_linear_type, parse_multi_type};
    use crate::syntax::parse_term;

    fn p(s: &str) -> Term {
        parse_term(s).unwrap()
    }

    fn mt(s: &str) -> MultiType {
        parse_multi_type(s).unwrap()
    }

    fn lt(s: &str) -> LinearType {
        parse_linear_type(s).unwrap()
    }

    #[test]
    fn sample_contains_the_empty_typing_of_values() {
        let t = p("\\x. (\\z. z z)(\\z. z z)");
        let s = interpretation_sample(&t, &Budget::new(3, 2), false);
        assert!(s.contains(&[], &MultiType::empty()));
    }

    #[test]
    fn sample_of_the_identity() {
        let s = interpretation_sample(&p("\\y. y"), &Budget::new(4, 3), false);
        assert!(s.contains(&[], &mt("[[X] -o [X]]")));
    }

    #[test]
    fn empty_budget_gives_empty_sample_for_applications() {
        let s = interpretation_sample(&p("x y"), &Budget::new(0, 0), false);
        assert!(s.is_empty());
    }

    #[test]
    fn shrinking_filter_drops_unerasable_zeros() {
        // x (\y. delta delta) is typable, but never with a left context.
        let t = p("x (\\y. (\\z. z z)(\\z. z z))");
        let plain = interpretation_sample(&t, &Budget::new(6, 4), false);
        assert!(!plain.is_empty());
        let shr = interpretation_sample(&t, &Budget::new(6, 4), true);
        assert!(shr.is_empty());
    }

    #[test]
    fn composable_pairs_of_delta_and_identity() {
        let delta = p("\\x. x x");
        let id = p("\\y. y");
        let pairs = composable_pairs(&delta, &id, &Budget::default()).unwrap();
        assert!(!pairs.is_empty());
        // The minimal-type pair does not compose.
        let minimal_arrow = lt("[[X] -o [X], X] -o [X]");
        assert!(pairs.iter().all(|p| p.arrow != minimal_arrow));
        // The key-example pair composes: with X2 := [X] -o [X],
        // ([[X2] -o [X2], X2] -o [X2], [[X2] -o [X2], X2]).
        let arrow = lt(
            "[[[X] -o [X]] -o [[X] -o [X]], [X] -o [X]] -o [[X] -o [X]]"
        );
        let argument = mt("[[[X] -o [X]] -o [[X] -o [X]], [X] -o [X]]");
        assert!(
            pairs
                .iter()
                .any(|p| p.arrow == arrow && p.argument == argument),
            "expected the key-example pair among {} found pairs",
            pairs.len()
        );
    }

    #[test]
    fn types_bound_and_gap() {
        let phi_delta = type_normal_form(&p("\\x. x x"), Mode::StrongUnitary, None).unwrap();
        let r = check_types_bound(&phi_delta).unwrap();
        assert_eq!((r.mult, r.types_total, r.gap), (2, 2, 0));

        // Retyping X by X2 opens a gap of 4.
        let mut s = GroundSubst::identity();
        s.bind(0, lt("[X] -o [X]"));
        let psi_delta = apply_subst_derivation(&s, &phi_delta);
        let r = check_types_bound(&psi_delta).unwrap();
        assert_eq!((r.mult, r.types_total, r.gap), (2, 6, 4));

        let zero = crate::derivations::d_many(p("\\x. x"), vec![]);
        let r = check_types_bound(&zero).unwrap();
        assert_eq!((r.mult, r.types_total, r.gap), (0, 0, 0));
    }

    #[test]
    fn size_representation_closes_the_gap() {
        let phi_delta = type_normal_form(&p("\\x. x x"), Mode::StrongUnitary, None).unwrap();
        let mut s = GroundSubst::identity();
        s.bind(0, lt("[X] -o [X]"));
        let psi_delta = apply_subst_derivation(&s, &phi_delta);
        let rep = size_representation(&psi_delta).unwrap();
        assert!(skeleton_eq(&rep, &psi_delta).unwrap());
        assert_eq!(rep.conclusion.ty.size() + rep.conclusion.ctx.size(), 2);

        // Already minimal input is reproduced at the same size.
        let rep = size_representation(&phi_delta).unwrap();
        assert_eq!(rep.conclusion.ty.size() + rep.conclusion.ctx.size(), 2);

        let zero = crate::derivations::d_many(p("\\x. x"), vec![]);
        let rep = size_representation(&zero).unwrap();
        assert_eq!(rep.conclusion.ty.size() + rep.conclusion.ctx.size(), 0);
    }

    #[test]
    fn dissection_of_phi_delta() {
        let phi_delta = type_normal_form(&p("\\x. x x"), Mode::StrongUnitary, None).unwrap();
        let avoid = phi_delta.ground_types();
        let dis = size_dissection(&phi_delta, &avoid).unwrap();
        assert_eq!(
            dis.derivation.conclusion.ty,
            JType::Multi(mt("[[[X_1] -o [X_2], X_1] -o [X_2]]"))
        );
        assert_eq!(
            dis.substitution,
            GroundSubst::from_pairs([(1, lt("X")), (2, lt("X"))])
        );
        assert!(derivation_eq_mod_many(
            &apply_subst_derivation(&dis.substitution, &dis.derivation),
            &phi_delta
        ));
    }

    #[test]
    fn dissection_of_an_axiom_spine() {
        let d = crate::derivations::d_var("x", &mt("[X, X]"));
        let dis = size_dissection(&d, &d.ground_types()).unwrap();
        assert_eq!(dis.derivation.conclusion.ty, JType::Multi(mt("[X_1, X_2]")));
        for g in dis.substitution.domain() {
            assert_eq!(dis.substitution.get(g), lt("X"));
        }
        assert!(derivation_eq_mod_many(
            &apply_subst_derivation(&dis.substitution, &dis.derivation),
            &d
        ));
    }

    #[test]
    fn bound_report_on_the_key_example() {
        let report = bound_report(
            &p("\\x. x x"),
            &p("\\y. y"),
            100,
            &Budget::default(),
        )
        .unwrap();
        assert!(!report.has_violation(), "{}", report.render());
        assert_eq!(report.steps_plus_size, Some(5));
        // The Fig-3-style pair gives the lax bound 11 >= 5.
        assert!(report.lax.iter().any(|l| l.rhs == 11 && l.lhs == 5));
        assert_eq!(
            report.weak_exact,
            Some(BoundLine {
                lhs: 5,
                rhs: 5,
                ok: true
            })
        );
        let exact = report.exact.unwrap();
        assert_eq!((exact.lhs, exact.rhs), (5, 5));
        assert!(exact.ok);
        let (arrow, o, _) = report.exact_witness.as_ref().unwrap();
        assert_eq!(arrow, &lt("[[X_1] -o [X_2], X_1] -o [X_2]"));
        assert_eq!(arrow.size() + o.size() + 1, 5);
        assert_eq!(report.kind2.len(), 2);
        assert!(report.kind2.iter().all(|l| l.ok));
        assert_eq!(report.kind2[0], BoundLine { lhs: 2, rhs: 2, ok: true });
        assert_eq!(report.kind2[1], BoundLine { lhs: 1, rhs: 1, ok: true });
    }

    #[test]
    fn report_renders_sections() {
        let report = bound_report(
            &p("\\x. x x"),
            &p("\\y. y"),
            100,
            &Budget::default(),
        )
        .unwrap();
        let text = report.render();
        for section in ["LAX", "WEAK-EXACT", "EXACT", "KIND-2"] {
            assert!(text.contains(section));
        }
        assert!(text.contains("verdict=ok"));
        assert!(!text.contains("violation"));
    }

    #[test]
    fn open_terms_are_rejected() {
        assert!(matches!(
            bound_report(&p("x"), &p("\\y. y"), 10, &Budget::default()),
            Err(BoundsError::NotClosed(_))
        ));
        assert!(matches!(
            composable_pairs(
                &p("(\\x. x x)(\\x. x x)"),
                &p("\\y. y"),
                &Budget::default()
            ),
            Err(BoundsError::NotNormal(_))
        ));
    }
}
