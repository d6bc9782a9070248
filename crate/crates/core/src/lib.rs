//! Value substitution calculus: terms with explicit substitutions, the open /
//! external / full reduction strategies with exact multiplicative and
//! exponential step accounting, the call-by-value multi type system, and the
//! quantitative bounds machinery built on top of it.
//!
//! The crate is organized by layer:
//!
//! * [`syntax`] — terms, parsing and printing, substitution, grammar classifiers;
//! * [`rewriting`] — root rules at a distance, redex enumeration, the evaluator;
//! * [`multitypes`] — linear and multi types, type sizes, shrinking classifiers;
//! * [`derivations`] — typing derivation trees, validity checking, serialization;
//! * [`inference`] — typing of normal forms and the subject reduction/expansion
//!   transforms, culminating in the [`inference::derive`] pipeline;
//! * [`bounds`] — bounded interpretation sampling, composable pairs, size
//!   representation and dissection, and the bound reports;
//! * [`oracle`] — exhaustive term enumeration, reduction-graph exploration, and
//!   the diamond / commutation / random-descent validators.

pub mod bounds;
pub mod derivations;
pub mod inference;
pub mod multitypes;
pub mod oracle;
pub mod rewriting;
pub mod syntax;

pub use syntax::{classify, parse_term, Term, TermClass};
