//! A small text language for defining events and causal chains.
//!
//! A spec is a sequence of statements:
//!
//! ```text
//! event NAME on STREAM [side SIDE] [dir DIR] : EXPR
//! node NAME cause|intermediate|consequence = EVENT [side ROLE] [dir ROLE]
//! edge NAME -> NAME
//! chain NAME : NAME -> NAME (-> NAME)*
//! chains all
//! ```
//!
//! Streams are `app` (per client), `ran` (own UE), `cell` (all UEs, with an
//! `own` flag), `media` and `rtcp`. Conditions combine per-record fields
//! with aggregates (`exists`, `forall`, `count`, `frac`, `max`, `min`,
//! `sum`, `mean`, `argmax`, `argmin`, `percentile`), sequence tests
//! (`adjacent_drop`, `adjacent_rise`, `changes`, `trend_up`) and time
//! buckets (`buckets(field, ms=N, p=P)`). `agg(x where pred)` filters
//! records first, `$key` reads a detector threshold, and `#` starts a
//! comment. The built-in detector is itself written in this language; see
//! [`BUILTIN_SPEC`].

mod ast;
mod compile;
mod diag;
mod eval;
mod lexer;
mod parser;

pub use ast::*;
pub use compile::{
    builtin_ast, builtin_plan, compile, compile_standalone, stream_fields, CompiledEvent, DetectionPlan, FieldKind,
    PlanSlot, SlotSel, BUILTIN_SPEC, CONSTANTS,
};
pub use diag::Diagnostic;
pub use lexer::Pos;
pub use parser::parse;

/// Deterministic canonical text of a plan: a header comment followed by
/// every statement. The output parses and compiles back to the same text.
pub fn emit_pseudocode(plan: &DetectionPlan) -> String {
    format!(
        "# detection plan: {} events, {} slots, {} nodes, {} chains\n{}",
        plan.events.len(),
        plan.slots.len(),
        plan.graph.nodes().len(),
        plan.chains.len(),
        plan.ast
    )
}

/// Parses and compiles spec text, extending the built-in definitions.
pub fn compile_str(src: &str) -> Result<DetectionPlan, Diagnostic> {
    compile(&parse(src)?)
}
