//! Desugaring: normalization of parsed programs.
//!
//! A plain list of blocks used as a block body behaves like `lastOf:`, so
//! the bodies of `if:`/`for:`/`repeat:` arms and function returns that are
//! lists get wrapped in an explicit `lastOf` block. The result is a normal
//! form where every body program is a single block or an explicit
//! combinator. Idempotent.

use indexmap::IndexMap;

use crate::ast::{Block, BlockBody, ObjectBody, Program};

pub fn desugar(program: Program) -> Program {
    match program {
        Program::Single(block) => Program::Single(Box::new(desugar_block(*block))),
        Program::List(blocks) => Program::List(blocks.into_iter().map(desugar_block).collect()),
    }
}

/// Wrap a bare list in `lastOf` so it keeps its last value; single blocks
/// pass through.
fn wrap_last_of(program: Program) -> Program {
    match program {
        Program::List(blocks) => {
            Program::single(Block::leaf(BlockBody::LastOf(Program::List(blocks))))
        }
        single => single,
    }
}

fn desugar_block(block: Block) -> Block {
    let defs: IndexMap<_, _> = block.defs.into_iter().map(|(k, v)| (k, desugar(v))).collect();
    let body = match block.body {
        BlockBody::Expr(e) => BlockBody::Expr(e),
        BlockBody::Model { model, input, parameters } => {
            BlockBody::Model { model, input: input.map(desugar), parameters }
        }
        BlockBody::Read { file, message, multiline } => {
            BlockBody::Read { file, message, multiline }
        }
        BlockBody::Text(p) => BlockBody::Text(desugar(p)),
        BlockBody::LastOf(p) => BlockBody::LastOf(desugar(p)),
        BlockBody::Array(p) => BlockBody::Array(desugar(p)),
        BlockBody::Object(ObjectBody::Fields(fields)) => BlockBody::Object(ObjectBody::Fields(
            fields.into_iter().map(|(k, v)| (k, desugar(v))).collect(),
        )),
        BlockBody::Object(ObjectBody::Blocks(p)) => {
            BlockBody::Object(ObjectBody::Blocks(desugar(p)))
        }
        BlockBody::Data { value, raw } => BlockBody::Data { value, raw },
        BlockBody::Include { file } => BlockBody::Include { file },
        BlockBody::Function { params, body } => {
            BlockBody::Function { params, body: wrap_last_of(desugar(body)) }
        }
        BlockBody::Call { func, args, context } => {
            BlockBody::Call { func, args, context: context.map(desugar) }
        }
        BlockBody::If { condition, then, otherwise } => BlockBody::If {
            condition,
            then: wrap_last_of(desugar(then)),
            otherwise: otherwise.map(|p| wrap_last_of(desugar(p))),
        },
        BlockBody::For { bindings, body, join } => {
            BlockBody::For { bindings, body: wrap_last_of(desugar(body)), join }
        }
        BlockBody::Repeat { body, count, join } => {
            BlockBody::Repeat { body: wrap_last_of(desugar(body)), count, join }
        }
        BlockBody::RepeatUntil { body, until, join } => {
            BlockBody::RepeatUntil { body: wrap_last_of(desugar(body)), until, join }
        }
        BlockBody::Code { source, lang } => BlockBody::Code { source: desugar(source), lang },
    };
    Block { defs, body, ..block }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::TemplateExpr;

    fn leaf(s: &str) -> Block {
        Block::leaf(BlockBody::Expr(TemplateExpr::literal_str(s)))
    }

    #[test]
    fn if_then_list_becomes_last_of() {
        let b = Block::leaf(BlockBody::If {
            condition: TemplateExpr::literal(crate::ast::Value::Bool(true)),
            then: Program::List(vec![leaf("b1"), leaf("b2")]),
            otherwise: None,
        });
        let out = desugar(Program::single(b));
        let Program::Single(block) = &out else { panic!() };
        let BlockBody::If { then, .. } = &block.body else { panic!() };
        let Program::Single(inner) = then else { panic!("then should be a single block") };
        assert!(matches!(inner.body, BlockBody::LastOf(_)));
    }

    #[test]
    fn already_normal_program_is_unchanged() {
        let b = Block::leaf(BlockBody::If {
            condition: TemplateExpr::literal(crate::ast::Value::Bool(true)),
            then: Program::List(vec![leaf("b1"), leaf("b2")]),
            otherwise: None,
        });
        let once = desugar(Program::single(b));
        let twice = desugar(once.clone());
        assert_eq!(once, twice);
    }

    #[test]
    fn text_bodies_stay_lists() {
        let b = Block::leaf(BlockBody::Text(Program::List(vec![leaf("a"), leaf("b")])));
        let out = desugar(Program::single(b.clone()));
        assert_eq!(out, Program::single(b));
    }
}
