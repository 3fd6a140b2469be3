//! YAML ingestion: loading, meta-schema validation, conversion to the typed
//! AST, desugaring, include resolution, and canonical serialization.
//!
//! `parse_program` accepts exactly the documents `validate_meta_schema`
//! accepts: parsing runs validation first and converts only clean documents.

mod convert;
mod desugar;
mod emit;
mod meta;
mod yaml;

use std::path::{Path, PathBuf};

pub use desugar::desugar;
pub use emit::emit_program as serialize_program;
pub use meta::validate_document;
pub use yaml::{load_yaml, node_to_value, yaml_to_value, NodeKind, YamlNode};

use crate::ast::{Block, BlockBody, ContributeSet, Program};
use crate::diag::{Diagnostic, DocPath};

/// Validate a raw YAML tree against the PDL meta-schema. Empty iff the
/// document is a valid program; diagnostics carry document paths and source
/// positions.
pub fn validate_meta_schema(document: &YamlNode) -> Vec<Diagnostic> {
    meta::validate_document(document)
}

/// Parse a document into a typed (not yet desugared) program.
pub fn parse_program(source_text: &str) -> Result<Program, Vec<Diagnostic>> {
    let doc = load_yaml(source_text).map_err(|d| vec![d])?;
    let diags = validate_meta_schema(&doc);
    if !diags.is_empty() {
        return Err(diags);
    }
    convert::convert_program(&doc)
        .map_err(|internal| vec![Diagnostic::error(DocPath::root(), internal)])
}

/// Parse and desugar a file, resolving includes relative to its directory.
pub fn load_program_file(path: &Path) -> Result<Program, Vec<Diagnostic>> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        vec![Diagnostic::error(DocPath::root(), format!("cannot read '{}': {e}", path.display()))]
    })?;
    let program = desugar(parse_program(&text)?);
    let base_dir = path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf();
    let mut stack = vec![canonical(path)];
    resolve_includes_inner(program, &base_dir, &mut stack)
}

fn canonical(path: &Path) -> PathBuf {
    path.canonicalize().unwrap_or_else(|_| path.to_path_buf())
}

/// Replace `include:` blocks by the included files' programs.
///
/// A bare include (no other keywords) sitting in a list splices the included
/// blocks in place; otherwise the included program becomes the block's body
/// with `lastOf` semantics. Cycles are detected through the chain of file
/// paths.
pub fn resolve_includes(program: Program, base_dir: &Path) -> Result<Program, Vec<Diagnostic>> {
    let mut stack = Vec::new();
    resolve_includes_inner(program, base_dir, &mut stack)
}

fn resolve_includes_inner(
    program: Program,
    base_dir: &Path,
    stack: &mut Vec<PathBuf>,
) -> Result<Program, Vec<Diagnostic>> {
    Ok(match program {
        Program::Single(block) => {
            let block = resolve_block(*block, base_dir, stack)?;
            match block {
                Spliced::One(b) => Program::Single(Box::new(b)),
                // A bare include of a list at single-block position keeps
                // lastOf semantics.
                Spliced::Many(blocks) => {
                    Program::single(Block::leaf(BlockBody::LastOf(Program::List(blocks))))
                }
            }
        }
        Program::List(blocks) => {
            let mut out = Vec::new();
            for b in blocks {
                match resolve_block(b, base_dir, stack)? {
                    Spliced::One(b) => out.push(b),
                    Spliced::Many(bs) => out.extend(bs),
                }
            }
            Program::List(out)
        }
    })
}

#[allow(clippy::large_enum_variant)]
enum Spliced {
    One(Block),
    Many(Vec<Block>),
}

fn is_bare(block: &Block) -> bool {
    block.description.is_none()
        && block.def.is_none()
        && block.defs.is_empty()
        && block.role.is_none()
        && block.contribute == ContributeSet::default()
        && block.parser.is_none()
        && block.spec.is_none()
}

fn resolve_block(
    block: Block,
    base_dir: &Path,
    stack: &mut Vec<PathBuf>,
) -> Result<Spliced, Vec<Diagnostic>> {
    if let BlockBody::Include { file } = &block.body {
        let target = base_dir.join(file);
        let included = load_included(&target, file, base_dir, stack)?;
        if is_bare(&block) {
            return Ok(match included {
                Program::Single(b) => Spliced::One(*b),
                Program::List(bs) => Spliced::Many(bs),
            });
        }
        // Keywords on the include block wrap the included program.
        let mut wrapper = block;
        wrapper.body = BlockBody::LastOf(included);
        return Ok(Spliced::One(wrapper));
    }

    let mut block = block;
    block.defs = block
        .defs
        .into_iter()
        .map(|(k, v)| Ok((k, resolve_includes_inner(v, base_dir, stack)?)))
        .collect::<Result<_, Vec<Diagnostic>>>()?;
    block.body = resolve_body(block.body, base_dir, stack)?;
    Ok(Spliced::One(block))
}

fn load_included(
    target: &Path,
    file: &str,
    base_dir: &Path,
    stack: &mut Vec<PathBuf>,
) -> Result<Program, Vec<Diagnostic>> {
    let text = std::fs::read_to_string(target).map_err(|e| {
        vec![Diagnostic::error(
            DocPath::root(),
            format!(
                "cannot include '{file}' (resolved to '{}', included from '{}'): {e}",
                target.display(),
                base_dir.display()
            ),
        )]
    })?;
    let canon = canonical(target);
    if stack.contains(&canon) {
        let chain: Vec<String> =
            stack.iter().chain(std::iter::once(&canon)).map(|p| p.display().to_string()).collect();
        return Err(vec![Diagnostic::error(
            DocPath::root(),
            format!("include cycle: {}", chain.join(" -> ")),
        )]);
    }
    stack.push(canon);
    let program = desugar(parse_program(&text)?);
    let next_base = target.parent().unwrap_or_else(|| Path::new(".")).to_path_buf();
    let resolved = resolve_includes_inner(program, &next_base, stack)?;
    stack.pop();
    Ok(resolved)
}

fn resolve_body(
    body: BlockBody,
    base_dir: &Path,
    stack: &mut Vec<PathBuf>,
) -> Result<BlockBody, Vec<Diagnostic>> {
    use crate::ast::ObjectBody;
    Ok(match body {
        BlockBody::Text(p) => BlockBody::Text(resolve_includes_inner(p, base_dir, stack)?),
        BlockBody::LastOf(p) => BlockBody::LastOf(resolve_includes_inner(p, base_dir, stack)?),
        BlockBody::Array(p) => BlockBody::Array(resolve_includes_inner(p, base_dir, stack)?),
        BlockBody::Object(ObjectBody::Blocks(p)) => {
            BlockBody::Object(ObjectBody::Blocks(resolve_includes_inner(p, base_dir, stack)?))
        }
        BlockBody::Object(ObjectBody::Fields(fields)) => {
            let mut out = indexmap::IndexMap::new();
            for (k, v) in fields {
                out.insert(k, resolve_includes_inner(v, base_dir, stack)?);
            }
            BlockBody::Object(ObjectBody::Fields(out))
        }
        BlockBody::Model { model, input, parameters } => BlockBody::Model {
            model,
            input: input.map(|p| resolve_includes_inner(p, base_dir, stack)).transpose()?,
            parameters,
        },
        BlockBody::Function { params, body } => {
            BlockBody::Function { params, body: resolve_includes_inner(body, base_dir, stack)? }
        }
        BlockBody::Call { func, args, context } => BlockBody::Call {
            func,
            args,
            context: context.map(|p| resolve_includes_inner(p, base_dir, stack)).transpose()?,
        },
        BlockBody::If { condition, then, otherwise } => BlockBody::If {
            condition,
            then: resolve_includes_inner(then, base_dir, stack)?,
            otherwise: otherwise.map(|p| resolve_includes_inner(p, base_dir, stack)).transpose()?,
        },
        BlockBody::For { bindings, body, join } => {
            BlockBody::For { bindings, body: resolve_includes_inner(body, base_dir, stack)?, join }
        }
        BlockBody::Repeat { body, count, join } => {
            BlockBody::Repeat { body: resolve_includes_inner(body, base_dir, stack)?, count, join }
        }
        BlockBody::RepeatUntil { body, until, join } => BlockBody::RepeatUntil {
            body: resolve_includes_inner(body, base_dir, stack)?,
            until,
            join,
        },
        BlockBody::Code { source, lang } => {
            BlockBody::Code { source: resolve_includes_inner(source, base_dir, stack)?, lang }
        }
        leaf => leaf,
    })
}
