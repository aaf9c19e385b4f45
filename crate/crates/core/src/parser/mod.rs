//! Source dialects: architectures (`.geim`), patterns (`.gecm`/`.getm`) and
//! refinement definitions (`.refd`), plus the canonical pretty-printer.
//!
//! Terminators: `.` ends declarations and `;` ends behaviour statements;
//! both are optional before a closing brace. `--` starts a comment except for
//! the `--<ref::priority:p,range:r>--` annotation marker.

mod grammar;
mod lexer;
mod render;

use std::fmt;
use std::path::Path;

use thiserror::Error;

pub use render::{render, render_behaviour, render_pattern, render_refinement_def};

use crate::model::{Architecture, Diagnostics};
use crate::patterns::ConstraintPattern;
use crate::refine::RefinementDefinition;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SourceKind {
    Architecture,
    Pattern,
    RefinementDef,
    CodegenMapping,
    ResourceInventory,
}

impl SourceKind {
    pub fn from_extension(path: &Path) -> Option<SourceKind> {
        match path.extension()?.to_str()? {
            "geim" | "geim-prime" | "gesm" => Some(SourceKind::Architecture),
            "gecm" | "getm" => Some(SourceKind::Pattern),
            "refd" => Some(SourceKind::RefinementDef),
            "gemm" => Some(SourceKind::CodegenMapping),
            "germ" => Some(SourceKind::ResourceInventory),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceUnit {
    pub kind: SourceKind,
    pub text: String,
    pub origin: String,
}

impl SourceUnit {
    pub fn new(kind: SourceKind, text: impl Into<String>, origin: impl Into<String>) -> Self {
        SourceUnit {
            kind,
            text: text.into(),
            origin: origin.into(),
        }
    }

    /// Builds a unit whose kind is inferred from its leading keyword.
    pub fn infer(text: impl Into<String>, origin: impl Into<String>) -> Option<Self> {
        let text = text.into();
        let kind = infer_kind(&text)?;
        Some(SourceUnit::new(kind, text, origin))
    }
}

/// `archetype`/`<x> is <Style> where` → architecture, `<x> is
/// qualityOfServiceProperty|gridPlatform` → pattern, `on` → refinement,
/// `mapping` → codegen mapping, `resource` → inventory.
pub fn infer_kind(text: &str) -> Option<SourceKind> {
    let toks = lexer::tokenize(text).ok()?;
    let word = |i: usize| match toks.get(i).map(|t| &t.tok) {
        Some(lexer::Tok::Ident(s)) => Some(s.as_str()),
        _ => None,
    };
    match word(0)? {
        "archetype" => Some(SourceKind::Architecture),
        "on" => Some(SourceKind::RefinementDef),
        "mapping" => Some(SourceKind::CodegenMapping),
        "resource" => Some(SourceKind::ResourceInventory),
        _ if word(1) == Some("is") => match word(2)? {
            "qualityOfServiceProperty" | "gridPlatform" => Some(SourceKind::Pattern),
            _ if word(3) == Some("where") => Some(SourceKind::Architecture),
            _ => None,
        },
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseDiagnostic {
    pub line: usize,
    pub column: usize,
    pub message: String,
    pub expected: Vec<String>,
}

impl ParseDiagnostic {
    pub fn new(line: usize, column: usize, message: impl Into<String>, expected: Vec<String>) -> Self {
        ParseDiagnostic {
            line,
            column,
            message: message.into(),
            expected,
        }
    }

    /// `file:line:col: error: message`
    pub fn render(&self, origin: &str) -> String {
        format!("{origin}:{}:{}: error: {}", self.line, self.column, self.message)
    }
}

impl fmt::Display for ParseDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.line, self.column, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("{}", .0.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("\n"))]
    Syntax(Vec<ParseDiagnostic>),
    #[error("{}", .0.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("\n"))]
    Invalid(Diagnostics),
    #[error("source is a {found:?} unit, expected {expected:?}")]
    WrongKind { expected: SourceKind, found: SourceKind },
}

impl ParseError {
    /// One `file:line:col: severity: message` line per problem.
    pub fn render(&self, origin: &str) -> String {
        match self {
            ParseError::Syntax(ds) => ds.iter().map(|d| d.render(origin)).collect::<Vec<_>>().join("\n"),
            ParseError::Invalid(ds) => ds
                .iter()
                .map(|d| format!("{origin}:1:1: error: {} [{}] at {}", d.message, d.rule, d.path))
                .collect::<Vec<_>>()
                .join("\n"),
            ParseError::WrongKind { .. } => format!("{origin}:1:1: error: {self}"),
        }
    }
}

impl From<ParseDiagnostic> for ParseError {
    fn from(d: ParseDiagnostic) -> Self {
        ParseError::Syntax(vec![d])
    }
}

fn expect_kind(src: &SourceUnit, expected: SourceKind) -> Result<(), ParseError> {
    if src.kind == expected {
        Ok(())
    } else {
        Err(ParseError::WrongKind {
            expected,
            found: src.kind,
        })
    }
}

/// Parses and validates an architecture; the result is at stage GEIM unless
/// the source declares another `stage=`.
pub fn parse_architecture(src: &SourceUnit) -> Result<Architecture, ParseError> {
    expect_kind(src, SourceKind::Architecture)?;
    let arch = grammar::Parser::new(&src.text)?.architecture_unit()?;
    let diagnostics = arch.validate();
    if diagnostics.is_empty() {
        Ok(arch)
    } else {
        Err(ParseError::Invalid(diagnostics))
    }
}

/// Parses without validating; used by tools that report diagnostics
/// themselves.
pub fn parse_architecture_unchecked(src: &SourceUnit) -> Result<Architecture, ParseError> {
    expect_kind(src, SourceKind::Architecture)?;
    Ok(grammar::Parser::new(&src.text)?.architecture_unit()?)
}

pub fn parse_pattern(src: &SourceUnit) -> Result<ConstraintPattern, ParseError> {
    expect_kind(src, SourceKind::Pattern)?;
    Ok(grammar::Parser::new(&src.text)?.pattern_unit()?)
}

pub fn parse_refinement_def(src: &SourceUnit) -> Result<RefinementDefinition, ParseError> {
    expect_kind(src, SourceKind::RefinementDef)?;
    Ok(grammar::Parser::new(&src.text)?.refinement_unit()?)
}

/// Convenience for in-memory architecture text.
pub fn parse_architecture_str(text: &str) -> Result<Architecture, ParseError> {
    parse_architecture(&SourceUnit::new(SourceKind::Architecture, text, "<input>"))
}

pub fn parse_pattern_str(text: &str) -> Result<ConstraintPattern, ParseError> {
    parse_pattern(&SourceUnit::new(SourceKind::Pattern, text, "<input>"))
}

pub fn parse_refinement_def_str(text: &str) -> Result<RefinementDefinition, ParseError> {
    parse_refinement_def(&SourceUnit::new(SourceKind::RefinementDef, text, "<input>"))
}
