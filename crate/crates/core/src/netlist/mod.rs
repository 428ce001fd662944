//! Text format for optical tables.
//!
//! One statement per line, `#` starts a comment:
//!
//! ```text
//! source spdc 3 4 p=0.05 order=2 bell=psim
//! source single 2 pol=H
//! elem pbs 2 3 -> 2p 3p
//! elem hwp 1 theta=22.5
//! herald 3p M
//! det hv 2p
//! det polarizer 1 theta=45
//! scan theta on 1 from 0 to 180 steps 37
//! set nmax=6
//! ```

mod ast;
mod compile;
mod lexer;
mod parser;
mod render;

use std::fmt;

use serde::Serialize;

pub use ast::{KeyValue, NetlistAst, Statement, StatementKind, Word};
pub use compile::{compile, equivalent};
pub use parser::{parse, parse_bytes};
pub use render::render;

use crate::circuit::Circuit;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum DiagnosticKind {
    SyntaxError,
    UnknownKeyword,
    DuplicateSetKey,
    DuplicateKey,
    UnknownKey,
    UnknownKind,
    MissingParam,
    TypeMismatch,
    ParamOutOfRange,
    UndeclaredLine,
    DuplicateLine,
    LineConsumed,
    LineNeverDetected,
    DuplicateDetector,
    MultipleScans,
    ScanTarget,
}

impl DiagnosticKind {
    pub fn name(self) -> &'static str {
        match self {
            DiagnosticKind::SyntaxError => "SyntaxError",
            DiagnosticKind::UnknownKeyword => "UnknownKeyword",
            DiagnosticKind::DuplicateSetKey => "DuplicateSetKey",
            DiagnosticKind::DuplicateKey => "DuplicateKey",
            DiagnosticKind::UnknownKey => "UnknownKey",
            DiagnosticKind::UnknownKind => "UnknownKind",
            DiagnosticKind::MissingParam => "MissingParam",
            DiagnosticKind::TypeMismatch => "TypeMismatch",
            DiagnosticKind::ParamOutOfRange => "ParamOutOfRange",
            DiagnosticKind::UndeclaredLine => "UndeclaredLine",
            DiagnosticKind::DuplicateLine => "DuplicateLine",
            DiagnosticKind::LineConsumed => "LineConsumed",
            DiagnosticKind::LineNeverDetected => "LineNeverDetected",
            DiagnosticKind::DuplicateDetector => "DuplicateDetector",
            DiagnosticKind::MultipleScans => "MultipleScans",
            DiagnosticKind::ScanTarget => "ScanTarget",
        }
    }
}

impl fmt::Display for DiagnosticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A located error. Lines and columns are 1-based; columns count characters.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    pub line: usize,
    pub column: usize,
    pub message: String,
    /// Token classes that would have been accepted, for syntax errors.
    pub expected: Vec<String>,
}

impl Diagnostic {
    pub fn new(kind: DiagnosticKind, at: &Word, message: impl Into<String>) -> Self {
        Diagnostic {
            kind,
            line: at.line,
            column: at.column,
            message: message.into(),
            expected: Vec::new(),
        }
    }

    pub(crate) fn at(kind: DiagnosticKind, line: usize, column: usize, message: impl Into<String>) -> Self {
        Diagnostic {
            kind,
            line,
            column,
            message: message.into(),
            expected: Vec::new(),
        }
    }

    pub(crate) fn expecting(mut self, expected: &[&str]) -> Self {
        self.expected = expected.iter().map(|s| s.to_string()).collect();
        self
    }

    /// `file:line:col: Kind: message`
    pub fn with_file(&self, file: &str) -> String {
        format!("{file}:{self}")
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}: {}", self.line, self.column, self.kind, self.message)?;
        if !self.expected.is_empty() {
            write!(f, " (expected {})", self.expected.join(" | "))?;
        }
        Ok(())
    }
}

impl std::error::Error for Diagnostic {}

/// Parses and compiles in one step.
pub fn load(text: &str) -> Result<Circuit, Diagnostic> {
    compile(&parse(text)?)
}

/// Like [`load`], for input that may not be valid UTF-8.
pub fn load_bytes(bytes: &[u8]) -> Result<Circuit, Diagnostic> {
    compile(&parse_bytes(bytes)?)
}

pub const CNOT: &str = include_str!("../../netlists/cnot.net");
pub const ENTANGLE: &str = include_str!("../../netlists/entangle.net");
pub const TELEPORT: &str = include_str!("../../netlists/teleport.net");

/// Bundled netlists by file name.
pub fn bundled() -> [(&'static str, &'static str); 3] {
    [
        ("cnot.net", CNOT),
        ("entangle.net", ENTANGLE),
        ("teleport.net", TELEPORT),
    ]
}
