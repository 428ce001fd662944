use std::collections::BTreeSet;

use super::ast::{KeyValue, NetlistAst, Statement, StatementKind, Word};
use super::lexer::tokenize_line;
use super::{Diagnostic, DiagnosticKind};
use crate::fock::valid_line_name;

const OUTCOMES: [&str; 6] = ["H", "V", "P", "M", "L", "R"];
const KEYWORDS: [&str; 6] = ["source", "elem", "det", "herald", "scan", "set"];

/// Number of lines a known source or element binds; `None` for unknown kinds
/// and for `vacuum`, which takes any positive number.
pub(super) fn source_arity(kind: &str) -> Option<usize> {
    match kind {
        "spdc" => Some(2),
        "single" | "coherent" => Some(1),
        _ => None,
    }
}

pub(super) fn element_arity(kind: &str) -> Option<usize> {
    match kind {
        "pbs" | "pbs45" => Some(2),
        "hwp" | "qwp" | "polarizer" | "mismatch" | "pauli" => Some(1),
        _ => None,
    }
}

fn syntax(at: &Word, message: impl Into<String>, expected: &[&str]) -> Diagnostic {
    Diagnostic::new(DiagnosticKind::SyntaxError, at, message).expecting(expected)
}

fn is_operator(w: &Word) -> bool {
    w.text == "=" || w.text == "->"
}

struct Cursor {
    words: Vec<Word>,
    pos: usize,
    /// Position just past the last token, for end-of-line errors.
    end: Word,
}

impl Cursor {
    fn peek(&self) -> Option<&Word> {
        self.words.get(self.pos)
    }

    fn peek_at(&self, offset: usize) -> Option<&Word> {
        self.words.get(self.pos + offset)
    }

    fn here(&self) -> &Word {
        self.peek().unwrap_or(&self.end)
    }

    fn describe(&self) -> String {
        match self.peek() {
            Some(w) => format!("found `{}`", w.text),
            None => "found end of line".to_string(),
        }
    }

    fn ident(&mut self, what: &str) -> Result<Word, Diagnostic> {
        match self.peek() {
            Some(w) if !is_operator(w) => {
                let w = w.clone();
                self.pos += 1;
                Ok(w)
            }
            _ => Err(syntax(
                self.here(),
                format!("expected {what}, {}", self.describe()),
                &[what],
            )),
        }
    }

    fn literal(&mut self, text: &str) -> Result<Word, Diagnostic> {
        match self.peek() {
            Some(w) if w.text == text => {
                let w = w.clone();
                self.pos += 1;
                Ok(w)
            }
            _ => Err(syntax(
                self.here(),
                format!("expected `{text}`, {}", self.describe()),
                &[text],
            )),
        }
    }

    fn line_id(&mut self) -> Result<Word, Diagnostic> {
        let w = self.ident("line id")?;
        if !valid_line_name(&w.text) {
            return Err(syntax(
                &w,
                format!("invalid line identifier `{}`", w.text),
                &["line id"],
            ));
        }
        Ok(w)
    }

    fn at_key_value(&self) -> bool {
        self.peek_at(1).is_some_and(|w| w.text == "=")
    }

    /// Line ids up to `arity`, or as many as precede the first `key=` or operator.
    fn line_ids(&mut self, arity: Option<usize>) -> Result<Vec<Word>, Diagnostic> {
        let mut out = Vec::new();
        while arity.is_none_or(|n| out.len() < n) {
            match self.peek() {
                Some(w) if !is_operator(w) && !self.at_key_value() => out.push(self.line_id()?),
                _ => break,
            }
        }
        let need = arity.unwrap_or(1);
        if out.len() < need {
            return Err(syntax(
                self.here(),
                format!("expected line id, {}", self.describe()),
                &["line id"],
            ));
        }
        Ok(out)
    }

    fn key_values(&mut self) -> Result<Vec<KeyValue>, Diagnostic> {
        let mut out = Vec::new();
        while let Some(w) = self.peek() {
            if is_operator(w) || !self.at_key_value() {
                return Err(syntax(
                    w,
                    format!("expected key=value, found `{}`", w.text),
                    &["key=value"],
                ));
            }
            let key = self.ident("key")?;
            self.literal("=")?;
            let value = self.ident("value")?;
            out.push(KeyValue { key, value });
        }
        Ok(out)
    }

    fn number(&mut self, what: &str) -> Result<Word, Diagnostic> {
        let w = self.ident(what)?;
        match w.text.parse::<f64>() {
            Ok(x) if x.is_finite() => Ok(w),
            _ => Err(syntax(
                &w,
                format!("expected {what}, found `{}`", w.text),
                &[what],
            )),
        }
    }

    fn finish(&self) -> Result<(), Diagnostic> {
        match self.peek() {
            Some(w) => Err(syntax(
                w,
                format!("unexpected `{}` at end of statement", w.text),
                &["end of line"],
            )),
            None => Ok(()),
        }
    }
}

fn statement(
    words: Vec<Word>,
    set_keys: &mut BTreeSet<String>,
) -> Result<Statement, Diagnostic> {
    let last = words.last().expect("non-empty line");
    let end = Word {
        text: String::new(),
        line: last.line,
        column: last.column + last.text.chars().count(),
    };
    let mut c = Cursor {
        words,
        pos: 0,
        end,
    };
    let keyword = c.peek().expect("non-empty line").clone();
    if is_operator(&keyword) {
        return Err(syntax(
            &keyword,
            format!("expected a statement keyword, found `{}`", keyword.text),
            &KEYWORDS,
        ));
    }
    c.pos += 1;
    let kind = match keyword.text.as_str() {
        "source" => {
            let kind = c.ident("source kind")?;
            let lines = c.line_ids(source_arity(&kind.text))?;
            let params = c.key_values()?;
            StatementKind::Source {
                kind,
                lines,
                params,
            }
        }
        "elem" => {
            let kind = c.ident("element kind")?;
            let arity = element_arity(&kind.text);
            let inputs = c.line_ids(arity)?;
            let outputs = if c.peek().is_some_and(|w| w.text == "->") {
                c.pos += 1;
                c.line_ids(arity.or(Some(inputs.len())))?
            } else {
                Vec::new()
            };
            let params = c.key_values()?;
            StatementKind::Elem {
                kind,
                inputs,
                outputs,
                params,
            }
        }
        "det" => {
            let kind = c.ident("detector kind")?;
            let line = c.line_id()?;
            let params = c.key_values()?;
            StatementKind::Det { kind, line, params }
        }
        "herald" => {
            let line = c.line_id()?;
            let outcome = match c.peek() {
                Some(w) if OUTCOMES.contains(&w.text.as_str()) => {
                    let w = w.clone();
                    c.pos += 1;
                    w
                }
                _ => {
                    return Err(syntax(
                        c.here(),
                        format!("expected an outcome letter, {}", c.describe()),
                        &OUTCOMES,
                    ))
                }
            };
            c.finish()?;
            StatementKind::Herald { line, outcome }
        }
        "scan" => {
            let variable = c.ident("scan variable")?;
            c.literal("on")?;
            let line = c.line_id()?;
            c.literal("from")?;
            let from = c.number("number")?;
            c.literal("to")?;
            let to = c.number("number")?;
            c.literal("steps")?;
            let steps = c.ident("integer")?;
            if steps.text.parse::<usize>().is_err() {
                return Err(syntax(
                    &steps,
                    format!("expected integer, found `{}`", steps.text),
                    &["integer"],
                ));
            }
            c.finish()?;
            StatementKind::Scan {
                variable,
                line,
                from,
                to,
                steps,
            }
        }
        "set" => {
            let key = c.ident("setting name")?;
            c.literal("=")?;
            let value = c.ident("value")?;
            c.finish()?;
            if !set_keys.insert(key.text.clone()) {
                return Err(Diagnostic::new(
                    DiagnosticKind::DuplicateSetKey,
                    &key,
                    format!("`{}` is already set", key.text),
                ));
            }
            StatementKind::Set { key, value }
        }
        other => {
            return Err(Diagnostic::new(
                DiagnosticKind::UnknownKeyword,
                &keyword,
                format!("unknown keyword `{other}`"),
            )
            .expecting(&KEYWORDS))
        }
    };
    Ok(Statement { keyword, kind })
}

/// Parses a whole document, stopping at the first diagnostic.
pub fn parse(text: &str) -> Result<NetlistAst, Diagnostic> {
    let mut statements = Vec::new();
    let mut set_keys = BTreeSet::new();
    for (i, line) in text.split('\n').enumerate() {
        let words = tokenize_line(line, i + 1);
        if words.is_empty() {
            continue;
        }
        statements.push(statement(words, &mut set_keys)?);
    }
    Ok(NetlistAst { statements })
}

/// Like [`parse`], reporting invalid UTF-8 as a syntax error at the offending byte.
pub fn parse_bytes(bytes: &[u8]) -> Result<NetlistAst, Diagnostic> {
    match std::str::from_utf8(bytes) {
        Ok(text) => parse(text),
        Err(e) => {
            let valid = std::str::from_utf8(&bytes[..e.valid_up_to()]).expect("valid prefix");
            let line = valid.matches('\n').count() + 1;
            let column = valid.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
            Err(Diagnostic::at(
                DiagnosticKind::SyntaxError,
                line,
                column,
                "invalid UTF-8",
            ))
        }
    }
}
