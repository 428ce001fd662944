use serde::Serialize;

/// A token with its 1-based source position.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Word {
    pub text: String,
    pub line: usize,
    pub column: usize,
}

impl Word {
    pub fn as_str(&self) -> &str {
        &self.text
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct KeyValue {
    pub key: Word,
    pub value: Word,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum StatementKind {
    Source {
        kind: Word,
        lines: Vec<Word>,
        params: Vec<KeyValue>,
    },
    Elem {
        kind: Word,
        inputs: Vec<Word>,
        outputs: Vec<Word>,
        params: Vec<KeyValue>,
    },
    Det {
        kind: Word,
        line: Word,
        params: Vec<KeyValue>,
    },
    Herald {
        line: Word,
        outcome: Word,
    },
    Scan {
        variable: Word,
        line: Word,
        from: Word,
        to: Word,
        steps: Word,
    },
    Set {
        key: Word,
        value: Word,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Statement {
    /// The leading keyword.
    pub keyword: Word,
    pub kind: StatementKind,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct NetlistAst {
    pub statements: Vec<Statement>,
}
