use std::collections::{BTreeMap, BTreeSet};

use super::ast::{KeyValue, NetlistAst, StatementKind, Word};
use super::{Diagnostic, DiagnosticKind};
use crate::circuit::{Circuit, Stage};
use crate::detection::{Analysis, AngleScan, DetectorSpec, Outcome};
use crate::fock::{BellKind, FockConfig, QubitState, C64};
use crate::optics::{Element, ElementKind, PauliKind};
use crate::sources::{SourceKind, SourceSpec, DEFAULT_COHERENT_NMAX, MAX_MU, MAX_PAIR_PROB};

pub(super) const DEFAULT_PAIR_PROB: f64 = 0.05;
pub(super) const DEFAULT_ORDER: u8 = 2;
pub(super) const DEFAULT_BELL: BellKind = BellKind::PsiMinus;
const MAX_NMAX: f64 = 12.0;
const MAX_BINS: f64 = 4.0;
const MAX_PRUNE: f64 = 1e-6;

use DiagnosticKind as K;

/// Folds an angle in degrees into [0, 180).
pub(super) fn fold_angle(deg: f64) -> f64 {
    let a = deg.rem_euclid(180.0);
    if a >= 180.0 {
        0.0
    } else {
        a
    }
}

struct Params<'a> {
    owner: &'a Word,
    kvs: &'a [KeyValue],
}

impl<'a> Params<'a> {
    fn new(owner: &'a Word, kvs: &'a [KeyValue], allowed: &[&str]) -> Result<Self, Diagnostic> {
        let mut seen = BTreeSet::new();
        for kv in kvs {
            if !allowed.contains(&kv.key.as_str()) {
                let hint = if allowed.is_empty() {
                    format!("`{}` takes no parameters", owner.text)
                } else {
                    format!("allowed: {}", allowed.join(", "))
                };
                return Err(Diagnostic::new(
                    K::UnknownKey,
                    &kv.key,
                    format!("unknown key `{}` for `{}` ({hint})", kv.key.text, owner.text),
                ));
            }
            if !seen.insert(kv.key.as_str()) {
                return Err(Diagnostic::new(
                    K::DuplicateKey,
                    &kv.key,
                    format!("key `{}` given twice", kv.key.text),
                ));
            }
        }
        Ok(Params { owner, kvs })
    }

    fn get(&self, key: &str) -> Option<&'a Word> {
        self.kvs.iter().find(|kv| kv.key.text == key).map(|kv| &kv.value)
    }

    fn number(&self, key: &str) -> Result<Option<(f64, &'a Word)>, Diagnostic> {
        match self.get(key) {
            None => Ok(None),
            Some(w) => match w.text.parse::<f64>() {
                Ok(x) if x.is_finite() => Ok(Some((x, w))),
                _ => Err(Diagnostic::new(
                    K::TypeMismatch,
                    w,
                    format!("`{key}` must be a number, found `{}`", w.text),
                )),
            },
        }
    }

    fn required(&self, key: &str) -> Result<(f64, &'a Word), Diagnostic> {
        self.number(key)?.ok_or_else(|| {
            Diagnostic::new(
                K::MissingParam,
                self.owner,
                format!("`{}` requires `{key}=`", self.owner.text),
            )
        })
    }

    fn ranged(&self, key: &str, default: Option<f64>, min: f64, max: f64) -> Result<f64, Diagnostic> {
        let (x, w) = match (self.number(key)?, default) {
            (Some(found), _) => found,
            (None, Some(d)) => return Ok(d),
            (None, None) => self.required(key)?,
        };
        check_range(key, x, w, min, max)
    }

    fn integer(&self, key: &str, default: f64, min: f64, max: f64) -> Result<f64, Diagnostic> {
        let x = self.ranged(key, Some(default), min, max)?;
        if x.fract() != 0.0 {
            return Err(Diagnostic::new(
                K::TypeMismatch,
                self.get(key).unwrap_or(self.owner),
                format!("`{key}` must be an integer"),
            ));
        }
        Ok(x)
    }

    fn angle(&self, key: &str) -> Result<f64, Diagnostic> {
        Ok(fold_angle(self.required(key)?.0))
    }

    fn polarization(&self) -> Result<QubitState, Diagnostic> {
        let base = match self.get("pol") {
            None => QubitState::h(),
            Some(w) => match w.text.parse::<Outcome>() {
                Ok(o) => o.state(),
                Err(_) => match w.text.parse::<f64>() {
                    Ok(x) if x.is_finite() => QubitState::linear(fold_angle(x)),
                    _ => {
                        return Err(Diagnostic::new(
                            K::TypeMismatch,
                            w,
                            format!(
                                "`pol` must be an outcome letter or an angle, found `{}`",
                                w.text
                            ),
                        ))
                    }
                },
            },
        };
        Ok(match self.number("phase")? {
            None => base,
            Some((phi, _)) => {
                QubitState::normalized(base.alpha, base.beta * C64::from_polar(1.0, phi.to_radians()))
            }
        })
    }
}

fn check_range(key: &str, x: f64, at: &Word, min: f64, max: f64) -> Result<f64, Diagnostic> {
    if (min..=max).contains(&x) {
        Ok(x)
    } else {
        Err(Diagnostic::new(
            K::ParamOutOfRange,
            at,
            format!("`{key}` = {x} outside [{min}, {max}]"),
        ))
    }
}

enum LineState {
    Live(Word),
    Retired { how: &'static str, at: Word },
}

#[derive(Default)]
struct Lines {
    map: BTreeMap<String, LineState>,
}

impl Lines {
    fn declare(&mut self, w: &Word) -> Result<(), Diagnostic> {
        if self.map.contains_key(&w.text) {
            return Err(Diagnostic::new(
                K::DuplicateLine,
                w,
                format!("line `{}` already exists", w.text),
            ));
        }
        self.map.insert(w.text.clone(), LineState::Live(w.clone()));
        Ok(())
    }

    fn require_live(&self, w: &Word) -> Result<(), Diagnostic> {
        match self.map.get(&w.text) {
            None => Err(Diagnostic::new(
                K::UndeclaredLine,
                w,
                format!("line `{}` is not produced by any earlier statement", w.text),
            )),
            Some(LineState::Retired { how, at }) => Err(Diagnostic::new(
                K::LineConsumed,
                w,
                format!("line `{}` was {how} at {}:{}", w.text, at.line, at.column),
            )),
            Some(LineState::Live(_)) => Ok(()),
        }
    }

    fn detect(&mut self, w: &Word, how: &'static str) -> Result<(), Diagnostic> {
        if let Some(LineState::Retired { how: prev, at }) = self.map.get(&w.text) {
            if *prev == "detected" || *prev == "heralded" {
                return Err(Diagnostic::new(
                    K::DuplicateDetector,
                    w,
                    format!("line `{}` was already {prev} at {}:{}", w.text, at.line, at.column),
                ));
            }
        }
        self.require_live(w)?;
        self.retire(w, how);
        Ok(())
    }

    fn retire(&mut self, w: &Word, how: &'static str) {
        self.map.insert(
            w.text.clone(),
            LineState::Retired {
                how,
                at: w.clone(),
            },
        );
    }

    fn first_live(&self) -> Option<&Word> {
        self.map
            .values()
            .filter_map(|s| match s {
                LineState::Live(w) => Some(w),
                _ => None,
            })
            .min_by_key(|w| (w.line, w.column))
    }
}

fn distinct(words: &[Word]) -> Result<(), Diagnostic> {
    for (i, w) in words.iter().enumerate() {
        if words[..i].iter().any(|v| v.text == w.text) {
            return Err(Diagnostic::new(
                K::DuplicateLine,
                w,
                format!("line `{}` listed twice", w.text),
            ));
        }
    }
    Ok(())
}

fn names(words: &[Word]) -> Vec<String> {
    words.iter().map(|w| w.text.clone()).collect()
}

fn settings(ast: &NetlistAst) -> Result<FockConfig, Diagnostic> {
    let mut config = FockConfig::default();
    for st in &ast.statements {
        let StatementKind::Set { key, value } = &st.kind else {
            continue;
        };
        let parse = |min: f64, max: f64, integer: bool| -> Result<f64, Diagnostic> {
            let x = match value.text.parse::<f64>() {
                Ok(x) if x.is_finite() && (!integer || x.fract() == 0.0) => x,
                _ => {
                    return Err(Diagnostic::new(
                        K::TypeMismatch,
                        value,
                        format!("`{}` expects a number, found `{}`", key.text, value.text),
                    ))
                }
            };
            check_range(&key.text, x, value, min, max)
        };
        match key.as_str() {
            "nmax" => config.n_max = parse(1.0, MAX_NMAX, true)? as u32,
            "bins" => config.bins = parse(1.0, MAX_BINS, true)? as u8,
            "prune" => config.prune = parse(0.0, MAX_PRUNE, false)?,
            other => {
                return Err(Diagnostic::new(
                    K::UnknownKey,
                    key,
                    format!("unknown setting `{other}` (allowed: nmax, bins, prune)"),
                ))
            }
        }
    }
    Ok(config)
}

fn source(
    kind: &Word,
    lines: &[Word],
    kvs: &[KeyValue],
) -> Result<SourceSpec, Diagnostic> {
    let source_kind = match kind.as_str() {
        "spdc" => {
            let p = Params::new(kind, kvs, &["p", "order", "bell"])?;
            let bell = match p.get("bell") {
                None => DEFAULT_BELL,
                Some(w) => w.text.parse::<BellKind>().map_err(|e| {
                    Diagnostic::new(K::TypeMismatch, w, format!("{e} (psim, psip, phip, phim)"))
                })?,
            };
            SourceKind::SpdcPair {
                p: p.ranged("p", Some(DEFAULT_PAIR_PROB), 0.0, MAX_PAIR_PROB)?,
                order: p.integer("order", DEFAULT_ORDER as f64, 1.0, 2.0)? as u8,
                bell,
            }
        }
        "single" => {
            let p = Params::new(kind, kvs, &["pol", "phase"])?;
            SourceKind::SinglePhoton {
                polarization: p.polarization()?,
            }
        }
        "coherent" => {
            let p = Params::new(kind, kvs, &["mu", "pol", "phase", "nmax"])?;
            SourceKind::WeakCoherent {
                mu: p.ranged("mu", None, 0.0, MAX_MU)?,
                polarization: p.polarization()?,
                n_max: p.integer("nmax", DEFAULT_COHERENT_NMAX as f64, 0.0, MAX_NMAX)? as u32,
            }
        }
        "vacuum" => {
            Params::new(kind, kvs, &[])?;
            SourceKind::Vacuum
        }
        other => {
            return Err(Diagnostic::new(
                K::UnknownKind,
                kind,
                format!("unknown source kind `{other}` (spdc, single, coherent, vacuum)"),
            ))
        }
    };
    distinct(lines)?;
    SourceSpec::new(source_kind, names(lines))
        .map_err(|e| Diagnostic::new(K::ParamOutOfRange, kind, e.to_string()))
}

fn element(
    config: FockConfig,
    kind: &Word,
    inputs: &[Word],
    outputs: &[Word],
    kvs: &[KeyValue],
) -> Result<Element, Diagnostic> {
    let element_kind = match kind.as_str() {
        "hwp" => ElementKind::Hwp {
            theta: Params::new(kind, kvs, &["theta"])?.angle("theta")?,
        },
        "qwp" => ElementKind::Qwp {
            theta: Params::new(kind, kvs, &["theta"])?.angle("theta")?,
        },
        "polarizer" => ElementKind::Polarizer {
            theta: Params::new(kind, kvs, &["theta"])?.angle("theta")?,
        },
        "mismatch" => {
            let lambda = Params::new(kind, kvs, &["lambda"])?.ranged("lambda", None, 0.0, 1.0)?;
            if config.bins < 2 {
                return Err(Diagnostic::new(
                    K::ParamOutOfRange,
                    kind,
                    format!("`mismatch` needs at least 2 temporal bins, have {}", config.bins),
                ));
            }
            ElementKind::Mismatch { lambda }
        }
        "pauli" => {
            let p = Params::new(kind, kvs, &["op"])?;
            let w = p.get("op").ok_or_else(|| {
                Diagnostic::new(K::MissingParam, kind, "`pauli` requires `op=`")
            })?;
            let op = match w.as_str() {
                "X" => PauliKind::X,
                "Y" => PauliKind::Y,
                "Z" => PauliKind::Z,
                other => {
                    return Err(Diagnostic::new(
                        K::TypeMismatch,
                        w,
                        format!("`op` must be X, Y or Z, found `{other}`"),
                    ))
                }
            };
            ElementKind::Pauli(op)
        }
        "pbs" => {
            Params::new(kind, kvs, &[])?;
            ElementKind::Pbs
        }
        "pbs45" => {
            Params::new(kind, kvs, &[])?;
            ElementKind::Pbs45
        }
        other => {
            return Err(Diagnostic::new(
                K::UnknownKind,
                kind,
                format!(
                    "unknown element kind `{other}` (hwp, qwp, polarizer, mismatch, pauli, pbs, pbs45)"
                ),
            ))
        }
    };
    distinct(inputs)?;
    distinct(outputs)?;
    Element::new(element_kind, names(inputs), names(outputs))
        .map_err(|e| Diagnostic::new(K::ParamOutOfRange, kind, e.to_string()))
}

fn detector(kind: &Word, line: &Word, kvs: &[KeyValue]) -> Result<DetectorSpec, Diagnostic> {
    let analysis = match kind.as_str() {
        "hv" => Analysis::Hv,
        "pm" => Analysis::Pm,
        "circ" => Analysis::Circ,
        "open" => Analysis::Open,
        "polarizer" => {
            let theta = Params::new(kind, kvs, &["theta", "eff"])?.angle("theta")?;
            Analysis::Polarizer(theta)
        }
        other => {
            return Err(Diagnostic::new(
                K::UnknownKind,
                kind,
                format!("unknown detector kind `{other}` (hv, pm, circ, polarizer, open)"),
            ))
        }
    };
    let allowed: &[&str] = if matches!(analysis, Analysis::Polarizer(_)) {
        &["theta", "eff"]
    } else {
        &["eff"]
    };
    let p = Params::new(kind, kvs, allowed)?;
    let eff = p.ranged("eff", Some(1.0), 0.0, 1.0)?;
    DetectorSpec::new(line.text.clone(), analysis)
        .with_efficiency(eff)
        .map_err(|e| Diagnostic::new(K::ParamOutOfRange, kind, e.to_string()))
}

/// Validates the AST and lowers it to a [`Circuit`], stopping at the first diagnostic.
pub fn compile(ast: &NetlistAst) -> Result<Circuit, Diagnostic> {
    let config = settings(ast)?;
    let mut circuit = Circuit::new(config);
    let mut lines = Lines::default();
    let mut scan: Option<(&Word, &Word, &Word, &Word, &Word, &Word)> = None;

    for st in &ast.statements {
        match &st.kind {
            StatementKind::Set { .. } => {}
            StatementKind::Source {
                kind,
                lines: outs,
                params,
            } => {
                let spec = source(kind, outs, params)?;
                for w in outs {
                    lines.declare(w)?;
                }
                circuit.push(Stage::Source(spec));
            }
            StatementKind::Elem {
                kind,
                inputs,
                outputs,
                params,
            } => {
                let e = element(config, kind, inputs, outputs, params)?;
                for w in inputs {
                    lines.require_live(w)?;
                }
                for w in outputs {
                    if !inputs.iter().any(|i| i.text == w.text) {
                        lines.declare(w)?;
                    }
                }
                for w in inputs {
                    if !outputs.is_empty() && !outputs.iter().any(|o| o.text == w.text) {
                        lines.retire(w, "renamed");
                    }
                }
                circuit.push(Stage::Element(e));
            }
            StatementKind::Herald { line, outcome } => {
                lines.detect(line, "heralded")?;
                circuit.push(Stage::Herald {
                    line: line.text.clone(),
                    outcome: outcome.text.parse().expect("parser checked outcome"),
                });
            }
            StatementKind::Det { kind, line, params } => {
                let d = detector(kind, line, params)?;
                lines.detect(line, "detected")?;
                circuit.push(Stage::Detector(d));
            }
            StatementKind::Scan {
                variable,
                line,
                from,
                to,
                steps,
            } => {
                if scan.is_some() {
                    return Err(Diagnostic::new(
                        K::MultipleScans,
                        &st.keyword,
                        "only one scan per netlist",
                    ));
                }
                scan = Some((variable, line, from, to, steps, &st.keyword));
            }
        }
    }
    if let Some(w) = lines.first_live() {
        return Err(Diagnostic::new(
            K::LineNeverDetected,
            w,
            format!("line `{}` reaches the end of the table without a detector", w.text),
        ));
    }
    if let Some((variable, line, from, to, steps, _)) = scan {
        if variable.text != "theta" {
            return Err(Diagnostic::new(
                K::ScanTarget,
                variable,
                format!("only the polarizer angle `theta` can be scanned, not `{}`", variable.text),
            ));
        }
        let has_polarizer = circuit.stages.iter().any(|s| {
            matches!(s, Stage::Detector(d) if d.line == line.text && matches!(d.analysis, Analysis::Polarizer(_)))
        });
        if !has_polarizer {
            return Err(Diagnostic::new(
                K::ScanTarget,
                line,
                format!("line `{}` has no polarizer detector to scan", line.text),
            ));
        }
        let n: usize = steps.text.parse().expect("parser checked steps");
        if n < 2 {
            return Err(Diagnostic::new(
                K::ParamOutOfRange,
                steps,
                format!("a scan needs at least 2 steps, got {n}"),
            ));
        }
        circuit.scan = Some(AngleScan {
            line: line.text.clone(),
            from: from.text.parse().expect("parser checked number"),
            to: to.text.parse().expect("parser checked number"),
            steps: n,
        });
    }
    Ok(circuit)
}

const TOL: f64 = 1e-9;

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= TOL
}

fn close_angle(a: f64, b: f64) -> bool {
    let d = (a - b).rem_euclid(180.0);
    d <= TOL || 180.0 - d <= TOL
}

fn same_state(a: &QubitState, b: &QubitState) -> bool {
    a.fidelity(b) >= 1.0 - TOL
}

fn same_source(a: &SourceSpec, b: &SourceSpec) -> bool {
    if a.lines() != b.lines() {
        return false;
    }
    match (a.kind(), b.kind()) {
        (
            SourceKind::SpdcPair { p, order, bell },
            SourceKind::SpdcPair {
                p: p2,
                order: o2,
                bell: b2,
            },
        ) => close(*p, *p2) && order == o2 && bell == b2,
        (
            SourceKind::WeakCoherent {
                mu,
                polarization,
                n_max,
            },
            SourceKind::WeakCoherent {
                mu: m2,
                polarization: p2,
                n_max: n2,
            },
        ) => close(*mu, *m2) && same_state(polarization, p2) && n_max == n2,
        (
            SourceKind::SinglePhoton { polarization },
            SourceKind::SinglePhoton { polarization: p2 },
        ) => same_state(polarization, p2),
        (SourceKind::Vacuum, SourceKind::Vacuum) => true,
        _ => false,
    }
}

fn same_element_kind(a: &ElementKind, b: &ElementKind) -> bool {
    match (a, b) {
        (ElementKind::Hwp { theta: x }, ElementKind::Hwp { theta: y })
        | (ElementKind::Qwp { theta: x }, ElementKind::Qwp { theta: y })
        | (ElementKind::Polarizer { theta: x }, ElementKind::Polarizer { theta: y }) => {
            close_angle(*x, *y)
        }
        (ElementKind::Mismatch { lambda: x }, ElementKind::Mismatch { lambda: y }) => close(*x, *y),
        _ => a == b,
    }
}

fn same_analysis(a: &Analysis, b: &Analysis) -> bool {
    match (a, b) {
        (Analysis::Polarizer(x), Analysis::Polarizer(y)) => close_angle(*x, *y),
        _ => a == b,
    }
}

/// Structural equality with floating-point parameters compared to 1e-9 and
/// polarization states compared up to global phase.
pub fn equivalent(a: &Circuit, b: &Circuit) -> bool {
    if a.config != b.config || a.stages.len() != b.stages.len() {
        return false;
    }
    let stages = a.stages.iter().zip(&b.stages).all(|pair| match pair {
        (Stage::Source(x), Stage::Source(y)) => same_source(x, y),
        (Stage::Element(x), Stage::Element(y)) => {
            x.inputs() == y.inputs()
                && x.outputs() == y.outputs()
                && same_element_kind(x.kind(), y.kind())
        }
        (Stage::Detector(x), Stage::Detector(y)) => {
            x.line == y.line
                && close(x.efficiency, y.efficiency)
                && same_analysis(&x.analysis, &y.analysis)
        }
        (x @ Stage::Herald { .. }, y @ Stage::Herald { .. }) => x == y,
        _ => false,
    });
    let scans = match (&a.scan, &b.scan) {
        (None, None) => true,
        (Some(x), Some(y)) => {
            x.line == y.line && close(x.from, y.from) && close(x.to, y.to) && x.steps == y.steps
        }
        _ => false,
    };
    stages && scans
}
