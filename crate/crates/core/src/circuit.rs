//! Ordered optical pipelines and their evaluation.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

use crate::detection::{
    self, AngleScan, DetectionError, DetectorSpec, HeraldRule, Outcome, ScanResult,
};
use crate::fock::{FockConfig, FockError, Ket};
use crate::optics::{Element, OpticsError};
use crate::sources::{SourceError, SourceSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CircuitError {
    #[error(transparent)]
    Fock(#[from] FockError),
    #[error(transparent)]
    Optics(#[from] OpticsError),
    #[error(transparent)]
    Source(#[from] SourceError),
    #[error(transparent)]
    Detection(#[from] DetectionError),
    #[error("circuit has no sources")]
    NoSources,
}

pub type Result<T, E = CircuitError> = std::result::Result<T, E>;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum Stage {
    Source(SourceSpec),
    Element(Element),
    Herald { line: String, outcome: Outcome },
    Detector(DetectorSpec),
}

/// A prepared state restricted to terms that can still give a full coincidence.
#[derive(Clone, Debug)]
pub struct Postselected {
    pub state: Ket,
    /// Probability of the retained terms in the unrestricted state.
    pub kept: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Circuit {
    pub config: FockConfig,
    pub stages: Vec<Stage>,
    pub scan: Option<AngleScan>,
}

impl Circuit {
    pub fn new(config: FockConfig) -> Self {
        Circuit {
            config,
            stages: Vec::new(),
            scan: None,
        }
    }

    pub fn push(&mut self, stage: Stage) -> &mut Self {
        self.stages.push(stage);
        self
    }

    pub fn pipeline_len(&self) -> usize {
        self.stages.len()
    }

    pub fn herald_rule(&self) -> Result<HeraldRule> {
        let requirements = self
            .stages
            .iter()
            .filter_map(|s| match s {
                Stage::Herald { line, outcome } => Some((line.clone(), *outcome)),
                _ => None,
            })
            .collect();
        Ok(HeraldRule::new(requirements)?)
    }

    pub fn detectors(&self) -> Vec<DetectorSpec> {
        self.stages
            .iter()
            .filter_map(|s| match s {
                Stage::Detector(d) => Some(d.clone()),
                _ => None,
            })
            .collect()
    }

    /// State after every source and element, before any detection.
    pub fn prepare(&self) -> Result<Ket> {
        let mut state: Option<Ket> = None;
        for stage in &self.stages {
            match stage {
                Stage::Source(src) => {
                    let ket = src.build(self.config)?;
                    state = Some(match state {
                        Some(s) => s.tensor(&ket)?,
                        None => ket,
                    });
                }
                Stage::Element(e) => {
                    let s = state.as_ref().ok_or(CircuitError::NoSources)?;
                    state = Some(e.apply(s)?);
                }
                Stage::Herald { .. } | Stage::Detector(_) => {}
            }
        }
        state.ok_or(CircuitError::NoSources)
    }

    /// Like [`Circuit::prepare`], but drops terms that cannot produce a full
    /// coincidence as soon as a detected line is final: heralded lines need
    /// exactly one photon, detector lines at least one. Coincidence results
    /// are unchanged; `kept` is the probability that survived.
    pub fn prepare_postselected(&self) -> Result<Postselected> {
        let mut required: BTreeMap<&str, bool> = BTreeMap::new();
        for stage in &self.stages {
            match stage {
                Stage::Herald { line, .. } => {
                    required.insert(line, true);
                }
                Stage::Detector(d) => {
                    required.insert(&d.line, false);
                }
                _ => {}
            }
        }
        // index of the last element reading each line
        let mut last_read: BTreeMap<&str, usize> = BTreeMap::new();
        for (i, stage) in self.stages.iter().enumerate() {
            if let Stage::Element(e) = stage {
                for line in e.inputs() {
                    last_read.insert(line, i);
                }
            }
        }
        let mut state: Option<Ket> = None;
        let mut kept = 1.0;
        let mut done: BTreeSet<String> = BTreeSet::new();
        for (i, stage) in self.stages.iter().enumerate() {
            let next = match stage {
                Stage::Source(src) => {
                    let ket = src.build(self.config)?;
                    match state {
                        Some(s) => s.tensor(&ket)?,
                        None => ket,
                    }
                }
                Stage::Element(e) => e.apply(state.as_ref().ok_or(CircuitError::NoSources)?)?,
                Stage::Herald { .. } | Stage::Detector(_) => continue,
            };
            let reg = next.registry().clone();
            let mut checks = Vec::new();
            for line in reg.lines() {
                let Some(&exact) = required.get(line) else {
                    continue;
                };
                let is_final = last_read.get(line).is_none_or(|&j| j <= i);
                if is_final && !done.contains(line) {
                    done.insert(line.to_string());
                    checks.push((reg.line_modes(line)?, exact));
                }
            }
            state = Some(if checks.is_empty() {
                next
            } else {
                let p = next.project(|occ| {
                    checks.iter().all(|(modes, exact)| {
                        let n: u32 = modes
                            .iter()
                            .map(|[h, v]| occ[*h] as u32 + occ[*v] as u32)
                            .sum();
                        if *exact {
                            n == 1
                        } else {
                            n >= 1
                        }
                    })
                });
                kept *= p.probability;
                match p.state {
                    Some(s) => s,
                    None => {
                        return Err(DetectionError::ZeroProbability(
                            self.herald_rule()?.pattern(),
                        )
                        .into())
                    }
                }
            });
        }
        Ok(Postselected {
            state: state.ok_or(CircuitError::NoSources)?,
            kept,
        })
    }

    /// Prepares, heralds, and evaluates the detector patterns over the scan.
    pub fn run(&self) -> Result<ScanResult> {
        let prepared = self.prepare_postselected()?;
        let mut result = detection::coincidence_scan(
            &prepared.state,
            &self.herald_rule()?,
            &self.detectors(),
            self.scan.as_ref(),
        )?;
        result.herald_joint *= prepared.kept;
        Ok(result)
    }
}
