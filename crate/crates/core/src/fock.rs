//! Sparse multi-mode bosonic state algebra.
//!
//! A [`Ket`] stores only the occupied Fock basis states of a fixed, canonically
//! ordered mode [`Registry`]. Modes are `(spatial line, polarization, temporal
//! bin)` triples sorted lexicographically, so two kets over the same lines
//! always agree on the meaning of every occupation index.
//!
//! Linear optical elements act on creation operators, `a†_i -> Σ_j U_ji a†_j`,
//! and [`Ket::apply_mode_unitary`] re-expands every basis term under that
//! substitution. Partial distinguishability is carried by extra temporal bins
//! so every state stays pure.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

pub type C64 = Complex64;

/// Occupation numbers, one entry per registered mode.
pub type Occupation = Vec<u8>;

const UNITARY_TOL: f64 = 1e-10;
const NORM_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FockError {
    #[error("spatial line `{0}` is not registered")]
    UnknownLine(String),
    #[error("mode {0} is not registered")]
    UnknownMode(String),
    #[error("a two-photon state needs two distinct lines, got `{0}` twice")]
    SameLine(String),
    #[error("registries overlap on line `{0}`")]
    OverlappingRegistries(String),
    #[error("operands live on different mode registries")]
    RegistryMismatch,
    #[error("matrix deviates from unitarity by {0:.3e}")]
    NotUnitary(f64),
    #[error("matrix is {rows}x{cols} but {modes} modes were listed")]
    DimensionMismatch { rows: usize, cols: usize, modes: usize },
    #[error("mode {0} listed twice")]
    DuplicateMode(String),
    #[error("temporal bin {bin} outside the configured {bins} bins")]
    BinOutOfRange { bin: u8, bins: u8 },
    #[error("invalid line identifier `{0}`")]
    InvalidLine(String),
    #[error("state is not normalized (|α|²+|β|² = {0})")]
    NotNormalized(f64),
    #[error("occupation vector has length {got}, registry has {expected} modes")]
    BadOccupation { got: usize, expected: usize },
    #[error("at least one temporal bin is required")]
    NoBins,
}

pub type Result<T, E = FockError> = std::result::Result<T, E>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Polarization {
    H,
    V,
}

impl Polarization {
    pub const BOTH: [Polarization; 2] = [Polarization::H, Polarization::V];

    pub fn index(self) -> usize {
        match self {
            Polarization::H => 0,
            Polarization::V => 1,
        }
    }
}

/// One bosonic mode.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ModeLabel {
    pub spatial: String,
    pub polarization: Polarization,
    pub bin: u8,
}

impl ModeLabel {
    pub fn new(spatial: impl Into<String>, polarization: Polarization, bin: u8) -> Self {
        ModeLabel {
            spatial: spatial.into(),
            polarization,
            bin,
        }
    }

    pub fn h(spatial: impl Into<String>) -> Self {
        Self::new(spatial, Polarization::H, 0)
    }

    pub fn v(spatial: impl Into<String>) -> Self {
        Self::new(spatial, Polarization::V, 0)
    }
}

impl fmt::Display for ModeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{:?}:{}", self.spatial, self.polarization, self.bin)
    }
}

/// Truncation and pruning knobs shared by every ket derived from a registry.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FockConfig {
    /// Maximum total photon number kept in any basis term.
    pub n_max: u32,
    /// Amplitudes with magnitude below this are dropped.
    pub prune: f64,
    /// Temporal bins per (line, polarization).
    pub bins: u8,
}

impl Default for FockConfig {
    fn default() -> Self {
        FockConfig {
            n_max: 6,
            prune: 1e-14,
            bins: 2,
        }
    }
}

pub(crate) fn valid_line_name(name: &str) -> bool {
    !name.is_empty()
        && name
            .chars()
            .all(|c| c.is_alphanumeric() || matches!(c, '_' | '\'' | '′' | '.'))
}

/// Ordered set of modes a ket is expressed over.
#[derive(Clone, Debug, PartialEq)]
pub struct Registry {
    config: FockConfig,
    modes: Vec<ModeLabel>,
}

impl Registry {
    /// Registers both polarizations in every temporal bin of each line.
    pub fn new<S: AsRef<str>>(config: FockConfig, lines: &[S]) -> Result<Self> {
        if config.bins == 0 {
            return Err(FockError::NoBins);
        }
        let mut modes = Vec::with_capacity(lines.len() * 2 * config.bins as usize);
        let mut seen = BTreeSet::new();
        for line in lines {
            let line = line.as_ref();
            if !valid_line_name(line) {
                return Err(FockError::InvalidLine(line.to_string()));
            }
            if !seen.insert(line.to_string()) {
                return Err(FockError::DuplicateMode(line.to_string()));
            }
            for pol in Polarization::BOTH {
                for bin in 0..config.bins {
                    modes.push(ModeLabel::new(line, pol, bin));
                }
            }
        }
        modes.sort();
        Ok(Registry { config, modes })
    }

    pub fn config(&self) -> FockConfig {
        self.config
    }

    pub fn modes(&self) -> &[ModeLabel] {
        &self.modes
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn index_of(&self, mode: &ModeLabel) -> Option<usize> {
        self.modes.binary_search(mode).ok()
    }

    pub fn require(&self, mode: &ModeLabel) -> Result<usize> {
        if mode.bin >= self.config.bins {
            return Err(FockError::BinOutOfRange {
                bin: mode.bin,
                bins: self.config.bins,
            });
        }
        self.index_of(mode)
            .ok_or_else(|| FockError::UnknownMode(mode.to_string()))
    }

    pub fn has_line(&self, line: &str) -> bool {
        self.index_of(&ModeLabel::h(line)).is_some()
    }

    /// Distinct spatial lines in canonical order.
    pub fn lines(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for m in &self.modes {
            if out.last() != Some(&m.spatial.as_str()) {
                out.push(&m.spatial);
            }
        }
        out
    }

    /// Mode indices of `line`, one `[H, V]` pair per temporal bin.
    pub fn line_modes(&self, line: &str) -> Result<Vec<[usize; 2]>> {
        if !self.has_line(line) {
            return Err(FockError::UnknownLine(line.to_string()));
        }
        Ok((0..self.config.bins)
            .map(|bin| {
                let h = self.index_of(&ModeLabel::new(line, Polarization::H, bin));
                let v = self.index_of(&ModeLabel::new(line, Polarization::V, bin));
                [h.expect("registered"), v.expect("registered")]
            })
            .collect())
    }

    pub fn vacuum(self: &Arc<Self>) -> Ket {
        let mut terms = BTreeMap::new();
        terms.insert(vec![0; self.len()], C64::new(1.0, 0.0));
        Ket {
            registry: Arc::clone(self),
            terms,
            norm_tracked: 1.0,
        }
    }

    /// The null vector (no terms).
    pub fn zero(self: &Arc<Self>) -> Ket {
        Ket {
            registry: Arc::clone(self),
            terms: BTreeMap::new(),
            norm_tracked: 1.0,
        }
    }

    /// A single basis state. Occupations above `n_max` are accepted as given.
    pub fn basis(self: &Arc<Self>, occupation: Occupation) -> Result<Ket> {
        if occupation.len() != self.len() {
            return Err(FockError::BadOccupation {
                got: occupation.len(),
                expected: self.len(),
            });
        }
        let mut terms = BTreeMap::new();
        terms.insert(occupation, C64::new(1.0, 0.0));
        Ok(Ket {
            registry: Arc::clone(self),
            terms,
            norm_tracked: 1.0,
        })
    }

    /// Basis state with the listed photons placed, everything else empty.
    pub fn basis_from(self: &Arc<Self>, photons: &[(ModeLabel, u8)]) -> Result<Ket> {
        let mut occ = vec![0u8; self.len()];
        for (mode, n) in photons {
            occ[self.require(mode)?] += n;
        }
        self.basis(occ)
    }

    /// One of the four polarization Bell states with a photon in each of `i`, `j`.
    pub fn bell(self: &Arc<Self>, kind: BellKind, i: &str, j: &str) -> Result<Ket> {
        if i == j {
            return Err(FockError::SameLine(i.to_string()));
        }
        for line in [i, j] {
            if !self.has_line(line) {
                return Err(FockError::UnknownLine(line.to_string()));
            }
        }
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let mut ket = self.zero();
        for (pi, pj, sign) in kind.components() {
            let term = self.basis_from(&[
                (ModeLabel::new(i, pi, 0), 1),
                (ModeLabel::new(j, pj, 0), 1),
            ])?;
            ket = ket.add(&term.scaled(C64::new(sign * s, 0.0)))?;
        }
        Ok(ket)
    }

    fn merged(&self, other: &Registry) -> Result<Registry> {
        let ours: BTreeSet<&str> = self.lines().into_iter().collect();
        for line in other.lines() {
            if ours.contains(line) {
                return Err(FockError::OverlappingRegistries(line.to_string()));
            }
        }
        let mut modes: Vec<ModeLabel> = self.modes.iter().chain(&other.modes).cloned().collect();
        modes.sort();
        Ok(Registry {
            config: self.config,
            modes,
        })
    }
}

/// Shorthand for building a registry ready to hand out kets.
pub fn registry<S: AsRef<str>>(config: FockConfig, lines: &[S]) -> Result<Arc<Registry>> {
    Registry::new(config, lines).map(Arc::new)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum BellKind {
    PhiPlus,
    PhiMinus,
    PsiPlus,
    PsiMinus,
}

impl BellKind {
    pub const ALL: [BellKind; 4] = [
        BellKind::PsiMinus,
        BellKind::PsiPlus,
        BellKind::PhiPlus,
        BellKind::PhiMinus,
    ];

    /// `(pol_i, pol_j, sign)` of the two product terms.
    fn components(self) -> [(Polarization, Polarization, f64); 2] {
        use Polarization::{H, V};
        match self {
            BellKind::PhiPlus => [(H, H, 1.0), (V, V, 1.0)],
            BellKind::PhiMinus => [(H, H, 1.0), (V, V, -1.0)],
            BellKind::PsiPlus => [(H, V, 1.0), (V, H, 1.0)],
            BellKind::PsiMinus => [(H, V, 1.0), (V, H, -1.0)],
        }
    }

    /// Two-qubit amplitudes indexed by `2*pol_i + pol_j`.
    pub fn amplitudes(self) -> [C64; 4] {
        let mut out = [C64::new(0.0, 0.0); 4];
        for (pi, pj, sign) in self.components() {
            out[2 * pi.index() + pj.index()] = C64::new(sign * std::f64::consts::FRAC_1_SQRT_2, 0.0);
        }
        out
    }

    pub fn name(self) -> &'static str {
        match self {
            BellKind::PhiPlus => "phip",
            BellKind::PhiMinus => "phim",
            BellKind::PsiPlus => "psip",
            BellKind::PsiMinus => "psim",
        }
    }
}

impl FromStr for BellKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "phip" => Ok(BellKind::PhiPlus),
            "phim" => Ok(BellKind::PhiMinus),
            "psip" => Ok(BellKind::PsiPlus),
            "psim" => Ok(BellKind::PsiMinus),
            other => Err(format!("unknown Bell state `{other}`")),
        }
    }
}

impl fmt::Display for BellKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Polarization qubit `α|H⟩ + β|V⟩`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct QubitState {
    pub alpha: C64,
    pub beta: C64,
}

impl QubitState {
    pub fn new(alpha: C64, beta: C64) -> Result<Self> {
        let n = alpha.norm_sqr() + beta.norm_sqr();
        if (n - 1.0).abs() > NORM_TOL {
            return Err(FockError::NotNormalized(n));
        }
        Ok(QubitState { alpha, beta })
    }

    /// Normalizes an arbitrary non-zero pair.
    pub fn normalized(alpha: C64, beta: C64) -> Self {
        let n = (alpha.norm_sqr() + beta.norm_sqr()).sqrt();
        QubitState {
            alpha: alpha / n,
            beta: beta / n,
        }
    }

    pub fn h() -> Self {
        QubitState {
            alpha: C64::new(1.0, 0.0),
            beta: C64::new(0.0, 0.0),
        }
    }

    pub fn v() -> Self {
        QubitState {
            alpha: C64::new(0.0, 0.0),
            beta: C64::new(1.0, 0.0),
        }
    }

    /// Linear polarization `cosθ|H⟩ + sinθ|V⟩`, θ in degrees.
    pub fn linear(theta_deg: f64) -> Self {
        let t = theta_deg.to_radians();
        QubitState {
            alpha: C64::new(t.cos(), 0.0),
            beta: C64::new(t.sin(), 0.0),
        }
    }

    pub fn plus() -> Self {
        Self::normalized(C64::new(1.0, 0.0), C64::new(1.0, 0.0))
    }

    pub fn minus() -> Self {
        Self::normalized(C64::new(1.0, 0.0), C64::new(-1.0, 0.0))
    }

    /// `(|H⟩ - i|V⟩)/√2`
    pub fn left() -> Self {
        Self::normalized(C64::new(1.0, 0.0), C64::new(0.0, -1.0))
    }

    /// `(|H⟩ + i|V⟩)/√2`
    pub fn right() -> Self {
        Self::normalized(C64::new(1.0, 0.0), C64::new(0.0, 1.0))
    }

    /// The state orthogonal to this one.
    pub fn orthogonal(&self) -> Self {
        QubitState {
            alpha: -self.beta.conj(),
            beta: self.alpha.conj(),
        }
    }

    pub fn inner(&self, other: &QubitState) -> C64 {
        self.alpha.conj() * other.alpha + self.beta.conj() * other.beta
    }

    pub fn fidelity(&self, other: &QubitState) -> f64 {
        self.inner(other).norm_sqr()
    }

    pub fn as_array(&self) -> [C64; 2] {
        [self.alpha, self.beta]
    }

    /// True when the state has a circular component.
    pub fn is_elliptical(&self) -> bool {
        (self.alpha.conj() * self.beta).im.abs() > 1e-12
    }
}

/// Complex square matrix acting on a list of modes, column `i` being the image
/// of `a†_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct ModeMatrix {
    dim: usize,
    data: Vec<C64>,
}

impl ModeMatrix {
    pub fn from_rows(rows: &[Vec<C64>]) -> Self {
        let dim = rows.len();
        let mut data = Vec::with_capacity(dim * dim);
        for row in rows {
            assert_eq!(row.len(), dim, "matrix must be square");
            data.extend_from_slice(row);
        }
        ModeMatrix { dim, data }
    }

    pub fn from_2x2(m: [[C64; 2]; 2]) -> Self {
        ModeMatrix {
            dim: 2,
            data: vec![m[0][0], m[0][1], m[1][0], m[1][1]],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut data = vec![C64::new(0.0, 0.0); dim * dim];
        for i in 0..dim {
            data[i * dim + i] = C64::new(1.0, 0.0);
        }
        ModeMatrix { dim, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.data[row * self.dim + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: C64) {
        self.data[row * self.dim + col] = value;
    }

    pub fn mul(&self, other: &ModeMatrix) -> ModeMatrix {
        assert_eq!(self.dim, other.dim);
        let n = self.dim;
        let mut out = ModeMatrix::identity(n);
        for r in 0..n {
            for c in 0..n {
                let mut acc = C64::new(0.0, 0.0);
                for k in 0..n {
                    acc += self.get(r, k) * other.get(k, c);
                }
                out.set(r, c, acc);
            }
        }
        out
    }

    pub fn adjoint(&self) -> ModeMatrix {
        let n = self.dim;
        let mut out = ModeMatrix::identity(n);
        for r in 0..n {
            for c in 0..n {
                out.set(r, c, self.get(c, r).conj());
            }
        }
        out
    }

    /// Largest entry of `|U U† - 1|`.
    pub fn unitarity_defect(&self) -> f64 {
        let p = self.mul(&self.adjoint());
        let mut worst: f64 = 0.0;
        for r in 0..self.dim {
            for c in 0..self.dim {
                let target = if r == c { 1.0 } else { 0.0 };
                worst = worst.max((p.get(r, c) - target).norm());
            }
        }
        worst
    }

    pub fn max_abs_diff(&self, other: &ModeMatrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

/// Outcome of a projective filter. `state` is `None` for an impossible outcome.
#[derive(Clone, Debug)]
pub struct Projection {
    pub probability: f64,
    pub state: Option<Ket>,
}

/// Sparse superposition of Fock basis states.
#[derive(Clone, Debug)]
pub struct Ket {
    registry: Arc<Registry>,
    terms: BTreeMap<Occupation, C64>,
    norm_tracked: f64,
}

impl Ket {
    pub fn registry(&self) -> &Arc<Registry> {
        &self.registry
    }

    pub fn config(&self) -> FockConfig {
        self.registry.config
    }

    /// Product of success probabilities of every projection applied so far.
    pub fn norm_tracked(&self) -> f64 {
        self.norm_tracked
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Occupation, &C64)> {
        self.terms.iter()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn amplitude(&self, occupation: &[u8]) -> C64 {
        self.terms
            .get(occupation)
            .copied()
            .unwrap_or(C64::new(0.0, 0.0))
    }

    pub fn norm_sqr(&self) -> f64 {
        self.terms.values().map(|a| a.norm_sqr()).sum()
    }

    pub fn normalize(&self) -> Ket {
        let n = self.norm_sqr().sqrt();
        if n == 0.0 {
            return self.clone();
        }
        self.scaled(C64::new(1.0 / n, 0.0))
    }

    pub fn scaled(&self, c: C64) -> Ket {
        Ket {
            registry: Arc::clone(&self.registry),
            terms: self.terms.iter().map(|(k, a)| (k.clone(), a * c)).collect(),
            norm_tracked: self.norm_tracked,
        }
    }

    /// Amplitude-wise sum. `norm_tracked` of `self` is kept.
    pub fn add(&self, other: &Ket) -> Result<Ket> {
        self.same_registry(other)?;
        let mut terms = self.terms.clone();
        for (k, a) in &other.terms {
            *terms.entry(k.clone()).or_default() += a;
        }
        let mut out = self.with_terms(terms);
        out.prune();
        Ok(out)
    }

    /// Applies `a†` on `mode`. Terms that would exceed `n_max` are truncated.
    pub fn create(&self, mode: &ModeLabel) -> Result<Ket> {
        let idx = self.registry.require(mode)?;
        Ok(self.create_at(idx))
    }

    pub(crate) fn create_at(&self, idx: usize) -> Ket {
        let n_max = self.registry.config.n_max as usize;
        let mut terms = BTreeMap::new();
        for (occ, a) in &self.terms {
            let total: usize = occ.iter().map(|&n| n as usize).sum();
            if total + 1 > n_max {
                continue;
            }
            let mut next = occ.clone();
            next[idx] += 1;
            let factor = (next[idx] as f64).sqrt();
            *terms.entry(next).or_insert(C64::new(0.0, 0.0)) += a * factor;
        }
        self.with_terms(terms)
    }

    /// Product state over the union of both registries.
    pub fn tensor(&self, other: &Ket) -> Result<Ket> {
        let merged = Arc::new(self.registry.merged(&other.registry)?);
        let left_map: Vec<usize> = self
            .registry
            .modes
            .iter()
            .map(|m| merged.index_of(m).expect("merged"))
            .collect();
        let right_map: Vec<usize> = other
            .registry
            .modes
            .iter()
            .map(|m| merged.index_of(m).expect("merged"))
            .collect();
        let n_max = merged.config.n_max as usize;
        let mut terms = BTreeMap::new();
        for (lo, la) in &self.terms {
            let lt: usize = lo.iter().map(|&n| n as usize).sum();
            for (ro, ra) in &other.terms {
                let rt: usize = ro.iter().map(|&n| n as usize).sum();
                if lt + rt > n_max {
                    continue;
                }
                let mut occ = vec![0u8; merged.len()];
                for (i, &n) in lo.iter().enumerate() {
                    occ[left_map[i]] = n;
                }
                for (i, &n) in ro.iter().enumerate() {
                    occ[right_map[i]] = n;
                }
                terms.insert(occ, la * ra);
            }
        }
        let mut out = Ket {
            registry: merged,
            terms,
            norm_tracked: self.norm_tracked * other.norm_tracked,
        };
        out.prune();
        Ok(out)
    }

    /// Applies the mode transformation `a†_i -> Σ_j U_ji a†_j` over the listed modes.
    pub fn apply_mode_unitary(&self, modes: &[ModeLabel], u: &ModeMatrix) -> Result<Ket> {
        if u.dim() != modes.len() {
            return Err(FockError::DimensionMismatch {
                rows: u.dim(),
                cols: u.dim(),
                modes: modes.len(),
            });
        }
        let defect = u.unitarity_defect();
        if defect > UNITARY_TOL {
            return Err(FockError::NotUnitary(defect));
        }
        let mut idx = Vec::with_capacity(modes.len());
        for m in modes {
            let i = self.registry.require(m)?;
            if idx.contains(&i) {
                return Err(FockError::DuplicateMode(m.to_string()));
            }
            idx.push(i);
        }
        Ok(self.apply_unchecked(&idx, u))
    }

    /// Same as [`Ket::apply_mode_unitary`] for pre-validated mode indices.
    pub(crate) fn apply_unchecked(&self, idx: &[usize], u: &ModeMatrix) -> Ket {
        // sub-occupations are packed into a u64 key; wider unitaries fall back to vectors
        let packed = idx.len() <= 8;
        let mut cache: HashMap<u64, Vec<(Vec<u8>, C64)>> = HashMap::new();
        let mut wide: HashMap<Vec<u8>, Vec<(Vec<u8>, C64)>> = HashMap::new();
        let mut out: Vec<(Occupation, C64)> = Vec::with_capacity(self.terms.len());
        for (occ, amp) in &self.terms {
            if idx.iter().all(|&i| occ[i] == 0) {
                out.push((occ.clone(), *amp));
                continue;
            }
            let expansion = if packed {
                let key = idx.iter().fold(0u64, |k, &i| (k << 8) | occ[i] as u64);
                cache.entry(key).or_insert_with(|| {
                    let sub: Vec<u8> = idx.iter().map(|&i| occ[i]).collect();
                    expand_substitution(&sub, u)
                })
            } else {
                let sub: Vec<u8> = idx.iter().map(|&i| occ[i]).collect();
                wide.entry(sub)
                    .or_insert_with_key(|sub| expand_substitution(sub, u))
            };
            for (sub_out, coeff) in expansion.iter() {
                let mut next = occ.clone();
                for (k, &i) in idx.iter().enumerate() {
                    next[i] = sub_out[k];
                }
                out.push((next, amp * coeff));
            }
        }
        out.sort_by(|a, b| a.0.cmp(&b.0));
        let mut merged: Vec<(Occupation, C64)> = Vec::with_capacity(out.len());
        for (occ, a) in out {
            match merged.last_mut() {
                Some((last, acc)) if *last == occ => *acc += a,
                _ => merged.push((occ, a)),
            }
        }
        let mut ket = self.with_terms(merged.into_iter().collect());
        ket.prune();
        ket
    }

    /// Keeps the terms selected by `keep`, renormalizes, and reports the
    /// probability of that outcome relative to the current norm.
    pub fn project<F>(&self, keep: F) -> Projection
    where
        F: Fn(&[u8]) -> bool,
    {
        let total = self.norm_sqr();
        let terms: BTreeMap<Occupation, C64> = self
            .terms
            .iter()
            .filter(|(occ, _)| keep(occ))
            .map(|(k, a)| (k.clone(), *a))
            .collect();
        let kept: f64 = terms.values().map(|a| a.norm_sqr()).sum();
        if total == 0.0 || kept == 0.0 {
            return Projection {
                probability: 0.0,
                state: None,
            };
        }
        let probability = (kept / total).min(1.0);
        let scale = C64::new(1.0 / kept.sqrt(), 0.0);
        let terms = terms.into_iter().map(|(k, a)| (k, a * scale)).collect();
        let mut state = self.with_terms(terms);
        state.norm_tracked = (self.norm_tracked * probability).clamp(0.0, 1.0);
        Projection {
            probability,
            state: Some(state),
        }
    }

    pub fn inner_product(&self, other: &Ket) -> Result<C64> {
        self.same_registry(other)?;
        let mut acc = C64::new(0.0, 0.0);
        for (k, a) in &self.terms {
            if let Some(b) = other.terms.get(k) {
                acc += a.conj() * b;
            }
        }
        Ok(acc)
    }

    /// `|⟨a|b⟩|²` of the normalized states.
    pub fn fidelity(&self, other: &Ket) -> Result<f64> {
        let ip = self.inner_product(other)?;
        let na = self.norm_sqr();
        let nb = other.norm_sqr();
        if na == 0.0 || nb == 0.0 {
            return Ok(0.0);
        }
        Ok(ip.norm_sqr() / (na * nb))
    }

    /// Renames spatial lines. Targets must not collide with lines left untouched.
    pub fn relabel(&self, renames: &[(&str, &str)]) -> Result<Ket> {
        for (from, to) in renames {
            if !self.registry.has_line(from) {
                return Err(FockError::UnknownLine(from.to_string()));
            }
            if !valid_line_name(to) {
                return Err(FockError::InvalidLine(to.to_string()));
            }
        }
        let rename = |line: &str| -> String {
            renames
                .iter()
                .find(|(f, _)| *f == line)
                .map(|(_, t)| t.to_string())
                .unwrap_or_else(|| line.to_string())
        };
        let mut modes: Vec<ModeLabel> = self
            .registry
            .modes
            .iter()
            .map(|m| ModeLabel::new(rename(&m.spatial), m.polarization, m.bin))
            .collect();
        let mut sorted = modes.clone();
        sorted.sort();
        for w in sorted.windows(2) {
            if w[0] == w[1] {
                return Err(FockError::DuplicateMode(w[0].to_string()));
            }
        }
        let registry = Arc::new(Registry {
            config: self.registry.config,
            modes: sorted,
        });
        let map: Vec<usize> = modes
            .drain(..)
            .map(|m| registry.index_of(&m).expect("relabelled"))
            .collect();
        let terms = self
            .terms
            .iter()
            .map(|(occ, a)| {
                let mut next = vec![0u8; occ.len()];
                for (i, &n) in occ.iter().enumerate() {
                    next[map[i]] = n;
                }
                (next, *a)
            })
            .collect();
        Ok(Ket {
            registry,
            terms,
            norm_tracked: self.norm_tracked,
        })
    }

    /// Total photons on `line` in term `occ`, summed over polarizations and bins.
    pub fn photons_on(&self, occ: &[u8], line: &str) -> Result<u32> {
        Ok(self
            .registry
            .line_modes(line)?
            .iter()
            .map(|pair| occ[pair[0]] as u32 + occ[pair[1]] as u32)
            .sum())
    }

    /// Lines carrying at least one photon in some term.
    pub fn occupied_lines(&self) -> Vec<String> {
        let mut occupied = BTreeSet::new();
        for occ in self.terms.keys() {
            for (i, &n) in occ.iter().enumerate() {
                if n > 0 {
                    occupied.insert(self.registry.modes[i].spatial.clone());
                }
            }
        }
        occupied.into_iter().collect()
    }

    /// Canonical text dump: one `<occupations> <re> <im>` line per term.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (occ, a) in &self.terms {
            let occ: Vec<String> = occ.iter().map(|n| n.to_string()).collect();
            out.push_str(&format!("{} {:.11e} {:.11e}\n", occ.join(","), a.re, a.im));
        }
        out
    }

    fn same_registry(&self, other: &Ket) -> Result<()> {
        if Arc::ptr_eq(&self.registry, &other.registry) || self.registry.modes == other.registry.modes
        {
            Ok(())
        } else {
            Err(FockError::RegistryMismatch)
        }
    }

    fn with_terms(&self, terms: BTreeMap<Occupation, C64>) -> Ket {
        Ket {
            registry: Arc::clone(&self.registry),
            terms,
            norm_tracked: self.norm_tracked,
        }
    }

    fn prune(&mut self) {
        let eps = self.registry.config.prune;
        self.terms.retain(|_, a| a.norm() >= eps && *a != C64::new(0.0, 0.0));
    }
}

impl fmt::Display for Ket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.dump())
    }
}

fn factorial(n: u8) -> f64 {
    (1..=n as u32).map(f64::from).product()
}

/// Expands `Π_i (Σ_j U_ji a†_j)^{n_i} / √(Π n_i!)` one creation operator at a
/// time and returns normalized output amplitudes.
pub(crate) fn expand_substitution(input: &[u8], u: &ModeMatrix) -> Vec<(Vec<u8>, C64)> {
    let k = input.len();
    let mut poly: BTreeMap<Vec<u8>, C64> = BTreeMap::new();
    poly.insert(vec![0; k], C64::new(1.0, 0.0));
    for (i, &n) in input.iter().enumerate() {
        for _ in 0..n {
            let mut next: BTreeMap<Vec<u8>, C64> = BTreeMap::new();
            for (m, c) in &poly {
                for j in 0..k {
                    let uji = u.get(j, i);
                    if uji == C64::new(0.0, 0.0) {
                        continue;
                    }
                    let mut m2 = m.clone();
                    m2[j] += 1;
                    *next.entry(m2).or_insert(C64::new(0.0, 0.0)) += c * uji;
                }
            }
            poly = next;
        }
    }
    let norm_in: f64 = input.iter().map(|&n| factorial(n)).product::<f64>().sqrt();
    poly.into_iter()
        .map(|(m, c)| {
            let norm_out: f64 = m.iter().map(|&n| factorial(n)).product::<f64>().sqrt();
            let amp = c * (norm_out / norm_in);
            (m, amp)
        })
        .filter(|(_, a)| *a != C64::new(0.0, 0.0))
        .collect()
}
