//! Reference computations that share no code with the sparse engine.
#![allow(dead_code)]

pub mod netlists;

use heraldsim::fock::{ModeMatrix, C64};
use rand::Rng;

pub fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    // Box-Muller
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Haar-ish random unitary: Gram-Schmidt on a complex Gaussian matrix.
pub fn random_unitary<R: Rng>(dim: usize, rng: &mut R) -> Vec<Vec<C64>> {
    let mut cols: Vec<Vec<C64>> = Vec::with_capacity(dim);
    while cols.len() < dim {
        let mut v: Vec<C64> = (0..dim)
            .map(|_| C64::new(gaussian(rng), gaussian(rng)))
            .collect();
        for u in &cols {
            let proj: C64 = u.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
            for (x, y) in v.iter_mut().zip(u) {
                *x -= proj * y;
            }
        }
        let n = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        if n < 1e-8 {
            continue;
        }
        cols.push(v.into_iter().map(|x| x / n).collect());
    }
    // rows[r][col]
    (0..dim).map(|r| (0..dim).map(|k| cols[k][r]).collect()).collect()
}

pub fn to_mode_matrix(u: &[Vec<C64>]) -> ModeMatrix {
    ModeMatrix::from_rows(u)
}

pub fn matmul(a: &[Vec<C64>], b: &[Vec<C64>]) -> Vec<Vec<C64>> {
    let n = a.len();
    (0..n)
        .map(|r| {
            (0..n)
                .map(|col| (0..n).map(|k| a[r][k] * b[k][col]).sum())
                .collect()
        })
        .collect()
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

/// Permanent by the defining sum over permutations.
pub fn permanent(m: &[Vec<C64>]) -> C64 {
    let n = m.len();
    permutations(n)
        .iter()
        .map(|p| (0..n).map(|r| m[r][p[r]]).product::<C64>())
        .sum()
}

fn factorial(n: u8) -> f64 {
    (1..=n as u32).map(|k| k as f64).product()
}

fn expand(occ: &[u8]) -> Vec<usize> {
    occ.iter()
        .enumerate()
        .flat_map(|(i, &n)| std::iter::repeat_n(i, n as usize))
        .collect()
}

/// `⟨out| U |in⟩` for the substitution `a†_i -> Σ_j U[j][i] a†_j`.
pub fn oracle_amplitude(u: &[Vec<C64>], input: &[u8], output: &[u8]) -> C64 {
    let ins = expand(input);
    let outs = expand(output);
    if ins.len() != outs.len() {
        return c(0.0);
    }
    let sub: Vec<Vec<C64>> = outs
        .iter()
        .map(|&j| ins.iter().map(|&i| u[j][i]).collect())
        .collect();
    let norm: f64 = input.iter().chain(output).map(|&n| factorial(n)).product();
    permanent(&sub) / norm.sqrt()
}

/// Every occupation of `modes` modes with exactly `n` photons.
pub fn occupations(modes: usize, n: u8) -> Vec<Vec<u8>> {
    if modes == 0 {
        return if n == 0 { vec![vec![]] } else { vec![] };
    }
    let mut out = Vec::new();
    for k in 0..=n {
        for mut rest in occupations(modes - 1, n - k) {
            rest.insert(0, k);
            out.push(rest);
        }
    }
    out
}

/// Dense evolution of an n-photon superposition through `u`.
pub fn evolve(u: &[Vec<C64>], input: &[(Vec<u8>, C64)]) -> Vec<(Vec<u8>, C64)> {
    let modes = u.len();
    let n: u8 = input
        .first()
        .map_or(0, |(o, _)| o.iter().sum());
    occupations(modes, n)
        .into_iter()
        .map(|out| {
            let a: C64 = input
                .iter()
                .map(|(inp, amp)| amp * oracle_amplitude(u, inp, &out))
                .sum();
            (out, a)
        })
        .collect()
}

/// Two-photon HOM coincidence probability through a 50:50 mixer, computed in
/// first quantization. Photon A has internal state |0⟩, photon B has
/// λ|0⟩ + √(1-λ²)|1⟩; outputs are (port, internal) with ports 0 and 1.
pub fn hom_coincidence(lambda: f64) -> f64 {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    // mixer: input port a -> (s, s), input port b -> (s, -s)
    let port_a = [s, s];
    let port_b = [s, -s];
    let internal_a = [1.0, 0.0];
    let internal_b = [lambda, (1.0 - lambda * lambda).max(0.0).sqrt()];
    // single-photon amplitude over (port, internal)
    let amp = |ports: &[f64; 2], internal: &[f64; 2], port: usize, t: usize| ports[port] * internal[t];
    let mut coincidence = 0.0;
    // symmetrized two-photon amplitude on ordered output labels (x1, x2)
    for t1 in 0..2 {
        for t2 in 0..2 {
            let psi = (amp(&port_a, &internal_a, 0, t1) * amp(&port_b, &internal_b, 1, t2)
                + amp(&port_b, &internal_b, 0, t1) * amp(&port_a, &internal_a, 1, t2))
                / 2f64.sqrt();
            // (x1 in port 0, x2 in port 1) and its mirror carry equal weight
            coincidence += 2.0 * psi * psi;
        }
    }
    coincidence
}

/// Mode order used by [`ideal_gate_unitary`]: (2H, 2V, 3H, 3V, 4H, 4V, 5H, 5V),
/// outputs on the same indices renamed 2p..5p.
pub const GATE_MODES: usize = 8;

fn embed(dim: usize, at: &[usize], block: &[Vec<C64>]) -> Vec<Vec<C64>> {
    let mut m: Vec<Vec<C64>> = (0..dim)
        .map(|r| (0..dim).map(|k| c(if r == k { 1.0 } else { 0.0 })).collect())
        .collect();
    for (r, &i) in at.iter().enumerate() {
        for (k, &j) in at.iter().enumerate() {
            m[i][j] = block[r][k];
        }
    }
    m
}

fn hwp(theta_deg: f64) -> Vec<Vec<C64>> {
    let t = (2.0 * theta_deg).to_radians();
    vec![vec![c(t.cos()), c(t.sin())], vec![c(t.sin()), c(-t.cos())]]
}

/// PBS on (aH, aV, bH, bV): H transmitted, V reflected.
fn pbs() -> Vec<Vec<C64>> {
    let mut m = vec![vec![c(0.0); 4]; 4];
    m[0][0] = c(1.0);
    m[3][1] = c(1.0);
    m[2][2] = c(1.0);
    m[1][3] = c(1.0);
    m
}

/// Whole ideal gate plus the herald analyzers, built from plain matrices:
/// PBS on (2, 3), HWP 22.5 / PBS / HWP 22.5 on (4, 5), then a rotation on 3p
/// that sends |−⟩ to H so the herald port is mode 3pH.
pub fn ideal_gate_unitary() -> Vec<Vec<C64>> {
    let pbs23 = embed(GATE_MODES, &[0, 1, 2, 3], &pbs());
    let h4 = embed(GATE_MODES, &[4, 5], &hwp(22.5));
    let h5 = embed(GATE_MODES, &[6, 7], &hwp(22.5));
    let pbs45 = embed(GATE_MODES, &[4, 5, 6, 7], &pbs());
    // |−⟩ = (H − V)/√2 -> H
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let rot3 = embed(GATE_MODES, &[2, 3], &[vec![c(s), c(-s)], vec![c(s), c(s)]]);
    let mut u = pbs23;
    for step in [&h4, &h5, &pbs45, &h4, &h5, &rot3] {
        u = matmul(step, &u);
    }
    u
}
