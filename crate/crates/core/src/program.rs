//! Gate lists compiled for execution.
//!
//! Consecutive gates are fused while their joint support stays small, so a
//! noiseless step costs a handful of passes over the state. Noisy execution
//! reuses the same groups and falls back to gate-by-gate application only
//! inside a group that carries an error.

use std::sync::Arc;

use crate::compiler::Circuit;
use crate::error::Result;
use crate::gates::GateOp;
use crate::hilbert::{LocalOp, QuditRegister};
use crate::linalg::{CMatrix, C64};

/// Largest joint local dimension a fused group may have.
pub const MAX_FUSED_DIM: usize = 64;

#[derive(Debug, Clone)]
struct Group {
    start: usize,
    end: usize,
    op: LocalOp,
}

#[derive(Debug, Clone)]
pub struct Program {
    register: Arc<QuditRegister>,
    gates: Vec<GateOp>,
    single: Vec<LocalOp>,
    groups: Vec<Group>,
}

/// An operator inserted right after gate `after`.
#[derive(Debug, Clone)]
pub struct Insertion {
    pub after: usize,
    pub op: LocalOp,
}

/// `matrix` on `targets` expanded to act on the sorted `support`.
fn expand(matrix: &CMatrix, targets: &[usize], support: &[usize], reg: &QuditRegister) -> CMatrix {
    let dims: Vec<usize> = support.iter().map(|&q| reg.dim(q)).collect();
    let n: usize = dims.iter().product();
    let pos: Vec<usize> = targets.iter().map(|t| support.iter().position(|s| s == t).unwrap()).collect();
    let mut strides = vec![1; dims.len()];
    for k in (0..dims.len().saturating_sub(1)).rev() {
        strides[k] = strides[k + 1] * dims[k + 1];
    }
    let mut out = CMatrix::zeros(n, n);
    for col in 0..n {
        let digit = |k: usize| (col / strides[k]) % dims[k];
        let mut local_col = 0;
        let mut base = col;
        for &p in &pos {
            local_col = local_col * dims[p] + digit(p);
            base -= digit(p) * strides[p];
        }
        let m = matrix.nrows();
        for local_row in 0..m {
            let v = matrix[(local_row, local_col)];
            if v.norm() == 0.0 {
                continue;
            }
            let mut row = base;
            let mut rem = local_row;
            for &p in pos.iter().rev() {
                row += (rem % dims[p]) * strides[p];
                rem /= dims[p];
            }
            out[(row, col)] += v;
        }
    }
    out
}

impl Program {
    pub fn compile(gates: &[GateOp], register: &Arc<QuditRegister>) -> Result<Self> {
        let mut single = Vec::with_capacity(gates.len());
        let mut mats = Vec::with_capacity(gates.len());
        for g in gates {
            let dims: Vec<usize> = g.targets.iter().map(|&q| register.dim(q)).collect();
            let m = g.matrix(&dims)?;
            single.push(LocalOp::new(m.clone(), &g.targets, register)?);
            mats.push(m);
        }

        let mut groups = Vec::new();
        let mut start = 0;
        while start < gates.len() {
            let mut support: Vec<usize> = gates[start].targets.clone();
            support.sort_unstable();
            let mut end = start + 1;
            while end < gates.len() {
                let mut next = support.clone();
                for &q in &gates[end].targets {
                    if !next.contains(&q) {
                        next.push(q);
                    }
                }
                next.sort_unstable();
                let dim: usize = next.iter().map(|&q| register.dim(q)).product();
                if dim > MAX_FUSED_DIM {
                    break;
                }
                support = next;
                end += 1;
            }
            let op = if end - start == 1 {
                single[start].clone()
            } else {
                let mut acc = expand(&mats[start], &gates[start].targets, &support, register);
                for k in start + 1..end {
                    acc = expand(&mats[k], &gates[k].targets, &support, register) * acc;
                }
                LocalOp::new(acc, &support, register)?
            };
            groups.push(Group { start, end, op });
            start = end;
        }
        Ok(Self { register: register.clone(), gates: gates.to_vec(), single, groups })
    }

    pub fn register(&self) -> &Arc<QuditRegister> {
        &self.register
    }

    pub fn gates(&self) -> &[GateOp] {
        &self.gates
    }

    pub fn fused_len(&self) -> usize {
        self.groups.len()
    }

    pub fn apply(&self, amps: &mut [C64]) {
        for g in &self.groups {
            g.op.apply(amps);
        }
    }

    /// Applies the program with extra operators spliced in. `insertions`
    /// must be sorted by `after`.
    pub fn apply_with(&self, amps: &mut [C64], insertions: &[Insertion]) {
        let mut next = 0;
        for g in &self.groups {
            let hit = next < insertions.len() && insertions[next].after < g.end;
            if !hit {
                g.op.apply(amps);
                continue;
            }
            for k in g.start..g.end {
                self.single[k].apply(amps);
                while next < insertions.len() && insertions[next].after == k {
                    insertions[next].op.apply(amps);
                    next += 1;
                }
            }
        }
    }
}

/// A Trotter circuit with one compiled program per step body.
#[derive(Debug, Clone)]
pub struct CompiledCircuit {
    pub circuit: Circuit,
    walled: Option<Program>,
    free: Program,
}

impl CompiledCircuit {
    pub fn new(circuit: Circuit) -> Result<Self> {
        let free_step = circuit.n_steps.max(circuit.walls.off_step);
        let free = Program::compile(&circuit.step_gates(free_step), &circuit.register)?;
        let walled = if circuit.walls.active(0) {
            Some(Program::compile(&circuit.step_gates(0), &circuit.register)?)
        } else {
            None
        };
        Ok(Self { circuit, walled, free })
    }

    pub fn register(&self) -> &Arc<QuditRegister> {
        &self.circuit.register
    }

    pub fn n_steps(&self) -> usize {
        self.circuit.n_steps
    }

    pub fn program(&self, step: usize) -> &Program {
        match &self.walled {
            Some(p) if self.circuit.walled(step) => p,
            _ => &self.free,
        }
    }

    /// Runs every step, calling `observe(step, amps)` before the first and
    /// after each step.
    pub fn run(&self, amps: &mut [C64], mut observe: impl FnMut(usize, &[C64])) {
        observe(0, amps);
        for s in 0..self.n_steps() {
            self.program(s).apply(amps);
            observe(s + 1, amps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compiler::unitary_of;
    use crate::gates::Pauli;
    use crate::hilbert::{PureState, Role};
    use crate::linalg::max_abs;

    fn reg() -> Arc<QuditRegister> {
        Arc::new(QuditRegister::new(vec![2, 3, 4, 3], (0..4).map(Role::Link).collect()).unwrap())
    }

    fn sample_gates() -> Vec<GateOp> {
        vec![
            GateOp::h(1, 0, 2),
            GateOp::cx(2, 1, 3, 0, 1),
            GateOp::ms(1, 0, Pauli::Y, Pauli::Z, 0.7),
            GateOp::rx(2, 1, 3, 0.4),
            GateOp::cx(3, 2, 2, 0, 3),
            GateOp::vrz(0, 1, 0.3),
            GateOp::ry(3, 0, 2, 1.1),
            GateOp::cx(1, 3, 2, 1, 2),
        ]
    }

    #[test]
    fn fused_matches_gate_by_gate() {
        let r = reg();
        let gates = sample_gates();
        let p = Program::compile(&gates, &r).unwrap();
        assert!(p.fused_len() < gates.len());
        let n = r.total_dim();
        let amps: Vec<C64> = (0..n).map(|k| C64::new((k as f64).sin(), (k as f64 * 0.3).cos())).collect();
        let mut fused = amps.clone();
        p.apply(&mut fused);
        let mut slow = PureState::from_amplitudes(r.clone(), amps).unwrap();
        for g in &gates {
            let dims: Vec<usize> = g.targets.iter().map(|&q| r.dim(q)).collect();
            slow.apply_matrix(&g.matrix(&dims).unwrap(), &g.targets).unwrap();
        }
        let diff = fused.iter().zip(slow.amplitudes()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(diff < 1e-12);
    }

    #[test]
    fn insertion_matches_explicit_sequence() {
        let r = reg();
        let gates = sample_gates();
        let p = Program::compile(&gates, &r).unwrap();
        let x = GateOp::rx(2, 0, 3, std::f64::consts::PI);
        let xm = x.matrix(&[4]).unwrap();
        let ins = vec![Insertion { after: 3, op: LocalOp::new(xm, &[2], &r).unwrap() }];
        let mut with = gates[..4].to_vec();
        with.push(x);
        with.extend_from_slice(&gates[4..]);
        let u = unitary_of(&with, &r).unwrap();
        let n = r.total_dim();
        for k in [0, 17, n - 1] {
            let mut col = vec![C64::new(0.0, 0.0); n];
            col[k] = C64::new(1.0, 0.0);
            p.apply_with(&mut col, &ins);
            let expected = u.column(k);
            let diff = col.iter().zip(expected.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            assert!(diff < 1e-12);
        }
    }

    #[test]
    fn empty_insertions_are_bitwise_identical() {
        let r = reg();
        let p = Program::compile(&sample_gates(), &r).unwrap();
        let n = r.total_dim();
        let amps: Vec<C64> = (0..n).map(|k| C64::new(1.0 / (k + 1) as f64, 0.0)).collect();
        let (mut a, mut b) = (amps.clone(), amps);
        p.apply(&mut a);
        p.apply_with(&mut b, &[]);
        assert_eq!(a, b);
    }

    #[test]
    fn expand_respects_target_order() {
        let r = reg();
        let g = GateOp::cx(3, 1, 2, 0, 2);
        let m = g.matrix(&[3, 3]).unwrap();
        let e = expand(&m, &g.targets, &[1, 3], &r);
        let direct = unitary_of(&[GateOp::cx(1, 0, 2, 0, 2)], &crate::compiler::sub_register(&[3, 3]).unwrap()).unwrap();
        assert!(max_abs(&(e - direct)) < 1e-15);
    }
}
