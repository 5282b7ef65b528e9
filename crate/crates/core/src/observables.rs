//! Charge and flux expectation values.

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::hilbert::QuditRegister;
use crate::linalg::C64;
use crate::model::{charge_from_occupation, original_frame_flux, reconstruct_charge, Formulation, LatticeModel, PhysicalSubspace};

/// One time slice: `charge[j]` per site and `flux[j]` per link, the latter
/// in the original frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub charge: Vec<f64>,
    pub flux: Vec<f64>,
}

/// Unnormalized first moments of a (possibly sub-normalized) state.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub weight: f64,
    /// `sum_k p_k m_j(k)` in the simulation frame.
    pub flux: Vec<f64>,
    /// `sum_k p_k n_j(k)`; only for the matterful register.
    pub occupation: Option<Vec<f64>>,
}

impl Moments {
    pub fn zeros(model: &LatticeModel) -> Self {
        let occupation = match model.formulation {
            Formulation::Matterful => Some(vec![0.0; model.l]),
            Formulation::IntegratedOut => None,
        };
        Self { weight: 0.0, flux: vec![0.0; model.links()], occupation }
    }

    pub fn add_scaled(&mut self, other: &Moments, s: f64) {
        self.weight += s * other.weight;
        self.flux.iter_mut().zip(&other.flux).for_each(|(a, b)| *a += s * b);
        if let (Some(a), Some(b)) = (self.occupation.as_mut(), other.occupation.as_ref()) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += s * y);
        }
    }

    /// Normalized frame. Matterful charges come from the qubits directly;
    /// otherwise they are reconstructed from the fluxes.
    pub fn frame(&self) -> Frame {
        let w = if self.weight > 0.0 { self.weight } else { 1.0 };
        let m: Vec<f64> = self.flux.iter().map(|x| x / w).collect();
        let charge = match &self.occupation {
            Some(n) => charge_from_occupation(&n.iter().map(|x| x / w).collect::<Vec<_>>()),
            None => reconstruct_charge(&m),
        };
        Frame { charge, flux: original_frame_flux(&m) }
    }
}

fn level_flux(level: usize) -> f64 {
    match level {
        0 => 1.0,
        2 => -1.0,
        _ => 0.0,
    }
}

/// Moments of a full-register amplitude vector.
pub fn moments(model: &LatticeModel, reg: &QuditRegister, amps: &[C64]) -> Moments {
    let links = model.links();
    let link_q: Vec<usize> = (0..links).map(|j| model.link_qudit(j)).collect();
    let matter_q: Vec<usize> = (0..model.l).filter_map(|j| model.matter_qudit(j)).collect();
    let strides = reg.strides();
    let dims = reg.dims();
    let mut out = Moments::zeros(model);
    // Per-qudit level populations first, then contract.
    let mut pops: Vec<Vec<f64>> = dims.iter().map(|&d| vec![0.0; d]).collect();
    for (idx, a) in amps.iter().enumerate() {
        let p = a.norm_sqr();
        if p == 0.0 {
            continue;
        }
        out.weight += p;
        for (q, pq) in pops.iter_mut().enumerate() {
            pq[(idx / strides[q]) % dims[q]] += p;
        }
    }
    for (j, &q) in link_q.iter().enumerate() {
        out.flux[j] = pops[q].iter().enumerate().map(|(lv, p)| p * level_flux(lv)).sum();
    }
    if let Some(n) = out.occupation.as_mut() {
        for (j, &q) in matter_q.iter().enumerate() {
            n[j] = pops[q][0];
        }
    }
    out
}

pub fn measure(model: &LatticeModel, reg: &QuditRegister, amps: &[C64]) -> Frame {
    moments(model, reg, amps).frame()
}

/// Moments from probabilities over the physical basis.
pub fn moments_physical(model: &LatticeModel, phys: &PhysicalSubspace, probs: &[f64]) -> Moments {
    let mut out = Moments::zeros(model);
    for (p, f) in probs.iter().zip(phys.fluxes()) {
        out.weight += p;
        for (acc, &m) in out.flux.iter_mut().zip(f) {
            *acc += p * m as f64;
        }
        if let Some(n) = out.occupation.as_mut() {
            for (j, acc) in n.iter_mut().enumerate() {
                let left = if j > 0 { f[j - 1] } else { 0 };
                let right = if j < f.len() { f[j] } else { 0 };
                *acc += p * (left + right) as f64;
            }
        }
    }
    out
}

pub fn measure_physical(model: &LatticeModel, phys: &PhysicalSubspace, coeffs: &[C64]) -> Frame {
    let probs: Vec<f64> = coeffs.iter().map(|c| c.norm_sqr()).collect();
    moments_physical(model, phys, &probs).frame()
}

/// Frame estimated from `shots` projective measurements in the physical basis.
pub fn sample_physical<R: Rng>(model: &LatticeModel, phys: &PhysicalSubspace, coeffs: &[C64], shots: usize, rng: &mut R) -> Option<Frame> {
    let probs: Vec<f64> = coeffs.iter().map(|c| c.norm_sqr()).collect();
    let dist = WeightedIndex::new(&probs).ok()?;
    let mut counts = vec![0.0; probs.len()];
    for _ in 0..shots {
        counts[dist.sample(rng)] += 1.0;
    }
    Some(moments_physical(model, phys, &counts).frame())
}
