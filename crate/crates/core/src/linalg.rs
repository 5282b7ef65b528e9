//! Small dense complex matrices and the handful of operations the gate
//! library and the oracles need.

use nalgebra::DMatrix;
use num_complex::Complex64;

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

/// `|a><b|` on a `dim`-level system.
pub fn ketbra(dim: usize, a: usize, b: usize) -> CMatrix {
    let mut m = CMatrix::zeros(dim, dim);
    m[(a, b)] = ONE;
    m
}

pub fn diag(entries: &[C64]) -> CMatrix {
    CMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(entries))
}

pub fn real_diag(entries: &[f64]) -> CMatrix {
    let v: Vec<C64> = entries.iter().map(|&x| C64::new(x, 0.0)).collect();
    diag(&v)
}

/// Kronecker product with `a` on the more significant index.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

pub fn kron_all(factors: &[&CMatrix]) -> CMatrix {
    let mut out = identity(1);
    for f in factors {
        out = kron(&out, f);
    }
    out
}

pub fn adjoint(m: &CMatrix) -> CMatrix {
    m.adjoint()
}

pub fn commutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b - b * a
}

/// Largest absolute entry; used as a cheap operator-distance proxy.
pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn frobenius(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn is_hermitian(m: &CMatrix, tol: f64) -> bool {
    m.is_square() && max_abs(&(m - m.adjoint())) <= tol
}

pub fn is_unitary(m: &CMatrix, tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    let n = m.nrows();
    max_abs(&(m.adjoint() * m - identity(n))) <= tol
}

/// Frobenius distance between `u` and `v` after removing the best global
/// phase, i.e. `min_phi ||u - e^{i phi} v||`.
pub fn phase_aligned_distance(u: &CMatrix, v: &CMatrix) -> f64 {
    assert_eq!(u.shape(), v.shape(), "shape mismatch");
    let overlap: C64 = v.iter().zip(u.iter()).map(|(a, b)| a.conj() * b).sum();
    let phase = if overlap.norm() > 0.0 {
        overlap / overlap.norm()
    } else {
        ONE
    };
    frobenius(&(u - v.map(|z| z * phase)))
}

/// Dense eigendecomposition of a Hermitian matrix; eigenvalues ascending.
pub fn eigh(h: &CMatrix) -> (Vec<f64>, CMatrix) {
    let eig = h.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let n = h.nrows();
    let mut vecs = CMatrix::zeros(n, n);
    let mut vals = Vec::with_capacity(n);
    for (col, &k) in order.iter().enumerate() {
        vals.push(eig.eigenvalues[k]);
        vecs.set_column(col, &eig.eigenvectors.column(k));
    }
    (vals, vecs)
}

/// `exp(-i t H)` for Hermitian `H` through its eigendecomposition.
pub fn expm_hermitian(h: &CMatrix, t: f64) -> CMatrix {
    let (vals, vecs) = eigh(h);
    let phases: Vec<C64> = vals.iter().map(|&e| C64::from_polar(1.0, -e * t)).collect();
    let mut scaled = vecs.clone();
    for (j, ph) in phases.iter().enumerate() {
        let mut col = scaled.column_mut(j);
        col *= *ph;
    }
    scaled * vecs.adjoint()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phase_alignment_removes_global_phase() {
        let u = real_diag(&[1.0, -1.0, 0.5]);
        let v = u.map(|z| z * C64::from_polar(1.0, 0.7));
        assert!(phase_aligned_distance(&u, &v) < 1e-14);
        assert!(phase_aligned_distance(&u, &identity(3)) > 0.5);
    }

    #[test]
    fn expm_of_pauli_x() {
        let x = ketbra(2, 0, 1) + ketbra(2, 1, 0);
        let t = 0.3;
        let u = expm_hermitian(&x, t);
        let expected = identity(2) * C64::new(t.cos(), 0.0) - x * C64::new(0.0, t.sin());
        assert!(max_abs(&(u - expected)) < 1e-14);
    }
}
