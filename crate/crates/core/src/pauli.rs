//! Phased n-qubit Pauli operators in binary representation.
//!
//! An operator is stored as i^l X^a Z^b with the X part always written to the
//! left of the Z part; all phase bookkeeping is relative to that normal form.
//! Global phases are tracked exactly mod 4 — syndrome values and logical
//! measurement outcomes are signs, so the simulator needs them even where the
//! binary matrix algebra drops them.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::gf2::{BitMatrix, BitVec};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PauliError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("operator is not Hermitian (phase {phase}, overlap {tau})")]
    NonHermitian { phase: u8, tau: usize },
    #[error("invalid Pauli string: {0}")]
    Parse(String),
}

/// i^l X^a Z^b on n qubits.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct PauliOp {
    a: BitVec,
    b: BitVec,
    phase_exp: u8,
}

impl PauliOp {
    pub fn identity(n: usize) -> Self {
        PauliOp {
            a: BitVec::zeros(n),
            b: BitVec::zeros(n),
            phase_exp: 0,
        }
    }

    pub fn from_parts(a: BitVec, b: BitVec, phase_exp: u8) -> Self {
        assert_eq!(a.len(), b.len());
        PauliOp {
            a,
            b,
            phase_exp: phase_exp & 3,
        }
    }

    /// Hermitian operator i^{tau} X^a Z^b with an extra sign.
    pub fn hermitian(a: BitVec, b: BitVec, negative: bool) -> Self {
        let tau = hermitian_phase(&a, &b);
        let phase = (tau + if negative { 2 } else { 0 }) & 3;
        PauliOp::from_parts(a, b, phase)
    }

    pub fn single_x(n: usize, q: usize) -> Self {
        PauliOp::from_parts(BitVec::unit(n, q), BitVec::zeros(n), 0)
    }

    pub fn single_z(n: usize, q: usize) -> Self {
        PauliOp::from_parts(BitVec::zeros(n), BitVec::unit(n, q), 0)
    }

    pub fn single_y(n: usize, q: usize) -> Self {
        PauliOp::from_parts(BitVec::unit(n, q), BitVec::unit(n, q), 1)
    }

    pub fn n(&self) -> usize {
        self.a.len()
    }

    pub fn x_part(&self) -> &BitVec {
        &self.a
    }

    pub fn z_part(&self) -> &BitVec {
        &self.b
    }

    pub fn phase_exp(&self) -> u8 {
        self.phase_exp
    }

    pub fn set_phase_exp(&mut self, l: u8) {
        self.phase_exp = l & 3;
    }

    /// The row (a|b) of length 2n.
    pub fn binary_row(&self) -> BitVec {
        self.a.concat(&self.b)
    }

    pub fn from_binary_row(row: &BitVec, phase_exp: u8) -> Self {
        assert_eq!(row.len() % 2, 0);
        let n = row.len() / 2;
        PauliOp::from_parts(row.slice(0, n), row.slice(n, 2 * n), phase_exp)
    }

    pub fn is_identity_up_to_phase(&self) -> bool {
        self.a.is_zero() && self.b.is_zero()
    }

    /// Number of qubits acted on non-trivially.
    pub fn weight(&self) -> usize {
        let mut w = 0;
        for q in 0..self.n() {
            if self.a.get(q) || self.b.get(q) {
                w += 1;
            }
        }
        w
    }

    /// Size of supp(a) ∩ supp(b).
    pub fn tau(&self) -> usize {
        self.a.and(&self.b).weight()
    }

    pub fn is_hermitian(&self) -> bool {
        (self.phase_exp as usize & 1) == (self.tau() & 1)
    }

    /// Sign bit of a Hermitian operator: 0 for +, 1 for −.
    pub fn sign(&self) -> Result<bool, PauliError> {
        if !self.is_hermitian() {
            return Err(PauliError::NonHermitian {
                phase: self.phase_exp,
                tau: self.tau(),
            });
        }
        Ok((self.phase_exp as usize + 4 - (self.tau() & 3)) % 4 == 2)
    }

    pub fn negated(&self) -> PauliOp {
        PauliOp::from_parts(self.a.clone(), self.b.clone(), (self.phase_exp + 2) & 3)
    }

    pub fn commutes(&self, other: &PauliOp) -> Result<bool, PauliError> {
        if self.n() != other.n() {
            return Err(PauliError::DimensionMismatch(self.n(), other.n()));
        }
        Ok(!(self.a.dot(&other.b) ^ self.b.dot(&other.a)))
    }

    pub fn anticommutes(&self, other: &PauliOp) -> bool {
        self.a.dot(&other.b) ^ self.b.dot(&other.a)
    }

    /// Product self · other; phase picks up 2·(b_self · a_other) from moving
    /// other's X past self's Z.
    pub fn multiply(&self, other: &PauliOp) -> Result<PauliOp, PauliError> {
        if self.n() != other.n() {
            return Err(PauliError::DimensionMismatch(self.n(), other.n()));
        }
        let mut a = self.a.clone();
        a.xor_assign(&other.a);
        let mut b = self.b.clone();
        b.xor_assign(&other.b);
        let reorder = if self.b.dot(&other.a) { 2 } else { 0 };
        Ok(PauliOp::from_parts(
            a,
            b,
            (self.phase_exp + other.phase_exp + reorder) & 3,
        ))
    }

    pub fn mul_assign(&mut self, other: &PauliOp) {
        let p = self.multiply(other).expect("dimension mismatch");
        *self = p;
    }

    /// Conjugate by H on qubit q: X ↔ Z, Y ↦ −Y.
    pub fn apply_h(&mut self, q: usize) {
        if self.a.get(q) && self.b.get(q) {
            self.phase_exp = (self.phase_exp + 2) & 3;
        }
        let (av, bv) = (self.a.get(q), self.b.get(q));
        self.a.set(q, bv);
        self.b.set(q, av);
    }

    /// Conjugate by the Phase gate on qubit q: X ↦ iXZ, Z ↦ Z.
    pub fn apply_p(&mut self, q: usize) {
        if self.a.get(q) {
            self.phase_exp = (self.phase_exp + 1) & 3;
            self.b.flip(q);
        }
    }

    /// Conjugate by CNOT(c, t): X_c ↦ X_cX_t, Z_t ↦ Z_cZ_t.
    pub fn apply_cnot(&mut self, c: usize, t: usize) {
        if self.a.get(c) {
            self.a.flip(t);
        }
        if self.b.get(t) {
            self.b.flip(c);
        }
    }

    /// Binary conjugation by a symplectic matrix: (a,b) ↦ (a,b)·M. Phases are
    /// not touched; callers that need signs track them separately.
    pub fn conjugate_binary(&self, m: &BitMatrix) -> PauliOp {
        let row = m.mul_vec_left(&self.binary_row());
        PauliOp::from_binary_row(&row, self.phase_exp)
    }

    /// Tensor product, self on the low qubits.
    pub fn tensor(&self, other: &PauliOp) -> PauliOp {
        PauliOp::from_parts(
            self.a.concat(&other.a),
            self.b.concat(&other.b),
            (self.phase_exp + other.phase_exp) & 3,
        )
    }

    /// Embed into n qubits with our qubit i placed at offset + i.
    pub fn embed(&self, n: usize, offset: usize) -> PauliOp {
        assert!(offset + self.n() <= n);
        let mut a = BitVec::zeros(n);
        let mut b = BitVec::zeros(n);
        for q in self.a.iter_ones() {
            a.set(offset + q, true);
        }
        for q in self.b.iter_ones() {
            b.set(offset + q, true);
        }
        PauliOp::from_parts(a, b, self.phase_exp)
    }

    /// Restrict to qubits [start, end); the dropped part must be identity.
    pub fn restrict(&self, start: usize, end: usize) -> PauliOp {
        PauliOp::from_parts(
            self.a.slice(start, end),
            self.b.slice(start, end),
            self.phase_exp,
        )
    }
}

/// τ_ab mod 4: the phase exponent making i^τ X^a Z^b Hermitian.
pub fn hermitian_phase(a: &BitVec, b: &BitVec) -> u8 {
    assert_eq!(a.len(), b.len());
    (a.and(b).weight() & 3) as u8
}

/// Symplectic inner product u J_n v^t of two 2n-bit rows.
pub fn symplectic_inner(u: &BitVec, v: &BitVec) -> Result<bool, PauliError> {
    if u.len() != v.len() || u.len() % 2 != 0 {
        return Err(PauliError::DimensionMismatch(u.len(), v.len()));
    }
    let n = u.len() / 2;
    let (ux, uz) = (u.slice(0, n), u.slice(n, 2 * n));
    let (vx, vz) = (v.slice(0, n), v.slice(n, 2 * n));
    Ok(ux.dot(&vz) ^ uz.dot(&vx))
}

impl fmt::Display for PauliOp {
    /// Text form: optional "+", "-", "+i", "-i" prefix then letters over
    /// {I,X,Y,Z}; Y folds in its own Hermitian phase.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tau = self.tau() as u8 & 3;
        let residual = (self.phase_exp + 4 - tau) & 3;
        let prefix = match residual {
            0 => "+",
            1 => "+i",
            2 => "-",
            _ => "-i",
        };
        write!(f, "{prefix}")?;
        for q in 0..self.n() {
            let c = match (self.a.get(q), self.b.get(q)) {
                (false, false) => 'I',
                (true, false) => 'X',
                (false, true) => 'Z',
                (true, true) => 'Y',
            };
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

impl fmt::Debug for PauliOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl FromStr for PauliOp {
    type Err = PauliError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let (residual, rest) = if let Some(r) = s.strip_prefix("+i") {
            (1u8, r)
        } else if let Some(r) = s.strip_prefix("-i") {
            (3u8, r)
        } else if let Some(r) = s.strip_prefix('+') {
            (0u8, r)
        } else if let Some(r) = s.strip_prefix('-') {
            (2u8, r)
        } else {
            (0u8, s)
        };
        let n = rest.chars().count();
        let mut a = BitVec::zeros(n);
        let mut b = BitVec::zeros(n);
        let mut tau = 0u8;
        for (q, ch) in rest.chars().enumerate() {
            match ch {
                'I' => {}
                'X' => a.set(q, true),
                'Z' => b.set(q, true),
                'Y' => {
                    a.set(q, true);
                    b.set(q, true);
                    tau = (tau + 1) & 3;
                }
                _ => return Err(PauliError::Parse(format!("invalid letter '{ch}'"))),
            }
        }
        Ok(PauliOp::from_parts(a, b, (residual + tau) & 3))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn random_pauli(rng: &mut StdRng, n: usize) -> PauliOp {
        PauliOp::from_parts(
            BitVec::from_bits(&(0..n).map(|_| rng.gen()).collect::<Vec<_>>()),
            BitVec::from_bits(&(0..n).map(|_| rng.gen()).collect::<Vec<_>>()),
            rng.gen_range(0..4),
        )
    }

    /// 2^n x 2^n complex matrix as a flat vec, for the dense oracle.
    fn dense(p: &PauliOp) -> Vec<num_complex::Complex64> {
        use num_complex::Complex64 as C;
        let n = p.n();
        let dim = 1usize << n;
        let i = C::new(0.0, 1.0);
        let phase = i.powu(p.phase_exp() as u32);
        let mut m = vec![C::new(0.0, 0.0); dim * dim];
        for col in 0..dim {
            // X^a Z^b |col> = (-1)^(b·col) |col ^ a>
            let mut bits = 0usize;
            for q in p.z_part().iter_ones() {
                bits ^= (col >> q) & 1;
            }
            let mut row = col;
            for q in p.x_part().iter_ones() {
                row ^= 1 << q;
            }
            m[row * dim + col] = phase * if bits == 1 { -C::new(1.0, 0.0) } else { C::new(1.0, 0.0) };
        }
        m
    }

    fn mat_mul(a: &[num_complex::Complex64], b: &[num_complex::Complex64], dim: usize) -> Vec<num_complex::Complex64> {
        let mut out = vec![num_complex::Complex64::new(0.0, 0.0); dim * dim];
        for i in 0..dim {
            for k in 0..dim {
                let v = a[i * dim + k];
                if v.norm_sqr() > 1e-18 {
                    for j in 0..dim {
                        out[i * dim + j] += v * b[k * dim + j];
                    }
                }
            }
        }
        out
    }

    #[test]
    fn weight_examples() {
        assert_eq!(PauliOp::identity(3).weight(), 0);
        let y1: PauliOp = "IYI".parse().unwrap();
        assert_eq!(y1.weight(), 1);
        let p = PauliOp::from_parts(
            BitVec::from_bits(&[true, true, false]),
            BitVec::from_bits(&[false, true, true]),
            0,
        );
        assert_eq!(p.weight(), 3);
    }

    #[test]
    fn commute_examples() {
        let x: PauliOp = "X".parse().unwrap();
        let z: PauliOp = "Z".parse().unwrap();
        assert!(!x.commutes(&z).unwrap());
        let xx: PauliOp = "XX".parse().unwrap();
        let zz: PauliOp = "ZZ".parse().unwrap();
        assert!(xx.commutes(&zz).unwrap());
        assert!(x.commutes(&x).unwrap());
        assert!(matches!(
            x.commutes(&xx),
            Err(PauliError::DimensionMismatch(1, 2))
        ));
    }

    #[test]
    fn multiply_phase_convention() {
        let x = PauliOp::single_x(1, 0);
        let z = PauliOp::single_z(1, 0);
        let id = PauliOp::identity(1);
        assert_eq!(x.multiply(&id).unwrap(), x);
        // X·Z = XZ with no reordering needed in X-then-Z normal form.
        let xz = x.multiply(&z).unwrap();
        assert_eq!(xz.phase_exp(), 0);
        assert!(xz.x_part().get(0) && xz.z_part().get(0));
        // Z·X: reordering X past Z costs (-1).
        let zx = z.multiply(&x).unwrap();
        assert_eq!(zx.phase_exp(), 2);
    }

    #[test]
    fn multiply_matches_dense_oracle() {
        let mut rng = StdRng::seed_from_u64(2);
        for _ in 0..100 {
            let n = rng.gen_range(1..4);
            let p = random_pauli(&mut rng, n);
            let q = random_pauli(&mut rng, n);
            let prod = p.multiply(&q).unwrap();
            let dim = 1 << n;
            let oracle = mat_mul(&dense(&p), &dense(&q), dim);
            let direct = dense(&prod);
            for (a, b) in oracle.iter().zip(&direct) {
                assert!((a - b).norm() < 1e-9, "{p} * {q} != {prod}");
            }
        }
    }

    #[test]
    fn multiply_associative() {
        let mut rng = StdRng::seed_from_u64(3);
        for _ in 0..300 {
            let n = rng.gen_range(1..6);
            let p = random_pauli(&mut rng, n);
            let q = random_pauli(&mut rng, n);
            let r = random_pauli(&mut rng, n);
            let ab_c = p.multiply(&q).unwrap().multiply(&r).unwrap();
            let a_bc = p.multiply(&q.multiply(&r).unwrap()).unwrap();
            assert_eq!(ab_c, a_bc);
        }
    }

    #[test]
    fn hermitian_square_is_identity() {
        let mut rng = StdRng::seed_from_u64(4);
        for _ in 0..200 {
            let n = rng.gen_range(1..6);
            let p = random_pauli(&mut rng, n);
            let h = PauliOp::hermitian(p.x_part().clone(), p.z_part().clone(), false);
            assert!(h.is_hermitian());
            let sq = h.multiply(&h).unwrap();
            assert!(sq.is_identity_up_to_phase());
            assert_eq!(sq.phase_exp(), 0);
        }
    }

    #[test]
    fn hermitian_phase_examples() {
        let z = BitVec::zeros(3);
        assert_eq!(hermitian_phase(&z, &z), 0);
        let a = BitVec::from_bits(&[true, true, false]);
        let b = BitVec::from_bits(&[false, true, true]);
        assert_eq!(hermitian_phase(&a, &b), 1);
        let ones = BitVec::from_bits(&[true; 4]);
        assert_eq!(hermitian_phase(&ones, &ones), 0);
    }

    #[test]
    fn symplectic_inner_examples() {
        let u = BitVec::from_bits(&[true, false, false, false]);
        let v = BitVec::from_bits(&[false, false, true, false]);
        assert!(symplectic_inner(&u, &v).unwrap());
        assert!(!symplectic_inner(&u, &u).unwrap());
        assert!(symplectic_inner(&u, &BitVec::zeros(2)).is_err());
    }

    #[test]
    fn gate_conjugation_matches_known_images() {
        // H: X -> Z, Z -> X, Y -> -Y
        let mut p: PauliOp = "Y".parse().unwrap();
        p.apply_h(0);
        assert_eq!(p.to_string(), "-Y");
        // P: X -> Y, Y -> -X
        let mut p: PauliOp = "X".parse().unwrap();
        p.apply_p(0);
        assert_eq!(p.to_string(), "+Y");
        p.apply_p(0);
        assert_eq!(p.to_string(), "-X");
        // CNOT: Y_c -> Y_c X_t, Y_cY_t -> -X_cZ_t
        let mut p: PauliOp = "YI".parse().unwrap();
        p.apply_cnot(0, 1);
        assert_eq!(p.to_string(), "+YX");
        let mut p: PauliOp = "YY".parse().unwrap();
        p.apply_cnot(0, 1);
        assert_eq!(p.to_string(), "-XZ");
    }

    #[test]
    fn text_round_trip() {
        for s in ["+XYZ", "-IZX", "+iYII", "-iXY", "+I"] {
            let p: PauliOp = s.parse().unwrap();
            assert_eq!(p.to_string(), s);
        }
        assert!("XQ".parse::<PauliOp>().is_err());
    }
}
