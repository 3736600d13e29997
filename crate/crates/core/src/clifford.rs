//! Symplectic-matrix representation of Clifford circuits, gate append rules,
//! composition, conjugation, and decomposition into single-gate-type stages.
//!
//! A circuit is held as the images of the 2n basis Paulis under conjugation:
//! binary rows plus one sign bit each. The binary rows form the symplectic
//! matrix M acting from the right on (a|b); signs carry everything the binary
//! algebra drops.
//!
//! `decompose_stages` brings any circuit into the constant-stage grammar
//! P-C-P-C-H-Perm-P-C-P-C (at most ten stages, identity stages dropped) with
//! every C stage carrying an invertible upper-triangular matrix. The heart of
//! it is a Bruhat factorization M = b1 · w · b2 where b1, b2 lie in the Borel
//! subgroup generated by triangular CNOT stages and phase layers, and w is a
//! symplectic monomial matrix (a Hadamard mask times a qubit permutation).

use std::fmt;

use rand::Rng;
use thiserror::Error;

use crate::gf2::{BitMatrix, BitVec, GfError, Permutation};
use crate::pauli::PauliOp;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CliffordError {
    #[error("qubit index {index} out of range for {n} qubits")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("matrix is not symplectic")]
    NotSymplectic,
    #[error("circuit parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Gf(#[from] GfError),
}

/// Elementary gates; X and Z only touch signs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Gate {
    H(usize),
    P(usize),
    Cnot(usize, usize),
    X(usize),
    Z(usize),
}

impl fmt::Display for Gate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Gate::H(q) => write!(f, "H {q}"),
            Gate::P(q) => write!(f, "P {q}"),
            Gate::Cnot(c, t) => write!(f, "CNOT {c} {t}"),
            Gate::X(q) => write!(f, "X {q}"),
            Gate::Z(q) => write!(f, "Z {q}"),
        }
    }
}

/// Parse the circuit text format: one gate per line, '#' comments.
pub fn parse_circuit(text: &str) -> Result<Vec<Gate>, CliffordError> {
    let mut gates = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut it = line.split_whitespace();
        let op = it.next().unwrap();
        let mut arg = |what: &str| -> Result<usize, CliffordError> {
            it.next()
                .and_then(|s| s.parse().ok())
                .ok_or(CliffordError::Parse {
                    line: ln + 1,
                    msg: format!("expected {what}"),
                })
        };
        let gate = match op {
            "H" => Gate::H(arg("qubit")?),
            "P" => Gate::P(arg("qubit")?),
            "CNOT" => {
                let c = arg("control")?;
                let t = arg("target")?;
                Gate::Cnot(c, t)
            }
            "X" => Gate::X(arg("qubit")?),
            "Z" => Gate::Z(arg("qubit")?),
            _ => {
                return Err(CliffordError::Parse {
                    line: ln + 1,
                    msg: format!("unknown gate '{op}'"),
                })
            }
        };
        gates.push(gate);
    }
    Ok(gates)
}

pub fn format_circuit(gates: &[Gate]) -> String {
    let mut s = String::new();
    for g in gates {
        s.push_str(&g.to_string());
        s.push('\n');
    }
    s
}

/// An n-qubit Clifford circuit: images of X_0..X_{n-1}, Z_0..Z_{n-1} under
/// conjugation, each a Hermitian phased Pauli.
#[derive(Clone, PartialEq, Eq)]
pub struct CliffordOp {
    n: usize,
    rows: Vec<PauliOp>,
}

impl CliffordOp {
    pub fn identity(n: usize) -> Self {
        let mut rows = Vec::with_capacity(2 * n);
        for i in 0..n {
            rows.push(PauliOp::single_x(n, i));
        }
        for i in 0..n {
            rows.push(PauliOp::single_z(n, i));
        }
        CliffordOp { n, rows }
    }

    pub fn from_gates(n: usize, gates: &[Gate]) -> Result<Self, CliffordError> {
        let mut c = CliffordOp::identity(n);
        for &g in gates {
            c.append_gate(g)?;
        }
        Ok(c)
    }

    /// Build from prescribed basis images (X_0.., Z_0.. order). Rows must be
    /// Hermitian and form a symplectic set.
    pub fn from_rows(n: usize, rows: Vec<PauliOp>) -> Result<Self, CliffordError> {
        if rows.len() != 2 * n || rows.iter().any(|r| r.n() != n) {
            return Err(CliffordError::DimensionMismatch(rows.len(), 2 * n));
        }
        let c = CliffordOp { n, rows };
        if !c.is_symplectic() || c.rows.iter().any(|r| !r.is_hermitian()) {
            return Err(CliffordError::NotSymplectic);
        }
        Ok(c)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Image of basis Pauli i (X_i for i < n, Z_{i-n} otherwise).
    pub fn row(&self, i: usize) -> &PauliOp {
        &self.rows[i]
    }

    /// The 2n x 2n binary symplectic matrix.
    pub fn matrix(&self) -> BitMatrix {
        BitMatrix::from_rows(&self.rows.iter().map(PauliOp::binary_row).collect::<Vec<_>>())
    }

    /// Sign bits of the basis images.
    pub fn signs(&self) -> BitVec {
        BitVec::from_bits(
            &self
                .rows
                .iter()
                .map(|r| r.sign().expect("rows are Hermitian"))
                .collect::<Vec<_>>(),
        )
    }

    pub fn is_symplectic(&self) -> bool {
        let m = self.matrix();
        let j = symplectic_j(self.n);
        m.mul(&j).mul(&m.transpose()) == j
    }

    pub fn append_gate(&mut self, gate: Gate) -> Result<(), CliffordError> {
        let check = |q: usize| -> Result<(), CliffordError> {
            if q < self.n {
                Ok(())
            } else {
                Err(CliffordError::IndexOutOfRange { index: q, n: self.n })
            }
        };
        match gate {
            Gate::H(q) => {
                check(q)?;
                for r in &mut self.rows {
                    r.apply_h(q);
                }
            }
            Gate::P(q) => {
                check(q)?;
                for r in &mut self.rows {
                    r.apply_p(q);
                }
            }
            Gate::Cnot(c, t) => {
                check(c)?;
                check(t)?;
                if c == t {
                    return Err(CliffordError::IndexOutOfRange { index: t, n: self.n });
                }
                for r in &mut self.rows {
                    r.apply_cnot(c, t);
                }
            }
            Gate::X(q) => {
                check(q)?;
                for r in &mut self.rows {
                    if r.z_part().get(q) {
                        r.set_phase_exp(r.phase_exp() + 2);
                    }
                }
            }
            Gate::Z(q) => {
                check(q)?;
                for r in &mut self.rows {
                    if r.x_part().get(q) {
                        r.set_phase_exp(r.phase_exp() + 2);
                    }
                }
            }
        }
        Ok(())
    }

    /// Conjugate an arbitrary phased Pauli: U P U^dagger, with exact phase.
    pub fn conjugate(&self, p: &PauliOp) -> Result<PauliOp, CliffordError> {
        if p.n() != self.n {
            return Err(CliffordError::DimensionMismatch(p.n(), self.n));
        }
        let mut out = PauliOp::identity(self.n);
        out.set_phase_exp(p.phase_exp());
        for q in p.x_part().iter_ones() {
            out.mul_assign(&self.rows[q]);
        }
        for q in p.z_part().iter_ones() {
            out.mul_assign(&self.rows[self.n + q]);
        }
        Ok(out)
    }

    /// Composition "self then other": images conjugated through other.
    pub fn compose(&self, other: &CliffordOp) -> Result<CliffordOp, CliffordError> {
        if self.n != other.n {
            return Err(CliffordError::DimensionMismatch(self.n, other.n));
        }
        let rows = self
            .rows
            .iter()
            .map(|r| other.conjugate(r))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(CliffordOp { n: self.n, rows })
    }

    /// The Pauli P with self = P · C0, where C0 has the same binary matrix and
    /// all-plus signs.
    pub fn pauli_fix(&self) -> PauliOp {
        let m = self.matrix();
        let signs = self.signs();
        solve_pauli_layer(&m, &signs).expect("symplectic matrix is invertible")
    }

    /// Deterministic pseudo-random circuit from a gate string. The length is
    /// jittered by one gate so fixed-parity words in involutive generators do
    /// not bias the sampled class.
    pub fn random(n: usize, gate_count: usize, rng: &mut impl Rng) -> CliffordOp {
        let mut c = CliffordOp::identity(n);
        let count = gate_count + rng.gen_range(0..2);
        for _ in 0..count {
            let kind = if n == 1 { rng.gen_range(0..2) } else { rng.gen_range(0..3) };
            let g = match kind {
                0 => Gate::H(rng.gen_range(0..n)),
                1 => Gate::P(rng.gen_range(0..n)),
                _ => {
                    let c1 = rng.gen_range(0..n);
                    let mut t = rng.gen_range(0..n - 1);
                    if t >= c1 {
                        t += 1;
                    }
                    Gate::Cnot(c1, t)
                }
            };
            c.append_gate(g).unwrap();
        }
        c
    }

    pub fn decompose_stages(&self) -> StagedCircuit {
        decompose_stages(self)
    }
}

impl fmt::Debug for CliffordOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "CliffordOp n={}", self.n)?;
        for (i, r) in self.rows.iter().enumerate() {
            let name = if i < self.n {
                format!("X{}", i)
            } else {
                format!("Z{}", i - self.n)
            };
            writeln!(f, "  {name} -> {r}")?;
        }
        Ok(())
    }
}

pub fn symplectic_j(n: usize) -> BitMatrix {
    BitMatrix::from_fn(2 * n, 2 * n, |i, j| i + n == j || j + n == i)
}

/// Solve for the Pauli layer whose anticommutation pattern against the rows of
/// m reproduces the given sign bits.
fn solve_pauli_layer(m: &BitMatrix, signs: &BitVec) -> Result<PauliOp, GfError> {
    let n = m.rows() / 2;
    let sys = m.mul(&symplectic_j(n));
    let p = sys.solve(signs)?;
    Ok(PauliOp::from_binary_row(&p, 0))
}

// ---------------------------------------------------------------------------
// Stages
// ---------------------------------------------------------------------------

/// One layer of a staged circuit.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Stage {
    /// CNOT-only stage with invertible upper-triangular matrix U.
    C { u: BitMatrix },
    /// Phase-gate layer on the masked qubits.
    P { mask: BitVec },
    /// Hadamard layer on the masked qubits.
    H { mask: BitVec },
    /// Qubit relabeling; free in software.
    Perm { pi: Permutation },
}

impl Stage {
    pub fn kind_letter(&self) -> char {
        match self {
            Stage::C { .. } => 'C',
            Stage::P { .. } => 'P',
            Stage::H { .. } => 'H',
            Stage::Perm { .. } => 'S',
        }
    }

    pub fn is_identity(&self) -> bool {
        match self {
            Stage::C { u } => *u == BitMatrix::identity(u.rows()),
            Stage::P { mask } | Stage::H { mask } => mask.is_zero(),
            Stage::Perm { pi } => pi.is_identity(),
        }
    }

    /// Gate list realizing this stage (perm stages become swap chains).
    pub fn gates(&self, k: usize) -> Vec<Gate> {
        match self {
            Stage::C { u } => cnot_circuit_for_upper(u),
            Stage::P { mask } => mask.iter_ones().map(Gate::P).collect(),
            Stage::H { mask } => mask.iter_ones().map(Gate::H).collect(),
            Stage::Perm { pi } => {
                let mut gates = Vec::new();
                let mut cur: Vec<usize> = (0..k).collect();
                // Realize pi by adjacent transposition sort on current labels.
                for target in 0..k {
                    let want = pi.inverse().apply(target);
                    let at = cur.iter().position(|&x| x == want).unwrap();
                    for i in (target..at).rev() {
                        gates.extend([Gate::Cnot(i, i + 1), Gate::Cnot(i + 1, i), Gate::Cnot(i, i + 1)]);
                        cur.swap(i, i + 1);
                    }
                }
                gates
            }
        }
    }
}

/// Exact block form of a stage matrix at dimension k.
pub fn stage_matrix(stage: &Stage, k: usize) -> Result<BitMatrix, CliffordError> {
    let id = BitMatrix::identity(k);
    let zero = BitMatrix::zeros(k, k);
    let m = match stage {
        Stage::C { u } => {
            if u.rows() != k || u.cols() != k {
                return Err(CliffordError::DimensionMismatch(u.rows(), k));
            }
            if !u.is_upper_triangular() {
                return Err(CliffordError::NotSymplectic);
            }
            let uti = u.transpose().invert()?;
            u.hstack(&zero).vstack(&zero.hstack(&uti))
        }
        Stage::P { mask } => {
            if mask.len() != k {
                return Err(CliffordError::DimensionMismatch(mask.len(), k));
            }
            let lam = BitMatrix::diagonal(mask);
            id.hstack(&lam).vstack(&zero.hstack(&id))
        }
        Stage::H { mask } => {
            if mask.len() != k {
                return Err(CliffordError::DimensionMismatch(mask.len(), k));
            }
            let lam = BitMatrix::diagonal(mask);
            let ipl = id.add(&lam);
            ipl.hstack(&lam).vstack(&lam.hstack(&ipl))
        }
        Stage::Perm { pi } => {
            if pi.len() != k {
                return Err(CliffordError::DimensionMismatch(pi.len(), k));
            }
            let p = pi.matrix();
            p.hstack(&zero).vstack(&zero.hstack(&p))
        }
    };
    Ok(m)
}

/// Ordered CNOT list whose appended product realizes M_C(u).
fn cnot_circuit_for_upper(u: &BitMatrix) -> Vec<Gate> {
    let k = u.rows();
    debug_assert!(u.is_upper_triangular());
    // Reduce u to I by elementary upper row ops (row_j += row_l, j < l),
    // recording them; the ops in application order rebuild u.
    let mut w = u.clone();
    let mut gates = Vec::new();
    for col in (0..k).rev() {
        for row in 0..col {
            if w.get(row, col) {
                w.xor_row_into(col, row);
                gates.push(Gate::Cnot(row, col));
            }
        }
    }
    debug_assert_eq!(w, BitMatrix::identity(k));
    gates
}

/// A circuit as a list of stages plus a trailing Pauli fix-up layer.
#[derive(Clone, Debug)]
pub struct StagedCircuit {
    pub stages: Vec<Stage>,
    pub residual_pauli: PauliOp,
    pub n: usize,
}

impl StagedCircuit {
    /// Product of the stage matrices (first stage leftmost).
    pub fn recompose(&self) -> BitMatrix {
        let mut m = BitMatrix::identity(2 * self.n);
        for s in &self.stages {
            m = m.mul(&stage_matrix(s, self.n).expect("stage shapes validated"));
        }
        m
    }

    /// Gate list for the whole staged circuit including the Pauli layer.
    pub fn gates(&self) -> Vec<Gate> {
        let mut gates = Vec::new();
        for s in &self.stages {
            gates.extend(s.gates(self.n));
        }
        for q in self.residual_pauli.x_part().iter_ones() {
            gates.push(Gate::X(q));
        }
        for q in self.residual_pauli.z_part().iter_ones() {
            gates.push(Gate::Z(q));
        }
        gates
    }

    pub fn non_perm_stage_count(&self) -> usize {
        self.stages.iter().filter(|s| !matches!(s, Stage::Perm { .. })).count()
    }
}

// ---------------------------------------------------------------------------
// Symplectic Bruhat factorization
// ---------------------------------------------------------------------------

/// Internal state for the Bruhat reduction M = b1 · W · b2.
struct Reduction {
    k: usize,
    w: BitMatrix,
    b1: BitMatrix,
    b2: BitMatrix,
}

impl Reduction {
    fn xcol(&self, p: usize) -> usize {
        p
    }
    fn zcol(&self, p: usize) -> usize {
        self.k + p
    }
    fn xrow(&self, i: usize) -> usize {
        i
    }
    fn zrow(&self, i: usize) -> usize {
        self.k + i
    }

    /// Left op: x_i += x_j and z_j += z_i (i < j). b1 gains the inverse on the
    /// right, which is the same elementary matrix.
    fn left_cnot(&mut self, i: usize, j: usize) {
        debug_assert!(i < j);
        let (xi, xj) = (self.xrow(i), self.xrow(j));
        let (zi, zj) = (self.zrow(i), self.zrow(j));
        self.w.xor_row_into(xj, xi);
        self.w.xor_row_into(zi, zj);
        // b1 := b1 · M_C(I + e_ij): columns xj += xi, zi += zj.
        self.b1.xor_col_into(xi, xj);
        self.b1.xor_col_into(zj, zi);
    }

    /// Right op: x-col_q += x-col_p and z-col_p += z-col_q (p < q).
    fn right_cnot(&mut self, p: usize, q: usize) {
        debug_assert!(p < q);
        let (xp, xq) = (self.xcol(p), self.xcol(q));
        let (zp, zq) = (self.zcol(p), self.zcol(q));
        self.w.xor_col_into(xp, xq);
        self.w.xor_col_into(zq, zp);
        // b2 := M_C(I + e_pq) · b2: rows xp += xq, zq += zp.
        self.b2.xor_row_into(xq, xp);
        self.b2.xor_row_into(zp, zq);
    }

    /// Right op: z-cols += x-cols through a symmetric S.
    fn right_phase_sym(&mut self, s: &BitMatrix) {
        debug_assert!(s.is_symmetric());
        for p in 0..self.k {
            for t in 0..self.k {
                if s.get(p, t) {
                    let (src, dst) = (self.xcol(p), self.zcol(t));
                    self.w.xor_col_into(src, dst);
                    // b2 := [[I,S],[0,I]] · b2: x-row_p += z-row_t.
                    self.b2.xor_row_into(self.k + t, p);
                }
            }
        }
    }
}

/// Bruhat data: M = b1 · M_H(h) · Perm(pi) · b2 with b1, b2 in the Borel
/// subgroup of upper-triangular C stages and phase layers.
pub struct SpBruhat {
    pub b1: BitMatrix,
    pub h_mask: BitVec,
    pub pi: Permutation,
    pub b2: BitMatrix,
}

pub fn sp_bruhat(m: &BitMatrix, k: usize) -> Result<SpBruhat, CliffordError> {
    if m.rows() != 2 * k || m.cols() != 2 * k {
        return Err(CliffordError::DimensionMismatch(m.rows(), 2 * k));
    }
    let j = symplectic_j(k);
    if m.mul(&j).mul(&m.transpose()) != j {
        return Err(CliffordError::NotSymplectic);
    }
    let mut red = Reduction {
        k,
        w: m.clone(),
        b1: BitMatrix::identity(2 * k),
        b2: BitMatrix::identity(2 * k),
    };
    // pivot of retired z-row i: (pair position, pivot sits in the x column?)
    let mut pivots: Vec<(usize, bool)> = Vec::with_capacity(k);
    let mut free = vec![true; k];

    for zi in 0..k {
        // Clear entries of z-row zi at already-retired pivot columns by adding
        // the retired monomial z-rows (partner columns are zero by isotropy).
        for (prev, &(pos, is_x)) in pivots.iter().enumerate() {
            let col = if is_x { red.xcol(pos) } else { red.zcol(pos) };
            if red.w.get(red.zrow(zi), col) {
                red.left_cnot(prev, zi);
            }
        }
        let row = red.w.row(red.zrow(zi));
        let xsupp: Vec<usize> = (0..k).filter(|&p| free[p] && row.get(p)).collect();
        if let Some(&lead) = xsupp.first() {
            for &q in &xsupp[1..] {
                red.right_cnot(lead, q);
            }
            // x part is now e_lead; cancel the whole z part with a symmetric
            // phase op whose row `lead` equals it.
            let row = red.w.row(red.zrow(zi));
            let vz: Vec<usize> = (0..k).filter(|&p| row.get(red.zcol(p))).collect();
            debug_assert!(vz.iter().all(|&p| free[p]));
            if !vz.is_empty() {
                let mut s = BitMatrix::zeros(k, k);
                for &p in &vz {
                    s.set(lead, p, true);
                    s.set(p, lead, true);
                }
                red.right_phase_sym(&s);
            }
            pivots.push((lead, true));
            free[lead] = false;
        } else {
            let zsupp: Vec<usize> = (0..k).filter(|&p| free[p] && row.get(red.zcol(p))).collect();
            let &last = zsupp.last().ok_or(CliffordError::NotSymplectic)?;
            for &q in zsupp.iter().rev().skip(1) {
                red.right_cnot(q, last);
            }
            pivots.push((last, false));
            free[last] = false;
        }
        debug_assert_eq!(red.w.row(red.zrow(zi)).weight(), 1);
    }

    // Read off the symmetric coupling F between x rows and z pivots, fold it
    // into b1, and check the monomial skeleton.
    let mut f = BitMatrix::zeros(k, k);
    let mut w_mono = BitMatrix::zeros(2 * k, 2 * k);
    for i in 0..k {
        let (pos, is_x) = pivots[i];
        let pivot_col = if is_x { red.xcol(pos) } else { red.zcol(pos) };
        let partner_col = if is_x { red.zcol(pos) } else { red.xcol(pos) };
        w_mono.set(red.zrow(i), pivot_col, true);
        w_mono.set(red.xrow(i), partner_col, true);
        for xi in 0..k {
            if red.w.get(red.xrow(xi), pivot_col) {
                f.set(xi, i, true);
            }
        }
    }
    if !f.is_symmetric() {
        return Err(CliffordError::NotSymplectic);
    }
    // W must equal [[I,F],[0,I]] · w_mono exactly.
    let id = BitMatrix::identity(k);
    let phase_f = id
        .hstack(&f)
        .vstack(&BitMatrix::zeros(k, k).hstack(&id));
    if phase_f.mul(&w_mono) != red.w {
        return Err(CliffordError::NotSymplectic);
    }
    let b1 = red.b1.mul(&phase_f);

    // Express w_mono as M_H(h) · Perm(pi).
    let mut h_mask = BitVec::zeros(k);
    let mut to = vec![0usize; k];
    for i in 0..k {
        let (pos, is_x) = pivots[i];
        if is_x {
            h_mask.set(i, true);
        }
        to[i] = pos;
    }
    let pi = Permutation::from_map(to);
    debug_assert_eq!(
        stage_matrix(&Stage::H { mask: h_mask.clone() }, k)
            .unwrap()
            .mul(&stage_matrix(&Stage::Perm { pi: pi.clone() }, k).unwrap()),
        w_mono
    );

    Ok(SpBruhat {
        b1,
        h_mask,
        pi,
        b2: red.b2,
    })
}

/// Split a Borel element [[U, V],[0,(U^t)^{-1}]] into stages P(D) C(W) P(L) C(W^{-1}U).
fn borel_stages(b: &BitMatrix, k: usize) -> Result<Vec<Stage>, CliffordError> {
    let u = b.submatrix(0, k, 0, k);
    let v = b.submatrix(0, k, k, 2 * k);
    if !b.submatrix(k, 2 * k, 0, k).is_zero() || !u.is_upper_triangular() {
        return Err(CliffordError::NotSymplectic);
    }
    let s = v.mul(&u.transpose());
    if !s.is_symmetric() {
        return Err(CliffordError::NotSymplectic);
    }
    let (w, lambda, d) = crate::gf2::symmetric_split(&s)?;
    let tail = w.invert()?.mul(&u);
    Ok(vec![
        Stage::P { mask: d },
        Stage::C { u: w },
        Stage::P { mask: lambda },
        Stage::C { u: tail },
    ])
}

/// Decompose into the stage grammar with upper-triangular C stages, dropping
/// identity stages, plus the trailing Pauli fix-up layer.
pub fn decompose_stages(c: &CliffordOp) -> StagedCircuit {
    let k = c.n();
    let m = c.matrix();
    let br = sp_bruhat(&m, k).expect("valid CliffordOp is symplectic");
    let mut stages = Vec::new();
    stages.extend(borel_stages(&br.b1, k).expect("b1 is Borel"));
    stages.push(Stage::H { mask: br.h_mask });
    stages.push(Stage::Perm { pi: br.pi });
    stages.extend(borel_stages(&br.b2, k).expect("b2 is Borel"));
    stages.retain(|s| !s.is_identity());

    let staged = StagedCircuit {
        stages,
        residual_pauli: PauliOp::identity(k),
        n: k,
    };
    debug_assert_eq!(staged.recompose(), m);

    // Residual Pauli layer: signs of the original vs the bare staged circuit.
    let bare = CliffordOp::from_gates(k, &staged.gates()).expect("staged gates are valid");
    debug_assert_eq!(bare.matrix(), m);
    let mut delta = BitVec::zeros(2 * k);
    let orig_signs = c.signs();
    let bare_signs = bare.signs();
    for i in 0..2 * k {
        delta.set(i, orig_signs.get(i) ^ bare_signs.get(i));
    }
    let residual = solve_pauli_layer(&m, &delta).expect("symplectic system");
    StagedCircuit {
        residual_pauli: residual,
        ..staged
    }
}
