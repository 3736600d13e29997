//! Synthesis of the logical ancilla stabilizer states consumed by Knill and
//! Steane rounds, plus the bitwise-Phase preparation pipeline for states that
//! are not CSS up to Hadamards.
//!
//! A spec lives at the logical level: a full-rank commuting list of phased
//! logical Paulis. Realization lifts the generators through a code's canonical
//! logical operators and projects a product of encoded blocks, so the same
//! spec works on any CSS code with the right number of logical qubits.

use std::fmt::Write as _;

use thiserror::Error;

use crate::clifford::{CliffordOp, Gate, Stage};
use crate::css::{CodeError, CssCode};
use crate::gf2::{BitMatrix, BitVec};
use crate::pauli::PauliOp;
use crate::tableau::{canonicalize, StabilizerTableau, TableauError};

#[derive(Debug, Error)]
pub enum AncillaError {
    #[error("bad stage kind for this construction")]
    BadStage,
    #[error("operators do not form a commuting measurable set")]
    NonCommutingSet,
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("code is not eligible for the bitwise-Phase pipeline: {0}")]
    CodeNotEligible(String),
    #[error(transparent)]
    Tableau(#[from] TableauError),
    #[error(transparent)]
    Code(#[from] CodeError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Family {
    Bell,
    PsiUp,
    PsiUh,
    PsiUc,
    OmegaEf,
    OmegaP1,
    OmegaP2,
    OmegaH1,
    OmegaH2,
    OmegaC1,
    OmegaC2,
    OmegaC3,
}

impl Family {
    pub fn as_str(&self) -> &'static str {
        match self {
            Family::Bell => "BELL",
            Family::PsiUp => "PSI_UP",
            Family::PsiUh => "PSI_UH",
            Family::PsiUc => "PSI_UC",
            Family::OmegaEf => "OMEGA_EF",
            Family::OmegaP1 => "OMEGA_P1",
            Family::OmegaP2 => "OMEGA_P2",
            Family::OmegaH1 => "OMEGA_H1",
            Family::OmegaH2 => "OMEGA_H2",
            Family::OmegaC1 => "OMEGA_C1",
            Family::OmegaC2 => "OMEGA_C2",
            Family::OmegaC3 => "OMEGA_C3",
        }
    }
}

/// Distillation pipeline selector: CSS state / CSS up to logical Hadamards /
/// needs the bitwise-Phase pipeline.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DistType {
    I,
    II,
    III,
}

#[derive(Clone, Debug)]
pub enum SpecParams {
    None,
    Mask(BitVec),
    Matrix(BitMatrix),
    Ef { e: BitMatrix, f: BitMatrix },
}

/// A logical-level ancilla stabilizer state.
#[derive(Clone, Debug)]
pub struct AncillaSpec {
    pub logical_qubits: usize,
    pub generators: Vec<PauliOp>,
    pub family: Family,
    pub dist_type: DistType,
    pub params: SpecParams,
}

impl AncillaSpec {
    fn new(
        logical_qubits: usize,
        generators: Vec<PauliOp>,
        family: Family,
        dist_type: DistType,
        params: SpecParams,
    ) -> AncillaSpec {
        let spec = AncillaSpec {
            logical_qubits,
            generators,
            family,
            dist_type,
            params,
        };
        debug_assert!(spec.validate().is_ok(), "invalid spec {spec:?}");
        spec
    }

    pub fn validate(&self) -> Result<(), AncillaError> {
        if self.generators.len() != self.logical_qubits {
            return Err(AncillaError::DimensionMismatch(
                self.generators.len(),
                self.logical_qubits,
            ));
        }
        for (i, g) in self.generators.iter().enumerate() {
            if g.n() != self.logical_qubits {
                return Err(AncillaError::DimensionMismatch(g.n(), self.logical_qubits));
            }
            if !g.is_hermitian() {
                return Err(AncillaError::NonCommutingSet);
            }
            for h in &self.generators[..i] {
                if g.anticommutes(h) {
                    return Err(AncillaError::NonCommutingSet);
                }
            }
        }
        let rows: Vec<BitVec> = self.generators.iter().map(PauliOp::binary_row).collect();
        if BitMatrix::from_rows(&rows).rank() != self.logical_qubits {
            return Err(AncillaError::NonCommutingSet);
        }
        Ok(())
    }

    /// The state as a logical-level tableau.
    pub fn logical_tableau(&self) -> Result<StabilizerTableau, AncillaError> {
        Ok(StabilizerTableau::from_stabilizers(self.generators.clone())?)
    }

    /// Same stabilizer group (including signs) as another spec.
    pub fn same_state(&self, other: &AncillaSpec) -> bool {
        self.logical_qubits == other.logical_qubits
            && canonicalize(self.generators.clone()) == canonicalize(other.generators.clone())
    }

    /// Dump: family, parameters, then one phased logical Pauli per line.
    pub fn dump(&self) -> String {
        let mut s = format!("family {}\n", self.family.as_str());
        match &self.params {
            SpecParams::None => {}
            SpecParams::Mask(m) => {
                let _ = writeln!(s, "mask {m:?}");
            }
            SpecParams::Matrix(u) => {
                let _ = write!(s, "matrix\n{}", u.to_text());
            }
            SpecParams::Ef { e, f } => {
                let _ = write!(s, "e\n{}f\n{}", e.to_text(), f.to_text());
            }
        }
        for g in &self.generators {
            let _ = writeln!(s, "{g}");
        }
        s
    }
}

fn xrow(l: usize, ones: &[usize]) -> BitVec {
    let mut v = BitVec::zeros(l);
    for &q in ones {
        v.set(q, true);
    }
    v
}

fn gen_of(l: usize, xs: &[usize], zs: &[usize]) -> PauliOp {
    PauliOp::hermitian(xrow(l, xs), xrow(l, zs), false)
}

/// |0_L>^k product spec.
pub fn logical_zero_spec(k: usize) -> AncillaSpec {
    let gens = (0..k).map(|j| PauliOp::single_z(k, j)).collect();
    AncillaSpec::new(k, gens, Family::OmegaEf, DistType::I, SpecParams::None)
}

/// |+_L>^k product spec.
pub fn logical_plus_spec(k: usize) -> AncillaSpec {
    let gens = (0..k).map(|j| PauliOp::single_x(k, j)).collect();
    AncillaSpec::new(k, gens, Family::OmegaEf, DistType::I, SpecParams::None)
}

/// Bell spec on 2k logical qubits: X_j X_{j+k} and Z_j Z_{j+k}.
pub fn bell_spec(k: usize) -> AncillaSpec {
    let l = 2 * k;
    let mut gens = Vec::with_capacity(l);
    for j in 0..k {
        gens.push(gen_of(l, &[j, j + k], &[]));
    }
    for j in 0..k {
        gens.push(gen_of(l, &[], &[j, j + k]));
    }
    AncillaSpec::new(l, gens, Family::Bell, DistType::I, SpecParams::None)
}

/// Teleportation ancilla (I ⊗ U_stage)|Φ+>^k for one stage, as the binary
/// displays: upper half is the Bell-measured side, lower half carries U.
pub fn psi_spec(stage: &Stage, k: usize) -> Result<AncillaSpec, AncillaError> {
    let l = 2 * k;
    match stage {
        Stage::P { mask } => {
            if mask.len() != k {
                return Err(AncillaError::DimensionMismatch(mask.len(), k));
            }
            let mut gens = Vec::with_capacity(l);
            for j in 0..k {
                let zs: &[usize] = if mask.get(j) { &[j + k] } else { &[] };
                gens.push(gen_of(l, &[j, j + k], zs));
            }
            for j in 0..k {
                gens.push(gen_of(l, &[], &[j, j + k]));
            }
            let ty = if mask.is_zero() { DistType::I } else { DistType::III };
            Ok(AncillaSpec::new(l, gens, Family::PsiUp, ty, SpecParams::Mask(mask.clone())))
        }
        Stage::H { mask } => {
            if mask.len() != k {
                return Err(AncillaError::DimensionMismatch(mask.len(), k));
            }
            let mut gens = Vec::with_capacity(l);
            for j in 0..k {
                if mask.get(j) {
                    gens.push(gen_of(l, &[j], &[j + k]));
                } else {
                    gens.push(gen_of(l, &[j, j + k], &[]));
                }
            }
            for j in 0..k {
                if mask.get(j) {
                    gens.push(gen_of(l, &[j + k], &[j]));
                } else {
                    gens.push(gen_of(l, &[], &[j, j + k]));
                }
            }
            let ty = if mask.is_zero() { DistType::I } else { DistType::II };
            Ok(AncillaSpec::new(l, gens, Family::PsiUh, ty, SpecParams::Mask(mask.clone())))
        }
        Stage::C { u } => {
            if u.rows() != k {
                return Err(AncillaError::DimensionMismatch(u.rows(), k));
            }
            let uti = u
                .transpose()
                .invert()
                .map_err(|_| AncillaError::BadStage)?;
            let mut gens = Vec::with_capacity(l);
            for j in 0..k {
                let mut xs = vec![j];
                xs.extend(u.row(j).iter_ones().map(|c| c + k));
                gens.push(gen_of(l, &xs, &[]));
            }
            for j in 0..k {
                let mut zs = vec![j];
                zs.extend(uti.row(j).iter_ones().map(|c| c + k));
                gens.push(gen_of(l, &[], &zs));
            }
            Ok(AncillaSpec::new(l, gens, Family::PsiUc, DistType::I, SpecParams::Matrix(u.clone())))
        }
        Stage::Perm { .. } => Err(AncillaError::BadStage),
    }
}

/// General measurement ancilla for a commuting set {X^{e_j} Z^{f_j}}: the
/// entangling generators i^tau X^{e_j} Z^{e_j & f_j} (upper) ⊗ Z^{f_j} (lower)
/// plus completions of |0_L>^K ⊗ |+_L>^K, built by projection.
pub fn omega_ef_spec(e: &BitMatrix, f: &BitMatrix) -> Result<AncillaSpec, AncillaError> {
    let m = e.rows();
    let kk = e.cols();
    if f.rows() != m || f.cols() != kk {
        return Err(AncillaError::DimensionMismatch(f.rows(), m));
    }
    if m > kk {
        return Err(AncillaError::NonCommutingSet);
    }
    // The measured data operators X^{e_i} Z^{f_i} must commute pairwise.
    for i in 0..m {
        for j in 0..i {
            if e.row(i).dot(&f.row(j)) ^ f.row(i).dot(&e.row(j)) {
                return Err(AncillaError::NonCommutingSet);
            }
        }
    }
    let l = 2 * kk;
    let mut entangling = Vec::with_capacity(m);
    for j in 0..m {
        let ej = e.row(j);
        let fj = f.row(j);
        let mut a = BitVec::zeros(l);
        let mut b = BitVec::zeros(l);
        for q in ej.iter_ones() {
            a.set(q, true);
        }
        for q in ej.and(&fj).iter_ones() {
            b.set(q, true);
        }
        for q in fj.iter_ones() {
            b.set(kk + q, true);
        }
        entangling.push(PauliOp::hermitian(a, b, false));
    }
    for (i, g) in entangling.iter().enumerate() {
        for h in &entangling[..i] {
            if g.anticommutes(h) {
                return Err(AncillaError::NonCommutingSet);
            }
        }
    }
    let mut t = StabilizerTableau::zeros(kk).tensor(&StabilizerTableau::pluses(kk));
    for g in &entangling {
        t.project_plus(g)?;
    }
    let gens = canonicalize(t.stabilizers().to_vec());
    Ok(AncillaSpec::new(
        l,
        gens,
        Family::OmegaEf,
        DistType::I,
        SpecParams::Ef { e: e.clone(), f: f.clone() },
    ))
}

/// The ancilla list for one Steane stage on k data logical qubits over a
/// 2k-logical code: the paper's binary displays, row for row, on 4k logical
/// qubits. Column order: upper block [A(k), Q(k)], lower block [A(k), Q(k)].
pub fn omega_stage_specs(stage: &Stage, k: usize) -> Result<Vec<AncillaSpec>, AncillaError> {
    let l = 4 * k;
    let (ua, uq, la, lq) = (0usize, k, 2 * k, 3 * k);
    match stage {
        Stage::P { mask } => {
            if mask.len() != k {
                return Err(AncillaError::DimensionMismatch(mask.len(), k));
            }
            let mut g1 = Vec::with_capacity(l);
            for j in 0..k {
                let zs: Vec<usize> = if mask.get(j) { vec![ua + j, uq + j] } else { vec![ua + j] };
                g1.push(gen_of(l, &[], &zs));
            }
            for j in 0..k {
                if mask.get(j) {
                    // i X_{A_j} X_{Q_j} Z_{Q_j} (upper) ⊗ Z_{Q_j} (lower)
                    g1.push(gen_of(l, &[ua + j, uq + j], &[uq + j, lq + j]));
                } else {
                    g1.push(gen_of(l, &[], &[uq + j]));
                }
            }
            for j in 0..k {
                g1.push(gen_of(l, &[la + j], &[]));
            }
            for j in 0..k {
                let zs: Vec<usize> = if mask.get(j) { vec![uq + j] } else { vec![] };
                g1.push(gen_of(l, &[lq + j], &zs));
            }
            let omega_p1 = AncillaSpec::new(
                l,
                g1,
                Family::OmegaP1,
                if mask.is_zero() { DistType::I } else { DistType::III },
                SpecParams::Mask(mask.clone()),
            );

            let mut g2 = Vec::with_capacity(l);
            for j in 0..2 * k {
                g2.push(gen_of(l, &[], &[j]));
            }
            for j in 0..k {
                g2.push(gen_of(l, &[la + j], &[]));
            }
            for j in 0..k {
                if mask.get(j) {
                    g2.push(gen_of(l, &[], &[lq + j]));
                } else {
                    g2.push(gen_of(l, &[lq + j], &[]));
                }
            }
            let omega_p2 =
                AncillaSpec::new(l, g2, Family::OmegaP2, DistType::I, SpecParams::Mask(mask.clone()));
            Ok(vec![omega_p1, omega_p2])
        }
        Stage::H { mask } => {
            if mask.len() != k {
                return Err(AncillaError::DimensionMismatch(mask.len(), k));
            }
            let mut g1 = Vec::with_capacity(l);
            for j in 0..k {
                if mask.get(j) {
                    g1.push(gen_of(l, &[ua + j], &[lq + j]));
                } else {
                    g1.push(gen_of(l, &[], &[ua + j]));
                }
            }
            for j in 0..k {
                g1.push(gen_of(l, &[], &[uq + j]));
            }
            for j in 0..k {
                g1.push(gen_of(l, &[la + j], &[]));
            }
            for j in 0..k {
                let zs: Vec<usize> = if mask.get(j) { vec![ua + j] } else { vec![] };
                g1.push(gen_of(l, &[lq + j], &zs));
            }
            let omega_h1 = AncillaSpec::new(
                l,
                g1,
                Family::OmegaH1,
                if mask.is_zero() { DistType::I } else { DistType::II },
                SpecParams::Mask(mask.clone()),
            );

            let mut g2 = Vec::with_capacity(l);
            for j in 0..k {
                g2.push(gen_of(l, &[], &[ua + j]));
            }
            for j in 0..k {
                if mask.get(j) {
                    g2.push(gen_of(l, &[uq + j], &[]));
                } else {
                    g2.push(gen_of(l, &[], &[uq + j]));
                }
            }
            for j in 0..2 * k {
                g2.push(gen_of(l, &[la + j], &[]));
            }
            let omega_h2 =
                AncillaSpec::new(l, g2, Family::OmegaH2, DistType::I, SpecParams::Mask(mask.clone()));
            Ok(vec![omega_h1, omega_h2])
        }
        Stage::C { u } => {
            if u.rows() != k {
                return Err(AncillaError::DimensionMismatch(u.rows(), k));
            }
            let uti = u.transpose().invert().map_err(|_| AncillaError::BadStage)?;
            let l1 = uti.add(&BitMatrix::identity(k)); // (U^t)^{-1} + I, lower triangular zero diag

            let mut g1 = Vec::with_capacity(l);
            for j in 0..k {
                g1.push(gen_of(l, &[ua + j, uq + j], &[]));
            }
            for j in 0..k {
                g1.push(gen_of(l, &[], &[ua + j, uq + j]));
            }
            for j in 0..2 * k {
                g1.push(gen_of(l, &[la + j], &[]));
            }
            let omega_c1 = AncillaSpec::new(l, g1, Family::OmegaC1, DistType::I, SpecParams::None);

            let mut g2 = Vec::with_capacity(l);
            for j in 0..k {
                // Z^{u_j} on the lower block, u_j = row j of (I | (U^t)^{-1}+I)
                let mut zs = vec![la + j];
                zs.extend(l1.row(j).iter_ones().map(|c| lq + c));
                g2.push(gen_of(l, &[], &zs));
            }
            let comp = uti.transpose().add(&BitMatrix::identity(k));
            for j in 0..k {
                // X completions: rows of ([(U^t)^{-1}]^t + I | I) on the lower block
                let mut xs: Vec<usize> = comp.row(j).iter_ones().map(|c| la + c).collect();
                xs.push(lq + j);
                g2.push(gen_of(l, &xs, &[]));
            }
            for j in 0..2 * k {
                g2.push(gen_of(l, &[], &[ua + j]));
            }
            let omega_c2 =
                AncillaSpec::new(l, g2, Family::OmegaC2, DistType::I, SpecParams::Matrix(u.clone()));

            let mut g3 = Vec::with_capacity(l);
            for j in 0..k {
                g3.push(gen_of(l, &[ua + j], &[]));
            }
            for j in 0..k {
                g3.push(gen_of(l, &[], &[uq + j]));
            }
            for j in 0..2 * k {
                g3.push(gen_of(l, &[la + j], &[]));
            }
            let omega_c3 = AncillaSpec::new(l, g3, Family::OmegaC3, DistType::I, SpecParams::None);
            Ok(vec![omega_c1, omega_c2, omega_c3])
        }
        Stage::Perm { .. } => Err(AncillaError::BadStage),
    }
}

/// Lift a spec-level logical operator (b·k logical qubits) to the physical
/// level across b blocks of the code.
pub fn lift_spec_op(op: &PauliOp, code: &CssCode, blocks: usize) -> PauliOp {
    let k = code.k();
    let n = code.n();
    assert_eq!(op.n(), blocks * k);
    let n_phys = blocks * n;
    let mut out = PauliOp::identity(n_phys);
    out.set_phase_exp(op.phase_exp());
    for j in op.x_part().iter_ones() {
        let (blk, idx) = (j / k, j % k);
        out.mul_assign(&code.logical_x_op(idx).embed(n_phys, blk * n));
    }
    for j in op.z_part().iter_ones() {
        let (blk, idx) = (j / k, j % k);
        out.mul_assign(&code.logical_z_op(idx).embed(n_phys, blk * n));
    }
    out
}

/// Physical tableau for a spec: every block carries the full code stabilizer
/// group and the lifted spec generators, all with + signs.
pub fn realize(spec: &AncillaSpec, code: &CssCode) -> Result<StabilizerTableau, AncillaError> {
    let k = code.k();
    if k == 0 || spec.logical_qubits % k != 0 {
        return Err(AncillaError::DimensionMismatch(spec.logical_qubits, k));
    }
    let blocks = spec.logical_qubits / k;
    let zero_block = code.encode_tableau(&BitVec::zeros(k))?;
    let mut t = zero_block.clone();
    for _ in 1..blocks {
        t = t.tensor(&zero_block);
    }
    for g in &spec.generators {
        let lifted = lift_spec_op(g, code, blocks);
        t.project_plus(&lifted)?;
    }
    Ok(t)
}

/// One step of the bitwise-Phase preparation pipeline.
#[derive(Clone, Debug)]
pub enum PipelineStep {
    /// Physical P gate on the listed qubits (whole blocks or the physical
    /// support of one logical half, when that half is separable).
    BitwisePhase { qubits: Vec<usize> },
    /// Logical CNOT list (control, target) over the spec's logical indices.
    LogicalCnots { pairs: Vec<(usize, usize)> },
    /// Measure the given logical operators (assisted by CSS states).
    LogicalMeasure { ops: Vec<PauliOp> },
}

/// The Q-half phase mask for a 2k-logical code: the union of the
/// stabilizer-connected components carrying logicals k..2k. Those components
/// must not also carry A-half logicals, and a bitwise P layer on them must
/// map the stabilizer group to itself.
fn split_phase_mask(code: &CssCode, k: usize) -> Result<BitVec, AncillaError> {
    let n = code.n();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut union_row = |parent: &mut Vec<usize>, row: &BitVec| {
        let mut it = row.iter_ones();
        if let Some(first) = it.next() {
            for q in it {
                let (a, b) = (find(parent, first), find(parent, q));
                parent[a] = b;
            }
        }
    };
    for i in 0..code.hx().rows() {
        union_row(&mut parent, &code.hx().row(i));
    }
    for i in 0..code.hz().rows() {
        union_row(&mut parent, &code.hz().row(i));
    }
    for j in 0..code.k() {
        union_row(&mut parent, &code.logical_x().row(j));
        union_row(&mut parent, &code.logical_z().row(j));
    }
    let component_of_logical = |parent: &mut Vec<usize>, j: usize| -> usize {
        let q = code
            .logical_x()
            .row(j)
            .leading_one()
            .expect("logical operators are nonzero");
        find(parent, q)
    };
    let q_comps: Vec<usize> = (k..2 * k).map(|j| component_of_logical(&mut parent, j)).collect();
    let a_comps: Vec<usize> = (0..k).map(|j| component_of_logical(&mut parent, j)).collect();
    if q_comps.iter().any(|c| a_comps.contains(c)) {
        return Err(AncillaError::CodeNotEligible(
            "auxiliary and data logical halves are not physically separable".into(),
        ));
    }
    let mut q_mask = BitVec::zeros(n);
    for q in 0..n {
        if q_comps.contains(&find(&mut parent, q)) {
            q_mask.set(q, true);
        }
    }
    // The masked phase layer must map the stabilizer group to itself.
    let mut t = code
        .encode_tableau(&BitVec::zeros(code.k()))
        .map_err(AncillaError::Code)?;
    for q in q_mask.iter_ones() {
        t.apply_gate(Gate::P(q)).map_err(AncillaError::Tableau)?;
    }
    for s in code.x_stabilizers().iter().chain(code.z_stabilizers().iter()) {
        if t.expectation(s).is_none() {
            return Err(AncillaError::CodeNotEligible(
                "masked bitwise phase layer does not preserve the stabilizer group".into(),
            ));
        }
    }
    Ok(q_mask)
}

/// Preparation pipeline for Type III states: a distillable CSS/Type II
/// precursor plus the step list turning it into the target, up to logical
/// Pauli frame.
pub fn type3_pipeline(
    spec: &AncillaSpec,
    code: &CssCode,
) -> Result<(AncillaSpec, Vec<PipelineStep>), AncillaError> {
    let tag = code.classify()?;
    if !tag.phase_eligible() {
        return Err(AncillaError::CodeNotEligible(format!(
            "self_dual={} doubly_even={} odd_logical_x={}",
            tag.is_self_dual, tag.is_doubly_even, tag.odd_weight_logical_x
        )));
    }
    match (spec.family, &spec.params) {
        (Family::PsiUp, SpecParams::Mask(mask)) => {
            let k = mask.len();
            let l = 2 * k;
            if mask.is_zero() {
                return Ok((bell_spec(k), Vec::new()));
            }
            // Precursor: Bell pairs on the touched qubits, |+>|0> products on
            // the untouched ones.
            let mut gens = Vec::with_capacity(l);
            for j in 0..k {
                if mask.get(j) {
                    gens.push(gen_of(l, &[j, j + k], &[]));
                } else {
                    gens.push(gen_of(l, &[j], &[]));
                }
            }
            for j in 0..k {
                if mask.get(j) {
                    gens.push(gen_of(l, &[], &[j, j + k]));
                } else {
                    gens.push(gen_of(l, &[], &[j + k]));
                }
            }
            let precursor =
                AncillaSpec::new(l, gens, Family::OmegaEf, DistType::I, SpecParams::Mask(mask.clone()));
            let untouched: Vec<(usize, usize)> =
                (0..k).filter(|&j| !mask.get(j)).map(|j| (j, j + k)).collect();
            // Whole lower block: untouched lower logicals sit in |0_L> where
            // the logical phase acts trivially.
            let lower_block: Vec<usize> = (code.n()..2 * code.n()).collect();
            let mut steps = vec![PipelineStep::BitwisePhase { qubits: lower_block }];
            if !untouched.is_empty() {
                steps.push(PipelineStep::LogicalCnots { pairs: untouched });
            }
            Ok((precursor, steps))
        }
        (Family::OmegaP1, SpecParams::Mask(mask)) => {
            let k = mask.len();
            let l = 4 * k;
            let (ua, uq, la, lq) = (0usize, k, 2 * k, 3 * k);
            // Precursor: the Type II state with the upper block not yet
            // phase-twisted and its A half in |+>.
            let mut gens = Vec::with_capacity(l);
            for j in 0..k {
                gens.push(gen_of(l, &[ua + j], &[]));
            }
            for j in 0..k {
                if mask.get(j) {
                    gens.push(gen_of(l, &[uq + j], &[lq + j]));
                } else {
                    gens.push(gen_of(l, &[], &[uq + j]));
                }
            }
            for j in 0..k {
                gens.push(gen_of(l, &[la + j], &[]));
            }
            for j in 0..k {
                let zs: Vec<usize> = if mask.get(j) { vec![uq + j] } else { vec![] };
                gens.push(gen_of(l, &[lq + j], &zs));
            }
            let precursor =
                AncillaSpec::new(l, gens, Family::OmegaEf, DistType::II, SpecParams::Mask(mask.clone()));
            // The phase layer must hit only the Q-half logicals of the upper
            // block: the A half sits in |+_L> and an unwanted logical phase
            // there survives the final measurement as a Clifford twist, not a
            // Pauli. This needs the two halves physically separable.
            let q_mask = split_phase_mask(code, k)?;
            let qubits: Vec<usize> = q_mask.iter_ones().collect();
            // Measure (0 0 | I Λ) on the upper block: Z_{A_j} Z_{Q_j}^m.
            let meas: Vec<PauliOp> = (0..k)
                .map(|j| {
                    let zs: Vec<usize> = if mask.get(j) { vec![ua + j, uq + j] } else { vec![ua + j] };
                    gen_of(l, &[], &zs)
                })
                .collect();
            Ok((
                precursor,
                vec![
                    PipelineStep::BitwisePhase { qubits },
                    PipelineStep::LogicalMeasure { ops: meas },
                ],
            ))
        }
        _ => Err(AncillaError::BadStage),
    }
}

/// Execute pipeline steps on a realized precursor tableau.
pub fn execute_pipeline(
    t: &mut StabilizerTableau,
    steps: &[PipelineStep],
    code: &CssCode,
    blocks: usize,
    rng: &mut impl rand::Rng,
) -> Result<(), AncillaError> {
    for step in steps {
        match step {
            PipelineStep::BitwisePhase { qubits } => {
                for &q in qubits {
                    t.apply_gate(Gate::P(q))?;
                }
            }
            PipelineStep::LogicalCnots { pairs } => {
                let gates: Vec<Gate> = pairs.iter().map(|&(c, tq)| Gate::Cnot(c, tq)).collect();
                let c = logical_clifford(&gates, code, blocks)?;
                t.apply_clifford(&c)?;
            }
            PipelineStep::LogicalMeasure { ops } => {
                for op in ops {
                    let lifted = lift_spec_op(op, code, blocks);
                    t.measure(&lifted, rng)?;
                }
            }
        }
    }
    Ok(())
}

/// Physical Clifford implementing a logical-level gate list: lifted logical
/// images move per the gates, code stabilizers stay fixed.
pub fn logical_clifford(
    gates: &[Gate],
    code: &CssCode,
    blocks: usize,
) -> Result<CliffordOp, AncillaError> {
    let k = code.k();
    let l = blocks * k;
    let n_phys = blocks * code.n();
    let logical = CliffordOp::from_gates(l, gates)
        .map_err(|_| AncillaError::DimensionMismatch(l, l))?;
    let mut prescribed: Vec<(PauliOp, PauliOp)> = (0..l)
        .map(|j| {
            let xi = logical.row(j);
            let zi = logical.row(l + j);
            (lift_spec_op(xi, code, blocks), lift_spec_op(zi, code, blocks))
        })
        .collect();
    let mut singles = Vec::new();
    for b in 0..blocks {
        for s in code.x_stabilizers().into_iter().chain(code.z_stabilizers()) {
            singles.push(s.embed(n_phys, b * code.n()));
        }
    }
    let partners = crate::tableau::symplectic_complete(&prescribed, &singles)?;
    // Slot order: k logical pairs per block first, then stabilizer pairs.
    prescribed.extend(partners.into_iter().zip(singles));
    let mut x_rows = Vec::with_capacity(n_phys);
    let mut z_rows = Vec::with_capacity(n_phys);
    for (x, z) in prescribed {
        x_rows.push(x);
        z_rows.push(z);
    }
    x_rows.extend(z_rows);
    CliffordOp::from_rows(n_phys, x_rows).map_err(|_| AncillaError::NonCommutingSet)
}

/// Pauli difference between two states with equal binary stabilizer spans:
/// returns P with t2 = P t1, if it exists.
pub fn pauli_difference(t1: &StabilizerTableau, t2: &StabilizerTableau) -> Option<PauliOp> {
    if t1.n() != t2.n() {
        return None;
    }
    let c1 = t1.canonical_stabilizers();
    let c2 = t2.canonical_stabilizers();
    if c1.len() != c2.len() {
        return None;
    }
    let mut diff_bits = Vec::with_capacity(c1.len());
    for (a, b) in c1.iter().zip(&c2) {
        if a.binary_row() != b.binary_row() {
            return None;
        }
        diff_bits.push(a.phase_exp() != b.phase_exp());
    }
    // Solve <P, g_i> = diff_i.
    let j = crate::clifford::symplectic_j(t1.n());
    let rows: Vec<BitVec> = c1.iter().map(|g| j.mul_vec_left(&g.binary_row())).collect();
    let sys = BitMatrix::from_rows(&rows);
    let sol = sys.solve(&BitVec::from_bits(&diff_bits)).ok()?;
    Some(PauliOp::from_binary_row(&sol, 0))
}

/// Equality up to a logical Pauli frame: equal binary spans and the sign
/// difference is explained by a Pauli with zero syndrome on every block.
pub fn states_equal_mod_logical_pauli(
    t1: &StabilizerTableau,
    t2: &StabilizerTableau,
    code: &CssCode,
    blocks: usize,
) -> bool {
    let Some(p) = pauli_difference(t1, t2) else {
        return false;
    };
    let n = code.n();
    for b in 0..blocks {
        let part = p.restrict(b * n, (b + 1) * n);
        match code.syndrome(&part) {
            Ok(s) if s.is_zero() => {}
            _ => return false,
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::css::{code_422, code_steane};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    #[test]
    fn bell_spec_basics() {
        let s = bell_spec(1);
        assert_eq!(s.generators.len(), 2);
        assert_eq!(s.generators[0].to_string(), "+XX");
        assert_eq!(s.generators[1].to_string(), "+ZZ");
        let s2 = bell_spec(2);
        assert_eq!(s2.generators.len(), 4);
        s2.validate().unwrap();
    }

    #[test]
    fn psi_c_identity_is_bell() {
        let stage = Stage::C { u: BitMatrix::identity(2) };
        let psi = psi_spec(&stage, 2).unwrap();
        assert!(psi.same_state(&bell_spec(2)));
    }

    #[test]
    fn psi_p_zero_mask_is_bell() {
        let stage = Stage::P { mask: BitVec::zeros(3) };
        let psi = psi_spec(&stage, 3).unwrap();
        assert!(psi.same_state(&bell_spec(3)));
        assert_eq!(psi.dist_type, DistType::I);
    }

    #[test]
    fn psi_h_full_mask_display() {
        let stage = Stage::H { mask: BitVec::from_bits(&[true, true]) };
        let psi = psi_spec(&stage, 2).unwrap();
        assert_eq!(psi.dist_type, DistType::II);
        // Generators X_j ⊗ Z_{j+k} and Z_j ⊗ X_{j+k}.
        assert_eq!(psi.generators[0].to_string(), "+XIZI");
        assert_eq!(psi.generators[2].to_string(), "+ZIXI");
    }

    #[test]
    fn psi_specs_match_applied_bell_oracle() {
        // (I ⊗ U_stage)|Phi+>^k via logical tableau conjugation on the lower half.
        let mut rng = StdRng::seed_from_u64(77);
        for trial in 0..40 {
            let k = 1 + trial % 4;
            let stage = match trial % 3 {
                0 => Stage::P { mask: BitVec::from_bits(&(0..k).map(|_| rng.gen()).collect::<Vec<_>>()) },
                1 => Stage::H { mask: BitVec::from_bits(&(0..k).map(|_| rng.gen()).collect::<Vec<_>>()) },
                _ => {
                    let mut u = BitMatrix::identity(k);
                    for i in 0..k {
                        for j in i + 1..k {
                            u.set(i, j, rng.gen());
                        }
                    }
                    Stage::C { u }
                }
            };
            let psi = psi_spec(&stage, k).unwrap();
            // Oracle: apply the stage's gates to the lower half of Bell pairs.
            let bell = bell_spec(k);
            let mut t = bell.logical_tableau().unwrap();
            let gates: Vec<Gate> = stage
                .gates(k)
                .iter()
                .map(|g| match *g {
                    Gate::H(q) => Gate::H(q + k),
                    Gate::P(q) => Gate::P(q + k),
                    Gate::Cnot(c, t2) => Gate::Cnot(c + k, t2 + k),
                    Gate::X(q) => Gate::X(q + k),
                    Gate::Z(q) => Gate::Z(q + k),
                })
                .collect();
            t.apply_gates(&gates).unwrap();
            let spec_t = psi.logical_tableau().unwrap();
            assert!(
                t.states_equal(&spec_t).unwrap(),
                "stage {stage:?} spec/oracle mismatch:\n{t:?}\nvs\n{spec_t:?}"
            );
        }
    }

    #[test]
    fn omega_ef_trivial_is_product() {
        let e = BitMatrix::zeros(0, 2);
        let f = BitMatrix::zeros(0, 2);
        let s = omega_ef_spec(&e, &f).unwrap();
        let t = s.logical_tableau().unwrap();
        let want = StabilizerTableau::zeros(2).tensor(&StabilizerTableau::pluses(2));
        assert!(t.states_equal(&want).unwrap());
    }

    #[test]
    fn omega_ef_single_y_generator() {
        // m=1, e=f=(1,0): the entangling generator is Y_1 ⊗ Z_1 with tau=1.
        let e = BitMatrix::from_fn(1, 2, |_, j| j == 0);
        let f = BitMatrix::from_fn(1, 2, |_, j| j == 0);
        let s = omega_ef_spec(&e, &f).unwrap();
        let t = s.logical_tableau().unwrap();
        let g: PauliOp = "+YIZI".parse().unwrap();
        assert_eq!(t.expectation(&g), Some(false));
    }

    #[test]
    fn omega_ef_rejects_noncommuting() {
        // X1 and Z1 anticommute.
        let e = BitMatrix::from_fn(2, 2, |i, j| i == 0 && j == 0);
        let f = BitMatrix::from_fn(2, 2, |i, j| i == 1 && j == 0);
        assert!(matches!(omega_ef_spec(&e, &f), Err(AncillaError::NonCommutingSet)));
    }

    #[test]
    fn omega_displays_are_valid() {
        let mut rng = StdRng::seed_from_u64(5);
        for k in 1..=3usize {
            let mask = BitVec::from_bits(&(0..k).map(|i| i % 2 == 0).collect::<Vec<_>>());
            for stage in [Stage::P { mask: mask.clone() }, Stage::H { mask: mask.clone() }] {
                let specs = omega_stage_specs(&stage, k).unwrap();
                assert_eq!(specs.len(), 2);
                for s in &specs {
                    s.validate().unwrap();
                }
            }
            let mut u = BitMatrix::identity(k);
            for i in 0..k {
                for j in i + 1..k {
                    u.set(i, j, rng.gen());
                }
            }
            let specs = omega_stage_specs(&Stage::C { u }, k).unwrap();
            assert_eq!(specs.len(), 3);
            for s in &specs {
                s.validate().unwrap();
            }
            // Omega_C1 is the k-fold Bell pattern between upper halves plus |+>^{2k}.
            let c1 = &specs[0];
            let t = c1.logical_tableau().unwrap();
            for j in 0..k {
                let mut a = BitVec::zeros(4 * k);
                a.set(j, true);
                a.set(k + j, true);
                let g = PauliOp::from_parts(a, BitVec::zeros(4 * k), 0);
                assert_eq!(t.expectation(&g), Some(false));
            }
        }
    }

    #[test]
    fn omega_p1_matches_ef_construction() {
        // The display group equals the generic EF-built group for the set
        // {i X_{A_j}X_{Q_j} Z_{Q_j} ⊗ Z_{Q_j}} with A,Q halves of the upper block.
        for k in 1..=3usize {
            let mask = BitVec::from_bits(&(0..k).map(|i| i != 1).collect::<Vec<_>>());
            let stage = Stage::P { mask: mask.clone() };
            let display = &omega_stage_specs(&stage, k).unwrap()[0];
            let kk = 2 * k;
            let m = mask.weight();
            let mut e = BitMatrix::zeros(m, kk);
            let mut f = BitMatrix::zeros(m, kk);
            for (row, j) in mask.iter_ones().enumerate() {
                e.set(row, j, true);
                e.set(row, k + j, true);
                f.set(row, k + j, true);
            }
            let ef = omega_ef_spec(&e, &f).unwrap();
            assert!(display.same_state(&ef), "k={k}");
        }
    }

    #[test]
    fn omega_c_specs_match_ef_construction() {
        let mut rng = StdRng::seed_from_u64(41);
        for k in 1..=3usize {
            let mut u = BitMatrix::identity(k);
            for i in 0..k {
                for j in i + 1..k {
                    u.set(i, j, rng.gen());
                }
            }
            let specs = omega_stage_specs(&Stage::C { u: u.clone() }, k).unwrap();
            let kk = 2 * k;
            // Set 1: (I I | 0 0) on the upper block.
            let mut e1 = BitMatrix::zeros(k, kk);
            for j in 0..k {
                e1.set(j, j, true);
                e1.set(j, k + j, true);
            }
            let ef1 = omega_ef_spec(&e1, &BitMatrix::zeros(k, kk)).unwrap();
            assert!(specs[0].same_state(&ef1), "C1 k={k}");
            // Set 2: (0 0 | I (U^t)^{-1}+I).
            let uti = u.transpose().invert().unwrap();
            let l1 = uti.add(&BitMatrix::identity(k));
            let mut f2 = BitMatrix::zeros(k, kk);
            for j in 0..k {
                f2.set(j, j, true);
                for c in l1.row(j).iter_ones() {
                    f2.set(j, k + c, true);
                }
            }
            let ef2 = omega_ef_spec(&BitMatrix::zeros(k, kk), &f2).unwrap();
            assert!(specs[1].same_state(&ef2), "C2 k={k}");
            // Set 3: (I 0 | 0 0).
            let mut e3 = BitMatrix::zeros(k, kk);
            for j in 0..k {
                e3.set(j, j, true);
            }
            let ef3 = omega_ef_spec(&e3, &BitMatrix::zeros(k, kk)).unwrap();
            assert!(specs[2].same_state(&ef3), "C3 k={k}");
        }
    }

    #[test]
    fn realize_bell_on_422() {
        let code = code_422();
        let spec = bell_spec(2);
        let t = realize(&spec, &code).unwrap();
        assert_eq!(t.n(), 8);
        t.check_invariants().unwrap();
        for b in 0..2 {
            for s in code.x_stabilizers().iter().chain(code.z_stabilizers().iter()) {
                assert_eq!(t.expectation(&s.embed(8, b * 4)), Some(false));
            }
        }
        for g in &spec.generators {
            assert_eq!(t.expectation(&lift_spec_op(g, &code, 2)), Some(false));
        }
    }

    #[test]
    fn realize_omega_c3_is_product() {
        let code = code_steane();
        let k = 1;
        let specs = omega_stage_specs(&Stage::C { u: BitMatrix::identity(k) }, k).unwrap();
        let c3 = &specs[2];
        let t = realize(c3, &code).unwrap();
        let xa = lift_spec_op(&c3.generators[0], &code, 4);
        assert_eq!(t.expectation(&xa), Some(false));
        t.check_invariants().unwrap();
    }

    #[test]
    fn type3_requires_eligible_code() {
        let c422 = code_422();
        let mask = BitVec::from_bits(&[true]);
        let spec = psi_spec(&Stage::P { mask }, 1).unwrap();
        assert!(matches!(
            type3_pipeline(&spec, &c422),
            Err(AncillaError::CodeNotEligible(_))
        ));
    }

    #[test]
    fn type3_psi_up_trivial_mask() {
        let code = code_steane();
        let spec = psi_spec(&Stage::P { mask: BitVec::zeros(1) }, 1).unwrap();
        let (pre, steps) = type3_pipeline(&spec, &code).unwrap();
        assert!(steps.is_empty());
        assert!(pre.same_state(&bell_spec(1)));
    }

    #[test]
    fn bitwise_phase_preserves_code_space_on_steane() {
        let code = code_steane();
        let mut t = code.encode_tableau(&BitVec::zeros(1)).unwrap();
        for q in 0..7 {
            t.apply_gate(Gate::P(q)).unwrap();
        }
        for s in code.x_stabilizers().iter().chain(code.z_stabilizers().iter()) {
            assert_eq!(t.expectation(s), Some(false), "stabilizer {s} broken");
        }
    }

    #[test]
    fn type3_psi_up_pipeline_reaches_target() {
        let mut rng = StdRng::seed_from_u64(13);
        let code = code_steane();
        let mask = BitVec::from_bits(&[true]);
        let spec = psi_spec(&Stage::P { mask }, 1).unwrap();
        let (pre, steps) = type3_pipeline(&spec, &code).unwrap();
        let mut t = realize(&pre, &code).unwrap();
        execute_pipeline(&mut t, &steps, &code, 2, &mut rng).unwrap();
        let want = realize(&spec, &code).unwrap();
        assert!(states_equal_mod_logical_pauli(&t, &want, &code, 2));
    }

    #[test]
    fn type3_omega_p1_pipeline_reaches_target() {
        let mut rng = StdRng::seed_from_u64(29);
        // Needs a 2k-logical eligible code: two Steane blocks glued together.
        let code = crate::css::block_sum(&code_steane(), 2);
        assert!(code.classify().unwrap().phase_eligible());
        let k = 1usize;
        let mask = BitVec::from_bits(&[true]);
        let specs = omega_stage_specs(&Stage::P { mask: mask.clone() }, k).unwrap();
        let p1 = &specs[0];
        let (pre, steps) = type3_pipeline(p1, &code).unwrap();
        let mut t = realize(&pre, &code).unwrap();
        execute_pipeline(&mut t, &steps, &code, 2, &mut rng).unwrap();
        let want = realize(p1, &code).unwrap();
        assert!(states_equal_mod_logical_pauli(&t, &want, &code, 2));
    }

    #[test]
    fn classification_table() {
        let k = 2;
        let mask = BitVec::from_bits(&[true, false]);
        let u = BitMatrix::from_fn(k, k, |i, j| i <= j);
        assert_eq!(psi_spec(&Stage::C { u: u.clone() }, k).unwrap().dist_type, DistType::I);
        assert_eq!(psi_spec(&Stage::H { mask: mask.clone() }, k).unwrap().dist_type, DistType::II);
        assert_eq!(psi_spec(&Stage::P { mask: mask.clone() }, k).unwrap().dist_type, DistType::III);
        let p = omega_stage_specs(&Stage::P { mask: mask.clone() }, k).unwrap();
        assert_eq!(p[0].dist_type, DistType::III);
        assert_eq!(p[1].dist_type, DistType::I);
        let h = omega_stage_specs(&Stage::H { mask }, k).unwrap();
        assert_eq!(h[0].dist_type, DistType::II);
        assert_eq!(h[1].dist_type, DistType::I);
        let c = omega_stage_specs(&Stage::C { u }, k).unwrap();
        assert!(c.iter().all(|s| s.dist_type == DistType::I));
    }

    #[test]
    fn realized_spec_generators_measure_plus_one() {
        let mut rng = StdRng::seed_from_u64(31);
        let code = code_422();
        let k = 2usize;
        let mask = BitVec::from_bits(&(0..k).map(|i| i == 0).collect::<Vec<_>>());
        let spec = psi_spec(&Stage::H { mask }, k).unwrap();
        let mut t = realize(&spec, &code).unwrap();
        for g in &spec.generators {
            let lifted = lift_spec_op(g, &code, 2);
            assert!(!t.measure(&lifted, &mut rng).unwrap());
        }
    }
}
