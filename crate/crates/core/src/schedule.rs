//! Compilation of logical Clifford circuits into constant-round Knill or
//! Steane schedules, exact round semantics, noiseless verification, and
//! single-fault tolerance sweeps.
//!
//! A Knill round teleports the data block through a two-block ancilla
//! (I ⊗ V)|Φ+>^k, applying V while extracting syndromes. A Steane round
//! couples the data block to a two-block Ω ancilla with two transversal
//! CNOTs and measures one commuting set of logical Paulis plus syndromes.
//! Stage permutations never execute: rounds are compiled against relabeled
//! ancilla specs and the accumulated relabeling is reported with the
//! schedule.
//!
//! The generalized stabilizer form (GSF) engine tracks encoded operators and
//! stabilizer rows through measurement sets at the logical level; compilation
//! uses it to derive and validate each round's outcome-to-frame rule.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use rand::Rng;
use thiserror::Error;

use crate::ancilla::{
    lift_spec_op, omega_ef_spec, psi_spec, AncillaError, AncillaSpec, Family, SpecParams,
};
use crate::clifford::{CliffordError, CliffordOp, Gate, Stage, StagedCircuit};
use crate::css::{CodeError, CssCode, LookupDecoder, TypedDecoder};
use crate::gf2::{triangular_complete, BitMatrix, BitVec, Permutation};
use crate::pauli::PauliOp;
use crate::tableau::{StabilizerTableau, TableauError};

#[derive(Debug, Error)]
pub enum ScheduleError {
    #[error("code has {have} logical qubits, schedule needs {need}")]
    CodeTooSmall { have: usize, need: usize },
    #[error("bad blocks: {0}")]
    BadBlocks(String),
    #[error("measurement set incompatible with current stabilizer rows: {0}")]
    IncompatibleSet(String),
    #[error("schedule parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Ancilla(#[from] AncillaError),
    #[error(transparent)]
    Clifford(#[from] CliffordError),
    #[error(transparent)]
    Tableau(#[from] TableauError),
    #[error(transparent)]
    Code(#[from] CodeError),
}

// ---------------------------------------------------------------------------
// Generalized stabilizer form
// ---------------------------------------------------------------------------

/// Encoded-operator rows plus stabilizer rows over N logical qubits. The
/// x/z row pairs are symplectic partners; stabilizer rows commute with both.
#[derive(Clone, Debug)]
pub struct GsfMatrix {
    pub n_logical: usize,
    pub x_rows: Vec<PauliOp>,
    pub z_rows: Vec<PauliOp>,
    pub stab: Vec<PauliOp>,
}

impl GsfMatrix {
    pub fn new(
        n_logical: usize,
        x_rows: Vec<PauliOp>,
        z_rows: Vec<PauliOp>,
        stab: Vec<PauliOp>,
    ) -> Result<GsfMatrix, ScheduleError> {
        let g = GsfMatrix {
            n_logical,
            x_rows,
            z_rows,
            stab,
        };
        g.check()?;
        Ok(g)
    }

    fn check(&self) -> Result<(), ScheduleError> {
        let k = self.x_rows.len();
        if self.z_rows.len() != k || self.stab.len() + k != self.n_logical {
            return Err(ScheduleError::IncompatibleSet("row count mismatch".into()));
        }
        for (i, s) in self.stab.iter().enumerate() {
            for t in &self.stab[..i] {
                if s.anticommutes(t) {
                    return Err(ScheduleError::IncompatibleSet("stab rows anticommute".into()));
                }
            }
            for l in self.x_rows.iter().chain(&self.z_rows) {
                if s.anticommutes(l) {
                    return Err(ScheduleError::IncompatibleSet(
                        "encoded rows do not commute with stabilizer rows".into(),
                    ));
                }
            }
        }
        for i in 0..k {
            for j in 0..k {
                let want = i == j;
                if self.x_rows[i].anticommutes(&self.z_rows[j]) != want {
                    return Err(ScheduleError::IncompatibleSet(
                        "encoded rows are not symplectic partners".into(),
                    ));
                }
                if self.x_rows[i].anticommutes(&self.x_rows[j])
                    || self.z_rows[i].anticommutes(&self.z_rows[j])
                {
                    return Err(ScheduleError::IncompatibleSet("encoded rows anticommute".into()));
                }
            }
        }
        Ok(())
    }

    /// Measure a commuting set of logical Paulis simultaneously. Stabilizer
    /// rows are replaced, encoded rows re-expressed by partner multiplication.
    /// Returns the partner operator for each measured op (the Pauli the frame
    /// absorbs when that outcome reads −1).
    pub fn apply_measurement(&mut self, ops: &[PauliOp]) -> Result<Vec<PauliOp>, ScheduleError> {
        for (i, w) in ops.iter().enumerate() {
            if w.n() != self.n_logical {
                return Err(ScheduleError::IncompatibleSet("dimension mismatch".into()));
            }
            for v in &ops[..i] {
                if w.anticommutes(v) {
                    return Err(ScheduleError::IncompatibleSet("measured ops anticommute".into()));
                }
            }
        }
        // Pairing matrix Pi[s][j] = <stab_s, w_j>.
        let s_count = self.stab.len();
        let m = ops.len();
        let pi = BitMatrix::from_fn(s_count, m, |s, j| self.stab[s].anticommutes(&ops[j]));
        let mut partners: Vec<PauliOp> = vec![PauliOp::identity(self.n_logical); m];
        let mut partnered: Vec<usize> = Vec::new();
        for j in 0..m {
            if (0..s_count).all(|s| !pi.get(s, j)) {
                // Trivial measurement: must not reveal encoded information.
                if self
                    .x_rows
                    .iter()
                    .chain(&self.z_rows)
                    .any(|l| l.anticommutes(&ops[j]))
                {
                    return Err(ScheduleError::IncompatibleSet(
                        "op reveals encoded information".into(),
                    ));
                }
            } else {
                partnered.push(j);
            }
        }
        // Partner combinations: p_j = prod stab_s^{c_s} with <p_j, w_i> =
        // delta_ij across the partnered set.
        for &j in &partnered {
            let mut rhs = BitVec::zeros(partnered.len());
            for (row, &i) in partnered.iter().enumerate() {
                if i == j {
                    rhs.set(row, true);
                }
            }
            let sys = BitMatrix::from_fn(partnered.len(), s_count, |row, s| pi.get(s, partnered[row]));
            let c = sys
                .solve(&rhs)
                .map_err(|_| ScheduleError::IncompatibleSet("no valid partner combination".into()))?;
            let mut p = PauliOp::identity(self.n_logical);
            for s in c.iter_ones() {
                p.mul_assign(&self.stab[s]);
            }
            partners[j] = p;
        }
        // Fix encoded rows.
        for l in self.x_rows.iter_mut().chain(self.z_rows.iter_mut()) {
            for &j in &partnered {
                if l.anticommutes(&ops[j]) {
                    l.mul_assign(&partners[j]);
                }
            }
        }
        // New stabilizer rows: measured ops plus surviving independent old rows.
        let mut new_stab_rows: Vec<PauliOp> = partnered.iter().map(|&j| ops[j].clone()).collect();
        let mut kept: Vec<PauliOp> = Vec::new();
        for s in &self.stab {
            let mut fixed = s.clone();
            for &j in &partnered {
                if fixed.anticommutes(&ops[j]) {
                    fixed.mul_assign(&partners[j]);
                }
            }
            kept.push(fixed);
        }
        let mut rows: Vec<BitVec> = new_stab_rows.iter().map(PauliOp::binary_row).collect();
        for s in kept {
            if new_stab_rows.len() == self.stab.len() {
                break;
            }
            if rows.is_empty() {
                rows.push(s.binary_row());
                new_stab_rows.push(s);
                continue;
            }
            let mat = BitMatrix::from_rows(&rows);
            if !mat.row_space_contains(&s.binary_row()) {
                rows.push(s.binary_row());
                new_stab_rows.push(s);
            }
        }
        if new_stab_rows.len() != self.stab.len() {
            return Err(ScheduleError::IncompatibleSet("stabilizer rank drop".into()));
        }
        self.stab = new_stab_rows;
        self.check()?;
        Ok(partners)
    }

    /// Canonical form under the equivalence relation: reduced stabilizer rows
    /// plus encoded rows reduced modulo the stabilizer span (binary only).
    pub fn canonical_binary(&self) -> (Vec<BitVec>, Vec<BitVec>) {
        let stab_rows: Vec<BitVec> = self.stab.iter().map(PauliOp::binary_row).collect();
        let stab_mat = BitMatrix::from_rows(&stab_rows);
        let (red, rank, pivots) = stab_mat.rref();
        let reduce = |v: &BitVec| -> BitVec {
            let mut w = v.clone();
            for (r, &c) in pivots.iter().enumerate().take(rank) {
                if w.get(c) {
                    w.xor_assign(&red.row(r));
                }
            }
            w
        };
        let stab_canon: Vec<BitVec> = (0..rank).map(|r| red.row(r)).collect();
        let enc: Vec<BitVec> = self
            .x_rows
            .iter()
            .chain(&self.z_rows)
            .map(|p| reduce(&p.binary_row()))
            .collect();
        (stab_canon, enc)
    }

    pub fn equivalent(&self, other: &GsfMatrix) -> bool {
        self.canonical_binary() == other.canonical_binary()
    }
}

// ---------------------------------------------------------------------------
// Rounds and schedules
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RoundKind {
    Knill,
    Steane,
}

/// One fault-tolerant syndrome-measurement round. All logical-level operators
/// are stored in physical slot labels (software permutations already folded).
#[derive(Clone, Debug)]
pub struct Round {
    pub kind: RoundKind,
    pub ancilla: AncillaSpec,
    /// Steane: the raw measured logical ops on the code's logical qubits.
    pub measured: Vec<PauliOp>,
    /// Frame Pauli absorbed when the (transformed) outcome j reads −1.
    pub partners: Vec<PauliOp>,
    /// Outcome regeneration matrix from the triangular completion; identity
    /// when absent.
    pub outcome_transform: Option<BitMatrix>,
    /// Knill: binary matrix of the teleported operation V.
    pub knill_matrix: Option<BitMatrix>,
    /// Slot assignment after this round (virtual label -> physical slot).
    pub sigma_after: Permutation,
}

impl Round {
    /// Transformed measured op j as a product of the raw ops.
    fn transformed_op(&self, j: usize) -> PauliOp {
        match &self.outcome_transform {
            None => self.measured[j].clone(),
            Some(t) => {
                let mut p = PauliOp::identity(self.measured[0].n());
                for i in t.row(j).iter_ones() {
                    p.mul_assign(&self.measured[i]);
                }
                p
            }
        }
    }

    fn summary_line(&self, index: usize) -> String {
        let family = self.ancilla.family.as_str();
        let mut h = DefaultHasher::new();
        self.ancilla.dump().hash(&mut h);
        let param_hash = h.finish() & 0xffff_ffff;
        let wiring = match self.kind {
            RoundKind::Knill => "data>upper",
            RoundKind::Steane => "data>lower,upper>data",
        };
        let bases = match self.kind {
            RoundKind::Knill => "measX:data,measZ:upper",
            RoundKind::Steane => "measX:upper,measZ:lower",
        };
        let mut fh = DefaultHasher::new();
        for (m, p) in self.measured.iter().zip(&self.partners) {
            m.to_string().hash(&mut fh);
            p.to_string().hash(&mut fh);
        }
        if let Some(t) = &self.outcome_transform {
            t.to_text().hash(&mut fh);
        }
        if let Some(m) = &self.knill_matrix {
            m.to_text().hash(&mut fh);
        }
        let frame_id = fh.finish() & 0xffff_ffff;
        format!(
            "R{index} kind={:?} family={family} params={param_hash:08x} wiring={wiring} bases={bases} frame={frame_id:08x} perm={:?}",
            self.kind,
            self.sigma_after.as_slice(),
        )
    }
}

/// Software-tracked logical Pauli correction plus syndrome history.
#[derive(Clone, Debug)]
pub struct PauliFrame {
    pub logical: PauliOp,
    pub syndrome_history: Vec<BitVec>,
}

impl PauliFrame {
    pub fn identity(k: usize) -> PauliFrame {
        PauliFrame {
            logical: PauliOp::identity(k),
            syndrome_history: Vec::new(),
        }
    }
}

#[derive(Clone)]
pub struct Schedule {
    pub kind: RoundKind,
    pub rounds: Vec<Round>,
    pub target: CliffordOp,
    pub code: CssCode,
    /// Virtual logical label -> physical logical slot at schedule end.
    pub final_perm: Permutation,
    /// Steane: per virtual auxiliary label, true if it ends in |+_L>.
    pub aux_final_plus: Vec<bool>,
    /// Postponed Pauli layer of the stage decomposition, on circuit labels.
    pub residual: PauliOp,
    /// Systematic sign offset of the all-plus outcome convention, on final
    /// virtual labels; absorbed into the frame at the end of a run.
    pub frame_seed: PauliOp,
}

impl Schedule {
    pub fn data_qubits(&self) -> usize {
        self.target.n()
    }

    /// Physical logical slot holding circuit qubit j at schedule end.
    pub fn data_slot(&self, j: usize) -> usize {
        let virt = match self.kind {
            RoundKind::Knill => j,
            RoundKind::Steane => self.target.n() + j,
        };
        self.final_perm.apply(virt)
    }

    pub fn aux_slot(&self, j: usize) -> usize {
        debug_assert_eq!(self.kind, RoundKind::Steane);
        self.final_perm.apply(j)
    }

    pub fn round_count(&self) -> usize {
        self.rounds.len()
    }
}

fn relabel_bits(v: &BitVec, sigma: &Permutation) -> BitVec {
    let mut out = BitVec::zeros(v.len());
    for j in v.iter_ones() {
        out.set(sigma.apply(j), true);
    }
    out
}

/// Relabel a logical operator on the code's logical qubits.
fn relabel_op(op: &PauliOp, sigma: &Permutation) -> PauliOp {
    PauliOp::from_parts(
        relabel_bits(op.x_part(), sigma),
        relabel_bits(op.z_part(), sigma),
        op.phase_exp(),
    )
}

/// sigma' such that content virtually relabeled by pi keeps its physical slot.
fn sigma_after_virtual_perm(sigma: &Permutation, pi: &Permutation) -> Permutation {
    pi.inverse().then(sigma)
}

// ---------------------------------------------------------------------------
// Knill compilation
// ---------------------------------------------------------------------------

pub fn compile_knill(circuit: &CliffordOp, code: &CssCode) -> Result<Schedule, ScheduleError> {
    let k = circuit.n();
    if code.k() != k {
        return Err(ScheduleError::CodeTooSmall { have: code.k(), need: k });
    }
    let staged = circuit.decompose_stages();
    let mut sigma = Permutation::identity(k);
    let mut rounds: Vec<Round> = Vec::new();
    for stage in &staged.stages {
        match stage {
            Stage::Perm { pi } => {
                sigma = sigma_after_virtual_perm(&sigma, pi);
                if let Some(last) = rounds.last_mut() {
                    last.sigma_after = sigma.clone();
                }
            }
            s => {
                // Teleported operation: the stage acting on virtual labels,
                // executed through physical slots via relabeled gates.
                let gates: Vec<Gate> = s.gates(k).iter().map(|g| relabel_gate(*g, &sigma)).collect();
                let v = CliffordOp::from_gates(k, &gates)?;
                let spec = psi_spec_for(&v, family_of_stage(s), s, &sigma, k)?;
                rounds.push(Round {
                    kind: RoundKind::Knill,
                    ancilla: spec,
                    measured: Vec::new(),
                    partners: Vec::new(),
                    outcome_transform: None,
                    knill_matrix: Some(v.matrix()),
                    sigma_after: sigma.clone(),
                });
            }
        }
    }
    Ok(Schedule {
        kind: RoundKind::Knill,
        rounds,
        target: circuit.clone(),
        code: code.clone(),
        final_perm: sigma,
        aux_final_plus: Vec::new(),
        residual: staged.residual_pauli,
        frame_seed: PauliOp::identity(k),
    })
}

fn relabel_gate(g: Gate, sigma: &Permutation) -> Gate {
    match g {
        Gate::H(q) => Gate::H(sigma.apply(q)),
        Gate::P(q) => Gate::P(sigma.apply(q)),
        Gate::Cnot(c, t) => Gate::Cnot(sigma.apply(c), sigma.apply(t)),
        Gate::X(q) => Gate::X(sigma.apply(q)),
        Gate::Z(q) => Gate::Z(sigma.apply(q)),
    }
}

fn family_of_stage(s: &Stage) -> Family {
    match s {
        Stage::P { .. } => Family::PsiUp,
        Stage::H { .. } => Family::PsiUh,
        Stage::C { .. } => Family::PsiUc,
        Stage::Perm { .. } => Family::Bell,
    }
}

/// Ψ^{V} spec: X_j ⊗ V(X_j) and Z_j ⊗ V(Z_j) on 2k logical qubits. When the
/// relabeling is trivial this is exactly the stage's display spec.
fn psi_spec_for(
    v: &CliffordOp,
    family: Family,
    stage: &Stage,
    sigma: &Permutation,
    k: usize,
) -> Result<AncillaSpec, ScheduleError> {
    if sigma.is_identity() {
        return Ok(psi_spec(stage, k)?);
    }
    let l = 2 * k;
    let mut gens = Vec::with_capacity(l);
    for j in 0..k {
        let mut g = PauliOp::single_x(l, j);
        g.mul_assign(&v.row(j).embed(l, k));
        gens.push(g);
    }
    for j in 0..k {
        let mut g = PauliOp::single_z(l, j);
        g.mul_assign(&v.row(k + j).embed(l, k));
        gens.push(g);
    }
    let params = match stage {
        Stage::P { mask } | Stage::H { mask } => SpecParams::Mask(relabel_bits(mask, sigma)),
        Stage::C { .. } => SpecParams::Matrix(v.matrix().submatrix(0, k, 0, k)),
        Stage::Perm { .. } => SpecParams::None,
    };
    Ok(AncillaSpec {
        logical_qubits: l,
        generators: gens,
        family,
        dist_type: crate::ancilla::DistType::I,
        params,
    })
}

// ---------------------------------------------------------------------------
// Steane compilation
// ---------------------------------------------------------------------------

struct SteaneCompiler {
    kp: usize,
    sigma: Permutation,
    aux_plus: Vec<bool>,
    rounds: Vec<Round>,
    gsf: GsfMatrix,
}

impl SteaneCompiler {
    fn new(kp: usize) -> SteaneCompiler {
        let n_logical = 2 * kp;
        let stab: Vec<PauliOp> = (0..kp).map(|j| PauliOp::single_z(n_logical, j)).collect();
        let x_rows: Vec<PauliOp> = (0..kp).map(|j| PauliOp::single_x(n_logical, kp + j)).collect();
        let z_rows: Vec<PauliOp> = (0..kp).map(|j| PauliOp::single_z(n_logical, kp + j)).collect();
        SteaneCompiler {
            kp,
            sigma: Permutation::identity(n_logical),
            aux_plus: vec![false; kp],
            rounds: Vec::new(),
            gsf: GsfMatrix::new(n_logical, x_rows, z_rows, stab).expect("valid start"),
        }
    }

    fn op(&self, xs: &[usize], zs: &[usize]) -> PauliOp {
        let l = 2 * self.kp;
        let mut a = BitVec::zeros(l);
        let mut b = BitVec::zeros(l);
        for &q in xs {
            a.set(q, true);
        }
        for &q in zs {
            b.set(q, true);
        }
        PauliOp::hermitian(a, b, false)
    }

    /// Place a two-qubit (A_j, Q_j) pattern onto the full label space.
    fn pair_op(&self, j: usize, pattern: &PauliOp) -> PauliOp {
        let l = 2 * self.kp;
        let mut a = BitVec::zeros(l);
        let mut b = BitVec::zeros(l);
        if pattern.x_part().get(0) {
            a.set(j, true);
        }
        if pattern.z_part().get(0) {
            b.set(j, true);
        }
        if pattern.x_part().get(1) {
            a.set(self.kp + j, true);
        }
        if pattern.z_part().get(1) {
            b.set(self.kp + j, true);
        }
        PauliOp::hermitian(a, b, false)
    }

    /// Emit one measurement round for a commuting set given on virtual
    /// labels; partners come from the GSF engine.
    fn push_round(
        &mut self,
        ops_virtual: Vec<PauliOp>,
        transform: Option<BitMatrix>,
        family: Family,
        canonical: Option<AncillaSpec>,
    ) -> Result<(), ScheduleError> {
        let partners_virtual = self.gsf.apply_measurement(&ops_virtual)?;
        let measured: Vec<PauliOp> = ops_virtual.iter().map(|o| relabel_op(o, &self.sigma)).collect();
        let mut partners: Vec<PauliOp> = Vec::with_capacity(measured.len());
        match &transform {
            None => {
                for p in &partners_virtual {
                    partners.push(relabel_op(p, &self.sigma));
                }
            }
            Some(t) => {
                // Partner of transformed op j = w'_j = prod_i w_i^{T_ji}: the
                // combination sum_s c_s p_s with <sum c p, w'_j> = (T c)_j, so
                // c-rows come from T^{-1} transposed.
                let tinv = t
                    .invert()
                    .map_err(|_| ScheduleError::IncompatibleSet("singular transform".into()))?;
                let tit = tinv.transpose();
                for j in 0..measured.len() {
                    let mut p = PauliOp::identity(2 * self.kp);
                    for s in tit.row(j).iter_ones() {
                        p.mul_assign(&partners_virtual[s]);
                    }
                    partners.push(relabel_op(&p, &self.sigma));
                }
            }
        }
        let l = 2 * self.kp;
        let ancilla = match canonical {
            Some(spec) => spec,
            None => {
                let mut e = BitMatrix::zeros(measured.len(), l);
                let mut f = BitMatrix::zeros(measured.len(), l);
                for (r, m) in measured.iter().enumerate() {
                    for q in m.x_part().iter_ones() {
                        e.set(r, q, true);
                    }
                    for q in m.z_part().iter_ones() {
                        f.set(r, q, true);
                    }
                }
                let mut s = omega_ef_spec(&e, &f)?;
                s.family = family;
                s
            }
        };
        self.rounds.push(Round {
            kind: RoundKind::Steane,
            ancilla,
            measured,
            partners,
            outcome_transform: transform,
            knill_matrix: None,
            sigma_after: self.sigma.clone(),
        });
        Ok(())
    }

    /// Relabel a canonical omega display spec from virtual to physical slots
    /// on both ancilla blocks.
    fn relabel_spec(&self, spec: AncillaSpec) -> AncillaSpec {
        if self.sigma.is_identity() {
            return spec;
        }
        let l = spec.logical_qubits;
        let half = l / 2;
        let mut sig = Vec::with_capacity(l);
        for j in 0..half {
            sig.push(self.sigma.apply(j));
        }
        for j in 0..half {
            sig.push(half + self.sigma.apply(j));
        }
        let full = Permutation::from_map(sig);
        AncillaSpec {
            generators: spec.generators.iter().map(|g| relabel_op(g, &full)).collect(),
            ..spec
        }
    }

    fn virtual_swap(&mut self, mask: &BitVec) {
        let kp = self.kp;
        let mut to: Vec<usize> = (0..2 * kp).collect();
        for j in mask.iter_ones() {
            to.swap(j, kp + j);
        }
        let pi = Permutation::from_map(to);
        self.sigma = sigma_after_virtual_perm(&self.sigma, &pi);
        for r in self
            .gsf
            .x_rows
            .iter_mut()
            .chain(self.gsf.z_rows.iter_mut())
            .chain(self.gsf.stab.iter_mut())
        {
            *r = relabel_op(r, &pi);
        }
        if let Some(last) = self.rounds.last_mut() {
            last.sigma_after = self.sigma.clone();
        }
    }

    fn pair_stage(&mut self, mask: &BitVec, hadamard: bool) -> Result<(), ScheduleError> {
        let touched: Vec<usize> = mask.iter_ones().collect();
        if touched.is_empty() {
            return Ok(());
        }
        let canonical = touched.iter().all(|&j| !self.aux_plus[j]) && self.sigma.is_identity();
        let mut set1 = Vec::new();
        let mut set2 = Vec::new();
        let mut exits = Vec::new();
        let mut swap_mask = BitVec::zeros(self.kp);
        for &j in &touched {
            let (w1, w2, exit_plus, do_swap) = pair_primitive(hadamard, self.aux_plus[j])?;
            set1.push(self.pair_op(j, &w1));
            set2.push(self.pair_op(j, &w2));
            exits.push(exit_plus);
            if do_swap {
                swap_mask.set(j, true);
            }
        }
        let stage = if hadamard {
            Stage::H { mask: mask.clone() }
        } else {
            Stage::P { mask: mask.clone() }
        };
        let (fam1, fam2) = if hadamard {
            (Family::OmegaH1, Family::OmegaH2)
        } else {
            (Family::OmegaP1, Family::OmegaP2)
        };
        let (c1, c2) = if canonical {
            let mut v = crate::ancilla::omega_stage_specs(&stage, self.kp)?;
            let s2 = v.pop().unwrap();
            let s1 = v.pop().unwrap();
            (Some(self.relabel_spec(s1)), Some(self.relabel_spec(s2)))
        } else {
            (None, None)
        };
        self.push_round(set1, None, fam1, c1)?;
        self.push_round(set2, None, fam2, c2)?;
        self.virtual_swap(&swap_mask);
        for (&j, exit_plus) in touched.iter().zip(exits) {
            self.aux_plus[j] = exit_plus;
        }
        Ok(())
    }

    fn p_stage(&mut self, mask: &BitVec) -> Result<(), ScheduleError> {
        self.pair_stage(mask, false)
    }

    fn h_stage(&mut self, mask: &BitVec) -> Result<(), ScheduleError> {
        self.pair_stage(mask, true)
    }

    fn c_stage(&mut self, u: &BitMatrix) -> Result<(), ScheduleError> {
        let kp = self.kp;
        let canonical = self.aux_plus.iter().all(|&b| !b) && self.sigma.is_identity();
        let (c1, c2, c3) = if canonical {
            let mut v = crate::ancilla::omega_stage_specs(&Stage::C { u: u.clone() }, kp)?;
            let s3 = v.pop().unwrap();
            let s2 = v.pop().unwrap();
            let s1 = v.pop().unwrap();
            (
                Some(self.relabel_spec(s1)),
                Some(self.relabel_spec(s2)),
                Some(self.relabel_spec(s3)),
            )
        } else {
            (None, None, None)
        };
        // Set 1: entangle each auxiliary with its data partner.
        let mut set1 = Vec::new();
        for j in 0..kp {
            if self.aux_plus[j] {
                set1.push(self.op(&[kp + j], &[j]));
            } else {
                set1.push(self.op(&[j, kp + j], &[]));
            }
        }
        self.push_round(set1, None, Family::OmegaC1, c1)?;
        // Set 2: rows of (I | (U^t)^{-1}+I); outcomes regenerated through the
        // triangular completion so partners pair diagonally with set 1.
        let uti = u
            .transpose()
            .invert()
            .map_err(|_| ScheduleError::IncompatibleSet("C stage matrix not invertible".into()))?;
        let l1 = uti.add(&BitMatrix::identity(kp));
        let (l2, _l3) = triangular_complete(&l1)
            .map_err(|e| ScheduleError::IncompatibleSet(format!("triangular completion: {e}")))?;
        let mut set2 = Vec::new();
        for j in 0..kp {
            let qs: Vec<usize> = l1.row(j).iter_ones().map(|c| kp + c).collect();
            if self.aux_plus[j] {
                set2.push(self.op(&[j], &qs));
            } else {
                let mut zs = vec![j];
                zs.extend(qs);
                set2.push(self.op(&[], &zs));
            }
        }
        self.push_round(set2, Some(l2), Family::OmegaC2, c2)?;
        // Set 3: reset measurements on the auxiliaries.
        let mut set3 = Vec::new();
        for j in 0..kp {
            if self.aux_plus[j] {
                set3.push(self.op(&[], &[j]));
            } else {
                set3.push(self.op(&[j], &[]));
            }
        }
        self.push_round(set3, None, Family::OmegaC3, c3)?;
        for b in self.aux_plus.iter_mut() {
            *b = !*b;
        }
        Ok(())
    }
}

/// The two-measurement teleport primitive on one {A, Q} pair (labels 0, 1):
/// measure W1 then W2, then swap the labels; the net effect on Q is a Phase
/// (or Hadamard) gate up to Pauli corrections, with the auxiliary left in a
/// definite basis. Zero-entry solutions are the paper's measurement pairs;
/// the plus-entry variants are found by the same exhaustive contract search.
fn pair_primitive(
    hadamard: bool,
    plus_entry: bool,
) -> Result<(PauliOp, PauliOp, bool, bool), ScheduleError> {
    // Preferred (paper) candidates first so the canonical case is stable.
    let preferred: [(u8, u8); 2] = if hadamard {
        [(0b0110, 0b0010), (0b1001, 0b0010)] // (X_A Z_Q, X_Q) first
    } else {
        [(0b1110, 0b1000), (0b1011, 0b1000)] // (X_A Y_Q, Z_Q) first
    };
    let mut candidates: Vec<(u8, u8)> = preferred.to_vec();
    for c1 in 1..16u8 {
        for c2 in 1..16u8 {
            candidates.push((c1, c2));
        }
    }
    // Bit layout: (x_A, x_Q, z_A, z_Q) from high to low.
    let decode = |c: u8| -> PauliOp {
        let a = BitVec::from_bits(&[c & 0b1000 != 0, c & 0b0100 != 0]);
        let b = BitVec::from_bits(&[c & 0b0010 != 0, c & 0b0001 != 0]);
        PauliOp::hermitian(a, b, false)
    };
    let (target_x, target_z): (PauliOp, PauliOp) = if hadamard {
        ("IZ".parse().unwrap(), "IX".parse().unwrap())
    } else {
        ("IY".parse().unwrap(), "IZ".parse().unwrap())
    };
    let swap = Permutation::from_map(vec![1, 0]);
    let ident = Permutation::identity(2);
    for do_swap in [true, false] {
        for &(c1, c2) in &candidates {
            let w1 = decode(c1);
            let w2 = decode(c2);
            let stab0 = if plus_entry {
                PauliOp::single_x(2, 0)
            } else {
                PauliOp::single_z(2, 0)
            };
            let Ok(mut gsf) = GsfMatrix::new(
                2,
                vec![PauliOp::single_x(2, 1)],
                vec![PauliOp::single_z(2, 1)],
                vec![stab0.clone()],
            ) else {
                continue;
            };
            if !gsf.stab[0].anticommutes(&w1) {
                continue;
            }
            if gsf.apply_measurement(std::slice::from_ref(&w1)).is_err() {
                continue;
            }
            if !gsf.stab[0].anticommutes(&w2) {
                continue;
            }
            if gsf.apply_measurement(std::slice::from_ref(&w2)).is_err() {
                continue;
            }
            let relab = if do_swap { &swap } else { &ident };
            let stab = relabel_op(&gsf.stab[0], relab);
            let x_row = relabel_op(&gsf.x_rows[0], relab);
            let z_row = relabel_op(&gsf.z_rows[0], relab);
            // The auxiliary (label 0 after relabeling) must end in a clean X
            // or Z basis state, disentangled from the data.
            let exit_plus = if stab.binary_row() == PauliOp::single_x(2, 0).binary_row() {
                true
            } else if stab.binary_row() == PauliOp::single_z(2, 0).binary_row() {
                false
            } else {
                continue;
            };
            let matches = |row: &PauliOp, want: &PauliOp| -> bool {
                let a = row.binary_row();
                let mut with_stab = a.clone();
                with_stab.xor_assign(&stab.binary_row());
                a == want.binary_row() || with_stab == want.binary_row()
            };
            if matches(&x_row, &target_x) && matches(&z_row, &target_z) {
                return Ok((w1, w2, exit_plus, do_swap));
            }
        }
    }
    Err(ScheduleError::IncompatibleSet(
        "no pair primitive satisfies the stage contract".into(),
    ))
}

pub fn compile_steane(circuit: &CliffordOp, code: &CssCode) -> Result<Schedule, ScheduleError> {
    let kp = circuit.n();
    if code.k() != 2 * kp {
        return Err(ScheduleError::CodeTooSmall {
            have: code.k(),
            need: 2 * kp,
        });
    }
    let staged: StagedCircuit = circuit.decompose_stages();
    let mut comp = SteaneCompiler::new(kp);
    for stage in &staged.stages {
        match stage {
            Stage::Perm { pi } => {
                let mut to: Vec<usize> = (0..2 * kp).collect();
                for j in 0..kp {
                    to[j] = pi.apply(j);
                    to[kp + j] = kp + pi.apply(j);
                }
                let pi2 = Permutation::from_map(to);
                comp.sigma = sigma_after_virtual_perm(&comp.sigma, &pi2);
                for r in comp
                    .gsf
                    .x_rows
                    .iter_mut()
                    .chain(comp.gsf.z_rows.iter_mut())
                    .chain(comp.gsf.stab.iter_mut())
                {
                    *r = relabel_op(r, &pi2);
                }
                let mut new_basis = comp.aux_plus.clone();
                for j in 0..kp {
                    new_basis[pi.apply(j)] = comp.aux_plus[j];
                }
                comp.aux_plus = new_basis;
                if let Some(last) = comp.rounds.last_mut() {
                    last.sigma_after = comp.sigma.clone();
                }
            }
            Stage::P { mask } => comp.p_stage(mask)?,
            Stage::H { mask } => comp.h_stage(mask)?,
            Stage::C { u } => comp.c_stage(u)?,
        }
    }
    // Validate the net logical action of the GSF chain against the bare
    // staged circuit and extract the systematic sign offset of the all-plus
    // outcome convention. The GSF rows carry exact phases, so reducing each
    // row onto its expected image through the (+-signed) stabilizer rows
    // yields the residual logical Pauli the frame must absorb.
    let expected = embed_on_data(&staged, kp)?;
    let stab_rows: Vec<BitVec> = comp.gsf.stab.iter().map(PauliOp::binary_row).collect();
    let stab_mat_t = BitMatrix::from_rows(&stab_rows).transpose();
    let mut pinned_ops: Vec<PauliOp> = Vec::new();
    let mut sign_diffs: Vec<bool> = Vec::new();
    let mut reduce_to = |row: &PauliOp, want: &PauliOp| -> Result<bool, ScheduleError> {
        let mut target = row.binary_row();
        target.xor_assign(&want.binary_row());
        let combo = stab_mat_t.solve(&target).map_err(|_| {
            ScheduleError::IncompatibleSet("GSF net action mismatch".into())
        })?;
        let mut r2 = row.clone();
        for i in combo.iter_ones() {
            r2.mul_assign(&comp.gsf.stab[i]);
        }
        debug_assert_eq!(r2.binary_row(), want.binary_row());
        let dp = (r2.phase_exp() + 4 - want.phase_exp()) & 3;
        if dp & 1 == 1 {
            return Err(ScheduleError::IncompatibleSet("odd phase offset".into()));
        }
        Ok(dp == 2)
    };
    for j in 0..kp {
        let want_x = expected.conjugate(&PauliOp::single_x(2 * kp, kp + j))?;
        sign_diffs.push(reduce_to(&comp.gsf.x_rows[j].clone(), &want_x)?);
        pinned_ops.push(want_x);
        let want_z = expected.conjugate(&PauliOp::single_z(2 * kp, kp + j))?;
        sign_diffs.push(reduce_to(&comp.gsf.z_rows[j].clone(), &want_z)?);
        pinned_ops.push(want_z);
    }
    for j in 0..kp {
        let aux_op = if comp.aux_plus[j] {
            PauliOp::single_x(2 * kp, j)
        } else {
            PauliOp::single_z(2 * kp, j)
        };
        sign_diffs.push(reduce_to(&PauliOp::identity(2 * kp), &aux_op)?);
        pinned_ops.push(aux_op);
    }
    // Solve for the frame seed D with <D, op_i> = diff_i.
    let jmat = crate::clifford::symplectic_j(2 * kp);
    let sys = BitMatrix::from_rows(
        &pinned_ops
            .iter()
            .map(|p| jmat.mul_vec_left(&p.binary_row()))
            .collect::<Vec<_>>(),
    );
    let seed_bits = sys
        .solve(&BitVec::from_bits(&sign_diffs))
        .map_err(|_| ScheduleError::IncompatibleSet("frame seed unsolvable".into()))?;
    let frame_seed = PauliOp::from_binary_row(&seed_bits, 0);
    Ok(Schedule {
        kind: RoundKind::Steane,
        rounds: comp.rounds,
        target: circuit.clone(),
        code: code.clone(),
        final_perm: comp.sigma,
        aux_final_plus: comp.aux_plus,
        residual: staged.residual_pauli,
        frame_seed,
    })
}

/// The staged circuit's phaseless part acting on the Q half of {A, Q}.
fn embed_on_data(staged: &StagedCircuit, kp: usize) -> Result<CliffordOp, ScheduleError> {
    let bare: Vec<Gate> = staged.stages.iter().flat_map(|s| s.gates(kp)).collect();
    let shifted: Vec<Gate> = bare
        .iter()
        .map(|g| match *g {
            Gate::H(q) => Gate::H(kp + q),
            Gate::P(q) => Gate::P(kp + q),
            Gate::Cnot(c, t) => Gate::Cnot(kp + c, kp + t),
            Gate::X(q) => Gate::X(kp + q),
            Gate::Z(q) => Gate::Z(kp + q),
        })
        .collect();
    Ok(CliffordOp::from_gates(2 * kp, &shifted)?)
}

// ---------------------------------------------------------------------------
// Simulation
// ---------------------------------------------------------------------------

/// A single Pauli fault injected at one circuit location.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FaultSite {
    /// On the data block before any round.
    Input { qubit: usize, pauli: u8 },
    /// After transversal CNOT gate #gate of round #round; pauli2 encodes the
    /// two-qubit Pauli on (control, target) in base 4, 1..=15.
    AfterCnot { round: usize, gate: usize, pauli2: u8 },
    /// Before the #index-th bitwise measurement of round #round.
    BeforeMeasure { round: usize, index: usize, pauli: u8 },
}

fn single_pauli(n: usize, q: usize, code: u8) -> PauliOp {
    let mut a = BitVec::zeros(n);
    let mut b = BitVec::zeros(n);
    if code & 1 == 1 {
        a.set(q, true);
    }
    if code & 2 == 2 {
        b.set(q, true);
    }
    PauliOp::hermitian(a, b, false)
}

fn two_qubit_pauli(n: usize, q1: usize, q2: usize, code: u8) -> PauliOp {
    let p1 = single_pauli(n, q1, code & 3);
    let p2 = single_pauli(n, q2, code >> 2);
    let prod = p1.multiply(&p2).expect("same n");
    PauliOp::hermitian(prod.x_part().clone(), prod.z_part().clone(), false)
}

/// Outcome data from one round.
pub struct RoundOutcome {
    pub syndrome: BitVec,
    pub logical_outcomes: BitVec,
}

/// Execute one round on a state whose data block occupies qubits 0..n.
/// The frame is updated in place; measured blocks are discarded.
pub fn simulate_round(
    state: &mut StabilizerTableau,
    round: &Round,
    code: &CssCode,
    frame: &mut PauliFrame,
    rng: &mut impl Rng,
    fault: Option<&FaultSite>,
) -> Result<RoundOutcome, ScheduleError> {
    let n = code.n();
    if state.n() != n {
        return Err(ScheduleError::BadBlocks(format!(
            "expected bare data block of {n} qubits, have {}",
            state.n()
        )));
    }
    let anc = crate::ancilla::realize(&round.ancilla, code)?;
    let mut t = state.clone().tensor(&anc);
    let total = t.n();
    debug_assert_eq!(total, 3 * n);

    // Transversal CNOTs with optional injected fault after one gate.
    // Steane order: data->lower first, then upper->data. The two layers do
    // not commute; this order makes the circuit measure i^tau X^a Z^b with
    // the Z kick applied before the X kick, matching the outcome-product
    // phase convention for odd-overlap operators.
    let cnots: Vec<(usize, usize)> = match round.kind {
        RoundKind::Knill => (0..n).map(|q| (q, n + q)).collect(),
        RoundKind::Steane => (0..n)
            .map(|q| (q, 2 * n + q))
            .chain((0..n).map(|q| (n + q, q)))
            .collect(),
    };
    for (g, &(c, tq)) in cnots.iter().enumerate() {
        t.apply_gate(Gate::Cnot(c, tq))?;
        if let Some(FaultSite::AfterCnot { gate, pauli2, .. }) = fault {
            if *gate == g {
                t.apply_pauli(&two_qubit_pauli(total, c, tq, *pauli2));
            }
        }
    }

    // Bitwise measurements: X-basis block then Z-basis block.
    let (x_range, z_range) = match round.kind {
        RoundKind::Knill => (0..n, n..2 * n),
        RoundKind::Steane => (n..2 * n, 2 * n..3 * n),
    };
    let mut meas_index = 0usize;
    let mut xbits = BitVec::zeros(n);
    for (i, q) in x_range.clone().enumerate() {
        if let Some(FaultSite::BeforeMeasure { index, pauli, .. }) = fault {
            if *index == meas_index {
                t.apply_pauli(&single_pauli(total, q, *pauli));
            }
        }
        xbits.set(i, t.measure(&PauliOp::single_x(total, q), rng)?);
        meas_index += 1;
    }
    let mut zbits = BitVec::zeros(n);
    for (i, q) in z_range.clone().enumerate() {
        if let Some(FaultSite::BeforeMeasure { index, pauli, .. }) = fault {
            if *index == meas_index {
                t.apply_pauli(&single_pauli(total, q, *pauli));
            }
        }
        zbits.set(i, t.measure(&PauliOp::single_z(total, q), rng)?);
        meas_index += 1;
    }

    // Syndromes: X-basis parities over H_X rows flag Z-type errors, Z-basis
    // parities over H_Z rows flag X-type errors. Decode both and repair the
    // logical outcome bits with the estimates (single-shot reliability).
    let hx = code.hx();
    let hz = code.hz();
    let mut s_from_x = BitVec::zeros(hx.rows());
    for i in 0..hx.rows() {
        let mut acc = false;
        for q in hx.row(i).iter_ones() {
            acc ^= xbits.get(q);
        }
        s_from_x.set(i, acc);
    }
    let mut s_from_z = BitVec::zeros(hz.rows());
    for i in 0..hz.rows() {
        let mut acc = false;
        for q in hz.row(i).iter_ones() {
            acc ^= zbits.get(q);
        }
        s_from_z.set(i, acc);
    }
    let z_dec = TypedDecoder::build(hx)?;
    let x_dec = TypedDecoder::build(hz)?;
    let zhat = z_dec.decode(&s_from_x)?.clone();
    let xhat = x_dec.decode(&s_from_z)?.clone();

    let k = code.k();
    let mut vx = BitVec::zeros(k);
    let mut vz = BitVec::zeros(k);
    for j in 0..k {
        let lx = code.logical_x().row(j);
        let lz = code.logical_z().row(j);
        let mut bx = false;
        for q in lx.iter_ones() {
            bx ^= xbits.get(q);
        }
        bx ^= lx.dot(&zhat);
        vx.set(j, bx);
        let mut bz = false;
        for q in lz.iter_ones() {
            bz ^= zbits.get(q);
        }
        bz ^= lz.dot(&xhat);
        vz.set(j, bz);
    }

    let mut syndrome = BitVec::zeros(hx.rows() + hz.rows());
    for i in 0..hx.rows() {
        syndrome.set(i, s_from_x.get(i));
    }
    for i in 0..hz.rows() {
        syndrome.set(hx.rows() + i, s_from_z.get(i));
    }
    frame.syndrome_history.push(syndrome.clone());

    // Frame update.
    let mut logical_outcomes = BitVec::zeros(round.measured.len());
    match round.kind {
        RoundKind::Knill => {
            // Teleportation: the Bell parities feed X^{vz} Z^{vx}, composed
            // with the old frame and conjugated through the teleported V.
            let m_v = round.knill_matrix.as_ref().expect("knill round");
            let mut move_pauli = PauliOp::from_parts(vz.clone(), vx.clone(), 0);
            move_pauli.mul_assign(&frame.logical);
            let moved = move_pauli.conjugate_binary(m_v);
            frame.logical = PauliOp::from_parts(moved.x_part().clone(), moved.z_part().clone(), 0);
        }
        RoundKind::Steane => {
            for (m, op) in round.measured.iter().enumerate() {
                let mut o = false;
                for j in op.x_part().iter_ones() {
                    o ^= vx.get(j);
                }
                for j in op.z_part().iter_ones() {
                    o ^= vz.get(j);
                }
                logical_outcomes.set(m, o);
            }
            let transformed: BitVec = match &round.outcome_transform {
                None => logical_outcomes.clone(),
                Some(tm) => {
                    let mut out = BitVec::zeros(logical_outcomes.len());
                    for j in 0..out.len() {
                        let mut acc = false;
                        for i in tm.row(j).iter_ones() {
                            acc ^= logical_outcomes.get(i);
                        }
                        out.set(j, acc);
                    }
                    out
                }
            };
            for j in 0..round.measured.len() {
                let wj = round.transformed_op(j);
                let lambda = transformed.get(j) ^ frame.logical.anticommutes(&wj);
                if lambda {
                    let mut nf = frame.logical.clone();
                    nf.mul_assign(&round.partners[j]);
                    frame.logical = PauliOp::from_parts(nf.x_part().clone(), nf.z_part().clone(), 0);
                }
            }
        }
    }

    // Retire the measured blocks.
    match round.kind {
        RoundKind::Knill => t.discard_block(0..2 * n)?,
        RoundKind::Steane => t.discard_block(n..3 * n)?,
    }
    *state = t;
    Ok(RoundOutcome {
        syndrome,
        logical_outcomes,
    })
}

/// Run every round; the returned frame includes the decomposition's
/// postponed Pauli layer.
pub fn run_schedule(
    input: &StabilizerTableau,
    sched: &Schedule,
    rng: &mut impl Rng,
) -> Result<(StabilizerTableau, PauliFrame), ScheduleError> {
    run_schedule_with_fault(input, sched, rng, None)
}

pub fn run_schedule_with_fault(
    input: &StabilizerTableau,
    sched: &Schedule,
    rng: &mut impl Rng,
    fault: Option<&FaultSite>,
) -> Result<(StabilizerTableau, PauliFrame), ScheduleError> {
    let code = &sched.code;
    let mut state = input.clone();
    let mut frame = PauliFrame::identity(code.k());
    if let Some(FaultSite::Input { qubit, pauli }) = fault {
        state.apply_pauli(&single_pauli(code.n(), *qubit, *pauli));
    }
    for (i, round) in sched.rounds.iter().enumerate() {
        let f = fault.filter(|fs| match fs {
            FaultSite::AfterCnot { round, .. } | FaultSite::BeforeMeasure { round, .. } => *round == i,
            FaultSite::Input { .. } => false,
        });
        simulate_round(&mut state, round, code, &mut frame, rng, f)?;
    }
    // Postponed Pauli layer, moved from circuit labels to final slots.
    let mut res = PauliOp::identity(code.k());
    for q in sched.residual.x_part().iter_ones() {
        res.mul_assign(&PauliOp::single_x(code.k(), sched.data_slot(q)));
    }
    for q in sched.residual.z_part().iter_ones() {
        res.mul_assign(&PauliOp::single_z(code.k(), sched.data_slot(q)));
    }
    let mut nf = frame.logical.clone();
    nf.mul_assign(&res);
    nf.mul_assign(&relabel_op(&sched.frame_seed, &sched.final_perm));
    frame.logical = PauliOp::from_parts(nf.x_part().clone(), nf.z_part().clone(), 0);
    Ok((state, frame))
}

/// Encoded input for a schedule: the logical data state on the starting data
/// slots, auxiliaries in |0_L>, all + signed.
pub fn encode_schedule_input(
    sched: &Schedule,
    logical_state: &StabilizerTableau,
) -> Result<StabilizerTableau, ScheduleError> {
    let code = &sched.code;
    let kp = sched.target.n();
    if logical_state.n() != kp {
        return Err(ScheduleError::BadBlocks("logical state size".into()));
    }
    let mut stabs: Vec<PauliOp> = Vec::with_capacity(code.n());
    if sched.kind == RoundKind::Steane {
        for j in 0..kp {
            stabs.push(code.lift(&PauliOp::single_z(code.k(), j)));
        }
    }
    let data_slot_at_start = |j: usize| match sched.kind {
        RoundKind::Knill => j,
        RoundKind::Steane => kp + j,
    };
    for g in logical_state.stabilizers() {
        let mut op = PauliOp::identity(code.k());
        op.set_phase_exp(g.phase_exp());
        for q in g.x_part().iter_ones() {
            op.mul_assign(&PauliOp::single_x(code.k(), data_slot_at_start(q)));
        }
        for q in g.z_part().iter_ones() {
            op.mul_assign(&PauliOp::single_z(code.k(), data_slot_at_start(q)));
        }
        stabs.push(code.lift(&op));
    }
    stabs.extend(code.x_stabilizers());
    stabs.extend(code.z_stabilizers());
    Ok(StabilizerTableau::from_stabilizers(stabs)?)
}

/// Ideal output: target applied to the logical input, on the final slot
/// assignment, auxiliaries in their tracked bases.
pub fn ideal_schedule_output(
    sched: &Schedule,
    logical_state: &StabilizerTableau,
) -> Result<StabilizerTableau, ScheduleError> {
    let code = &sched.code;
    let kp = sched.target.n();
    let mut evolved = logical_state.clone();
    evolved.apply_clifford(&sched.target)?;
    let mut stabs: Vec<PauliOp> = Vec::with_capacity(code.n());
    if sched.kind == RoundKind::Steane {
        for j in 0..kp {
            let slot = sched.aux_slot(j);
            let op = if sched.aux_final_plus[j] {
                PauliOp::single_x(code.k(), slot)
            } else {
                PauliOp::single_z(code.k(), slot)
            };
            stabs.push(code.lift(&op));
        }
    }
    for g in evolved.stabilizers() {
        let mut op = PauliOp::identity(code.k());
        op.set_phase_exp(g.phase_exp());
        for q in g.x_part().iter_ones() {
            op.mul_assign(&PauliOp::single_x(code.k(), sched.data_slot(q)));
        }
        for q in g.z_part().iter_ones() {
            op.mul_assign(&PauliOp::single_z(code.k(), sched.data_slot(q)));
        }
        stabs.push(code.lift(&op));
    }
    stabs.extend(code.x_stabilizers());
    stabs.extend(code.z_stabilizers());
    Ok(StabilizerTableau::from_stabilizers(stabs)?)
}

#[derive(Debug, Default)]
pub struct VerifyReport {
    pub cases: Vec<(String, bool)>,
}

impl VerifyReport {
    pub fn all_pass(&self) -> bool {
        self.cases.iter().all(|(_, ok)| *ok)
    }
}

/// Noiseless completeness: for a generating family of logical inputs, the
/// schedule output equals the target-evolved ideal exactly after frame
/// correction.
pub fn verify_schedule(sched: &Schedule, rng: &mut impl Rng) -> Result<VerifyReport, ScheduleError> {
    let kp = sched.target.n();
    let mut report = VerifyReport::default();
    let mut inputs: Vec<(String, StabilizerTableau)> = Vec::new();
    let count = 1usize << kp.min(4);
    for u in 0..count {
        let bits = BitVec::from_bits(&(0..kp).map(|j| u >> j & 1 == 1).collect::<Vec<_>>());
        inputs.push((
            format!("basis|{u:0width$b}>", width = kp),
            StabilizerTableau::from_bits(&bits),
        ));
    }
    inputs.push(("plus^k".into(), StabilizerTableau::pluses(kp)));
    for i in 0..20 {
        let c = CliffordOp::random(kp, 20, rng);
        let mut t = StabilizerTableau::zeros(kp);
        t.apply_clifford(&c)?;
        inputs.push((format!("random{i}"), t));
    }
    for (name, logical) in inputs {
        let input = encode_schedule_input(sched, &logical)?;
        let (mut out, frame) = run_schedule(&input, sched, rng)?;
        out.apply_pauli(&lift_spec_op(&frame.logical, &sched.code, 1));
        let ideal = ideal_schedule_output(sched, &logical)?;
        let ok = out.states_equal(&ideal)?;
        report.cases.push((name, ok));
    }
    Ok(report)
}

/// All single-fault locations of a schedule.
pub fn fault_sites(sched: &Schedule) -> Vec<FaultSite> {
    let n = sched.code.n();
    let mut sites = Vec::new();
    for q in 0..n {
        for p in 1..4u8 {
            sites.push(FaultSite::Input { qubit: q, pauli: p });
        }
    }
    for (r, round) in sched.rounds.iter().enumerate() {
        let gates = match round.kind {
            RoundKind::Knill => n,
            RoundKind::Steane => 2 * n,
        };
        for g in 0..gates {
            for p in 1..16u8 {
                sites.push(FaultSite::AfterCnot { round: r, gate: g, pauli2: p });
            }
        }
        for idx in 0..2 * n {
            for p in 1..4u8 {
                sites.push(FaultSite::BeforeMeasure { round: r, index: idx, pauli: p });
            }
        }
    }
    sites
}

#[derive(Debug)]
pub struct SweepReport {
    pub locations: usize,
    pub failures: Vec<String>,
}

/// Exhaustive single-fault sweep: every site, one noiseless correction round
/// appended, then the residual must have weight at most 1 and the logical
/// state must match the ideal.
pub fn fault_injection_sweep(sched: &Schedule, seed: u64) -> Result<SweepReport, ScheduleError> {
    use rand::SeedableRng;
    let code = &sched.code;
    let kp = sched.target.n();
    let decoder = LookupDecoder::build(code)?;
    let logical_inputs: Vec<(String, StabilizerTableau)> = vec![
        ("zeros".into(), StabilizerTableau::zeros(kp)),
        ("pluses".into(), StabilizerTableau::pluses(kp)),
    ];
    let sites = fault_sites(sched);
    let mut failures = Vec::new();
    for (name, logical) in &logical_inputs {
        let input = encode_schedule_input(sched, logical)?;
        let ideal = ideal_schedule_output(sched, logical)?;
        for (si, site) in sites.iter().enumerate() {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ ((si as u64) << 8));
            let (mut out, mut frame) = run_schedule_with_fault(&input, sched, &mut rng, Some(site))?;
            let syndrome = steane_ec_round(&mut out, code, &mut rng)?;
            let recovery = decoder.decode(&syndrome)?;
            out.apply_pauli(recovery);
            frame.syndrome_history.push(syndrome);
            out.apply_pauli(&lift_spec_op(&frame.logical, code, 1));
            let ok = match crate::ancilla::pauli_difference(&ideal, &out) {
                Some(diff) => min_weight_mod_group(&diff, &ideal) <= 1,
                None => false,
            };
            if !ok {
                failures.push(format!("{name}: {site:?}"));
            }
        }
    }
    Ok(SweepReport {
        locations: sites.len() * logical_inputs.len(),
        failures,
    })
}

/// Plain Steane syndrome extraction with a product ancilla |0_L>^k |+_L>^k;
/// returns the syndrome in the code's (H_X rows, H_Z rows) order.
pub fn steane_ec_round(
    state: &mut StabilizerTableau,
    code: &CssCode,
    rng: &mut impl Rng,
) -> Result<BitVec, ScheduleError> {
    let n = code.n();
    let kk = code.k();
    let spec = omega_ef_spec(&BitMatrix::zeros(0, kk), &BitMatrix::zeros(0, kk))?;
    let anc = crate::ancilla::realize(&spec, code)?;
    let mut t = state.clone().tensor(&anc);
    t.transversal_cnot(0..n, 2 * n..3 * n)?;
    t.transversal_cnot(n..2 * n, 0..n)?;
    let xbits = t.measure_all_bitwise(n..2 * n, true, rng)?;
    let zbits = t.measure_all_bitwise(2 * n..3 * n, false, rng)?;
    let mut syndrome = BitVec::zeros(code.hx().rows() + code.hz().rows());
    for i in 0..code.hx().rows() {
        let mut acc = false;
        for q in code.hx().row(i).iter_ones() {
            acc ^= xbits.get(q);
        }
        syndrome.set(i, acc);
    }
    for i in 0..code.hz().rows() {
        let mut acc = false;
        for q in code.hz().row(i).iter_ones() {
            acc ^= zbits.get(q);
        }
        syndrome.set(code.hx().rows() + i, acc);
    }
    t.discard_block(n..3 * n)?;
    *state = t;
    Ok(syndrome)
}

/// Minimum weight of p modulo the binary span of the state's stabilizer
/// group (exhaustive; desk scale only).
pub fn min_weight_mod_group(p: &PauliOp, state: &StabilizerTableau) -> usize {
    let gens: Vec<PauliOp> = state.stabilizers().to_vec();
    let r = gens.len();
    assert!(r <= 16, "group too large for exhaustive reduction");
    let mut best = p.weight();
    for mask in 0u64..(1 << r) {
        let mut q = p.clone();
        for (i, g) in gens.iter().enumerate() {
            if mask >> i & 1 == 1 {
                q.mul_assign(g);
            }
        }
        best = best.min(q.weight());
        if best == 0 {
            break;
        }
    }
    best
}

// ---------------------------------------------------------------------------
// Schedule dump / parse
// ---------------------------------------------------------------------------

pub fn dump_schedule(sched: &Schedule) -> String {
    let mut s = String::new();
    s.push_str("blockforge-schedule v1\n");
    s.push_str(&format!("backend {:?}\n", sched.kind));
    s.push_str(&format!("k {}\n", sched.target.n()));
    s.push_str("code-begin\n");
    s.push_str(&crate::css::dump_code_file(&sched.code));
    s.push_str("code-end\n");
    s.push_str("target-matrix\n");
    s.push_str(&sched.target.matrix().to_text());
    s.push_str(&format!("target-signs {:?}\n", sched.target.signs()));
    s.push_str(&format!("rounds {}\n", sched.rounds.len()));
    for (i, r) in sched.rounds.iter().enumerate() {
        s.push_str(&r.summary_line(i));
        s.push('\n');
    }
    s.push_str(&format!("final-perm {:?}\n", sched.final_perm.as_slice()));
    if sched.kind == RoundKind::Steane {
        let basis: String = sched
            .aux_final_plus
            .iter()
            .map(|&b| if b { 'P' } else { 'Z' })
            .collect();
        s.push_str(&format!("aux-final {basis}\n"));
    }
    s.push_str(&format!("residual {}\n", sched.residual));
    s
}

/// Parse a schedule dump by recompiling from the embedded code and target,
/// then checking the regenerated round lines against the stored ones.
pub fn parse_schedule(text: &str) -> Result<Schedule, ScheduleError> {
    let mut lines = text.lines().enumerate();
    let mut expect = |what: &str| -> Result<(usize, String), ScheduleError> {
        let (ln, line) = lines.next().ok_or(ScheduleError::Parse {
            line: 0,
            msg: format!("missing {what}"),
        })?;
        Ok((ln + 1, line.to_string()))
    };
    let (ln, header) = expect("header")?;
    if header.trim() != "blockforge-schedule v1" {
        return Err(ScheduleError::Parse {
            line: ln,
            msg: "bad header".into(),
        });
    }
    let (ln, backend) = expect("backend")?;
    let kind = match backend.trim() {
        "backend Knill" => RoundKind::Knill,
        "backend Steane" => RoundKind::Steane,
        other => {
            return Err(ScheduleError::Parse {
                line: ln,
                msg: format!("bad backend line: {other}"),
            })
        }
    };
    let (ln, kline) = expect("k")?;
    let kp: usize = kline
        .trim()
        .strip_prefix("k ")
        .and_then(|v| v.parse().ok())
        .ok_or(ScheduleError::Parse {
            line: ln,
            msg: "bad k line".into(),
        })?;
    let (ln, cb) = expect("code-begin")?;
    if cb.trim() != "code-begin" {
        return Err(ScheduleError::Parse {
            line: ln,
            msg: "expected code-begin".into(),
        });
    }
    let mut code_text = String::new();
    loop {
        let (_, line) = expect("code body")?;
        if line.trim() == "code-end" {
            break;
        }
        code_text.push_str(&line);
        code_text.push('\n');
    }
    let code = crate::css::parse_code_file(&code_text)?;
    let (ln, tm) = expect("target-matrix")?;
    if tm.trim() != "target-matrix" {
        return Err(ScheduleError::Parse {
            line: ln,
            msg: "expected target-matrix".into(),
        });
    }
    let (ln, dims) = expect("matrix dims")?;
    let mut matrix_text = format!("{dims}\n");
    let rows: usize = dims
        .split_whitespace()
        .next()
        .and_then(|v| v.parse().ok())
        .ok_or(ScheduleError::Parse {
            line: ln,
            msg: "bad matrix dims".into(),
        })?;
    for _ in 0..rows {
        let (_, l) = expect("matrix row")?;
        matrix_text.push_str(&l);
        matrix_text.push('\n');
    }
    let m = BitMatrix::from_text(&matrix_text).map_err(|e| ScheduleError::Parse {
        line: ln,
        msg: format!("target matrix: {e}"),
    })?;
    let (ln, signs_line) = expect("target-signs")?;
    let signs_str = signs_line
        .trim()
        .strip_prefix("target-signs ")
        .ok_or(ScheduleError::Parse {
            line: ln,
            msg: "expected target-signs".into(),
        })?;
    let signs: Vec<bool> = signs_str.chars().map(|c| c == '1').collect();
    let mut rows_p = Vec::with_capacity(2 * kp);
    for i in 0..2 * kp {
        let mut p = PauliOp::from_binary_row(&m.row(i), 0);
        let tau = p.tau() as u8;
        p.set_phase_exp(tau + if signs.get(i).copied().unwrap_or(false) { 2 } else { 0 });
        rows_p.push(p);
    }
    let target = CliffordOp::from_rows(kp, rows_p)?;
    let sched = match kind {
        RoundKind::Knill => compile_knill(&target, &code)?,
        RoundKind::Steane => compile_steane(&target, &code)?,
    };
    let (ln, rline) = expect("rounds")?;
    let count: usize = rline
        .trim()
        .strip_prefix("rounds ")
        .and_then(|v| v.parse().ok())
        .ok_or(ScheduleError::Parse {
            line: ln,
            msg: "bad rounds line".into(),
        })?;
    if count != sched.rounds.len() {
        return Err(ScheduleError::Parse {
            line: ln,
            msg: format!("round count {count} != recompiled {}", sched.rounds.len()),
        });
    }
    for i in 0..count {
        let (ln, line) = expect("round line")?;
        if line.trim() != sched.rounds[i].summary_line(i) {
            return Err(ScheduleError::Parse {
                line: ln,
                msg: format!("round line mismatch: {line}"),
            });
        }
    }
    Ok(sched)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::css::{block_sum, code_422, code_steane};
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    #[test]
    fn gsf_measuring_existing_stabilizers_is_identity() {
        let mut g = SteaneCompiler::new(2).gsf;
        let before = g.canonical_binary();
        let stab0 = g.stab[0].clone();
        g.apply_measurement(&[stab0]).unwrap();
        assert_eq!(g.canonical_binary(), before);
    }

    #[test]
    fn gsf_first_measure_matches_paper_transformation() {
        // Aux-plus start: stab (I 0|0 0); measuring (0 0|I (U^t)^{-1}+I)
        // produces the stabilizer row of the first-measure-after display.
        let kp = 2;
        let u = BitMatrix::from_fn(kp, kp, |i, j| i <= j);
        let uti = u.transpose().invert().unwrap();
        let l1 = uti.add(&BitMatrix::identity(kp));
        let n_logical = 2 * kp;
        let stab: Vec<PauliOp> = (0..kp).map(|j| PauliOp::single_x(n_logical, j)).collect();
        // Encoded rows of the -C- GSF start: (0 U | 0 0) and (0 0 | 0 (U^t)^{-1}).
        let mut x_rows = Vec::new();
        let mut z_rows = Vec::new();
        for j in 0..kp {
            let mut a = BitVec::zeros(n_logical);
            for c in u.row(j).iter_ones() {
                a.set(kp + c, true);
            }
            x_rows.push(PauliOp::from_parts(a, BitVec::zeros(n_logical), 0));
            let mut b = BitVec::zeros(n_logical);
            for c in uti.row(j).iter_ones() {
                b.set(kp + c, true);
            }
            z_rows.push(PauliOp::from_parts(BitVec::zeros(n_logical), b, 0));
        }
        let mut g = GsfMatrix::new(n_logical, x_rows, z_rows, stab).unwrap();
        let mut ops = Vec::new();
        for j in 0..kp {
            let mut b = BitVec::zeros(n_logical);
            b.set(j, true);
            for c in l1.row(j).iter_ones() {
                b.set(kp + c, true);
            }
            ops.push(PauliOp::from_parts(BitVec::zeros(n_logical), b, 0));
        }
        g.apply_measurement(&ops).unwrap();
        // New stabilizer rows are exactly the measured set.
        let (stab_canon, _) = g.canonical_binary();
        let want = BitMatrix::from_rows(&ops.iter().map(PauliOp::binary_row).collect::<Vec<_>>());
        let got = BitMatrix::from_rows(&stab_canon);
        assert!(got.same_row_space(&want));
    }

    #[test]
    fn gsf_c_stage_chain_reaches_stage_action() {
        let kp = 2;
        let u = BitMatrix::from_fn(kp, kp, |i, j| i <= j);
        let mut comp = SteaneCompiler::new(kp);
        comp.c_stage(&u).unwrap();
        assert!(comp.aux_plus.iter().all(|&b| b));
        assert_eq!(comp.rounds.len(), 3);
        assert_eq!(comp.rounds[0].ancilla.family.as_str(), "OMEGA_C1");
        assert_eq!(comp.rounds[1].ancilla.family.as_str(), "OMEGA_C2");
        assert_eq!(comp.rounds[2].ancilla.family.as_str(), "OMEGA_C3");
        // Net action: the compiled GSF matches the CNOT circuit on the data
        // half modulo stabilizer rows; checked exhaustively in compile_steane,
        // here just confirm the check passes end to end.
        let code = crate::css::code_iceberg(3);
        let mut c = CliffordOp::identity(kp);
        c.append_gate(Gate::Cnot(0, 1)).unwrap();
        compile_steane(&c, &code).unwrap();
    }

    #[test]
    fn compile_identity_is_empty() {
        let code = code_422();
        let sched = compile_knill(&CliffordOp::identity(2), &code).unwrap();
        assert_eq!(sched.round_count(), 0);
        let code6 = crate::css::code_iceberg(3);
        let sched = compile_steane(&CliffordOp::identity(2), &code6).unwrap();
        assert_eq!(sched.round_count(), 0);
    }

    #[test]
    fn compile_single_h_layer_knill() {
        let code = code_steane();
        let mut c = CliffordOp::identity(1);
        c.append_gate(Gate::H(0)).unwrap();
        let sched = compile_knill(&c, &code).unwrap();
        assert_eq!(sched.round_count(), 1);
        assert_eq!(sched.rounds[0].ancilla.family.as_str(), "PSI_UH");
    }

    #[test]
    fn compile_steane_single_c_stage_rounds() {
        let code = crate::css::code_iceberg(3); // [[6,4,2]]
        let kp = 2;
        let mut c = CliffordOp::identity(kp);
        c.append_gate(Gate::Cnot(0, 1)).unwrap();
        let sched = compile_steane(&c, &code).unwrap();
        assert_eq!(sched.round_count(), 3);
        assert_eq!(sched.rounds[0].measured.len(), kp);
        // Set 1 ops are X_{A_j} X_{Q_j}.
        assert_eq!(sched.rounds[0].measured[0].to_string(), "+XIXI");
        // Set 3 resets the auxiliaries.
        assert_eq!(sched.rounds[2].measured[0].to_string(), "+XIII");
    }

    #[test]
    fn knill_h_on_steane_maps_zero_to_plus() {
        let code = code_steane();
        let mut c = CliffordOp::identity(1);
        c.append_gate(Gate::H(0)).unwrap();
        let sched = compile_knill(&c, &code).unwrap();
        let mut rng = StdRng::seed_from_u64(17);
        let logical = StabilizerTableau::zeros(1);
        let input = encode_schedule_input(&sched, &logical).unwrap();
        let (mut out, frame) = run_schedule(&input, &sched, &mut rng).unwrap();
        out.apply_pauli(&lift_spec_op(&frame.logical, &code, 1));
        let plus = code.encode_tableau(&BitVec::from_bits(&[true])).unwrap();
        assert!(out.states_equal(&plus).unwrap());
    }

    #[test]
    fn knill_random_circuits_verify_on_422() {
        let code = code_422();
        let mut rng = StdRng::seed_from_u64(23);
        for _ in 0..10 {
            let c = CliffordOp::random(2, 30, &mut rng);
            let sched = compile_knill(&c, &code).unwrap();
            assert!(sched.round_count() <= 11);
            let report = verify_schedule(&sched, &mut rng).unwrap();
            assert!(report.all_pass(), "circuit failed verification: {report:?}");
        }
    }

    #[test]
    fn steane_random_circuits_verify_on_iceberg() {
        let code = crate::css::code_iceberg(3);
        let mut rng = StdRng::seed_from_u64(29);
        for _ in 0..6 {
            let c = CliffordOp::random(2, 25, &mut rng);
            let sched = compile_steane(&c, &code).unwrap();
            assert!(sched.round_count() <= 22, "rounds {}", sched.round_count());
            let report = verify_schedule(&sched, &mut rng).unwrap();
            assert!(report.all_pass(), "circuit failed verification: {report:?}");
        }
    }

    #[test]
    fn steane_product_omega_round_preserves_state() {
        let code = code_422();
        let mut rng = StdRng::seed_from_u64(31);
        let mut state = code.encode_tableau(&BitVec::zeros(2)).unwrap();
        let before = state.clone();
        let syndrome = steane_ec_round(&mut state, &code, &mut rng).unwrap();
        assert!(syndrome.is_zero());
        assert!(state.states_equal(&before).unwrap());
    }

    #[test]
    fn corrupted_round_is_flagged_by_verification() {
        let code = code_422();
        let mut rng = StdRng::seed_from_u64(37);
        let mut c = CliffordOp::identity(2);
        c.append_gate(Gate::P(0)).unwrap();
        let mut sched = compile_knill(&c, &code).unwrap();
        sched.rounds[0].knill_matrix = Some(BitMatrix::identity(4));
        let report = verify_schedule(&sched, &mut rng).unwrap();
        assert!(!report.all_pass());
    }

    #[test]
    fn round_count_constant_in_gate_count() {
        let code = code_422();
        let mut rng = StdRng::seed_from_u64(41);
        for gates in [10usize, 100, 1000] {
            for _ in 0..20 {
                let c = CliffordOp::random(2, gates, &mut rng);
                let sched = compile_knill(&c, &code).unwrap();
                assert!(sched.round_count() <= 11);
            }
        }
    }

    #[test]
    fn schedule_dump_round_trips() {
        let code = code_422();
        let mut rng = StdRng::seed_from_u64(43);
        let c = CliffordOp::random(2, 40, &mut rng);
        let sched = compile_knill(&c, &code).unwrap();
        let text = dump_schedule(&sched);
        let parsed = parse_schedule(&text).unwrap();
        assert_eq!(dump_schedule(&parsed), text);

        let code6 = crate::css::code_iceberg(3);
        let c = CliffordOp::random(2, 40, &mut rng);
        let sched = compile_steane(&c, &code6).unwrap();
        let text = dump_schedule(&sched);
        let parsed = parse_schedule(&text).unwrap();
        assert_eq!(dump_schedule(&parsed), text);
    }

    #[test]
    fn steane_p_stage_on_block_sum_steane_verifies() {
        let code = block_sum(&code_steane(), 2); // [[14,2,3]]
        let mut c = CliffordOp::identity(1);
        c.append_gate(Gate::P(0)).unwrap();
        let sched = compile_steane(&c, &code).unwrap();
        assert_eq!(sched.round_count(), 2);
        let mut rng = StdRng::seed_from_u64(47);
        let report = verify_schedule(&sched, &mut rng).unwrap();
        assert!(report.all_pass(), "{report:?}");
    }
}
