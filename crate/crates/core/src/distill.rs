//! Classical-code-driven ancilla distillation: circuit construction from a
//! systematic parity check, depolarizing Monte-Carlo with compatibility
//! postselection and correction, rejection/yield statistics, and resource
//! estimates.
//!
//! The Monte-Carlo engine propagates Pauli error frames instead of running a
//! tableau per trial: the ideal circuit is Clifford with deterministic check
//! parities, so measured-parity deviations are linear functions of the
//! accumulated frame, and the full protocol statistics are exact. A one-off
//! noiseless tableau run validates the circuits end to end.

use std::collections::{HashMap, HashSet};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use thiserror::Error;

use crate::ancilla::{execute_pipeline, lift_spec_op, realize, type3_pipeline, AncillaError, AncillaSpec, DistType, PipelineStep};
use crate::clifford::{CliffordError, CliffordOp, Gate};
use crate::css::{CodeError, CssCode, TypedDecoder};
use crate::gf2::{BitMatrix, BitVec, GfError};
use crate::pauli::PauliOp;
use crate::tableau::{StabilizerTableau, TableauError};

#[derive(Debug, Error)]
pub enum DistillError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("classical code is not in systematic form (I | A)")]
    NotSystematic,
    #[error("eligibility: {0}")]
    Eligibility(String),
    #[error("classical code parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Gf(#[from] GfError),
    #[error(transparent)]
    Code(#[from] CodeError),
    #[error(transparent)]
    Ancilla(#[from] AncillaError),
    #[error(transparent)]
    Clifford(#[from] CliffordError),
    #[error(transparent)]
    Tableau(#[from] TableauError),
}

/// An [n_c, k_c, d_c] classical code with systematic parity check (I | A).
#[derive(Clone, Debug)]
pub struct ClassicalCode {
    pub n_c: usize,
    pub k_c: usize,
    pub d_c: usize,
    h: BitMatrix,
}

impl ClassicalCode {
    pub fn new(n_c: usize, k_c: usize, d_c: usize, h: BitMatrix) -> Result<Self, DistillError> {
        let r = n_c - k_c;
        if h.rows() != r || h.cols() != n_c {
            return Err(DistillError::ShapeMismatch(format!(
                "H is {}x{}, expected {r}x{n_c}",
                h.rows(),
                h.cols()
            )));
        }
        if h.submatrix(0, r, 0, r) != BitMatrix::identity(r) {
            return Err(DistillError::NotSystematic);
        }
        Ok(ClassicalCode { n_c, k_c, d_c, h })
    }

    /// The repetition code [n, 1, n].
    pub fn repetition(n: usize) -> ClassicalCode {
        let h = BitMatrix::from_fn(n - 1, n, |i, j| j == i || j == n - 1);
        ClassicalCode::new(n, 1, n, h).expect("valid by construction")
    }

    pub fn h(&self) -> &BitMatrix {
        &self.h
    }

    pub fn a_c(&self) -> BitMatrix {
        self.h.submatrix(0, self.n_c - self.k_c, self.n_c - self.k_c, self.n_c)
    }

    pub fn r_c(&self) -> usize {
        self.n_c - self.k_c
    }

    /// File format: "n k d" then the matrix text of H.
    pub fn parse(text: &str) -> Result<ClassicalCode, DistillError> {
        let mut lines = text.lines();
        let header = lines.next().ok_or(DistillError::Parse("empty file".into()))?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|s| s.parse().map_err(|_| DistillError::Parse("bad header".into())))
            .collect::<Result<_, _>>()?;
        if dims.len() != 3 {
            return Err(DistillError::Parse("header must be \"n k d\"".into()));
        }
        let rest: String = lines.collect::<Vec<_>>().join("\n");
        let h = BitMatrix::from_text(&format!("{} {}\n{rest}", dims[0] - dims[1], dims[0]))
            .map_err(|e| DistillError::Parse(e.to_string()))?;
        ClassicalCode::new(dims[0], dims[1], dims[2], h)
    }

    pub fn dump(&self) -> String {
        let mut s = format!("{} {} {}\n", self.n_c, self.k_c, self.d_c);
        let text = self.h.to_text();
        s.push_str(text.split_once('\n').map(|(_, rows)| rows).unwrap_or(""));
        s
    }
}

/// Uniform depolarizing noise knobs per location class.
#[derive(Clone, Copy, Debug)]
pub struct NoiseModel {
    pub p_gate: f64,
    pub p_prep: f64,
    pub p_meas: f64,
}

impl NoiseModel {
    pub fn uniform(p: f64) -> NoiseModel {
        NoiseModel {
            p_gate: p,
            p_prep: p,
            p_meas: p,
        }
    }
}

/// Per-stage measurement structure: which basis each block qubit is measured
/// in, the measurable operator set, and the correction machinery.
#[derive(Clone)]
pub struct StageCircuit {
    /// true = X basis (detects Z components), false = Z basis (detects X).
    pub basis_x: BitVec,
    /// Measurable operator basis: group elements pure-typed for the basis.
    pub ops: Vec<PauliOp>,
    /// Visible support mask per op (over block qubits).
    op_masks: Vec<BitVec>,
    /// Signature -> (weight, visible correction pattern), filled to weight
    /// d-1; a missing signature means postselection rejects the block.
    sig_table: HashMap<BitVec, BitVec>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CheckType {
    ZChecks,
    XChecks,
    MixedStage1,
    MixedStage2,
}

/// Build one distillation stage for a spec realized on a code: the basis
/// assignment, the measurable set, and the signature decoder.
pub fn build_stage(
    code: &CssCode,
    spec: &AncillaSpec,
    check_type: CheckType,
) -> Result<StageCircuit, DistillError> {
    let k = code.k();
    if k == 0 || spec.logical_qubits % k != 0 {
        return Err(DistillError::ShapeMismatch("spec/code logical mismatch".into()));
    }
    let blocks = spec.logical_qubits / k;
    let n_b = blocks * code.n();
    let basis_x = match check_type {
        CheckType::ZChecks => BitVec::zeros(n_b),
        CheckType::XChecks => BitVec::from_bits(&vec![true; n_b]),
        CheckType::MixedStage1 | CheckType::MixedStage2 => {
            if blocks % 2 != 0 {
                return Err(DistillError::ShapeMismatch(
                    "mixed check assignment needs an even block count".into(),
                ));
            }
            // Stage 1: upper half in Z (remove X errors), lower half in X;
            // stage 2 reversed.
            let lower_is_x = check_type == CheckType::MixedStage1;
            BitVec::from_bits(
                &(0..n_b)
                    .map(|q| {
                        let lower = q / code.n() >= blocks / 2;
                        lower == lower_is_x
                    })
                    .collect::<Vec<_>>(),
            )
        }
    };
    let group = block_group(code, spec);
    let (ops, op_masks) = measurable_set(&group, &basis_x);
    let sig_table = signature_table(&ops, &op_masks, n_b);
    Ok(StageCircuit {
        basis_x,
        ops,
        op_masks,
        sig_table,
    })
}

/// Full stabilizer group generators of one distillation block: code
/// stabilizers on every sub-block plus the lifted spec generators.
fn block_group(code: &CssCode, spec: &AncillaSpec) -> Vec<PauliOp> {
    let blocks = spec.logical_qubits / code.k();
    let n_b = blocks * code.n();
    let mut gens = Vec::new();
    for b in 0..blocks {
        for s in code.x_stabilizers().into_iter().chain(code.z_stabilizers()) {
            gens.push(s.embed(n_b, b * code.n()));
        }
    }
    for g in &spec.generators {
        gens.push(lift_spec_op(g, code, blocks));
    }
    gens
}

/// All group elements whose X part lives on X-measured qubits and Z part on
/// Z-measured qubits, with their visible support masks.
fn measurable_set(gens: &[PauliOp], basis_x: &BitVec) -> (Vec<PauliOp>, Vec<BitVec>) {
    let n_b = basis_x.len();
    let m = gens.len();
    // Constraint rows: for each Z-measured qubit q, sum_i c_i gens_i.x[q] = 0;
    // for each X-measured q, sum c_i gens_i.z[q] = 0.
    let mut rows: Vec<BitVec> = Vec::new();
    for q in 0..n_b {
        let mut row = BitVec::zeros(m);
        for (i, g) in gens.iter().enumerate() {
            let bad = if basis_x.get(q) { g.z_part().get(q) } else { g.x_part().get(q) };
            if bad {
                row.set(i, true);
            }
        }
        rows.push(row);
    }
    let sys = BitMatrix::from_rows(&rows);
    let kernel = sys.kernel();
    let mut ops = Vec::new();
    let mut masks = Vec::new();
    for r in 0..kernel.rows() {
        let combo = kernel.row(r);
        let mut op = PauliOp::identity(n_b);
        for i in combo.iter_ones() {
            op.mul_assign(&gens[i]);
        }
        if op.is_identity_up_to_phase() {
            continue;
        }
        let mut mask = BitVec::zeros(n_b);
        for q in 0..n_b {
            let bit = if basis_x.get(q) { op.x_part().get(q) } else { op.z_part().get(q) };
            if bit {
                mask.set(q, true);
            }
        }
        ops.push(op);
        masks.push(mask);
    }
    (ops, masks)
}

fn signature_of(v: &BitVec, masks: &[BitVec]) -> BitVec {
    BitVec::from_bits(&masks.iter().map(|m| m.dot(v)).collect::<Vec<_>>())
}

/// Complete visible-pattern decoder: enumerate patterns by increasing weight
/// until every signature has a minimum-weight representative.
fn signature_table(
    _ops: &[PauliOp],
    masks: &[BitVec],
    n_b: usize,
) -> HashMap<BitVec, BitVec> {
    let total = 1usize << masks.len().min(20);
    let mut table: HashMap<BitVec, BitVec> = HashMap::with_capacity(total);
    table.insert(BitVec::zeros(masks.len()), BitVec::zeros(n_b));
    for w in 1..=n_b {
        if table.len() == total {
            break;
        }
        let mut next = Vec::new();
        collect_supports(n_b, w, &mut next);
        for supp in next {
            let mut v = BitVec::zeros(n_b);
            for &q in &supp {
                v.set(q, true);
            }
            let sig = signature_of(&v, masks);
            table.entry(sig).or_insert(v);
        }
    }
    table
}

fn collect_supports(n: usize, w: usize, out: &mut Vec<Vec<usize>>) {
    fn rec(n: usize, w: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == w {
            out.push(cur.clone());
            return;
        }
        for q in start..n {
            if n - q < w - cur.len() {
                break;
            }
            cur.push(q);
            rec(n, w, q + 1, cur, out);
            cur.pop();
        }
    }
    rec(n, w, 0, &mut Vec::new(), out);
}

/// A compiled two-stage distillation protocol.
pub struct Protocol {
    pub code: CssCode,
    pub spec: AncillaSpec,
    /// What actually flows through the distillation circuit: the spec itself
    /// for Type I/II, the pipeline precursor for Type III.
    pub distilled: AncillaSpec,
    pub pipeline: Vec<PipelineStep>,
    pub c1: ClassicalCode,
    pub c2: ClassicalCode,
    pub stage1: StageCircuit,
    pub stage2: StageCircuit,
    pub blocks: usize,
    pub n_block: usize,
    pub prep_gates: Vec<Gate>,
    pub enc_gates: Vec<Gate>,
    pub seed: u64,
    pub distance_warning: bool,
}

/// Build the two-stage protocol. Type I checks Z then X; Type II uses the
/// mixed per-block assignment; Type III distills the precursor and appends
/// the bitwise-Phase pipeline.
pub fn two_stage_protocol(
    code: &CssCode,
    spec: &AncillaSpec,
    c1: &ClassicalCode,
    c2: &ClassicalCode,
    seed: u64,
) -> Result<Protocol, DistillError> {
    let (distilled, pipeline) = match spec.dist_type {
        DistType::III => {
            let (pre, steps) = type3_pipeline(spec, code)
                .map_err(|e| DistillError::Eligibility(e.to_string()))?;
            (pre, steps)
        }
        _ => (spec.clone(), Vec::new()),
    };
    let (ct1, ct2) = match distilled.dist_type {
        DistType::II => (CheckType::MixedStage1, CheckType::MixedStage2),
        _ => (CheckType::ZChecks, CheckType::XChecks),
    };
    let stage1 = build_stage(code, &distilled, ct1)?;
    let stage2 = build_stage(code, &distilled, ct2)?;
    let blocks = distilled.logical_qubits / code.k();
    let n_block = blocks * code.n();
    // Prep circuit: |0...0> -> the logical-level spec state on the bare data
    // positions; encoding circuit per sub-block.
    let logical = distilled
        .logical_tableau()
        .map_err(|e| DistillError::Eligibility(e.to_string()))?;
    let l = distilled.logical_qubits;
    let mut rows = Vec::with_capacity(2 * l);
    for d in logical.destabilizers() {
        rows.push(d.clone());
    }
    for s in logical.stabilizers() {
        rows.push(s.clone());
    }
    let prep_cliff = CliffordOp::from_rows(l, rows)?;
    let bare_pos = |j: usize| (j / code.k()) * code.n() + (j % code.k());
    let prep_gates: Vec<Gate> = prep_cliff
        .decompose_stages()
        .gates()
        .iter()
        .map(|g| match *g {
            Gate::H(q) => Gate::H(bare_pos(q)),
            Gate::P(q) => Gate::P(bare_pos(q)),
            Gate::Cnot(c, t) => Gate::Cnot(bare_pos(c), bare_pos(t)),
            Gate::X(q) => Gate::X(bare_pos(q)),
            Gate::Z(q) => Gate::Z(bare_pos(q)),
        })
        .collect();
    let enc_gates = code.encoding_gates()?;
    let d = code.distance_brute().unwrap_or(0);
    let distance_warning = c1.d_c <= d || c2.d_c <= d;
    Ok(Protocol {
        code: code.clone(),
        spec: spec.clone(),
        distilled,
        pipeline,
        c1: c1.clone(),
        c2: c2.clone(),
        stage1,
        stage2,
        blocks,
        n_block,
        prep_gates,
        enc_gates,
        seed,
        distance_warning,
    })
}

impl Protocol {
    /// Total physical qubits the protocol touches at once.
    pub fn qubit_count(&self) -> usize {
        self.c1.n_c * self.c2.n_c * self.n_block
    }

    /// Gate count of one noisy preparation (prep + encodings).
    pub fn enc_gate_count(&self) -> usize {
        self.prep_gates.len() + self.blocks * self.enc_gates.len()
    }

    /// Transversal CNOT count of both distillation stages.
    pub fn dist_gate_count(&self) -> usize {
        let ones1 = count_ones(&self.c1.a_c());
        let ones2 = count_ones(&self.c2.a_c());
        ones1 * self.n_block * self.c2.n_c + ones2 * self.n_block
    }

    /// One noisy block preparation as a gate list on n_block qubits.
    fn preparation_gates(&self) -> Vec<Gate> {
        let mut gates = self.prep_gates.clone();
        for b in 0..self.blocks {
            gates.extend(self.enc_gates.iter().map(|g| match *g {
                Gate::H(q) => Gate::H(b * self.code.n() + q),
                Gate::P(q) => Gate::P(b * self.code.n() + q),
                Gate::Cnot(c, t) => Gate::Cnot(b * self.code.n() + c, b * self.code.n() + t),
                Gate::X(q) => Gate::X(b * self.code.n() + q),
                Gate::Z(q) => Gate::Z(b * self.code.n() + q),
            }));
        }
        gates
    }

    /// Noiseless end-to-end tableau check: every block accepted, all check
    /// parities even, and the surviving output equals the realized spec
    /// exactly (up to the logical Pauli frame for Type III pipelines).
    pub fn noiseless_check(&self) -> Result<bool, DistillError> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        // One stage-1 group plus the pipeline is representative: all copies
        // are identical and the circuit is deterministic at p = 0.
        let prep = self.preparation_gates();
        let mut block_t = StabilizerTableau::zeros(self.n_block);
        block_t.apply_gates(&prep)?;
        let want = realize(&self.distilled, &self.code)?;
        if !block_t.states_equal(&want)? {
            return Ok(false);
        }
        // Stage 1 on one group.
        let n_c = self.c1.n_c;
        let r_c = self.c1.r_c();
        let mut joint = block_t.clone();
        for _ in 1..n_c {
            joint = joint.tensor(&block_t);
        }
        apply_stage_cnots(&mut joint, &self.c1, &self.stage1, self.n_block)?;
        // Measure the check blocks bitwise and verify every op parity even.
        for i in 0..r_c {
            let base = i * self.n_block;
            let mut bits = BitVec::zeros(self.n_block);
            for q in 0..self.n_block {
                let op = if self.stage1.basis_x.get(q) {
                    PauliOp::single_x(joint.n(), base + q)
                } else {
                    PauliOp::single_z(joint.n(), base + q)
                };
                bits.set(q, joint.measure(&op, &mut rng)?);
            }
            for mask in &self.stage1.op_masks {
                if mask.dot(&bits) {
                    return Ok(false);
                }
            }
        }
        joint.discard_block(0..r_c * self.n_block)?;
        // Survivors must equal the clean block state.
        for s in 0..self.c1.k_c {
            let mut survivor = joint.clone();
            // discard everything but survivor s
            if s + 1 < self.c1.k_c {
                survivor.discard_block((s + 1) * self.n_block..(self.c1.k_c) * self.n_block)?;
            }
            if s > 0 {
                survivor.discard_block(0..s * self.n_block)?;
            }
            if !survivor.states_equal(&want)? {
                return Ok(false);
            }
        }
        // Pipeline for Type III: executing the steps on the distilled
        // precursor must reach the target spec modulo a logical frame.
        if !self.pipeline.is_empty() {
            let mut t = realize(&self.distilled, &self.code)?;
            execute_pipeline(&mut t, &self.pipeline, &self.code, self.blocks, &mut rng)?;
            let target = realize(&self.spec, &self.code)?;
            if !crate::ancilla::states_equal_mod_logical_pauli(&t, &target, &self.code, self.blocks) {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

fn count_ones(m: &BitMatrix) -> usize {
    let mut c = 0;
    for i in 0..m.rows() {
        c += m.row(i).weight();
    }
    c
}

/// Apply one stage's transversal CNOT pattern on a joint tableau holding a
/// group of n_c blocks (checks first). Per A_c entry (i, j): for Z-measured
/// qubits the survivor controls into the check; for X-measured qubits the
/// check controls into the survivor.
fn apply_stage_cnots(
    t: &mut StabilizerTableau,
    ccode: &ClassicalCode,
    stage: &StageCircuit,
    n_block: usize,
) -> Result<(), DistillError> {
    let r_c = ccode.r_c();
    let a = ccode.a_c();
    for i in 0..r_c {
        for j in 0..ccode.k_c {
            if !a.get(i, j) {
                continue;
            }
            let check = i * n_block;
            let surv = (r_c + j) * n_block;
            for q in 0..n_block {
                if stage.basis_x.get(q) {
                    t.apply_gate(Gate::Cnot(check + q, surv + q))?;
                } else {
                    t.apply_gate(Gate::Cnot(surv + q, check + q))?;
                }
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Frame-based Monte Carlo
// ---------------------------------------------------------------------------

/// Pauli frame of one block: X and Z components per qubit.
#[derive(Clone)]
struct Frame {
    ex: BitVec,
    ez: BitVec,
}

impl Frame {
    fn zero(n: usize) -> Frame {
        Frame {
            ex: BitVec::zeros(n),
            ez: BitVec::zeros(n),
        }
    }

    fn apply_gate(&mut self, g: Gate) {
        match g {
            Gate::H(q) => {
                let (x, z) = (self.ex.get(q), self.ez.get(q));
                self.ex.set(q, z);
                self.ez.set(q, x);
            }
            Gate::P(q) => {
                if self.ex.get(q) {
                    self.ez.flip(q);
                }
            }
            Gate::Cnot(c, t) => {
                if self.ex.get(c) {
                    self.ex.flip(t);
                }
                if self.ez.get(t) {
                    self.ez.flip(c);
                }
            }
            Gate::X(_) | Gate::Z(_) => {}
        }
    }

    fn inject(&mut self, q: usize, pauli: u8) {
        if pauli & 1 == 1 {
            self.ex.flip(q);
        }
        if pauli & 2 == 2 {
            self.ez.flip(q);
        }
    }
}

/// Rejection and yield statistics with the residual-error census.
#[derive(Clone, Debug, Default)]
pub struct DistillReport {
    pub p: f64,
    pub trials: usize,
    pub stage1_slots: usize,
    pub stage1_rejected: usize,
    pub stage2_slots: usize,
    pub stage2_rejected: usize,
    /// Residual weight census of accepted output blocks (weight reduced
    /// modulo the block stabilizer group): [0, 1, 2, >=3].
    pub census: [usize; 4],
    pub accepted_outputs: usize,
    /// Raw-encoded control arm: same census for single noisy preparations
    /// after one round of perfect-syndrome correction, no postselection.
    pub raw_census: [usize; 4],
    pub raw_trials: usize,
}

impl DistillReport {
    pub fn r1(&self) -> f64 {
        if self.stage1_slots == 0 {
            0.0
        } else {
            self.stage1_rejected as f64 / self.stage1_slots as f64
        }
    }

    pub fn r2(&self) -> f64 {
        if self.stage2_slots == 0 {
            0.0
        } else {
            self.stage2_rejected as f64 / self.stage2_slots as f64
        }
    }

    /// Yield per the rate formula, evaluated on the measured rejections.
    pub fn yield_rate(&self, c1: &ClassicalCode, c2: &ClassicalCode) -> f64 {
        (c1.k_c * c2.k_c) as f64 * (1.0 - self.r1()) * (1.0 - self.r2())
            / (c1.n_c * c2.n_c) as f64
    }

    pub fn r1_ci(&self) -> f64 {
        binomial_ci(self.stage1_rejected, self.stage1_slots)
    }

    pub fn r2_ci(&self) -> f64 {
        binomial_ci(self.stage2_rejected, self.stage2_slots)
    }
}

fn binomial_ci(hits: usize, total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let r = hits as f64 / total as f64;
    1.96 * (r * (1.0 - r) / total as f64).sqrt()
}

/// Precomputed per-trial machinery shared across the Monte Carlo.
struct McPlan {
    n_block: usize,
    copies: usize,
    prep: Vec<Gate>,
    group_membership: HashSet<(Vec<u64>, Vec<u64>)>,
    block_dec1: TypedDecoder,
    block_dec2: TypedDecoder,
    t_c1: usize,
    t_c2: usize,
    x_dec: TypedDecoder,
    z_dec: TypedDecoder,
}

/// Plain per-sub-block syndrome correction of a frame: X errors decoded from
/// H_Z parities, Z errors from H_X parities.
fn raw_syndrome_correct(proto: &Protocol, plan: &McPlan, f: &mut Frame) {
    let n = proto.code.n();
    for b in 0..proto.blocks {
        let mut sx = BitVec::zeros(proto.code.hz().rows());
        for i in 0..proto.code.hz().rows() {
            let mut acc = false;
            for q in proto.code.hz().row(i).iter_ones() {
                acc ^= f.ex.get(b * n + q);
            }
            sx.set(i, acc);
        }
        if let Ok(corr) = plan.x_dec.decode(&sx) {
            for q in corr.iter_ones() {
                f.ex.flip(b * n + q);
            }
        }
        let mut sz = BitVec::zeros(proto.code.hx().rows());
        for i in 0..proto.code.hx().rows() {
            let mut acc = false;
            for q in proto.code.hx().row(i).iter_ones() {
                acc ^= f.ez.get(b * n + q);
            }
            sz.set(i, acc);
        }
        if let Ok(corr) = plan.z_dec.decode(&sz) {
            for q in corr.iter_ones() {
                f.ez.flip(b * n + q);
            }
        }
    }
}

fn frame_key(ex: &BitVec, ez: &BitVec) -> (Vec<u64>, Vec<u64>) {
    let pack = |v: &BitVec| -> Vec<u64> {
        let mut words = vec![0u64; v.len().div_ceil(64)];
        for q in v.iter_ones() {
            words[q / 64] |= 1 << (q % 64);
        }
        words
    };
    (pack(ex), pack(ez))
}

fn build_plan(proto: &Protocol) -> Result<McPlan, DistillError> {
    let gens = block_group(&proto.code, &proto.distilled);
    let n_b = proto.n_block;
    // Full group enumeration for residual reduction (desk scale).
    assert!(gens.len() <= 16, "block group too large to enumerate");
    let mut members = HashSet::with_capacity(1 << gens.len());
    for mask in 0u64..(1 << gens.len()) {
        let mut op = PauliOp::identity(n_b);
        for (i, g) in gens.iter().enumerate() {
            if mask >> i & 1 == 1 {
                op.mul_assign(g);
            }
        }
        members.insert(frame_key(op.x_part(), op.z_part()));
    }
    Ok(McPlan {
        n_block: n_b,
        copies: proto.c1.n_c * proto.c2.n_c,
        prep: proto.preparation_gates(),
        group_membership: members,
        block_dec1: TypedDecoder::build(proto.c1.h())?,
        block_dec2: TypedDecoder::build(proto.c2.h())?,
        t_c1: (proto.c1.d_c - 1) / 2,
        t_c2: (proto.c2.d_c - 1) / 2,
        x_dec: TypedDecoder::build(proto.code.hz())?,
        z_dec: TypedDecoder::build(proto.code.hx())?,
    })
}

/// Residual weight modulo the block group, bucketed as 0, 1, 2, >=3.
fn residual_bucket(plan: &McPlan, f: &Frame) -> usize {
    let n = plan.n_block;
    if plan.group_membership.contains(&frame_key(&f.ex, &f.ez)) {
        return 0;
    }
    for w in 1..=2usize {
        let mut supports = Vec::new();
        collect_supports(n, w, &mut supports);
        for supp in supports {
            // all 3^w letter choices on the support
            let mut letters = vec![0u8; w];
            loop {
                let mut ex = f.ex.clone();
                let mut ez = f.ez.clone();
                for (idx, &q) in supp.iter().enumerate() {
                    match letters[idx] {
                        0 => ex.flip(q),
                        1 => ez.flip(q),
                        _ => {
                            ex.flip(q);
                            ez.flip(q);
                        }
                    }
                }
                if plan.group_membership.contains(&frame_key(&ex, &ez)) {
                    return w;
                }
                let mut i = 0;
                loop {
                    if i == w {
                        break;
                    }
                    letters[i] += 1;
                    if letters[i] < 3 {
                        break;
                    }
                    letters[i] = 0;
                    i += 1;
                }
                if i == w {
                    break;
                }
            }
        }
    }
    3
}

struct StageDecision {
    accepted: Vec<bool>,
    corrections: Vec<BitVec>,
    group_reject: bool,
}

/// Classical decode of one group's check parities: per-operator attribution
/// through the block-index code, a joint compatibility check (the inferred
/// faulty-block set must fit inside the classical code's correction radius),
/// then complete per-survivor signature decoding.
fn decode_group(
    stage: &StageCircuit,
    ccode: &ClassicalCode,
    block_dec: &TypedDecoder,
    t_c: usize,
    check_parities: &[BitVec],
) -> StageDecision {
    let r_c = ccode.r_c();
    let k_c = ccode.k_c;
    let m_v = stage.ops.len();
    let mut lambda_per_survivor = vec![BitVec::zeros(m_v); k_c];
    let mut group_reject = false;
    let mut flagged = BitVec::zeros(ccode.n_c);
    for op_idx in 0..m_v {
        let mut m = BitVec::zeros(r_c);
        for i in 0..r_c {
            m.set(i, check_parities[i].get(op_idx));
        }
        match block_dec.decode(&m) {
            Ok(lambda) if lambda.weight() <= t_c => {
                for b in lambda.iter_ones() {
                    flagged.set(b, true);
                }
                for j in 0..k_c {
                    if lambda.get(r_c + j) {
                        lambda_per_survivor[j].set(op_idx, true);
                    }
                }
            }
            _ => {
                group_reject = true;
            }
        }
    }
    // Compatibility: attribution is only trustworthy when the jointly
    // inferred faulty-block set fits the classical correction radius. A
    // survivor outside an oversized flagged set carries no error evidence
    // and stays acceptable; an implicated one is rejected.
    let oversized = flagged.weight() > t_c;
    let mut accepted = vec![false; k_c];
    let mut corrections = vec![BitVec::zeros(stage.basis_x.len()); k_c];
    if !group_reject {
        for j in 0..k_c {
            if oversized && flagged.get(r_c + j) {
                continue;
            }
            match stage.sig_table.get(&lambda_per_survivor[j]) {
                Some(v) => {
                    accepted[j] = true;
                    corrections[j] = v.clone();
                }
                None => accepted[j] = false,
            }
        }
    }
    StageDecision {
        accepted,
        corrections,
        group_reject,
    }
}

/// Visible flip vector of a check block: measured-parity deviations per
/// qubit, from the frame plus measurement flips.
fn visible_flips(stage: &StageCircuit, f: &Frame, meas_flips: &BitVec) -> BitVec {
    let n = stage.basis_x.len();
    let mut v = BitVec::zeros(n);
    for q in 0..n {
        let bit = if stage.basis_x.get(q) { f.ez.get(q) } else { f.ex.get(q) };
        v.set(q, bit ^ meas_flips.get(q));
    }
    v
}

fn op_parities(stage: &StageCircuit, flips: &BitVec) -> BitVec {
    BitVec::from_bits(&stage.op_masks.iter().map(|m| m.dot(flips)).collect::<Vec<_>>())
}

/// Apply a visible correction pattern to a survivor frame.
fn apply_correction(stage: &StageCircuit, f: &mut Frame, v: &BitVec) {
    for q in v.iter_ones() {
        if stage.basis_x.get(q) {
            f.ez.flip(q);
        } else {
            f.ex.flip(q);
        }
    }
}

/// Stage CNOT propagation at the frame level between one survivor/check pair.
fn propagate_stage_cnots(
    stage: &StageCircuit,
    surv: &mut Frame,
    check: &mut Frame,
    noise: &NoiseModel,
    rng: &mut ChaCha8Rng,
) {
    let n = stage.basis_x.len();
    for q in 0..n {
        if stage.basis_x.get(q) {
            // check controls into survivor
            if check.ex.get(q) {
                surv.ex.flip(q);
            }
            if surv.ez.get(q) {
                check.ez.flip(q);
            }
        } else {
            if surv.ex.get(q) {
                check.ex.flip(q);
            }
            if check.ez.get(q) {
                surv.ez.flip(q);
            }
        }
        if rng.gen::<f64>() < noise.p_gate {
            let p2 = rng.gen_range(1..16u8);
            let (c, t) = (p2 & 3, p2 >> 2);
            if stage.basis_x.get(q) {
                check.inject(q, c);
                surv.inject(q, t);
            } else {
                surv.inject(q, c);
                check.inject(q, t);
            }
        }
    }
}

/// Run the two-stage Monte Carlo. One trial = one stage-2 super-group of
/// n_c1 * n_c2 fresh noisy blocks. Deterministic in (seed, trial index).
pub fn monte_carlo(
    proto: &Protocol,
    noise: &NoiseModel,
    trials: usize,
    seed: u64,
) -> Result<DistillReport, DistillError> {
    let plan = build_plan(proto)?;
    let threads = std::env::var("BLOCKFORGE_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&t| t >= 1)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
        .min(trials.max(1));
    let chunk = trials.div_ceil(threads.max(1));
    let mut report = DistillReport {
        p: noise.p_gate,
        trials,
        ..Default::default()
    };
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for t0 in (0..trials).step_by(chunk.max(1)) {
            let hi = (t0 + chunk).min(trials);
            let plan = &plan;
            let proto_ref = &*proto;
            handles.push(scope.spawn(move || {
                let mut local = DistillReport::default();
                for trial in t0..hi {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (trial as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
                    run_trial(proto_ref, plan, noise, &mut rng, &mut local);
                }
                local
            }));
        }
        for h in handles {
            let local = h.join().expect("trial thread");
            report.stage1_slots += local.stage1_slots;
            report.stage1_rejected += local.stage1_rejected;
            report.stage2_slots += local.stage2_slots;
            report.stage2_rejected += local.stage2_rejected;
            report.accepted_outputs += local.accepted_outputs;
            for i in 0..4 {
                report.census[i] += local.census[i];
                report.raw_census[i] += local.raw_census[i];
            }
            report.raw_trials += local.raw_trials;
        }
    });
    Ok(report)
}

fn noisy_preparation(plan: &McPlan, noise: &NoiseModel, rng: &mut ChaCha8Rng) -> Frame {
    let mut f = Frame::zero(plan.n_block);
    for q in 0..plan.n_block {
        if rng.gen::<f64>() < noise.p_prep {
            f.inject(q, 1); // |0> prepared flipped
        }
    }
    for &g in &plan.prep {
        f.apply_gate(g);
        if rng.gen::<f64>() < noise.p_gate {
            match g {
                Gate::Cnot(c, t) => {
                    let p2 = rng.gen_range(1..16u8);
                    f.inject(c, p2 & 3);
                    f.inject(t, p2 >> 2);
                }
                Gate::H(q) | Gate::P(q) | Gate::X(q) | Gate::Z(q) => {
                    f.inject(q, rng.gen_range(1..4u8));
                }
            }
        }
    }
    f
}

fn run_trial(
    proto: &Protocol,
    plan: &McPlan,
    noise: &NoiseModel,
    rng: &mut ChaCha8Rng,
    report: &mut DistillReport,
) {
    let n_b = plan.n_block;
    let c1 = &proto.c1;
    let c2 = &proto.c2;
    // Fresh noisy blocks.
    let mut frames: Vec<Frame> = (0..plan.copies).map(|_| noisy_preparation(plan, noise, rng)).collect();
    // Stage 1 per group.
    let mut survivors: Vec<Frame> = Vec::new();
    for g in 0..c2.n_c {
        let base = g * c1.n_c;
        let r_c = c1.r_c();
        let a = c1.a_c();
        for i in 0..r_c {
            for j in 0..c1.k_c {
                if a.get(i, j) {
                    let (lo, hi) = (base + i, base + r_c + j);
                    let (first, second) = frames.split_at_mut(hi);
                    propagate_stage_cnots(&proto.stage1, &mut second[0], &mut first[lo], noise, rng);
                }
            }
        }
        // Check-block parities.
        let mut parities = Vec::with_capacity(r_c);
        for i in 0..r_c {
            let mut meas = BitVec::zeros(n_b);
            for q in 0..n_b {
                if rng.gen::<f64>() < noise.p_meas {
                    meas.flip(q);
                }
            }
            let flips = visible_flips(&proto.stage1, &frames[base + i], &meas);
            parities.push(op_parities(&proto.stage1, &flips));
        }
        let decision = decode_group(&proto.stage1, c1, &plan.block_dec1, plan.t_c1, &parities);
        report.stage1_slots += c1.k_c;
        for j in 0..c1.k_c {
            if decision.group_reject || !decision.accepted[j] {
                report.stage1_rejected += 1;
            } else {
                let mut f = frames[base + r_c + j].clone();
                apply_correction(&proto.stage1, &mut f, &decision.corrections[j]);
                survivors.push(f);
            }
        }
    }
    // Stage 2 needs a full group of n_c2 survivors.
    if survivors.len() < c2.n_c {
        return;
    }
    // Seeded shuffle of the surviving blocks.
    for i in (1..survivors.len()).rev() {
        let j = rng.gen_range(0..=i);
        survivors.swap(i, j);
    }
    let r_c2 = c2.r_c();
    let a2 = c2.a_c();
    let group = &mut survivors[..c2.n_c];
    for i in 0..r_c2 {
        for j in 0..c2.k_c {
            if a2.get(i, j) {
                let (lo, hi) = (i, r_c2 + j);
                let (first, second) = group.split_at_mut(hi);
                propagate_stage_cnots(&proto.stage2, &mut second[0], &mut first[lo], noise, rng);
            }
        }
    }
    let mut parities = Vec::with_capacity(r_c2);
    for i in 0..r_c2 {
        let mut meas = BitVec::zeros(n_b);
        for q in 0..n_b {
            if rng.gen::<f64>() < noise.p_meas {
                meas.flip(q);
            }
        }
        let flips = visible_flips(&proto.stage2, &group[i], &meas);
        parities.push(op_parities(&proto.stage2, &flips));
    }
    let decision = decode_group(&proto.stage2, c2, &plan.block_dec2, plan.t_c2, &parities);
    report.stage2_slots += c2.k_c;
    for j in 0..c2.k_c {
        if decision.group_reject || !decision.accepted[j] {
            report.stage2_rejected += 1;
        } else {
            let mut f = group[r_c2 + j].clone();
            apply_correction(&proto.stage2, &mut f, &decision.corrections[j]);
            report.accepted_outputs += 1;
            let bucket = residual_bucket(plan, &f);
            report.census[bucket.min(3)] += 1;
        }
    }
    // Raw-encoded control arm: one fresh noisy block corrected with one
    // round of plain syndrome decoding (no logical information, no
    // postselection): correlated errors from single encoding faults survive.
    let mut raw = noisy_preparation(plan, noise, rng);
    raw_syndrome_correct(proto, plan, &mut raw);
    report.raw_trials += 1;
    let bucket = residual_bucket(plan, &raw);
    report.raw_census[bucket.min(3)] += 1;
}

/// Deterministic single-fault analysis of stage 1: inject every single fault
/// at every location of one group (noiselessly otherwise) and tally the
/// decode outcome. Debugging and census-validation aid.
pub fn single_fault_rejection_sweep(proto: &Protocol) -> Result<String, DistillError> {
    let plan = build_plan(proto)?;
    let n_b = plan.n_block;
    let c1 = &proto.c1;
    let r_c = c1.r_c();
    let mut tallies: HashMap<String, (usize, usize, usize)> = HashMap::new(); // site -> (rejects, miscorrections, total)
    let mut run_one = |label: &str, frames: &mut Vec<Frame>, rejected_out: &mut bool| {
        let mut staged = frames.clone();
        let a = c1.a_c();
        for i in 0..r_c {
            for j in 0..c1.k_c {
                if a.get(i, j) {
                    let (first, second) = staged.split_at_mut(r_c + j);
                    propagate_noiseless_cnots(&proto.stage1, &mut second[0], &mut first[i]);
                }
            }
        }
        let mut parities = Vec::with_capacity(r_c);
        for i in 0..r_c {
            let flips = visible_flips(&proto.stage1, &staged[i], &BitVec::zeros(n_b));
            parities.push(op_parities(&proto.stage1, &flips));
        }
        let decision = decode_group(&proto.stage1, c1, &plan.block_dec1, plan.t_c1, &parities);
        let entry = tallies.entry(label.to_string()).or_insert((0, 0, 0));
        entry.2 += 1;
        for j in 0..c1.k_c {
            if decision.group_reject || !decision.accepted[j] {
                entry.0 += 1;
                *rejected_out = true;
            } else {
                let mut f = staged[r_c + j].clone();
                apply_correction(&proto.stage1, &mut f, &decision.corrections[j]);
                if residual_bucket(&plan, &f) >= 2 {
                    entry.1 += 1;
                }
            }
        }
    };
    // Prep-gate faults per copy role.
    for role in 0..c1.n_c {
        for (gi, _) in plan.prep.iter().enumerate() {
            for pauli_pair in 1..16u8 {
                let mut frames: Vec<Frame> = (0..c1.n_c).map(|_| Frame::zero(n_b)).collect();
                // Re-play the prep circuit on the faulty copy with the fault
                // injected after gate gi.
                let mut f = Frame::zero(n_b);
                for (i, &g) in plan.prep.iter().enumerate() {
                    f.apply_gate(g);
                    if i == gi {
                        match g {
                            Gate::Cnot(cq, tq) => {
                                f.inject(cq, pauli_pair & 3);
                                f.inject(tq, pauli_pair >> 2);
                            }
                            Gate::H(q) | Gate::P(q) | Gate::X(q) | Gate::Z(q) => {
                                f.inject(q, ((pauli_pair - 1) % 3) + 1);
                            }
                        }
                    }
                }
                frames[role] = f;
                let mut rej = false;
                let kind = if role < r_c { "prep-on-check" } else { "prep-on-survivor" };
                run_one(kind, &mut frames, &mut rej);
            }
        }
    }
    // Measurement-flip faults are visible-only; inject as ex on check blocks.
    for check in 0..r_c {
        for q in 0..n_b {
            let mut frames: Vec<Frame> = (0..c1.n_c).map(|_| Frame::zero(n_b)).collect();
            frames[check].inject(q, 1);
            let mut rej = false;
            run_one("meas-flip", &mut frames, &mut rej);
        }
    }
    let mut out = String::new();
    let mut keys: Vec<_> = tallies.keys().cloned().collect();
    keys.sort();
    for k in keys {
        let (rej, mis, tot) = tallies[&k];
        out.push_str(&format!("{k}: rejects {rej}, weight>=2 residuals {mis}, sites {tot}\n"));
    }
    Ok(out)
}

fn propagate_noiseless_cnots(stage: &StageCircuit, surv: &mut Frame, check: &mut Frame) {
    let n = stage.basis_x.len();
    for q in 0..n {
        if stage.basis_x.get(q) {
            if check.ex.get(q) {
                surv.ex.flip(q);
            }
            if surv.ez.get(q) {
                check.ez.flip(q);
            }
        } else {
            if surv.ex.get(q) {
                check.ex.flip(q);
            }
            if check.ez.get(q) {
                surv.ez.flip(q);
            }
        }
    }
}

/// Operate on literal measured bit-vectors of a group's check blocks: the
/// per-operator classical decode plus the per-survivor compatibility check.
/// Returns acceptance and the inferred eigenvalue flips per survivor.
pub fn decode_and_postselect(
    stage: &StageCircuit,
    ccode: &ClassicalCode,
    check_bits: &[BitVec],
) -> Result<(Vec<bool>, Vec<BitVec>), DistillError> {
    if check_bits.len() != ccode.r_c() {
        return Err(DistillError::ShapeMismatch("one bit vector per check block".into()));
    }
    let parities: Vec<BitVec> = check_bits.iter().map(|b| op_parities(stage, b)).collect();
    let dec = TypedDecoder::build(ccode.h())?;
    let t_c = (ccode.d_c - 1) / 2;
    let decision = decode_group(stage, ccode, &dec, t_c, &parities);
    let mut lambdas = Vec::with_capacity(ccode.k_c);
    for j in 0..ccode.k_c {
        let mut lam = BitVec::zeros(stage.ops.len());
        if decision.accepted[j] {
            lam = signature_of(&decision.corrections[j], &stage.op_masks);
        }
        lambdas.push(lam);
    }
    let accepted = decision
        .accepted
        .iter()
        .map(|&a| a && !decision.group_reject)
        .collect();
    Ok((accepted, lambdas))
}

// ---------------------------------------------------------------------------
// Resource estimates
// ---------------------------------------------------------------------------

/// Literal counts from a built protocol plus the scaling formulas with
/// constants extracted from the build.
#[derive(Debug)]
pub struct ResourceTable {
    pub n_q: usize,
    pub n_enc: usize,
    pub n_dist: usize,
    pub yield_rate: f64,
    pub n_q_avg: f64,
    pub n_enc_avg: f64,
    pub n_dist_avg: f64,
    pub scaling_rows: Vec<(&'static str, [&'static str; 4])>,
}

pub fn resource_estimate(proto: &Protocol, yield_rate: f64) -> ResourceTable {
    let n_q = proto.qubit_count();
    let n_enc = proto.enc_gate_count() * proto.c1.n_c * proto.c2.n_c;
    let n_dist = proto.dist_gate_count();
    let outputs = yield_rate * (proto.c1.n_c * proto.c2.n_c) as f64;
    let (n_q_avg, n_enc_avg, n_dist_avg) = if outputs > 0.0 {
        (n_q as f64 / outputs, n_enc as f64 / outputs, n_dist as f64 / outputs)
    } else {
        (f64::INFINITY, f64::INFINITY, f64::INFINITY)
    };
    // Table rows: qubits, operations, ancilla states, in-situ depth.
    let scaling_rows = vec![
        ("this scheme", ["O(k)", "O(k^2/log k)", "O(1)", "O(1)"]),
        ("teleported-gate scheme", ["O(max{k, wd})", "O(max{kwd, k^2/log k})", "O(kd)", "O(kd)"]),
        ("per-gate Steane scheme", ["O(k)", "O(k^4/(log k)^2)", "O(k^2/log k)", "O(k^2/log k)"]),
    ];
    ResourceTable {
        n_q,
        n_enc,
        n_dist,
        yield_rate,
        n_q_avg,
        n_enc_avg,
        n_dist_avg,
        scaling_rows,
    }
}

impl ResourceTable {
    pub fn render(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("N_q\t{}\n", self.n_q));
        s.push_str(&format!("N_enc\t{}\n", self.n_enc));
        s.push_str(&format!("N_dist\t{}\n", self.n_dist));
        s.push_str(&format!("Y\t{:.6}\n", self.yield_rate));
        s.push_str(&format!("N_q_avg\t{:.3}\n", self.n_q_avg));
        s.push_str(&format!("N_enc_avg\t{:.3}\n", self.n_enc_avg));
        s.push_str(&format!("N_dist_avg\t{:.3}\n", self.n_dist_avg));
        s.push_str("scheme\tqubits\toperations\tancilla states\tin-situ depth\n");
        for (name, cols) in &self.scaling_rows {
            s.push_str(&format!("{name}\t{}\t{}\t{}\t{}\n", cols[0], cols[1], cols[2], cols[3]));
        }
        s
    }
}

/// Tab-separated report plus a machine-readable summary block.
pub fn render_report(report: &DistillReport, c1: &ClassicalCode, c2: &ClassicalCode) -> String {
    let mut s = String::new();
    s.push_str("p\tR1\tR1_ci\tR2\tR2_ci\tY\tcensus0\tcensus1\tcensus2\tcensus3plus\traw0\traw1\traw2\traw3plus\n");
    s.push_str(&format!(
        "{:.6e}\t{:.6e}\t{:.6e}\t{:.6e}\t{:.6e}\t{:.6e}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
        report.p,
        report.r1(),
        report.r1_ci(),
        report.r2(),
        report.r2_ci(),
        report.yield_rate(c1, c2),
        report.census[0],
        report.census[1],
        report.census[2],
        report.census[3],
        report.raw_census[0],
        report.raw_census[1],
        report.raw_census[2],
        report.raw_census[3],
    ));
    s.push_str("summary-begin\n");
    s.push_str(&format!("trials {}\n", report.trials));
    s.push_str(&format!("stage1 {} of {}\n", report.stage1_rejected, report.stage1_slots));
    s.push_str(&format!("stage2 {} of {}\n", report.stage2_rejected, report.stage2_slots));
    s.push_str(&format!("accepted {}\n", report.accepted_outputs));
    s.push_str(&format!("raw-trials {}\n", report.raw_trials));
    s.push_str("summary-end\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ancilla::logical_zero_spec;
    use crate::css::code_steane;

    fn steane_zero_protocol(seed: u64) -> Protocol {
        let code = code_steane();
        let spec = logical_zero_spec(1);
        let c = ClassicalCode::repetition(3);
        two_stage_protocol(&code, &spec, &c, &c, seed).unwrap()
    }

    #[test]
    fn repetition_code_shape() {
        let c = ClassicalCode::repetition(3);
        assert_eq!((c.n_c, c.k_c, c.d_c), (3, 1, 3));
        assert_eq!(c.a_c(), BitMatrix::from_fn(2, 1, |_, _| true));
        let text = c.dump();
        let c2 = ClassicalCode::parse(&text).unwrap();
        assert_eq!(c2.h(), c.h());
    }

    #[test]
    fn non_systematic_rejected() {
        let h = BitMatrix::from_fn(2, 3, |i, j| i + j == 1 || j == 2);
        assert!(matches!(
            ClassicalCode::new(3, 1, 3, h),
            Err(DistillError::NotSystematic)
        ));
    }

    #[test]
    fn stage_measurable_sets_split_the_group() {
        let code = code_steane();
        let spec = logical_zero_spec(1);
        let s1 = build_stage(&code, &spec, CheckType::ZChecks).unwrap();
        let s2 = build_stage(&code, &spec, CheckType::XChecks).unwrap();
        // |0_L>: Z-type measurable ops: H_Z rows + Z_L = 4; X-type: H_X rows = 3.
        assert_eq!(s1.ops.len(), 4);
        assert_eq!(s2.ops.len(), 3);
        assert_eq!(s1.ops.len() + s2.ops.len(), 7);
    }

    #[test]
    fn noiseless_protocol_is_lossless_and_exact() {
        let proto = steane_zero_protocol(11);
        assert!(proto.noiseless_check().unwrap());
        let report = monte_carlo(&proto, &NoiseModel::uniform(0.0), 200, 5).unwrap();
        assert_eq!(report.stage1_rejected, 0);
        assert_eq!(report.stage2_rejected, 0);
        assert_eq!(report.census[1] + report.census[2] + report.census[3], 0);
        let y = report.yield_rate(&proto.c1, &proto.c2);
        assert!((y - 1.0 / 9.0).abs() < 1e-12, "y = {y}");
    }

    #[test]
    fn single_flip_in_one_check_block_is_decoded() {
        let code = code_steane();
        let spec = logical_zero_spec(1);
        let stage = build_stage(&code, &spec, CheckType::ZChecks).unwrap();
        let c = ClassicalCode::repetition(3);
        // Clean bits: accepted, all +1.
        let clean = vec![BitVec::zeros(7), BitVec::zeros(7)];
        let (acc, lams) = decode_and_postselect(&stage, &c, &clean).unwrap();
        assert!(acc[0]);
        assert!(lams[0].is_zero());
        // One bit flip in one check block: decodable, survivor untouched.
        let mut bits = vec![BitVec::zeros(7), BitVec::zeros(7)];
        bits[0].set(3, true);
        let (acc, lams) = decode_and_postselect(&stage, &c, &bits).unwrap();
        assert!(acc[0]);
        assert!(lams[0].is_zero());
    }

    #[test]
    fn survivor_logical_flip_is_attributed_and_corrected() {
        // A logical X on the survivor copies into both check blocks: the
        // attribution flags exactly the survivor, and the inferred flips hit
        // the logical operator.
        let code = code_steane();
        let spec = logical_zero_spec(1);
        let stage = build_stage(&code, &spec, CheckType::ZChecks).unwrap();
        let c = ClassicalCode::repetition(3);
        let xl = code.coset_leaders().row(0);
        let bits = vec![xl.clone(), xl.clone()];
        let (acc, lams) = decode_and_postselect(&stage, &c, &bits).unwrap();
        assert!(acc[0]);
        assert!(!lams[0].is_zero(), "logical flip must be inferred");
    }

    #[test]
    fn conflicting_flags_on_two_blocks_reject_the_survivor() {
        // Different single-bit deviations in both check blocks plus a
        // survivor-attributed pattern: flags exceed the correction radius.
        let code = code_steane();
        let spec = logical_zero_spec(1);
        let stage = build_stage(&code, &spec, CheckType::ZChecks).unwrap();
        let c = ClassicalCode::repetition(3);
        // Survivor weight-1 error (copies to both checks) plus an extra
        // independent flip in check 1 only: flagged = {check1, survivor}.
        let mut b0 = BitVec::unit(7, 0);
        b0.set(1, true); // check-1-only deviation at a different qubit
        let b1 = BitVec::unit(7, 0);
        let (acc, _) = decode_and_postselect(&stage, &c, &[b0, b1]).unwrap();
        assert!(!acc[0], "two flagged blocks including the survivor must reject");
    }

    #[test]
    fn rejection_rate_grows_with_p() {
        let proto = steane_zero_protocol(3);
        let lo = monte_carlo(&proto, &NoiseModel::uniform(3e-3), 4000, 17).unwrap();
        let hi = monte_carlo(&proto, &NoiseModel::uniform(3e-2), 4000, 18).unwrap();
        assert!(hi.r1() > lo.r1(), "R1({})={} vs R1({})={}", hi.p, hi.r1(), lo.p, lo.r1());
        assert!(hi.r1() > 0.0);
    }

    #[test]
    fn census_reconciles_with_trials() {
        let proto = steane_zero_protocol(3);
        let r = monte_carlo(&proto, &NoiseModel::uniform(1e-2), 2000, 19).unwrap();
        assert_eq!(r.census.iter().sum::<usize>(), r.accepted_outputs);
        assert_eq!(r.stage2_slots, r.accepted_outputs + r.stage2_rejected);
        assert_eq!(r.raw_census.iter().sum::<usize>(), r.raw_trials);
    }

    #[test]
    fn monte_carlo_deterministic_under_seed() {
        let proto = steane_zero_protocol(3);
        let a = monte_carlo(&proto, &NoiseModel::uniform(5e-3), 500, 7).unwrap();
        let b = monte_carlo(&proto, &NoiseModel::uniform(5e-3), 500, 7).unwrap();
        assert_eq!(a.stage1_rejected, b.stage1_rejected);
        assert_eq!(a.census, b.census);
        assert_eq!(a.raw_census, b.raw_census);
    }

    #[test]
    fn type2_protocol_mixed_bases() {
        use crate::clifford::Stage;
        let code = code_steane();
        let mask = BitVec::from_bits(&[true]);
        let spec = crate::ancilla::psi_spec(&Stage::H { mask }, 1).unwrap();
        assert_eq!(spec.dist_type, DistType::II);
        let c = ClassicalCode::repetition(3);
        let proto = two_stage_protocol(&code, &spec, &c, &c, 2).unwrap();
        // Upper block Z-measured, lower X-measured in stage 1; reversed in 2.
        for q in 0..7 {
            assert!(!proto.stage1.basis_x.get(q));
            assert!(proto.stage1.basis_x.get(7 + q));
            assert!(proto.stage2.basis_x.get(q));
            assert!(!proto.stage2.basis_x.get(7 + q));
        }
        assert!(proto.noiseless_check().unwrap());
    }

    #[test]
    fn type3_protocol_distills_precursor_and_pipelines() {
        use crate::clifford::Stage;
        let code = code_steane();
        let mask = BitVec::from_bits(&[true]);
        let spec = crate::ancilla::psi_spec(&Stage::P { mask }, 1).unwrap();
        assert_eq!(spec.dist_type, DistType::III);
        let c = ClassicalCode::repetition(3);
        let proto = two_stage_protocol(&code, &spec, &c, &c, 2).unwrap();
        assert!(!proto.pipeline.is_empty());
        assert!(proto.noiseless_check().unwrap());
    }

    #[test]
    fn type3_on_ineligible_code_errors() {
        use crate::clifford::Stage;
        let code = crate::css::code_422();
        let mask = BitVec::from_bits(&[true, false]);
        let spec = crate::ancilla::psi_spec(&Stage::P { mask }, 2).unwrap();
        let c = ClassicalCode::repetition(3);
        assert!(matches!(
            two_stage_protocol(&code, &spec, &c, &c, 2),
            Err(DistillError::Eligibility(_))
        ));
    }

    #[test]
    fn resource_estimates_use_literal_counts() {
        let proto = steane_zero_protocol(3);
        let table = resource_estimate(&proto, 1.0 / 9.0);
        assert_eq!(table.n_q, 9 * 7);
        // [3,1,3]: A_c has 2 ones; stage 1: 2*7*3 CNOTs, stage 2: 2*7.
        assert_eq!(table.n_dist, 2 * 7 * 3 + 2 * 7);
        assert_eq!(table.n_enc, proto.enc_gate_count() * 9);
        let rendered = table.render();
        assert!(rendered.contains("O(k^2/log k)"));
        assert!(rendered.contains("O(1)"));
    }
}
