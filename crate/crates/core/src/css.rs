//! CSS code construction, canonical logical operators, encoding tableaus and
//! circuits, lookup decoding, and brute-force distance checks.
//!
//! Convention: rows of H_X generate the X-type stabilizers and rows of H_Z the
//! Z-type ones; orthogonality H_X H_Z^t = 0 makes them commute. Logical
//! operators are canonicalized (rref-based bases, symplectically paired) so
//! ancilla specs and schedules are byte-stable across runs.

use std::collections::HashMap;

use thiserror::Error;

use crate::clifford::{CliffordOp, Gate};
use crate::gf2::{BitMatrix, BitVec, GfError};
use crate::pauli::PauliOp;
use crate::tableau::{symplectic_complete, StabilizerTableau, TableauError};

#[derive(Debug, Error)]
pub enum CodeError {
    #[error("H_X H_Z^t != 0: classical codes are not orthogonal")]
    NotOrthogonal,
    #[error("parity-check matrix is rank deficient")]
    RankDeficient,
    #[error("lookup table too large: {0} syndrome bits")]
    TableTooLarge(usize),
    #[error("exhaustive search too large for n = {0}")]
    TooLarge(usize),
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("code file parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Gf(#[from] GfError),
    #[error(transparent)]
    Tableau(#[from] TableauError),
}

/// An [[n, k, d]] CSS code with pinned logical operators.
#[derive(Clone, Debug)]
pub struct CssCode {
    n: usize,
    k: usize,
    hx: BitMatrix,
    hz: BitMatrix,
    logical_x: BitMatrix,
    logical_z: BitMatrix,
    coset_leaders: BitMatrix,
}

/// Structure flags controlling the bitwise-Phase preparation pipeline.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SelfDualTag {
    pub is_self_dual: bool,
    pub is_doubly_even: bool,
    pub odd_weight_logical_x: bool,
}

impl SelfDualTag {
    pub fn phase_eligible(&self) -> bool {
        self.is_self_dual && self.is_doubly_even && self.odd_weight_logical_x
    }
}

impl CssCode {
    pub fn from_parity_checks(hx: BitMatrix, hz: BitMatrix) -> Result<CssCode, CodeError> {
        let n = hx.cols();
        if hz.cols() != n {
            return Err(CodeError::DimensionMismatch(hz.cols(), n));
        }
        if hx.rank() != hx.rows() || hz.rank() != hz.rows() {
            return Err(CodeError::RankDeficient);
        }
        if !hx.mul(&hz.transpose()).is_zero() {
            return Err(CodeError::NotOrthogonal);
        }
        let k = n - hx.rows() - hz.rows();
        // Logical X: ker(H_Z) modulo rowspace(H_X); logical Z: ker(H_X) modulo
        // rowspace(H_Z). Quotient bases are picked by incremental rref, so the
        // result is deterministic in the inputs.
        let lx = quotient_basis(&hz.kernel(), &hx)?;
        let lz = quotient_basis(&hx.kernel(), &hz)?;
        if lx.rows() != k || lz.rows() != k {
            return Err(CodeError::RankDeficient);
        }
        // Symplectic pairing: make L_X L_Z^t = I.
        let gram = lx.mul(&lz.transpose());
        let ginv = gram.invert().map_err(|_| CodeError::RankDeficient)?;
        let lz = ginv.transpose().mul(&lz);
        debug_assert_eq!(lx.mul(&lz.transpose()), BitMatrix::identity(k));
        // Coset leaders: minimum-weight representative of each logical X coset
        // when the stabilizer row space is small enough to enumerate.
        let coset_leaders = if hx.rows() <= 16 {
            let mut rows = Vec::with_capacity(k);
            for i in 0..k {
                rows.push(coset_leader(&lx.row(i), &hx));
            }
            if rows.is_empty() {
                BitMatrix::zeros(0, n)
            } else {
                BitMatrix::from_rows(&rows)
            }
        } else {
            lx.clone()
        };
        Ok(CssCode {
            n,
            k,
            hx,
            hz,
            logical_x: lx,
            logical_z: lz,
            coset_leaders,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn hx(&self) -> &BitMatrix {
        &self.hx
    }

    pub fn hz(&self) -> &BitMatrix {
        &self.hz
    }

    pub fn logical_x(&self) -> &BitMatrix {
        &self.logical_x
    }

    pub fn logical_z(&self) -> &BitMatrix {
        &self.logical_z
    }

    pub fn coset_leaders(&self) -> &BitMatrix {
        &self.coset_leaders
    }

    /// X-type stabilizer generators as phased Paulis (+ signs).
    pub fn x_stabilizers(&self) -> Vec<PauliOp> {
        (0..self.hx.rows())
            .map(|i| PauliOp::from_parts(self.hx.row(i), BitVec::zeros(self.n), 0))
            .collect()
    }

    /// Z-type stabilizer generators as phased Paulis (+ signs).
    pub fn z_stabilizers(&self) -> Vec<PauliOp> {
        (0..self.hz.rows())
            .map(|i| PauliOp::from_parts(BitVec::zeros(self.n), self.hz.row(i), 0))
            .collect()
    }

    pub fn logical_x_op(&self, j: usize) -> PauliOp {
        PauliOp::from_parts(self.logical_x.row(j), BitVec::zeros(self.n), 0)
    }

    pub fn logical_z_op(&self, j: usize) -> PauliOp {
        PauliOp::from_parts(BitVec::zeros(self.n), self.logical_z.row(j), 0)
    }

    /// Lift a logical-level phased Pauli on k qubits to the physical level
    /// through the canonical logical operators.
    pub fn lift(&self, logical: &PauliOp) -> PauliOp {
        assert_eq!(logical.n(), self.k, "logical operator dimension");
        let mut out = PauliOp::identity(self.n);
        out.set_phase_exp(logical.phase_exp());
        for j in logical.x_part().iter_ones() {
            out.mul_assign(&self.logical_x_op(j));
        }
        for j in logical.z_part().iter_ones() {
            out.mul_assign(&self.logical_z_op(j));
        }
        out
    }

    /// Syndrome of a Pauli error: commutation bits against each stabilizer
    /// generator, H_X rows first, then H_Z rows.
    pub fn syndrome(&self, e: &PauliOp) -> Result<BitVec, CodeError> {
        if e.n() != self.n {
            return Err(CodeError::DimensionMismatch(e.n(), self.n));
        }
        let mut s = BitVec::zeros(self.hx.rows() + self.hz.rows());
        for i in 0..self.hx.rows() {
            if self.hx.row(i).dot(e.z_part()) {
                s.set(i, true);
            }
        }
        for i in 0..self.hz.rows() {
            if self.hz.row(i).dot(e.x_part()) {
                s.set(self.hx.rows() + i, true);
            }
        }
        Ok(s)
    }

    /// Encoded basis state as a stabilizer tableau: code stabilizers plus the
    /// chosen logical operators, all with + signs.
    pub fn encode_tableau(&self, plus_basis: &BitVec) -> Result<StabilizerTableau, CodeError> {
        assert_eq!(plus_basis.len(), self.k);
        let mut stabs = Vec::with_capacity(self.n);
        for j in 0..self.k {
            if plus_basis.get(j) {
                stabs.push(self.logical_x_op(j));
            } else {
                stabs.push(self.logical_z_op(j));
            }
        }
        stabs.extend(self.x_stabilizers());
        stabs.extend(self.z_stabilizers());
        Ok(StabilizerTableau::from_stabilizers(stabs)?)
    }

    /// Clifford circuit mapping |x, 0^(n-k)> to the encoded |x_L>: qubit j < k
    /// carries logical qubit j.
    pub fn encoding_clifford(&self) -> Result<CliffordOp, CodeError> {
        let mut pairs: Vec<(PauliOp, PauliOp)> = (0..self.k)
            .map(|j| (self.logical_x_op(j), self.logical_z_op(j)))
            .collect();
        let singles: Vec<PauliOp> = self
            .x_stabilizers()
            .into_iter()
            .chain(self.z_stabilizers())
            .collect();
        let partners = symplectic_complete(&pairs, &singles)?;
        pairs.extend(partners.into_iter().zip(singles));
        let mut x_rows = Vec::with_capacity(self.n);
        let mut z_rows = Vec::with_capacity(self.n);
        for (x, z) in &pairs {
            x_rows.push(x.clone());
            z_rows.push(z.clone());
        }
        x_rows.extend(z_rows);
        CliffordOp::from_rows(self.n, x_rows)
            .map_err(|e| CodeError::Parse(format!("encoding synthesis failed: {e}")))
    }

    /// Gate list for the encoding circuit.
    pub fn encoding_gates(&self) -> Result<Vec<Gate>, CodeError> {
        Ok(self.encoding_clifford()?.decompose_stages().gates())
    }

    pub fn classify(&self) -> Result<SelfDualTag, CodeError> {
        let is_self_dual = self.hx.same_row_space(&self.hz);
        let is_doubly_even = (0..self.hx.rows()).all(|i| self.hx.row(i).weight() % 4 == 0);
        let odd_weight_logical_x = self.odd_weight_search()?;
        Ok(SelfDualTag {
            is_self_dual,
            is_doubly_even,
            odd_weight_logical_x,
        })
    }

    fn odd_weight_search(&self) -> Result<bool, CodeError> {
        let r = self.hx.rows();
        if r > 20 {
            return Err(CodeError::TooLarge(self.n));
        }
        // Every logical X coset (mod the X stabilizer space) must contain an
        // odd-weight representative.
        'outer: for j in 0..self.k {
            let base = self.logical_x.row(j);
            for mask in 0u64..(1 << r) {
                let mut v = base.clone();
                for i in 0..r {
                    if mask >> i & 1 == 1 {
                        v.xor_assign(&self.hx.row(i));
                    }
                }
                if v.weight() % 2 == 1 {
                    continue 'outer;
                }
            }
            return Ok(false);
        }
        Ok(true)
    }

    /// Exact distance by weight-ordered enumeration over N(S) \ S.
    pub fn distance_brute(&self) -> Result<usize, CodeError> {
        if self.n > 24 {
            return Err(CodeError::TooLarge(self.n));
        }
        for w in 1..=self.n {
            let mut found: Option<PauliOp> = None;
            enumerate_weight(self.n, w, &mut |p| {
                if found.is_some() {
                    return;
                }
                let s = self.syndrome(p).unwrap();
                if s.is_zero() && !self.in_stabilizer_span(p) {
                    found = Some(p.clone());
                }
            });
            if found.is_some() {
                return Ok(w);
            }
        }
        Err(CodeError::TooLarge(self.n))
    }

    pub fn in_stabilizer_span(&self, p: &PauliOp) -> bool {
        self.hx.row_space_contains(p.x_part()) && self.hz.row_space_contains(p.z_part())
    }
}

fn coset_leader(v: &BitVec, span: &BitMatrix) -> BitVec {
    let r = span.rows();
    let mut best = v.clone();
    for mask in 0u64..(1 << r) {
        let mut cand = v.clone();
        for i in 0..r {
            if mask >> i & 1 == 1 {
                cand.xor_assign(&span.row(i));
            }
        }
        let better = cand.weight() < best.weight()
            || (cand.weight() == best.weight() && bitvec_key(&cand) < bitvec_key(&best));
        if better {
            best = cand;
        }
    }
    best
}

fn bitvec_key(v: &BitVec) -> Vec<bool> {
    (0..v.len()).map(|i| v.get(i)).collect()
}

/// Basis of ker-space modulo sub's row space, via incremental reduction.
fn quotient_basis(ker: &BitMatrix, sub: &BitMatrix) -> Result<BitMatrix, CodeError> {
    let n = ker.cols();
    let mut picked: Vec<BitVec> = Vec::new();
    let mut span_rows: Vec<BitVec> = (0..sub.rows()).map(|i| sub.row(i)).collect();
    for i in 0..ker.rows() {
        let v = ker.row(i);
        let m = BitMatrix::from_rows(&span_rows);
        if !m.row_space_contains(&v) {
            picked.push(v.clone());
            span_rows.push(v);
        }
    }
    Ok(if picked.is_empty() {
        BitMatrix::zeros(0, n)
    } else {
        BitMatrix::from_rows(&picked)
    })
}

/// Call f on every Pauli of exactly the given weight, in (support, letter)
/// lexicographic order with letters ordered X < Z < Y by binary key.
fn enumerate_weight(n: usize, w: usize, f: &mut impl FnMut(&PauliOp)) {
    let mut support = Vec::with_capacity(w);
    enumerate_support(n, w, 0, &mut support, f);
}

fn enumerate_support(n: usize, w: usize, start: usize, support: &mut Vec<usize>, f: &mut impl FnMut(&PauliOp)) {
    if support.len() == w {
        let mut letters = vec![0u8; w];
        loop {
            let mut a = BitVec::zeros(n);
            let mut b = BitVec::zeros(n);
            for (idx, &q) in support.iter().enumerate() {
                match letters[idx] {
                    0 => a.set(q, true),
                    1 => b.set(q, true),
                    _ => {
                        a.set(q, true);
                        b.set(q, true);
                    }
                }
            }
            let p = PauliOp::hermitian(a, b, false);
            f(&p);
            // increment base-3 counter
            let mut i = 0;
            loop {
                if i == w {
                    return;
                }
                letters[i] += 1;
                if letters[i] < 3 {
                    break;
                }
                letters[i] = 0;
                i += 1;
            }
        }
    }
    for q in start..n {
        if n - q < w - support.len() {
            break;
        }
        support.push(q);
        enumerate_support(n, w, q + 1, support, f);
        support.pop();
    }
}

/// Exhaustive minimum-weight lookup decoder over the full syndrome space.
pub struct LookupDecoder {
    table: HashMap<BitVec, PauliOp>,
    syndrome_bits: usize,
}

impl LookupDecoder {
    pub fn build(code: &CssCode) -> Result<LookupDecoder, CodeError> {
        let bits = code.hx.rows() + code.hz.rows();
        if bits > 20 || code.n() > 24 {
            return Err(CodeError::TableTooLarge(bits));
        }
        let total = 1usize << bits;
        let mut table: HashMap<BitVec, PauliOp> = HashMap::with_capacity(total);
        table.insert(BitVec::zeros(bits), PauliOp::identity(code.n()));
        let mut w = 1usize;
        while table.len() < total && w <= code.n() {
            // Collect candidates of this weight, sorted by binary key so ties
            // break on (weight, binary representation).
            let mut cands: Vec<(Vec<bool>, PauliOp)> = Vec::new();
            enumerate_weight(code.n(), w, &mut |p| {
                cands.push((bitvec_key(&p.binary_row()), p.clone()));
            });
            cands.sort_by(|a, b| a.0.cmp(&b.0));
            for (_, p) in cands {
                let s = code.syndrome(&p)?;
                table.entry(s).or_insert(p);
            }
            w += 1;
        }
        Ok(LookupDecoder {
            table,
            syndrome_bits: bits,
        })
    }

    /// Minimum-weight error consistent with the syndrome.
    pub fn decode(&self, syndrome: &BitVec) -> Result<&PauliOp, CodeError> {
        if syndrome.len() != self.syndrome_bits {
            return Err(CodeError::DimensionMismatch(syndrome.len(), self.syndrome_bits));
        }
        self.table
            .get(syndrome)
            .ok_or(CodeError::TableTooLarge(self.syndrome_bits))
    }
}

/// Minimum-weight pure-type decoder: syndrome bits are parities against the
/// rows of `checks`; returns the minimum-weight bit pattern explaining them.
pub struct TypedDecoder {
    table: HashMap<BitVec, BitVec>,
    syndrome_bits: usize,
}

impl TypedDecoder {
    pub fn build(checks: &BitMatrix) -> Result<TypedDecoder, CodeError> {
        let bits = checks.rows();
        let n = checks.cols();
        if bits > 20 || n > 32 {
            return Err(CodeError::TableTooLarge(bits));
        }
        let total = 1usize << bits;
        let mut table: HashMap<BitVec, BitVec> = HashMap::with_capacity(total);
        table.insert(BitVec::zeros(bits), BitVec::zeros(n));
        let mut w = 1usize;
        while table.len() < total && w <= n {
            let mut cands: Vec<Vec<usize>> = Vec::new();
            collect_supports(n, w, 0, &mut Vec::new(), &mut cands);
            for supp in cands {
                let mut e = BitVec::zeros(n);
                for &q in &supp {
                    e.set(q, true);
                }
                let mut s = BitVec::zeros(bits);
                for i in 0..bits {
                    if checks.row(i).dot(&e) {
                        s.set(i, true);
                    }
                }
                table.entry(s).or_insert(e);
            }
            w += 1;
        }
        Ok(TypedDecoder {
            table,
            syndrome_bits: bits,
        })
    }

    pub fn decode(&self, syndrome: &BitVec) -> Result<&BitVec, CodeError> {
        if syndrome.len() != self.syndrome_bits {
            return Err(CodeError::DimensionMismatch(syndrome.len(), self.syndrome_bits));
        }
        self.table
            .get(syndrome)
            .ok_or(CodeError::TableTooLarge(self.syndrome_bits))
    }
}

fn collect_supports(n: usize, w: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if cur.len() == w {
        out.push(cur.clone());
        return;
    }
    for q in start..n {
        if n - q < w - cur.len() {
            break;
        }
        cur.push(q);
        collect_supports(n, w, q + 1, cur, out);
        cur.pop();
    }
}

/// Code file format: "HX" then a matrix block, "HZ" then a matrix block,
/// optional "LX"/"LZ" blocks to pin the logical operators.
pub fn parse_code_file(text: &str) -> Result<CssCode, CodeError> {
    let mut sections: HashMap<String, String> = HashMap::new();
    let mut current: Option<(String, String)> = None;
    for line in text.lines() {
        let t = line.trim();
        if ["HX", "HZ", "LX", "LZ"].contains(&t) {
            if let Some((name, body)) = current.take() {
                sections.insert(name, body);
            }
            current = Some((t.to_string(), String::new()));
        } else if let Some((_, body)) = current.as_mut() {
            body.push_str(line);
            body.push('\n');
        } else if !t.is_empty() && !t.starts_with('#') {
            return Err(CodeError::Parse(format!("unexpected line before HX: {t}")));
        }
    }
    if let Some((name, body)) = current.take() {
        sections.insert(name, body);
    }
    let hx = BitMatrix::from_text(sections.get("HX").ok_or(CodeError::Parse("missing HX".into()))?)?;
    let hz = BitMatrix::from_text(sections.get("HZ").ok_or(CodeError::Parse("missing HZ".into()))?)?;
    let mut code = CssCode::from_parity_checks(hx, hz)?;
    if let (Some(lx), Some(lz)) = (sections.get("LX"), sections.get("LZ")) {
        let lx = BitMatrix::from_text(lx)?;
        let lz = BitMatrix::from_text(lz)?;
        if lx.rows() != code.k || lz.rows() != code.k || lx.cols() != code.n || lz.cols() != code.n {
            return Err(CodeError::Parse("LX/LZ shape mismatch".into()));
        }
        if lx.mul(&lz.transpose()) != BitMatrix::identity(code.k) {
            return Err(CodeError::Parse("LX/LZ are not symplectically paired".into()));
        }
        for i in 0..code.k {
            let px = PauliOp::from_parts(lx.row(i), BitVec::zeros(code.n), 0);
            let pz = PauliOp::from_parts(BitVec::zeros(code.n), lz.row(i), 0);
            if !code.syndrome(&px).unwrap().is_zero() || !code.syndrome(&pz).unwrap().is_zero() {
                return Err(CodeError::Parse("pinned logicals do not commute with stabilizers".into()));
            }
        }
        code.logical_x = lx;
        code.logical_z = lz;
    }
    Ok(code)
}

pub fn dump_code_file(code: &CssCode) -> String {
    format!(
        "HX\n{}HZ\n{}LX\n{}LZ\n{}",
        code.hx.to_text(),
        code.hz.to_text(),
        code.logical_x.to_text(),
        code.logical_z.to_text()
    )
}

/// The [[4,2,2]] code: H_X = H_Z = [1111].
pub fn code_422() -> CssCode {
    let h = BitMatrix::from_fn(1, 4, |_, _| true);
    CssCode::from_parity_checks(h.clone(), h).unwrap()
}

/// The [[7,1,3]] code from the [7,4,3] Hamming checks.
pub fn code_steane() -> CssCode {
    let h = hamming_7_4();
    CssCode::from_parity_checks(h.clone(), h).unwrap()
}

/// [7,4,3] Hamming parity checks (columns are 1..7 in binary).
pub fn hamming_7_4() -> BitMatrix {
    BitMatrix::from_fn(3, 7, |i, j| (j + 1) >> i & 1 == 1)
}

/// Direct sum of b copies: block-diagonal parity checks, an [[b·n, b·k, d]] code.
pub fn block_sum(code: &CssCode, b: usize) -> CssCode {
    let stack = |m: &BitMatrix| -> BitMatrix {
        BitMatrix::from_fn(b * m.rows(), b * code.n(), |i, j| {
            let (bi, bj) = (i / m.rows(), j / code.n());
            bi == bj && m.get(i % m.rows(), j % code.n())
        })
    };
    CssCode::from_parity_checks(stack(&code.hx), stack(&code.hz)).unwrap()
}

/// [[2m, 2m-2, 2]] iceberg-style code: single all-ones row for both checks.
pub fn code_iceberg(m: usize) -> CssCode {
    let h = BitMatrix::from_fn(1, 2 * m, |_, _| true);
    CssCode::from_parity_checks(h.clone(), h).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    #[test]
    fn build_422() {
        let c = code_422();
        assert_eq!((c.n(), c.k()), (4, 2));
        // Logicals: brute-force validation of the commutation table.
        for i in 0..2 {
            for j in 0..2 {
                let x = c.logical_x_op(i);
                let z = c.logical_z_op(j);
                assert_eq!(x.anticommutes(&z), i == j);
            }
        }
        for s in c.x_stabilizers().iter().chain(c.z_stabilizers().iter()) {
            for i in 0..2 {
                assert!(!s.anticommutes(&c.logical_x_op(i)));
                assert!(!s.anticommutes(&c.logical_z_op(i)));
            }
        }
    }

    #[test]
    fn build_steane() {
        let c = code_steane();
        assert_eq!((c.n(), c.k()), (7, 1));
        assert_eq!(c.distance_brute().unwrap(), 3);
    }

    #[test]
    fn distance_422() {
        assert_eq!(code_422().distance_brute().unwrap(), 2);
    }

    #[test]
    fn non_orthogonal_rejected() {
        let hx = BitMatrix::from_fn(1, 3, |_, j| j < 2);
        let hz = BitMatrix::from_fn(1, 3, |_, j| j > 0);
        assert!(matches!(
            CssCode::from_parity_checks(hx, hz),
            Err(CodeError::NotOrthogonal)
        ));
    }

    #[test]
    fn rank_deficient_rejected() {
        let hx = BitMatrix::from_fn(2, 4, |_, _| true);
        let hz = BitMatrix::from_fn(1, 4, |_, _| true);
        assert!(matches!(
            CssCode::from_parity_checks(hx, hz),
            Err(CodeError::RankDeficient)
        ));
    }

    #[test]
    fn syndrome_examples() {
        let c = code_steane();
        assert!(c.syndrome(&PauliOp::identity(7)).unwrap().is_zero());
        // X error on qubit 0 trips the H_Z rows with a 1 in column 0.
        let e = PauliOp::single_x(7, 0);
        let s = c.syndrome(&e).unwrap();
        for i in 0..3 {
            assert!(!s.get(i)); // H_X part blind to X errors
            assert_eq!(s.get(3 + i), c.hz().get(i, 0));
        }
        // Stabilizer elements have zero syndrome.
        let stab = c.x_stabilizers()[1].clone();
        assert!(c.syndrome(&stab).unwrap().is_zero());
    }

    #[test]
    fn lookup_decoder_corrects_weight_one_exactly() {
        let c = code_steane();
        let dec = LookupDecoder::build(&c).unwrap();
        assert!(dec.decode(&BitVec::zeros(6)).unwrap().is_identity_up_to_phase());
        // Every weight-1 error decodes back to itself modulo the stabilizer.
        enumerate_weight(7, 1, &mut |e| {
            let s = c.syndrome(e).unwrap();
            let corr = dec.decode(&s).unwrap();
            let residual = corr.multiply(e).unwrap();
            assert!(c.in_stabilizer_span(&residual), "residual {residual}");
        });
    }

    #[test]
    fn typed_decoder_matches_hamming() {
        let h = hamming_7_4();
        let dec = TypedDecoder::build(&h).unwrap();
        for q in 0..7 {
            let e = BitVec::unit(7, q);
            let mut s = BitVec::zeros(3);
            for i in 0..3 {
                if h.row(i).dot(&e) {
                    s.set(i, true);
                }
            }
            assert_eq!(dec.decode(&s).unwrap(), &e);
        }
    }

    #[test]
    fn encode_tableau_stabilized() {
        let mut rng = StdRng::seed_from_u64(3);
        for (code, k) in [(code_422(), 2usize), (code_steane(), 1)] {
            for plus in [false, true] {
                let basis = BitVec::from_bits(&vec![plus; k]);
                let mut t = code.encode_tableau(&basis).unwrap();
                t.check_invariants().unwrap();
                for s in code.x_stabilizers().iter().chain(code.z_stabilizers().iter()) {
                    assert_eq!(t.expectation(s), Some(false));
                    // measuring a stabilizer is deterministic +1
                    assert!(!t.measure(s, &mut rng).unwrap());
                }
                for j in 0..k {
                    let op = if plus { code.logical_x_op(j) } else { code.logical_z_op(j) };
                    assert_eq!(t.expectation(&op), Some(false));
                }
            }
        }
    }

    #[test]
    fn encoding_circuit_reproduces_encoded_states() {
        for code in [code_422(), code_steane(), code_iceberg(3)] {
            let gates = code.encoding_gates().unwrap();
            let k = code.k();
            // |0...0> input -> all-zero logical state.
            let mut t = StabilizerTableau::zeros(code.n());
            t.apply_gates(&gates).unwrap();
            let want = code.encode_tableau(&BitVec::zeros(k)).unwrap();
            assert!(t.states_equal(&want).unwrap());
            // X on input qubit 0 flips logical 0.
            let mut t = StabilizerTableau::zeros(code.n());
            t.apply_pauli(&PauliOp::single_x(code.n(), 0));
            t.apply_gates(&gates).unwrap();
            let mut want = code.encode_tableau(&BitVec::zeros(k)).unwrap();
            want.apply_pauli(&code.logical_x_op(0));
            assert!(t.states_equal(&want).unwrap());
        }
    }

    #[test]
    fn classify_flags() {
        let steane = code_steane();
        let tag = steane.classify().unwrap();
        assert!(tag.is_self_dual && tag.is_doubly_even && tag.odd_weight_logical_x);
        assert!(tag.phase_eligible());

        let c422 = code_422();
        let tag = c422.classify().unwrap();
        assert!(tag.is_self_dual && tag.is_doubly_even);
        // weight-2 logical X representatives only: even
        assert!(!tag.odd_weight_logical_x);

        // Asymmetric code: Shor-style [[9,1,3]] has H_X != H_Z row spaces.
        let hx = BitMatrix::from_fn(2, 9, |i, j| j / 3 == i || j / 3 == i + 1);
        let hz = BitMatrix::from_fn(6, 9, |i, j| {
            let (blk, pos) = (i / 2, i % 2);
            j / 3 == blk && (j % 3 == pos || j % 3 == pos + 1)
        });
        let shor = CssCode::from_parity_checks(hx, hz).unwrap();
        assert_eq!((shor.n(), shor.k()), (9, 1));
        assert!(!shor.classify().unwrap().is_self_dual);
        assert_eq!(shor.distance_brute().unwrap(), 3);
    }

    #[test]
    fn code_file_round_trip() {
        let c = code_steane();
        let text = dump_code_file(&c);
        let c2 = parse_code_file(&text).unwrap();
        assert_eq!(c2.hx(), c.hx());
        assert_eq!(c2.logical_x(), c.logical_x());
        assert!(parse_code_file("HX\n1 2\n11\n").is_err()); // missing HZ
    }

    #[test]
    fn zero_l_bitstrings_lie_in_hx_rowspace() {
        // Z-measuring |0_L> yields strings in the X-stabilizer row space.
        let mut rng = StdRng::seed_from_u64(9);
        let c = code_steane();
        for _ in 0..20 {
            let mut t = c.encode_tableau(&BitVec::zeros(1)).unwrap();
            let bits = t.measure_all_bitwise(0..7, false, &mut rng).unwrap();
            assert!(c.hx().row_space_contains(&bits), "bits {bits:?}");
        }
    }

    #[test]
    fn block_sum_doubles() {
        let c = block_sum(&code_steane(), 2);
        assert_eq!((c.n(), c.k()), (14, 2));
        assert_eq!(c.distance_brute().unwrap(), 3);
    }

    #[test]
    fn iceberg_codes() {
        let c = code_iceberg(3);
        assert_eq!((c.n(), c.k()), (6, 4));
        assert_eq!(c.distance_brute().unwrap(), 2);
    }
}
